#include <gtest/gtest.h>

#include <Eigen/SVD>
#include <Eigen/LU>
#include <random>
#include <string>
#include <vector>

#include "tofr/geometry.hpp"

namespace tofr {
namespace {

// Independent oracle: null vector of the 8x9 DLT system via SVD.
Homography dlt_oracle(const std::array<PointPair, 4>& pairs) {
  Eigen::Matrix<double, 8, 9> a = Eigen::Matrix<double, 8, 9>::Zero();
  for (int i = 0; i < 4; ++i) {
    const double x = pairs[i].source.x(), y = pairs[i].source.y();
    const double u = pairs[i].target.x(), v = pairs[i].target.y();
    a.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Homography m;
  m << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  return m / m(2, 2);
}

std::array<PointPair, 4> unit_square_to(const std::array<Vec2, 4>& quad) {
  const std::array<Vec2, 4> sq{Vec2(0, 0), Vec2(1, 0), Vec2(1, 1), Vec2(0, 1)};
  return {PointPair{sq[0], quad[0]}, {sq[1], quad[1]}, {sq[2], quad[2]}, {sq[3], quad[3]}};
}

TEST(Homography, IdentityOnUnitSquare) {
  const auto pairs = unit_square_to({Vec2(0, 0), Vec2(1, 0), Vec2(1, 1), Vec2(0, 1)});
  EXPECT_TRUE(fit_homography(pairs).isApprox(Homography::Identity(), 1e-12));
}

TEST(Homography, PureTranslation) {
  const auto pairs = unit_square_to({Vec2(5, 7), Vec2(6, 7), Vec2(6, 8), Vec2(5, 8)});
  const Homography h = fit_homography(pairs);
  Homography expected;
  expected << 1, 0, 5, 0, 1, 7, 0, 0, 1;
  EXPECT_LT((h - expected).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((h - dlt_oracle(pairs)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Homography, PerspectiveQuad) {
  const auto pairs = unit_square_to({Vec2(0, 0), Vec2(1, 0.1), Vec2(1.1, 1), Vec2(0, 0.9)});
  const Homography h = fit_homography(pairs);
  EXPECT_DOUBLE_EQ(h(2, 2), 1.0);
  for (const auto& p : pairs) EXPECT_LT((apply_homography(h, p.source) - p.target).norm(), 1e-9);
  EXPECT_LT((h - dlt_oracle(pairs)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Homography, RandomQuadsReproduceCorrespondences) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> jitter(-0.2, 0.2), scale(20.0, 600.0), shift(-50.0, 400.0);
  const std::array<Vec2, 4> base{Vec2(0, 0), Vec2(1, 0), Vec2(1, 1), Vec2(0, 1)};
  int checked = 0;
  double worst = 0.0, worst_inverse = 0.0;
  while (checked < 1000) {
    std::array<PointPair, 4> pairs;
    const double ss = scale(rng), ts = scale(rng);
    const Vec2 so(shift(rng), shift(rng)), to(shift(rng), shift(rng));
    for (int i = 0; i < 4; ++i) {
      pairs[i].source = so + ss * (base[i] + Vec2(jitter(rng), jitter(rng)));
      pairs[i].target = to + ts * (base[i] + Vec2(jitter(rng), jitter(rng)));
    }
    const Homography h = fit_homography(pairs);
    for (const auto& p : pairs) worst = std::max(worst, (apply_homography(h, p.source) - p.target).norm());
    const Homography inv = h.inverse();
    worst_inverse = std::max(worst_inverse, ((h * inv) / (h * inv)(2, 2) - Homography::Identity()).cwiseAbs().maxCoeff());
    const Homography oracle = dlt_oracle(pairs);
    for (const auto& p : pairs) ASSERT_LT((apply_homography(oracle, p.source) - apply_homography(h, p.source)).norm(), 1e-6);
    ++checked;
  }
  EXPECT_LT(worst, 1e-9);
  EXPECT_LT(worst_inverse, 1e-9);
}

TEST(Homography, CollinearTripleIsDegenerate) {
  const auto pairs = unit_square_to({Vec2(0, 0), Vec2(1, 1), Vec2(2, 2), Vec2(0, 1)});
  try {
    fit_homography(pairs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kGeometry);
  }
}

TEST(DepthPlane, ConstantPlane) {
  const std::array<Vec2, 4> pts{Vec2(10, 10), Vec2(50, 12), Vec2(48, 40), Vec2(12, 38)};
  const std::array<double, 4> d{1000, 1000, 1000, 1000};
  const auto plane = fit_depth_plane(pts, d);
  EXPECT_NEAR(plane(0, 0), 1000.0, 1e-9);
  EXPECT_NEAR(plane(123, -7), 1000.0, 1e-9);
}

TEST(DepthPlane, RampOnUnitSquare) {
  const std::array<Vec2, 4> pts{Vec2(0, 0), Vec2(1, 0), Vec2(1, 1), Vec2(0, 1)};
  const std::array<double, 4> d{1000, 1000, 1100, 1100};
  const auto plane = fit_depth_plane(pts, d);
  EXPECT_NEAR(plane.a, 0.0, 1e-9);
  EXPECT_NEAR(plane.b, 100.0, 1e-9);
  EXPECT_NEAR(plane.c, 1000.0, 1e-9);
  EXPECT_NEAR(plane.max_residual_mm, 0.0, 1e-9);
}

MarkerSet sample_markers(double a, double b, double c) {
  MarkerSet m;
  m.object_width_mm = 400;
  m.object_height_mm = 300;
  m.image_points = {Vec2(30.5, 25.2), Vec2(95.1, 30.7), Vec2(92.3, 88.8), Vec2(28.0, 80.4)};
  for (int i = 0; i < 4; ++i) m.depths_mm[i] = a * m.image_points[i].x() + b * m.image_points[i].y() + c;
  return m;
}

TEST(MarkerPlane, ConstantMarkersGiveConstantRegion) {
  const auto fit = fit_marker_plane(sample_markers(0, 0, 1000), 128, 128);
  ASSERT_GT(fit.mask.count(), 0u);
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x) {
      EXPECT_EQ(fit.ground_truth.is_valid(x, y), fit.mask(x, y));
      if (fit.mask(x, y)) EXPECT_FLOAT_EQ(fit.ground_truth.at(x, y), 1000.0f);
    }
}

TEST(MarkerPlane, FillSatisfiesThePlaneAndExtendsPastTheMarkers) {
  const double a = 0.8, b = -1.3, c = 1150.0;
  const auto markers = sample_markers(a, b, c);
  const auto fit = fit_marker_plane(markers, 128, 128);
  double worst = 0.0;
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x)
      if (fit.mask(x, y)) worst = std::max(worst, std::abs(fit.fill_mm[fit.mask.index(x, y)] - (a * x + b * y + c)));
  EXPECT_LT(worst, 1e-6);
  // The rectangle reaches beyond the inset markers on every side.
  const Vec2 outer = apply_homography(fit.homography, Vec2(0, 0));
  EXPECT_LT(outer.x(), markers.image_points[0].x());
  EXPECT_LT(outer.y(), markers.image_points[0].y());
  EXPECT_TRUE(fit.mask(static_cast<int>(std::ceil(outer.x() + 1)), static_cast<int>(std::ceil(outer.y() + 1))));
  EXPECT_FALSE(fit.mask(0, 0));
}

std::string captured;
void capture(const std::string& m) { captured = m; }

TEST(MarkerPlane, LargeResidualWarns) {
  auto markers = sample_markers(0, 0, 1000);
  markers.depths_mm[2] += 40.0;
  captured.clear();
  set_warning_handler(&capture);
  fit_marker_plane(markers, 128, 128, 5.0);
  set_warning_handler(nullptr);
  EXPECT_NE(captured.find("residual"), std::string::npos);
  EXPECT_NE(captured.find("exceeds 5"), std::string::npos) << captured;
}

TEST(MarkerPlane, NonConvexLayoutIsDegenerate) {
  auto markers = sample_markers(0, 0, 1000);
  std::swap(markers.image_points[1], markers.image_points[2]);
  EXPECT_THROW(fit_marker_plane(markers, 128, 128), Error);
}

TEST(MarkerPlane, MarkersMustBeValidInRaw) {
  const auto markers = sample_markers(0, 0, 1000);
  DepthMap raw = DepthMap::filled(128, 128, 1500.0f);
  EXPECT_NO_THROW(fit_ground_truth_plane(markers, raw));
  raw.invalidate(92, 89);
  try {
    fit_ground_truth_plane(markers, raw);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kData);
  }
}

}  // namespace
}  // namespace tofr
