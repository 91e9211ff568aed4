#include "tofr/geometry.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Dense>

namespace tofr {

namespace {

void require_general_position(const std::array<Vec2, 4>& pts, const char* which) {
  for (int skip = 0; skip < 4; ++skip) {
    std::array<Vec2, 3> tri;
    int k = 0;
    for (int i = 0; i < 4; ++i)
      if (i != skip) tri[k++] = pts[i];
    const double scale = std::max({(tri[1] - tri[0]).squaredNorm(), (tri[2] - tri[0]).squaredNorm(), 1e-300});
    if (std::abs(signed_area2(tri[0], tri[1], tri[2])) <= 1e-12 * scale) {
      throw Error(ErrorKind::kGeometry, std::string("collinear triple among the ") + which + " points");
    }
  }
}

// Translate to the centroid and scale to mean distance sqrt(2).
Eigen::Matrix3d normalizer(const std::array<Vec2, 4>& pts) {
  Vec2 c = Vec2::Zero();
  for (const auto& p : pts) c += p;
  c /= 4.0;
  double mean = 0.0;
  for (const auto& p : pts) mean += (p - c).norm();
  mean /= 4.0;
  const double s = std::sqrt(2.0) / mean;
  Eigen::Matrix3d t;
  t << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
  return t;
}

}  // namespace

double signed_area2(const Vec2& a, const Vec2& b, const Vec2& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

Homography fit_homography(std::span<const PointPair, 4> pairs) {
  std::array<Vec2, 4> src, dst;
  for (int i = 0; i < 4; ++i) {
    src[i] = pairs[i].source;
    dst[i] = pairs[i].target;
  }
  require_general_position(src, "source");
  require_general_position(dst, "target");

  const Eigen::Matrix3d ts = normalizer(src);
  const Eigen::Matrix3d td = normalizer(dst);

  // Eight equations in h11..h32 with h33 fixed to 1 (normalised frame).
  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 1> rhs;
  for (int i = 0; i < 4; ++i) {
    const Eigen::Vector3d s = ts * src[i].homogeneous();
    const Eigen::Vector3d d = td * dst[i].homogeneous();
    const double x = s.x(), y = s.y(), u = d.x(), v = d.y();
    a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    rhs(2 * i) = u;
    rhs(2 * i + 1) = v;
  }
  const Eigen::Matrix<double, 8, 1> h = a.fullPivLu().solve(rhs);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;

  Homography result = td.inverse() * hn * ts;
  if (std::abs(result(2, 2)) < 1e-300 || !result.allFinite()) {
    throw Error(ErrorKind::kGeometry, "homography maps the source origin to infinity");
  }
  result /= result(2, 2);

  for (int i = 0; i < 4; ++i) {
    if (!apply_homography(result, src[i]).allFinite()) {
      throw Error(ErrorKind::kGeometry, "degenerate homography");
    }
  }
  return result;
}

Vec2 apply_homography(const Homography& h, const Vec2& p) {
  const Eigen::Vector3d q = h * p.homogeneous();
  return q.hnormalized();
}

std::array<Vec2, 4> MarkerSet::model_points() const {
  const double w = object_width_mm, h = object_height_mm, s = inset_mm;
  return {Vec2(s, s), Vec2(w - s, s), Vec2(w - s, h - s), Vec2(s, h - s)};
}

void MarkerSet::validate() const {
  if (!(object_width_mm > 2 * inset_mm) || !(object_height_mm > 2 * inset_mm)) {
    throw Error(ErrorKind::kGeometry, "object must be larger than twice the marker inset");
  }
  double sign = 0.0;
  for (int i = 0; i < 4; ++i) {
    const double area = signed_area2(image_points[i], image_points[(i + 1) % 4], image_points[(i + 2) % 4]);
    if (area == 0.0 || (sign != 0.0 && (area > 0) != (sign > 0))) {
      throw Error(ErrorKind::kGeometry, "marker quadrilateral is not strictly convex");
    }
    sign = area;
  }
}

DepthPlane fit_depth_plane(std::span<const Vec2> points, std::span<const double> depths) {
  if (points.size() != depths.size() || points.size() < 3) {
    throw Error(ErrorKind::kGeometry, "plane fit needs at least three (point, depth) samples");
  }
  const Eigen::Index n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd a(n, 3);
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a.row(i) << points[i].x(), points[i].y(), 1.0;
    z(i) = depths[i];
  }
  const Eigen::Vector3d coef = a.colPivHouseholderQr().solve(z);
  DepthPlane plane{coef(0), coef(1), coef(2), 0.0};
  for (Eigen::Index i = 0; i < n; ++i) {
    plane.max_residual_mm = std::max(plane.max_residual_mm, std::abs(plane(points[i].x(), points[i].y()) - z(i)));
  }
  return plane;
}

GroundTruthFit fit_marker_plane(const MarkerSet& markers, int width, int height,
                                double residual_tolerance_mm) {
  markers.validate();
  const auto model = markers.model_points();
  std::array<PointPair, 4> pairs;
  for (int i = 0; i < 4; ++i) pairs[i] = {model[i], markers.image_points[i]};

  GroundTruthFit fit;
  fit.homography = fit_homography(pairs);
  fit.plane = fit_depth_plane(markers.image_points, markers.depths_mm);
  if (fit.plane.max_residual_mm > residual_tolerance_mm) {
    std::ostringstream os;
    os << "marker plane residual " << fit.plane.max_residual_mm << " mm exceeds "
       << residual_tolerance_mm << " mm";
    warn(os.str());
  }

  const Homography inverse = fit.homography.inverse();
  fit.mask = Mask(width, height);
  fit.ground_truth = DepthMap(width, height);
  fit.fill_mm.assign(static_cast<std::size_t>(width) * height, 0.0);
  const double w = markers.object_width_mm, h = markers.object_height_mm;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Eigen::Vector3d q = inverse * Eigen::Vector3d(x, y, 1.0);
      if (q.z() <= 0.0) continue;  // behind the projective horizon
      const Vec2 m = q.hnormalized();
      if (m.x() < 0.0 || m.x() > w || m.y() < 0.0 || m.y() > h) continue;
      const double d = fit.plane(x, y);
      if (!(d > 0.0)) {
        throw Error(ErrorKind::kData, "marker plane has non-positive depth at pixel (" +
                                          std::to_string(x) + ", " + std::to_string(y) + ")");
      }
      fit.mask.set(x, y, true);
      fit.ground_truth.set(x, y, static_cast<float>(d));
      fit.fill_mm[fit.mask.index(x, y)] = d;
    }
  }
  return fit;
}

GroundTruthFit fit_ground_truth_plane(const MarkerSet& markers, const DepthMap& raw,
                                      double residual_tolerance_mm) {
  for (int i = 0; i < 4; ++i) {
    const int x = static_cast<int>(std::lround(markers.image_points[i].x()));
    const int y = static_cast<int>(std::lround(markers.image_points[i].y()));
    if (x < 0 || y < 0 || x >= raw.width || y >= raw.height || !raw.is_valid(x, y)) {
      throw Error(ErrorKind::kData, "marker " + std::to_string(i) + " at pixel (" + std::to_string(x) +
                                        ", " + std::to_string(y) + ") has no valid raw depth");
    }
  }
  return fit_marker_plane(markers, raw.width, raw.height, residual_tolerance_mm);
}

}  // namespace tofr
