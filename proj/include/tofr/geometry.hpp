#pragma once

#include <array>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "tofr/depth_map.hpp"

namespace tofr {

using Vec2 = Eigen::Vector2d;
using Homography = Eigen::Matrix3d;

struct PointPair {
  Vec2 source;
  Vec2 target;
};

/// Projective transform through four correspondences, normalised so that
/// H(2,2) = 1. Throws ErrorKind::kGeometry if either point set contains a
/// collinear triple.
Homography fit_homography(std::span<const PointPair, 4> pairs);

Vec2 apply_homography(const Homography& h, const Vec2& p);

/// Twice the signed area of triangle (a, b, c).
double signed_area2(const Vec2& a, const Vec2& b, const Vec2& c);

/// Four markers on a rectangular object, ordered to match the model corners
/// (inset, inset), (W - inset, inset), (W - inset, H - inset), (inset, H - inset)
/// in object millimetres.
struct MarkerSet {
  std::array<Vec2, 4> image_points;  // sub-pixel marker centres
  std::array<double, 4> depths_mm{};
  double object_width_mm = 0.0;
  double object_height_mm = 0.0;
  double inset_mm = 30.0;

  std::array<Vec2, 4> model_points() const;
  /// Throws ErrorKind::kGeometry unless the image quad is strictly convex.
  void validate() const;
};

/// depth(x, y) = a*x + b*y + c in image coordinates.
struct DepthPlane {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double max_residual_mm = 0.0;  // at the fitting points

  double operator()(double x, double y) const noexcept { return a * x + b * y + c; }
};

/// Least-squares plane through (x, y, depth) samples.
DepthPlane fit_depth_plane(std::span<const Vec2> points, std::span<const double> depths);

struct GroundTruthFit {
  DepthMap ground_truth;  // valid exactly on the mask
  std::vector<double> fill_mm;  // the same fill before rounding to float, 0 off-mask
  Mask mask;
  Homography homography;  // object mm -> image px
  DepthPlane plane;
};

/// Fits the object rectangle into an image of the given size and fills it
/// with the marker plane (extrapolated out to the object boundary).
GroundTruthFit fit_marker_plane(const MarkerSet& markers, int width, int height,
                                double residual_tolerance_mm = 5.0);

/// Same, but first checks that every marker lands on a valid raw pixel.
GroundTruthFit fit_ground_truth_plane(const MarkerSet& markers, const DepthMap& raw,
                                      double residual_tolerance_mm = 5.0);

}  // namespace tofr
