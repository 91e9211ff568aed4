#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "tofr/patch.hpp"

namespace tofr {

// Synthetic stand-in for real ToF captures of translucent objects. A camera
// at the origin looks down +Z at a background wall; one object sits between.
// Inside the object mask the raw depth is
//   raw = (1 - alpha) * gt + alpha * background + bias_mm * alpha
// with alpha a smooth field, so raw >= gt (distortion pushes depth away from
// the camera and depends on the background). Outside the mask raw equals the
// background. This is a data generator, not a physical sensor model.

enum class ObjectShape { kPlane, kSphereCap, kCylinder };

const char* to_string(ObjectShape shape);
ObjectShape object_shape_from_string(const std::string& name);
/// "planar" for planes, "round" for sphere caps and cylinders.
const char* scene_class(ObjectShape shape);

struct PlaneObject {
  std::array<double, 3> center_mm{0.0, 0.0, 1100.0};
  double width_mm = 360.0;
  double height_mm = 300.0;
  double yaw_deg = 0.0;    // about the vertical axis
  double pitch_deg = 0.0;  // about the horizontal axis
  double roll_deg = 0.0;   // about the optical axis
};

struct SphereObject {
  std::array<double, 3> center_mm{0.0, 0.0, 1300.0};
  double radius_mm = 150.0;
  double cap_depth_mm = 120.0;  // visible surface within this depth of the front point
};

struct CylinderObject {
  std::array<double, 3> center_mm{0.0, 0.0, 1300.0};  // axis is vertical
  double radius_mm = 120.0;
  double length_mm = 320.0;
};

/// alpha(x, y) = clamp(base + amplitude * sin(2 pi fx x / W + px) * cos(2 pi fy y / H + py),
///                     0.2, 0.8), unless `constant` overrides it.
struct AlphaField {
  double base = 0.5;
  double amplitude = 0.1;
  double freq_x = 1.0;
  double freq_y = 1.0;
  double phase_x = 0.0;
  double phase_y = 0.0;
  std::optional<double> constant;

  double value(double x, double y, int width, int height) const;
};

struct SceneSpec {
  int width = 128;
  int height = 128;
  double focal_px = 0.0;  // 0 -> 0.72 * width
  double background_mm = 2200.0;
  double background_slope_x = 0.0;  // mm per pixel
  double background_slope_y = 0.0;
  ObjectShape shape = ObjectShape::kPlane;
  PlaneObject plane;
  SphereObject sphere;
  CylinderObject cylinder;
  AlphaField alpha;
  double bias_mm = 20.0;
  double sensor_noise_mm = 0.0;
  double dropout = 0.0;  // probability of a missing raw pixel inside the object

  double focal() const noexcept { return focal_px > 0.0 ? focal_px : 0.72 * width; }
  nlohmann::json to_json() const;
  static SceneSpec from_json(const nlohmann::json& j);
};

/// Sampling ranges for random scenes.
struct SceneRanges {
  int width = 128;
  int height = 128;
  std::array<double, 2> background_mm{1900.0, 2600.0};
  double background_slope = 1.0;
  std::array<double, 2> object_depth_mm{950.0, 1300.0};
  std::array<double, 2> plane_size_mm{300.0, 450.0};
  double max_tilt_deg = 30.0;
  double max_roll_deg = 15.0;
  std::array<double, 2> sphere_radius_mm{110.0, 170.0};
  std::array<double, 2> cylinder_radius_mm{90.0, 140.0};
  std::array<double, 2> cylinder_length_mm{250.0, 380.0};
  std::array<double, 2> alpha_base{0.35, 0.65};
  std::array<double, 2> alpha_amplitude{0.05, 0.15};
  std::array<double, 2> alpha_frequency{0.5, 2.0};
  double bias_mm = 20.0;
  double sensor_noise_mm = 0.0;
  double dropout = 0.0;
};

/// Deterministic in (ranges, shape, seed); retries internally until the
/// object fits inside the frame.
SceneSpec random_scene_spec(const SceneRanges& ranges, ObjectShape shape, std::uint64_t seed);

/// Throws ErrorKind::kData when the object leaves the frame or reaches the
/// background. Planar ground truth goes through the marker-plane fit, the
/// same path used for real captures. Depths are rounded to whole millimetres.
SceneSample generate_synthetic_scene(const SceneSpec& spec, std::uint64_t seed,
                                     const std::string& name = "scene");

/// Scene directory: raw.pgm, background.pgm, gt.pgm, mask.pgm, meta.json.
void write_scene(const SceneSample& scene, const std::filesystem::path& dir);
SceneSample read_scene(const std::filesystem::path& dir);

}  // namespace tofr
