#include "tofr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include <Eigen/Geometry>

#include "tofr/geometry.hpp"
#include "tofr/random.hpp"

namespace tofr {

using nlohmann::json;

const char* to_string(ObjectShape shape) {
  switch (shape) {
    case ObjectShape::kPlane: return "plane";
    case ObjectShape::kSphereCap: return "sphere_cap";
    case ObjectShape::kCylinder: return "cylinder";
  }
  return "plane";
}

ObjectShape object_shape_from_string(const std::string& name) {
  if (name == "plane") return ObjectShape::kPlane;
  if (name == "sphere_cap") return ObjectShape::kSphereCap;
  if (name == "cylinder") return ObjectShape::kCylinder;
  throw Error(ErrorKind::kConfig, "unknown object shape '" + name + "'");
}

const char* scene_class(ObjectShape shape) {
  return shape == ObjectShape::kPlane ? "planar" : "round";
}

double AlphaField::value(double x, double y, int width, int height) const {
  if (constant) return *constant;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double v = base + amplitude * std::sin(two_pi * freq_x * x / width + phase_x) *
                              std::cos(two_pi * freq_y * y / height + phase_y);
  return std::clamp(v, 0.2, 0.8);
}

// ------------------------------------------------------------------ json ---

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& what) {
  if (!j.is_object()) throw Error(ErrorKind::kConfig, what + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw Error(ErrorKind::kConfig, "unknown field '" + key + "' in " + what);
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

json SceneSpec::to_json() const {
  json j = {{"width", width},
            {"height", height},
            {"focal_px", focal()},
            {"background_mm", background_mm},
            {"background_slope_x", background_slope_x},
            {"background_slope_y", background_slope_y},
            {"shape", tofr::to_string(shape)},
            {"bias_mm", bias_mm},
            {"sensor_noise_mm", sensor_noise_mm},
            {"dropout", dropout}};
  json a = {{"base", alpha.base},       {"amplitude", alpha.amplitude}, {"freq_x", alpha.freq_x},
            {"freq_y", alpha.freq_y},   {"phase_x", alpha.phase_x},     {"phase_y", alpha.phase_y}};
  if (alpha.constant) a["constant"] = *alpha.constant;
  j["alpha"] = a;
  switch (shape) {
    case ObjectShape::kPlane:
      j["plane"] = {{"center_mm", plane.center_mm}, {"width_mm", plane.width_mm},
                    {"height_mm", plane.height_mm}, {"yaw_deg", plane.yaw_deg},
                    {"pitch_deg", plane.pitch_deg}, {"roll_deg", plane.roll_deg}};
      break;
    case ObjectShape::kSphereCap:
      j["sphere"] = {{"center_mm", sphere.center_mm}, {"radius_mm", sphere.radius_mm},
                     {"cap_depth_mm", sphere.cap_depth_mm}};
      break;
    case ObjectShape::kCylinder:
      j["cylinder"] = {{"center_mm", cylinder.center_mm}, {"radius_mm", cylinder.radius_mm},
                       {"length_mm", cylinder.length_mm}};
      break;
  }
  return j;
}

SceneSpec SceneSpec::from_json(const json& j) {
  reject_unknown(j, {"width", "height", "focal_px", "background_mm", "background_slope_x",
                     "background_slope_y", "shape", "bias_mm", "sensor_noise_mm", "dropout", "alpha",
                     "plane", "sphere", "cylinder"},
                 "scene spec");
  SceneSpec s;
  try {
    read_opt(j, "width", s.width);
    read_opt(j, "height", s.height);
    read_opt(j, "focal_px", s.focal_px);
    read_opt(j, "background_mm", s.background_mm);
    read_opt(j, "background_slope_x", s.background_slope_x);
    read_opt(j, "background_slope_y", s.background_slope_y);
    if (j.contains("shape")) s.shape = object_shape_from_string(j.at("shape").get<std::string>());
    read_opt(j, "bias_mm", s.bias_mm);
    read_opt(j, "sensor_noise_mm", s.sensor_noise_mm);
    read_opt(j, "dropout", s.dropout);
    if (j.contains("alpha")) {
      const json& a = j.at("alpha");
      reject_unknown(a, {"base", "amplitude", "freq_x", "freq_y", "phase_x", "phase_y", "constant"}, "alpha field");
      read_opt(a, "base", s.alpha.base);
      read_opt(a, "amplitude", s.alpha.amplitude);
      read_opt(a, "freq_x", s.alpha.freq_x);
      read_opt(a, "freq_y", s.alpha.freq_y);
      read_opt(a, "phase_x", s.alpha.phase_x);
      read_opt(a, "phase_y", s.alpha.phase_y);
      if (a.contains("constant")) s.alpha.constant = a.at("constant").get<double>();
    }
    if (j.contains("plane")) {
      const json& p = j.at("plane");
      reject_unknown(p, {"center_mm", "width_mm", "height_mm", "yaw_deg", "pitch_deg", "roll_deg"}, "plane");
      read_opt(p, "center_mm", s.plane.center_mm);
      read_opt(p, "width_mm", s.plane.width_mm);
      read_opt(p, "height_mm", s.plane.height_mm);
      read_opt(p, "yaw_deg", s.plane.yaw_deg);
      read_opt(p, "pitch_deg", s.plane.pitch_deg);
      read_opt(p, "roll_deg", s.plane.roll_deg);
    }
    if (j.contains("sphere")) {
      const json& p = j.at("sphere");
      reject_unknown(p, {"center_mm", "radius_mm", "cap_depth_mm"}, "sphere");
      read_opt(p, "center_mm", s.sphere.center_mm);
      read_opt(p, "radius_mm", s.sphere.radius_mm);
      read_opt(p, "cap_depth_mm", s.sphere.cap_depth_mm);
    }
    if (j.contains("cylinder")) {
      const json& p = j.at("cylinder");
      reject_unknown(p, {"center_mm", "radius_mm", "length_mm"}, "cylinder");
      read_opt(p, "center_mm", s.cylinder.center_mm);
      read_opt(p, "radius_mm", s.cylinder.radius_mm);
      read_opt(p, "length_mm", s.cylinder.length_mm);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("scene spec: ") + e.what());
  }
  return s;
}

// ------------------------------------------------------------- sampling ---

namespace {

SceneSpec draw_scene_spec(const SceneRanges& r, ObjectShape shape, std::mt19937_64& rng) {
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto range = [&](const std::array<double, 2>& lim) { return uniform(lim[0], lim[1]); };

  SceneSpec s;
  s.width = r.width;
  s.height = r.height;
  s.background_mm = range(r.background_mm);
  s.background_slope_x = uniform(-r.background_slope, r.background_slope);
  s.background_slope_y = uniform(-r.background_slope, r.background_slope);
  s.shape = shape;
  s.alpha.base = range(r.alpha_base);
  s.alpha.amplitude = range(r.alpha_amplitude);
  s.alpha.freq_x = range(r.alpha_frequency);
  s.alpha.freq_y = range(r.alpha_frequency);
  s.alpha.phase_x = uniform(0.0, 2.0 * std::numbers::pi);
  s.alpha.phase_y = uniform(0.0, 2.0 * std::numbers::pi);
  s.bias_mm = r.bias_mm;
  s.sensor_noise_mm = r.sensor_noise_mm;
  s.dropout = r.dropout;

  const double f = s.focal();
  // Object centre placed in the middle 40% of the frame, back-projected.
  auto place = [&](double z) {
    const double u = uniform(0.3, 0.7) * (s.width - 1);
    const double v = uniform(0.3, 0.7) * (s.height - 1);
    return std::array<double, 3>{(u - 0.5 * (s.width - 1)) * z / f, (v - 0.5 * (s.height - 1)) * z / f, z};
  };
  const double z = range(r.object_depth_mm);
  switch (shape) {
    case ObjectShape::kPlane:
      s.plane.center_mm = place(z);
      s.plane.width_mm = range(r.plane_size_mm);
      s.plane.height_mm = range(r.plane_size_mm);
      s.plane.yaw_deg = uniform(-r.max_tilt_deg, r.max_tilt_deg);
      s.plane.pitch_deg = uniform(-r.max_tilt_deg, r.max_tilt_deg);
      s.plane.roll_deg = uniform(-r.max_roll_deg, r.max_roll_deg);
      break;
    case ObjectShape::kSphereCap:
      s.sphere.radius_mm = range(r.sphere_radius_mm);
      s.sphere.center_mm = place(z + s.sphere.radius_mm);
      s.sphere.cap_depth_mm = 0.8 * s.sphere.radius_mm;
      break;
    case ObjectShape::kCylinder:
      s.cylinder.radius_mm = range(r.cylinder_radius_mm);
      s.cylinder.length_mm = range(r.cylinder_length_mm);
      s.cylinder.center_mm = place(z + s.cylinder.radius_mm);
      break;
  }
  return s;
}

}  // namespace

SceneSpec random_scene_spec(const SceneRanges& r, ObjectShape shape, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, {0x73706563}));
  for (int attempt = 0; attempt < 200; ++attempt) {
    SceneSpec s = draw_scene_spec(r, shape, rng);
    try {
      generate_synthetic_scene(s, seed);
      return s;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kData) throw;
    }
  }
  throw Error(ErrorKind::kConfig, "scene ranges never produce an object inside the frame");
}

// ------------------------------------------------------------ rendering ---

namespace {

struct Rendered {
  DepthMap ground_truth;
  Mask mask;
  json extra = json::object();
};

Rendered render_plane(const SceneSpec& s) {
  const PlaneObject& p = s.plane;
  constexpr double deg = std::numbers::pi / 180.0;
  const Eigen::Matrix3d rot = (Eigen::AngleAxisd(p.yaw_deg * deg, Eigen::Vector3d::UnitY()) *
                               Eigen::AngleAxisd(p.pitch_deg * deg, Eigen::Vector3d::UnitX()) *
                               Eigen::AngleAxisd(p.roll_deg * deg, Eigen::Vector3d::UnitZ()))
                                  .toRotationMatrix();
  const Eigen::Vector3d c(p.center_mm[0], p.center_mm[1], p.center_mm[2]);
  const Eigen::Vector3d e1 = rot.col(0), e2 = rot.col(1);
  const double f = s.focal(), cx = 0.5 * (s.width - 1), cy = 0.5 * (s.height - 1);
  auto world = [&](double u, double v) { return c + (u - 0.5 * p.width_mm) * e1 + (v - 0.5 * p.height_mm) * e2; };
  auto project = [&](const Eigen::Vector3d& x) { return Vec2(f * x.x() / x.z() + cx, f * x.y() / x.z() + cy); };

  for (const auto& [u, v] : {std::pair{0.0, 0.0}, {p.width_mm, 0.0}, {p.width_mm, p.height_mm}, {0.0, p.height_mm}}) {
    const Eigen::Vector3d x = world(u, v);
    const Vec2 q = x.z() > 0 ? project(x) : Vec2(-1, -1);
    if (x.z() <= 0 || q.x() < 1.0 || q.y() < 1.0 || q.x() > s.width - 2.0 || q.y() > s.height - 2.0) {
      throw Error(ErrorKind::kData, "planar object leaves the frame");
    }
  }

  MarkerSet markers;
  markers.object_width_mm = p.width_mm;
  markers.object_height_mm = p.height_mm;
  const auto model = markers.model_points();
  for (int i = 0; i < 4; ++i) {
    const Eigen::Vector3d x = world(model[i].x(), model[i].y());
    markers.image_points[i] = project(x);
    markers.depths_mm[i] = x.z();
  }
  GroundTruthFit fit = fit_marker_plane(markers, s.width, s.height, 1e9);
  Rendered r{std::move(fit.ground_truth), std::move(fit.mask), json::object()};
  json pts = json::array();
  for (int i = 0; i < 4; ++i) {
    pts.push_back({{"x", markers.image_points[i].x()}, {"y", markers.image_points[i].y()},
                   {"depth_mm", markers.depths_mm[i]}});
  }
  r.extra["markers"] = pts;
  return r;
}

template <typename Hit>
Rendered render_implicit(const SceneSpec& s, Hit&& hit) {
  Rendered r{DepthMap(s.width, s.height), Mask(s.width, s.height), json::object()};
  const double f = s.focal(), cx = 0.5 * (s.width - 1), cy = 0.5 * (s.height - 1);
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x) {
      const double z = hit((x - cx) / f, (y - cy) / f);
      if (z > 0.0) {
        if (x == 0 || y == 0 || x == s.width - 1 || y == s.height - 1) {
          throw Error(ErrorKind::kData, "round object leaves the frame");
        }
        r.mask.set(x, y, true);
        r.ground_truth.set(x, y, static_cast<float>(z));
      }
    }
  if (r.mask.count() == 0) throw Error(ErrorKind::kData, "object not visible in the frame");
  return r;
}

Rendered render(const SceneSpec& s) {
  switch (s.shape) {
    case ObjectShape::kPlane:
      return render_plane(s);
    case ObjectShape::kSphereCap: {
      const Eigen::Vector3d c(s.sphere.center_mm[0], s.sphere.center_mm[1], s.sphere.center_mm[2]);
      const double rad = s.sphere.radius_mm;
      const double front = c.z() - rad;
      return render_implicit(s, [&](double dx, double dy) {
        const Eigen::Vector3d d(dx, dy, 1.0);
        const double a = d.squaredNorm(), b = -2.0 * d.dot(c), cc = c.squaredNorm() - rad * rad;
        const double disc = b * b - 4 * a * cc;
        if (disc < 0) return -1.0;
        const double t = (-b - std::sqrt(disc)) / (2 * a);
        return t <= front + s.sphere.cap_depth_mm ? t : -1.0;
      });
    }
    case ObjectShape::kCylinder: {
      const auto& cyl = s.cylinder;
      const double x0 = cyl.center_mm[0], y0 = cyl.center_mm[1], z0 = cyl.center_mm[2];
      return render_implicit(s, [&](double dx, double dy) {
        const double a = dx * dx + 1.0, b = -2.0 * (dx * x0 + z0);
        const double cc = x0 * x0 + z0 * z0 - cyl.radius_mm * cyl.radius_mm;
        const double disc = b * b - 4 * a * cc;
        if (disc < 0) return -1.0;
        const double t = (-b - std::sqrt(disc)) / (2 * a);
        const double yy = t * dy;
        return std::abs(yy - y0) <= 0.5 * cyl.length_mm ? t : -1.0;
      });
    }
  }
  throw Error(ErrorKind::kConfig, "unknown shape");
}

}  // namespace

SceneSample generate_synthetic_scene(const SceneSpec& spec, std::uint64_t seed, const std::string& name) {
  if (spec.width < 8 || spec.height < 8) throw Error(ErrorKind::kConfig, "scene must be at least 8x8");
  if (spec.sensor_noise_mm < 0 || spec.dropout < 0 || spec.dropout > 1 || spec.bias_mm < 0) {
    throw Error(ErrorKind::kConfig, "scene noise, dropout and bias must be non-negative (dropout <= 1)");
  }
  if (spec.alpha.constant && (*spec.alpha.constant < 0.0 || *spec.alpha.constant > 1.0)) {
    throw Error(ErrorKind::kConfig, "constant alpha must lie in [0, 1]");
  }
  Rendered r = render(spec);

  const int w = spec.width, h = spec.height;
  const double cx = 0.5 * (w - 1), cy = 0.5 * (h - 1);
  std::mt19937_64 rng(derive_seed(seed, {0x726177}));
  std::normal_distribution<double> noise(0.0, spec.sensor_noise_mm > 0 ? spec.sensor_noise_mm : 1.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  SceneSample s;
  s.name = name;
  s.background = DepthMap(w, h);
  s.raw = DepthMap(w, h);
  s.ground_truth = DepthMap(w, h);
  s.mask = r.mask;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double bg = spec.background_mm + spec.background_slope_x * (x - cx) + spec.background_slope_y * (y - cy);
      if (!(bg >= 1.0)) throw Error(ErrorKind::kData, "background depth must stay positive");
      const double bg_mm = std::round(bg);
      s.background.set(x, y, static_cast<float>(bg_mm));
      const double eps = spec.sensor_noise_mm > 0 ? noise(rng) : 0.0;
      const double drop = coin(rng);
      if (!r.mask(x, y)) {
        s.raw.set(x, y, static_cast<float>(std::max(1.0, std::round(bg + eps))));
        continue;
      }
      const double gt = r.ground_truth.at(x, y);
      if (gt >= bg) throw Error(ErrorKind::kData, "object reaches the background");
      const double alpha = spec.alpha.value(x, y, w, h);
      double raw = (1.0 - alpha) * gt + alpha * bg + spec.bias_mm * alpha + eps;
      raw = std::max(raw, gt);  // noise never pulls a pixel in front of the surface
      const double gt_mm = std::round(gt);
      s.ground_truth.set(x, y, static_cast<float>(gt_mm));
      if (drop < spec.dropout) {
        s.raw.invalidate(x, y);
      } else {
        s.raw.set(x, y, static_cast<float>(std::max(gt_mm, std::round(raw))));
      }
    }
  }
  s.meta = {{"spec", spec.to_json()}, {"seed", seed}, {"shape", to_string(spec.shape)},
            {"class", scene_class(spec.shape)}, {"name", name}};
  for (const auto& [k, v] : r.extra.items()) s.meta[k] = v;
  return s;
}

void write_scene(const SceneSample& scene, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + dir.string() + ": " + ec.message());
  write_depth_pgm(scene.raw, dir / "raw.pgm");
  write_depth_pgm(scene.background, dir / "background.pgm");
  if (scene.has_ground_truth()) write_depth_pgm(scene.ground_truth, dir / "gt.pgm");
  write_mask_pgm(scene.mask, dir / "mask.pgm");
  std::ofstream meta(dir / "meta.json", std::ios::trunc);
  if (!meta) throw Error(ErrorKind::kIo, "cannot write " + (dir / "meta.json").string());
  meta << scene.meta.dump(2) << '\n';
}

SceneSample read_scene(const std::filesystem::path& dir) {
  SceneSample s;
  s.name = dir.filename().string();
  s.raw = read_depth_pgm(dir / "raw.pgm");
  s.background = read_depth_pgm(dir / "background.pgm");
  if (std::filesystem::exists(dir / "gt.pgm")) s.ground_truth = read_depth_pgm(dir / "gt.pgm");
  s.mask = read_mask_pgm(dir / "mask.pgm");
  if (std::filesystem::exists(dir / "meta.json")) {
    std::ifstream in(dir / "meta.json");
    try {
      s.meta = json::parse(in);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kFormat, "bad meta.json in " + dir.string() + ": " + e.what());
    }
  }
  s.validate(false);
  return s;
}

}  // namespace tofr
