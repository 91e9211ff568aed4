#include "tofr/app.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <set>

#include "CLI11.hpp"
#include "tofr/checkpoint.hpp"
#include "tofr/random.hpp"

namespace tofr {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kTopology:
      return kExitConfig;
    case ErrorKind::kData:
    case ErrorKind::kFormat:
    case ErrorKind::kGeometry:
      return kExitData;
    case ErrorKind::kNumeric:
      return kExitNumeric;
    case ErrorKind::kCheckpoint:
    case ErrorKind::kIo:
      return kExitIo;
  }
  return kExitInternal;
}

// --------------------------------------------------------------- config ---

namespace {

const std::vector<double> kDefaultSigmas{0, 0.5, 1, 2, 4, 8, 16, 32, 64, 128};

json parse_json_file(const fs::path& path, ErrorKind kind) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(kind, path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

fs::path prepare_out(const json& config) {
  const fs::path out = config.at("out").get<std::string>();
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw Error(ErrorKind::kIo, "cannot create output directory " + out.string());
  return out;
}

/// The config as embedded in artifacts: everything except the output location.
json echo(const json& config) {
  json e = config;
  e.erase("out");
  return e;
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& what) {
  if (!j.is_object()) throw Error(ErrorKind::kConfig, what + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw Error(ErrorKind::kConfig, "unknown field '" + k + "' in " + what);
  }
}

void default_to(json& j, const char* key, const json& value) {
  if (!j.contains(key)) j[key] = value;
}

void require_path(const json& j, const char* key, const std::string& command) {
  if (!j.contains(key) || !j[key].is_string() || j[key].get<std::string>().empty()) {
    throw Error(ErrorKind::kConfig, command + ": '" + key + "' is required");
  }
}

}  // namespace

json read_run_config(const fs::path& path) {
  json j = parse_json_file(path, ErrorKind::kConfig);
  if (!j.is_object()) throw Error(ErrorKind::kConfig, path.string() + ": run config must be a JSON object");
  if (!j.contains("schema_version")) throw Error(ErrorKind::kConfig, path.string() + ": schema_version missing");
  return j;
}

json scene_ranges_to_json(const SceneRanges& r) {
  return {{"width", r.width},
          {"height", r.height},
          {"background_mm", r.background_mm},
          {"background_slope", r.background_slope},
          {"object_depth_mm", r.object_depth_mm},
          {"plane_size_mm", r.plane_size_mm},
          {"max_tilt_deg", r.max_tilt_deg},
          {"max_roll_deg", r.max_roll_deg},
          {"sphere_radius_mm", r.sphere_radius_mm},
          {"cylinder_radius_mm", r.cylinder_radius_mm},
          {"cylinder_length_mm", r.cylinder_length_mm},
          {"alpha_base", r.alpha_base},
          {"alpha_amplitude", r.alpha_amplitude},
          {"alpha_frequency", r.alpha_frequency},
          {"bias_mm", r.bias_mm},
          {"sensor_noise_mm", r.sensor_noise_mm},
          {"dropout", r.dropout}};
}

SceneRanges scene_ranges_from_json(const json& j) {
  SceneRanges r;
  const json defaults = scene_ranges_to_json(r);
  std::set<std::string> keys;
  for (const auto& [k, v] : defaults.items()) keys.insert(k);
  check_keys(j, keys, "scene ranges");
  try {
    r.width = j.value("width", r.width);
    r.height = j.value("height", r.height);
    r.background_mm = j.value("background_mm", r.background_mm);
    r.background_slope = j.value("background_slope", r.background_slope);
    r.object_depth_mm = j.value("object_depth_mm", r.object_depth_mm);
    r.plane_size_mm = j.value("plane_size_mm", r.plane_size_mm);
    r.max_tilt_deg = j.value("max_tilt_deg", r.max_tilt_deg);
    r.max_roll_deg = j.value("max_roll_deg", r.max_roll_deg);
    r.sphere_radius_mm = j.value("sphere_radius_mm", r.sphere_radius_mm);
    r.cylinder_radius_mm = j.value("cylinder_radius_mm", r.cylinder_radius_mm);
    r.cylinder_length_mm = j.value("cylinder_length_mm", r.cylinder_length_mm);
    r.alpha_base = j.value("alpha_base", r.alpha_base);
    r.alpha_amplitude = j.value("alpha_amplitude", r.alpha_amplitude);
    r.alpha_frequency = j.value("alpha_frequency", r.alpha_frequency);
    r.bias_mm = j.value("bias_mm", r.bias_mm);
    r.sensor_noise_mm = j.value("sensor_noise_mm", r.sensor_noise_mm);
    r.dropout = j.value("dropout", r.dropout);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("scene ranges: ") + e.what());
  }
  if (r.width < 8 || r.height < 8) throw Error(ErrorKind::kConfig, "scene ranges: image must be at least 8x8");
  return r;
}

NetworkConfig apply_variant(NetworkConfig config, const std::string& variant) {
  if (variant == "proposed") return config;
  if (variant == "batch_norm") {
    config.use_batch_norm = true;
    return config;
  }
  if (variant == "single_scale") {
    config.input_channels = 2;
    return config;
  }
  throw Error(ErrorKind::kConfig, "unknown network variant '" + variant + "'");
}

NetworkConfig network_config_from_json(const json& j, std::uint64_t seed) {
  NetworkConfig c;
  if (j.is_object() && j.contains("preset")) {
    check_keys(j, {"preset", "variant"}, "network");
    const std::string preset = j.at("preset").get<std::string>();
    if (preset == "proposed") {
      c = NetworkConfig::proposed(seed);
    } else if (preset == "desk") {
      c = NetworkConfig::desk(seed);
    } else {
      throw Error(ErrorKind::kConfig, "unknown network preset '" + preset + "'");
    }
    c = apply_variant(c, j.value("variant", std::string("proposed")));
  } else {
    c = NetworkConfig::from_json(j);
  }
  c.seed = seed;
  return c;
}

json resolve_config(const std::string& command, json config, const Overrides& overrides) {
  if (!config.is_object()) throw Error(ErrorKind::kConfig, "run config must be a JSON object");
  const int version = config.value("schema_version", kSchemaVersion);
  if (version != kSchemaVersion) {
    throw Error(ErrorKind::kConfig, "unsupported schema_version " + std::to_string(version) + " (expected " +
                                        std::to_string(kSchemaVersion) + ")");
  }
  config["schema_version"] = kSchemaVersion;
  if (overrides.seed) config["seed"] = *overrides.seed;
  if (overrides.out) config["out"] = overrides.out->string();
  if (overrides.data) config["data"] = overrides.data->string();
  if (overrides.model) config["model"] = overrides.model->string();
  if (overrides.split) config["split"] = overrides.split->string();
  default_to(config, "seed", 0);
  require_path(config, "out", command);

  std::set<std::string> keys{"schema_version", "seed", "out"};
  const std::set<std::string> inference_keys{"batching", "batch_size"};
  auto add_keys = [&](std::initializer_list<const char*> ks) { keys.insert(ks.begin(), ks.end()); };
  auto inference_defaults = [&] {
    add_keys({"batching", "batch_size"});
    default_to(config, "batching", "arbitrary");
    default_to(config, "batch_size", 256);
    inference_batching_from_string(config["batching"].get<std::string>());
  };
  auto training_defaults = [&] {
    add_keys({"data", "split", "train_fraction", "network", "train", "patches"});
    require_path(config, "data", command);
    default_to(config, "train_fraction", 0.95);
    default_to(config, "network", json{{"preset", "proposed"}});
    json train = config.value("train", json::object());
    TrainConfig tc = TrainConfig::from_json(train);
    config["train"] = tc.to_json();
    config["train"].erase("seed");
    json patches = config.value("patches", json::object());
    check_keys(patches, {"flip", "pixel_stride"}, "patches");
    default_to(patches, "flip", true);
    default_to(patches, "pixel_stride", 1);
    if (patches["pixel_stride"].get<int>() < 1) throw Error(ErrorKind::kConfig, "patches.pixel_stride must be >= 1");
    config["patches"] = patches;
    const double f = config["train_fraction"].get<double>();
    if (!(f > 0.0 && f <= 1.0)) throw Error(ErrorKind::kConfig, "train_fraction must lie in (0, 1]");
  };
  auto scene_selection = [&] {
    add_keys({"data", "split", "scenes", "model"});
    require_path(config, "data", command);
  };
  try {
    if (command == "synth") {
      add_keys({"scenes", "shapes", "ranges"});
      default_to(config, "scenes", 48);
      default_to(config, "shapes", json{"plane", "sphere_cap", "plane", "cylinder"});
      config["ranges"] = scene_ranges_to_json(scene_ranges_from_json(config.value("ranges", json::object())));
      if (config["scenes"].get<int>() < 0) throw Error(ErrorKind::kConfig, "synth: scenes must be >= 0");
      if (config["shapes"].empty()) throw Error(ErrorKind::kConfig, "synth: shapes must not be empty");
      for (const auto& s : config["shapes"]) object_shape_from_string(s.get<std::string>());
    } else if (command == "train") {
      training_defaults();
    } else if (command == "infer") {
      add_keys({"model", "scene", "median_filter", "median_border"});
      require_path(config, "model", command);
      require_path(config, "scene", command);
      default_to(config, "median_filter", false);
      default_to(config, "median_border", "masked_only");
      median_border_from_string(config["median_border"].get<std::string>());
      inference_defaults();
    } else if (command == "eval") {
      scene_selection();
      require_path(config, "model", command);
      add_keys({"median_filter", "median_border"});
      default_to(config, "median_filter", true);
      default_to(config, "median_border", "masked_only");
      median_border_from_string(config["median_border"].get<std::string>());
      inference_defaults();
    } else if (command == "noise-sweep") {
      scene_selection();
      require_path(config, "model", command);
      add_keys({"sigmas"});
      default_to(config, "sigmas", kDefaultSigmas);
      for (const auto& s : config["sigmas"]) {
        if (!(s.get<double>() >= 0.0)) throw Error(ErrorKind::kConfig, "noise-sweep: sigmas must be >= 0");
      }
      inference_defaults();
    } else if (command == "ablation") {
      training_defaults();
      add_keys({"variants", "median_border"});
      default_to(config, "variants", json{"proposed", "batch_norm", "single_scale"});
      default_to(config, "median_border", "masked_only");
      median_border_from_string(config["median_border"].get<std::string>());
      for (const auto& v : config["variants"]) apply_variant(NetworkConfig{}, v.get<std::string>());
      inference_defaults();
    } else {
      throw Error(ErrorKind::kConfig, "unknown command '" + command + "'");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, command + " config: " + e.what());
  }
  check_keys(config, keys, command + " config");
  if (config.contains("network")) network_config_from_json(config["network"], 0);
  return config;
}

// ----------------------------------------------------------------- data ---

json DataSplit::to_json() const { return {{"train", train}, {"held_out", held_out}}; }

DataSplit DataSplit::from_json(const json& j) {
  try {
    return {j.at("train").get<std::vector<std::string>>(), j.at("held_out").get<std::vector<std::string>>()};
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("split: ") + e.what());
  }
}

DataSplit split_scenes(std::vector<std::string> names, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw Error(ErrorKind::kConfig, "train_fraction must lie in (0, 1]");
  }
  std::sort(names.begin(), names.end());
  std::mt19937_64 rng(derive_seed(seed, {0x73706c6974}));
  std::shuffle(names.begin(), names.end(), rng);
  std::size_t held = static_cast<std::size_t>(std::llround((1.0 - train_fraction) * names.size()));
  if (names.size() >= 2) held = std::clamp<std::size_t>(held, 1, names.size() - 1);
  else held = 0;
  DataSplit s;
  s.held_out.assign(names.begin(), names.begin() + held);
  s.train.assign(names.begin() + held, names.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.held_out.begin(), s.held_out.end());
  return s;
}

std::vector<std::string> list_scenes(const fs::path& data_dir) {
  if (!fs::is_directory(data_dir)) throw Error(ErrorKind::kIo, "data directory " + data_dir.string() + " not found");
  const fs::path manifest = data_dir / "manifest.json";
  std::vector<std::string> names;
  if (fs::exists(manifest)) {
    const json m = parse_json_file(manifest, ErrorKind::kFormat);
    try {
      for (const auto& s : m.at("scenes")) names.push_back(s.at("name").get<std::string>());
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kFormat, manifest.string() + ": " + e.what());
    }
    return names;
  }
  for (const auto& entry : fs::directory_iterator(data_dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "raw.pgm")) names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

std::vector<SceneSample> load_scenes(const fs::path& data_dir, const std::vector<std::string>& names) {
  std::vector<SceneSample> out;
  out.reserve(names.size());
  for (const auto& n : names) {
    if (!fs::is_directory(data_dir / n)) throw Error(ErrorKind::kData, "scene " + n + " not found in " + data_dir.string());
    out.push_back(read_scene(data_dir / n));
    out.back().name = n;
  }
  return out;
}

namespace {

/// Scenes to score: an explicit list, else the held-out part of a split, else all.
std::vector<std::string> selected_scenes(const json& config) {
  const fs::path data = config.at("data").get<std::string>();
  if (config.contains("scenes")) return config["scenes"].get<std::vector<std::string>>();
  if (config.contains("split")) {
    return DataSplit::from_json(parse_json_file(config["split"].get<std::string>(), ErrorKind::kFormat)).held_out;
  }
  return list_scenes(data);
}

DataSplit training_split(const json& config) {
  if (config.contains("split")) {
    return DataSplit::from_json(parse_json_file(config["split"].get<std::string>(), ErrorKind::kFormat));
  }
  const fs::path data = config.at("data").get<std::string>();
  return split_scenes(list_scenes(data), config["train_fraction"].get<double>(),
                      config["seed"].get<std::uint64_t>());
}

InferenceOptions inference_options(const json& config) {
  return {inference_batching_from_string(config["batching"].get<std::string>()), config["batch_size"].get<int>()};
}

Network<float> load_model(const json& config) {
  return load_checkpoint(config.at("model").get<std::string>()).network;
}

std::uint64_t sub_seed(const json& config, std::uint64_t stream) {
  return derive_seed(config["seed"].get<std::uint64_t>(), {stream});
}

constexpr std::uint64_t kNetworkStream = 1;
constexpr std::uint64_t kTrainStream = 2;
constexpr std::uint64_t kPatchStream = 3;

struct TrainedModel {
  Network<float> network;
  json summary;
};

TrainedModel train_model(const json& config, const NetworkConfig& net_config, const std::vector<SceneSample>& train,
                         const std::vector<SceneSample>& held_out, const fs::path& checkpoint_dir, bool verbose) {
  TrainConfig tc = TrainConfig::from_json(config["train"]);
  tc.seed = sub_seed(config, kTrainStream);
  if (tc.checkpoint_every > 0) {
    tc.checkpoint_dir = tc.checkpoint_dir.empty() ? checkpoint_dir : fs::path(config["out"].get<std::string>()) / tc.checkpoint_dir;
  }
  TrainingSetOptions po;
  po.flip = config["patches"]["flip"].get<bool>();
  po.pixel_stride = config["patches"]["pixel_stride"].get<int>();
  po.seed = sub_seed(config, kPatchStream);
  po.layout = layout_for_channels(net_config.input_channels);
  const TrainingSet data(train, po);

  TrainProgress progress;
  if (verbose) {
    progress = [](const TrainLogRow& r) {
      std::cerr << "step " << r.step << " epoch " << r.epoch << " stage " << r.stage << " lr " << r.learning_rate
                << " loss " << r.mean_loss << '\n';
    };
  }
  const Network<float> initial = Network<float>::build(net_config);
  TrainResult result = tofr::train(tc, initial, data, progress);

  json summary = {{"network", net_config.to_json()},
                  {"parameters", initial.parameter_count()},
                  {"train_patches", data.size()},
                  {"epoch_losses", result.log.epoch_losses}};
  if (!held_out.empty()) {
    TrainingSetOptions ho = po;
    ho.flip = false;
    const TrainingSet held(held_out, ho);
    if (!held.empty()) {
      summary["held_out_patches"] = held.size();
      summary["held_out_loss_initial"] = evaluate_epoch(initial, held, tc.loss_beta, tc.batch_size);
      summary["held_out_loss"] = evaluate_epoch(result.network, held, tc.loss_beta, tc.batch_size);
    }
  }
  summary["log_csv"] = result.log.to_csv();
  return {std::move(result.network), std::move(summary)};
}

}  // namespace

// ------------------------------------------------------------- commands ---

json run_synth(const json& config) {
  const fs::path out = prepare_out(config);
  const SceneRanges ranges = scene_ranges_from_json(config["ranges"]);
  std::vector<ObjectShape> shapes;
  for (const auto& s : config["shapes"]) shapes.push_back(object_shape_from_string(s.get<std::string>()));
  const int n = config["scenes"].get<int>();
  const std::uint64_t seed = config["seed"].get<std::uint64_t>();

  json scenes = json::array();
  for (int i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "scene_%03d", i);
    const std::uint64_t scene_seed = derive_seed(seed, {static_cast<std::uint64_t>(i)});
    const ObjectShape shape = shapes[static_cast<std::size_t>(i) % shapes.size()];
    const SceneSpec spec = random_scene_spec(ranges, shape, scene_seed);
    const SceneSample scene = generate_synthetic_scene(spec, scene_seed, name);
    write_scene(scene, out / name);
    scenes.push_back({{"name", name}, {"shape", to_string(shape)}, {"class", scene_class(shape)},
                      {"seed", scene_seed}, {"masked_pixels", scene.mask.count()}});
  }
  json manifest = {{"config", echo(config)}, {"scenes", scenes}};
  write_json(out / "manifest.json", manifest);
  return manifest;
}

json run_train(const json& config, bool verbose) {
  const fs::path out = prepare_out(config);
  const fs::path data_dir = config["data"].get<std::string>();
  const DataSplit split = training_split(config);
  const auto train_scenes = load_scenes(data_dir, split.train);
  const auto held_scenes = load_scenes(data_dir, split.held_out);
  const NetworkConfig net_config = network_config_from_json(config["network"], sub_seed(config, kNetworkStream));

  TrainedModel m = train_model(config, net_config, train_scenes, held_scenes, out / "checkpoints", verbose);
  write_text(out / "train_log.csv", m.summary["log_csv"].get<std::string>());
  m.summary.erase("log_csv");
  write_json(out / "split.json", split.to_json());
  json summary = {{"config", echo(config)}, {"split", split.to_json()}, {"result", m.summary}};
  save_checkpoint(out / "model.tofr", m.network, nullptr, {{"config", echo(config)}, {"split", split.to_json()}});
  write_json(out / "train_summary.json", summary);
  return summary;
}

json run_infer(const json& config) {
  const fs::path out = prepare_out(config);
  const Network<float> net = load_model(config);
  const SceneSample scene = read_scene(config["scene"].get<std::string>());
  DepthMap restored = infer_depth_map(net, scene.raw, scene.background, scene.mask, inference_options(config));
  if (config["median_filter"].get<bool>()) {
    restored = median_filter_3x3(restored, scene.mask, median_border_from_string(config["median_border"]));
  }
  write_depth_pgm(restored, out / "restored.pgm");
  json summary = {{"config", echo(config)}, {"scene", scene.name}, {"masked_pixels", scene.mask.count()}};
  if (scene.has_ground_truth()) {
    summary["raw"] = compute_metrics(scene.raw, scene.ground_truth, scene.raw, scene.mask).to_json();
    summary["restored"] = compute_metrics(restored, scene.ground_truth, scene.raw, scene.mask).to_json();
  }
  write_json(out / "infer.json", summary);
  return summary;
}

json run_eval(const json& config) {
  const fs::path out = prepare_out(config);
  const Network<float> net = load_model(config);
  const auto scenes = load_scenes(config["data"].get<std::string>(), selected_scenes(config));
  EvalOptions options;
  options.inference = inference_options(config);
  options.median_border = median_border_from_string(config["median_border"]);

  const MetricsReport raw = evaluate_raw(scenes);
  options.median_filter = false;
  const MetricsReport plain = evaluate_scenes(net, scenes, options);
  json report = {{"config", echo(config)}, {"raw", raw.to_json()}, {"restored", plain.to_json()}};
  std::string csv = "model,postfilter,rms,rel,log10,pixels\n";
  auto row = [](const std::string& model, const char* filter, const MetricsReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%s,%.9g,%.9g,%.9g,%zu\n", model.c_str(), filter, r.rms, r.rel, r.log10,
                  r.pixel_count);
    return std::string(buf);
  };
  csv += row("raw", "none", raw);
  csv += row("model", "none", plain);
  if (config["median_filter"].get<bool>()) {
    options.median_filter = true;
    const MetricsReport filtered = evaluate_scenes(net, scenes, options);
    report["restored_filtered"] = filtered.to_json();
    csv += row("model", "median3x3", filtered);
  }
  json names = json::array();
  for (const auto& s : scenes) names.push_back(s.name);
  report["scenes"] = names;
  write_text(out / "metrics.csv", csv);
  write_json(out / "metrics.json", report);
  return report;
}

json run_noise_sweep(const json& config) {
  const fs::path out = prepare_out(config);
  const Network<float> net = load_model(config);
  const auto scenes = load_scenes(config["data"].get<std::string>(), selected_scenes(config));
  const auto sigmas = config["sigmas"].get<std::vector<double>>();
  const auto rows = noise_sweep(net, scenes, sigmas, config["seed"].get<std::uint64_t>(), inference_options(config));
  json table = json::array();
  for (const auto& r : rows) {
    json row = r.metrics.to_json();
    row.erase("config");
    row["sigma_mm"] = r.sigma_mm;
    table.push_back(row);
  }
  json report = {{"config", echo(config)}, {"rows", table}};
  write_text(out / "noise_sweep.csv", noise_sweep_csv(rows));
  write_json(out / "noise_sweep.json", report);
  return report;
}

json run_ablation(const json& config, bool verbose) {
  const fs::path out = prepare_out(config);
  const fs::path data_dir = config["data"].get<std::string>();
  const DataSplit split = training_split(config);
  const auto train_scenes = load_scenes(data_dir, split.train);
  const auto held_scenes = load_scenes(data_dir, split.held_out);
  if (held_scenes.empty()) throw Error(ErrorKind::kData, "ablation: no held-out scenes to compare on");

  std::vector<Network<float>> nets;
  std::vector<std::string> names;
  json training = json::object();
  fs::create_directories(out / "models");
  for (const auto& v : config["variants"]) {
    const std::string variant = v.get<std::string>();
    json net_json = config["network"];
    NetworkConfig nc = network_config_from_json(net_json, sub_seed(config, kNetworkStream));
    nc = apply_variant(nc, variant);
    if (verbose) std::cerr << "training variant " << variant << '\n';
    TrainedModel m = train_model(config, nc, train_scenes, held_scenes, out / "checkpoints" / variant, verbose);
    write_text(out / "models" / (variant + "_log.csv"), m.summary["log_csv"].get<std::string>());
    m.summary.erase("log_csv");
    save_checkpoint(out / "models" / (variant + ".tofr"), m.network, nullptr,
                    {{"config", echo(config)}, {"variant", variant}, {"split", split.to_json()}});
    training[variant] = m.summary;
    nets.push_back(std::move(m.network));
    names.push_back(variant);
  }
  std::vector<NamedModel> models;
  for (std::size_t i = 0; i < nets.size(); ++i) models.push_back({names[i], &nets[i]});
  EvalOptions options;
  options.inference = inference_options(config);
  options.median_border = median_border_from_string(config["median_border"]);
  const auto rows = compare_variants(held_scenes, models, options);
  json table = json::array();
  for (const auto& r : rows) {
    table.push_back({{"model", r.model}, {"class", r.scene_class}, {"filtered", r.filtered}, {"metrics", r.metrics.to_json()}});
  }
  json report = {{"config", echo(config)}, {"split", split.to_json()}, {"training", training}, {"rows", table}};
  write_text(out / "ablation.csv", comparison_csv(rows));
  write_json(out / "ablation.json", report);
  return report;
}

// ------------------------------------------------------------------ cli ---

namespace {

void configure_threads() {
  if (const char* env = std::getenv("TOFR_NUM_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || n <= 0) {
      throw Error(ErrorKind::kConfig, std::string("TOFR_NUM_THREADS must be a positive integer, got '") + env + "'");
    }
    omp_set_num_threads(static_cast<int>(n));
  }
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Depth restoration for translucent objects from ToF depth maps"};
  app.require_subcommand(1);
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out;
  bool quiet = false;

  const std::vector<std::pair<std::string, std::string>> commands{
      {"synth", "generate synthetic scenes"},
      {"train", "train a restoration network"},
      {"infer", "restore one scene"},
      {"eval", "score a model on scenes"},
      {"noise-sweep", "score a model under added raw-depth noise"},
      {"ablation", "train and compare network variants"}};
  std::vector<CLI::App*> subs;
  std::string data, model, split;
  std::vector<CLI::Option*> seed_opts, out_opts, data_opts, model_opts, split_opts;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON run config")->check(CLI::ExistingFile);
    seed_opts.push_back(sub->add_option("--seed", seed, "master seed (overrides the config)"));
    out_opts.push_back(sub->add_option("--out", out, "output directory (overrides the config)"));
    data_opts.push_back(sub->add_option("--data", data, "scene directory (overrides the config)"));
    model_opts.push_back(sub->add_option("--model", model, "model checkpoint (overrides the config)"));
    split_opts.push_back(sub->add_option("--split", split, "split.json from a training run (overrides the config)"));
    sub->add_flag("--quiet", quiet, "suppress progress output");
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    configure_threads();
    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (!subs[i]->parsed()) continue;
      const std::string& name = commands[i].first;
      Overrides ov;
      if (seed_opts[i]->count() > 0) ov.seed = seed;
      if (out_opts[i]->count() > 0) ov.out = out;
      if (data_opts[i]->count() > 0) ov.data = data;
      if (model_opts[i]->count() > 0) ov.model = model;
      if (split_opts[i]->count() > 0) ov.split = split;
      json raw = config_path.empty() ? json{{"schema_version", kSchemaVersion}} : read_run_config(config_path);
      const json config = resolve_config(name, raw, ov);
      const bool verbose = !quiet;
      if (name == "synth") {
        const json m = run_synth(config);
        if (verbose) std::cerr << "wrote " << m["scenes"].size() << " scenes to " << config["out"].get<std::string>() << '\n';
      } else if (name == "train") {
        const json s = run_train(config, verbose);
        if (verbose && s["result"].contains("held_out_loss")) {
          std::cerr << "held-out loss " << s["result"]["held_out_loss"].get<double>() << '\n';
        }
      } else if (name == "infer") {
        run_infer(config);
      } else if (name == "eval") {
        const json r = run_eval(config);
        if (verbose) {
          std::cerr << "raw rms " << r["raw"]["rms"].get<double>() << " mm, restored rms "
                    << r["restored"]["rms"].get<double>() << " mm\n";
        }
      } else if (name == "noise-sweep") {
        run_noise_sweep(config);
      } else if (name == "ablation") {
        run_ablation(config, verbose);
      }
    }
  } catch (const TrainingError& e) {
    std::cerr << "tofr: training failed at step " << e.step() << ": " << e.what();
    if (!e.last_checkpoint().empty()) std::cerr << " (last checkpoint: " << e.last_checkpoint() << ")";
    std::cerr << '\n';
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "tofr: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "tofr: io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "tofr: internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitOk;
}

}  // namespace tofr
