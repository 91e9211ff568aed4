#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tofr/errors.hpp"
#include "tofr/eval.hpp"
#include "tofr/network.hpp"
#include "tofr/patch.hpp"
#include "tofr/synth.hpp"
#include "tofr/train.hpp"

namespace tofr {

inline constexpr int kSchemaVersion = 1;

/// Process exit codes of the `tofr` binary.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumeric = 4,
  kExitIo = 5,
};

int exit_code_for(ErrorKind kind) noexcept;

/// Reads a run config file, checks schema_version and returns the object.
nlohmann::json read_run_config(const std::filesystem::path& path);

/// Overrides shared by every subcommand; flags win over the config file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> data;
  std::optional<std::filesystem::path> model;
  std::optional<std::filesystem::path> split;
};

/// Applies overrides, fills defaults and rejects unknown fields. The result is
/// the resolved config that outputs embed.
nlohmann::json resolve_config(const std::string& command, nlohmann::json config, const Overrides& overrides);

nlohmann::json scene_ranges_to_json(const SceneRanges& r);
SceneRanges scene_ranges_from_json(const nlohmann::json& j);

/// {"preset": "proposed" | "desk", "variant": "proposed" | "batch_norm" |
/// "single_scale"} or an explicit network config object.
NetworkConfig network_config_from_json(const nlohmann::json& j, std::uint64_t seed);
NetworkConfig apply_variant(NetworkConfig config, const std::string& variant);

struct DataSplit {
  std::vector<std::string> train;
  std::vector<std::string> held_out;
  nlohmann::json to_json() const;
  static DataSplit from_json(const nlohmann::json& j);
};

/// Deterministic split by scene. At least one scene is held out whenever
/// there are two or more scenes.
DataSplit split_scenes(std::vector<std::string> names, double train_fraction, std::uint64_t seed);

/// Scene names in a data directory (manifest order, else sorted subdirectories).
std::vector<std::string> list_scenes(const std::filesystem::path& data_dir);
std::vector<SceneSample> load_scenes(const std::filesystem::path& data_dir, const std::vector<std::string>& names);

// Subcommands. Each takes a resolved config and writes its artifacts into
// config["out"]; the returned JSON is the summary also written to disk.
nlohmann::json run_synth(const nlohmann::json& config);
nlohmann::json run_train(const nlohmann::json& config, bool verbose = false);
nlohmann::json run_infer(const nlohmann::json& config);
nlohmann::json run_eval(const nlohmann::json& config);
nlohmann::json run_noise_sweep(const nlohmann::json& config);
nlohmann::json run_ablation(const nlohmann::json& config, bool verbose = false);

/// Entry point of the `tofr` binary: parses flags, dispatches, maps errors to
/// exit codes and prints diagnostics on stderr.
int run_cli(int argc, char** argv);

}  // namespace tofr
