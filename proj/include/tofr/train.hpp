#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tofr/network.hpp"
#include "tofr/optimizer.hpp"
#include "tofr/patch.hpp"

namespace tofr {

struct TrainStage {
  int epochs = 1;
  double learning_rate = 3e-4;
  friend bool operator==(const TrainStage&, const TrainStage&) = default;
};

struct TrainConfig {
  std::vector<TrainStage> stages{{10, 3e-4}, {20, 1e-4}, {20, 3.3e-5}};
  int batch_size = 4;
  std::uint64_t seed = 0;
  double loss_beta = 1.0;
  double decay = 0.9;
  double momentum = 0.5;
  double epsilon = 1e-8;
  /// Write a checkpoint every N epochs into checkpoint_dir (0 or empty dir: never).
  int checkpoint_every = 0;
  std::filesystem::path checkpoint_dir;
  /// One log row per this many optimiser steps, plus one at every epoch end.
  int log_every = 200;
  /// Off by default so logs are byte-identical across runs; wall_ms is then 0.
  bool record_wall_time = false;
  /// A logged interval whose mean loss exceeds this multiple of the previous
  /// one is reported as a loss spike.
  double spike_factor = 4.0;

  /// Throws ErrorKind::kConfig: empty stages, non-positive epochs or batch
  /// size, negative or increasing learning rates, beta <= 0.
  void validate() const;
  int total_epochs() const noexcept;
  RmsPropSettings optimizer_settings(double learning_rate) const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Stage index (0-based) and learning rate for a 0-based epoch.
struct ScheduleEntry {
  int stage;
  double learning_rate;
};
ScheduleEntry schedule_at(const TrainConfig& config, int epoch);

struct TrainLogRow {
  std::uint64_t step = 0;  // optimiser steps completed
  int epoch = 0;           // 1-based
  int stage = 0;           // 1-based
  double learning_rate = 0.0;
  double mean_loss = 0.0;
  std::int64_t wall_ms = 0;
  friend bool operator==(const TrainLogRow&, const TrainLogRow&) = default;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
  std::vector<double> epoch_losses;  // mean training loss per epoch

  /// Columns: step,epoch,stage,lr,mean_loss,wall_ms
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
  friend bool operator==(const TrainLog&, const TrainLog&) = default;
};

struct TrainResult {
  Network<float> network;
  OptimizerState optimizer;
  TrainLog log;
  std::string last_checkpoint;
};

using TrainProgress = std::function<void(const TrainLogRow&)>;

/// Batched smooth-L1 training with RMSProp over the given patch stream. The
/// stream order is reshuffled every epoch from the config seed. Throws
/// TrainingError on a non-finite loss or gradient, carrying the last
/// checkpoint path written so far.
TrainResult train(const TrainConfig& config, const NetworkConfig& net_config,
                  const TrainingSet& data, const TrainProgress& progress = {});
TrainResult train(const TrainConfig& config, Network<float> network, const TrainingSet& data,
                  const TrainProgress& progress = {});

/// Mean smooth-L1 (normalised units) over a patch stream; no state changes.
/// Throws ErrorKind::kData on an empty stream.
double evaluate_epoch(const Network<float>& network, std::span<const PatchTensor> patches,
                      double beta = 1.0, int batch_size = 4);
double evaluate_epoch(const Network<float>& network, const TrainingSet& data, double beta = 1.0,
                      int batch_size = 4);

}  // namespace tofr
