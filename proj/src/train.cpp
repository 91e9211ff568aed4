#include "tofr/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "tofr/checkpoint.hpp"
#include "tofr/errors.hpp"
#include "tofr/ops.hpp"
#include "tofr/random.hpp"

namespace tofr {

using nlohmann::json;

void TrainConfig::validate() const {
  if (stages.empty()) throw Error(ErrorKind::kConfig, "train: at least one stage is required");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& s = stages[i];
    if (s.epochs <= 0) throw Error(ErrorKind::kConfig, "train: stage " + std::to_string(i + 1) + " has no epochs");
    if (!(s.learning_rate >= 0.0) || !std::isfinite(s.learning_rate)) {
      throw Error(ErrorKind::kConfig, "train: stage " + std::to_string(i + 1) + " learning rate must be >= 0");
    }
    if (i > 0 && s.learning_rate > stages[i - 1].learning_rate) {
      throw Error(ErrorKind::kConfig, "train: learning rates must not increase across stages");
    }
  }
  if (batch_size <= 0) throw Error(ErrorKind::kConfig, "train: batch_size must be positive");
  if (!(loss_beta > 0.0)) throw Error(ErrorKind::kConfig, "train: loss_beta must be positive");
  if (decay < 0.0 || decay >= 1.0) throw Error(ErrorKind::kConfig, "train: decay must lie in [0, 1)");
  if (momentum < 0.0 || momentum >= 1.0) throw Error(ErrorKind::kConfig, "train: momentum must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw Error(ErrorKind::kConfig, "train: epsilon must be positive");
  if (checkpoint_every < 0) throw Error(ErrorKind::kConfig, "train: checkpoint_every must be >= 0");
  if (log_every <= 0) throw Error(ErrorKind::kConfig, "train: log_every must be positive");
}

int TrainConfig::total_epochs() const noexcept {
  int n = 0;
  for (const auto& s : stages) n += s.epochs;
  return n;
}

RmsPropSettings TrainConfig::optimizer_settings(double learning_rate) const {
  return {decay, momentum, epsilon, learning_rate};
}

json TrainConfig::to_json() const {
  json st = json::array();
  for (const auto& s : stages) st.push_back({{"epochs", s.epochs}, {"learning_rate", s.learning_rate}});
  return {{"stages", st},
          {"batch_size", batch_size},
          {"seed", seed},
          {"loss_beta", loss_beta},
          {"decay", decay},
          {"momentum", momentum},
          {"epsilon", epsilon},
          {"checkpoint_every", checkpoint_every},
          {"checkpoint_dir", checkpoint_dir.generic_string()},
          {"log_every", log_every},
          {"record_wall_time", record_wall_time},
          {"spike_factor", spike_factor}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  static const std::set<std::string> keys{"stages",  "batch_size",       "seed",           "loss_beta",
                                          "decay",   "momentum",         "epsilon",        "checkpoint_every",
                                          "checkpoint_dir", "log_every", "record_wall_time", "spike_factor"};
  if (!j.is_object()) throw Error(ErrorKind::kConfig, "train config must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!keys.count(k)) throw Error(ErrorKind::kConfig, "unknown field '" + k + "' in train config");
  }
  TrainConfig c;
  try {
    if (j.contains("stages")) {
      c.stages.clear();
      for (const auto& s : j.at("stages")) {
        for (const auto& [k, v] : s.items()) {
          if (k != "epochs" && k != "learning_rate") {
            throw Error(ErrorKind::kConfig, "unknown field '" + k + "' in train stage");
          }
        }
        c.stages.push_back({s.at("epochs").get<int>(), s.at("learning_rate").get<double>()});
      }
    }
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.loss_beta = j.value("loss_beta", c.loss_beta);
    c.decay = j.value("decay", c.decay);
    c.momentum = j.value("momentum", c.momentum);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    if (j.contains("checkpoint_dir")) c.checkpoint_dir = j.at("checkpoint_dir").get<std::string>();
    c.log_every = j.value("log_every", c.log_every);
    c.record_wall_time = j.value("record_wall_time", c.record_wall_time);
    c.spike_factor = j.value("spike_factor", c.spike_factor);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

ScheduleEntry schedule_at(const TrainConfig& config, int epoch) {
  int start = 0;
  for (std::size_t i = 0; i < config.stages.size(); ++i) {
    start += config.stages[i].epochs;
    if (epoch < start) return {static_cast<int>(i), config.stages[i].learning_rate};
  }
  throw Error(ErrorKind::kConfig, "epoch " + std::to_string(epoch) + " is past the last stage");
}

std::string TrainLog::to_csv() const {
  std::ostringstream out;
  out << "step,epoch,stage,lr,mean_loss,wall_ms\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%llu,%d,%d,%.9g,%.9g,%lld\n", static_cast<unsigned long long>(r.step),
                  r.epoch, r.stage, r.learning_rate, r.mean_loss, static_cast<long long>(r.wall_ms));
    out << buf;
  }
  return out.str();
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << to_csv();
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

namespace {

std::vector<std::size_t> parameter_sizes(const Network<float>& net) {
  std::vector<std::size_t> sizes;
  for (const auto& p : net.parameters()) sizes.push_back(p.values.size());
  return sizes;
}

std::vector<ParamSlot> slots(Network<float>& net) {
  std::vector<ParamSlot> out;
  for (auto& p : net.parameters()) out.push_back({p.values, p.grads});
  return out;
}

}  // namespace

TrainResult train(const TrainConfig& config, const NetworkConfig& net_config, const TrainingSet& data,
                  const TrainProgress& progress) {
  return train(config, Network<float>::build(net_config), data, progress);
}

TrainResult train(const TrainConfig& config, Network<float> network, const TrainingSet& data,
                  const TrainProgress& progress) {
  config.validate();
  if (data.empty()) throw Error(ErrorKind::kData, "train: the patch stream is empty");
  if (channel_count(data.layout()) != network.config().input_channels) {
    throw Error(ErrorKind::kConfig, "train: patches have " + std::to_string(channel_count(data.layout())) +
                                        " channels but the network expects " +
                                        std::to_string(network.config().input_channels));
  }

  TrainResult result;
  result.optimizer = OptimizerState::zeros(parameter_sizes(network), config.optimizer_settings(0.0));
  const float beta = static_cast<float>(config.loss_beta);
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed_ms = [&]() -> std::int64_t {
    if (!config.record_wall_time) return 0;
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
  };

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::uint64_t step = 0;
  double previous_interval = -1.0;
  const bool checkpoints = config.checkpoint_every > 0 && !config.checkpoint_dir.empty();
  if (checkpoints) std::filesystem::create_directories(config.checkpoint_dir);

  std::vector<PatchTensor> batch_patches;
  std::vector<Tensor> batch;
  std::vector<float> grads;
  for (int epoch = 0; epoch < config.total_epochs(); ++epoch) {
    const ScheduleEntry sched = schedule_at(config, epoch);
    result.optimizer.settings.learning_rate = sched.learning_rate;
    std::mt19937_64 rng(derive_seed(config.seed, {0x65706f6368, static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_sum = 0.0, interval_sum = 0.0;
    std::size_t epoch_count = 0, interval_steps = 0;
    auto emit = [&] {
      if (interval_steps == 0) return;
      TrainLogRow row{step, epoch + 1, sched.stage + 1, sched.learning_rate,
                      interval_sum / static_cast<double>(interval_steps), elapsed_ms()};
      if (previous_interval > 0.0 && row.mean_loss > config.spike_factor * previous_interval) {
        warn("loss spike at step " + std::to_string(step) + ": " + std::to_string(row.mean_loss) +
             " after " + std::to_string(previous_interval));
      }
      previous_interval = row.mean_loss;
      result.log.rows.push_back(row);
      if (progress) progress(row);
      interval_sum = 0.0;
      interval_steps = 0;
    };

    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      batch_patches.clear();
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) {
        batch_patches.push_back(data.patch(order[i]));
        batch.push_back(batch_patches.back().values);
      }
      const std::size_t n = batch.size();
      Network<float>::Trace trace;
      std::vector<float> out;
      try {
        out = network.forward_batch(batch, &trace);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kNumeric) throw;
        throw TrainingError(std::string(e.what()) + " at step " + std::to_string(step), step,
                            result.last_checkpoint);
      }
      grads.assign(n, 0.0f);
      double loss = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto l = smooth_l1(out[i], batch_patches[i].normalized_target(), beta);
        loss += l.loss;
        grads[i] = l.gradient / static_cast<float>(n);
      }
      loss /= static_cast<double>(n);
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite loss at step " + std::to_string(step), step, result.last_checkpoint);
      }
      network.zero_grad();
      network.backward(trace, grads);
      auto params = slots(network);
      try {
        rmsprop_step(params, result.optimizer, step);
      } catch (const TrainingError& e) {
        throw TrainingError(e.what(), step, result.last_checkpoint);
      }
      ++step;
      epoch_sum += loss * static_cast<double>(n);
      epoch_count += n;
      interval_sum += loss;
      ++interval_steps;
      if (interval_steps == static_cast<std::size_t>(config.log_every)) emit();
    }
    emit();
    result.log.epoch_losses.push_back(epoch_sum / static_cast<double>(epoch_count));

    if (checkpoints && ((epoch + 1) % config.checkpoint_every == 0 || epoch + 1 == config.total_epochs())) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04d.tofr", epoch + 1);
      const auto path = config.checkpoint_dir / name;
      json echo = config.to_json();
      echo.erase("checkpoint_dir");
      save_checkpoint(path, network, &result.optimizer, {{"train", echo}, {"epoch", epoch + 1}, {"step", step}});
      result.last_checkpoint = path.string();
    }
  }
  network.zero_grad();
  result.network = std::move(network);
  return result;
}

double evaluate_epoch(const Network<float>& network, std::span<const PatchTensor> patches, double beta,
                      int batch_size) {
  if (patches.empty()) throw Error(ErrorKind::kData, "evaluate_epoch: the patch stream is empty");
  if (batch_size <= 0) throw Error(ErrorKind::kConfig, "evaluate_epoch: batch_size must be positive");
  double sum = 0.0;
  std::vector<Tensor> batch;
  for (std::size_t begin = 0; begin < patches.size(); begin += batch_size) {
    const std::size_t end = std::min(patches.size(), begin + static_cast<std::size_t>(batch_size));
    batch.clear();
    for (std::size_t i = begin; i < end; ++i) batch.push_back(patches[i].values);
    const auto out = network.forward_batch(batch);
    for (std::size_t i = begin; i < end; ++i) {
      sum += smooth_l1(out[i - begin], patches[i].normalized_target(), static_cast<float>(beta)).loss;
    }
  }
  return sum / static_cast<double>(patches.size());
}

double evaluate_epoch(const Network<float>& network, const TrainingSet& data, double beta, int batch_size) {
  if (data.empty()) throw Error(ErrorKind::kData, "evaluate_epoch: the patch stream is empty");
  std::vector<PatchTensor> chunk;
  double sum = 0.0;
  const std::size_t chunk_size = 1024;
  for (std::size_t begin = 0; begin < data.size(); begin += chunk_size) {
    const std::size_t end = std::min(data.size(), begin + chunk_size);
    chunk.clear();
    for (std::size_t i = begin; i < end; ++i) chunk.push_back(data.patch(i));
    sum += evaluate_epoch(network, chunk, beta, batch_size) * static_cast<double>(chunk.size());
  }
  return sum / static_cast<double>(data.size());
}

}  // namespace tofr
