#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "json.hpp"
#include "tofr/network.hpp"
#include "tofr/optimizer.hpp"

namespace tofr {

// Container layout:
//   "TOFR" | u32 version | u32 header length | UTF-8 JSON header | f32 data
// Integers and floats are little-endian. The header carries the network
// config, the parameter manifest (name + shape, in data order) and whether
// optimiser buffers follow the parameters.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Network<float> network;
  std::optional<OptimizerState> optimizer;
  nlohmann::json metadata;  // free-form run echo (train config, seed, ...)
};

void save_checkpoint(const std::filesystem::path& path, const Network<float>& network,
                     const OptimizerState* optimizer = nullptr,
                     const nlohmann::json& metadata = nlohmann::json::object());

/// Throws CheckpointError with kBadMagic, kUnsupportedVersion, kCorrupt
/// (truncated data, bad header, manifest mismatch) or kIo.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tofr
