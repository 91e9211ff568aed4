#include "tofr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace tofr {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'T', 'O', 'F', 'R'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const std::string& in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  }
  return v;
}

void put_floats(std::string& out, std::span<const float> values) {
  for (float f : values) put_u32(out, std::bit_cast<std::uint32_t>(f));
}

void get_floats(const std::string& in, std::size_t& offset, std::span<float> values) {
  for (float& f : values) {
    f = std::bit_cast<float>(get_u32(in, offset));
    offset += 4;
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Network<float>& network,
                     const OptimizerState* optimizer, const json& metadata) {
  const auto params = network.parameters();
  json manifest = json::array();
  std::size_t count = 0;
  for (const auto& p : params) {
    manifest.push_back({{"name", p.name}, {"shape", p.shape}});
    count += p.values.size();
  }
  json header = {{"config", network.config().to_json()},
                 {"layers", manifest},
                 {"optimizer_state", optimizer != nullptr},
                 {"metadata", metadata}};
  if (optimizer) {
    if (optimizer->accumulator.size() != params.size()) {
      throw Error(ErrorKind::kConfig, "optimizer state does not match the network parameters");
    }
    header["optimizer"] = {{"decay", optimizer->settings.decay},
                           {"momentum", optimizer->settings.momentum},
                           {"epsilon", optimizer->settings.epsilon},
                           {"learning_rate", optimizer->settings.learning_rate},
                           {"steps", optimizer->steps}};
  }
  const std::string header_text = header.dump();

  std::string blob(kMagic, kMagic + 4);
  put_u32(blob, kCheckpointVersion);
  put_u32(blob, static_cast<std::uint32_t>(header_text.size()));
  blob += header_text;
  blob.reserve(blob.size() + count * 4 * (optimizer ? 3 : 1));
  for (const auto& p : params) put_floats(blob, p.values);
  if (optimizer) {
    for (const auto& a : optimizer->accumulator) put_floats(blob, a);
    for (const auto& v : optimizer->velocity) put_floats(blob, v);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointError::Code::kIo, "cannot write checkpoint " + path.string());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw CheckpointError(CheckpointError::Code::kIo, "short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Code::kIo, "cannot open checkpoint " + path.string());
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = " (" + path.string() + ")";

  if (blob.size() < 4) throw CheckpointError(CheckpointError::Code::kCorrupt, "corrupt checkpoint: truncated magic" + where);
  if (std::memcmp(blob.data(), kMagic, 4) != 0) {
    throw CheckpointError(CheckpointError::Code::kBadMagic, "not a checkpoint: bad magic" + where);
  }
  if (blob.size() < 12) throw CheckpointError(CheckpointError::Code::kCorrupt, "corrupt checkpoint: truncated preamble" + where);
  const std::uint32_t version = get_u32(blob, 4);
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointError::Code::kUnsupportedVersion,
                          "unsupported version " + std::to_string(version) + where);
  }
  const std::uint32_t header_len = get_u32(blob, 8);
  if (blob.size() - 12 < header_len) {
    throw CheckpointError(CheckpointError::Code::kCorrupt, "corrupt checkpoint: truncated header" + where);
  }

  Checkpoint ckpt;
  json header;
  try {
    header = json::parse(blob.substr(12, header_len));
    ckpt.network = Network<float>::build(NetworkConfig::from_json(header.at("config")));
    ckpt.metadata = header.value("metadata", json::object());
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(CheckpointError::Code::kCorrupt, std::string("corrupt checkpoint header: ") + e.what() + where);
  }

  auto params = ckpt.network.parameters();
  const json layers = header.value("layers", json());
  if (!layers.is_array() || layers.size() != params.size()) {
    throw CheckpointError(CheckpointError::Code::kCorrupt, "corrupt checkpoint: manifest size mismatch" + where);
  }
  std::size_t count = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    bool matches = false;
    try {
      matches = layers[i].is_object() && layers[i].value("name", "") == params[i].name &&
                layers[i].value("shape", std::vector<int>{}) == params[i].shape;
    } catch (const json::exception&) {
    }
    if (!matches) {
      throw CheckpointError(CheckpointError::Code::kCorrupt,
                            "corrupt checkpoint: manifest entry " + std::to_string(i) + " disagrees with the network" + where);
    }
    count += params[i].values.size();
  }
  const bool has_optimizer = header.value("optimizer_state", false);
  const std::size_t expected = 12 + header_len + count * 4 * (has_optimizer ? 3 : 1);
  if (blob.size() != expected) {
    throw CheckpointError(CheckpointError::Code::kCorrupt,
                          "corrupt checkpoint: expected " + std::to_string(expected) + " bytes, found " +
                              std::to_string(blob.size()) + where);
  }

  std::size_t offset = 12 + header_len;
  for (auto& p : params) get_floats(blob, offset, p.values);
  if (has_optimizer) try {
    RmsPropSettings settings;
    const json& o = header.at("optimizer");
    settings.decay = o.at("decay").get<double>();
    settings.momentum = o.at("momentum").get<double>();
    settings.epsilon = o.at("epsilon").get<double>();
    settings.learning_rate = o.at("learning_rate").get<double>();
    std::vector<std::size_t> sizes;
    for (const auto& p : params) sizes.push_back(p.values.size());
    OptimizerState state = OptimizerState::zeros(sizes, settings);
    state.steps = o.at("steps").get<std::uint64_t>();
    for (auto& a : state.accumulator) get_floats(blob, offset, a);
    for (auto& v : state.velocity) get_floats(blob, offset, v);
    ckpt.optimizer = std::move(state);
  } catch (const json::exception& e) {
    throw CheckpointError(CheckpointError::Code::kCorrupt, std::string("corrupt optimizer header: ") + e.what() + where);
  }
  return ckpt;
}

}  // namespace tofr
