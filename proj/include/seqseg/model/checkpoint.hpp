#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "seqseg/core/errors.hpp"
#include "seqseg/model/network.hpp"

namespace seqseg::model {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

// File layout: "SQSG" | u32 version | u64 manifest length | JSON manifest | float32 tensor data.
inline constexpr char kCheckpointMagic[4] = {'S', 'Q', 'S', 'G'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const Tensor<float>* find(const std::string& name) const {
    for (const auto& t : tensors) {
      if (t.name == name) return &t.value;
    }
    return nullptr;
  }
};

inline nlohmann::json to_json(const EncoderConfig& e) {
  return {{"blocks", e.blocks}, {"base_channels", e.base_channels}, {"channel_growth", e.channel_growth},
          {"in_channels", e.in_channels}};
}

inline nlohmann::json to_json(const DecoderConfig& d) {
  return {{"num_layers", d.num_layers}, {"hidden", d.hidden}, {"skip", to_string(d.skip)}, {"classes", d.classes}};
}

inline EncoderConfig encoder_from_json(const nlohmann::json& j) {
  EncoderConfig e;
  e.blocks = j.at("blocks").get<int>();
  e.base_channels = j.at("base_channels").get<int>();
  e.channel_growth = j.at("channel_growth").get<int>();
  e.in_channels = j.at("in_channels").get<int>();
  return e;
}

inline DecoderConfig decoder_from_json(const nlohmann::json& j) {
  DecoderConfig d;
  d.num_layers = j.at("num_layers").get<int>();
  d.hidden = j.at("hidden").get<int>();
  d.skip = parse_skip_mode(j.at("skip").get<std::string>());
  d.classes = j.at("classes").get<int>();
  return d;
}

inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  nlohmann::json meta = ck.meta;
  meta["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : ck.tensors) {
    meta["tensors"].push_back({{"name", t.name},
                               {"shape", {t.value.channels(), t.value.height(), t.value.width()}},
                               {"offset", offset}});
    offset += t.value.size();
  }
  const std::string text = meta.dump();
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError(tmp.string(), "cannot write checkpoint");
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t len = text.size();
    out.write(kCheckpointMagic, 4);
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : ck.tensors) {
      out.write(reinterpret_cast<const char*>(t.value.data()), static_cast<std::streamsize>(t.value.size() * sizeof(float)));
    }
    if (!out) throw IoError(tmp.string(), "checkpoint write failed");
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open checkpoint");
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0) throw IoError(path.string(), "not a checkpoint");
  if (version != kCheckpointVersion) {
    throw IoError(path.string(), "checkpoint schema version " + std::to_string(version) + " (expected " +
                                     std::to_string(kCheckpointVersion) + ")");
  }
  if (len > (1u << 30)) throw IoError(path.string(), "corrupt checkpoint manifest");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  Checkpoint ck;
  try {
    ck.meta = nlohmann::json::parse(text);
    for (const auto& t : ck.meta.at("tensors")) {
      const auto shape = t.at("shape").get<std::vector<int>>();
      if (shape.size() != 3) throw IoError(path.string(), "bad tensor shape");
      NamedTensor nt{t.at("name").get<std::string>(), Tensor<float>(shape[0], shape[1], shape[2])};
      in.read(reinterpret_cast<char*>(nt.value.data()), static_cast<std::streamsize>(nt.value.size() * sizeof(float)));
      if (!in) throw IoError(path.string(), "truncated checkpoint");
      ck.tensors.push_back(std::move(nt));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string(), std::string("corrupt checkpoint manifest (") + e.what() + ")");
  }
  ck.meta.erase("tensors");
  return ck;
}

/// Checkpoint holding the network configuration and every parameter.
inline Checkpoint model_checkpoint(const Network<float>& net) {
  Checkpoint ck;
  ck.meta["encoder"] = to_json(net.encoder);
  ck.meta["decoder"] = to_json(net.decoder);
  for (const auto& e : net.params.entries()) ck.tensors.push_back({"param/" + e.name, e.param.value});
  return ck;
}

inline Network<float> network_from_checkpoint(const Checkpoint& ck, const std::string& origin = "checkpoint") {
  Network<float> net;
  try {
    net = Network<float>::create(encoder_from_json(ck.meta.at("encoder")), decoder_from_json(ck.meta.at("decoder")), 0);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(origin, std::string("checkpoint lacks model configuration (") + e.what() + ")");
  }
  for (auto& e : net.params.entries()) {
    const Tensor<float>* t = ck.find("param/" + e.name);
    if (!t) throw IoError(origin, "checkpoint is missing parameter " + e.name);
    if (shape_string(*t) != shape_string(e.param.value)) {
      throw IoError(origin, "parameter " + e.name + " has shape " + shape_string(*t) + ", expected " +
                                shape_string(e.param.value));
    }
    e.param.value = *t;
  }
  return net;
}

inline Network<float> load_network(const std::filesystem::path& path) {
  return network_from_checkpoint(read_checkpoint(path), path.string());
}

}  // namespace seqseg::model
