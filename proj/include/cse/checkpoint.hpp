// Copyright 2026 The CSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Checkpoint container: magic "CSEM", version u32, length-prefixed
// canonical-JSON model config, then a tensor table of (length-prefixed
// UTF-8 name, rank u32, dims u32[], float32 little-endian data) until EOF.

#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cse/error.hpp"
#include "cse/model.hpp"

namespace cse {

struct Checkpoint {
  ModelConfig config;
  ParamSet<float> params;
};

inline void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                            const ParamSet<float>& params) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  check(f.good(), ErrorCode::kIo, "cannot open for write: " + path);
  auto put_u32 = [&](uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };

  f.write("CSEM", 4);
  put_u32(1);
  const std::string cfg_json = nlohmann::json(cfg).dump();
  put_u32(static_cast<uint32_t>(cfg_json.size()));
  f.write(cfg_json.data(), static_cast<std::streamsize>(cfg_json.size()));

  for (const auto& [name, tensor] : params.tensors) {
    put_u32(static_cast<uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(static_cast<uint32_t>(tensor.rank()));
    for (int d : tensor.shape) put_u32(static_cast<uint32_t>(d));
    f.write(reinterpret_cast<const char*>(tensor.data.data()),
            static_cast<std::streamsize>(tensor.data.size() * 4));
  }
  check(f.good(), ErrorCode::kIo, "write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), ErrorCode::kIo, "cannot open: " + path);
  char magic[4];
  f.read(magic, 4);
  check(f.good() && std::memcmp(magic, "CSEM", 4) == 0, ErrorCode::kParse,
        "not a checkpoint file: " + path);
  auto get_u32 = [&]() {
    uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  const uint32_t version = get_u32();
  check(version == 1, ErrorCode::kParse, "unsupported checkpoint version: " + std::to_string(version));

  const uint32_t cfg_len = get_u32();
  std::string cfg_json(cfg_len, '\0');
  f.read(cfg_json.data(), cfg_len);
  check(f.good(), ErrorCode::kParse, "truncated checkpoint config: " + path);

  Checkpoint ck;
  try {
    ck.config = nlohmann::json::parse(cfg_json).get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw_error(ErrorCode::kParse, std::string("bad checkpoint config: ") + e.what());
  }

  while (true) {
    uint32_t name_len = 0;
    f.read(reinterpret_cast<char*>(&name_len), 4);
    if (f.eof()) break;
    check(f.good(), ErrorCode::kParse, "truncated checkpoint: " + path);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    const uint32_t rank = get_u32();
    check(f.good() && rank <= 4, ErrorCode::kParse, "bad tensor header in: " + path);
    std::vector<int> shape(rank);
    for (uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int>(get_u32());
    Tensor<float> t(shape);
    f.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * 4));
    check(f.good(), ErrorCode::kParse, "truncated tensor data in: " + path);
    ck.params.tensors.emplace(std::move(name), std::move(t));
  }
  return ck;
}

// Warm start: copy every tensor whose name and shape both match; everything
// else keeps its fresh initialization. Returns the loaded names.
inline std::vector<std::string> load_overlapping(ParamSet<float>& dst, const ParamSet<float>& src) {
  std::vector<std::string> loaded;
  std::vector<std::string> mismatched;
  for (auto& [name, tensor] : dst.tensors) {
    auto it = src.tensors.find(name);
    if (it == src.tensors.end()) continue;
    if (it->second.shape != tensor.shape) {
      mismatched.push_back(name + " " + it->second.shape_str() + " vs " + tensor.shape_str());
      continue;
    }
    tensor = it->second;
    loaded.push_back(name);
  }
  check(mismatched.empty(), ErrorCode::kValidation,
        "checkpoint shape conflict: " + [&] {
          std::string s;
          for (const auto& m : mismatched) s += (s.empty() ? "" : "; ") + m;
          return s;
        }());
  return loaded;
}

}  // namespace cse
