// babble/checkpoint.hpp
//
// Copyright 2026  The Babble Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "babble/model.hpp"

namespace babble {

// Container layout: 8-byte magic, little-endian u64 manifest length, JSON
// manifest, then every parameter as little-endian float32 in manifest order.
constexpr char kCheckpointMagic[9] = "BBLCKPT1";

struct CheckpointMeta {
  uint64_t seed = 0;
  int64_t next_step = 1;
};

template <typename T>
void save_checkpoint(const std::string& path, const Model<T>& model, CheckpointMeta meta = {}) {
  nlohmann::json params = nlohmann::json::array();
  int64_t offset = 0;
  for (const auto& p : model.params().all()) {
    params.push_back({{"name", p->name}, {"shape", p->value.shape()}, {"offset", offset}});
    offset += p->value.size();
  }
  nlohmann::json manifest{{"version", 1},
                          {"dtype", "f32"},
                          {"config", model.config()},
                          {"rng", {{"seed", meta.seed}, {"next_step", meta.next_step}}},
                          {"params", params}};
  const std::string js = manifest.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("save_checkpoint: cannot open " + path);
  f.write(kCheckpointMagic, 8);
  const uint64_t len = js.size();
  f.write(reinterpret_cast<const char*>(&len), 8);
  f.write(js.data(), static_cast<long>(js.size()));
  std::vector<float> buf;
  for (const auto& p : model.params().all()) {
    buf.resize(static_cast<size_t>(p->value.size()));
    for (int64_t i = 0; i < p->value.size(); ++i) buf[static_cast<size_t>(i)] = static_cast<float>(p->value[i]);
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<long>(buf.size() * sizeof(float)));
  }
  if (!f) throw CheckpointError("save_checkpoint: write failed for " + path);
}

template <typename T>
struct LoadedCheckpoint {
  std::unique_ptr<Model<T>> model;
  CheckpointMeta meta;
};

/// Rebuilds the model from the stored config and fills every parameter from
/// the blob. Bit-exact round trip: float32 on disk, float32 in the default
/// training instantiation.
template <typename T = float>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("load_checkpoint: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::string(magic, 8) != std::string(kCheckpointMagic, 8))
    throw CheckpointError("load_checkpoint: bad magic in " + path);
  uint64_t len = 0;
  f.read(reinterpret_cast<char*>(&len), 8);
  std::string js(len, '\0');
  f.read(js.data(), static_cast<long>(len));
  if (!f) throw CheckpointError("load_checkpoint: truncated manifest");
  const auto manifest = nlohmann::json::parse(js);
  if (manifest.at("version").get<int>() != 1)
    throw CheckpointError("load_checkpoint: unknown version " +
                          manifest.at("version").dump());
  if (manifest.at("dtype").get<std::string>() != "f32")
    throw CheckpointError("load_checkpoint: unknown dtype");

  LoadedCheckpoint<T> out;
  out.model = std::make_unique<Model<T>>(manifest.at("config").get<ModelConfig>(), 0);
  out.meta.seed = manifest.at("rng").at("seed").get<uint64_t>();
  out.meta.next_step = manifest.at("rng").at("next_step").get<int64_t>();

  const std::streampos blob_start = f.tellg();
  std::vector<bool> filled(out.model->params().all().size(), false);
  for (const auto& entry : manifest.at("params")) {
    const std::string name = entry.at("name").get<std::string>();
    const Shape shape = entry.at("shape").get<Shape>();
    const int64_t offset = entry.at("offset").get<int64_t>();
    Parameter<T>& p = out.model->params().get(name);
    if (p.value.shape() != shape)
      throw CheckpointError("load_checkpoint: shape mismatch for parameter '" + name + "'");
    std::vector<float> buf(static_cast<size_t>(p.value.size()));
    f.seekg(blob_start + static_cast<std::streamoff>(offset * static_cast<int64_t>(sizeof(float))));
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<long>(buf.size() * sizeof(float)));
    if (!f)
      throw CheckpointError("load_checkpoint: blob truncated at parameter '" + name + "'");
    for (int64_t i = 0; i < p.value.size(); ++i) p.value[i] = static_cast<T>(buf[static_cast<size_t>(i)]);
    size_t idx = 0;
    for (const auto& mp : out.model->params().all()) {
      if (mp->name == name) filled[idx] = true;
      ++idx;
    }
  }
  size_t idx = 0;
  for (const auto& mp : out.model->params().all()) {
    if (!filled[idx])
      throw CheckpointError("load_checkpoint: manifest missing parameter '" + mp->name + "'");
    ++idx;
  }
  return out;
}

}  // namespace babble
