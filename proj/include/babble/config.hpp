// babble/config.hpp
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

#include <cstdint>
#include <string>

#include <json.hpp>

#include "babble/common.hpp"

namespace babble {

/// Bucketed relative-position embedding geometry: identity near zero, a
/// logarithmic band up to the maximum offset m, saturation beyond.
struct BucketConfig {
  int64_t n = 320;  // number of embeddings per head
  int64_t m = 800;  // maximum distinguished offset

  void validate() const {
    if (n <= 0 || n % 4 != 0) throw ValueError("BucketConfig: n must be a positive multiple of 4");
    if (m <= n / 4) throw ValueError("BucketConfig: m must exceed n/4");
  }
};

/// Span masking policy for the prediction objective.
struct MaskPolicy {
  int64_t span = 10;
  double start_prob = 0.08;
  bool force_min = false;  // guarantee at least one span

  void validate() const {
    if (span < 1) throw ValueError("MaskPolicy: span must be >= 1");
    if (start_prob < 0 || start_prob > 1)
      throw ValueError("MaskPolicy: start_prob must lie in [0, 1]");
  }
};

/// Every dimensioning knob of the network. The base geometry reproduces the
/// published model sizes; toy and micro presets shrink everything for
/// desk-scale training and gradient checking.
struct ModelConfig {
  int64_t conv_channels = 512;
  int64_t d_model = 768;
  int64_t heads = 8;
  int64_t layers = 12;
  int64_t d_ff = 3072;
  int64_t num_codewords = 500;  // C
  int64_t codeword_dim = 256;
  int64_t pos_conv_kernel = 128;
  int64_t pos_conv_groups = 16;
  BucketConfig bucket;
  bool pre_layernorm = false;  // post-LN block order by default
  bool share_gates = false;    // gate parameters per layer by default
  double softmax_scale_c = 32.0;
  double cosine_tau = 0.1;
  double dropout = 0.0;    // no-op unless a training rng is supplied
  double layerdrop = 0.0;

  int64_t d_k() const { return d_model / heads; }

  void validate() const {
    if (d_model % heads != 0) throw ValueError("ModelConfig: d_model must divide by heads");
    if (d_model % pos_conv_groups != 0)
      throw ValueError("ModelConfig: d_model must divide by pos_conv_groups");
    if (num_codewords < 2) throw ValueError("ModelConfig: need at least 2 codewords");
    if (cosine_tau <= 0) throw ValueError("ModelConfig: temperature must be positive");
    if (softmax_scale_c <= 0) throw ValueError("ModelConfig: softmax scale must be positive");
    if (dropout < 0 || dropout >= 1 || layerdrop < 0 || layerdrop >= 1)
      throw ValueError("ModelConfig: dropout rates must lie in [0, 1)");
    bucket.validate();
  }

  static ModelConfig base_geometry() { return ModelConfig{}; }

  static ModelConfig large_geometry() {
    ModelConfig c;
    c.d_model = 1024;
    c.heads = 12;
    c.layers = 24;
    c.d_ff = 4096;
    return c;
  }

  static ModelConfig toy() {
    ModelConfig c;
    c.conv_channels = 32;
    c.d_model = 32;
    c.heads = 4;
    c.layers = 2;
    c.d_ff = 128;
    c.num_codewords = 8;
    c.codeword_dim = 256;
    return c;
  }

  static ModelConfig micro() {
    ModelConfig c;
    c.conv_channels = 4;
    c.d_model = 16;
    c.heads = 2;
    c.layers = 2;
    c.d_ff = 64;
    c.num_codewords = 4;
    c.codeword_dim = 16;
    return c;
  }

  static ModelConfig preset(const std::string& name) {
    if (name == "base-geometry") return base_geometry();
    if (name == "large-geometry") return large_geometry();
    if (name == "toy") return toy();
    if (name == "micro") return micro();
    throw ValueError("unknown model preset: " + name);
  }
};

inline void to_json(nlohmann::json& j, const BucketConfig& c) {
  j = nlohmann::json{{"n", c.n}, {"m", c.m}};
}
inline void from_json(const nlohmann::json& j, BucketConfig& c) {
  c.n = j.value("n", int64_t{320});
  c.m = j.value("m", int64_t{800});
}

inline void to_json(nlohmann::json& j, const MaskPolicy& p) {
  j = nlohmann::json{{"span", p.span}, {"start_prob", p.start_prob}, {"force_min", p.force_min}};
}
inline void from_json(const nlohmann::json& j, MaskPolicy& p) {
  MaskPolicy d;
  p.span = j.value("span", d.span);
  p.start_prob = j.value("start_prob", d.start_prob);
  p.force_min = j.value("force_min", d.force_min);
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"conv_channels", c.conv_channels},
                     {"d_model", c.d_model},
                     {"heads", c.heads},
                     {"layers", c.layers},
                     {"d_ff", c.d_ff},
                     {"num_codewords", c.num_codewords},
                     {"codeword_dim", c.codeword_dim},
                     {"pos_conv_kernel", c.pos_conv_kernel},
                     {"pos_conv_groups", c.pos_conv_groups},
                     {"bucket", c.bucket},
                     {"pre_layernorm", c.pre_layernorm},
                     {"share_gates", c.share_gates},
                     {"softmax_scale_c", c.softmax_scale_c},
                     {"cosine_tau", c.cosine_tau},
                     {"dropout", c.dropout},
                     {"layerdrop", c.layerdrop}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.conv_channels = j.value("conv_channels", d.conv_channels);
  c.d_model = j.value("d_model", d.d_model);
  c.heads = j.value("heads", d.heads);
  c.layers = j.value("layers", d.layers);
  c.d_ff = j.value("d_ff", d.d_ff);
  c.num_codewords = j.value("num_codewords", d.num_codewords);
  c.codeword_dim = j.value("codeword_dim", d.codeword_dim);
  c.pos_conv_kernel = j.value("pos_conv_kernel", d.pos_conv_kernel);
  c.pos_conv_groups = j.value("pos_conv_groups", d.pos_conv_groups);
  c.bucket = j.value("bucket", d.bucket);
  c.pre_layernorm = j.value("pre_layernorm", d.pre_layernorm);
  c.share_gates = j.value("share_gates", d.share_gates);
  c.softmax_scale_c = j.value("softmax_scale_c", d.softmax_scale_c);
  c.cosine_tau = j.value("cosine_tau", d.cosine_tau);
  c.dropout = j.value("dropout", d.dropout);
  c.layerdrop = j.value("layerdrop", d.layerdrop);
}

}  // namespace babble
