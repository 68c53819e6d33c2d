// babble/model.hpp
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

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "babble/autograd.hpp"
#include "babble/config.hpp"
#include "babble/encoder.hpp"
#include "babble/objective.hpp"
#include "babble/transformer.hpp"

namespace babble {

namespace detail {

inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace detail

/// The complete network: convolutional encoder, projection and positional
/// frontend, gated-bias transformer, mask embedding, and prediction head.
/// Instantiate with float for training and double for gradient checks.
template <typename T>
class Model {
 public:
  explicit Model(ModelConfig cfg, uint64_t init_seed = 1)
      : cfg_(validated(std::move(cfg))),
        encoder_(store_, cfg_),
        frontend_(store_, cfg_),
        mask_emb_(&store_.create("objective.mask_emb", {cfg_.d_model})),
        transformer_(store_, cfg_),
        head_(store_, cfg_) {
    initialize(init_seed);
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  ConvFeatureEncoder<T>& encoder() { return encoder_; }
  PositionalFrontend<T>& frontend() { return frontend_; }
  GatedTransformer<T>& transformer() { return transformer_; }
  PredictionHead<T>& head() { return head_; }
  Parameter<T>& mask_embedding() { return *mask_emb_; }

  /// Features before masking: conv encoder then projection + positional
  /// embedding. [1, L] waveform to [T, d_model].
  Var<T> frontend_features(const Waveform& wave) const {
    return frontend_.forward(encoder_.forward(waveform_input<T>(wave)));
  }

  /// Full masked-prediction path: log-probabilities [T, C] for one
  /// utterance with the given mask applied to the transformer input.
  Var<T> masked_log_probs(const Waveform& wave, const MaskSpec& mask,
                          Rng* train_rng = nullptr) const {
    auto x = frontend_features(wave);
    x = replace_rows(x, mask.indices, Var<T>::param(*mask_emb_));
    TransformerForwardOptions<T> opts;
    opts.train_rng = train_rng;
    auto hidden = transformer_.forward(x, opts);
    return head_.log_probs(hidden);
  }

  /// Per-layer transformer outputs for one unmasked utterance; feeds the
  /// experimental hidden-state re-clustering pass.
  std::vector<Tensor<T>> hidden_states(const Waveform& wave) const {
    auto x = frontend_features(wave);
    std::vector<Tensor<T>> layer_outputs;
    TransformerForwardOptions<T> opts;
    opts.layer_outputs = &layer_outputs;
    (void)transformer_.forward(x, opts);
    return layer_outputs;
  }

 private:
  static ModelConfig validated(ModelConfig cfg) {
    cfg.validate();
    return cfg;
  }

  void initialize(uint64_t seed) {
    Rng rng(derive_seed(seed, "init"));
    for (const auto& p : store_.all()) {
      const std::string& name = p->name;
      Tensor<T>& v = p->value;
      if (detail::ends_with(name, "ln.gain") || detail::ends_with(name, "gate.w_scalar")) {
        for (int64_t i = 0; i < v.size(); ++i) v[i] = T(1);
      } else if (detail::ends_with(name, "bias_table") || detail::ends_with(name, "bias") ||
                 detail::ends_with(name, "ln.bias")) {
        // zeros
      } else if (detail::ends_with(name, "conv.weight")) {
        const double fan_in = static_cast<double>(v.shape()[1] * v.shape()[2]);
        const double scale = 1.0 / std::sqrt(fan_in);
        for (int64_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(scale * rng.gaussian());
      } else if (detail::ends_with(name, "mask_emb")) {
        for (int64_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(0.1 * rng.gaussian());
      } else if (v.rank() == 2) {
        // Linear weights are [d_in, d_out]; row-vector tables scale by width.
        int64_t fan = v.shape()[0];
        if (detail::ends_with(name, "codewords") || detail::ends_with(name, "gate.u") ||
            detail::ends_with(name, "gate.w_vec"))
          fan = v.shape()[1];
        const double scale = 1.0 / std::sqrt(static_cast<double>(fan));
        for (int64_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(scale * rng.gaussian());
      } else {
        const double scale = 1.0 / std::sqrt(static_cast<double>(v.size()));
        for (int64_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(scale * rng.gaussian());
      }
    }
  }

  ModelConfig cfg_;
  ParamStore<T> store_;
  ConvFeatureEncoder<T> encoder_;
  PositionalFrontend<T> frontend_;
  Parameter<T>* mask_emb_;
  GatedTransformer<T> transformer_;
  PredictionHead<T> head_;
};

/// Parameter names and shapes without allocating any storage; keeps the
/// base-geometry size check cheap. A unit test pins this list against a real
/// model instance.
inline std::vector<std::pair<std::string, Shape>> model_param_shapes(const ModelConfig& cfg) {
  cfg.validate();
  std::vector<std::pair<std::string, Shape>> out;
  for (size_t i = 0; i < kEncoderStrides.size(); ++i) {
    const int64_t in_ch = i == 0 ? 1 : cfg.conv_channels;
    const std::string base = "encoder.block" + std::to_string(i);
    out.push_back({base + ".conv.weight", {cfg.conv_channels, in_ch, kEncoderKernels[i]}});
    out.push_back({base + ".ln.gain", {cfg.conv_channels}});
    out.push_back({base + ".ln.bias", {cfg.conv_channels}});
  }
  out.push_back({"encoder.proj.weight", {cfg.conv_channels, cfg.d_model}});
  out.push_back({"encoder.proj.bias", {cfg.d_model}});
  out.push_back({"encoder.pos_conv.weight",
                 {cfg.d_model, cfg.d_model / cfg.pos_conv_groups, cfg.pos_conv_kernel}});
  out.push_back({"encoder.pos_conv.bias", {cfg.d_model}});
  out.push_back({"objective.mask_emb", {cfg.d_model}});
  out.push_back({"transformer.shared.bias_table", {cfg.heads, cfg.bucket.n}});
  if (cfg.share_gates) {
    out.push_back({"transformer.shared.gate.u", {cfg.heads, cfg.d_k()}});
    out.push_back({"transformer.shared.gate.w_vec", {cfg.heads, cfg.d_k()}});
    out.push_back({"transformer.shared.gate.w_scalar", {cfg.heads}});
  }
  for (int64_t i = 0; i < cfg.layers; ++i) {
    const std::string base = "transformer.layer" + std::to_string(i);
    for (const char* proj : {"q", "k", "v", "out"}) {
      out.push_back({base + ".attn." + proj + ".weight", {cfg.d_model, cfg.d_model}});
      out.push_back({base + ".attn." + proj + ".bias", {cfg.d_model}});
    }
    out.push_back({base + ".attn.ln.gain", {cfg.d_model}});
    out.push_back({base + ".attn.ln.bias", {cfg.d_model}});
    out.push_back({base + ".ff.w1.weight", {cfg.d_model, cfg.d_ff}});
    out.push_back({base + ".ff.w1.bias", {cfg.d_ff}});
    out.push_back({base + ".ff.w2.weight", {cfg.d_ff, cfg.d_model}});
    out.push_back({base + ".ff.w2.bias", {cfg.d_model}});
    out.push_back({base + ".ff.ln.gain", {cfg.d_model}});
    out.push_back({base + ".ff.ln.bias", {cfg.d_model}});
    if (!cfg.share_gates) {
      out.push_back({base + ".gate.u", {cfg.heads, cfg.d_k()}});
      out.push_back({base + ".gate.w_vec", {cfg.heads, cfg.d_k()}});
      out.push_back({base + ".gate.w_scalar", {cfg.heads}});
    }
  }
  out.push_back({"objective.head.proj.weight", {cfg.d_model, cfg.codeword_dim}});
  out.push_back({"objective.head.proj.bias", {cfg.codeword_dim}});
  out.push_back({"objective.head.codewords", {cfg.num_codewords, cfg.codeword_dim}});
  return out;
}

inline int64_t model_parameter_count(const ModelConfig& cfg) {
  int64_t total = 0;
  for (const auto& [name, shape] : model_param_shapes(cfg)) total += shape_numel(shape);
  return total;
}

}  // namespace babble
