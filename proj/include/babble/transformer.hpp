// babble/transformer.hpp
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

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "babble/autograd.hpp"
#include "babble/config.hpp"
#include "babble/rng.hpp"

namespace babble {

/// Maps a key-query offset i-j to one of n embedding slots: identity below
/// n/4, logarithmic up to m, then saturated; positive offsets use the upper
/// half of the table.
inline int64_t bucket_index(int64_t offset, const BucketConfig& cfg) {
  const int64_t quarter = cfg.n / 4;
  const int64_t mag = offset < 0 ? -offset : offset;
  int64_t d;
  if (mag < quarter) {
    d = mag;
  } else if (mag < cfg.m) {
    const double ratio = (std::log(static_cast<double>(mag)) - std::log(static_cast<double>(quarter))) /
                         (std::log(static_cast<double>(cfg.m)) - std::log(static_cast<double>(quarter)));
    d = static_cast<int64_t>(std::floor(static_cast<double>(quarter) * (ratio + 1.0)));
  } else {
    d = cfg.n / 2 - 1;
  }
  if (offset > 0) d += cfg.n / 2;
  return d;
}

/// Offset-to-bucket table for a sequence length, shared by every layer and
/// head of one forward pass.
inline std::shared_ptr<const std::vector<int32_t>> bucket_map(int64_t frames,
                                                              const BucketConfig& cfg) {
  auto map = std::make_shared<std::vector<int32_t>>(static_cast<size_t>(frames * frames));
  for (int64_t i = 0; i < frames; ++i)
    for (int64_t j = 0; j < frames; ++j)
      (*map)[static_cast<size_t>(i * frames + j)] = static_cast<int32_t>(bucket_index(i - j, cfg));
  return map;
}

/// Scalar reference for the gated bias: given one query vector and the raw
/// parameters of a head, evaluates the printed update/reset-gate equations.
inline double gated_bias(const std::vector<double>& q, int64_t offset,
                         const std::vector<double>& bias_table_row, const std::vector<double>& u,
                         const std::vector<double>& w_vec, double w_scalar,
                         const BucketConfig& cfg) {
  double qu = 0, qw = 0;
  for (size_t i = 0; i < q.size(); ++i) {
    qu += q[i] * u[i];
    qw += q[i] * w_vec[i];
  }
  const double g_update = 1.0 / (1.0 + std::exp(-qu));
  const double g_reset = 1.0 / (1.0 + std::exp(-qw));
  const double d = bias_table_row[static_cast<size_t>(bucket_index(offset, cfg))];
  const double r_tilde = w_scalar * g_reset * d;
  return d + g_update * d + (1.0 - g_update) * r_tilde;
}

/// Records whether any observed value would leave the fp16 range; used to
/// contrast the translated softmax path with the naive one.
struct Fp16RangeMonitor {
  double limit = 65504.0;
  bool flagged = false;
  double worst_magnitude = 0.0;
  int64_t observations = 0;

  void observe(double x) {
    ++observations;
    const double mag = std::abs(x);
    worst_magnitude = std::max(worst_magnitude, mag);
    if (!std::isfinite(x) || mag > limit) flagged = true;
  }
};

/// Row-wise attention weights in the translated form: given s = (q.k)/(c
/// sqrt(d)) and the additive bias r, computes softmax over
/// c*(s - rowmax(s)) + r. Every exponent argument before the bias term is
/// at most zero; the monitor, when present, sees exactly those arguments.
template <typename T>
Tensor<T> attention_weights_stable(const Tensor<T>& scores_over_c, const Tensor<T>& bias,
                                   double c, Fp16RangeMonitor* monitor = nullptr) {
  if (!scores_over_c.same_shape(bias))
    throw DimensionError("attention_weights_stable: scores/bias shape mismatch");
  detail::require_rank(scores_over_c, 2, "attention_weights_stable scores");
  const int64_t rows = scores_over_c.dim(0), cols = scores_over_c.dim(1);
  Tensor<T> out(scores_over_c.shape());
  for (int64_t i = 0; i < rows; ++i) {
    const T* s = scores_over_c.data() + i * cols;
    const T* r = bias.data() + i * cols;
    T* o = out.data() + i * cols;
    T mx = s[0];
    for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, s[j]);
    T sum = 0;
    for (int64_t j = 0; j < cols; ++j) {
      const T pre_bias = (s[j] - mx) * static_cast<T>(c);
      if (monitor) monitor->observe(static_cast<double>(pre_bias));
      o[j] = std::exp(pre_bias + r[j]);
      sum += o[j];
    }
    for (int64_t j = 0; j < cols; ++j) o[j] /= sum;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Graph ops specific to gated-bias attention
// ---------------------------------------------------------------------------

/// Softmax over c*(scores - rowmax) + bias, differentiable in both inputs.
template <typename T>
Var<T> attention_softmax(const Var<T>& scores_over_c, const Var<T>& bias, double c) {
  Tensor<T> out = attention_weights_stable(scores_over_c.value(), bias.value(), c);
  const int64_t rows = out.dim(0), cols = out.dim(1);
  return make_op<T>(std::move(out), {scores_over_c, bias}, [rows, cols, c](Node<T>& self) {
    auto& ps = *self.parents[0];
    auto& pb = *self.parents[1];
    detail::ensure_grad(ps);
    detail::ensure_grad(pb);
    for (int64_t i = 0; i < rows; ++i) {
      const T* a = self.value.data() + i * cols;
      const T* g = self.grad.data() + i * cols;
      T dot = 0;
      for (int64_t j = 0; j < cols; ++j) dot += a[j] * g[j];
      for (int64_t j = 0; j < cols; ++j) {
        const T dlogit = a[j] * (g[j] - dot);
        ps.grad[i * cols + j] += static_cast<T>(c) * dlogit;
        pb.grad[i * cols + j] += dlogit;
      }
    }
  });
}

/// Expands one head's row of the shared bias table into a [T, T] matrix via
/// a precomputed offset-to-bucket map.
template <typename T>
Var<T> bias_lookup(const Var<T>& table, int64_t head, int64_t frames,
                   std::shared_ptr<const std::vector<int32_t>> map) {
  const int64_t n = table.value().dim(1);
  Tensor<T> out({frames, frames});
  for (int64_t i = 0; i < frames * frames; ++i)
    out[i] = table.value().at(head, (*map)[static_cast<size_t>(i)]);
  return make_op<T>(std::move(out), {table}, [head, frames, n, map](Node<T>& self) {
    auto& p = *self.parents[0];
    detail::ensure_grad(p);
    for (int64_t i = 0; i < frames * frames; ++i)
      p.grad[head * n + (*map)[static_cast<size_t>(i)]] += self.grad[i];
  });
}

/// Scales row i of a [T, T] matrix by m[i].
template <typename T>
Var<T> row_scale(const Var<T>& x, const Var<T>& m) {
  detail::require_rank(x.value(), 2, "row_scale input");
  const int64_t rows = x.value().dim(0), cols = x.value().dim(1);
  if (m.value().size() != rows) throw DimensionError("row_scale: row multiplier length mismatch");
  Tensor<T> out(x.value().shape());
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j) out.at(i, j) = x.value().at(i, j) * m.value()[i];
  return make_op<T>(std::move(out), {x, m}, [rows, cols](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pm = *self.parents[1];
    detail::ensure_grad(px);
    detail::ensure_grad(pm);
    for (int64_t i = 0; i < rows; ++i) {
      T acc = 0;
      for (int64_t j = 0; j < cols; ++j) {
        px.grad[i * cols + j] += self.grad[i * cols + j] * pm.value[i];
        acc += self.grad[i * cols + j] * px.value[i * cols + j];
      }
      pm.grad[i] += acc;
    }
  });
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

template <typename T>
struct TransformerLayerParams {
  Parameter<T>*q_w, *q_b, *k_w, *k_b, *v_w, *v_b, *out_w, *out_b;
  Parameter<T>*attn_ln_g, *attn_ln_b;
  Parameter<T>*ff_w1, *ff_b1, *ff_w2, *ff_b2;
  Parameter<T>*ff_ln_g, *ff_ln_b;
  Parameter<T>*gate_u, *gate_w_vec, *gate_w_scalar;  // [heads, d_k], [heads, d_k], [heads]
};

template <typename T>
struct TransformerForwardOptions {
  std::vector<Tensor<T>>* layer_outputs = nullptr;  // copy of each layer's output
  Rng* train_rng = nullptr;                         // enables dropout / layerdrop
};

/// Transformer encoder stack with gated relative position bias. The bucket
/// bias table is one shared parameter; gate parameters are per layer unless
/// the config shares them.
template <typename T>
class GatedTransformer {
 public:
  GatedTransformer(ParamStore<T>& store, const ModelConfig& cfg) : cfg_(cfg) {
    bias_table_ = &store.create("transformer.shared.bias_table", {cfg.heads, cfg.bucket.n});
    Parameter<T>*shared_u = nullptr, *shared_w = nullptr, *shared_s = nullptr;
    if (cfg.share_gates) {
      shared_u = &store.create("transformer.shared.gate.u", {cfg.heads, cfg.d_k()});
      shared_w = &store.create("transformer.shared.gate.w_vec", {cfg.heads, cfg.d_k()});
      shared_s = &store.create("transformer.shared.gate.w_scalar", {cfg.heads});
    }
    for (int64_t i = 0; i < cfg.layers; ++i) {
      const std::string base = "transformer.layer" + std::to_string(i);
      TransformerLayerParams<T> lp{};
      lp.q_w = &store.create(base + ".attn.q.weight", {cfg.d_model, cfg.d_model});
      lp.q_b = &store.create(base + ".attn.q.bias", {cfg.d_model});
      lp.k_w = &store.create(base + ".attn.k.weight", {cfg.d_model, cfg.d_model});
      lp.k_b = &store.create(base + ".attn.k.bias", {cfg.d_model});
      lp.v_w = &store.create(base + ".attn.v.weight", {cfg.d_model, cfg.d_model});
      lp.v_b = &store.create(base + ".attn.v.bias", {cfg.d_model});
      lp.out_w = &store.create(base + ".attn.out.weight", {cfg.d_model, cfg.d_model});
      lp.out_b = &store.create(base + ".attn.out.bias", {cfg.d_model});
      lp.attn_ln_g = &store.create(base + ".attn.ln.gain", {cfg.d_model});
      lp.attn_ln_b = &store.create(base + ".attn.ln.bias", {cfg.d_model});
      lp.ff_w1 = &store.create(base + ".ff.w1.weight", {cfg.d_model, cfg.d_ff});
      lp.ff_b1 = &store.create(base + ".ff.w1.bias", {cfg.d_ff});
      lp.ff_w2 = &store.create(base + ".ff.w2.weight", {cfg.d_ff, cfg.d_model});
      lp.ff_b2 = &store.create(base + ".ff.w2.bias", {cfg.d_model});
      lp.ff_ln_g = &store.create(base + ".ff.ln.gain", {cfg.d_model});
      lp.ff_ln_b = &store.create(base + ".ff.ln.bias", {cfg.d_model});
      if (cfg.share_gates) {
        lp.gate_u = shared_u;
        lp.gate_w_vec = shared_w;
        lp.gate_w_scalar = shared_s;
      } else {
        lp.gate_u = &store.create(base + ".gate.u", {cfg.heads, cfg.d_k()});
        lp.gate_w_vec = &store.create(base + ".gate.w_vec", {cfg.heads, cfg.d_k()});
        lp.gate_w_scalar = &store.create(base + ".gate.w_scalar", {cfg.heads});
      }
      layers_.push_back(lp);
    }
  }

  /// Gated-bias multi-head attention for one layer. Exposed so tests can
  /// drive a single attention block directly.
  Var<T> attention(const Var<T>& x, int64_t layer,
                   std::shared_ptr<const std::vector<int32_t>> map) const {
    const auto& lp = layers_[static_cast<size_t>(layer)];
    const int64_t frames = x.value().dim(0);
    const int64_t dk = cfg_.d_k();
    const double inv = 1.0 / (cfg_.softmax_scale_c * std::sqrt(static_cast<double>(dk)));

    auto q = add_rowvec(matmul(x, Var<T>::param(*lp.q_w)), Var<T>::param(*lp.q_b));
    auto k = add_rowvec(matmul(x, Var<T>::param(*lp.k_w)), Var<T>::param(*lp.k_b));
    auto v = add_rowvec(matmul(x, Var<T>::param(*lp.v_w)), Var<T>::param(*lp.v_b));
    auto table = Var<T>::param(*bias_table_);
    auto gate_u = Var<T>::param(*lp.gate_u);
    auto gate_w = Var<T>::param(*lp.gate_w_vec);
    auto gate_s = Var<T>::param(*lp.gate_w_scalar);

    std::vector<Var<T>> heads;
    heads.reserve(static_cast<size_t>(cfg_.heads));
    for (int64_t h = 0; h < cfg_.heads; ++h) {
      auto qh = slice_cols(q, h * dk, dk);
      auto kh = slice_cols(k, h * dk, dk);
      auto vh = slice_cols(v, h * dk, dk);
      auto scores_over_c = affine_const(matmul(qh, transpose(kh)), static_cast<T>(inv), T(0));

      // r_ij = d_ij * (1 + g_update_i + (1 - g_update_i) * w g_reset_i)
      auto g_update = sigmoid(matvec(qh, row_of(gate_u, h)));
      auto g_reset = sigmoid(matvec(qh, row_of(gate_w, h)));
      auto reset_term = mul(affine_const(g_update, T(-1), T(1)),
                            scale_by(g_reset, element(gate_s, h)));
      auto multiplier = add(affine_const(g_update, T(1), T(1)), reset_term);
      auto d_table = bias_lookup(table, h, frames, map);
      auto bias = row_scale(d_table, multiplier);

      auto weights = attention_softmax(scores_over_c, bias, cfg_.softmax_scale_c);
      heads.push_back(matmul(weights, vh));
    }
    auto concat = concat_cols(heads);
    return add_rowvec(matmul(concat, Var<T>::param(*lp.out_w)), Var<T>::param(*lp.out_b));
  }

  Var<T> layer_forward(const Var<T>& input, int64_t layer,
                       std::shared_ptr<const std::vector<int32_t>> map,
                       Rng* train_rng = nullptr) const {
    const auto& lp = layers_[static_cast<size_t>(layer)];
    auto x = input;
    if (cfg_.pre_layernorm) {
      auto h = attention(layernorm(x, Var<T>::param(*lp.attn_ln_g), Var<T>::param(*lp.attn_ln_b)),
                         layer, map);
      x = add(x, maybe_dropout(h, train_rng));
      auto f = feed_forward(layernorm(x, Var<T>::param(*lp.ff_ln_g), Var<T>::param(*lp.ff_ln_b)), layer);
      x = add(x, maybe_dropout(f, train_rng));
    } else {
      auto h = maybe_dropout(attention(x, layer, map), train_rng);
      x = layernorm(add(x, h), Var<T>::param(*lp.attn_ln_g), Var<T>::param(*lp.attn_ln_b));
      auto f = maybe_dropout(feed_forward(x, layer), train_rng);
      x = layernorm(add(x, f), Var<T>::param(*lp.ff_ln_g), Var<T>::param(*lp.ff_ln_b));
    }
    return x;
  }

  /// Full stack. Layer outputs can be captured for the experimental
  /// hidden-state re-clustering pass.
  Var<T> forward(const Var<T>& input, const TransformerForwardOptions<T>& opts = {}) const {
    const int64_t frames = input.value().dim(0);
    auto map = bucket_map(frames, cfg_.bucket);
    Var<T> x = input;
    for (int64_t layer = 0; layer < cfg_.layers; ++layer) {
      if (opts.train_rng && cfg_.layerdrop > 0 && opts.train_rng->bernoulli(cfg_.layerdrop)) {
        if (opts.layer_outputs) opts.layer_outputs->push_back(x.value());
        continue;
      }
      x = layer_forward(x, layer, map, opts.train_rng);
      if (opts.layer_outputs) opts.layer_outputs->push_back(x.value());
    }
    return x;
  }

  const ModelConfig& config() const { return cfg_; }
  Parameter<T>& bias_table() { return *bias_table_; }
  const TransformerLayerParams<T>& layer_params(int64_t i) const {
    return layers_[static_cast<size_t>(i)];
  }

 private:
  Var<T> feed_forward(const Var<T>& x, int64_t layer) const {
    const auto& lp = layers_[static_cast<size_t>(layer)];
    auto h = gelu(add_rowvec(matmul(x, Var<T>::param(*lp.ff_w1)), Var<T>::param(*lp.ff_b1)));
    return add_rowvec(matmul(h, Var<T>::param(*lp.ff_w2)), Var<T>::param(*lp.ff_b2));
  }

  Var<T> maybe_dropout(const Var<T>& x, Rng* rng) const {
    if (!rng || cfg_.dropout <= 0) return x;
    Tensor<T> mask(x.value().shape());
    const T keep = static_cast<T>(1.0 - cfg_.dropout);
    for (int64_t i = 0; i < mask.size(); ++i)
      mask[i] = rng->bernoulli(cfg_.dropout) ? T(0) : T(1) / keep;
    return mul(x, Var<T>::constant(std::move(mask)));
  }

  ModelConfig cfg_;
  Parameter<T>* bias_table_;
  std::vector<TransformerLayerParams<T>> layers_;
};

}  // namespace babble
