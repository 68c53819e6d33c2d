// babble/objective.hpp
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
#include <vector>

#include "babble/autograd.hpp"
#include "babble/config.hpp"
#include "babble/encoder.hpp"
#include "babble/labeler.hpp"
#include "babble/mfcc.hpp"
#include "babble/mixer.hpp"
#include "babble/rng.hpp"

namespace babble {

constexpr double kCosineEps = 1e-8;

/// The set of masked frame indices for one utterance.
struct MaskSpec {
  std::vector<int64_t> indices;  // ascending, unique, < frames
  int64_t span = 10;
  double start_prob = 0.08;
  uint64_t seed = 0;
};

/// Every frame independently starts a span with probability start_prob;
/// spans are clipped at the sequence end and their union is the mask. With
/// force_min, an empty draw gets one uniformly placed span.
inline MaskSpec sample_masks(int64_t frames, const MaskPolicy& policy, uint64_t seed) {
  if (frames < 1) throw ValueError("sample_masks: need at least one frame");
  policy.validate();
  MaskSpec spec;
  spec.span = policy.span;
  spec.start_prob = policy.start_prob;
  spec.seed = seed;
  Rng rng(seed);
  std::vector<bool> masked(static_cast<size_t>(frames), false);
  for (int64_t t = 0; t < frames; ++t)
    if (rng.bernoulli(policy.start_prob))
      for (int64_t k = t; k < std::min(t + policy.span, frames); ++k)
        masked[static_cast<size_t>(k)] = true;
  bool any = false;
  for (bool b : masked) any = any || b;
  if (!any && policy.force_min) {
    const int64_t start = static_cast<int64_t>(rng.below(static_cast<uint64_t>(frames)));
    for (int64_t k = start; k < std::min(start + policy.span, frames); ++k)
      masked[static_cast<size_t>(k)] = true;
  }
  for (int64_t t = 0; t < frames; ++t)
    if (masked[static_cast<size_t>(t)]) spec.indices.push_back(t);
  return spec;
}

// ---------------------------------------------------------------------------
// Graph ops
// ---------------------------------------------------------------------------

/// Replaces the listed rows with a learned embedding; other rows pass
/// through bit-identically and masked rows contribute no input gradient.
template <typename T>
Var<T> replace_rows(const Var<T>& x, const std::vector<int64_t>& rows, const Var<T>& embedding) {
  detail::require_rank(x.value(), 2, "replace_rows input");
  const int64_t frames = x.value().dim(0), d = x.value().dim(1);
  if (embedding.value().size() != d)
    throw DimensionError("replace_rows: embedding length must equal the feature width");
  for (int64_t r : rows)
    if (r < 0 || r >= frames) throw DimensionError("replace_rows: row index out of range");
  Tensor<T> out = x.value();
  for (int64_t r : rows)
    for (int64_t j = 0; j < d; ++j) out.at(r, j) = embedding.value()[j];
  auto row_list = std::make_shared<std::vector<int64_t>>(rows);
  return make_op<T>(std::move(out), {x, embedding}, [frames, d, row_list](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pe = *self.parents[1];
    detail::ensure_grad(px);
    detail::ensure_grad(pe);
    std::vector<bool> is_masked(static_cast<size_t>(frames), false);
    for (int64_t r : *row_list) is_masked[static_cast<size_t>(r)] = true;
    for (int64_t r = 0; r < frames; ++r) {
      if (is_masked[static_cast<size_t>(r)]) {
        for (int64_t j = 0; j < d; ++j) pe.grad[j] += self.grad[r * d + j];
      } else {
        for (int64_t j = 0; j < d; ++j) px.grad[r * d + j] += self.grad[r * d + j];
      }
    }
  });
}

/// Cosine similarity between every row of x [T, d] and every row of e
/// [C, d]: <x, e> / max(|x| |e|, eps). The guard keeps zero vectors finite
/// and leaves the value exactly scale-invariant away from it.
template <typename T>
Var<T> cosine_table(const Var<T>& x, const Var<T>& e, double eps = kCosineEps) {
  detail::require_rank(x.value(), 2, "cosine_table lhs");
  detail::require_rank(e.value(), 2, "cosine_table rhs");
  if (x.value().dim(1) != e.value().dim(1))
    throw DimensionError("cosine_table: feature widths differ");
  const int64_t rows = x.value().dim(0), codes = e.value().dim(0), d = x.value().dim(1);

  auto xn = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
  auto en = std::make_shared<std::vector<T>>(static_cast<size_t>(codes));
  for (int64_t t = 0; t < rows; ++t) {
    T acc = 0;
    for (int64_t j = 0; j < d; ++j) acc += x.value().at(t, j) * x.value().at(t, j);
    (*xn)[static_cast<size_t>(t)] = std::sqrt(acc);
  }
  for (int64_t c = 0; c < codes; ++c) {
    T acc = 0;
    for (int64_t j = 0; j < d; ++j) acc += e.value().at(c, j) * e.value().at(c, j);
    (*en)[static_cast<size_t>(c)] = std::sqrt(acc);
  }
  Tensor<T> out({rows, codes});
  for (int64_t t = 0; t < rows; ++t)
    for (int64_t c = 0; c < codes; ++c) {
      T dot = 0;
      for (int64_t j = 0; j < d; ++j) dot += x.value().at(t, j) * e.value().at(c, j);
      const T denom = std::max((*xn)[static_cast<size_t>(t)] * (*en)[static_cast<size_t>(c)],
                               static_cast<T>(eps));
      out.at(t, c) = dot / denom;
    }
  return make_op<T>(std::move(out), {x, e}, [rows, codes, d, eps, xn, en](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pe = *self.parents[1];
    detail::ensure_grad(px);
    detail::ensure_grad(pe);
    for (int64_t t = 0; t < rows; ++t) {
      const T nx = (*xn)[static_cast<size_t>(t)];
      for (int64_t c = 0; c < codes; ++c) {
        const T g = self.grad[t * codes + c];
        if (g == T(0)) continue;
        const T ne = (*en)[static_cast<size_t>(c)];
        const T prod = nx * ne;
        const T cosv = self.value[t * codes + c];
        if (prod > static_cast<T>(eps)) {
          for (int64_t j = 0; j < d; ++j) {
            const T xv = px.value[t * d + j];
            const T ev = pe.value[c * d + j];
            px.grad[t * d + j] += g * (ev / prod - cosv * xv / (nx * nx));
            pe.grad[c * d + j] += g * (xv / prod - cosv * ev / (ne * ne));
          }
        } else {
          for (int64_t j = 0; j < d; ++j) {
            px.grad[t * d + j] += g * pe.value[c * d + j] / static_cast<T>(eps);
            pe.grad[c * d + j] += g * px.value[t * d + j] / static_cast<T>(eps);
          }
        }
      }
    }
  });
}

/// Negative log-likelihood of the given labels summed over the masked
/// frames only. Empty masks give exactly zero; unmasked rows receive
/// exactly zero gradient.
template <typename T>
Var<T> masked_nll(const Var<T>& logprobs, const std::vector<int32_t>& labels,
                  const std::vector<int64_t>& mask_indices) {
  detail::require_rank(logprobs.value(), 2, "masked_nll logprobs");
  const int64_t frames = logprobs.value().dim(0), codes = logprobs.value().dim(1);
  if (static_cast<int64_t>(labels.size()) != frames)
    throw DimensionError("masked_nll: label count " + std::to_string(labels.size()) +
                         " does not match " + std::to_string(frames) + " frames");
  for (int64_t t : mask_indices) {
    if (t < 0 || t >= frames) throw DimensionError("masked_nll: mask index out of range");
    const int32_t z = labels[static_cast<size_t>(t)];
    if (z < 0 || z >= codes)
      throw ValueError("masked_nll: label " + std::to_string(z) + " outside [0, " +
                       std::to_string(codes) + ")");
  }
  T acc = 0;
  for (int64_t t : mask_indices) acc -= logprobs.value().at(t, labels[static_cast<size_t>(t)]);
  auto idx = std::make_shared<std::vector<int64_t>>(mask_indices);
  auto lab = std::make_shared<std::vector<int32_t>>(labels);
  return make_op<T>(Tensor<T>::scalar(acc), {logprobs}, [codes, idx, lab](Node<T>& self) {
    auto& p = *self.parents[0];
    detail::ensure_grad(p);
    for (int64_t t : *idx)
      p.grad[t * codes + (*lab)[static_cast<size_t>(t)]] -= self.grad[0];
  });
}

// ---------------------------------------------------------------------------
// Prediction head and loss
// ---------------------------------------------------------------------------

/// Projects final hidden states and scores them against learned codeword
/// embeddings by temperature-scaled cosine similarity.
template <typename T>
class PredictionHead {
 public:
  PredictionHead(ParamStore<T>& store, const ModelConfig& cfg)
      : tau_(cfg.cosine_tau),
        proj_w_(&store.create("objective.head.proj.weight", {cfg.d_model, cfg.codeword_dim})),
        proj_b_(&store.create("objective.head.proj.bias", {cfg.codeword_dim})),
        codewords_(&store.create("objective.head.codewords", {cfg.num_codewords, cfg.codeword_dim})) {}

  /// [T, d_model] -> [T, C] log-probabilities.
  Var<T> log_probs(const Var<T>& hidden) const {
    auto projected = add_rowvec(matmul(hidden, Var<T>::param(*proj_w_)), Var<T>::param(*proj_b_));
    auto logits = affine_const(cosine_table(projected, Var<T>::param(*codewords_)),
                               static_cast<T>(1.0 / tau_), T(0));
    return log_softmax_rows(logits);
  }

  Parameter<T>& codewords() { return *codewords_; }
  Parameter<T>& proj_weight() { return *proj_w_; }

 private:
  double tau_;
  Parameter<T>* proj_w_;
  Parameter<T>* proj_b_;
  Parameter<T>* codewords_;
};

/// Sum of masked negative log-likelihoods over a list of label sets (an
/// ensemble of clusterings; one set in the default configuration).
template <typename T>
Var<T> masked_loss(const Var<T>& logprobs, const std::vector<PseudoLabelSequence>& label_sets,
                   const MaskSpec& mask) {
  if (label_sets.empty()) throw ValueError("masked_loss: need at least one label set");
  Var<T> total;
  for (const auto& set : label_sets) {
    auto term = masked_nll(logprobs, set.labels, mask.indices);
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Step input assembly
// ---------------------------------------------------------------------------

/// Everything one training step consumes: the simulated batch to encode and
/// the clean-audio labels to predict, paired positionally.
struct DenoisingBatch {
  WaveBatch mixed;
  std::vector<MixEvent> events;
  std::vector<PseudoLabelSequence> labels;  // aligned to encoder frames, from CLEAN audio
  std::vector<MaskSpec> masks;
  std::vector<int64_t> label_provenance;  // clean utterance index each label row came from
};

/// Labels are computed from the clean batch, the model input from the mixed
/// batch. Masks are drawn per utterance from (mask_seed, index).
inline DenoisingBatch denoising_step_inputs(const WaveBatch& clean,
                                            const std::vector<Waveform>& noises,
                                            const Codebook& codebook, const MixConfig& mix_cfg,
                                            const MaskPolicy& mask_policy, uint64_t mask_seed) {
  DenoisingBatch out;
  for (size_t i = 0; i < clean.size(); ++i) {
    if (clean[i].size() != clean[0].size())
      throw ValueError("denoising_step_inputs: utterance lengths differ");
    const auto feats = mfcc(clean[i]);
    const int64_t frames = encoder_frame_count(clean[i].size());
    out.labels.push_back(align_to_encoder(assign(codebook, feats.frames), frames));
    out.label_provenance.push_back(static_cast<int64_t>(i));
    out.masks.push_back(sample_masks(frames, mask_policy,
                                     derive_seed(mask_seed, "mask", static_cast<uint64_t>(i))));
  }
  auto [mixed, events] = simulate_batch(clean, noises, mix_cfg);
  out.mixed = std::move(mixed);
  out.events = std::move(events);
  return out;
}

}  // namespace babble
