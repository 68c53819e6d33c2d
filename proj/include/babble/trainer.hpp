// babble/trainer.hpp
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
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "babble/model.hpp"
#include "babble/objective.hpp"
#include "babble/trainer_config.hpp"

namespace babble {

/// Adam with decoupled weight decay. Moment state is kept in double so the
/// update arithmetic does not depend on the training precision.
template <typename T>
class Adam {
 public:
  Adam(ParamStore<T>& store, OptimizerConfig cfg) : store_(&store), cfg_(cfg) {
    for (const auto& p : store.all()) {
      m_.emplace_back(static_cast<size_t>(p->value.size()), 0.0);
      v_.emplace_back(static_cast<size_t>(p->value.size()), 0.0);
    }
  }

  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    size_t idx = 0;
    for (const auto& p : store_->all()) {
      auto& m = m_[idx];
      auto& v = v_[idx];
      ++idx;
      for (int64_t i = 0; i < p->value.size(); ++i) {
        const double g = static_cast<double>(p->grad[i]);
        m[static_cast<size_t>(i)] = cfg_.beta1 * m[static_cast<size_t>(i)] + (1.0 - cfg_.beta1) * g;
        v[static_cast<size_t>(i)] =
            cfg_.beta2 * v[static_cast<size_t>(i)] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = m[static_cast<size_t>(i)] / bc1;
        const double vhat = v[static_cast<size_t>(i)] / bc2;
        const double value = static_cast<double>(p->value[i]);
        p->value[i] = static_cast<T>(
            value - lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * value));
      }
    }
  }

  int64_t steps_taken() const { return t_; }

 private:
  ParamStore<T>* store_;
  OptimizerConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  int64_t t_ = 0;
};

/// Linear warmup to the peak, then linear decay. 1-based step index.
inline double lr_at(const TrainConfig& cfg, int64_t step) {
  if (step <= cfg.warmup_steps)
    return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  const int64_t decay_span = std::max<int64_t>(1, cfg.steps - cfg.warmup_steps);
  return cfg.peak_lr * static_cast<double>(cfg.steps - step + 1) / static_cast<double>(decay_span);
}

struct StepRecord {
  int64_t step = 0;
  double loss = 0;
  double grad_norm = 0;
  double lr = 0;
  double mean_masked_frames = 0;  // diagnostics, not serialized to CSV
};

inline void write_loss_csv(const std::string& path, const std::vector<StepRecord>& records) {
  std::ofstream f(path);
  if (!f) throw FormatError("write_loss_csv: cannot open " + path);
  f << "step,loss,grad_norm,lr\n";
  f.precision(17);
  for (const auto& r : records)
    f << r.step << ',' << r.loss << ',' << r.grad_norm << ',' << r.lr << '\n';
}

/// Deterministic synthetic corpus for the toy run: a spread of tones,
/// chirps and noise utterances plus a small noise set for the mixer.
struct ToyData {
  WaveBatch utterances;
  std::vector<Waveform> noises;
};

inline ToyData make_toy_dataset(const TrainConfig& cfg) {
  ToyData data;
  for (int64_t i = 0; i < cfg.data.utterances; ++i) {
    SynthParams params;
    params.amplitude = 0.45 + 0.02 * static_cast<double>(i % 5);
    SynthKind kind;
    switch (i % 4) {
      case 0:
        kind = SynthKind::kSine;
        params.frequency_hz = 180.0 + 90.0 * static_cast<double>(i);
        break;
      case 1:
        kind = SynthKind::kChirp;
        params.chirp_start_hz = 80.0 + 40.0 * static_cast<double>(i);
        params.chirp_end_hz = 1500.0 + 120.0 * static_cast<double>(i);
        break;
      case 2:
        kind = SynthKind::kWhiteNoise;
        break;
      default:
        kind = SynthKind::kPinkNoise;
        break;
    }
    data.utterances.push_back(
        synth(kind, cfg.data.seconds, derive_seed(cfg.seed, "data", static_cast<uint64_t>(i)), params));
  }
  for (int64_t j = 0; j < cfg.data.noises; ++j) {
    SynthParams params;
    params.amplitude = 0.5;
    const auto kind = (j % 2) ? SynthKind::kPinkNoise : SynthKind::kWhiteNoise;
    // Vary the clip lengths so both tiling and cropping occur.
    const double seconds = cfg.data.seconds * (0.5 + 0.45 * static_cast<double>(j % 3));
    data.noises.push_back(
        synth(kind, seconds, derive_seed(cfg.seed, "noise", static_cast<uint64_t>(j)), params));
  }
  return data;
}

/// Owns the model, optimizer, data and fixed clean-audio labels for the
/// micro pre-training loop. Every step is a pure function of (config, step
/// index), which is what makes checkpoint resumption and replay exact.
template <typename T>
class Trainer {
 public:
  explicit Trainer(TrainConfig cfg)
      : cfg_(validated(std::move(cfg))),
        model_(cfg_.model, cfg_.seed),
        opt_(model_.params(), cfg_.optim) {
    auto data = make_toy_dataset(cfg_);
    clean_ = std::move(data.utterances);
    noises_ = std::move(data.noises);

    // Iteration-1 pseudo-labels: k-means on the MFCCs of the clean corpus.
    int64_t total_frames = 0;
    std::vector<Tensor<double>> feats;
    for (const auto& w : clean_) {
      feats.push_back(mfcc(w).frames);
      total_frames += feats.back().dim(0);
    }
    Tensor<double> stacked({total_frames, kMfccDim});
    int64_t row = 0;
    for (const auto& f : feats) {
      for (int64_t r = 0; r < f.dim(0); ++r)
        for (int64_t j = 0; j < kMfccDim; ++j) stacked.at(row + r, j) = f.at(r, j);
      row += f.dim(0);
    }
    codebook_ = kmeans_fit(stacked, cfg_.model.num_codewords, cfg_.kmeans_iters,
                           derive_seed(cfg_.seed, "kmeans"));
    for (size_t i = 0; i < clean_.size(); ++i) {
      const int64_t frames = encoder_frame_count(clean_[i].size());
      labels_.push_back(align_to_encoder(assign(codebook_, feats[i]), frames));
    }
  }

  /// Runs one optimization step: simulate, mask, predict, backpropagate,
  /// Adam update. Aborts with the batch seed on a non-finite loss.
  StepRecord pretrain_step() {
    const int64_t step = next_step_++;
    const uint64_t mix_seed = derive_seed(cfg_.seed, "mixstep", static_cast<uint64_t>(step));

    std::vector<size_t> batch_idx = select_batch(step);
    WaveBatch batch;
    for (size_t i : batch_idx) batch.push_back(clean_[i]);

    MixConfig mix = cfg_.mix;
    mix.seed = mix_seed;
    auto [mixed, events] = simulate_batch(batch, noises_, mix);

    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double loss_total = 0;
    int64_t masked_total = 0;
    for (size_t k = 0; k < mixed.size(); ++k) {
      const size_t i = batch_idx[k];
      const int64_t frames = encoder_frame_count(mixed[k].size());
      const auto mask = sample_masks(
          frames, cfg_.mask,
          derive_seed(cfg_.seed, "mask", static_cast<uint64_t>(step), static_cast<uint64_t>(i)));
      auto logp = model_.masked_log_probs(mixed[k], mask);
      auto loss = masked_loss(logp, {labels_[i]}, mask);
      const double value = static_cast<double>(loss.value()[0]);
      if (!std::isfinite(value))
        throw TrainingAborted("non-finite loss at step " + std::to_string(step) +
                                  " (batch seed " + std::to_string(mix_seed) + ")",
                              mix_seed, step);
      loss_total += value * inv_b;
      masked_total += static_cast<int64_t>(mask.indices.size());
      backward(affine_const(loss, static_cast<T>(inv_b), T(0)));
    }

    StepRecord rec;
    rec.step = step;
    rec.loss = loss_total;
    rec.grad_norm = grad_norm();
    rec.lr = lr_at(cfg_, step);
    rec.mean_masked_frames = static_cast<double>(masked_total) / static_cast<double>(batch.size());
    opt_.step(rec.lr);
    model_.params().zero_grad();
    return rec;
  }

  std::vector<StepRecord> run(int64_t steps) {
    std::vector<StepRecord> records;
    records.reserve(static_cast<size_t>(steps));
    for (int64_t s = 0; s < steps; ++s) records.push_back(pretrain_step());
    return records;
  }

  double grad_norm() const {
    double acc = 0;
    for (const auto& p : model_.params().all())
      for (int64_t i = 0; i < p->grad.size(); ++i) {
        const double g = static_cast<double>(p->grad[i]);
        acc += g * g;
      }
    return std::sqrt(acc);
  }

  const TrainConfig& config() const { return cfg_; }
  Model<T>& model() { return model_; }
  const WaveBatch& clean_utterances() const { return clean_; }
  const std::vector<Waveform>& noises() const { return noises_; }
  const Codebook& codebook() const { return codebook_; }
  const std::vector<PseudoLabelSequence>& labels() const { return labels_; }
  int64_t next_step() const { return next_step_; }

 private:
  static TrainConfig validated(TrainConfig cfg) {
    cfg.validate();
    return cfg;
  }

  std::vector<size_t> select_batch(int64_t step) {
    const size_t n = clean_.size();
    const size_t b = std::min<size_t>(static_cast<size_t>(cfg_.batch_size), n);
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    if (b == n) return idx;
    Rng rng(derive_seed(cfg_.seed, "batch", static_cast<uint64_t>(step)));
    for (size_t i = 0; i < b; ++i) {
      const size_t j = i + static_cast<size_t>(rng.below(n - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(b);
    return idx;
  }

  TrainConfig cfg_;
  Model<T> model_;
  Adam<T> opt_;
  WaveBatch clean_;
  std::vector<Waveform> noises_;
  Codebook codebook_;
  std::vector<PseudoLabelSequence> labels_;
  int64_t next_step_ = 1;
};

}  // namespace babble
