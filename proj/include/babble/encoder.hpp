// babble/encoder.hpp
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

#include <array>
#include <string>
#include <vector>

#include "babble/autograd.hpp"
#include "babble/config.hpp"
#include "babble/signal.hpp"

namespace babble {

// Seven temporal convolution blocks. Total stride 320 samples (20 ms at
// 16 kHz) with a 400-sample (25 ms) receptive field per output frame.
inline constexpr std::array<int64_t, 7> kEncoderStrides = {5, 2, 2, 2, 2, 2, 2};
inline constexpr std::array<int64_t, 7> kEncoderKernels = {10, 3, 3, 3, 3, 2, 2};
inline constexpr int64_t kEncoderFrameStride = 320;
inline constexpr int64_t kEncoderReceptiveField = 400;
inline constexpr int64_t kEncoderMinSamples = 400;

/// Output frame count from the per-block recurrence T' = (T - k)/s + 1.
inline int64_t encoder_frame_count(int64_t samples) {
  int64_t t = samples;
  for (size_t i = 0; i < kEncoderStrides.size(); ++i) {
    if (t < kEncoderKernels[i])
      throw LengthError("encoder: input of " + std::to_string(samples) +
                        " samples is too short, need at least " +
                        std::to_string(kEncoderMinSamples));
    t = (t - kEncoderKernels[i]) / kEncoderStrides[i] + 1;
  }
  return t;
}

/// Waveform to frame features: seven blocks of unpadded temporal
/// convolution, each followed by per-frame layer normalization over the
/// channels and a GELU.
template <typename T>
class ConvFeatureEncoder {
 public:
  ConvFeatureEncoder(ParamStore<T>& store, const ModelConfig& cfg) : channels_(cfg.conv_channels) {
    for (size_t i = 0; i < kEncoderStrides.size(); ++i) {
      const int64_t in_ch = i == 0 ? 1 : channels_;
      const std::string base = "encoder.block" + std::to_string(i);
      conv_w_.push_back(&store.create(base + ".conv.weight", {channels_, in_ch, kEncoderKernels[i]}));
      ln_gain_.push_back(&store.create(base + ".ln.gain", {channels_}));
      ln_bias_.push_back(&store.create(base + ".ln.bias", {channels_}));
    }
  }

  /// [1, L] -> [T, channels]
  Var<T> forward(const Var<T>& wave) const {
    Var<T> x = wave;
    for (size_t i = 0; i < kEncoderStrides.size(); ++i) {
      x = conv1d(x, Var<T>::param(*conv_w_[i]), kEncoderStrides[i], 1);
      x = transpose(x);  // [frames, channels] for per-frame channel norm
      x = layernorm(x, Var<T>::param(*ln_gain_[i]), Var<T>::param(*ln_bias_[i]));
      x = gelu(x);
      if (i + 1 < kEncoderStrides.size()) x = transpose(x);
    }
    return x;
  }

  int64_t channels() const { return channels_; }

 private:
  int64_t channels_;
  std::vector<Parameter<T>*> conv_w_;
  std::vector<Parameter<T>*> ln_gain_;
  std::vector<Parameter<T>*> ln_bias_;
};

/// Projection to the transformer width plus the grouped-convolution
/// positional embedding (same-length padding, GELU, additive).
template <typename T>
class PositionalFrontend {
 public:
  PositionalFrontend(ParamStore<T>& store, const ModelConfig& cfg)
      : d_model_(cfg.d_model),
        kernel_(cfg.pos_conv_kernel),
        groups_(cfg.pos_conv_groups),
        proj_w_(&store.create("encoder.proj.weight", {cfg.conv_channels, cfg.d_model})),
        proj_b_(&store.create("encoder.proj.bias", {cfg.d_model})),
        pos_w_(&store.create("encoder.pos_conv.weight",
                             {cfg.d_model, cfg.d_model / cfg.pos_conv_groups, cfg.pos_conv_kernel})),
        pos_b_(&store.create("encoder.pos_conv.bias", {cfg.d_model})) {}

  /// [T, channels] -> [T, d_model]
  Var<T> forward(const Var<T>& feats) const {
    auto projected = add_rowvec(matmul(feats, Var<T>::param(*proj_w_)), Var<T>::param(*proj_b_));
    const int64_t frames = projected.value().dim(0);
    auto x = transpose(projected);  // [d_model, T]
    x = pad_cols(x, kernel_ / 2, kernel_ / 2);
    x = conv1d(x, Var<T>::param(*pos_w_), Var<T>::param(*pos_b_), 1, groups_);
    if (kernel_ % 2 == 0) x = slice_cols(x, 0, frames);  // even kernel: drop trailing frame
    x = gelu(x);
    return add(projected, transpose(x));
  }

  /// Positional component alone, for locality and shift tests.
  Var<T> positional_only(const Var<T>& feats) const {
    auto projected = add_rowvec(matmul(feats, Var<T>::param(*proj_w_)), Var<T>::param(*proj_b_));
    const int64_t frames = projected.value().dim(0);
    auto x = transpose(projected);
    x = pad_cols(x, kernel_ / 2, kernel_ / 2);
    x = conv1d(x, Var<T>::param(*pos_w_), Var<T>::param(*pos_b_), 1, groups_);
    if (kernel_ % 2 == 0) x = slice_cols(x, 0, frames);
    x = gelu(x);
    return transpose(x);
  }

 private:
  int64_t d_model_;
  int64_t kernel_;
  int64_t groups_;
  Parameter<T>* proj_w_;
  Parameter<T>* proj_b_;
  Parameter<T>* pos_w_;
  Parameter<T>* pos_b_;
};

/// Waveform as a [1, L] graph constant.
template <typename T>
Var<T> waveform_input(const Waveform& w) {
  Tensor<T> t({1, w.size()});
  for (int64_t i = 0; i < w.size(); ++i) t[i] = static_cast<T>(w.samples[static_cast<size_t>(i)]);
  return Var<T>::constant(std::move(t));
}

}  // namespace babble
