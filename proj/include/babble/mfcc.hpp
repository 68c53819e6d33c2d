// babble/mfcc.hpp
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
#include <vector>

#include "babble/signal.hpp"
#include "babble/tensor.hpp"

namespace babble {

// 13 cepstra (coefficient 0 replaced by log frame energy) plus deltas and
// delta-deltas over +-2 frames. Recipe constants:
//   pre-emphasis 0.97, 25 ms Hamming window, 10 ms hop, 512-point DFT,
//   26 mel filters spanning 0..8000 Hz, orthonormal DCT-II, log floor 1e-10.
constexpr int kMfccDim = 39;
constexpr int kMfccWindowSamples = 400;
constexpr int kMfccHopSamples = 160;
constexpr int kMfccNfft = 512;
constexpr int kMfccNumMel = 26;
constexpr int kMfccNumCeps = 13;
constexpr double kMfccPreemph = 0.97;
constexpr double kMfccLogFloor = 1e-10;

struct MfccFrames {
  Tensor<double> frames;  // [T, 39]
  double hop_seconds = 0.010;
  double window_seconds = 0.025;

  int64_t count() const { return frames.empty() ? 0 : frames.dim(0); }
};

inline int64_t mfcc_frame_count(int64_t n_samples) {
  if (n_samples < kMfccWindowSamples)
    throw LengthError("mfcc: need at least " + std::to_string(kMfccWindowSamples) +
                      " samples, got " + std::to_string(n_samples));
  return (n_samples - kMfccWindowSamples) / kMfccHopSamples + 1;
}

namespace detail {

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

/// Triangular mel filter weights evaluated at the DFT bin frequencies.
/// [kMfccNumMel][kMfccNfft/2 + 1]
inline const std::vector<std::vector<double>>& mel_filterbank() {
  static const std::vector<std::vector<double>> bank = [] {
    const int bins = kMfccNfft / 2 + 1;
    const double mel_hi = hz_to_mel(kSampleRate / 2.0);
    std::vector<double> centers(kMfccNumMel + 2);
    for (int j = 0; j < kMfccNumMel + 2; ++j)
      centers[static_cast<size_t>(j)] = mel_hi * j / (kMfccNumMel + 1);
    std::vector<std::vector<double>> b(kMfccNumMel, std::vector<double>(static_cast<size_t>(bins), 0.0));
    for (int i = 0; i < kMfccNumMel; ++i) {
      const double lo = centers[static_cast<size_t>(i)];
      const double mid = centers[static_cast<size_t>(i + 1)];
      const double hi = centers[static_cast<size_t>(i + 2)];
      for (int k = 0; k < bins; ++k) {
        const double mel = hz_to_mel(static_cast<double>(k) * kSampleRate / kMfccNfft);
        if (mel > lo && mel < mid)
          b[static_cast<size_t>(i)][static_cast<size_t>(k)] = (mel - lo) / (mid - lo);
        else if (mel >= mid && mel < hi)
          b[static_cast<size_t>(i)][static_cast<size_t>(k)] = (hi - mel) / (hi - mid);
      }
    }
    return b;
  }();
  return bank;
}

}  // namespace detail

/// MFCC features for pseudo-labeling, 100 frames per second.
inline MfccFrames mfcc(const Waveform& w) {
  const int64_t n = w.size();
  const int64_t frames = mfcc_frame_count(n);

  // Global pre-emphasis; the first sample passes through unchanged.
  std::vector<double> pre(static_cast<size_t>(n));
  pre[0] = w.samples[0];
  for (int64_t i = 1; i < n; ++i)
    pre[static_cast<size_t>(i)] =
        w.samples[static_cast<size_t>(i)] - kMfccPreemph * w.samples[static_cast<size_t>(i - 1)];

  std::vector<double> window(kMfccWindowSamples);
  for (int i = 0; i < kMfccWindowSamples; ++i)
    window[static_cast<size_t>(i)] =
        0.54 - 0.46 * std::cos(6.283185307179586 * i / (kMfccWindowSamples - 1));

  const auto& bank = detail::mel_filterbank();
  Tensor<double> cep({frames, kMfccNumCeps});
  std::vector<std::complex<double>> buf(kMfccNfft);

  for (int64_t t = 0; t < frames; ++t) {
    const double* frame = pre.data() + t * kMfccHopSamples;
    double frame_energy = 0;
    for (int i = 0; i < kMfccWindowSamples; ++i) frame_energy += frame[i] * frame[i];
    const double log_energy = std::log(std::max(frame_energy, kMfccLogFloor));

    for (int i = 0; i < kMfccNfft; ++i)
      buf[static_cast<size_t>(i)] =
          i < kMfccWindowSamples ? frame[i] * window[static_cast<size_t>(i)] : 0.0;
    detail::fft_inplace(buf, false);

    double logmel[kMfccNumMel];
    for (int m = 0; m < kMfccNumMel; ++m) {
      double acc = 0;
      for (int k = 0; k <= kMfccNfft / 2; ++k)
        acc += bank[static_cast<size_t>(m)][static_cast<size_t>(k)] *
               std::norm(buf[static_cast<size_t>(k)]);
      logmel[m] = std::log(std::max(acc, kMfccLogFloor));
    }

    // Orthonormal DCT-II, truncated to kMfccNumCeps.
    for (int j = 0; j < kMfccNumCeps; ++j) {
      double acc = 0;
      for (int m = 0; m < kMfccNumMel; ++m)
        acc += logmel[m] * std::cos(3.141592653589793 * j * (2 * m + 1) / (2.0 * kMfccNumMel));
      const double scale = std::sqrt(2.0 / kMfccNumMel) * (j == 0 ? std::sqrt(0.5) : 1.0);
      cep.at(t, j) = scale * acc;
    }
    cep.at(t, 0) = log_energy;
  }

  // Delta regression over +-2 frames with edge clamping.
  MfccFrames out;
  out.frames = Tensor<double>({frames, kMfccDim});
  auto clamp_t = [frames](int64_t t) { return std::min(std::max(t, int64_t{0}), frames - 1); };
  for (int64_t t = 0; t < frames; ++t)
    for (int j = 0; j < kMfccNumCeps; ++j) out.frames.at(t, j) = cep.at(t, j);
  for (int pass = 0; pass < 2; ++pass) {
    const int src = pass * kMfccNumCeps;
    for (int64_t t = 0; t < frames; ++t)
      for (int j = 0; j < kMfccNumCeps; ++j) {
        double acc = 0;
        for (int d = 1; d <= 2; ++d)
          acc += d * (out.frames.at(clamp_t(t + d), src + j) -
                      out.frames.at(clamp_t(t - d), src + j));
        out.frames.at(t, src + kMfccNumCeps + j) = acc / 10.0;  // 2 * (1^2 + 2^2)
      }
  }
  return out;
}

}  // namespace babble
