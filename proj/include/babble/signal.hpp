// babble/signal.hpp
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

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "babble/common.hpp"
#include "babble/rng.hpp"

namespace babble {

constexpr int kSampleRate = 16000;

/// Mono waveform at the fixed 16 kHz project rate. Samples are nominally in
/// [-1, 1]; mixing may push them outside, and only WAV export clamps.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  int64_t size() const { return static_cast<int64_t>(samples.size()); }
};

using WaveBatch = std::vector<Waveform>;

/// Mean of squares over the full utterance.
inline double energy(const Waveform& w) {
  if (w.samples.empty()) throw ValueError("energy: empty waveform");
  double acc = 0;
  for (double s : w.samples) acc += s * s;
  return acc / static_cast<double>(w.samples.size());
}

// ---------------------------------------------------------------------------
// WAV I/O: RIFF, PCM 16-bit little-endian, mono, 16 kHz.
// ---------------------------------------------------------------------------

namespace detail {

inline uint32_t read_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

inline uint16_t read_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

inline void put_u32(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

inline void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

}  // namespace detail

inline Waveform read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("read_wav: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw FormatError("read_wav: riff_header: not a RIFF/WAVE file: " + path);

  bool have_fmt = false;
  Waveform w;
  size_t pos = 12;
  std::vector<unsigned char> data;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const uint32_t size = detail::read_u32(bytes.data() + pos + 4);
    pos += 8;
    if (pos + size > bytes.size()) throw FormatError("read_wav: chunk_size: truncated chunk in " + path);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (size < 16) throw FormatError("read_wav: fmt_chunk: too short");
      const uint16_t audio_format = detail::read_u16(bytes.data() + pos);
      const uint16_t channels = detail::read_u16(bytes.data() + pos + 2);
      const uint32_t rate = detail::read_u32(bytes.data() + pos + 4);
      const uint16_t bits = detail::read_u16(bytes.data() + pos + 14);
      if (audio_format != 1)
        throw FormatError("read_wav: audio_format: expected PCM (1), got " +
                          std::to_string(audio_format));
      if (channels != 1)
        throw FormatError("read_wav: channels: expected mono (1), got " + std::to_string(channels));
      if (rate != kSampleRate)
        throw FormatError("read_wav: sample_rate: expected 16000, got " + std::to_string(rate));
      if (bits != 16)
        throw FormatError("read_wav: bits_per_sample: expected 16, got " + std::to_string(bits));
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data.assign(bytes.begin() + static_cast<long>(pos), bytes.begin() + static_cast<long>(pos + size));
    }
    pos += size + (size & 1);  // chunks are word aligned
  }
  if (!have_fmt) throw FormatError("read_wav: fmt_chunk: missing");
  if (data.size() % 2 != 0) throw FormatError("read_wav: data_chunk: odd byte count");
  w.samples.resize(data.size() / 2);
  for (size_t i = 0; i < w.samples.size(); ++i) {
    const int16_t v = static_cast<int16_t>(data[2 * i] | (data[2 * i + 1] << 8));
    w.samples[i] = static_cast<double>(v) / 32768.0;
  }
  return w;
}

/// Writes 16-bit PCM; samples outside [-1, 1] are clamped. Returns the number
/// of clamped samples so callers can warn.
inline int64_t write_wav(const std::string& path, const Waveform& w) {
  std::string out;
  out.reserve(44 + w.samples.size() * 2);
  const uint32_t data_bytes = static_cast<uint32_t>(w.samples.size() * 2);
  out += "RIFF";
  detail::put_u32(out, 36 + data_bytes);
  out += "WAVE";
  out += "fmt ";
  detail::put_u32(out, 16);
  detail::put_u16(out, 1);  // PCM
  detail::put_u16(out, 1);  // mono
  detail::put_u32(out, kSampleRate);
  detail::put_u32(out, kSampleRate * 2);
  detail::put_u16(out, 2);
  detail::put_u16(out, 16);
  out += "data";
  detail::put_u32(out, data_bytes);

  int64_t clamped = 0;
  for (double s : w.samples) {
    double q = std::floor(s * 32768.0 + 0.5);
    if (q > 32767.0) {
      q = 32767.0;
      ++clamped;
    } else if (q < -32768.0) {
      q = -32768.0;
      ++clamped;
    }
    detail::put_u16(out, static_cast<uint16_t>(static_cast<int16_t>(q)));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("write_wav: cannot open " + path);
  f.write(out.data(), static_cast<long>(out.size()));
  return clamped;
}

// ---------------------------------------------------------------------------
// FFT (iterative radix-2), internal helper for synthesis and MFCC.
// ---------------------------------------------------------------------------

namespace detail {

inline void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
  const size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw ValueError("fft: length must be a power of two");
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * 3.141592653589793238462643 / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse)
    for (auto& x : a) x /= static_cast<double>(n);
}

inline size_t next_pow2(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Synthetic audio
// ---------------------------------------------------------------------------

enum class SynthKind { kSine, kWhiteNoise, kPinkNoise, kChirp };

struct SynthParams {
  double frequency_hz = 440.0;  // sine
  double chirp_start_hz = 100.0;
  double chirp_end_hz = 4000.0;
  double amplitude = 0.5;
};

/// Deterministic signal generator; identical (kind, seconds, seed, params)
/// always produce the identical sample sequence. Peak is at most 1.
inline Waveform synth(SynthKind kind, double seconds, uint64_t seed, SynthParams params = {}) {
  if (seconds <= 0) throw ValueError("synth: seconds must be positive");
  if (params.amplitude <= 0 || params.amplitude > 1.0)
    throw ValueError("synth: amplitude must be in (0, 1]");
  const int64_t n = static_cast<int64_t>(std::llround(seconds * kSampleRate));
  Waveform w;
  w.samples.resize(static_cast<size_t>(n));
  Rng rng(derive_seed(seed, "synth", static_cast<uint64_t>(kind)));
  constexpr double two_pi = 6.283185307179586476925287;

  switch (kind) {
    case SynthKind::kSine:
      for (int64_t i = 0; i < n; ++i)
        w.samples[static_cast<size_t>(i)] =
            params.amplitude * std::sin(two_pi * params.frequency_hz * static_cast<double>(i) / kSampleRate);
      break;
    case SynthKind::kWhiteNoise:
      for (int64_t i = 0; i < n; ++i)
        w.samples[static_cast<size_t>(i)] = rng.uniform(-params.amplitude, params.amplitude);
      break;
    case SynthKind::kChirp: {
      const double rate = (params.chirp_end_hz - params.chirp_start_hz) / (2.0 * seconds);
      for (int64_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / kSampleRate;
        w.samples[static_cast<size_t>(i)] =
            params.amplitude * std::sin(two_pi * (params.chirp_start_hz * t + rate * t * t));
      }
      break;
    }
    case SynthKind::kPinkNoise: {
      // Spectral synthesis: amplitude 1/sqrt(f) with random phases gives a
      // power density proportional to 1/f, i.e. -3 dB per octave.
      const size_t nfft = detail::next_pow2(static_cast<size_t>(n));
      std::vector<std::complex<double>> spec(nfft, {0.0, 0.0});
      for (size_t k = 1; k <= nfft / 2; ++k) {
        const double f = static_cast<double>(k) * kSampleRate / static_cast<double>(nfft);
        const double amp = 1.0 / std::sqrt(f);
        const double phase = rng.uniform(0.0, two_pi);
        if (k == nfft / 2) {
          spec[k] = {amp * std::cos(phase), 0.0};
        } else {
          spec[k] = std::polar(amp, phase);
          spec[nfft - k] = std::conj(spec[k]);
        }
      }
      detail::fft_inplace(spec, true);
      double peak = 0;
      for (int64_t i = 0; i < n; ++i) peak = std::max(peak, std::abs(spec[static_cast<size_t>(i)].real()));
      const double scale = peak > 0 ? params.amplitude / peak : 0.0;
      for (int64_t i = 0; i < n; ++i)
        w.samples[static_cast<size_t>(i)] = scale * spec[static_cast<size_t>(i)].real();
      break;
    }
  }
  return w;
}

}  // namespace babble
