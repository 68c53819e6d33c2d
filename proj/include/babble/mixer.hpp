// babble/mixer.hpp
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
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "babble/common.hpp"
#include "babble/rng.hpp"
#include "babble/signal.hpp"

namespace babble {

/// Knobs of the overlapped/noisy utterance simulation.
struct MixConfig {
  double p = 0.2;          // probability that an utterance gets mixed
  double p_n = 0.0;        // probability that the secondary source is noise
  double utterance_ratio_db[2] = {-5.0, 5.0};
  double noise_ratio_db[2] = {-5.0, 20.0};
  uint64_t seed = 0;

  void validate() const {
    if (p < 0 || p > 1) throw ValueError("MixConfig: p must lie in [0, 1]");
    if (p_n < 0 || p_n > 1) throw ValueError("MixConfig: p_n must lie in [0, 1]");
    if (utterance_ratio_db[0] > utterance_ratio_db[1] || noise_ratio_db[0] > noise_ratio_db[1])
      throw ValueError("MixConfig: ratio ranges must be ordered lo <= hi");
  }
};

/// Full audit record of one mixing event. Offsets s_pri and s_sec are
/// 1-based, as sampled; noise_crop_offset is the 0-based crop start used to
/// shorten a noise clip to the utterance length (0 when tiled or not noise).
struct MixEvent {
  int64_t primary_index = 0;
  bool secondary_is_noise = false;
  int64_t secondary_index = 0;
  double r_db = 0;
  int64_t l = 0;
  int64_t s_pri = 0;
  int64_t s_sec = 0;
  double scale = 0;
  int64_t noise_crop_offset = 0;
  double e_pri = 0;
  double e_sec = 0;
};

/// scl = sqrt(E_pri / (10^(r/10) * E_sec)).
inline double mixing_scale(double e_pri, double e_sec, double r_db) {
  if (e_pri <= 0 || e_sec <= 0)
    throw ValueError("mixing_scale: nonpositive energy, a silent source cannot be scaled");
  return std::sqrt(e_pri / (std::pow(10.0, r_db / 10.0) * e_sec));
}

namespace detail {

/// Length-L view of a noise clip: shorter clips are tiled, longer ones
/// cropped at the given offset.
inline std::vector<double> fit_noise_to_length(const Waveform& noise, int64_t len,
                                               int64_t crop_offset) {
  std::vector<double> out(static_cast<size_t>(len));
  const int64_t n = noise.size();
  if (n >= len) {
    for (int64_t i = 0; i < len; ++i)
      out[static_cast<size_t>(i)] = noise.samples[static_cast<size_t>(crop_offset + i)];
  } else {
    for (int64_t i = 0; i < len; ++i)
      out[static_cast<size_t>(i)] = noise.samples[static_cast<size_t>(i % n)];
  }
  return out;
}

}  // namespace detail

/// Reconstructs the length-L secondary signal an event used, for audit
/// checks. Utterance secondaries are read from the clean batch.
inline std::vector<double> secondary_signal(const MixEvent& ev, const WaveBatch& clean_batch,
                                            const std::vector<Waveform>& noises, int64_t len) {
  if (ev.secondary_is_noise)
    return detail::fit_noise_to_length(noises[static_cast<size_t>(ev.secondary_index)], len,
                                       ev.noise_crop_offset);
  return clean_batch[static_cast<size_t>(ev.secondary_index)].samples;
}

/// Noisy/overlapped speech simulation over a batch of equal-length
/// utterances. The caller's batch is never modified; secondary utterances are
/// always read from that clean input, so per-utterance results depend only on
/// (seed, index) and mixing may be reordered or parallelized freely.
///
/// Per selected utterance, draws happen in this order: branch value v,
/// secondary index, noise crop offset (noise branch, long clips only),
/// energy ratio r, mix length l, s_pri, s_sec.
inline std::pair<WaveBatch, std::vector<MixEvent>> simulate_batch(
    const WaveBatch& batch, const std::vector<Waveform>& noises, const MixConfig& cfg) {
  cfg.validate();
  if (batch.empty()) return {WaveBatch{}, {}};
  const int64_t len = batch[0].size();
  if (len < 2) throw ValueError("simulate_batch: utterances must have at least 2 samples");
  for (const auto& u : batch)
    if (u.size() != len)
      throw ValueError("simulate_batch: all utterances must share one length, got " +
                       std::to_string(u.size()) + " vs " + std::to_string(len));
  if (cfg.p_n > 0 && noises.empty())
    throw ValueError("simulate_batch: p_n > 0 requires a nonempty noise set");

  WaveBatch mixed = batch;
  std::vector<MixEvent> events;
  const int64_t half = len / 2;

  for (size_t i = 0; i < batch.size(); ++i) {
    Rng rng(derive_seed(cfg.seed, "mix", static_cast<uint64_t>(i)));
    if (!rng.bernoulli(cfg.p)) continue;

    MixEvent ev;
    ev.primary_index = static_cast<int64_t>(i);
    const double v = rng.uniform();
    std::vector<double> sec_storage;
    const double* sec = nullptr;
    if (v > cfg.p_n) {
      ev.secondary_is_noise = false;
      ev.secondary_index = static_cast<int64_t>(rng.below(batch.size()));
      ev.r_db = rng.uniform(cfg.utterance_ratio_db[0], cfg.utterance_ratio_db[1]);
      sec = batch[static_cast<size_t>(ev.secondary_index)].samples.data();
    } else {
      ev.secondary_is_noise = true;
      ev.secondary_index = static_cast<int64_t>(rng.below(noises.size()));
      const Waveform& clip = noises[static_cast<size_t>(ev.secondary_index)];
      if (clip.size() == 0) throw ValueError("simulate_batch: empty noise clip");
      if (clip.size() > len)
        ev.noise_crop_offset = static_cast<int64_t>(rng.below(static_cast<uint64_t>(clip.size() - len + 1)));
      ev.r_db = rng.uniform(cfg.noise_ratio_db[0], cfg.noise_ratio_db[1]);
      sec_storage = detail::fit_noise_to_length(clip, len, ev.noise_crop_offset);
      sec = sec_storage.data();
    }

    ev.l = 1 + static_cast<int64_t>(rng.below(static_cast<uint64_t>(half)));
    ev.s_pri = 1 + static_cast<int64_t>(rng.below(static_cast<uint64_t>(len - ev.l)));
    ev.s_sec = 1 + static_cast<int64_t>(rng.below(static_cast<uint64_t>(len - ev.l)));

    // Energies over the full signals, as the procedure prescribes, even
    // though only a region is mixed.
    ev.e_pri = energy(batch[i]);
    double e_sec = 0;
    for (int64_t j = 0; j < len; ++j) e_sec += sec[j] * sec[j];
    ev.e_sec = e_sec / static_cast<double>(len);
    ev.scale = mixing_scale(ev.e_pri, ev.e_sec, ev.r_db);

    double* dst = mixed[i].samples.data() + (ev.s_pri - 1);
    const double* src = sec + (ev.s_sec - 1);
    for (int64_t j = 0; j < ev.l; ++j) dst[j] += ev.scale * src[j];
    events.push_back(ev);
  }
  return {std::move(mixed), std::move(events)};
}

// ---------------------------------------------------------------------------
// Event serialization
// ---------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const MixEvent& ev) {
  j = nlohmann::json{
      {"primary_index", ev.primary_index},
      {"secondary_source",
       {{"type", ev.secondary_is_noise ? "noise" : "utterance"}, {"index", ev.secondary_index}}},
      {"r_db", ev.r_db},
      {"l", ev.l},
      {"s_pri", ev.s_pri},
      {"s_sec", ev.s_sec},
      {"scale", ev.scale},
      {"noise_crop_offset", ev.noise_crop_offset},
      {"e_pri", ev.e_pri},
      {"e_sec", ev.e_sec}};
}

inline void from_json(const nlohmann::json& j, MixEvent& ev) {
  j.at("primary_index").get_to(ev.primary_index);
  ev.secondary_is_noise = j.at("secondary_source").at("type").get<std::string>() == "noise";
  j.at("secondary_source").at("index").get_to(ev.secondary_index);
  j.at("r_db").get_to(ev.r_db);
  j.at("l").get_to(ev.l);
  j.at("s_pri").get_to(ev.s_pri);
  j.at("s_sec").get_to(ev.s_sec);
  j.at("scale").get_to(ev.scale);
  ev.noise_crop_offset = j.value("noise_crop_offset", int64_t{0});
  ev.e_pri = j.value("e_pri", 0.0);
  ev.e_sec = j.value("e_sec", 0.0);
}

}  // namespace babble
