// tests/test_mixer.cpp
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

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "babble/mixer.hpp"

using babble::MixConfig;
using babble::MixEvent;
using babble::WaveBatch;
using babble::Waveform;

namespace {

WaveBatch make_batch(size_t count, int64_t len, uint64_t seed) {
  WaveBatch batch(count);
  for (size_t i = 0; i < count; ++i) {
    auto kind = (i % 2) ? babble::SynthKind::kWhiteNoise : babble::SynthKind::kPinkNoise;
    auto w = babble::synth(kind, 1.0, seed + i);
    w.samples.resize(static_cast<size_t>(len));
    batch[i] = std::move(w);
  }
  return batch;
}

std::vector<Waveform> make_noises(int64_t len, uint64_t seed) {
  // One clip shorter than the batch length (tiled) and one longer (cropped).
  std::vector<Waveform> noises(2);
  noises[0] = babble::synth(babble::SynthKind::kWhiteNoise, 1.0, seed);
  noises[0].samples.resize(static_cast<size_t>(len / 3 + 7));
  noises[1] = babble::synth(babble::SynthKind::kPinkNoise, 1.0, seed + 1);
  noises[1].samples.resize(static_cast<size_t>(len + len / 2));
  return noises;
}

}  // namespace

TEST_CASE("mixing scale literal cases", "[mixer]") {
  REQUIRE(babble::mixing_scale(1.0, 1.0, 0.0) == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(babble::mixing_scale(1.0, 1.0, 10.0) == Catch::Approx(0.316228).margin(1e-6));
  REQUIRE(babble::mixing_scale(0.5, 2.0, -5.0) == Catch::Approx(0.889140).margin(1e-6));
  REQUIRE_THROWS_AS(babble::mixing_scale(0.0, 1.0, 0.0), babble::ValueError);
  REQUIRE_THROWS_AS(babble::mixing_scale(1.0, 0.0, 0.0), babble::ValueError);
}

TEST_CASE("p = 0 returns the batch bit-exactly with no events", "[mixer]") {
  auto batch = make_batch(6, 500, 100);
  MixConfig cfg;
  cfg.p = 0.0;
  cfg.seed = 1;
  auto [mixed, events] = babble::simulate_batch(batch, {}, cfg);
  REQUIRE(events.empty());
  REQUIRE(mixed.size() == batch.size());
  for (size_t i = 0; i < batch.size(); ++i) REQUIRE(mixed[i].samples == batch[i].samples);
}

TEST_CASE("p = 1 with p_n = 1 gives exactly one noise event per utterance", "[mixer]") {
  auto batch = make_batch(8, 600, 200);
  auto noises = make_noises(600, 300);
  MixConfig cfg;
  cfg.p = 1.0;
  cfg.p_n = 1.0;
  cfg.seed = 2;
  auto [mixed, events] = babble::simulate_batch(batch, noises, cfg);
  REQUIRE(events.size() == batch.size());
  for (size_t i = 0; i < events.size(); ++i) {
    REQUIRE(events[i].primary_index == static_cast<int64_t>(i));
    REQUIRE(events[i].secondary_is_noise);
  }
}

TEST_CASE("every event satisfies the energy-ratio identity", "[mixer]") {
  auto batch = make_batch(16, 800, 400);
  auto noises = make_noises(800, 500);
  MixConfig cfg;
  cfg.p = 1.0;
  cfg.p_n = 0.4;
  cfg.seed = 3;
  auto [mixed, events] = babble::simulate_batch(batch, noises, cfg);
  REQUIRE_FALSE(events.empty());
  for (const auto& ev : events) {
    // Recompute both energies from the event record and the clean inputs.
    const double e_pri = babble::energy(batch[static_cast<size_t>(ev.primary_index)]);
    auto sec = babble::secondary_signal(ev, batch, noises, 800);
    double e_sec = 0;
    for (double s : sec) e_sec += s * s;
    e_sec /= static_cast<double>(sec.size());
    const double r_back = 10.0 * std::log10(e_pri / (ev.scale * ev.scale * e_sec));
    REQUIRE(std::abs(r_back - ev.r_db) < 1e-9);
  }
}

TEST_CASE("event fields respect their documented ranges", "[mixer]") {
  const int64_t len = 801;  // odd: l must stay within floor(L/2)
  auto batch = make_batch(12, len, 600);
  auto noises = make_noises(len, 700);
  MixConfig cfg;
  cfg.p = 1.0;
  cfg.p_n = 0.5;
  cfg.seed = 4;
  auto [mixed, events] = babble::simulate_batch(batch, noises, cfg);
  for (const auto& ev : events) {
    REQUIRE(ev.l >= 1);
    REQUIRE(ev.l <= len / 2);
    REQUIRE(ev.s_pri >= 1);
    REQUIRE(ev.s_pri <= len - ev.l);
    REQUIRE(ev.s_sec >= 1);
    REQUIRE(ev.s_sec <= len - ev.l);
    REQUIRE(ev.scale > 0);
  }
}

TEST_CASE("the caller's clean batch is retained untouched", "[mixer]") {
  auto batch = make_batch(5, 640, 800);
  const auto snapshot = batch;
  auto noises = make_noises(640, 900);
  MixConfig cfg;
  cfg.p = 1.0;
  cfg.p_n = 0.3;
  cfg.seed = 5;
  auto [mixed, events] = babble::simulate_batch(batch, noises, cfg);
  for (size_t i = 0; i < batch.size(); ++i) REQUIRE(batch[i].samples == snapshot[i].samples);
}

TEST_CASE("mixing changes exactly the sampled region", "[mixer]") {
  // Constant secondaries make the in-region difference provably nonzero at
  // every sample.
  WaveBatch batch(4);
  for (auto& w : batch) w.samples.assign(500, 0.3);
  std::vector<Waveform> noises(1);
  noises[0].samples.assign(500, 0.5);
  MixConfig cfg;
  cfg.p = 1.0;
  cfg.p_n = 1.0;
  cfg.seed = 6;
  auto [mixed, events] = babble::simulate_batch(batch, noises, cfg);
  REQUIRE(events.size() == batch.size());
  for (const auto& ev : events) {
    const auto& clean = batch[static_cast<size_t>(ev.primary_index)].samples;
    const auto& out = mixed[static_cast<size_t>(ev.primary_index)].samples;
    for (int64_t j = 0; j < 500; ++j) {
      const bool in_region = j >= ev.s_pri - 1 && j < ev.s_pri - 1 + ev.l;
      if (in_region)
        REQUIRE(out[static_cast<size_t>(j)] != clean[static_cast<size_t>(j)]);
      else
        REQUIRE(out[static_cast<size_t>(j)] == clean[static_cast<size_t>(j)]);
    }
  }
}

TEST_CASE("modified fraction tracks p within binomial 3 sigma", "[mixer]") {
  const double p = 0.2;
  const int total = 10000;
  int modified = 0;
  auto batch = make_batch(100, 400, 1000);
  for (int rep = 0; rep < total / 100; ++rep) {
    MixConfig cfg;
    cfg.p = p;
    cfg.seed = 5000 + static_cast<uint64_t>(rep);
    auto [mixed, events] = babble::simulate_batch(batch, {}, cfg);
    modified += static_cast<int>(events.size());
  }
  const double fraction = static_cast<double>(modified) / total;
  REQUIRE(fraction == Catch::Approx(p).margin(0.012));  // 3 * sqrt(p(1-p)/n)
}

TEST_CASE("noise branch fraction tracks p_n within binomial 3 sigma", "[mixer]") {
  const double pn = 0.3;
  auto batch = make_batch(100, 400, 2000);
  auto noises = make_noises(400, 2100);
  int noise_events = 0, total_events = 0;
  for (int rep = 0; rep < 100; ++rep) {
    MixConfig cfg;
    cfg.p = 1.0;
    cfg.p_n = pn;
    cfg.seed = 7000 + static_cast<uint64_t>(rep);
    auto [mixed, events] = babble::simulate_batch(batch, noises, cfg);
    for (const auto& ev : events) noise_events += ev.secondary_is_noise ? 1 : 0;
    total_events += static_cast<int>(events.size());
  }
  const double sigma = std::sqrt(pn * (1 - pn) / total_events);
  REQUIRE(static_cast<double>(noise_events) / total_events ==
          Catch::Approx(pn).margin(3 * sigma));
}

TEST_CASE("simulation is deterministic in the config seed", "[mixer]") {
  auto batch = make_batch(10, 512, 3000);
  auto noises = make_noises(512, 3100);
  MixConfig cfg;
  cfg.p = 0.7;
  cfg.p_n = 0.5;
  cfg.seed = 8;
  auto [m1, e1] = babble::simulate_batch(batch, noises, cfg);
  auto [m2, e2] = babble::simulate_batch(batch, noises, cfg);
  REQUIRE(e1.size() == e2.size());
  for (size_t i = 0; i < m1.size(); ++i) REQUIRE(m1[i].samples == m2[i].samples);
  for (size_t i = 0; i < e1.size(); ++i) {
    REQUIRE(e1[i].r_db == e2[i].r_db);
    REQUIRE(e1[i].l == e2[i].l);
    REQUIRE(e1[i].s_pri == e2[i].s_pri);
    REQUIRE(e1[i].s_sec == e2[i].s_sec);
    REQUIRE(e1[i].scale == e2[i].scale);
  }
}

TEST_CASE("argument validation", "[mixer]") {
  auto batch = make_batch(3, 300, 4000);
  batch[1].samples.resize(299);
  MixConfig cfg;
  cfg.p = 1.0;
  REQUIRE_THROWS_AS(babble::simulate_batch(batch, {}, cfg), babble::ValueError);

  auto ok = make_batch(3, 300, 4100);
  MixConfig bad;
  bad.p = 1.0;
  bad.p_n = 0.5;
  REQUIRE_THROWS_AS(babble::simulate_batch(ok, {}, bad), babble::ValueError);

  MixConfig badp;
  badp.p = 1.5;
  REQUIRE_THROWS_AS(babble::simulate_batch(ok, {}, badp), babble::ValueError);
}

TEST_CASE("events serialize to JSON and back", "[mixer]") {
  auto batch = make_batch(6, 400, 5000);
  auto noises = make_noises(400, 5100);
  MixConfig cfg;
  cfg.p = 1.0;
  cfg.p_n = 0.5;
  cfg.seed = 9;
  auto [mixed, events] = babble::simulate_batch(batch, noises, cfg);
  nlohmann::json j = events;
  auto round = j.get<std::vector<MixEvent>>();
  REQUIRE(round.size() == events.size());
  for (size_t i = 0; i < events.size(); ++i) {
    REQUIRE(round[i].primary_index == events[i].primary_index);
    REQUIRE(round[i].secondary_is_noise == events[i].secondary_is_noise);
    REQUIRE(round[i].secondary_index == events[i].secondary_index);
    REQUIRE(round[i].r_db == events[i].r_db);
    REQUIRE(round[i].l == events[i].l);
    REQUIRE(round[i].s_pri == events[i].s_pri);
    REQUIRE(round[i].s_sec == events[i].s_sec);
    REQUIRE(round[i].scale == events[i].scale);
  }
}
