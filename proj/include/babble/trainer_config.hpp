// babble/trainer_config.hpp
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

#include "babble/config.hpp"
#include "babble/mixer.hpp"

namespace babble {

struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-6;
  double weight_decay = 0.01;
};

struct DataConfig {
  int64_t utterances = 16;
  double seconds = 1.0;
  int64_t noises = 4;
};

/// Full description of a pre-training run. The published full-scale values
/// (400k steps, peak 5e-4, 32k warmup for the base setup) are recorded in
/// the README; these defaults are the desk-scale toy schedule.
struct TrainConfig {
  ModelConfig model = ModelConfig::toy();
  int64_t steps = 200;
  int64_t warmup_steps = 20;
  double peak_lr = 5e-3;
  int64_t batch_size = 16;
  uint64_t seed = 1;
  MixConfig mix = toy_mix();
  MaskPolicy mask = toy_mask();
  OptimizerConfig optim;
  int64_t kmeans_iters = 25;
  DataConfig data;

  static MixConfig toy_mix() {
    MixConfig m;
    m.p = 0.2;
    m.p_n = 0.1;
    return m;
  }

  static MaskPolicy toy_mask() {
    MaskPolicy p;
    p.force_min = true;
    return p;
  }

  void validate() const {
    model.validate();
    mix.validate();
    mask.validate();
    if (warmup_steps > steps) throw ValueError("TrainConfig: warmup_steps must not exceed steps");
    if (warmup_steps < 1) throw ValueError("TrainConfig: warmup_steps must be >= 1");
    if (peak_lr < 0) throw ValueError("TrainConfig: peak_lr must be non-negative");
    if (batch_size < 1) throw ValueError("TrainConfig: batch_size must be >= 1");
    if (data.utterances < 1) throw ValueError("TrainConfig: need at least one utterance");
    if (data.seconds * kSampleRate < kEncoderMinSamples)
      throw ValueError("TrainConfig: utterances shorter than one encoder frame");
  }
};

inline void to_json(nlohmann::json& j, const OptimizerConfig& c) {
  j = nlohmann::json{
      {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}, {"weight_decay", c.weight_decay}};
}
inline void from_json(const nlohmann::json& j, OptimizerConfig& c) {
  OptimizerConfig d;
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.eps = j.value("eps", d.eps);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
}

inline void to_json(nlohmann::json& j, const DataConfig& c) {
  j = nlohmann::json{{"utterances", c.utterances}, {"seconds", c.seconds}, {"noises", c.noises}};
}
inline void from_json(const nlohmann::json& j, DataConfig& c) {
  DataConfig d;
  c.utterances = j.value("utterances", d.utterances);
  c.seconds = j.value("seconds", d.seconds);
  c.noises = j.value("noises", d.noises);
}

inline void to_json(nlohmann::json& j, const MixConfig& c) {
  j = nlohmann::json{{"p", c.p},
                     {"p_n", c.p_n},
                     {"utterance_ratio_db", {c.utterance_ratio_db[0], c.utterance_ratio_db[1]}},
                     {"noise_ratio_db", {c.noise_ratio_db[0], c.noise_ratio_db[1]}},
                     {"seed", c.seed}};
}
inline void from_json(const nlohmann::json& j, MixConfig& c) {
  MixConfig d;
  c.p = j.value("p", d.p);
  c.p_n = j.value("p_n", d.p_n);
  if (j.contains("utterance_ratio_db")) {
    c.utterance_ratio_db[0] = j.at("utterance_ratio_db").at(0).get<double>();
    c.utterance_ratio_db[1] = j.at("utterance_ratio_db").at(1).get<double>();
  }
  if (j.contains("noise_ratio_db")) {
    c.noise_ratio_db[0] = j.at("noise_ratio_db").at(0).get<double>();
    c.noise_ratio_db[1] = j.at("noise_ratio_db").at(1).get<double>();
  }
  c.seed = j.value("seed", d.seed);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"model", c.model},
                     {"steps", c.steps},
                     {"warmup_steps", c.warmup_steps},
                     {"peak_lr", c.peak_lr},
                     {"batch_size", c.batch_size},
                     {"seed", c.seed},
                     {"mix", c.mix},
                     {"mask", c.mask},
                     {"optim", c.optim},
                     {"kmeans_iters", c.kmeans_iters},
                     {"data", c.data}};
}
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.model = j.value("model", d.model);
  c.steps = j.value("steps", d.steps);
  c.warmup_steps = j.value("warmup_steps", d.warmup_steps);
  c.peak_lr = j.value("peak_lr", d.peak_lr);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.seed = j.value("seed", d.seed);
  c.mix = j.value("mix", d.mix);
  c.mask = j.value("mask", d.mask);
  c.optim = j.value("optim", d.optim);
  c.kmeans_iters = j.value("kmeans_iters", d.kmeans_iters);
  c.data = j.value("data", d.data);
}

}  // namespace babble
