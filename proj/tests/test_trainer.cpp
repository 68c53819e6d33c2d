// tests/test_trainer.cpp
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
#include <cstdio>
#include <fstream>

#include "babble/checkpoint.hpp"
#include "babble/trainer.hpp"
#include "testutil.hpp"

using babble::TrainConfig;

namespace {

// Small enough to step in milliseconds, big enough to exercise every path.
TrainConfig tiny_train_config() {
  TrainConfig cfg;
  cfg.model = babble::ModelConfig::micro();
  cfg.steps = 6;
  cfg.warmup_steps = 2;
  cfg.peak_lr = 1e-3;
  cfg.batch_size = 3;
  cfg.seed = 11;
  cfg.data.utterances = 4;
  cfg.data.seconds = 0.15;  // 2400 samples, 7 frames
  cfg.data.noises = 2;
  cfg.kmeans_iters = 8;
  return cfg;
}

}  // namespace

TEST_CASE("zero learning rate leaves parameters bitwise unchanged", "[trainer]") {
  auto cfg = tiny_train_config();
  cfg.peak_lr = 0.0;
  babble::Trainer<float> trainer(cfg);
  std::vector<babble::Tensor<float>> before;
  for (const auto& p : trainer.model().params().all()) before.push_back(p->value);
  auto rec = trainer.pretrain_step();
  REQUIRE(rec.lr == 0.0);
  size_t i = 0;
  for (const auto& p : trainer.model().params().all()) {
    for (int64_t k = 0; k < p->value.size(); ++k) REQUIRE(p->value[k] == before[i][k]);
    ++i;
  }
}

TEST_CASE("identical seeds give identical loss trajectories", "[trainer]") {
  auto cfg = tiny_train_config();
  babble::Trainer<float> a(cfg);
  babble::Trainer<float> b(cfg);
  auto ra = a.run(4);
  auto rb = b.run(4);
  for (size_t s = 0; s < ra.size(); ++s) {
    REQUIRE(ra[s].loss == rb[s].loss);
    REQUIRE(ra[s].grad_norm == rb[s].grad_norm);
  }
  auto pa = a.model().params().all().begin();
  for (const auto& pb : b.model().params().all()) {
    for (int64_t k = 0; k < pb->value.size(); ++k) REQUIRE((*pa)->value[k] == pb->value[k]);
    ++pa;
  }
}

TEST_CASE("learning rate schedule warms up then decays linearly", "[trainer]") {
  auto cfg = tiny_train_config();
  cfg.steps = 10;
  cfg.warmup_steps = 4;
  cfg.peak_lr = 1.0;
  REQUIRE(babble::lr_at(cfg, 1) == Catch::Approx(0.25));
  REQUIRE(babble::lr_at(cfg, 4) == Catch::Approx(1.0));
  REQUIRE(babble::lr_at(cfg, 5) == Catch::Approx(1.0));
  REQUIRE(babble::lr_at(cfg, 10) == Catch::Approx(1.0 / 6.0));
  for (int64_t s = 2; s <= 4; ++s) REQUIRE(babble::lr_at(cfg, s) > babble::lr_at(cfg, s - 1));
  for (int64_t s = 6; s <= 10; ++s) REQUIRE(babble::lr_at(cfg, s) < babble::lr_at(cfg, s - 1));
}

TEST_CASE("first-step loss sits near log C times the masked count", "[trainer]") {
  auto cfg = tiny_train_config();
  cfg.data.seconds = 0.5;  // 24 frames per utterance
  // Near-uniform initial predictions need a wide codeword space: the cosine
  // spread between random vectors scales as 1/sqrt(dim).
  cfg.model.codeword_dim = 256;
  babble::Trainer<float> trainer(cfg);
  auto rec = trainer.pretrain_step();
  const double expected = std::log(static_cast<double>(cfg.model.num_codewords)) *
                          rec.mean_masked_frames;
  REQUIRE(rec.loss == Catch::Approx(expected).epsilon(0.20));
}

TEST_CASE("training aborts with the batch seed on a non-finite loss", "[trainer]") {
  auto cfg = tiny_train_config();
  babble::Trainer<float> trainer(cfg);
  // Poison one weight so the forward pass produces NaN.
  auto& w = trainer.model().params().get("transformer.layer0.attn.q.weight");
  w.value[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    trainer.pretrain_step();
    FAIL("expected TrainingAborted");
  } catch (const babble::TrainingAborted& e) {
    REQUIRE(e.step == 1);
    REQUIRE(std::string(e.what()).find(std::to_string(e.batch_seed)) != std::string::npos);
  }
}

TEST_CASE("config JSON round-trips", "[trainer]") {
  auto cfg = tiny_train_config();
  cfg.mix.p = 0.37;
  cfg.mask.span = 7;
  cfg.model.share_gates = true;
  nlohmann::json j = cfg;
  auto back = j.get<TrainConfig>();
  REQUIRE(back.mix.p == cfg.mix.p);
  REQUIRE(back.mask.span == cfg.mask.span);
  REQUIRE(back.model.share_gates == cfg.model.share_gates);
  REQUIRE(back.steps == cfg.steps);
  REQUIRE(back.peak_lr == cfg.peak_lr);
}

TEST_CASE("loss CSV has the documented columns", "[trainer]") {
  auto cfg = tiny_train_config();
  babble::Trainer<float> trainer(cfg);
  auto records = trainer.run(2);
  const std::string path = "/tmp/babble_test_loss.csv";
  babble::write_loss_csv(path, records);
  std::ifstream f(path);
  std::string header;
  std::getline(f, header);
  REQUIRE(header == "step,loss,grad_norm,lr");
  std::string row;
  int rows = 0;
  while (std::getline(f, row)) ++rows;
  REQUIRE(rows == 2);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint round-trip reproduces forward outputs bitwise", "[trainer]") {
  auto cfg = tiny_train_config();
  babble::Trainer<float> trainer(cfg);
  trainer.run(2);
  const std::string path = "/tmp/babble_test_ckpt.bin";
  babble::save_checkpoint(path, trainer.model(), {cfg.seed, trainer.next_step()});

  auto loaded = babble::load_checkpoint<float>(path);
  REQUIRE(loaded.meta.seed == cfg.seed);
  REQUIRE(loaded.meta.next_step == trainer.next_step());

  const auto wave = trainer.clean_utterances()[0];
  babble::MaskSpec mask;
  mask.indices = {1, 2};
  auto before = trainer.model().masked_log_probs(wave, mask).value();
  auto after = loaded.model->masked_log_probs(wave, mask).value();
  REQUIRE(before.size() == after.size());
  for (int64_t i = 0; i < before.size(); ++i) REQUIRE(before[i] == after[i]);
  std::remove(path.c_str());
}

TEST_CASE("truncated checkpoint blob names the missing parameter", "[trainer]") {
  auto cfg = tiny_train_config();
  babble::Trainer<float> trainer(cfg);
  const std::string path = "/tmp/babble_test_ckpt_trunc.bin";
  babble::save_checkpoint(path, trainer.model(), {cfg.seed, 1});

  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<long>(bytes.size() - 64));
  out.close();

  REQUIRE_THROWS_MATCHES(
      babble::load_checkpoint<float>(path), babble::CheckpointError,
      Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("codewords")));
  std::remove(path.c_str());
}

TEST_CASE("corrupted magic and version are rejected", "[trainer]") {
  auto cfg = tiny_train_config();
  babble::Trainer<float> trainer(cfg);
  const std::string path = "/tmp/babble_test_ckpt_bad.bin";
  babble::save_checkpoint(path, trainer.model(), {cfg.seed, 1});
  {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(0);
    f.write("XXXXXXXX", 8);
  }
  REQUIRE_THROWS_AS(babble::load_checkpoint<float>(path), babble::CheckpointError);
  std::remove(path.c_str());
}

TEST_CASE("declared parameter shapes match a live model exactly", "[trainer]") {
  for (bool share : {false, true}) {
    auto cfg = babble::ModelConfig::toy();
    cfg.share_gates = share;
    babble::Model<float> model(cfg, 3);
    auto declared = babble::model_param_shapes(cfg);
    REQUIRE(declared.size() == model.params().all().size());
    size_t i = 0;
    for (const auto& p : model.params().all()) {
      REQUIRE(declared[i].first == p->name);
      REQUIRE(declared[i].second == p->value.shape());
      ++i;
    }
  }
}

TEST_CASE("base geometry lands on the published parameter count", "[trainer]") {
  const double count = static_cast<double>(
      babble::model_parameter_count(babble::ModelConfig::base_geometry()));
  REQUIRE(count == Catch::Approx(94.70e6).epsilon(0.01));
}

TEST_CASE("hidden states expose one tensor per transformer layer", "[trainer]") {
  babble::Model<float> model(babble::ModelConfig::micro(), 21);
  auto wave = babble::synth(babble::SynthKind::kWhiteNoise, 0.15, 22);
  auto layers = model.hidden_states(wave);
  REQUIRE(layers.size() == 2);
  for (const auto& h : layers) {
    REQUIRE(h.dim(0) == babble::encoder_frame_count(wave.size()));
    REQUIRE(h.dim(1) == babble::ModelConfig::micro().d_model);
  }
}

TEST_CASE("invalid train configs are rejected", "[trainer]") {
  auto cfg = tiny_train_config();
  cfg.warmup_steps = cfg.steps + 1;
  REQUIRE_THROWS_AS(babble::Trainer<float>(cfg), babble::ValueError);
  auto cfg2 = tiny_train_config();
  cfg2.data.seconds = 0.01;
  REQUIRE_THROWS_AS(babble::Trainer<float>(cfg2), babble::ValueError);
}
