// tests/test_objective.cpp
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

#include "babble/model.hpp"
#include "babble/objective.hpp"
#include "testutil.hpp"

using babble::MaskPolicy;
using babble::MaskSpec;
using babble::ParamStore;
using babble::PseudoLabelSequence;
using babble::Tensor;
using babble::Var;

TEST_CASE("zero start probability yields an empty mask", "[objective]") {
  MaskPolicy policy;
  policy.start_prob = 0.0;
  auto spec = babble::sample_masks(100, policy, 5);
  REQUIRE(spec.indices.empty());
}

TEST_CASE("spans are clipped at the sequence end", "[objective]") {
  MaskPolicy policy;
  policy.start_prob = 0.05;
  bool found_tail_start = false;
  for (uint64_t seed = 0; seed < 20000 && !found_tail_start; ++seed) {
    auto spec = babble::sample_masks(12, policy, seed);
    for (int64_t t : spec.indices) REQUIRE(t < 12);
    if (!spec.indices.empty() && spec.indices.front() == 9) {
      // A lone span starting at T-3 must truncate to exactly three frames.
      REQUIRE(spec.indices == std::vector<int64_t>{9, 10, 11});
      found_tail_start = true;
    }
  }
  REQUIRE(found_tail_start);
}

TEST_CASE("force_min inserts one span into an otherwise empty mask", "[objective]") {
  MaskPolicy policy;
  policy.start_prob = 0.0;
  policy.force_min = true;
  for (uint64_t seed = 0; seed < 50; ++seed) {
    auto spec = babble::sample_masks(30, policy, seed);
    REQUIRE_FALSE(spec.indices.empty());
    REQUIRE(static_cast<int64_t>(spec.indices.size()) <= policy.span);
    for (size_t i = 1; i < spec.indices.size(); ++i)
      REQUIRE(spec.indices[i] == spec.indices[i - 1] + 1);  // one contiguous span
  }
}

TEST_CASE("masked fraction matches the union-of-spans closed form", "[objective]") {
  // Interior coverage probability: 1 - (1 - p)^span.
  MaskPolicy policy;  // p = 0.08, span = 10
  const double expected = 1.0 - std::pow(1.0 - policy.start_prob, 10.0);
  int64_t masked = 0, total = 0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    auto spec = babble::sample_masks(1009, policy, 900 + seed);
    // Skip the first span-length frames: they have fewer potential starts.
    for (int64_t t : spec.indices)
      if (t >= policy.span) ++masked;
    total += 1009 - policy.span;
  }
  const double fraction = static_cast<double>(masked) / static_cast<double>(total);
  REQUIRE(fraction == Catch::Approx(expected).margin(0.01));
}

TEST_CASE("mask replacement touches only the listed rows", "[objective]") {
  ParamStore<double> store;
  auto& emb = store.create("emb", {6});
  babble::Rng rng(7);
  testutil::fill_uniform(emb.value, rng);
  auto x = testutil::random_tensor({5, 6}, 8);

  SECTION("empty mask is the identity") {
    auto out = babble::replace_rows(Var<double>::constant(x), {}, Var<double>::param(emb));
    for (int64_t i = 0; i < x.size(); ++i) REQUIRE(out.value()[i] == x[i]);
  }
  SECTION("full mask copies the embedding everywhere") {
    auto out =
        babble::replace_rows(Var<double>::constant(x), {0, 1, 2, 3, 4}, Var<double>::param(emb));
    for (int64_t t = 0; t < 5; ++t)
      for (int64_t j = 0; j < 6; ++j) REQUIRE(out.value().at(t, j) == emb.value[j]);
  }
  SECTION("unmasked rows bit-identical, masked rows get zero input gradient") {
    auto xv = Var<double>::constant(x);
    auto out = babble::replace_rows(xv, {1, 3}, Var<double>::param(emb));
    for (int64_t t : {0, 2, 4})
      for (int64_t j = 0; j < 6; ++j) REQUIRE(out.value().at(t, j) == x.at(t, j));
    babble::backward(babble::sum_all(out));
    for (int64_t j = 0; j < 6; ++j) {
      REQUIRE(xv.grad().at(1, j) == 0.0);
      REQUIRE(xv.grad().at(3, j) == 0.0);
      REQUIRE(xv.grad().at(0, j) == 1.0);
    }
    REQUIRE(emb.grad[0] == 2.0);  // two masked rows
  }
}

TEST_CASE("identical codewords give the uniform distribution", "[objective]") {
  const int64_t C = 8, d = 16;
  Tensor<double> e({C, d});
  for (int64_t c = 0; c < C; ++c)
    for (int64_t j = 0; j < d; ++j) e.at(c, j) = 0.37 * (j % 3) - 0.2;
  auto x = testutil::random_tensor({3, d}, 9);
  auto logits = babble::affine_const(
      babble::cosine_table(Var<double>::constant(x), Var<double>::constant(e)), 10.0, 0.0);
  auto logp = babble::log_softmax_rows(logits).value();
  for (int64_t t = 0; t < 3; ++t)
    for (int64_t c = 0; c < C; ++c)
      REQUIRE(std::exp(logp.at(t, c)) == Catch::Approx(1.0 / C).margin(1e-12));
}

TEST_CASE("orthogonal codeword pair reproduces the closed-form probability", "[objective]") {
  // cos sims (1, 0) at temperature 0.1: p = e^10 / (e^10 + 1).
  Tensor<double> e({2, 4});
  e.at(0, 0) = 1.0;
  e.at(1, 1) = 1.0;
  Tensor<double> x({1, 4});
  x.at(0, 0) = 2.5;  // along e_0; cosine ignores the magnitude
  auto logits = babble::affine_const(
      babble::cosine_table(Var<double>::constant(x), Var<double>::constant(e)), 10.0, 0.0);
  auto logp = babble::log_softmax_rows(logits).value();
  REQUIRE(std::exp(logp.at(0, 0)) == Catch::Approx(0.9999546).margin(1e-7));
  const double sum = std::exp(logp.at(0, 0)) + std::exp(logp.at(0, 1));
  REQUIRE(sum == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("cosine logits are invariant to positive scaling", "[objective]") {
  auto x = testutil::random_tensor({4, 8}, 10);
  auto e = testutil::random_tensor({5, 8}, 11);
  auto base =
      babble::cosine_table(Var<double>::constant(x), Var<double>::constant(e)).value();
  for (double alpha : {0.01, 3.0, 1700.0}) {
    Tensor<double> scaled = x;
    for (int64_t i = 0; i < scaled.size(); ++i) scaled[i] *= alpha;
    auto out =
        babble::cosine_table(Var<double>::constant(scaled), Var<double>::constant(e)).value();
    for (int64_t i = 0; i < out.size(); ++i)
      REQUIRE(std::abs(out[i] - base[i]) < 1e-9);
  }
}

TEST_CASE("zero-norm projections are epsilon-guarded, not errors", "[objective]") {
  Tensor<double> x({1, 4});  // zero vector
  auto e = testutil::random_tensor({3, 4}, 12);
  auto out = babble::cosine_table(Var<double>::constant(x), Var<double>::constant(e)).value();
  for (int64_t i = 0; i < out.size(); ++i) {
    REQUIRE(std::isfinite(out[i]));
    REQUIRE(out[i] == 0.0);
  }
}

TEST_CASE("cosine and nll gradients match finite differences", "[objective]") {
  ParamStore<double> store;
  auto& x = store.create("x", {4, 6});
  auto& e = store.create("e", {3, 6});
  babble::Rng rng(13);
  testutil::fill_uniform(x.value, rng);
  testutil::fill_uniform(e.value, rng);
  std::vector<int32_t> labels = {2, 0, 1, 2};
  std::vector<int64_t> mask = {0, 2};
  testutil::check_grads_fd(store, [&] {
    auto logits = babble::affine_const(
        babble::cosine_table(Var<double>::param(x), Var<double>::param(e)), 10.0, 0.0);
    return babble::masked_nll(babble::log_softmax_rows(logits), labels, mask);
  });
}

TEST_CASE("masked loss basics", "[objective]") {
  const int64_t frames = 4, C = 8;
  Tensor<double> e({C, 3});
  for (int64_t c = 0; c < C; ++c) e.at(c, 0) = 1.0;  // identical codewords: uniform
  auto x = testutil::random_tensor({frames, 3}, 14);
  auto logp = babble::log_softmax_rows(babble::affine_const(
      babble::cosine_table(Var<double>::constant(x), Var<double>::constant(e)), 10.0, 0.0));

  PseudoLabelSequence labels;
  labels.labels = {1, 5, 0, 7};
  MaskSpec empty_mask;
  auto zero = babble::masked_loss(logp, {labels}, empty_mask);
  REQUIRE(zero.value()[0] == 0.0);

  MaskSpec one;
  one.indices = {2};
  REQUIRE(babble::masked_loss(logp, {labels}, one).value()[0] ==
          Catch::Approx(std::log(8.0)).margin(1e-9));

  MaskSpec two;
  two.indices = {1, 3};
  REQUIRE(babble::masked_loss(logp, {labels}, two).value()[0] ==
          Catch::Approx(2.0 * std::log(8.0)).margin(1e-9));

  // Ensemble of two label sets doubles the uniform loss.
  REQUIRE(babble::masked_loss(logp, {labels, labels}, two).value()[0] ==
          Catch::Approx(4.0 * std::log(8.0)).margin(1e-9));

  PseudoLabelSequence bad;
  bad.labels = {1, 99, 0, 7};
  REQUIRE_THROWS_AS(babble::masked_loss(logp, {bad}, two), babble::ValueError);
}

TEST_CASE("masked loss sums exactly the masked terms", "[objective]") {
  auto x = testutil::random_tensor({4, 5}, 15);
  auto e = testutil::random_tensor({3, 5}, 16);
  auto logp = babble::log_softmax_rows(babble::affine_const(
      babble::cosine_table(Var<double>::constant(x), Var<double>::constant(e)), 10.0, 0.0));
  PseudoLabelSequence labels;
  labels.labels = {2, 1, 0, 1};
  MaskSpec mask;
  mask.indices = {0, 3};
  const double got = babble::masked_loss(logp, {labels}, mask).value()[0];
  const double expected = -logp.value().at(0, 2) - logp.value().at(3, 1);
  REQUIRE(std::abs(got - expected) < 1e-10);
}

TEST_CASE("loss ignores labels outside the mask and is non-negative", "[objective]") {
  auto x = testutil::random_tensor({6, 5}, 17);
  auto e = testutil::random_tensor({4, 5}, 18);
  auto make_logp = [&] {
    return babble::log_softmax_rows(babble::affine_const(
        babble::cosine_table(Var<double>::constant(x), Var<double>::constant(e)), 10.0, 0.0));
  };
  PseudoLabelSequence labels;
  labels.labels = {0, 1, 2, 3, 0, 1};
  MaskSpec mask;
  mask.indices = {1, 4};
  const double base = babble::masked_loss(make_logp(), {labels}, mask).value()[0];
  REQUIRE(base >= 0.0);
  PseudoLabelSequence tweaked = labels;
  tweaked.labels[0] = 3;
  tweaked.labels[5] = 0;
  REQUIRE(babble::masked_loss(make_logp(), {tweaked}, mask).value()[0] == base);
}

TEST_CASE("unmasked hidden rows receive exactly zero gradient end to end", "[objective]") {
  babble::Model<double> model(babble::ModelConfig::micro(), 19);
  ParamStore<double> store;
  auto& hidden = store.create("hidden", {5, 16});
  babble::Rng rng(20);
  testutil::fill_uniform(hidden.value, rng);

  PseudoLabelSequence labels;
  labels.labels = {0, 1, 2, 3, 1};
  MaskSpec mask;
  mask.indices = {1, 2};
  auto logp = model.head().log_probs(Var<double>::param(hidden));
  auto loss = babble::masked_loss(logp, {labels}, mask);
  babble::backward(loss);
  for (int64_t t : {0, 3, 4})
    for (int64_t j = 0; j < 16; ++j) REQUIRE(hidden.grad.at(t, j) == 0.0);
  bool masked_nonzero = false;
  for (int64_t j = 0; j < 16; ++j) masked_nonzero = masked_nonzero || hidden.grad.at(1, j) != 0.0;
  REQUIRE(masked_nonzero);
}

TEST_CASE("denoising inputs pair clean labels with mixed audio", "[objective]") {
  babble::WaveBatch clean;
  for (uint64_t i = 0; i < 6; ++i) {
    auto kind = (i % 2) ? babble::SynthKind::kWhiteNoise : babble::SynthKind::kChirp;
    clean.push_back(babble::synth(kind, 0.5, 40 + i));
  }
  std::vector<babble::Waveform> noises = {babble::synth(babble::SynthKind::kPinkNoise, 0.3, 50)};

  // Codebook from the clean corpus.
  std::vector<Tensor<double>> feats;
  int64_t total = 0;
  for (const auto& w : clean) {
    feats.push_back(babble::mfcc(w).frames);
    total += feats.back().dim(0);
  }
  Tensor<double> stacked({total, babble::kMfccDim});
  int64_t row = 0;
  for (const auto& f : feats) {
    for (int64_t r = 0; r < f.dim(0); ++r)
      for (int64_t j = 0; j < babble::kMfccDim; ++j) stacked.at(row + r, j) = f.at(r, j);
    row += f.dim(0);
  }
  auto cb = babble::kmeans_fit(stacked, 6, 15, 3);

  babble::MixConfig mix;
  mix.p = 1.0;
  mix.p_n = 0.5;
  mix.seed = 77;
  MaskPolicy policy;
  policy.force_min = true;

  SECTION("labels are identical before and after mixing") {
    std::vector<std::vector<int32_t>> before;
    for (size_t i = 0; i < clean.size(); ++i) {
      const int64_t frames = babble::encoder_frame_count(clean[i].size());
      before.push_back(
          babble::align_to_encoder(babble::assign(cb, feats[i]), frames).labels);
    }
    auto batch = babble::denoising_step_inputs(clean, noises, cb, mix, policy, 123);
    REQUIRE(batch.events.size() == clean.size());
    for (size_t i = 0; i < clean.size(); ++i) {
      REQUIRE(batch.labels[i].labels == before[i]);
      REQUIRE(batch.label_provenance[i] == static_cast<int64_t>(i));
    }
    // The masked frames' targets come from the event's primary utterance.
    for (const auto& ev : batch.events) {
      const auto idx = static_cast<size_t>(ev.primary_index);
      REQUIRE(batch.labels[idx].labels == before[idx]);
    }
  }

  SECTION("p = 0 reduces to masked prediction on clean audio") {
    babble::MixConfig off = mix;
    off.p = 0.0;
    auto batch = babble::denoising_step_inputs(clean, noises, cb, off, policy, 123);
    REQUIRE(batch.events.empty());
    for (size_t i = 0; i < clean.size(); ++i)
      REQUIRE(batch.mixed[i].samples == clean[i].samples);
  }
}
