// babble/check.hpp
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

// Self-contained verification suite: every check pairs the production path
// with an independent oracle (high-precision re-evaluation, naive
// reference, closed form, or statistical test) and reports one pass/fail
// line. Run by both the acceptance test binary and `babble verify --all`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "babble/checkpoint.hpp"
#include "babble/trainer.hpp"

namespace babble::check {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0;
};

namespace detail {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

inline std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Statistical oracles
// ---------------------------------------------------------------------------

/// Regularized upper incomplete gamma Q(a, x), series/continued-fraction
/// split at x = a + 1.
inline double regularized_gamma_q(double a, double x) {
  if (a <= 0 || x < 0) throw ValueError("regularized_gamma_q: bad arguments");
  if (x == 0) return 1.0;
  const double log_prefix = -x + a * std::log(x) - std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a, term = 1.0 / a, sum = term;
    for (int i = 0; i < 1000; ++i) {
      ap += 1.0;
      term *= x / ap;
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return 1.0 - sum * std::exp(log_prefix);
  }
  double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
  for (int i = 1; i <= 1000; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return std::exp(log_prefix) * h;
}

/// Upper-tail p-value of a chi-square statistic.
inline double chi_square_p_value(double stat, int64_t dof) {
  return regularized_gamma_q(static_cast<double>(dof) / 2.0, stat / 2.0);
}

/// Chi-square uniformity test over equiprobable bins.
inline double chi_square_uniform_p(const std::vector<int64_t>& counts, int64_t total) {
  const double expected = static_cast<double>(total) / static_cast<double>(counts.size());
  double stat = 0;
  for (int64_t c : counts) {
    const double diff = static_cast<double>(c) - expected;
    stat += diff * diff / expected;
  }
  return chi_square_p_value(stat, static_cast<int64_t>(counts.size()) - 1);
}

/// Kolmogorov-Smirnov p-value against U(lo, hi) via the asymptotic series.
inline double ks_uniform_p(std::vector<double> values, double lo, double hi) {
  if (values.empty()) return 1.0;
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double d_stat = 0;
  for (size_t i = 0; i < values.size(); ++i) {
    const double cdf = (values[i] - lo) / (hi - lo);
    const double hi_step = static_cast<double>(i + 1) / n;
    const double lo_step = static_cast<double>(i) / n;
    d_stat = std::max({d_stat, std::abs(hi_step - cdf), std::abs(cdf - lo_step)});
  }
  const double sqrt_n = std::sqrt(n);
  const double lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d_stat;
  double p = 0;
  for (int j = 1; j <= 100; ++j) {
    const double term = 2.0 * ((j % 2) ? 1.0 : -1.0) * std::exp(-2.0 * j * j * lambda * lambda);
    p += term;
    if (std::abs(term) < 1e-12) break;
  }
  return std::clamp(p, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Criterion 1: bucket function against a high-precision oracle
// ---------------------------------------------------------------------------

/// Independent route: with n = 320, m = 800 the middle band reduces to
/// 80 * (log10(|o| / 80) + 1), evaluated in long double.
inline int64_t bucket_oracle_320_800(int64_t offset) {
  const int64_t mag = std::abs(offset);
  long double d;
  if (mag < 80)
    d = static_cast<long double>(mag);
  else if (mag < 800)
    d = floorl(80.0L * (log10l(static_cast<long double>(mag) / 80.0L) + 1.0L));
  else
    d = 159.0L;
  return static_cast<int64_t>(d) + (offset > 0 ? 160 : 0);
}

inline CheckResult check_bucket_function() {
  detail::Stopwatch timer;
  CheckResult result;
  result.name = "bucket-function-oracle";
  BucketConfig cfg;
  int64_t mismatches = 0;
  bool range_ok = true;
  for (int64_t offset = -2000; offset <= 2000; ++offset) {
    const int64_t got = bucket_index(offset, cfg);
    if (got != bucket_oracle_320_800(offset)) ++mismatches;
    if (got < 0 || got > 319) range_ok = false;
  }
  const bool saturation = bucket_index(-800, cfg) == 159 && bucket_index(-2000, cfg) == 159 &&
                          bucket_index(800, cfg) == 319 && bucket_index(2000, cfg) == 319;
  const bool boundary = bucket_index(-799, cfg) == 159 && bucket_index(799, cfg) == 319;
  result.seconds = timer.seconds();
  result.pass = mismatches == 0 && range_ok && saturation && boundary && result.seconds < 1.0;
  result.detail = "4001 offsets, " + std::to_string(mismatches) + " oracle mismatches";
  return result;
}

// ---------------------------------------------------------------------------
// Criterion 2: translated softmax equals naive attention; overflow probe
// ---------------------------------------------------------------------------

inline CheckResult check_stable_attention(uint64_t seed) {
  detail::Stopwatch timer;
  CheckResult result;
  result.name = "stable-attention-equivalence";
  Rng rng(derive_seed(seed, "attn-check"));
  const double c = 32.0;
  double worst = 0;
  bool argmax_ok = true;

  for (int rep = 0; rep < 100; ++rep) {
    const int64_t frames = 1 + static_cast<int64_t>(rng.below(32));
    const int64_t dk = 8;
    Tensor<double> q({frames, dk}), k({frames, dk}), v({frames, dk}), bias({frames, frames});
    for (int64_t i = 0; i < q.size(); ++i) q[i] = rng.uniform(-2, 2);
    for (int64_t i = 0; i < k.size(); ++i) k[i] = rng.uniform(-2, 2);
    for (int64_t i = 0; i < v.size(); ++i) v[i] = rng.uniform(-2, 2);
    for (int64_t i = 0; i < bias.size(); ++i) bias[i] = rng.uniform(-3, 3);

    Tensor<double> scores_over_c({frames, frames});
    const double inv = 1.0 / (c * std::sqrt(static_cast<double>(dk)));
    for (int64_t i = 0; i < frames; ++i)
      for (int64_t j = 0; j < frames; ++j) {
        double dot = 0;
        for (int64_t d = 0; d < dk; ++d) dot += q.at(i, d) * k.at(j, d);
        scores_over_c.at(i, j) = dot * inv;
      }
    const auto stable = attention_weights_stable(scores_over_c, bias, c);

    // Naive oracle: direct exponentials of q.k/sqrt(d) + r.
    for (int64_t i = 0; i < frames; ++i) {
      std::vector<double> naive(static_cast<size_t>(frames));
      double sum = 0;
      for (int64_t j = 0; j < frames; ++j) {
        naive[static_cast<size_t>(j)] = std::exp(scores_over_c.at(i, j) * c + bias.at(i, j));
        sum += naive[static_cast<size_t>(j)];
      }
      int64_t naive_arg = 0, stable_arg = 0;
      for (int64_t j = 0; j < frames; ++j) {
        const double nv = naive[static_cast<size_t>(j)] / sum;
        worst = std::max(worst, std::abs(stable.at(i, j) - nv));
        if (nv > naive[static_cast<size_t>(naive_arg)] / sum) naive_arg = j;
        if (stable.at(i, j) > stable.at(i, stable_arg)) stable_arg = j;
      }
      argmax_ok = argmax_ok && naive_arg == stable_arg;

      double row_sum = 0;
      for (int64_t j = 0; j < frames; ++j) row_sum += stable.at(i, j);
      argmax_ok = argmax_ok && std::abs(row_sum - 1.0) < 1e-6;
    }
  }

  // Overflow probe: a common logit magnitude of 1e5 breaks the naive path
  // under an fp16 range check; the translated form cancels it up front.
  const int64_t frames = 6;
  Tensor<double> scores({frames, frames}), bias({frames, frames});
  for (int64_t i = 0; i < scores.size(); ++i) scores[i] = 1e5 + rng.uniform(-50, 50);
  Fp16RangeMonitor naive_mon;
  bool naive_nonfinite = false;
  for (int64_t i = 0; i < scores.size(); ++i) {
    naive_mon.observe(scores[i]);
    const double e = std::exp(scores[i]);
    naive_mon.observe(e);
    naive_nonfinite = naive_nonfinite || !std::isfinite(e);
  }
  Tensor<double> scores_over_c(scores.shape());
  for (int64_t i = 0; i < scores.size(); ++i) scores_over_c[i] = scores[i] / c;
  Fp16RangeMonitor stable_mon;
  (void)attention_weights_stable(scores_over_c, bias, c, &stable_mon);

  result.seconds = timer.seconds();
  result.pass = worst < 1e-10 && argmax_ok && naive_mon.flagged && naive_nonfinite &&
                !stable_mon.flagged && result.seconds < 10.0;
  result.detail = "max |stable - naive| = " + detail::fmt(worst) +
                  ", naive flagged: " + (naive_mon.flagged ? "yes" : "no") +
                  ", stable flagged: " + (stable_mon.flagged ? "yes" : "no");
  return result;
}

// ---------------------------------------------------------------------------
// Criterion 3: simulation fidelity at 1e5 utterances
// ---------------------------------------------------------------------------

inline CheckResult check_mixing_fidelity(uint64_t seed) {
  detail::Stopwatch timer;
  CheckResult result;
  result.name = "mixing-simulation-fidelity";
  const int64_t len = 1600;
  const size_t batch_size = 100;
  const int reps = 1000;  // 1e5 utterances per run

  WaveBatch batch(batch_size);
  for (size_t i = 0; i < batch_size; ++i) {
    batch[i] = synth(SynthKind::kWhiteNoise, 0.1, derive_seed(seed, "mixcheck-utt", i));
    batch[i].samples.resize(static_cast<size_t>(len));
  }
  std::vector<Waveform> noises(3);
  noises[0] = synth(SynthKind::kWhiteNoise, 0.04, derive_seed(seed, "mixcheck-noise", 0));
  noises[1] = synth(SynthKind::kPinkNoise, 0.1, derive_seed(seed, "mixcheck-noise", 1));
  noises[2] = synth(SynthKind::kWhiteNoise, 0.2, derive_seed(seed, "mixcheck-noise", 2));

  // Run A: production probabilities.
  const double p = 0.2, p_n = 0.1;
  int64_t modified = 0, noise_events = 0;
  double worst_identity = 0;
  bool lengths_ok = true;
  for (int rep = 0; rep < reps; ++rep) {
    MixConfig cfg;
    cfg.p = p;
    cfg.p_n = p_n;
    cfg.seed = derive_seed(seed, "mixcheck-a", static_cast<uint64_t>(rep));
    auto [mixed, events] = simulate_batch(batch, noises, cfg);
    modified += static_cast<int64_t>(events.size());
    for (const auto& ev : events) {
      noise_events += ev.secondary_is_noise ? 1 : 0;
      lengths_ok = lengths_ok && ev.l >= 1 && ev.l <= len / 2;
      const auto sec = secondary_signal(ev, batch, noises, len);
      double e_sec = 0;
      for (double s : sec) e_sec += s * s;
      e_sec /= static_cast<double>(len);
      const double e_pri = energy(batch[static_cast<size_t>(ev.primary_index)]);
      const double r_back = 10.0 * std::log10(e_pri / (ev.scale * ev.scale * e_sec));
      worst_identity = std::max(worst_identity, std::abs(r_back - ev.r_db));
    }
  }
  const double total_a = static_cast<double>(reps) * static_cast<double>(batch_size);
  const double frac_mod = static_cast<double>(modified) / total_a;
  const double sigma_mod = std::sqrt(p * (1 - p) / total_a);
  const double frac_noise = static_cast<double>(noise_events) / static_cast<double>(modified);
  const double sigma_noise = std::sqrt(p_n * (1 - p_n) / static_cast<double>(modified));

  // Run B: p = 1 for the distribution tests.
  std::vector<int64_t> l_counts(static_cast<size_t>(len / 2), 0);
  std::vector<int64_t> s_pri_bins(40, 0), s_sec_bins(40, 0);
  std::vector<double> r_utt, r_noise;
  int64_t events_b = 0;
  for (int rep = 0; rep < reps; ++rep) {
    MixConfig cfg;
    cfg.p = 1.0;
    cfg.p_n = p_n;
    cfg.seed = derive_seed(seed, "mixcheck-b", static_cast<uint64_t>(rep));
    auto [mixed, events] = simulate_batch(batch, noises, cfg);
    for (const auto& ev : events) {
      ++events_b;
      lengths_ok = lengths_ok && ev.l >= 1 && ev.l <= len / 2;
      ++l_counts[static_cast<size_t>(ev.l - 1)];
      const double span = static_cast<double>(len - ev.l);
      s_pri_bins[static_cast<size_t>(std::min<int64_t>(
          39, static_cast<int64_t>((static_cast<double>(ev.s_pri) - 0.5) / span * 40.0)))]++;
      s_sec_bins[static_cast<size_t>(std::min<int64_t>(
          39, static_cast<int64_t>((static_cast<double>(ev.s_sec) - 0.5) / span * 40.0)))]++;
      (ev.secondary_is_noise ? r_noise : r_utt).push_back(ev.r_db);
    }
  }
  const double p_l = chi_square_uniform_p(l_counts, events_b);
  const double p_spri = chi_square_uniform_p(s_pri_bins, events_b);
  const double p_ssec = chi_square_uniform_p(s_sec_bins, events_b);
  const double p_r_utt = ks_uniform_p(r_utt, -5.0, 5.0);
  const double p_r_noise = ks_uniform_p(r_noise, -5.0, 20.0);

  result.seconds = timer.seconds();
  result.pass = std::abs(frac_mod - p) <= 3 * sigma_mod &&
                std::abs(frac_noise - p_n) <= 3 * sigma_noise && worst_identity < 1e-9 &&
                lengths_ok && p_l > 0.001 && p_spri > 0.001 && p_ssec > 0.001 &&
                p_r_utt > 0.001 && p_r_noise > 0.001 && result.seconds < 60.0;
  result.detail = "mod " + detail::fmt(frac_mod) + " (target 0.2), noise " +
                  detail::fmt(frac_noise) + " (target 0.1), identity " +
                  detail::fmt(worst_identity, 2) + ", p-values l/s/s/r/r " + detail::fmt(p_l, 2) +
                  "/" + detail::fmt(p_spri, 2) + "/" + detail::fmt(p_ssec, 2) + "/" +
                  detail::fmt(p_r_utt, 2) + "/" + detail::fmt(p_r_noise, 2);
  return result;
}

// ---------------------------------------------------------------------------
// Criterion 4: encoder geometry and receptive-field locality
// ---------------------------------------------------------------------------

inline CheckResult check_encoder_geometry(uint64_t seed) {
  detail::Stopwatch timer;
  CheckResult result;
  result.name = "encoder-geometry";
  bool ok = encoder_frame_count(400) == 1 && encoder_frame_count(16000) == 49;

  Model<double> model(ModelConfig::micro(), derive_seed(seed, "geom"));
  auto short_wave = synth(SynthKind::kWhiteNoise, 0.025, seed);
  ok = ok && model.encoder().forward(waveform_input<double>(short_wave)).value().dim(0) == 1;
  auto full_wave = synth(SynthKind::kWhiteNoise, 1.0, seed + 1);
  ok = ok && model.encoder().forward(waveform_input<double>(full_wave)).value().dim(0) == 49;

  // Locality: pre-positional-embedding frame t covers [320 t, 320 t + 400).
  auto wave = synth(SynthKind::kWhiteNoise, 0.125, seed + 2);  // 2000 samples, 6 frames
  auto base = model.encoder().forward(waveform_input<double>(wave)).value();
  bool locality = true;
  for (int64_t t = 0; t < base.dim(0); ++t) {
    const int64_t lo = t * kEncoderFrameStride;
    const int64_t hi = lo + kEncoderReceptiveField;
    for (int64_t pos : {lo - 1, hi, int64_t{0}, wave.size() - 1}) {
      if (pos < 0 || pos >= wave.size() || (pos >= lo && pos < hi)) continue;
      Waveform perturbed = wave;
      perturbed.samples[static_cast<size_t>(pos)] += 0.5;
      auto out = model.encoder().forward(waveform_input<double>(perturbed)).value();
      for (int64_t j = 0; j < base.dim(1); ++j)
        locality = locality && out.at(t, j) == base.at(t, j);
    }
  }
  result.seconds = timer.seconds();
  result.pass = ok && locality && result.seconds < 10.0;
  result.detail = std::string("400->1, 16000->49, locality ") + (locality ? "exact" : "violated");
  return result;
}

// ---------------------------------------------------------------------------
// Criterion 5: reverse-mode gradients against central finite differences
// ---------------------------------------------------------------------------

struct GradGroupReport {
  std::string name;
  double max_rel_err = 0;
};

struct GradCheckReport {
  bool pass = false;
  double worst = 0;
  std::string worst_param;
  int64_t parameters = 0;
  double seconds = 0;
  std::vector<GradGroupReport> groups;
};

/// Central finite differences (h = 1e-4 by default) over every parameter of
/// the micro preset, against one reverse-mode pass, in double precision.
inline GradCheckReport gradcheck_micro(uint64_t seed, double h = 1e-4, double tol = 1e-4) {
  detail::Stopwatch timer;
  GradCheckReport report;
  Model<double> model(ModelConfig::micro(), derive_seed(seed, "gradcheck-init"));
  const auto wave = synth(SynthKind::kWhiteNoise, 0.105, derive_seed(seed, "gradcheck-wave"));
  // 1680 samples -> 5 frames
  const int64_t frames = encoder_frame_count(wave.size());

  Rng rng(derive_seed(seed, "gradcheck-labels"));
  PseudoLabelSequence labels;
  labels.frame_rate = 50.0;
  for (int64_t t = 0; t < frames; ++t)
    labels.labels.push_back(static_cast<int32_t>(rng.below(
        static_cast<uint64_t>(model.config().num_codewords))));
  MaskPolicy policy;
  policy.start_prob = 0.3;
  policy.force_min = true;
  const auto mask = sample_masks(frames, policy, derive_seed(seed, "gradcheck-mask"));

  auto loss_value = [&]() -> double {
    auto logp = model.masked_log_probs(wave, mask);
    return masked_loss(logp, {labels}, mask).value()[0];
  };

  model.params().zero_grad();
  backward(masked_loss(model.masked_log_probs(wave, mask), {labels}, mask));

  for (const auto& p : model.params().all()) {
    GradGroupReport group{p->name};
    for (int64_t i = 0; i < p->value.size(); ++i) {
      const double keep = p->value[i];
      p->value[i] = keep + h;
      const double lp = loss_value();
      p->value[i] = keep - h;
      const double lm = loss_value();
      p->value[i] = keep;
      const double fd = (lp - lm) / (2.0 * h);
      const double rel = std::abs(p->grad[i] - fd) / std::max(1.0, std::abs(fd));
      group.max_rel_err = std::max(group.max_rel_err, rel);
      if (rel > report.worst) {
        report.worst = rel;
        report.worst_param = p->name;
      }
    }
    report.parameters += p->value.size();
    report.groups.push_back(group);
  }
  report.pass = report.worst < tol;
  report.seconds = timer.seconds();
  return report;
}

inline CheckResult check_gradient_correctness(uint64_t seed) {
  CheckResult result;
  result.name = "gradient-correctness";
  auto report = gradcheck_micro(seed);
  result.seconds = report.seconds;
  result.pass = report.pass && report.seconds < 120.0;
  result.detail = std::to_string(report.parameters) + " parameters, worst rel err " +
                  detail::fmt(report.worst, 3) + " (" + report.worst_param + ")";
  return result;
}

// ---------------------------------------------------------------------------
// Criterion 6: loss semantics
// ---------------------------------------------------------------------------

inline CheckResult check_loss_semantics(uint64_t seed) {
  detail::Stopwatch timer;
  CheckResult result;
  result.name = "loss-semantics";
  const int64_t frames = 6, C = 5, dm = 16;
  Rng rng(derive_seed(seed, "loss-check"));

  Tensor<double> uniform_codes({C, 8});
  for (int64_t c = 0; c < C; ++c)
    for (int64_t j = 0; j < 8; ++j) uniform_codes.at(c, j) = 0.3 * (j % 2) + 0.1;
  Tensor<double> x({frames, 8});
  for (int64_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1, 1);
  auto uniform_logp = log_softmax_rows(affine_const(
      cosine_table(Var<double>::constant(x), Var<double>::constant(uniform_codes)), 10.0, 0.0));

  PseudoLabelSequence labels;
  for (int64_t t = 0; t < frames; ++t)
    labels.labels.push_back(static_cast<int32_t>(rng.below(C)));

  MaskSpec empty;
  const bool empty_ok = masked_loss(uniform_logp, {labels}, empty).value()[0] == 0.0;

  MaskSpec mask;
  mask.indices = {0, 2, 5};
  const double uniform_loss = masked_loss(uniform_logp, {labels}, mask).value()[0];
  const bool uniform_ok =
      std::abs(uniform_loss - 3.0 * std::log(static_cast<double>(C))) < 3.0 * 1e-9;

  // Zero gradient at unmasked hidden rows through the full head.
  ParamStore<double> store;
  auto& hidden = store.create("hidden", {frames, dm});
  for (int64_t i = 0; i < hidden.value.size(); ++i) hidden.value[i] = rng.uniform(-1, 1);
  Model<double> model(ModelConfig::micro(), derive_seed(seed, "loss-model"));
  auto logp = model.head().log_probs(Var<double>::param(hidden));
  PseudoLabelSequence micro_labels;
  for (int64_t t = 0; t < frames; ++t)
    micro_labels.labels.push_back(static_cast<int32_t>(
        rng.below(static_cast<uint64_t>(model.config().num_codewords))));
  backward(masked_loss(logp, {micro_labels}, mask));
  bool zero_grad_ok = true;
  for (int64_t t : {1, 3, 4})
    for (int64_t j = 0; j < dm; ++j) zero_grad_ok = zero_grad_ok && hidden.grad.at(t, j) == 0.0;

  // Scale invariance of the cosine logits.
  Tensor<double> codes({4, 8});
  for (int64_t i = 0; i < codes.size(); ++i) codes[i] = rng.uniform(-1, 1);
  auto base =
      cosine_table(Var<double>::constant(x), Var<double>::constant(codes)).value();
  double worst_scale = 0;
  for (double alpha : {0.02, 7.0, 350.0}) {
    Tensor<double> scaled = x;
    for (int64_t i = 0; i < scaled.size(); ++i) scaled[i] *= alpha;
    auto out = cosine_table(Var<double>::constant(scaled), Var<double>::constant(codes)).value();
    for (int64_t i = 0; i < out.size(); ++i)
      worst_scale = std::max(worst_scale, std::abs(out[i] - base[i]));
  }

  result.seconds = timer.seconds();
  result.pass = empty_ok && uniform_ok && zero_grad_ok && worst_scale < 1e-9;
  result.detail = "empty=0: " + std::string(empty_ok ? "yes" : "no") +
                  ", uniform |M| ln C: " + (uniform_ok ? "yes" : "no") +
                  ", unmasked grad zero: " + (zero_grad_ok ? "yes" : "no") +
                  ", scale drift " + detail::fmt(worst_scale, 2);
  return result;
}

// ---------------------------------------------------------------------------
// Criterion 7: denoising decoupling
// ---------------------------------------------------------------------------

inline CheckResult check_denoising_decoupling(uint64_t seed) {
  detail::Stopwatch timer;
  CheckResult result;
  result.name = "denoising-decoupling";

  WaveBatch clean;
  for (uint64_t i = 0; i < 8; ++i) {
    const auto kind = (i % 2) ? SynthKind::kWhiteNoise : SynthKind::kChirp;
    clean.push_back(synth(kind, 0.5, derive_seed(seed, "decouple-utt", i)));
  }
  std::vector<Waveform> noises = {synth(SynthKind::kPinkNoise, 0.3, derive_seed(seed, "dn", 0))};

  std::vector<Tensor<double>> feats;
  int64_t total = 0;
  for (const auto& w : clean) {
    feats.push_back(mfcc(w).frames);
    total += feats.back().dim(0);
  }
  Tensor<double> stacked({total, kMfccDim});
  int64_t row = 0;
  for (const auto& f : feats) {
    for (int64_t r = 0; r < f.dim(0); ++r)
      for (int64_t j = 0; j < kMfccDim; ++j) stacked.at(row + r, j) = f.at(r, j);
    row += f.dim(0);
  }
  const auto cb = kmeans_fit(stacked, 6, 15, derive_seed(seed, "decouple-km"));

  std::vector<std::vector<int32_t>> before;
  for (size_t i = 0; i < clean.size(); ++i) {
    const int64_t frames = encoder_frame_count(clean[i].size());
    before.push_back(align_to_encoder(assign(cb, feats[i]), frames).labels);
  }

  MixConfig mix;
  mix.p = 1.0;
  mix.p_n = 0.4;
  mix.seed = derive_seed(seed, "decouple-mix");
  MaskPolicy policy;
  policy.force_min = true;
  auto batch = denoising_step_inputs(clean, noises, cb, mix, policy, derive_seed(seed, "dm"));

  bool labels_ok = batch.events.size() == clean.size();
  bool provenance_ok = true;
  for (size_t i = 0; i < clean.size(); ++i) {
    labels_ok = labels_ok && batch.labels[i].labels == before[i];
    provenance_ok = provenance_ok && batch.label_provenance[i] == static_cast<int64_t>(i);
  }
  // Masked-region targets belong to the event's primary utterance: the label
  // row addressed by each event is the clean-audio labeling of that index.
  for (const auto& ev : batch.events) {
    const auto idx = static_cast<size_t>(ev.primary_index);
    provenance_ok = provenance_ok && batch.labels[idx].labels == before[idx] &&
                    batch.label_provenance[idx] == ev.primary_index;
  }

  result.seconds = timer.seconds();
  result.pass = labels_ok && provenance_ok;
  result.detail = std::string("labels bit-identical: ") + (labels_ok ? "yes" : "no") +
                  ", provenance: " + (provenance_ok ? "primary" : "violated");
  return result;
}

// ---------------------------------------------------------------------------
// Criterion 8: the pinned toy run
// ---------------------------------------------------------------------------

inline double smoothed_mean(const std::vector<StepRecord>& records, size_t from, size_t count) {
  double acc = 0;
  for (size_t i = from; i < from + count; ++i) acc += records[i].loss;
  return acc / static_cast<double>(count);
}

inline CheckResult check_toy_learning(uint64_t seed, std::ostream* progress = nullptr) {
  detail::Stopwatch timer;
  CheckResult result;
  result.name = "toy-learning";
  TrainConfig cfg;  // the pinned toy configuration
  cfg.seed = seed;

  Trainer<float> trainer(cfg);
  std::vector<StepRecord> records;
  records.reserve(static_cast<size_t>(cfg.steps));
  for (int64_t s = 0; s < cfg.steps; ++s) {
    records.push_back(trainer.pretrain_step());
    if (progress && (s + 1) % 50 == 0)
      *progress << "    step " << (s + 1) << "/" << cfg.steps << " loss "
                << detail::fmt(records.back().loss) << "\n";
  }
  const double initial = smoothed_mean(records, 0, 20);
  const double final_loss = smoothed_mean(records, static_cast<size_t>(cfg.steps) - 20, 20);

  // Determinism: an independent trainer must replay the first steps bitwise.
  Trainer<float> replay(cfg);
  bool deterministic = true;
  for (int64_t s = 0; s < 20; ++s)
    deterministic = deterministic && replay.pretrain_step().loss == records[static_cast<size_t>(s)].loss;

  result.seconds = timer.seconds();
  result.pass = final_loss <= 0.7 * initial && deterministic;
  result.detail = "smoothed initial " + detail::fmt(initial) + ", final " +
                  detail::fmt(final_loss) + " (ratio " + detail::fmt(final_loss / initial, 3) +
                  ", bound 0.7), replay " + (deterministic ? "bitwise" : "DIVERGED");
  return result;
}

// ---------------------------------------------------------------------------
// Criterion 9: base-geometry parameter count
// ---------------------------------------------------------------------------

inline CheckResult check_parameter_count() {
  detail::Stopwatch timer;
  CheckResult result;
  result.name = "parameter-count";
  const int64_t count = model_parameter_count(ModelConfig::base_geometry());
  const double rel = std::abs(static_cast<double>(count) - 94.70e6) / 94.70e6;
  result.seconds = timer.seconds();
  result.pass = rel <= 0.01;
  result.detail = std::to_string(count) + " parameters, " + detail::fmt(rel * 100, 3) +
                  "% from 94.70M";
  return result;
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

inline std::vector<CheckResult> run_acceptance(uint64_t seed = 2026,
                                               std::ostream* progress = nullptr) {
  std::vector<CheckResult> results;
  auto emit = [&](CheckResult r) {
    if (progress)
      *progress << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << " (" << detail::fmt(r.seconds, 3)
                << " s): " << r.detail << "\n";
    results.push_back(std::move(r));
  };
  emit(check_bucket_function());
  emit(check_stable_attention(seed));
  emit(check_mixing_fidelity(seed));
  emit(check_encoder_geometry(seed));
  emit(check_gradient_correctness(seed));
  emit(check_loss_semantics(seed));
  emit(check_denoising_decoupling(seed));
  emit(check_toy_learning(seed, progress));
  emit(check_parameter_count());
  return results;
}

}  // namespace babble::check
