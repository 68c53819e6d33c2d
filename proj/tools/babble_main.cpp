// tools/babble_main.cpp
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

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "babble/check.hpp"
#include "babble/checkpoint.hpp"
#include "babble/trainer.hpp"

namespace fs = std::filesystem;

namespace {

std::vector<std::string> list_wavs(const std::string& dir) {
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".wav")
      paths.push_back(entry.path().string());
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw babble::ValueError("no .wav files under " + dir);
  return paths;
}

int run_simulate_mix(const std::string& in_dir, const std::string& noise_dir, double p, double pn,
                     uint64_t seed, const std::string& out_dir, const std::string& events_json) {
  const auto paths = list_wavs(in_dir);
  babble::WaveBatch batch;
  for (const auto& path : paths) batch.push_back(babble::read_wav(path));

  std::vector<babble::Waveform> noises;
  if (!noise_dir.empty())
    for (const auto& path : list_wavs(noise_dir)) noises.push_back(babble::read_wav(path));

  babble::MixConfig cfg;
  cfg.p = p;
  cfg.p_n = pn;
  cfg.seed = seed;
  auto [mixed, events] = babble::simulate_batch(batch, noises, cfg);

  fs::create_directories(out_dir);
  int64_t clamped = 0;
  for (size_t i = 0; i < mixed.size(); ++i) {
    const auto name = fs::path(paths[i]).filename().string();
    clamped += babble::write_wav((fs::path(out_dir) / name).string(), mixed[i]);
  }
  if (clamped > 0)
    std::cerr << "warning: clamped " << clamped << " samples outside [-1, 1] on export\n";

  if (!events_json.empty()) {
    nlohmann::json j = events;
    std::ofstream f(events_json);
    if (!f) throw babble::FormatError("cannot open " + events_json);
    f << j.dump(2) << "\n";
  }
  std::cout << "mixed " << events.size() << " of " << batch.size() << " utterances into "
            << out_dir << "\n";
  return 0;
}

int run_pseudo_label(const std::string& in_dir, int64_t num_clusters, int64_t iters, uint64_t seed,
                     const std::string& out_prefix, int64_t hidden_layer,
                     const std::string& checkpoint_path) {
  const auto paths = list_wavs(in_dir);
  babble::WaveBatch waves;
  for (const auto& path : paths) waves.push_back(babble::read_wav(path));

  std::vector<babble::Tensor<double>> feats;
  bool features_at_frame_rate = false;  // 100 Hz MFCC vs 50 Hz hidden states
  if (checkpoint_path.empty()) {
    for (const auto& w : waves) feats.push_back(babble::mfcc(w).frames);
  } else {
    // Experimental second pass: cluster a trained model's layer outputs.
    auto loaded = babble::load_checkpoint<float>(checkpoint_path);
    features_at_frame_rate = true;
    for (const auto& w : waves) {
      auto layers = loaded.model->hidden_states(w);
      if (hidden_layer < 1 || hidden_layer > static_cast<int64_t>(layers.size()))
        throw babble::ValueError("hidden layer must lie in [1, " +
                                 std::to_string(layers.size()) + "]");
      feats.push_back(layers[static_cast<size_t>(hidden_layer - 1)].cast<double>());
    }
  }

  int64_t total = 0;
  for (const auto& f : feats) total += f.dim(0);
  const int64_t dim = feats[0].dim(1);
  babble::Tensor<double> stacked({total, dim});
  int64_t row = 0;
  for (const auto& f : feats) {
    for (int64_t r = 0; r < f.dim(0); ++r)
      for (int64_t j = 0; j < dim; ++j) stacked.at(row + r, j) = f.at(r, j);
    row += f.dim(0);
  }
  auto codebook = babble::kmeans_fit(stacked, num_clusters, iters, seed);

  std::vector<babble::PseudoLabelSequence> labels;
  for (size_t i = 0; i < waves.size(); ++i) {
    auto assigned = babble::assign(codebook, feats[i]);
    if (features_at_frame_rate) {
      assigned.frame_rate = 50.0;
      labels.push_back(assigned);
    } else {
      labels.push_back(
          babble::align_to_encoder(assigned, babble::encoder_frame_count(waves[i].size())));
    }
  }
  babble::write_labels(out_prefix + ".labels.txt", labels);
  babble::save_codebook(out_prefix + ".codebook", codebook);
  std::cout << "wrote " << labels.size() << " label lines to " << out_prefix << ".labels.txt ("
            << "inertia " << codebook.inertia_history.back() << ")\n";
  return 0;
}

int run_inspect_buckets(int64_t n, int64_t m, const std::string& range, const std::string& out) {
  const auto sep = range.find("..");
  if (sep == std::string::npos)
    throw babble::ValueError("range must look like lo..hi, got " + range);
  const int64_t lo = std::stoll(range.substr(0, sep));
  const int64_t hi = std::stoll(range.substr(sep + 2));
  if (lo > hi) throw babble::ValueError("range must be ordered lo..hi");
  babble::BucketConfig cfg;
  cfg.n = n;
  cfg.m = m;
  cfg.validate();

  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!out.empty()) {
    file.open(out);
    if (!file) throw babble::FormatError("cannot open " + out);
    os = &file;
  }
  *os << "offset,bucket\n";
  for (int64_t offset = lo; offset <= hi; ++offset)
    *os << offset << "," << babble::bucket_index(offset, cfg) << "\n";
  return 0;
}

int run_gradcheck(const std::string& preset, uint64_t seed) {
  if (preset != "micro")
    throw babble::ValueError("gradcheck supports the micro preset, got " + preset);
  auto report = babble::check::gradcheck_micro(seed);
  std::cout << "finite-difference check over " << report.parameters << " parameters ("
            << report.seconds << " s)\n";
  for (const auto& g : report.groups)
    std::cout << "  " << (g.max_rel_err < 1e-4 ? "ok   " : "FAIL ") << g.name << "  max rel err "
              << g.max_rel_err << "\n";
  std::cout << (report.pass ? "PASS" : "FAIL") << ": worst " << report.worst << " ("
            << report.worst_param << ")\n";
  return report.pass ? 0 : 1;
}

int run_pretrain_toy(const std::string& config_path, const std::string& out_dir,
                     bool dump_config) {
  babble::TrainConfig cfg;
  if (!config_path.empty()) {
    std::ifstream f(config_path);
    if (!f) throw babble::FormatError("cannot open " + config_path);
    try {
      cfg = nlohmann::json::parse(f).get<babble::TrainConfig>();
    } catch (const nlohmann::json::exception& e) {
      std::cerr << "malformed config " << config_path << ": " << e.what() << "\n";
      return 2;
    }
  }
  if (dump_config) {
    std::cout << nlohmann::json(cfg).dump(2) << "\n";
    return 0;
  }
  cfg.validate();
  fs::create_directories(out_dir);
  {
    std::ofstream f(fs::path(out_dir) / "config.json");
    f << nlohmann::json(cfg).dump(2) << "\n";
  }

  babble::Trainer<float> trainer(cfg);
  std::vector<babble::StepRecord> records;
  records.reserve(static_cast<size_t>(cfg.steps));
  for (int64_t s = 0; s < cfg.steps; ++s) {
    records.push_back(trainer.pretrain_step());
    const auto& r = records.back();
    if (r.step == 1 || r.step % 20 == 0 || r.step == cfg.steps)
      std::cout << "step " << r.step << "  loss " << r.loss << "  grad_norm " << r.grad_norm
                << "  lr " << r.lr << "\n";
  }
  babble::write_loss_csv((fs::path(out_dir) / "loss.csv").string(), records);
  babble::save_checkpoint((fs::path(out_dir) / "final.ckpt").string(), trainer.model(),
                          {cfg.seed, trainer.next_step()});
  const double initial = babble::check::smoothed_mean(records, 0, std::min<size_t>(20, records.size()));
  const double final_loss = babble::check::smoothed_mean(
      records, records.size() - std::min<size_t>(20, records.size()),
      std::min<size_t>(20, records.size()));
  std::cout << "smoothed loss " << initial << " -> " << final_loss << "; wrote loss.csv and final.ckpt to "
            << out_dir << "\n";
  return 0;
}

int run_verify() {
  const auto start = std::chrono::steady_clock::now();
  auto results = babble::check::run_acceptance(2026, &std::cout);
  const double total =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  int failures = 0;
  for (const auto& r : results) failures += r.pass ? 0 : 1;
  std::cout << "----\n"
            << results.size() - static_cast<size_t>(failures) << "/" << results.size()
            << " checks passed in " << total << " s\n";
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"masked speech denoising pre-training toolkit"};
  app.require_subcommand(1);

  // simulate-mix
  std::string in_dir, noise_dir, out_dir = "mixed", events_json;
  double p = 0.2, pn = 0.0;
  uint64_t seed = 1;
  auto* mix = app.add_subcommand("simulate-mix", "overlay utterances and noise into a batch");
  mix->add_option("--in-dir", in_dir, "directory of 16 kHz mono PCM WAVs")->required();
  mix->add_option("--noise-dir", noise_dir, "directory of noise WAVs");
  mix->add_option("--p", p, "mixing probability per utterance");
  mix->add_option("--pn", pn, "noise branch probability");
  mix->add_option("--seed", seed, "simulation seed");
  mix->add_option("--out-dir", out_dir, "output directory for mixed WAVs");
  mix->add_option("--events-json", events_json, "write the event records here");

  // pseudo-label
  std::string label_in, label_out = "labels";
  int64_t num_clusters = 32, kmeans_iters = 25, hidden_layer = 6;
  uint64_t label_seed = 1;
  std::string ckpt;
  auto* plabel = app.add_subcommand("pseudo-label", "k-means frame labels from clean audio");
  plabel->add_option("--in-dir", label_in, "directory of WAVs to label")->required();
  plabel->add_option("--C", num_clusters, "codebook size");
  plabel->add_option("--iters", kmeans_iters, "Lloyd iterations");
  plabel->add_option("--seed", label_seed, "clustering seed");
  plabel->add_option("--out", label_out, "output prefix (.labels.txt, .codebook)");
  plabel->add_option("--checkpoint", ckpt,
                     "experimental: cluster hidden states of this checkpoint instead of MFCCs");
  plabel->add_option("--hidden-layer", hidden_layer, "1-based transformer layer for --checkpoint");

  // inspect-buckets
  int64_t bucket_n = 320, bucket_m = 800;
  std::string range = "-1200..1200", bucket_out;
  auto* buckets = app.add_subcommand("inspect-buckets", "offset to bucket-index table");
  buckets->add_option("--n", bucket_n, "embedding count");
  buckets->add_option("--m", bucket_m, "maximum offset");
  buckets->add_option("--range", range, "offset range lo..hi");
  buckets->add_option("--out", bucket_out, "CSV path (stdout when omitted)");

  // gradcheck
  std::string preset = "micro";
  uint64_t grad_seed = 2026;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  grad->add_option("--preset", preset, "model preset (micro)");
  grad->add_option("--seed", grad_seed, "check seed");

  // pretrain-toy
  std::string config_path, train_out = "toy_run";
  bool dump_config = false;
  auto* toy = app.add_subcommand("pretrain-toy", "run the micro pre-training loop");
  toy->add_option("--config", config_path, "JSON config (defaults when omitted)");
  toy->add_option("--out-dir", train_out, "output directory");
  toy->add_flag("--dump-config", dump_config, "print the effective config and exit");

  // verify
  bool verify_all = false;
  auto* verify = app.add_subcommand("verify", "run every acceptance check");
  verify->add_flag("--all", verify_all, "run the full table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (mix->parsed())
      return run_simulate_mix(in_dir, noise_dir, p, pn, seed, out_dir, events_json);
    if (plabel->parsed())
      return run_pseudo_label(label_in, num_clusters, kmeans_iters, label_seed, label_out,
                              hidden_layer, ckpt);
    if (buckets->parsed()) return run_inspect_buckets(bucket_n, bucket_m, range, bucket_out);
    if (grad->parsed()) return run_gradcheck(preset, grad_seed);
    if (toy->parsed()) return run_pretrain_toy(config_path, train_out, dump_config);
    if (verify->parsed()) {
      if (!verify_all) {
        std::cerr << "verify requires --all\n";
        return 2;
      }
      return run_verify();
    }
  } catch (const babble::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
