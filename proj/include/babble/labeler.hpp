// babble/labeler.hpp
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
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "babble/common.hpp"
#include "babble/rng.hpp"
#include "babble/tensor.hpp"

namespace babble {

/// K-means codebook over z-normalized features. Centers live in normalized
/// space; the stored per-dimension statistics come from the fit set.
struct Codebook {
  int64_t num_centers = 0;
  int64_t dim = 0;
  Tensor<double> centers;  // [C, dim], normalized space
  std::vector<double> feat_mean;
  std::vector<double> feat_std;
  std::vector<double> inertia_history;  // initial inertia, then one entry per iteration
  bool converged = false;
};

/// Frame-level integer targets aligned to some frame rate.
struct PseudoLabelSequence {
  std::vector<int32_t> labels;
  double frame_rate = 100.0;
};

namespace detail {

inline void normalize_rows_inplace(Tensor<double>& x, const std::vector<double>& mean,
                                   const std::vector<double>& std_dev) {
  const int64_t rows = x.dim(0), d = x.dim(1);
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < d; ++j)
      x.at(r, j) = (x.at(r, j) - mean[static_cast<size_t>(j)]) / std_dev[static_cast<size_t>(j)];
}

inline double sq_dist(const double* a, const double* b, int64_t d) {
  double acc = 0;
  for (int64_t j = 0; j < d; ++j) {
    const double diff = a[j] - b[j];
    acc += diff * diff;
  }
  return acc;
}

/// Nearest center by Euclidean distance; strict less-than keeps the lowest
/// index on ties.
inline int64_t nearest_center(const Tensor<double>& centers, const double* x, int64_t d) {
  int64_t best = 0;
  double best_d = sq_dist(centers.data(), x, d);
  for (int64_t c = 1; c < centers.dim(0); ++c) {
    const double dist = sq_dist(centers.data() + c * d, x, d);
    if (dist < best_d) {
      best_d = dist;
      best = c;
    }
  }
  return best;
}

}  // namespace detail

/// Sum of squared distances of every (normalized) feature row to its nearest
/// center.
inline double kmeans_inertia(const Codebook& cb, const Tensor<double>& normalized) {
  double acc = 0;
  for (int64_t r = 0; r < normalized.dim(0); ++r) {
    const double* x = normalized.data() + r * cb.dim;
    const int64_t c = detail::nearest_center(cb.centers, x, cb.dim);
    acc += detail::sq_dist(cb.centers.data() + c * cb.dim, x, cb.dim);
  }
  return acc;
}

/// Lloyd iterations from the current centers. Empty clusters are re-seeded to
/// the point farthest from its assigned center. Stops early once assignments
/// stabilize. Appends per-iteration inertia to the history.
inline void kmeans_iterate(Codebook& cb, const Tensor<double>& normalized, int64_t iters) {
  const int64_t n = normalized.dim(0), d = cb.dim, C = cb.num_centers;
  std::vector<int64_t> assign_prev(static_cast<size_t>(n), -1);
  std::vector<int64_t> assign(static_cast<size_t>(n));
  for (int64_t it = 0; it < iters; ++it) {
    for (int64_t r = 0; r < n; ++r)
      assign[static_cast<size_t>(r)] = detail::nearest_center(cb.centers, normalized.data() + r * d, d);
    if (assign == assign_prev) {
      cb.converged = true;
      break;
    }
    assign_prev = assign;

    Tensor<double> sums({C, d});
    std::vector<int64_t> counts(static_cast<size_t>(C), 0);
    for (int64_t r = 0; r < n; ++r) {
      const int64_t c = assign[static_cast<size_t>(r)];
      ++counts[static_cast<size_t>(c)];
      for (int64_t j = 0; j < d; ++j) sums.at(c, j) += normalized.at(r, j);
    }
    std::vector<bool> claimed(static_cast<size_t>(n), false);
    for (int64_t c = 0; c < C; ++c) {
      if (counts[static_cast<size_t>(c)] > 0) {
        for (int64_t j = 0; j < d; ++j)
          cb.centers.at(c, j) = sums.at(c, j) / static_cast<double>(counts[static_cast<size_t>(c)]);
      } else {
        // Re-seed to the unclaimed point farthest from its assigned center.
        int64_t far_idx = 0;
        double far_d = -1;
        for (int64_t r = 0; r < n; ++r) {
          if (claimed[static_cast<size_t>(r)]) continue;
          const int64_t a = assign[static_cast<size_t>(r)];
          const double dist = detail::sq_dist(cb.centers.data() + a * d, normalized.data() + r * d, d);
          if (dist > far_d) {
            far_d = dist;
            far_idx = r;
          }
        }
        claimed[static_cast<size_t>(far_idx)] = true;
        for (int64_t j = 0; j < d; ++j) cb.centers.at(c, j) = normalized.at(far_idx, j);
        assign_prev.assign(static_cast<size_t>(n), -1);  // force another pass
      }
    }
    cb.inertia_history.push_back(kmeans_inertia(cb, normalized));
  }
}

/// K-means++ initialization followed by Lloyd refinement, all deterministic
/// in the seed. Features are z-normalized per dimension first; the statistics
/// are stored in the codebook and reused at assignment time.
inline Codebook kmeans_fit(const Tensor<double>& features, int64_t C, int64_t iters,
                           uint64_t seed) {
  detail::require_rank(features, 2, "kmeans_fit features");
  const int64_t n = features.dim(0), d = features.dim(1);
  if (C < 1) throw ValueError("kmeans_fit: need at least one cluster");
  if (n < C)
    throw ValueError("kmeans_fit: " + std::to_string(n) + " points cannot fill " +
                     std::to_string(C) + " clusters");

  Codebook cb;
  cb.num_centers = C;
  cb.dim = d;
  cb.feat_mean.assign(static_cast<size_t>(d), 0.0);
  cb.feat_std.assign(static_cast<size_t>(d), 0.0);
  for (int64_t r = 0; r < n; ++r)
    for (int64_t j = 0; j < d; ++j) cb.feat_mean[static_cast<size_t>(j)] += features.at(r, j);
  for (int64_t j = 0; j < d; ++j) cb.feat_mean[static_cast<size_t>(j)] /= static_cast<double>(n);
  for (int64_t r = 0; r < n; ++r)
    for (int64_t j = 0; j < d; ++j) {
      const double diff = features.at(r, j) - cb.feat_mean[static_cast<size_t>(j)];
      cb.feat_std[static_cast<size_t>(j)] += diff * diff;
    }
  for (int64_t j = 0; j < d; ++j)
    cb.feat_std[static_cast<size_t>(j)] =
        std::max(std::sqrt(cb.feat_std[static_cast<size_t>(j)] / static_cast<double>(n)), 1e-8);

  Tensor<double> norm = features;
  detail::normalize_rows_inplace(norm, cb.feat_mean, cb.feat_std);

  // k-means++ seeding.
  Rng rng(derive_seed(seed, "kmeans++"));
  cb.centers = Tensor<double>({C, d});
  std::vector<double> min_d(static_cast<size_t>(n), std::numeric_limits<double>::infinity());
  int64_t first = static_cast<int64_t>(rng.below(static_cast<uint64_t>(n)));
  for (int64_t j = 0; j < d; ++j) cb.centers.at(0, j) = norm.at(first, j);
  for (int64_t c = 1; c < C; ++c) {
    double total = 0;
    for (int64_t r = 0; r < n; ++r) {
      const double dist = detail::sq_dist(cb.centers.data() + (c - 1) * d, norm.data() + r * d, d);
      min_d[static_cast<size_t>(r)] = std::min(min_d[static_cast<size_t>(r)], dist);
      total += min_d[static_cast<size_t>(r)];
    }
    int64_t pick;
    if (total <= 0) {
      pick = static_cast<int64_t>(rng.below(static_cast<uint64_t>(n)));
    } else {
      const double target = rng.uniform() * total;
      double acc = 0;
      pick = n - 1;
      for (int64_t r = 0; r < n; ++r) {
        acc += min_d[static_cast<size_t>(r)];
        if (acc > target) {
          pick = r;
          break;
        }
      }
    }
    for (int64_t j = 0; j < d; ++j) cb.centers.at(c, j) = norm.at(pick, j);
  }

  cb.inertia_history.push_back(kmeans_inertia(cb, norm));
  kmeans_iterate(cb, norm, iters);
  return cb;
}

/// Nearest-center labels at the feature frame rate (100 Hz for MFCC input).
inline PseudoLabelSequence assign(const Codebook& cb, const Tensor<double>& features) {
  detail::require_rank(features, 2, "assign features");
  if (features.dim(1) != cb.dim)
    throw DimensionError("assign: feature dim " + std::to_string(features.dim(1)) +
                         " does not match codebook dim " + std::to_string(cb.dim));
  Tensor<double> norm = features;
  detail::normalize_rows_inplace(norm, cb.feat_mean, cb.feat_std);
  PseudoLabelSequence out;
  out.frame_rate = 100.0;
  out.labels.resize(static_cast<size_t>(norm.dim(0)));
  for (int64_t r = 0; r < norm.dim(0); ++r)
    out.labels[static_cast<size_t>(r)] =
        static_cast<int32_t>(detail::nearest_center(cb.centers, norm.data() + r * cb.dim, cb.dim));
  return out;
}

/// 100 Hz labels to the 50 Hz encoder frame rate: keep even indices, clamp
/// the read index at the end so the last label repeats if needed.
inline PseudoLabelSequence align_to_encoder(const PseudoLabelSequence& labels_100hz,
                                            int64_t encoder_frames) {
  if (labels_100hz.labels.empty()) throw ValueError("align_to_encoder: empty label sequence");
  if (encoder_frames <= 0) throw ValueError("align_to_encoder: encoder_frames must be positive");
  PseudoLabelSequence out;
  out.frame_rate = 50.0;
  out.labels.resize(static_cast<size_t>(encoder_frames));
  const int64_t last = static_cast<int64_t>(labels_100hz.labels.size()) - 1;
  for (int64_t t = 0; t < encoder_frames; ++t)
    out.labels[static_cast<size_t>(t)] =
        labels_100hz.labels[static_cast<size_t>(std::min(2 * t, last))];
  return out;
}

// ---------------------------------------------------------------------------
// Files: labels are one line of space-separated integers per utterance; the
// codebook is a JSON manifest followed by the raw little-endian float32
// center blob in one container file.
// ---------------------------------------------------------------------------

inline void write_labels(const std::string& path, const std::vector<PseudoLabelSequence>& seqs) {
  std::ofstream f(path);
  if (!f) throw FormatError("write_labels: cannot open " + path);
  for (const auto& seq : seqs) {
    for (size_t i = 0; i < seq.labels.size(); ++i) {
      if (i) f << ' ';
      f << seq.labels[i];
    }
    f << '\n';
  }
}

inline std::vector<PseudoLabelSequence> read_labels(const std::string& path,
                                                    double frame_rate = 50.0) {
  std::ifstream f(path);
  if (!f) throw FormatError("read_labels: cannot open " + path);
  std::vector<PseudoLabelSequence> out;
  std::string line;
  while (std::getline(f, line)) {
    PseudoLabelSequence seq;
    seq.frame_rate = frame_rate;
    std::istringstream is(line);
    int32_t v;
    while (is >> v) seq.labels.push_back(v);
    out.push_back(std::move(seq));
  }
  return out;
}

constexpr char kCodebookMagic[9] = "BBLCODE1";

inline void save_codebook(const std::string& path, const Codebook& cb) {
  nlohmann::json manifest{{"version", 1},
                          {"C", cb.num_centers},
                          {"dim", cb.dim},
                          {"feat_mean", cb.feat_mean},
                          {"feat_std", cb.feat_std}};
  const std::string js = manifest.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("save_codebook: cannot open " + path);
  f.write(kCodebookMagic, 8);
  const uint64_t len = js.size();
  f.write(reinterpret_cast<const char*>(&len), 8);
  f.write(js.data(), static_cast<long>(js.size()));
  std::vector<float> blob(static_cast<size_t>(cb.centers.size()));
  for (int64_t i = 0; i < cb.centers.size(); ++i) blob[static_cast<size_t>(i)] = static_cast<float>(cb.centers[i]);
  f.write(reinterpret_cast<const char*>(blob.data()), static_cast<long>(blob.size() * sizeof(float)));
}

inline Codebook load_codebook(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("load_codebook: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::string(magic, 8) != std::string(kCodebookMagic, 8))
    throw CheckpointError("load_codebook: bad magic in " + path);
  uint64_t len = 0;
  f.read(reinterpret_cast<char*>(&len), 8);
  std::string js(len, '\0');
  f.read(js.data(), static_cast<long>(len));
  if (!f) throw CheckpointError("load_codebook: truncated manifest");
  auto manifest = nlohmann::json::parse(js);
  if (manifest.at("version").get<int>() != 1)
    throw CheckpointError("load_codebook: unknown version");
  Codebook cb;
  cb.num_centers = manifest.at("C").get<int64_t>();
  cb.dim = manifest.at("dim").get<int64_t>();
  manifest.at("feat_mean").get_to(cb.feat_mean);
  manifest.at("feat_std").get_to(cb.feat_std);
  cb.centers = Tensor<double>({cb.num_centers, cb.dim});
  std::vector<float> blob(static_cast<size_t>(cb.num_centers * cb.dim));
  f.read(reinterpret_cast<char*>(blob.data()), static_cast<long>(blob.size() * sizeof(float)));
  if (!f) throw CheckpointError("load_codebook: truncated center blob");
  for (int64_t i = 0; i < cb.centers.size(); ++i) cb.centers[i] = blob[static_cast<size_t>(i)];
  return cb;
}

}  // namespace babble
