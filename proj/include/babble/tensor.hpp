// babble/tensor.hpp
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
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "babble/common.hpp"

namespace babble {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

/// Dense row-major tensor. The shape is fixed at construction; elements are
/// mutable. Instantiated with float for training and double for oracle and
/// gradient-check paths.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)), data_(shape_numel(shape_), T(0)) {
    for (int64_t d : shape_)
      if (d <= 0) throw DimensionError("tensor extent must be positive, got " + shape_str(shape_));
  }

  static Tensor full(Shape shape, T v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
  }

  static Tensor from(Shape shape, std::vector<T> values) {
    Tensor t(std::move(shape));
    if (static_cast<int64_t>(values.size()) != t.size())
      throw DimensionError("element count does not match shape " + shape_str(t.shape_));
    t.data_ = std::move(values);
    return t;
  }

  static Tensor scalar(T v) { return full({1}, v); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  T operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  T& at(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
  T at(int64_t i, int64_t j) const { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
  T& at(int64_t i, int64_t j, int64_t k) {
    return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  T at(int64_t i, int64_t j, int64_t k) const {
    return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (T v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (int64_t i = 0; i < size(); ++i) out[i] = static_cast<U>(data_[static_cast<size_t>(i)]);
    return out;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

namespace detail {
template <typename T>
void require_rank(const Tensor<T>& t, int rank, const char* what) {
  if (t.rank() != rank)
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_str(t.shape()));
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Forward kernels. All reductions run in a fixed sequential order.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank(a, 2, "matmul lhs");
  detail::require_rank(b, 2, "matmul rhs");
  if (a.dim(1) != b.dim(0))
    throw DimensionError("matmul: inner extents differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> c({m, n});
  for (int64_t i = 0; i < m; ++i) {
    T* crow = c.data() + i * n;
    const T* arow = a.data() + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b.data() + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  detail::require_rank(a, 2, "transpose");
  const int64_t m = a.dim(0), n = a.dim(1);
  Tensor<T> out({n, m});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

/// Row-wise softmax in the translated form: with s = x / c, every exponent
/// argument is c * (s_j - max_j' s_j') <= 0, so no overflow can occur before
/// an additive bias term would enter. Numerically equal to plain softmax.
template <typename T>
Tensor<T> stable_softmax_rows(const Tensor<T>& logits, double scale_c = 32.0) {
  if (scale_c <= 0) throw ValueError("stable_softmax_rows: scale must be positive");
  if (logits.rank() < 1) throw DimensionError("stable_softmax_rows: need rank >= 1");
  if (!logits.all_finite()) throw ValueError("stable_softmax_rows: non-finite input");
  const int64_t cols = logits.dim(logits.rank() - 1);
  const int64_t rows = logits.size() / cols;
  Tensor<T> out(logits.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const T* in = logits.data() + r * cols;
    T* o = out.data() + r * cols;
    T mx = in[0] / static_cast<T>(scale_c);
    for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, in[j] / static_cast<T>(scale_c));
    T sum = 0;
    for (int64_t j = 0; j < cols; ++j) {
      o[j] = std::exp((in[j] / static_cast<T>(scale_c) - mx) * static_cast<T>(scale_c));
      sum += o[j];
    }
    for (int64_t j = 0; j < cols; ++j) o[j] /= sum;
  }
  return out;
}

/// Row-wise log-softmax, translated by the row max.
template <typename T>
Tensor<T> log_softmax_rows(const Tensor<T>& logits) {
  detail::require_rank(logits, 2, "log_softmax_rows");
  const int64_t rows = logits.dim(0), cols = logits.dim(1);
  Tensor<T> out(logits.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const T* in = logits.data() + r * cols;
    T* o = out.data() + r * cols;
    T mx = in[0];
    for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, in[j]);
    T sum = 0;
    for (int64_t j = 0; j < cols; ++j) sum += std::exp(in[j] - mx);
    const T lse = mx + std::log(sum);
    for (int64_t j = 0; j < cols; ++j) o[j] = in[j] - lse;
  }
  return out;
}

/// Normalizes the last axis to zero mean and unit variance, then applies the
/// elementwise affine transform. A constant row maps to the bias.
template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                    double eps = 1e-5) {
  if (x.rank() < 1) throw DimensionError("layernorm: need rank >= 1");
  const int64_t d = x.dim(x.rank() - 1);
  if (gain.size() != d || bias.size() != d)
    throw DimensionError("layernorm: gain/bias must match last extent " + std::to_string(d));
  const int64_t rows = x.size() / d;
  Tensor<T> out(x.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const T* in = x.data() + r * d;
    T* o = out.data() + r * d;
    T mean = 0;
    for (int64_t j = 0; j < d; ++j) mean += in[j];
    mean /= static_cast<T>(d);
    T var = 0;
    for (int64_t j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= static_cast<T>(d);
    const T inv = T(1) / std::sqrt(var + static_cast<T>(eps));
    for (int64_t j = 0; j < d; ++j) o[j] = (in[j] - mean) * inv * gain[j] + bias[j];
  }
  return out;
}

/// Exact (erf-based) GELU.
template <typename T>
T gelu_scalar(T x) {
  return static_cast<T>(0.5) * x * (T(1) + std::erf(x * static_cast<T>(0.7071067811865476)));
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) out[i] = gelu_scalar(x[i]);
  return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) {
    const T v = x[i];
    out[i] = v >= 0 ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
  }
  return out;
}

inline int64_t conv1d_out_len(int64_t in_len, int64_t kernel, int64_t stride) {
  return (in_len - kernel) / stride + 1;
}

/// Grouped 1-d convolution (cross-correlation) without padding.
/// x: [C_in, L], w: [C_out, C_in/groups, K], bias: [C_out] or empty.
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int64_t stride,
                 int64_t groups) {
  detail::require_rank(x, 2, "conv1d input");
  detail::require_rank(w, 3, "conv1d weight");
  const int64_t cin = x.dim(0), len = x.dim(1);
  const int64_t cout = w.dim(0), cin_g = w.dim(1), kernel = w.dim(2);
  if (stride < 1) throw ValueError("conv1d: stride must be >= 1");
  if (groups < 1 || cin % groups != 0 || cout % groups != 0)
    throw DimensionError("conv1d: channels must be divisible by groups");
  if (cin_g != cin / groups)
    throw DimensionError("conv1d: weight expects " + std::to_string(cin_g * groups) +
                         " input channels, got " + std::to_string(cin));
  if (!bias.empty() && bias.size() != cout)
    throw DimensionError("conv1d: bias length must equal output channels");
  if (len < kernel)
    throw LengthError("conv1d: input length " + std::to_string(len) + " shorter than kernel " +
                      std::to_string(kernel) + ", output would be empty");
  const int64_t out_len = conv1d_out_len(len, kernel, stride);
  const int64_t cout_g = cout / groups;
  Tensor<T> out({cout, out_len});
  for (int64_t co = 0; co < cout; ++co) {
    const int64_t g = co / cout_g;
    const T b = bias.empty() ? T(0) : bias[co];
    T* orow = out.data() + co * out_len;
    for (int64_t t = 0; t < out_len; ++t) {
      T acc = b;
      const int64_t base = t * stride;
      for (int64_t ci = 0; ci < cin_g; ++ci) {
        const T* xrow = x.data() + (g * cin_g + ci) * len + base;
        const T* wrow = w.data() + (co * cin_g + ci) * kernel;
        for (int64_t k = 0; k < kernel; ++k) acc += wrow[k] * xrow[k];
      }
      orow[t] = acc;
    }
  }
  return out;
}

}  // namespace babble
