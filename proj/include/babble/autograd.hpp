// babble/autograd.hpp
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

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "babble/tensor.hpp"

namespace babble {

/// A named, trainable tensor. Gradients accumulate across backward() calls
/// until zero_grad() resets them.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() {
    for (int64_t i = 0; i < grad.size(); ++i) grad[i] = T(0);
  }
};

/// Owns every parameter of a model in a stable registration order. Names are
/// unique; iteration order defines the checkpoint blob layout and the
/// optimizer update order.
template <typename T>
class ParamStore {
 public:
  Parameter<T>& create(const std::string& name, Shape shape) {
    if (byname_.count(name)) throw ValueError("duplicate parameter name: " + name);
    params_.push_back(std::make_unique<Parameter<T>>(name, Tensor<T>(std::move(shape))));
    byname_[name] = params_.back().get();
    return *params_.back();
  }

  Parameter<T>& get(const std::string& name) {
    auto it = byname_.find(name);
    if (it == byname_.end()) throw ValueError("unknown parameter: " + name);
    return *it->second;
  }

  const std::vector<std::unique_ptr<Parameter<T>>>& all() const { return params_; }

  int64_t total_parameters() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::map<std::string, Parameter<T>*> byname_;
};

// ---------------------------------------------------------------------------
// Reverse-mode graph
// ---------------------------------------------------------------------------

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated lazily during backward
  std::vector<std::shared_ptr<Node<T>>> parents;
  // Reads this->grad and accumulates into parents' grads.
  std::function<void(Node<T>&)> backprop;
  Parameter<T>* param = nullptr;
};

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

namespace detail {
template <typename T>
void ensure_grad(Node<T>& n) {
  if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
}

template <typename T>
void axpy(Tensor<T>& dst, const Tensor<T>& src) {
  for (int64_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}
}  // namespace detail

/// Handle to a node of the dynamically built computation graph. Graphs are
/// rebuilt per step; nodes are freed when the last handle goes away.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(NodePtr<T> n) : node_(std::move(n)) {}

  static Var constant(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    return Var(std::move(n));
  }

  /// Leaf that mirrors a parameter's current value; backward() adds into the
  /// parameter's gradient.
  static Var param(Parameter<T>& p) {
    auto n = std::make_shared<Node<T>>();
    n->value = p.value;
    n->param = &p;
    return Var(std::move(n));
  }

  const Tensor<T>& value() const { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  const NodePtr<T>& node() const { return node_; }
  bool defined() const { return node_ != nullptr; }

 private:
  NodePtr<T> node_;
};

/// Factory for custom ops: domain headers build nodes with their own
/// backprop closures through this single entry point.
template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents,
               std::function<void(Node<T>&)> backprop) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->parents.reserve(parents.size());
  for (auto& p : parents) n->parents.push_back(p.node());
  n->backprop = std::move(backprop);
  return Var<T>(std::move(n));
}

/// Runs reverse-mode accumulation from a scalar loss. Parameter gradients
/// accumulate; node gradients belong to this graph instance.
template <typename T>
void backward(const Var<T>& loss) {
  if (!loss.defined() || loss.value().size() != 1)
    throw DimensionError("backward: loss must be a scalar tensor");

  // Iterative DFS postorder; parents precede children in `order`.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  struct Frame {
    Node<T>* n;
    size_t next;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.node().get(), 0});
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      Node<T>* p = f.n->parents[f.next++].get();
      if (!visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  Node<T>* root = loss.node().get();
  detail::ensure_grad(*root);
  root->grad[0] += T(1);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->grad.empty()) detail::ensure_grad(*n);
    if (n->backprop) n->backprop(*n);
    if (n->param) detail::axpy(n->param->grad, n->grad);
  }
}

// ---------------------------------------------------------------------------
// Differentiable ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  return make_op<T>(matmul(a.value(), b.value()), {a, b}, [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    detail::ensure_grad(pa);
    detail::ensure_grad(pb);
    detail::axpy(pa.grad, matmul(self.grad, transpose(pb.value)));
    detail::axpy(pb.grad, matmul(transpose(pa.value), self.grad));
  });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
  return make_op<T>(transpose(a.value()), {a}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    detail::ensure_grad(p);
    detail::axpy(p.grad, transpose(self.grad));
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  if (!a.value().same_shape(b.value())) throw DimensionError("add: shape mismatch");
  Tensor<T> out = a.value();
  detail::axpy(out, b.value());
  return make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
    for (int i = 0; i < 2; ++i) {
      auto& p = *self.parents[static_cast<size_t>(i)];
      detail::ensure_grad(p);
      detail::axpy(p.grad, self.grad);
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  if (!a.value().same_shape(b.value())) throw DimensionError("sub: shape mismatch");
  Tensor<T> out = a.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    detail::ensure_grad(pa);
    detail::ensure_grad(pb);
    detail::axpy(pa.grad, self.grad);
    for (int64_t i = 0; i < pb.grad.size(); ++i) pb.grad[i] -= self.grad[i];
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  if (!a.value().same_shape(b.value())) throw DimensionError("mul: shape mismatch");
  Tensor<T> out = a.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    detail::ensure_grad(pa);
    detail::ensure_grad(pb);
    for (int64_t i = 0; i < self.grad.size(); ++i) {
      pa.grad[i] += self.grad[i] * pb.value[i];
      pb.grad[i] += self.grad[i] * pa.value[i];
    }
  });
}

/// y = a * x + b with scalar constants.
template <typename T>
Var<T> affine_const(const Var<T>& x, T a, T b) {
  Tensor<T> out(x.value().shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a * x.value()[i] + b;
  return make_op<T>(std::move(out), {x}, [a](Node<T>& self) {
    auto& p = *self.parents[0];
    detail::ensure_grad(p);
    for (int64_t i = 0; i < p.grad.size(); ++i) p.grad[i] += a * self.grad[i];
  });
}

/// y = s[0] * x where s is a learnable scalar of shape [1].
template <typename T>
Var<T> scale_by(const Var<T>& x, const Var<T>& s) {
  if (s.value().size() != 1) throw DimensionError("scale_by: scale must be a one-element tensor");
  const T sv = s.value()[0];
  Tensor<T> out(x.value().shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = sv * x.value()[i];
  return make_op<T>(std::move(out), {x, s}, [](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& ps = *self.parents[1];
    detail::ensure_grad(px);
    detail::ensure_grad(ps);
    const T sv = ps.value[0];
    T acc = 0;
    for (int64_t i = 0; i < self.grad.size(); ++i) {
      px.grad[i] += sv * self.grad[i];
      acc += self.grad[i] * px.value[i];
    }
    ps.grad[0] += acc;
  });
}

/// Adds a length-C row vector to every row of a [R, C] matrix.
template <typename T>
Var<T> add_rowvec(const Var<T>& x, const Var<T>& b) {
  detail::require_rank(x.value(), 2, "add_rowvec input");
  const int64_t rows = x.value().dim(0), cols = x.value().dim(1);
  if (b.value().size() != cols) throw DimensionError("add_rowvec: vector length mismatch");
  Tensor<T> out = x.value();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) out.at(r, c) += b.value()[c];
  return make_op<T>(std::move(out), {x, b}, [rows, cols](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pb = *self.parents[1];
    detail::ensure_grad(px);
    detail::ensure_grad(pb);
    detail::axpy(px.grad, self.grad);
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < cols; ++c) pb.grad[c] += self.grad[r * cols + c];
  });
}

/// y_r = sum_c x[r, c] * v[c].
template <typename T>
Var<T> matvec(const Var<T>& x, const Var<T>& v) {
  detail::require_rank(x.value(), 2, "matvec input");
  const int64_t rows = x.value().dim(0), cols = x.value().dim(1);
  if (v.value().size() != cols) throw DimensionError("matvec: vector length mismatch");
  Tensor<T> out({rows});
  for (int64_t r = 0; r < rows; ++r) {
    T acc = 0;
    for (int64_t c = 0; c < cols; ++c) acc += x.value().at(r, c) * v.value()[c];
    out[r] = acc;
  }
  return make_op<T>(std::move(out), {x, v}, [rows, cols](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pv = *self.parents[1];
    detail::ensure_grad(px);
    detail::ensure_grad(pv);
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < cols; ++c) {
        px.grad[r * cols + c] += self.grad[r] * pv.value[c];
        pv.grad[c] += self.grad[r] * px.value[r * cols + c];
      }
  });
}

/// Rank-1 view of one row of a [R, C] matrix.
template <typename T>
Var<T> row_of(const Var<T>& x, int64_t row) {
  detail::require_rank(x.value(), 2, "row_of input");
  const int64_t cols = x.value().dim(1);
  Tensor<T> out({cols});
  for (int64_t c = 0; c < cols; ++c) out[c] = x.value().at(row, c);
  return make_op<T>(std::move(out), {x}, [row, cols](Node<T>& self) {
    auto& p = *self.parents[0];
    detail::ensure_grad(p);
    for (int64_t c = 0; c < cols; ++c) p.grad[row * cols + c] += self.grad[c];
  });
}

/// One element as a [1] tensor.
template <typename T>
Var<T> element(const Var<T>& x, int64_t index) {
  Tensor<T> out({1});
  out[0] = x.value()[index];
  return make_op<T>(std::move(out), {x}, [index](Node<T>& self) {
    auto& p = *self.parents[0];
    detail::ensure_grad(p);
    p.grad[index] += self.grad[0];
  });
}

template <typename T>
Var<T> slice_cols(const Var<T>& x, int64_t start, int64_t n) {
  detail::require_rank(x.value(), 2, "slice_cols input");
  const int64_t rows = x.value().dim(0), cols = x.value().dim(1);
  if (start < 0 || n <= 0 || start + n > cols) throw DimensionError("slice_cols: range out of bounds");
  Tensor<T> out({rows, n});
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < n; ++c) out.at(r, c) = x.value().at(r, start + c);
  return make_op<T>(std::move(out), {x}, [rows, cols, start, n](Node<T>& self) {
    auto& p = *self.parents[0];
    detail::ensure_grad(p);
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < n; ++c) p.grad[r * cols + start + c] += self.grad[r * n + c];
  });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const int64_t rows = parts[0].value().dim(0);
  int64_t total = 0;
  for (const auto& p : parts) {
    detail::require_rank(p.value(), 2, "concat_cols input");
    if (p.value().dim(0) != rows) throw DimensionError("concat_cols: row count mismatch");
    total += p.value().dim(1);
  }
  Tensor<T> out({rows, total});
  int64_t off = 0;
  for (const auto& p : parts) {
    const int64_t n = p.value().dim(1);
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < n; ++c) out.at(r, off + c) = p.value().at(r, c);
    off += n;
  }
  std::vector<int64_t> widths;
  for (const auto& p : parts) widths.push_back(p.value().dim(1));
  return make_op<T>(std::move(out), parts, [rows, total, widths](Node<T>& self) {
    int64_t off = 0;
    for (size_t i = 0; i < widths.size(); ++i) {
      auto& p = *self.parents[i];
      detail::ensure_grad(p);
      const int64_t n = widths[i];
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < n; ++c) p.grad[r * n + c] += self.grad[r * total + off + c];
      off += n;
    }
  });
}

/// Zero padding along the last axis of a [C, L] tensor.
template <typename T>
Var<T> pad_cols(const Var<T>& x, int64_t left, int64_t right) {
  detail::require_rank(x.value(), 2, "pad_cols input");
  const int64_t rows = x.value().dim(0), cols = x.value().dim(1);
  Tensor<T> out({rows, left + cols + right});
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) out.at(r, left + c) = x.value().at(r, c);
  return make_op<T>(std::move(out), {x}, [rows, cols, left](Node<T>& self) {
    auto& p = *self.parents[0];
    detail::ensure_grad(p);
    const int64_t padded = self.value.dim(1);
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < cols; ++c) p.grad[r * cols + c] += self.grad[r * padded + left + c];
  });
}

template <typename T>
Var<T> layernorm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, double eps = 1e-5) {
  Tensor<T> out = layernorm(x.value(), gain.value(), bias.value(), eps);
  const int64_t d = x.value().dim(x.value().rank() - 1);
  const int64_t rows = x.value().size() / d;
  // Cache normalized rows and inverse stddevs for the backward pass.
  auto xhat = std::make_shared<Tensor<T>>(x.value().shape());
  auto inv = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    const T* in = x.value().data() + r * d;
    T mean = 0;
    for (int64_t j = 0; j < d; ++j) mean += in[j];
    mean /= static_cast<T>(d);
    T var = 0;
    for (int64_t j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= static_cast<T>(d);
    const T iv = T(1) / std::sqrt(var + static_cast<T>(eps));
    (*inv)[static_cast<size_t>(r)] = iv;
    for (int64_t j = 0; j < d; ++j) (*xhat)[r * d + j] = (in[j] - mean) * iv;
  }
  return make_op<T>(std::move(out), {x, gain, bias}, [rows, d, xhat, inv](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pg = *self.parents[1];
    auto& pb = *self.parents[2];
    detail::ensure_grad(px);
    detail::ensure_grad(pg);
    detail::ensure_grad(pb);
    for (int64_t r = 0; r < rows; ++r) {
      const T* g = self.grad.data() + r * d;
      const T* xh = xhat->data() + r * d;
      const T iv = (*inv)[static_cast<size_t>(r)];
      T mean_gy = 0, mean_gyxh = 0;
      for (int64_t j = 0; j < d; ++j) {
        const T gy = g[j] * pg.value[j];
        mean_gy += gy;
        mean_gyxh += gy * xh[j];
      }
      mean_gy /= static_cast<T>(d);
      mean_gyxh /= static_cast<T>(d);
      for (int64_t j = 0; j < d; ++j) {
        const T gy = g[j] * pg.value[j];
        px.grad[r * d + j] += iv * (gy - mean_gy - xh[j] * mean_gyxh);
        pg.grad[j] += g[j] * xh[j];
        pb.grad[j] += g[j];
      }
    }
  });
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  return make_op<T>(gelu(x.value()), {x}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    detail::ensure_grad(p);
    constexpr T inv_sqrt_2pi = static_cast<T>(0.3989422804014327);
    for (int64_t i = 0; i < p.grad.size(); ++i) {
      const T v = p.value[i];
      const T cdf = static_cast<T>(0.5) * (T(1) + std::erf(v * static_cast<T>(0.7071067811865476)));
      const T pdf = inv_sqrt_2pi * std::exp(static_cast<T>(-0.5) * v * v);
      p.grad[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  return make_op<T>(sigmoid(x.value()), {x}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    detail::ensure_grad(p);
    for (int64_t i = 0; i < p.grad.size(); ++i) {
      const T y = self.value[i];
      p.grad[i] += self.grad[i] * y * (T(1) - y);
    }
  });
}

template <typename T>
Var<T> stable_softmax_rows(const Var<T>& x, double scale_c = 32.0) {
  Tensor<T> out = stable_softmax_rows(x.value(), scale_c);
  const int64_t cols = x.value().dim(x.value().rank() - 1);
  const int64_t rows = x.value().size() / cols;
  return make_op<T>(std::move(out), {x}, [rows, cols](Node<T>& self) {
    auto& p = *self.parents[0];
    detail::ensure_grad(p);
    for (int64_t r = 0; r < rows; ++r) {
      const T* y = self.value.data() + r * cols;
      const T* g = self.grad.data() + r * cols;
      T dot = 0;
      for (int64_t j = 0; j < cols; ++j) dot += y[j] * g[j];
      for (int64_t j = 0; j < cols; ++j) p.grad[r * cols + j] += y[j] * (g[j] - dot);
    }
  });
}

template <typename T>
Var<T> log_softmax_rows(const Var<T>& x) {
  Tensor<T> out = log_softmax_rows(x.value());
  const int64_t rows = x.value().dim(0), cols = x.value().dim(1);
  return make_op<T>(std::move(out), {x}, [rows, cols](Node<T>& self) {
    auto& p = *self.parents[0];
    detail::ensure_grad(p);
    for (int64_t r = 0; r < rows; ++r) {
      const T* y = self.value.data() + r * cols;
      const T* g = self.grad.data() + r * cols;
      T gsum = 0;
      for (int64_t j = 0; j < cols; ++j) gsum += g[j];
      for (int64_t j = 0; j < cols; ++j) p.grad[r * cols + j] += g[j] - std::exp(y[j]) * gsum;
    }
  });
}

template <typename T>
Var<T> conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int64_t stride,
              int64_t groups) {
  const bool has_bias = bias.defined();
  Tensor<T> out = conv1d(x.value(), w.value(), has_bias ? bias.value() : Tensor<T>(), stride, groups);
  std::vector<Var<T>> parents = {x, w};
  if (has_bias) parents.push_back(bias);
  const int64_t cin = x.value().dim(0), len = x.value().dim(1);
  const int64_t cout = w.value().dim(0), cin_g = w.value().dim(1), kernel = w.value().dim(2);
  const int64_t out_len = out.dim(1);
  const int64_t cout_g = cout / groups;
  return make_op<T>(std::move(out), parents,
                    [cin, len, cout, cin_g, kernel, out_len, cout_g, stride, has_bias](Node<T>& self) {
                      auto& px = *self.parents[0];
                      auto& pw = *self.parents[1];
                      detail::ensure_grad(px);
                      detail::ensure_grad(pw);
                      (void)cin;
                      for (int64_t co = 0; co < cout; ++co) {
                        const int64_t g = co / cout_g;
                        const T* grow = self.grad.data() + co * out_len;
                        for (int64_t ci = 0; ci < cin_g; ++ci) {
                          const int64_t xi = g * cin_g + ci;
                          const T* xrow = px.value.data() + xi * len;
                          T* dxrow = px.grad.data() + xi * len;
                          const T* wrow = pw.value.data() + (co * cin_g + ci) * kernel;
                          T* dwrow = pw.grad.data() + (co * cin_g + ci) * kernel;
                          for (int64_t t = 0; t < out_len; ++t) {
                            const T gv = grow[t];
                            const int64_t base = t * stride;
                            for (int64_t k = 0; k < kernel; ++k) {
                              dwrow[k] += gv * xrow[base + k];
                              dxrow[base + k] += gv * wrow[k];
                            }
                          }
                        }
                      }
                      if (has_bias) {
                        auto& pb = *self.parents[2];
                        detail::ensure_grad(pb);
                        for (int64_t co = 0; co < cout; ++co) {
                          const T* grow = self.grad.data() + co * out_len;
                          T acc = 0;
                          for (int64_t t = 0; t < out_len; ++t) acc += grow[t];
                          pb.grad[co] += acc;
                        }
                      }
                    });
}

template <typename T>
Var<T> conv1d(const Var<T>& x, const Var<T>& w, int64_t stride, int64_t groups) {
  return conv1d(x, w, Var<T>(), stride, groups);
}

template <typename T>
Var<T> sum_all(const Var<T>& x) {
  T acc = 0;
  for (int64_t i = 0; i < x.value().size(); ++i) acc += x.value()[i];
  return make_op<T>(Tensor<T>::scalar(acc), {x}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    detail::ensure_grad(p);
    for (int64_t i = 0; i < p.grad.size(); ++i) p.grad[i] += self.grad[0];
  });
}

}  // namespace babble
