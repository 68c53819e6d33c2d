// tests/test_autograd.cpp
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

#include "babble/autograd.hpp"
#include "testutil.hpp"

using babble::ParamStore;
using babble::Tensor;
using babble::Var;

TEST_CASE("gradient of sum is all ones", "[autograd]") {
  ParamStore<double> store;
  auto& p = store.create("p", {3, 4});
  testutil::fill_uniform(p.value, *std::make_unique<babble::Rng>(7));
  auto loss = babble::sum_all(Var<double>::param(p));
  babble::backward(loss);
  for (int64_t i = 0; i < p.grad.size(); ++i) REQUIRE(p.grad[i] == 1.0);
}

TEST_CASE("gradient of half squared norm is the value", "[autograd]") {
  ParamStore<double> store;
  auto& p = store.create("p", {5});
  babble::Rng rng(8);
  testutil::fill_uniform(p.value, rng);
  auto v = Var<double>::param(p);
  auto loss = babble::affine_const(babble::sum_all(babble::mul(v, v)), 0.5, 0.0);
  babble::backward(loss);
  for (int64_t i = 0; i < p.grad.size(); ++i)
    REQUIRE(p.grad[i] == Catch::Approx(p.value[i]).margin(1e-15));
}

TEST_CASE("repeated backward accumulates parameter gradients", "[autograd]") {
  ParamStore<double> store;
  auto& p = store.create("p", {4});
  auto loss = babble::sum_all(Var<double>::param(p));
  babble::backward(loss);
  auto loss2 = babble::sum_all(Var<double>::param(p));
  babble::backward(loss2);
  for (int64_t i = 0; i < p.grad.size(); ++i) REQUIRE(p.grad[i] == 2.0);
  store.zero_grad();
  for (int64_t i = 0; i < p.grad.size(); ++i) REQUIRE(p.grad[i] == 0.0);
}

TEST_CASE("backward rejects non-scalar loss", "[autograd]") {
  ParamStore<double> store;
  auto& p = store.create("p", {4});
  auto v = Var<double>::param(p);
  REQUIRE_THROWS_AS(babble::backward(v), babble::DimensionError);
}

TEST_CASE("parameter names must be unique", "[autograd]") {
  ParamStore<double> store;
  store.create("w", {2});
  REQUIRE_THROWS_AS(store.create("w", {3}), babble::ValueError);
}

TEST_CASE("matmul gradients match finite differences", "[autograd]") {
  ParamStore<double> store;
  auto& a = store.create("a", {3, 4});
  auto& b = store.create("b", {4, 2});
  babble::Rng rng(10);
  testutil::fill_uniform(a.value, rng);
  testutil::fill_uniform(b.value, rng);
  auto r = Var<double>::constant(testutil::random_tensor({3, 2}, 99));
  testutil::check_grads_fd(store, [&] {
    return babble::sum_all(babble::mul(babble::matmul(Var<double>::param(a), Var<double>::param(b)), r));
  });
}

TEST_CASE("conv1d gradients match finite differences", "[autograd]") {
  ParamStore<double> store;
  auto& x = store.create("x", {4, 13});
  auto& w = store.create("w", {6, 2, 3});
  auto& b = store.create("b", {6});
  babble::Rng rng(11);
  testutil::fill_uniform(x.value, rng);
  testutil::fill_uniform(w.value, rng);
  testutil::fill_uniform(b.value, rng);
  auto r = Var<double>::constant(testutil::random_tensor({6, 6}, 98));
  testutil::check_grads_fd(store, [&] {
    auto y = babble::conv1d(Var<double>::param(x), Var<double>::param(w), Var<double>::param(b), 2, 2);
    return babble::sum_all(babble::mul(y, r));
  });
}

TEST_CASE("layernorm gradients match finite differences", "[autograd]") {
  ParamStore<double> store;
  auto& x = store.create("x", {3, 6});
  auto& g = store.create("g", {6});
  auto& b = store.create("b", {6});
  babble::Rng rng(12);
  testutil::fill_uniform(x.value, rng);
  testutil::fill_uniform(g.value, rng, 0.5, 1.5);
  testutil::fill_uniform(b.value, rng);
  auto r = Var<double>::constant(testutil::random_tensor({3, 6}, 97));
  testutil::check_grads_fd(
      store,
      [&] {
        auto y = babble::layernorm(Var<double>::param(x), Var<double>::param(g), Var<double>::param(b));
        return babble::sum_all(babble::mul(y, r));
      },
      1e-6, 1e-5);
}

TEST_CASE("elementwise op gradients match finite differences", "[autograd]") {
  ParamStore<double> store;
  auto& x = store.create("x", {2, 7});
  babble::Rng rng(13);
  testutil::fill_uniform(x.value, rng, -2.0, 2.0);
  auto r = Var<double>::constant(testutil::random_tensor({2, 7}, 96));

  SECTION("gelu") {
    testutil::check_grads_fd(store, [&] {
      return babble::sum_all(babble::mul(babble::gelu(Var<double>::param(x)), r));
    });
  }
  SECTION("sigmoid") {
    testutil::check_grads_fd(store, [&] {
      return babble::sum_all(babble::mul(babble::sigmoid(Var<double>::param(x)), r));
    });
  }
  SECTION("stable softmax") {
    testutil::check_grads_fd(store, [&] {
      return babble::sum_all(babble::mul(babble::stable_softmax_rows(Var<double>::param(x)), r));
    });
  }
  SECTION("log softmax") {
    testutil::check_grads_fd(store, [&] {
      return babble::sum_all(babble::mul(babble::log_softmax_rows(Var<double>::param(x)), r));
    });
  }
  SECTION("affine and transpose") {
    auto rt = Var<double>::constant(testutil::random_tensor({7, 2}, 95));
    testutil::check_grads_fd(store, [&] {
      auto y = babble::transpose(babble::affine_const(Var<double>::param(x), 1.7, -0.3));
      return babble::sum_all(babble::mul(y, rt));
    });
  }
}

TEST_CASE("structural op gradients match finite differences", "[autograd]") {
  ParamStore<double> store;
  auto& x = store.create("x", {3, 8});
  auto& v = store.create("v", {8});
  auto& s = store.create("s", {1});
  babble::Rng rng(14);
  testutil::fill_uniform(x.value, rng);
  testutil::fill_uniform(v.value, rng);
  s.value[0] = 1.3;

  SECTION("add_rowvec and matvec") {
    auto r = Var<double>::constant(testutil::random_tensor({3}, 94));
    testutil::check_grads_fd(store, [&] {
      auto y = babble::add_rowvec(Var<double>::param(x), Var<double>::param(v));
      auto z = babble::matvec(y, Var<double>::param(v));
      return babble::sum_all(babble::mul(z, r));
    });
  }
  SECTION("slice, concat, pad, scale_by, row_of, element") {
    auto r = Var<double>::constant(testutil::random_tensor({3, 10}, 93));
    testutil::check_grads_fd(store, [&] {
      auto xv = Var<double>::param(x);
      auto left = babble::slice_cols(xv, 0, 5);
      auto right = babble::slice_cols(xv, 5, 3);
      auto cat = babble::concat_cols<double>({left, right});          // [3, 8]
      auto padded = babble::pad_cols(cat, 1, 1);                      // [3, 10]
      auto scaled = babble::scale_by(padded, Var<double>::param(s));  // [3, 10]
      auto row = babble::row_of(scaled, 1);
      auto e = babble::element(row, 2);
      return babble::add(babble::sum_all(babble::mul(scaled, r)), babble::sum_all(e));
    });
  }
  SECTION("sub and mul") {
    auto r = Var<double>::constant(testutil::random_tensor({3, 8}, 92));
    testutil::check_grads_fd(store, [&] {
      auto xv = Var<double>::param(x);
      auto y = babble::sub(babble::mul(xv, xv), xv);
      return babble::sum_all(babble::mul(y, r));
    });
  }
}

TEST_CASE("node reused by two consumers accumulates both contributions", "[autograd]") {
  ParamStore<double> store;
  auto& p = store.create("p", {3});
  babble::Rng rng(15);
  testutil::fill_uniform(p.value, rng);
  testutil::check_grads_fd(store, [&] {
    auto v = Var<double>::param(p);
    auto a = babble::mul(v, v);
    auto b = babble::add(a, v);   // v used twice, a once more
    auto c = babble::add(a, b);
    return babble::sum_all(c);
  });
}
