// Copyright 2026 The uqshift Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "uq/tape.hpp"
#include "uq/tensor.hpp"

using uq::LabelField;
using uq::Tape;
using uq::Tensor;

namespace {

// Scalarizes a tensor-valued op output with fixed random weights so FD
// checks exercise every output element.
double weighted_sum(const Tensor& t, const std::vector<double>& w) {
  double acc = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) acc += w[i] * t.data[i];
  return acc;
}

std::vector<double> random_weights(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> w(n);
  for (auto& v : w) v = dist(rng);
  return w;
}

}  // namespace

TEST_CASE("matmul identity and hand cases") {
  Tape t;
  Tensor eye({2, 2});
  eye(0, 0) = 1.0;
  eye(1, 1) = 1.0;
  Tensor b({2, 2});
  b(0, 0) = 3.0; b(0, 1) = 4.0; b(1, 0) = 5.0; b(1, 1) = 6.0;
  auto c = t.matmul(t.leaf(eye), t.leaf(b));
  CHECK(t.value(c).data == b.data);

  Tensor row({1, 2});
  row(0, 0) = 1.0; row(0, 1) = 2.0;
  Tensor col({2, 1});
  col(0, 0) = 3.0; col(1, 0) = 4.0;
  auto d = t.matmul(t.leaf(row), t.leaf(col));
  CHECK(t.value(d).data[0] == 11.0);
}

TEST_CASE("matmul shape mismatch throws") {
  Tape t;
  auto a = t.leaf(Tensor({2, 3}));
  auto b = t.leaf(Tensor({2, 2}));
  CHECK_THROWS_AS(t.matmul(a, b), uq::DimensionError);
}

TEST_CASE("matmul gradient vs finite differences") {
  std::mt19937_64 rng(101);
  const Tensor a0 = testref::random_tensor({3, 4}, rng);
  const Tensor b0 = testref::random_tensor({4, 2}, rng);
  const auto w = random_weights(3 * 2, 7);

  Tape t;
  auto a = t.leaf(a0);
  auto b = t.leaf(b0);
  auto c = t.matmul(a, b);
  auto loss = t.sum(t.mul(c, t.leaf([&] {
    Tensor wt({3, 2});
    wt.data = w;
    return wt;
  }())));
  auto grads = t.backward(loss, {a, b});

  auto f_a = [&](const std::vector<double>& x) {
    Tape ft;
    Tensor at = a0;
    at.data = x;
    return weighted_sum(ft.value(ft.matmul(ft.leaf(at), ft.leaf(b0))), w);
  };
  auto f_b = [&](const std::vector<double>& x) {
    Tape ft;
    Tensor bt = b0;
    bt.data = x;
    return weighted_sum(ft.value(ft.matmul(ft.leaf(a0), ft.leaf(bt))), w);
  };
  CHECK(testref::max_grad_rel_err(f_a, a0.data, grads[0].data) < 1e-6);
  CHECK(testref::max_grad_rel_err(f_b, b0.data, grads[1].data) < 1e-6);
}

TEST_CASE("conv2d identity kernel is identity") {
  std::mt19937_64 rng(5);
  Tensor kernel({1, 1, 1, 1});
  kernel.data[0] = 1.0;
  for (int rep = 0; rep < 5; ++rep) {
    const Tensor img = testref::random_tensor({1, 3, 3}, rng);
    Tape t;
    auto out = t.conv2d(t.leaf(img), t.leaf(kernel), 1, 0);
    CHECK(t.value(out).data == img.data);
  }
}

TEST_CASE("conv2d all-ones 3x3, pad 1") {
  Tensor img({1, 3, 3}, 1.0);
  Tensor kernel({1, 1, 3, 3}, 1.0);
  Tape t;
  auto out = t.conv2d(t.leaf(img), t.leaf(kernel), 1, 1);
  const Tensor& o = t.value(out);
  CHECK(o(0, 1, 1) == 9.0);
  CHECK(o(0, 0, 0) == 4.0);
  CHECK(o(0, 0, 2) == 4.0);
  CHECK(o(0, 2, 0) == 4.0);
  CHECK(o(0, 2, 2) == 4.0);
  CHECK(o(0, 0, 1) == 6.0);
}

TEST_CASE("conv2d non-integer output size throws") {
  Tape t;
  auto in = t.leaf(Tensor({1, 6, 6}));
  auto k = t.leaf(Tensor({1, 1, 3, 3}));
  CHECK_THROWS_AS(t.conv2d(in, k, 2, 0), uq::DimensionError);
}

TEST_CASE("conv2d gradient vs finite differences") {
  std::mt19937_64 rng(2024);
  const Tensor in0 = testref::random_tensor({2, 6, 6}, rng);
  const Tensor k0 = testref::random_tensor({3, 2, 3, 3}, rng);
  const std::size_t stride = 1, pad = 1;
  const auto w = random_weights(3 * 6 * 6, 11);

  Tape t;
  auto in = t.leaf(in0);
  auto k = t.leaf(k0);
  auto out = t.conv2d(in, k, stride, pad);
  Tensor wt(t.value(out).shape);
  wt.data = w;
  auto loss = t.sum(t.mul(out, t.leaf(wt)));
  auto grads = t.backward(loss, {in, k});

  auto eval = [&](const Tensor& a, const Tensor& b) {
    Tape ft;
    return weighted_sum(ft.value(ft.conv2d(ft.leaf(a), ft.leaf(b), stride, pad)), w);
  };
  auto f_in = [&](const std::vector<double>& x) {
    Tensor a = in0;
    a.data = x;
    return eval(a, k0);
  };
  auto f_k = [&](const std::vector<double>& x) {
    Tensor b = k0;
    b.data = x;
    return eval(in0, b);
  };
  CHECK(testref::max_grad_rel_err(f_in, in0.data, grads[0].data) < 1e-5);
  CHECK(testref::max_grad_rel_err(f_k, k0.data, grads[1].data) < 1e-5);
}

TEST_CASE("softmax of equal logits is uniform") {
  Tensor logits({3, 2, 2}, 0.7);
  const Tensor p = uq::softmax_field(logits);
  for (double v : p.data) CHECK(v == Catch::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one") {
  std::mt19937_64 rng(17);
  for (int rep = 0; rep < 20; ++rep) {
    const Tensor logits = testref::random_tensor({4, 3, 5}, rng, -30.0, 30.0);
    const Tensor p = uq::softmax_field(logits);
    const std::size_t plane = 3 * 5;
    for (std::size_t px = 0; px < plane; ++px) {
      double s = 0.0;
      for (std::size_t c = 0; c < 4; ++c) {
        const double v = p.data[c * plane + px];
        CHECK(v >= 0.0);
        s += v;
      }
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("cross entropy of one-hot probs is zero") {
  Tensor probs({2, 2, 2});
  LabelField labels(2, 2);
  labels.at(0, 0) = 0; labels.at(0, 1) = 1;
  labels.at(1, 0) = 1; labels.at(1, 1) = 0;
  const std::size_t plane = 4;
  for (std::size_t px = 0; px < plane; ++px)
    probs.data[labels.ids[px] * plane + px] = 1.0;
  Tape t;
  auto ce = t.cross_entropy(t.leaf(probs), labels);
  CHECK(t.value(ce).data[0] == 0.0);
}

TEST_CASE("cross entropy rejects out-of-range labels") {
  Tensor probs({2, 2, 2}, 0.5);
  LabelField labels(2, 2);
  labels.at(1, 1) = 2;
  Tape t;
  auto p = t.leaf(probs);
  CHECK_THROWS_AS(t.cross_entropy(p, labels), uq::ValidationError);
}

TEST_CASE("softmax + cross entropy gradient vs finite differences") {
  std::mt19937_64 rng(303);
  const Tensor logits0 = testref::random_tensor({3, 4, 4}, rng, -2.0, 2.0);
  LabelField labels(4, 4);
  std::uniform_int_distribution<int> cls(0, 2);
  for (auto& id : labels.ids) id = static_cast<std::uint8_t>(cls(rng));

  Tape t;
  auto logits = t.leaf(logits0);
  auto loss = t.cross_entropy(t.softmax_classes(logits), labels);
  auto grads = t.backward(loss, {logits});

  auto f = [&](const std::vector<double>& x) {
    Tape ft;
    Tensor lt = logits0;
    lt.data = x;
    auto l = ft.cross_entropy(ft.softmax_classes(ft.leaf(lt)), labels);
    return ft.value(l).data[0];
  };
  CHECK(testref::max_grad_rel_err(f, logits0.data, grads[0].data) < 1e-6);
}

TEST_CASE("dropout basics") {
  std::mt19937_64 rng(4);
  const Tensor x = testref::random_tensor({8, 8}, rng);

  SECTION("p = 0 is exact identity") {
    const Tensor y = uq::dropout(x, 0.0, true, 99);
    CHECK(y.data == x.data);
  }
  SECTION("deterministic mode is identity for any p") {
    const Tensor y = uq::dropout(x, 0.7, false, 99);
    CHECK(y.data == x.data);
  }
  SECTION("fixed seed is bit-reproducible") {
    const Tensor y1 = uq::dropout(x, 0.4, true, 1234);
    const Tensor y2 = uq::dropout(x, 0.4, true, 1234);
    CHECK(y1.data == y2.data);
  }
  SECTION("p >= 1 rejected") {
    CHECK_THROWS_AS(uq::dropout(x, 1.0, true, 0), uq::ValidationError);
  }
}

TEST_CASE("dropout preserves mean at large n") {
  Tensor ones({1000000}, 1.0);
  const Tensor y = uq::dropout(ones, 0.5, true, 777);
  double mean = 0.0;
  for (double v : y.data) mean += v;
  mean /= static_cast<double>(y.size());
  CHECK(std::abs(mean - 1.0) < 0.01);
}

TEST_CASE("dropout gradient equals its mask") {
  std::mt19937_64 rng(12);
  const Tensor x0 = testref::random_tensor({5, 5}, rng);
  const std::uint64_t seed = 42;
  const auto w = random_weights(25, 3);

  Tape t;
  auto x = t.leaf(x0);
  auto y = t.dropout(x, 0.3, seed);
  Tensor wt({5, 5});
  wt.data = w;
  auto loss = t.sum(t.mul(y, t.leaf(wt)));
  auto grads = t.backward(loss, {x});

  // Same seed => same mask on every FD evaluation.
  auto f = [&](const std::vector<double>& v) {
    Tape ft;
    Tensor xt = x0;
    xt.data = v;
    auto yt = ft.dropout(ft.leaf(xt), 0.3, seed);
    return weighted_sum(ft.value(yt), w);
  };
  CHECK(testref::max_grad_rel_err(f, x0.data, grads[0].data) < 1e-6);
}

TEST_CASE("backward trivial gradients") {
  std::mt19937_64 rng(9);
  const Tensor theta0 = testref::random_tensor({6}, rng);

  SECTION("loss = sum(theta) -> all-ones gradient") {
    Tape t;
    auto th = t.leaf(theta0);
    auto grads = t.backward(t.sum(th), {th});
    for (double g : grads[0].data) CHECK(g == 1.0);
  }
  SECTION("loss = 0.5 * ||theta||^2 -> gradient = theta") {
    Tape t;
    auto th = t.leaf(theta0);
    auto loss = t.scale(t.sum(t.mul(th, th)), 0.5);
    auto grads = t.backward(loss, {th});
    for (std::size_t i = 0; i < theta0.size(); ++i)
      CHECK(grads[0].data[i] == Catch::Approx(theta0.data[i]).margin(1e-15));
  }
  SECTION("backward on non-scalar throws") {
    Tape t;
    auto th = t.leaf(theta0);
    CHECK_THROWS_AS(t.backward(th, {th}), uq::UsageError);
  }
  SECTION("tape cleared after backward") {
    Tape t;
    auto th = t.leaf(theta0);
    t.backward(t.sum(th), {th});
    CHECK(t.node_count() == 0);
  }
}

TEST_CASE("pool, upsample, concat, bias, relu gradients vs finite differences") {
  std::mt19937_64 rng(31337);

  SECTION("max_pool2") {
    const Tensor x0 = testref::random_tensor({2, 4, 4}, rng);
    const auto w = random_weights(2 * 2 * 2, 21);
    Tape t;
    auto x = t.leaf(x0);
    auto y = t.max_pool2(x);
    Tensor wt(t.value(y).shape);
    wt.data = w;
    auto grads = t.backward(t.sum(t.mul(y, t.leaf(wt))), {x});
    auto f = [&](const std::vector<double>& v) {
      Tape ft;
      Tensor xt = x0;
      xt.data = v;
      return weighted_sum(ft.value(ft.max_pool2(ft.leaf(xt))), w);
    };
    CHECK(testref::max_grad_rel_err(f, x0.data, grads[0].data) < 1e-6);
  }
  SECTION("upsample2") {
    const Tensor x0 = testref::random_tensor({2, 3, 3}, rng);
    const auto w = random_weights(2 * 6 * 6, 22);
    Tape t;
    auto x = t.leaf(x0);
    auto y = t.upsample2(x);
    Tensor wt(t.value(y).shape);
    wt.data = w;
    auto grads = t.backward(t.sum(t.mul(y, t.leaf(wt))), {x});
    auto f = [&](const std::vector<double>& v) {
      Tape ft;
      Tensor xt = x0;
      xt.data = v;
      return weighted_sum(ft.value(ft.upsample2(ft.leaf(xt))), w);
    };
    CHECK(testref::max_grad_rel_err(f, x0.data, grads[0].data) < 1e-6);
  }
  SECTION("concat_channels") {
    const Tensor a0 = testref::random_tensor({2, 3, 3}, rng);
    const Tensor b0 = testref::random_tensor({1, 3, 3}, rng);
    const auto w = random_weights(3 * 3 * 3, 23);
    Tape t;
    auto a = t.leaf(a0);
    auto b = t.leaf(b0);
    auto y = t.concat_channels(a, b);
    Tensor wt(t.value(y).shape);
    wt.data = w;
    auto grads = t.backward(t.sum(t.mul(y, t.leaf(wt))), {a, b});
    auto f = [&](const std::vector<double>& v) {
      Tape ft;
      Tensor at = a0;
      at.data = v;
      return weighted_sum(ft.value(ft.concat_channels(ft.leaf(at), ft.leaf(b0))), w);
    };
    CHECK(testref::max_grad_rel_err(f, a0.data, grads[0].data) < 1e-6);
  }
  SECTION("bias_channels") {
    const Tensor x0 = testref::random_tensor({3, 4, 4}, rng);
    const Tensor b0 = testref::random_tensor({3}, rng);
    const auto w = random_weights(3 * 4 * 4, 24);
    Tape t;
    auto x = t.leaf(x0);
    auto b = t.leaf(b0);
    auto y = t.bias_channels(x, b);
    Tensor wt(t.value(y).shape);
    wt.data = w;
    auto grads = t.backward(t.sum(t.mul(y, t.leaf(wt))), {x, b});
    auto f = [&](const std::vector<double>& v) {
      Tape ft;
      Tensor bt = b0;
      bt.data = v;
      return weighted_sum(ft.value(ft.bias_channels(ft.leaf(x0), ft.leaf(bt))), w);
    };
    CHECK(testref::max_grad_rel_err(f, b0.data, grads[1].data) < 1e-6);
  }
  SECTION("relu") {
    const Tensor x0 = testref::random_tensor_away_from_zero({4, 4}, rng);
    const auto w = random_weights(16, 25);
    Tape t;
    auto x = t.leaf(x0);
    auto y = t.relu(x);
    Tensor wt({4, 4});
    wt.data = w;
    auto grads = t.backward(t.sum(t.mul(y, t.leaf(wt))), {x});
    auto f = [&](const std::vector<double>& v) {
      Tape ft;
      Tensor xt = x0;
      xt.data = v;
      return weighted_sum(ft.value(ft.relu(ft.leaf(xt))), w);
    };
    CHECK(testref::max_grad_rel_err(f, x0.data, grads[0].data) < 1e-6);
  }
}
