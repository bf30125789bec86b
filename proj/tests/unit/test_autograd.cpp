// Copyright (c) 2026 The sdet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <cstdio>
#include <filesystem>
#include <functional>

#include "doctest.h"
#include "sdet/common/error.hpp"
#include "sdet/nn/checkpoint.hpp"
#include "sdet/nn/layers.hpp"
#include "sdet/nn/optim.hpp"
#include "sdet/sparse/kernels.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace sdet;
using namespace sdet::nn;
using sdet::testing::random_coords;
using sdet::testing::random_matrix;
using oracle::away_from_zero;
using oracle::gradcheck;
using oracle::probe;

namespace {

using Vd = Var<double>;

SparseVar<double> random_sparse_leaf(std::mt19937_64& rng, int n, std::size_t ch, int stride = 1) {
  auto geom = sparse::CoordSet::canonical(random_coords(rng, n, 0.3, stride), stride, 0.1);
  return {geom, Vd::leaf(random_matrix<double>(rng, geom->size(), ch))};
}

}  // namespace

TEST_SUITE("autograd") {

TEST_CASE("linear map and dead relu") {
  auto x = Matrix<double>(1, 3);
  x[0] = 1.5, x[1] = -2.0, x[2] = 0.25;
  auto w = Vd::leaf(Matrix<double>(1, 3, 0.7));
  backward(sum(mul(w, Vd::constant(x))));
  CHECK(w.grad() == x);

  auto c = Vd::leaf(Matrix<double>(1, 1, 2.0));
  backward(relu(neg(c)));
  CHECK(c.grad()(0, 0) == 0.0);
}

TEST_CASE("non-scalar root is a usage error") {
  auto w = Vd::leaf(Matrix<double>(2, 2, 1.0));
  CHECK_THROWS_AS(backward(scale(w, 2.0)), UsageError);
}

TEST_CASE("repeated backward accumulates leaf gradients") {
  auto w = Vd::leaf(Matrix<double>(1, 2, 1.0));
  auto loss = sum(scale(w, 3.0));
  backward(loss);
  backward(loss);
  CHECK(w.grad()(0, 0) == 6.0);
  w.zero_grad();
  CHECK(w.grad()(0, 1) == 0.0);
}

TEST_CASE("shared subexpression visited once") {
  auto w = Vd::leaf(Matrix<double>(1, 1, 2.0));
  auto a = scale(w, 3.0);
  auto loss = sum(add(a, a));
  backward(loss);
  CHECK(w.grad()(0, 0) == 6.0);
}

TEST_CASE("no-grad mode records no tape") {
  auto w = Vd::leaf(Matrix<double>(1, 1, 2.0));
  NoGradGuard ng;
  auto y = scale(w, 2.0);
  CHECK_FALSE(y.requires_grad());
  CHECK(y.node()->parents.empty());
}

TEST_CASE("dense ops pass finite-difference checks") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> dim(1, 6);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = dim(rng), k = dim(rng), m = dim(rng);
    auto a = Vd::leaf(away_from_zero(random_matrix<double>(rng, n, k)));
    auto b = Vd::leaf(random_matrix<double>(rng, n, k));
    auto w = Vd::leaf(random_matrix<double>(rng, k, m));
    auto bias = Vd::leaf(random_matrix<double>(rng, 1, m));
    auto r1 = random_matrix<double>(rng, n, k);
    auto r2 = random_matrix<double>(rng, n, m);
    CHECK(gradcheck({a, b}, [&] { return probe(add(a, b), r1); }) <= 1e-4);
    CHECK(gradcheck({a, b}, [&] { return probe(sub(a, b), r1); }) <= 1e-4);
    CHECK(gradcheck({a, b}, [&] { return probe(mul(a, b), r1); }) <= 1e-4);
    CHECK(gradcheck({a}, [&] { return probe(scale(a, -1.7), r1); }) <= 1e-4);
    CHECK(gradcheck({a}, [&] { return probe(relu(a), r1); }) <= 1e-4);
    CHECK(gradcheck({a, w}, [&] { return probe(matmul(a, w), r2); }) <= 1e-4);
    CHECK(gradcheck({a, w, bias}, [&] { return probe(linear(a, w, &bias), r2); }) <= 1e-4);
    auto r3 = random_matrix<double>(rng, 2 * n, k);
    CHECK(gradcheck({a, b}, [&] { return probe(concat_rows<double>({a, b}), r3); }) <= 1e-4);
  }
}

TEST_CASE("sparse ops pass finite-difference checks") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t cin = 1 + trial % 3, cout = 1 + (trial / 3) % 3;
    auto x = random_sparse_leaf(rng, 5, cin);
    auto w3 = Vd::leaf(random_matrix<double>(rng, 27 * cin, cout));
    auto w2 = Vd::leaf(random_matrix<double>(rng, 8 * cin, cout));
    auto b = Vd::leaf(random_matrix<double>(rng, 1, cout));

    auto subm = [&] { return conv(x, w3, &b, 3, sparse::ConvMode::submanifold()); };
    auto r = random_matrix<double>(rng, subm().size(), cout);
    CHECK(gradcheck({x.feats, w3, b}, [&] { return probe(subm().feats, r); }) <= 1e-4);

    auto strided = [&] { return conv(x, w2, &b, 2, sparse::ConvMode::strided(2)); };
    auto rs = random_matrix<double>(rng, strided().size(), cout);
    CHECK(gradcheck({x.feats, w2, b}, [&] { return probe(strided().feats, rs); }) <= 1e-4);

    auto xc = random_sparse_leaf(rng, 3, cin, 2);
    auto tc = [&] { return transposed_conv(xc, w2, &b, 2, 2); };
    auto rt = random_matrix<double>(rng, tc().size(), cout);
    CHECK(gradcheck({xc.feats, w2, b}, [&] { return probe(tc().feats, rt); }) <= 1e-4);

    auto gamma = Vd::leaf(random_matrix<double>(rng, 1, cin, 0.5, 1.5));
    auto beta = Vd::leaf(random_matrix<double>(rng, 1, cin));
    Matrix<double> rm(1, cin), rv(1, cin, 1.0);
    auto bn = [&] { return batch_norm(x, gamma, beta, rm, rv, BatchNormOptions{}); };
    auto rb = random_matrix<double>(rng, x.size(), cin);
    CHECK(gradcheck({x.feats, gamma, beta}, [&] { return probe(bn().feats, rb); }) <= 1e-4);
    BatchNormOptions aff;
    aff.affine_only = true;
    CHECK(gradcheck({x.feats, gamma, beta},
                    [&] { return probe(batch_norm(x, gamma, beta, rm, rv, aff).feats, rb); }) <= 1e-4);

    // Union add of two different geometries.
    auto y = random_sparse_leaf(rng, 5, cin);
    auto u = [&] { return add(x, y); };
    auto ru = random_matrix<double>(rng, u().size(), cin);
    CHECK(gradcheck({x.feats, y.feats}, [&] { return probe(u().feats, ru); }) <= 1e-4);
  }
}

TEST_CASE("three-layer sparse network gradient") {
  std::mt19937_64 rng(3);
  ParamStore<double> store;
  SparseConvLayer<double> c1(store, "c1", 2, 4, 3, sparse::ConvMode::submanifold(), true, rng);
  SparseConvLayer<double> c2(store, "c2", 4, 4, 2, sparse::ConvMode::strided(2), true, rng);
  TransposedConvLayer<double> c3(store, "c3", 4, 3, 2, 2, true, rng);
  BatchNormLayer<double> bn(store, "bn", 4);
  auto x = random_sparse_leaf(rng, 6, 2);
  auto net = [&] {
    auto h = relu(bn(c1(x), true));
    return c3(relu(c2(h)));
  };
  auto r = random_matrix<double>(rng, net().size(), 3);
  std::vector<Vd> leaves{x.feats};
  for (auto& p : store.all())
    if (p.trainable) leaves.push_back(p.var);
  CHECK(gradcheck(leaves, [&] { return probe(net().feats, r); }) <= 1e-4);
}

TEST_CASE("batch norm normalizes per channel") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd(5.0, 2.0);
  auto geom = sparse::CoordSet::canonical(random_coords(rng, 10, 0.3), 1, 0.1);
  Matrix<double> f(geom->size(), 2);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = nd(rng);
  SparseVar<double> x{geom, Vd::constant(f)};
  Matrix<double> rm(1, 2), rv(1, 2, 1.0);
  auto gamma = Vd::constant(Matrix<double>(1, 2, 1.0));
  auto beta = Vd::constant(Matrix<double>(1, 2));
  BatchNormOptions opt;
  opt.eps = 0.0;
  auto y = batch_norm(x, gamma, beta, rm, rv, opt);
  for (std::size_t c = 0; c < 2; ++c) {
    double m = 0, s = 0;
    for (std::size_t r = 0; r < y.size(); ++r) m += y.feats.value()(r, c);
    m /= y.size();
    for (std::size_t r = 0; r < y.size(); ++r) s += std::pow(y.feats.value()(r, c) - m, 2);
    CHECK(std::abs(m) <= 1e-6);
    CHECK(std::abs(std::sqrt(s / y.size()) - 1.0) <= 1e-6);
    CHECK(rm(0, c) != 0.0);  // running mean moved toward 5
  }
}

TEST_CASE("adding a tensor to its negation gives zeros") {
  std::mt19937_64 rng(5);
  auto x = random_sparse_leaf(rng, 5, 3);
  SparseVar<double> nx{x.geom, neg(x.feats)};
  auto z = add(x, nx);
  for (double v : z.feats.value().flat()) CHECK(v == 0.0);
}

TEST_CASE("frozen branch receives no gradient") {
  std::mt19937_64 rng(6);
  auto x = random_sparse_leaf(rng, 5, 2);
  auto frozen = Vd::constant(random_matrix<double>(rng, x.size(), 2));
  auto y = add_features(x, frozen);
  backward(sum(y.feats));
  CHECK(x.feats.has_grad());
  CHECK_FALSE(frozen.requires_grad());
  CHECK_FALSE(frozen.has_grad());
}

TEST_CASE("adamw basic behaviour") {
  ParamStore<double> store;
  auto w = store.add("w", Matrix<double>(1, 3, 0.5));
  w.mutable_grad();  // zero gradient
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  AdamW<double> opt(cfg);
  opt.step(store);
  CHECK(w.value() == Matrix<double>(1, 3, 0.5));
  CHECK(opt.step_count() == 1);

  ParamStore<double> s2;
  auto v = s2.add("v", Matrix<double>(1, 1, 1.0));
  AdamWConfig c2;
  c2.lr = 0.1;
  AdamW<double> o2(c2);
  backward(sum(mul(v, v)));
  const Matrix<double> g = v.grad();
  o2.step(s2);
  CHECK(v.value()(0, 0) < 1.0);
  CHECK(v.value()(0, 0) > 0.0);
  CHECK(v.grad() == g);  // untouched
}

TEST_CASE("adamw minimizes a convex quadratic") {
  // f(w) = sum_i a_i (w_i - t_i)^2, optimum 0 at w = t.
  ParamStore<double> store;
  auto w = store.add("w", Matrix<double>(1, 4));
  Matrix<double> a(1, 4), t(1, 4);
  a[0] = 1.0, a[1] = 2.0, a[2] = 0.5, a[3] = 3.0;
  t[0] = 0.3, t[1] = -0.2, t[2] = 0.5, t[3] = 0.1;
  AdamWConfig cfg;
  cfg.lr = 0.05;
  cfg.weight_decay = 0.0;
  AdamW<double> opt(cfg);
  auto f = [&] {
    auto d = sub(w, Vd::constant(t));
    return sum(mul(Vd::constant(a), mul(d, d)));
  };
  for (int s = 0; s < 200; ++s) {
    store.zero_grad();
    backward(f());
    opt.set_lr(stepped_lr(0.05, s, 200, {0.5, 0.75}, 0.2));
    opt.step(store);
  }
  CHECK(f().value()(0, 0) < 1e-3);
}

TEST_CASE("gradient clipping scales the update, not the gradient") {
  ParamStore<double> store;
  auto w = store.add("w", Matrix<double>(1, 1, 0.0));
  w.mutable_grad()(0, 0) = 1000.0;
  AdamW<double> opt;
  opt.step(store);
  CHECK(opt.last_grad_norm() == 1000.0);
  CHECK(w.grad()(0, 0) == 1000.0);
  CHECK(w.value()(0, 0) == doctest::Approx(-1e-3).epsilon(1e-6));
}

TEST_CASE("stepped learning rate milestones") {
  CHECK(stepped_lr(1.0, 0, 120) == 1.0);
  CHECK(stepped_lr(1.0, 79, 120) == 1.0);
  CHECK(stepped_lr(1.0, 80, 120) == doctest::Approx(0.1));
  CHECK(stepped_lr(1.0, 110, 120) == doctest::Approx(0.01));
}

TEST_CASE("identical seeds give identical loss trajectories") {
  auto run = [] {
    std::mt19937_64 rng(77);
    ParamStore<float> store;
    SparseConvLayer<float> c1(store, "c1", 3, 8, 3, sparse::ConvMode::submanifold(), true, rng);
    BatchNormLayer<float> bn(store, "bn", 8);
    auto geom = sparse::CoordSet::canonical(random_coords(rng, 8, 0.3), 1, 0.1);
    SparseVar<float> x{geom, Var<float>::constant(random_matrix<float>(rng, geom->size(), 3))};
    auto target = Var<float>::constant(random_matrix<float>(rng, geom->size(), 8));
    AdamW<float> opt;
    std::vector<float> losses;
    for (int s = 0; s < 10; ++s) {
      store.zero_grad();
      auto d = sub(relu(bn(c1(x), true)).feats, target);
      auto loss = sum(mul(d, d));
      backward(loss);
      opt.step(store);
      losses.push_back(loss.value()(0, 0));
    }
    return losses;
  };
  const auto a = run();
  sparse::set_backend(sparse::Backend::Serial);
  const auto b = run();
  sparse::set_backend(sparse::Backend::Parallel);
  CHECK(a == run());
  CHECK(a == b);
}

TEST_CASE("checkpoint round trip") {
  std::mt19937_64 rng(8);
  ParamStore<float> store;
  Linear<float> lin(store, "head.cls", 4, 3, true, rng);
  BatchNormLayer<float> bn(store, "bn", 4);
  bn.running_mean.mutable_value()[2] = 0.25f;
  AdamW<float> opt;
  backward(sum(lin(Var<float>::constant(random_matrix<float>(rng, 5, 4)))));
  opt.step(store);

  const auto path = (std::filesystem::temp_directory_path() / "sdet_ckpt_test.bin").string();
  save_checkpoint<float>(path, store, &opt, {{"model_config", "num_classes=3"}});

  std::mt19937_64 rng2(9);
  ParamStore<float> other;
  Linear<float> lin2(other, "head.cls", 4, 3, true, rng2);
  BatchNormLayer<float> bn2(other, "bn", 4);
  AdamW<float> opt2;
  const auto meta = load_checkpoint<float>(path, other, &opt2);
  REQUIRE(meta.size() == 1);
  CHECK(meta[0].second == "num_classes=3");
  for (std::size_t i = 0; i < store.all().size(); ++i) CHECK(store.all()[i].var.value() == other.all()[i].var.value());
  CHECK(opt2.step_count() == 1);
  CHECK(opt2.state().at("head.cls.weight").m == opt.state().at("head.cls.weight").m);

  ParamStore<float> bigger;
  Linear<float> lin3(bigger, "head.cls", 4, 5, true, rng2);
  CHECK_THROWS_AS(load_checkpoint<float>(path, bigger, nullptr), ParseError);
  {
    std::FILE* f = std::fopen(path.c_str(), "r+b");
    std::fputc('X', f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(read_checkpoint(path), ParseError);
  std::filesystem::remove(path);
}

TEST_CASE("duplicate parameter names rejected") {
  ParamStore<double> store;
  store.add("a", Matrix<double>(1, 1));
  CHECK_THROWS_AS(store.add("a", Matrix<double>(1, 1)), ConfigError);
}

}  // TEST_SUITE
