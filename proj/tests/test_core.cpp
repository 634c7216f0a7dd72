// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "clamp/core/adam.hpp"
#include "clamp/core/checkpoint.hpp"
#include "clamp/core/grad_check.hpp"
#include "clamp/core/graph.hpp"
#include "clamp/core/param_store.hpp"
#include "clamp/core/rng.hpp"
#include "clamp/core/tensor.hpp"

using namespace clamp::core;

TEST_CASE("counter rng: deterministic, order-free, sane statistics") {
  CounterRng r(42);
  CHECK(r.bits("a", 7) == CounterRng(42).bits("a", 7));
  CHECK(r.bits("a", 7) != r.bits("a", 8));
  CHECK(r.bits("a", 7) != r.bits("b", 7));
  CHECK(r.bits("a", 7) != CounterRng(43).bits("a", 7));

  // draws are pure functions of (seed, stream, idx): query out of order
  double x = r.uniform("u", 1000);
  (void)r.uniform("u", 1);
  CHECK(r.uniform("u", 1000) == x);

  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double v = r.uniform("stats", i);
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    sum += v;
    sq += v * v;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.02));
  CHECK(sq / n == doctest::Approx(1.0 / 3).epsilon(0.03));

  double nsum = 0, nsq = 0;
  for (int i = 0; i < n; ++i) {
    double v = r.normal("gauss", i);
    nsum += v;
    nsq += v * v;
  }
  CHECK(nsum / n == doctest::Approx(0.0).epsilon(1).scale(0.05));
  CHECK(nsq / n == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("rng stream cursor and subsampling") {
  RngStream s1(7, "batch");
  RngStream s2(7, "batch");
  for (int i = 0; i < 10; ++i) CHECK(s1.uniform() == s2.uniform());
  RngStream s3(7, "pick");
  auto a = s3.sample_without_replacement(100, 10);
  CHECK(a.size() == 10);
  std::vector<int64_t> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::unique(sorted.begin(), sorted.end()) == sorted.end());
  for (auto v : a) CHECK(v < 100);
  RngStream s4(7, "pick");
  CHECK(s4.sample_without_replacement(100, 10) == a);
}

TEST_CASE("matmul: parallel kernel bit-identical to serial reference") {
  CounterRng r(3);
  for (auto [m, k, n] : {std::tuple{7, 5, 9}, {33, 17, 21}, {64, 64, 64}}) {
    Tensor64 A({m, k}), B({k, n});
    for (int64_t i = 0; i < A.numel(); ++i) A[i] = r.normal("A", i);
    for (int64_t i = 0; i < B.numel(); ++i) B[i] = r.normal("B", i);
    Tensor64 C1 = matmul(A, B);
    Tensor64 C2 = matmul_serial(A, B);
    REQUIRE(C1.shape == C2.shape);
    for (int64_t i = 0; i < C1.numel(); ++i) CHECK(C1[i] == C2[i]);
  }
  // 3x2 * 2x2 hand check
  Tensor64 A({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor64 B({3, 2}, {7, 8, 9, 10, 11, 12});
  Tensor64 C = matmul(A, B);
  CHECK(C.at(0, 0) == 58);
  CHECK(C.at(0, 1) == 64);
  CHECK(C.at(1, 0) == 139);
  CHECK(C.at(1, 1) == 154);
}

TEST_CASE("matmul transpose-variant kernels agree with explicit transposes") {
  CounterRng r(4);
  int m = 11, k = 6, n = 8;
  Tensor64 A({m, k}), B({n, k}), At({k, m});
  for (int64_t i = 0; i < A.numel(); ++i) A[i] = r.normal("A", i);
  for (int64_t i = 0; i < B.numel(); ++i) B[i] = r.normal("B", i);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < k; ++j) At.at(j, i) = A.at(i, j);

  Tensor64 C1({m, n});
  matmul_nt(A.data.data(), B.data.data(), C1.data.data(), m, k, n);
  Tensor64 Bt({k, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) Bt.at(j, i) = B.at(i, j);
  Tensor64 C2 = matmul(A, Bt);
  for (int64_t i = 0; i < C1.numel(); ++i) CHECK(C1[i] == doctest::Approx(C2[i]).epsilon(1e-12));

  Tensor64 D1({m, n});  // A^T with A stored (k x m)
  Tensor64 Akm({k, m});
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < m; ++j) Akm.at(i, j) = r.normal("Akm", i * m + j);
  matmul_tn(Akm.data.data(), Bt.data.data(), D1.data.data(), m, k, n);
  Tensor64 Amk({m, k});
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < m; ++j) Amk.at(j, i) = Akm.at(i, j);
  Tensor64 D2 = matmul(Amk, Bt);
  for (int64_t i = 0; i < D1.numel(); ++i) CHECK(D1[i] == doctest::Approx(D2[i]).epsilon(1e-12));
}

TEST_CASE("shape errors name the op and the offending dims") {
  Graph64 g;
  auto a = g.input(Tensor64({2, 3}));
  auto b = g.input(Tensor64({4, 2}));
  CHECK_THROWS_WITH_AS(g.matmul(a, b), doctest::Contains("matmul"), std::runtime_error);
  try {
    g.matmul(a, b);
  } catch (const std::runtime_error& e) {
    std::string msg = e.what();
    CHECK(msg.find("(2,3)") != std::string::npos);
    CHECK(msg.find("(4,2)") != std::string::npos);
  }
  CHECK_THROWS_WITH_AS(g.add(a, b), doctest::Contains("add"), std::runtime_error);
  CHECK_THROWS_AS(g.backward(a), std::runtime_error);  // non-scalar root
}

static Tensor64 randn(CounterRng& r, std::vector<int> shape, const char* stream) {
  Tensor64 t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = r.normal(stream, i);
  return t;
}

TEST_CASE("grad check: linear layer mse") {
  ParamStore64 ps(11);
  ps.add("W", {5, 3}, Init::kNormal, 0.5);
  ps.add("b", {3}, Init::kNormal, 0.5);
  CounterRng r(12);
  Tensor64 X = randn(r, {4, 5}, "X");
  Tensor64 T = randn(r, {4, 3}, "T");
  auto build = [&](Graph64& g) {
    auto y = g.add_bias(g.matmul(g.input(X), g.param("W")), g.param("b"));
    return g.mse(y, g.input(T));
  };
  auto rep = grad_check(ps, build);
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("grad check: every primitive in one composite") {
  ParamStore64 ps(21);
  ps.add("W1", {6, 8}, Init::kXavier);
  ps.add("b1", {8}, Init::kNormal, 0.1);
  ps.add("W2", {8, 8}, Init::kXavier);
  ps.add("gain", {8}, Init::kOnes);
  ps.add("bias", {8}, Init::kZeros);
  ps.add("emb", {10, 6}, Init::kNormal, 0.5);
  ps.add("freq", {4, 3}, Init::kNormal, 0.3);
  ps.add("sq", {4, 4}, Init::kNormal, 0.2);
  ps.add("t", {1}, Init::kConst, 1.3);
  ps.add("s", {1}, Init::kConst, -0.4);
  CounterRng r(22);
  Tensor64 coords = randn(r, {5, 3}, "coords");
  Tensor64 T = randn(r, {5, 4}, "T");

  auto build = [&](Graph64& g) {
    auto x = g.gather_rows(g.param("emb"), {0, 3, 7, 7, 9});  // repeated index
    auto h = g.add_bias(g.matmul(x, g.param("W1")), g.param("b1"));
    h = g.gelu(h);
    h = g.layer_norm(h, g.param("gain"), g.param("bias"));
    h = g.matmul(h, g.param("W2"));
    h = g.rope_rows(h, g.param("freq"), coords.cast<double>());
    auto parts = std::vector{g.slice_cols(h, 0, 4), g.slice_cols(h, 4, 8)};
    auto h2 = g.add(parts[0], parts[1]);
    h2 = g.tanh_(g.add(h2, g.sigmoid_(h2)));
    h2 = g.mul(h2, g.softplus(g.relu(h2)));
    h2 = g.softmax_rows(h2);
    h2 = g.l2_normalize_rows(h2);
    h2 = g.scale_by(h2, g.param("t"));
    h2 = g.shift_by(h2, g.param("s"));
    // inverse path: small well-conditioned square matrix
    auto eye = g.input([&] {
      Tensor64 I({4, 4});
      for (int i = 0; i < 4; ++i) I.at(i, i) = 1.0;
      return I;
    }());
    auto M = g.add(eye, g.scale(g.param("sq"), 0.3));
    auto Minv = g.inverse(M);
    auto h3 = g.matmul(h2, Minv);
    auto top = g.concat_rows({g.slice_rows(h3, 0, 2), g.slice_rows(h3, 2, 5)});
    auto wide = g.concat_cols({top, g.square(top)});
    auto narrow = g.slice_cols(wide, 0, 4);
    return g.add(g.mse(narrow, g.input(T)), g.scale(g.mean(g.exp_(g.scale(top, 0.1))), 0.5));
  };
  auto rep = grad_check(ps, build, 1e-5, 64, 99);
  INFO("max_rel_err=", rep.max_rel_err);
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("grad check: log path and transpose") {
  ParamStore64 ps(31);
  ps.add("A", {3, 4}, Init::kNormal, 0.4);
  auto build = [&](Graph64& g) {
    auto a = g.param("A");
    auto pos = g.add_const(g.exp_(a), 0.5);
    return g.mean(g.log_(g.matmul(pos, g.transpose(pos))));
  };
  auto rep = grad_check(ps, build);
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("grad check: im2col conv stack") {
  ParamStore64 ps(41);
  ps.add("K1", {12, 5}, Init::kXavier);  // 2x2x3 -> 5
  CounterRng r(42);
  Tensor64 img = randn(r, {36, 3}, "img");  // 6x6x3
  auto build = [&](Graph64& g) {
    auto cols = g.im2col(g.input(img), 6, 6, 3, 2, 2);
    auto y = g.relu(g.matmul(cols, g.param("K1")));
    return g.mean(g.square(y));
  };
  auto rep = grad_check(ps, build);
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("linearity of gradients: a*f + b*g") {
  ParamStore64 ps(51);
  ps.add("W", {4, 4}, Init::kNormal, 0.6);
  CounterRng r(52);
  Tensor64 X = randn(r, {3, 4}, "X");
  auto gradf = [&](double a, double b) {
    Graph64 g(&ps);
    auto x = g.input(X);
    auto w = g.param("W");
    auto f = g.mean(g.tanh_(g.matmul(x, w)));
    auto h = g.mean(g.square(g.matmul(x, w)));
    auto loss = g.add(g.scale(f, a), g.scale(h, b));
    g.backward(loss);
    return g.param_gradients().at("W");
  };
  auto gf = gradf(1, 0), gh = gradf(0, 1), gc = gradf(0.7, -1.3);
  for (int64_t i = 0; i < gc.numel(); ++i) {
    double expect = 0.7 * gf[i] - 1.3 * gh[i];
    CHECK(std::fabs(gc[i] - expect) <= 1e-12 * std::max(1.0, std::fabs(expect)));
  }
}

TEST_CASE("frozen parameters get exactly-zero gradients") {
  ParamStore64 ps(61);
  ps.add("W", {3, 3}, Init::kNormal, 0.5);
  ps.add("V", {3, 3}, Init::kNormal, 0.5);
  ps.set_trainable("V", false);
  Graph64 g(&ps);
  CounterRng r(62);
  auto x = g.input(randn(r, {2, 3}, "x"));
  auto y = g.matmul(g.matmul(x, g.param("W")), g.param("V"));
  auto loss = g.mean(g.square(y));
  g.backward(loss);
  auto grads = g.param_gradients();
  bool any_w = false;
  for (auto v : grads.at("W").data) any_w = any_w || v != 0.0;
  CHECK(any_w);
  for (auto v : grads.at("V").data) CHECK(v == 0.0);
}

TEST_CASE("dropout: p=0 identity, p>0 deterministic mask with scaled grads") {
  ParamStore64 ps(71);
  ps.add("W", {4, 6}, Init::kNormal, 0.5);
  CounterRng r(72);
  Tensor64 X = randn(r, {3, 4}, "x");
  CounterRng mask_rng(5);

  Graph64 g0(&ps);
  auto y0 = g0.matmul(g0.input(X), g0.param("W"));
  CHECK(g0.dropout(y0, 0.0, mask_rng, "d") == y0);

  auto run = [&]() {
    Graph64 g(&ps);
    auto y = g.dropout(g.matmul(g.input(X), g.param("W")), 0.5, mask_rng, "d");
    auto loss = g.mean(g.square(y));
    g.backward(loss);
    return std::pair{g.value(y), g.param_gradients().at("W")};
  };
  auto [v1, g1] = run();
  auto [v2, g2] = run();
  for (int64_t i = 0; i < v1.numel(); ++i) CHECK(v1[i] == v2[i]);
  for (int64_t i = 0; i < g1.numel(); ++i) CHECK(g1[i] == g2[i]);
  int zeros = 0;
  for (auto v : v1.data) zeros += v == 0.0;
  CHECK(zeros > 0);
  CHECK(zeros < v1.numel());
}

TEST_CASE("float mode runs the same graph") {
  ParamStore32 ps(81);
  ps.add("W", {4, 4}, Init::kXavier);
  Graph32 g(&ps);
  CounterRng r(82);
  Tensor32 X({3, 4});
  for (int64_t i = 0; i < X.numel(); ++i) X[i] = float(r.normal("x", i));
  auto y = g.softmax_rows(g.matmul(g.input(X), g.param("W")));
  auto loss = g.mean(y);
  g.backward(loss);
  auto grads = g.param_gradients();
  CHECK(grads.at("W").shape == std::vector<int>{4, 4});
  CHECK(g.value(y).all_finite());
}

TEST_CASE("determinism: identical seeds give bit-identical runs (64-bit)") {
  auto run = [&]() {
    ParamStore64 ps(91);
    ps.add("W", {8, 8}, Init::kXavier);
    ps.add("b", {8}, Init::kNormal, 0.1);
    Graph64 g(&ps);
    CounterRng r(92);
    auto x = g.input(randn(r, {4, 8}, "x"));
    auto y = g.l2_normalize_rows(g.gelu(g.add_bias(g.matmul(x, g.param("W")), g.param("b"))));
    auto loss = g.mean(g.square(y));
    g.backward(loss);
    return std::pair{g.scalar_value(loss), g.param_gradients().at("W")};
  };
  auto [l1, g1] = run();
  auto [l2, g2] = run();
  CHECK(l1 == l2);
  for (int64_t i = 0; i < g1.numel(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("checkpoint: round-trip is bit-exact and cross-precision casts") {
  ParamStore64 ps(101);
  ps.add("alpha/W", {7, 3}, Init::kNormal, 1.0);
  ps.add("beta/emb", {11, 4}, Init::kXavier);
  ps.add("gamma/t", {1}, Init::kConst, 2.302585);
  std::string path = "ckpt_test_core.bin";
  save_checkpoint(ps, path);

  auto loaded = load_checkpoint<double>(path);
  REQUIRE(loaded.size() == ps.size());
  for (auto& name : ps.names()) {
    auto& a = ps.get(name);
    auto& b = loaded.get(name);
    REQUIRE(a.shape == b.shape);
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
  }

  auto as_float = load_checkpoint<float>(path);
  for (auto& name : ps.names()) {
    auto& a = ps.get(name);
    auto& b = as_float.get(name);
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(b[i] == float(a[i]));
  }

  ParamStore64 other(0);
  other.add("alpha/W", {7, 3});
  other.add("beta/emb", {11, 4});
  other.add("gamma/t", {1});
  load_checkpoint_into(other, path);
  for (auto& name : ps.names())
    for (int64_t i = 0; i < ps.get(name).numel(); ++i)
      CHECK(other.get(name)[i] == ps.get(name)[i]);

  ParamStore64 wrong(0);
  wrong.add("alpha/W", {7, 4});
  wrong.add("beta/emb", {11, 4});
  wrong.add("gamma/t", {1});
  CHECK_THROWS_AS(load_checkpoint_into(wrong, path), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("param store: init reproducible from seed, creation-order free") {
  ParamStore64 a(7), b(7);
  a.add("x", {4, 4}, Init::kNormal, 1.0);
  a.add("y", {4, 4}, Init::kNormal, 1.0);
  b.add("y", {4, 4}, Init::kNormal, 1.0);  // reversed creation order
  b.add("x", {4, 4}, Init::kNormal, 1.0);
  for (int64_t i = 0; i < 16; ++i) {
    CHECK(a.get("x")[i] == b.get("x")[i]);
    CHECK(a.get("y")[i] == b.get("y")[i]);
  }
  ParamStore64 c(8);
  c.add("x", {4, 4}, Init::kNormal, 1.0);
  bool differs = false;
  for (int64_t i = 0; i < 16; ++i) differs = differs || c.get("x")[i] != a.get("x")[i];
  CHECK(differs);
}

TEST_CASE("adam converges on a quadratic and skips frozen params") {
  ParamStore64 ps(111);
  ps.add("w", {4}, Init::kNormal, 1.0);
  ps.add("frozen", {2}, Init::kConst, 3.0);
  ps.set_trainable("frozen", false);
  Tensor64 target({4}, {1.0, -2.0, 0.5, 4.0});
  AdamT<double> opt;
  for (int step = 0; step < 400; ++step) {
    Graph64 g(&ps);
    auto loss = g.mse(g.param("w"), g.input(target));
    g.backward(loss);
    opt.step(ps, g.param_gradients(), 0.05);
  }
  for (int i = 0; i < 4; ++i) CHECK(ps.get("w")[i] == doctest::Approx(target[i]).epsilon(1e-3));
  CHECK(ps.get("frozen")[0] == 3.0);
  CHECK(ps.get("frozen")[1] == 3.0);
}

TEST_CASE("lr schedules") {
  CHECK(cosine_warmup_lr(0, 1000, 1e-3, 0.05) == doctest::Approx(1e-3 / 50));
  CHECK(cosine_warmup_lr(49, 1000, 1e-3, 0.05) == doctest::Approx(1e-3));
  CHECK(cosine_warmup_lr(50, 1000, 1e-3, 0.05) <= 1e-3);
  CHECK(cosine_warmup_lr(999, 1000, 1e-3, 0.05) < 2e-5);
  CHECK(linear_warmup_lr(0, 100, 1e-4) == doctest::Approx(1e-6));
  CHECK(linear_warmup_lr(99, 100, 1e-4) == doctest::Approx(1e-4));
  CHECK(linear_warmup_lr(5000, 100, 1e-4) == 1e-4);
}

TEST_CASE("inverse: identity sanity and singular failure reports condition") {
  Graph64 g;
  Tensor64 M({3, 3}, {4, 0, 0, 0, 2, 1, 0, 0, 1});
  auto inv = g.inverse(g.input(M));
  auto prod = matmul(g.value(inv), M);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(prod.at(i, j) == doctest::Approx(i == j ? 1.0 : 0.0));

  Tensor64 S({2, 2}, {1, 2, 2, 4});
  CHECK_THROWS_WITH_AS(g.inverse(g.input(S)), doctest::Contains("singular"), std::runtime_error);
}

TEST_CASE("grad_check subsamples large params deterministically") {
  ParamStore64 ps(121);
  ps.add("big", {40, 40}, Init::kNormal, 0.2);
  CounterRng r(122);
  Tensor64 X = randn(r, {2, 40}, "x");
  auto build = [&](Graph64& g) {
    return g.mean(g.square(g.matmul(g.input(X), g.param("big"))));
  };
  auto r1 = grad_check(ps, build, 1e-5, 32, 7);
  auto r2 = grad_check(ps, build, 1e-5, 32, 7);
  REQUIRE(r1.per_param.size() == 1);
  CHECK(r1.per_param[0].checked == 32);
  CHECK(r1.max_rel_err == r2.max_rel_err);
  CHECK(r1.max_rel_err < 1e-6);
}
