#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <functional>

#include "doctest.h"
#include "ebmcot/gradcheck.hpp"
#include "ebmcot/paramset.hpp"
#include "ebmcot/rng.hpp"
#include "ebmcot/tape.hpp"
#include "ebmcot/tensor.hpp"

using namespace ebmcot;

TEST_CASE("tensor construction and validation") {
  Tensor t({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK_THROWS_AS(Tensor({0, 3}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), std::invalid_argument);
  CHECK(Tensor::scalar(4.0).item() == 4.0);
}

TEST_CASE("matmul value") {
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({2, 2}, {5, 6, 7, 8});
  Tensor c = matmul_values(a, b);
  CHECK(c.at(0, 0) == 19.0);
  CHECK(c.at(0, 1) == 22.0);
  CHECK(c.at(1, 0) == 43.0);
  CHECK(c.at(1, 1) == 50.0);
}

TEST_CASE("shape mismatches carry both shapes in the message") {
  Tensor a({2, 3});
  Tensor b({2, 3});
  try {
    matmul_values(a, b);
    FAIL("expected throw");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2, 3]") != std::string::npos);
  }
  Tape t;
  Value va = t.leaf(Tensor({2, 2}));
  Value vb = t.leaf(Tensor({3, 2}));
  CHECK_THROWS_AS(add(va, vb), std::invalid_argument);
}

TEST_CASE("non-finite inputs are rejected at tape entry") {
  Tape t;
  Tensor bad({2}, {1.0, std::nan("")});
  CHECK_THROWS_AS(t.leaf(bad), std::invalid_argument);
  CHECK_THROWS_AS(t.constant(bad), std::invalid_argument);
}

TEST_CASE("softmax of zeros is uniform and rows always sum to one") {
  Tape t;
  Value v = t.leaf(Tensor({2}, {0.0, 0.0}));
  Value s = softmax_rows(v);
  CHECK(t.value(s)[0] == 0.5);
  CHECK(t.value(s)[1] == 0.5);

  RngStream rng(7, "test/softmax");
  for (int trial = 0; trial < 20; ++trial) {
    Tape tp;
    Tensor x = rng.gaussian_tensor({3, 5}, 4.0);
    Value sm = softmax_rows(tp.leaf(x));
    const Tensor& y = tp.value(sm);
    for (int r = 0; r < 3; ++r) {
      double rowsum = 0.0;
      for (int c = 0; c < 5; ++c) rowsum += y.at(r, c);
      CHECK(std::abs(rowsum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("backward rejects non-scalar targets") {
  Tape t;
  Value v = t.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
  Value w = add(v, v);
  CHECK_THROWS_AS(t.backward(w), std::invalid_argument);
}

namespace {

// FD agreement for one scalar-valued graph builder
void check_grad_against_fd(const std::function<Value(Tape&, Value)>& build, const Tensor& x,
                           double tol = 1e-5, const char* label = "?") {
  Tape t;
  Value in = t.leaf(x);
  Value loss = build(t, in);
  t.backward(loss);
  const Tensor analytic = t.grad(in);
  const Tensor numeric = fd_grad(
      [&](const Tensor& xx) {
        Tape tp;
        Value vin = tp.leaf(xx);
        Value l = build(tp, vin);
        return tp.value(l).item();
      },
      x, 1e-4);
  INFO("op: " << label);
  CHECK(rel_error(analytic, numeric) <= tol);
}

}  // namespace

TEST_CASE("per-op gradients match central finite differences") {
  RngStream rng(11, "test/opgrads");
  const Tensor x = rng.gaussian_tensor({3, 4});
  const Tensor w = rng.gaussian_tensor({4, 2});
  const Tensor y = rng.gaussian_tensor({3, 4});
  const Tensor row = rng.gaussian_tensor({4});
  const Tensor base = rng.gaussian_tensor({5, 4});

  using Builder = std::function<Value(Tape&, Value)>;
  const std::vector<std::pair<const char*, Builder>> cases = {
      {"matmul", [&](Tape& t, Value in) { return sum(matmul(in, t.constant(w))); }},
      {"add", [&](Tape& t, Value in) { return squared_norm(add(in, t.constant(y))); }},
      {"sub", [&](Tape& t, Value in) { return squared_norm(sub(t.constant(y), in)); }},
      {"mul", [&](Tape& t, Value in) { return sum(mul(in, t.constant(y))); }},
      {"scale", [&](Tape& t, Value in) { (void)t; return sum(scale(in, -1.7)); }},
      {"add_scalar", [&](Tape& t, Value in) { (void)t; return squared_norm(add_scalar(in, 0.3)); }},
      {"tanh", [&](Tape& t, Value in) { (void)t; return sum(tanh(in)); }},
      {"softmax", [&](Tape& t, Value in) { (void)t; return squared_norm(softmax_rows(in)); }},
      {"mean", [&](Tape& t, Value in) { (void)t; return mean(in); }},
      {"squared_norm", [&](Tape& t, Value in) { (void)t; return squared_norm(in); }},
      {"transpose", [&](Tape& t, Value in) { (void)t; return squared_norm(tanh(transpose(in))); }},
      {"concat_cols",
       [&](Tape& t, Value in) { return squared_norm(concat_cols(in, t.constant(y))); }},
      {"slice_cols", [&](Tape& t, Value in) { (void)t; return squared_norm(slice_cols(in, 1, 3)); }},
      {"slice_rows", [&](Tape& t, Value in) { (void)t; return squared_norm(slice_rows(in, 0, 2)); }},
      {"select_rows",
       [&](Tape& t, Value in) { (void)t; return squared_norm(select_rows(in, {2, 0, 2})); }},
      {"splice_rows",
       [&](Tape& t, Value in) { return squared_norm(splice_rows(t.constant(base), in, 1)); }},
      {"cross_entropy", [&](Tape& t, Value in) { (void)t; return cross_entropy(in, {1, 3, 0}); }},
  };
  for (const auto& [name, build] : cases) {
    INFO("op: " << name);
    check_grad_against_fd(build, x, 1e-5, name);
  }
  check_grad_against_fd(
      [&](Tape& t, Value in) { (void)t; return squared_norm(broadcast_row(in, 5)); }, row, 1e-5,
      "broadcast_row");
  // relu checked away from the kink
  Tensor xr = rng.gaussian_tensor({3, 4});
  for (std::size_t i = 0; i < xr.numel(); ++i)
    if (std::abs(xr[i]) < 0.05) xr[i] = 0.5;
  check_grad_against_fd([&](Tape& t, Value in) { (void)t; return sum(relu(in)); }, xr, 1e-5,
                        "relu");
}

TEST_CASE("relu subgradient at exactly zero is zero") {
  Tape t;
  Value in = t.leaf(Tensor({3}, {-1.0, 0.0, 2.0}));
  Value loss = sum(relu(in));
  t.backward(loss);
  const Tensor& g = t.grad(in);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
  CHECK(g[2] == 1.0);
}

namespace {

// small random two-layer tanh network: scalar = sum(tanh(tanh(x W1 + b1) W2 + b2))
struct TinyNet {
  Tensor x, w1, b1, w2, b2;
  static TinyNet random(std::uint64_t seed) {
    RngStream rng(seed, "test/tinynet");
    const int n = rng.uniform_int(1, 3);
    const int d0 = rng.uniform_int(2, 8);
    const int d1 = rng.uniform_int(2, 8);
    const int d2 = rng.uniform_int(2, 8);
    TinyNet net;
    net.x = rng.gaussian_tensor({n, d0});
    net.w1 = rng.gaussian_tensor({d0, d1}, 0.7);
    net.b1 = rng.gaussian_tensor({d1}, 0.3);
    net.w2 = rng.gaussian_tensor({d1, d2}, 0.7);
    net.b2 = rng.gaussian_tensor({d2}, 0.3);
    return net;
  }
  static double loss_from(const ParamSet& p, const Tensor& x) {
    Tape t;
    auto leaves = insert_params(t, p, true);
    Value h1 = tanh(add(matmul(t.constant(x), leaves.at("w1")),
                        broadcast_row(leaves.at("b1"), x.rows())));
    Value h2 = tanh(add(matmul(h1, leaves.at("w2")), broadcast_row(leaves.at("b2"), x.rows())));
    return t.value(sum(h2)).item();
  }
  ParamSet params() const {
    ParamSet p;
    p.insert("w1", w1);
    p.insert("b1", b1);
    p.insert("w2", w2);
    p.insert("b2", b2);
    return p;
  }
};

}  // namespace

TEST_CASE("two-layer tanh network gradients agree with finite differences over 32 seeds") {
  for (std::uint64_t seed = 0; seed < 32; ++seed) {
    TinyNet net = TinyNet::random(seed);
    ParamSet params = net.params();

    Tape t;
    auto leaves = insert_params(t, params, false);
    Value h1 = tanh(add(matmul(t.constant(net.x), leaves.at("w1")),
                        broadcast_row(leaves.at("b1"), net.x.rows())));
    Value h2 =
        tanh(add(matmul(h1, leaves.at("w2")), broadcast_row(leaves.at("b2"), net.x.rows())));
    t.backward(sum(h2));
    GradMap analytic = collect_grads(t, leaves);

    GradMap numeric = fd_grad_params(
        [&](const ParamSet& p) { return TinyNet::loss_from(p, net.x); }, params, 1e-4);
    CHECK(rel_error(analytic, numeric) <= 1e-5);
  }
}

TEST_CASE("parameter unused by the loss gets an exact zero gradient") {
  Tape t;
  Value used = t.leaf(Tensor({2}, {1.0, 2.0}));
  Value unused = t.leaf(Tensor({3}, {4.0, 5.0, 6.0}));
  t.backward(squared_norm(used));
  const Tensor& g = t.grad(unused);
  for (std::size_t i = 0; i < g.numel(); ++i) CHECK(g[i] == 0.0);
}

TEST_CASE("tape replay is bit-deterministic") {
  RngStream rng(3, "test/replay");
  Tensor x = rng.gaussian_tensor({4, 6});
  Tensor w = rng.gaussian_tensor({6, 3});
  auto run = [&](Tensor& grad_out) {
    Tape t;
    Value in = t.leaf(x);
    Value ww = t.leaf(w);
    Value loss = cross_entropy(matmul(tanh(in), ww), {0, 2, 1, 0});
    t.backward(loss);
    grad_out = t.grad(ww);
    return t.value(loss).item();
  };
  Tensor g1, g2;
  const double l1 = run(g1);
  const double l2 = run(g2);
  CHECK(std::memcmp(&l1, &l2, sizeof(double)) == 0);
  REQUIRE(g1.numel() == g2.numel());
  CHECK(std::memcmp(g1.data().data(), g2.data().data(), g1.numel() * sizeof(double)) == 0);
}

TEST_CASE("hvp of half squared norm returns the direction") {
  auto grad_fn = [](const Tensor& l) { return l; };  // grad of 0.5*||l||^2
  Tensor l({3}, {0.3, -1.2, 2.0});
  Tensor v({3}, {1.0, -2.0, 0.5});
  Tensor out = hvp(grad_fn, l, v);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(out[i] - v[i]) <= 1e-9);
}

TEST_CASE("hvp with diagonal quadratic scales per coordinate") {
  // E = 0.5 * l^T diag(1,3) l, so H v = [v0, 3 v1]
  auto grad_fn = [](const Tensor& l) {
    Tensor g = l;
    g[1] *= 3.0;
    return g;
  };
  Tensor l({2}, {0.7, -0.4});
  Tensor v({2}, {1.0, 1.0});
  Tensor out = hvp(grad_fn, l, v);
  CHECK(std::abs(out[0] - 1.0) <= 1e-9);
  CHECK(std::abs(out[1] - 3.0) <= 1e-9);
}

TEST_CASE("hvp on a tanh network matches a dense finite-difference Hessian") {
  RngStream rng(21, "test/hvp");
  const int d = 4;
  Tensor w1 = rng.gaussian_tensor({d, 5}, 0.8);
  Tensor b1 = rng.gaussian_tensor({5}, 0.2);
  Tensor w2 = rng.gaussian_tensor({5, 1}, 0.8);
  // scalar energy of a rank-1 latent
  auto f = [&](const Tensor& l) {
    Tensor h({5});
    for (int j = 0; j < 5; ++j) {
      double a = b1[j];
      for (int i = 0; i < d; ++i) a += l[i] * w1.at(i, j);
      h[j] = std::tanh(a);
    }
    double e = 0.0;
    for (int j = 0; j < 5; ++j) e += h[j] * w2.at(j, 0);
    return e;
  };
  auto grad_fn = [&](const Tensor& l) { return fd_grad(f, l, 1e-5); };

  Tensor at = rng.gaussian_tensor({d}, 0.5);
  Tensor v = rng.gaussian_tensor({d});

  // dense Hessian from second differences of f alone, independent of grad_fn
  const double h = 1e-3;
  Tensor hv({d});
  for (int i = 0; i < d; ++i) {
    double acc = 0.0;
    for (int j = 0; j < d; ++j) {
      Tensor pp = at, pm = at, mp = at, mm = at;
      pp[i] += h; pp[j] += h;
      pm[i] += h; pm[j] -= h;
      mp[i] -= h; mp[j] += h;
      mm[i] -= h; mm[j] -= h;
      const double hij = (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * h * h);
      acc += hij * v[j];
    }
    hv[i] = acc;
  }
  Tensor fast = hvp(grad_fn, at, v);
  CHECK(rel_error(fast, hv) <= 1e-3);
}

TEST_CASE("sgd updates trainable entries and leaves frozen ones bit-identical") {
  ParamSet p;
  p.insert("trainable", Tensor({2}, {1.0, 2.0}));
  p.insert("frozen", Tensor({2}, {0.25, -0.5}), true);
  const std::vector<double> frozen_before = p.at("frozen").value.data();

  GradMap g;
  g.emplace("trainable", Tensor({2}, {0.5, -1.0}));
  g.emplace("frozen", Tensor({2}, {100.0, 100.0}));
  sgd_step(p, g, 0.1);

  CHECK(p.at("trainable").value[0] == doctest::Approx(1.0 - 0.05).epsilon(1e-15));
  CHECK(p.at("trainable").value[1] == doctest::Approx(2.0 + 0.1).epsilon(1e-15));
  CHECK(std::memcmp(p.at("frozen").value.data().data(), frozen_before.data(),
                    2 * sizeof(double)) == 0);

  GradMap bad;
  bad.emplace("missing", Tensor({1}, {1.0}));
  CHECK_THROWS_AS(sgd_step(p, bad, 0.1), std::out_of_range);
}

TEST_CASE("paramset serialization round-trips bit-stably in lexicographic order") {
  RngStream rng(5, "test/serialize");
  ParamSet p;
  p.insert("zeta", rng.gaussian_tensor({3, 2}, 1.3));
  p.insert("alpha", rng.gaussian_tensor({4}, 0.01));
  p.insert("mid.w", Tensor({2}, {1.0 / 3.0, 1e-300}), true);

  const std::string s1 = p.to_json_string();
  ParamSet q = ParamSet::from_json_string(s1);
  const std::string s2 = q.to_json_string();
  CHECK(s1 == s2);
  CHECK(q.at("mid.w").frozen);
  CHECK(std::memcmp(q.at("zeta").value.data().data(), p.at("zeta").value.data().data(),
                    p.at("zeta").value.numel() * sizeof(double)) == 0);
  // lexicographic order in the document
  CHECK(s1.find("alpha") < s1.find("mid.w"));
  CHECK(s1.find("mid.w") < s1.find("zeta"));
  CHECK(content_hash(p) == content_hash(q));
}

TEST_CASE("rng streams are reproducible and purpose-separated") {
  RngStream a(42, "langevin", {3, 1});
  RngStream b(42, "langevin", {3, 1});
  RngStream c(42, "decode", {3, 1});
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 100; ++i) {
    const double va = a.gaussian();
    all_equal = all_equal && (va == b.gaussian());
    any_diff = any_diff || (va != c.gaussian());
  }
  CHECK(all_equal);
  CHECK(any_diff);

  // rough sanity on moments
  RngStream m(9, "moments");
  double s = 0.0, s2 = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double g = m.gaussian();
    s += g;
    s2 += g * g;
  }
  CHECK(std::abs(s / n) < 0.03);
  CHECK(std::abs(s2 / n - 1.0) < 0.05);
}
