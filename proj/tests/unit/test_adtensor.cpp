#include <cmath>
#include <filesystem>
#include <fstream>

#include "ddgen/ad/checkpoint.hpp"
#include "ddgen/ad/gradcheck.hpp"
#include "ddgen/ad/ops.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace ddgen::ad;
using testing::random_matrix;

TEST_CASE("forward: identity and I*X") {
  Graph g;
  const Matrix x = random_matrix(3, 4, 1);
  Var in = g.constant(x);
  CHECK(in.value() == x);
  Var out = matmul(g.constant(Matrix::identity(3)), in);
  CHECK(max_abs_diff(out.value(), x) == 0.0);
}

TEST_CASE("softmax rows sum to one and ignore row shifts") {
  Graph g;
  Matrix x = random_matrix(5, 7, 2, -30.0, 30.0);
  Var s = softmax_rows(g.constant(x));
  for (std::size_t r = 0; r < 5; ++r) {
    double total = 0.0;
    for (double v : s.value().row_span(r)) total += v;
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
  Matrix shifted = x;
  for (std::size_t r = 0; r < 5; ++r)
    for (double& v : shifted.row_span(r)) v += 123.0 * static_cast<double>(r + 1);
  Var s2 = softmax_rows(g.constant(shifted));
  CHECK(max_abs_diff(s.value(), s2.value()) < 1e-12);
}

TEST_CASE("softmax with a mask zeroes disallowed entries") {
  Graph g;
  Matrix allowed{{1, 0, 1}, {0, 1, 0}};
  Var s = softmax_rows(g.constant(Matrix{{1, 2, 3}, {4, 5, 6}}), &allowed);
  CHECK(s.value()(0, 1) == 0.0);
  CHECK(s.value()(1, 1) == doctest::Approx(1.0));
  Matrix none(1, 2, 0.0);
  CHECK_THROWS_AS(softmax_rows(g.constant(Matrix(1, 2)), &none), std::domain_error);
}

TEST_CASE("backward examples") {
  SUBCASE("f(x) = x") {
    Graph g;
    Var x = g.variable(Matrix{{3.0}});
    g.backward(x);
    CHECK(g.grad(x)[0] == 1.0);
  }
  SUBCASE("f(x) = sum(x*x) at (1,2)") {
    Graph g;
    Var x = g.variable(Matrix{{1.0, 2.0}});
    g.backward(sum(mul(x, x)));
    CHECK(g.grad(x)[0] == 2.0);
    CHECK(g.grad(x)[1] == 4.0);
  }
  SUBCASE("repeated backward accumulates") {
    Graph g;
    Var x = g.variable(Matrix{{1.0, 2.0}});
    Var y = sum(mul(x, x));
    g.backward(y);
    g.backward(y);
    CHECK(g.grad(x)[0] == 4.0);
    CHECK(g.grad(x)[1] == 8.0);
  }
  SUBCASE("parameters accumulate across graphs") {
    ParameterStore ps;
    Parameter& w = ps.add("w", Matrix{{2.0}});
    for (int i = 0; i < 3; ++i) {
      Graph g;
      g.backward(mul(g.parameter(w), g.constant(Matrix{{5.0}})));
    }
    CHECK(w.grad[0] == 15.0);
    ps.zero_grad();
    CHECK(w.grad[0] == 0.0);
  }
}

TEST_CASE("backward errors") {
  Graph g;
  Graph other;
  Var x = other.variable(Matrix{{1.0}});
  CHECK_THROWS_AS(g.backward(x), std::logic_error);
  Graph g2;
  Var v = g2.variable(Matrix{{1.0, 2.0}});
  CHECK_THROWS_AS(g2.backward(v), ShapeError);  // not 1x1 without a seed
  CHECK_THROWS_AS(g2.backward(v, Matrix(2, 2)), ShapeError);
}

TEST_CASE("shape errors name the op") {
  Graph g;
  Var a = g.constant(Matrix(2, 3));
  Var b = g.constant(Matrix(2, 2));
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("matmul") != std::string::npos);
  }
  CHECK_THROWS_AS(add(a, b), ShapeError);
  CHECK_THROWS_AS(concat_cols(a, g.constant(Matrix(3, 1))), ShapeError);
}

TEST_CASE("linearity of gradients over a partition") {
  const Matrix x0 = random_matrix(4, 3, 5);
  auto grad_of = [&](auto f) {
    Graph g;
    Var x = g.variable(x0);
    g.backward(f(x));
    return g.grad(x);
  };
  auto f1 = [](Var x) { return sum(tanh(slice_rows(x, 0, 2))); };
  auto f2 = [](Var x) { return sum(square(slice_rows(x, 2, 2))); };
  const Matrix ga = grad_of(f1);
  const Matrix gb = grad_of(f2);
  const Matrix gsum = grad_of([&](Var x) { return add(f1(x), f2(x)); });
  for (std::size_t i = 0; i < gsum.size(); ++i) CHECK(std::abs(gsum[i] - ga[i] - gb[i]) < 1e-12);
}

TEST_CASE("concat backward splits the seed at the boundary") {
  Graph g;
  Var a = g.variable(Matrix(2, 2, 1.0));
  Var b = g.variable(Matrix(2, 3, 1.0));
  Var c = concat_cols(a, b);
  Matrix seed(2, 5);
  for (std::size_t i = 0; i < seed.size(); ++i) seed[i] = static_cast<double>(i + 1);
  g.backward(c, seed);
  CHECK(g.grad(a) == Matrix{{1, 2}, {6, 7}});
  CHECK(g.grad(b) == Matrix{{3, 4, 5}, {8, 9, 10}});

  Graph g2;
  Var r1 = g2.variable(Matrix(1, 2));
  Var r2 = g2.variable(Matrix(2, 2));
  const Var parts[] = {r1, r2};
  Matrix seed2{{1, 2}, {3, 4}, {5, 6}};
  g2.backward(concat_rows(parts), seed2);
  CHECK(g2.grad(r1) == Matrix{{1, 2}});
  CHECK(g2.grad(r2) == Matrix{{3, 4}, {5, 6}});
}

TEST_CASE("smooth_l1 is C1 at the junction") {
  Graph g;
  const double beta = 0.7;
  for (double sign : {1.0, -1.0}) {
    for (double offset : {-1e-9, 0.0, 1e-9}) {
      Graph gg;
      Var yhat = gg.variable(Matrix{{0.0}});
      Var y = gg.constant(Matrix{{sign * (beta + offset)}});
      Var l = smooth_l1(y, yhat, beta);
      gg.backward(sum(l));
      CHECK(l.value()[0] == doctest::Approx(0.5 * beta).epsilon(1e-8));
      // d/dyhat of l(y - yhat) = -sign(d)
      CHECK(gg.grad(yhat)[0] == doctest::Approx(-sign).epsilon(1e-8));
    }
  }
}

TEST_CASE("grad_check: linear layer") {
  ParameterStore ps;
  ps.add("W", random_matrix(4, 3, 11));
  ps.add("b", random_matrix(1, 3, 12));
  auto block = [&](Graph& g, Var x) {
    return random_projection(affine(x, g.parameter(ps.get("W")), g.parameter(ps.get("b"))), 3);
  };
  const auto rep = grad_check(block, random_matrix(5, 4, 13), &ps);
  CHECK(rep.max_rel_error < 1e-8);
  CHECK(rep.entries_checked == 20 + 12 + 3);
}

TEST_CASE("grad_check: elementwise and reduction ops") {
  auto check = [](auto f, double lo = -1.0, double hi = 1.0) {
    const auto rep = grad_check([&](Graph&, Var x) { return random_projection(f(x), 7); },
                                random_matrix(3, 4, 21, lo, hi), nullptr);
    CHECK(rep.max_rel_error < 1e-6);
  };
  check([](Var x) { return sigmoid(x); });
  check([](Var x) { return tanh(x); });
  check([](Var x) { return exp(x); });
  check([](Var x) { return log(x); }, 0.5, 2.0);
  check([](Var x) { return sqrt(x); }, 0.5, 2.0);
  check([](Var x) { return cos(x); });
  check([](Var x) { return sin(x); });
  check([](Var x) { return relu(x); });
  check([](Var x) { return transpose(x); });
  check([](Var x) { return row_sum(x); });
  check([](Var x) { return col_mean(x); });
  check([](Var x) { return softmax_rows(scale(x, 3.0)); });
  check([](Var x) { return repeat_row(slice_rows(x, 1, 1), 4); });
  check([](Var x) { return sub_col(x, row_sum(x)); });
  check([](Var x) { return mul_col(x, slice_cols(x, 0, 1)); });
  check([](Var x) {
    const std::size_t cols[] = {3, 0, 0, 2};
    return gather_cols(x, cols);
  });
  check([](Var x) {
    const double s[] = {1, 2, 3, 4}, t[] = {0.5, -1, 0, 2};
    return affine_cols(x, s, t);
  });
  check([](Var x) { return matmul_nt(x, x); });
}

TEST_CASE("grad_check: layer norm and softmax-attention head") {
  ParameterStore ps;
  ps.add("gamma", random_matrix(1, 6, 31, 0.5, 1.5));
  ps.add("beta", random_matrix(1, 6, 32));
  ps.add("Wq", random_matrix(6, 6, 33));
  ps.add("Wk", random_matrix(6, 6, 34));
  ps.add("Wv", random_matrix(6, 6, 35));
  auto block = [&](Graph& g, Var x) {
    Var n = layer_norm(x, g.parameter(ps.get("gamma")), g.parameter(ps.get("beta")));
    Var q = matmul(n, g.parameter(ps.get("Wq")));
    Var k = matmul(n, g.parameter(ps.get("Wk")));
    Var v = matmul(n, g.parameter(ps.get("Wv")));
    Var a = softmax_rows(scale(matmul_nt(q, k), 1.0 / std::sqrt(6.0)));
    return random_projection(matmul(a, v), 9);
  };
  const auto rep = grad_check(block, random_matrix(5, 6, 36), &ps);
  CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("grad_check reports non-finite values") {
  auto block = [](Graph&, Var x) { return sum(log(x)); };
  CHECK_THROWS_AS(grad_check(block, Matrix{{-1.0}}, nullptr), std::domain_error);
}

TEST_CASE("dropout: identity at p=0, deterministic mask, inverted scaling") {
  Graph g;
  Var x = g.constant(Matrix(50, 40, 1.0));
  CHECK(dropout(x, 0.0, 1).value() == x.value());
  Var a = dropout(x, 0.25, 99);
  Var b = dropout(x, 0.25, 99);
  CHECK(a.value() == b.value());
  double total = 0.0;
  for (double v : a.value().data()) {
    CHECK((v == 0.0 || std::abs(v - 1.0 / 0.75) < 1e-12));
    total += v;
  }
  CHECK(total / 2000.0 == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("checkpoint round trip and validation") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "ddgen_ckpt_test";
  fs::create_directories(dir);
  ParameterStore ps;
  ps.add("a", random_matrix(3, 2, 41));
  ps.add("b/c", random_matrix(1, 5, 42));
  Checkpoint ck;
  store_parameters(ck, ps);
  ck.meta["k"] = "v";
  save_checkpoint(dir / "x.ckpt", ck);

  const Checkpoint back = load_checkpoint(dir / "x.ckpt");
  CHECK(back.meta_at("k") == "v");
  REQUIRE(back.tensors.size() == 2);
  CHECK(back.tensors[0].first == "param/a");
  CHECK(back.tensors[1].first == "param/b/c");

  ParameterStore other;
  other.add("a", Matrix(3, 2));
  other.add("b/c", Matrix(1, 5));
  restore_parameters(back, other);
  CHECK(other.get("a").value == ps.get("a").value);
  CHECK(other.get("b/c").value == ps.get("b/c").value);

  ParameterStore wrong;
  wrong.add("a", Matrix(2, 3));
  CHECK_THROWS_AS(restore_parameters(back, wrong), CheckpointError);
  ParameterStore missing;
  missing.add("zzz", Matrix(1, 1));
  CHECK_THROWS_AS(restore_parameters(back, missing), CheckpointError);

  {
    std::ofstream bad(dir / "bad.ckpt");
    bad << "NOT-A-CHECKPOINT\n";
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), CheckpointError);
  fs::remove_all(dir);
}

TEST_CASE("parameter store rejects duplicates") {
  ParameterStore ps;
  ps.add("w", Matrix(1, 1));
  CHECK_THROWS(ps.add("w", Matrix(1, 1)));
  CHECK(ps.find("nope") == nullptr);
  CHECK(ps.scalar_count() == 1);
}
