#include <cmath>

#include "diffusion/models.hpp"
#include "diffusion/params.hpp"
#include "diffusion/tape.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace diffusion;

namespace {

Mat random_mat(int r, int c, Rng& rng, double scale = 1.0) {
  Mat m(r, c);
  for (double& v : m.a) v = scale * rng.normal();
  return m;
}

Mat positive_mat(int r, int c, Rng& rng) {
  Mat m(r, c);
  for (double& v : m.a) v = 0.2 + rng.uniform();
  return m;
}

}  // namespace

TEST_CASE("tape ops differentiate correctly") {
  Rng rng(5);

  SUBCASE("elementwise and broadcast ops") {
    ParameterVector pv;
    pv.add("a", 3, 4);
    pv.add("b", 3, 4);
    pv.add("r", 1, 4);
    pv.add("c", 3, 1);
    pv.add("s", 1, 1);
    pv.set_matrix("a", positive_mat(3, 4, rng));
    pv.set_matrix("b", positive_mat(3, 4, rng));
    pv.set_matrix("r", positive_mat(1, 4, rng));
    pv.set_matrix("c", positive_mat(3, 1, rng));
    pv.set_matrix("s", positive_mat(1, 1, rng));

    const GraphFn f = [](Tape& t, ParamBinder& p) {
      Var a = p("a"), b = p("b");
      Var mix = t.div(t.mul(t.exp(t.scale(a, 0.3)), t.sigmoid(b)), t.offset(t.sqrt(b), 1.0));
      mix = t.add(mix, t.tanh(t.sub(a, b)));
      mix = t.mul_rowvec(t.add_rowvec(mix, p("r")), p("r"));
      mix = t.mul_colvec(t.add_colvec(mix, p("c")), p("c"));
      mix = t.add_bscalar(t.mul_bscalar(mix, p("s")), p("s"));
      mix = t.add(mix, t.log(t.offset(t.recip(t.offset(a, 2.0)), 1.0)));
      Var folded = t.add(t.sum_all(t.sum_rows(mix)), t.sum_all(t.transpose(t.sum_cols(mix))));
      return t.add(t.neg(folded), t.mean_all(t.clamp(mix, -0.5, 4.0)));
    };
    CHECK(finite_difference_check(pv, f, 1e-5) < 1e-8);
  }

  SUBCASE("matrix products") {
    ParameterVector pv;
    pv.add("A", 4, 3);
    pv.add("B", 3, 5);
    pv.add("C", 5, 3);
    pv.set_matrix("A", random_mat(4, 3, rng));
    pv.set_matrix("B", random_mat(3, 5, rng));
    pv.set_matrix("C", random_mat(5, 3, rng));
    const GraphFn g = [](Tape& t, ParamBinder& p) {
      Var ab = t.matmul(p("A"), p("B"));                    // [4,5]
      Var prod = t.matmul_nt(p("B"), t.transpose(p("C")));  // [3,5] x [3,5]^T -> [3,3]
      return t.add(t.sum_all(t.mul(ab, ab)), t.sum_all(prod));
    };
    CHECK(finite_difference_check(pv, g, 1e-5) < 1e-8);
  }

  SUBCASE("reuse of a node accumulates gradient") {
    ParameterVector pv;
    pv.add("x", 1, 1);
    pv.data("x")[0] = 0.7;
    const GraphFn f = [](Tape& t, ParamBinder& p) {
      Var x = p("x");
      return t.mul(x, t.mul(x, x));  // x^3
    };
    const Evaluation ev = evaluate_with_gradients(pv, f);
    CHECK(ev.value == doctest::Approx(0.343));
    CHECK(ev.gradient[0] == doctest::Approx(3 * 0.49).epsilon(1e-12));
  }
}

TEST_CASE("evaluate_with_gradients basics") {
  Rng rng(9);
  ParameterVector pv;
  pv.add("w", 3, 3);
  pv.set_matrix("w", random_mat(3, 3, rng));

  SUBCASE("constant objective has zero gradient") {
    const Evaluation ev = evaluate_with_gradients(
        pv, [](Tape& t, ParamBinder&) { return t.constant_scalar(4.2); });
    CHECK(ev.value == 4.2);
    for (double g : ev.gradient) CHECK(g == 0.0);
  }

  SUBCASE("quadratic objective returns the parameters") {
    const Evaluation ev = evaluate_with_gradients(pv, [](Tape& t, ParamBinder& p) {
      Var w = p("w");
      return t.scale(t.sum_all(t.mul(w, w)), 0.5);
    });
    for (std::size_t i = 0; i < pv.size(); ++i)
      CHECK(ev.gradient[i] == doctest::Approx(pv.values()[i]).epsilon(1e-14));
  }

  SUBCASE("linear objective matches finite differences at noise level") {
    const GraphFn f = [](Tape& t, ParamBinder& p) { return t.sum_all(t.scale(p("w"), 3.0)); };
    CHECK(finite_difference_check(pv, f, 1e-5) < 1e-9);
  }

  SUBCASE("eps outside the supported window is rejected") {
    const GraphFn f = [](Tape& t, ParamBinder& p) { return t.sum_all(p("w")); };
    CHECK_THROWS_AS(finite_difference_check(pv, f, 1e-8), std::invalid_argument);
    CHECK_THROWS_AS(finite_difference_check(pv, f, 1e-2), std::invalid_argument);
  }
}

TEST_CASE("non-finite intermediates are reported with context") {
  Tape tape;
  TapeContext ctx(tape, "bound term t=3");
  Var x = tape.constant_scalar(-1.0);
  try {
    tape.log(x);
    FAIL("expected a throw");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("log") != std::string::npos);
    CHECK(msg.find("bound term t=3") != std::string::npos);
  }
}

TEST_CASE("parameter vector layout") {
  ParameterVector pv;
  pv.add("a", 2, 3);
  pv.add("b", 1, 4);
  CHECK(pv.size() == 10);
  CHECK(pv.entry("b").offset == 6);
  CHECK_THROWS_AS(pv.add("a", 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(pv.entry("zzz"), std::invalid_argument);

  Mat m(1, 4, {1, 2, 3, 4});
  pv.set_matrix("b", m);
  const Mat back = pv.matrix("b");
  CHECK(back.a == m.a);

  // Flatten/unflatten identity: matrices written through entries land at
  // their offsets and read back bit-identically.
  for (int i = 0; i < 4; ++i) CHECK(pv.values()[6 + i] == m.a[i]);
}

TEST_CASE("bump basis") {
  SUBCASE("single bump is constant one") {
    for (int t = 1; t <= 7; ++t) {
      const auto g = bump_basis(t, 1, 7);
      CHECK(g.size() == 1);
      CHECK(g[0] == doctest::Approx(1.0).epsilon(1e-15));
    }
  }
  SUBCASE("weights form a partition of unity") {
    for (int T : {10, 40, 2000})
      for (int J : {2, 5, 17})
        for (int t = 1; t <= T; t += std::max(1, T / 7)) {
          const auto g = bump_basis(t, J, T);
          double s = 0.0;
          for (double v : g) {
            CHECK(v >= 0.0);
            s += v;
          }
          CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
  }
  SUBCASE("peak lands on the nearest center") {
    const int T = 100, J = 9;
    const double w = T / double(J + 1);
    for (int j = 1; j <= J; ++j) {
      const int t = static_cast<int>(w * j);  // near tau_j
      const auto g = bump_basis(t, J, T);
      int argmax = 0;
      for (int k = 1; k < J; ++k)
        if (g[k] > g[argmax]) argmax = k;
      CHECK(argmax == j - 1);
    }
  }
  SUBCASE("rejects an empty basis") { CHECK_THROWS_AS(bump_basis(1, 0, 10), std::invalid_argument); }
}

TEST_CASE("readout_transform") {
  SUBCASE("zero network output reproduces a forward-like kernel") {
    const double beta = 0.37;
    const auto d = readout_transform({0.0, 0.0}, {0.0, 0.0}, {1.5, -2.0}, beta);
    CHECK(d.var[0] == doctest::Approx(beta).epsilon(1e-12));
    CHECK(d.var[1] == doctest::Approx(beta).epsilon(1e-12));
    CHECK(d.mean[0] == doctest::Approx(1.5 * (1.0 - beta)).epsilon(1e-12));
    CHECK(d.mean[1] == doctest::Approx(-2.0 * (1.0 - beta)).epsilon(1e-12));
  }
  SUBCASE("saturation limit") {
    const auto d = readout_transform({0.9}, {40.0}, {0.1}, 0.5);
    CHECK(d.var[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(d.mean[0] == doctest::Approx(0.9).epsilon(1e-9));
  }
  SUBCASE("independent re-evaluation of the formulas") {
    Rng rng(77);
    for (int i = 0; i < 50; ++i) {
      const double zm = rng.normal(), zs = rng.normal(), x = rng.normal();
      const double beta = 0.05 + 0.9 * rng.uniform();
      const auto d = readout_transform({zm}, {zs}, {x}, beta);
      const double sig = 1.0 / (1.0 + std::exp(-(zs + std::log(beta / (1.0 - beta)))));
      CHECK(d.var[0] == doctest::Approx(sig).epsilon(1e-12));
      CHECK(d.mean[0] == doctest::Approx((x - zm) * (1.0 - sig) + zm).epsilon(1e-12));
    }
  }
  SUBCASE("degenerate rates are rejected") {
    CHECK_THROWS_AS(readout_transform({0.0}, {0.0}, {0.0}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(readout_transform({0.0}, {0.0}, {0.0}, 1.0), std::invalid_argument);
  }
}
