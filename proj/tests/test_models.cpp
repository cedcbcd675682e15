#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "splitflow/diagnostics.hpp"
#include "splitflow/models.hpp"

#include <cmath>
#include <random>

using namespace splitflow;
using nlohmann::json;

namespace {

Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Index>(xs.size()));
  Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

}  // namespace

TEST_CASE("model list and defaults") {
  const auto models = list_models();
  REQUIRE(models.size() == 3);
  for (const auto& m : models) {
    const auto pr = make_model(m.name);
    CHECK(pr.name == m.name);
    CHECK(pr.parameters == m.defaults);
    CHECK_NOTHROW(pr.system.validate());
    CHECK(pr.u0.size() == pr.system.dim());
  }
  const auto cx = make_model("counterexample");
  CHECK((cx.u0 - vec({2, 1})).norm() == 0.0);
  CHECK(cx.scheme == Scheme::Split);
  CHECK(make_model("visco-plasticity-1d").system.block_layout == std::make_pair(Index{8}, Index{9}));
}

TEST_CASE("invalid overrides are configuration errors") {
  CHECK_THROWS_AS(make_model("heat"), ConfigError);
  CHECK_THROWS_AS(make_model("counterexample", {{"c1", 1.0}}), ConfigError);
  CHECK_THROWS_AS(make_model("counterexample", {{"a1", -1.0}}), ConfigError);
  CHECK_THROWS_AS(make_model("counterexample", {{"u0", {1.0}}}), ConfigError);
  CHECK_THROWS_AS(make_model("counterexample", {{"a1", "one"}}), ConfigError);
  CHECK_THROWS_AS(make_model("allen-cahn-1d", {{"p", 1.0}}), ConfigError);
  CHECK_THROWS_AS(make_model("allen-cahn-1d", {{"m", 2.5}}), ConfigError);
  CHECK_THROWS_AS(make_model("visco-plasticity-1d", {{"sigma_yield", 0.0}}), ConfigError);
  CHECK_THROWS_AS(make_model("visco-plasticity-1d", {{"rho", -0.1}}), ConfigError);
  CHECK_THROWS_AS(make_model("visco-plasticity-1d", {{"T", 0.0}}), ConfigError);
  CHECK_THROWS_AS(make_model("counterexample", json::array({1, 2})), ConfigError);
  try {
    make_model("allen-cahn-1d", {{"p", 0.5}});
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("p > 1") != std::string::npos);
  }
}

TEST_CASE("counterexample reference trajectories") {
  const auto cx = make_model("counterexample");
  CHECK((reference_trajectory(cx, 0.0) - vec({2, 1})).norm() == 0.0);
  CHECK(reference_trajectory(cx, 0.75).norm() == 0.0);
  CHECK(reference_zero_time(cx) == doctest::Approx(0.75).epsilon(1e-15));
  // a = b = 4: middle-regime velocity -(2, 2)
  CHECK((reference_velocity(cx, 0.5) - vec({-2, -2})).norm() < 1e-15);
  CHECK((reference_velocity(cx, 0.1) - vec({-4, 0})).norm() < 1e-15);
  CHECK(reference_zero_time(cx, ReferenceKind::SplitLimit) == doctest::Approx(0.25 + 2.0 / 3.0));
  CHECK(reference_trajectory(cx, 0.25 + 2.0 / 3.0, ReferenceKind::SplitLimit).norm() < 1e-15);
  CHECK((reference_trajectory(cx, 0.25, ReferenceKind::SplitLimit) - vec({1, 1})).norm() < 1e-15);
  CHECK_THROWS_AS(reference_trajectory(make_model("allen-cahn-1d"), 0.0), InputError);

  // symmetric variants
  const auto sw = make_model("counterexample", {{"u0", {-1.0, 2.0}}});
  CHECK(reference_zero_time(sw) == doctest::Approx(0.25 + 0.5));
  CHECK((reference_trajectory(sw, 0.25) - vec({-1, 1})).norm() < 1e-15);
}

TEST_CASE("effective reference satisfies the flow inclusion off the switching times") {
  const auto cx = make_model("counterexample");
  const Potential Reff = cx.system.effective();
  const double a = 4.0, b = 4.0;
  for (int i = 0; i < 200; ++i) {
    const double t = 0.0025 + 0.00499 * i;
    if (std::abs(t - 0.25) < 1e-9 || std::abs(t - 0.75) < 1e-9) continue;
    const Vec u = reference_trajectory(cx, t);
    const Vec du = reference_velocity(cx, t);
    Vec xi;
    if (t < 0.25) xi = vec({1, 0});
    else if (t < 0.75) xi = vec({b / (a + b), a / (a + b)});
    else xi = Vec::Zero(2);
    CHECK(subdiff(cx.system.energy, t, u).contains(xi, 1e-12));
    CHECK(fenchel_young_residual(Reff, du, -xi) <= 1e-10);
  }
}

TEST_CASE("schemes against the closed-form references") {
  const auto cx = make_model("counterexample");
  const auto eff = effective_solve(cx.system, Partition::uniform(1.0, 64), cx.u0);
  for (int k = 0; k <= 64; ++k) CHECK((eff.at_node(k) - reference_trajectory(cx, k / 64.0)).norm() < 1e-12);
  CHECK(time_to_zero(eff) == doctest::Approx(0.75).epsilon(1e-12));

  double prev = INFINITY;
  for (int N : {16, 32, 64, 128}) {
    const auto split = split_step_solve(cx.system, Partition::uniform(1.0, N), cx.u0);
    double err = 0.0;
    for (int k = 0; k <= N; ++k)
      err = std::max(err, (split.at_node(k) - reference_trajectory(cx, k / double(N), ReferenceKind::SplitLimit)).norm());
    CHECK(err <= prev);
    CHECK(err <= 4.0 / N);
    prev = err;
    CHECK(std::abs(time_to_zero(split) - (0.25 + 2.0 / 3.0)) <= 2.0 / N);
  }
  // limit dissipation 9/16 per unit time on (1/4, 3/4)
  const Potential Reff = cx.system.effective();
  double acc = 0.0;
  const int K = 1000;
  for (int i = 0; i < K; ++i)
    acc += eval(Reff, reference_velocity(cx, 0.25 + 0.5 * (i + 0.5) / K, ReferenceKind::SplitLimit)).value();
  CHECK(acc / K == doctest::Approx(9.0 / 16.0).epsilon(1e-12));
}

TEST_CASE("Allen-Cahn: H^1 dual conjugate and well bounds") {
  const auto ac = make_model("allen-cahn-1d", {{"p", 2.0}, {"m", 16}});
  const Index m = 16;
  const double h = 1.0 / 17.0;
  const Mat K = laplacian_1d(m, h);
  const Eigen::FullPivLU<Mat> lu(K);
  Eigen::SelfAdjointEigenSolver<Mat> es(K);
  const double lo = h / es.eigenvalues().maxCoeff(), hi = h / es.eigenvalues().minCoeff();
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int i = 0; i < 200; ++i) {
    Vec xi(m);
    for (Index k = 0; k < m; ++k) xi[k] = g(rng);
    const double r2s = conjugate_eval(ac.system.r2.value(), xi);
    CHECK(r2s == doctest::Approx(0.5 * xi.dot(lu.solve(xi))).epsilon(1e-10));
    // squared weighted dual norm sum xi_i^2 / h
    const double ratio = r2s / (0.5 * xi.squaredNorm() / h);
    CHECK(ratio >= lo * (1 - 1e-12));
    CHECK(ratio <= hi * (1 + 1e-12));
  }

  for (double c_w : {1.0, 2.5})
    for (double beta : {1.0, 0.5}) {
      const auto pr = make_model("allen-cahn-1d", {{"c_w", c_w}, {"beta", beta}});
      const WellBounds w = well_bounds(pr);
      for (int i = 0; i <= 4000; ++i) {
        const double r = -10.0 + 0.005 * i;
        const double W = c_w * std::pow(r * r - beta * beta, 2) / 4.0;
        const double dW = c_w * r * (r * r - beta * beta);
        const double d2W = c_w * (3.0 * r * r - beta * beta);
        CHECK(d2W >= -w.c_w1 - 1e-12);
        CHECK(W >= -w.c_w2);
        CHECK(std::abs(dW) <= w.c_w3 * (1.0 + std::pow(std::abs(r), w.s)) + 1e-12);
      }
    }
}

TEST_CASE("QYE dichotomy for the Allen-Cahn dissipations") {
  const auto ac2 = make_model("allen-cahn-1d", {{"p", 2.0}});
  double prev = 0.0;
  for (int count : {500, 1000, 2000}) {
    const auto est = qye_probe(ac2.system.effective(), qye_samples(ac2, count, 11), state_norm(ac2));
    CHECK(est.c > 0.5);
    if (prev > 0.0) CHECK(est.c >= 0.9 * prev);
    prev = est.c;
  }
  // along the witness sequence: bounded below at p = 2, decaying at p = 3
  const auto w2 = qye_witness(make_model("allen-cahn-1d", {{"p", 2.0}, {"m", 64}}), {4, 16, 64});
  CHECK(w2.back().ratio > 0.5 * w2.front().ratio);
  const auto w3 = qye_witness(make_model("allen-cahn-1d", {{"p", 3.0}, {"m", 64}}), {4, 8, 16, 32, 64});
  for (std::size_t i = 1; i < w3.size(); ++i) CHECK(w3[i].ratio < w3[i - 1].ratio);
  CHECK(w3.front().ratio / w3.back().ratio >= 2.0);

  // independent evaluation of one witness point
  const auto pr = make_model("allen-cahn-1d", {{"p", 3.0}, {"m", 64}});
  const double ps = 1.5, h = 1.0 / 65.0;
  Vec xi(64), v(64);
  for (int i = 0; i < 64; ++i) {
    const double x = (i + 1) * h;
    xi[i] = h * 16.0 * std::sin(std::pow(16.0, 1.0 - ps / 2.0) * x);
    v[i] = 1e5 * std::sin(M_PI * x);
  }
  double xn = 0.0;
  for (int i = 0; i < 64; ++i) xn += std::pow(h, 1.0 - ps) * std::pow(std::abs(xi[i]), ps);
  xn = std::pow(xn, 1.0 / ps);
  const double lambda = std::pow(xn, ps / 2.0);
  CHECK(w3[2].xi_norm == doctest::Approx(xn).epsilon(1e-12));
  CHECK(w3[2].lambda == doctest::Approx(lambda).epsilon(1e-12));
  // R_eff* = R_1* + R_2*
  const double dual = conjugate_eval(pr.system.r1, xi) + conjugate_eval(*pr.system.r2, xi);
  const double primal_upper = eval(*pr.system.r2, lambda * v).value();
  CHECK(w3[2].value <= primal_upper + dual + 1e-9 * w3[2].value);
  CHECK(w3[2].value >= dual);
}

TEST_CASE("visco-plastic bar") {
  // no loads: every half-step decreases the energy
  const auto vp = make_model("visco-plasticity-1d", {{"load", 0.0}});
  for (BlockMode mode : {BlockMode::Split, BlockMode::Amm}) {
    const auto out = block_solve(vp.system, Partition::uniform(1.0, 32), vp.u0, mode);
    double prev = energy_eval(vp.system.energy, 0.0, vp.u0);
    for (int k = 1; k <= 32; ++k)
      for (int j : {out.grid->midpoint_index(k), out.grid->node_index(k)}) {
        const double e = energy_eval(vp.system.energy, 0.0, out.node_state(j));
        CHECK(e <= prev + 1e-12);
        prev = e;
      }
  }
  // stresses stay below a large yield threshold: z never moves
  const auto stiff = make_model("visco-plasticity-1d", {{"load", 0.0}, {"sigma_yield", 5.0}});
  for (Scheme s : {Scheme::BlockSplit, Scheme::BlockAmm}) {
    const auto out = run_scheme(stiff.system, Partition::uniform(1.0, 32), stiff.u0, s);
    for (int j = 0; j < out.grid->nodes(); ++j) CHECK(out.node_state(j).tail(9).cwiseAbs().maxCoeff() == 0.0);
  }
  // frozen blocks stay bit-exact, so the rate term is finite and the audits close
  for (Scheme s : {Scheme::BlockSplit, Scheme::BlockAmm}) {
    const auto out = run_scheme(vp.system, Partition::uniform(1.0, 16), vp.u0, s);
    CHECK(std::isfinite(rate_term(out, vp.system, 0.0, 1.0).value));
    std::vector<int> nodes;
    for (int k = 0; k <= 16; k += 4) nodes.push_back(k);
    for (const auto& r : edb_audit_pairs(out, vp.system, nodes)) CHECK(r.passed);
  }
  // with the default yield stress the bar does plastify
  const auto def = make_model("visco-plasticity-1d", {{"load", 0.0}});
  const auto out = run_scheme(def.system, Partition::uniform(1.0, 32), def.u0, Scheme::BlockAmm);
  CHECK(out.at_node(32).tail(9).cwiseAbs().maxCoeff() > 1e-3);
}
