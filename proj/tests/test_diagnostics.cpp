#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "splitflow/diagnostics.hpp"

#include <cmath>
#include <sstream>

using namespace splitflow;

namespace {

Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Index>(xs.size()));
  Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

Mat I(Index n) { return Mat::Identity(n, n); }

GradientSystem counterexample() {
  return {Energy::max_norm(), Potential::anisotropic_dual_quadratic(vec({1, 3})),
          Potential::anisotropic_dual_quadratic(vec({3, 1})), std::nullopt};
}

GradientSystem scalar_system() {
  QuadraticBlockParams p;
  p.A = I(1);
  p.B = Mat::Zero(0, 1);
  p.G = Mat::Zero(0, 0);
  return {Energy::quadratic_block(p), Potential::quadratic(I(1)), Potential::quadratic(I(1)),
          std::nullopt};
}

GradientSystem quadratic_pair() {
  QuadraticBlockParams p;
  p.A = (Mat(2, 2) << 2.0, 0.3, 0.3, 1.5).finished();
  p.B = (Mat(1, 2) << -0.4, 0.2).finished();
  p.G = (Mat(1, 1) << 1.2).finished();
  p.f.push_back({vec({1.0, -0.5}), TimeFunction::sinusoidal(1.0, 3.0)});
  p.g.push_back({vec({0.7}), TimeFunction::linear(0.2, 0.5)});
  const Mat V1 = (Mat(3, 3) << 1.0, 0.2, 0.0, 0.2, 2.0, 0.1, 0.0, 0.1, 0.5).finished();
  const Mat V2 = (Mat(3, 3) << 0.6, 0.0, 0.1, 0.0, 0.8, 0.0, 0.1, 0.0, 2.0).finished();
  return {Energy::quadratic_block(p, 1.0), Potential::quadratic(V1), Potential::quadratic(V2),
          std::nullopt};
}

GradientSystem allen_cahn_system(Index m, double amp) {
  AllenCahnParams p;
  p.m = m;
  Vec prof(m);
  for (Index i = 0; i < m; ++i) prof[i] = std::sin(3.0 * (i + 1.0) / (m + 1.0));
  p.load.push_back({prof, TimeFunction::sinusoidal(amp, 2.0)});
  const Energy E = Energy::allen_cahn_1d(p, 1.0);
  return {E, Potential::power_norm(2.0, Vec::Constant(m, E.mesh())),
          Potential::quadratic(laplacian_1d(m, E.mesh())), std::nullopt};
}

Vec bump(Index m, double amp) {
  Vec u(m);
  for (Index i = 0; i < m; ++i) u[i] = amp * std::sin(M_PI * (i + 1.0) / (m + 1.0)) + 0.3 * std::cos(5.0 * i);
  return u;
}

std::vector<int> every(int N, int stride) {
  std::vector<int> v;
  for (int k = 0; k <= N; k += stride) v.push_back(k);
  return v;
}

}  // namespace

TEST_CASE("rate_term examples") {
  const GradientSystem cx = counterexample();
  const auto split = split_step_solve(cx, Partition::uniform(1.0, 256), vec({2, 1}));
  const auto rate = rate_term(split, cx, 0.25, 0.75);
  CHECK(std::abs(rate.value / 0.5 - 0.75) < 1e-2);
  CHECK(rate.mismatch() < 1e-12);

  const auto still = split_step_solve(cx, Partition::uniform(1.0, 8), vec({0, 0}));
  CHECK(rate_term(still, cx, 0.0, 1.0).value == 0.0);

  // u(t) = 2t with R1 = R2 = v^2/2: int R~(2) = int 2 R(1) = 1
  const GradientSystem sc = scalar_system();
  SchemeOutput out = split_step_solve(sc, Partition::uniform(1.0, 4), vec({0.0}), 3);
  for (int j = 0; j < out.grid->nodes(); ++j) out.u_linear.values[j][0] = 2.0 * out.grid->node_time(j);
  const auto r = rate_term(out, sc, 0.0, 1.0);
  CHECK(r.value == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(r.repetition == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("slope_term examples") {
  const GradientSystem cx = counterexample();
  const auto still = split_step_solve(cx, Partition::uniform(1.0, 8), vec({0, 0}));
  CHECK(slope_term(still, cx, 0.0, 1.0).value == 0.0);
  // first regime, left half: xi = (1, 0) and R~1*(-xi) = a1 = 1
  const auto split = split_step_solve(cx, Partition::uniform(1.0, 64), vec({2, 1}));
  const double h = 0.5 / 64;
  CHECK(slope_term(split, cx, 0.0, h).value / h == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(slope_term(split, cx, h, 2 * h).value / h == doctest::Approx(3.0).epsilon(1e-14));
}

TEST_CASE("one AMM step of the scalar system balances with the variational forces") {
  const GradientSystem sc = scalar_system();
  const int M = 64;
  const auto out = amm_solve(sc, Partition::uniform(1.0, 1), vec({1.0}), 1e-12, true, M);
  const Grid& G = *out.grid;
  // r R~((u - 1)/r) + u^2/2 = (u - 1)^2/(4r) + u^2/2, so U~(r) = 1/(1 + 2r)
  for (int c = 0; c < M; ++c) {
    const double r = G.cell_mid(c);
    CHECK(std::abs(out.u_variational->values[c][0] - 1.0 / (1.0 + 2.0 * r)) < 1e-12);
  }
  // rate 1/8, slope int_0^1/2 (1+2r)^-2 = 1/4, energy 1/2 -> 1/8
  const auto rate = rate_term(out, sc, 0.0, 0.5);
  const auto slope = slope_term(out, sc, 0.0, 0.5, true);
  CHECK(rate.value == doctest::Approx(0.125).epsilon(1e-13));
  CHECK(std::abs(slope.value - 0.25) <= 2.0 * slope.quadrature_error);
  CHECK(slope.quadrature_error < 1e-4);
  const auto edb = edb_audit(out, sc, 0.0, 0.5);
  CHECK(edb.variational);
  CHECK(std::abs(edb.residual) <= edb.slack);
  CHECK(edb.passed);
  // with the piecewise-constant force the same step is a strict inequality
  const auto plain = slope_term(out, sc, 0.0, 0.5, false);
  CHECK(plain.value == doctest::Approx(0.125).epsilon(1e-13));
}

TEST_CASE("exact-regime balance on the counterexample") {
  const GradientSystem cx = counterexample();
  for (int N : {16, 64, 256}) {
    const auto split = split_step_solve(cx, Partition::uniform(1.0, N), vec({2, 1}));
    for (const auto& r : edb_audit_pairs(split, cx, every(N, N / 8))) {
      CHECK(std::abs(r.residual) <= 1e-8);
      CHECK(r.form == AuditForm::Balance);
      CHECK(r.passed);
      CHECK(r.rate.mismatch() <= 1e-12);
      CHECK(r.slope.mismatch() <= 1e-12);
      CHECK(r.fenchel_young_min >= -1e-12);
    }
    const auto eff = effective_solve(cx, Partition::uniform(1.0, N), vec({2, 1}));
    for (const auto& r : edb_audit_pairs(eff, cx, every(N, N / 4))) CHECK(std::abs(r.residual) <= 1e-8);
  }
}

TEST_CASE("AMM audits satisfy the discrete inequality") {
  const GradientSystem ac = allen_cahn_system(12, 2.0);
  const GradientSystem qp = quadratic_pair();
  const GradientSystem cx = counterexample();
  for (int N : {8, 32}) {
    const Partition P = Partition::uniform(1.0, N);
    for (const auto& [sys, u0] : {std::pair{ac, bump(12, 1.2)}, std::pair{qp, vec({1.0, -0.5, 2.0})},
                                  std::pair{cx, vec({2.0, 1.0})}}) {
      const auto out = amm_solve(sys, P, u0, 1e-11, true, 8);
      for (const auto& r : edb_audit_pairs(out, sys, every(N, N / 4))) {
        CHECK(r.residual <= r.slack);
        CHECK(r.passed);
        CHECK(r.rate.mismatch() <= 1e-10 * (1.0 + r.rate.value));
        CHECK(r.slope.mismatch() <= 1e-10 * (1.0 + r.slope.value));
      }
      // implicit-step audits of split runs with the delayed power
      const auto split = split_step_solve(sys, P, u0, 8, 1e-11);
      for (const auto& r : edb_audit_pairs(split, sys, every(N, N / 4))) {
        CHECK(r.residual <= r.slack);
        CHECK(r.fenchel_young_min >= -1e-10);
      }
    }
  }
}

TEST_CASE("stationary trajectory: every audit term vanishes") {
  QuadraticBlockParams p;
  p.A = 2.0 * I(2);
  p.B = Mat::Zero(0, 2);
  p.G = Mat::Zero(0, 0);
  const GradientSystem sys{Energy::quadratic_block(p), Potential::quadratic(I(2)),
                           Potential::quadratic(3.0 * I(2)), std::nullopt};
  for (Scheme s : {Scheme::Split, Scheme::Amm, Scheme::Effective}) {
    const auto out = run_scheme(sys, Partition::uniform(1.0, 8), Vec::Zero(2), s);
    const auto r = edb_audit(out, sys, 0.0, 1.0);
    CHECK(r.rate.value == 0.0);
    CHECK(r.slope.value == 0.0);
    CHECK(r.power_integral == 0.0);
    CHECK(r.energy_start == r.energy_end);
    CHECK(r.residual == 0.0);
    const auto rem = remainder_term(out, sys.energy, 0.0, 1.0);
    CHECK(rem.remainder == 0.0);
    CHECK(rem.lambda_bound == 0.0);
  }
}

TEST_CASE("remainder term") {
  const GradientSystem qp = quadratic_pair();
  const auto out = amm_solve(qp, Partition::uniform(1.0, 16), vec({1.0, -0.5, 2.0}));
  const auto rem = remainder_term(out, qp.energy, 0.0, 1.0);
  CHECK(rem.lambda_bound == 0.0);
  CHECK(rem.remainder <= 1e-14);

  const GradientSystem ac = allen_cahn_system(12, 2.0);
  double prev = INFINITY;
  for (int N : {8, 16, 32, 64}) {
    const auto o = amm_solve(ac, Partition::uniform(1.0, N), bump(12, 1.2));
    const auto r = remainder_term(o, ac.energy, 0.0, 1.0);
    CHECK(std::abs(r.remainder) < prev);
    CHECK(r.remainder <= r.lambda_bound + 1e-14);
    prev = std::abs(r.remainder);
  }
}

TEST_CASE("decomposition: inf-convolution lower bound and defect under refinement") {
  const GradientSystem qp = quadratic_pair();
  const Vec u0 = vec({1.0, -0.5, 2.0});
  const auto ref = effective_solve(qp, Partition::uniform(1.0, 1024), u0);
  double prev = INFINITY;
  for (int N : {8, 16, 32, 64}) {
    const auto out = split_step_solve(qp, Partition::uniform(1.0, N), u0);
    const auto d = decomposition_report(out, qp, &ref);
    CHECK(d.value_gap >= -1e-12);
    REQUIRE(d.defect_reference);
    CHECK(*d.defect_reference < prev);
    prev = *d.defect_reference;
  }
}

TEST_CASE("convergence study on a smooth quadratic pair") {
  const GradientSystem qp = quadratic_pair();
  StudyOptions opt;
  opt.jobs = 4;
  for (Scheme s : {Scheme::Split, Scheme::Amm}) {
    const auto st = convergence_study(qp, vec({1.0, -0.5, 2.0}), 1.0, s, {8, 16, 32, 64}, opt);
    REQUIRE(st.rows.size() == 4);
    for (std::size_t i = 1; i < 4; ++i) {
      CHECK(st.rows[i].sup_error < st.rows[i - 1].sup_error);
      CHECK(st.rows[i].defect < st.rows[i - 1].defect);
      REQUIRE(st.rows[i].order);
      CHECK(*st.rows[i].order >= 0.5);
    }
    std::ostringstream os;
    write_study_csv(st, os);
    CHECK(os.str().find("N,sup_error,order") != std::string::npos);
  }
}

TEST_CASE("convergence study on the counterexample does not converge") {
  const GradientSystem cx = counterexample();
  const auto st = convergence_study(cx, vec({2, 1}), 1.0, Scheme::Split, {16, 32, 64, 128});
  CHECK(st.reference == "exact-regime");
  for (const auto& r : st.rows) {
    // at t = 3/4 the effective solution is at rest while the split one is at (1/4, 1/4)
    CHECK(r.sup_error > 0.3);
    // both runs dissipate the same total over [0, 1]
    CHECK(std::abs(r.rate_gap) < 1e-8);
  }
  // on the middle interval the split rate averages 3/4 per unit time, the effective one 1
  const auto split = split_step_solve(cx, Partition::uniform(1.0, 256), vec({2, 1}));
  const auto eff = effective_solve(cx, Partition::uniform(1.0, 256), vec({2, 1}));
  CHECK(rate_term(split, cx, 0.25, 0.75).value == doctest::Approx(0.375).epsilon(1e-10));
  CHECK(rate_term(eff, cx, 0.25, 0.75).value == doctest::Approx(0.5).epsilon(1e-10));
  // (3/4 - 9/16) over the 2/3-long diagonal phase
  CHECK(std::abs(decomposition_report(split, cx).value_gap - 0.125) < 2e-3);
  // concurrent rows give identical numbers
  StudyOptions par;
  par.jobs = 3;
  const auto st2 = convergence_study(cx, vec({2, 1}), 1.0, Scheme::Split, {16, 32, 64, 128}, par);
  for (std::size_t i = 0; i < 4; ++i) CHECK(st.rows[i].sup_error == st2.rows[i].sup_error);
}

TEST_CASE("reports serialize to JSON") {
  const GradientSystem cx = counterexample();
  const auto out = split_step_solve(cx, Partition::uniform(1.0, 8), vec({2, 1}));
  const auto j = to_json(edb_audit(out, cx, 0.0, 1.0));
  CHECK(j["form"] == "balance");
  CHECK(j.contains("D_rate"));
  CHECK(j["interval"][1] == 1.0);
}
