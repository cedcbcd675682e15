#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "splitflow/partitions.hpp"
#include "splitflow/potentials.hpp"

#include <cmath>
#include <random>
#include <sstream>

using namespace splitflow;

namespace {

Vec scalar(double x) { return Vec::Constant(1, x); }

std::shared_ptr<const Grid> grid(Partition P, int M) {
  return std::make_shared<const Grid>(std::move(P), M);
}

Partition random_partition(std::mt19937_64& rng, int N) {
  std::uniform_real_distribution<double> u(0.2, 1.0);
  std::vector<double> nodes{0.0};
  for (int k = 0; k < N; ++k) nodes.push_back(nodes.back() + u(rng));
  return Partition::from_nodes(nodes);
}

SampledCurve random_curve(std::mt19937_64& rng, std::shared_ptr<const Grid> G, Index n) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Vec> vals;
  for (int c = 0; c < G->cells(); ++c) {
    Vec v(n);
    for (Index i = 0; i < n; ++i) v[i] = g(rng);
    vals.push_back(v);
  }
  return SampledCurve::cellwise(G, InterpolantKind::PiecewiseConstant, vals);
}

SampledCurve sample_function(std::shared_ptr<const Grid> G, double (*f)(double)) {
  std::vector<Vec> vals;
  for (int c = 0; c < G->cells(); ++c) vals.push_back(scalar(f(G->cell_mid(c))));
  return SampledCurve::cellwise(G, InterpolantKind::PiecewiseConstant, vals);
}

double smooth(double t) { return std::sin(2.0 * M_PI * t) + t * t; }

double l1_distance(const SampledCurve& a, const SampledCurve& b) {
  SampledCurve d = a;
  for (std::size_t i = 0; i < d.values.size(); ++i) d.values[i] -= b.values[i];
  return l1_norm(d);
}

}  // namespace

TEST_CASE("build_partition examples") {
  auto P = Partition::uniform(1.0, 2);
  CHECK(P.nodes() == std::vector<double>{0.0, 0.5, 1.0});
  CHECK(P.midpoint(1) == 0.25);
  CHECK(P.midpoint(2) == 0.75);

  auto Q = Partition::from_nodes({0.0, 0.3, 1.0});
  CHECK(Q.tau(1) == doctest::Approx(0.3));
  CHECK(Q.tau(2) == doctest::Approx(0.7));
  CHECK(Q.max_step() == doctest::Approx(0.7));

  CHECK_THROWS_AS(Partition::from_nodes({0.0, 0.5, 0.5}), InputError);
  CHECK_THROWS_AS(Partition::from_nodes({0.0, 0.6, 0.4}), InputError);
  CHECK_THROWS_AS(Partition::uniform(-1.0, 3), InputError);
}

TEST_CASE("chi marks left semi-intervals, which are right-closed") {
  auto P = Partition::uniform(1.0, 1);
  CHECK(chi(P, 0.25) == 1);
  CHECK(chi(P, 0.75) == 0);
  CHECK(chi(P, 0.5) == 1);
  CHECK_THROWS_AS(chi(P, 0.0), InputError);
  CHECK_THROWS_AS(chi(P, 1.0), InputError);

  // every t lies in exactly one semi-interval
  auto Q = Partition::from_nodes({0.0, 0.3, 1.0, 1.1});
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(1e-9, 1.1 - 1e-9);
  for (int i = 0; i < 1000; ++i) {
    const double t = u(rng);
    const int k = Q.step_of(t);
    CHECK(Q.node(k - 1) < t);
    CHECK(t <= Q.node(k));
    CHECK(chi(Q, t) == (t <= Q.midpoint(k) ? 1 : 0));
  }
}

TEST_CASE("grid nodes hit partition nodes and midpoints exactly") {
  auto P = Partition::from_nodes({0.0, 0.3, 1.0, 1.7});
  Grid G(P, 3);
  CHECK(G.cells() == 18);
  for (int k = 1; k <= 3; ++k) {
    CHECK(G.node_time(G.node_index(k)) == P.node(k));
    CHECK(G.node_time(G.midpoint_index(k)) == P.midpoint(k));
  }
  for (int c = 0; c < G.cells(); ++c) {
    CHECK(G.cell_of(G.cell_mid(c)) == c);
    CHECK(G.cell_of(G.cell_end(c)) == c);
    CHECK(G.cell_width(c) > 0.0);
  }
  CHECK(G.cell_of(0.0) == 0);
}

TEST_CASE("repetition_apply on one step") {
  auto G = grid(Partition::uniform(1.0, 1), 4);
  std::vector<Vec> vals;
  for (int c = 0; c < 8; ++c) vals.push_back(scalar(c < 4 ? 1.0 + c : 10.0 + c));
  auto g = SampledCurve::cellwise(G, InterpolantKind::PiecewiseConstant, vals);
  auto t1 = repetition_apply(1, g);
  auto t2 = repetition_apply(2, g);
  for (int c = 0; c < 4; ++c) {
    CHECK(t1.values[c][0] == vals[c][0]);
    CHECK(t1.values[c + 4][0] == vals[c][0]);
    CHECK(t2.values[c][0] == vals[c + 4][0]);
    CHECK(t2.values[c + 4][0] == vals[c + 4][0]);
  }

  // constant halves: the average is the constant mean on both halves
  auto H = grid(Partition::uniform(1.0, 1), 1);
  auto h = SampledCurve::cellwise(H, InterpolantKind::PiecewiseConstant, {scalar(3.0), scalar(7.0)});
  auto a1 = repetition_apply(1, h), a2 = repetition_apply(2, h);
  CHECK(0.5 * (a1.values[0][0] + a2.values[0][0]) == 5.0);
  CHECK(0.5 * (a1.values[1][0] + a2.values[1][0]) == 5.0);

  CHECK_THROWS_AS(repetition_apply(3, g), InputError);
  auto nodal = SampledCurve::nodal(G, std::vector<Vec>(9, scalar(0.0)));
  CHECK_THROWS_AS(repetition_apply(1, nodal), InputError);
}

TEST_CASE("integrate examples") {
  auto G = grid(Partition::uniform(1.0, 4), 8);
  auto c2 = SampledCurve::cellwise(G, InterpolantKind::PiecewiseConstant,
                                   std::vector<Vec>(G->cells(), scalar(2.0)));
  CHECK(integrate(c2, [](const Vec& v) { return v[0]; }, 0.0, 1.0) == doctest::Approx(2.0));
  CHECK(integrate(c2, [](const Vec& v) { return v[0]; }, 0.3, 0.3) == 0.0);
  CHECK_THROWS_AS(integrate(c2, [](const Vec& v) { return v[0]; }, 0.5, 0.2), InputError);
  // partial cells are split exactly
  CHECK(integrate(c2, [](const Vec& v) { return v[0]; }, 0.13, 0.77) ==
        doctest::Approx(2.0 * 0.64).epsilon(1e-14));

  auto F = grid(Partition::uniform(1.0, 128), 8);  // 2048 cells
  std::vector<Vec> nodes;
  for (int j = 0; j < F->nodes(); ++j) nodes.push_back(scalar(F->node_time(j)));
  auto lin = SampledCurve::nodal(F, nodes);
  CHECK(std::abs(integrate(lin, [](const Vec& v) { return v[0] * v[0]; }, 0.0, 1.0) - 1.0 / 3.0) < 1e-5);
  CHECK(lin.at(0.123456)[0] == doctest::Approx(0.123456).epsilon(1e-14));
  auto d = lin.derivative();
  for (const auto& v : d.values) CHECK(v[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("repetition operators have L1 norm at most 2") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> Nd(1, 12), Md(1, 6), nd(1, 3);
  int violations = 0;
  for (int i = 0; i < 1000; ++i) {
    auto G = grid(random_partition(rng, Nd(rng)), Md(rng));
    auto g = random_curve(rng, G, nd(rng));
    const double base = l1_norm(g);
    for (int j : {1, 2})
      if (l1_norm(repetition_apply(j, g)) > 2.0 * base * (1.0 + 1e-14)) ++violations;
  }
  CHECK(violations == 0);
}

TEST_CASE("repetition operators converge to the identity on a continuous function") {
  for (int j : {1, 2}) {
    double prev = 1e300;
    for (int N = 2; N <= 128; N *= 2) {
      auto G = grid(Partition::uniform(1.0, N), 4);
      auto g = sample_function(G, smooth);
      const double err = l1_distance(repetition_apply(j, g), g);
      CHECK(err < prev);
      prev = err;
    }
    CHECK(prev < 0.05);
  }
  // the average 1/2 (T1 + T2) g also tends to g
  double prev = 1e300;
  for (int N = 2; N <= 128; N *= 2) {
    auto G = grid(Partition::uniform(1.0, N), 4);
    auto g = sample_function(G, smooth);
    auto a = repetition_apply(1, g);
    const auto b = repetition_apply(2, g);
    for (std::size_t i = 0; i < a.values.size(); ++i) a.values[i] = 0.5 * (a.values[i] + b.values[i]);
    const double err = l1_distance(a, g);
    CHECK(err < prev);
    prev = err;
  }
}

TEST_CASE("repetition operators are idempotent on pair-constant curves") {
  std::mt19937_64 rng(9);
  auto G = grid(random_partition(rng, 5), 3);
  auto g = random_curve(rng, G, 2);
  for (int c = 0; c < G->cells(); ++c)
    if (!G->cell_is_left(c)) g.values[c] = g.values[c - 3];
  for (int j : {1, 2}) {
    auto t = repetition_apply(j, g);
    for (int c = 0; c < G->cells(); ++c) CHECK((t.values[c] - g.values[c]).norm() == 0.0);
    auto tt = repetition_apply(j, repetition_apply(j, g));
    for (int c = 0; c < G->cells(); ++c) CHECK((tt.values[c] - t.values[c]).norm() == 0.0);
  }
}

TEST_CASE("rescaled dissipation integrates like the repeated half-rate") {
  std::mt19937_64 rng(13);
  const std::vector<Potential> Rs = {
      Potential::power_norm(3.0, Vec::Constant(2, 0.7)),
      Potential::one_hom_plus_quad(0.5, 2.0, 2),
      Potential::quadratic((Eigen::Matrix2d() << 2, 0.3, 0.3, 1).finished()),
  };
  for (int trial = 0; trial < 20; ++trial) {
    auto G = grid(random_partition(rng, 7), 4);
    auto V = random_curve(rng, G, 2);
    const auto& P = G->partition();
    for (const auto& R : Rs) {
      const auto Rt = Potential::rescaled(R);
      for (int j : {1, 2}) {
        const double lhs = integrate(V, [&](double t, const Vec& v) {
          const int c = G->cell_of(t);
          const bool active = (j == 1) == G->cell_is_left(c);
          return active ? eval(Rt, v).value() : 0.0;
        }, 0.0, P.horizon());
        const auto TV = repetition_apply(j, V);
        const double rhs = integrate(TV, [&](const Vec& v) { return eval(R, Vec(0.5 * v)).value(); },
                                     0.0, P.horizon());
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-13));
      }
    }
  }
}

TEST_CASE("CSV layout") {
  auto G = grid(Partition::uniform(1.0, 1), 1);
  Vec a(2), b(2), c(2);
  a << 0.1, 1.0 / 3.0;
  b << 2.0, -1e-20;
  c << 3.0, 4.0;
  auto lin = SampledCurve::nodal(G, {a, b, c});
  std::ostringstream os;
  write_csv(lin, os);
  const std::string s = os.str();
  CHECK(s.rfind("# interpolant_kind=piecewise-linear\n", 0) == 0);
  CHECK(s.find("t,v_1,v_2\n") != std::string::npos);
  CHECK(s.find("0,0.10000000000000001,0.33333333333333331\n") != std::string::npos);
  CHECK(s.find("0.5,2,-9.9999999999999995e-21\n") != std::string::npos);
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}
