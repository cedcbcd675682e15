#include "splitflow/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace splitflow {

namespace {

constexpr int kMaxNewton = 200;

Vec gather(const Vec& v, const std::vector<Index>& idx) {
  Vec out(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Index>(i)] = v[idx[i]];
  return out;
}

// E(t, .) restricted to the coordinates in idx, the others held at `full`.
struct Restricted {
  const Energy& E;
  double t;
  Vec full;
  std::vector<Index> idx;

  Vec embed(const Vec& w) const {
    Vec u = full;
    for (std::size_t i = 0; i < idx.size(); ++i) u[idx[i]] = w[static_cast<Index>(i)];
    return u;
  }
  double value(const Vec& w) const { return energy_eval(E, t, embed(w)); }
  Vec grad(const Vec& w) const { return gather(*energy_gradient(E, t, embed(w)), idx); }
  Mat hess(const Vec& w) const {
    const Mat H = *energy_hessian(E, t, embed(w));
    const Index n = static_cast<Index>(idx.size());
    Mat out(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) out(i, j) = H(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    return out;
  }
};

// Cholesky of H + mu I with the smallest mu from a geometric ladder.
Eigen::LLT<Mat> modified_cholesky(const Mat& H) {
  Eigen::LLT<Mat> llt(H);
  if (llt.info() == Eigen::Success) return llt;
  const Index n = H.rows();
  double mu = 1e-10 * (1.0 + H.diagonal().cwiseAbs().maxCoeff());
  for (int i = 0; i < 40; ++i, mu *= 10.0) {
    llt.compute(H + mu * Mat::Identity(n, n));
    if (llt.info() == Eigen::Success) return llt;
  }
  throw NumericalError("prox_step: Hessian could not be regularized", Vec::Zero(n), 0.0, 0);
}

// Newton with Armijo backtracking on F(w) = h R((w - a)/h) + E.
ProxResult primal_newton(const Restricted& P, const Potential& R, const Vec& a, double h,
                         double tol) {
  auto F = [&](const Vec& w) { return h * eval(R, Vec((w - a) / h)).value() + P.value(w); };
  auto G = [&](const Vec& w) -> Vec { return *primal_gradient(R, Vec((w - a) / h)) + P.grad(w); };
  const double stop = tol * (1.0 + a.norm());
  Vec w = a;
  double f = F(w);
  Vec g = G(w);
  int it = 0;
  for (; it < kMaxNewton && g.norm() > stop; ++it) {
    const Vec v = (w - a) / h;
    const Mat H = *primal_hessian(R, v) / h + P.hess(w);
    Vec dir = -modified_cholesky(H).solve(g);
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      dir = -g;
      slope = -g.squaredNorm();
    }
    double step = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls, step *= 0.5) {
      const Vec wn = w + step * dir;
      const double fn = F(wn);
      // near the optimum the decrease drops below the rounding of F; fall
      // back to a decrease of the gradient norm there
      const bool flat = std::abs(fn - f) <= 1e-13 * (1.0 + std::abs(f));
      if (fn <= f + 1e-4 * step * slope || (flat && G(wn).norm() < g.norm())) {
        w = wn;
        f = fn;
        accepted = true;
        break;
      }
    }
    g = G(w);
    if (!accepted) break;
  }
  const double res = g.norm();
  if (res > stop)
    throw NumericalError("prox_step: Newton iteration did not converge", P.embed(w), res, it);
  return {P.embed(w), Vec(), it, res};
}

// Semismooth Newton on (w - a)/h - dual_rate(R, -grad E(w)) = 0.
ProxResult dual_newton(const Restricted& P, const Potential& R, const Vec& a, double h,
                       double tol) {
  const Index n = a.size();
  auto G = [&](const Vec& w) -> Vec { return (w - a) / h - dual_rate(R, Vec(-P.grad(w))); };
  const double stop = tol * (1.0 + a.norm());
  Vec w = a;
  Vec r = G(w);
  double nr = h * r.norm();
  int it = 0;
  for (; it < kMaxNewton && nr > stop; ++it) {
    const Vec xi = -P.grad(w);
    auto J = dual_jacobian(R, xi);
    if (!J) throw NumericalError("prox_step: dual rate not differentiable", P.embed(w), nr, it);
    const Mat A = Mat::Identity(n, n) / h + *J * P.hess(w);
    const Vec dir = -A.partialPivLu().solve(r);
    double step = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls, step *= 0.5) {
      const Vec wn = w + step * dir;
      const Vec rn = G(wn);
      const double nn = h * rn.norm();
      if (nn <= (1.0 - 1e-4 * step) * nr) {
        w = wn;
        r = rn;
        nr = nn;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // full step anyway: piecewise-linear residuals can need a face change
      w += dir;
      r = G(w);
      nr = h * r.norm();
    }
  }
  if (nr > stop)
    throw NumericalError("prox_step: semismooth Newton did not converge", P.embed(w), nr, it);
  return {P.embed(w), Vec(), it, nr};
}

// Weighted prox of the max-norm: min sum (u_i - a_i)^2 / (2 al_i) + max|u_i|.
ProxResult max_norm_prox(const Vec& a, const Vec& al) {
  auto objective = [&](const Vec& u) {
    return ((u - a).array().square() / (2.0 * al.array())).sum() +
           std::max(std::abs(u[0]), std::abs(u[1]));
  };
  std::vector<Vec> cands;
  if (std::abs(a[0]) / al[0] + std::abs(a[1]) / al[1] <= 1.0) cands.push_back(Vec::Zero(2));
  for (double s : {-1.0, 1.0}) {
    Vec u = a;
    u[0] = a[0] - al[0] * s;
    if (u[0] * s > 0.0 && std::abs(u[0]) > std::abs(u[1])) cands.push_back(u);
    u = a;
    u[1] = a[1] - al[1] * s;
    if (u[1] * s > 0.0 && std::abs(u[1]) > std::abs(u[0])) cands.push_back(u);
    for (double s2 : {-1.0, 1.0}) {
      const double th = (s * a[0] - s2 * a[1] + al[1]) / (al[0] + al[1]);
      const double r = s * a[0] - al[0] * th;
      if (th >= 0.0 && th <= 1.0 && r > 0.0) cands.push_back(Vec((Vec(2) << s * r, s2 * r).finished()));
    }
  }
  if (cands.empty()) throw NumericalError("prox_step: max-norm case analysis failed", a, 0.0, 0);
  const Vec* best = &cands.front();
  double fb = objective(*best);
  for (const auto& c : cands) {
    const double fc = objective(c);
    if (fc < fb) {
      fb = fc;
      best = &c;
    }
  }
  return {*best, Vec((a - *best).cwiseQuotient(al)), 0, 0.0};
}

void emit(double t0, double t1, const Vec& u, const Vec& vel, const Vec& xi, int mech,
          std::vector<AffinePiece>& out) {
  if (t1 > t0) out.push_back({t0, t1, u, vel, xi, mech});
}

}  // namespace

// ---------------------------------------------------------------------------

void GradientSystem::validate() const {
  const Index n = energy.dim();
  if (r1.dim() != n) throw ConfigError("GradientSystem: R_1 dimension does not match the energy");
  if (r2 && r2->dim() != n) throw ConfigError("GradientSystem: R_2 dimension does not match the energy");
  if (!block_layout) return;
  const auto [ny, nz] = *block_layout;
  if (ny + nz != n || ny < 1 || nz < 1) throw ConfigError("GradientSystem: block layout does not match the energy");
  if (!r2) throw ConfigError("GradientSystem: block systems need two potentials");
  auto b1 = block_view(r1);
  auto b2 = block_view(*r2);
  if (!b1 || !b2) throw ConfigError("GradientSystem: block systems need BlockIndicator potentials");
  auto range = [](Index from, Index to) {
    std::vector<Index> v;
    for (Index i = from; i < to; ++i) v.push_back(i);
    return v;
  };
  if (b1->active != range(0, ny) || b2->active != range(ny, n))
    throw ConfigError("GradientSystem: R_1 must act on the y block and R_2 on the z block");
}

const Potential& GradientSystem::mechanism(int j) const {
  if (j == 1 || !r2) return r1;
  return *r2;
}

Potential GradientSystem::rescaled(int j) const { return Potential::rescaled(mechanism(j)); }

Potential GradientSystem::effective() const {
  return r2 ? Potential::inf_convolution(r1, *r2) : r1;
}

ProxResult prox_step(const Energy& E, const Potential& R, double t_eval, const Vec& anchor,
                     double h, double tol) {
  if (!(h > 0.0)) throw InputError("prox_step: step must be positive");
  require_dim(anchor, E.dim(), "prox_step");
  if (R.dim() != E.dim()) throw InputError("prox_step: potential dimension does not match");

  if (E.kind() == EnergyKind::MaxNorm) {
    auto d = diagonal_dual_weights(R);
    if (!d || !(d->array() > 0.0).all())
      throw ConfigError("prox_step: max-norm energy needs a diagonal quadratic potential");
    return max_norm_prox(anchor, h * *d);
  }

  Potential base = R;
  std::vector<Index> idx;
  if (auto bv = block_view(R)) {
    base = bv->base;
    idx = bv->active;
  } else {
    for (Index i = 0; i < E.dim(); ++i) idx.push_back(i);
  }
  Restricted P{E, t_eval, anchor, idx};
  const Vec a = gather(anchor, idx);

  const bool inf_conv = base.kind() == PotentialKind::InfConvolution;
  ProxResult r;
  if (inf_conv && has_lipschitz_dual(base)) {
    r = dual_newton(P, base, a, h, tol);
  } else if (has_smooth_primal(base)) {
    r = primal_newton(P, base, a, h, tol);
  } else if (has_lipschitz_dual(base)) {
    r = dual_newton(P, base, a, h, tol);
  } else {
    throw ConfigError("prox_step: potential is neither smooth nor has a Lipschitz dual rate");
  }
  r.xi = *energy_gradient(E, t_eval, r.u);
  return r;
}

bool exact_regime_applicable(const Energy& E, const Potential& R) {
  if (E.kind() != EnergyKind::MaxNorm) return false;
  auto d = diagonal_dual_weights(R);
  return d && (d->array() > 0.0).all();
}

bool regime_flow(const Vec& d, double s, double t, const Vec& u_init, int mech,
                 std::vector<AffinePiece>& pieces) {
  if (d.size() != 2 || u_init.size() != 2 || !u_init.allFinite() || !(d.array() > 0.0).all())
    return false;
  Vec u = u_init;
  double now = s;
  int guard = 0;
  while (now < t) {
    if (++guard > 16) return false;
    const double r1 = std::abs(u[0]);
    const double r2 = std::abs(u[1]);
    const double m = std::max(r1, r2);
    const Vec sg = (Vec(2) << (u[0] < 0.0 ? -1.0 : 1.0), (u[1] < 0.0 ? -1.0 : 1.0)).finished();
    if (m == 0.0) {
      emit(now, t, u, Vec::Zero(2), Vec::Zero(2), mech, pieces);
      return true;
    }
    Vec xi(2), vel(2), snapped(2);
    double hit;
    if (std::abs(r1 - r2) <= 1e-13 * m) {
      // both faces active: theta from the dual weights keeps |u1| = |u2|
      const double th = d[1] / (d[0] + d[1]);
      xi << th * sg[0], (1.0 - th) * sg[1];
      vel = -d.cwiseProduct(xi);
      hit = now + m / (d[0] * d[1] / (d[0] + d[1]));
      snapped = Vec::Zero(2);
    } else if (r1 > r2) {
      xi << sg[0], 0.0;
      vel << -d[0] * sg[0], 0.0;
      hit = now + (r1 - r2) / d[0];
      snapped << sg[0] * r2, u[1];
    } else {
      xi << 0.0, sg[1];
      vel << 0.0, -d[1] * sg[1];
      hit = now + (r2 - r1) / d[1];
      snapped << u[0], sg[1] * r1;
    }
    if (hit >= t) {
      emit(now, t, u, vel, xi, mech, pieces);
      return true;
    }
    emit(now, hit, u, vel, xi, mech, pieces);
    u = snapped;
    now = hit;
  }
  return true;
}

namespace {

Vec state_at(const std::vector<AffinePiece>& pieces, std::size_t from, double t) {
  for (std::size_t i = from; i < pieces.size(); ++i)
    if (t <= pieces[i].t1) return pieces[i].at(std::max(t, pieces[i].t0));
  return pieces.back().at(pieces.back().t1);
}

const AffinePiece& piece_at(const std::vector<AffinePiece>& pieces, std::size_t from, double t) {
  for (std::size_t i = from; i < pieces.size(); ++i)
    if (t <= pieces[i].t1) return pieces[i];
  return pieces.back();
}

// Flow with potential R over the given sample times.
SubstepResult flow_on(const Energy& E, const Potential& R, int mech, const std::vector<double>& times,
                      const Vec& u_init, double tol) {
  SubstepResult out;
  out.times = times;
  out.states.push_back(u_init);
  const std::size_t M = times.size() - 1;
  if (exact_regime_applicable(E, R)) {
    std::vector<AffinePiece> pieces;
    if (regime_flow(*diagonal_dual_weights(R), times.front(), times.back(), u_init, mech, pieces)) {
      out.exact = true;
      for (std::size_t i = 1; i <= M; ++i) {
        out.states.push_back(state_at(pieces, 0, times[i]));
        out.forces.push_back(piece_at(pieces, 0, 0.5 * (times[i - 1] + times[i])).xi);
      }
      if (pieces.empty()) emit(times.front(), times.back(), u_init, Vec::Zero(2), Vec::Zero(2), mech, pieces);
      out.pieces = std::move(pieces);
      return out;
    }
    out.warnings.push_back("regime solver could not classify the state; using implicit steps");
  }
  for (std::size_t i = 1; i <= M; ++i) {
    ProxResult r;
    try {
      r = prox_step(E, R, times[i], out.states.back(), times[i] - times[i - 1], tol);
    } catch (const NumericalError& e) {
      throw NumericalError("t = " + format_double(times[i]) + ": " + e.what(), e.best_iterate(), e.gap(),
                           e.iterations());
    }
    out.states.push_back(r.u);
    out.forces.push_back(r.xi);
    out.iterations += r.iterations;
    out.residual = std::max(out.residual, r.residual);
  }
  return out;
}

std::vector<double> grid_times(const Grid& G, int j0, int j1) {
  std::vector<double> t;
  for (int j = j0; j <= j1; ++j) t.push_back(G.node_time(j));
  return t;
}

// Cell c: value at its right end, delayed value at its left end.
void fill_from_states(SchemeOutput& out, std::vector<Vec> states, std::vector<Vec> forces) {
  const auto& G = out.grid;
  std::vector<Vec> uc, ud;
  for (int c = 0; c < G->cells(); ++c) {
    uc.push_back(states[static_cast<std::size_t>(c + 1)]);
    ud.push_back(states[static_cast<std::size_t>(c)]);
  }
  out.u_const = SampledCurve::cellwise(G, InterpolantKind::PiecewiseConstant, std::move(uc));
  out.u_delayed = SampledCurve::cellwise(G, InterpolantKind::DelayedConstant, std::move(ud));
  out.u_linear = SampledCurve::nodal(G, std::move(states));
  out.xi = SampledCurve::cellwise(G, InterpolantKind::PiecewiseConstant, std::move(forces));
}

// Block forces: y part on left semi-intervals, z part on right ones.
void mask_block_forces(SchemeOutput& out, Index ny) {
  auto mask = [&](SampledCurve& c) {
    for (int k = 0; k < out.grid->cells(); ++k) {
      Vec& v = c.values[static_cast<std::size_t>(k)];
      if (out.grid->cell_is_left(k))
        v.tail(v.size() - ny).setZero();
      else
        v.head(ny).setZero();
    }
  };
  mask(out.xi);
  if (out.xi_variational) mask(*out.xi_variational);
}

void check_start(const GradientSystem& sys, const Vec& u0) {
  sys.validate();
  require_dim(u0, sys.dim(), "scheme initial datum");
  if (!u0.allFinite()) throw InputError("scheme: initial datum must be finite");
}

SchemeOutput split_impl(const GradientSystem& sys, const Partition& P, const Vec& u0, int M,
                        double tol, Scheme scheme) {
  check_start(sys, u0);
  if (M < 1) throw InputError("split_step_solve: inner steps must be >= 1");
  SchemeOutput out;
  out.scheme = scheme;
  out.tol = tol;
  out.grid = std::make_shared<const Grid>(P, M);
  const Grid& G = *out.grid;
  std::vector<Vec> states{u0};
  std::vector<Vec> forces;
  const Potential R1 = sys.rescaled(1);
  const Potential R2 = sys.rescaled(2);
  for (int k = 1; k <= P.steps(); ++k) {
    for (int half = 1; half <= 2; ++half) {
      const int j0 = half == 1 ? G.node_index(k - 1) : G.midpoint_index(k);
      SubstepResult r = flow_on(sys.energy, half == 1 ? R1 : R2, half, grid_times(G, j0, j0 + M),
                                states.back(), tol);
      states.insert(states.end(), r.states.begin() + 1, r.states.end());
      forces.insert(forces.end(), r.forces.begin(), r.forces.end());
      out.pieces.insert(out.pieces.end(), r.pieces.begin(), r.pieces.end());
      for (auto& w : r.warnings) out.warnings.push_back("step " + std::to_string(k) + ": " + w);
      out.stats.push_back({k, half, r.iterations, r.residual, r.exact});
    }
  }
  fill_from_states(out, std::move(states), std::move(forces));
  return out;
}

SchemeOutput amm_impl(const GradientSystem& sys, const Partition& P, const Vec& u0, double tol,
                      bool with_variational, int samples, Scheme scheme) {
  check_start(sys, u0);
  if (samples < 1) throw InputError("amm_solve: samples must be >= 1");
  SchemeOutput out;
  out.scheme = scheme;
  out.tol = tol;
  out.grid = std::make_shared<const Grid>(P, samples);
  const Grid& G = *out.grid;
  const int M = samples;
  const Potential R[2] = {sys.rescaled(1), sys.rescaled(2)};
  std::vector<Vec> nodal(static_cast<std::size_t>(G.nodes()));
  std::vector<Vec> uc(static_cast<std::size_t>(G.cells())), ud(uc.size()), xi(uc.size());
  std::vector<Vec> uv, xv;
  if (with_variational) {
    uv.resize(uc.size());
    xv.resize(uc.size());
  }
  nodal[0] = u0;
  Vec anchor = u0;
  for (int k = 1; k <= P.steps(); ++k) {
    const double h = 0.5 * P.tau(k);
    for (int half = 1; half <= 2; ++half) {
      const double t0 = half == 1 ? P.node(k - 1) : P.midpoint(k);
      const double t1 = half == 1 ? P.midpoint(k) : P.node(k);
      const int j0 = half == 1 ? G.node_index(k - 1) : G.midpoint_index(k);
      ProxResult r;
      try {
        r = prox_step(sys.energy, R[half - 1], t1, anchor, h, tol);
      } catch (const NumericalError& e) {
        throw NumericalError("step " + std::to_string(k) + " half " + std::to_string(half) + ": " + e.what(),
                             e.best_iterate(), e.gap(), e.iterations());
      }
      out.stats.push_back({k, half, r.iterations, r.residual, false});
      for (int i = 1; i <= M; ++i) {
        const int j = j0 + i;
        const double s = i == M ? 1.0 : (G.node_time(j) - t0) / (t1 - t0);
        nodal[static_cast<std::size_t>(j)] = i == M ? r.u : Vec(anchor + s * (r.u - anchor));
        const auto c = static_cast<std::size_t>(j - 1);
        uc[c] = r.u;
        ud[c] = anchor;
        xi[c] = r.xi;
        if (with_variational) {
          const double rr = G.cell_mid(j - 1) - t0;
          const ProxResult v = prox_step(sys.energy, R[half - 1], t0 + rr, anchor, rr, tol);
          uv[c] = v.u;
          xv[c] = v.xi;
        }
      }
      anchor = r.u;
    }
  }
  out.u_const = SampledCurve::cellwise(out.grid, InterpolantKind::PiecewiseConstant, std::move(uc));
  out.u_delayed = SampledCurve::cellwise(out.grid, InterpolantKind::DelayedConstant, std::move(ud));
  out.u_linear = SampledCurve::nodal(out.grid, std::move(nodal));
  out.xi = SampledCurve::cellwise(out.grid, InterpolantKind::PiecewiseConstant, std::move(xi));
  if (with_variational) {
    out.u_variational = SampledCurve::cellwise(out.grid, InterpolantKind::Variational, std::move(uv));
    out.xi_variational = SampledCurve::cellwise(out.grid, InterpolantKind::Variational, std::move(xv));
  }
  return out;
}

}  // namespace

SubstepResult substep_flow(const GradientSystem& sys, int which, double s, double t,
                           const Vec& u_init, int inner_steps, double tol) {
  sys.validate();
  if (which != 1 && which != 2) throw InputError("substep_flow: which must be 1 or 2");
  if (!(s >= 0.0) || !(t > s)) throw InputError("substep_flow: need 0 <= s < t");
  if (inner_steps < 1) throw InputError("substep_flow: inner steps must be >= 1");
  require_dim(u_init, sys.dim(), "substep_flow");
  std::vector<double> times;
  for (int i = 0; i <= inner_steps; ++i) times.push_back(s + (t - s) * i / inner_steps);
  times.back() = t;
  return flow_on(sys.energy, sys.rescaled(which), which, times, u_init, tol);
}

const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::Split: return "split";
    case Scheme::Amm: return "amm";
    case Scheme::BlockSplit: return "block-split";
    case Scheme::BlockAmm: return "block-amm";
    case Scheme::Effective: return "effective";
  }
  return "unknown";
}

Scheme scheme_from_string(const std::string& name) {
  for (Scheme s : {Scheme::Split, Scheme::Amm, Scheme::BlockSplit, Scheme::BlockAmm, Scheme::Effective})
    if (name == to_string(s)) return s;
  throw ConfigError("unknown scheme '" + name + "' (split, amm, effective, block-split, block-amm)");
}

int SchemeOutput::total_iterations() const {
  int n = 0;
  for (const auto& s : stats) n += s.iterations;
  return n;
}

SchemeOutput split_step_solve(const GradientSystem& sys, const Partition& P, const Vec& u0,
                              int inner_steps, double tol) {
  return split_impl(sys, P, u0, inner_steps, tol, Scheme::Split);
}

SchemeOutput amm_solve(const GradientSystem& sys, const Partition& P, const Vec& u0, double tol,
                       bool with_variational, int samples) {
  return amm_impl(sys, P, u0, tol, with_variational, samples, Scheme::Amm);
}

SchemeOutput block_solve(const GradientSystem& sys, const Partition& P, const Vec& u0,
                         BlockMode mode, double tol, int inner_steps) {
  if (!sys.block_layout) throw ConfigError("block_solve: system has no block layout");
  SchemeOutput out = mode == BlockMode::Split
                         ? split_impl(sys, P, u0, inner_steps, tol, Scheme::BlockSplit)
                         : amm_impl(sys, P, u0, tol, true, inner_steps, Scheme::BlockAmm);
  mask_block_forces(out, sys.block_layout->first);
  return out;
}

SchemeOutput effective_solve(const GradientSystem& sys, const Partition& P, const Vec& u0,
                             double tol, int inner_steps) {
  check_start(sys, u0);
  if (inner_steps < 1) throw InputError("effective_solve: inner steps must be >= 1");
  SchemeOutput out;
  out.scheme = Scheme::Effective;
  out.tol = tol;
  out.grid = std::make_shared<const Grid>(P, inner_steps);
  const Grid& G = *out.grid;
  const Potential R = sys.effective();
  std::vector<double> times = grid_times(G, 0, G.cells());
  SubstepResult r = flow_on(sys.energy, R, 0, times, u0, tol);
  out.pieces = std::move(r.pieces);
  out.warnings = std::move(r.warnings);
  // per-step statistics are not separable for the exact flow
  out.stats.push_back({0, 0, r.iterations, r.residual, r.exact});
  fill_from_states(out, std::move(r.states), std::move(r.forces));
  return out;
}

}  // namespace splitflow
