#include "splitflow/diagnostics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <ostream>
#include <thread>

namespace splitflow {

namespace {

// R~1, R~2 and R_eff built once per audit.
struct Pots {
  Potential rt[2];
  Potential r[2];
  Potential eff;
  bool effective_run;

  Pots(const GradientSystem& sys, const SchemeOutput& out)
      : rt{sys.rescaled(1), sys.rescaled(2)},
        r{sys.mechanism(1), sys.mechanism(2)},
        eff(sys.effective()),
        effective_run(out.scheme == Scheme::Effective) {}

  const Potential& rate_pot(int mech) const { return mech == 0 ? eff : rt[mech - 1]; }
  double rate(int mech, const Vec& v) const { return eval(rate_pot(mech), v).value(); }
  double slope(int mech, const Vec& xi) const { return conjugate_eval(rate_pot(mech), Vec(-xi)); }
};

int cell_mechanism(const SchemeOutput& out, int c) {
  if (out.scheme == Scheme::Effective) return 0;
  return out.grid->cell_is_left(c) ? 1 : 2;
}

// Overlap of cell c with [s, t].
double overlap(const Grid& G, int c, double s, double t) {
  return std::max(0.0, std::min(G.cell_end(c), t) - std::max(G.cell_start(c), s));
}

// Midpoint-rule error from second differences inside each semi-interval.
double midpoint_error(const SchemeOutput& out, const std::vector<double>& f, double s, double t) {
  const Grid& G = *out.grid;
  const int M = G.inner();
  double err = 0.0;
  for (int c = 0; c < G.cells(); ++c) {
    const double w = overlap(G, c, s, t);
    if (w == 0.0) continue;
    const int pos = c % M;
    if (M < 3) continue;
    const int mid = std::clamp(pos, 1, M - 2) - pos + c;
    const double d2 = f[static_cast<std::size_t>(mid + 1)] - 2.0 * f[static_cast<std::size_t>(mid)] +
                      f[static_cast<std::size_t>(mid - 1)];
    err += w * std::abs(d2) / 24.0;
  }
  return err;
}

template <class F>
double over_pieces(const std::vector<AffinePiece>& pieces, double s, double t, F&& f) {
  double sum = 0.0;
  for (const auto& p : pieces) {
    const double a = std::max(p.t0, s), b = std::min(p.t1, t);
    if (b > a) sum += (b - a) * f(p, a, b);
  }
  return sum;
}

int steps_in(const Partition& P, double s, double t) {
  int n = 0;
  for (int k = 1; k <= P.steps(); ++k)
    if (P.node(k) > s && P.node(k - 1) < t) ++n;
  return n;
}

// Length of the implicit step that produced cell c.
double implicit_step(const SchemeOutput& out, int c) {
  const Grid& G = *out.grid;
  if (out.scheme == Scheme::Amm || out.scheme == Scheme::BlockAmm)
    return 0.5 * G.partition().tau(G.cell_step(c));
  return G.cell_width(c);
}

// Time at which the force of cell c was evaluated.
double force_time(const SchemeOutput& out, int c) {
  const Grid& G = *out.grid;
  if (out.scheme == Scheme::Amm || out.scheme == Scheme::BlockAmm) {
    const int k = G.cell_step(c);
    return G.cell_is_left(c) ? G.partition().midpoint(k) : G.partition().node(k);
  }
  return G.cell_end(c);
}

}  // namespace

double TermValue::mismatch() const { return std::abs(cellwise - repetition); }

const char* to_string(AuditForm f) { return f == AuditForm::Balance ? "balance" : "inequality"; }

TermValue rate_term(const SchemeOutput& out, const GradientSystem& sys, double s, double t) {
  if (out.u_linear.layout != Layout::Nodal) throw InputError("rate_term: output has no piecewise-linear curve");
  const Pots pots(sys, out);
  const Grid& G = *out.grid;
  const SampledCurve D = out.u_linear.derivative();
  TermValue tv;
  tv.cellwise = integrate(D, [&](double r, const Vec& v) {
    return pots.rate(cell_mechanism(out, G.cell_of(r)), v);
  }, s, t);
  if (pots.effective_run) {
    tv.repetition = tv.cellwise;
  } else {
    const SampledCurve V1 = repetition_apply(1, D), V2 = repetition_apply(2, D);
    double sum = 0.0;
    for (int c = 0; c < G.cells(); ++c) {
      const double w = overlap(G, c, s, t);
      if (w == 0.0) continue;
      const auto i = static_cast<std::size_t>(c);
      sum += w * (eval(pots.r[0], Vec(0.5 * V1.values[i])) + eval(pots.r[1], Vec(0.5 * V2.values[i]))).value();
    }
    tv.repetition = sum;
  }
  tv.value = out.exact() ? over_pieces(out.pieces, s, t, [&](const AffinePiece& p, double, double) {
    return pots.rate(p.mechanism, p.velocity);
  })
                         : tv.cellwise;
  return tv;
}

TermValue slope_term(const SchemeOutput& out, const GradientSystem& sys, double s, double t,
                     bool variational) {
  if (variational && !out.xi_variational) throw InputError("slope_term: output has no variational forces");
  const SampledCurve& X = variational ? *out.xi_variational : out.xi;
  if (X.values.empty()) throw InputError("slope_term: output has no force curve");
  const Pots pots(sys, out);
  const Grid& G = *out.grid;
  TermValue tv;
  std::vector<double> f(static_cast<std::size_t>(G.cells()));
  for (int c = 0; c < G.cells(); ++c)
    f[static_cast<std::size_t>(c)] = pots.slope(cell_mechanism(out, c), X.values[static_cast<std::size_t>(c)]);
  for (int c = 0; c < G.cells(); ++c) tv.cellwise += overlap(G, c, s, t) * f[static_cast<std::size_t>(c)];
  if (pots.effective_run) {
    tv.repetition = tv.cellwise;
  } else {
    const SampledCurve X1 = repetition_apply(1, X), X2 = repetition_apply(2, X);
    for (int c = 0; c < G.cells(); ++c) {
      const double w = overlap(G, c, s, t);
      if (w == 0.0) continue;
      const auto i = static_cast<std::size_t>(c);
      tv.repetition += w * (conjugate_eval(pots.r[0], Vec(-X1.values[i])) +
                            conjugate_eval(pots.r[1], Vec(-X2.values[i])));
    }
  }
  if (out.exact() && !variational) {
    tv.value = over_pieces(out.pieces, s, t, [&](const AffinePiece& p, double, double) {
      return pots.slope(p.mechanism, p.xi);
    });
  } else {
    tv.value = tv.cellwise;
    if (variational) tv.quadrature_error = midpoint_error(out, f, s, t);
  }
  return tv;
}

EDBReport edb_audit(const SchemeOutput& out, const GradientSystem& sys, double s, double t,
                    std::optional<AuditForm> form) {
  const Grid& G = *out.grid;
  const Energy& E = sys.energy;
  const Pots pots(sys, out);
  EDBReport r;
  r.s = s;
  r.t = t;
  r.form = form.value_or(out.exact() ? AuditForm::Balance : AuditForm::Inequality);
  r.variational = out.u_variational.has_value() && out.xi_variational.has_value();
  r.energy_start = energy_eval(E, s, out.u_linear.at(s));
  r.energy_end = energy_eval(E, t, out.u_linear.at(t));
  r.rate = rate_term(out, sys, s, t);
  r.slope = slope_term(out, sys, s, t, r.variational);
  r.steps = steps_in(G.partition(), s, t);
  r.tol = out.tol;

  double power_err = 0.0;
  if (out.exact()) {
    // 3-point Gauss-Legendre per piece
    const double g = std::sqrt(0.6);
    r.power_integral = over_pieces(out.pieces, s, t, [&](const AffinePiece& p, double a, double b) {
      const double m = 0.5 * (a + b), h = 0.5 * (b - a);
      return (5.0 * power_eval(E, m - g * h, p.at(m - g * h)) + 8.0 * power_eval(E, m, p.at(m)) +
              5.0 * power_eval(E, m + g * h, p.at(m + g * h))) / 18.0;
    });
  } else if (r.variational) {
    // power along the variational interpolant (De Giorgi form)
    std::vector<double> f(static_cast<std::size_t>(G.cells()));
    for (int c = 0; c < G.cells(); ++c)
      f[static_cast<std::size_t>(c)] = power_eval(E, G.cell_mid(c), out.u_variational->values[static_cast<std::size_t>(c)]);
    for (int c = 0; c < G.cells(); ++c) r.power_integral += overlap(G, c, s, t) * f[static_cast<std::size_t>(c)];
    power_err = midpoint_error(out, f, s, t);
  } else {
    // implicit steps: the power acts along the delayed state of each step
    for (int c = 0; c < G.cells(); ++c) {
      const double w = overlap(G, c, s, t);
      if (w == 0.0) continue;
      const Vec& u = out.u_delayed.values[static_cast<std::size_t>(c)];
      const double a = std::max(G.cell_start(c), s), b = std::min(G.cell_end(c), t);
      const double fa = power_eval(E, a, u), fm = power_eval(E, 0.5 * (a + b), u), fb = power_eval(E, b, u);
      r.power_integral += w * fm;
      power_err += w * std::abs(fa - 2.0 * fm + fb) / 6.0;
      const Vec d = out.u_const.values[static_cast<std::size_t>(c)] - u;
      r.convexity_defect += std::max(0.0, -E.lambda_convexity()) / 2.0 * d.squaredNorm() * w / implicit_step(out, c);
    }
  }
  r.quadrature_error = r.rate.quadrature_error + r.slope.quadrature_error + power_err;
  r.residual = r.energy_end + r.rate.value + r.slope.value - r.energy_start - r.power_integral;
  r.slack = 10.0 * (r.steps * r.tol + r.quadrature_error + r.convexity_defect);
  r.passed = r.form == AuditForm::Balance ? std::abs(r.residual) <= r.slack : r.residual <= r.slack;

  // pointwise Fenchel-Young at the active mechanism
  double fy = INFINITY;
  if (out.exact()) {
    for (const auto& p : out.pieces)
      if (p.t1 > s && p.t0 < t)
        fy = std::min(fy, pots.rate(p.mechanism, p.velocity) + pots.slope(p.mechanism, p.xi) + p.xi.dot(p.velocity));
  } else {
    const SampledCurve D = out.u_linear.derivative();
    for (int c = 0; c < G.cells(); ++c) {
      if (overlap(G, c, s, t) == 0.0) continue;
      const int m = cell_mechanism(out, c);
      const auto i = static_cast<std::size_t>(c);
      fy = std::min(fy, pots.rate(m, D.values[i]) + pots.slope(m, out.xi.values[i]) + out.xi.values[i].dot(D.values[i]));
    }
  }
  r.fenchel_young_min = std::isfinite(fy) ? fy : 0.0;
  return r;
}

std::vector<EDBReport> edb_audit_pairs(const SchemeOutput& out, const GradientSystem& sys,
                                       const std::vector<int>& nodes) {
  std::vector<EDBReport> reports;
  const Partition& P = out.partition();
  for (std::size_t i = 0; i < nodes.size(); ++i)
    for (std::size_t j = i + 1; j < nodes.size(); ++j)
      reports.push_back(edb_audit(out, sys, P.node(nodes[i]), P.node(nodes[j])));
  return reports;
}

RemainderReport remainder_term(const SchemeOutput& out, const Energy& E, double s, double t) {
  if (out.u_delayed.values.empty()) throw InputError("remainder_term: output has no delayed curve");
  const Grid& G = *out.grid;
  const SampledCurve D = out.u_linear.derivative();
  RemainderReport r;
  const double lam = std::max(0.0, -E.lambda_convexity());
  for (int c = 0; c < G.cells(); ++c) {
    const double w = overlap(G, c, s, t);
    if (w == 0.0) continue;
    const auto i = static_cast<std::size_t>(c);
    const Vec& u = out.u_const.values[i];
    const Vec& ud = out.u_delayed.values[i];
    const double te = force_time(out, c);
    const double tau = G.partition().tau(G.cell_step(c));
    r.remainder += w / tau * (energy_eval(E, te, u) - energy_eval(E, te, ud) - out.xi.values[i].dot(u - ud));
    r.lambda_bound += w * lam / 2.0 * D.values[i].norm() * (u - ud).norm();
  }
  return r;
}

DecompositionReport decomposition_report(const SchemeOutput& out, const GradientSystem& sys,
                                         const SchemeOutput* reference) {
  DecompositionReport d;
  if (out.scheme == Scheme::Effective) return d;
  const Pots pots(sys, out);
  const Grid& G = *out.grid;
  const SampledCurve D = out.u_linear.derivative();
  const SampledCurve V1 = repetition_apply(1, D), V2 = repetition_apply(2, D);
  double defect_ref = 0.0;
  for (int c = 0; c < G.cells(); ++c) {
    const auto i = static_cast<std::size_t>(c);
    const double w = G.cell_width(c);
    const Vec v1 = 0.5 * V1.values[i], v2 = 0.5 * V2.values[i];
    const Vec sum = v1 + v2;
    d.defect_self += w * (sum - D.values[i]).norm();
    if (reference) {
      // the reference grid may be finer: average its derivative over the cell
      const double a = G.cell_start(c), b = G.cell_end(c);
      const Vec avg = (reference->u_linear.at(b) - reference->u_linear.at(a)) / (b - a);
      defect_ref += w * (sum - avg).norm();
    }
    d.value_gap += w * ((eval(pots.r[0], v1) + eval(pots.r[1], v2)).value() - eval(pots.eff, sum).value());
  }
  if (reference) d.defect_reference = defect_ref;
  return d;
}

SchemeOutput run_scheme(const GradientSystem& sys, const Partition& P, const Vec& u0, Scheme scheme,
                        int inner_steps, double tol) {
  switch (scheme) {
    case Scheme::Split: return split_step_solve(sys, P, u0, inner_steps, tol);
    case Scheme::Amm: return amm_solve(sys, P, u0, tol, true, inner_steps);
    case Scheme::BlockSplit: return block_solve(sys, P, u0, BlockMode::Split, tol, inner_steps);
    case Scheme::BlockAmm: return block_solve(sys, P, u0, BlockMode::Amm, tol, inner_steps);
    case Scheme::Effective: return effective_solve(sys, P, u0, tol, inner_steps);
  }
  throw ConfigError("run_scheme: unknown scheme");
}

StudyResult convergence_study(const GradientSystem& sys, const Vec& u0, double T, Scheme scheme,
                              const std::vector<int>& N_list, const StudyOptions& opt) {
  if (N_list.empty()) throw InputError("convergence_study: empty N list");
  for (std::size_t i = 1; i < N_list.size(); ++i)
    if (N_list[i] <= N_list[i - 1]) throw InputError("convergence_study: N list must increase");
  const int finest = N_list.back();
  StudyResult res;
  SchemeOutput ref;
  if (exact_regime_applicable(sys.energy, sys.effective())) {
    ref = effective_solve(sys, Partition::uniform(T, finest), u0, opt.tol, 1);
    res.reference = "exact-regime";
  } else {
    const int Nref = opt.reference_factor * finest;
    ref = effective_solve(sys, Partition::uniform(T, Nref), u0, opt.tol, 1);
    res.reference = "effective N=" + std::to_string(Nref);
  }
  const double ref_rate = rate_term(ref, sys, 0.0, T).value;
  const double ref_slope = slope_term(ref, sys, 0.0, T).value;

  res.rows.resize(N_list.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < N_list.size();) {
      try {
        const int N = N_list[i];
        const Partition P = Partition::uniform(T, N);
        const SchemeOutput out = run_scheme(sys, P, u0, scheme, opt.inner_steps, opt.tol);
        StudyRow& row = res.rows[i];
        row.N = N;
        for (int k = 0; k <= N; ++k)
          row.sup_error = std::max(row.sup_error, (out.at_node(k) - ref.u_linear.at(P.node(k))).norm());
        row.terminal_gap = (out.at_node(N) - ref.u_linear.at(T)).norm();
        const EDBReport edb = edb_audit(out, sys, 0.0, T);
        row.edb_residual = edb.residual;
        row.edb_slack = edb.slack;
        row.rate = edb.rate.value;
        row.rate_gap = std::abs(edb.rate.value - ref_rate);
        row.slope_gap = std::abs(edb.slope.value - ref_slope);
        const auto dec = decomposition_report(out, sys, &ref);
        row.defect = dec.defect_reference.value_or(0.0);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int jobs = std::max(1, std::min<int>(opt.jobs, static_cast<int>(N_list.size())));
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);

  for (std::size_t i = 1; i < res.rows.size(); ++i) {
    const auto& a = res.rows[i - 1];
    auto& b = res.rows[i];
    if (a.sup_error > 0.0 && b.sup_error > 0.0)
      b.order = std::log(a.sup_error / b.sup_error) / std::log(static_cast<double>(b.N) / a.N);
  }
  return res;
}

nlohmann::json to_json(const EDBReport& r) {
  auto term = [](const TermValue& v) {
    return nlohmann::json{{"value", v.value},
                          {"cellwise", v.cellwise},
                          {"repetition", v.repetition},
                          {"repetition_mismatch", v.mismatch()},
                          {"quadrature_error", v.quadrature_error}};
  };
  return {{"interval", {r.s, r.t}},
          {"form", to_string(r.form)},
          {"energy_start", r.energy_start},
          {"energy_end", r.energy_end},
          {"D_rate", term(r.rate)},
          {"D_slope", term(r.slope)},
          {"power_integral", r.power_integral},
          {"residual", r.residual},
          {"steps", r.steps},
          {"inner_tol", r.tol},
          {"quadrature_error", r.quadrature_error},
          {"convexity_defect", r.convexity_defect},
          {"slack", r.slack},
          {"fenchel_young_min", r.fenchel_young_min},
          {"variational", r.variational},
          {"passed", r.passed}};
}

nlohmann::json to_json(const DecompositionReport& r) {
  nlohmann::json j{{"defect_self", r.defect_self}, {"value_gap", r.value_gap}};
  j["defect_reference"] = r.defect_reference ? nlohmann::json(*r.defect_reference) : nlohmann::json();
  return j;
}

nlohmann::json to_json(const RemainderReport& r) {
  return {{"remainder", r.remainder}, {"lambda_bound", r.lambda_bound}};
}

void write_study_csv(const StudyResult& study, std::ostream& os) {
  os << "# reference=" << study.reference << "\n";
  os << "N,sup_error,order,edb_residual,edb_slack,rate,rate_gap,slope_gap,defect,terminal_gap\n";
  for (const auto& r : study.rows) {
    os << r.N << "," << format_double(r.sup_error) << "," << (r.order ? format_double(*r.order) : "")
       << "," << format_double(r.edb_residual) << "," << format_double(r.edb_slack) << ","
       << format_double(r.rate) << "," << format_double(r.rate_gap) << "," << format_double(r.slope_gap)
       << "," << format_double(r.defect) << "," << format_double(r.terminal_gap) << "\n";
  }
}

}  // namespace splitflow
