#include "splitflow/models.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace splitflow {

namespace {

using json = nlohmann::json;

const double kPi = std::acos(-1.0);

json counterexample_defaults() {
  return {{"a1", 1.0}, {"b1", 3.0}, {"a2", 3.0}, {"b2", 1.0}, {"u0", {2.0, 1.0}}, {"T", 1.0}, {"N", 64}};
}

json allen_cahn_defaults() {
  return {{"p", 2.0},    {"m", 16},          {"c_w", 1.0},       {"beta", 1.0}, {"load", 0.5},
          {"omega", 2.0 * kPi}, {"u0_amplitude", 0.8}, {"T", 1.0}, {"N", 32}};
}

json visco_defaults() {
  return {{"m", 8},      {"C", 1.0},           {"H", 0.5},   {"D", 0.1}, {"rho", 0.1},
          {"sigma_yield", 0.2}, {"load", 1.0}, {"y0_amplitude", 0.5}, {"T", 1.0}, {"N", 32}};
}

json merge(const std::string& model, json params, const json& overrides) {
  if (overrides.is_null()) return params;
  if (!overrides.is_object()) throw ConfigError(model + ": overrides must be a JSON object");
  for (const auto& [key, value] : overrides.items()) {
    if (!params.contains(key)) throw ConfigError(model + ": unknown parameter '" + key + "'");
    const json& def = params[key];
    if (def.is_number() && !value.is_number())
      throw ConfigError(model + ": parameter '" + key + "' must be a number");
    if (def.is_array() && !value.is_array())
      throw ConfigError(model + ": parameter '" + key + "' must be an array");
    if (def.is_number_integer() && !value.is_number_integer())
      throw ConfigError(model + ": parameter '" + key + "' must be an integer");
    params[key] = value;
  }
  return params;
}

double num(const json& p, const char* key) { return p.at(key).get<double>(); }
int integer(const json& p, const char* key) { return p.at(key).get<int>(); }

void require(bool ok, const std::string& model, const std::string& what) {
  if (!ok) throw ConfigError(model + ": " + what);
}

void common_checks(const std::string& model, const json& p) {
  require(num(p, "T") > 0.0, model, "T > 0 required");
  require(integer(p, "N") >= 1, model, "N >= 1 required");
}

Vec nodes_1d(Index m) {
  Vec x(m);
  for (Index i = 0; i < m; ++i) x[i] = (i + 1.0) / (m + 1.0);
  return x;
}

ModelPreset counterexample(const json& overrides) {
  const std::string name = "counterexample";
  const json p = merge(name, counterexample_defaults(), overrides);
  common_checks(name, p);
  for (const char* k : {"a1", "b1", "a2", "b2"})
    require(num(p, k) > 0.0, name, std::string(k) + " > 0 required");
  require(p["u0"].size() == 2, name, "u0 must have two entries");
  Vec u0(2);
  for (Index i = 0; i < 2; ++i) u0[i] = p["u0"][i].get<double>();
  Vec d1(2), d2(2);
  d1 << num(p, "a1"), num(p, "b1");
  d2 << num(p, "a2"), num(p, "b2");
  GradientSystem sys{Energy::max_norm(), Potential::anisotropic_dual_quadratic(d1),
                     Potential::anisotropic_dual_quadratic(d2), std::nullopt};
  return {name, p, sys, u0, num(p, "T"), integer(p, "N"), {16, 32, 64, 128, 256}, Scheme::Split, Vec()};
}

ModelPreset allen_cahn(const json& overrides) {
  const std::string name = "allen-cahn-1d";
  const json p = merge(name, allen_cahn_defaults(), overrides);
  common_checks(name, p);
  const double pexp = num(p, "p");
  require(pexp > 1.0, name, "p > 1 required");
  const int m = integer(p, "m");
  require(m >= 1, name, "m >= 1 required");
  require(num(p, "c_w") > 0.0, name, "c_w > 0 required");
  require(num(p, "beta") > 0.0, name, "beta > 0 required");
  const double T = num(p, "T");
  const Vec x = nodes_1d(m);

  AllenCahnParams ac;
  ac.m = m;
  ac.c_w = num(p, "c_w");
  ac.beta = num(p, "beta");
  const Vec prof = (kPi * x.array()).sin().matrix();
  if (num(p, "load") != 0.0)
    ac.load.push_back({prof, TimeFunction::sinusoidal(num(p, "load"), num(p, "omega"))});
  const Energy E = Energy::allen_cahn_1d(ac, T);
  const double h = E.mesh();
  GradientSystem sys{E, Potential::power_norm(pexp, Vec::Constant(m, h)),
                     Potential::quadratic(laplacian_1d(m, h)), std::nullopt};
  const Vec u0 = num(p, "u0_amplitude") * (prof.array() + 0.4 * (3.0 * kPi * x.array()).sin()).matrix();
  return {name, p, sys, u0, T, integer(p, "N"), {8, 16, 32, 64}, Scheme::Amm, x};
}

ModelPreset visco_plasticity(const json& overrides) {
  const std::string name = "visco-plasticity-1d";
  const json p = merge(name, visco_defaults(), overrides);
  common_checks(name, p);
  const int m = integer(p, "m");
  require(m >= 1, name, "m >= 1 required");
  for (const char* k : {"C", "H", "D", "rho", "sigma_yield"})
    require(num(p, k) > 0.0, name, std::string(k) + " > 0 required");
  const double T = num(p, "T");
  const Vec x = nodes_1d(m);

  const Index ny = m, nz = m + 1, n = ny + nz;
  const double h = 1.0 / (m + 1.0);
  // element strains (y_e - y_{e-1}) / h with y = 0 at both ends
  Mat D = Mat::Zero(nz, ny);
  for (Index e = 0; e < nz; ++e) {
    if (e < ny) D(e, e) = 1.0 / h;
    if (e > 0) D(e, e - 1) = -1.0 / h;
  }
  const double C = num(p, "C"), H = num(p, "H");
  QuadraticBlockParams q;
  q.A = C * h * D.transpose() * D;
  q.B = -C * h * D;
  q.G = (C + H) * h * Mat::Identity(nz, nz);
  const Vec prof = (kPi * x.array()).sin().matrix();
  if (num(p, "load") != 0.0) q.f.push_back({h * prof, TimeFunction::linear(0.0, num(p, "load"))});
  const Energy E = Energy::quadratic_block(q, T);

  std::vector<Index> ys, zs;
  for (Index i = 0; i < ny; ++i) ys.push_back(i);
  for (Index i = ny; i < n; ++i) zs.push_back(i);
  const Potential Ry = Potential::quadratic(num(p, "D") * h * D.transpose() * D);
  const Potential Rz = Potential::one_hom_plus_quad(Vec::Constant(nz, num(p, "sigma_yield") * h),
                                                    Vec::Constant(nz, num(p, "rho") * h));
  GradientSystem sys{E, Potential::block_indicator(Ry, ys, n), Potential::block_indicator(Rz, zs, n),
                     std::make_pair(ny, nz)};
  Vec u0 = Vec::Zero(n);
  u0.head(ny) = num(p, "y0_amplitude") * prof;
  return {name, p, sys, u0, T, integer(p, "N"), {8, 16, 32, 64}, Scheme::BlockAmm, x};
}

double sgn(double x) { return (x > 0.0) - (x < 0.0); }

// Regimes of the closed-form counterexample trajectories.
struct Regimes {
  Vec u0;
  double t_switch = 0.0;
  double t_zero = 0.0;
  Vec v_first;
  Vec v_diag;
};

Regimes regimes(const ModelPreset& pr, ReferenceKind kind) {
  if (pr.name != "counterexample")
    throw InputError("reference_trajectory: no closed-form reference for " + pr.name);
  const json& p = pr.parameters;
  const double a1 = num(p, "a1"), b1 = num(p, "b1"), a2 = num(p, "a2"), b2 = num(p, "b2");
  const double a = a1 + a2, b = b1 + b2;
  Regimes R;
  R.u0 = pr.u0;
  const Vec s = pr.u0.unaryExpr([](double x) { return sgn(x); });
  const double r1 = std::abs(pr.u0[0]), r2 = std::abs(pr.u0[1]);
  // off the diagonal both schemes move the larger coordinate at speed a (or b)
  R.v_first = Vec::Zero(2);
  if (r1 > r2) {
    R.v_first[0] = -s[0] * a;
    R.t_switch = (r1 - r2) / a;
  } else if (r2 > r1) {
    R.v_first[1] = -s[1] * b;
    R.t_switch = (r2 - r1) / b;
  }
  const double speed = kind == ReferenceKind::Effective ? a * b / (a + b)
                                                         : a1 * b1 / (a1 + b1) + a2 * b2 / (a2 + b2);
  const double r = std::min(r1, r2);
  Vec sd(2);
  sd << (s[0] != 0.0 ? s[0] : s[1]), (s[1] != 0.0 ? s[1] : s[0]);
  R.v_diag = -speed * sd;
  R.t_zero = R.t_switch + r / speed;
  if (r1 == 0.0 && r2 == 0.0) R.t_zero = 0.0;
  return R;
}

}  // namespace

std::vector<ModelInfo> list_models() {
  return {{"counterexample", "max-norm energy with two anisotropic quadratic dissipations on R^2",
           counterexample_defaults()},
          {"allen-cahn-1d", "Allen-Cahn on (0,1) with L^p and H^1_0 dissipation", allen_cahn_defaults()},
          {"visco-plasticity-1d", "visco-plastic bar: displacement y and plastic strain z with staggered steps",
           visco_defaults()}};
}

ModelPreset make_model(const std::string& name, const nlohmann::json& overrides) {
  if (name == "counterexample") return counterexample(overrides);
  if (name == "allen-cahn-1d") return allen_cahn(overrides);
  if (name == "visco-plasticity-1d") return visco_plasticity(overrides);
  throw ConfigError("unknown model '" + name + "'");
}

Vec reference_trajectory(const ModelPreset& preset, double t, ReferenceKind kind) {
  const Regimes R = regimes(preset, kind);
  if (t <= R.t_switch) return R.u0 + t * R.v_first;
  if (t >= R.t_zero) return Vec::Zero(2);
  return R.u0 + R.t_switch * R.v_first + (t - R.t_switch) * R.v_diag;
}

Vec reference_velocity(const ModelPreset& preset, double t, ReferenceKind kind) {
  const Regimes R = regimes(preset, kind);
  if (t < R.t_switch) return R.v_first;
  if (t < R.t_zero) return R.v_diag;
  return Vec::Zero(2);
}

double reference_zero_time(const ModelPreset& preset, ReferenceKind kind) {
  return regimes(preset, kind).t_zero;
}

double time_to_zero(const SchemeOutput& out, double tol) {
  if (out.exact()) {
    for (const auto& pc : out.pieces)
      if (pc.u0.norm() <= tol) return pc.t0;
    if (!out.pieces.empty() && out.pieces.back().at(out.pieces.back().t1).norm() <= tol)
      return out.pieces.back().t1;
    return std::numeric_limits<double>::quiet_NaN();
  }
  const Partition& P = out.partition();
  for (int k = 0; k <= P.steps(); ++k)
    if (out.at_node(k).norm() <= tol) return P.node(k);
  return std::numeric_limits<double>::quiet_NaN();
}

WellBounds well_bounds(const ModelPreset& pr) {
  if (pr.name != "allen-cahn-1d") throw InputError("well_bounds: not an Allen-Cahn preset");
  const double c = num(pr.parameters, "c_w"), b2 = std::pow(num(pr.parameters, "beta"), 2);
  WellBounds w;
  w.c_w1 = c * b2;
  w.c_w2 = 0.0;
  w.c_w3 = c * (1.0 + b2);
  w.s = 3.0;
  return w;
}

DualPairNorm state_norm(const ModelPreset& pr) {
  if (pr.name != "allen-cahn-1d") throw InputError("state_norm: not an Allen-Cahn preset");
  const Index m = pr.u0.size();
  return {num(pr.parameters, "p"), Vec::Constant(m, 1.0 / (m + 1.0))};
}

std::vector<QyePair> qye_samples(const ModelPreset& pr, int count, std::uint64_t seed) {
  if (pr.name != "allen-cahn-1d") throw InputError("qye_samples: not an Allen-Cahn preset");
  if (count < 1) throw InputError("qye_samples: count must be positive");
  const Index m = pr.u0.size();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> expo(-2.0, 2.0);
  std::uniform_int_distribution<int> mode(1, static_cast<int>(m));
  std::vector<QyePair> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    Vec v(m), xi(m);
    if (i % 2 == 0) {
      for (Index k = 0; k < m; ++k) v[k] = g(rng), xi[k] = g(rng);
    } else {
      // single Fourier modes, low and high
      const int kv = mode(rng), kx = mode(rng);
      for (Index k = 0; k < m; ++k) {
        v[k] = std::sin(kPi * kv * pr.nodes[k]);
        xi[k] = std::sin(kPi * kx * pr.nodes[k]) / (m + 1.0);
      }
    }
    v *= std::pow(10.0, expo(rng));
    xi *= std::pow(10.0, expo(rng));
    out.push_back({v, xi});
  }
  return out;
}

std::vector<WitnessPoint> qye_witness(const ModelPreset& pr, const std::vector<int>& n_list, double amplitude) {
  if (pr.name != "allen-cahn-1d") throw InputError("qye_witness: not an Allen-Cahn preset");
  const double p = num(pr.parameters, "p");
  const double ps = p / (p - 1.0);
  const Index m = pr.u0.size();
  const double h = 1.0 / (m + 1.0);
  const DualPairNorm norm = state_norm(pr);
  const Potential Reff = pr.system.effective();
  const Vec v = amplitude * (kPi * pr.nodes.array()).sin().matrix();
  std::vector<WitnessPoint> out;
  for (int n : n_list) {
    if (n < 1) throw InputError("qye_witness: n must be positive");
    // grid function n sin(n^(1-p*/2) x) as a dual vector (nodal mass h)
    const Vec xi = h * n * (std::pow(n, 1.0 - ps / 2.0) * pr.nodes.array()).sin().matrix();
    WitnessPoint w;
    w.n = n;
    w.xi_norm = norm.dual(xi);
    w.lambda = std::pow(w.xi_norm, ps / 2.0);
    const Vec lv = w.lambda * v;
    w.value = eval(Reff, lv).value() + conjugate_eval(Reff, xi);
    w.ratio = w.value / (norm.primal(lv) * w.xi_norm);
    out.push_back(w);
  }
  return out;
}

}  // namespace splitflow
