#include "splitflow/energies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace splitflow {

// ---------------------------------------------------------------------------
// Loads

TimeFunction TimeFunction::constant(double a) {
  TimeFunction f;
  f.kind = Kind::Constant;
  f.a = a;
  return f;
}

TimeFunction TimeFunction::linear(double a, double b) {
  TimeFunction f;
  f.kind = Kind::Linear;
  f.a = a;
  f.b = b;
  return f;
}

TimeFunction TimeFunction::sinusoidal(double amplitude, double omega, double phase) {
  TimeFunction f;
  f.kind = Kind::Sinusoidal;
  f.a = amplitude;
  f.omega = omega;
  f.phase = phase;
  return f;
}

double TimeFunction::value(double t) const {
  switch (kind) {
    case Kind::Constant: return a;
    case Kind::Linear: return a + b * t;
    case Kind::Sinusoidal: return a * std::sin(omega * t + phase);
  }
  return 0.0;
}

double TimeFunction::derivative(double t) const {
  switch (kind) {
    case Kind::Constant: return 0.0;
    case Kind::Linear: return b;
    case Kind::Sinusoidal: return a * omega * std::cos(omega * t + phase);
  }
  return 0.0;
}

double TimeFunction::sup_abs(double T) const {
  switch (kind) {
    case Kind::Constant: return std::abs(a);
    case Kind::Linear: return std::max(std::abs(a), std::abs(a + b * T));
    case Kind::Sinusoidal: return std::abs(a);
  }
  return 0.0;
}

double TimeFunction::sup_abs_derivative(double) const {
  switch (kind) {
    case Kind::Constant: return 0.0;
    case Kind::Linear: return std::abs(b);
    case Kind::Sinusoidal: return std::abs(a * omega);
  }
  return 0.0;
}

Vec load_value(const Load& load, Index n, double t) {
  Vec out = Vec::Zero(n);
  for (const auto& term : load) {
    require_dim(term.profile, n, "load profile");
    out += term.time.value(t) * term.profile;
  }
  return out;
}

Vec load_rate(const Load& load, Index n, double t) {
  Vec out = Vec::Zero(n);
  for (const auto& term : load) {
    require_dim(term.profile, n, "load profile");
    out += term.time.derivative(t) * term.profile;
  }
  return out;
}

namespace {

double load_sup(const Load& load, double T) {
  double s = 0.0;
  for (const auto& term : load) s += term.profile.norm() * term.time.sup_abs(T);
  return s;
}

double load_rate_sup(const Load& load, double T) {
  double s = 0.0;
  for (const auto& term : load) s += term.profile.norm() * term.time.sup_abs_derivative(T);
  return s;
}

// Given E + shift >= a (r - r0)^2 + 1 with r = |u| and |d_t E| <= s r,
// the best C with s r <= C (a (r - r0)^2 + 1) is attained at
// r* = sqrt(r0^2 + 1/a).
double power_constant_from_bounds(double a, double r0, double s) {
  if (s == 0.0) return 0.0;
  const double r = std::sqrt(r0 * r0 + 1.0 / a);
  return s * r / (a * (r - r0) * (r - r0) + 1.0);
}

double sgn(double x) { return (x > 0.0) - (x < 0.0); }

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

double segment_distance(const Vec& a, const Vec& b, const Vec& x) {
  const Vec d = b - a;
  const double L2 = d.squaredNorm();
  double th = L2 > 0.0 ? (x - a).dot(d) / L2 : 0.0;
  th = std::clamp(th, 0.0, 1.0);
  return (a + th * d - x).norm();
}

double cross(const Vec& o, const Vec& a, const Vec& b) {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

}  // namespace

// ---------------------------------------------------------------------------
// Subdifferential sets

SubdiffSet SubdiffSet::singleton(Vec xi) {
  SubdiffSet s;
  s.kind = Kind::Singleton;
  s.points = {std::move(xi)};
  return s;
}

SubdiffSet SubdiffSet::segment(Vec a, Vec b) {
  SubdiffSet s;
  s.kind = Kind::Segment;
  s.points = {std::move(a), std::move(b)};
  return s;
}

SubdiffSet SubdiffSet::hull(std::vector<Vec> vertices) {
  if (vertices.empty()) throw InputError("SubdiffSet::hull: no vertices");
  for (const auto& v : vertices)
    if (v.size() != 2) throw InputError("SubdiffSet::hull: only planar hulls are supported");
  SubdiffSet s;
  s.kind = Kind::Hull;
  // monotone chain, counter-clockwise
  std::sort(vertices.begin(), vertices.end(), [](const Vec& a, const Vec& b) {
    return a[0] < b[0] || (a[0] == b[0] && a[1] < b[1]);
  });
  std::vector<Vec> h;
  for (int pass = 0; pass < 2; ++pass) {
    const std::size_t start = h.size();
    for (const auto& p : vertices) {
      while (h.size() >= start + 2 && cross(h[h.size() - 2], h.back(), p) <= 0.0) h.pop_back();
      h.push_back(p);
    }
    h.pop_back();
    std::reverse(vertices.begin(), vertices.end());
  }
  if (h.empty()) h.push_back(vertices.front());
  s.points = std::move(h);
  return s;
}

Vec SubdiffSet::element(double theta) const {
  if (kind == Kind::Segment) return points[0] + theta * (points[1] - points[0]);
  return points[0];
}

double SubdiffSet::distance(const Vec& xi) const {
  switch (kind) {
    case Kind::Singleton: return (xi - points[0]).norm();
    case Kind::Segment: return segment_distance(points[0], points[1], xi);
    case Kind::Hull: {
      const std::size_t n = points.size();
      if (n == 1) return (xi - points[0]).norm();
      bool inside = n >= 3;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) {
        const Vec& a = points[i];
        const Vec& b = points[(i + 1) % n];
        if (cross(a, b, xi) < 0.0) inside = false;
        best = std::min(best, segment_distance(a, b, xi));
      }
      return inside ? 0.0 : best;
    }
  }
  return 0.0;
}

bool SubdiffSet::contains(const Vec& xi, double tol) const {
  return distance(xi) <= tol;
}

// ---------------------------------------------------------------------------
// Energy

struct Energy::State {
  EnergyKind kind;
  Index n = 0, ny = 0, nz = 0;
  double shift = 0.0;
  double lambda = 0.0;
  double cpow = 0.0;
  double horizon = 1.0;
  double h = 1.0;
  std::optional<QuadraticBlockParams> qb;
  std::optional<AllenCahnParams> ac;
  Mat H;  // QuadraticBlock: full Hessian; AllenCahn1D: stiffness K
};

const char* to_string(EnergyKind kind) {
  switch (kind) {
    case EnergyKind::QuadraticBlock: return "QuadraticBlock";
    case EnergyKind::MaxNorm: return "MaxNorm";
    case EnergyKind::AllenCahn1D: return "AllenCahn1D";
  }
  return "unknown";
}

Mat laplacian_1d(Index m, double h) {
  Mat K = Mat::Zero(m, m);
  for (Index i = 0; i < m; ++i) {
    K(i, i) = 2.0 / h;
    if (i > 0) K(i, i - 1) = -1.0 / h;
    if (i + 1 < m) K(i, i + 1) = -1.0 / h;
  }
  return K;
}

Energy Energy::quadratic_block(QuadraticBlockParams p, double horizon,
                               std::optional<double> shift) {
  const Index ny = p.A.rows();
  const Index nz = p.G.rows();
  if (p.A.cols() != ny || p.G.cols() != nz || p.B.rows() != nz || p.B.cols() != ny)
    throw ConfigError("QuadraticBlock: inconsistent block shapes");
  if (ny == 0) throw ConfigError("QuadraticBlock: empty y block");
  if (!(horizon > 0.0)) throw ConfigError("QuadraticBlock: horizon must be positive");
  for (const auto& t : p.f)
    if (t.profile.size() != ny) throw ConfigError("QuadraticBlock: f profile has wrong size");
  for (const auto& t : p.g)
    if (t.profile.size() != nz) throw ConfigError("QuadraticBlock: g profile has wrong size");

  auto s = std::make_shared<State>();
  s->kind = EnergyKind::QuadraticBlock;
  s->ny = ny;
  s->nz = nz;
  s->n = ny + nz;
  s->horizon = horizon;
  Mat H(s->n, s->n);
  H.topLeftCorner(ny, ny) = p.A;
  H.topRightCorner(ny, nz) = p.B.transpose();
  H.bottomLeftCorner(nz, ny) = p.B;
  H.bottomRightCorner(nz, nz) = p.G;
  const double scale = 1.0 + H.cwiseAbs().maxCoeff();
  if ((H - H.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw ConfigError("QuadraticBlock: A and G must be symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> es(H);
  const double c = es.eigenvalues().minCoeff();
  if (!(c > 0.0)) throw ConfigError("QuadraticBlock: block Hessian must be positive definite");
  s->H = H;
  s->lambda = 0.0;

  const double L = load_sup(p.f, horizon) + load_sup(p.g, horizon);
  const double Lr = load_rate_sup(p.f, horizon) + load_rate_sup(p.g, horizon);
  // E >= c|u|^2/2 - L|u| = c/2 (|u| - L/c)^2 - L^2/(2c)
  const double needed = 1.0 + L * L / (2.0 * c);
  s->shift = shift.value_or(needed);
  // with a user shift below the bound, positivity (hence C_#) is not certified
  s->cpow = Lr == 0.0 ? 0.0
                      : (s->shift >= needed ? power_constant_from_bounds(0.5 * c, L / c, Lr)
                                            : std::numeric_limits<double>::infinity());
  s->qb = std::move(p);
  return Energy(s);
}

Energy Energy::max_norm(std::optional<double> shift) {
  auto s = std::make_shared<State>();
  s->kind = EnergyKind::MaxNorm;
  s->n = 2;
  s->ny = 2;
  s->shift = shift.value_or(1.0);
  return Energy(s);
}

Energy Energy::allen_cahn_1d(AllenCahnParams p, double horizon,
                             std::optional<double> shift) {
  if (p.m < 1) throw ConfigError("AllenCahn1D: need at least one interior node");
  if (!(p.c_w > 0.0)) throw ConfigError("AllenCahn1D: c_w must be positive");
  if (!(p.beta > 0.0)) throw ConfigError("AllenCahn1D: beta must be positive");
  if (!(horizon > 0.0)) throw ConfigError("AllenCahn1D: horizon must be positive");
  for (const auto& t : p.load)
    if (t.profile.size() != p.m) throw ConfigError("AllenCahn1D: load profile has wrong size");

  auto s = std::make_shared<State>();
  s->kind = EnergyKind::AllenCahn1D;
  s->n = p.m;
  s->ny = p.m;
  s->horizon = horizon;
  s->h = 1.0 / static_cast<double>(p.m + 1);
  s->H = laplacian_1d(p.m, s->h);
  // W'' >= -c_w beta^2, scaled by the nodal mass h
  s->lambda = -p.c_w * p.beta * p.beta * s->h;

  const double h = s->h;
  const double pi = std::acos(-1.0);
  const double mu = 4.0 / h * std::pow(std::sin(pi * h / 2.0), 2);  // smallest eigenvalue of K
  const double L = h * load_sup(p.load, horizon);
  const double Lr = h * load_rate_sup(p.load, horizon);
  const double needed = 1.0 + L * L / (2.0 * mu);
  s->shift = shift.value_or(needed);
  s->cpow = Lr == 0.0 ? 0.0
                      : (s->shift >= needed ? power_constant_from_bounds(0.5 * mu, L / mu, Lr)
                                            : std::numeric_limits<double>::infinity());
  s->ac = std::move(p);
  return Energy(s);
}

EnergyKind Energy::kind() const { return s_->kind; }
Index Energy::dim() const { return s_->n; }
Index Energy::n_y() const { return s_->ny; }
Index Energy::n_z() const { return s_->nz; }
double Energy::shift() const { return s_->shift; }
double Energy::lambda_convexity() const { return s_->lambda; }
double Energy::power_constant() const { return s_->cpow; }
double Energy::horizon() const { return s_->horizon; }
double Energy::mesh() const { return s_->h; }
const QuadraticBlockParams* Energy::quadratic() const { return s_->qb ? &*s_->qb : nullptr; }
const AllenCahnParams* Energy::allen_cahn() const { return s_->ac ? &*s_->ac : nullptr; }

double energy_eval(const Energy& E, double t, const Vec& u) {
  const auto& s = *E.s_;
  require_dim(u, s.n, "energy_eval");
  switch (s.kind) {
    case EnergyKind::QuadraticBlock: {
      const auto& p = *s.qb;
      const Vec y = u.head(s.ny);
      const Vec z = u.tail(s.nz);
      return 0.5 * y.dot(p.A * y) + z.dot(p.B * y) + 0.5 * z.dot(p.G * z) -
             load_value(p.f, s.ny, t).dot(y) - load_value(p.g, s.nz, t).dot(z) + s.shift;
    }
    case EnergyKind::MaxNorm:
      return std::max(std::abs(u[0]), std::abs(u[1])) + s.shift;
    case EnergyKind::AllenCahn1D: {
      const auto& p = *s.ac;
      const double h = s.h;
      double grad = 0.0;
      double prev = 0.0;
      for (Index i = 0; i <= p.m; ++i) {
        const double next = i < p.m ? u[i] : 0.0;
        const double d = (next - prev) / h;
        grad += 0.5 * h * d * d;
        prev = next;
      }
      double well = 0.0;
      for (Index i = 0; i < p.m; ++i) {
        const double q = u[i] * u[i] - p.beta * p.beta;
        well += h * 0.25 * p.c_w * q * q;
      }
      return grad + well - h * load_value(p.load, p.m, t).dot(u) + s.shift;
    }
  }
  return 0.0;
}

double power_eval(const Energy& E, double t, const Vec& u) {
  const auto& s = *E.s_;
  require_dim(u, s.n, "power_eval");
  switch (s.kind) {
    case EnergyKind::QuadraticBlock: {
      const auto& p = *s.qb;
      return -load_rate(p.f, s.ny, t).dot(u.head(s.ny)) -
             load_rate(p.g, s.nz, t).dot(u.tail(s.nz));
    }
    case EnergyKind::MaxNorm: return 0.0;
    case EnergyKind::AllenCahn1D: {
      const auto& p = *s.ac;
      return -s.h * load_rate(p.load, p.m, t).dot(u);
    }
  }
  return 0.0;
}

std::optional<Vec> energy_gradient(const Energy& E, double t, const Vec& u) {
  const auto& s = *E.s_;
  require_dim(u, s.n, "energy_gradient");
  switch (s.kind) {
    case EnergyKind::QuadraticBlock: {
      const auto& p = *s.qb;
      Vec f(s.n);
      f << load_value(p.f, s.ny, t), load_value(p.g, s.nz, t);
      return Vec(s.H * u - f);
    }
    case EnergyKind::MaxNorm: return std::nullopt;
    case EnergyKind::AllenCahn1D: {
      const auto& p = *s.ac;
      const Eigen::ArrayXd w = p.c_w * u.array() * (u.array().square() - p.beta * p.beta);
      return Vec(s.H * u + s.h * (w.matrix() - load_value(p.load, p.m, t)));
    }
  }
  return std::nullopt;
}

std::optional<Mat> energy_hessian(const Energy& E, double, const Vec& u) {
  const auto& s = *E.s_;
  require_dim(u, s.n, "energy_hessian");
  switch (s.kind) {
    case EnergyKind::QuadraticBlock: return s.H;
    case EnergyKind::MaxNorm: return std::nullopt;
    case EnergyKind::AllenCahn1D: {
      const auto& p = *s.ac;
      const Eigen::ArrayXd w2 = p.c_w * (3.0 * u.array().square() - p.beta * p.beta);
      Mat H = s.H;
      H.diagonal() += s.h * w2.matrix();
      return H;
    }
  }
  return std::nullopt;
}

SubdiffSet subdiff(const Energy& E, double t, const Vec& u) {
  require_dim(u, E.dim(), "subdiff");
  if (E.kind() != EnergyKind::MaxNorm) return SubdiffSet::singleton(*energy_gradient(E, t, u));
  const double a = std::abs(u[0]);
  const double b = std::abs(u[1]);
  if (a > b) return SubdiffSet::singleton(vec2(sgn(u[0]), 0.0));
  if (b > a) return SubdiffSet::singleton(vec2(0.0, sgn(u[1])));
  if (a > 0.0) return SubdiffSet::segment(vec2(sgn(u[0]), 0.0), vec2(0.0, sgn(u[1])));
  // unit ball of the dual (l^1) norm
  return SubdiffSet::hull({vec2(1, 0), vec2(0, 1), vec2(-1, 0), vec2(0, -1)});
}

SubdiffSet partial_subdiff(const Energy& E, double t, const Vec& y, const Vec& z,
                           Block block) {
  const auto* p = E.quadratic();
  if (!p) throw InputError("partial_subdiff: energy is not a block kind");
  require_dim(y, E.n_y(), "partial_subdiff y");
  require_dim(z, E.n_z(), "partial_subdiff z");
  if (block == Block::Y)
    return SubdiffSet::singleton(Vec(p->A * y + p->B.transpose() * z - load_value(p->f, E.n_y(), t)));
  return SubdiffSet::singleton(Vec(p->B * y + p->G * z - load_value(p->g, E.n_z(), t)));
}

bool power_control_holds(const Energy& E, double t, const Vec& u, double slack) {
  const double e = energy_eval(E, t, u);
  const double pw = std::abs(power_eval(E, t, u));
  return pw <= E.power_constant() * e * (1.0 + slack) + slack;
}

}  // namespace splitflow
