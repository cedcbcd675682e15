#include "splitflow/potentials.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>

namespace splitflow {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double dual_exponent(double p) { return p / (p - 1.0); }

double sgn(double x) { return (x > 0.0) - (x < 0.0); }

Vec gather(const Vec& v, const std::vector<Index>& idx) {
  Vec out(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Index>(i)] = v[idx[i]];
  return out;
}

Vec scatter(const Vec& part, const std::vector<Index>& idx, Index n) {
  Vec out = Vec::Zero(n);
  for (std::size_t i = 0; i < idx.size(); ++i) out[idx[i]] = part[static_cast<Index>(i)];
  return out;
}

Mat scatter(const Mat& part, const std::vector<Index>& idx, Index n) {
  Mat out = Mat::Zero(n, n);
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = 0; j < idx.size(); ++j)
      out(idx[i], idx[j]) = part(static_cast<Index>(i), static_cast<Index>(j));
  return out;
}

// Inverse N of the matrix M in R(v) = 1/2 v^T M v, so that R*(xi) = 1/2 xi^T N xi.
std::optional<Mat> quadratic_inverse(const Potential& P) {
  if (auto* q = P.as<kinds::Quadratic>()) return q->V_inv;
  if (auto* d = P.as<kinds::DualQuadratic>()) return Mat(d->d.asDiagonal());
  if (auto* pn = P.as<kinds::PowerNorm>()) {
    if (pn->p == 2.0) return Mat(pn->w.cwiseInverse().asDiagonal());
    return std::nullopt;
  }
  if (auto* r = P.as<kinds::Rescaled>()) {
    auto N = quadratic_inverse(*r->base);
    if (!N) return std::nullopt;
    return Mat(*N / (r->outer * r->inner * r->inner));
  }
  return std::nullopt;
}

// Jacobian of the dual rate with infinite entries replaced by a large cap,
// used only as a Newton model inside the decomposition solver.
Mat capped_dual_jacobian(const Potential& P, const Vec& xi, double cap);

Vec dual_jacobian_diag_power(const kinds::PowerNorm& pn, const Vec& xi,
                             double cap) {
  const double q = dual_exponent(pn.p);
  Vec J(xi.size());
  for (Index i = 0; i < xi.size(); ++i) {
    const double a = std::abs(xi[i]) / pn.w[i];
    if (a == 0.0) {
      J[i] = q > 2.0 ? 0.0 : (q == 2.0 ? 1.0 / pn.w[i] : cap);
    } else {
      J[i] = std::min(cap, (q - 1.0) / pn.w[i] * std::pow(a, q - 2.0));
    }
  }
  return J;
}

Mat capped_dual_jacobian(const Potential& P, const Vec& xi, double cap) {
  const Index n = P.dim();
  return std::visit(
      [&](const auto& k) -> Mat {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, kinds::Quadratic>) {
          return k.V_inv;
        } else if constexpr (std::is_same_v<K, kinds::PowerNorm>) {
          return Mat(dual_jacobian_diag_power(k, xi, cap).asDiagonal());
        } else if constexpr (std::is_same_v<K, kinds::DualQuadratic>) {
          return Mat(k.d.asDiagonal());
        } else if constexpr (std::is_same_v<K, kinds::OneHomQuad>) {
          Vec J(n);
          for (Index i = 0; i < n; ++i)
            J[i] = std::abs(xi[i]) > k.sigma[i] ? 1.0 / k.rho[i] : 0.0;
          return Mat(J.asDiagonal());
        } else if constexpr (std::is_same_v<K, kinds::BlockIndicator>) {
          return scatter(capped_dual_jacobian(*k.base, gather(xi, k.active), cap),
                         k.active, n);
        } else if constexpr (std::is_same_v<K, kinds::Rescaled>) {
          const double ab = k.outer * k.inner;
          return capped_dual_jacobian(*k.base, xi / ab, cap) /
                 (ab * k.inner);
        } else {
          return capped_dual_jacobian(*k.left, xi, cap) +
                 capped_dual_jacobian(*k.right, xi, cap);
        }
      },
      P.data());
}

Decomposition finish(const Potential& L, const Potential& R, const Vec& v,
                     Vec v1, Vec xi, double dual_value, int iters) {
  Decomposition d;
  d.v2 = v - v1;
  d.v1 = std::move(v1);
  d.xi = std::move(xi);
  const ExtReal primal = eval(L, d.v1) + eval(R, d.v2);
  d.value = primal.value();
  d.gap = primal.is_finite() ? std::max(0.0, d.value - dual_value) : kInf;
  d.iterations = iters;
  return d;
}

bool converged(double gap, double value, double tol) {
  return gap <= tol * (1.0 + std::abs(value));
}

// min_x R1(x) + R2(v - x) by damped Newton; both members C^2.
std::optional<Decomposition> decompose_primal_newton(const Potential& L,
                                                     const Potential& R,
                                                     const Vec& v, double tol) {
  const Index n = v.size();
  auto objective = [&](const Vec& x) {
    return (eval(L, x) + eval(R, v - x)).value();
  };
  Vec x = 0.5 * v;
  double f = objective(x);
  Decomposition best;
  for (int it = 0; it < 200; ++it) {
    auto g1 = primal_gradient(L, x);
    auto g2 = primal_gradient(R, Vec(v - x));
    if (!g1 || !g2) return std::nullopt;
    const Vec g = *g1 - *g2;
    const Vec xi = *g1;
    const double dual = xi.dot(v) - conjugate_eval(L, xi) - conjugate_eval(R, xi);
    best = finish(L, R, v, x, xi, dual, it);
    if (converged(best.gap, best.value, tol) || g.norm() == 0.0) return best;

    auto H1 = primal_hessian(L, x);
    auto H2 = primal_hessian(R, Vec(v - x));
    Mat H = (H1 && H2) ? Mat(*H1 + *H2) : Mat(Mat::Identity(n, n));
    double shift = 0.0;
    Vec dir;
    for (int k = 0; k < 40; ++k) {
      Eigen::LLT<Mat> llt(H + shift * Mat::Identity(n, n));
      if (llt.info() == Eigen::Success) {
        dir = -llt.solve(g);
        break;
      }
      shift = shift == 0.0 ? 1e-12 * (1.0 + H.diagonal().cwiseAbs().maxCoeff())
                           : shift * 10.0;
    }
    if (dir.size() == 0) dir = -g;
    double s = 1.0;
    bool moved = false;
    for (int k = 0; k < 60; ++k) {
      const Vec trial = x + s * dir;
      const double ft = objective(trial);
      if (ft <= f + 1e-4 * s * g.dot(dir)) {
        x = trial;
        f = ft;
        moved = true;
        break;
      }
      s *= 0.5;
    }
    if (!moved) break;
  }
  return best;
}

// max_xi <xi, v> - R1*(xi) - R2*(xi) by semismooth Newton with line search.
Decomposition decompose_dual_newton(const Potential& L, const Potential& R,
                                    const Vec& v, double tol, bool* ok) {
  const Index n = v.size();
  auto dual = [&](const Vec& xi) {
    return xi.dot(v) - conjugate_eval(L, xi) - conjugate_eval(R, xi);
  };
  auto recover = [&](const Vec& xi, double dval, int it) {
    // Either member's rate may be the better primal candidate.
    Decomposition a = finish(L, R, v, dual_rate(L, xi), xi, dval, it);
    Decomposition b = finish(L, R, v, Vec(v - dual_rate(R, xi)), xi, dval, it);
    return a.gap <= b.gap ? a : b;
  };
  Vec xi = Vec::Zero(n);
  double g = dual(xi);
  Decomposition best = recover(xi, g, 0);
  const double cap = 1e12;
  for (int it = 1; it <= 500; ++it) {
    if (converged(best.gap, best.value, tol)) {
      *ok = true;
      return best;
    }
    const Vec grad = v - dual_rate(L, xi) - dual_rate(R, xi);
    if (grad.norm() == 0.0) break;
    Mat J = capped_dual_jacobian(L, xi, cap) + capped_dual_jacobian(R, xi, cap);
    const double mu = 1e-12 * (1.0 + J.diagonal().cwiseAbs().maxCoeff()) +
                      1e-14 * grad.norm();
    Eigen::LDLT<Mat> ldlt(J + mu * Mat::Identity(n, n));
    Vec dir = ldlt.solve(grad);
    if (!dir.allFinite() || grad.dot(dir) <= 0.0) dir = grad;
    double s = 1.0;
    bool moved = false;
    for (int k = 0; k < 80; ++k) {
      const Vec trial = xi + s * dir;
      const double gt = dual(trial);
      if (gt >= g + 1e-4 * s * grad.dot(dir)) {
        xi = trial;
        g = gt;
        moved = true;
        break;
      }
      s *= 0.5;
    }
    Decomposition cand = recover(xi, g, it);
    if (cand.gap < best.gap) best = cand;
    if (!moved) break;
  }
  *ok = converged(best.gap, best.value, tol);
  return best;
}

// Accelerated gradient ascent on a concave function. The curvature estimate
// is backtracked on gradient differences (function values stall at rounding
// level long before the gradient does); momentum restarts on the gradient test.
struct AscentResult {
  Vec x;
  double value;
  int iterations;
};

AscentResult accelerated_ascent(const std::function<double(const Vec&)>& f,
                                const std::function<Vec(const Vec&)>& grad,
                                Vec x0, int max_iter,
                                const std::function<bool(const Vec&, const Vec&)>& done) {
  Vec x = std::move(x0);
  Vec y = x;
  double t = 1.0;
  double L = 1.0;
  int it = 0;
  for (; it < max_iter; ++it) {
    const Vec gy = grad(y);
    if (done(y, gy)) {
      x = y;
      break;
    }
    Vec xn;
    bool accepted = false;
    for (int k = 0; k < 200; ++k) {
      xn = y + gy / L;
      const double step = (xn - y).norm();
      if (step == 0.0) break;
      const double curv = (grad(xn) - gy).norm() / step;
      if (curv <= L) {
        accepted = true;
        break;
      }
      L = std::max(2.0 * L, 1.5 * curv);
    }
    if (!accepted) {
      x = y;
      break;
    }
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    if (gy.dot(xn - x) < 0.0) {
      t = 1.0;
      y = xn;
    } else {
      y = xn + ((t - 1.0) / tn) * (xn - x);
      t = tn;
    }
    x = xn;
    L *= 0.95;
  }
  return {x, f(x), it};
}

Decomposition decompose_dual_gradient(const Potential& L, const Potential& R,
                                      const Vec& v, double tol, Vec start) {
  auto dual = [&](const Vec& xi) {
    return xi.dot(v) - conjugate_eval(L, xi) - conjugate_eval(R, xi);
  };
  auto grad = [&](const Vec& xi) -> Vec {
    return v - dual_rate(L, xi) - dual_rate(R, xi);
  };
  Decomposition best;
  best.gap = kInf;
  int count = 0;
  auto done = [&](const Vec& xi, const Vec&) {
    if (++count % 20 != 0) return false;
    const double g = dual(xi);
    Decomposition a = finish(L, R, v, dual_rate(L, xi), xi, g, count);
    if (a.gap < best.gap) best = a;
    return converged(best.gap, best.value, tol);
  };
  accelerated_ascent(dual, grad, std::move(start), 100000, done);
  return best;
}

}  // namespace

const char* to_string(PotentialKind kind) {
  switch (kind) {
    case PotentialKind::QuadraticForm: return "QuadraticForm";
    case PotentialKind::PowerNorm: return "PowerNorm";
    case PotentialKind::AnisotropicDualQuadratic: return "AnisotropicDualQuadratic";
    case PotentialKind::OneHomPlusQuad: return "OneHomPlusQuad";
    case PotentialKind::BlockIndicator: return "BlockIndicator";
    case PotentialKind::Rescaled: return "Rescaled";
    case PotentialKind::InfConvolution: return "InfConvolution";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Construction

Potential Potential::quadratic(Mat V) {
  if (V.rows() != V.cols() || V.rows() == 0)
    throw ConfigError("QuadraticForm: V must be square and nonempty");
  const double scale = 1.0 + V.cwiseAbs().maxCoeff();
  if ((V - V.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw ConfigError("QuadraticForm: V must be symmetric");
  Eigen::LLT<Mat> llt(V);
  if (llt.info() != Eigen::Success)
    throw ConfigError("QuadraticForm: V is not positive definite");
  Mat V_inv = llt.solve(Mat::Identity(V.rows(), V.cols()));
  V_inv = 0.5 * (V_inv + V_inv.transpose()).eval();
  if (!V_inv.allFinite()) throw ConfigError("QuadraticForm: V is singular");
  const Index n = V.rows();
  return Potential(kinds::Quadratic{std::move(V), std::move(V_inv)}, n);
}

Potential Potential::power_norm(double p, Vec weights) {
  if (!(p > 1.0)) throw ConfigError("PowerNorm: exponent p must exceed 1");
  if (weights.size() == 0) throw ConfigError("PowerNorm: empty weights");
  if (!(weights.array() > 0.0).all())
    throw ConfigError("PowerNorm: weights must be positive");
  const Index n = weights.size();
  return Potential(kinds::PowerNorm{p, std::move(weights)}, n);
}

Potential Potential::power_norm(double p, Index dim) {
  return power_norm(p, Vec(Vec::Ones(dim)));
}

Potential Potential::anisotropic_dual_quadratic(Vec dual_weights) {
  if (dual_weights.size() == 0 || !(dual_weights.array() > 0.0).all())
    throw ConfigError("AnisotropicDualQuadratic: dual weights must be positive");
  const Index n = dual_weights.size();
  return Potential(kinds::DualQuadratic{std::move(dual_weights)}, n);
}

Potential Potential::one_hom_plus_quad(Vec sigma, Vec rho) {
  if (sigma.size() != rho.size() || sigma.size() == 0)
    throw ConfigError("OneHomPlusQuad: sigma and rho must have equal nonzero size");
  if (!(sigma.array() >= 0.0).all())
    throw ConfigError("OneHomPlusQuad: yield sigma must be >= 0");
  if (!(rho.array() > 0.0).all())
    throw ConfigError("OneHomPlusQuad: viscosity rho must be > 0");
  const Index n = sigma.size();
  return Potential(kinds::OneHomQuad{std::move(sigma), std::move(rho)}, n);
}

Potential Potential::one_hom_plus_quad(double sigma, double rho, Index dim) {
  return one_hom_plus_quad(Vec(Vec::Constant(dim, sigma)),
                           Vec(Vec::Constant(dim, rho)));
}

Potential Potential::block_indicator(const Potential& base,
                                     std::vector<Index> active, Index dim) {
  if (static_cast<Index>(active.size()) != base.dim())
    throw ConfigError("BlockIndicator: active block size must match base dimension");
  std::vector<bool> seen(static_cast<std::size_t>(dim), false);
  for (Index i : active) {
    if (i < 0 || i >= dim || seen[static_cast<std::size_t>(i)])
      throw ConfigError("BlockIndicator: invalid or repeated active index");
    seen[static_cast<std::size_t>(i)] = true;
  }
  std::vector<Index> frozen;
  for (Index i = 0; i < dim; ++i)
    if (!seen[static_cast<std::size_t>(i)]) frozen.push_back(i);
  return Potential(kinds::BlockIndicator{std::make_shared<const Potential>(base),
                                         std::move(active), std::move(frozen)},
                   dim);
}

Potential Potential::rescaled(const Potential& base, double outer, double inner) {
  if (!(outer > 0.0) || !(inner > 0.0))
    throw ConfigError("Rescaled: factors must be positive");
  return Potential(
      kinds::Rescaled{std::make_shared<const Potential>(base), outer, inner},
      base.dim());
}

Potential Potential::inf_convolution(const Potential& left,
                                     const Potential& right) {
  if (left.dim() != right.dim())
    throw ConfigError("InfConvolution: member dimensions differ");
  return Potential(
      kinds::InfConvolution{std::make_shared<const Potential>(left),
                            std::make_shared<const Potential>(right)},
      left.dim());
}

PotentialKind Potential::kind() const {
  return static_cast<PotentialKind>(data_->index());
}

// ---------------------------------------------------------------------------
// Evaluation

ExtReal eval(const Potential& P, const Vec& v) {
  require_dim(v, P.dim(), "eval");
  return std::visit(
      [&](const auto& k) -> ExtReal {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, kinds::Quadratic>) {
          return 0.5 * v.dot(k.V * v);
        } else if constexpr (std::is_same_v<K, kinds::PowerNorm>) {
          return (k.w.array() * v.array().abs().pow(k.p)).sum() / k.p;
        } else if constexpr (std::is_same_v<K, kinds::DualQuadratic>) {
          return 0.5 * (v.array().square() / k.d.array()).sum();
        } else if constexpr (std::is_same_v<K, kinds::OneHomQuad>) {
          return (k.sigma.array() * v.array().abs() +
                  0.5 * k.rho.array() * v.array().square())
              .sum();
        } else if constexpr (std::is_same_v<K, kinds::BlockIndicator>) {
          for (Index i : k.frozen)
            if (v[i] != 0.0) return ExtReal::infinity();
          return eval(*k.base, gather(v, k.active));
        } else if constexpr (std::is_same_v<K, kinds::Rescaled>) {
          return k.outer * eval(*k.base, Vec(k.inner * v));
        } else {
          // Two indicator blocks freezing the same coordinate force it to 0.
          auto bl = block_view(*k.left);
          auto br = block_view(*k.right);
          if (bl && br) {
            for (Index i : bl->frozen)
              if (std::find(br->frozen.begin(), br->frozen.end(), i) !=
                      br->frozen.end() &&
                  v[i] != 0.0)
                return ExtReal::infinity();
          }
          return inf_conv_decompose(P, v, 1e-12).value;
        }
      },
      P.data());
}

double conjugate_eval(const Potential& P, const Vec& xi) {
  require_dim(xi, P.dim(), "conjugate_eval");
  return std::visit(
      [&](const auto& k) -> double {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, kinds::Quadratic>) {
          return 0.5 * xi.dot(k.V_inv * xi);
        } else if constexpr (std::is_same_v<K, kinds::PowerNorm>) {
          const double q = dual_exponent(k.p);
          return (k.w.array().pow(1.0 - q) * xi.array().abs().pow(q)).sum() / q;
        } else if constexpr (std::is_same_v<K, kinds::DualQuadratic>) {
          return 0.5 * (k.d.array() * xi.array().square()).sum();
        } else if constexpr (std::is_same_v<K, kinds::OneHomQuad>) {
          const Eigen::ArrayXd ex = (xi.array().abs() - k.sigma.array()).max(0.0);
          return (ex.square() / (2.0 * k.rho.array())).sum();
        } else if constexpr (std::is_same_v<K, kinds::BlockIndicator>) {
          return conjugate_eval(*k.base, gather(xi, k.active));
        } else if constexpr (std::is_same_v<K, kinds::Rescaled>) {
          return k.outer * conjugate_eval(*k.base, Vec(xi / (k.outer * k.inner)));
        } else {
          return conjugate_eval(*k.left, xi) + conjugate_eval(*k.right, xi);
        }
      },
      P.data());
}

Vec dual_rate(const Potential& P, const Vec& xi) {
  require_dim(xi, P.dim(), "dual_rate");
  return std::visit(
      [&](const auto& k) -> Vec {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, kinds::Quadratic>) {
          return k.V_inv * xi;
        } else if constexpr (std::is_same_v<K, kinds::PowerNorm>) {
          const double q = dual_exponent(k.p);
          Vec out(xi.size());
          for (Index i = 0; i < xi.size(); ++i)
            out[i] = sgn(xi[i]) * std::pow(std::abs(xi[i]) / k.w[i], q - 1.0);
          return out;
        } else if constexpr (std::is_same_v<K, kinds::DualQuadratic>) {
          return k.d.cwiseProduct(xi);
        } else if constexpr (std::is_same_v<K, kinds::OneHomQuad>) {
          Vec out(xi.size());
          for (Index i = 0; i < xi.size(); ++i)
            out[i] = sgn(xi[i]) * std::max(std::abs(xi[i]) - k.sigma[i], 0.0) / k.rho[i];
          return out;
        } else if constexpr (std::is_same_v<K, kinds::BlockIndicator>) {
          return scatter(dual_rate(*k.base, gather(xi, k.active)), k.active, P.dim());
        } else if constexpr (std::is_same_v<K, kinds::Rescaled>) {
          return dual_rate(*k.base, Vec(xi / (k.outer * k.inner))) / k.inner;
        } else {
          return dual_rate(*k.left, xi) + dual_rate(*k.right, xi);
        }
      },
      P.data());
}

double fenchel_young_residual(const Potential& P, const Vec& v, const Vec& xi) {
  require_dim(xi, P.dim(), "fenchel_young_residual");
  const ExtReal r = eval(P, v);
  if (r.is_infinite())
    throw InputError("fenchel_young_residual: R(v) is +inf");
  return r.value() + conjugate_eval(P, xi) - xi.dot(v);
}

// ---------------------------------------------------------------------------
// Inf-convolution

Decomposition inf_conv_decompose(const Potential& P, const Vec& v, double tol) {
  const auto* ic = P.as<kinds::InfConvolution>();
  if (!ic) throw InputError("inf_conv_decompose: potential is not an InfConvolution");
  require_dim(v, P.dim(), "inf_conv_decompose");
  if (!(tol > 0.0)) throw InputError("inf_conv_decompose: tol must be positive");
  const Potential& L = *ic->left;
  const Potential& R = *ic->right;
  const Index n = v.size();

  if (v.isZero(0.0)) {
    Decomposition d;
    d.v1 = Vec::Zero(n);
    d.v2 = Vec::Zero(n);
    d.xi = Vec::Zero(n);
    return d;
  }

  // Quadratic pair: xi = (N1 + N2)^{-1} v, v_j = N_j xi.
  auto N1 = quadratic_inverse(L);
  auto N2 = quadratic_inverse(R);
  if (N1 && N2) {
    Decomposition d;
    d.xi = Mat(*N1 + *N2).ldlt().solve(v);
    d.v1 = *N1 * d.xi;
    d.v2 = v - d.v1;
    d.value = 0.5 * d.xi.dot(v);
    d.gap = 0.0;
    return d;
  }

  // Complementary indicator blocks decouple.
  auto bl = block_view(L);
  auto br = block_view(R);
  if (bl && br && bl->active.size() + br->active.size() == static_cast<std::size_t>(n)) {
    std::vector<bool> covered(static_cast<std::size_t>(n), false);
    for (Index i : bl->active) covered[static_cast<std::size_t>(i)] = true;
    bool complementary = true;
    for (Index i : br->active) {
      if (covered[static_cast<std::size_t>(i)]) complementary = false;
      covered[static_cast<std::size_t>(i)] = true;
    }
    if (complementary) {
      Decomposition d;
      const Vec a = gather(v, bl->active);
      const Vec b = gather(v, br->active);
      d.v1 = scatter(a, bl->active, n);
      d.v2 = scatter(b, br->active, n);
      d.value = (eval(bl->base, a) + eval(br->base, b)).value();
      auto ga = primal_gradient(bl->base, a);
      auto gb = primal_gradient(br->base, b);
      d.xi = Vec::Zero(n);
      if (ga) d.xi += scatter(*ga, bl->active, n);
      if (gb) d.xi += scatter(*gb, br->active, n);
      return d;
    }
  }

  if (has_smooth_primal(L) && has_smooth_primal(R)) {
    auto d = decompose_primal_newton(L, R, v, tol);
    if (d && converged(d->gap, d->value, tol)) return *d;
  }

  bool ok = false;
  Decomposition d = decompose_dual_newton(L, R, v, tol, &ok);
  if (ok) return d;
  Decomposition g = decompose_dual_gradient(L, R, v, tol, d.xi);
  if (g.gap < d.gap) d = g;
  if (converged(d.gap, d.value, tol)) return d;
  throw NumericalError("inf_conv_decompose: no convergence, duality gap " +
                           std::to_string(d.gap),
                       d.v1, d.gap, d.iterations);
}

// ---------------------------------------------------------------------------
// Smooth structure

std::optional<Vec> primal_gradient(const Potential& P, const Vec& v) {
  require_dim(v, P.dim(), "primal_gradient");
  return std::visit(
      [&](const auto& k) -> std::optional<Vec> {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, kinds::Quadratic>) {
          return Vec(k.V * v);
        } else if constexpr (std::is_same_v<K, kinds::PowerNorm>) {
          Vec g(v.size());
          for (Index i = 0; i < v.size(); ++i)
            g[i] = k.w[i] * sgn(v[i]) * std::pow(std::abs(v[i]), k.p - 1.0);
          return g;
        } else if constexpr (std::is_same_v<K, kinds::DualQuadratic>) {
          return Vec(v.cwiseQuotient(k.d));
        } else if constexpr (std::is_same_v<K, kinds::OneHomQuad>) {
          Vec g(v.size());
          for (Index i = 0; i < v.size(); ++i) {
            if (v[i] == 0.0 && k.sigma[i] > 0.0) return std::nullopt;
            g[i] = k.sigma[i] * sgn(v[i]) + k.rho[i] * v[i];
          }
          return g;
        } else if constexpr (std::is_same_v<K, kinds::BlockIndicator>) {
          for (Index i : k.frozen)
            if (v[i] != 0.0) return std::nullopt;
          auto g = primal_gradient(*k.base, gather(v, k.active));
          if (!g) return std::nullopt;
          return scatter(*g, k.active, P.dim());
        } else if constexpr (std::is_same_v<K, kinds::Rescaled>) {
          auto g = primal_gradient(*k.base, Vec(k.inner * v));
          if (!g) return std::nullopt;
          return Vec(k.outer * k.inner * *g);
        } else {
          return inf_conv_decompose(P, v, 1e-12).xi;
        }
      },
      P.data());
}

std::optional<Mat> primal_hessian(const Potential& P, const Vec& v) {
  require_dim(v, P.dim(), "primal_hessian");
  return std::visit(
      [&](const auto& k) -> std::optional<Mat> {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, kinds::Quadratic>) {
          return k.V;
        } else if constexpr (std::is_same_v<K, kinds::PowerNorm>) {
          Vec h(v.size());
          for (Index i = 0; i < v.size(); ++i) {
            if (v[i] == 0.0) {
              if (k.p < 2.0) return std::nullopt;
              h[i] = k.p == 2.0 ? k.w[i] : 0.0;
            } else {
              h[i] = (k.p - 1.0) * k.w[i] * std::pow(std::abs(v[i]), k.p - 2.0);
            }
          }
          return Mat(h.asDiagonal());
        } else if constexpr (std::is_same_v<K, kinds::DualQuadratic>) {
          return Mat(k.d.cwiseInverse().asDiagonal());
        } else if constexpr (std::is_same_v<K, kinds::OneHomQuad>) {
          for (Index i = 0; i < v.size(); ++i)
            if (v[i] == 0.0 && k.sigma[i] > 0.0) return std::nullopt;
          return Mat(k.rho.asDiagonal());
        } else if constexpr (std::is_same_v<K, kinds::BlockIndicator>) {
          return std::nullopt;
        } else if constexpr (std::is_same_v<K, kinds::Rescaled>) {
          auto H = primal_hessian(*k.base, Vec(k.inner * v));
          if (!H) return std::nullopt;
          return Mat(k.outer * k.inner * k.inner * *H);
        } else {
          auto d = inf_conv_decompose(P, v, 1e-12);
          auto H1 = primal_hessian(*k.left, d.v1);
          auto H2 = primal_hessian(*k.right, d.v2);
          if (!H1 || !H2) return std::nullopt;
          // (H1^{-1} + H2^{-1})^{-1} = H1 (H1 + H2)^{-1} H2
          return Mat(*H1 * Mat(*H1 + *H2).ldlt().solve(*H2));
        }
      },
      P.data());
}

std::optional<Mat> dual_jacobian(const Potential& P, const Vec& xi) {
  require_dim(xi, P.dim(), "dual_jacobian");
  if (auto* pn = P.as<kinds::PowerNorm>()) {
    if (dual_exponent(pn->p) < 2.0)
      for (Index i = 0; i < xi.size(); ++i)
        if (xi[i] == 0.0) return std::nullopt;
  }
  if (auto* b = P.as<kinds::BlockIndicator>()) {
    auto J = dual_jacobian(*b->base, gather(xi, b->active));
    if (!J) return std::nullopt;
    return scatter(*J, b->active, P.dim());
  }
  if (auto* r = P.as<kinds::Rescaled>()) {
    const double ab = r->outer * r->inner;
    auto J = dual_jacobian(*r->base, Vec(xi / ab));
    if (!J) return std::nullopt;
    return Mat(*J / (ab * r->inner));
  }
  if (auto* ic = P.as<kinds::InfConvolution>()) {
    auto J1 = dual_jacobian(*ic->left, xi);
    auto J2 = dual_jacobian(*ic->right, xi);
    if (!J1 || !J2) return std::nullopt;
    return Mat(*J1 + *J2);
  }
  return capped_dual_jacobian(P, xi, kInf);
}

bool has_smooth_primal(const Potential& P) {
  return std::visit(
      [&](const auto& k) -> bool {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, kinds::PowerNorm>) {
          return k.p >= 2.0;
        } else if constexpr (std::is_same_v<K, kinds::OneHomQuad>) {
          return (k.sigma.array() == 0.0).all();
        } else if constexpr (std::is_same_v<K, kinds::BlockIndicator>) {
          return false;
        } else if constexpr (std::is_same_v<K, kinds::Rescaled>) {
          return has_smooth_primal(*k.base);
        } else if constexpr (std::is_same_v<K, kinds::InfConvolution>) {
          return has_smooth_primal(*k.left) && has_smooth_primal(*k.right);
        } else {
          return true;
        }
      },
      P.data());
}

bool has_lipschitz_dual(const Potential& P) {
  return std::visit(
      [&](const auto& k) -> bool {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, kinds::PowerNorm>) {
          return k.p <= 2.0;
        } else if constexpr (std::is_same_v<K, kinds::BlockIndicator>) {
          return has_lipschitz_dual(*k.base);
        } else if constexpr (std::is_same_v<K, kinds::Rescaled>) {
          return has_lipschitz_dual(*k.base);
        } else if constexpr (std::is_same_v<K, kinds::InfConvolution>) {
          return has_lipschitz_dual(*k.left) && has_lipschitz_dual(*k.right);
        } else {
          return true;
        }
      },
      P.data());
}

std::optional<Vec> diagonal_dual_weights(const Potential& P) {
  if (auto* d = P.as<kinds::DualQuadratic>()) return d->d;
  if (auto* pn = P.as<kinds::PowerNorm>()) {
    if (pn->p == 2.0) return Vec(pn->w.cwiseInverse());
    return std::nullopt;
  }
  if (auto* q = P.as<kinds::Quadratic>()) {
    const Mat off = q->V - Mat(q->V.diagonal().asDiagonal());
    if (!off.isZero(0.0)) return std::nullopt;
    return Vec(q->V.diagonal().cwiseInverse());
  }
  if (auto* r = P.as<kinds::Rescaled>()) {
    auto d = diagonal_dual_weights(*r->base);
    if (!d) return std::nullopt;
    return Vec(*d / (r->outer * r->inner * r->inner));
  }
  if (auto* ic = P.as<kinds::InfConvolution>()) {
    auto d1 = diagonal_dual_weights(*ic->left);
    auto d2 = diagonal_dual_weights(*ic->right);
    if (!d1 || !d2) return std::nullopt;
    return Vec(*d1 + *d2);
  }
  return std::nullopt;
}

std::optional<Mat> quadratic_matrix(const Potential& P) {
  auto N = quadratic_inverse(P);
  if (!N) {
    if (auto* ic = P.as<kinds::InfConvolution>()) {
      auto N1 = quadratic_inverse(*ic->left);
      auto N2 = quadratic_inverse(*ic->right);
      if (N1 && N2) return Mat(Mat(*N1 + *N2).inverse());
    }
    return std::nullopt;
  }
  if (auto* q = P.as<kinds::Quadratic>()) return q->V;
  return Mat(N->inverse());
}

std::optional<BlockView> block_view(const Potential& P) {
  if (auto* b = P.as<kinds::BlockIndicator>())
    return BlockView{*b->base, b->active, b->frozen};
  if (auto* r = P.as<kinds::Rescaled>()) {
    auto inner = block_view(*r->base);
    if (!inner) return std::nullopt;
    inner->base = Potential::rescaled(inner->base, r->outer, r->inner);
    return inner;
  }
  return std::nullopt;
}

double biconjugate_eval(const Potential& P, const Vec& v, double tol,
                        int max_iter) {
  require_dim(v, P.dim(), "biconjugate_eval");
  auto f = [&](const Vec& xi) { return xi.dot(v) - conjugate_eval(P, xi); };
  auto g = [&](const Vec& xi) -> Vec { return v - dual_rate(P, xi); };
  const double scale = 1.0 + v.norm();
  auto done = [&](const Vec&, const Vec& grad) { return grad.norm() <= tol * scale; };
  // cold start at 0 so nothing from the primal side leaks into the oracle
  auto r = accelerated_ascent(f, g, Vec::Zero(v.size()), max_iter, done);
  const Vec grad = g(r.x);
  if (grad.norm() > tol * scale)
    throw NumericalError("biconjugate_eval: ascent did not converge", r.x,
                         grad.norm(), r.iterations);
  return r.value;
}

// ---------------------------------------------------------------------------
// Growth probes

double DualPairNorm::primal(const Vec& v) const {
  const double q = exponent;
  if (weights.size() == 0) return std::pow(v.array().abs().pow(q).sum(), 1.0 / q);
  require_dim(v, weights.size(), "DualPairNorm::primal");
  return std::pow((weights.array() * v.array().abs().pow(q)).sum(), 1.0 / q);
}

double DualPairNorm::dual(const Vec& xi) const {
  const double qs = dual_exponent(exponent);
  if (weights.size() == 0) return std::pow(xi.array().abs().pow(qs).sum(), 1.0 / qs);
  require_dim(xi, weights.size(), "DualPairNorm::dual");
  return std::pow(
      (weights.array().pow(1.0 - qs) * xi.array().abs().pow(qs)).sum(), 1.0 / qs);
}

QyeEstimate qye_probe(const Potential& P, const std::vector<QyePair>& samples,
                      const DualPairNorm& norm) {
  if (samples.empty()) throw InputError("qye_probe: empty sample list");
  std::vector<double> sums;
  std::vector<double> prods;
  std::vector<std::size_t> index;
  std::vector<double> violations;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const ExtReal r = eval(P, s.v);
    if (r.is_infinite()) continue;
    const double total = r.value() + conjugate_eval(P, s.xi);
    violations.push_back(-total);
    const double m = norm.primal(s.v) * norm.dual(s.xi);
    if (m > 0.0) {
      sums.push_back(total);
      prods.push_back(m);
      index.push_back(i);
    }
  }
  if (sums.empty()) throw InputError("qye_probe: all samples are zero");

  QyeEstimate est;
  std::sort(violations.begin(), violations.end());
  const std::size_t qi = static_cast<std::size_t>(
      std::floor(0.01 * static_cast<double>(violations.size() - 1)));
  est.C = std::max(0.0, violations[qi]);

  auto feasible = [&](double c) {
    for (std::size_t i = 0; i < sums.size(); ++i)
      if (sums[i] + est.C < c * prods[i]) return false;
    return true;
  };
  double worst = kInf;
  for (std::size_t i = 0; i < sums.size(); ++i) {
    const double ratio = (sums[i] + est.C) / prods[i];
    if (ratio < worst) {
      worst = ratio;
      est.worst_index = index[i];
    }
  }
  double lo = 0.0;
  double hi = worst * (1.0 + 1e-12) + 1e-300;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (feasible(mid) ? lo : hi) = mid;
  }
  est.c = lo;
  est.worst_ratio = worst;
  est.used_pairs = sums.size();
  return est;
}

double PsiMinorant::operator()(double r) const {
  double best = 0.0;
  for (std::size_t i = 0; i < K.size(); ++i) best = std::max(best, K[i] * r - S[i]);
  return best;
}

namespace {

// sup_{0 <= s <= radius} K s - phi(s) for convex phi with phi(0) = 0.
double ray_sup(const std::function<double(double)>& phi, double K, double radius) {
  auto obj = [&](double s) {
    const double p = phi(s);
    return std::isfinite(p) ? K * s - p : -kInf;
  };
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = 0.0;
  double b = radius;
  double c = b - gr * (b - a);
  double d = a + gr * (b - a);
  double fc = obj(c);
  double fd = obj(d);
  for (int it = 0; it < 200 && b - a > 1e-13 * (1.0 + radius); ++it) {
    if (fc < fd) {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = obj(d);
    } else {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = obj(c);
    }
  }
  return std::max({0.0, fc, fd, obj(radius)});
}

}  // namespace

PsiMinorant psi_minorant(const std::vector<Potential>& potentials,
                         const std::vector<double>& K_grid, double sample_radius,
                         const DualPairNorm& norm, int rays, std::uint64_t seed) {
  if (K_grid.empty()) throw InputError("psi_minorant: empty K grid");
  if (potentials.empty()) throw InputError("psi_minorant: no potentials");
  if (K_grid.front() != 0.0) throw InputError("psi_minorant: K grid must start at 0");
  for (std::size_t i = 1; i < K_grid.size(); ++i)
    if (!(K_grid[i] > K_grid[i - 1]))
      throw InputError("psi_minorant: K grid must be increasing");
  if (!(sample_radius > 0.0)) throw InputError("psi_minorant: radius must be positive");

  const Index n = potentials.front().dim();
  std::vector<Vec> dirs;
  for (Index i = 0; i < n; ++i) {
    dirs.push_back(Vec::Unit(n, i));
    dirs.push_back(-Vec::Unit(n, i));
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int r = 0; r < rays; ++r) {
    Vec d(n);
    for (Index i = 0; i < n; ++i) d[i] = gauss(rng);
    if (d.norm() > 0.0) dirs.push_back(d);
  }

  PsiMinorant psi;
  psi.K = K_grid;
  psi.radius = sample_radius;
  psi.S.assign(K_grid.size(), 0.0);
  for (const auto& P : potentials) {
    if (P.dim() != n) throw InputError("psi_minorant: potentials differ in dimension");
    for (const Vec& d : dirs) {
      const Vec dv = d / norm.primal(d);
      const Vec dx = d / norm.dual(d);
      auto primal = [&](double s) { return eval(P, Vec(s * dv)).value(); };
      auto dual = [&](double s) { return conjugate_eval(P, Vec(s * dx)); };
      for (std::size_t k = 0; k < K_grid.size(); ++k) {
        if (K_grid[k] == 0.0) continue;
        psi.S[k] = std::max({psi.S[k], ray_sup(primal, K_grid[k], sample_radius),
                             ray_sup(dual, K_grid[k], sample_radius)});
      }
    }
  }
  return psi;
}

}  // namespace splitflow
