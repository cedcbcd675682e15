#pragma once

// Dissipation potentials R: R^n -> [0, +inf], their Fenchel conjugates,
// dual rate maps (gradients of the conjugate), inf-convolution and the
// growth probes (Quantitative Young Estimate, Psi-minorant).

#include "splitflow/errors.hpp"
#include "splitflow/extended_real.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

namespace splitflow {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

enum class PotentialKind {
  QuadraticForm,
  PowerNorm,
  AnisotropicDualQuadratic,
  OneHomPlusQuad,
  BlockIndicator,
  Rescaled,
  InfConvolution,
};

const char* to_string(PotentialKind kind);

class Potential;

namespace kinds {

/// R(v) = 1/2 <V v, v>, V symmetric positive definite.
struct Quadratic {
  Mat V;
  Mat V_inv;
};

/// R(v) = 1/p sum_i w_i |v_i|^p.
struct PowerNorm {
  double p;
  Vec w;
};

/// R*(xi) = 1/2 sum_i d_i xi_i^2, i.e. R(v) = sum_i v_i^2 / (2 d_i).
struct DualQuadratic {
  Vec d;
};

/// R(v) = sum_i sigma_i |v_i| + rho_i v_i^2 / 2.
struct OneHomQuad {
  Vec sigma;
  Vec rho;
};

/// R(v) = base(v_active) + indicator{v_frozen = 0}.
struct BlockIndicator {
  std::shared_ptr<const Potential> base;
  std::vector<Index> active;
  std::vector<Index> frozen;
};

/// R(v) = outer * base(inner * v).
struct Rescaled {
  std::shared_ptr<const Potential> base;
  double outer;
  double inner;
};

/// R(v) = min_{v1 + v2 = v} left(v1) + right(v2).
struct InfConvolution {
  std::shared_ptr<const Potential> left;
  std::shared_ptr<const Potential> right;
};

using Variant = std::variant<Quadratic, PowerNorm, DualQuadratic, OneHomQuad,
                             BlockIndicator, Rescaled, InfConvolution>;

}  // namespace kinds

/// Immutable dissipation potential. Cheap to copy (shared state).
class Potential {
 public:
  static Potential quadratic(Mat V);
  static Potential power_norm(double p, Vec weights);
  static Potential power_norm(double p, Index dim);
  static Potential anisotropic_dual_quadratic(Vec dual_weights);
  static Potential one_hom_plus_quad(Vec sigma, Vec rho);
  static Potential one_hom_plus_quad(double sigma, double rho, Index dim);
  /// `base` acts on the coordinates listed in `active`; the others are frozen.
  static Potential block_indicator(const Potential& base,
                                   std::vector<Index> active, Index dim);
  /// outer * base(inner * v); the defaults give R~(v) = 2 R(v/2).
  static Potential rescaled(const Potential& base, double outer = 2.0,
                            double inner = 0.5);
  static Potential inf_convolution(const Potential& left,
                                   const Potential& right);

  PotentialKind kind() const;
  Index dim() const { return dim_; }
  const kinds::Variant& data() const { return *data_; }

  template <class T>
  const T* as() const {
    return std::get_if<T>(data_.get());
  }

 private:
  Potential(kinds::Variant data, Index dim)
      : data_(std::make_shared<const kinds::Variant>(std::move(data))),
        dim_(dim) {}

  std::shared_ptr<const kinds::Variant> data_;
  Index dim_ = 0;
};

// ---------------------------------------------------------------------------
// Core operations

ExtReal eval(const Potential& P, const Vec& v);
double conjugate_eval(const Potential& P, const Vec& xi);
/// An element of the subdifferential of R* at xi.
Vec dual_rate(const Potential& P, const Vec& xi);

/// R(v) + R*(xi) - <xi, v>. Requires R(v) finite.
double fenchel_young_residual(const Potential& P, const Vec& v, const Vec& xi);

struct Decomposition {
  Vec v1;
  Vec v2;
  double value = 0.0;
  /// Common dual force at the optimum (dR1(v1) = dR2(v2) = xi).
  Vec xi;
  /// Primal value minus dual value; nonnegative.
  double gap = 0.0;
  int iterations = 0;
};

/// Optimal split v = v1 + v2 for an InfConvolution potential.
Decomposition inf_conv_decompose(const Potential& P, const Vec& v,
                                 double tol = 1e-12);

// ---------------------------------------------------------------------------
// Smooth structure used by the incremental solvers

/// Gradient of R at v, when R is differentiable there.
std::optional<Vec> primal_gradient(const Potential& P, const Vec& v);
/// Hessian of R at v when finite (nullopt for nonsmooth kinds and for
/// PowerNorm with p < 2 at a zero coordinate).
std::optional<Mat> primal_hessian(const Potential& P, const Vec& v);
/// Generalized Jacobian of the dual rate map at xi, when finite.
std::optional<Mat> dual_jacobian(const Potential& P, const Vec& xi);

/// True when R is C^2 everywhere.
bool has_smooth_primal(const Potential& P);
/// True when the dual rate map is Lipschitz (finite generalized Jacobian).
bool has_lipschitz_dual(const Potential& P);

/// d with R*(xi) = 1/2 sum d_i xi_i^2, for diagonal quadratic potentials.
std::optional<Vec> diagonal_dual_weights(const Potential& P);
/// M with R(v) = 1/2 v^T M v, for quadratic potentials.
std::optional<Mat> quadratic_matrix(const Potential& P);

/// Active/frozen view of a (possibly rescaled) BlockIndicator.
struct BlockView {
  Potential base;
  std::vector<Index> active;
  std::vector<Index> frozen;
};
std::optional<BlockView> block_view(const Potential& P);

/// sup_xi <xi, v> - R*(xi) by accelerated gradient ascent on the dual.
/// Independent of the closed-form primal evaluation.
double biconjugate_eval(const Potential& P, const Vec& v, double tol = 1e-10,
                        int max_iter = 200000);

// ---------------------------------------------------------------------------
// Growth probes

/// Weighted l^q norm ||v|| = (sum w_i |v_i|^q)^(1/q) and its dual norm
/// ||xi||_* = (sum w_i^(1-q*) |xi_i|^q*)^(1/q*). Empty weights = unit.
struct DualPairNorm {
  double exponent = 2.0;
  Vec weights;

  double primal(const Vec& v) const;
  double dual(const Vec& xi) const;
};

struct QyePair {
  Vec v;
  Vec xi;
};

struct QyeEstimate {
  double c = 0.0;
  double C = 0.0;
  std::size_t worst_index = 0;
  /// min over pairs of (R(v) + R*(xi) + C) / (||v|| ||xi||_*)
  double worst_ratio = 0.0;
  std::size_t used_pairs = 0;
};

/// Fit R(v) + R*(xi) >= c ||v|| ||xi||_* - C on a sample of pairs.
QyeEstimate qye_probe(const Potential& P, const std::vector<QyePair>& samples,
                      const DualPairNorm& norm = {});

/// Sampled Psi(r) = max_K (K r - S_K); convex, nondecreasing, Psi(0) = 0.
struct PsiMinorant {
  std::vector<double> K;
  std::vector<double> S;
  /// S_K is certified only on the ball of this radius.
  double radius = 0.0;

  double operator()(double r) const;
};

PsiMinorant psi_minorant(const std::vector<Potential>& potentials,
                         const std::vector<double>& K_grid,
                         double sample_radius, const DualPairNorm& norm = {},
                         int rays = 256, std::uint64_t seed = 7);

}  // namespace splitflow
