#pragma once

// Time-dependent driving energies E(t, u) for the three model families:
// quadratic two-block energies, the max-norm energy of the counterexample,
// and a finite-difference Allen-Cahn energy on (0, 1).

#include "splitflow/errors.hpp"

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace splitflow {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Scalar time profile with analytic derivative.
struct TimeFunction {
  enum class Kind { Constant, Linear, Sinusoidal };
  Kind kind = Kind::Constant;
  /// Constant: a.  Linear: a + b t.  Sinusoidal: a sin(omega t + phase).
  double a = 1.0;
  double b = 0.0;
  double omega = 0.0;
  double phase = 0.0;

  static TimeFunction constant(double a);
  static TimeFunction linear(double a, double b);
  static TimeFunction sinusoidal(double amplitude, double omega, double phase = 0.0);

  double value(double t) const;
  double derivative(double t) const;
  /// Upper bounds of |value| and |derivative| on [0, T].
  double sup_abs(double T) const;
  double sup_abs_derivative(double T) const;
};

/// profile * time(t); a load is a sum of such terms.
struct LoadTerm {
  Vec profile;
  TimeFunction time;
};
using Load = std::vector<LoadTerm>;

Vec load_value(const Load& load, Index n, double t);
Vec load_rate(const Load& load, Index n, double t);

enum class EnergyKind { QuadraticBlock, MaxNorm, AllenCahn1D };

const char* to_string(EnergyKind kind);

/// Exact description of a convex subdifferential set.
struct SubdiffSet {
  enum class Kind { Singleton, Segment, Hull };
  Kind kind = Kind::Singleton;
  /// Singleton: {points[0]}; Segment: [points[0], points[1]];
  /// Hull: convex hull of all points.
  std::vector<Vec> points;

  static SubdiffSet singleton(Vec xi);
  static SubdiffSet segment(Vec a, Vec b);
  static SubdiffSet hull(std::vector<Vec> vertices);

  /// Point of the segment a + theta (b - a); the singleton ignores theta.
  Vec element(double theta = 0.0) const;
  /// Distance-based membership test (exact for the three in-scope shapes).
  bool contains(const Vec& xi, double tol = 1e-12) const;
  double distance(const Vec& xi) const;
};

struct QuadraticBlockParams {
  Mat A;  // n_y x n_y
  Mat B;  // n_z x n_y
  Mat G;  // n_z x n_z
  Load f;
  Load g;
};

struct AllenCahnParams {
  Index m = 16;          // interior nodes, mesh h = 1/(m+1)
  double c_w = 1.0;      // W(u) = c_w (u^2 - beta^2)^2 / 4
  double beta = 1.0;
  Load load;
};

/// Immutable energy. Cheap to copy.
class Energy {
 public:
  /// shift: if empty, the coercivity bound below picks one making E >= 1.
  static Energy quadratic_block(QuadraticBlockParams params, double horizon = 1.0,
                                std::optional<double> shift = std::nullopt);
  static Energy max_norm(std::optional<double> shift = std::nullopt);
  static Energy allen_cahn_1d(AllenCahnParams params, double horizon = 1.0,
                              std::optional<double> shift = std::nullopt);

  EnergyKind kind() const;
  Index dim() const;
  Index n_y() const;
  Index n_z() const;
  double shift() const;
  /// lambda in the convexity estimate (Euclidean metric); 0 for convex kinds.
  double lambda_convexity() const;
  /// C_# with |d_t E(t,u)| <= C_# E(t,u) on [0, horizon].
  double power_constant() const;
  double horizon() const;
  /// Mesh width for AllenCahn1D, 1 otherwise.
  double mesh() const;

  const QuadraticBlockParams* quadratic() const;
  const AllenCahnParams* allen_cahn() const;

  struct State;

 private:
  explicit Energy(std::shared_ptr<const State> s) : s_(std::move(s)) {}
  std::shared_ptr<const State> s_;

  friend double energy_eval(const Energy&, double, const Vec&);
  friend double power_eval(const Energy&, double, const Vec&);
  friend std::optional<Vec> energy_gradient(const Energy&, double, const Vec&);
  friend std::optional<Mat> energy_hessian(const Energy&, double, const Vec&);
};

double energy_eval(const Energy& E, double t, const Vec& u);
double power_eval(const Energy& E, double t, const Vec& u);
SubdiffSet subdiff(const Energy& E, double t, const Vec& u);

enum class Block { Y, Z };
SubdiffSet partial_subdiff(const Energy& E, double t, const Vec& y, const Vec& z,
                           Block block);

/// Gradient and Hessian for the smooth kinds; nullopt for MaxNorm.
std::optional<Vec> energy_gradient(const Energy& E, double t, const Vec& u);
std::optional<Mat> energy_hessian(const Energy& E, double t, const Vec& u);

/// |d_t E| <= C_# E at (t, u), with a relative slack.
bool power_control_holds(const Energy& E, double t, const Vec& u,
                         double slack = 1e-12);

/// Tridiagonal stiffness (1/h) tridiag(-1, 2, -1) on m interior nodes.
Mat laplacian_1d(Index m, double h);

}  // namespace splitflow
