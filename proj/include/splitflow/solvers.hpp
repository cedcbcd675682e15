#pragma once

// Incremental minimization, the single-mechanism sub-step flows, the
// time-splitting and alternating minimizing movement schemes (plain and
// block-staggered) and the effective reference solver.

#include "splitflow/energies.hpp"
#include "splitflow/partitions.hpp"
#include "splitflow/potentials.hpp"

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace splitflow {

struct GradientSystem {
  Energy energy;
  Potential r1;
  std::optional<Potential> r2;
  /// (n_y, n_z): r1 moves only y, r2 only z.
  std::optional<std::pair<Index, Index>> block_layout;

  /// Checks dimensions and the block structure; throws ConfigError.
  void validate() const;
  Index dim() const { return energy.dim(); }
  /// R_j, j = 1, 2 (R_1 when no second potential is configured).
  const Potential& mechanism(int j) const;
  /// R~_j(v) = 2 R_j(v/2).
  Potential rescaled(int j) const;
  /// inf-convolution of R_1 and R_2 (R_1 alone for single-mechanism systems).
  Potential effective() const;
};

struct ProxResult {
  Vec u;
  /// Euler-Lagrange force, in dE(t, u) and in -dR((u - anchor)/h).
  Vec xi;
  int iterations = 0;
  double residual = 0.0;
};

/// argmin_u h R((u - anchor)/h) + E(t_eval, u).
ProxResult prox_step(const Energy& E, const Potential& R, double t_eval,
                     const Vec& anchor, double h, double tol = 1e-10);

/// Piece u(t) = u0 + (t - t0) velocity on [t0, t1] with constant force xi.
/// mechanism: 1 or 2 for R~_1 / R~_2 flows, 0 for the effective flow.
struct AffinePiece {
  double t0 = 0.0;
  double t1 = 0.0;
  Vec u0;
  Vec velocity;
  Vec xi;
  int mechanism = 0;

  Vec at(double t) const { return u0 + (t - t0) * velocity; }
};

/// True when the exact piecewise-affine solver covers (E, R).
bool exact_regime_applicable(const Energy& E, const Potential& R);

/// Exact flow of dR(u') + d|u|_inf + ... ∋ 0 for R*(xi) = 1/2 sum d_i xi_i^2.
/// Pieces cover [s, t]; returns false if the state could not be classified.
bool regime_flow(const Vec& dual_weights, double s, double t, const Vec& u_init,
                 int mechanism, std::vector<AffinePiece>& pieces);

struct SubstepResult {
  /// M + 1 uniform sample times on [s, t] and the states there.
  std::vector<double> times;
  std::vector<Vec> states;
  /// One force per inner step (for exact runs: the force at the step midpoint).
  std::vector<Vec> forces;
  std::vector<AffinePiece> pieces;
  std::vector<std::string> warnings;
  int iterations = 0;
  double residual = 0.0;
  bool exact = false;
};

/// Flow of dR~_j(u') + dE(t, u) ∋ 0 on [s, t] from u_init, by M implicit
/// steps, or exactly for the max-norm energy with diagonal quadratic R_j.
SubstepResult substep_flow(const GradientSystem& sys, int which, double s, double t,
                           const Vec& u_init, int inner_steps = 8, double tol = 1e-10);

enum class Scheme { Split, Amm, BlockSplit, BlockAmm, Effective };
const char* to_string(Scheme s);
Scheme scheme_from_string(const std::string& name);

struct StepStats {
  int step = 0;
  /// 1 = left semi-interval, 2 = right, 0 = whole step (effective)
  int half = 0;
  int iterations = 0;
  double residual = 0.0;
  bool exact = false;
};

struct SchemeOutput {
  Scheme scheme = Scheme::Split;
  std::shared_ptr<const Grid> grid;
  SampledCurve u_const;
  SampledCurve u_delayed;
  SampledCurve u_linear;
  std::optional<SampledCurve> u_variational;
  std::optional<SampledCurve> xi_variational;
  SampledCurve xi;
  /// Exact-regime runs only.
  std::vector<AffinePiece> pieces;
  std::vector<StepStats> stats;
  std::vector<std::string> warnings;
  double tol = 0.0;

  const Partition& partition() const { return grid->partition(); }
  bool exact() const { return !pieces.empty(); }
  /// State at grid node j.
  Vec node_state(int j) const { return u_linear.values[static_cast<std::size_t>(j)]; }
  /// State at the partition node t^k.
  Vec at_node(int k) const { return node_state(grid->node_index(k)); }
  int total_iterations() const;
};

SchemeOutput split_step_solve(const GradientSystem& sys, const Partition& P, const Vec& u0,
                              int inner_steps = 8, double tol = 1e-10);

SchemeOutput amm_solve(const GradientSystem& sys, const Partition& P, const Vec& u0,
                       double tol = 1e-10, bool with_variational = false, int samples = 8);

enum class BlockMode { Split, Amm };
SchemeOutput block_solve(const GradientSystem& sys, const Partition& P, const Vec& u0,
                         BlockMode mode, double tol = 1e-10, int inner_steps = 8);

/// Implicit Euler for (E, R_eff) with `inner_steps` steps per semi-interval,
/// exact for the max-norm counterexample.
SchemeOutput effective_solve(const GradientSystem& sys, const Partition& P, const Vec& u0,
                             double tol = 1e-10, int inner_steps = 1);

}  // namespace splitflow
