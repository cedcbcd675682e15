#pragma once

// Packaged model problems: the max-norm counterexample, a 1-D Allen-Cahn
// equation with L^p / H^1 dissipation, and a 1-D visco-plastic bar with
// staggered (y, z) structure.

#include "splitflow/solvers.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace splitflow {

struct ModelPreset {
  std::string name;
  /// Resolved parameters (defaults merged with overrides).
  nlohmann::json parameters;
  GradientSystem system;
  Vec u0;
  double T = 1.0;
  int N = 64;
  std::vector<int> study_N;
  Scheme scheme = Scheme::Amm;
  /// Nodal coordinates for gridded models (empty otherwise).
  Vec nodes;
};

struct ModelInfo {
  std::string name;
  std::string description;
  nlohmann::json defaults;
};

std::vector<ModelInfo> list_models();

/// Throws ConfigError on unknown names, unknown keys or invalid values.
ModelPreset make_model(const std::string& name, const nlohmann::json& overrides = nlohmann::json::object());

enum class ReferenceKind { Effective, SplitLimit };

/// Closed-form trajectories of the counterexample: the effective flow and
/// the limit of the split-step scheme.
Vec reference_trajectory(const ModelPreset& preset, double t, ReferenceKind kind = ReferenceKind::Effective);
Vec reference_velocity(const ModelPreset& preset, double t, ReferenceKind kind = ReferenceKind::Effective);
/// First time the reference reaches 0.
double reference_zero_time(const ModelPreset& preset, ReferenceKind kind = ReferenceKind::Effective);

/// First node time at which |u| <= tol (NaN if never).
double time_to_zero(const SchemeOutput& out, double tol = 1e-9);

/// Growth constants of the Allen-Cahn double well.
struct WellBounds {
  double c_w1 = 0.0;  // W'' >= -c_w1
  double c_w2 = 0.0;  // W >= -c_w2
  double c_w3 = 0.0;  // |W'(r)| <= c_w3 (1 + |r|^s)
  double s = 3.0;
};
WellBounds well_bounds(const ModelPreset& allen_cahn);

/// Discrete L^p / L^p* pair of the Allen-Cahn state space.
DualPairNorm state_norm(const ModelPreset& allen_cahn);

/// Random (v, xi) pairs for QYE probing of R_eff, with mixed scales.
std::vector<QyePair> qye_samples(const ModelPreset& allen_cahn, int count, std::uint64_t seed);

struct WitnessPoint {
  int n = 0;
  double lambda = 0.0;
  double xi_norm = 0.0;
  double value = 0.0;  // R_eff(lambda v) + R_eff*(xi_n)
  double ratio = 0.0;  // value / (||lambda v|| ||xi_n||_*)
};

/// QYE ratio along xi_n(x) = n sin(n^(1 - p*/2) x) with lambda_n =
/// ||xi_n||^(p*/2) and v = amplitude sin(pi x).
std::vector<WitnessPoint> qye_witness(const ModelPreset& allen_cahn, const std::vector<int>& n_list,
                                      double amplitude = 1e5);

}  // namespace splitflow
