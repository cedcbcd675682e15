#pragma once

// Energy-dissipation audits of scheme outputs: rate and slope terms (with
// their repetition-operator forms), the balance residual, the remainder
// term, the optimal-decomposition residuals, and convergence studies.

#include "splitflow/solvers.hpp"

#include "json.hpp"

#include <iosfwd>
#include <optional>
#include <vector>

namespace splitflow {

struct TermValue {
  /// Exact for piecewise-affine runs, midpoint quadrature otherwise.
  double value = 0.0;
  /// chi-weighted form on the cell samples.
  double cellwise = 0.0;
  /// Form through the repetition operators on the same samples.
  double repetition = 0.0;
  /// Estimated midpoint-rule error of `value`.
  double quadrature_error = 0.0;

  double mismatch() const;
};

/// int chi R~1(U') + (1 - chi) R~2(U') over [s, t] (int R_eff(U') for
/// effective runs).
TermValue rate_term(const SchemeOutput& out, const GradientSystem& sys, double s, double t);

/// int chi R~1*(-xi) + (1 - chi) R~2*(-xi) over [s, t]. With `variational`,
/// uses the forces of the variational interpolant.
TermValue slope_term(const SchemeOutput& out, const GradientSystem& sys, double s, double t,
                     bool variational = false);

enum class AuditForm { Balance, Inequality };
const char* to_string(AuditForm f);

struct DecompositionReport {
  /// ||V1 + V2 - U'||_L1 with V_j = T^(j) U' / 2.
  double defect_self = 0.0;
  /// Same against a reference derivative (when one is given).
  std::optional<double> defect_reference;
  /// int R1(V1) + R2(V2) - R_eff(V1 + V2) >= 0.
  double value_gap = 0.0;
};

struct EDBReport {
  double s = 0.0, t = 0.0;
  AuditForm form = AuditForm::Inequality;
  double energy_start = 0.0, energy_end = 0.0;
  TermValue rate, slope;
  double power_integral = 0.0;
  double residual = 0.0;
  int steps = 0;
  double tol = 0.0;
  double quadrature_error = 0.0;
  /// max(0, -lambda)/2 sum |dU|^2 for implicit runs audited without the
  /// variational interpolant.
  double convexity_defect = 0.0;
  double slack = 0.0;
  /// min over samples of R~(U') + R~*(-xi) + <xi, U'>.
  double fenchel_young_min = 0.0;
  bool variational = false;
  bool passed = false;
};

/// slack = 10 (steps * tol + quadrature error + convexity defect)
EDBReport edb_audit(const SchemeOutput& out, const GradientSystem& sys, double s, double t,
                    std::optional<AuditForm> form = std::nullopt);

/// Audits every pair of the given partition node indices.
std::vector<EDBReport> edb_audit_pairs(const SchemeOutput& out, const GradientSystem& sys,
                                       const std::vector<int>& nodes);

struct RemainderReport {
  double remainder = 0.0;
  double lambda_bound = 0.0;
};

/// (1/tau) int E(U) - E(U_delayed) - <xi, U - U_delayed> and its lambda bound.
RemainderReport remainder_term(const SchemeOutput& out, const Energy& E, double s, double t);

DecompositionReport decomposition_report(const SchemeOutput& out, const GradientSystem& sys,
                                         const SchemeOutput* reference = nullptr);

struct StudyRow {
  int N = 0;
  /// max over partition nodes of |U(t^k) - U_ref(t^k)|
  double sup_error = 0.0;
  double edb_residual = 0.0;
  double edb_slack = 0.0;
  double rate = 0.0;
  double rate_gap = 0.0;
  double slope_gap = 0.0;
  double defect = 0.0;
  double terminal_gap = 0.0;
  std::optional<double> order;
};

struct StudyOptions {
  int inner_steps = 8;
  double tol = 1e-10;
  int jobs = 1;
  /// effective reference resolution factor over the finest N
  int reference_factor = 16;
};

struct StudyResult {
  std::vector<StudyRow> rows;
  std::string reference;
};

StudyResult convergence_study(const GradientSystem& sys, const Vec& u0, double T, Scheme scheme,
                              const std::vector<int>& N_list, const StudyOptions& opt = {});

/// Runs the requested scheme (effective included) on P.
SchemeOutput run_scheme(const GradientSystem& sys, const Partition& P, const Vec& u0, Scheme scheme,
                        int inner_steps = 8, double tol = 1e-10);

nlohmann::json to_json(const EDBReport& r);
nlohmann::json to_json(const DecompositionReport& r);
nlohmann::json to_json(const RemainderReport& r);
void write_study_csv(const StudyResult& study, std::ostream& os);

}  // namespace splitflow
