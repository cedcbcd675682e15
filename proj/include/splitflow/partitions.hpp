#pragma once

// Time partitions 0 = t^0 < ... < t^N = T, their left/right semi-intervals,
// a refined sampling grid (M cells per semi-interval), sampled curves on that
// grid, the repetition operators T1/T2 and midpoint quadrature.

#include "splitflow/errors.hpp"

#include <Eigen/Dense>

#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace splitflow {

using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

class Partition {
 public:
  static Partition uniform(double T, int N);
  static Partition from_nodes(std::vector<double> nodes);

  int steps() const { return static_cast<int>(nodes_.size()) - 1; }
  double horizon() const { return nodes_.back(); }
  const std::vector<double>& nodes() const { return nodes_; }
  /// t^k, k = 0..N
  double node(int k) const { return nodes_[static_cast<std::size_t>(k)]; }
  /// t^{k-1/2}, k = 1..N
  double midpoint(int k) const;
  /// tau_k = t^k - t^{k-1}, k = 1..N
  double tau(int k) const;
  double max_step() const;
  /// k with t in (t^{k-1}, t^k]; t = 0 maps to 1.
  int step_of(double t) const;

 private:
  explicit Partition(std::vector<double> nodes) : nodes_(std::move(nodes)) {}
  std::vector<double> nodes_;
};

/// 1 on left semi-intervals (t^{k-1}, t^{k-1/2}], 0 on right ones.
int chi(const Partition& P, double t);

/// Refinement of a partition with M equal cells per semi-interval. Cell c
/// lies in step k = c / (2M) + 1, in the right half iff (c / M) is odd.
class Grid {
 public:
  Grid(Partition P, int inner);

  const Partition& partition() const { return P_; }
  int inner() const { return M_; }
  int cells() const { return 2 * M_ * P_.steps(); }
  int nodes() const { return cells() + 1; }

  double node_time(int j) const;
  double cell_start(int c) const { return node_time(c); }
  double cell_end(int c) const { return node_time(c + 1); }
  double cell_mid(int c) const { return 0.5 * (cell_start(c) + cell_end(c)); }
  double cell_width(int c) const { return cell_end(c) - cell_start(c); }

  /// 1-based step of the cell
  int cell_step(int c) const { return c / (2 * M_) + 1; }
  bool cell_is_left(int c) const { return (c / M_) % 2 == 0; }
  /// Grid node index of t^k and t^{k-1/2}.
  int node_index(int k) const { return 2 * M_ * k; }
  int midpoint_index(int k) const { return 2 * M_ * (k - 1) + M_; }
  /// Cell containing t, right-closed: (start, end].
  int cell_of(double t) const;

 private:
  Partition P_;
  int M_;
};

enum class InterpolantKind { PiecewiseConstant, DelayedConstant, PiecewiseLinear, Variational };
const char* to_string(InterpolantKind kind);

/// Cellwise: one value per grid cell (held on the right-closed cell).
/// Nodal: one value per grid node, linear in between.
enum class Layout { Cellwise, Nodal };

struct SampledCurve {
  std::shared_ptr<const Grid> grid;
  InterpolantKind kind = InterpolantKind::PiecewiseConstant;
  Layout layout = Layout::Cellwise;
  std::vector<Vec> values;

  static SampledCurve cellwise(std::shared_ptr<const Grid> grid, InterpolantKind kind,
                               std::vector<Vec> values);
  static SampledCurve nodal(std::shared_ptr<const Grid> grid, std::vector<Vec> values);

  Index dim() const { return values.empty() ? 0 : values.front().size(); }
  /// Value at time t (cellwise: right-closed cells; nodal: linear).
  Vec at(double t) const;
  /// Value at the midpoint of cell c.
  Vec cell_value(int c) const;
  /// Cellwise derivative of a nodal curve.
  SampledCurve derivative() const;
};

/// T^(1) copies each left semi-interval onto the following right one;
/// T^(2) copies each right semi-interval onto the preceding left one.
SampledCurve repetition_apply(int j, const SampledCurve& g);

using TimeIntegrand = std::function<double(double t, const Vec& v)>;

/// Composite midpoint rule on the sampling grid over [s, t]; partial cells
/// are split exactly at s and t.
double integrate(const SampledCurve& curve, const TimeIntegrand& f, double s, double t);
double integrate(const SampledCurve& curve, const std::function<double(const Vec&)>& f,
                 double s, double t);

/// L^1 norm with the Euclidean pointwise norm.
double l1_norm(const SampledCurve& curve);

/// "# interpolant_kind=...", "# layout=...", header t,v_1..v_n, then rows with
/// 17 significant digits. Cellwise rows carry the cell end time.
void write_csv(const SampledCurve& curve, std::ostream& os);
std::string format_double(double x);

}  // namespace splitflow
