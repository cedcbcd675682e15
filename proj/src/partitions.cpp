#include "splitflow/partitions.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace splitflow {

Partition Partition::uniform(double T, int N) {
  if (!(T > 0.0)) throw InputError("Partition: horizon must be positive");
  if (N < 1) throw InputError("Partition: need at least one step");
  std::vector<double> nodes(static_cast<std::size_t>(N) + 1);
  for (int k = 0; k <= N; ++k) nodes[static_cast<std::size_t>(k)] = T * k / N;
  nodes.back() = T;
  return Partition(std::move(nodes));
}

Partition Partition::from_nodes(std::vector<double> nodes) {
  if (nodes.size() < 2) throw InputError("Partition: need at least two nodes");
  if (nodes.front() != 0.0) throw InputError("Partition: first node must be 0");
  for (std::size_t i = 1; i < nodes.size(); ++i)
    if (!(nodes[i] > nodes[i - 1])) throw InputError("Partition: nodes must be strictly increasing");
  return Partition(std::move(nodes));
}

double Partition::midpoint(int k) const { return 0.5 * (node(k - 1) + node(k)); }
double Partition::tau(int k) const { return node(k) - node(k - 1); }

double Partition::max_step() const {
  double m = 0.0;
  for (int k = 1; k <= steps(); ++k) m = std::max(m, tau(k));
  return m;
}

int Partition::step_of(double t) const {
  if (t <= nodes_.front()) return 1;
  auto it = std::lower_bound(nodes_.begin(), nodes_.end(), t);
  if (it == nodes_.end()) return steps();
  return static_cast<int>(it - nodes_.begin());
}

int chi(const Partition& P, double t) {
  if (!(t > 0.0) || !(t < P.horizon()))
    throw InputError("chi: t must lie in the open interval (0, T)");
  const int k = P.step_of(t);
  return t <= P.midpoint(k) ? 1 : 0;
}

Grid::Grid(Partition P, int inner) : P_(std::move(P)), M_(inner) {
  if (inner < 1) throw InputError("Grid: inner factor must be >= 1");
}

double Grid::node_time(int j) const {
  const int per = 2 * M_;
  const int k = j / per;
  const int r = j % per;
  if (r == 0) return P_.node(k);
  if (r == M_) return P_.midpoint(k + 1);
  const double t0 = P_.node(k);
  return t0 + P_.tau(k + 1) * r / per;
}

int Grid::cell_of(double t) const {
  const int k = P_.step_of(t);
  const int base = 2 * M_ * (k - 1);
  // linear guess, then fix against the exact node times
  const double frac = (t - P_.node(k - 1)) / P_.tau(k);
  int c = base + std::clamp(static_cast<int>(std::ceil(frac * 2 * M_)) - 1, 0, 2 * M_ - 1);
  while (c > base && t <= cell_start(c)) --c;
  while (c < base + 2 * M_ - 1 && t > cell_end(c)) ++c;
  return c;
}

const char* to_string(InterpolantKind kind) {
  switch (kind) {
    case InterpolantKind::PiecewiseConstant: return "piecewise-constant";
    case InterpolantKind::DelayedConstant: return "delayed-constant";
    case InterpolantKind::PiecewiseLinear: return "piecewise-linear";
    case InterpolantKind::Variational: return "variational";
  }
  return "unknown";
}

SampledCurve SampledCurve::cellwise(std::shared_ptr<const Grid> grid, InterpolantKind kind,
                                    std::vector<Vec> values) {
  if (static_cast<int>(values.size()) != grid->cells())
    throw InputError("SampledCurve: cellwise curve needs one value per cell");
  SampledCurve c;
  c.grid = std::move(grid);
  c.kind = kind;
  c.layout = Layout::Cellwise;
  c.values = std::move(values);
  return c;
}

SampledCurve SampledCurve::nodal(std::shared_ptr<const Grid> grid, std::vector<Vec> values) {
  if (static_cast<int>(values.size()) != grid->nodes())
    throw InputError("SampledCurve: nodal curve needs one value per grid node");
  SampledCurve c;
  c.grid = std::move(grid);
  c.kind = InterpolantKind::PiecewiseLinear;
  c.layout = Layout::Nodal;
  c.values = std::move(values);
  return c;
}

Vec SampledCurve::at(double t) const {
  const int c = grid->cell_of(t);
  if (layout == Layout::Cellwise) return values[static_cast<std::size_t>(c)];
  const double a = grid->cell_start(c);
  const double w = grid->cell_width(c);
  const double s = std::clamp((t - a) / w, 0.0, 1.0);
  return (1.0 - s) * values[static_cast<std::size_t>(c)] + s * values[static_cast<std::size_t>(c + 1)];
}

Vec SampledCurve::cell_value(int c) const {
  if (layout == Layout::Cellwise) return values[static_cast<std::size_t>(c)];
  return 0.5 * (values[static_cast<std::size_t>(c)] + values[static_cast<std::size_t>(c + 1)]);
}

SampledCurve SampledCurve::derivative() const {
  if (layout != Layout::Nodal) throw InputError("derivative: curve is not piecewise linear");
  std::vector<Vec> d(static_cast<std::size_t>(grid->cells()));
  for (int c = 0; c < grid->cells(); ++c)
    d[static_cast<std::size_t>(c)] =
        (values[static_cast<std::size_t>(c + 1)] - values[static_cast<std::size_t>(c)]) / grid->cell_width(c);
  return cellwise(grid, InterpolantKind::PiecewiseConstant, std::move(d));
}

SampledCurve repetition_apply(int j, const SampledCurve& g) {
  if (j != 1 && j != 2) throw InputError("repetition_apply: j must be 1 or 2");
  if (g.layout != Layout::Cellwise || static_cast<int>(g.values.size()) != g.grid->cells())
    throw InputError("repetition_apply: curve is not aligned with the cell grid");
  const int M = g.grid->inner();
  SampledCurve out = g;
  for (int c = 0; c < g.grid->cells(); ++c) {
    const bool left = g.grid->cell_is_left(c);
    if (j == 1 && !left) out.values[static_cast<std::size_t>(c)] = g.values[static_cast<std::size_t>(c - M)];
    if (j == 2 && left) out.values[static_cast<std::size_t>(c)] = g.values[static_cast<std::size_t>(c + M)];
  }
  return out;
}

double integrate(const SampledCurve& curve, const TimeIntegrand& f, double s, double t) {
  if (s > t) throw InputError("integrate: s > t");
  const Grid& G = *curve.grid;
  const double T = G.partition().horizon();
  if (s < 0.0 || t > T * (1.0 + 1e-15)) throw InputError("integrate: interval outside [0, T]");
  if (s == t) return 0.0;
  double sum = 0.0;
  for (int c = s > 0.0 ? G.cell_of(s) : 0; c < G.cells(); ++c) {
    const double a = std::max(G.cell_start(c), s);
    const double b = std::min(G.cell_end(c), t);
    if (G.cell_start(c) >= t) break;
    if (b <= a) continue;
    const double mid = 0.5 * (a + b);
    Vec v;
    if (curve.layout == Layout::Cellwise) {
      v = curve.values[static_cast<std::size_t>(c)];
    } else {
      const double w = G.cell_width(c);
      const double r = (mid - G.cell_start(c)) / w;
      v = (1.0 - r) * curve.values[static_cast<std::size_t>(c)] + r * curve.values[static_cast<std::size_t>(c + 1)];
    }
    sum += (b - a) * f(mid, v);
  }
  return sum;
}

double integrate(const SampledCurve& curve, const std::function<double(const Vec&)>& f,
                 double s, double t) {
  return integrate(curve, [&](double, const Vec& v) { return f(v); }, s, t);
}

double l1_norm(const SampledCurve& curve) {
  return integrate(curve, [](const Vec& v) { return v.norm(); }, 0.0,
                   curve.grid->partition().horizon());
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_csv(const SampledCurve& curve, std::ostream& os) {
  os << "# interpolant_kind=" << to_string(curve.kind) << "\n";
  os << "# layout=" << (curve.layout == Layout::Nodal ? "nodal" : "cellwise") << "\n";
  os << "t";
  for (Index i = 0; i < curve.dim(); ++i) os << ",v_" << (i + 1);
  os << "\n";
  const Grid& G = *curve.grid;
  for (std::size_t r = 0; r < curve.values.size(); ++r) {
    const int j = static_cast<int>(r);
    os << format_double(curve.layout == Layout::Nodal ? G.node_time(j) : G.cell_end(j));
    const Vec& v = curve.values[r];
    for (Index i = 0; i < v.size(); ++i) os << "," << format_double(v[i]);
    os << "\n";
  }
}

}  // namespace splitflow
