#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace splitflow {

/// Malformed input: wrong dimension, unordered nodes, empty samples.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Inconsistent configuration: singular metric, invalid model parameter.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An inner iterative solve failed to reach its tolerance.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, Eigen::VectorXd best_iterate,
                 double gap, int iterations)
      : std::runtime_error(what),
        best_iterate_(std::move(best_iterate)),
        gap_(gap),
        iterations_(iterations) {}

  const Eigen::VectorXd& best_iterate() const { return best_iterate_; }
  /// Duality gap or residual norm at the best iterate.
  double gap() const { return gap_; }
  int iterations() const { return iterations_; }

 private:
  Eigen::VectorXd best_iterate_;
  double gap_;
  int iterations_;
};

inline void require_dim(const Eigen::VectorXd& v, Eigen::Index n,
                        const char* what) {
  if (v.size() != n) {
    throw InputError(std::string(what) + ": expected dimension " +
                     std::to_string(n) + ", got " + std::to_string(v.size()));
  }
}

}  // namespace splitflow
