#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace cmvmed {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntVector = Eigen::VectorXi;

// Bad caller-supplied data (shapes, domains, files).
struct InputError : std::runtime_error {
  explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// API misuse (stale caches, size caps).
struct UsageError : std::logic_error {
  explicit UsageError(const std::string& msg) : std::logic_error(msg) {}
};

// Factorization/conditioning failures.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Failure inside the annealing loop; carries where it happened.
struct TrainingError : std::runtime_error {
  int view_id;
  int iteration;
  TrainingError(const std::string& msg, int view, int iter)
      : std::runtime_error(msg + " (view " + std::to_string(view) +
                           ", iteration " + std::to_string(iter) + ")"),
        view_id(view),
        iteration(iter) {}
};

inline double sigmoid(double t) {
  if (t >= 0.0) {
    return 1.0 / (1.0 + std::exp(-t));
  }
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace cmvmed
