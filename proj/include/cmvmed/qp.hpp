#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "cmvmed/types.hpp"

namespace cmvmed::qp {

// Solution of max_{0 <= alpha <= 1}  1^T alpha - (sigma2/2) alpha^T Q alpha,
// Q = K~ .* y y^T.
struct DualSolution {
  Vector alpha;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
};

inline double dual_objective(const Matrix& Q, const Vector& alpha,
                             double sigma2) {
  return alpha.sum() - 0.5 * sigma2 * alpha.dot(Q * alpha);
}

constexpr double kDegenerateDiag = 1e-12;

// Cyclic coordinate ascent; each update is the exact 1-D maximizer clipped
// to [0,1]. Converged when the largest coordinate change in a sweep < tol.
inline DualSolution solve_dual(const Matrix& k_tilde, const IntVector& y,
                               double sigma2, double tol = 1e-8,
                               int max_sweeps = -1,
                               const Vector* warm_start = nullptr) {
  const auto n = k_tilde.rows();
  if (n < 1 || k_tilde.cols() != n || y.size() != n) {
    throw InputError("solve_dual: inconsistent shapes");
  }
  if (!(sigma2 > 0.0)) {
    throw InputError("solve_dual: sigma2 must be positive");
  }
  if (max_sweeps < 0) {
    // Near-duplicate training points make Q nearly singular and the sweep
    // count grows with the condition number; sweeps are cheap at this scale.
    max_sweeps = static_cast<int>(200 * n + 20000);
  }

  Matrix Q = k_tilde.array() *
             (y.cast<double>() * y.cast<double>().transpose()).array();

  DualSolution sol;
  sol.alpha = warm_start ? *warm_start : Vector::Zero(n);
  sol.alpha = sol.alpha.cwiseMax(0.0).cwiseMin(1.0);

  Vector q_alpha = Q * sol.alpha;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index m = 0; m < n; ++m) {
      const double old = sol.alpha[m];
      const double qmm = Q(m, m);
      const double off = q_alpha[m] - qmm * old;  // sum_{j != m} Q_mj alpha_j
      double next;
      if (qmm <= kDegenerateDiag) {
        // Objective is linear in alpha_m; take the favorable box end.
        next = (1.0 - sigma2 * off) > 0.0 ? 1.0 : 0.0;
      } else {
        next = std::clamp((1.0 - sigma2 * off) / (sigma2 * qmm), 0.0, 1.0);
      }
      if (next != old) {
        q_alpha += (next - old) * Q.col(m);
        sol.alpha[m] = next;
        max_change = std::max(max_change, std::abs(next - old));
      }
    }
    ++sol.iterations;
    if (max_change < tol) {
      // Certify KKT before declaring convergence; a small coordinate step
      // does not by itself bound the gradient residual.
      Vector g = Vector::Ones(n) - sigma2 * q_alpha;
      const double s = 1.0 + g.cwiseAbs().maxCoeff();
      double violation = 0.0;
      for (Eigen::Index m = 0; m < n; ++m) {
        if (sol.alpha[m] <= 0.0) {
          violation = std::max(violation, g[m]);
        } else if (sol.alpha[m] >= 1.0) {
          violation = std::max(violation, -g[m]);
        } else {
          violation = std::max(violation, std::abs(g[m]));
        }
      }
      if (violation <= tol * s) {
        sol.converged = true;
        break;
      }
    }
  }
  sol.objective = dual_objective(Q, sol.alpha, sigma2);
  return sol;
}

// Independent oracle: projected-gradient ascent with diminishing step from
// several starts, run to stagnation. Small instances only.
inline DualSolution brute_force_dual(const Matrix& k_tilde, const IntVector& y,
                                     double sigma2, double grid_tol = 1e-10) {
  const auto n = k_tilde.rows();
  if (n > 12) {
    throw UsageError("brute_force_dual: size cap is 12, got " +
                     std::to_string(n));
  }
  if (n < 1 || k_tilde.cols() != n || y.size() != n) {
    throw InputError("brute_force_dual: inconsistent shapes");
  }

  Matrix Q = k_tilde.array() *
             (y.cast<double>() * y.cast<double>().transpose()).array();

  DualSolution best;
  best.objective = -std::numeric_limits<double>::infinity();

  const Vector starts[3] = {Vector::Zero(n), Vector::Ones(n),
                            Vector::Constant(n, 0.5)};
  for (const Vector& start : starts) {
    Vector alpha = start;
    double obj = dual_objective(Q, alpha, sigma2);
    double step = 1.0 / (1.0 + sigma2 * Q.cwiseAbs().rowwise().sum().maxCoeff());
    int iters = 0;
    for (int k = 0; k < 200000; ++k) {
      Vector grad = Vector::Ones(n) - sigma2 * (Q * alpha);
      Vector next = (alpha + step * grad).cwiseMax(0.0).cwiseMin(1.0);
      double next_obj = dual_objective(Q, next, sigma2);
      ++iters;
      if (next_obj > obj) {
        alpha = next;
        obj = next_obj;
      } else {
        step *= 0.5;  // diminishing step
        if (step * grad.cwiseAbs().maxCoeff() < grid_tol) {
          break;
        }
      }
    }
    if (obj > best.objective) {
      best.alpha = alpha;
      best.objective = obj;
      best.iterations = iters;
      best.converged = true;
    }
  }
  return best;
}

}  // namespace cmvmed::qp
