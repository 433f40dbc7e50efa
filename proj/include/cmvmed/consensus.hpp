#pragma once

#include <cmath>

#include "cmvmed/types.hpp"

namespace cmvmed::consensus {

constexpr double kProbClamp = 1e-12;

// q(y=+1 | x_n) for each unlabeled sample; q(-1) = 1 - q(+1).
struct ConsensusDistribution {
  Vector q_plus;

  double entropy() const {
    double h = 0.0;
    for (Eigen::Index n = 0; n < q_plus.size(); ++n) {
      const double p = q_plus[n];
      h += -p * std::log(p) - (1.0 - p) * std::log(1.0 - p);
    }
    return h;
  }
};

inline double clamp_prob(double p) {
  return std::clamp(p, kProbClamp, 1.0 - kProbClamp);
}

// Information projection onto the product family: q ∝ prod_i p_i^{pi_i},
// computed in the log domain. Rows of per_view_q_plus index views.
inline ConsensusDistribution update_consensus(const Matrix& per_view_q_plus,
                                              const Vector& pi) {
  const auto n_views = per_view_q_plus.rows();
  const auto n_u = per_view_q_plus.cols();
  if (pi.size() != n_views) {
    throw InputError("update_consensus: pi size does not match view count");
  }
  if ((pi.array() < 0.0).any() || std::abs(pi.sum() - 1.0) > 1e-9) {
    throw InputError("update_consensus: pi must be nonnegative and sum to 1");
  }
  if (((per_view_q_plus.array() <= 0.0) || (per_view_q_plus.array() >= 1.0))
          .any()) {
    throw InputError("update_consensus: view probabilities must lie in (0,1)");
  }

  ConsensusDistribution out;
  out.q_plus.resize(n_u);
  for (Eigen::Index n = 0; n < n_u; ++n) {
    double log_plus = 0.0;
    double log_minus = 0.0;
    for (Eigen::Index i = 0; i < n_views; ++i) {
      const double p = clamp_prob(per_view_q_plus(i, n));
      log_plus += pi[i] * std::log(p);
      log_minus += pi[i] * std::log(1.0 - p);
    }
    // Normalize via the stable log-odds.
    out.q_plus[n] = clamp_prob(sigmoid(log_plus - log_minus));
  }
  return out;
}

inline Vector uniform_weights(int n_views) {
  return Vector::Constant(n_views, 1.0 / n_views);
}

// Logistic curvature sigma(f)(1 - sigma(f)) at each score. Independent of
// the label, so the expectation over q_t(y) leaves it unchanged.
inline Vector curvature_weights(const Vector& scores) {
  if (!scores.allFinite()) {
    throw InputError("curvature_weights: scores must be finite");
  }
  Vector nu(scores.size());
  for (Eigen::Index n = 0; n < scores.size(); ++n) {
    const double s = sigmoid(scores[n]);
    nu[n] = s * (1.0 - s);
  }
  return nu;
}

// Annealing schedule lambda_t = 1 - exp(-0.5 t); lambda_0 = 0.
inline double lambda_at(int t) {
  if (t < 0) {
    throw InputError("lambda_at: iteration index must be nonnegative");
  }
  return 1.0 - std::exp(-0.5 * t);
}

}  // namespace cmvmed::consensus
