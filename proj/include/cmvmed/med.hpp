#pragma once

#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "cmvmed/kernel.hpp"
#include "cmvmed/qp.hpp"
#include "cmvmed/types.hpp"

namespace cmvmed::med {

// Scaling of the posterior-mean score. The dual carries sigma^2/2 in its
// quadratic term; self-consistent margins (E[y f] = 1 at the unconstrained
// optimum) require the mean to carry sigma^2 as well. The literal form
// omits it. Decisions are identical either way; probabilities differ.
enum class ScoreScale { kSelfConsistent, kLiteral };

inline double score_scale_value(ScoreScale mode, double sigma2) {
  return mode == ScoreScale::kSelfConsistent ? sigma2 : 1.0;
}

// Posterior of one view's classifier: dual variables over the labeled set
// plus everything needed to evaluate K~ rows at new points. The posterior
// mean w = score_scale * sum_m y_m alpha_m Phi~(x_m) is never materialized;
// scores go through kernel inner products. Immutable once trained.
struct MedPosterior {
  int view_id = 0;
  qp::DualSolution dual;
  IntVector labels;
  double sigma2 = 1.0;
  kernel::KernelSpec spec;
  double score_scale = 1.0;
  std::shared_ptr<const kernel::GramBundle> bundle;
  Matrix x_labeled;
  Matrix x_unlabeled;  // 0 rows when lambda = 0
  Vector nu;           // curvature weights behind the bundle

  // y_m alpha_m, the fixed dual coefficient vector.
  Vector coefficients() const {
    return dual.alpha.cwiseProduct(labels.cast<double>());
  }

  // Scores at arbitrary points, one row of X per query.
  Vector decision_scores(const Eigen::Ref<const Matrix>& X) const {
    Matrix k_l = kernel::cross_gram(X, x_labeled, spec);
    Matrix k_u = x_unlabeled.rows() > 0
                     ? kernel::cross_gram(X, x_unlabeled, spec)
                     : Matrix(X.rows(), 0);
    Matrix cross = bundle->modified_cross_batch(k_l, k_u);
    return score_scale * (cross * coefficients());
  }

  double decision_score(const Eigen::Ref<const Vector>& x) const {
    return decision_scores(x.transpose())[0];
  }

  // Scores at the posterior's own labeled points, straight off K~.
  Vector labeled_scores() const {
    return score_scale * (bundle->K_tilde * coefficients());
  }

  double predictive_prob(const Eigen::Ref<const Vector>& x, int y) const {
    if (y != -1 && y != +1) {
      throw InputError("predictive_prob: label must be -1 or +1");
    }
    return sigmoid(y * decision_score(x));
  }

  int predict(const Eigen::Ref<const Vector>& x) const {
    return decision_score(x) >= 0.0 ? +1 : -1;  // tie -> +1
  }
};

namespace detail {

inline void require_both_classes(const IntVector& y) {
  bool has_pos = false, has_neg = false;
  for (Eigen::Index m = 0; m < y.size(); ++m) {
    if (y[m] == +1) {
      has_pos = true;
    } else if (y[m] == -1) {
      has_neg = true;
    } else {
      throw InputError("labels must be -1 or +1");
    }
  }
  if (!has_pos || !has_neg) {
    throw InputError("training requires both classes in the labeled set");
  }
}

}  // namespace detail

// Plain single-view MED: the lambda = 0 case, i.e. a kernel SVM over K_L.
inline MedPosterior train_single_view(const Matrix& x_labeled,
                                      const IntVector& labels,
                                      const kernel::KernelSpec& spec,
                                      double sigma2,
                                      ScoreScale mode = ScoreScale::kSelfConsistent,
                                      double qp_tol = 1e-8) {
  if (x_labeled.rows() != labels.size()) {
    throw InputError("train_single_view: feature/label row mismatch");
  }
  detail::require_both_classes(labels);

  MedPosterior post;
  post.labels = labels;
  post.sigma2 = sigma2;
  post.spec = spec;
  post.score_scale = score_scale_value(mode, sigma2);
  post.x_labeled = x_labeled;
  post.bundle = std::make_shared<kernel::GramBundle>(
      kernel::GramBundle::plain(kernel::gram(x_labeled, spec)));
  post.dual = qp::solve_dual(post.bundle->K_tilde, labels, sigma2, qp_tol);
  return post;
}

// --- text serialization -----------------------------------------------
//
// Flat key: value header followed by per-sample tables, all decimal text
// with 17 significant digits.

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_matrix(std::ostream& out, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      out << (c ? " " : "") << fmt17(m(r, c));
    }
    out << "\n";
  }
}

inline Matrix read_matrix(std::istream& in, Eigen::Index rows,
                          Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!(in >> m(r, c))) {
        throw InputError("model file: truncated matrix block");
      }
    }
  }
  return m;
}

inline double expect_key(std::istream& in, const std::string& key) {
  std::string k;
  double v;
  if (!(in >> k >> v) || k != key + ":") {
    throw InputError("model file: expected '" + key + ":' entry");
  }
  return v;
}

}  // namespace detail

inline void save(const MedPosterior& post, std::ostream& out) {
  out << "cmvmed-med: 1\n";
  out << "view_id: " << post.view_id << "\n";
  out << "gamma: " << detail::fmt17(post.spec.gamma) << "\n";
  out << "sigma2: " << detail::fmt17(post.sigma2) << "\n";
  out << "score_scale: " << detail::fmt17(post.score_scale) << "\n";
  out << "lambda: " << detail::fmt17(post.bundle->lambda) << "\n";
  out << "labeled: " << post.x_labeled.rows() << " " << post.x_labeled.cols()
      << "\n";
  out << "unlabeled: " << post.x_unlabeled.rows() << "\n";
  for (Eigen::Index m = 0; m < post.labels.size(); ++m) {
    out << post.labels[m] << " " << detail::fmt17(post.dual.alpha[m]) << "\n";
  }
  detail::write_matrix(out, post.x_labeled);
  if (post.x_unlabeled.rows() > 0) {
    for (Eigen::Index n = 0; n < post.nu.size(); ++n) {
      out << (n ? " " : "") << detail::fmt17(post.nu[n]);
    }
    out << "\n";
    detail::write_matrix(out, post.x_unlabeled);
  }
}

inline void save(const MedPosterior& post, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw InputError("cannot write " + path);
  }
  save(post, out);
}

inline MedPosterior load(std::istream& in) {
  MedPosterior post;
  if (detail::expect_key(in, "cmvmed-med") != 1) {
    throw InputError("model file: unsupported version");
  }
  post.view_id = static_cast<int>(detail::expect_key(in, "view_id"));
  post.spec = kernel::KernelSpec(detail::expect_key(in, "gamma"));
  post.sigma2 = detail::expect_key(in, "sigma2");
  post.score_scale = detail::expect_key(in, "score_scale");
  const double lambda = detail::expect_key(in, "lambda");

  std::string k;
  Eigen::Index n_l, d;
  if (!(in >> k >> n_l >> d) || k != "labeled:") {
    throw InputError("model file: expected 'labeled:' entry");
  }
  Eigen::Index n_u;
  if (!(in >> k >> n_u) || k != "unlabeled:") {
    throw InputError("model file: expected 'unlabeled:' entry");
  }

  post.labels.resize(n_l);
  post.dual.alpha.resize(n_l);
  for (Eigen::Index m = 0; m < n_l; ++m) {
    if (!(in >> post.labels[m] >> post.dual.alpha[m])) {
      throw InputError("model file: truncated alpha table");
    }
  }
  post.x_labeled = detail::read_matrix(in, n_l, d);

  Matrix k_l = kernel::gram(post.x_labeled, post.spec);
  if (n_u > 0) {
    post.nu.resize(n_u);
    for (Eigen::Index n = 0; n < n_u; ++n) {
      if (!(in >> post.nu[n])) {
        throw InputError("model file: truncated nu table");
      }
    }
    post.x_unlabeled = detail::read_matrix(in, n_u, d);
    Matrix k_u = kernel::gram(post.x_unlabeled, post.spec);
    Matrix k_ul = kernel::cross_gram(post.x_unlabeled, post.x_labeled,
                                     post.spec);
    post.bundle = std::make_shared<kernel::GramBundle>(kernel::GramBundle::build(
        std::move(k_l), std::move(k_u), std::move(k_ul), post.nu, lambda,
        post.sigma2));
  } else {
    post.x_unlabeled = Matrix(0, d);
    post.bundle = std::make_shared<kernel::GramBundle>(
        kernel::GramBundle::plain(std::move(k_l)));
  }

  Matrix Q = post.bundle->K_tilde.array() *
             (post.labels.cast<double>() * post.labels.cast<double>().transpose())
                 .array();
  post.dual.objective = qp::dual_objective(Q, post.dual.alpha, post.sigma2);
  post.dual.converged = true;
  return post;
}

inline MedPosterior load(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw InputError("cannot open " + path);
  }
  return load(in);
}

}  // namespace cmvmed::med
