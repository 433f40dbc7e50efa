#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <vector>

#include "cmvmed/consensus.hpp"
#include "cmvmed/data.hpp"
#include "cmvmed/med.hpp"
#include "cmvmed/types.hpp"

namespace cmvmed::trainer {

struct TrainConfig {
  int max_iters = 10;
  std::vector<double> sigma2;               // one per view
  std::vector<kernel::KernelSpec> specs;    // one per view
  Vector pi;                                // empty -> uniform
  med::ScoreScale score_mode = med::ScoreScale::kSelfConsistent;
  double qp_tol = 1e-8;
  double early_stop_tol = 1e-6;             // max-norm alpha change
  std::uint64_t seed = 0;                   // recorded in saved models
  bool parallel_views = true;

  Vector view_weights(int n_views) const {
    if (pi.size() == 0) {
      return consensus::uniform_weights(n_views);
    }
    if (pi.size() != n_views) {
      throw InputError("TrainConfig: pi size does not match view count");
    }
    return pi;
  }
};

struct ObjectiveBreakdown {
  double hinge = 0.0;
  double prior_kl = 0.0;      // lambda-weighted
  double consensus_kl = 0.0;  // lambda-weighted
  double total() const { return hinge + prior_kl + consensus_kl; }
};

struct IterationRecord {
  int t = 0;
  double lambda = 0.0;
  ObjectiveBreakdown objective;
  std::vector<double> dual_objectives;
  double consensus_entropy = 0.0;
};

struct PredictScore {
  Vector per_view_scores;
  double q_plus = 0.5;
  double combined_plus = 0.0;   // q(+1) * (1/2)(+1) * sum_i f_i
  double combined_minus = 0.0;  // q(-1) * (1/2)(-1) * sum_i f_i
  int label = +1;
};

struct CmvMedModel {
  std::vector<med::MedPosterior> views;
  consensus::ConsensusDistribution consensus;  // over U, final models
  std::vector<IterationRecord> history;
  Vector pi;
  std::uint64_t seed = 0;

  int num_views() const { return static_cast<int>(views.size()); }

  // Step-3 prediction: the consensus argmax over y of q(y|x) * E[F] reduces
  // to the sign of the summed per-view scores (q > 0); both routes are
  // computed and cross-checked.
  PredictScore predict_score(const std::vector<Vector>& x) const {
    if (static_cast<int>(x.size()) != num_views()) {
      throw InputError("predict: expected " + std::to_string(num_views()) +
                       " views, got " + std::to_string(x.size()));
    }
    PredictScore out;
    out.per_view_scores.resize(num_views());
    Matrix probs(num_views(), 1);
    for (int i = 0; i < num_views(); ++i) {
      out.per_view_scores[i] = views[i].decision_score(x[i]);
      probs(i, 0) = consensus::clamp_prob(sigmoid(out.per_view_scores[i]));
    }
    out.q_plus = consensus::update_consensus(probs, pi).q_plus[0];

    const double f_sum = out.per_view_scores.sum();
    out.combined_plus = out.q_plus * 0.5 * f_sum;
    out.combined_minus = (1.0 - out.q_plus) * -0.5 * f_sum;
    const int by_argmax = out.combined_plus >= out.combined_minus ? +1 : -1;
    const int by_sign = f_sum >= 0.0 ? +1 : -1;
    if (by_argmax != by_sign) {
      throw NumericalError("predict: consensus argmax disagrees with score sign");
    }
    out.label = by_sign;
    return out;
  }

  int predict(const std::vector<Vector>& x) const {
    return predict_score(x).label;
  }

  // Summed per-view scores for each multi-view row set; sign gives labels.
  Vector combined_scores(const std::vector<Matrix>& view_rows) const {
    if (static_cast<int>(view_rows.size()) != num_views()) {
      throw InputError("predict: wrong number of views");
    }
    Vector total = Vector::Zero(view_rows[0].rows());
    for (int i = 0; i < num_views(); ++i) {
      total += views[i].decision_scores(view_rows[i]);
    }
    return total;
  }

  IntVector predict_batch(const std::vector<Matrix>& view_rows) const {
    Vector f = combined_scores(view_rows);
    IntVector labels(f.size());
    for (Eigen::Index r = 0; r < f.size(); ++r) {
      labels[r] = f[r] >= 0.0 ? +1 : -1;
    }
    return labels;
  }
};

namespace detail {

inline double bernoulli_kl(double q, double p) {
  q = consensus::clamp_prob(q);
  p = consensus::clamp_prob(p);
  return q * std::log(q / p) + (1.0 - q) * std::log((1.0 - q) / (1.0 - p));
}

}  // namespace detail

// Objective diagnostic: hinge on labeled posterior-mean margins, plus the
// lambda-weighted prior KL in alpha form (covariance terms omitted; only
// differences across iterations are meaningful), plus the lambda-weighted
// consensus disagreement with posterior means plugged into each p_i.
inline ObjectiveBreakdown objective(
    const std::vector<med::MedPosterior>& posteriors,
    const consensus::ConsensusDistribution& q,
    const std::vector<Vector>& unlabeled_scores, double lambda,
    const Vector& pi) {
  ObjectiveBreakdown out;
  for (std::size_t i = 0; i < posteriors.size(); ++i) {
    const auto& post = posteriors[i];
    Vector margins =
        post.labels.cast<double>().cwiseProduct(post.labeled_scores());
    out.hinge += (1.0 - margins.array()).max(0.0).sum();

    Matrix Q = post.bundle->K_tilde.array() *
               (post.labels.cast<double>() *
                post.labels.cast<double>().transpose())
                   .array();
    out.prior_kl += lambda * pi[i] * (post.score_scale / (2.0 * post.sigma2)) *
                    post.dual.alpha.dot(Q * post.dual.alpha);

    for (Eigen::Index n = 0; n < q.q_plus.size(); ++n) {
      const double p_i = sigmoid(unlabeled_scores[i][n]);
      out.consensus_kl +=
          lambda * pi[i] * detail::bernoulli_kl(q.q_plus[n], p_i);
    }
  }
  return out;
}

// Deterministic-annealing EM. Iteration 0 trains each view with lambda = 0;
// each subsequent iteration scores U with the previous posteriors, updates
// the consensus, rebuilds K~ per view with the annealed lambda and re-solves
// the dual. Per-view solves write disjoint slots and may run concurrently.
inline CmvMedModel train(const data::MultiViewDataset& ds,
                         const TrainConfig& config) {
  const int n_views = ds.num_views();
  if (n_views < 1) {
    throw InputError("train: dataset has no views");
  }
  if (static_cast<int>(config.sigma2.size()) != n_views ||
      static_cast<int>(config.specs.size()) != n_views) {
    throw InputError("train: config must carry sigma2 and kernel spec per view");
  }
  if (config.max_iters < 0) {
    throw InputError("train: max_iters must be nonnegative");
  }

  CmvMedModel model;
  model.pi = config.view_weights(n_views);
  model.seed = config.seed;

  const IntVector y = ds.labels_at(ds.labeled);
  med::detail::require_both_classes(y);

  std::vector<Matrix> x_l(n_views), x_u(n_views);
  std::vector<Matrix> k_l(n_views), k_u(n_views), k_ul(n_views);
  const Eigen::Index n_u = static_cast<Eigen::Index>(ds.unlabeled.size());
  for (int i = 0; i < n_views; ++i) {
    x_l[i] = ds.view_rows(i, ds.labeled);
    x_u[i] = ds.view_rows(i, ds.unlabeled);
    k_l[i] = kernel::gram(x_l[i], config.specs[i]);
    if (n_u > 0) {
      k_u[i] = kernel::gram(x_u[i], config.specs[i]);
      k_ul[i] = kernel::cross_gram(x_u[i], x_l[i], config.specs[i]);
    } else {
      k_u[i] = Matrix(0, 0);
      k_ul[i] = Matrix(0, x_l[i].rows());
    }
  }

  // Iteration 0: V independent MEDs.
  model.views.resize(n_views);
  for (int i = 0; i < n_views; ++i) {
    auto& post = model.views[i];
    post.view_id = i;
    post.labels = y;
    post.sigma2 = config.sigma2[i];
    post.spec = config.specs[i];
    post.score_scale = med::score_scale_value(config.score_mode, post.sigma2);
    post.x_labeled = x_l[i];
    post.x_unlabeled = Matrix(0, x_l[i].cols());
    post.bundle = std::make_shared<kernel::GramBundle>(
        kernel::GramBundle::plain(k_l[i]));
    post.dual = qp::solve_dual(post.bundle->K_tilde, y, post.sigma2,
                               config.qp_tol);
    if (!post.dual.converged) {
      throw TrainingError("dual solver did not converge", i, 0);
    }
  }

  auto score_unlabeled = [&](const std::vector<med::MedPosterior>& posts) {
    std::vector<Vector> scores(n_views);
    for (int i = 0; i < n_views; ++i) {
      if (n_u > 0) {
        Matrix cross = posts[i].bundle->modified_cross_batch(
            k_ul[i], posts[i].x_unlabeled.rows() > 0 ? k_u[i]
                                                     : Matrix(n_u, 0));
        scores[i] = posts[i].score_scale * (cross * posts[i].coefficients());
      } else {
        scores[i] = Vector(0);
      }
    }
    return scores;
  };

  auto record = [&](int t, double lambda,
                    const std::vector<Vector>& scores,
                    const consensus::ConsensusDistribution& q) {
    IterationRecord rec;
    rec.t = t;
    rec.lambda = lambda;
    rec.objective = objective(model.views, q, scores, lambda, model.pi);
    for (int i = 0; i < n_views; ++i) {
      rec.dual_objectives.push_back(model.views[i].dual.objective);
    }
    rec.consensus_entropy = q.entropy();
    model.history.push_back(std::move(rec));
  };

  auto consensus_from = [&](const std::vector<Vector>& scores) {
    Matrix probs(n_views, n_u);
    for (int i = 0; i < n_views; ++i) {
      for (Eigen::Index n = 0; n < n_u; ++n) {
        probs(i, n) = consensus::clamp_prob(sigmoid(scores[i][n]));
      }
    }
    return consensus::update_consensus(probs, model.pi);
  };

  std::vector<Vector> scores = score_unlabeled(model.views);
  model.consensus = n_u > 0 ? consensus_from(scores)
                            : consensus::ConsensusDistribution{Vector(0)};
  record(0, 0.0, scores, model.consensus);

  // With no unlabeled pool the coupling term has zero rows and K~ = K_L at
  // every t; the t=0 models already are the fixed point.
  const int effective_iters = n_u > 0 ? config.max_iters : 0;

  for (int t = 1; t <= effective_iters; ++t) {
    const double lambda = consensus::lambda_at(t);

    // Step 2(a): barrier — all t-1 scores precede the consensus update.
    model.consensus = consensus_from(scores);

    // Step 2(b): per-view rebuild + dual solve, independent across views.
    std::vector<med::MedPosterior> next(n_views);
    auto solve_view = [&](int i) {
      Vector nu = n_u > 0 ? consensus::curvature_weights(scores[i])
                          : Vector(0);
      med::MedPosterior post;
      post.view_id = i;
      post.labels = y;
      post.sigma2 = config.sigma2[i];
      post.spec = config.specs[i];
      post.score_scale =
          med::score_scale_value(config.score_mode, post.sigma2);
      post.x_labeled = x_l[i];
      post.x_unlabeled = x_u[i];
      post.nu = nu;
      post.bundle = std::make_shared<kernel::GramBundle>(
          kernel::GramBundle::build(k_l[i], k_u[i], k_ul[i], nu, lambda,
                                    post.sigma2));
      post.dual = qp::solve_dual(post.bundle->K_tilde, y, post.sigma2,
                                 config.qp_tol, -1,
                                 &model.views[i].dual.alpha);
      next[i] = std::move(post);
    };

    if (config.parallel_views && n_views > 1) {
      std::vector<std::future<void>> tasks;
      for (int i = 0; i < n_views; ++i) {
        tasks.push_back(std::async(std::launch::async, solve_view, i));
      }
      for (auto& task : tasks) {
        task.get();
      }
    } else {
      for (int i = 0; i < n_views; ++i) {
        solve_view(i);
      }
    }
    for (int i = 0; i < n_views; ++i) {
      if (!next[i].dual.converged) {
        throw TrainingError("dual solver did not converge", i, t);
      }
    }

    double alpha_change = 0.0;
    for (int i = 0; i < n_views; ++i) {
      alpha_change = std::max(alpha_change,
                              (next[i].dual.alpha - model.views[i].dual.alpha)
                                  .cwiseAbs()
                                  .maxCoeff());
    }
    model.views = std::move(next);

    scores = score_unlabeled(model.views);
    record(t, lambda, scores, model.consensus);

    if (alpha_change < config.early_stop_tol) {
      break;
    }
  }

  if (n_u > 0) {
    model.consensus = consensus_from(scores);
  }
  return model;
}

// --- model persistence --------------------------------------------------
//
// A directory holding one med serialization per view plus a manifest with
// weights, history, and the final consensus, all decimal text.

inline void save(const CmvMedModel& model, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (int i = 0; i < model.num_views(); ++i) {
    med::save(model.views[i], (fs::path(dir) / ("view" + std::to_string(i) +
                                                ".med")).string());
  }
  std::ofstream out(fs::path(dir) / "manifest.txt");
  if (!out) {
    throw InputError("cannot write manifest in " + dir);
  }
  out << "cmvmed-model: 1\n";
  out << "views: " << model.num_views() << "\n";
  out << "seed: " << model.seed << "\n";
  out << "pi:";
  for (Eigen::Index i = 0; i < model.pi.size(); ++i) {
    out << " " << med::detail::fmt17(model.pi[i]);
  }
  out << "\n";
  out << "history: " << model.history.size() << "\n";
  for (const auto& rec : model.history) {
    out << rec.t << " " << med::detail::fmt17(rec.lambda) << " "
        << med::detail::fmt17(rec.objective.hinge) << " "
        << med::detail::fmt17(rec.objective.prior_kl) << " "
        << med::detail::fmt17(rec.objective.consensus_kl) << " "
        << med::detail::fmt17(rec.consensus_entropy);
    for (double d : rec.dual_objectives) {
      out << " " << med::detail::fmt17(d);
    }
    out << "\n";
  }
  out << "consensus: " << model.consensus.q_plus.size() << "\n";
  for (Eigen::Index n = 0; n < model.consensus.q_plus.size(); ++n) {
    out << med::detail::fmt17(model.consensus.q_plus[n]) << "\n";
  }
}

inline CmvMedModel load(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "manifest.txt");
  if (!in) {
    throw InputError("cannot open manifest in " + dir);
  }
  CmvMedModel model;
  std::string key;
  int version, n_views;
  if (!(in >> key >> version) || key != "cmvmed-model:" || version != 1) {
    throw InputError("manifest: unsupported format");
  }
  if (!(in >> key >> n_views) || key != "views:") {
    throw InputError("manifest: expected 'views:' entry");
  }
  if (!(in >> key >> model.seed) || key != "seed:") {
    throw InputError("manifest: expected 'seed:' entry");
  }
  if (!(in >> key) || key != "pi:") {
    throw InputError("manifest: expected 'pi:' entry");
  }
  model.pi.resize(n_views);
  for (int i = 0; i < n_views; ++i) {
    in >> model.pi[i];
  }
  std::size_t n_hist;
  if (!(in >> key >> n_hist) || key != "history:") {
    throw InputError("manifest: expected 'history:' entry");
  }
  for (std::size_t h = 0; h < n_hist; ++h) {
    IterationRecord rec;
    in >> rec.t >> rec.lambda >> rec.objective.hinge >>
        rec.objective.prior_kl >> rec.objective.consensus_kl >>
        rec.consensus_entropy;
    rec.dual_objectives.resize(n_views);
    for (int i = 0; i < n_views; ++i) {
      in >> rec.dual_objectives[i];
    }
    model.history.push_back(std::move(rec));
  }
  Eigen::Index n_consensus;
  if (!(in >> key >> n_consensus) || key != "consensus:") {
    throw InputError("manifest: expected 'consensus:' entry");
  }
  model.consensus.q_plus.resize(n_consensus);
  for (Eigen::Index n = 0; n < n_consensus; ++n) {
    in >> model.consensus.q_plus[n];
  }
  if (!in) {
    throw InputError("manifest: truncated file");
  }
  for (int i = 0; i < n_views; ++i) {
    model.views.push_back(med::load(
        (fs::path(dir) / ("view" + std::to_string(i) + ".med")).string()));
  }
  return model;
}

}  // namespace cmvmed::trainer
