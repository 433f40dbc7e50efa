#pragma once

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cmvmed/data.hpp"
#include "cmvmed/trainer.hpp"
#include "cmvmed/types.hpp"

namespace cmvmed::experiment {

struct SynthSpec {
  int n_per_class = 150;
  double noise1 = 0.6;
  double noise2 = 0.6;
  double view_agreement = 1.0;
};

struct ExperimentConfig {
  std::optional<SynthSpec> synth;       // else load from files
  std::vector<std::string> view_files;
  std::string label_file;
  bool normalize = false;

  std::vector<int> labeled_sizes = {10};
  double test_fraction = 0.3;
  int trials = 20;
  int folds = 5;
  std::vector<double> gamma_grid = {1.0};
  std::vector<double> sigma2_grid = {1.0};
  int max_iters = 10;
  std::uint64_t seed = 0;
  med::ScoreScale score_mode = med::ScoreScale::kSelfConsistent;
  int workers = 0;  // 0 -> hardware concurrency

  void validate() const {
    if (trials < 1) {
      throw InputError("config: trials must be at least 1");
    }
    if (folds < 2) {
      throw InputError("config: folds must be at least 2");
    }
    if (gamma_grid.empty() || sigma2_grid.empty()) {
      throw InputError("config: hyperparameter grids must be non-empty");
    }
    if (labeled_sizes.empty()) {
      throw InputError("config: need at least one labeled size");
    }
  }
};

// One per-view (gamma, sigma2) assignment.
struct HyperParams {
  std::vector<double> gamma;
  std::vector<double> sigma2;
};

struct ResultRow {
  int labeled_size = 0;
  std::string method;
  double mean = 0.0;
  double stddev = 0.0;
  int trials_ok = 0;
  int trials_failed = 0;
  std::vector<double> accuracies;  // per successful trial, in trial order
};

struct ResultTable {
  std::vector<ResultRow> rows;

  std::string to_text() const {
    std::ostringstream out;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-6s %-14s %10s %10s %8s %8s\n", "|L|",
                  "method", "mean", "std", "trials", "failed");
    out << buf;
    for (const auto& row : rows) {
      std::snprintf(buf, sizeof(buf), "%-6d %-14s %10.4f %10.4f %8d %8d\n",
                    row.labeled_size, row.method.c_str(), row.mean,
                    row.stddev, row.trials_ok, row.trials_failed);
      out << buf;
    }
    return out.str();
  }

  // Machine-readable record per row: labeled_size method mean std trials.
  void write_machine(const std::string& path) const {
    std::ofstream out(path);
    if (!out) {
      throw InputError("cannot write " + path);
    }
    for (const auto& row : rows) {
      out << row.labeled_size << " " << row.method << " "
          << med::detail::fmt17(row.mean) << " "
          << med::detail::fmt17(row.stddev) << " " << row.trials_ok << "\n";
    }
  }
};

namespace detail {

inline double accuracy(const IntVector& predicted, const IntVector& truth) {
  if (predicted.size() != truth.size() || truth.size() == 0) {
    throw InputError("accuracy: label vectors must be same nonzero size");
  }
  int hits = 0;
  for (Eigen::Index n = 0; n < truth.size(); ++n) {
    hits += predicted[n] == truth[n];
  }
  return static_cast<double>(hits) / truth.size();
}

inline void mean_std(const std::vector<double>& xs, double& mean,
                     double& stddev) {
  mean = 0.0;
  stddev = 0.0;
  if (xs.empty()) {
    return;
  }
  for (double x : xs) {
    mean += x;
  }
  mean /= xs.size();
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) {
      ss += (x - mean) * (x - mean);
    }
    stddev = std::sqrt(ss / (xs.size() - 1));
  }
}

// Stratified fold assignment over the labeled index list; fold of sample r.
inline std::vector<int> stratified_folds(const IntVector& y, int n_folds,
                                         std::uint64_t seed) {
  std::vector<int> neg, pos;
  for (Eigen::Index r = 0; r < y.size(); ++r) {
    (y[r] == -1 ? neg : pos).push_back(static_cast<int>(r));
  }
  std::mt19937_64 rng(seed);
  std::shuffle(neg.begin(), neg.end(), rng);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::vector<int> fold(y.size());
  int counter = 0;
  for (int r : neg) {
    fold[r] = counter++ % n_folds;
  }
  for (int r : pos) {
    fold[r] = counter++ % n_folds;
  }
  return fold;
}

}  // namespace detail

// A method arm: the full consensus model or a single view's MED baseline.
struct MethodArm {
  bool is_cmv = true;
  int view = -1;

  std::string name() const {
    return is_cmv ? "cmv-med" : "med-view" + std::to_string(view + 1);
  }
};

inline trainer::TrainConfig make_train_config(const HyperParams& hp,
                                              const ExperimentConfig& cfg) {
  trainer::TrainConfig tc;
  tc.max_iters = cfg.max_iters;
  for (std::size_t i = 0; i < hp.gamma.size(); ++i) {
    tc.specs.emplace_back(hp.gamma[i]);
    tc.sigma2.push_back(hp.sigma2[i]);
  }
  tc.score_mode = cfg.score_mode;
  return tc;
}

// Fit the arm on (L, U) of ds and score the given evaluation indices.
inline double fit_and_score(const data::MultiViewDataset& ds,
                            const MethodArm& arm, const HyperParams& hp,
                            const ExperimentConfig& cfg,
                            const std::vector<int>& eval_idx) {
  const IntVector truth = ds.labels_at(eval_idx);
  if (arm.is_cmv) {
    trainer::CmvMedModel model = trainer::train(ds, make_train_config(hp, cfg));
    std::vector<Matrix> eval_views;
    for (int i = 0; i < ds.num_views(); ++i) {
      eval_views.push_back(ds.view_rows(i, eval_idx));
    }
    return detail::accuracy(model.predict_batch(eval_views), truth);
  }
  med::MedPosterior post = med::train_single_view(
      ds.view_rows(arm.view, ds.labeled), ds.labels_at(ds.labeled),
      kernel::KernelSpec(hp.gamma[arm.view]), hp.sigma2[arm.view],
      cfg.score_mode);
  Vector f = post.decision_scores(ds.view_rows(arm.view, eval_idx));
  IntVector pred(f.size());
  for (Eigen::Index r = 0; r < f.size(); ++r) {
    pred[r] = f[r] >= 0.0 ? +1 : -1;
  }
  return detail::accuracy(pred, truth);
}

// Stratified k-fold grid search over the labeled set only; the unlabeled
// pool joins every fold's training as U, test indices are never touched.
// The grid is the Cartesian product of per-view (gamma, sigma2) choices,
// iterated in ascending lexicographic order so ties resolve toward smaller
// gamma, then smaller sigma2.
inline HyperParams cross_validate(const data::MultiViewDataset& ds,
                                  const MethodArm& arm,
                                  const ExperimentConfig& cfg,
                                  std::uint64_t seed,
                                  std::ostream* warnings = nullptr) {
  const int n_views = ds.num_views();
  if (cfg.gamma_grid.size() == 1 && cfg.sigma2_grid.size() == 1) {
    // A single grid point is returned unconditionally.
    return HyperParams{
        std::vector<double>(n_views, cfg.gamma_grid.front()),
        std::vector<double>(n_views, cfg.sigma2_grid.front())};
  }
  const IntVector y = ds.labels_at(ds.labeled);
  const int n_l = static_cast<int>(ds.labeled.size());
  if (n_l < cfg.folds) {
    throw InputError("cross_validate: labeled set of " + std::to_string(n_l) +
                     " is smaller than " + std::to_string(cfg.folds) +
                     " folds; use fewer folds");
  }

  int minority = std::min((y.array() == -1).count(), (y.array() == 1).count());
  int n_folds = std::min(cfg.folds, std::max(2, minority));
  if (n_folds < cfg.folds && warnings) {
    *warnings << "warning: reducing folds from " << cfg.folds << " to "
              << n_folds << " (smaller class has " << minority
              << " labeled samples)\n";
  }
  const std::vector<int> fold = detail::stratified_folds(y, n_folds, seed);

  // Enumerate per-view assignments; gammas vary before sigma2 so the
  // lexicographic key is (gamma_1..gamma_V, sigma2_1..sigma2_V).
  std::vector<double> gammas = cfg.gamma_grid;
  std::vector<double> sigmas = cfg.sigma2_grid;
  std::sort(gammas.begin(), gammas.end());
  std::sort(sigmas.begin(), sigmas.end());

  const int active_views = arm.is_cmv ? n_views : 1;
  std::vector<HyperParams> grid;
  std::vector<int> g_idx(active_views, 0), s_idx(active_views, 0);
  auto emit = [&]() {
    HyperParams hp;
    hp.gamma.assign(n_views, gammas[0]);
    hp.sigma2.assign(n_views, sigmas[0]);
    for (int v = 0; v < active_views; ++v) {
      const int target = arm.is_cmv ? v : arm.view;
      hp.gamma[target] = gammas[g_idx[v]];
      hp.sigma2[target] = sigmas[s_idx[v]];
    }
    grid.push_back(std::move(hp));
  };
  // Odometer over gamma indices (most significant) then sigma indices.
  std::vector<int> odo(2 * active_views, 0);
  while (true) {
    for (int v = 0; v < active_views; ++v) {
      g_idx[v] = odo[v];
      s_idx[v] = odo[active_views + v];
    }
    emit();
    int pos = 2 * active_views - 1;
    while (pos >= 0) {
      const int limit = pos < active_views ? static_cast<int>(gammas.size())
                                           : static_cast<int>(sigmas.size());
      if (++odo[pos] < limit) {
        break;
      }
      odo[pos--] = 0;
    }
    if (pos < 0) {
      break;
    }
  }

  HyperParams best = grid.front();
  double best_acc = -1.0;
  for (const HyperParams& hp : grid) {
    double acc_sum = 0.0;
    for (int f = 0; f < n_folds; ++f) {
      data::MultiViewDataset fold_ds;
      fold_ds.views = ds.views;
      fold_ds.labels = ds.labels;
      std::vector<int> held_out;
      for (int r = 0; r < n_l; ++r) {
        (fold[r] == f ? held_out : fold_ds.labeled).push_back(ds.labeled[r]);
      }
      fold_ds.unlabeled = ds.unlabeled;
      fold_ds.test = held_out;
      acc_sum += fit_and_score(fold_ds, arm, hp, cfg, held_out);
    }
    const double acc = acc_sum / n_folds;
    if (acc > best_acc) {  // strict: first (smallest) grid point wins ties
      best_acc = acc;
      best = hp;
    }
  }
  return best;
}

inline data::MultiViewDataset materialize_dataset(const ExperimentConfig& cfg) {
  data::MultiViewDataset ds;
  if (cfg.synth) {
    ds = data::synth_two_view(cfg.synth->n_per_class, cfg.synth->noise1,
                              cfg.synth->noise2, cfg.synth->view_agreement,
                              cfg.seed);
  } else {
    ds = data::load(cfg.view_files, cfg.label_file);
  }
  if (cfg.normalize) {
    ds = data::length_normalize(ds);
  }
  return ds;
}

// Repeated-trial protocol for one labeled size: per trial, re-split with a
// seed derived from the master seed, CV-select hyperparameters per arm on
// the labeled folds only, train, and score the held-out test set. Trials
// run on a bounded worker pool; aggregation happens after the join.
inline ResultTable run_trials(const ExperimentConfig& cfg, int labeled_size,
                              const data::MultiViewDataset& base,
                              std::ostream* warnings = nullptr) {
  cfg.validate();
  const int n_views = base.num_views();

  std::vector<MethodArm> arms;
  arms.push_back({true, -1});
  for (int i = 0; i < n_views; ++i) {
    arms.push_back({false, i});
  }

  struct TrialResult {
    std::vector<double> acc;  // per arm
    bool ok = false;
    std::string error;
  };
  std::vector<TrialResult> results(cfg.trials);

  auto run_one = [&](int trial) {
    TrialResult& out = results[trial];
    try {
      const std::uint64_t trial_seed = cfg.seed + trial;
      data::MultiViewDataset ds =
          data::split(base, labeled_size, cfg.test_fraction, trial_seed);
      for (const MethodArm& arm : arms) {
        HyperParams hp = cross_validate(ds, arm, cfg, trial_seed, nullptr);
        out.acc.push_back(fit_and_score(ds, arm, hp, cfg, ds.test));
      }
      out.ok = true;
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  };

  int workers = cfg.workers > 0
                    ? cfg.workers
                    : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, cfg.trials);
  if (workers <= 1) {
    for (int trial = 0; trial < cfg.trials; ++trial) {
      run_one(trial);
    }
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int trial = next.fetch_add(1); trial < cfg.trials;
             trial = next.fetch_add(1)) {
          run_one(trial);
        }
      });
    }
    for (auto& th : pool) {
      th.join();
    }
  }

  ResultTable table;
  for (std::size_t a = 0; a < arms.size(); ++a) {
    ResultRow row;
    row.labeled_size = labeled_size;
    row.method = arms[a].name();
    for (int trial = 0; trial < cfg.trials; ++trial) {
      if (results[trial].ok) {
        row.accuracies.push_back(results[trial].acc[a]);
      } else {
        ++row.trials_failed;
        if (warnings && a == 0) {
          *warnings << "warning: trial " << trial
                    << " failed: " << results[trial].error << "\n";
        }
      }
    }
    row.trials_ok = static_cast<int>(row.accuracies.size());
    detail::mean_std(row.accuracies, row.mean, row.stddev);
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline ResultTable run_trials(const ExperimentConfig& cfg,
                              std::ostream* warnings = nullptr) {
  cfg.validate();
  return run_trials(cfg, cfg.labeled_sizes.front(), materialize_dataset(cfg),
                    warnings);
}

// One run_trials per labeled size over a fixed base dataset; rows carry
// their |L| so the table is directly plot-ready.
inline ResultTable sweep_labeled_size(const ExperimentConfig& cfg,
                                      std::ostream* warnings = nullptr) {
  cfg.validate();
  const data::MultiViewDataset base = materialize_dataset(cfg);
  ResultTable table;
  for (int labeled_size : cfg.labeled_sizes) {
    ResultTable part = run_trials(cfg, labeled_size, base, warnings);
    table.rows.insert(table.rows.end(), part.rows.begin(), part.rows.end());
  }
  return table;
}

}  // namespace cmvmed::experiment
