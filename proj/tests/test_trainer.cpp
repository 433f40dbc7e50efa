#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "cmvmed/trainer.hpp"

using namespace cmvmed;

namespace {

trainer::TrainConfig basic_config(int T, double gamma = 1.0,
                                  double sigma2 = 1.0) {
  trainer::TrainConfig cfg;
  cfg.max_iters = T;
  cfg.specs = {kernel::KernelSpec(gamma), kernel::KernelSpec(gamma)};
  cfg.sigma2 = {sigma2, sigma2};
  return cfg;
}

std::vector<Vector> test_point(const data::MultiViewDataset& ds, int idx) {
  std::vector<Vector> x;
  for (int v = 0; v < ds.num_views(); ++v) {
    x.push_back(ds.views[v].row(idx));
  }
  return x;
}

}  // namespace

TEST_CASE("T = 0 reduces to independent single-view MEDs") {
  auto ds = data::split(data::synth_two_view(30, 0.7, 0.9, 0.9, 3), 10, 0.3, 3);
  auto model = trainer::train(ds, basic_config(0));
  REQUIRE(model.history.size() == 1);

  for (int v = 0; v < 2; ++v) {
    auto standalone = med::train_single_view(
        ds.view_rows(v, ds.labeled), ds.labels_at(ds.labeled),
        kernel::KernelSpec(1.0), 1.0);
    CHECK(model.views[v].dual.alpha == standalone.dual.alpha);
    for (int idx : ds.test) {
      CHECK(model.views[v].predict(ds.views[v].row(idx)) ==
            standalone.predict(ds.views[v].row(idx)));
    }
  }
}

TEST_CASE("empty unlabeled pool: every iteration reproduces t = 0") {
  auto ds = data::synth_two_view(12, 0.5, 0.5, 1.0, 8);
  for (int n = 0; n < ds.num_samples(); ++n) {
    ds.labeled.push_back(n);
  }
  auto base = trainer::train(ds, basic_config(0));
  auto looped = trainer::train(ds, basic_config(6));
  for (int v = 0; v < 2; ++v) {
    CHECK(looped.views[v].dual.alpha == base.views[v].dual.alpha);
  }
}

TEST_CASE("separable blobs are classified perfectly after annealing") {
  auto ds = data::split(data::synth_two_view(160, 0.15, 0.15, 1.0, 11),
                        10, 0.3, 11);
  REQUIRE(ds.unlabeled.size() >= 200);
  auto model = trainer::train(ds, basic_config(5));

  std::vector<Matrix> test_views;
  for (int v = 0; v < 2; ++v) {
    test_views.push_back(ds.view_rows(v, ds.test));
  }
  IntVector pred = model.predict_batch(test_views);
  IntVector truth = ds.labels_at(ds.test);
  CHECK(pred == truth);
}

TEST_CASE("history carries the exact annealing trace") {
  auto ds = data::split(data::synth_two_view(30, 0.6, 0.6, 1.0, 5), 8, 0.25, 5);
  trainer::TrainConfig cfg = basic_config(4);
  cfg.early_stop_tol = 0.0;  // force the full schedule
  auto model = trainer::train(ds, cfg);
  REQUIRE(model.history.size() == 5);
  for (int t = 0; t <= 4; ++t) {
    CHECK(model.history[t].t == t);
    CHECK(model.history[t].lambda == consensus::lambda_at(t));
    if (t > 0) {
      CHECK(model.history[t].lambda > model.history[t - 1].lambda);
    }
    CHECK(model.history[t].dual_objectives.size() == 2);
  }
}

TEST_CASE("objective diagnostic closed forms") {
  auto ds = data::split(data::synth_two_view(20, 0.5, 0.5, 1.0, 6), 6, 0.25, 6);
  auto model = trainer::train(ds, basic_config(0));

  // All alpha = 0, lambda = 0: every hinge sits at 1, KL terms vanish.
  auto zeroed = model.views;
  for (auto& post : zeroed) {
    post.dual.alpha.setZero();
  }
  const Eigen::Index n_u = static_cast<Eigen::Index>(ds.unlabeled.size());
  std::vector<Vector> zero_scores = {Vector::Zero(n_u), Vector::Zero(n_u)};
  consensus::ConsensusDistribution uniform{Vector::Constant(n_u, 0.5)};
  auto breakdown =
      trainer::objective(zeroed, uniform, zero_scores, 0.0, model.pi);
  CHECK_THAT(breakdown.total(),
             Catch::Matchers::WithinAbs(2.0 * ds.labeled.size(), 1e-12));

  // Consensus equal to every view's predictive: disagreement term is zero.
  Vector shared_scores(n_u);
  for (Eigen::Index n = 0; n < n_u; ++n) {
    shared_scores[n] = 0.3 * (n % 5) - 0.6;
  }
  consensus::ConsensusDistribution agreeing;
  agreeing.q_plus.resize(n_u);
  for (Eigen::Index n = 0; n < n_u; ++n) {
    agreeing.q_plus[n] = sigmoid(shared_scores[n]);
  }
  std::vector<Vector> shared = {shared_scores, shared_scores};
  auto agree_breakdown =
      trainer::objective(model.views, agreeing, shared, 0.7, model.pi);
  CHECK_THAT(agree_breakdown.consensus_kl,
             Catch::Matchers::WithinAbs(0.0, 1e-10));

  // Random consensus: third term matches a direct double-loop summation.
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> unif(0.05, 0.95);
  consensus::ConsensusDistribution q;
  q.q_plus.resize(n_u);
  std::vector<Vector> scores(2, Vector(n_u));
  for (Eigen::Index n = 0; n < n_u; ++n) {
    q.q_plus[n] = unif(rng);
    scores[0][n] = 2.0 * unif(rng) - 1.0;
    scores[1][n] = 2.0 * unif(rng) - 1.0;
  }
  const double lambda = 0.55;
  auto got = trainer::objective(model.views, q, scores, lambda, model.pi);
  double direct = 0.0;
  for (int i = 0; i < 2; ++i) {
    for (Eigen::Index n = 0; n < n_u; ++n) {
      for (int y : {+1, -1}) {
        const double qy = y == +1 ? q.q_plus[n] : 1.0 - q.q_plus[n];
        const double py = sigmoid(y * scores[i][n]);
        direct += lambda * model.pi[i] * qy * std::log(qy / py);
      }
    }
  }
  CHECK_THAT(got.consensus_kl, Catch::Matchers::WithinAbs(direct, 1e-9));
}

TEST_CASE("predict: sign of the summed scores, tie to +1") {
  auto ds = data::split(data::synth_two_view(30, 0.4, 0.4, 1.0, 7), 8, 0.3, 7);
  auto model = trainer::train(ds, basic_config(3));

  for (int idx : ds.test) {
    auto ps = model.predict_score(test_point(ds, idx));
    const double f_sum = ps.per_view_scores.sum();
    CHECK(ps.label == (f_sum >= 0.0 ? +1 : -1));
    // argmax route agrees by construction; recheck the combined values
    if (f_sum > 0) {
      CHECK(ps.combined_plus >= ps.combined_minus);
    }
    CHECK(ps.q_plus > 0.0);
    CHECK(ps.q_plus < 1.0);
  }

  CHECK_THROWS_AS(model.predict({Vector::Zero(10)}), InputError);
}

TEST_CASE("training is deterministic, also with concurrent views") {
  auto ds = data::split(data::synth_two_view(40, 0.8, 1.0, 0.8, 13), 10, 0.3, 13);
  trainer::TrainConfig cfg = basic_config(5);
  cfg.parallel_views = true;
  auto a = trainer::train(ds, cfg);
  cfg.parallel_views = false;
  auto b = trainer::train(ds, cfg);
  for (int v = 0; v < 2; ++v) {
    CHECK(a.views[v].dual.alpha == b.views[v].dual.alpha);
  }
  CHECK(a.consensus.q_plus == b.consensus.q_plus);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t t = 0; t < a.history.size(); ++t) {
    CHECK(a.history[t].objective.total() == b.history[t].objective.total());
  }
}

TEST_CASE("model save/load round trip") {
  namespace fs = std::filesystem;
  auto ds = data::split(data::synth_two_view(25, 0.6, 0.7, 0.9, 19), 8, 0.3, 19);
  auto model = trainer::train(ds, basic_config(3));

  fs::path dir = fs::temp_directory_path() / "cmvmed_trainer_roundtrip";
  fs::remove_all(dir);
  trainer::save(model, dir.string());
  auto loaded = trainer::load(dir.string());
  fs::remove_all(dir);

  REQUIRE(loaded.num_views() == 2);
  CHECK(loaded.history.size() == model.history.size());
  CHECK(loaded.consensus.q_plus.size() == model.consensus.q_plus.size());
  for (int idx : ds.test) {
    auto x = test_point(ds, idx);
    CHECK(loaded.predict(x) == model.predict(x));
  }
}

TEST_CASE("config validation") {
  auto ds = data::split(data::synth_two_view(10, 0.5, 0.5, 1.0, 2), 4, 0.2, 2);
  trainer::TrainConfig cfg;  // missing per-view parameters
  CHECK_THROWS_AS(trainer::train(ds, cfg), InputError);

  cfg = basic_config(-1);
  CHECK_THROWS_AS(trainer::train(ds, cfg), InputError);

  cfg = basic_config(2);
  cfg.pi = Vector::Constant(3, 1.0 / 3);
  CHECK_THROWS_AS(trainer::train(ds, cfg), InputError);
}
