// Command-line front end: train/predict on file datasets, synthetic data
// generation, and the repeated-trial experiment / labeled-size sweep
// protocols with plot-ready output files.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cmvmed/experiment.hpp"
#include "cmvmed/trainer.hpp"

namespace fs = std::filesystem;
using namespace cmvmed;

namespace {

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) {
      out.push_back(item);
    }
  }
  return out;
}

struct CommonOpts {
  std::string views_csv;
  std::string labels_file;
  std::vector<double> gamma_grid{1.0};
  std::vector<double> sigma2_grid{1.0};
  int iters = 10;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  bool normalize = false;
  bool literal_scale = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool needs_data) {
  if (needs_data) {
    cmd->add_option("--views", opts.views_csv,
                    "comma-separated view CSV files")->required();
    cmd->add_option("--labels", opts.labels_file, "label file (-1/+1/?)")
        ->required();
    cmd->add_flag("--normalize", opts.normalize,
                  "length-normalize every sample row");
  }
  cmd->add_option("--gamma-grid", opts.gamma_grid,
                  "Gaussian kernel bandwidth grid");
  cmd->add_option("--sigma2-grid", opts.sigma2_grid, "prior variance grid");
  cmd->add_option("--iters", opts.iters, "annealing iterations T");
  cmd->add_option("--seed", opts.seed, "master seed");
  cmd->add_option("--out", opts.out_dir, "output directory");
  cmd->add_flag("--literal-scale", opts.literal_scale,
                "use the literal score scale (1) instead of sigma^2");
}

med::ScoreScale scale_mode(const CommonOpts& opts) {
  return opts.literal_scale ? med::ScoreScale::kLiteral
                            : med::ScoreScale::kSelfConsistent;
}

experiment::ExperimentConfig to_experiment_config(const CommonOpts& opts) {
  experiment::ExperimentConfig cfg;
  cfg.view_files = split_list(opts.views_csv);
  cfg.label_file = opts.labels_file;
  cfg.normalize = opts.normalize;
  cfg.gamma_grid = opts.gamma_grid;
  cfg.sigma2_grid = opts.sigma2_grid;
  cfg.max_iters = opts.iters;
  cfg.seed = opts.seed;
  cfg.score_mode = scale_mode(opts);
  return cfg;
}

int cmd_train(const CommonOpts& opts, int labeled_size, double test_fraction,
              int folds) {
  experiment::ExperimentConfig cfg = to_experiment_config(opts);
  cfg.folds = folds;
  data::MultiViewDataset ds = experiment::materialize_dataset(cfg);

  if (labeled_size > 0) {
    ds = data::split(ds, labeled_size, test_fraction, opts.seed);
  } else {
    // All known labels train, '?' rows act as the unlabeled pool.
    for (int n = 0; n < ds.num_samples(); ++n) {
      (ds.labels[n] == data::kUnknownLabel ? ds.unlabeled : ds.labeled)
          .push_back(n);
    }
  }

  experiment::MethodArm arm{true, -1};
  experiment::HyperParams hp{
      std::vector<double>(ds.num_views(), opts.gamma_grid.front()),
      std::vector<double>(ds.num_views(), opts.sigma2_grid.front())};
  if (opts.gamma_grid.size() > 1 || opts.sigma2_grid.size() > 1) {
    hp = experiment::cross_validate(ds, arm, cfg, opts.seed, &std::cerr);
  }
  trainer::CmvMedModel model =
      trainer::train(ds, experiment::make_train_config(hp, cfg));
  trainer::save(model, opts.out_dir);

  std::cout << "trained " << model.num_views() << " views on |L|="
            << ds.labeled.size() << " |U|=" << ds.unlabeled.size()
            << ", saved to " << opts.out_dir << "\n";
  for (const auto& rec : model.history) {
    std::cout << "  t=" << rec.t << " lambda=" << rec.lambda
              << " objective=" << rec.objective.total() << "\n";
  }
  return 0;
}

int cmd_predict(const std::string& model_dir, const std::string& views_csv,
                const std::string& out_file) {
  trainer::CmvMedModel model = trainer::load(model_dir);
  std::vector<std::string> files = split_list(views_csv);
  if (static_cast<int>(files.size()) != model.num_views()) {
    throw InputError("predict: model has " +
                     std::to_string(model.num_views()) + " views, got " +
                     std::to_string(files.size()) + " files");
  }
  std::vector<Matrix> views;
  for (const auto& f : files) {
    views.push_back(data::detail::parse_csv_matrix(f));
    if (views.back().rows() != views.front().rows()) {
      throw InputError("predict: row count mismatch between " + files[0] +
                       " and " + f);
    }
  }
  Vector f = model.combined_scores(views);
  std::ofstream file_out;
  std::ostream* out = &std::cout;
  if (!out_file.empty()) {
    file_out.open(out_file);
    if (!file_out) {
      throw InputError("cannot write " + out_file);
    }
    out = &file_out;
  }
  for (Eigen::Index r = 0; r < f.size(); ++r) {
    *out << (f[r] >= 0.0 ? "+1" : "-1") << " " << med::detail::fmt17(f[r])
         << "\n";
  }
  return 0;
}

void write_results(const experiment::ResultTable& table,
                   const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::cout << table.to_text();
  std::ofstream txt(fs::path(out_dir) / "results.txt");
  txt << table.to_text();
  table.write_machine((fs::path(out_dir) / "results.dat").string());
  std::cout << "wrote " << (fs::path(out_dir) / "results.dat").string()
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Consensus-based multi-view MED toolkit"};
  app.require_subcommand(1);

  CommonOpts train_opts, exp_opts, sweep_opts;
  int labeled_size = 0;
  double test_fraction = 0.3;
  int trials = 20;
  int folds = 5;
  std::string labeled_sizes_csv = "10";
  std::string model_dir, predict_views, predict_out;

  auto* train = app.add_subcommand("train", "fit a model and save it");
  add_common(train, train_opts, true);
  train->add_option("--labeled-size", labeled_size,
                    "labeled split size (0 = use all known labels)");
  train->add_option("--test-fraction", test_fraction, "held-out fraction");
  train->add_option("--folds", folds, "CV folds when grids have >1 point");

  auto* predict = app.add_subcommand("predict", "score files with a model");
  predict->add_option("--model", model_dir, "model directory")->required();
  predict->add_option("--views", predict_views, "comma-separated view files")
      ->required();
  predict->add_option("--out", predict_out, "output file (default stdout)");

  auto* experiment_cmd =
      app.add_subcommand("experiment", "repeated-trial protocol");
  add_common(experiment_cmd, exp_opts, true);
  experiment_cmd->add_option("--labeled-size", labeled_size, "labeled size")
      ->required();
  experiment_cmd->add_option("--test-fraction", test_fraction,
                             "held-out fraction");
  experiment_cmd->add_option("--trials", trials, "repeated trials");
  experiment_cmd->add_option("--folds", folds, "CV folds");

  auto* sweep = app.add_subcommand("sweep", "accuracy vs labeled-set size");
  add_common(sweep, sweep_opts, true);
  sweep->add_option("--labeled-sizes", labeled_sizes_csv,
                    "comma-separated |L| values");
  sweep->add_option("--test-fraction", test_fraction, "held-out fraction");
  sweep->add_option("--trials", trials, "repeated trials per |L|");
  sweep->add_option("--folds", folds, "CV folds");

  experiment::SynthSpec synth_spec;
  std::string synth_out = ".";
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "emit a synthetic two-view dataset");
  synth->add_option("--n-per-class", synth_spec.n_per_class, "samples per class");
  synth->add_option("--noise1", synth_spec.noise1, "view-1 noise level");
  synth->add_option("--noise2", synth_spec.noise2, "view-2 noise level");
  synth->add_option("--view-agreement", synth_spec.view_agreement,
                    "fraction of informative view-2 samples");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--out", synth_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      return cmd_train(train_opts, labeled_size, test_fraction, folds);
    }
    if (predict->parsed()) {
      return cmd_predict(model_dir, predict_views, predict_out);
    }
    if (experiment_cmd->parsed()) {
      experiment::ExperimentConfig cfg = to_experiment_config(exp_opts);
      cfg.labeled_sizes = {labeled_size};
      cfg.test_fraction = test_fraction;
      cfg.trials = trials;
      cfg.folds = folds;
      write_results(experiment::run_trials(cfg, &std::cerr),
                    exp_opts.out_dir);
      return 0;
    }
    if (sweep->parsed()) {
      experiment::ExperimentConfig cfg = to_experiment_config(sweep_opts);
      cfg.labeled_sizes.clear();
      for (const auto& tok : split_list(labeled_sizes_csv)) {
        cfg.labeled_sizes.push_back(std::stoi(tok));
      }
      cfg.test_fraction = test_fraction;
      cfg.trials = trials;
      cfg.folds = folds;
      write_results(experiment::sweep_labeled_size(cfg, &std::cerr),
                    sweep_opts.out_dir);
      return 0;
    }
    if (synth->parsed()) {
      data::MultiViewDataset ds = data::synth_two_view(
          synth_spec.n_per_class, synth_spec.noise1, synth_spec.noise2,
          synth_spec.view_agreement, synth_seed);
      fs::create_directories(synth_out);
      for (int v = 0; v < ds.num_views(); ++v) {
        std::ofstream out(fs::path(synth_out) /
                          ("view" + std::to_string(v + 1) + ".csv"));
        for (Eigen::Index r = 0; r < ds.views[v].rows(); ++r) {
          for (Eigen::Index c = 0; c < ds.views[v].cols(); ++c) {
            out << (c ? "," : "") << med::detail::fmt17(ds.views[v](r, c));
          }
          out << "\n";
        }
      }
      std::ofstream labels(fs::path(synth_out) / "labels.txt");
      for (Eigen::Index n = 0; n < ds.labels.size(); ++n) {
        labels << (ds.labels[n] > 0 ? "+1" : "-1") << "\n";
      }
      std::cout << "wrote " << ds.num_samples() << " samples to " << synth_out
                << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
