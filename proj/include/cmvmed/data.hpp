#pragma once

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cmvmed/types.hpp"

namespace cmvmed::data {

constexpr int kUnknownLabel = 0;

// V feature matrices over shared sample rows, with labeled/unlabeled/test
// index partitions. Labels are -1/+1, or 0 when unknown. Indices in U may
// still carry a ground-truth label; it is hidden during training.
struct MultiViewDataset {
  std::vector<Matrix> views;
  IntVector labels;
  std::vector<int> labeled;
  std::vector<int> unlabeled;
  std::vector<int> test;

  int num_samples() const {
    return views.empty() ? 0 : static_cast<int>(views.front().rows());
  }
  int num_views() const { return static_cast<int>(views.size()); }

  Matrix view_rows(int view, const std::vector<int>& idx) const {
    Matrix out(idx.size(), views[view].cols());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      out.row(r) = views[view].row(idx[r]);
    }
    return out;
  }

  IntVector labels_at(const std::vector<int>& idx) const {
    IntVector out(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      out[r] = labels[idx[r]];
    }
    return out;
  }
};

namespace detail {

inline Matrix parse_csv_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw InputError("cannot open " + path);
  }
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) {
      continue;
    }
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t pos = 0;
        double v = std::stod(cell, &pos);
        while (pos < cell.size() &&
               (std::isspace(static_cast<unsigned char>(cell[pos])) ||
                cell[pos] == '\r')) {
          ++pos;
        }
        if (pos != cell.size()) {
          throw std::invalid_argument(cell);
        }
        row.push_back(v);
      } catch (const std::exception&) {
        throw InputError(path + ":" + std::to_string(line_no) +
                         ": non-numeric cell '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw InputError(path + ":" + std::to_string(line_no) +
                       ": expected " + std::to_string(rows.front().size()) +
                       " columns, got " + std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) {
    throw InputError(path + ": empty file");
  }
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      m(r, c) = rows[r][c];
    }
  }
  return m;
}

inline IntVector parse_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw InputError("cannot open " + path);
  }
  std::vector<int> labels;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    if (line == "+1" || line == "1") {
      labels.push_back(+1);
    } else if (line == "-1") {
      labels.push_back(-1);
    } else if (line == "?") {
      labels.push_back(kUnknownLabel);
    } else {
      throw InputError(path + ":" + std::to_string(line_no) +
                       ": label must be one of -1, +1, ?; got '" + line + "'");
    }
  }
  if (labels.empty()) {
    throw InputError(path + ": empty file");
  }
  return Eigen::Map<IntVector>(labels.data(), labels.size());
}

}  // namespace detail

// View files: headerless comma-separated numeric matrices, one sample per
// row. Label file: one token per line from {-1, +1, ?}.
inline MultiViewDataset load(const std::vector<std::string>& view_files,
                             const std::string& label_file) {
  if (view_files.empty()) {
    throw InputError("load: need at least one view file");
  }
  MultiViewDataset ds;
  for (const auto& path : view_files) {
    ds.views.push_back(detail::parse_csv_matrix(path));
    if (ds.views.back().rows() != ds.views.front().rows()) {
      throw InputError("load: row count mismatch between " + view_files[0] +
                       " (" + std::to_string(ds.views.front().rows()) +
                       " rows) and " + path + " (" +
                       std::to_string(ds.views.back().rows()) + " rows)");
    }
  }
  ds.labels = detail::parse_labels(label_file);
  if (ds.labels.size() != ds.views.front().rows()) {
    throw InputError("load: row count mismatch between " + view_files[0] +
                     " (" + std::to_string(ds.views.front().rows()) +
                     " rows) and " + label_file + " (" +
                     std::to_string(ds.labels.size()) + " rows)");
  }
  return ds;
}

// Stratified labeled/unlabeled/test split, deterministic given the seed.
// Test indices are drawn from ground-truth-labeled samples; L takes
// ceil(|L|/2) from the class first in sorted label order (-1 before +1)
// when |L| is odd; everything else becomes U.
inline MultiViewDataset split(MultiViewDataset ds, int labeled_size,
                              double test_fraction, std::uint64_t seed) {
  if (labeled_size < 2) {
    throw InputError("split: labeled_size must be at least 2");
  }

  std::vector<int> neg, pos, unknown;
  for (int n = 0; n < ds.num_samples(); ++n) {
    if (ds.labels[n] == -1) {
      neg.push_back(n);
    } else if (ds.labels[n] == +1) {
      pos.push_back(n);
    } else {
      unknown.push_back(n);
    }
  }

  std::mt19937_64 rng(seed);
  std::shuffle(neg.begin(), neg.end(), rng);
  std::shuffle(pos.begin(), pos.end(), rng);

  const int n_test = static_cast<int>(
      std::llround(test_fraction * static_cast<double>(neg.size() + pos.size())));
  const int test_neg = std::min<int>(
      static_cast<int>(neg.size()),
      static_cast<int>(std::llround(
          n_test * static_cast<double>(neg.size()) / (neg.size() + pos.size()))));
  const int test_pos = std::min<int>(static_cast<int>(pos.size()),
                                     n_test - test_neg);

  ds.test.assign(neg.begin(), neg.begin() + test_neg);
  ds.test.insert(ds.test.end(), pos.begin(), pos.begin() + test_pos);
  neg.erase(neg.begin(), neg.begin() + test_neg);
  pos.erase(pos.begin(), pos.begin() + test_pos);

  const int l_neg = (labeled_size + 1) / 2;  // -1 sorts first
  const int l_pos = labeled_size / 2;
  if (static_cast<int>(neg.size()) < l_neg ||
      static_cast<int>(pos.size()) < l_pos) {
    throw InputError("split: labeled_size " + std::to_string(labeled_size) +
                     " exceeds available labels after test split (" +
                     std::to_string(neg.size()) + " negative, " +
                     std::to_string(pos.size()) + " positive)");
  }

  ds.labeled.assign(neg.begin(), neg.begin() + l_neg);
  ds.labeled.insert(ds.labeled.end(), pos.begin(), pos.begin() + l_pos);
  ds.unlabeled.assign(neg.begin() + l_neg, neg.end());
  ds.unlabeled.insert(ds.unlabeled.end(), pos.begin() + l_pos, pos.end());
  ds.unlabeled.insert(ds.unlabeled.end(), unknown.begin(), unknown.end());

  std::sort(ds.test.begin(), ds.test.end());
  std::sort(ds.labeled.begin(), ds.labeled.end());
  std::sort(ds.unlabeled.begin(), ds.unlabeled.end());
  return ds;
}

// Scale every sample row in every view to unit Euclidean norm; all-zero
// rows are left unchanged.
inline MultiViewDataset length_normalize(MultiViewDataset ds) {
  for (auto& view : ds.views) {
    for (Eigen::Index r = 0; r < view.rows(); ++r) {
      const double norm = view.row(r).norm();
      if (norm > 0.0) {
        view.row(r) /= norm;
      }
    }
  }
  return ds;
}

// Synthetic two-view benchmark: class centers +-mu in a 2-D latent space per
// view, isotropic noise, embedded into d=10 by a seeded random rotation.
// view_agreement < 1 replaces that fraction of view-2 samples' latent
// positions with class-uninformative draws (a coin-flip center), modeling a
// weak sensor.
inline MultiViewDataset synth_two_view(int n_per_class, double noise1,
                                       double noise2, double view_agreement,
                                       std::uint64_t seed) {
  if (noise1 < 0.0 || noise2 < 0.0) {
    throw InputError("synth_two_view: noise levels must be nonnegative");
  }
  if (view_agreement < 0.0 || view_agreement > 1.0) {
    throw InputError("synth_two_view: view_agreement must lie in [0,1]");
  }
  constexpr int kEmbedDim = 10;
  const int n = 2 * n_per_class;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  // Latent class centers per view.
  const Eigen::Vector2d mu(1.0, 1.0);

  MultiViewDataset ds;
  ds.labels.resize(n);
  for (int c = 0; c < 2; ++c) {
    for (int k = 0; k < n_per_class; ++k) {
      ds.labels[c * n_per_class + k] = c == 0 ? -1 : +1;
    }
  }

  const double noises[2] = {noise1, noise2};
  for (int v = 0; v < 2; ++v) {
    // Random embedding with orthonormal columns.
    Matrix g(kEmbedDim, 2);
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      g(i / 2, i % 2) = gauss(rng);
    }
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix embed = Matrix(qr.householderQ()).leftCols(2);

    Matrix latent(n, 2);
    for (int r = 0; r < n; ++r) {
      double sign = ds.labels[r];
      if (v == 1 && unif(rng) > view_agreement) {
        sign = unif(rng) < 0.5 ? -1.0 : 1.0;  // uninformative draw
      }
      latent(r, 0) = sign * mu[0] + noises[v] * gauss(rng);
      latent(r, 1) = sign * mu[1] + noises[v] * gauss(rng);
    }
    ds.views.push_back(latent * embed.transpose());
  }
  return ds;
}

}  // namespace cmvmed::data
