#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "cmvmed/kernel.hpp"

using namespace cmvmed;
using kernel::GramBundle;
using kernel::KernelSpec;

namespace {

Matrix random_points(int n, int d, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix X(n, d);
  for (Eigen::Index i = 0; i < X.size(); ++i) {
    X(i / d, i % d) = gauss(rng);
  }
  return X;
}

// Literal form with an explicit diag(nu)^{-1}; valid only when all nu > 0.
Matrix literal_modified_kernel(const Matrix& k_l, const Matrix& k_u,
                               const Matrix& k_ul, const Vector& nu,
                               double lambda, double sigma2) {
  Matrix inner = (1.0 / sigma2) * nu.cwiseInverse().asDiagonal().toDenseMatrix() +
                 lambda * k_u;
  return k_l - lambda * k_ul.transpose() * inner.inverse() * k_ul;
}

}  // namespace

TEST_CASE("kernel_eval closed forms") {
  Vector x(3), y(3);
  x << 1.0, -2.0, 0.5;
  y = x;
  CHECK(kernel::kernel_eval(x, y, KernelSpec(1.0)) == 1.0);

  y << 1.0, -2.0, 0.5 + std::sqrt(2.0);  // ||x-y||^2 = 2
  CHECK_THAT(kernel::kernel_eval(x, y, KernelSpec(0.5)),
             Catch::Matchers::WithinAbs(std::exp(-1.0), 1e-12));

  y << 2.0, -2.0, 0.5;  // ||x-y||^2 = 1
  CHECK_THAT(kernel::kernel_eval(x, y, KernelSpec(1.0)),
             Catch::Matchers::WithinAbs(std::exp(-1.0), 1e-12));

  Vector z(2);
  CHECK_THROWS_AS(kernel::kernel_eval(x, z, KernelSpec(1.0)), InputError);
  CHECK_THROWS_AS(KernelSpec(0.0), InputError);
  CHECK_THROWS_AS(KernelSpec(-1.0), InputError);
}

TEST_CASE("gram basics") {
  Matrix one_row(1, 4);
  one_row << 1, 2, 3, 4;
  Matrix K = kernel::gram(one_row, KernelSpec(2.0));
  REQUIRE(K.rows() == 1);
  CHECK(K(0, 0) == 1.0);

  Matrix dup(2, 3);
  dup.row(0) << 1, 2, 3;
  dup.row(1) << 1, 2, 3;
  CHECK(kernel::gram(dup, KernelSpec(0.7)).isApprox(Matrix::Ones(2, 2)));
}

TEST_CASE("gram matches entrywise kernel_eval loop") {
  std::mt19937_64 rng(11);
  Matrix X = random_points(5, 3, rng);
  KernelSpec spec(0.8);
  Matrix K = kernel::gram(X, spec);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      double expected = kernel::kernel_eval(X.row(i), X.row(j), spec);
      CHECK_THAT(K(i, j), Catch::Matchers::WithinAbs(expected, 1e-12));
    }
  }
  CHECK((K - K.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((K.diagonal().array() == 1.0).all());
}

TEST_CASE("cross_gram transpose symmetry") {
  std::mt19937_64 rng(12);
  Matrix A = random_points(4, 3, rng);
  Matrix B = random_points(6, 3, rng);
  KernelSpec spec(1.3);
  Matrix AB = kernel::cross_gram(A, B, spec);
  Matrix BA = kernel::cross_gram(B, A, spec);
  CHECK((AB - BA.transpose()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("modified_kernel: lambda = 0 gives K_L exactly") {
  std::mt19937_64 rng(13);
  Matrix X_L = random_points(4, 2, rng);
  Matrix X_U = random_points(7, 2, rng);
  KernelSpec spec(1.0);
  Matrix k_l = kernel::gram(X_L, spec);
  Matrix k_u = kernel::gram(X_U, spec);
  Matrix k_ul = kernel::cross_gram(X_U, X_L, spec);
  Vector nu = Vector::Constant(7, 0.2);
  Matrix kt = kernel::modified_kernel(k_l, k_u, k_ul, nu, 0.0, 1.0);
  CHECK(kt == k_l);
}

TEST_CASE("modified_kernel: scalar case") {
  Matrix one = Matrix::Ones(1, 1);
  Vector nu = Vector::Constant(1, 0.25);
  Matrix kt = kernel::modified_kernel(one, one, one, nu, 1.0, 1.0);
  // 1 - 1/(4+1) from the literal form
  CHECK_THAT(kt(0, 0), Catch::Matchers::WithinAbs(0.8, 1e-9));
  Matrix lit = literal_modified_kernel(one, one, one, nu, 1.0, 1.0);
  CHECK_THAT(kt(0, 0), Catch::Matchers::WithinAbs(lit(0, 0), 1e-9));
}

TEST_CASE("modified_kernel: all-zero nu gives K_L") {
  std::mt19937_64 rng(14);
  Matrix X_L = random_points(5, 3, rng);
  Matrix X_U = random_points(6, 3, rng);
  KernelSpec spec(0.5);
  Matrix k_l = kernel::gram(X_L, spec);
  Matrix kt = kernel::modified_kernel(
      k_l, kernel::gram(X_U, spec), kernel::cross_gram(X_U, X_L, spec),
      Vector::Zero(6), 0.9, 2.0);
  CHECK((kt - k_l).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("modified_kernel properties on random instances") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int rep = 0; rep < 60; ++rep) {
    const int n_l = 2 + static_cast<int>(unif(rng) * 8);
    const int n_u = 1 + static_cast<int>(unif(rng) * 12);
    Matrix X_L = random_points(n_l, 3, rng);
    Matrix X_U = random_points(n_u, 3, rng);
    KernelSpec spec(0.3 + unif(rng));
    const double lambda = unif(rng);
    const double sigma2 = 0.5 + 2.0 * unif(rng);
    Vector nu(n_u);
    for (int n = 0; n < n_u; ++n) {
      nu[n] = 0.25 * unif(rng);
      if (rep % 5 == 0 && n == 0) {
        nu[n] = 0.0;  // exercise the singular-M corner
      }
    }
    Matrix k_l = kernel::gram(X_L, spec);
    Matrix k_u = kernel::gram(X_U, spec);
    Matrix k_ul = kernel::cross_gram(X_U, X_L, spec);
    Matrix kt = kernel::modified_kernel(k_l, k_u, k_ul, nu, lambda, sigma2);

    // Symmetry and PSD.
    CHECK((kt - kt.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(kt);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-8);

    // Monotone shrinkage of the diagonal.
    CHECK((kt.diagonal().array() <= k_l.diagonal().array() + 1e-12).all());

    // Equivalence with the literal form when M is invertible.
    if (nu.minCoeff() >= 1e-6) {
      Matrix lit = literal_modified_kernel(k_l, k_u, k_ul, nu, lambda, sigma2);
      const double rel = (kt - lit).norm() / (1.0 + lit.norm());
      CHECK(rel <= 1e-8);
    }
  }
}

TEST_CASE("modified_cross: lambda = 0 returns the labeled kernel row") {
  std::mt19937_64 rng(21);
  Matrix X_L = random_points(5, 3, rng);
  KernelSpec spec(1.0);
  GramBundle bundle = GramBundle::plain(kernel::gram(X_L, spec));
  Vector k_l_x = kernel::cross_gram(X_L.row(2), X_L, spec).row(0);
  Vector got = bundle.modified_cross(k_l_x, Vector(0));
  CHECK(got.isApprox(k_l_x));
  CHECK(got.isApprox(bundle.K_L.row(2).transpose()));
}

TEST_CASE("modified_cross: scalar case matches modified_kernel") {
  Matrix one = Matrix::Ones(1, 1);
  Vector nu = Vector::Constant(1, 0.25);
  GramBundle bundle = GramBundle::build(one, one, one, nu, 1.0, 1.0);
  Vector k_l_x = Vector::Ones(1);
  Vector k_u_x = Vector::Ones(1);
  Vector got = bundle.modified_cross(k_l_x, k_u_x);
  CHECK_THAT(got[0], Catch::Matchers::WithinAbs(0.8, 1e-9));
}

TEST_CASE("modified_cross matches recompute-from-scratch row") {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    const int n_l = 3 + rep % 4;
    const int n_u = 2 + rep % 6;
    Matrix X_L = random_points(n_l, 3, rng);
    Matrix X_U = random_points(n_u, 3, rng);
    Vector x = random_points(1, 3, rng).row(0);
    KernelSpec spec(0.4 + unif(rng));
    const double lambda = 0.1 + 0.8 * unif(rng);
    const double sigma2 = 0.5 + unif(rng);
    Vector nu(n_u);
    for (int n = 0; n < n_u; ++n) {
      nu[n] = 0.01 + 0.24 * unif(rng);
    }

    Matrix k_l = kernel::gram(X_L, spec);
    Matrix k_u = kernel::gram(X_U, spec);
    Matrix k_ul = kernel::cross_gram(X_U, X_L, spec);
    GramBundle bundle = GramBundle::build(k_l, k_u, k_ul, nu, lambda, sigma2);

    Vector k_l_x = kernel::cross_gram(x.transpose(), X_L, spec).row(0);
    Vector k_u_x = kernel::cross_gram(x.transpose(), X_U, spec).row(0);
    Vector got = bundle.modified_cross(k_l_x, k_u_x);

    // Oracle: append x to the labeled set and rebuild K~ from scratch.
    Matrix X_ext(n_l + 1, 3);
    X_ext.topRows(n_l) = X_L;
    X_ext.row(n_l) = x.transpose();
    Matrix kt_ext = kernel::modified_kernel(
        kernel::gram(X_ext, spec), k_u,
        kernel::cross_gram(X_U, X_ext, spec), nu, lambda, sigma2);
    for (int m = 0; m < n_l; ++m) {
      CHECK_THAT(got[m], Catch::Matchers::WithinAbs(kt_ext(n_l, m), 1e-9));
    }

    // Batch form agrees with the single-point form.
    Matrix batch = bundle.modified_cross_batch(k_l_x.transpose(),
                                               k_u_x.transpose());
    CHECK((batch.row(0).transpose() - got).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("modified_cross on a plain bundle with unlabeled data is a usage error") {
  GramBundle bundle = GramBundle::plain(Matrix::Ones(1, 1));
  bundle.lambda = 0.5;  // simulate a stale cache
  bundle.K_U = Matrix::Ones(1, 1);
  CHECK_THROWS_AS(bundle.modified_cross(Vector::Ones(1), Vector::Ones(1)),
                  UsageError);
}

TEST_CASE("GramBundle shape and domain validation") {
  Matrix one = Matrix::Ones(1, 1);
  Vector nu = Vector::Constant(1, 0.1);
  CHECK_THROWS_AS(GramBundle::build(one, Matrix::Ones(2, 2), one, nu, 0.5, 1.0),
                  InputError);
  CHECK_THROWS_AS(GramBundle::build(one, one, one, Vector::Constant(1, -0.1),
                                    0.5, 1.0),
                  InputError);
  CHECK_THROWS_AS(GramBundle::build(one, one, one, nu, -0.5, 1.0), InputError);
  CHECK_THROWS_AS(GramBundle::build(one, one, one, nu, 0.5, 0.0), InputError);
}
