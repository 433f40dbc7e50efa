#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>

#include "cmvmed/types.hpp"

namespace cmvmed::kernel {

// Gaussian kernel K(x, y) = exp(-gamma * ||x - y||^2), gamma > 0.
struct KernelSpec {
  double gamma = 1.0;

  explicit KernelSpec(double g = 1.0) : gamma(g) {
    if (!(gamma > 0.0)) {
      throw InputError("KernelSpec: gamma must be positive, got " +
                       std::to_string(gamma));
    }
  }
};

inline double kernel_eval(const Eigen::Ref<const Vector>& x,
                          const Eigen::Ref<const Vector>& y,
                          const KernelSpec& spec) {
  if (x.size() != y.size()) {
    throw InputError("kernel_eval: dimension mismatch (" +
                     std::to_string(x.size()) + " vs " +
                     std::to_string(y.size()) + ")");
  }
  return std::exp(-spec.gamma * (x - y).squaredNorm());
}

// a x b matrix of pairwise kernel values between rows of A and rows of B.
inline Matrix cross_gram(const Eigen::Ref<const Matrix>& A,
                         const Eigen::Ref<const Matrix>& B,
                         const KernelSpec& spec) {
  if (A.cols() != B.cols()) {
    throw InputError("cross_gram: feature dimension mismatch (" +
                     std::to_string(A.cols()) + " vs " +
                     std::to_string(B.cols()) + ")");
  }
  // ||a-b||^2 = ||a||^2 + ||b||^2 - 2 a.b, evaluated blockwise.
  Vector a2 = A.rowwise().squaredNorm();
  Vector b2 = B.rowwise().squaredNorm();
  Matrix d2 = (-2.0 * A * B.transpose());
  d2.colwise() += a2;
  d2.rowwise() += b2.transpose();
  return (-spec.gamma * d2.cwiseMax(0.0)).array().exp();
}

inline Matrix gram(const Eigen::Ref<const Matrix>& X, const KernelSpec& spec) {
  if (X.rows() < 1) {
    throw InputError("gram: need at least one row");
  }
  Matrix K = cross_gram(X, X, spec);
  // Exact symmetry and unit diagonal regardless of rounding above.
  K = 0.5 * (K + K.transpose()).eval();
  K.diagonal().setOnes();
  return K;
}

// Per-view Gram matrices plus the annealed kernel over the labeled set.
//
// The correction uses the nu-symmetrized form
//   K~ = K_L - lambda * K_UL^T D [ (1/sigma^2) I + lambda D K_U D ]^{-1} D K_UL,
// with D = diag(sqrt(nu)). Where all nu_n > 0 this equals the form with an
// explicit diag(nu)^{-1} inside the inverse; entries with nu_n = 0 simply
// contribute nothing.
class GramBundle {
 public:
  Matrix K_L;
  Matrix K_U;
  Matrix K_UL;
  Matrix K_tilde;
  double lambda = 0.0;
  double sigma2 = 1.0;

  // Uncoupled bundle: K~ = K_L, no inner system.
  static GramBundle plain(Matrix k_l) {
    GramBundle b;
    b.K_L = std::move(k_l);
    b.K_tilde = b.K_L;
    return b;
  }

  static GramBundle build(Matrix k_l, Matrix k_u, Matrix k_ul,
                          const Vector& nu, double lambda, double sigma2) {
    if (!(sigma2 > 0.0)) {
      throw InputError("GramBundle: sigma2 must be positive");
    }
    if (lambda < 0.0) {
      throw InputError("GramBundle: lambda must be nonnegative");
    }
    const auto n_u = k_u.rows();
    if (k_u.cols() != n_u || k_ul.rows() != n_u ||
        k_ul.cols() != k_l.rows() || nu.size() != n_u) {
      throw InputError("GramBundle: inconsistent shapes");
    }
    if ((nu.array() < 0.0).any()) {
      throw InputError("GramBundle: nu entries must be nonnegative");
    }

    GramBundle b;
    b.K_L = std::move(k_l);
    b.K_U = std::move(k_u);
    b.K_UL = std::move(k_ul);
    b.lambda = lambda;
    b.sigma2 = sigma2;

    if (lambda == 0.0 || n_u == 0) {
      b.K_tilde = b.K_L;
      return b;
    }

    b.sqrt_nu_ = nu.array().sqrt();
    Matrix inner = lambda * (b.sqrt_nu_.asDiagonal() * b.K_U *
                             b.sqrt_nu_.asDiagonal());
    inner.diagonal().array() += 1.0 / sigma2 + kJitter;

    Eigen::LLT<Matrix> llt(inner);
    if (llt.info() != Eigen::Success) {
      double min_pivot = llt.matrixL().toDenseMatrix().diagonal().minCoeff();
      throw NumericalError(
          "GramBundle: inner system not positive definite after jitter "
          "(minimum pivot " + std::to_string(min_pivot) + ")");
    }
    b.llt_ = std::make_shared<Eigen::LLT<Matrix>>(std::move(llt));

    // C = D K_UL, shared by K~ and every modified_cross call.
    b.scaled_cross_ = b.sqrt_nu_.asDiagonal() * b.K_UL;
    Matrix correction =
        lambda * b.scaled_cross_.transpose() * b.llt_->solve(b.scaled_cross_);
    b.K_tilde = b.K_L - correction;
    b.K_tilde = 0.5 * (b.K_tilde + b.K_tilde.transpose()).eval();
    return b;
  }

  bool has_factorization() const { return llt_ != nullptr; }

  // Row of K~ extended to an arbitrary point: entry m is
  //   K(x, x_m) - lambda * (D k_U(x))^T A^{-1} (D K_UL)[:, m],
  // reusing the factorization of A from construction.
  Vector modified_cross(const Eigen::Ref<const Vector>& k_l_x,
                        const Eigen::Ref<const Vector>& k_u_x) const {
    if (k_l_x.size() != K_L.rows()) {
      throw InputError("modified_cross: labeled kernel vector has wrong size");
    }
    if (lambda == 0.0 || K_U.rows() == 0) {
      return k_l_x;
    }
    if (!llt_) {
      throw UsageError("modified_cross: bundle carries no factorization");
    }
    if (k_u_x.size() != K_U.rows()) {
      throw InputError(
          "modified_cross: unlabeled kernel vector has wrong size");
    }
    Vector scaled = sqrt_nu_.asDiagonal() * k_u_x;
    return k_l_x - lambda * (scaled_cross_.transpose() * llt_->solve(scaled));
  }

  // Batch form: rows of k_l_X / k_u_X are kernel vectors of query points
  // against the labeled / unlabeled sets; returns one K~ row per query.
  Matrix modified_cross_batch(const Eigen::Ref<const Matrix>& k_l_X,
                              const Eigen::Ref<const Matrix>& k_u_X) const {
    if (lambda == 0.0 || K_U.rows() == 0) {
      return k_l_X;
    }
    if (!llt_) {
      throw UsageError("modified_cross: bundle carries no factorization");
    }
    Matrix scaled = sqrt_nu_.asDiagonal() * k_u_X.transpose();
    return k_l_X - lambda * (llt_->solve(scaled)).transpose() * scaled_cross_;
  }

  static constexpr double kJitter = 1e-10;

 private:
  Vector sqrt_nu_;
  Matrix scaled_cross_;  // D K_UL
  std::shared_ptr<Eigen::LLT<Matrix>> llt_;
};

inline Matrix modified_kernel(const Matrix& k_l, const Matrix& k_u,
                              const Matrix& k_ul, const Vector& nu,
                              double lambda, double sigma2) {
  return GramBundle::build(k_l, k_u, k_ul, nu, lambda, sigma2).K_tilde;
}

}  // namespace cmvmed::kernel
