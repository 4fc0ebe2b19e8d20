#pragma once

#include <span>

#include <Eigen/Dense>

namespace manidiff {

/// Normal law N(mean, factor * factor^T + floor * I) on R^D.
///
/// `factor` is D x d with d <= D; floor may be 0, which makes the law
/// degenerate (supported on mean + range(factor)).
struct GaussianLaw {
  Eigen::VectorXd mean;
  Eigen::MatrixXd factor;
  double floor = 0.0;

  Eigen::Index ambient_dim() const { return mean.size(); }
  Eigen::MatrixXd covariance() const;
  /// Throws std::invalid_argument on shape mismatch, negative floor or
  /// non-finite entries.
  void validate() const;
};

GaussianLaw standard_gaussian(Eigen::Index dim);
GaussianLaw point_mass_law(const Eigen::VectorXd& y0);

/// Rank-d law on R^D: `scale` times the first d coordinate axes, zero mean,
/// no floor. Every nonzero direction has variance scale^2.
GaussianLaw axis_aligned_law(Eigen::Index D, Eigen::Index d, double scale);

/// Law of X_t = c_t X_0 + sigma_t Z for X_0 ~ law.
GaussianLaw forward_marginal(const GaussianLaw& law, double t);

/// Block-diagonal product of independent laws, coordinates concatenated.
GaussianLaw block_product(std::span<const GaussianLaw> blocks);

/// rho * I + B B^T with rho > 0, inverted and log-determined through the
/// r x r capacitance matrix rho * I + B^T B. Costs O(D r^2) to build and
/// O(D r) per solve.
class LowRankPlusDiagonal {
 public:
  LowRankPlusDiagonal(double rho, Eigen::MatrixXd B);

  Eigen::Index dim() const { return B_.rows(); }
  double rho() const { return rho_; }
  const Eigen::MatrixXd& low_rank() const { return B_; }

  Eigen::VectorXd solve(const Eigen::VectorXd& v) const;
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
  double log_det() const;
  /// tr((rho I + B B^T)^{-1} S) for S = s_rho * I + F F^T.
  double trace_inverse_times(double s_rho, const Eigen::MatrixXd& F) const;

 private:
  double rho_;
  Eigen::MatrixXd B_;
  Eigen::LLT<Eigen::MatrixXd> capacitance_;
};

/// Covariance of X_t for X_0 ~ law: c^2 A A^T + (c^2 floor + sigma^2) I.
LowRankPlusDiagonal marginal_covariance(const GaussianLaw& law, double t);

/// Normal law whose covariance is diagonal in a fixed orthonormal basis:
///   Cov = basis * diag(variances) * basis^T
///         + complement_variance * (I - basis * basis^T).
/// Exact Gaussian propagation through isotropic affine steps keeps this form.
struct SpectralGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd basis;      // D x r, orthonormal columns
  Eigen::VectorXd variances;  // r
  double complement_variance = 0.0;

  Eigen::Index ambient_dim() const { return mean.size(); }
  Eigen::Index rank() const { return basis.cols(); }
  Eigen::MatrixXd covariance() const;
};

/// Thin SVD of the factor; singular values below 1e-12 (relative to the
/// largest, floored at 1) are treated as zero and fall into the complement.
SpectralGaussian spectral_form(const GaussianLaw& law);

struct DenseGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

DenseGaussian dense_form(const GaussianLaw& law);
DenseGaussian dense_form(const SpectralGaussian& law);

}  // namespace manidiff
