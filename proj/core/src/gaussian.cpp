#include "manidiff/gaussian.hpp"

#include <cmath>
#include <stdexcept>

#include "manidiff/schedule.hpp"

namespace manidiff {

Eigen::MatrixXd GaussianLaw::covariance() const {
  const Eigen::Index D = ambient_dim();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(D, D);
  if (factor.cols() > 0) cov = factor * factor.transpose();
  cov.diagonal().array() += floor;
  return cov;
}

void GaussianLaw::validate() const {
  if (mean.size() == 0) throw std::invalid_argument("GaussianLaw: empty mean");
  if (factor.rows() != mean.size()) {
    throw std::invalid_argument("GaussianLaw: factor must have D rows");
  }
  if (factor.cols() > mean.size()) {
    throw std::invalid_argument("GaussianLaw: factor rank d must not exceed D");
  }
  if (!(floor >= 0.0) || !std::isfinite(floor)) {
    throw std::invalid_argument("GaussianLaw: floor must be finite and >= 0");
  }
  if (!mean.allFinite() || !factor.allFinite()) {
    throw std::invalid_argument("GaussianLaw: non-finite entries");
  }
}

GaussianLaw standard_gaussian(Eigen::Index dim) {
  return {Eigen::VectorXd::Zero(dim), Eigen::MatrixXd::Zero(dim, 0), 1.0};
}

GaussianLaw point_mass_law(const Eigen::VectorXd& y0) {
  return {y0, Eigen::MatrixXd::Zero(y0.size(), 0), 0.0};
}

GaussianLaw axis_aligned_law(Eigen::Index D, Eigen::Index d, double scale) {
  if (d > D) throw std::invalid_argument("axis_aligned_law: d > D");
  GaussianLaw law{Eigen::VectorXd::Zero(D), Eigen::MatrixXd::Zero(D, d), 0.0};
  for (Eigen::Index i = 0; i < d; ++i) law.factor(i, i) = scale;
  return law;
}

GaussianLaw forward_marginal(const GaussianLaw& law, double t) {
  const NoiseScales ns = noise_scales(t);
  return {ns.c * law.mean, ns.c * law.factor,
          ns.c * ns.c * law.floor + ns.sigma2};
}

GaussianLaw block_product(std::span<const GaussianLaw> blocks) {
  Eigen::Index D = 0, r = 0;
  for (const auto& b : blocks) {
    b.validate();
    D += b.ambient_dim();
    r += b.factor.cols();
  }
  if (blocks.empty()) throw std::invalid_argument("block_product: no blocks");
  const double floor = blocks.front().floor;
  GaussianLaw out{Eigen::VectorXd::Zero(D), Eigen::MatrixXd::Zero(D, r), floor};
  Eigen::Index row = 0, col = 0;
  for (const auto& b : blocks) {
    if (b.floor != floor) {
      throw std::invalid_argument("block_product: blocks must share the floor");
    }
    out.mean.segment(row, b.ambient_dim()) = b.mean;
    out.factor.block(row, col, b.ambient_dim(), b.factor.cols()) = b.factor;
    row += b.ambient_dim();
    col += b.factor.cols();
  }
  return out;
}

LowRankPlusDiagonal::LowRankPlusDiagonal(double rho, Eigen::MatrixXd B)
    : rho_(rho), B_(std::move(B)) {
  if (!(rho_ > 0.0)) {
    throw std::invalid_argument("LowRankPlusDiagonal: rho must be positive");
  }
  Eigen::MatrixXd cap = B_.transpose() * B_;
  cap.diagonal().array() += rho_;
  capacitance_.compute(cap);
}

Eigen::VectorXd LowRankPlusDiagonal::solve(const Eigen::VectorXd& v) const {
  if (B_.cols() == 0) return v / rho_;
  const Eigen::VectorXd inner = capacitance_.solve(B_.transpose() * v);
  return (v - B_ * inner) / rho_;
}

Eigen::VectorXd LowRankPlusDiagonal::apply(const Eigen::VectorXd& v) const {
  if (B_.cols() == 0) return rho_ * v;
  return rho_ * v + B_ * (B_.transpose() * v);
}

double LowRankPlusDiagonal::log_det() const {
  const auto D = static_cast<double>(dim());
  const auto r = static_cast<double>(B_.cols());
  double ld = (D - r) * std::log(rho_);
  if (B_.cols() > 0) {
    const Eigen::MatrixXd L = capacitance_.matrixL();
    ld += 2.0 * L.diagonal().array().log().sum();
  }
  return ld;
}

double LowRankPlusDiagonal::trace_inverse_times(double s_rho,
                                                const Eigen::MatrixXd& F) const {
  const auto D = static_cast<double>(dim());
  double tr_inv = D;
  double tr_ff = F.squaredNorm();
  if (B_.cols() > 0) {
    const Eigen::MatrixXd BtB = B_.transpose() * B_;
    tr_inv -= capacitance_.solve(BtB).trace();
    if (F.cols() > 0) {
      const Eigen::MatrixXd G = B_.transpose() * F;
      tr_ff -= (G.transpose() * capacitance_.solve(G)).trace();
    }
  }
  return (s_rho * tr_inv + tr_ff) / rho_;
}

LowRankPlusDiagonal marginal_covariance(const GaussianLaw& law, double t) {
  const NoiseScales ns = noise_scales(t);
  return LowRankPlusDiagonal(ns.c * ns.c * law.floor + ns.sigma2, ns.c * law.factor);
}

Eigen::MatrixXd SpectralGaussian::covariance() const {
  const Eigen::Index D = ambient_dim();
  Eigen::MatrixXd cov = complement_variance * Eigen::MatrixXd::Identity(D, D);
  if (rank() > 0) {
    const Eigen::VectorXd excess =
        variances.array() - complement_variance;
    cov += basis * excess.asDiagonal() * basis.transpose();
  }
  return cov;
}

SpectralGaussian spectral_form(const GaussianLaw& law) {
  law.validate();
  const Eigen::Index D = law.ambient_dim();
  SpectralGaussian out;
  out.mean = law.mean;
  out.complement_variance = law.floor;
  if (law.factor.cols() == 0) {
    out.basis = Eigen::MatrixXd::Zero(D, 0);
    out.variances = Eigen::VectorXd::Zero(0);
    return out;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(law.factor, Eigen::ComputeThinU);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double cutoff = 1e-12 * std::max(1.0, sv.size() > 0 ? sv[0] : 0.0);
  Eigen::Index rank = 0;
  while (rank < sv.size() && sv[rank] > cutoff) ++rank;
  out.basis = svd.matrixU().leftCols(rank);
  out.variances = sv.head(rank).array().square() + law.floor;
  return out;
}

DenseGaussian dense_form(const GaussianLaw& law) {
  return {law.mean, law.covariance()};
}

DenseGaussian dense_form(const SpectralGaussian& law) {
  return {law.mean, law.covariance()};
}

}  // namespace manidiff
