#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "manidiff/gaussian.hpp"
#include "manidiff/manifold.hpp"
#include "manidiff/measures.hpp"
#include "manidiff/sampler.hpp"
#include "manidiff/schedule.hpp"

namespace manidiff {

/// Minimum eigenvalue accepted for the reference covariance in a KL.
inline constexpr double kCovarianceFloor = 1e-12;

struct MetricComponent {
  int k = 0;
  double t = 0.0;
  double value = 0.0;
  double std_error = 0.0;
  /// Report-specific auxiliary column (documented by each producer).
  double aux = 0.0;
};

/// Exact computations carry stderr = 0 and n_samples = 0.
struct MetricReport {
  std::string name;
  double value = 0.0;
  double std_error = 0.0;
  std::int64_t n_samples = 0;
  std::uint64_t seed = 0;
  std::vector<MetricComponent> components;
  std::map<std::string, double> extras;

  double extra(const std::string& key) const;
};

/// Flat "key value" lines: name, value, stderr, n_samples, seed, then extras
/// in key order. Components are not included.
void write_record(std::ostream& out, const MetricReport& report);
/// Long format with header "k,t,value,stderr,aux".
void write_components_csv(std::ostream& out, const MetricReport& report);

/// KL(p || q) for multivariate normals. Throws std::domain_error when q's
/// smallest covariance eigenvalue is <= kCovarianceFloor; returns +inf when p
/// is singular and q is not.
double gaussian_kl(const GaussianLaw& p, const GaussianLaw& q);
/// Laws sharing a basis are compared direction by direction; otherwise the
/// dense formula is used.
double gaussian_kl(const SpectralGaussian& p, const SpectralGaussian& q);
double gaussian_kl(const DenseGaussian& p, const DenseGaussian& q);

/// Exact law of the sampler output when data is Gaussian and the score is the
/// exact affine score plus a bias without a dense linear part. Every step is
/// diagonal in the data's spectral basis.
SpectralGaussian propagate_affine_reverse(const GaussianLaw& data, const ReverseRunConfig& config);
/// Same with full covariance matrices; accepts any ScoreBias.
DenseGaussian propagate_affine_reverse_dense(const GaussianLaw& data,
                                             const ReverseRunConfig& config);

/// Law of X_t in the data's spectral basis.
SpectralGaussian spectral_marginal(const GaussianLaw& data, double t);

/// KL between the sampler output (config.init as given) and the law of X_delta.
///
/// extras:
///   discretization_kl  same KL with forward_marginal initialization
///   init_kl            KL(law of X_T || N(0, I))
///   path_kl            KL between the sampler's and the true reverse chain's
///                      path laws from X_T (no dense bias only; NaN otherwise)
///   D, d               ambient dimension and data rank
MetricReport kl_experiment(const GaussianLaw& data, const ReverseRunConfig& config);

/// KL of the discrete-time path laws started at the law of X_T. The true
/// reverse chain transitions are the Gaussian conditionals of X_{T - t_{k+1}}
/// given X_{T - t_k}.
double path_kl(const GaussianLaw& data, const ReverseRunConfig& config);

enum class MeterQuadrature { right_endpoint, midpoint };

struct McOptions {
  std::int64_t n = 1000;
  std::uint64_t seed = 0;
  int workers = 1;
};

/// Per step k, with a = T - t_{k+1} < b = T - t_k and u the evaluation time
/// (u = a for right_endpoint, (a + b) / 2 for midpoint):
///   gamma_k * c_u^2 / sigma_u^4 * E||m_u(X_u) - m_b(X_b)||^2.
/// Sample i draws X_0, X_u, X_b from make_stream(seed, i); components carry
/// per-step means (aux = u). Requires n >= 100.
MetricReport discretization_error_meter(const ScoreOracle& oracle, const TimeSchedule& schedule,
                                        const McOptions& mc,
                                        MeterQuadrature mode = MeterQuadrature::right_endpoint);

/// Closed form of the meter for Gaussian data.
MetricReport exact_discretization_error(const GaussianLaw& data, const TimeSchedule& schedule,
                                        MeterQuadrature mode = MeterQuadrature::right_endpoint);

struct MartingaleOptions {
  /// Allows t2 == t3, in which case the residual is identically 0.
  bool allow_degenerate = false;
  /// Equal-count bins along the first coordinate of X_{t3}.
  int tower_bins = 20;
};

/// M_j = m_{t_j}(X_{t_j}) on jointly sampled OU paths (M_1 = X_0 at t1 = 0).
/// value: mean of ||M3-M1||^2 - ||M3-M2||^2 - ||M2-M1||^2 with stderr.
/// extras: inc_31, inc_32, inc_21 (and *_stderr), tower_residual.
/// Requires 0 <= t1 < t2 < t3.
MetricReport martingale_checks(const ScoreOracle& oracle, double t1, double t2, double t3,
                               const McOptions& mc, const MartingaleOptions& options = {});

/// value: E||s_{t1}(X_{t1}|t3, X_{t3}) - s_{t1}(X_{t1})||^2 minus the same at
/// t2, estimated from paired paths. extras: err_t1, err_t2 (and *_stderr).
/// Requires 0 < t1 < t2 < t3.
MetricReport monotonicity_check(const ScoreOracle& oracle, double t1, double t2, double t3,
                                const McOptions& mc);

/// E||X_0 - m_t(X_t)||^2 per t, one component per time (aux = stderr of the
/// paired difference with the previous time). Each sample reuses one
/// (X_0, Z) across all times. With a spec, extras normalized_<k> hold
///   value / (d t (log(1/t_min) + C)).
/// value is the maximum over times.
MetricReport concentration_curve(const ScoreOracle& oracle, const std::vector<double>& times,
                                 const McOptions& mc,
                                 const std::optional<ManifoldSpec>& spec = std::nullopt);

/// value = eps^2_score = sum_k gamma_k E||bias(X_{T - t_k})||^2 in closed
/// form. extras: kl_perturbed, kl_unperturbed, delta_kl, ratio (delta_kl /
/// eps^2, NaN at eps = 0). The KLs use config.init; config.bias is ignored in
/// favour of `bias`.
MetricReport score_error_budget(const GaussianLaw& data, const ScoreBias& bias,
                                const ReverseRunConfig& config);

struct TweedieCheckOptions {
  int cases = 100;
  double t_min = 0.01;
  double t_max = 2.0;
  double step = 1e-5;
  std::uint64_t seed = 0;
};

/// Compares score(t, x) with the central finite-difference gradient of
/// log_marginal at log-uniform t and x ~ p_t. value is the largest
///   |score - fd|_inf / max(1, |fd|_inf)
/// over the cases. Requires has_log_marginal().
MetricReport tweedie_fd_check(const ScoreOracle& oracle, const TweedieCheckOptions& options);

/// Mean and standard error of the mean.
struct MeanStderr {
  double mean = 0.0;
  double std_error = 0.0;
};
MeanStderr mean_stderr(const std::vector<double>& values);

}  // namespace manidiff
