#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "manidiff/measures.hpp"
#include "manidiff/rng.hpp"
#include "manidiff/schedule.hpp"

namespace manidiff {

/// One reverse step has the form y' = alpha * y + beta * s(T - t_k, y) + eta * z.
struct StepCoefficients {
  double alpha = 1.0;
  double beta = 0.0;
  double eta = 0.0;
};

enum class Scheme { corrected, exponential_integrator };

Scheme parse_scheme(std::string_view name);
std::string to_string(Scheme scheme);

/// alpha = e^gamma, beta = e^gamma - e^-gamma,
/// eta = sigma_gamma * sigma_{T - t_{k+1}} / sigma_{T - t_k}.
StepCoefficients corrected_coefficients(const TimeSchedule& schedule, int k);

/// Score frozen over the step: alpha = e^gamma, beta = 2 (e^gamma - 1),
/// eta = sqrt(e^{2 gamma} - 1).
StepCoefficients ei_coefficients(const TimeSchedule& schedule, int k);

StepCoefficients step_coefficients(Scheme scheme, const TimeSchedule& schedule, int k);

/// Score function s(t, x) at forward time t.
using ScoreFn = std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>;

/// Wraps an oracle's exact score; the oracle is kept alive by the closure.
ScoreFn exact_score(OraclePtr oracle);

/// Affine perturbation added to the exact score:
///   bias(x) = offset + isotropic * x + linear * x.
/// Any part may be absent. Without `linear` the perturbation commutes with
/// every spectral basis, which keeps exact Gaussian propagation diagonal.
struct ScoreBias {
  Eigen::VectorXd offset;
  double isotropic = 0.0;
  std::optional<Eigen::MatrixXd> linear;

  bool is_zero() const;
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  ScoreBias scaled(double factor) const;

  static ScoreBias constant(Eigen::VectorXd offset);
};

ScoreFn perturbed_score(ScoreFn base, ScoreBias bias);

Eigen::VectorXd corrected_step(const Eigen::VectorXd& y, int k, const TimeSchedule& schedule,
                               const ScoreFn& score, Rng& rng);
Eigen::VectorXd ei_step(const Eigen::VectorXd& y, int k, const TimeSchedule& schedule,
                        const ScoreFn& score, Rng& rng);
Eigen::VectorXd scheme_step(Scheme scheme, const Eigen::VectorXd& y, int k,
                            const TimeSchedule& schedule, const ScoreFn& score, Rng& rng);

/// First-order corrected score s(t, x | t2, x2):
///   c_{t2-t}^{-1} (sigma_{t2}^2 / sigma_t^2) s(t2, x2)
///     - (x - c_{t2-t}^{-1} x2) / sigma_t^2.
/// Requires 0 < t <= t2; at t2 = t, x2 = x it returns s(t, x).
Eigen::VectorXd corrected_score(double t, const Eigen::VectorXd& x, double t2,
                                const Eigen::VectorXd& x2, const ScoreFn& base);
/// Same, with the base score value s(t2, x2) supplied by the caller.
Eigen::VectorXd corrected_score_from(double t, const Eigen::VectorXd& x, double t2,
                                     const Eigen::VectorXd& x2,
                                     const Eigen::VectorXd& base_at_t2);

/// Euler-Maruyama over [t_k, t_{k+1}] of
///   dY = [Y + 2 s(T - t, Y | T - t_k, y)] dt + sqrt(2) dB
/// with the conditioning pair frozen at the step start. `noise = false`
/// drops the Brownian increments.
Eigen::VectorXd fine_integrate_step(const Eigen::VectorXd& y, int k,
                                    const TimeSchedule& schedule, const ScoreFn& base,
                                    int substeps, Rng& rng, bool noise = true);

/// Conditional law N(mean, variance * I) of a single step given y.
struct StepMoments {
  Eigen::VectorXd mean;
  double variance = 0.0;
};

/// Exact law of the Euler-Maruyama recursion of `fine_integrate_step`: the
/// drift is affine in Y with an isotropic slope, so mean and variance obey a
/// deterministic recursion.
StepMoments fine_integrate_moments(const Eigen::VectorXd& y, int k,
                                   const TimeSchedule& schedule, const ScoreFn& base,
                                   int substeps);

/// (alpha y + beta s(T - t_k, y), eta^2) of the corrected step.
StepMoments corrected_step_moments(const Eigen::VectorXd& y, int k,
                                   const TimeSchedule& schedule, const ScoreFn& base);

enum class Initialization {
  standard_normal,   // N(0, I_D), the practical sampler
  forward_marginal,  // exact law of X_T, isolating discretization error
};

struct ReverseRunConfig {
  TimeSchedule schedule;
  Scheme scheme = Scheme::corrected;
  ScoreBias bias;
  Initialization init = Initialization::standard_normal;
  int batch = 1;
  std::uint64_t seed = 0;
  int workers = 1;
  /// Record every n-th state (0 disables trajectory recording).
  int record_every = 0;

  /// Throws std::invalid_argument if batch < 1 or the schedule fails
  /// validate_schedule.
  void validate() const;
};

struct ReverseRun {
  PointCloudMeasure::Points terminal;  // batch x D
  std::vector<int> recorded_steps;
  std::vector<PointCloudMeasure::Points> frames;  // one batch x D frame per recorded step
};

class NonFiniteStateError : public std::runtime_error {
 public:
  NonFiniteStateError(int step, Eigen::Index sample);
  int step() const { return step_; }
  Eigen::Index sample() const { return sample_; }

 private:
  int step_;
  Eigen::Index sample_;
};

/// Runs the configured scheme from the configured initialization. Sample i
/// draws all of its randomness from make_stream(seed, i), so the output is
/// bit-identical for any worker count.
ReverseRun run_reverse(const ReverseRunConfig& config, const OraclePtr& oracle);

/// Same with a caller-supplied score; only standard_normal initialization.
ReverseRun run_reverse(const ReverseRunConfig& config, const ScoreFn& score, Eigen::Index dim);

}  // namespace manidiff
