#include "manidiff/sampler.hpp"

#include <cmath>
#include <sstream>

#include "manidiff/parallel.hpp"

namespace manidiff {

Scheme parse_scheme(std::string_view name) {
  if (name == "corrected") return Scheme::corrected;
  if (name == "ei" || name == "exponential_integrator") return Scheme::exponential_integrator;
  throw std::invalid_argument("unknown scheme '" + std::string(name) + "'");
}

std::string to_string(Scheme scheme) {
  return scheme == Scheme::corrected ? "corrected" : "ei";
}

StepCoefficients corrected_coefficients(const TimeSchedule& schedule, int k) {
  const double gamma = schedule.gap(k);
  const NoiseScales now = noise_scales(schedule.forward_time(k));
  const NoiseScales next = noise_scales(schedule.forward_time(k + 1));
  const NoiseScales step = noise_scales(gamma);
  StepCoefficients c;
  c.alpha = std::exp(gamma);
  c.beta = 2.0 * std::sinh(gamma);
  c.eta = step.sigma * next.sigma / now.sigma;
  return c;
}

StepCoefficients ei_coefficients(const TimeSchedule& schedule, int k) {
  const double gamma = schedule.gap(k);
  StepCoefficients c;
  c.alpha = std::exp(gamma);
  c.beta = 2.0 * std::expm1(gamma);
  c.eta = std::sqrt(std::expm1(2.0 * gamma));
  return c;
}

StepCoefficients step_coefficients(Scheme scheme, const TimeSchedule& schedule, int k) {
  return scheme == Scheme::corrected ? corrected_coefficients(schedule, k)
                                     : ei_coefficients(schedule, k);
}

ScoreFn exact_score(OraclePtr oracle) {
  if (!oracle) throw std::invalid_argument("exact_score: null oracle");
  return [oracle = std::move(oracle)](double t, const Eigen::VectorXd& x) {
    return oracle->score(t, x);
  };
}

bool ScoreBias::is_zero() const {
  return (offset.size() == 0 || offset.isZero(0.0)) && isotropic == 0.0 &&
         (!linear || linear->isZero(0.0));
}

Eigen::VectorXd ScoreBias::apply(const Eigen::VectorXd& x) const {
  Eigen::VectorXd out = isotropic * x;
  if (offset.size() > 0) out += offset;
  if (linear) out += *linear * x;
  return out;
}

ScoreBias ScoreBias::scaled(double factor) const {
  ScoreBias out = *this;
  out.offset *= factor;
  out.isotropic *= factor;
  if (out.linear) *out.linear *= factor;
  return out;
}

ScoreBias ScoreBias::constant(Eigen::VectorXd offset) {
  ScoreBias b;
  b.offset = std::move(offset);
  return b;
}

ScoreFn perturbed_score(ScoreFn base, ScoreBias bias) {
  if (bias.is_zero()) return base;
  return [base = std::move(base), bias = std::move(bias)](double t, const Eigen::VectorXd& x) {
    return Eigen::VectorXd(base(t, x) + bias.apply(x));
  };
}

namespace {

Eigen::VectorXd apply_step(const StepCoefficients& c, const Eigen::VectorXd& y,
                           double t, const ScoreFn& score, Rng& rng) {
  Eigen::VectorXd out = c.alpha * y + c.beta * score(t, y);
  out += c.eta * standard_normal(y.size(), rng);
  return out;
}

}  // namespace

Eigen::VectorXd corrected_step(const Eigen::VectorXd& y, int k, const TimeSchedule& schedule,
                               const ScoreFn& score, Rng& rng) {
  return apply_step(corrected_coefficients(schedule, k), y, schedule.forward_time(k), score, rng);
}

Eigen::VectorXd ei_step(const Eigen::VectorXd& y, int k, const TimeSchedule& schedule,
                        const ScoreFn& score, Rng& rng) {
  return apply_step(ei_coefficients(schedule, k), y, schedule.forward_time(k), score, rng);
}

Eigen::VectorXd scheme_step(Scheme scheme, const Eigen::VectorXd& y, int k,
                            const TimeSchedule& schedule, const ScoreFn& score, Rng& rng) {
  return apply_step(step_coefficients(scheme, schedule, k), y, schedule.forward_time(k), score,
                    rng);
}

Eigen::VectorXd corrected_score_from(double t, const Eigen::VectorXd& x, double t2,
                                     const Eigen::VectorXd& x2,
                                     const Eigen::VectorXd& base_at_t2) {
  if (!(t > 0.0) || t2 < t) {
    throw std::invalid_argument("corrected_score: requires 0 < t <= t2");
  }
  const NoiseScales now = noise_scales(t);
  const NoiseScales later = noise_scales(t2);
  const double inv_c = std::exp(t2 - t);
  return inv_c * (later.sigma2 / now.sigma2) * base_at_t2 - (x - inv_c * x2) / now.sigma2;
}

Eigen::VectorXd corrected_score(double t, const Eigen::VectorXd& x, double t2,
                                const Eigen::VectorXd& x2, const ScoreFn& base) {
  if (!(t > 0.0) || t2 < t) {
    throw std::invalid_argument("corrected_score: requires 0 < t <= t2");
  }
  return corrected_score_from(t, x, t2, x2, base(t2, x2));
}

Eigen::VectorXd fine_integrate_step(const Eigen::VectorXd& y, int k,
                                    const TimeSchedule& schedule, const ScoreFn& base,
                                    int substeps, Rng& rng, bool noise) {
  if (substeps < 1) throw std::invalid_argument("fine_integrate_step: substeps must be >= 1");
  const double start = schedule.time(k);
  const double h = schedule.gap(k) / substeps;
  const double anchor = schedule.forward_time(k);
  const Eigen::VectorXd anchor_score = base(anchor, y);
  const double noise_scale = std::sqrt(2.0 * h);

  Eigen::VectorXd state = y;
  for (int j = 0; j < substeps; ++j) {
    const double u = schedule.horizon() - (start + j * h);
    const Eigen::VectorXd drift =
        state + 2.0 * corrected_score_from(u, state, anchor, y, anchor_score);
    state += h * drift;
    if (noise) state += noise_scale * standard_normal(y.size(), rng);
  }
  return state;
}

StepMoments fine_integrate_moments(const Eigen::VectorXd& y, int k,
                                   const TimeSchedule& schedule, const ScoreFn& base,
                                   int substeps) {
  if (substeps < 1) throw std::invalid_argument("fine_integrate_moments: substeps must be >= 1");
  const double start = schedule.time(k);
  const double h = schedule.gap(k) / substeps;
  const double anchor = schedule.forward_time(k);
  const Eigen::VectorXd anchor_score = base(anchor, y);

  // Drift = a(u) Y + b(u), a(u) = 1 - 2 / sigma_u^2.
  StepMoments m{y, 0.0};
  for (int j = 0; j < substeps; ++j) {
    const double u = schedule.horizon() - (start + j * h);
    const Eigen::VectorXd b =
        2.0 * corrected_score_from(u, Eigen::VectorXd::Zero(y.size()), anchor, y, anchor_score);
    const double slope = 1.0 + h * (1.0 - 2.0 / noise_scales(u).sigma2);
    m.mean = slope * m.mean + h * b;
    m.variance = slope * slope * m.variance + 2.0 * h;
  }
  return m;
}

StepMoments corrected_step_moments(const Eigen::VectorXd& y, int k,
                                   const TimeSchedule& schedule, const ScoreFn& base) {
  const StepCoefficients c = corrected_coefficients(schedule, k);
  return {c.alpha * y + c.beta * base(schedule.forward_time(k), y), c.eta * c.eta};
}

void ReverseRunConfig::validate() const {
  if (batch < 1) throw std::invalid_argument("ReverseRunConfig: batch must be >= 1");
  if (record_every < 0) throw std::invalid_argument("ReverseRunConfig: record_every must be >= 0");
  const ScheduleReport report = validate_schedule(schedule);
  if (!report.ok()) {
    throw std::invalid_argument("ReverseRunConfig: schedule rejected\n" + report.summary());
  }
}

NonFiniteStateError::NonFiniteStateError(int step, Eigen::Index sample)
    : std::runtime_error([&] {
        std::ostringstream msg;
        msg << "non-finite sampler state at step " << step << " (sample " << sample << ")";
        return msg.str();
      }()),
      step_(step),
      sample_(sample) {}

namespace {

ReverseRun run_impl(const ReverseRunConfig& config, const ScoreFn& score, Eigen::Index dim,
                    const ScoreOracle* oracle) {
  config.validate();
  const TimeSchedule& sched = config.schedule;
  const int K = sched.steps();
  const auto batch = static_cast<Eigen::Index>(config.batch);

  std::vector<StepCoefficients> coeffs(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) coeffs[static_cast<std::size_t>(k)] = step_coefficients(config.scheme, sched, k);

  ReverseRun run;
  if (config.record_every > 0) {
    for (int k = 0; k <= K; k += config.record_every) run.recorded_steps.push_back(k);
    if (run.recorded_steps.back() != K) run.recorded_steps.push_back(K);
    run.frames.assign(run.recorded_steps.size(), PointCloudMeasure::Points(batch, dim));
  }
  run.terminal.resize(batch, dim);

  parallel_for(static_cast<std::size_t>(batch), config.workers, [&](std::size_t idx) {
    const auto i = static_cast<Eigen::Index>(idx);
    Rng rng = make_stream(config.seed, idx);
    Eigen::VectorXd y = config.init == Initialization::forward_marginal
                            ? forward_sample(*oracle, sched.horizon(), rng).xt
                            : standard_normal(dim, rng);
    std::size_t frame = 0;
    for (int k = 0; k <= K; ++k) {
      if (frame < run.recorded_steps.size() && run.recorded_steps[frame] == k) {
        run.frames[frame].row(i) = y.transpose();
        ++frame;
      }
      if (k == K) break;
      y = apply_step(coeffs[static_cast<std::size_t>(k)], y, sched.forward_time(k), score, rng);
      if (!y.allFinite()) throw NonFiniteStateError(k, i);
    }
    run.terminal.row(i) = y.transpose();
  });
  return run;
}

}  // namespace

ReverseRun run_reverse(const ReverseRunConfig& config, const OraclePtr& oracle) {
  if (!oracle) throw std::invalid_argument("run_reverse: null oracle");
  return run_impl(config, perturbed_score(exact_score(oracle), config.bias), oracle->dim(),
                  oracle.get());
}

ReverseRun run_reverse(const ReverseRunConfig& config, const ScoreFn& score, Eigen::Index dim) {
  if (config.init != Initialization::standard_normal) {
    throw std::invalid_argument("run_reverse: forward_marginal initialization needs an oracle");
  }
  return run_impl(config, perturbed_score(score, config.bias), dim, nullptr);
}

}  // namespace manidiff
