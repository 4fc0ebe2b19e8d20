#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace manidiff {

/// Ornstein-Uhlenbeck noise scales at time t: X_t = c X_0 + sigma Z.
struct NoiseScales {
  double t = 0.0;
  double c = 1.0;       // exp(-t)
  double sigma2 = 0.0;  // 1 - exp(-2t)
  double sigma = 0.0;
};

/// Evaluates (c, sigma^2, sigma) at t >= 0. sigma^2 goes through expm1 so that
/// sigma^2 ~ 2t holds to full precision for t << 1.
/// Throws std::invalid_argument for negative or non-finite t.
NoiseScales noise_scales(double t);

/// Discretization grid 0 = t_0 < ... < t_K = T - delta for the reverse process.
///
/// Grids built by `build_schedule` follow the uniform-then-exponential
/// construction: t_k = kappa * k for k <= L and t_{L+m} = T - (1+kappa)^{-m},
/// with T = kappa * L + 1 and delta = (1+kappa)^{L-K}. Externally supplied grids
/// carry no L and are admitted through `validate_schedule`.
class TimeSchedule {
 public:
  TimeSchedule(double kappa, std::optional<int> uniform_steps, double horizon,
               double early_stop, std::vector<double> times);

  double kappa() const { return kappa_; }
  std::optional<int> uniform_steps() const { return uniform_steps_; }
  int steps() const { return static_cast<int>(times_.size()) - 1; }
  double horizon() const { return horizon_; }
  double early_stop() const { return early_stop_; }

  std::span<const double> times() const { return times_; }
  double time(int k) const { return times_.at(static_cast<std::size_t>(k)); }
  /// gamma_k = t_{k+1} - t_k.
  double gap(int k) const;
  /// Physical (forward) time T - t_k at which the score is queried on step k.
  double forward_time(int k) const { return horizon_ - time(k); }

  friend bool operator==(const TimeSchedule&, const TimeSchedule&) = default;

 private:
  double kappa_;
  std::optional<int> uniform_steps_;
  double horizon_;
  double early_stop_;
  std::vector<double> times_;
};

/// Throws std::invalid_argument unless 0 < kappa <= 1/4 and 1 <= L < K. The
/// boundary kappa = 1/4 builds a well-formed grid but fails the strict
/// kappa_range check of validate_schedule, so samplers refuse it.
TimeSchedule build_schedule(double kappa, int L, int K);

struct ScheduleCheck {
  std::string name;
  bool passed = true;
  std::optional<int> index;  // first violating index, when applicable
  std::string detail;
};

struct ScheduleReport {
  std::vector<ScheduleCheck> checks;

  bool ok() const;
  std::string summary() const;
};

/// Checks kappa range, endpoints, strict monotonicity and the step bound
/// gamma_k <= kappa * min(1, T - t_k). Never throws.
ScheduleReport validate_schedule(const TimeSchedule& schedule);

/// Plain-text replay record: kappa, L, K, T, delta and every time at 17
/// significant digits.
std::string to_record(const TimeSchedule& schedule);
TimeSchedule parse_record(std::string_view text);

}  // namespace manidiff
