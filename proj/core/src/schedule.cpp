#include "manidiff/schedule.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace manidiff {

namespace {

// Relative slack for comparisons that are exact in real arithmetic.
constexpr double kRoundoff = 1e-12;

}  // namespace

NoiseScales noise_scales(double t) {
  if (!std::isfinite(t) || t < 0.0) {
    throw std::invalid_argument("noise_scales: t must be finite and >= 0");
  }
  NoiseScales s;
  s.t = t;
  s.c = std::exp(-t);
  s.sigma2 = -std::expm1(-2.0 * t);
  s.sigma = std::sqrt(s.sigma2);
  return s;
}

TimeSchedule::TimeSchedule(double kappa, std::optional<int> uniform_steps,
                           double horizon, double early_stop,
                           std::vector<double> times)
    : kappa_(kappa),
      uniform_steps_(uniform_steps),
      horizon_(horizon),
      early_stop_(early_stop),
      times_(std::move(times)) {
  if (times_.size() < 2) {
    throw std::invalid_argument("TimeSchedule: need at least one step");
  }
}

double TimeSchedule::gap(int k) const {
  if (k < 0 || k >= steps()) {
    throw std::out_of_range("TimeSchedule::gap: step index out of range");
  }
  return times_[static_cast<std::size_t>(k) + 1] -
         times_[static_cast<std::size_t>(k)];
}

TimeSchedule build_schedule(double kappa, int L, int K) {
  if (!(kappa > 0.0 && kappa <= 0.25)) {
    throw std::invalid_argument("build_schedule: kappa must lie in (0, 1/4]");
  }
  if (L < 1) throw std::invalid_argument("build_schedule: L must be >= 1");
  if (K <= L) throw std::invalid_argument("build_schedule: K must exceed L");

  const double horizon = kappa * L + 1.0;
  const double delta = std::pow(1.0 + kappa, static_cast<double>(L - K));

  std::vector<double> times(static_cast<std::size_t>(K) + 1);
  for (int k = 0; k <= L; ++k) times[static_cast<std::size_t>(k)] = kappa * k;
  for (int m = 1; m <= K - L; ++m) {
    times[static_cast<std::size_t>(L + m)] =
        horizon - std::pow(1.0 + kappa, -static_cast<double>(m));
  }
  return TimeSchedule(kappa, L, horizon, delta, std::move(times));
}

bool ScheduleReport::ok() const {
  for (const auto& c : checks) {
    if (!c.passed) return false;
  }
  return true;
}

std::string ScheduleReport::summary() const {
  std::ostringstream out;
  for (const auto& c : checks) {
    out << (c.passed ? "PASS " : "FAIL ") << c.name;
    if (c.index) out << " k=" << *c.index;
    if (!c.detail.empty()) out << " (" << c.detail << ")";
    out << '\n';
  }
  return out.str();
}

ScheduleReport validate_schedule(const TimeSchedule& s) {
  ScheduleReport report;
  auto add = [&report](std::string name, bool passed,
                       std::optional<int> index = std::nullopt,
                       std::string detail = {}) {
    report.checks.push_back({std::move(name), passed, index, std::move(detail)});
  };

  const double kappa = s.kappa();
  add("kappa_range", kappa > 0.0 && kappa < 0.25, std::nullopt,
      "kappa=" + std::to_string(kappa));
  add("early_stop_positive", s.early_stop() > 0.0 && s.early_stop() < s.horizon());

  const auto t = s.times();
  bool finite = true;
  for (double v : t) finite = finite && std::isfinite(v);
  add("finite", finite);
  add("starts_at_zero", t.front() == 0.0);

  const double end = s.horizon() - s.early_stop();
  add("ends_at_horizon_minus_delta",
      std::abs(t.back() - end) <= kRoundoff * std::max(1.0, std::abs(end)));

  std::optional<int> non_monotone;
  for (int k = 0; k < s.steps(); ++k) {
    if (!(t[k + 1] > t[k])) {
      non_monotone = k;
      break;
    }
  }
  add("strictly_increasing", !non_monotone, non_monotone);

  std::optional<int> too_long;
  std::string detail;
  for (int k = 0; k < s.steps(); ++k) {
    const double gamma = t[k + 1] - t[k];
    const double bound = kappa * std::min(1.0, s.horizon() - t[k]);
    if (gamma > bound * (1.0 + kRoundoff)) {
      too_long = k;
      std::ostringstream d;
      d << "gamma=" << gamma << " > " << bound;
      detail = d.str();
      break;
    }
  }
  add("step_bound", !too_long, too_long, detail);
  return report;
}

std::string to_record(const TimeSchedule& s) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "kappa " << s.kappa() << '\n';
  out << "L ";
  if (s.uniform_steps()) {
    out << *s.uniform_steps();
  } else {
    out << "none";
  }
  out << '\n';
  out << "K " << s.steps() << '\n';
  out << "T " << s.horizon() << '\n';
  out << "delta " << s.early_stop() << '\n';
  out << "times";
  for (double v : s.times()) out << ' ' << v;
  out << '\n';
  return out.str();
}

TimeSchedule parse_record(std::string_view text) {
  std::istringstream in{std::string(text)};
  double kappa = std::numeric_limits<double>::quiet_NaN();
  double horizon = kappa, delta = kappa;
  std::optional<int> L;
  int K = -1;
  std::vector<double> times;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string key;
    if (!(fields >> key)) continue;
    if (key == "kappa") {
      fields >> kappa;
    } else if (key == "L") {
      std::string v;
      fields >> v;
      if (v != "none") L = std::stoi(v);
    } else if (key == "K") {
      fields >> K;
    } else if (key == "T") {
      fields >> horizon;
    } else if (key == "delta") {
      fields >> delta;
    } else if (key == "times") {
      double v;
      while (fields >> v) times.push_back(v);
    } else {
      throw std::invalid_argument("parse_record: unknown key '" + key + "'");
    }
    if (fields.fail() && !fields.eof()) {
      throw std::invalid_argument("parse_record: malformed value for '" + key + "'");
    }
  }
  if (!std::isfinite(kappa) || !std::isfinite(horizon) || !std::isfinite(delta)) {
    throw std::invalid_argument("parse_record: kappa, T and delta are required");
  }
  if (K < 1 || static_cast<int>(times.size()) != K + 1) {
    throw std::invalid_argument("parse_record: times list does not match K");
  }
  return TimeSchedule(kappa, L, horizon, delta, std::move(times));
}

}  // namespace manidiff
