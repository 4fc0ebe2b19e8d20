#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "manidiff/gaussian.hpp"
#include "manidiff/manifold.hpp"
#include "manidiff/measures.hpp"
#include "manidiff/sampler.hpp"
#include "manidiff/schedule.hpp"

namespace manidiff::harness {

/// Raised for any configuration problem; always before computation starts.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ScheduleSpec {
  double kappa = 0.0;
  int L = 0;
  int K = 0;

  TimeSchedule build() const { return build_schedule(kappa, L, K); }
};

/// point_mass (origin of R^D), two_point ({-e_1/2, +e_1/2} in R^D), gaussian
/// (rank-d axis-aligned law of the given scale), circle, torus, hilbert
/// (point clouds of n samples, generated from the experiment seed).
struct MeasureSpec {
  std::string kind;
  std::optional<Eigen::Index> D;
  std::optional<Eigen::Index> d;
  std::optional<Eigen::Index> n;
  std::optional<double> scale;
  std::optional<int> order;
};

struct BuiltMeasure {
  OraclePtr oracle;
  std::optional<GaussianLaw> law;
  std::optional<ManifoldSpec> spec;
  std::optional<PointCloudMeasure> cloud;
};

/// Throws ConfigError when a field required by the kind is missing.
BuiltMeasure build_measure(const MeasureSpec& spec, std::uint64_t seed);

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"d-sweep",   "D-sweep",         "K-sweep",
                                                 "eps-sweep", "ei-vs-corrected", "lemma-suite"};
  return names;
}

/// Everything a run depends on besides the worker count and output directory.
struct ExperimentConfig {
  std::string preset;
  std::uint64_t seed = 0;
  std::optional<ScheduleSpec> schedule;
  MeasureSpec measure;
  Scheme scheme = Scheme::corrected;
  Initialization init = Initialization::standard_normal;
  std::vector<Eigen::Index> d_values;
  std::vector<Eigen::Index> D_values;
  std::optional<int> doublings;
  std::vector<double> eps_values;
  std::optional<std::int64_t> samples;
  bool plots = true;
};

/// INI-style text with sections:
///
///   [experiment] preset, seed
///   [schedule]   kappa, L, K
///   [measure]    kind, D, d, n, scale, order
///   [sweep]      d, D, eps (space-separated lists), doublings
///   [sampler]    scheme (corrected | ei), init (standard_normal | forward_marginal)
///   [mc]         samples
///   [output]     plots (true | false)
///
/// Comments start with ';'. Unknown sections or keys are errors. Numeric
/// fields have no defaults; validate() reports the ones a preset needs.
ExperimentConfig parse_experiment_config(std::string_view text);
ExperimentConfig load_experiment_config(const std::string& path);

/// Throws ConfigError listing every missing or invalid field for the preset.
void validate(const ExperimentConfig& config);

/// Built-in configuration of a preset, used when no config file is given.
ExperimentConfig preset_defaults(std::string_view preset);

/// Canonical INI text of a config (round-trips through the parser).
std::string to_ini(const ExperimentConfig& config);

Initialization parse_initialization(std::string_view name);
std::string to_string(Initialization init);

}  // namespace manidiff::harness
