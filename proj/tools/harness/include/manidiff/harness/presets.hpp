#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "manidiff/harness/config.hpp"
#include "manidiff/harness/output.hpp"

namespace manidiff::harness {

struct PresetResult {
  Table table;
  /// Fit statistics and aggregate verdicts, written to the metadata file.
  Metadata summary;
  std::vector<PlotSpec> plots;
  /// False when a lemma-suite check fails.
  bool passed = true;
};

/// Validates the config, then runs the preset. Sweep points run on up to
/// `workers` threads; results are independent of the worker count.
PresetResult run_preset(const ExperimentConfig& config, int workers);

/// Runs the preset and writes <preset>.csv, .json, .meta (summary, seed,
/// versions), .ini (config echo) and, with plots enabled, .svg into out_dir.
/// Returns the result and the written paths.
PresetResult run_experiment(const ExperimentConfig& config, int workers,
                            const std::filesystem::path& out_dir,
                            std::vector<std::filesystem::path>* written = nullptr);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Ordinary least squares y = slope x + intercept. Needs two distinct x.
LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y);

/// Library, Eigen and compiler versions.
Metadata version_metadata();

}  // namespace manidiff::harness
