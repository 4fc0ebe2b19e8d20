#include "manidiff/harness/presets.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "manidiff/metrics.hpp"
#include "manidiff/parallel.hpp"

#ifndef MANIDIFF_VERSION
#define MANIDIFF_VERSION "unknown"
#endif

namespace manidiff::harness {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

ReverseRunConfig run_config(const ExperimentConfig& c, const TimeSchedule& schedule) {
  ReverseRunConfig rc{schedule};
  rc.scheme = c.scheme;
  rc.init = c.init;
  return rc;
}

GaussianLaw rank_law(const ExperimentConfig& c, Eigen::Index D, Eigen::Index d) {
  return axis_aligned_law(D, d, *c.measure.scale);
}

std::string fmt(double v) { return format_double(v); }

PresetResult d_sweep(const ExperimentConfig& c, int workers) {
  const TimeSchedule sched = c.schedule->build();
  const Eigen::Index D = *c.measure.D;
  std::vector<MetricReport> reports(c.d_values.size());
  parallel_for(reports.size(), workers, [&](std::size_t i) {
    reports[i] = kl_experiment(rank_law(c, D, c.d_values[i]), run_config(c, sched));
  });

  PresetResult r;
  r.table.columns = {"d", "D", "kl", "discretization_kl", "init_kl", "path_kl"};
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& m = reports[i];
    r.table.add_row({static_cast<std::int64_t>(c.d_values[i]), static_cast<std::int64_t>(D), m.value,
                     m.extra("discretization_kl"), m.extra("init_kl"), m.extra("path_kl")});
    xs.push_back(static_cast<double>(c.d_values[i]));
    ys.push_back(m.extra("discretization_kl"));
  }
  const LinearFit fit = linear_fit(xs, ys);
  r.summary["fit.slope"] = fmt(fit.slope);
  r.summary["fit.intercept"] = fmt(fit.intercept);
  r.summary["fit.r2"] = fmt(fit.r2);
  r.summary["fit.intercept_fraction"] = fmt(std::abs(fit.intercept) / ys.back());
  r.plots.push_back({"discretization KL vs intrinsic dimension", "d",
                     {{"discretization_kl", "discretization KL"}}, false, false});
  return r;
}

PresetResult D_sweep(const ExperimentConfig& c, int workers) {
  const TimeSchedule sched = c.schedule->build();
  const Eigen::Index d = *c.measure.d;
  std::vector<MetricReport> reports(c.D_values.size());
  parallel_for(reports.size(), workers, [&](std::size_t i) {
    reports[i] = kl_experiment(rank_law(c, c.D_values[i], d), run_config(c, sched));
  });

  PresetResult r;
  r.table.columns = {"D", "d", "kl", "discretization_kl", "init_kl"};
  double kl_lo = INFINITY, kl_hi = -INFINITY, init_lo = INFINITY, init_hi = -INFINITY;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& m = reports[i];
    r.table.add_row({static_cast<std::int64_t>(c.D_values[i]), static_cast<std::int64_t>(d), m.value,
                     m.extra("discretization_kl"), m.extra("init_kl")});
    kl_lo = std::min(kl_lo, m.value);
    kl_hi = std::max(kl_hi, m.value);
    init_lo = std::min(init_lo, m.extra("init_kl"));
    init_hi = std::max(init_hi, m.extra("init_kl"));
  }
  const double bound = 1e-6 + (init_hi - init_lo);
  r.summary["kl_spread"] = fmt(kl_hi - kl_lo);
  r.summary["init_kl_spread"] = fmt(init_hi - init_lo);
  r.summary["spread_bound"] = fmt(bound);
  r.summary["within_bound"] = (kl_hi - kl_lo) <= bound ? "true" : "false";
  r.plots.push_back({"terminal KL vs ambient dimension", "D", {{"kl", "KL"}}, true, false});
  return r;
}

PresetResult K_sweep(const ExperimentConfig& c, int workers) {
  const ScheduleSpec base = *c.schedule;
  const int steps = *c.doublings + 1;
  std::vector<ScheduleSpec> specs;
  for (int j = 0; j < steps; ++j) {
    // Halve kappa, double L (T fixed) and rescale K - L so delta stays put.
    const double kappa = base.kappa / std::pow(2.0, j);
    const int L = base.L << j;
    const double m = (base.K - base.L) * std::log1p(base.kappa) / std::log1p(kappa);
    specs.push_back({kappa, L, L + static_cast<int>(std::lround(m))});
  }
  const GaussianLaw law = rank_law(c, *c.measure.D, *c.measure.d);
  std::vector<MetricReport> reports(specs.size());
  parallel_for(specs.size(), workers, [&](std::size_t i) {
    reports[i] = kl_experiment(law, run_config(c, specs[i].build()));
  });

  PresetResult r;
  r.table.columns = {"kappa", "L", "K", "T", "delta", "discretization_kl", "kl_ratio", "path_kl",
                     "path_ratio"};
  double lo = INFINITY, hi = -INFINITY, plo = INFINITY, phi = -INFINITY;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& m = reports[i];
    double ratio = kNaN, pratio = kNaN;
    if (i > 0) {
      ratio = reports[i - 1].extra("discretization_kl") / m.extra("discretization_kl");
      pratio = reports[i - 1].extra("path_kl") / m.extra("path_kl");
      lo = std::min(lo, ratio), hi = std::max(hi, ratio);
      plo = std::min(plo, pratio), phi = std::max(phi, pratio);
    }
    r.table.add_row({specs[i].kappa, static_cast<std::int64_t>(specs[i].L),
                     static_cast<std::int64_t>(specs[i].K), m.extra("T"), m.extra("delta"),
                     m.extra("discretization_kl"), ratio, m.extra("path_kl"), pratio});
  }
  r.summary["kl_ratio_min"] = fmt(lo);
  r.summary["kl_ratio_max"] = fmt(hi);
  r.summary["kl_ratio_in_band_1.7_2.3"] = (lo >= 1.7 && hi <= 2.3) ? "true" : "false";
  r.summary["path_ratio_min"] = fmt(plo);
  r.summary["path_ratio_max"] = fmt(phi);
  r.plots.push_back({"discretization KL vs steps", "K",
                     {{"discretization_kl", "terminal KL"}, {"path_kl", "path KL"}}, true, true});
  return r;
}

PresetResult eps_sweep(const ExperimentConfig& c, int workers) {
  const TimeSchedule sched = c.schedule->build();
  const Eigen::Index D = *c.measure.D;
  const GaussianLaw law = rank_law(c, D, *c.measure.d);
  std::vector<MetricReport> reports(c.eps_values.size());
  parallel_for(reports.size(), workers, [&](std::size_t i) {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(D);
    a[0] = c.eps_values[i];
    reports[i] = score_error_budget(law, ScoreBias::constant(a), run_config(c, sched));
  });

  PresetResult r;
  r.table.columns = {"eps", "eps2_score", "kl_perturbed", "kl_unperturbed", "delta_kl", "ratio"};
  std::vector<double> le, ld;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& m = reports[i];
    r.table.add_row({c.eps_values[i], m.value, m.extra("kl_perturbed"), m.extra("kl_unperturbed"),
                     m.extra("delta_kl"), m.extra("ratio")});
    le.push_back(std::log(c.eps_values[i]));
    ld.push_back(std::log(m.extra("delta_kl")));
  }
  r.summary["loglog_slope"] = fmt(linear_fit(le, ld).slope);
  r.plots.push_back({"KL increase vs score bias", "eps",
                     {{"delta_kl", "delta KL"}, {"eps2_score", "eps^2 score"}}, true, true});
  return r;
}

PresetResult ei_vs_corrected(const ExperimentConfig& c, int workers) {
  const TimeSchedule sched = c.schedule->build();
  const Eigen::Index d = *c.measure.d;
  std::vector<MetricReport> corrected(c.D_values.size()), ei(c.D_values.size());
  parallel_for(c.D_values.size(), workers, [&](std::size_t i) {
    const GaussianLaw law = rank_law(c, c.D_values[i], d);
    ReverseRunConfig rc = run_config(c, sched);
    rc.scheme = Scheme::corrected;
    corrected[i] = kl_experiment(law, rc);
    rc.scheme = Scheme::exponential_integrator;
    ei[i] = kl_experiment(law, rc);
  });

  PresetResult r;
  r.table.columns = {"D", "disc_kl_corrected", "disc_kl_ei", "kl_corrected", "kl_ei"};
  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t i = 0; i < corrected.size(); ++i) {
    r.table.add_row({static_cast<std::int64_t>(c.D_values[i]),
                     corrected[i].extra("discretization_kl"), ei[i].extra("discretization_kl"),
                     corrected[i].value, ei[i].value});
    lo = std::min(lo, corrected[i].extra("discretization_kl"));
    hi = std::max(hi, corrected[i].extra("discretization_kl"));
  }
  r.summary["corrected_spread"] = fmt(hi - lo);
  r.summary["ei_growth"] = fmt(ei.back().extra("discretization_kl") / ei.front().extra("discretization_kl"));
  r.plots.push_back({"discretization KL: corrected vs exponential integrator", "D",
                     {{"disc_kl_corrected", "corrected"}, {"disc_kl_ei", "exponential integrator"}},
                     true, true});
  return r;
}

PresetResult lemma_suite(const ExperimentConfig& c, int workers) {
  struct NamedOracle {
    std::string name;
    BuiltMeasure measure;
  };
  std::vector<NamedOracle> oracles;
  oracles.push_back({"two_point", build_measure({"two_point", 1, {}, {}, {}, {}}, c.seed)});
  oracles.push_back({"gaussian_rank1", build_measure({"gaussian", 2, 1, {}, 0.5, {}}, c.seed)});
  oracles.push_back({"circle", build_measure({"circle", 2, {}, 500, {}, {}}, c.seed)});
  const double triples[][3] = {{0.0, 0.25, 1.0}, {0.05, 0.25, 1.0}, {0.1, 0.3, 0.8}, {0.01, 0.1, 0.5}};

  PresetResult r;
  r.table.columns = {"check", "case", "value", "stderr", "threshold", "pass"};
  std::uint64_t case_index = 0;
  auto mc = [&] {
    return McOptions{*c.samples, stream_seed(c.seed, case_index++), workers};
  };
  auto add = [&](const std::string& check, const std::string& name, double value, double se,
                 double threshold, bool pass) {
    r.table.add_row({check, name, value, se, threshold, static_cast<std::int64_t>(pass)});
    r.passed = r.passed && pass;
  };

  for (const auto& o : oracles) {
    TweedieCheckOptions topt;
    topt.seed = stream_seed(c.seed, case_index++);
    const MetricReport t = tweedie_fd_check(*o.measure.oracle, topt);
    add("tweedie_fd", o.name, t.value, 0.0, 1e-4, t.value <= 1e-4);
  }
  for (const auto& o : oracles) {
    for (const auto& tr : triples) {
      std::ostringstream name;
      name << o.name << " t=(" << tr[0] << " " << tr[1] << " " << tr[2] << ")";
      const MetricReport m = martingale_checks(*o.measure.oracle, tr[0], tr[1], tr[2], mc());
      add("martingale", name.str(), m.value, m.std_error, 3.0 * m.std_error,
          std::abs(m.value) <= 3.0 * m.std_error);
      // The score is undefined at t = 0, so that triple starts at t1 = 1e-3.
      const double t1 = tr[0] > 0.0 ? tr[0] : 1e-3;
      const MetricReport mono = monotonicity_check(*o.measure.oracle, t1, tr[1], tr[2], mc());
      add("monotonicity", name.str(), mono.value, mono.std_error, -3.0 * mono.std_error,
          mono.value >= -3.0 * mono.std_error);
    }
  }
  const auto& circle = oracles.back().measure;
  const MetricReport conc =
      concentration_curve(*circle.oracle, {0.001, 0.01, 0.1, 1.0}, mc(), circle.spec);
  add("concentration_bound", "circle", conc.value, conc.std_error, 1.0 + 3.0 * conc.std_error,
      conc.value <= 1.0 + 3.0 * conc.std_error);

  std::int64_t failed = 0;
  for (const auto& row : r.table.rows) failed += std::get<std::int64_t>(row[5]) == 0;
  r.summary["checks"] = std::to_string(r.table.rows.size());
  r.summary["failed"] = std::to_string(failed);
  return r;
}

}  // namespace

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("linear_fit: need matching inputs of size >= 2");
  }
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("linear_fit: x values are all equal");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  return fit;
}

Metadata version_metadata() {
  Metadata m;
  m["version.manidiff"] = MANIDIFF_VERSION;
  m["version.eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                       "." + std::to_string(EIGEN_MINOR_VERSION);
#if defined(__clang__)
  m["version.compiler"] = std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
  m["version.compiler"] = std::string("gcc ") + __VERSION__;
#endif
  return m;
}

PresetResult run_preset(const ExperimentConfig& config, int workers) {
  validate(config);
  const std::string& p = config.preset;
  if (p == "d-sweep") return d_sweep(config, workers);
  if (p == "D-sweep") return D_sweep(config, workers);
  if (p == "K-sweep") return K_sweep(config, workers);
  if (p == "eps-sweep") return eps_sweep(config, workers);
  if (p == "ei-vs-corrected") return ei_vs_corrected(config, workers);
  return lemma_suite(config, workers);
}

PresetResult run_experiment(const ExperimentConfig& config, int workers,
                            const std::filesystem::path& out_dir,
                            std::vector<std::filesystem::path>* written) {
  PresetResult result = run_preset(config, workers);
  std::filesystem::create_directories(out_dir);
  const std::string& stem = config.preset;
  write_table(out_dir, stem, result.table);

  Metadata meta = version_metadata();
  meta["preset"] = config.preset;
  meta["seed"] = std::to_string(config.seed);
  meta["workers"] = std::to_string(workers);
  meta["passed"] = result.passed ? "true" : "false";
  for (const auto& [k, v] : result.summary) meta["summary." + k] = v;
  write_text(out_dir / (stem + ".meta"), to_metadata(meta));
  write_text(out_dir / (stem + ".ini"), to_ini(config));

  std::vector<std::filesystem::path> files = {out_dir / (stem + ".csv"), out_dir / (stem + ".json"),
                                              out_dir / (stem + ".meta"), out_dir / (stem + ".ini")};
  if (config.plots) {
    for (std::size_t i = 0; i < result.plots.size(); ++i) {
      const auto path = out_dir / (stem + (i ? "_" + std::to_string(i) : "") + ".svg");
      write_text(path, render_svg(result.table, result.plots[i]));
      files.push_back(path);
    }
  }
  if (written) *written = std::move(files);
  return result;
}

}  // namespace manidiff::harness
