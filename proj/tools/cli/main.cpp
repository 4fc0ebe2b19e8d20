// manidiff: command-line front end of the harness.
//
// Exit status: 0 success, 1 validation failure (bad flags, rejected config or
// schedule, failed checks), 2 runtime failure.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "manidiff/cloud_io.hpp"
#include "manidiff/harness/config.hpp"
#include "manidiff/harness/output.hpp"
#include "manidiff/harness/presets.hpp"
#include "manidiff/metrics.hpp"
#include "manidiff/sampler.hpp"
#include "manidiff/schedule.hpp"

namespace fs = std::filesystem;
using namespace manidiff;
using namespace manidiff::harness;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

struct Globals {
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out = ".";
  int jobs = 1;
  std::string config;
};

struct ScheduleFlags {
  double kappa = 0.0;
  int L = 0;
  int K = 0;

  void add(CLI::App* cmd) {
    cmd->add_option("--kappa", kappa, "step-ratio parameter in (0, 1/4)")->required();
    cmd->add_option("--L", L, "uniform-phase step count")->required();
    cmd->add_option("--K", K, "total step count")->required();
  }

  // A schedule the sampler accepts; rejections are validation failures.
  TimeSchedule admitted() const {
    TimeSchedule s = build();
    const ScheduleReport report = validate_schedule(s);
    if (!report.ok()) throw ConfigError("schedule rejected:\n" + report.summary());
    return s;
  }

  TimeSchedule build() const {
    try {
      return build_schedule(kappa, L, K);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
};

struct MeasureFlags {
  MeasureSpec spec;
  Eigen::Index D = 0, d = 0, n = 0;
  double scale = 0.0;
  int order = 0;
  CLI::Option *oD = nullptr, *od = nullptr, *on = nullptr, *os = nullptr, *oo = nullptr;

  void add(CLI::App* cmd) {
    cmd->add_option("--measure", spec.kind,
                    "point_mass | two_point | gaussian | circle | torus | hilbert")
        ->required();
    oD = cmd->add_option("--D", D, "ambient dimension");
    od = cmd->add_option("--d", d, "intrinsic dimension (gaussian rank, torus factors)");
    on = cmd->add_option("--n", n, "point-cloud size");
    os = cmd->add_option("--scale", scale, "gaussian direction scale");
    oo = cmd->add_option("--order", order, "hilbert curve order");
  }

  MeasureSpec resolved() const {
    MeasureSpec s = spec;
    if (*oD) s.D = D;
    if (*od) s.d = d;
    if (*on) s.n = n;
    if (*os) s.scale = scale;
    if (*oo) s.order = order;
    return s;
  }
};

struct SamplerFlags {
  std::string scheme = "corrected";
  std::string init = "standard_normal";

  void add(CLI::App* cmd) {
    cmd->add_option("--scheme", scheme, "corrected | ei")->capture_default_str();
    cmd->add_option("--init", init, "standard_normal | forward_marginal")->capture_default_str();
  }

  ReverseRunConfig config(const TimeSchedule& s) const {
    ReverseRunConfig rc{s};
    try {
      rc.scheme = parse_scheme(scheme);
      rc.init = parse_initialization(init);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    return rc;
  }
};

void print_wall_time(std::chrono::steady_clock::time_point start) {
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cerr << "wall time " << secs << " s\n";
}

fs::path out_dir(const Globals& g) {
  fs::create_directories(g.out);
  return g.out;
}

int cmd_schedule(const ScheduleFlags& f, bool record) {
  const TimeSchedule s = f.build();
  if (record) {
    std::cout << to_record(s);
  } else {
    std::cout << "kappa " << format_double(s.kappa()) << "  L " << *s.uniform_steps() << "  K "
              << s.steps() << "  T " << format_double(s.horizon()) << "  delta "
              << format_double(s.early_stop()) << '\n';
    for (int k = 0; k <= s.steps(); ++k) {
      std::cout << "t_" << k << ' ' << format_double(s.time(k)) << '\n';
    }
  }
  const ScheduleReport report = validate_schedule(s);
  std::cout << report.summary();
  return report.ok() ? kOk : kValidation;
}

int cmd_sample(const Globals& g, const ScheduleFlags& sf, const MeasureFlags& mf,
               const SamplerFlags& smf, int batch, int record_every) {
  const BuiltMeasure measure = build_measure(mf.resolved(), g.seed);
  ReverseRunConfig rc = smf.config(sf.admitted());
  rc.batch = batch;
  rc.seed = g.seed;
  rc.workers = g.jobs;
  rc.record_every = record_every;
  try {
    rc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  const ReverseRun run = run_reverse(rc, measure.oracle);
  const fs::path dir = out_dir(g);
  Metadata meta = version_metadata();
  meta["measure"] = measure.oracle->describe();
  meta["scheme"] = manidiff::to_string(rc.scheme);
  meta["init"] = harness::to_string(rc.init);
  meta["seed"] = std::to_string(g.seed);
  meta["batch"] = std::to_string(batch);
  meta["kappa"] = format_double(sf.kappa);
  meta["L"] = std::to_string(sf.L);
  meta["K"] = std::to_string(sf.K);

  auto write = [&](const fs::path& path, const PointCloudMeasure::Points& pts, int step) {
    Metadata m = meta;
    m["step"] = std::to_string(step);
    std::ofstream out(path);
    write_cloud(out, uniform_cloud(pts), std::nullopt, m);
    if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
  };
  write(dir / "samples.txt", run.terminal, sf.K);
  for (std::size_t i = 0; i < run.frames.size(); ++i) {
    write(dir / ("frame_" + std::to_string(run.recorded_steps[i]) + ".txt"), run.frames[i],
          run.recorded_steps[i]);
  }
  const Eigen::RowVectorXd mean = run.terminal.colwise().mean();
  std::cout << "samples " << run.terminal.rows() << " dim " << run.terminal.cols() << '\n';
  std::cout << "terminal_mean_norm " << format_double(mean.norm()) << '\n';
  std::cout << "written " << (dir / "samples.txt").string() << '\n';
  return kOk;
}

int cmd_kl(const Globals& g, const ScheduleFlags& sf, Eigen::Index D, Eigen::Index d, double scale,
           const SamplerFlags& smf, double eps) {
  if (d < 1 || d > D || !(scale > 0.0)) throw ConfigError("kl: need 1 <= d <= D and scale > 0");
  const GaussianLaw law = axis_aligned_law(D, d, scale);
  const ReverseRunConfig rc = smf.config(sf.admitted());
  MetricReport report = kl_experiment(law, rc);
  if (eps != 0.0) {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(D);
    a[0] = eps;
    const MetricReport budget = score_error_budget(law, ScoreBias::constant(a), rc);
    for (const auto& [k, v] : budget.extras) report.extras["budget." + k] = v;
  }
  std::ostringstream text;
  write_record(text, report);
  std::cout << text.str();
  write_text(out_dir(g) / "kl.txt", text.str());
  return kOk;
}

int cmd_meter(const Globals& g, const ScheduleFlags& sf, const MeasureFlags& mf, std::int64_t samples,
              bool midpoint) {
  const BuiltMeasure measure = build_measure(mf.resolved(), g.seed);
  const TimeSchedule s = sf.admitted();
  if (samples < 100) throw ConfigError("meter: --samples must be >= 100");
  const MetricReport report = discretization_error_meter(
      *measure.oracle, s, McOptions{samples, g.seed, g.jobs},
      midpoint ? MeterQuadrature::midpoint : MeterQuadrature::right_endpoint);
  std::ostringstream rec, steps;
  write_record(rec, report);
  write_components_csv(steps, report);
  std::cout << rec.str();
  const fs::path dir = out_dir(g);
  write_text(dir / "meter.txt", rec.str());
  write_text(dir / "meter_steps.csv", steps.str());
  return kOk;
}

ExperimentConfig resolve_config(const Globals& g, const std::string& preset) {
  ExperimentConfig c;
  if (!g.config.empty()) {
    c = load_experiment_config(g.config);
    if (!preset.empty() && preset != c.preset) {
      throw ConfigError("--preset '" + preset + "' disagrees with config preset '" + c.preset + "'");
    }
  } else {
    if (preset.empty()) throw ConfigError("sweep: give --preset or --config");
    c = preset_defaults(preset);
  }
  if (g.seed_given || g.config.empty()) c.seed = g.seed;
  validate(c);
  return c;
}

int report_preset(const ExperimentConfig& c, const Globals& g) {
  std::vector<fs::path> files;
  const PresetResult r = run_experiment(c, g.jobs, out_dir(g), &files);
  std::cout << to_csv(r.table);
  for (const auto& [k, v] : r.summary) std::cout << k << ' ' << v << '\n';
  for (const auto& f : files) std::cout << "written " << f.string() << '\n';
  return r.passed ? kOk : kValidation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"manidiff: corrected reverse-SDE sampler and verification suite"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "master seed")->each([&](const std::string&) { g.seed_given = true; });
  app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.add_option("--jobs", g.jobs, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--config", g.config, "experiment config file (sweep, check)");

  ScheduleFlags sched_flags;
  bool record = false;
  auto* schedule = app.add_subcommand("schedule", "print and validate a discretization grid");
  sched_flags.add(schedule);
  schedule->add_flag("--record", record, "print the plain-text replay record");

  ScheduleFlags sample_sched;
  MeasureFlags sample_measure;
  SamplerFlags sample_sampler;
  int batch = 0, record_every = 0;
  auto* sample = app.add_subcommand("sample", "run the reverse sampler and write samples");
  sample_sched.add(sample);
  sample_measure.add(sample);
  sample_sampler.add(sample);
  sample->add_option("--batch", batch, "number of samples")->required()->check(CLI::PositiveNumber);
  sample->add_option("--record-every", record_every, "record every n-th state (0: off)");

  ScheduleFlags kl_sched;
  SamplerFlags kl_sampler;
  Eigen::Index kl_D = 0, kl_d = 0;
  double kl_scale = 0.0, kl_eps = 0.0;
  auto* kl = app.add_subcommand("kl", "exact KL of the sampler on rank-d Gaussian data");
  kl_sched.add(kl);
  kl_sampler.add(kl);
  kl->add_option("--D", kl_D, "ambient dimension")->required();
  kl->add_option("--d", kl_d, "data rank")->required();
  kl->add_option("--scale", kl_scale, "scale of each data direction")->required();
  kl->add_option("--eps", kl_eps, "constant score bias along e_1 (adds the error budget)");

  ScheduleFlags meter_sched;
  MeasureFlags meter_measure;
  std::int64_t meter_samples = 0;
  bool midpoint = false;
  auto* meter = app.add_subcommand("meter", "Monte Carlo discretization-error functional");
  meter_sched.add(meter);
  meter_measure.add(meter);
  meter->add_option("--samples", meter_samples, "Monte Carlo sample count")->required();
  meter->add_flag("--midpoint", midpoint, "midpoint rule instead of the right endpoint");

  std::int64_t check_samples = 20000;
  auto* check = app.add_subcommand("check", "seeded lemma suite with a pass/fail table");
  check->add_option("--samples", check_samples, "Monte Carlo samples per case")->capture_default_str();

  std::string preset;
  auto* sweep = app.add_subcommand("sweep", "run a sweep preset");
  sweep->add_option("--preset", preset, "d-sweep | D-sweep | K-sweep | eps-sweep | ei-vs-corrected | lemma-suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  const auto start = std::chrono::steady_clock::now();
  int status = kOk;
  try {
    if (*schedule) {
      status = cmd_schedule(sched_flags, record);
    } else if (*sample) {
      status = cmd_sample(g, sample_sched, sample_measure, sample_sampler, batch, record_every);
    } else if (*kl) {
      status = cmd_kl(g, kl_sched, kl_D, kl_d, kl_scale, kl_sampler, kl_eps);
    } else if (*meter) {
      status = cmd_meter(g, meter_sched, meter_measure, meter_samples, midpoint);
    } else if (*check) {
      ExperimentConfig c = resolve_config(g, "lemma-suite");
      if (g.config.empty()) {
        c.samples = check_samples;
        validate(c);
      }
      status = report_preset(c, g);
    } else if (*sweep) {
      status = report_preset(resolve_config(g, preset), g);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << '\n';
    return kRuntime;
  }
  print_wall_time(start);
  return status;
}
