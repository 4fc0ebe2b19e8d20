#include "manidiff/harness/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "manidiff/harness/output.hpp"

namespace manidiff::harness {

namespace {

namespace pt = boost::property_tree;

template <typename T>
T parse_number(const std::string& where, const std::string& text) {
  std::istringstream in(text);
  T value{};
  if (!(in >> value) || !(in >> std::ws).eof()) {
    throw ConfigError(where + ": cannot parse '" + text + "'");
  }
  return value;
}

template <typename T>
std::vector<T> parse_list(const std::string& where, const std::string& text) {
  std::istringstream in(text);
  std::vector<T> out;
  std::string token;
  while (in >> token) out.push_back(parse_number<T>(where, token));
  if (out.empty()) throw ConfigError(where + ": empty list");
  return out;
}

bool parse_bool(const std::string& where, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(where + ": expected true or false, got '" + text + "'");
}

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"experiment", {"preset", "seed"}},
      {"schedule", {"kappa", "L", "K"}},
      {"measure", {"kind", "D", "d", "n", "scale", "order"}},
      {"sweep", {"d", "D", "eps", "doublings"}},
      {"sampler", {"scheme", "init"}},
      {"mc", {"samples"}},
      {"output", {"plots"}},
  };
  return keys;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    if constexpr (std::is_floating_point_v<T>) {
      out += format_double(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

bool is_gaussian_preset(const std::string& p) {
  return p == "d-sweep" || p == "D-sweep" || p == "K-sweep" || p == "eps-sweep" ||
         p == "ei-vs-corrected";
}

}  // namespace

Initialization parse_initialization(std::string_view name) {
  if (name == "standard_normal") return Initialization::standard_normal;
  if (name == "forward_marginal") return Initialization::forward_marginal;
  throw std::invalid_argument("unknown initialization '" + std::string(name) + "'");
}

std::string to_string(Initialization init) {
  return init == Initialization::standard_normal ? "standard_normal" : "forward_marginal";
}

BuiltMeasure build_measure(const MeasureSpec& spec, std::uint64_t seed) {
  auto need = [&](const auto& field, const char* name) {
    if (!field) throw ConfigError("measure." + std::string(name) + " is required for kind '" + spec.kind + "'");
    return *field;
  };
  BuiltMeasure out;
  if (spec.kind == "point_mass") {
    out.oracle = point_mass_oracle(Eigen::VectorXd::Zero(need(spec.D, "D")));
  } else if (spec.kind == "two_point") {
    const Eigen::Index D = need(spec.D, "D");
    PointCloudMeasure::Points pts = PointCloudMeasure::Points::Zero(2, D);
    pts(0, 0) = -0.5;
    pts(1, 0) = 0.5;
    out.cloud = uniform_cloud(std::move(pts));
    out.oracle = point_cloud_oracle(*out.cloud, 1.0);
  } else if (spec.kind == "gaussian") {
    out.law = axis_aligned_law(need(spec.D, "D"), need(spec.d, "d"), need(spec.scale, "scale"));
    out.oracle = gaussian_oracle(*out.law);
  } else if (spec.kind == "circle" || spec.kind == "torus" || spec.kind == "hilbert") {
    ManifoldParams params;
    if (spec.kind == "torus") params.intrinsic_dim = static_cast<int>(need(spec.d, "d"));
    if (spec.kind == "hilbert") params.order = need(spec.order, "order");
    Rng rng = make_stream(seed, 0x6d616e69666f6c64ULL);
    ManifoldCloud mc = make_manifold_cloud(parse_manifold_kind(spec.kind), params,
                                           need(spec.D, "D"), need(spec.n, "n"), rng);
    out.spec = mc.spec;
    out.cloud = mc.cloud;
    out.oracle = point_cloud_oracle(std::move(mc.cloud), mc.spec.diameter);
  } else {
    throw ConfigError("unknown measure kind '" + spec.kind + "'");
  }
  return out;
}

ExperimentConfig parse_experiment_config(std::string_view text) {
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  for (const auto& [section, body] : tree) {
    const auto it = known_keys().find(section);
    if (it == known_keys().end() || !body.data().empty()) {
      throw ConfigError("config: unknown section or top-level key '" + section + "'");
    }
    for (const auto& [key, value] : body) {
      if (!it->second.contains(key)) {
        throw ConfigError("config: unknown key '" + section + "." + key + "'");
      }
    }
  }

  auto get = [&](const char* path) -> std::optional<std::string> {
    if (auto v = tree.get_optional<std::string>(pt::ptree::path_type(path, '.'))) return *v;
    return std::nullopt;
  };

  ExperimentConfig c;
  c.preset = get("experiment.preset").value_or("");
  if (auto v = get("experiment.seed")) {
    c.seed = parse_number<std::uint64_t>("experiment.seed", *v);
  } else {
    throw ConfigError("experiment.seed is required");
  }

  const auto kappa = get("schedule.kappa"), L = get("schedule.L"), K = get("schedule.K");
  if (kappa || L || K) {
    if (!(kappa && L && K)) throw ConfigError("schedule needs all of kappa, L and K");
    c.schedule = ScheduleSpec{parse_number<double>("schedule.kappa", *kappa),
                              parse_number<int>("schedule.L", *L),
                              parse_number<int>("schedule.K", *K)};
  }

  c.measure.kind = get("measure.kind").value_or("");
  if (auto v = get("measure.D")) c.measure.D = parse_number<Eigen::Index>("measure.D", *v);
  if (auto v = get("measure.d")) c.measure.d = parse_number<Eigen::Index>("measure.d", *v);
  if (auto v = get("measure.n")) c.measure.n = parse_number<Eigen::Index>("measure.n", *v);
  if (auto v = get("measure.scale")) c.measure.scale = parse_number<double>("measure.scale", *v);
  if (auto v = get("measure.order")) c.measure.order = parse_number<int>("measure.order", *v);

  if (auto v = get("sweep.d")) c.d_values = parse_list<Eigen::Index>("sweep.d", *v);
  if (auto v = get("sweep.D")) c.D_values = parse_list<Eigen::Index>("sweep.D", *v);
  if (auto v = get("sweep.eps")) c.eps_values = parse_list<double>("sweep.eps", *v);
  if (auto v = get("sweep.doublings")) c.doublings = parse_number<int>("sweep.doublings", *v);

  try {
    if (auto v = get("sampler.scheme")) c.scheme = parse_scheme(*v);
    if (auto v = get("sampler.init")) c.init = parse_initialization(*v);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("sampler: ") + e.what());
  }
  if (auto v = get("mc.samples")) c.samples = parse_number<std::int64_t>("mc.samples", *v);
  if (auto v = get("output.plots")) c.plots = parse_bool("output.plots", *v);
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_experiment_config(text.str());
}

void validate(const ExperimentConfig& c) {
  std::vector<std::string> problems;
  auto require = [&](bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
  };

  const auto& names = preset_names();
  if (std::find(names.begin(), names.end(), c.preset) == names.end()) {
    throw ConfigError("unknown preset '" + c.preset + "'");
  }

  if (is_gaussian_preset(c.preset)) {
    require(c.schedule.has_value(), "schedule.kappa, schedule.L and schedule.K are required");
    if (c.schedule) {
      try {
        const TimeSchedule s = c.schedule->build();
        const ScheduleReport r = validate_schedule(s);
        require(r.ok(), "schedule rejected:\n" + r.summary());
      } catch (const std::invalid_argument& e) {
        problems.emplace_back(e.what());
      }
    }
    require(c.measure.kind == "gaussian", "measure.kind must be 'gaussian' for " + c.preset);
    require(c.measure.scale.has_value(), "measure.scale is required");
    if (c.measure.scale) require(*c.measure.scale > 0.0, "measure.scale must be positive");
  }

  const bool needs_D = c.preset == "d-sweep" || c.preset == "K-sweep" || c.preset == "eps-sweep";
  const bool needs_d = c.preset == "D-sweep" || c.preset == "K-sweep" || c.preset == "eps-sweep" ||
                       c.preset == "ei-vs-corrected";
  if (needs_D) require(c.measure.D.has_value(), "measure.D is required");
  if (needs_d) require(c.measure.d.has_value(), "measure.d is required");

  if (c.preset == "d-sweep") {
    require(!c.d_values.empty(), "sweep.d is required");
    for (auto d : c.d_values) {
      require(d >= 1 && (!c.measure.D || d <= *c.measure.D), "sweep.d entries must lie in [1, D]");
    }
  }
  if (c.preset == "D-sweep" || c.preset == "ei-vs-corrected") {
    require(!c.D_values.empty(), "sweep.D is required");
    for (auto D : c.D_values) {
      require(!c.measure.d || D >= *c.measure.d, "sweep.D entries must be >= measure.d");
    }
  }
  if (c.preset == "K-sweep") {
    require(c.doublings.has_value(), "sweep.doublings is required");
    if (c.doublings) require(*c.doublings >= 1, "sweep.doublings must be >= 1");
  }
  if (c.preset == "eps-sweep") {
    require(c.eps_values.size() >= 2, "sweep.eps needs at least two values");
    for (double e : c.eps_values) require(e > 0.0, "sweep.eps entries must be positive");
  }
  if (needs_D && needs_d && c.measure.D && c.measure.d) {
    require(*c.measure.d >= 1 && *c.measure.d <= *c.measure.D, "measure.d must lie in [1, D]");
  }
  if (c.preset == "lemma-suite") {
    require(c.samples.has_value(), "mc.samples is required");
    if (c.samples) require(*c.samples >= 100, "mc.samples must be >= 100");
  }

  if (!problems.empty()) {
    std::string msg = "invalid configuration for preset '" + c.preset + "':";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
}

ExperimentConfig preset_defaults(std::string_view preset) {
  ExperimentConfig c;
  c.preset = std::string(preset);
  c.measure.kind = "gaussian";
  c.measure.scale = 1.0;
  // T = kappa L + 1 = 10 keeps the initialization term below 1e-15.
  c.schedule = ScheduleSpec{0.1, 90, 130};
  if (preset == "d-sweep") {
    c.measure.D = 32;
    c.d_values = {1, 2, 4, 8};
  } else if (preset == "D-sweep") {
    c.measure.d = 2;
    c.D_values = {4, 16, 64, 256};
  } else if (preset == "K-sweep") {
    c.schedule = ScheduleSpec{0.2, 45, 85};
    c.measure.D = 8;
    c.measure.d = 2;
    c.doublings = 3;
  } else if (preset == "eps-sweep") {
    c.measure.D = 8;
    c.measure.d = 2;
    c.eps_values = {0.01, 0.02, 0.04, 0.08};
  } else if (preset == "ei-vs-corrected") {
    c.measure.d = 2;
    c.D_values = {8, 16, 32, 64};
  } else if (preset == "lemma-suite") {
    c.schedule.reset();
    c.measure = MeasureSpec{};
    c.samples = 20000;
  } else {
    throw ConfigError("unknown preset '" + std::string(preset) + "'");
  }
  return c;
}

std::string to_ini(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "[experiment]\npreset = " << c.preset << "\nseed = " << c.seed << "\n";
  if (c.schedule) {
    out << "\n[schedule]\nkappa = " << format_double(c.schedule->kappa) << "\nL = " << c.schedule->L
        << "\nK = " << c.schedule->K << "\n";
  }
  const MeasureSpec& m = c.measure;
  if (!m.kind.empty() || m.D || m.d || m.n || m.scale || m.order) {
    out << "\n[measure]\n";
    if (!m.kind.empty()) out << "kind = " << m.kind << "\n";
    if (m.D) out << "D = " << *m.D << "\n";
    if (m.d) out << "d = " << *m.d << "\n";
    if (m.n) out << "n = " << *m.n << "\n";
    if (m.scale) out << "scale = " << format_double(*m.scale) << "\n";
    if (m.order) out << "order = " << *m.order << "\n";
  }
  if (!c.d_values.empty() || !c.D_values.empty() || !c.eps_values.empty() || c.doublings) {
    out << "\n[sweep]\n";
    if (!c.d_values.empty()) out << "d = " << join(c.d_values) << "\n";
    if (!c.D_values.empty()) out << "D = " << join(c.D_values) << "\n";
    if (!c.eps_values.empty()) out << "eps = " << join(c.eps_values) << "\n";
    if (c.doublings) out << "doublings = " << *c.doublings << "\n";
  }
  out << "\n[sampler]\nscheme = " << manidiff::to_string(c.scheme) << "\ninit = " << to_string(c.init)
      << "\n";
  if (c.samples) out << "\n[mc]\nsamples = " << *c.samples << "\n";
  out << "\n[output]\nplots = " << (c.plots ? "true" : "false") << "\n";
  return out.str();
}

}  // namespace manidiff::harness
