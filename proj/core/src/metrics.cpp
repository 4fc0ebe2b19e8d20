#include "manidiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "manidiff/parallel.hpp"
#include "manidiff/rng.hpp"

namespace manidiff {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

// 0.5 (vp/vq - 1 - log(vp/vq)), series near vp = vq.
double variance_kl(double vp, double vq) {
  const double x = (vp - vq) / vq;
  if (std::abs(x) < 1e-4) {
    return 0.5 * x * x * (0.5 - x * (1.0 / 3.0 - x * (0.25 - x / 5.0)));
  }
  return 0.5 * (x - std::log1p(x));
}

// Operator diag(d) on range(U) plus scalar `comp` on its complement.
Eigen::VectorXd apply_spectral(const Eigen::MatrixXd& U, const Eigen::VectorXd& d, double comp,
                               const Eigen::VectorXd& x) {
  if (U.cols() == 0) return comp * x;
  const Eigen::VectorXd coef = U.transpose() * x;
  return U * (d.array() - comp).matrix().cwiseProduct(coef) + comp * x;
}

// Per-direction marginal variances c_t^2 w + sigma_t^2 of the data spectrum.
struct SpectralMarginal {
  Eigen::VectorXd S;
  double Sc = 0.0;
};

SpectralMarginal marginal_variances(const SpectralGaussian& data, double t) {
  const NoiseScales ns = noise_scales(t);
  const double c2 = ns.c * ns.c;
  return {(c2 * data.variances.array() + ns.sigma2).matrix(),
          c2 * data.complement_variance + ns.sigma2};
}

void check_dims(const GaussianLaw& data, const ReverseRunConfig& config) {
  data.validate();
  config.validate();
  const Eigen::Index D = data.ambient_dim();
  if (config.bias.offset.size() != 0 && config.bias.offset.size() != D) {
    throw std::invalid_argument("score bias offset has the wrong dimension");
  }
  if (config.bias.linear && (config.bias.linear->rows() != D || config.bias.linear->cols() != D)) {
    throw std::invalid_argument("score bias linear map has the wrong shape");
  }
}

Eigen::VectorXd offset_or_zero(const ScoreBias& bias, Eigen::Index D) {
  return bias.offset.size() == 0 ? Eigen::VectorXd::Zero(D) : bias.offset;
}

// One affine reverse step in the spectral basis of the data.
struct SpectralStep {
  Eigen::VectorXd M;  // per-direction multiplier
  double Mc = 0.0;
  Eigen::VectorXd shift;  // additive constant
  double eta2 = 0.0;
  SpectralMarginal now;
};

SpectralStep spectral_step(const SpectralGaussian& data, const ReverseRunConfig& config, int k) {
  const TimeSchedule& sched = config.schedule;
  const StepCoefficients co = step_coefficients(config.scheme, sched, k);
  const double s = sched.forward_time(k);
  const NoiseScales ns = noise_scales(s);
  SpectralStep st;
  st.now = marginal_variances(data, s);
  const double b = config.bias.isotropic;
  st.M = (co.alpha + co.beta * (b - st.now.S.array().inverse())).matrix();
  st.Mc = co.alpha + co.beta * (b - 1.0 / st.now.Sc);
  const Eigen::VectorXd inv_mean =
      apply_spectral(data.basis, st.now.S.cwiseInverse(), 1.0 / st.now.Sc, data.mean);
  st.shift = co.beta * (ns.c * inv_mean + offset_or_zero(config.bias, data.ambient_dim()));
  st.eta2 = co.eta * co.eta;
  return st;
}

SpectralGaussian initial_spectral(const SpectralGaussian& data, const GaussianLaw& law,
                                  const ReverseRunConfig& config) {
  if (config.init == Initialization::forward_marginal) {
    return spectral_marginal(law, config.schedule.horizon());
  }
  SpectralGaussian y;
  y.mean = Eigen::VectorXd::Zero(data.ambient_dim());
  y.basis = data.basis;
  y.variances = Eigen::VectorXd::Ones(data.rank());
  y.complement_variance = 1.0;
  return y;
}

DenseGaussian dense_marginal(const GaussianLaw& data, double t) {
  const NoiseScales ns = noise_scales(t);
  DenseGaussian out;
  out.mean = ns.c * data.mean;
  out.covariance = ns.c * ns.c * data.covariance();
  out.covariance.diagonal().array() += ns.sigma2;
  return out;
}

bool has_linear(const ScoreBias& bias) { return bias.linear.has_value(); }

double terminal_kl(const GaussianLaw& data, const ReverseRunConfig& config) {
  const double delta = config.schedule.forward_time(config.schedule.steps());
  if (has_linear(config.bias)) {
    return gaussian_kl(propagate_affine_reverse_dense(data, config), dense_marginal(data, delta));
  }
  return gaussian_kl(propagate_affine_reverse(data, config), spectral_marginal(data, delta));
}

template <typename PerSample>
std::vector<double> sample_table(const McOptions& mc, std::size_t width, PerSample&& per_sample) {
  if (mc.n < 1) throw std::invalid_argument("Monte Carlo sample count must be >= 1");
  const auto n = static_cast<std::size_t>(mc.n);
  std::vector<double> table(n * width);
  parallel_for(n, mc.workers, [&](std::size_t i) {
    Rng rng = make_stream(mc.seed, i);
    per_sample(rng, table.data() + i * width);
  });
  return table;
}

MeanStderr column_stats(const std::vector<double>& table, std::size_t width, std::size_t col) {
  std::vector<double> v(table.size() / width);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = table[i * width + col];
  return mean_stderr(v);
}

MetricReport mc_report(std::string name, const McOptions& mc) {
  MetricReport r;
  r.name = std::move(name);
  r.n_samples = mc.n;
  r.seed = mc.seed;
  return r;
}

Eigen::VectorXd checked_posterior_mean(const ScoreOracle& oracle, double t,
                                       const Eigen::VectorXd& x, int k) {
  try {
    return oracle.posterior_mean(t, x);
  } catch (const std::domain_error& e) {
    throw std::domain_error("step k=" + std::to_string(k) + ": " + e.what());
  }
}

}  // namespace

double MetricReport::extra(const std::string& key) const {
  const auto it = extras.find(key);
  if (it == extras.end()) throw std::out_of_range("MetricReport '" + name + "' has no '" + key + "'");
  return it->second;
}

void write_record(std::ostream& out, const MetricReport& report) {
  const auto old = out.precision(17);
  out << "name " << report.name << '\n'
      << "value " << report.value << '\n'
      << "stderr " << report.std_error << '\n'
      << "n_samples " << report.n_samples << '\n'
      << "seed " << report.seed << '\n';
  for (const auto& [key, value] : report.extras) out << key << ' ' << value << '\n';
  out.precision(old);
}

void write_components_csv(std::ostream& out, const MetricReport& report) {
  const auto old = out.precision(17);
  out << "k,t,value,stderr,aux\n";
  for (const auto& c : report.components) {
    out << c.k << ',' << c.t << ',' << c.value << ',' << c.std_error << ',' << c.aux << '\n';
  }
  out.precision(old);
}

MeanStderr mean_stderr(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("mean_stderr: no values");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() < 2) return {mean, kInf};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

double gaussian_kl(const DenseGaussian& p, const DenseGaussian& q) {
  const Eigen::Index D = q.mean.size();
  if (p.mean.size() != D || p.covariance.rows() != D || q.covariance.rows() != D) {
    throw std::invalid_argument("gaussian_kl: dimension mismatch");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> qe(q.covariance, Eigen::EigenvaluesOnly);
  const double q_min = qe.eigenvalues().minCoeff();
  if (!(q_min > kCovarianceFloor)) {
    std::ostringstream msg;
    msg << "gaussian_kl: reference covariance has eigenvalue " << q_min
        << " <= floor " << kCovarianceFloor;
    throw std::domain_error(msg.str());
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> pe(p.covariance, Eigen::EigenvaluesOnly);
  const double p_max = std::max(pe.eigenvalues().maxCoeff(), 0.0);
  if (!(pe.eigenvalues().minCoeff() > 64.0 * D * std::numeric_limits<double>::epsilon() * p_max)) {
    return kInf;
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(q.covariance);
  const Eigen::VectorXd dm = p.mean - q.mean;
  const double trace = llt.solve(p.covariance).trace();
  const double quad = dm.dot(llt.solve(dm));
  const double logdet = qe.eigenvalues().array().log().sum() - pe.eigenvalues().array().log().sum();
  return std::max(0.0, 0.5 * (trace - static_cast<double>(D) + quad + logdet));
}

double gaussian_kl(const SpectralGaussian& p, const SpectralGaussian& q) {
  const Eigen::Index D = q.ambient_dim();
  if (p.ambient_dim() != D) throw std::invalid_argument("gaussian_kl: dimension mismatch");
  if (p.basis.rows() != q.basis.rows() || p.basis.cols() != q.basis.cols() || p.basis != q.basis) {
    return gaussian_kl(dense_form(p), dense_form(q));
  }
  const Eigen::Index r = q.rank();
  const double q_min =
      r < D ? std::min(q.complement_variance, r > 0 ? q.variances.minCoeff() : kInf)
            : q.variances.minCoeff();
  if (!(q_min > kCovarianceFloor)) {
    std::ostringstream msg;
    msg << "gaussian_kl: reference covariance has eigenvalue " << q_min
        << " <= floor " << kCovarianceFloor;
    throw std::domain_error(msg.str());
  }
  double kl = 0.0;
  for (Eigen::Index i = 0; i < r; ++i) kl += variance_kl(p.variances[i], q.variances[i]);
  if (r < D) kl += static_cast<double>(D - r) * variance_kl(p.complement_variance, q.complement_variance);
  const Eigen::VectorXd dm = p.mean - q.mean;
  kl += 0.5 * dm.dot(apply_spectral(q.basis, q.variances.cwiseInverse(), 1.0 / q.complement_variance, dm));
  return std::max(0.0, kl);
}

double gaussian_kl(const GaussianLaw& p, const GaussianLaw& q) {
  p.validate();
  q.validate();
  const Eigen::Index D = q.ambient_dim();
  if (p.ambient_dim() != D) throw std::invalid_argument("gaussian_kl: dimension mismatch");
  if (q.factor.cols() >= D || (p.floor == 0.0 && p.factor.cols() >= D)) {
    return gaussian_kl(dense_form(p), dense_form(q));
  }
  if (!(q.floor > kCovarianceFloor)) {
    std::ostringstream msg;
    msg << "gaussian_kl: reference covariance has eigenvalue " << q.floor
        << " <= floor " << kCovarianceFloor;
    throw std::domain_error(msg.str());
  }
  if (p.floor == 0.0) return kInf;  // rank(p) <= p.factor.cols() < D
  const LowRankPlusDiagonal Q(q.floor, q.factor);
  const LowRankPlusDiagonal P(p.floor, p.factor);
  const Eigen::VectorXd dm = p.mean - q.mean;
  const double trace = Q.trace_inverse_times(p.floor, p.factor);
  const double quad = dm.dot(Q.solve(dm));
  return std::max(0.0, 0.5 * (trace - static_cast<double>(D) + quad + Q.log_det() - P.log_det()));
}

SpectralGaussian spectral_marginal(const GaussianLaw& data, double t) {
  const SpectralGaussian base = spectral_form(data);
  const SpectralMarginal m = marginal_variances(base, t);
  SpectralGaussian out;
  out.mean = noise_scales(t).c * base.mean;
  out.basis = base.basis;
  out.variances = m.S;
  out.complement_variance = m.Sc;
  return out;
}

SpectralGaussian propagate_affine_reverse(const GaussianLaw& data, const ReverseRunConfig& config) {
  check_dims(data, config);
  if (has_linear(config.bias)) {
    throw std::invalid_argument(
        "propagate_affine_reverse: a linear bias breaks the spectral form; use the dense variant");
  }
  const SpectralGaussian base = spectral_form(data);
  SpectralGaussian y = initial_spectral(base, data, config);
  for (int k = 0; k < config.schedule.steps(); ++k) {
    const SpectralStep st = spectral_step(base, config, k);
    y.mean = apply_spectral(base.basis, st.M, st.Mc, y.mean) + st.shift;
    y.variances = (st.M.array().square() * y.variances.array() + st.eta2).matrix();
    y.complement_variance = st.Mc * st.Mc * y.complement_variance + st.eta2;
  }
  return y;
}

DenseGaussian propagate_affine_reverse_dense(const GaussianLaw& data,
                                             const ReverseRunConfig& config) {
  check_dims(data, config);
  const TimeSchedule& sched = config.schedule;
  const Eigen::Index D = data.ambient_dim();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(D, D);
  const Eigen::MatrixXd cov0 = data.covariance();
  const Eigen::VectorXd offset = offset_or_zero(config.bias, D);

  DenseGaussian y = config.init == Initialization::forward_marginal
                        ? dense_marginal(data, sched.horizon())
                        : DenseGaussian{Eigen::VectorXd::Zero(D), I};
  for (int k = 0; k < sched.steps(); ++k) {
    const StepCoefficients co = step_coefficients(config.scheme, sched, k);
    const NoiseScales ns = noise_scales(sched.forward_time(k));
    const Eigen::MatrixXd S = ns.c * ns.c * cov0 + ns.sigma2 * I;
    const Eigen::LLT<Eigen::MatrixXd> llt(S);
    Eigen::MatrixXd lin = -llt.solve(I) + config.bias.isotropic * I;
    if (config.bias.linear) lin += *config.bias.linear;
    const Eigen::MatrixXd M = co.alpha * I + co.beta * lin;
    y.mean = M * y.mean + co.beta * (ns.c * llt.solve(data.mean) + offset);
    Eigen::MatrixXd C = M * y.covariance * M.transpose();
    C.diagonal().array() += co.eta * co.eta;
    y.covariance = 0.5 * (C + C.transpose());
  }
  return y;
}

double path_kl(const GaussianLaw& data, const ReverseRunConfig& config) {
  check_dims(data, config);
  if (has_linear(config.bias)) {
    throw std::invalid_argument("path_kl: a linear bias breaks the spectral form");
  }
  const TimeSchedule& sched = config.schedule;
  const SpectralGaussian base = spectral_form(data);
  const Eigen::Index D = base.ambient_dim();
  const Eigen::Index r = base.rank();
  SpectralGaussian y = spectral_marginal(data, sched.horizon());

  double total = 0.0;
  for (int k = 0; k < sched.steps(); ++k) {
    const SpectralStep st = spectral_step(base, config, k);
    const double gamma = sched.gap(k);
    const double s = sched.forward_time(k);
    const double s_next = sched.forward_time(k + 1);
    const NoiseScales step = noise_scales(gamma);
    const SpectralMarginal next = marginal_variances(base, s_next);

    // True conditional of X_{s_next} given X_s = y:
    //   mean c_{s_next} m + c_gamma S' / S (y - c_s m), variance S' sigma_gamma^2 / S.
    const Eigen::VectorXd gain = (step.c * next.S.array() / st.now.S.array()).matrix();
    const double gain_c = step.c * next.Sc / st.now.Sc;
    const Eigen::VectorXd tau2 = (next.S.array() * step.sigma2 / st.now.S.array()).matrix();
    const double tau2_c = next.Sc * step.sigma2 / st.now.Sc;

    const Eigen::VectorXd sampler_mean = apply_spectral(base.basis, st.M, st.Mc, y.mean) + st.shift;
    const Eigen::VectorXd true_mean =
        noise_scales(s_next).c * base.mean +
        apply_spectral(base.basis, gain, gain_c, y.mean - noise_scales(s).c * base.mean);
    const Eigen::VectorXd dm = sampler_mean - true_mean;

    double kl = 0.5 * dm.dot(apply_spectral(base.basis, tau2.cwiseInverse(), 1.0 / tau2_c, dm));
    for (Eigen::Index i = 0; i < r; ++i) {
      const double g = st.M[i] - gain[i];
      kl += variance_kl(st.eta2, tau2[i]) + 0.5 * g * g * y.variances[i] / tau2[i];
    }
    if (r < D) {
      const double g = st.Mc - gain_c;
      kl += static_cast<double>(D - r) *
            (variance_kl(st.eta2, tau2_c) + 0.5 * g * g * y.complement_variance / tau2_c);
    }
    total += kl;

    y.mean = sampler_mean;
    y.variances = (st.M.array().square() * y.variances.array() + st.eta2).matrix();
    y.complement_variance = st.Mc * st.Mc * y.complement_variance + st.eta2;
  }
  return total;
}

MetricReport kl_experiment(const GaussianLaw& data, const ReverseRunConfig& config) {
  check_dims(data, config);
  const TimeSchedule& sched = config.schedule;
  MetricReport report;
  report.name = "kl_experiment";
  report.value = terminal_kl(data, config);

  ReverseRunConfig exact_init = config;
  exact_init.init = Initialization::forward_marginal;
  report.extras["discretization_kl"] =
      config.init == Initialization::forward_marginal ? report.value : terminal_kl(data, exact_init);

  const SpectralGaussian pT = spectral_marginal(data, sched.horizon());
  SpectralGaussian standard{Eigen::VectorXd::Zero(pT.ambient_dim()), pT.basis,
                            Eigen::VectorXd::Ones(pT.rank()), 1.0};
  report.extras["init_kl"] = gaussian_kl(pT, standard);
  report.extras["path_kl"] = has_linear(config.bias) ? kNaN : path_kl(data, config);
  report.extras["D"] = static_cast<double>(data.ambient_dim());
  report.extras["d"] = static_cast<double>(pT.rank());
  report.extras["K"] = sched.steps();
  report.extras["kappa"] = sched.kappa();
  report.extras["T"] = sched.horizon();
  report.extras["delta"] = sched.early_stop();
  return report;
}

MetricReport exact_discretization_error(const GaussianLaw& data, const TimeSchedule& schedule,
                                        MeterQuadrature mode) {
  const SpectralGaussian base = spectral_form(data);
  const Eigen::Index D = base.ambient_dim();
  const Eigen::Index r = base.rank();

  // E|G_u (X_u - c_u m) - G_b (X_b - c_b m)|^2 along one direction of data
  // variance w, with G_t = w c_t / S_t and Cov(X_u, X_b) = c_{b-u} S_u.
  auto increment = [](double w, double u, double b) {
    const NoiseScales nu = noise_scales(u), nb = noise_scales(b);
    const double Su = nu.c * nu.c * w + nu.sigma2;
    const double Sb = nb.c * nb.c * w + nb.sigma2;
    const double Gu = w * nu.c / Su, Gb = w * nb.c / Sb;
    return Gu * Gu * Su + Gb * Gb * Sb - 2.0 * Gu * Gb * std::exp(-(b - u)) * Su;
  };

  MetricReport report;
  report.name = "discretization_error";
  for (int k = 0; k < schedule.steps(); ++k) {
    const double a = schedule.forward_time(k + 1);
    const double b = schedule.forward_time(k);
    const double u = mode == MeterQuadrature::right_endpoint ? a : 0.5 * (a + b);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < r; ++i) sum += increment(base.variances[i], u, b);
    if (r < D) sum += static_cast<double>(D - r) * increment(base.complement_variance, u, b);
    const NoiseScales nu = noise_scales(u);
    const double value = schedule.gap(k) * nu.c * nu.c / (nu.sigma2 * nu.sigma2) * sum;
    report.components.push_back({k, schedule.time(k), value, 0.0, u});
    report.value += value;
  }
  return report;
}

MetricReport discretization_error_meter(const ScoreOracle& oracle, const TimeSchedule& schedule,
                                        const McOptions& mc, MeterQuadrature mode) {
  if (mc.n < 100) throw std::invalid_argument("discretization_error_meter: n must be >= 100");
  const int K = schedule.steps();
  const auto width = static_cast<std::size_t>(K) + 1;
  const auto table = sample_table(mc, width, [&](Rng& rng, double* row) {
    double total = 0.0;
    for (int k = 0; k < K; ++k) {
      const double a = schedule.forward_time(k + 1);
      const double b = schedule.forward_time(k);
      const double u = mode == MeterQuadrature::right_endpoint ? a : 0.5 * (a + b);
      const ForwardDraw draw = forward_sample(oracle, u, rng);
      const Eigen::VectorXd xb = forward_bridge(draw.xt, u, b, rng);
      const Eigen::VectorXd mu = checked_posterior_mean(oracle, u, draw.xt, k);
      const Eigen::VectorXd mb = checked_posterior_mean(oracle, b, xb, k);
      const NoiseScales nu = noise_scales(u);
      const double v = schedule.gap(k) * nu.c * nu.c / (nu.sigma2 * nu.sigma2) * (mu - mb).squaredNorm();
      row[k] = v;
      total += v;
    }
    row[K] = total;
  });

  MetricReport report = mc_report("discretization_error", mc);
  for (int k = 0; k < K; ++k) {
    const MeanStderr ms = column_stats(table, width, static_cast<std::size_t>(k));
    const double a = schedule.forward_time(k + 1);
    const double b = schedule.forward_time(k);
    const double u = mode == MeterQuadrature::right_endpoint ? a : 0.5 * (a + b);
    report.components.push_back({k, schedule.time(k), ms.mean, ms.std_error, u});
  }
  const MeanStderr total = column_stats(table, width, static_cast<std::size_t>(K));
  report.value = total.mean;
  report.std_error = total.std_error;
  return report;
}

MetricReport martingale_checks(const ScoreOracle& oracle, double t1, double t2, double t3,
                               const McOptions& mc, const MartingaleOptions& options) {
  if (!(t1 >= 0.0 && t1 < t2 && (t2 < t3 || (options.allow_degenerate && t2 == t3)))) {
    throw std::invalid_argument("martingale_checks: requires 0 <= t1 < t2 < t3");
  }
  if (options.tower_bins < 1) throw std::invalid_argument("martingale_checks: tower_bins must be >= 1");
  const Eigen::Index D = oracle.dim();
  // Columns: |M3-M1|^2, |M3-M2|^2, |M2-M1|^2, residual, bin key, M2 - M3.
  const std::size_t width = 5 + static_cast<std::size_t>(D);
  const auto table = sample_table(mc, width, [&](Rng& rng, double* row) {
    const ForwardDraw draw = forward_sample(oracle, t1, rng);
    const Eigen::VectorXd m1 = t1 == 0.0 ? draw.x0 : oracle.posterior_mean(t1, draw.xt);
    const Eigen::VectorXd x2 = forward_bridge(draw.xt, t1, t2, rng);
    const Eigen::VectorXd m2 = oracle.posterior_mean(t2, x2);
    const Eigen::VectorXd x3 = t3 > t2 ? forward_bridge(x2, t2, t3, rng) : x2;
    const Eigen::VectorXd m3 = t3 > t2 ? oracle.posterior_mean(t3, x3) : m2;
    row[0] = (m3 - m1).squaredNorm();
    row[1] = (m3 - m2).squaredNorm();
    row[2] = (m2 - m1).squaredNorm();
    row[3] = 2.0 * (m3 - m2).dot(m2 - m1);
    row[4] = x3[0];
    for (Eigen::Index j = 0; j < D; ++j) row[5 + j] = m2[j] - m3[j];
  });

  MetricReport report = mc_report("martingale_orthogonality", mc);
  const char* names[] = {"inc_31", "inc_32", "inc_21"};
  for (std::size_t c = 0; c < 3; ++c) {
    const MeanStderr ms = column_stats(table, width, c);
    report.extras[names[c]] = ms.mean;
    report.extras[std::string(names[c]) + "_stderr"] = ms.std_error;
  }
  const MeanStderr resid = column_stats(table, width, 3);
  report.value = resid.mean;
  report.std_error = resid.std_error;

  // E[m_{t2}(X_{t2}) | X_{t3}] = m_{t3}(X_{t3}), so M2 - M3 averages to 0 on
  // every bin of X_{t3}.
  const auto n = static_cast<std::size_t>(mc.n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return table[a * width + 4] < table[b * width + 4];
  });
  const auto bins = std::min<std::size_t>(static_cast<std::size_t>(options.tower_bins), n);
  double tower = 0.0;
  for (std::size_t j = 0; j < bins; ++j) {
    const std::size_t begin = n * j / bins, end = n * (j + 1) / bins;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(D);
    for (std::size_t q = begin; q < end; ++q) {
      acc += Eigen::Map<const Eigen::VectorXd>(table.data() + order[q] * width + 5, D);
    }
    tower = std::max(tower, acc.norm() / static_cast<double>(end - begin));
  }
  report.extras["tower_residual"] = tower;
  report.extras["t1"] = t1;
  report.extras["t2"] = t2;
  report.extras["t3"] = t3;
  return report;
}

MetricReport monotonicity_check(const ScoreOracle& oracle, double t1, double t2, double t3,
                                const McOptions& mc) {
  if (!(t1 > 0.0 && t1 < t2 && t2 < t3)) {
    throw std::invalid_argument("monotonicity_check: requires 0 < t1 < t2 < t3");
  }
  const auto table = sample_table(mc, 3, [&](Rng& rng, double* row) {
    const ForwardDraw draw = forward_sample(oracle, t1, rng);
    const Eigen::VectorXd x2 = forward_bridge(draw.xt, t1, t2, rng);
    const Eigen::VectorXd x3 = forward_bridge(x2, t2, t3, rng);
    const Eigen::VectorXd s3 = oracle.score(t3, x3);
    row[0] = (corrected_score_from(t1, draw.xt, t3, x3, s3) - oracle.score(t1, draw.xt)).squaredNorm();
    row[1] = (corrected_score_from(t2, x2, t3, x3, s3) - oracle.score(t2, x2)).squaredNorm();
    row[2] = row[0] - row[1];
  });
  MetricReport report = mc_report("monotonicity", mc);
  const MeanStderr e1 = column_stats(table, 3, 0), e2 = column_stats(table, 3, 1);
  const MeanStderr diff = column_stats(table, 3, 2);
  report.value = diff.mean;
  report.std_error = diff.std_error;
  report.extras["err_t1"] = e1.mean;
  report.extras["err_t1_stderr"] = e1.std_error;
  report.extras["err_t2"] = e2.mean;
  report.extras["err_t2_stderr"] = e2.std_error;
  report.extras["t1"] = t1;
  report.extras["t2"] = t2;
  report.extras["t3"] = t3;
  return report;
}

MetricReport concentration_curve(const ScoreOracle& oracle, const std::vector<double>& times,
                                 const McOptions& mc, const std::optional<ManifoldSpec>& spec) {
  if (times.empty()) throw std::invalid_argument("concentration_curve: no times");
  for (double t : times) {
    if (!(t >= kTimeFloor) || !std::isfinite(t)) {
      throw std::invalid_argument("concentration_curve: times must be finite and >= t_min");
    }
  }
  const std::size_t m = times.size();
  const auto table = sample_table(mc, m, [&](Rng& rng, double* row) {
    const Eigen::VectorXd x0 = oracle.sample0(rng);
    const Eigen::VectorXd z = standard_normal(x0.size(), rng);
    for (std::size_t j = 0; j < m; ++j) {
      const NoiseScales ns = noise_scales(times[j]);
      const Eigen::VectorXd xt = ns.c * x0 + ns.sigma * z;
      row[j] = (x0 - oracle.posterior_mean(times[j], xt)).squaredNorm();
    }
  });

  MetricReport report = mc_report("concentration", mc);
  report.value = -kInf;
  const double t_ref = *std::min_element(times.begin(), times.end());
  const auto n = static_cast<std::size_t>(mc.n);
  for (std::size_t j = 0; j < m; ++j) {
    const MeanStderr ms = column_stats(table, m, j);
    double diff_se = 0.0;
    if (j > 0) {
      std::vector<double> d(n);
      for (std::size_t i = 0; i < n; ++i) d[i] = table[i * m + j] - table[i * m + j - 1];
      diff_se = mean_stderr(d).std_error;
    }
    report.components.push_back({static_cast<int>(j), times[j], ms.mean, ms.std_error, diff_se});
    report.value = std::max(report.value, ms.mean);
    if (spec) {
      const double scale = spec->intrinsic_dim * times[j] * (std::log(1.0 / t_ref) + spec->regularity);
      report.extras["normalized_" + std::to_string(j)] = ms.mean / scale;
    }
  }
  const auto peak = std::max_element(report.components.begin(), report.components.end(),
                                     [](const auto& a, const auto& b) { return a.value < b.value; });
  report.std_error = peak->std_error;
  if (spec) {
    report.extras["d"] = spec->intrinsic_dim;
    report.extras["C"] = spec->regularity;
  }
  return report;
}

MetricReport score_error_budget(const GaussianLaw& data, const ScoreBias& bias,
                                const ReverseRunConfig& config) {
  ReverseRunConfig perturbed = config;
  perturbed.bias = bias;
  check_dims(data, perturbed);
  ReverseRunConfig clean = config;
  clean.bias = ScoreBias{};

  const TimeSchedule& sched = config.schedule;
  const Eigen::Index D = data.ambient_dim();
  const Eigen::VectorXd offset = offset_or_zero(bias, D);
  const SpectralGaussian base = spectral_form(data);
  const Eigen::MatrixXd cov0 = bias.linear ? data.covariance() : Eigen::MatrixXd();

  // E|a + B' X|^2 = |a + B' mu|^2 + tr(B' Sigma B'^T) for X ~ N(mu, Sigma).
  double eps2 = 0.0;
  for (int k = 0; k < sched.steps(); ++k) {
    const double s = sched.forward_time(k);
    const NoiseScales ns = noise_scales(s);
    const Eigen::VectorXd mu = ns.c * data.mean;
    double second;
    if (bias.linear) {
      Eigen::MatrixXd B = *bias.linear;
      B.diagonal().array() += bias.isotropic;
      Eigen::MatrixXd Sigma = ns.c * ns.c * cov0;
      Sigma.diagonal().array() += ns.sigma2;
      second = (offset + B * mu).squaredNorm() + (B * Sigma * B.transpose()).trace();
    } else {
      const SpectralMarginal mv = marginal_variances(base, s);
      const double trace = mv.S.sum() + static_cast<double>(D - base.rank()) * mv.Sc;
      second = (offset + bias.isotropic * mu).squaredNorm() + bias.isotropic * bias.isotropic * trace;
    }
    eps2 += sched.gap(k) * second;
  }

  MetricReport report;
  report.name = "score_error_budget";
  report.value = eps2;
  const double kl_p = terminal_kl(data, perturbed);
  const double kl_u = terminal_kl(data, clean);
  report.extras["eps2_score"] = eps2;
  report.extras["kl_perturbed"] = kl_p;
  report.extras["kl_unperturbed"] = kl_u;
  report.extras["delta_kl"] = kl_p - kl_u;
  report.extras["ratio"] = eps2 > 0.0 ? (kl_p - kl_u) / eps2 : kNaN;
  return report;
}

MetricReport tweedie_fd_check(const ScoreOracle& oracle, const TweedieCheckOptions& options) {
  if (!oracle.has_log_marginal()) {
    throw std::invalid_argument("tweedie_fd_check: oracle has no log_marginal");
  }
  if (options.cases < 1 || !(options.t_min >= kTimeFloor && options.t_min <= options.t_max) ||
      !(options.step > 0.0)) {
    throw std::invalid_argument("tweedie_fd_check: invalid options");
  }
  MetricReport report;
  report.name = "tweedie_fd";
  report.n_samples = options.cases;
  report.seed = options.seed;
  const double log_lo = std::log(options.t_min), log_hi = std::log(options.t_max);
  for (int i = 0; i < options.cases; ++i) {
    Rng rng = make_stream(options.seed, static_cast<std::uint64_t>(i));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double t = std::exp(log_lo + (log_hi - log_lo) * unit(rng));
    const Eigen::VectorXd x = forward_sample(oracle, t, rng).xt;
    const Eigen::VectorXd s = oracle.score(t, x);
    Eigen::VectorXd fd(x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      Eigen::VectorXd xp = x, xm = x;
      xp[j] += options.step;
      xm[j] -= options.step;
      fd[j] = (oracle.log_marginal(t, xp) - oracle.log_marginal(t, xm)) / (2.0 * options.step);
    }
    const double err = (s - fd).lpNorm<Eigen::Infinity>() / std::max(1.0, fd.lpNorm<Eigen::Infinity>());
    report.components.push_back({i, t, err, 0.0, fd.lpNorm<Eigen::Infinity>()});
    report.value = std::max(report.value, err);
  }
  return report;
}

}  // namespace manidiff
