#include <cmath>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "manidiff/gaussian.hpp"
#include "manidiff/manifold.hpp"
#include "manidiff/measures.hpp"
#include "manidiff/metrics.hpp"
#include "manidiff/quadrature.hpp"
#include "manidiff/rng.hpp"
#include "manidiff/sampler.hpp"
#include "manidiff/schedule.hpp"

using namespace manidiff;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

GaussianLaw dense_law(const VectorXd& mean, const MatrixXd& cov) {
  GaussianLaw law;
  law.mean = mean;
  law.factor = cov.llt().matrixL();
  return law;
}

GaussianLaw random_rank_law(Eigen::Index D, Eigen::Index d, std::uint64_t seed) {
  Rng rng = make_stream(seed, 0);
  GaussianLaw law;
  law.mean = 0.3 * standard_normal(D, rng);
  law.factor = MatrixXd(D, d);
  for (Eigen::Index j = 0; j < d; ++j) law.factor.col(j) = 0.5 * standard_normal(D, rng);
  return law;
}

// KL(p || q) straight from the textbook formula with dense matrices.
double reference_kl(const DenseGaussian& p, const DenseGaussian& q) {
  const Eigen::Index D = p.mean.size();
  const auto q_ldlt = q.covariance.ldlt();
  const VectorXd diff = q.mean - p.mean;
  return 0.5 * (q_ldlt.solve(p.covariance).trace() + diff.dot(q_ldlt.solve(diff)) - D +
                std::log(q.covariance.determinant() / p.covariance.determinant()));
}

PointCloudMeasure two_point_cloud() {
  return uniform_cloud((PointCloudMeasure::Points(2, 1) << -0.5, 0.5).finished());
}

// Posterior mean of the two-point law {-1/2, +1/2}.
double two_point_mean(double t, double x) {
  const NoiseScales n = noise_scales(t);
  return 0.5 * std::tanh(0.5 * n.c * x / n.sigma2);
}

}  // namespace

TEST(GaussianKl, IdenticalLawsGiveZero) {
  const GaussianLaw p = random_rank_law(5, 5, 1);
  EXPECT_NEAR(gaussian_kl(p, p), 0.0, 1e-12);
}

TEST(GaussianKl, MeanShift) {
  const Eigen::Index D = 4;
  const VectorXd m = VectorXd::LinSpaced(D, 0.5, -1.0);
  const GaussianLaw p = dense_law(VectorXd::Zero(D), MatrixXd::Identity(D, D));
  const GaussianLaw q = dense_law(m, MatrixXd::Identity(D, D));
  EXPECT_NEAR(gaussian_kl(p, q), 0.5 * m.squaredNorm(), 1e-14);
}

TEST(GaussianKl, ScaledIdentityInTwoDimensions) {
  const GaussianLaw p = dense_law(VectorXd::Zero(2), 2 * MatrixXd::Identity(2, 2));
  const GaussianLaw q = dense_law(VectorXd::Zero(2), MatrixXd::Identity(2, 2));
  EXPECT_NEAR(gaussian_kl(p, q), 1.0 - std::log(2.0), 1e-14);
}

TEST(GaussianKl, LowRankPathMatchesDenseFormula) {
  for (std::uint64_t seed : {2, 3, 4}) {
    GaussianLaw p = random_rank_law(7, 2, seed);
    p.floor = 0.3;
    GaussianLaw q = random_rank_law(7, 3, seed + 10);
    q.floor = 0.5;
    const double expected = reference_kl(dense_form(p), dense_form(q));
    EXPECT_NEAR(gaussian_kl(p, q), expected, 1e-11 * (1 + expected));
    EXPECT_NEAR(gaussian_kl(dense_form(p), dense_form(q)), expected, 1e-11 * (1 + expected));
    EXPECT_NEAR(gaussian_kl(spectral_form(p), spectral_form(q)), expected, 1e-11 * (1 + expected));
  }
}

TEST(GaussianKl, NonnegativeOnRandomPairs) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    GaussianLaw p = random_rank_law(4, 2, 100 + seed);
    p.floor = 0.1;
    GaussianLaw q = random_rank_law(4, 1, 200 + seed);
    q.floor = 0.2;
    EXPECT_GE(gaussian_kl(p, q), 0.0);
  }
}

TEST(GaussianKl, SingularReferenceRejected) {
  const GaussianLaw p = dense_law(VectorXd::Zero(2), MatrixXd::Identity(2, 2));
  const GaussianLaw q = axis_aligned_law(2, 1, 1.0);
  EXPECT_THROW(gaussian_kl(p, q), std::domain_error);
  try {
    gaussian_kl(p, q);
  } catch (const std::domain_error& e) {
    EXPECT_NE(std::string(e.what()).find("eigenvalue"), std::string::npos);
  }
  EXPECT_TRUE(std::isinf(gaussian_kl(q, p)));
}

TEST(Propagation, StandardGaussianDataMatchesVarianceRecursion) {
  GaussianLaw data;
  data.mean = VectorXd::Zero(3);
  data.factor = MatrixXd::Zero(3, 0);
  data.floor = 1.0;
  const ReverseRunConfig config{build_schedule(0.1, 20, 40)};
  const DenseGaussian out = dense_form(propagate_affine_reverse(data, config));
  double v = 1.0;
  const TimeSchedule& s = config.schedule;
  for (int k = 0; k < s.steps(); ++k) {
    const StepCoefficients c = corrected_coefficients(s, k);
    v = std::pow(c.alpha - c.beta, 2) * v + c.eta * c.eta;
  }
  EXPECT_LT((out.covariance - v * MatrixXd::Identity(3, 3)).norm(), 1e-13);
  EXPECT_LT(out.mean.norm(), 1e-15);
}

TEST(Propagation, PointMassFromTrueMarginalIsExact) {
  const VectorXd y0 = VectorXd::LinSpaced(4, -0.5, 0.5);
  ReverseRunConfig config{build_schedule(0.1, 30, 70)};
  config.init = Initialization::forward_marginal;
  const DenseGaussian out = dense_form(propagate_affine_reverse(point_mass_law(y0), config));
  const NoiseScales delta = noise_scales(config.schedule.early_stop());
  EXPECT_LT((out.mean - delta.c * y0).norm(), 1e-10);
  EXPECT_LT((out.covariance - delta.sigma2 * MatrixXd::Identity(4, 4)).norm(), 1e-10);
}

TEST(Propagation, SpectralAgreesWithDense) {
  const GaussianLaw data = random_rank_law(6, 2, 5);
  ReverseRunConfig config{build_schedule(0.15, 10, 30)};
  for (Scheme scheme : {Scheme::corrected, Scheme::exponential_integrator}) {
    config.scheme = scheme;
    config.bias = ScoreBias::constant(VectorXd::LinSpaced(6, 0.01, 0.05));
    const DenseGaussian a = dense_form(propagate_affine_reverse(data, config));
    const DenseGaussian b = propagate_affine_reverse_dense(data, config);
    EXPECT_LT((a.mean - b.mean).norm(), 1e-12);
    EXPECT_LT((a.covariance - b.covariance).norm(), 1e-12);
  }
}

TEST(Propagation, LinearBiasRequiresDensePath) {
  const GaussianLaw data = random_rank_law(3, 1, 6);
  ReverseRunConfig config{build_schedule(0.15, 10, 30)};
  config.bias.linear = 0.01 * MatrixXd::Identity(3, 3);
  EXPECT_THROW(propagate_affine_reverse(data, config), std::invalid_argument);
  EXPECT_NO_THROW(propagate_affine_reverse_dense(data, config));
}

TEST(Propagation, MonteCarloAgreesWithExactLaw) {
  const GaussianLaw data = random_rank_law(8, 2, 7);
  ReverseRunConfig config{build_schedule(0.15, 20, 40)};
  config.batch = 40000;
  config.seed = 7;
  const DenseGaussian exact = dense_form(propagate_affine_reverse(data, config));
  const ReverseRun run = run_reverse(config, gaussian_oracle(data));
  const VectorXd mean = run.terminal.colwise().mean().transpose();
  const PointCloudMeasure::Points centered = run.terminal.rowwise() - mean.transpose();
  const MatrixXd cov = centered.transpose() * centered / (config.batch - 1.0);
  const double n = config.batch;
  for (int i = 0; i < 8; ++i) {
    EXPECT_LE(std::abs(mean[i] - exact.mean[i]), 3 * std::sqrt(exact.covariance(i, i) / n));
    for (int j = i; j < 8; ++j) {
      // Var of a sample covariance entry: (S_ii S_jj + S_ij^2) / (n - 1).
      const double se = std::sqrt((exact.covariance(i, i) * exact.covariance(j, j) +
                                   std::pow(exact.covariance(i, j), 2)) / (n - 1));
      // 3 stderr per diagonal entry; off-diagonal entries use a family-wise band
      // for the 28 simultaneous comparisons.
      const double z = i == j ? 3.0 : 4.0;
      EXPECT_LE(std::abs(cov(i, j) - exact.covariance(i, j)), z * se) << i << "," << j;
    }
  }
}

TEST(KlExperiment, StandardGaussianDataHasNoInitKl) {
  GaussianLaw data;
  data.mean = VectorXd::Zero(2);
  data.factor = MatrixXd::Zero(2, 0);
  data.floor = 1.0;
  const MetricReport r = kl_experiment(data, ReverseRunConfig{build_schedule(0.1, 20, 40)});
  EXPECT_NEAR(r.extra("init_kl"), 0.0, 1e-12);
  EXPECT_EQ(r.std_error, 0.0);
  EXPECT_EQ(r.n_samples, 0);
  // The sampler contracts N(0, I), so its output is not the stationary law.
  EXPECT_GT(r.value, 0.0);
  EXPECT_NEAR(r.value, r.extra("discretization_kl"), 1e-15);
}

TEST(KlExperiment, TensorizesOverBlocks) {
  const GaussianLaw a = random_rank_law(3, 1, 8);
  const GaussianLaw b = random_rank_law(4, 2, 9);
  const std::vector<GaussianLaw> blocks = {a, b};
  const ReverseRunConfig config{build_schedule(0.1, 30, 60)};
  const double joint = kl_experiment(block_product(blocks), config).value;
  const double sum = kl_experiment(a, config).value + kl_experiment(b, config).value;
  EXPECT_NEAR(joint, sum, 1e-10);
}

TEST(KlExperiment, AmbientDimensionIndependenceAtLargeHorizon) {
  const ReverseRunConfig config{build_schedule(0.1, 90, 130)};
  const double small = kl_experiment(axis_aligned_law(4, 2, 1.0), config).value;
  const double large = kl_experiment(axis_aligned_law(64, 2, 1.0), config).value;
  EXPECT_LT(std::abs(small - large), 1e-6);
}

TEST(KlExperiment, PathKlBoundsTerminalKl) {
  const GaussianLaw data = random_rank_law(3, 2, 10);
  ReverseRunConfig config{build_schedule(0.15, 20, 40)};
  config.init = Initialization::forward_marginal;
  const MetricReport r = kl_experiment(data, config);
  // Data processing: the terminal marginal KL cannot exceed the path KL.
  EXPECT_LE(r.value, r.extra("path_kl") * (1 + 1e-12));
  EXPECT_NEAR(path_kl(data, config), r.extra("path_kl"), 1e-15);
}

TEST(Meter, PointMassIsZero) {
  const MetricReport r = discretization_error_meter(*point_mass_oracle(VectorXd::Ones(2)),
                                                    build_schedule(0.2, 5, 10), {200, 1, 1});
  EXPECT_EQ(r.value, 0.0);
  EXPECT_EQ(r.components.size(), 10u);
}

TEST(Meter, TwoPointStepsMatchQuadrature) {
  const TimeSchedule s = build_schedule(0.2, 5, 10);
  const MetricReport r =
      discretization_error_meter(*point_cloud_oracle(two_point_cloud()), s, {20000, 2, 2});
  const GaussHermiteRule rule = gauss_hermite(80);
  double total = 0.0;
  for (int k = 0; k < s.steps(); ++k) {
    const double u = s.forward_time(k + 1);
    const double b = s.forward_time(k);
    const NoiseScales nu = noise_scales(u);
    const NoiseScales gap = noise_scales(b - u);
    // By symmetry condition on X_0 = +1/2.
    const double inc = expect_normal_2d(rule, [&](double z1, double z2) {
      const double xu = 0.5 * nu.c + nu.sigma * z1;
      const double xb = gap.c * xu + gap.sigma * z2;
      return std::pow(two_point_mean(u, xu) - two_point_mean(b, xb), 2);
    });
    const double expected = s.gap(k) * nu.c * nu.c / (nu.sigma2 * nu.sigma2) * inc;
    total += expected;
    const MetricComponent& c = r.components[static_cast<std::size_t>(k)];
    EXPECT_EQ(c.k, k);
    EXPECT_DOUBLE_EQ(c.aux, u);
    EXPECT_LE(std::abs(c.value - expected), 3 * c.std_error) << "k=" << k;
  }
  EXPECT_LE(std::abs(r.value - total), 3 * r.std_error);
}

TEST(Meter, ExactModeTensorizes) {
  const GaussianLaw one = axis_aligned_law(1, 1, 0.7);
  const TimeSchedule s = build_schedule(0.1, 30, 60);
  const double single = exact_discretization_error(one, s).value;
  const std::vector<GaussianLaw> copies(5, one);
  EXPECT_NEAR(exact_discretization_error(block_product(copies), s).value, 5 * single, 1e-10);
}

TEST(Meter, ProductTotalIsSumOfFactors) {
  const TimeSchedule s = build_schedule(0.2, 5, 10);
  const OraclePtr factor = point_cloud_oracle(two_point_cloud());
  const MetricReport single = discretization_error_meter(*factor, s, {20000, 3, 2});
  const OraclePtr prod = product_oracle({{factor, {0}}, {factor, {1}}, {factor, {2}}});
  const MetricReport triple = discretization_error_meter(*prod, s, {20000, 4, 2});
  const double se = std::hypot(triple.std_error, 3 * single.std_error);
  EXPECT_LE(std::abs(triple.value - 3 * single.value), 3 * se);
}

TEST(Meter, MonteCarloMatchesClosedFormForGaussian) {
  const GaussianLaw data = random_rank_law(3, 2, 11);
  const TimeSchedule s = build_schedule(0.2, 5, 12);
  for (MeterQuadrature mode : {MeterQuadrature::right_endpoint, MeterQuadrature::midpoint}) {
    const MetricReport mc = discretization_error_meter(*gaussian_oracle(data), s, {40000, 5, 2}, mode);
    const MetricReport exact = exact_discretization_error(data, s, mode);
    EXPECT_LE(std::abs(mc.value - exact.value), 3 * mc.std_error);
  }
}

TEST(Meter, WorkerCountDoesNotChangeEstimate) {
  const TimeSchedule s = build_schedule(0.2, 5, 10);
  const OraclePtr o = point_cloud_oracle(two_point_cloud());
  const MetricReport a = discretization_error_meter(*o, s, {500, 6, 1});
  const MetricReport b = discretization_error_meter(*o, s, {500, 6, 3});
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.std_error, b.std_error);
}

TEST(Meter, RejectsSmallSamples) {
  EXPECT_THROW(discretization_error_meter(*point_mass_oracle(VectorXd::Zero(1)),
                                          build_schedule(0.2, 5, 10), {99, 1, 1}),
               std::invalid_argument);
}

TEST(Meter, TimeFloorViolationNamesStep) {
  // delta = 1.2^{-120} sits far below the oracle floor.
  const TimeSchedule s = build_schedule(0.2, 5, 125);
  try {
    discretization_error_meter(*point_cloud_oracle(two_point_cloud()), s, {100, 1, 1});
    FAIL() << "expected a time-floor error";
  } catch (const std::domain_error& e) {
    EXPECT_NE(std::string(e.what()).find("k="), std::string::npos) << e.what();
  }
}

TEST(Martingale, DegenerateTripleHasZeroResidual) {
  MartingaleOptions opt;
  opt.allow_degenerate = true;
  const MetricReport r = martingale_checks(*point_cloud_oracle(two_point_cloud()), 0.0, 0.5, 0.5,
                                           {1000, 1, 1}, opt);
  EXPECT_EQ(r.value, 0.0);
  EXPECT_THROW(martingale_checks(*point_cloud_oracle(two_point_cloud()), 0.0, 0.5, 0.5, {1000, 1, 1}),
               std::invalid_argument);
  EXPECT_THROW(martingale_checks(*point_cloud_oracle(two_point_cloud()), 0.3, 0.2, 0.5, {1000, 1, 1}),
               std::invalid_argument);
}

TEST(Martingale, TwoPointOrthogonality) {
  const MetricReport r =
      martingale_checks(*point_cloud_oracle(two_point_cloud()), 0.0, 0.25, 1.0, {100000, 2, 2});
  EXPECT_LE(std::abs(r.value), 3 * r.std_error);
  EXPECT_NEAR(r.extra("inc_31") - r.extra("inc_32") - r.extra("inc_21"), r.value, 1e-12);
}

TEST(Martingale, RankOneGaussianIncrementsMatchClosedForm) {
  // m_t(x) = c_t v / (c_t^2 v + sigma_t^2) x for data N(0, v) in R^1, so each
  // increment is an explicit quadratic form in the joint Gaussian path.
  const double v = 0.25;
  GaussianLaw data;
  data.mean = VectorXd::Zero(1);
  data.factor = MatrixXd::Constant(1, 1, 0.5);
  const double t2 = 0.25, t3 = 1.0;
  const MetricReport r = martingale_checks(*gaussian_oracle(data), 0.0, t2, t3, {100000, 3, 2});
  auto gain = [&](double t) {
    const NoiseScales n = noise_scales(t);
    return n.c * v / (n.c * n.c * v + n.sigma2);
  };
  // E[M_t^2] = gain_t^2 Var(X_t) = c_t v gain_t; E[M_2 M_3] = E[M_3^2] for a martingale.
  auto second = [&](double t) { return noise_scales(t).c * v * gain(t); };
  const double inc_32 = second(t2) - second(t3);
  const double inc_21 = v - second(t2);
  EXPECT_LE(std::abs(r.extra("inc_32") - inc_32), 3 * r.extra("inc_32_stderr"));
  EXPECT_LE(std::abs(r.extra("inc_21") - inc_21), 3 * r.extra("inc_21_stderr"));
  EXPECT_LE(std::abs(r.value), 3 * r.std_error);
}

TEST(Monotonicity, PointMassHasNoError) {
  const MetricReport r = monotonicity_check(*point_mass_oracle(VectorXd::Ones(2)), 0.1, 0.3, 0.8,
                                            {1000, 1, 1});
  EXPECT_NEAR(r.extra("err_t1"), 0.0, 1e-20);
  EXPECT_NEAR(r.extra("err_t2"), 0.0, 1e-20);
  EXPECT_THROW(monotonicity_check(*point_mass_oracle(VectorXd::Ones(2)), 0.0, 0.3, 0.8, {1000, 1, 1}),
               std::invalid_argument);
}

TEST(Monotonicity, TwoPointDifferenceNonnegative) {
  const MetricReport r =
      monotonicity_check(*point_cloud_oracle(two_point_cloud()), 0.1, 0.3, 0.8, {100000, 4, 2});
  EXPECT_GE(r.value, -3 * r.std_error);
}

TEST(Monotonicity, PrefactorDecreasing) {
  auto prefactor = [](double t) {
    const NoiseScales n = noise_scales(t);
    return n.c * n.c / (n.sigma2 * n.sigma2);
  };
  for (double t : {0.1, 1.0, 3.0}) {
    const double h = 1e-6 * t;
    EXPECT_LT((prefactor(t + h) - prefactor(t - h)) / (2 * h), 0.0) << "t=" << t;
  }
}

TEST(Concentration, PointMassIsZeroAndCircleIsBounded) {
  const MetricReport zero =
      concentration_curve(*point_mass_oracle(VectorXd::Ones(2)), {0.01, 0.1, 1.0}, {1000, 1, 1});
  for (const auto& c : zero.components) EXPECT_EQ(c.value, 0.0);

  Rng gen = make_stream(12, 0);
  const ManifoldCloud mc = make_manifold_cloud(ManifoldKind::circle, {1, 0, true}, 3, 500, gen);
  const MetricReport r = concentration_curve(*point_cloud_oracle(mc.cloud),
                                             {0.001, 0.01, 0.1, 1.0, 5.0}, {5000, 2, 2}, mc.spec);
  for (const auto& c : r.components) EXPECT_LE(c.value, 1.0 + 3 * c.std_error);
  EXPECT_EQ(r.extra("d"), 1.0);
  EXPECT_DOUBLE_EQ(r.extra("C"), mc.spec.regularity);
  const double expected0 = r.components[0].value / (1 * 0.001 * (std::log(1 / 0.001) + mc.spec.regularity));
  EXPECT_NEAR(r.extra("normalized_0"), expected0, 1e-15);
  // Raw curve without a spec.
  const MetricReport raw = concentration_curve(*point_cloud_oracle(mc.cloud), {0.01}, {500, 2, 1});
  EXPECT_THROW(raw.extra("normalized_0"), std::out_of_range);
}

TEST(ScoreBudget, ZeroBias) {
  const GaussianLaw data = axis_aligned_law(4, 2, 1.0);
  const ReverseRunConfig config{build_schedule(0.1, 30, 60)};
  const MetricReport r = score_error_budget(data, ScoreBias::constant(VectorXd::Zero(4)), config);
  EXPECT_EQ(r.value, 0.0);
  EXPECT_NEAR(r.extra("kl_perturbed"), r.extra("kl_unperturbed"), 1e-15);
  EXPECT_TRUE(std::isnan(r.extra("ratio")));
}

TEST(ScoreBudget, ConstantBiasIsQuadratic) {
  const GaussianLaw data = axis_aligned_law(4, 2, 1.0);
  const ReverseRunConfig config{build_schedule(0.1, 30, 60)};
  const TimeSchedule& s = config.schedule;
  double gamma_sum = 0.0;
  for (int k = 0; k < s.steps(); ++k) gamma_sum += s.gap(k);
  const double eps = 0.03;
  const MetricReport r = score_error_budget(data, ScoreBias::constant(eps * VectorXd::Unit(4, 0)), config);
  EXPECT_NEAR(r.value, eps * eps * gamma_sum, 1e-15);
  const MetricReport r2 =
      score_error_budget(data, ScoreBias::constant(2 * eps * VectorXd::Unit(4, 0)), config);
  EXPECT_NEAR(r2.value / r.value, 4.0, 1e-14);
  EXPECT_GT(r.extra("delta_kl"), 0.0);
}

TEST(Tweedie, OraclesWithLogMarginal) {
  Rng gen = make_stream(13, 0);
  const ManifoldCloud mc = make_manifold_cloud(ManifoldKind::torus, {2, 0, true}, 5, 200, gen);
  TweedieCheckOptions opt;
  opt.seed = 13;
  for (const OraclePtr& o : {point_cloud_oracle(mc.cloud), gaussian_oracle(random_rank_law(5, 2, 13)),
                             point_mass_oracle(VectorXd::Ones(3))}) {
    const MetricReport r = tweedie_fd_check(*o, opt);
    EXPECT_EQ(r.components.size(), 100u);
    EXPECT_LE(r.value, 1e-4) << o->describe();
  }
}

TEST(Reports, RecordAndComponentsFormat) {
  MetricReport r;
  r.name = "demo";
  r.value = 0.1;
  r.extras["b"] = 2.0;
  r.extras["a"] = 1.0;
  r.components.push_back({0, 0.5, 1.0, 0.25, 3.0});
  std::ostringstream rec, csv;
  write_record(rec, r);
  write_components_csv(csv, r);
  EXPECT_EQ(rec.str(),
            "name demo\nvalue 0.10000000000000001\nstderr 0\nn_samples 0\nseed 0\na 1\nb 2\n");
  EXPECT_EQ(csv.str(), "k,t,value,stderr,aux\n0,0.5,1,0.25,3\n");
  EXPECT_THROW(r.extra("missing"), std::out_of_range);
}

TEST(Reports, MeanStderr) {
  const MeanStderr m = mean_stderr({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(m.mean, 2.5);
  EXPECT_NEAR(m.std_error, std::sqrt((1.25 * 4 / 3) / 4), 1e-15);
  EXPECT_TRUE(std::isinf(mean_stderr({1.0}).std_error));
}
