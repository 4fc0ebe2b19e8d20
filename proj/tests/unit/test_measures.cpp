#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "manidiff/gaussian.hpp"
#include "manidiff/manifold.hpp"
#include "manidiff/measures.hpp"
#include "manidiff/rng.hpp"
#include "manidiff/schedule.hpp"

using namespace manidiff;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd e(Eigen::Index D, Eigen::Index i) { return VectorXd::Unit(D, i); }

PointCloudMeasure cloud_of(std::initializer_list<std::vector<double>> rows) {
  PointCloudMeasure::Points pts(static_cast<Eigen::Index>(rows.size()),
                                static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < r.size(); ++j) pts(i, static_cast<Eigen::Index>(j)) = r[j];
    ++i;
  }
  return uniform_cloud(pts);
}

// Posterior mean of a finite mixture, evaluated term by term.
VectorXd brute_posterior_mean(const PointCloudMeasure& cloud, double t, const VectorXd& x) {
  const NoiseScales n = noise_scales(t);
  VectorXd num = VectorXd::Zero(cloud.dim());
  double den = 0.0;
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    const VectorXd y = cloud.points.row(i).transpose();
    const double w = cloud.weights[i] * std::exp(-(x - n.c * y).squaredNorm() / (2 * n.sigma2));
    num += w * y;
    den += w;
  }
  return num / den;
}

struct MeanAccumulator {
  VectorXd sum, sumsq;
  long n = 0;
  void add(const VectorXd& v) {
    if (n == 0) sum = sumsq = VectorXd::Zero(v.size());
    sum += v;
    sumsq += v.cwiseProduct(v);
    ++n;
  }
  VectorXd mean() const { return sum / n; }
  VectorXd stderr_() const {
    const VectorXd m = mean();
    return ((sumsq / n - m.cwiseProduct(m)) / (n - 1)).cwiseSqrt();
  }
};

}  // namespace

TEST(PointMassOracle, ScoreValues) {
  const OraclePtr zero = point_mass_oracle(VectorXd::Zero(3));
  EXPECT_EQ(zero->score(0.4, VectorXd::Zero(3)).norm(), 0.0);
  const VectorXd x = VectorXd::LinSpaced(3, -1.0, 2.0);
  const double t = 0.4;
  EXPECT_LT((zero->score(t, x) + x / noise_scales(t).sigma2).norm(), 1e-14);

  const OraclePtr unit = point_mass_oracle(e(3, 0));
  EXPECT_LT((unit->score(std::log(2.0), VectorXd::Zero(3)) - (2.0 / 3.0) * e(3, 0)).norm(), 1e-14);
  EXPECT_EQ(unit->posterior_mean(0.9, x), e(3, 0));
}

TEST(PointMassOracle, RejectsQueriesBelowFloor) {
  const OraclePtr o = point_mass_oracle(VectorXd::Zero(2));
  EXPECT_THROW(o->score(0.0, VectorXd::Zero(2)), std::domain_error);
  EXPECT_THROW(o->score(1e-9, VectorXd::Zero(2)), std::domain_error);
  EXPECT_THROW(o->score(0.5, VectorXd::Zero(3)), std::invalid_argument);
  EXPECT_THROW(o->score(0.5, VectorXd::Constant(2, NAN)), std::domain_error);
  EXPECT_THROW(point_mass_oracle(VectorXd::Constant(2, INFINITY)), std::invalid_argument);
}

TEST(PointCloudOracle, SymmetricPairHasZeroMeanAtOrigin) {
  const OraclePtr o = point_cloud_oracle(cloud_of({{-0.5, 0.0}, {0.5, 0.0}}));
  for (double t : {0.01, 0.3, 2.0}) {
    EXPECT_LT(o->posterior_mean(t, VectorXd::Zero(2)).norm(), 1e-15);
  }
}

TEST(PointCloudOracle, SinglePointMatchesPointMass) {
  const VectorXd y0 = VectorXd::LinSpaced(3, 0.1, 0.3);
  const OraclePtr cloud = point_cloud_oracle(cloud_of({{0.1, 0.2, 0.3}}));
  const OraclePtr mass = point_mass_oracle(y0);
  Rng rng = make_stream(1, 0);
  for (double t : {0.001, 0.2, 1.5}) {
    const VectorXd x = standard_normal(3, rng);
    EXPECT_LT((cloud->score(t, x) - mass->score(t, x)).norm(), 1e-10 * (1 + mass->score(t, x).norm()));
    EXPECT_NEAR(cloud->log_marginal(t, x), mass->log_marginal(t, x), 1e-10);
  }
}

TEST(PointCloudOracle, TwoPointPosteriorMatchesBruteForce) {
  const PointCloudMeasure c = cloud_of({{0.0}, {1.0}});
  const OraclePtr o = point_cloud_oracle(c);
  const double t = std::log(2.0);
  // |x - c_t * 0| = |x - c_t * 1| at x = 0.25, so the two weights are equal.
  EXPECT_NEAR(o->posterior_mean(t, VectorXd::Constant(1, 0.25))[0], 0.5, 1e-15);
  for (double x : {-1.0, 0.1, 0.4, 2.0}) {
    const VectorXd q = VectorXd::Constant(1, x);
    EXPECT_NEAR(o->posterior_mean(t, q)[0], brute_posterior_mean(c, t, q)[0], 1e-14);
  }
}

TEST(PointCloudOracle, StableFarFromSupport) {
  const OraclePtr o = point_cloud_oracle(cloud_of({{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}}));
  const VectorXd far = VectorXd::Constant(2, 300.0);
  const VectorXd m = o->posterior_mean(1e-6, far);
  EXPECT_TRUE(m.allFinite());
  EXPECT_TRUE(std::isfinite(o->log_marginal(1e-6, far)));
}

TEST(GaussianOracle, StandardGaussianScoreIsMinusX) {
  GaussianLaw law;
  law.mean = VectorXd::Zero(3);
  law.factor = MatrixXd::Zero(3, 0);
  law.floor = 1.0;
  const OraclePtr o = gaussian_oracle(law);
  const VectorXd x = VectorXd::LinSpaced(3, -2.0, 1.0);
  for (double t : {0.01, 0.5, 3.0}) EXPECT_LT((o->score(t, x) + x).norm(), 1e-13);
}

TEST(GaussianOracle, DegenerateLimitMatchesPointMass) {
  const OraclePtr g = gaussian_oracle(point_mass_law(VectorXd::Zero(2)));
  const OraclePtr p = point_mass_oracle(VectorXd::Zero(2));
  const VectorXd x(VectorXd::LinSpaced(2, 0.3, -0.7));
  for (double t : {0.02, 0.6}) {
    EXPECT_LT((g->score(t, x) - p->score(t, x)).norm(), 1e-12);
    EXPECT_NEAR(g->log_marginal(t, x), p->log_marginal(t, x), 1e-12);
  }
}

TEST(GaussianOracle, RankOneInTwoDimensionsMatchesDenseInverse) {
  GaussianLaw law;
  law.mean = VectorXd::Zero(2);
  law.factor = e(2, 0);
  const OraclePtr o = gaussian_oracle(law);
  const double t = std::log(2.0);
  MatrixXd cov = 0.75 * MatrixXd::Identity(2, 2);
  cov(0, 0) += 0.25;
  const VectorXd x(VectorXd::LinSpaced(2, 0.8, -0.4));
  EXPECT_LT((o->score(t, x) + cov.inverse() * x).norm(), 1e-14);
}

TEST(GaussianOracle, PosteriorMeanByTweedieInversion) {
  GaussianLaw law;
  law.mean = VectorXd::LinSpaced(4, 0.0, 0.3);
  law.factor = MatrixXd::Random(4, 2);
  law.floor = 0.05;
  const OraclePtr o = gaussian_oracle(law);
  const double t = 0.3;
  const NoiseScales n = noise_scales(t);
  const VectorXd x = VectorXd::LinSpaced(4, -1.0, 1.0);
  // E[X_0 | X_t] = mean + c Cov (c^2 Cov + sigma^2 I)^{-1} (x - c mean).
  const MatrixXd cov = law.covariance();
  const MatrixXd St = n.c * n.c * cov + n.sigma2 * MatrixXd::Identity(4, 4);
  const VectorXd expected = law.mean + n.c * cov * St.ldlt().solve(x - n.c * law.mean);
  EXPECT_LT((o->posterior_mean(t, x) - expected).norm(), 1e-12);
}

TEST(ProductOracle, PointMassesOnSingletons) {
  std::vector<OracleBlock> blocks;
  for (Eigen::Index i = 0; i < 3; ++i) blocks.push_back({point_mass_oracle(VectorXd::Zero(1)), {i}});
  const OraclePtr prod = product_oracle(blocks);
  const OraclePtr whole = point_mass_oracle(VectorXd::Zero(3));
  const VectorXd x = VectorXd::LinSpaced(3, -1.0, 1.0);
  EXPECT_LT((prod->score(0.7, x) - whole->score(0.7, x)).norm(), 1e-15);
}

TEST(ProductOracle, TwoPointWithPointMassBlock) {
  const OraclePtr two = point_cloud_oracle(cloud_of({{-0.5}, {0.5}}));
  const OraclePtr prod = product_oracle({{two, {0}}, {point_mass_oracle(VectorXd::Zero(1)), {1}}});
  const double t = 0.35;
  const VectorXd x(VectorXd::LinSpaced(2, 0.2, -0.9));
  const VectorXd s = prod->score(t, x);
  EXPECT_NEAR(s[1], -x[1] / noise_scales(t).sigma2, 1e-14);
  EXPECT_NEAR(s[0], two->score(t, x.head(1))[0], 1e-15);
}

TEST(ProductOracle, ProductOfCloudsMatchesProductCloud) {
  const OraclePtr a = point_cloud_oracle(cloud_of({{0.0}, {0.6}}));
  const OraclePtr b = point_cloud_oracle(cloud_of({{-0.2}, {0.1}, {0.4}}));
  const OraclePtr prod = product_oracle({{a, {0}}, {b, {1}}});
  const PointCloudMeasure grid =
      cloud_of({{0.0, -0.2}, {0.0, 0.1}, {0.0, 0.4}, {0.6, -0.2}, {0.6, 0.1}, {0.6, 0.4}});
  const OraclePtr flat = point_cloud_oracle(grid);
  const VectorXd x(VectorXd::LinSpaced(2, 0.5, -0.3));
  for (double t : {0.05, 0.8}) {
    EXPECT_LT((prod->score(t, x) - flat->score(t, x)).norm(), 1e-12);
    EXPECT_NEAR(prod->log_marginal(t, x), flat->log_marginal(t, x), 1e-12);
  }
}

TEST(ProductOracle, RejectsBadBlocks) {
  const OraclePtr p = point_mass_oracle(VectorXd::Zero(1));
  EXPECT_THROW(product_oracle({{p, {0}}, {p, {0}}}), std::invalid_argument);
  EXPECT_THROW(product_oracle({{p, {0}}, {p, {2}}}), std::invalid_argument);
  EXPECT_THROW(product_oracle({{p, {0, 1}}}), std::invalid_argument);
}

TEST(ForwardSample, ZeroTimeIsIdentity) {
  const OraclePtr o = point_cloud_oracle(cloud_of({{0.0, 0.0}, {1.0, 0.5}}));
  Rng rng = make_stream(2, 0);
  for (int i = 0; i < 10; ++i) {
    const ForwardDraw d = forward_sample(*o, 0.0, rng);
    EXPECT_EQ(d.xt, d.x0);
  }
}

TEST(ForwardSample, PointMassMoments) {
  const VectorXd y0 = VectorXd::LinSpaced(2, 0.5, -0.25);
  const OraclePtr o = point_mass_oracle(y0);
  const double t = 0.4;
  const NoiseScales n = noise_scales(t);
  Rng rng = make_stream(3, 0);
  MeanAccumulator mean, var;
  for (int i = 0; i < 100000; ++i) {
    const VectorXd r = forward_sample(*o, t, rng).xt - n.c * y0;
    mean.add(r);
    var.add(r.cwiseProduct(r));
  }
  for (int j = 0; j < 2; ++j) {
    EXPECT_LE(std::abs(mean.mean()[j]), 3 * mean.stderr_()[j]);
    EXPECT_LE(std::abs(var.mean()[j] - n.sigma2), 3 * var.stderr_()[j]);
  }
}

TEST(ForwardBridge, ComposesToMarginal) {
  EXPECT_NEAR(noise_scales(0.3).c * noise_scales(0.5).c, noise_scales(0.8).c, 1e-16);
  const VectorXd y0 = VectorXd::Constant(1, 0.7);
  const OraclePtr o = point_mass_oracle(y0);
  const NoiseScales target = noise_scales(0.8);
  Rng rng = make_stream(4, 0);
  MeanAccumulator mean, sq;
  for (int i = 0; i < 100000; ++i) {
    const VectorXd x = forward_bridge(forward_sample(*o, 0.3, rng).xt, 0.3, 0.8, rng);
    mean.add(x);
    const VectorXd r = x - target.c * y0;
    sq.add(r.cwiseProduct(r));
  }
  EXPECT_LE(std::abs(mean.mean()[0] - target.c * 0.7), 3 * mean.stderr_()[0]);
  EXPECT_LE(std::abs(sq.mean()[0] - target.sigma2), 3 * sq.stderr_()[0]);
}

TEST(ForwardBridge, TinyGapIsNearIdentityAndOrderEnforced) {
  Rng rng = make_stream(5, 0);
  const VectorXd x = VectorXd::LinSpaced(3, -1.0, 1.0);
  EXPECT_LT((forward_bridge(x, 0.5, 0.5 + 1e-14, rng) - x).norm(), 1e-6);
  EXPECT_THROW(forward_bridge(x, 0.5, 0.5, rng), std::invalid_argument);
  EXPECT_THROW(forward_bridge(x, 0.5, 0.4, rng), std::invalid_argument);
}

TEST(OracleProperties, PosteriorMeanIsUnbiased) {
  const OraclePtr o = point_cloud_oracle(cloud_of({{0.0}, {0.3}, {1.0}}));
  const double expected = (0.0 + 0.3 + 1.0) / 3.0;
  for (double t : {0.05, 0.5}) {
    Rng rng = make_stream(6, static_cast<std::uint64_t>(t * 100));
    MeanAccumulator acc;
    for (int i = 0; i < 50000; ++i) acc.add(o->posterior_mean(t, forward_sample(*o, t, rng).xt));
    EXPECT_LE(std::abs(acc.mean()[0] - expected), 3 * acc.stderr_()[0]) << "t=" << t;
  }
}

TEST(OracleProperties, PosteriorErrorBoundedByDiameter) {
  Rng gen = make_stream(7, 0);
  const ManifoldCloud mc = make_manifold_cloud(ManifoldKind::circle, {1, 0, true}, 3, 300, gen);
  const OraclePtr o = point_cloud_oracle(mc.cloud);
  Rng rng = make_stream(7, 1);
  for (double t : {1e-4, 0.01, 0.3, 3.0}) {
    for (int i = 0; i < 500; ++i) {
      const ForwardDraw d = forward_sample(*o, t, rng);
      EXPECT_LE((d.x0 - o->posterior_mean(t, d.xt)).norm(), 1.0 + 1e-12);
    }
  }
}

TEST(PointCloudMeasure, ValidationAndNormalization) {
  PointCloudMeasure c = cloud_of({{1.0, 1.0}, {3.0, 1.0}, {1.0, 2.0}});
  EXPECT_NEAR(c.diameter(), std::sqrt(5.0), 1e-15);
  const PointCloudMeasure n = normalize_unit_diameter(c);
  EXPECT_EQ(n.points.row(0).norm(), 0.0);
  EXPECT_NEAR(n.diameter(), 1.0, 1e-15);
  c.weights[0] = 0.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.weights << 1.2, -0.1, -0.1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}
