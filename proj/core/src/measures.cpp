#include "manidiff/measures.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "manidiff/schedule.hpp"

namespace manidiff {

namespace {

// exp(-745) underflows to zero in double precision.
constexpr double kLogWeightCutoff = -745.0;

double gaussian_log_norm(Eigen::Index D, double sigma2) {
  return -0.5 * static_cast<double>(D) * std::log(2.0 * std::numbers::pi * sigma2);
}

class PointMassOracle final : public ScoreOracle {
 public:
  explicit PointMassOracle(Eigen::VectorXd y0) : y0_(std::move(y0)) {
    if (y0_.size() == 0 || !y0_.allFinite()) {
      throw std::invalid_argument("point_mass_oracle: y0 must be finite and nonempty");
    }
  }

  Eigen::Index dim() const override { return y0_.size(); }
  std::string describe() const override {
    return "point-mass(D=" + std::to_string(dim()) + ")";
  }
  Eigen::VectorXd sample0(Rng&) const override { return y0_; }

  Eigen::VectorXd posterior_mean(double t, const Eigen::VectorXd& x) const override {
    check_query(t, x);
    return y0_;
  }

  Eigen::VectorXd score(double t, const Eigen::VectorXd& x) const override {
    check_query(t, x);
    const NoiseScales ns = noise_scales(t);
    return (ns.c * y0_ - x) / ns.sigma2;
  }

  bool has_log_marginal() const override { return true; }
  double log_marginal(double t, const Eigen::VectorXd& x) const override {
    check_query(t, x);
    const NoiseScales ns = noise_scales(t);
    return gaussian_log_norm(dim(), ns.sigma2) -
           (x - ns.c * y0_).squaredNorm() / (2.0 * ns.sigma2);
  }

  std::optional<double> support_diameter() const override { return 0.0; }

 private:
  Eigen::VectorXd y0_;
};

class PointCloudOracle final : public ScoreOracle {
 public:
  PointCloudOracle(PointCloudMeasure cloud, std::optional<double> diameter)
      : cloud_(std::move(cloud)) {
    cloud_.validate();
    half_sq_norms_ = 0.5 * cloud_.points.rowwise().squaredNorm();
    log_weights_ = cloud_.weights.array().log();
    cumulative_.resize(static_cast<std::size_t>(cloud_.size()));
    double acc = 0.0;
    for (Eigen::Index i = 0; i < cloud_.size(); ++i) {
      acc += cloud_.weights[i];
      cumulative_[static_cast<std::size_t>(i)] = acc;
    }
    if (diameter) {
      diameter_ = *diameter;
    } else if (cloud_.size() <= 4096) {
      diameter_ = cloud_.diameter();
    } else {
      // Twice the largest distance to the first point bounds the diameter.
      diameter_ = 2.0 * std::sqrt((cloud_.points.rowwise() - cloud_.points.row(0))
                                      .rowwise().squaredNorm().maxCoeff());
    }
  }

  Eigen::Index dim() const override { return cloud_.dim(); }
  std::string describe() const override {
    return "point-cloud(n=" + std::to_string(cloud_.size()) +
           ",D=" + std::to_string(dim()) + ")";
  }

  Eigen::VectorXd sample0(Rng& rng) const override {
    std::uniform_real_distribution<double> u(0.0, cumulative_.back());
    const double v = u(rng);
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), v);
    auto idx = static_cast<Eigen::Index>(std::distance(cumulative_.begin(), it));
    idx = std::min(idx, cloud_.size() - 1);
    return cloud_.points.row(idx).transpose();
  }

  Eigen::VectorXd posterior_mean(double t, const Eigen::VectorXd& x) const override {
    check_query(t, x);
    const NoiseScales ns = noise_scales(t);
    Eigen::VectorXd w = log_posterior_weights(ns, x);
    normalize_log_weights(w);
    return cloud_.points.transpose() * w;
  }

  bool has_log_marginal() const override { return true; }
  double log_marginal(double t, const Eigen::VectorXd& x) const override {
    check_query(t, x);
    const NoiseScales ns = noise_scales(t);
    Eigen::VectorXd w = log_posterior_weights(ns, x);
    const double lse = normalize_log_weights(w);
    return lse - x.squaredNorm() / (2.0 * ns.sigma2) +
           gaussian_log_norm(dim(), ns.sigma2);
  }

  std::optional<double> support_diameter() const override {
    return diameter_;
  }

 private:
  // log p_i - ||x - c y_i||^2 / (2 sigma^2), up to the x-only term
  // -||x||^2 / (2 sigma^2) which is common to every point.
  Eigen::VectorXd log_posterior_weights(const NoiseScales& ns,
                                        const Eigen::VectorXd& x) const {
    Eigen::VectorXd lw = cloud_.points * x;
    lw = (ns.c * lw - ns.c * ns.c * half_sq_norms_) / ns.sigma2;
    lw += log_weights_;
    return lw;
  }

  // Replaces log weights by normalized weights; returns log-sum-exp.
  static double normalize_log_weights(Eigen::VectorXd& lw) {
    const double top = lw.maxCoeff();
    double total = 0.0;
    for (Eigen::Index i = 0; i < lw.size(); ++i) {
      const double rel = lw[i] - top;
      lw[i] = rel < kLogWeightCutoff ? 0.0 : std::exp(rel);
      total += lw[i];
    }
    lw /= total;
    return top + std::log(total);
  }

  PointCloudMeasure cloud_;
  Eigen::VectorXd half_sq_norms_;
  Eigen::VectorXd log_weights_;
  std::vector<double> cumulative_;
  double diameter_ = 0.0;
};

class GaussianOracle final : public ScoreOracle {
 public:
  explicit GaussianOracle(GaussianLaw law) : law_(std::move(law)) {
    law_.validate();
    gram_ = law_.factor.transpose() * law_.factor;
  }

  Eigen::Index dim() const override { return law_.ambient_dim(); }
  std::string describe() const override {
    return "gaussian(D=" + std::to_string(dim()) +
           ",d=" + std::to_string(law_.factor.cols()) + ")";
  }

  Eigen::VectorXd sample0(Rng& rng) const override {
    Eigen::VectorXd x = law_.mean;
    if (law_.factor.cols() > 0) x += law_.factor * standard_normal(law_.factor.cols(), rng);
    if (law_.floor > 0.0) x += std::sqrt(law_.floor) * standard_normal(dim(), rng);
    return x;
  }

  Eigen::VectorXd score(double t, const Eigen::VectorXd& x) const override {
    check_query(t, x);
    const NoiseScales ns = noise_scales(t);
    return -solve(ns, x - ns.c * law_.mean);
  }

  Eigen::VectorXd posterior_mean(double t, const Eigen::VectorXd& x) const override {
    const Eigen::VectorXd s = score(t, x);
    const NoiseScales ns = noise_scales(t);
    return (x + ns.sigma2 * s) / ns.c;
  }

  bool has_log_marginal() const override { return true; }
  double log_marginal(double t, const Eigen::VectorXd& x) const override {
    check_query(t, x);
    const NoiseScales ns = noise_scales(t);
    const LowRankPlusDiagonal cov = marginal_covariance(law_, t);
    const Eigen::VectorXd v = x - ns.c * law_.mean;
    return -0.5 * v.dot(cov.solve(v)) - 0.5 * cov.log_det() +
           gaussian_log_norm(dim(), 1.0);
  }

 private:
  // (c^2 A A^T + rho I)^{-1} v, rho = c^2 floor + sigma^2, via the r x r
  // capacitance rho I + c^2 A^T A.
  Eigen::VectorXd solve(const NoiseScales& ns, const Eigen::VectorXd& v) const {
    const double rho = ns.c * ns.c * law_.floor + ns.sigma2;
    if (law_.factor.cols() == 0) return v / rho;
    Eigen::MatrixXd cap = ns.c * ns.c * gram_;
    cap.diagonal().array() += rho;
    const Eigen::VectorXd inner =
        cap.llt().solve(ns.c * (law_.factor.transpose() * v));
    return (v - ns.c * (law_.factor * inner)) / rho;
  }

  GaussianLaw law_;
  Eigen::MatrixXd gram_;
};

class ProductOracle final : public ScoreOracle {
 public:
  explicit ProductOracle(std::vector<OracleBlock> factors) : factors_(std::move(factors)) {
    if (factors_.empty()) throw std::invalid_argument("product_oracle: no factors");
    Eigen::Index D = 0;
    for (const auto& f : factors_) {
      if (!f.oracle) throw std::invalid_argument("product_oracle: null factor");
      if (static_cast<Eigen::Index>(f.coords.size()) != f.oracle->dim()) {
        throw std::invalid_argument("product_oracle: block size differs from factor dimension");
      }
      D += f.oracle->dim();
    }
    std::vector<int> seen(static_cast<std::size_t>(D), 0);
    for (const auto& f : factors_) {
      for (Eigen::Index c : f.coords) {
        if (c < 0 || c >= D) {
          throw std::invalid_argument("product_oracle: coordinate out of range");
        }
        if (seen[static_cast<std::size_t>(c)]++ != 0) {
          throw std::invalid_argument("product_oracle: overlapping blocks");
        }
      }
    }
    dim_ = D;
  }

  Eigen::Index dim() const override { return dim_; }
  std::string describe() const override {
    std::ostringstream out;
    out << "product(";
    for (std::size_t i = 0; i < factors_.size(); ++i) {
      out << (i ? "," : "") << factors_[i].oracle->describe();
    }
    out << ")";
    return out.str();
  }

  Eigen::VectorXd sample0(Rng& rng) const override {
    Eigen::VectorXd x(dim_);
    for (const auto& f : factors_) scatter(f, f.oracle->sample0(rng), x);
    return x;
  }

  Eigen::VectorXd posterior_mean(double t, const Eigen::VectorXd& x) const override {
    check_query(t, x);
    Eigen::VectorXd out(dim_);
    for (const auto& f : factors_) scatter(f, f.oracle->posterior_mean(t, gather(f, x)), out);
    return out;
  }

  Eigen::VectorXd score(double t, const Eigen::VectorXd& x) const override {
    check_query(t, x);
    Eigen::VectorXd out(dim_);
    for (const auto& f : factors_) scatter(f, f.oracle->score(t, gather(f, x)), out);
    return out;
  }

  bool has_log_marginal() const override {
    return std::all_of(factors_.begin(), factors_.end(),
                       [](const OracleBlock& f) { return f.oracle->has_log_marginal(); });
  }

  double log_marginal(double t, const Eigen::VectorXd& x) const override {
    if (!has_log_marginal()) return ScoreOracle::log_marginal(t, x);
    check_query(t, x);
    double total = 0.0;
    for (const auto& f : factors_) total += f.oracle->log_marginal(t, gather(f, x));
    return total;
  }

  std::optional<double> support_diameter() const override {
    double sq = 0.0;
    for (const auto& f : factors_) {
      const auto d = f.oracle->support_diameter();
      if (!d) return std::nullopt;
      sq += *d * *d;
    }
    return std::sqrt(sq);
  }

 private:
  static Eigen::VectorXd gather(const OracleBlock& f, const Eigen::VectorXd& x) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(f.coords.size()));
    for (std::size_t i = 0; i < f.coords.size(); ++i) {
      out[static_cast<Eigen::Index>(i)] = x[f.coords[i]];
    }
    return out;
  }

  static void scatter(const OracleBlock& f, const Eigen::VectorXd& v, Eigen::VectorXd& out) {
    for (std::size_t i = 0; i < f.coords.size(); ++i) {
      out[f.coords[i]] = v[static_cast<Eigen::Index>(i)];
    }
  }

  std::vector<OracleBlock> factors_;
  Eigen::Index dim_ = 0;
};

}  // namespace

Eigen::VectorXd ScoreOracle::score(double t, const Eigen::VectorXd& x) const {
  return tweedie_score(t, x, posterior_mean(t, x));
}

double ScoreOracle::log_marginal(double, const Eigen::VectorXd&) const {
  throw std::logic_error(describe() + ": log_marginal not available");
}

void ScoreOracle::check_query(double t, const Eigen::VectorXd& x) const {
  if (!(t >= kTimeFloor) || !std::isfinite(t)) {
    std::ostringstream msg;
    msg << describe() << ": query time " << t << " below floor " << kTimeFloor;
    throw std::domain_error(msg.str());
  }
  if (x.size() != dim()) {
    throw std::invalid_argument(describe() + ": query has wrong dimension");
  }
  if (!x.allFinite()) throw std::domain_error(describe() + ": non-finite query point");
}

Eigen::VectorXd tweedie_score(double t, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& posterior_mean) {
  const NoiseScales ns = noise_scales(t);
  return (ns.c * posterior_mean - x) / ns.sigma2;
}

void PointCloudMeasure::validate() const {
  if (size() == 0 || dim() == 0) throw std::invalid_argument("PointCloudMeasure: empty cloud");
  if (weights.size() != size()) {
    throw std::invalid_argument("PointCloudMeasure: one weight per point required");
  }
  if (!points.allFinite() || !weights.allFinite()) {
    throw std::invalid_argument("PointCloudMeasure: non-finite entries");
  }
  if ((weights.array() < 0.0).any()) {
    throw std::invalid_argument("PointCloudMeasure: negative weight");
  }
  if (std::abs(weights.sum() - 1.0) > 1e-12) {
    throw std::invalid_argument("PointCloudMeasure: weights must sum to 1");
  }
}

double PointCloudMeasure::diameter() const {
  double best = 0.0;
  for (Eigen::Index i = 0; i < size(); ++i) {
    for (Eigen::Index j = i + 1; j < size(); ++j) {
      best = std::max(best, (points.row(i) - points.row(j)).squaredNorm());
    }
  }
  return std::sqrt(best);
}

PointCloudMeasure uniform_cloud(PointCloudMeasure::Points points) {
  const Eigen::Index n = points.rows();
  PointCloudMeasure cloud{std::move(points), Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n))};
  cloud.validate();
  return cloud;
}

PointCloudMeasure normalize_unit_diameter(PointCloudMeasure cloud) {
  cloud.validate();
  const Eigen::RowVectorXd origin = cloud.points.row(0);
  cloud.points.rowwise() -= origin;
  const double diam = cloud.diameter();
  if (diam > 1.0) cloud.points /= diam;
  return cloud;
}

OraclePtr point_mass_oracle(Eigen::VectorXd y0) {
  return std::make_shared<PointMassOracle>(std::move(y0));
}

OraclePtr point_cloud_oracle(PointCloudMeasure cloud, std::optional<double> diameter) {
  return std::make_shared<PointCloudOracle>(std::move(cloud), diameter);
}

OraclePtr gaussian_oracle(GaussianLaw law) {
  return std::make_shared<GaussianOracle>(std::move(law));
}

OraclePtr product_oracle(std::vector<OracleBlock> factors) {
  return std::make_shared<ProductOracle>(std::move(factors));
}

ForwardDraw forward_sample(const ScoreOracle& oracle, double t, Rng& rng) {
  const NoiseScales ns = noise_scales(t);
  ForwardDraw draw;
  draw.x0 = oracle.sample0(rng);
  draw.xt = ns.c * draw.x0;
  if (t > 0.0) draw.xt += ns.sigma * standard_normal(oracle.dim(), rng);
  return draw;
}

Eigen::VectorXd forward_bridge(const Eigen::VectorXd& xt, double t, double t2, Rng& rng) {
  if (!(t2 > t) || t < 0.0) {
    throw std::invalid_argument("forward_bridge: requires 0 <= t < t2");
  }
  const NoiseScales gap = noise_scales(t2 - t);
  return gap.c * xt + gap.sigma * standard_normal(xt.size(), rng);
}

}  // namespace manidiff
