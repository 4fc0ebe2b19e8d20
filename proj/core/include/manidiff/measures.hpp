#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "manidiff/gaussian.hpp"
#include "manidiff/rng.hpp"

namespace manidiff {

/// Oracle queries below this time are rejected: sigma_t^2 -> 0 makes the
/// Tweedie division ill-conditioned.
inline constexpr double kTimeFloor = 1e-8;

/// Exact access to one data distribution mu on R^D and to its noised
/// marginals p_t (the laws of X_t = c_t X_0 + sigma_t Z).
///
/// posterior_mean(t, x) = E[X_0 | X_t = x], score(t, x) = grad log p_t(x), tied
/// by Tweedie's identity score = (c_t m_t(x) - x) / sigma_t^2. Implementations
/// are immutable and safe for concurrent queries.
class ScoreOracle {
 public:
  virtual ~ScoreOracle() = default;

  virtual Eigen::Index dim() const = 0;
  virtual std::string describe() const = 0;

  virtual Eigen::VectorXd sample0(Rng& rng) const = 0;
  virtual Eigen::VectorXd posterior_mean(double t, const Eigen::VectorXd& x) const = 0;
  /// Defaults to the Tweedie identity applied to posterior_mean.
  virtual Eigen::VectorXd score(double t, const Eigen::VectorXd& x) const;

  virtual bool has_log_marginal() const { return false; }
  /// log p_t(x); throws std::logic_error when has_log_marginal() is false.
  virtual double log_marginal(double t, const Eigen::VectorXd& x) const;

  /// Diameter bound of the support, for compactly supported data.
  virtual std::optional<double> support_diameter() const { return std::nullopt; }

 protected:
  /// Rejects t < kTimeFloor, wrong dimension and non-finite x.
  void check_query(double t, const Eigen::VectorXd& x) const;
};

using OraclePtr = std::shared_ptr<const ScoreOracle>;

/// Tweedie: (c_t m - x) / sigma_t^2.
Eigen::VectorXd tweedie_score(double t, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& posterior_mean);

/// Weighted finite point set standing in for a manifold measure.
struct PointCloudMeasure {
  using Points = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Points points;  // n x D, one point per row
  Eigen::VectorXd weights;

  Eigen::Index size() const { return points.rows(); }
  Eigen::Index dim() const { return points.cols(); }
  /// Weights nonnegative and summing to 1 within 1e-12; finite points.
  void validate() const;
  /// Brute-force O(n^2 D) diameter.
  double diameter() const;
};

PointCloudMeasure uniform_cloud(PointCloudMeasure::Points points);

/// Translates the cloud so its first point sits at the origin and, if the
/// diameter exceeds 1, rescales it to exactly 1.
PointCloudMeasure normalize_unit_diameter(PointCloudMeasure cloud);

OraclePtr point_mass_oracle(Eigen::VectorXd y0);
/// `diameter` overrides the support diameter reported by the oracle (known
/// analytically for generated manifolds); otherwise it is computed.
OraclePtr point_cloud_oracle(PointCloudMeasure cloud,
                             std::optional<double> diameter = std::nullopt);
/// Closed-form oracle for N(mean, A A^T + floor I); every query costs
/// O(D d + d^3) through the low-rank capacitance solve.
OraclePtr gaussian_oracle(GaussianLaw law);

struct OracleBlock {
  OraclePtr oracle;
  std::vector<Eigen::Index> coords;  // coordinates of R^D owned by the factor
};

/// Independent product; the coordinate blocks must partition {0, ..., D-1}.
OraclePtr product_oracle(std::vector<OracleBlock> factors);

struct ForwardDraw {
  Eigen::VectorXd x0;
  Eigen::VectorXd xt;
};

/// X_0 ~ mu and X_t = c_t X_0 + sigma_t Z.
ForwardDraw forward_sample(const ScoreOracle& oracle, double t, Rng& rng);

/// OU transition from time t to t2 > t: c_{t2-t} x_t + sigma_{t2-t} Z.
Eigen::VectorXd forward_bridge(const Eigen::VectorXd& xt, double t, double t2, Rng& rng);

}  // namespace manidiff
