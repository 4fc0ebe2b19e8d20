#include "manidiff/quadrature.hpp"

#include <cmath>
#include <stdexcept>

namespace manidiff {

GaussHermiteRule gauss_hermite(int order) {
  if (order < 1) throw std::invalid_argument("gauss_hermite: order must be >= 1");
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(order, order);
  for (int k = 1; k < order; ++k) {
    jacobi(k - 1, k) = jacobi(k, k - 1) = std::sqrt(static_cast<double>(k));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  if (eig.info() != Eigen::Success) throw std::runtime_error("gauss_hermite: eigensolver failed");
  GaussHermiteRule rule;
  rule.nodes = eig.eigenvalues();
  rule.weights = eig.eigenvectors().row(0).transpose().array().square();
  rule.weights /= rule.weights.sum();
  return rule;
}

double expect_normal(const GaussHermiteRule& rule, const std::function<double(double)>& f) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < rule.nodes.size(); ++i) acc += rule.weights[i] * f(rule.nodes[i]);
  return acc;
}

double expect_normal_2d(const GaussHermiteRule& rule,
                        const std::function<double(double, double)>& f) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < rule.nodes.size(); ++i) {
    double inner = 0.0;
    for (Eigen::Index j = 0; j < rule.nodes.size(); ++j) {
      inner += rule.weights[j] * f(rule.nodes[i], rule.nodes[j]);
    }
    acc += rule.weights[i] * inner;
  }
  return acc;
}

}  // namespace manidiff
