#pragma once

#include <functional>

#include <Eigen/Dense>

namespace manidiff {

/// Gauss-Hermite rule for E[f(Z)], Z ~ N(0, 1): sum_i weights[i] f(nodes[i]).
/// Exact for polynomials of degree < 2 * order. Weights sum to 1.
struct GaussHermiteRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

/// Golub-Welsch on the probabilists' Hermite Jacobi matrix.
GaussHermiteRule gauss_hermite(int order = 64);

double expect_normal(const GaussHermiteRule& rule, const std::function<double(double)>& f);

/// E[f(Z1, Z2)] for independent standard normals, tensor rule.
double expect_normal_2d(const GaussHermiteRule& rule,
                        const std::function<double(double, double)>& f);

}  // namespace manidiff
