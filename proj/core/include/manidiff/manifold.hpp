#pragma once

#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "manidiff/measures.hpp"
#include "manidiff/rng.hpp"

namespace manidiff {

enum class ManifoldKind { circle, torus, hilbert };

ManifoldKind parse_manifold_kind(std::string_view name);
std::string to_string(ManifoldKind kind);

/// Analytic regularity metadata of a generated manifold, after normalization.
///
/// `smoothness` is the curvature bound of the generator; the local flatness
/// scale is r = min(reach, smoothness) / 8, and the regularity constant is
///   C = max(log volume, log 1/r, log density_upper, -log density_lower).
struct ManifoldSpec {
  int intrinsic_dim = 1;
  double reach = 0.0;
  double volume = 0.0;
  double density_lower = 0.0;
  double density_upper = 0.0;
  double smoothness = 0.0;
  double flat_scale = 0.0;
  double regularity = 0.0;
  double diameter = 0.0;
};

/// Fills flat_scale and regularity from the other fields; uniform density
/// 1 / volume. Throws std::invalid_argument on non-positive inputs.
ManifoldSpec make_manifold_spec(int intrinsic_dim, double reach, double volume,
                                double smoothness, double diameter);

struct ManifoldParams {
  int intrinsic_dim = 1;  // torus: number of circle factors, needs 2d <= D
  int order = 2;          // hilbert: recursion order
  bool rotate = true;     // random isometric embedding into R^D
};

struct ManifoldCloud {
  PointCloudMeasure cloud;
  ManifoldSpec spec;
  /// Image of the generator's own origin (circle/torus center) after
  /// embedding, scaling and translation.
  Eigen::VectorXd center;
  Eigen::MatrixXd rotation;  // D x D orthogonal
};

/// Uniform samples from a manifold, isometrically embedded into R^D through a
/// seeded Haar rotation, scaled to unit diameter and translated so the first
/// sample is the origin.
///
/// circle: radius 1/2 in a 2-plane. torus: flat product of d circles of radius
/// 1/(2 sqrt d) in R^{2d}, reach equal to that radius. hilbert: the 2-D
/// Hilbert polyline of the given order sampled uniformly in arc length; its
/// reach is recorded as half the cell width (the corner-rounded curve).
ManifoldCloud make_manifold_cloud(ManifoldKind kind, const ManifoldParams& params,
                                  Eigen::Index D, Eigen::Index n, Rng& rng);

/// Vertices of the order-n Hilbert curve through the cell centers of the unit
/// square, in traversal order (4^n rows).
Eigen::MatrixX2d hilbert_vertices(int order);

/// Haar-distributed orthogonal D x D matrix (QR of a Gaussian matrix with the
/// sign of R's diagonal fixed).
Eigen::MatrixXd random_rotation(Eigen::Index D, Rng& rng);

}  // namespace manidiff
