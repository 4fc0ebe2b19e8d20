#include "manidiff/manifold.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace manidiff {

namespace {

// Cell (x, y) visited at position d along the order-n Hilbert curve.
std::pair<int, int> hilbert_d2xy(int side, long long d) {
  int x = 0, y = 0;
  long long t = d;
  for (int s = 1; s < side; s *= 2) {
    const int rx = static_cast<int>(1 & (t / 2));
    const int ry = static_cast<int>(1 & (t ^ rx));
    if (ry == 0) {
      if (rx == 1) {
        x = s - 1 - x;
        y = s - 1 - y;
      }
      std::swap(x, y);
    }
    x += s * rx;
    y += s * ry;
    t /= 4;
  }
  return {x, y};
}

}  // namespace

ManifoldKind parse_manifold_kind(std::string_view name) {
  if (name == "circle") return ManifoldKind::circle;
  if (name == "torus") return ManifoldKind::torus;
  if (name == "hilbert") return ManifoldKind::hilbert;
  throw std::invalid_argument("unknown manifold kind '" + std::string(name) + "'");
}

std::string to_string(ManifoldKind kind) {
  switch (kind) {
    case ManifoldKind::circle: return "circle";
    case ManifoldKind::torus: return "torus";
    case ManifoldKind::hilbert: return "hilbert";
  }
  return "unknown";
}

ManifoldSpec make_manifold_spec(int intrinsic_dim, double reach, double volume,
                                double smoothness, double diameter) {
  if (intrinsic_dim < 1 || !(reach > 0.0) || !(volume > 0.0) || !(smoothness > 0.0) ||
      !std::isfinite(reach) || !std::isfinite(volume) || !std::isfinite(smoothness)) {
    throw std::invalid_argument("make_manifold_spec: entries must be positive and finite");
  }
  ManifoldSpec spec;
  spec.intrinsic_dim = intrinsic_dim;
  spec.reach = reach;
  spec.volume = volume;
  spec.density_lower = 1.0 / volume;
  spec.density_upper = 1.0 / volume;
  spec.smoothness = smoothness;
  spec.diameter = diameter;
  spec.flat_scale = std::min(reach, smoothness) / 8.0;
  spec.regularity = std::max({std::log(volume), std::log(1.0 / spec.flat_scale),
                              std::log(spec.density_upper), -std::log(spec.density_lower)});
  return spec;
}

Eigen::MatrixX2d hilbert_vertices(int order) {
  if (order < 1 || order > 12) {
    throw std::invalid_argument("hilbert_vertices: order must be in [1, 12]");
  }
  const int side = 1 << order;
  const long long count = static_cast<long long>(side) * side;
  Eigen::MatrixX2d v(count, 2);
  for (long long d = 0; d < count; ++d) {
    const auto [x, y] = hilbert_d2xy(side, d);
    v(d, 0) = (x + 0.5) / side;
    v(d, 1) = (y + 0.5) / side;
  }
  return v;
}

Eigen::MatrixXd random_rotation(Eigen::Index D, Rng& rng) {
  Eigen::MatrixXd g(D, D);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index j = 0; j < D; ++j) {
    for (Eigen::Index i = 0; i < D; ++i) g(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < D; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

ManifoldCloud make_manifold_cloud(ManifoldKind kind, const ManifoldParams& params,
                                  Eigen::Index D, Eigen::Index n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("make_manifold_cloud: n must be >= 1");
  if (D < 2) throw std::invalid_argument("make_manifold_cloud: D must be >= 2");

  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Raw samples in the generator's own coordinates, already at unit diameter.
  Eigen::Index native_dim = 2;
  Eigen::MatrixXd raw;
  ManifoldSpec spec;

  switch (kind) {
    case ManifoldKind::circle: {
      const double radius = 0.5;
      raw.resize(n, 2);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double a = two_pi * unit(rng);
        raw(i, 0) = radius * std::cos(a);
        raw(i, 1) = radius * std::sin(a);
      }
      spec = make_manifold_spec(1, radius, two_pi * radius, 1.0 / radius, 1.0);
      break;
    }
    case ManifoldKind::torus: {
      const int d = params.intrinsic_dim;
      if (d < 1 || 2 * d > D) {
        throw std::invalid_argument("make_manifold_cloud: torus needs 1 <= d and 2d <= D");
      }
      native_dim = 2 * d;
      const double radius = 0.5 / std::sqrt(static_cast<double>(d));
      raw.resize(n, native_dim);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) {
          const double a = two_pi * unit(rng);
          raw(i, 2 * j) = radius * std::cos(a);
          raw(i, 2 * j + 1) = radius * std::sin(a);
        }
      }
      spec = make_manifold_spec(d, radius, std::pow(two_pi * radius, d), 1.0 / radius, 1.0);
      break;
    }
    case ManifoldKind::hilbert: {
      const Eigen::MatrixX2d verts = hilbert_vertices(params.order);
      const double cell = 1.0 / static_cast<double>(1 << params.order);
      // Vertices span [cell/2, 1 - cell/2]^2, diameter sqrt(2) (1 - cell).
      const double s = 1.0 / (std::sqrt(2.0) * (1.0 - cell));
      const Eigen::Index segments = verts.rows() - 1;
      raw.resize(n, 2);
      for (Eigen::Index i = 0; i < n; ++i) {
        // Equal-length segments: uniform segment, uniform offset.
        const double u = unit(rng) * static_cast<double>(segments);
        const auto k = std::min<Eigen::Index>(static_cast<Eigen::Index>(u), segments - 1);
        const double f = u - static_cast<double>(k);
        raw.row(i) = s * ((1.0 - f) * verts.row(k) + f * verts.row(k + 1));
      }
      const double length = s * cell * static_cast<double>(segments);
      const double reach = s * cell / 2.0;
      spec = make_manifold_spec(1, reach, length, 1.0 / reach, 1.0);
      break;
    }
  }

  Eigen::MatrixXd rotation = Eigen::MatrixXd::Identity(D, D);
  if (params.rotate) rotation = random_rotation(D, rng);

  Eigen::MatrixXd padded = Eigen::MatrixXd::Zero(n, D);
  padded.leftCols(native_dim) = raw;
  PointCloudMeasure::Points points = padded * rotation.transpose();
  const Eigen::RowVectorXd shift = -points.row(0);
  points.rowwise() += shift;

  ManifoldCloud out{uniform_cloud(std::move(points)), spec,
                    shift.transpose(), std::move(rotation)};
  return out;
}

}  // namespace manidiff
