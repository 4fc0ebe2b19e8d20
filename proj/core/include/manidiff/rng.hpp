#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace manidiff {

using Rng = std::mt19937_64;

/// Seed of stream `index` under `master_seed`: two rounds of splitmix64 over
/// (master_seed, index). Every Monte Carlo sample i in this library draws from
/// make_stream(seed, i), so results do not depend on worker count or order.
std::uint64_t stream_seed(std::uint64_t master_seed, std::uint64_t index);

Rng make_stream(std::uint64_t master_seed, std::uint64_t index);

Eigen::VectorXd standard_normal(Eigen::Index dim, Rng& rng);

}  // namespace manidiff
