#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>

#include "manidiff/manifold.hpp"
#include "manidiff/measures.hpp"

namespace manidiff {

/// Ordered key-value header block written above the columnar data.
using Metadata = std::map<std::string, std::string>;

/// Columnar text format, one point per row with the weight column last:
///
///   # manidiff-cloud 1
///   # <key> <value>            (metadata, then spec.* keys if present)
///   # columns x0 x1 ... weight
///   <x0> <x1> ... <weight>
///
/// Values are written at 17 significant digits so a read-back is exact.
void write_cloud(std::ostream& out, const PointCloudMeasure& cloud,
                 const std::optional<ManifoldSpec>& spec = std::nullopt,
                 const Metadata& metadata = {});

struct CloudFile {
  PointCloudMeasure cloud;
  std::optional<ManifoldSpec> spec;
  Metadata metadata;
};

/// Throws std::invalid_argument on malformed input.
CloudFile read_cloud(std::istream& in);

void write_metadata(std::ostream& out, const Metadata& metadata);
Metadata read_metadata(std::istream& in);

}  // namespace manidiff
