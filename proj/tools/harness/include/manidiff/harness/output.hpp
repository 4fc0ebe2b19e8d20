#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "manidiff/cloud_io.hpp"

namespace manidiff::harness {

using Cell = std::variant<double, std::int64_t, std::string>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add_row(std::vector<Cell> row);
  /// Throws std::out_of_range for an unknown column or a non-numeric cell.
  std::vector<double> numeric_column(const std::string& name) const;
};

/// Doubles in shortest round-trip form, strings quoted only when they contain
/// a comma, quote or newline.
std::string to_csv(const Table& table);
/// Array of row objects keyed by column name.
std::string to_json(const Table& table);

/// Sorted "key value" lines.
using manidiff::Metadata;
std::string to_metadata(const Metadata& meta);

struct PlotSeries {
  std::string y_column;
  std::string label;
};

struct PlotSpec {
  std::string title;
  std::string x_column;
  std::vector<PlotSeries> series;
  bool log_x = false;
  bool log_y = false;
};

/// Line plot rendered from table columns only. Nonpositive values are
/// dropped on log axes.
std::string render_svg(const Table& table, const PlotSpec& spec);

/// Writes <dir>/<stem>.csv and <dir>/<stem>.json.
void write_table(const std::filesystem::path& dir, const std::string& stem, const Table& table);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Shortest round-trip decimal text of a double ("nan", "inf", "-inf" for
/// non-finite values).
std::string format_double(double v);

}  // namespace manidiff::harness
