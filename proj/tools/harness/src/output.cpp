#include "manidiff/harness/output.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace manidiff::harness {

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string cell_text(const Cell& cell) {
  if (const auto* d = std::get_if<double>(&cell)) return format_double(*d);
  if (const auto* i = std::get_if<std::int64_t>(&cell)) return std::to_string(*i);
  return csv_escape(std::get<std::string>(cell));
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void Table::add_row(std::vector<Cell> row) {
  if (row.size() != columns.size()) {
    throw std::invalid_argument("Table::add_row: expected " + std::to_string(columns.size()) +
                                " cells");
  }
  rows.push_back(std::move(row));
}

std::vector<double> Table::numeric_column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw std::out_of_range("no column '" + name + "'");
  const auto j = static_cast<std::size_t>(it - columns.begin());
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& row : rows) {
    if (const auto* d = std::get_if<double>(&row[j])) {
      out.push_back(*d);
    } else if (const auto* i = std::get_if<std::int64_t>(&row[j])) {
      out.push_back(static_cast<double>(*i));
    } else {
      throw std::out_of_range("column '" + name + "' is not numeric");
    }
  }
  return out;
}

std::string to_csv(const Table& table) {
  std::string out;
  for (std::size_t j = 0; j < table.columns.size(); ++j) {
    if (j) out += ',';
    out += csv_escape(table.columns[j]);
  }
  out += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out += ',';
      out += cell_text(row[j]);
    }
    out += '\n';
  }
  return out;
}

std::string to_json(const Table& table) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& row : table.rows) {
    nlohmann::ordered_json obj = nlohmann::ordered_json::object();
    for (std::size_t j = 0; j < row.size(); ++j) {
      const auto& key = table.columns[j];
      if (const auto* d = std::get_if<double>(&row[j])) {
        // JSON has no NaN or infinity; keep them as strings.
        if (std::isfinite(*d)) {
          obj[key] = *d;
        } else {
          obj[key] = format_double(*d);
        }
      } else if (const auto* i = std::get_if<std::int64_t>(&row[j])) {
        obj[key] = *i;
      } else {
        obj[key] = std::get<std::string>(row[j]);
      }
    }
    rows.push_back(std::move(obj));
  }
  return rows.dump(2) + "\n";
}

std::string to_metadata(const Metadata& meta) {
  std::string out;
  for (const auto& [k, v] : meta) out += k + ' ' + v + '\n';
  return out;
}

std::string render_svg(const Table& table, const PlotSpec& spec) {
  constexpr double W = 640, H = 420, left = 80, right = 20, top = 40, bottom = 60;
  constexpr const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

  const auto xs_raw = table.numeric_column(spec.x_column);
  auto tx = [&](double v) { return spec.log_x ? std::log10(v) : v; };
  auto ty = [&](double v) { return spec.log_y ? std::log10(v) : v; };
  auto usable = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!spec.log_x || x > 0) && (!spec.log_y || y > 0);
  };

  std::vector<std::vector<std::pair<double, double>>> lines;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : spec.series) {
    const auto ys = table.numeric_column(s.y_column);
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < ys.size(); ++i) {
      if (!usable(xs_raw[i], ys[i])) continue;
      pts.emplace_back(tx(xs_raw[i]), ty(ys[i]));
      x0 = std::min(x0, pts.back().first);
      x1 = std::max(x1, pts.back().first);
      y0 = std::min(y0, pts.back().second);
      y1 = std::max(y1, pts.back().second);
    }
    lines.push_back(std::move(pts));
  }
  if (!(x1 >= x0)) x0 = 0, x1 = 1;
  if (!(y1 >= y0)) y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;

  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * (W - left - right); };
  auto py = [&](double y) { return H - bottom - (y - y0) / (y1 - y0) * (H - top - bottom); };
  auto label = [](double v, bool log) {
    std::ostringstream s;
    s.precision(3);
    if (log) {
      s << "1e" << format_double(std::round(v * 100) / 100);
    } else {
      s << v;
    }
    return s.str();
  };

  std::ostringstream svg;
  svg.precision(6);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
      << xml_escape(spec.title) << "</text>\n";
  svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << W - left - right
      << "\" height=\"" << H - top - bottom << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0, yv = y0 + (y1 - y0) * i / 4.0;
    svg << "<text x=\"" << px(xv) << "\" y=\"" << H - bottom + 18
        << "\" text-anchor=\"middle\">" << label(xv, spec.log_x) << "</text>\n";
    svg << "<text x=\"" << left - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">"
        << label(yv, spec.log_y) << "</text>\n";
    svg << "<line x1=\"" << left << "\" x2=\"" << W - right << "\" y1=\"" << py(yv) << "\" y2=\""
        << py(yv) << "\" stroke=\"#ddd\"/>\n";
  }
  svg << "<text x=\"" << W / 2 << "\" y=\"" << H - 16 << "\" text-anchor=\"middle\">"
      << xml_escape(spec.x_column) << (spec.log_x ? " (log10)" : "") << "</text>\n";
  for (std::size_t s = 0; s < lines.size(); ++s) {
    const char* color = palette[s % std::size(palette)];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : lines[s]) svg << px(x) << ',' << py(y) << ' ';
    svg << "\"/>\n";
    for (const auto& [x, y] : lines[s]) {
      svg << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3\" fill=\"" << color
          << "\"/>\n";
    }
    svg << "<text x=\"" << left + 10 << "\" y=\"" << top + 16 + 16 * s << "\" fill=\"" << color
        << "\">" << xml_escape(spec.series[s].label) << (spec.log_y ? " (log10)" : "")
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

void write_table(const std::filesystem::path& dir, const std::string& stem, const Table& table) {
  write_text(dir / (stem + ".csv"), to_csv(table));
  write_text(dir / (stem + ".json"), to_json(table));
}

}  // namespace manidiff::harness
