#include "manidiff/cloud_io.hpp"

#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace manidiff {

namespace {

constexpr const char* kMagic = "manidiff-cloud";

std::string format_double(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

Metadata spec_entries(const ManifoldSpec& spec) {
  return {
      {"spec.intrinsic_dim", std::to_string(spec.intrinsic_dim)},
      {"spec.reach", format_double(spec.reach)},
      {"spec.volume", format_double(spec.volume)},
      {"spec.density_lower", format_double(spec.density_lower)},
      {"spec.density_upper", format_double(spec.density_upper)},
      {"spec.smoothness", format_double(spec.smoothness)},
      {"spec.flat_scale", format_double(spec.flat_scale)},
      {"spec.regularity", format_double(spec.regularity)},
      {"spec.diameter", format_double(spec.diameter)},
  };
}

}  // namespace

void write_metadata(std::ostream& out, const Metadata& metadata) {
  for (const auto& [key, value] : metadata) {
    if (key.find_first_of(" \t\n") != std::string::npos) {
      throw std::invalid_argument("metadata key contains whitespace: '" + key + "'");
    }
    out << key << ' ' << value << '\n';
  }
}

Metadata read_metadata(std::istream& in) {
  Metadata md;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto space = line.find(' ');
    if (space == std::string::npos) {
      md[line] = "";
    } else {
      md[line.substr(0, space)] = line.substr(space + 1);
    }
  }
  return md;
}

void write_cloud(std::ostream& out, const PointCloudMeasure& cloud,
                 const std::optional<ManifoldSpec>& spec, const Metadata& metadata) {
  out << "# " << kMagic << " 1\n";
  for (const auto& [key, value] : metadata) out << "# " << key << ' ' << value << '\n';
  if (spec) {
    for (const auto& [key, value] : spec_entries(*spec)) {
      out << "# " << key << ' ' << value << '\n';
    }
  }
  out << "# columns";
  for (Eigen::Index j = 0; j < cloud.dim(); ++j) out << " x" << j;
  out << " weight\n";
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    for (Eigen::Index j = 0; j < cloud.dim(); ++j) out << cloud.points(i, j) << ' ';
    out << cloud.weights[i] << '\n';
  }
}

CloudFile read_cloud(std::istream& in) {
  CloudFile file;
  std::string line;
  if (!std::getline(in, line) || line.rfind(std::string("# ") + kMagic, 0) != 0) {
    throw std::invalid_argument("read_cloud: missing header line");
  }
  Metadata spec_md;
  std::vector<std::vector<double>> rows;
  Eigen::Index columns = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream fields(line.substr(1));
      std::string key;
      fields >> key;
      std::string value;
      std::getline(fields >> std::ws, value);
      if (key == "columns") {
        std::istringstream names(value);
        std::string name;
        columns = 0;
        while (names >> name) ++columns;
      } else if (key.rfind("spec.", 0) == 0) {
        spec_md[key] = value;
      } else {
        file.metadata[key] = value;
      }
      continue;
    }
    std::istringstream fields(line);
    std::vector<double> row;
    double v;
    while (fields >> v) row.push_back(v);
    if (!fields.eof()) throw std::invalid_argument("read_cloud: malformed row");
    if (columns < 2 || static_cast<Eigen::Index>(row.size()) != columns) {
      throw std::invalid_argument("read_cloud: row width does not match header");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::invalid_argument("read_cloud: no data rows");

  const auto n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index D = columns - 1;
  file.cloud.points.resize(n, D);
  file.cloud.weights.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < D; ++j) file.cloud.points(i, j) = row[static_cast<std::size_t>(j)];
    file.cloud.weights[i] = row.back();
  }
  file.cloud.validate();

  if (!spec_md.empty()) {
    auto get = [&spec_md](const std::string& key) {
      const auto it = spec_md.find(key);
      if (it == spec_md.end()) throw std::invalid_argument("read_cloud: missing " + key);
      return std::stod(it->second);
    };
    ManifoldSpec spec;
    spec.intrinsic_dim = static_cast<int>(get("spec.intrinsic_dim"));
    spec.reach = get("spec.reach");
    spec.volume = get("spec.volume");
    spec.density_lower = get("spec.density_lower");
    spec.density_upper = get("spec.density_upper");
    spec.smoothness = get("spec.smoothness");
    spec.flat_scale = get("spec.flat_scale");
    spec.regularity = get("spec.regularity");
    spec.diameter = get("spec.diameter");
    file.spec = spec;
  }
  return file;
}

}  // namespace manidiff
