#include "mdt/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace mdt {

using nlohmann::json;

VarKind VarKind::categorical(std::vector<std::string> level_names) {
  if (level_names.size() < 2)
    throw std::invalid_argument("categorical kind needs >= 2 levels");
  return {VarType::categorical, std::move(level_names)};
}

bool Column::any_missing() const {
  for (auto m : missing)
    if (m) return true;
  return false;
}

void Dataset::add_column(Column col) {
  if (col.values.size() != n_ || col.missing.size() != n_)
    throw std::invalid_argument("column '" + col.name + "' length mismatch");
  if (index_.count(col.name))
    throw std::invalid_argument("duplicate column '" + col.name + "'");
  for (std::size_t i = 0; i < n_; ++i) {
    if (col.missing[i]) {
      col.values[i] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const double v = col.values[i];
    switch (col.kind.type) {
      case VarType::binary:
        if (v != 0.0 && v != 1.0)
          throw std::invalid_argument("binary column '" + col.name +
                                      "' has non 0/1 value");
        break;
      case VarType::categorical: {
        const double k = static_cast<double>(col.kind.n_levels());
        if (v != std::floor(v) || v < 0.0 || v >= k)
          throw std::invalid_argument("categorical column '" + col.name +
                                      "' has out-of-range code");
        break;
      }
      case VarType::positive:
        if (!(v > 0.0))
          throw std::invalid_argument("positive column '" + col.name +
                                      "' has non-positive value");
        break;
      case VarType::continuous:
        if (!std::isfinite(v))
          throw std::invalid_argument("continuous column '" + col.name +
                                      "' has non-finite value");
        break;
    }
  }
  index_[col.name] = cols_.size();
  cols_.push_back(std::move(col));
}

const Column& Dataset::col(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw std::invalid_argument("unknown column '" + name + "'");
  return cols_[it->second];
}

std::vector<std::string> Dataset::names() const {
  std::vector<std::string> out;
  out.reserve(cols_.size());
  for (const auto& c : cols_) out.push_back(c.name);
  return out;
}

double Dataset::value(const std::string& name, std::size_t row) const {
  return col(name).values.at(row);
}

bool Dataset::is_missing(const std::string& name, std::size_t row) const {
  return col(name).missing.at(row) != 0;
}

Dataset Dataset::select_rows(std::span<const std::size_t> rows) const {
  Dataset out(rows.size());
  for (const auto& c : cols_) {
    Column nc;
    nc.name = c.name;
    nc.kind = c.kind;
    nc.values.reserve(rows.size());
    nc.missing.reserve(rows.size());
    for (std::size_t r : rows) {
      nc.values.push_back(c.values.at(r));
      nc.missing.push_back(c.missing.at(r));
    }
    out.add_column(std::move(nc));
  }
  return out;
}

Dataset complete_rows(const Dataset& d, std::span<const std::string> cols) {
  std::vector<const Column*> selected;
  selected.reserve(cols.size());
  for (const auto& name : cols) selected.push_back(&d.col(name));
  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < d.n_rows(); ++r) {
    bool ok = true;
    for (const Column* c : selected)
      if (c->missing[r]) {
        ok = false;
        break;
      }
    if (ok) keep.push_back(r);
  }
  return d.select_rows(keep);
}

MissingnessMargins missingness_margins(
    const Dataset& d,
    const std::vector<std::pair<std::string, std::vector<std::string>>>& groups) {
  if (d.n_rows() == 0) throw std::invalid_argument("missingness_margins: n = 0");
  MissingnessMargins out;
  const double n = static_cast<double>(d.n_rows());
  for (std::size_t i = 0; i < d.n_cols(); ++i) {
    const Column& c = d.col(i);
    std::size_t miss = 0;
    for (auto m : c.missing) miss += m ? 1 : 0;
    out.per_column[c.name] = static_cast<double>(miss) / n;
  }
  for (const auto& [gname, members] : groups) {
    std::vector<const Column*> cols;
    for (const auto& m : members) cols.push_back(&d.col(m));
    std::size_t miss = 0;
    for (std::size_t r = 0; r < d.n_rows(); ++r)
      for (const Column* c : cols)
        if (c->missing[r]) {
          ++miss;
          break;
        }
    out.per_group[gname] = static_cast<double>(miss) / n;
  }
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

const char* type_name(VarType t) {
  switch (t) {
    case VarType::binary: return "binary";
    case VarType::continuous: return "continuous";
    case VarType::categorical: return "categorical";
    case VarType::positive: return "positive";
  }
  return "continuous";
}

VarType type_from_name(const std::string& s) {
  if (s == "binary") return VarType::binary;
  if (s == "continuous") return VarType::continuous;
  if (s == "categorical") return VarType::categorical;
  if (s == "positive") return VarType::positive;
  throw std::invalid_argument("unknown column type '" + s + "'");
}

}  // namespace

void write_csv(const Dataset& d, const std::string& csv_path,
               const std::string& schema_path) {
  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot open " + csv_path);
  for (std::size_t i = 0; i < d.n_cols(); ++i)
    csv << (i ? "," : "") << d.col(i).name;
  csv << "\n";
  for (std::size_t r = 0; r < d.n_rows(); ++r) {
    for (std::size_t i = 0; i < d.n_cols(); ++i) {
      if (i) csv << ",";
      const Column& c = d.col(i);
      if (!c.missing[r]) csv << format_double(c.values[r]);
    }
    csv << "\n";
  }

  json schema;
  schema["n_rows"] = d.n_rows();
  schema["columns"] = json::array();
  for (std::size_t i = 0; i < d.n_cols(); ++i) {
    const Column& c = d.col(i);
    json jc;
    jc["name"] = c.name;
    jc["type"] = type_name(c.kind.type);
    if (c.kind.type == VarType::categorical) jc["levels"] = c.kind.levels;
    schema["columns"].push_back(jc);
  }
  std::ofstream sf(schema_path);
  if (!sf) throw std::runtime_error("cannot open " + schema_path);
  sf << schema.dump(2) << "\n";
}

Dataset read_csv(const std::string& csv_path, const std::string& schema_path) {
  std::ifstream sf(schema_path);
  if (!sf) throw std::runtime_error("cannot open " + schema_path);
  json schema = json::parse(sf);

  std::ifstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot open " + csv_path);
  std::string line;
  if (!std::getline(csv, line)) throw std::runtime_error("empty csv " + csv_path);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) header.push_back(field);
  }

  std::vector<std::vector<double>> values(header.size());
  std::vector<std::vector<std::uint8_t>> missing(header.size());
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::size_t start = 0, icol = 0;
    while (icol < header.size()) {
      std::size_t end = line.find(',', start);
      const std::string field = line.substr(
          start, end == std::string::npos ? std::string::npos : end - start);
      if (field.empty()) {
        values[icol].push_back(std::numeric_limits<double>::quiet_NaN());
        missing[icol].push_back(1);
      } else {
        values[icol].push_back(std::strtod(field.c_str(), nullptr));
        missing[icol].push_back(0);
      }
      ++icol;
      if (end == std::string::npos) break;
      start = end + 1;
    }
    if (icol != header.size())
      throw std::runtime_error("ragged csv row in " + csv_path);
  }

  Dataset d(values.empty() ? 0 : values[0].size());
  for (std::size_t i = 0; i < header.size(); ++i) {
    VarKind kind = VarKind::continuous();
    bool found = false;
    for (const auto& jc : schema["columns"]) {
      if (jc["name"] == header[i]) {
        const VarType t = type_from_name(jc["type"]);
        if (t == VarType::categorical)
          kind = VarKind::categorical(jc["levels"].get<std::vector<std::string>>());
        else
          kind.type = t;
        found = true;
        break;
      }
    }
    if (!found)
      throw std::runtime_error("column '" + header[i] + "' absent from schema");
    d.add_column({header[i], kind, std::move(values[i]), std::move(missing[i])});
  }
  return d;
}

}  // namespace mdt
