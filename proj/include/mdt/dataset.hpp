#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace mdt {

enum class VarType { binary, continuous, categorical, positive };

// Column type descriptor. Categorical levels are 0-based integer codes with a
// level-name table so one-hot expansion order is stable across modules.
struct VarKind {
  VarType type = VarType::continuous;
  std::vector<std::string> levels;  // categorical only

  static VarKind binary() { return {VarType::binary, {}}; }
  static VarKind continuous() { return {VarType::continuous, {}}; }
  static VarKind positive() { return {VarType::positive, {}}; }
  static VarKind categorical(std::vector<std::string> level_names);

  std::size_t n_levels() const { return levels.size(); }
  bool is_numeric() const {
    return type == VarType::continuous || type == VarType::positive;
  }
};

struct Column {
  std::string name;
  VarKind kind;
  std::vector<double> values;
  std::vector<std::uint8_t> missing;  // 1 = cell unobserved; value is then NaN

  bool any_missing() const;
};

// Rectangular typed data with a per-cell missingness mask; the single currency
// of the pipeline. Treat as immutable once fully built: estimators take
// const references and copies are cheap enough at this scale.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::size_t n) : n_(n) {}

  std::size_t n_rows() const { return n_; }
  std::size_t n_cols() const { return cols_.size(); }

  // validates length and kind invariants; masked cells are normalized to NaN
  void add_column(Column col);

  bool has(const std::string& name) const { return index_.count(name) > 0; }
  const Column& col(const std::string& name) const;
  const Column& col(std::size_t i) const { return cols_[i]; }
  std::vector<std::string> names() const;

  double value(const std::string& name, std::size_t row) const;
  bool is_missing(const std::string& name, std::size_t row) const;

  Dataset select_rows(std::span<const std::size_t> rows) const;

 private:
  std::size_t n_ = 0;
  std::vector<Column> cols_;
  std::map<std::string, std::size_t> index_;
};

// rows fully observed on every column in `cols`, order preserved
Dataset complete_rows(const Dataset& d, std::span<const std::string> cols);

struct MissingnessMargins {
  std::map<std::string, double> per_column;
  std::map<std::string, double> per_group;  // fraction missing ANY group member
};

MissingnessMargins missingness_margins(
    const Dataset& d,
    const std::vector<std::pair<std::string, std::vector<std::string>>>& groups = {});

// CSV with header row, missing cells as empty fields, plus a JSON sidecar
// describing column kinds and level tables. Round-trips bit-exactly.
void write_csv(const Dataset& d, const std::string& csv_path,
               const std::string& schema_path);
Dataset read_csv(const std::string& csv_path, const std::string& schema_path);

// 17-significant-digit formatting used everywhere a double must survive a
// text round trip
std::string format_double(double v);

}  // namespace mdt
