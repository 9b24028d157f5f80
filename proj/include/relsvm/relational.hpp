#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace relsvm {

/// A named relation over named numeric attributes, stored row-major. Rows are
/// a bag: duplicates are kept.
class Table {
 public:
  Table() = default;
  Table(std::string name, std::vector<std::string> columns);

  const std::string& name() const noexcept { return name_; }
  const std::vector<std::string>& columns() const noexcept { return columns_; }
  std::size_t arity() const noexcept { return columns_.size(); }
  std::size_t num_rows() const noexcept { return arity() == 0 ? 0 : cells_.size() / arity(); }

  std::span<const double> row(std::size_t i) const {
    return {cells_.data() + i * arity(), arity()};
  }
  double at(std::size_t row, std::size_t col) const { return cells_[row * arity() + col]; }
  double& at(std::size_t row, std::size_t col) { return cells_[row * arity() + col]; }

  /// Appends a row; throws DataError when the width does not match.
  void add_row(std::span<const double> values);

  std::optional<std::size_t> column_index(std::string_view column) const;

  /// Index of the column holding the {-1,+1} label, when this table carries it.
  std::optional<std::size_t> label_column() const noexcept { return label_column_; }
  /// Marks `column` as the label column; every value must be -1 or +1.
  void set_label_column(std::string_view column);

 private:
  std::string name_;
  std::vector<std::string> columns_;
  std::vector<double> cells_;
  std::optional<std::size_t> label_column_;
};

/// Declared columns for a CSV file. An empty column list means "take the
/// header as is".
struct TableSchema {
  std::vector<std::string> columns;
  std::optional<std::string> label;
};

/// Parses CSV text (header row of attribute names, '.' decimal point).
Table parse_table_csv(std::string_view text, const TableSchema& schema, std::string name);
Table load_table(const std::filesystem::path& path, const TableSchema& schema,
                 std::string name = {});
/// Writes a table as CSV using shortest round-trip number formatting.
std::string format_table_csv(const Table& table);

/// The tables of a natural join plus the designated label attribute.
///
/// Attributes are identified globally by name. Global attribute ids follow
/// first appearance (table order, then column order); features are all
/// attributes except the label, in the same order, so feature k of a design
/// matrix row is `attributes()[feature_attributes()[k]]`.
class JoinSpec {
 public:
  JoinSpec(std::vector<Table> tables, std::string label);

  const std::vector<Table>& tables() const noexcept { return tables_; }
  std::size_t num_tables() const noexcept { return tables_.size(); }
  const std::string& label() const noexcept { return label_; }

  const std::vector<std::string>& attributes() const noexcept { return attributes_; }
  std::optional<std::size_t> attribute_id(std::string_view name) const;
  std::size_t label_attribute() const noexcept { return label_attribute_; }
  const std::vector<std::size_t>& feature_attributes() const noexcept { return features_; }
  std::vector<std::string> feature_names() const;
  /// Number of features d.
  std::size_t dimension() const noexcept { return features_.size(); }
  /// Position of attribute `attr` in the feature vector, if it is a feature.
  std::optional<std::size_t> feature_index(std::size_t attr) const;

  /// Global attribute id of each column of table `t`.
  const std::vector<std::size_t>& table_attributes(std::size_t t) const {
    return table_attrs_[t];
  }

  /// Optional fixed per-feature divisors used by rescale_features.
  std::map<std::string, double> scale_overrides;

 private:
  std::vector<Table> tables_;
  std::string label_;
  std::vector<std::string> attributes_;
  std::vector<std::vector<std::size_t>> table_attrs_;
  std::vector<std::size_t> features_;
  std::vector<std::ptrdiff_t> feature_pos_;
  std::size_t label_attribute_ = 0;
};

/// Reads a JoinSpec JSON file:
///   {"tables": [{"name": "R", "path": "R.csv", "columns": [...]}, ...],
///    "label": "y", "scale": {"A": 4.0}}
/// Table paths are resolved against the spec file's directory.
JoinSpec load_join_spec(const std::filesystem::path& path);

/// Writes every table as `<name>.csv` plus `spec.json` into `dir`.
void write_join_spec(const JoinSpec& spec, const std::filesystem::path& dir);

struct RescaleResult {
  JoinSpec spec;
  /// One divisor per feature, in feature order.
  std::vector<double> factors;
};

/// Divides every feature by its maximum absolute value over all tables that
/// carry it (or by its override), so all feature values land in [-1, 1].
/// Labels are untouched; an all-zero feature keeps factor 1.
RescaleResult rescale_features(const JoinSpec& spec);

/// True when every feature value of every table lies in [-1, 1].
bool features_in_unit_box(const JoinSpec& spec);

}  // namespace relsvm
