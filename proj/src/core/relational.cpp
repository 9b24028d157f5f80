#include "relsvm/relational.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "relsvm/errors.hpp"

namespace relsvm {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

bool is_label_value(double v) { return v == 1.0 || v == -1.0; }

}  // namespace

Table::Table(std::string name, std::vector<std::string> columns)
    : name_(std::move(name)), columns_(std::move(columns)) {
  for (std::size_t i = 0; i < columns_.size(); ++i)
    for (std::size_t j = i + 1; j < columns_.size(); ++j)
      if (columns_[i] == columns_[j])
        throw DataError("table '" + name_ + "' declares column '" + columns_[i] + "' twice");
}

void Table::add_row(std::span<const double> values) {
  if (values.size() != arity())
    throw DataError("table '" + name_ + "': row has " + std::to_string(values.size()) +
                    " values, expected " + std::to_string(arity()));
  if (label_column_ && !is_label_value(values[*label_column_]))
    throw DataError("table '" + name_ + "': invalid label " +
                    std::to_string(values[*label_column_]) + " (must be -1 or +1)");
  cells_.insert(cells_.end(), values.begin(), values.end());
}

std::optional<std::size_t> Table::column_index(std::string_view column) const {
  auto it = std::find(columns_.begin(), columns_.end(), column);
  if (it == columns_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - columns_.begin());
}

void Table::set_label_column(std::string_view column) {
  auto idx = column_index(column);
  if (!idx) throw DataError("table '" + name_ + "' has no column '" + std::string(column) + "'");
  for (std::size_t r = 0; r < num_rows(); ++r)
    if (!is_label_value(at(r, *idx)))
      throw DataError("table '" + name_ + "', row " + std::to_string(r + 1) +
                      ": invalid label " + std::to_string(at(r, *idx)) +
                      " (must be -1 or +1)");
  label_column_ = idx;
}

Table parse_table_csv(std::string_view text, const TableSchema& schema, std::string name) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  auto next_line = [&](std::string_view& line) {
    while (pos < text.size()) {
      auto nl = text.find('\n', pos);
      if (nl == std::string_view::npos) nl = text.size();
      line = text.substr(pos, nl - pos);
      pos = nl + 1;
      ++line_no;
      if (!trim(line).empty()) return true;
    }
    return false;
  };

  std::string_view header;
  if (!next_line(header)) throw DataError("table '" + name + "': missing header row");
  if (line_no == 1 && header.starts_with("\xEF\xBB\xBF")) header.remove_prefix(3);
  std::vector<std::string> columns;
  for (auto field : split_csv_line(header)) {
    if (field.empty()) throw DataError("table '" + name + "': empty column name in header");
    columns.emplace_back(field);
  }
  if (!schema.columns.empty() && schema.columns != columns) {
    std::string declared, found;
    for (auto& c : schema.columns) declared += (declared.empty() ? "" : ",") + c;
    for (auto& c : columns) found += (found.empty() ? "" : ",") + c;
    throw DataError("table '" + name + "': header (" + found + ") does not match declared columns (" +
                    declared + ")");
  }

  Table table(name, columns);
  std::optional<std::size_t> label_idx;
  if (schema.label) {
    label_idx = table.column_index(*schema.label);
    if (!label_idx)
      throw DataError("table '" + name + "': label column '" + *schema.label + "' not in header");
  }

  std::vector<double> values(columns.size());
  std::string_view line;
  while (next_line(line)) {
    auto fields = split_csv_line(line);
    if (fields.size() != columns.size())
      throw DataError("table '" + name + "', line " + std::to_string(line_no) + ": expected " +
                      std::to_string(columns.size()) + " fields, found " +
                      std::to_string(fields.size()));
    for (std::size_t c = 0; c < fields.size(); ++c) {
      auto f = fields[c];
      if (!f.empty() && f.front() == '+') f.remove_prefix(1);
      double v = 0;
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size() || f.empty())
        throw DataError("table '" + name + "', line " + std::to_string(line_no) + ", column '" +
                        columns[c] + "': cannot parse '" + std::string(fields[c]) + "'");
      if (!std::isfinite(v))
        throw DataError("table '" + name + "', line " + std::to_string(line_no) + ", column '" +
                        columns[c] + "': non-finite value");
      if (label_idx && c == *label_idx && !is_label_value(v))
        throw DataError("table '" + name + "', line " + std::to_string(line_no) +
                        ": invalid label '" + std::string(fields[c]) + "' (must be -1 or +1)");
      values[c] = v;
    }
    table.add_row(values);
  }
  if (schema.label) table.set_label_column(*schema.label);
  return table;
}

Table load_table(const std::filesystem::path& path, const TableSchema& schema, std::string name) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open table file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (name.empty()) name = path.stem().string();
  return parse_table_csv(buf.str(), schema, std::move(name));
}

std::string format_table_csv(const Table& table) {
  std::string out;
  for (std::size_t c = 0; c < table.arity(); ++c) {
    if (c) out += ',';
    out += table.columns()[c];
  }
  out += '\n';
  char buf[64];
  for (std::size_t r = 0; r < table.num_rows(); ++r) {
    for (std::size_t c = 0; c < table.arity(); ++c) {
      if (c) out += ',';
      double v = table.at(r, c);
      if (v == 0) v = 0;  // no "-0"
      auto res = std::to_chars(buf, buf + sizeof buf, v);
      out.append(buf, res.ptr);
    }
    out += '\n';
  }
  return out;
}

JoinSpec::JoinSpec(std::vector<Table> tables, std::string label)
    : tables_(std::move(tables)), label_(std::move(label)) {
  if (tables_.empty()) throw DataError("join spec has no tables");
  for (std::size_t i = 0; i < tables_.size(); ++i)
    for (std::size_t j = i + 1; j < tables_.size(); ++j)
      if (tables_[i].name() == tables_[j].name())
        throw DataError("duplicate table name '" + tables_[i].name() + "'");

  table_attrs_.resize(tables_.size());
  for (std::size_t t = 0; t < tables_.size(); ++t) {
    for (const auto& col : tables_[t].columns()) {
      auto id = attribute_id(col);
      if (!id) {
        attributes_.push_back(col);
        id = attributes_.size() - 1;
      }
      table_attrs_[t].push_back(*id);
    }
  }
  auto label_id = attribute_id(label_);
  if (!label_id) throw DataError("label attribute '" + label_ + "' appears in no table");
  label_attribute_ = *label_id;
  for (auto& t : tables_)
    if (t.column_index(label_) && t.label_column() != t.column_index(label_))
      t.set_label_column(label_);

  feature_pos_.assign(attributes_.size(), -1);
  for (std::size_t a = 0; a < attributes_.size(); ++a) {
    if (a == label_attribute_) continue;
    feature_pos_[a] = static_cast<std::ptrdiff_t>(features_.size());
    features_.push_back(a);
  }
}

std::optional<std::size_t> JoinSpec::attribute_id(std::string_view name) const {
  auto it = std::find(attributes_.begin(), attributes_.end(), name);
  if (it == attributes_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - attributes_.begin());
}

std::vector<std::string> JoinSpec::feature_names() const {
  std::vector<std::string> out;
  for (auto a : features_) out.push_back(attributes_[a]);
  return out;
}

std::optional<std::size_t> JoinSpec::feature_index(std::size_t attr) const {
  if (attr >= feature_pos_.size() || feature_pos_[attr] < 0) return std::nullopt;
  return static_cast<std::size_t>(feature_pos_[attr]);
}

JoinSpec load_join_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open join spec " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("join spec " + path.string() + " is not valid JSON: " + e.what());
  }
  try {
    auto base = path.parent_path();
    std::string label = doc.at("label").get<std::string>();
    std::vector<Table> tables;
    for (const auto& entry : doc.at("tables")) {
      std::filesystem::path file = entry.at("path").get<std::string>();
      if (file.is_relative()) file = base / file;
      TableSchema schema;
      if (entry.contains("columns")) schema.columns = entry.at("columns").get<std::vector<std::string>>();
      std::string name = entry.value("name", file.stem().string());
      auto table = load_table(file, schema, name);
      if (table.column_index(label)) table.set_label_column(label);
      tables.push_back(std::move(table));
    }
    JoinSpec spec(std::move(tables), std::move(label));
    if (doc.contains("scale"))
      for (auto& [k, v] : doc.at("scale").items()) {
        double f = v.get<double>();
        if (!(f > 0) || !std::isfinite(f))
          throw ConfigError("scale override for '" + k + "' must be a positive finite number");
        spec.scale_overrides[k] = f;
      }
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("join spec " + path.string() + ": " + e.what());
  }
}

void write_join_spec(const JoinSpec& spec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json doc;
  doc["label"] = spec.label();
  doc["tables"] = nlohmann::ordered_json::array();
  for (const auto& t : spec.tables()) {
    auto file = t.name() + ".csv";
    std::ofstream out(dir / file, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + (dir / file).string());
    out << format_table_csv(t);
    doc["tables"].push_back({{"name", t.name()}, {"path", file}, {"columns", t.columns()}});
  }
  if (!spec.scale_overrides.empty()) {
    doc["scale"] = nlohmann::ordered_json::object();
    for (auto& [k, v] : spec.scale_overrides) doc["scale"][k] = v;
  }
  std::ofstream out(dir / "spec.json", std::ios::binary);
  if (!out) throw ConfigError("cannot write " + (dir / "spec.json").string());
  out << doc.dump(2) << '\n';
}

RescaleResult rescale_features(const JoinSpec& spec) {
  std::vector<double> max_abs(spec.attributes().size(), 0.0);
  for (std::size_t t = 0; t < spec.num_tables(); ++t) {
    const auto& table = spec.tables()[t];
    const auto& attrs = spec.table_attributes(t);
    for (std::size_t r = 0; r < table.num_rows(); ++r)
      for (std::size_t c = 0; c < table.arity(); ++c)
        max_abs[attrs[c]] = std::max(max_abs[attrs[c]], std::abs(table.at(r, c)));
  }

  std::vector<double> factor_by_attr(spec.attributes().size(), 1.0);
  std::vector<double> factors;
  for (auto a : spec.feature_attributes()) {
    double f = max_abs[a] > 0 ? max_abs[a] : 1.0;
    if (auto it = spec.scale_overrides.find(spec.attributes()[a]); it != spec.scale_overrides.end())
      f = it->second;
    factor_by_attr[a] = f;
    factors.push_back(f);
  }

  std::vector<Table> tables = spec.tables();
  for (std::size_t t = 0; t < tables.size(); ++t) {
    const auto& attrs = spec.table_attributes(t);
    for (std::size_t r = 0; r < tables[t].num_rows(); ++r)
      for (std::size_t c = 0; c < tables[t].arity(); ++c) {
        if (attrs[c] == spec.label_attribute() || factor_by_attr[attrs[c]] == 1.0) continue;
        double v = tables[t].at(r, c) / factor_by_attr[attrs[c]];
        if (std::abs(v) > 1.0)
          throw DataError("feature '" + spec.attributes()[attrs[c]] +
                          "' leaves [-1,1] after applying its scale override");
        tables[t].at(r, c) = v;
      }
  }
  JoinSpec out(std::move(tables), spec.label());
  return {std::move(out), std::move(factors)};
}

bool features_in_unit_box(const JoinSpec& spec) {
  for (std::size_t t = 0; t < spec.num_tables(); ++t) {
    const auto& table = spec.tables()[t];
    const auto& attrs = spec.table_attributes(t);
    for (std::size_t r = 0; r < table.num_rows(); ++r)
      for (std::size_t c = 0; c < table.arity(); ++c)
        if (attrs[c] != spec.label_attribute() && std::abs(table.at(r, c)) > 1.0) return false;
  }
  return true;
}

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::ok: return "ok";
    case Errc::config: return "config_error";
    case Errc::cyclic_query: return "cyclic_query";
    case Errc::data: return "data_error";
    case Errc::output_cap_exceeded: return "output_cap_exceeded";
    case Errc::verification_failed: return "verification_failed";
    case Errc::partial_sum_blowup: return "partial_sum_blowup";
    case Errc::internal: return "internal_error";
  }
  return "unknown";
}

}  // namespace relsvm
