#pragma once

// File formats: RFC-4180 CSV data with a JSON schema sidecar, and JSON
// coefficient documents keyed by predictor name and level label.

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "clusterlearn/model.hpp"

namespace clusterlearn::io {

using json = nlohmann::ordered_json;

/// Text with 12 significant digits.
inline std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

/// v rounded to 12 significant digits, for structured output.
inline double round12(double v) {
  if (!std::isfinite(v)) return v;
  return std::stod(format_number(v));
}

/// JSON value for a number; non-finite values become null.
inline json number(double v) { return std::isfinite(v) ? json(round12(v)) : json(nullptr); }

// ---------------------------------------------------------------- CSV

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  }
};

/// RFC 4180: comma separated, optional double quotes with "" escapes, quoted
/// fields may span lines, CRLF or LF record ends. The first record is the
/// header; every record must have the header's field count.
inline CsvTable read_csv(std::istream& is) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> rec;
  std::string field;
  bool quoted = false, field_started = false, any = false;
  std::size_t line = 1;
  auto end_field = [&] {
    rec.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    // skip blank lines
    if (!(rec.size() == 1 && rec[0].empty())) records.push_back(std::move(rec));
    rec.clear();
  };
  char c;
  while (is.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (is.peek() == '"') {
          is.get(c);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"') {
      if (field_started) throw DataError("csv line " + std::to_string(line) + ": quote inside unquoted field");
      quoted = field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r') {
      if (is.peek() == '\n') continue;
      end_record();
      ++line;
    } else if (c == '\n') {
      end_record();
      ++line;
    } else {
      field += c;
      field_started = true;
    }
  }
  if (quoted) throw DataError("csv: unterminated quoted field");
  if (any && (!field.empty() || !rec.empty() || field_started)) end_record();
  if (records.empty()) throw DataError("csv: no header row");
  CsvTable t;
  t.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != t.header.size())
      throw DataError("csv record " + std::to_string(r + 1) + ": expected " + std::to_string(t.header.size()) +
                      " fields, found " + std::to_string(records[r].size()));
    t.rows.push_back(std::move(records[r]));
  }
  return t;
}

inline CsvTable read_csv_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw DataError("cannot open " + p.string());
  return read_csv(is);
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline void write_csv_row(std::ostream& os, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) os << (i ? "," : "") << csv_field(fields[i]);
  os << "\n";
}

// ---------------------------------------------------------------- schema sidecar

enum class ColumnRole { categorical, continuous, response };

inline const char* to_string(ColumnRole r) {
  return r == ColumnRole::categorical ? "categorical" : r == ColumnRole::continuous ? "continuous" : "response";
}

struct ColumnSpec {
  std::string name;
  ColumnRole role = ColumnRole::categorical;
  std::vector<std::string> levels;  ///< optional fixed level order for categorical columns
};

/// Which CSV columns to use and how. Columns not listed are ignored.
struct SchemaFile {
  Task task = Task::regression;
  std::vector<ColumnSpec> columns;

  json to_json() const {
    json j;
    j["task"] = clusterlearn::to_string(task);
    j["columns"] = json::array();
    for (const auto& c : columns) {
      json e;
      e["name"] = c.name;
      e["role"] = to_string(c.role);
      if (!c.levels.empty()) e["levels"] = c.levels;
      j["columns"].push_back(e);
    }
    return j;
  }

  static SchemaFile from_json(const json& j) {
    SchemaFile s;
    try {
      const auto task = j.value("task", std::string("regression"));
      if (task == "binary") s.task = Task::binary;
      else if (task != "regression") throw DataError("schema: unknown task '" + task + "'");
      for (const auto& e : j.at("columns")) {
        ColumnSpec c;
        c.name = e.at("name").get<std::string>();
        const auto role = e.at("role").get<std::string>();
        if (role == "categorical") c.role = ColumnRole::categorical;
        else if (role == "continuous") c.role = ColumnRole::continuous;
        else if (role == "response") c.role = ColumnRole::response;
        else throw DataError("schema: column '" + c.name + "' has unknown role '" + role + "'");
        if (e.contains("levels")) c.levels = e.at("levels").get<std::vector<std::string>>();
        s.columns.push_back(std::move(c));
      }
    } catch (const json::exception& e) {
      throw DataError(std::string("schema: ") + e.what());
    }
    std::size_t responses = 0;
    for (const auto& c : s.columns) responses += c.role == ColumnRole::response;
    if (responses != 1) throw DataError("schema: exactly one response column required");
    return s;
  }

  static SchemaFile load(const std::filesystem::path& p) {
    std::ifstream is(p);
    if (!is) throw DataError("cannot open " + p.string());
    try {
      return from_json(json::parse(is));
    } catch (const json::parse_error& e) {
      throw DataError("schema " + p.string() + ": " + e.what());
    }
  }

  void save(const std::filesystem::path& p) const {
    std::ofstream os(p);
    os << to_json().dump(2) << "\n";
    if (!os) throw DataError("cannot write " + p.string());
  }
};

namespace detail {

inline std::optional<double> parse_double(const std::string& s) {
  double v = 0.0;
  auto b = s.data(), e = s.data() + s.size();
  while (b < e && *b == ' ') ++b;
  while (e > b && e[-1] == ' ') --e;
  if (b < e && *b == '+') ++b;
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e || b == e) return std::nullopt;
  return v;
}

/// Numeric order when every label is a number, otherwise byte order.
inline void sort_levels(std::vector<std::string>& levels) {
  const bool numeric = std::all_of(levels.begin(), levels.end(), [](const auto& l) { return parse_double(l); });
  if (numeric)
    std::stable_sort(levels.begin(), levels.end(),
                     [](const auto& a, const auto& b) { return *parse_double(a) < *parse_double(b); });
  else
    std::sort(levels.begin(), levels.end());
}

}  // namespace detail

/// Builds a dataset from a table. Level order comes from the sidecar when
/// given, else from the observed labels (numeric or byte order). Missing
/// values and unknown labels are errors.
inline Dataset load_dataset(const CsvTable& t, const SchemaFile& sf) {
  std::vector<CategoricalPredictor> preds;
  std::vector<std::size_t> cat_col, cont_col;
  std::vector<std::string> cont_names;
  std::optional<std::size_t> resp_col;
  for (const auto& c : sf.columns) {
    auto col = t.column(c.name);
    if (!col) throw DataError("column '" + c.name + "' named in the schema is missing from the data");
    for (std::size_t r = 0; r < t.rows.size(); ++r)
      if (t.rows[r][*col].empty())
        throw DataError("missing value in column '" + c.name + "', record " + std::to_string(r + 2));
    switch (c.role) {
      case ColumnRole::categorical: {
        CategoricalPredictor p{c.name, c.levels};
        if (p.levels.empty()) {
          for (const auto& row : t.rows) p.levels.push_back(row[*col]);
          std::sort(p.levels.begin(), p.levels.end());
          p.levels.erase(std::unique(p.levels.begin(), p.levels.end()), p.levels.end());
          detail::sort_levels(p.levels);
        }
        preds.push_back(std::move(p));
        cat_col.push_back(*col);
        break;
      }
      case ColumnRole::continuous:
        cont_col.push_back(*col);
        cont_names.push_back(c.name);
        break;
      case ColumnRole::response: resp_col = *col; break;
    }
  }
  if (!resp_col) throw DataError("schema has no response column");
  if (t.rows.empty()) throw DataError("data file has no records");
  CategoricalSchema schema(std::move(preds), std::move(cont_names));
  const auto n = t.rows.size();
  Dataset::Codes codes(cat_col.size());
  for (std::size_t j = 0; j < cat_col.size(); ++j)
    for (std::size_t r = 0; r < n; ++r) {
      const auto& label = t.rows[r][cat_col[j]];
      auto k = schema.level_index(j, label);
      if (!k)
        throw DataError("unknown level '" + label + "' in column '" + schema.predictor(j).name + "', record " +
                        std::to_string(r + 2));
      codes[j].push_back(static_cast<std::uint32_t>(*k));
    }
  auto num = [&](std::size_t r, std::size_t col) {
    auto v = detail::parse_double(t.rows[r][col]);
    if (!v || !std::isfinite(*v))
      throw DataError("bad number '" + t.rows[r][col] + "' in column '" + t.header[col] + "', record " +
                      std::to_string(r + 2));
    return *v;
  };
  Eigen::MatrixXd w(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cont_col.size()));
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < cont_col.size(); ++c)
      w(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = num(r, cont_col[c]);
    y[static_cast<Eigen::Index>(r)] = num(r, *resp_col);
  }
  return Dataset(std::move(schema), std::move(codes), std::move(w), std::move(y), sf.task);
}

inline Dataset load_dataset(const std::filesystem::path& csv, const std::filesystem::path& schema) {
  return load_dataset(read_csv_file(csv), SchemaFile::load(schema));
}

/// Several tables (e.g. train / validation / test) on one shared level set.
/// Columns are matched by name; columns outside the schema are ignored.
inline std::vector<Dataset> load_datasets(const std::vector<CsvTable>& tables, const SchemaFile& sf) {
  if (tables.empty()) return {};
  CsvTable all;
  for (const auto& c : sf.columns) all.header.push_back(c.name);
  std::vector<std::size_t> sizes;
  for (std::size_t t = 0; t < tables.size(); ++t) {
    std::vector<std::size_t> at;
    for (const auto& name : all.header) {
      auto col = tables[t].column(name);
      if (!col) throw DataError("column '" + name + "' missing from table " + std::to_string(t + 1));
      at.push_back(*col);
    }
    if (tables[t].rows.empty()) throw DataError("table " + std::to_string(t + 1) + " has no records");
    for (const auto& row : tables[t].rows) {
      std::vector<std::string> r;
      for (auto c : at) r.push_back(row[c]);
      all.rows.push_back(std::move(r));
    }
    sizes.push_back(tables[t].rows.size());
  }
  const Dataset joint = load_dataset(all, sf);
  std::vector<Dataset> out;
  std::size_t begin = 0;
  for (auto sz : sizes) {
    std::vector<std::size_t> idx(sz);
    std::iota(idx.begin(), idx.end(), begin);
    out.push_back(joint.rows(idx));
    begin += sz;
  }
  return out;
}

/// Sidecar describing `ds` with its level order pinned.
inline SchemaFile schema_file_of(const Dataset& ds, const std::string& response = "y") {
  SchemaFile sf;
  sf.task = ds.task();
  const auto& s = ds.schema();
  for (std::size_t j = 0; j < s.num_categorical(); ++j)
    sf.columns.push_back({s.predictor(j).name, ColumnRole::categorical, s.predictor(j).levels});
  for (const auto& w : s.continuous_names()) sf.columns.push_back({w, ColumnRole::continuous, {}});
  sf.columns.push_back({response, ColumnRole::response, {}});
  return sf;
}

/// Categorical labels, continuous values and the response, 17 significant
/// digits so the data reads back exactly.
inline void write_dataset(std::ostream& os, const Dataset& ds, const std::string& response = "y") {
  const auto& s = ds.schema();
  std::vector<std::string> head;
  for (std::size_t j = 0; j < s.num_categorical(); ++j) head.push_back(s.predictor(j).name);
  for (const auto& w : s.continuous_names()) head.push_back(w);
  head.push_back(response);
  write_csv_row(os, head);
  auto exact = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (std::size_t i = 0; i < ds.n(); ++i) {
    std::vector<std::string> row;
    for (std::size_t j = 0; j < s.num_categorical(); ++j) row.push_back(s.predictor(j).levels[ds.code(i, j)]);
    for (Eigen::Index c = 0; c < ds.continuous().cols(); ++c)
      row.push_back(exact(ds.continuous()(static_cast<Eigen::Index>(i), c)));
    row.push_back(exact(ds.y()[static_cast<Eigen::Index>(i)]));
    write_csv_row(os, row);
  }
}

// ---------------------------------------------------------------- coefficients

/// {alpha, categorical: {predictor: {label: value}}, continuous: {name: value}}
inline json coefficients_to_json(const Coefficients& c, const CategoricalSchema& s) {
  if (!c.matches(s)) throw DataError("coefficients do not match the schema");
  json j;
  j["alpha"] = number(c.alpha);
  j["categorical"] = json::object();
  for (std::size_t p = 0; p < s.num_categorical(); ++p) {
    json block = json::object();
    for (std::size_t k = 0; k < s.levels(p); ++k) block[s.predictor(p).levels[k]] = number(c.categorical[p][k]);
    j["categorical"][s.predictor(p).name] = block;
  }
  j["continuous"] = json::object();
  for (std::size_t w = 0; w < s.num_continuous(); ++w) j["continuous"][s.continuous_names()[w]] = number(c.continuous[w]);
  return j;
}

/// Schema implied by a coefficients document, in document order.
inline CategoricalSchema schema_from_coefficients(const json& j) {
  try {
    std::vector<CategoricalPredictor> preds;
    for (const auto& [name, block] : j.at("categorical").items()) {
      CategoricalPredictor p{name, {}};
      for (const auto& [label, v] : block.items()) p.levels.push_back(label);
      preds.push_back(std::move(p));
    }
    std::vector<std::string> cont;
    if (j.contains("continuous"))
      for (const auto& [name, v] : j.at("continuous").items()) cont.push_back(name);
    return CategoricalSchema(std::move(preds), std::move(cont));
  } catch (const json::exception& e) {
    throw DataError(std::string("coefficients: ") + e.what());
  }
}

/// Reads values for every predictor and level of `s`; anything missing is an error.
inline Coefficients coefficients_from_json(const json& j, const CategoricalSchema& s) {
  Coefficients c = Coefficients::zeros(s);
  try {
    c.alpha = j.at("alpha").get<double>();
    for (std::size_t p = 0; p < s.num_categorical(); ++p) {
      const auto& block = j.at("categorical").at(s.predictor(p).name);
      for (std::size_t k = 0; k < s.levels(p); ++k) c.categorical[p][k] = block.at(s.predictor(p).levels[k]).get<double>();
    }
    for (std::size_t w = 0; w < s.num_continuous(); ++w)
      c.continuous[w] = j.at("continuous").at(s.continuous_names()[w]).get<double>();
  } catch (const json::exception& e) {
    throw DataError(std::string("coefficients: ") + e.what());
  }
  return c;
}

inline json load_json(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw DataError("cannot open " + p.string());
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

inline void save_json(const std::filesystem::path& p, const json& j) {
  std::ofstream os(p);
  os << j.dump(2) << "\n";
  if (!os) throw DataError("cannot write " + p.string());
}

}  // namespace clusterlearn::io
