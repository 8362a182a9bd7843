#pragma once

// Loading and preprocessing of the screening CSV: column drop, age/ethnicity
// imputation, label encoding of categorical columns, standardization.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "clusterscreen/core.hpp"

namespace clusterscreen {

inline constexpr std::string_view kLabelColumn = "Class/ASD";

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column_index(std::string_view name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return j;
    return std::nullopt;
  }

  friend bool operator==(const RawTable&, const RawTable&) = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

// RFC-4180 record splitter: quoted fields, doubled-quote escapes, embedded
// newlines inside quotes, CRLF or LF line endings.
inline std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    // A blank line yields a single empty field; skip it.
    if (!(record.size() == 1 && record.front().empty())) records.push_back(std::move(record));
    record.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field_started || field.empty()) {
          in_quotes = true;
          field_started = true;
        } else {
          field.push_back(c);
        }
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        end_record();
        break;
      case '\n':
        end_record();
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) throw IngestError("csv: unterminated quoted field");
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

}  // namespace detail

inline RawTable parse_table(std::string_view text) {
  auto records = detail::parse_csv(text);
  if (records.empty()) throw IngestError("csv: no header row");
  RawTable t;
  t.header = std::move(records.front());
  for (auto& h : t.header) h = std::string(detail::trim(h));
  if (!t.column_index(kLabelColumn))
    throw IngestError("csv: missing label column \"" + std::string(kLabelColumn) + "\"");
  t.rows.reserve(records.size() - 1);
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != t.header.size())
      throw IngestError("csv: row " + std::to_string(r + 1) + " has " + std::to_string(records[r].size()) +
                        " cells, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(records[r]));
  }
  return t;
}

inline RawTable load_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IngestError("read failure on " + path);
  std::string text = buf.str();
  if (text.starts_with("\xEF\xBB\xBF")) text.erase(0, 3);  // UTF-8 BOM
  return parse_table(text);
}

// --- cleaning ---------------------------------------------------------------

inline bool is_missing(std::string_view cell) {
  cell = detail::trim(cell);
  return cell.empty() || cell == "?";
}

struct CleanConfig {
  std::vector<std::string> drop_columns{"age_desc"};
  std::string age_column = "age";
  std::string ethnicity_column = "ethnicity";
  std::string ethnicity_fill = "others";
};

struct CleanSummary {
  double mean_age = 0.0;      // over non-missing cells
  long long imputed_age = 0;  // mean rounded to nearest integer
  std::size_t ages_filled = 0;
  std::size_t ethnicities_filled = 0;
};

inline RawTable clean(const RawTable& table, const CleanConfig& config = {},
                      CleanSummary* summary = nullptr) {
  const auto age_col = table.column_index(config.age_column);
  if (!age_col) throw IngestError("clean: column \"" + config.age_column + "\" absent");

  CleanSummary s;
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& cell = table.rows[r][*age_col];
    if (is_missing(cell)) continue;
    auto v = detail::parse_number(cell);
    if (!v) throw IngestError("clean: non-numeric age \"" + cell + "\" in row " + std::to_string(r + 1));
    sum += *v;
    ++count;
  }
  if (count == 0) throw IngestError("clean: every age cell is missing; mean undefined");
  s.mean_age = sum / static_cast<double>(count);
  s.imputed_age = std::llround(s.mean_age);
  const std::string fill_age = std::to_string(s.imputed_age);

  std::vector<bool> keep(table.header.size(), true);
  for (const auto& name : config.drop_columns)
    if (auto j = table.column_index(name)) keep[*j] = false;
  const auto eth_col = table.column_index(config.ethnicity_column);

  RawTable out;
  for (std::size_t j = 0; j < table.header.size(); ++j)
    if (keep[j]) out.header.push_back(table.header[j]);
  out.rows.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    std::vector<std::string> cleaned;
    cleaned.reserve(out.header.size());
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (!keep[j]) continue;
      if (j == *age_col && is_missing(row[j])) {
        cleaned.push_back(fill_age);
        ++s.ages_filled;
      } else if (eth_col && j == *eth_col && is_missing(row[j])) {
        cleaned.push_back(config.ethnicity_fill);
        ++s.ethnicities_filled;
      } else {
        cleaned.push_back(row[j]);
      }
    }
    out.rows.push_back(std::move(cleaned));
  }
  if (summary) *summary = s;
  return out;
}

// --- label encoding -----------------------------------------------------------

enum class CodeOrder { FirstAppearance, Sorted };

// Category -> integer code mapping for every label-encoded column.
struct Codebook {
  std::vector<std::string> encoded_columns;
  std::map<std::string, std::vector<std::string>> categories;  // index = code

  bool encodes(std::string_view column) const {
    return std::find(encoded_columns.begin(), encoded_columns.end(), column) != encoded_columns.end();
  }

  std::optional<int> code(const std::string& column, std::string_view value) const {
    auto it = categories.find(column);
    if (it == categories.end()) return std::nullopt;
    for (std::size_t c = 0; c < it->second.size(); ++c)
      if (it->second[c] == value) return static_cast<int>(c);
    return std::nullopt;
  }

  const std::string& decode(const std::string& column, int code) const {
    const auto& cats = categories.at(column);
    if (code < 0 || static_cast<std::size_t>(code) >= cats.size())
      throw std::out_of_range("codebook: code " + std::to_string(code) + " out of range for " + column);
    return cats[static_cast<std::size_t>(code)];
  }

  friend bool operator==(const Codebook&, const Codebook&) = default;
};

inline void to_json(nlohmann::json& j, const Codebook& c) {
  j = nlohmann::json::object();
  j["encoded_columns"] = c.encoded_columns;
  auto& cats = j["categories"] = nlohmann::json::object();
  for (const auto& col : c.encoded_columns) cats[col] = c.categories.at(col);
}

inline void from_json(const nlohmann::json& j, Codebook& c) {
  c.encoded_columns = j.at("encoded_columns").get<std::vector<std::string>>();
  c.categories.clear();
  for (const auto& col : c.encoded_columns)
    c.categories[col] = j.at("categories").at(col).get<std::vector<std::string>>();
}

struct EncodedTable {
  Matrix values;                           // n x d, label column removed
  BinaryLabels truth;                      // 1 = YES (ASD), 0 = NO
  Codebook codebook;
  std::vector<std::string> feature_names;  // column order of `values`
  std::size_t label_position = 0;          // label's index in the source header
};

namespace detail {

// Fixed codes for binary text columns; nullopt when the column is not one.
inline std::optional<std::vector<std::string>> binary_convention(const std::set<std::string>& values) {
  static const std::vector<std::vector<std::string>> conventions{
      {"no", "yes"}, {"f", "m"}, {"female", "male"}};
  for (const auto& conv : conventions) {
    const bool subset = std::all_of(values.begin(), values.end(), [&](const std::string& v) {
      return std::find(conv.begin(), conv.end(), v) != conv.end();
    });
    if (subset) return conv;
  }
  return std::nullopt;
}

inline int parse_truth(std::string_view cell, std::size_t row) {
  const auto v = trim(cell);
  if (v == "YES") return 1;
  if (v == "NO") return 0;
  throw IngestError("encode: label \"" + std::string(v) + "\" in row " + std::to_string(row + 1) +
                    " is neither YES nor NO");
}

}  // namespace detail

// Label-encodes every non-numeric column and strips the label column.
// Without a codebook, codes follow the binary conventions (no/yes, f/m) or
// `order` for multi-category columns. With one, unseen categories are errors.
inline EncodedTable encode(const RawTable& table, const std::optional<Codebook>& codebook = std::nullopt,
                           CodeOrder order = CodeOrder::FirstAppearance) {
  const auto label_col = table.column_index(kLabelColumn);
  if (!label_col) throw IngestError("encode: missing label column");

  EncodedTable out;
  out.label_position = *label_col;
  const std::size_t n = table.rows.size();
  for (std::size_t j = 0; j < table.header.size(); ++j)
    if (j != *label_col) out.feature_names.push_back(table.header[j]);

  std::vector<bool> categorical(table.header.size(), false);
  if (codebook) {
    out.codebook = *codebook;
    for (const auto& col : codebook->encoded_columns) {
      auto j = table.column_index(col);
      if (!j) throw IngestError("encode: codebook column \"" + col + "\" absent from table");
      categorical[*j] = true;
    }
  } else {
    for (std::size_t j = 0; j < table.header.size(); ++j) {
      if (j == *label_col) continue;
      for (const auto& row : table.rows)
        if (!detail::parse_number(row[j])) {
          categorical[j] = true;
          break;
        }
    }
    for (std::size_t j = 0; j < table.header.size(); ++j) {
      if (!categorical[j]) continue;
      const auto& name = table.header[j];
      std::set<std::string> distinct;
      for (const auto& row : table.rows) distinct.insert(row[j]);
      std::vector<std::string> cats;
      if (auto conv = detail::binary_convention(distinct)) {
        cats = *conv;
      } else if (order == CodeOrder::Sorted) {
        cats.assign(distinct.begin(), distinct.end());
      } else {
        std::set<std::string> seen;
        for (const auto& row : table.rows)
          if (seen.insert(row[j]).second) cats.push_back(row[j]);
      }
      out.codebook.encoded_columns.push_back(name);
      out.codebook.categories[name] = std::move(cats);
    }
  }

  out.values = Matrix(n, out.feature_names.size());
  out.truth.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& row = table.rows[r];
    out.truth[r] = detail::parse_truth(row[*label_col], r);
    std::size_t f = 0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j == *label_col) continue;
      if (categorical[j]) {
        auto c = out.codebook.code(table.header[j], row[j]);
        if (!c)
          throw IngestError("encode: unseen category \"" + row[j] + "\" in column " + table.header[j]);
        out.values(r, f) = *c;
      } else {
        auto v = detail::parse_number(row[j]);
        if (!v)
          throw IngestError("encode: non-numeric cell \"" + row[j] + "\" in column " + table.header[j]);
        out.values(r, f) = *v;
      }
      ++f;
    }
  }
  return out;
}

// Inverse of encode: restores category strings, numeric cells, and the label
// column at its original position.
inline RawTable decode(const EncodedTable& enc) {
  RawTable t;
  t.header = enc.feature_names;
  t.header.insert(t.header.begin() + static_cast<std::ptrdiff_t>(enc.label_position), std::string(kLabelColumn));
  t.rows.reserve(enc.values.rows());
  for (std::size_t r = 0; r < enc.values.rows(); ++r) {
    std::vector<std::string> row;
    row.reserve(t.header.size());
    for (std::size_t f = 0; f < enc.feature_names.size(); ++f) {
      const auto& name = enc.feature_names[f];
      const double v = enc.values(r, f);
      row.push_back(enc.codebook.encodes(name) ? enc.codebook.decode(name, static_cast<int>(v))
                                               : detail::format_number(v));
    }
    row.insert(row.begin() + static_cast<std::ptrdiff_t>(enc.label_position), enc.truth[r] ? "YES" : "NO");
    t.rows.push_back(std::move(row));
  }
  return t;
}

// --- standardization ------------------------------------------------------------

struct ScalerParams {
  std::vector<double> mean;
  std::vector<double> std;  // population convention (divide by n)
};

inline void to_json(nlohmann::json& j, const ScalerParams& p) { j = {{"mean", p.mean}, {"std", p.std}}; }
inline void from_json(const nlohmann::json& j, ScalerParams& p) {
  p.mean = j.at("mean").get<std::vector<double>>();
  p.std = j.at("std").get<std::vector<double>>();
}

inline ScalerParams fit_scaler(const Matrix& m) {
  if (m.empty() || m.cols() == 0) throw IngestError("fit_scaler: empty matrix");
  const auto n = static_cast<double>(m.rows());
  ScalerParams p{std::vector<double>(m.cols(), 0.0), std::vector<double>(m.cols(), 0.0)};
  for (std::size_t j = 0; j < m.cols(); ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) sum += m(i, j);
    const double mean = sum / n;
    double ss = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      const double d = m(i, j) - mean;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / n);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean))))
      throw IngestError("fit_scaler: column " + std::to_string(j) + " is constant");
    p.mean[j] = mean;
    p.std[j] = sd;
  }
  return p;
}

inline FeatureMatrix apply_scaler(const Matrix& m, const ScalerParams& p) {
  if (m.cols() != p.mean.size() || p.mean.size() != p.std.size())
    throw std::invalid_argument("apply_scaler: matrix has " + std::to_string(m.cols()) +
                                " columns, scaler has " + std::to_string(p.mean.size()));
  FeatureMatrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = (m(i, j) - p.mean[j]) / p.std[j];
  return out;
}

// True when the header carries the adult screening dataset's 21 columns.
inline bool is_screening_schema(const std::vector<std::string>& header) {
  static const std::vector<std::string> expected{
      "A1_Score", "A2_Score", "A3_Score", "A4_Score", "A5_Score", "A6_Score",       "A7_Score",
      "A8_Score", "A9_Score", "A10_Score", "age",     "gender",   "ethnicity",      "jundice",
      "austim",   "contry_of_res",        "used_app_before",     "result",          "age_desc",
      "relation", "Class/ASD"};
  if (header.size() != expected.size()) return false;
  return std::is_permutation(header.begin(), header.end(), expected.begin());
}

}  // namespace clusterscreen
