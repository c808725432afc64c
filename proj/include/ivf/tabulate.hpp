#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ivf/errors.hpp"

namespace ivf {

/// One observational unit: instrument level, treatment level, outcome and
/// covariates. `y` stays real-valued until it is dichotomized.
struct Record {
  int z = 0;
  int d = 0;
  double y = 0.0;
  std::vector<std::string> v;
};

/// Cell counts n(z, d, y) for one stratum, with z in 0..L-1, d in 0..M-1 and
/// binary y. The binary instrumental variable model is L = M = 2.
class JointCounts {
 public:
  JointCounts() : JointCounts(2, 2) {}
  JointCounts(int instrument_levels, int treatment_levels)
      : levels_z_(instrument_levels),
        levels_d_(treatment_levels),
        counts_(static_cast<std::size_t>(instrument_levels) * treatment_levels * 2, 0) {
    if (instrument_levels < 2 || treatment_levels < 2)
      throw DomainError("JointCounts needs at least two instrument and two treatment levels");
  }

  /// Binary table from eight counts ordered n(z, d, y) with y fastest:
  /// {n000, n001, n010, n011, n100, n101, n110, n111}.
  static JointCounts binary(std::span<const std::int64_t, 8> cells) {
    JointCounts t(2, 2);
    for (std::size_t i = 0; i < 8; ++i) {
      if (cells[i] < 0) throw DomainError("negative cell count");
      t.counts_[i] = cells[i];
    }
    return t;
  }
  static JointCounts binary(std::initializer_list<std::int64_t> cells) {
    if (cells.size() != 8) throw DomainError("binary JointCounts needs exactly 8 cells");
    std::array<std::int64_t, 8> a{};
    std::copy(cells.begin(), cells.end(), a.begin());
    return binary(std::span<const std::int64_t, 8>(a));
  }

  int instrument_levels() const noexcept { return levels_z_; }
  int treatment_levels() const noexcept { return levels_d_; }
  bool is_binary() const noexcept { return levels_z_ == 2 && levels_d_ == 2; }

  std::int64_t operator()(int z, int d, int y) const { return counts_[index(z, d, y)]; }
  std::int64_t& at(int z, int d, int y) { return counts_[index(z, d, y)]; }

  void add(int z, int d, int y, std::int64_t n = 1) {
    auto& c = counts_[index(z, d, y)];
    if (c + n < 0) throw DomainError("cell count would become negative");
    c += n;
  }

  std::int64_t arm_total(int z) const {
    std::int64_t s = 0;
    for (int d = 0; d < levels_d_; ++d)
      for (int y = 0; y < 2; ++y) s += (*this)(z, d, y);
    return s;
  }

  std::int64_t total() const {
    std::int64_t s = 0;
    for (auto c : counts_) s += c;
    return s;
  }

  /// Empirical p(D = d, Y = y | Z = z).
  double proportion(int z, int d, int y) const {
    const auto n = arm_total(z);
    if (n <= 0) throw EstimationError("instrument arm z=" + std::to_string(z) + " is empty");
    return static_cast<double>((*this)(z, d, y)) / static_cast<double>(n);
  }

  std::span<const std::int64_t> cells() const noexcept { return counts_; }

  JointCounts& operator+=(const JointCounts& other) {
    if (other.levels_z_ != levels_z_ || other.levels_d_ != levels_d_)
      throw DomainError("cannot add JointCounts of different shapes");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    return *this;
  }

  friend bool operator==(const JointCounts&, const JointCounts&) = default;

 private:
  std::size_t index(int z, int d, int y) const {
    if (z < 0 || z >= levels_z_ || d < 0 || d >= levels_d_ || y < 0 || y > 1)
      throw DomainError("cell index (" + std::to_string(z) + "," + std::to_string(d) + "," +
                        std::to_string(y) + ") outside table");
    return (static_cast<std::size_t>(z) * levels_d_ + d) * 2 + y;
  }

  int levels_z_;
  int levels_d_;
  std::vector<std::int64_t> counts_;
};

using StratumKey = std::vector<std::string>;

/// Cross-classified counts; one JointCounts per observed covariate
/// combination. An unconditional analysis is a single stratum with an empty
/// key.
struct StratifiedCounts {
  std::map<StratumKey, JointCounts> strata;

  std::size_t stratum_count() const noexcept { return strata.size(); }

  std::int64_t total() const {
    std::int64_t s = 0;
    for (const auto& [k, t] : strata) s += t.total();
    return s;
  }

  /// Sum of all strata (the collapsed, unconditional table).
  JointCounts collapsed() const {
    if (strata.empty()) throw DomainError("no strata to collapse");
    JointCounts out(strata.begin()->second.instrument_levels(), strata.begin()->second.treatment_levels());
    for (const auto& [k, t] : strata) out += t;
    return out;
  }
};

inline std::string format_key(const StratumKey& key) {
  if (key.empty()) return "(all)";
  std::string s;
  for (std::size_t i = 0; i < key.size(); ++i) {
    if (i) s += '|';
    s += key[i];
  }
  return s;
}

/// Column mapping for ingest_csv.
struct CsvSchema {
  std::string z = "z";
  std::string d = "d";
  std::string y = "y";
  std::vector<std::string> covariates;
  /// When set, d := 1{raw d > threshold} before validation.
  std::optional<double> treatment_above;
  /// Per-covariate bin width; the stored value becomes floor(x / width).
  std::map<std::string, double> bin_widths;
};

namespace detail {

// Splits one CSV line (RFC 4180 quoting, no embedded newlines).
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  out.push_back(std::move(field));
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline bool is_missing(std::string_view s) { return s.empty() || s == "NA" || s == "NaN" || s == "."; }

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

/// Reads unit-level records from a comma-separated file with a header row.
inline std::vector<Record> ingest_csv(std::istream& in, const CsvSchema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("input has no header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = detail::split_csv_line(line);
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col.emplace(std::string(detail::trim(header[i])), i);

  auto find = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) throw SchemaError("column '" + name + "' not found in header");
    return it->second;
  };
  const std::size_t iz = find(schema.z);
  const std::size_t id = find(schema.d);
  const std::size_t iy = find(schema.y);
  std::vector<std::size_t> iv;
  std::vector<std::optional<double>> widths;
  for (const auto& c : schema.covariates) {
    iv.push_back(find(c));
    auto w = schema.bin_widths.find(c);
    widths.push_back(w == schema.bin_widths.end() ? std::nullopt : std::optional<double>(w->second));
  }
  for (const auto& [name, w] : schema.bin_widths) {
    if (std::find(schema.covariates.begin(), schema.covariates.end(), name) == schema.covariates.end())
      throw SchemaError("bin width given for '" + name + "', which is not a covariate");
    if (!(w > 0.0)) throw SchemaError("bin width for '" + name + "' must be positive");
  }

  auto level = [](std::string_view s, const std::string& name, std::size_t row) {
    auto v = detail::parse_double(s);
    if (!v || *v != std::floor(*v))
      throw ParseError("column '" + name + "' value '" + std::string(s) + "' is not an integer", row);
    if (*v < 0) throw ParseError("column '" + name + "' must be non-negative", row);
    return static_cast<int>(*v);
  };

  std::vector<Record> out;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv_line(line);
    auto field = [&](std::size_t i, const std::string& name) {
      if (i >= f.size() || detail::is_missing(detail::trim(f[i])))
        throw ParseError("missing value in column '" + name + "'", row);
      return detail::trim(f[i]);
    };
    Record r;
    r.z = level(field(iz, schema.z), schema.z, row);
    if (schema.treatment_above) {
      auto raw = detail::parse_double(field(id, schema.d));
      if (!raw) throw ParseError("column '" + schema.d + "' is not numeric", row);
      r.d = *raw > *schema.treatment_above ? 1 : 0;
    } else {
      r.d = level(field(id, schema.d), schema.d, row);
    }
    auto y = detail::parse_double(field(iy, schema.y));
    if (!y) throw ParseError("column '" + schema.y + "' value is not numeric", row);
    r.y = *y;
    r.v.reserve(iv.size());
    for (std::size_t k = 0; k < iv.size(); ++k) {
      auto s = field(iv[k], schema.covariates[k]);
      if (widths[k]) {
        auto x = detail::parse_double(s);
        if (!x) throw ParseError("binned covariate '" + schema.covariates[k] + "' is not numeric", row);
        r.v.push_back(std::to_string(static_cast<long long>(std::floor(*x / *widths[k]))));
      } else {
        r.v.emplace_back(s);
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<Record> ingest_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open '" + path + "'");
  return ingest_csv(in, schema);
}

inline double median(std::vector<double> values) {
  if (values.empty()) throw DomainError("median of an empty sample");
  const auto n = values.size();
  auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(values.begin(), mid, values.end());
  const double upper = *mid;
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), mid);
  return 0.5 * (lower + upper);
}

/// y := 1{y > sample median}; ties at the median go to 0.
inline std::vector<Record> dichotomize_median(std::vector<Record> records) {
  if (records.empty()) throw DomainError("cannot dichotomize an empty sample");
  std::vector<double> ys;
  ys.reserve(records.size());
  for (const auto& r : records) ys.push_back(r.y);
  const double m = median(std::move(ys));
  for (auto& r : records) r.y = r.y > m ? 1.0 : 0.0;
  return records;
}

/// Cross-classifies records into strata keyed by their covariate values.
/// Every record must carry a binary y. `covariate_columns` selects positions
/// in Record::v; empty means one stratum holding everything. Table
/// dimensions are the global maxima of z and d (at least 2 each).
inline StratifiedCounts tabulate(std::span<const Record> records, std::span<const std::size_t> covariate_columns) {
  int lz = 2;
  int ld = 2;
  for (const auto& r : records) {
    if (r.z < 0 || r.d < 0) throw DomainError("instrument and treatment levels must be non-negative");
    if (r.y != 0.0 && r.y != 1.0) throw DomainError("tabulate needs binary outcomes; dichotomize first");
    lz = std::max(lz, r.z + 1);
    ld = std::max(ld, r.d + 1);
  }
  StratifiedCounts out;
  StratumKey key;
  for (const auto& r : records) {
    key.clear();
    for (auto c : covariate_columns) {
      if (c >= r.v.size()) throw DomainError("covariate column index out of range");
      key.push_back(r.v[c]);
    }
    auto it = out.strata.find(key);
    if (it == out.strata.end()) it = out.strata.emplace(key, JointCounts(lz, ld)).first;
    it->second.add(r.z, r.d, static_cast<int>(r.y));
  }
  return out;
}

/// Stratifies on every covariate carried by the records.
inline StratifiedCounts tabulate(std::span<const Record> records) {
  std::vector<std::size_t> cols;
  if (!records.empty()) {
    for (std::size_t i = 0; i < records.front().v.size(); ++i) cols.push_back(i);
  }
  return tabulate(records, cols);
}

}  // namespace ivf
