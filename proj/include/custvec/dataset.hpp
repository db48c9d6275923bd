#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "custvec/common.hpp"
#include "custvec/matrix.hpp"
#include "custvec/rng.hpp"

namespace custvec {

// A cell is "missing" until imputation; NaN is the in-memory marker.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) { return std::isnan(v); }

/// Ordered feature columns plus the optional binary target column.
struct FeatureSchema {
  std::vector<std::string> names;
  std::optional<std::string> label_name;

  void validate() const {
    if (names.empty()) throw ValidationError("schema has no feature columns");
    std::set<std::string> seen;
    for (const auto& n : names) {
      if (n.empty()) throw ValidationError("schema has an empty feature name");
      if (!seen.insert(n).second) throw ValidationError("duplicate feature name: " + n);
    }
    if (label_name && seen.count(*label_name)) {
      throw ValidationError("label column '" + *label_name + "' is also a feature");
    }
  }

  std::size_t size() const { return names.size(); }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return i;
    }
    throw ValidationError("unknown column: " + name);
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["features"] = names;
    if (label_name) j["label"] = *label_name;
    return j;
  }

  static FeatureSchema from_json(const nlohmann::json& j) {
    FeatureSchema s;
    if (!j.contains("features") || !j["features"].is_array()) {
      throw ValidationError("schema JSON needs a 'features' array");
    }
    for (const auto& f : j["features"]) s.names.push_back(f.get<std::string>());
    if (j.contains("label") && !j["label"].is_null()) {
      s.label_name = j["label"].get<std::string>();
    }
    s.validate();
    return s;
  }
};

struct CustomerRecord {
  std::string id;
  std::vector<double> features;
  std::optional<int> label;  // 1 = loan-default history
};

struct ColumnStats {
  std::string name;
  double mean = 0.0;
  double std = 1.0;
};

struct Dataset {
  FeatureSchema schema;
  std::vector<CustomerRecord> records;
  bool standardized = false;
  std::vector<ColumnStats> scaler;  // filled once standardized

  std::size_t size() const { return records.size(); }
  std::size_t dims() const { return schema.size(); }

  void check_conformant() const {
    for (const auto& r : records) {
      if (r.features.size() != schema.size()) {
        throw ValidationError("record '" + r.id + "' does not conform to schema");
      }
      if (r.label && *r.label != 0 && *r.label != 1) {
        throw ValidationError("record '" + r.id + "' has non-binary label");
      }
    }
  }
};

struct SplitSet {
  Dataset train;
  Dataset validation;
  Dataset test;
};

namespace detail {

inline std::vector<std::string> split_line(const std::string& line, char delim = ',') {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, delim)) out.push_back(cell);
  if (!line.empty() && line.back() == delim) out.push_back("");
  return out;
}

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline bool is_missing_marker(const std::string& cell) {
  if (cell.empty()) return true;
  if (cell.size() == 2 && (cell[0] == 'N' || cell[0] == 'n') && (cell[1] == 'A' || cell[1] == 'a')) {
    return true;
  }
  return false;
}

}  // namespace detail

/// Read a header-first CSV into a Dataset. Empty cells and `NA` mark missing
/// feature values; the label column, when present, must hold 0/1 or blank.
/// Rows are kept in file order. An `id` column is used when the file has one,
/// otherwise the 0-based row index becomes the id.
inline Dataset load_csv(const std::string& path, const FeatureSchema& schema) {
  schema.validate();
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path);

  std::string header_line;
  if (!std::getline(in, header_line)) throw ValidationError("empty file: " + path);
  std::vector<std::string> header = detail::split_line(header_line);
  for (auto& h : header) h = detail::trim(h);

  std::unordered_map<std::string, std::size_t> col_of;
  for (std::size_t i = 0; i < header.size(); ++i) col_of[header[i]] = i;

  std::vector<std::size_t> feature_cols;
  for (const auto& name : schema.names) {
    auto it = col_of.find(name);
    if (it == col_of.end()) {
      throw ValidationError(path + ": header lacks required column '" + name + "'");
    }
    feature_cols.push_back(it->second);
  }
  std::optional<std::size_t> label_col;
  if (schema.label_name) {
    auto it = col_of.find(*schema.label_name);
    if (it != col_of.end()) label_col = it->second;
  }
  std::optional<std::size_t> id_col;
  if (auto it = col_of.find("id"); it != col_of.end()) id_col = it->second;

  Dataset ds;
  ds.schema = schema;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> cells = detail::split_line(line);
    if (cells.size() != header.size()) {
      throw ValidationError(path + ": row " + std::to_string(row + 1) + " has " +
                            std::to_string(cells.size()) + " cells, header has " +
                            std::to_string(header.size()));
    }
    CustomerRecord rec;
    rec.id = id_col ? detail::trim(cells[*id_col]) : std::to_string(row);
    rec.features.reserve(schema.size());
    for (std::size_t f = 0; f < feature_cols.size(); ++f) {
      const std::string cell = detail::trim(cells[feature_cols[f]]);
      if (detail::is_missing_marker(cell)) {
        rec.features.push_back(kMissing);
      } else {
        try {
          rec.features.push_back(parse_double(cell));
        } catch (const ValidationError&) {
          throw ValidationError(path + ": non-numeric cell '" + cell + "' in column '" +
                                schema.names[f] + "', row " + std::to_string(row + 1));
        }
      }
    }
    if (label_col) {
      const std::string cell = detail::trim(cells[*label_col]);
      if (!detail::is_missing_marker(cell)) {
        double v = parse_double(cell);
        if (v != 0.0 && v != 1.0) {
          throw ValidationError(path + ": label '" + cell + "' outside {0,1}, row " +
                                std::to_string(row + 1));
        }
        rec.label = static_cast<int>(v);
      }
    }
    ds.records.push_back(std::move(rec));
    ++row;
  }
  return ds;
}

inline void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << "id";
  for (const auto& n : ds.schema.names) out << ',' << n;
  if (ds.schema.label_name) out << ',' << *ds.schema.label_name;
  out << '\n';
  for (const auto& r : ds.records) {
    out << r.id;
    for (double v : r.features) {
      out << ',';
      if (!is_missing(v)) out << format_double(v);
    }
    if (ds.schema.label_name) {
      out << ',';
      if (r.label) out << *r.label;
    }
    out << '\n';
  }
}

/// Inner join on exact equality of the key columns. The output schema is the
/// left schema followed by the right schema minus the keys. A left row that
/// matches several right rows takes the per-column mean of the matches, so
/// the result does not depend on right-side row order.
inline Dataset join_on_keys(const Dataset& left, const Dataset& right,
                            const std::vector<std::string>& keys) {
  if (keys.empty()) throw ValidationError("join needs at least one key column");
  std::vector<std::size_t> lkey, rkey;
  for (const auto& k : keys) {
    lkey.push_back(left.schema.index_of(k));
    rkey.push_back(right.schema.index_of(k));
  }
  std::vector<std::size_t> rcarry;  // right columns that survive the join
  for (std::size_t j = 0; j < right.schema.size(); ++j) {
    if (std::find(rkey.begin(), rkey.end(), j) == rkey.end()) rcarry.push_back(j);
  }

  Dataset out;
  out.schema.names = left.schema.names;
  out.schema.label_name = left.schema.label_name;
  for (std::size_t j : rcarry) {
    const std::string& n = right.schema.names[j];
    if (std::find(out.schema.names.begin(), out.schema.names.end(), n) != out.schema.names.end()) {
      throw ValidationError("join would duplicate column '" + n + "'");
    }
    out.schema.names.push_back(n);
  }
  out.schema.validate();

  std::map<std::vector<double>, std::vector<std::size_t>> right_index;
  for (std::size_t i = 0; i < right.records.size(); ++i) {
    std::vector<double> key(keys.size());
    for (std::size_t k = 0; k < keys.size(); ++k) {
      key[k] = right.records[i].features[rkey[k]];
      if (is_missing(key[k])) throw ValidationError("missing key value in right dataset");
    }
    right_index[key].push_back(i);
  }

  for (const auto& lrec : left.records) {
    std::vector<double> key(keys.size());
    for (std::size_t k = 0; k < keys.size(); ++k) {
      key[k] = lrec.features[lkey[k]];
      if (is_missing(key[k])) throw ValidationError("missing key value in left dataset");
    }
    auto it = right_index.find(key);
    if (it == right_index.end()) continue;  // inner join drops unmatched rows

    CustomerRecord merged;
    merged.id = lrec.id;
    merged.label = lrec.label;
    merged.features = lrec.features;
    for (std::size_t j : rcarry) {
      double sum = 0.0;
      std::size_t n = 0;
      for (std::size_t ri : it->second) {
        double v = right.records[ri].features[j];
        if (!is_missing(v)) {
          sum += v;
          ++n;
        }
      }
      merged.features.push_back(n > 0 ? sum / static_cast<double>(n) : kMissing);
    }
    out.records.push_back(std::move(merged));
  }
  return out;
}

/// Replace every missing cell by the mean of the observed values in its
/// column. A column with no observed value at all is an error.
inline Dataset impute_missing(const Dataset& data) {
  Dataset out = data;
  const std::size_t d = data.dims();
  std::vector<double> sum(d, 0.0);
  std::vector<std::size_t> count(d, 0);
  for (const auto& r : data.records) {
    for (std::size_t j = 0; j < d; ++j) {
      if (!is_missing(r.features[j])) {
        sum[j] += r.features[j];
        ++count[j];
      }
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    if (count[j] == 0 && !data.records.empty()) {
      throw ValidationError("column '" + data.schema.names[j] + "' is entirely missing");
    }
  }
  for (auto& r : out.records) {
    for (std::size_t j = 0; j < d; ++j) {
      if (is_missing(r.features[j])) r.features[j] = sum[j] / static_cast<double>(count[j]);
    }
  }
  return out;
}

namespace detail {

// Population (divide-by-n) statistics; a constant column keeps std = 1 so it
// standardizes to all zeros instead of dividing by zero.
inline std::vector<ColumnStats> column_stats(const Dataset& data) {
  const std::size_t d = data.dims();
  const double n = static_cast<double>(data.size());
  std::vector<ColumnStats> stats(d);
  for (std::size_t j = 0; j < d; ++j) stats[j].name = data.schema.names[j];
  if (data.records.empty()) return stats;
  for (const auto& r : data.records) {
    for (std::size_t j = 0; j < d; ++j) {
      if (is_missing(r.features[j])) throw ValidationError("missing cell; impute first");
      stats[j].mean += r.features[j];
    }
  }
  for (std::size_t j = 0; j < d; ++j) stats[j].mean /= n;
  std::vector<double> var(d, 0.0);
  for (const auto& r : data.records) {
    for (std::size_t j = 0; j < d; ++j) {
      double dev = r.features[j] - stats[j].mean;
      var[j] += dev * dev;
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    double s = std::sqrt(var[j] / n);
    stats[j].std = s > 0.0 ? s : 1.0;
  }
  return stats;
}

inline Dataset transform_with(const Dataset& data, const std::vector<ColumnStats>& scaler) {
  if (scaler.size() != data.dims()) {
    throw ValidationError("scaler has " + std::to_string(scaler.size()) + " columns, data has " +
                          std::to_string(data.dims()));
  }
  Dataset out = data;
  for (auto& r : out.records) {
    for (std::size_t j = 0; j < r.features.size(); ++j) {
      if (is_missing(r.features[j])) throw ValidationError("missing cell; impute first");
      r.features[j] = (r.features[j] - scaler[j].mean) / scaler[j].std;
    }
  }
  out.standardized = true;
  out.scaler = scaler;
  return out;
}

}  // namespace detail

/// Shift each feature column to mean 0 and scale to unit population variance.
/// The per-column (mean, std) pairs are kept on the result for reuse on new
/// data. Labels are untouched.
inline Dataset standardize(const Dataset& data) {
  return detail::transform_with(data, detail::column_stats(data));
}

/// Same transform as standardize but with caller-provided statistics (the
/// train-set scaler applied to validation/test/new customers).
inline Dataset apply_scaler(const Dataset& data, const std::vector<ColumnStats>& scaler) {
  return detail::transform_with(data, scaler);
}

inline nlohmann::json scaler_to_json(const std::vector<ColumnStats>& scaler) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : scaler) {
    arr.push_back({{"name", c.name}, {"mean", c.mean}, {"std", c.std}});
  }
  return arr;
}

inline std::vector<ColumnStats> scaler_from_json(const nlohmann::json& arr) {
  if (!arr.is_array()) throw ValidationError("scaler JSON must be an array");
  std::vector<ColumnStats> scaler;
  for (const auto& e : arr) {
    scaler.push_back({e.at("name").get<std::string>(), e.at("mean").get<double>(),
                      e.at("std").get<double>()});
  }
  return scaler;
}

/// Seeded uniform shuffle followed by a contiguous train/validation/test cut.
inline SplitSet split(const Dataset& data, double train_ratio, double validation_ratio,
                      double test_ratio, std::uint64_t seed) {
  if (train_ratio <= 0 || validation_ratio <= 0 || test_ratio <= 0) {
    throw ValidationError("split ratios must be positive");
  }
  if (std::abs(train_ratio + validation_ratio + test_ratio - 1.0) > 1e-9) {
    throw ValidationError("split ratios must sum to 1");
  }
  const std::size_t n = data.size();
  if (n < 3) throw ValidationError("dataset too small to split (need >= 3 records)");

  Rng rng(seed);
  std::vector<std::size_t> order = rng.permutation(n);

  std::size_t n_train = static_cast<std::size_t>(std::llround(train_ratio * static_cast<double>(n)));
  std::size_t n_val = static_cast<std::size_t>(std::llround(validation_ratio * static_cast<double>(n)));
  n_train = std::min(n_train, n);
  n_val = std::min(n_val, n - n_train);

  SplitSet out;
  auto take = [&](std::size_t begin, std::size_t end) {
    Dataset part;
    part.schema = data.schema;
    part.standardized = data.standardized;
    part.scaler = data.scaler;
    for (std::size_t i = begin; i < end; ++i) part.records.push_back(data.records[order[i]]);
    return part;
  };
  out.train = take(0, n_train);
  out.validation = take(n_train, n_train + n_val);
  out.test = take(n_train + n_val, n);
  return out;
}

/// SMOTE oversampling: add interpolated minority rows until both label counts
/// are equal. Each synthetic row is x + u * (nn - x), where nn is one of the
/// k nearest minority neighbors of x and u is uniform in [0, 1]. Originals
/// are never touched. Parent ids of the synthetic rows can be captured via
/// `parentage` for leakage auditing.
inline Dataset smote_augment(const Dataset& data, std::uint64_t seed, int k_neighbors = 5,
                             std::vector<std::pair<std::string, std::string>>* parentage = nullptr) {
  if (!data.standardized) throw ValidationError("smote_augment needs standardized data");
  if (k_neighbors < 1) throw ValidationError("k_neighbors must be >= 1");

  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    if (!data.records[i].label) throw ValidationError("smote_augment needs labeled data");
    (*data.records[i].label == 1 ? pos : neg).push_back(i);
  }
  if (pos.empty() || neg.empty()) throw ValidationError("smote_augment needs both classes present");

  const bool pos_minority = pos.size() < neg.size();
  const std::vector<std::size_t>& minority = pos_minority ? pos : neg;
  const std::size_t need = (pos_minority ? neg.size() : pos.size()) - minority.size();

  Dataset out = data;
  if (need == 0) return out;

  const std::size_t m = minority.size();
  if (m <= static_cast<std::size_t>(k_neighbors)) {
    throw ValidationError("minority count must exceed k_neighbors");
  }
  const int minority_label = pos_minority ? 1 : 0;
  const std::size_t k = static_cast<std::size_t>(k_neighbors);

  // k nearest minority neighbors per minority point, O(m) memory.
  std::vector<std::vector<std::size_t>> neighbors(m);
  std::vector<std::pair<double, std::size_t>> dist_row(m);
  for (std::size_t a = 0; a < m; ++a) {
    const auto& xa = data.records[minority[a]].features;
    for (std::size_t b = 0; b < m; ++b) {
      dist_row[b] = {a == b ? std::numeric_limits<double>::infinity()
                            : squared_distance(xa, data.records[minority[b]].features),
                     b};
    }
    std::partial_sort(dist_row.begin(), dist_row.begin() + static_cast<std::ptrdiff_t>(k),
                      dist_row.end());
    neighbors[a].reserve(k);
    for (std::size_t i = 0; i < k; ++i) neighbors[a].push_back(dist_row[i].second);
  }

  Rng rng(seed);
  std::vector<std::size_t> parent_order = rng.permutation(m);
  out.records.reserve(data.records.size() + need);
  for (std::size_t s = 0; s < need; ++s) {
    std::size_t a = parent_order[s % m];  // round-robin keeps parents evenly used
    const CustomerRecord& parent = data.records[minority[a]];
    const CustomerRecord& nn = data.records[minority[neighbors[a][rng.index(k)]]];
    double u = rng.uniform();
    CustomerRecord synth;
    synth.id = "smote" + std::to_string(s);
    synth.label = minority_label;
    synth.features.resize(data.dims());
    for (std::size_t j = 0; j < data.dims(); ++j) {
      synth.features[j] = parent.features[j] + u * (nn.features[j] - parent.features[j]);
    }
    if (parentage) parentage->emplace_back(synth.id, parent.id);
    out.records.push_back(std::move(synth));
  }
  return out;
}

/// Two unit-variance Gaussian blobs whose class means sit `separation` apart
/// along the all-ones direction; the test/acceptance data generator.
inline Dataset make_synthetic(std::size_t n, std::size_t dims, double positive_fraction,
                              double separation, std::uint64_t seed) {
  if (n < 10) throw ValidationError("make_synthetic needs n >= 10");
  if (dims < 1) throw ValidationError("make_synthetic needs dims >= 1");
  if (positive_fraction <= 0.0 || positive_fraction >= 1.0) {
    throw ValidationError("positive_fraction must lie in (0, 1)");
  }
  if (separation < 0.0) throw ValidationError("separation must be non-negative");

  const std::size_t n_pos =
      static_cast<std::size_t>(std::llround(positive_fraction * static_cast<double>(n)));
  const double shift = separation / std::sqrt(static_cast<double>(dims));

  Dataset ds;
  ds.schema.names.reserve(dims);
  for (std::size_t j = 0; j < dims; ++j) ds.schema.names.push_back("f" + std::to_string(j));
  ds.schema.label_name = "label";

  Rng rng(seed);
  ds.records.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    CustomerRecord& r = ds.records[i];
    const bool positive = i < n_pos;
    r.label = positive ? 1 : 0;
    r.features.resize(dims);
    for (std::size_t j = 0; j < dims; ++j) {
      r.features[j] = rng.normal() + (positive ? shift : 0.0);
    }
  }
  rng.shuffle(ds.records);
  for (std::size_t i = 0; i < n; ++i) ds.records[i].id = std::to_string(i);
  return ds;
}

}  // namespace custvec
