//
// Copyright 2026 Google LLC
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef ARASIM_CSV_H_
#define ARASIM_CSV_H_

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"
#include "arasim/dataset.h"
#include "arasim/format.h"
#include "arasim/status_macros.h"
#include "json.hpp"

namespace arasim {

// Splits one CSV line. Fields may be double-quoted; "" inside quotes is a
// literal quote. Embedded newlines are not supported.
inline std::vector<std::string> SplitCsvLine(std::string_view line,
                                             char delimiter) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delimiter) {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

inline std::optional<double> ParseDouble(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

struct IngestSpec {
  std::string path;
  char delimiter = ',';
  std::string impression_column;
  std::vector<std::string> slice_columns;
  std::vector<std::string> value_columns;
  std::string timestamp_column;
  double train_fraction = 0.5;
};

// Maps a tuple of slice-feature values to a dense slice index, in order of
// first appearance.
class SliceDictionary {
 public:
  SliceDictionary() = default;
  explicit SliceDictionary(std::vector<std::string> feature_names)
      : feature_names_(std::move(feature_names)) {}

  static std::string KeyOf(const std::vector<std::string>& tuple) {
    return absl::StrJoin(tuple, "|");
  }

  size_t IndexOf(const std::vector<std::string>& tuple) {
    auto [it, inserted] = index_.emplace(KeyOf(tuple), tuples_.size());
    if (inserted) tuples_.push_back(tuple);
    return it->second;
  }

  std::optional<size_t> Find(const std::vector<std::string>& tuple) const {
    auto it = index_.find(KeyOf(tuple));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  size_t size() const { return tuples_.size(); }
  const std::vector<std::string>& feature_names() const {
    return feature_names_;
  }
  const std::vector<std::string>& tuple(size_t slice) const {
    return tuples_[slice];
  }

  // {"features": [...], "slices": {"A|x": 0, ...}}
  nlohmann::ordered_json ToJson() const {
    nlohmann::ordered_json slices = nlohmann::ordered_json::object();
    for (size_t i = 0; i < tuples_.size(); ++i) slices[KeyOf(tuples_[i])] = i;
    return {{"features", feature_names_}, {"slices", slices}};
  }

 private:
  std::vector<std::string> feature_names_;
  std::vector<std::vector<std::string>> tuples_;
  std::map<std::string, size_t> index_;
};

struct IngestResult {
  Dataset train;
  Dataset test;
  SliceDictionary dictionary;
  size_t accepted_rows = 0;
  size_t rejected_rows = 0;
  // 1-based data-row numbers (header excluded) that went to each split.
  std::vector<size_t> train_rows;
  std::vector<size_t> test_rows;
};

// Reads an attributed-conversion CSV and splits it by timestamp: accepted
// rows are ordered by timestamp (ties keep file order), the first
// round(train_fraction * n) go to train and the rest to test. Rows whose
// values do not all parse as nonnegative numbers are skipped and counted.
inline absl::StatusOr<IngestResult> IngestCsv(const IngestSpec& spec) {
  if (!(spec.train_fraction > 0 && spec.train_fraction < 1)) {
    return absl::InvalidArgumentError(
        absl::StrCat("train fraction must be in (0, 1), got ",
                     spec.train_fraction));
  }
  std::ifstream in(spec.path);
  if (!in) {
    return absl::NotFoundError(absl::StrCat("cannot open ", spec.path));
  }
  std::string line;
  if (!std::getline(in, line)) {
    return absl::DataLossError(absl::StrCat(spec.path, " has no header row"));
  }
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
    line.erase(0, 3);
  }
  const std::vector<std::string> header = SplitCsvLine(line, spec.delimiter);
  auto column = [&](const std::string& name) -> absl::StatusOr<size_t> {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      return absl::InvalidArgumentError(
          absl::StrCat("column '", name, "' not found in ", spec.path));
    }
    return static_cast<size_t>(it - header.begin());
  };
  ASSIGN_OR_RETURN(const size_t id_col, column(spec.impression_column));
  ASSIGN_OR_RETURN(const size_t ts_col, column(spec.timestamp_column));
  std::vector<size_t> slice_cols;
  for (const std::string& name : spec.slice_columns) {
    ASSIGN_OR_RETURN(size_t c, column(name));
    slice_cols.push_back(c);
  }
  if (spec.value_columns.empty()) {
    return absl::InvalidArgumentError("at least one value column is required");
  }
  std::vector<size_t> value_cols;
  for (const std::string& name : spec.value_columns) {
    ASSIGN_OR_RETURN(size_t c, column(name));
    value_cols.push_back(c);
  }

  struct Row {
    size_t row_number;
    std::string id;
    std::string timestamp;
    std::vector<std::string> slice_tuple;
    std::vector<double> values;
  };
  std::vector<Row> rows;
  IngestResult result;
  result.dictionary = SliceDictionary(spec.slice_columns);
  size_t row_number = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row_number;
    std::vector<std::string> fields = SplitCsvLine(line, spec.delimiter);
    if (fields.size() < header.size() || fields[id_col].empty()) {
      ++result.rejected_rows;
      continue;
    }
    Row row{row_number, fields[id_col], fields[ts_col], {}, {}};
    bool ok = true;
    for (size_t c : value_cols) {
      std::optional<double> v = ParseDouble(fields[c]);
      if (!v || !std::isfinite(*v) || *v < 0) {
        ok = false;
        break;
      }
      row.values.push_back(*v);
    }
    if (!ok) {
      ++result.rejected_rows;
      continue;
    }
    for (size_t c : slice_cols) row.slice_tuple.push_back(fields[c]);
    rows.push_back(std::move(row));
  }
  result.accepted_rows = rows.size();

  bool numeric_time = true;
  std::vector<double> numeric(rows.size());
  for (size_t i = 0; i < rows.size() && numeric_time; ++i) {
    std::optional<double> t = ParseDouble(rows[i].timestamp);
    if (!t) {
      numeric_time = false;
    } else {
      numeric[i] = *t;
    }
  }
  std::vector<size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return numeric_time ? numeric[a] < numeric[b]
                        : rows[a].timestamp < rows[b].timestamp;
  });

  // Slice indices follow file order over train and test together.
  std::vector<size_t> slice_of(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    slice_of[i] = result.dictionary.IndexOf(rows[i].slice_tuple);
  }
  const size_t m = std::max<size_t>(result.dictionary.size(), 1);
  const size_t n_train = static_cast<size_t>(
      std::llround(spec.train_fraction * static_cast<double>(rows.size())));

  std::vector<Record> train, test;
  for (size_t rank = 0; rank < order.size(); ++rank) {
    Row& row = rows[order[rank]];
    Record rec{std::move(row.id), rank, slice_of[order[rank]],
               std::move(row.values)};
    if (rank < n_train) {
      result.train_rows.push_back(row.row_number);
      train.push_back(std::move(rec));
    } else {
      result.test_rows.push_back(row.row_number);
      test.push_back(std::move(rec));
    }
  }
  const size_t d = spec.value_columns.size();
  ASSIGN_OR_RETURN(result.train, Dataset::Create(m, d, std::move(train)));
  ASSIGN_OR_RETURN(result.test, Dataset::Create(m, d, std::move(test)));
  return result;
}

// Writes a dataset in a schema IngestCsv reads back with
// impression_column="impression_id", timestamp_column="timestamp",
// slice_columns={"slice"} and value_columns={"q1", ..., "qd"}.
inline absl::Status WriteDatasetCsv(const Dataset& data,
                                    const std::string& path) {
  std::ofstream out(path);
  if (!out) return absl::PermissionDeniedError(absl::StrCat("cannot write ", path));
  out << "impression_id,timestamp,slice";
  for (size_t l = 1; l <= data.num_queries(); ++l) out << ",q" << l;
  out << "\n";
  for (const Record& r : data.records()) {
    out << r.impression_id << "," << r.arrival_index << "," << r.slice;
    for (double v : r.values) out << "," << FormatDouble(v);
    out << "\n";
  }
  return out ? absl::OkStatus()
             : absl::DataLossError(absl::StrCat("short write to ", path));
}

}  // namespace arasim

#endif  // ARASIM_CSV_H_
