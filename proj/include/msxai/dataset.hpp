#pragma once

#include <span>
#include <string>
#include <vector>

#include "msxai/error.hpp"
#include "msxai/label.hpp"

namespace msxai {

using Row = std::vector<double>;
using Matrix = std::vector<Row>;

/// Labeled tabular data: one row per sample, columns named by feature.
struct Dataset {
  std::vector<std::string> feature_names;
  std::vector<std::string> sample_ids;
  Matrix rows;
  std::vector<Label> labels;

  std::size_t size() const { return rows.size(); }
  std::size_t n_features() const { return feature_names.size(); }

  void validate() const {
    if (rows.size() != labels.size() || rows.size() != sample_ids.size())
      throw Error(Errc::LengthMismatch, "rows/labels/sample_ids");
    for (const auto& r : rows)
      if (r.size() != feature_names.size()) throw Error(Errc::ArityMismatch, "row width");
  }

  Dataset subset(std::span<const std::size_t> idx) const {
    Dataset d;
    d.feature_names = feature_names;
    for (auto i : idx) {
      d.sample_ids.push_back(sample_ids[i]);
      d.rows.push_back(rows[i]);
      d.labels.push_back(labels[i]);
    }
    return d;
  }
};

inline std::size_t count_label(std::span<const Label> y, Label l) {
  std::size_t n = 0;
  for (auto v : y) n += v == l;
  return n;
}

}  // namespace msxai
