#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dtour/error.hpp"

namespace dtour {

/// A non-embedded column used for color encodings and label selection.
struct LabelColumn {
  enum class Kind : std::uint8_t { categorical = 0, continuous = 1 };

  std::string name;
  Kind kind = Kind::categorical;
  std::vector<std::uint16_t> codes;      // categorical: index into dictionary
  std::vector<std::string> dictionary;   // categorical
  std::vector<float> values;             // continuous

  std::size_t size() const { return kind == Kind::categorical ? codes.size() : values.size(); }
  friend bool operator==(const LabelColumn&, const LabelColumn&) = default;
};

/// N x p data, column-major with float storage. Row order is the point
/// identity shared by every projection of the same data.
struct Dataset {
  std::vector<std::vector<float>> columns;
  std::vector<std::string> dim_names;
  std::vector<LabelColumn> labels;

  std::size_t n_rows() const { return columns.empty() ? 0 : columns.front().size(); }
  std::size_t n_dims() const { return columns.size(); }

  const LabelColumn* find_label(const std::string& name) const {
    for (const auto& l : labels) {
      if (l.name == name) return &l;
    }
    return nullptr;
  }

  /// Checks column lengths and name uniqueness.
  void validate() const {
    const std::size_t n = n_rows();
    if (dim_names.size() != columns.size()) {
      throw Error(ErrorCode::SchemaError, "dim_names and columns differ in count");
    }
    for (const auto& c : columns) {
      if (c.size() != n) throw Error(ErrorCode::LengthMismatch, "embedded columns differ in length");
    }
    for (const auto& l : labels) {
      if (l.size() != n) throw Error(ErrorCode::LengthMismatch, "label column '" + l.name + "' length");
    }
    for (std::size_t i = 0; i < dim_names.size(); ++i) {
      for (std::size_t j = i + 1; j < dim_names.size(); ++j) {
        if (dim_names[i] == dim_names[j]) {
          throw Error(ErrorCode::SchemaError, "duplicate dimension name '" + dim_names[i] + "'");
        }
      }
    }
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Builds a Dataset from row-major doubles (test and tooling convenience).
inline Dataset dataset_from_rows(const std::vector<std::vector<double>>& rows) {
  Dataset ds;
  const std::size_t p = rows.empty() ? 0 : rows.front().size();
  ds.columns.assign(p, std::vector<float>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != p) throw Error(ErrorCode::LengthMismatch, "ragged rows");
    for (std::size_t j = 0; j < p; ++j) ds.columns[j][i] = static_cast<float>(rows[i][j]);
  }
  for (std::size_t j = 0; j < p; ++j) ds.dim_names.push_back("d" + std::to_string(j));
  return ds;
}

}  // namespace dtour
