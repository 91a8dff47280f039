#pragma once

// Dataset ingestion and serialization: CSV, the DTC1 columnar binary format,
// and column standardization.

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dtour/dataset.hpp"
#include "dtour/error.hpp"

namespace dtour {

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

/// Quotes a CSV field when it contains a delimiter, quote or line break.
inline std::string csv_quote(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

/// Parses a decimal number; empty and "NA" read as NaN. nullopt on garbage.
inline std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty() || s == "NA") return std::numeric_limits<double>::quiet_NaN();
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec == std::errc::result_out_of_range) return std::numeric_limits<double>::infinity();
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

/// RFC-4180-style record splitter over an in-memory buffer.
class CsvReader {
 public:
  CsvReader(std::string_view text, char delimiter) : text_(text), delim_(delimiter) {}

  /// Reads the next record into `fields`; false at end of input.
  bool next(std::vector<std::string>& fields) {
    fields.clear();
    // Skip blank lines.
    while (pos_ < text_.size() && (text_[pos_] == '\n' || text_[pos_] == '\r')) {
      if (text_[pos_] == '\n') ++line_;
      ++pos_;
    }
    if (pos_ >= text_.size()) return false;
    record_line_ = line_;
    std::string field;
    bool quoted = false;
    while (true) {
      if (pos_ >= text_.size()) {
        if (quoted) {
          throw Error(ErrorCode::ParseError, "line " + std::to_string(record_line_) +
                                                 ": unterminated quoted field");
        }
        fields.push_back(std::move(field));
        return true;
      }
      const char c = text_[pos_++];
      if (quoted) {
        if (c == '"') {
          if (pos_ < text_.size() && text_[pos_] == '"') {
            field.push_back('"');
            ++pos_;
          } else {
            quoted = false;
          }
        } else {
          if (c == '\n') ++line_;
          field.push_back(c);
        }
      } else if (c == '"' && trim(field).empty()) {
        field.clear();
        quoted = true;
      } else if (c == delim_) {
        fields.push_back(std::move(field));
        field.clear();
      } else if (c == '\n') {
        ++line_;
        fields.push_back(std::move(field));
        return true;
      } else if (c != '\r') {
        field.push_back(c);
      }
    }
  }

  std::size_t record_line() const noexcept { return record_line_; }

 private:
  std::string_view text_;
  char delim_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t record_line_ = 1;
};

}  // namespace detail

struct CsvOptions {
  char delimiter = ',';
  bool header = true;
  std::vector<std::string> embed_columns;   // empty: every non-label column
  std::vector<std::string> label_columns;
  std::vector<std::string> categorical;     // label columns forced categorical
};

/// Loads a CSV file. Rows whose embedded values are not finite are dropped
/// (reported through `diag`); row order is otherwise preserved.
inline Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options = {},
                        Diagnostics* diag = nullptr) {
  const std::string text = detail::read_file(path);
  detail::CsvReader reader(text, options.delimiter);
  std::vector<std::string> fields;

  std::vector<std::string> names;
  if (!reader.next(fields)) throw Error(ErrorCode::EmptyDataset, "'" + path.string() + "' is empty");
  bool pending_first_row = false;
  if (options.header) {
    for (auto& f : fields) names.emplace_back(detail::trim(f));
  } else {
    for (std::size_t i = 0; i < fields.size(); ++i) names.push_back("c" + std::to_string(i));
    pending_first_row = true;
  }
  const std::size_t width = names.size();
  auto index_of = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw Error(ErrorCode::MissingColumn, "no column named '" + name + "'");
    return static_cast<std::size_t>(it - names.begin());
  };

  std::vector<std::size_t> label_idx;
  for (const auto& n : options.label_columns) label_idx.push_back(index_of(n));
  std::vector<std::size_t> embed_idx;
  if (options.embed_columns.empty()) {
    for (std::size_t i = 0; i < width; ++i) {
      if (std::find(label_idx.begin(), label_idx.end(), i) == label_idx.end()) embed_idx.push_back(i);
    }
  } else {
    for (const auto& n : options.embed_columns) embed_idx.push_back(index_of(n));
  }

  Dataset ds;
  for (std::size_t i : embed_idx) ds.dim_names.push_back(names[i]);
  ds.columns.resize(embed_idx.size());
  std::vector<std::vector<std::string>> raw_labels(label_idx.size());
  std::size_t dropped = 0;

  auto consume = [&](const std::vector<std::string>& row) {
    if (row.size() != width) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(reader.record_line()) +
                                             ": expected " + std::to_string(width) +
                                             " fields, found " + std::to_string(row.size()));
    }
    bool finite = true;
    std::vector<float> values(embed_idx.size());
    for (std::size_t j = 0; j < embed_idx.size(); ++j) {
      const auto v = detail::parse_number(row[embed_idx[j]]);
      if (!v) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(reader.record_line()) +
                                               ", column " + std::to_string(embed_idx[j] + 1) +
                                               ": not a number: '" + row[embed_idx[j]] + "'");
      }
      values[j] = static_cast<float>(*v);
      finite = finite && std::isfinite(values[j]);
    }
    if (!finite) {
      ++dropped;
      return;
    }
    for (std::size_t j = 0; j < values.size(); ++j) ds.columns[j].push_back(values[j]);
    for (std::size_t j = 0; j < label_idx.size(); ++j) raw_labels[j].push_back(row[label_idx[j]]);
  };

  if (pending_first_row) consume(fields);
  while (reader.next(fields)) consume(fields);

  if (dropped > 0) {
    warn(diag, "dropped " + std::to_string(dropped) + " row(s) with non-finite values");
  }
  if (ds.columns.empty() || ds.columns.front().empty()) {
    throw Error(ErrorCode::EmptyDataset, "'" + path.string() + "' has no usable rows");
  }

  for (std::size_t j = 0; j < label_idx.size(); ++j) {
    LabelColumn col;
    col.name = names[label_idx[j]];
    const bool forced = std::find(options.categorical.begin(), options.categorical.end(),
                                  col.name) != options.categorical.end();
    bool numeric = !forced;
    if (numeric) {
      col.values.reserve(raw_labels[j].size());
      for (const auto& s : raw_labels[j]) {
        const auto v = detail::parse_number(s);
        if (!v || !std::isfinite(*v)) {
          numeric = false;
          break;
        }
        col.values.push_back(static_cast<float>(*v));
      }
    }
    if (numeric) {
      col.kind = LabelColumn::Kind::continuous;
    } else {
      col.kind = LabelColumn::Kind::categorical;
      col.values.clear();
      std::unordered_map<std::string, std::uint16_t> codes;
      for (const auto& s : raw_labels[j]) {
        std::string key(detail::trim(s));
        auto it = codes.find(key);
        if (it == codes.end()) {
          if (col.dictionary.size() >= std::numeric_limits<std::uint16_t>::max()) {
            throw Error(ErrorCode::ParseError, "label column '" + col.name + "' has too many categories");
          }
          it = codes.emplace(key, static_cast<std::uint16_t>(col.dictionary.size())).first;
          col.dictionary.push_back(key);
        }
        col.codes.push_back(it->second);
      }
    }
    ds.labels.push_back(std::move(col));
  }
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// DTC1 columnar format
//
//   "DTC1" | u32 version | u32 N | u32 p | u32 label_block_bytes
//   p blocks of N float32
//   label block: per column u32 name_len, name, u8 kind, then
//     kind 0 (categorical): N u16 codes, u32 dict_count, dict_count x (u32 len, bytes)
//     kind 1 (continuous):  N float32
//   optional trailer: u32 names_bytes, p x (u32 len, bytes) dimension names
//
// All integers and floats little-endian.

inline constexpr std::uint32_t kColumnarVersion = 1;

namespace detail {

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  } else {
    return v;
  }
}

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    v = to_little(v);
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof(T));
  }
  void put_string(std::string_view s) {
    put(static_cast<std::uint32_t>(s.size()));
    buf_.append(s.data(), s.size());
  }
  template <typename T>
  void put_array(const std::vector<T>& values) {
    if constexpr (std::endian::native == std::endian::little) {
      buf_.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(T));
    } else {
      for (T v : values) put(v);
    }
  }
  std::string& bytes() { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(std::string_view bytes, ErrorCode short_read) : bytes_(bytes), short_read_(short_read) {}

  template <typename T>
  T get() {
    require(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return to_little(v);
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    require(n);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  template <typename T>
  std::vector<T> get_array(std::size_t count) {
    if (count > (bytes_.size() - pos_) / sizeof(T)) fail();
    std::vector<T> out(count);
    if (count == 0) return out;
    std::memcpy(out.data(), bytes_.data() + pos_, count * sizeof(T));
    pos_ += count * sizeof(T);
    if constexpr (std::endian::native == std::endian::big) {
      for (T& v : out) v = to_little(v);
    }
    return out;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  void require(std::size_t n) {
    if (n > bytes_.size() - pos_) fail();
  }
  [[noreturn]] void fail() const {
    throw Error(short_read_, "unexpected end of data at byte " + std::to_string(pos_));
  }

  std::string_view bytes_;
  ErrorCode short_read_;
  std::size_t pos_ = 0;
};

inline std::string encode_label_block(const Dataset& ds) {
  ByteWriter w;
  for (const auto& l : ds.labels) {
    w.put_string(l.name);
    w.put(static_cast<std::uint8_t>(l.kind));
    if (l.kind == LabelColumn::Kind::categorical) {
      w.put_array(l.codes);
      w.put(static_cast<std::uint32_t>(l.dictionary.size()));
      for (const auto& d : l.dictionary) w.put_string(d);
    } else {
      w.put_array(l.values);
    }
  }
  return std::move(w.bytes());
}

}  // namespace detail

/// Serializes a dataset to DTC1 bytes.
inline std::string encode_columnar(const Dataset& ds) {
  ds.validate();
  const std::size_t n = ds.n_rows();
  if (n > std::numeric_limits<std::uint32_t>::max() || ds.n_dims() > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorCode::InvalidArgument, "dataset too large for DTC1");
  }
  const std::string labels = detail::encode_label_block(ds);
  detail::ByteWriter w;
  w.bytes().append("DTC1", 4);
  w.put(kColumnarVersion);
  w.put(static_cast<std::uint32_t>(n));
  w.put(static_cast<std::uint32_t>(ds.n_dims()));
  w.put(static_cast<std::uint32_t>(labels.size()));
  for (const auto& c : ds.columns) w.put_array(c);
  w.bytes() += labels;
  detail::ByteWriter names;
  for (const auto& name : ds.dim_names) names.put_string(name);
  w.put(static_cast<std::uint32_t>(names.bytes().size()));
  w.bytes() += names.bytes();
  return std::move(w.bytes());
}

/// Parses DTC1 bytes. Throws BadMagic, VersionUnsupported, TruncatedFile or
/// EmptyDataset; never returns a partial dataset.
inline Dataset decode_columnar(std::string_view bytes) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != "DTC1") {
    throw Error(ErrorCode::BadMagic, "not a DTC1 file");
  }
  detail::ByteReader r(bytes.substr(4), ErrorCode::TruncatedFile);
  const auto version = r.get<std::uint32_t>();
  if (version != kColumnarVersion) {
    throw Error(ErrorCode::VersionUnsupported, "DTC1 version " + std::to_string(version));
  }
  const auto n = r.get<std::uint32_t>();
  const auto p = r.get<std::uint32_t>();
  const auto label_bytes = r.get<std::uint32_t>();
  if (n == 0) throw Error(ErrorCode::EmptyDataset, "DTC1 file has no rows");

  Dataset ds;
  ds.columns.reserve(p);
  for (std::uint32_t j = 0; j < p; ++j) ds.columns.push_back(r.get_array<float>(n));

  const std::size_t label_start = r.position();
  while (r.position() - label_start < label_bytes) {
    LabelColumn col;
    col.name = r.get_string();
    const auto kind = r.get<std::uint8_t>();
    if (kind == 0) {
      col.kind = LabelColumn::Kind::categorical;
      col.codes = r.get_array<std::uint16_t>(n);
      const auto count = r.get<std::uint32_t>();
      for (std::uint32_t i = 0; i < count; ++i) col.dictionary.push_back(r.get_string());
    } else if (kind == 1) {
      col.kind = LabelColumn::Kind::continuous;
      col.values = r.get_array<float>(n);
    } else {
      throw Error(ErrorCode::SchemaError, "unknown label kind " + std::to_string(kind));
    }
    ds.labels.push_back(std::move(col));
  }
  if (r.position() - label_start != label_bytes) {
    throw Error(ErrorCode::SchemaError, "label block length mismatch");
  }
  if (r.remaining() > 0) {
    const auto names_bytes = r.get<std::uint32_t>();
    const std::size_t names_start = r.position();
    for (std::uint32_t j = 0; j < p; ++j) ds.dim_names.push_back(r.get_string());
    if (r.position() - names_start != names_bytes) {
      throw Error(ErrorCode::SchemaError, "names block length mismatch");
    }
  } else {
    for (std::uint32_t j = 0; j < p; ++j) ds.dim_names.push_back("d" + std::to_string(j));
  }
  ds.validate();
  return ds;
}

inline void save_columnar(const Dataset& ds, const std::filesystem::path& path) {
  const std::string bytes = encode_columnar(ds);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed for '" + path.string() + "'");
}

inline Dataset load_columnar(const std::filesystem::path& path) {
  return decode_columnar(detail::read_file(path));
}

/// Loads .dtc1 files as columnar and everything else as CSV.
inline Dataset load_dataset(const std::filesystem::path& path, const CsvOptions& options = {},
                            Diagnostics* diag = nullptr) {
  if (path.extension() == ".dtc1") return load_columnar(path);
  return load_csv(path, options, diag);
}

// ---------------------------------------------------------------------------
// Standardization

enum class StandardizeMode { none, zscore, unit_range };

inline std::string_view to_string(StandardizeMode m) {
  switch (m) {
    case StandardizeMode::none: return "none";
    case StandardizeMode::zscore: return "zscore";
    case StandardizeMode::unit_range: return "unit_range";
  }
  return "none";
}

inline StandardizeMode parse_standardize_mode(std::string_view s) {
  if (s == "none" || s.empty()) return StandardizeMode::none;
  if (s == "zscore") return StandardizeMode::zscore;
  if (s == "unit_range") return StandardizeMode::unit_range;
  throw Error(ErrorCode::InvalidArgument, "unknown standardize mode '" + std::string(s) + "'");
}

/// Per-column affine map x' = (x - offset) / scale; scale 0 zeroes the column.
struct StandardizeTransform {
  StandardizeMode mode = StandardizeMode::none;
  std::vector<double> offset;
  std::vector<double> scale;

  Dataset apply(const Dataset& ds) const {
    if (ds.n_dims() != offset.size()) {
      throw Error(ErrorCode::DimensionMismatch, "transform fitted on a different column count");
    }
    Dataset out = ds;
    for (std::size_t j = 0; j < ds.n_dims(); ++j) {
      for (float& v : out.columns[j]) {
        v = scale[j] == 0.0 ? 0.0f : static_cast<float>((static_cast<double>(v) - offset[j]) / scale[j]);
      }
    }
    return out;
  }

  /// Maps a standardized value of column j back to data units.
  double invert(std::size_t j, double v) const { return v * scale[j] + offset[j]; }
};

inline StandardizeTransform fit_standardize(const Dataset& ds, StandardizeMode mode,
                                            Diagnostics* diag = nullptr) {
  StandardizeTransform t;
  t.mode = mode;
  const std::size_t p = ds.n_dims();
  t.offset.assign(p, 0.0);
  t.scale.assign(p, 1.0);
  if (mode == StandardizeMode::none) return t;
  for (std::size_t j = 0; j < p; ++j) {
    const auto& col = ds.columns[j];
    if (mode == StandardizeMode::zscore) {
      double mean = 0.0;
      for (float v : col) mean += v;
      mean /= static_cast<double>(col.size());
      double ss = 0.0;
      for (float v : col) ss += (v - mean) * (v - mean);
      const double sd = std::sqrt(ss / static_cast<double>(col.size()));
      t.offset[j] = mean;
      t.scale[j] = sd;
    } else {
      const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
      t.offset[j] = *lo;
      t.scale[j] = static_cast<double>(*hi) - static_cast<double>(*lo);
    }
    if (t.scale[j] < 1e-12) {
      t.scale[j] = 0.0;
      warn(diag, "column '" + ds.dim_names[j] + "' is constant and was zeroed");
    }
  }
  return t;
}

struct Standardized {
  Dataset data;
  StandardizeTransform transform;
};

inline Standardized standardize(const Dataset& ds, StandardizeMode mode, Diagnostics* diag = nullptr) {
  StandardizeTransform t = fit_standardize(ds, mode, diag);
  Dataset out = t.apply(ds);
  return {std::move(out), std::move(t)};
}

}  // namespace dtour
