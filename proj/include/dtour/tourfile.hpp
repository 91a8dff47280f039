#pragma once

// JSON tour files: any sequence of p x 2 orthonormal frames plus metadata.

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtour/dataio.hpp"
#include "dtour/error.hpp"
#include "dtour/geometry.hpp"
#include "dtour/tourpath.hpp"

namespace dtour {

inline constexpr int kTourFileVersion = 1;
/// Frames drifting less than this are accepted verbatim.
inline constexpr double kExactDrift = 1e-12;
/// Frames drifting up to this are re-orthonormalized on load; beyond it they are rejected.
inline constexpr double kRepairableDrift = 1e-6;

struct TourFile {
  int version = kTourFileVersion;
  std::size_t dims = 0;
  std::vector<std::string> dim_names;
  std::string strategy;
  bool cyclic = true;
  BlendMode blend = BlendMode::orthonormal;
  StandardizeMode standardize = StandardizeMode::none;
  std::string data;  // optional path of the derived dataset the tour projects
  std::vector<Keyframe> keyframes;

  KeyframeSequence sequence() const { return {keyframes, cyclic, blend}; }

  static TourFile from_sequence(const KeyframeSequence& seq, std::vector<std::string> dim_names,
                                std::string strategy) {
    TourFile tf;
    tf.dims = seq.dims();
    tf.dim_names = std::move(dim_names);
    tf.strategy = std::move(strategy);
    tf.cyclic = seq.cyclic;
    tf.blend = seq.blend;
    tf.keyframes = seq.keyframes;
    return tf;
  }
};

/// Per-keyframe orthonormality drift observed while reading a tour file.
struct KeyframeDrift {
  std::size_t index = 0;
  double drift = 0.0;
  bool repaired = false;
  bool rejected = false;
};

struct TourLoadReport {
  std::vector<KeyframeDrift> keyframes;

  bool clean() const {
    for (const auto& k : keyframes) {
      if (k.rejected) return false;
    }
    return true;
  }
};

namespace detail {

using nlohmann::json;

inline std::string blend_name(BlendMode b) { return b == BlendMode::affine ? "affine" : "orthonormal"; }

inline json tour_to_json(const TourFile& tf) {
  json j;
  j["version"] = tf.version;
  j["dims"] = tf.dims;
  j["dim_names"] = tf.dim_names;
  j["strategy"] = tf.strategy;
  j["cyclic"] = tf.cyclic;
  j["blend"] = blend_name(tf.blend);
  j["standardize"] = std::string(to_string(tf.standardize));
  if (!tf.data.empty()) j["data"] = tf.data;
  json frames = json::array();
  for (const auto& kf : tf.keyframes) {
    json rows = json::array();
    for (std::size_t r = 0; r < kf.basis.dims(); ++r) rows.push_back({kf.basis(r, 0), kf.basis(r, 1)});
    json loadings = json::array();
    for (const auto& l : kf.loadings) loadings.push_back({l.dim, l.weight});
    frames.push_back({{"basis", rows}, {"label", kf.label}, {"loadings", loadings}});
  }
  j["keyframes"] = frames;
  return j;
}

[[noreturn]] inline void schema_error(const std::string& what) {
  throw Error(ErrorCode::SchemaError, what);
}

template <typename T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) schema_error(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    schema_error(std::string("field '") + key + "' has the wrong type");
  }
}

/// Reads keyframes, applying the drift policy. Rejected frames are recorded
/// in the report and skipped; the caller decides whether that is fatal.
inline TourFile tour_from_json(const json& j, TourLoadReport& report) {
  if (!j.is_object()) schema_error("tour file must be a JSON object");
  TourFile tf;
  tf.version = field<int>(j, "version");
  if (tf.version != kTourFileVersion) schema_error("unsupported tour file version " + std::to_string(tf.version));
  tf.dims = field<std::size_t>(j, "dims");
  tf.dim_names = field<std::vector<std::string>>(j, "dim_names");
  tf.strategy = field<std::string>(j, "strategy");
  tf.cyclic = field<bool>(j, "cyclic");
  if (j.contains("blend")) {
    const auto b = field<std::string>(j, "blend");
    if (b == "affine") tf.blend = BlendMode::affine;
    else if (b == "orthonormal") tf.blend = BlendMode::orthonormal;
    else schema_error("unknown blend '" + b + "'");
  }
  if (j.contains("standardize")) {
    try {
      tf.standardize = parse_standardize_mode(field<std::string>(j, "standardize"));
    } catch (const Error& e) {
      schema_error(e.what());
    }
  }
  if (j.contains("data")) tf.data = field<std::string>(j, "data");
  if (tf.dims < 2) schema_error("dims must be >= 2");
  if (!tf.dim_names.empty() && tf.dim_names.size() != tf.dims) schema_error("dim_names length != dims");

  if (!j.contains("keyframes") || !j["keyframes"].is_array()) schema_error("missing keyframes array");
  const json& frames = j["keyframes"];
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const json& f = frames[i];
    if (!f.is_object()) schema_error("keyframe " + std::to_string(i) + " is not an object");
    const auto rows = field<std::vector<std::vector<double>>>(f, "basis");
    if (rows.size() != tf.dims) {
      schema_error("keyframe " + std::to_string(i) + " basis has " + std::to_string(rows.size()) +
                   " rows, expected " + std::to_string(tf.dims));
    }
    PlaneMatrix m(tf.dims);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != 2) schema_error("keyframe " + std::to_string(i) + " basis row is not a pair");
      m(r, 0) = rows[r][0];
      m(r, 1) = rows[r][1];
    }
    KeyframeDrift d{i, orthonormality_error(m), false, false};
    if (!std::isfinite(d.drift) || d.drift > kRepairableDrift) {
      d.rejected = true;
      report.keyframes.push_back(d);
      continue;
    }
    Keyframe kf{d.drift <= kExactDrift ? Basis::from_orthonormal(std::move(m), kExactDrift)
                                       : gram_schmidt(m),
                f.contains("label") ? field<std::string>(f, "label") : std::string(), {}};
    d.repaired = d.drift > kExactDrift;
    report.keyframes.push_back(d);
    if (f.contains("loadings")) {
      for (const auto& pair : field<std::vector<std::pair<std::size_t, double>>>(f, "loadings")) {
        if (pair.first >= tf.dims) schema_error("keyframe " + std::to_string(i) + " loading index out of range");
        kf.loadings.push_back({pair.first, pair.second});
      }
    }
    tf.keyframes.push_back(std::move(kf));
  }
  return tf;
}

}  // namespace detail

inline std::string encode_tour(const TourFile& tf) { return detail::tour_to_json(tf).dump(2) + "\n"; }

inline void save_tour(const TourFile& tf, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  out << encode_tour(tf);
  if (!out) throw Error(ErrorCode::IoError, "write failed for '" + path.string() + "'");
}

/// Parses a tour file without throwing on orthonormality problems; the report
/// lists every keyframe's drift. Schema problems still throw SchemaError.
inline TourFile inspect_tour_text(const std::string& text, TourLoadReport& report) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("invalid JSON: ") + e.what());
  }
  return detail::tour_from_json(j, report);
}

/// Parses a tour file. Frames with drift <= 1e-6 are re-orthonormalized;
/// larger drift throws OrthonormalityViolation naming the keyframe.
inline TourFile decode_tour(const std::string& text, TourLoadReport* report = nullptr) {
  TourLoadReport local;
  TourLoadReport& rep = report != nullptr ? *report : local;
  TourFile tf = inspect_tour_text(text, rep);
  for (const auto& k : rep.keyframes) {
    if (k.rejected) {
      throw Error(ErrorCode::OrthonormalityViolation,
                  "keyframe " + std::to_string(k.index) + " drift " + std::to_string(k.drift));
    }
  }
  return tf;
}

inline TourFile load_tour(const std::filesystem::path& path, TourLoadReport* report = nullptr) {
  return decode_tour(detail::read_file(path), report);
}

}  // namespace dtour
