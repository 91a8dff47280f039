#pragma once

// The interactive core: projection of the data through a basis, selections,
// color encodings, the session state machine, previews and snapshots.

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "dtour/dataio.hpp"
#include "dtour/dataset.hpp"
#include "dtour/error.hpp"
#include "dtour/geometry.hpp"
#include "dtour/manual.hpp"
#include "dtour/strategies.hpp"
#include "dtour/tourpath.hpp"

namespace dtour {

// ---------------------------------------------------------------------------
// Projection

struct Projection {
  std::vector<float> xy;  // interleaved x0, y0, x1, y1, ...
  Basis basis_used;
  std::array<float, 4> bounds{0, 0, 0, 0};  // min_x, min_y, max_x, max_y

  std::size_t size() const { return xy.size() / 2; }
  float x(std::size_t i) const { return xy[2 * i]; }
  float y(std::size_t i) const { return xy[2 * i + 1]; }
};

struct ProjectOptions {
  std::size_t chunk_rows = 16384;
  unsigned threads = 0;  // 0: hardware concurrency
  std::array<double, 2> gain{1.0, 1.0};
};

namespace detail {

inline void compute_bounds(Projection& out) {
  if (out.xy.empty()) {
    out.bounds = {0, 0, 0, 0};
    return;
  }
  float lo_x = std::numeric_limits<float>::infinity(), lo_y = lo_x;
  float hi_x = -lo_x, hi_y = -lo_x;
  for (std::size_t i = 0; i < out.xy.size(); i += 2) {
    lo_x = std::min(lo_x, out.xy[i]);
    hi_x = std::max(hi_x, out.xy[i]);
    lo_y = std::min(lo_y, out.xy[i + 1]);
    hi_y = std::max(hi_y, out.xy[i + 1]);
  }
  out.bounds = {lo_x, lo_y, hi_x, hi_y};
}

/// Rows [begin, end) of the projection. Each output is accumulated in double
/// over columns in index order, so the result does not depend on chunking.
inline void project_rows(const Dataset& ds, const std::vector<double>& b0, const std::vector<double>& b1,
                         std::size_t begin, std::size_t end, float* xy) {
  constexpr std::size_t kTile = 1024;
  double acc_x[kTile];
  double acc_y[kTile];
  const std::size_t p = ds.n_dims();
  for (std::size_t t0 = begin; t0 < end; t0 += kTile) {
    const std::size_t rows = std::min(kTile, end - t0);
    std::fill_n(acc_x, rows, 0.0);
    std::fill_n(acc_y, rows, 0.0);
    for (std::size_t j = 0; j < p; ++j) {
      const float* col = ds.columns[j].data() + t0;
      const double wx = b0[j], wy = b1[j];
      for (std::size_t i = 0; i < rows; ++i) {
        const double v = col[i];
        acc_x[i] += v * wx;
        acc_y[i] += v * wy;
      }
    }
    float* dst = xy + 2 * t0;
    for (std::size_t i = 0; i < rows; ++i) {
      dst[2 * i] = static_cast<float>(acc_x[i]);
      dst[2 * i + 1] = static_cast<float>(acc_y[i]);
    }
  }
}

}  // namespace detail

/// xy_i = (row_i . col0, row_i . col1) scaled by the per-axis gain, computed
/// in parallel row chunks. Output is bit-identical for any chunk size and
/// thread count.
inline Projection project(const Dataset& ds, const Basis& basis, const ProjectOptions& opt = {}) {
  if (ds.n_dims() != basis.dims()) {
    throw Error(ErrorCode::DimensionMismatch, "data has " + std::to_string(ds.n_dims()) +
                                                  " dimensions, basis has " + std::to_string(basis.dims()));
  }
  const std::size_t n = ds.n_rows(), p = ds.n_dims();
  std::vector<double> b0(p), b1(p);
  for (std::size_t j = 0; j < p; ++j) {
    b0[j] = basis(j, 0) * opt.gain[0];
    b1[j] = basis(j, 1) * opt.gain[1];
  }
  Projection out{std::vector<float>(2 * n), basis, {}};
  const std::size_t chunk = std::max<std::size_t>(1, opt.chunk_rows);
  const std::size_t chunks = (n + chunk - 1) / chunk;
  unsigned threads = opt.threads != 0 ? opt.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, chunks));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c = next++; c < chunks; c = next++) {
      detail::project_rows(ds, b0, b1, c * chunk, std::min(n, (c + 1) * chunk), out.xy.data());
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads - 1);
    for (unsigned i = 1; i < threads; ++i) pool.emplace_back(worker);
    worker();
  }
  detail::compute_bounds(out);
  return out;
}

// ---------------------------------------------------------------------------
// Selection

enum class Combine { replace, add, subtract };

inline Combine parse_combine(std::string_view s) {
  if (s == "replace") return Combine::replace;
  if (s == "add") return Combine::add;
  if (s == "subtract") return Combine::subtract;
  throw Error(ErrorCode::InvalidArgument, "unknown combine mode '" + std::string(s) + "'");
}

inline std::string_view to_string(Combine c) {
  switch (c) {
    case Combine::replace: return "replace";
    case Combine::add: return "add";
    case Combine::subtract: return "subtract";
  }
  return "replace";
}

/// Index-based selection bitmask; survives every change of view.
class Selection {
 public:
  Selection() = default;
  explicit Selection(std::size_t n) : n_(n), words_((n + 63) / 64, 0) {}

  std::size_t size() const noexcept { return n_; }
  const std::vector<std::uint64_t>& words() const noexcept { return words_; }
  std::vector<std::uint64_t>& words() noexcept { return words_; }

  bool test(std::size_t i) const { return (words_[i / 64] >> (i % 64)) & 1u; }
  void set(std::size_t i, bool v) {
    const std::uint64_t bit = std::uint64_t{1} << (i % 64);
    if (v) words_[i / 64] |= bit;
    else words_[i / 64] &= ~bit;
  }
  std::size_t count() const {
    std::size_t c = 0;
    for (auto w : words_) c += static_cast<std::size_t>(std::popcount(w));
    return c;
  }

  /// Merges a freshly computed mask into this one.
  void combine(const Selection& mask, Combine mode) {
    if (mask.n_ != n_) throw Error(ErrorCode::LengthMismatch, "selection sizes differ");
    for (std::size_t w = 0; w < words_.size(); ++w) {
      switch (mode) {
        case Combine::replace: words_[w] = mask.words_[w]; break;
        case Combine::add: words_[w] |= mask.words_[w]; break;
        case Combine::subtract: words_[w] &= ~mask.words_[w]; break;
      }
    }
  }

  friend bool operator==(const Selection&, const Selection&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Even-odd point-in-polygon test.
inline bool point_in_polygon(std::span<const Point2> poly, double x, double y) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Point2& a = poly[i];
    const Point2& b = poly[j];
    if ((a.y > y) != (b.y > y)) {
      const double cross = (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x;
      if (x < cross) inside = !inside;
    }
  }
  return inside;
}

/// Points of the projection inside the polygon (even-odd rule).
inline Selection lasso_mask(std::span<const Point2> polygon, const Projection& projection) {
  if (polygon.size() < 3) throw Error(ErrorCode::BadPolygon, "a lasso needs at least 3 vertices");
  for (const auto& v : polygon) {
    if (!std::isfinite(v.x) || !std::isfinite(v.y)) throw Error(ErrorCode::BadPolygon, "non-finite vertex");
  }
  Selection mask(projection.size());
  for (std::size_t i = 0; i < projection.size(); ++i) {
    if (point_in_polygon(polygon, projection.x(i), projection.y(i))) mask.set(i, true);
  }
  return mask;
}

inline void lasso_select(Selection& selection, std::span<const Point2> polygon, const Projection& projection,
                         Combine combine = Combine::replace) {
  selection.combine(lasso_mask(polygon, projection), combine);
}

/// Rows whose categorical label is one of `values`.
inline Selection label_mask(const Dataset& ds, const std::string& column, const std::vector<std::string>& values,
                            Diagnostics* diag = nullptr) {
  const LabelColumn* label = ds.find_label(column);
  if (label == nullptr) throw Error(ErrorCode::MissingColumn, "no label column '" + column + "'");
  if (label->kind != LabelColumn::Kind::categorical) {
    throw Error(ErrorCode::InvalidArgument, "label column '" + column + "' is not categorical");
  }
  std::vector<bool> wanted(label->dictionary.size(), false);
  for (const auto& v : values) {
    const auto it = std::find(label->dictionary.begin(), label->dictionary.end(), v);
    if (it == label->dictionary.end()) {
      warn(diag, "label '" + v + "' does not occur in column '" + column + "'");
      continue;
    }
    wanted[static_cast<std::size_t>(it - label->dictionary.begin())] = true;
  }
  Selection mask(ds.n_rows());
  for (std::size_t i = 0; i < label->codes.size(); ++i) {
    if (wanted[label->codes[i]]) mask.set(i, true);
  }
  return mask;
}

inline void label_select(Selection& selection, const Dataset& ds, const std::string& column,
                         const std::vector<std::string>& values, Combine combine = Combine::replace,
                         Diagnostics* diag = nullptr) {
  selection.combine(label_mask(ds, column, values, diag), combine);
}

// ---------------------------------------------------------------------------
// Color encodings

struct ColorEncoding {
  enum class Kind { none, categorical, continuous, twod };
  Kind kind = Kind::none;
  std::string column;                 // categorical / continuous
  std::optional<double> min, max;     // continuous; default to the data range
  std::size_t reference_keyframe = 0;  // twod
};

inline std::string_view to_string(ColorEncoding::Kind k) {
  switch (k) {
    case ColorEncoding::Kind::none: return "none";
    case ColorEncoding::Kind::categorical: return "categorical";
    case ColorEncoding::Kind::continuous: return "continuous";
    case ColorEncoding::Kind::twod: return "twod";
  }
  return "none";
}

inline ColorEncoding::Kind parse_encoding_kind(std::string_view s) {
  if (s == "none") return ColorEncoding::Kind::none;
  if (s == "categorical") return ColorEncoding::Kind::categorical;
  if (s == "continuous") return ColorEncoding::Kind::continuous;
  if (s == "twod") return ColorEncoding::Kind::twod;
  throw Error(ErrorCode::InvalidArgument, "unknown encoding '" + std::string(s) + "'");
}

/// Twelve-entry qualitative palette, 0xRRGGBB.
inline constexpr std::array<std::uint32_t, 12> kCategoricalPalette{
    0x4e79a7, 0xf28e2b, 0xe15759, 0x76b7b2, 0x59a14f, 0xedc948,
    0xb07aa1, 0xff9da7, 0x9c755f, 0xbab0ac, 0x17becf, 0xbcbd22};

inline constexpr std::uint32_t kNeutralColor = 0x8c8c8c;

namespace detail {

inline std::uint32_t lerp_rgb(std::uint32_t a, std::uint32_t b, double f) {
  std::uint32_t out = 0;
  for (int shift = 16; shift >= 0; shift -= 8) {
    const double ca = (a >> shift) & 0xff, cb = (b >> shift) & 0xff;
    out |= static_cast<std::uint32_t>(std::lround(ca + (cb - ca) * f)) << shift;
  }
  return out;
}

/// Viridis sampled at five stops.
inline std::uint32_t viridis(double f) {
  static constexpr std::array<std::uint32_t, 5> stops{0x440154, 0x3b528b, 0x21918c, 0x5ec962, 0xfde725};
  f = std::clamp(std::isfinite(f) ? f : 0.0, 0.0, 1.0) * 4.0;
  const auto i = std::min<std::size_t>(3, static_cast<std::size_t>(f));
  return lerp_rgb(stops[i], stops[i + 1], f - static_cast<double>(i));
}

/// Bilinear 2D colormap over the unit square.
inline std::uint32_t bilinear_2d(double u, double v) {
  static constexpr std::uint32_t c00 = 0x3b4cc0, c10 = 0xd6604d, c01 = 0x1a9850, c11 = 0xfee08b;
  u = std::clamp(u, 0.0, 1.0);
  v = std::clamp(v, 0.0, 1.0);
  return lerp_rgb(lerp_rgb(c00, c10, u), lerp_rgb(c01, c11, u), v);
}

}  // namespace detail

/// Per-point 0xRRGGBB colors. Two-dimensional encodings position points by
/// the reference keyframe's projection, so colors do not change while the
/// view moves.
inline std::vector<std::uint32_t> encode_colors(const Dataset& ds, const ColorEncoding& enc,
                                                const KeyframeSequence& seq, Diagnostics* diag = nullptr) {
  const std::size_t n = ds.n_rows();
  std::vector<std::uint32_t> colors(n, kNeutralColor);
  switch (enc.kind) {
    case ColorEncoding::Kind::none:
      break;
    case ColorEncoding::Kind::categorical: {
      const LabelColumn* label = ds.find_label(enc.column);
      if (label == nullptr) throw Error(ErrorCode::MissingColumn, "no label column '" + enc.column + "'");
      if (label->kind != LabelColumn::Kind::categorical) {
        throw Error(ErrorCode::InvalidArgument, "label column '" + enc.column + "' is not categorical");
      }
      if (label->dictionary.size() > kCategoricalPalette.size()) {
        warn(diag, "PaletteCycled: " + std::to_string(label->dictionary.size()) +
                       " categories share a 12-color palette; colors repeat");
      }
      for (std::size_t i = 0; i < n; ++i) colors[i] = kCategoricalPalette[label->codes[i] % kCategoricalPalette.size()];
      break;
    }
    case ColorEncoding::Kind::continuous: {
      const std::vector<float>* values = nullptr;
      if (const LabelColumn* label = ds.find_label(enc.column)) {
        if (label->kind != LabelColumn::Kind::continuous) {
          throw Error(ErrorCode::InvalidArgument, "label column '" + enc.column + "' is not continuous");
        }
        values = &label->values;
      } else {
        const auto it = std::find(ds.dim_names.begin(), ds.dim_names.end(), enc.column);
        if (it == ds.dim_names.end()) throw Error(ErrorCode::MissingColumn, "no column '" + enc.column + "'");
        values = &ds.columns[static_cast<std::size_t>(it - ds.dim_names.begin())];
      }
      double lo = enc.min.value_or(std::numeric_limits<double>::infinity());
      double hi = enc.max.value_or(-std::numeric_limits<double>::infinity());
      if (!enc.min || !enc.max) {
        for (float v : *values) {
          if (!enc.min) lo = std::min(lo, static_cast<double>(v));
          if (!enc.max) hi = std::max(hi, static_cast<double>(v));
        }
      }
      const double span = hi - lo;
      for (std::size_t i = 0; i < n; ++i) {
        colors[i] = detail::viridis(span > 0 ? ((*values)[i] - lo) / span : 0.5);
      }
      break;
    }
    case ColorEncoding::Kind::twod: {
      if (enc.reference_keyframe >= seq.size()) {
        throw Error(ErrorCode::InvalidArgument, "reference keyframe out of range");
      }
      const Basis& ref = seq.keyframes[enc.reference_keyframe].basis;
      const Projection proj = project(ds, ref, {.gain = blend_gain(ref, seq.blend)});
      const double wx = proj.bounds[2] - proj.bounds[0], wy = proj.bounds[3] - proj.bounds[1];
      for (std::size_t i = 0; i < n; ++i) {
        colors[i] = detail::bilinear_2d(wx > 0 ? (proj.x(i) - proj.bounds[0]) / wx : 0.5,
                                        wy > 0 ? (proj.y(i) - proj.bounds[1]) / wy : 0.5);
      }
      break;
    }
  }
  return colors;
}

// ---------------------------------------------------------------------------
// Previews

struct Previews {
  std::vector<std::uint32_t> indices;  // sorted row subsample shared by every keyframe
  std::vector<Projection> frames;      // one per keyframe
};

/// Seeded subsample of min(N, thumb_points) rows projected under each
/// keyframe.
inline Previews keyframe_previews(const Dataset& ds, const KeyframeSequence& seq, std::size_t thumb_points = 5000,
                                  std::uint64_t seed = 0) {
  const std::size_t n = ds.n_rows();
  Previews out;
  if (n <= thumb_points) {
    out.indices.resize(n);
    std::iota(out.indices.begin(), out.indices.end(), 0u);
  } else {
    std::vector<std::uint32_t> all(n);
    std::iota(all.begin(), all.end(), 0u);
    std::mt19937_64 rng(seed);
    out.indices.reserve(thumb_points);
    std::sample(all.begin(), all.end(), std::back_inserter(out.indices), thumb_points, rng);
  }
  Dataset sub;
  sub.dim_names = ds.dim_names;
  sub.columns.assign(ds.n_dims(), std::vector<float>(out.indices.size()));
  for (std::size_t j = 0; j < ds.n_dims(); ++j) {
    for (std::size_t i = 0; i < out.indices.size(); ++i) sub.columns[j][i] = ds.columns[j][out.indices[i]];
  }
  for (const auto& kf : seq.keyframes) {
    out.frames.push_back(project(sub, kf.basis, {.threads = 1, .gain = blend_gain(kf.basis, seq.blend)}));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Snapshots

enum class SnapshotFormat { csv, dtc1 };

inline SnapshotFormat parse_snapshot_format(std::string_view s) {
  if (s == "csv") return SnapshotFormat::csv;
  if (s == "dtc1") return SnapshotFormat::dtc1;
  throw Error(ErrorCode::InvalidArgument, "unknown snapshot format '" + std::string(s) + "'");
}

/// The snapshot as a dataset: columns x, y, selected plus the label columns.
inline Dataset snapshot_dataset(const Dataset& ds, const Projection& proj, const Selection& selection) {
  if (ds.n_rows() == 0) throw Error(ErrorCode::EmptyDataset, "nothing to snapshot");
  const std::size_t n = ds.n_rows();
  Dataset out;
  out.dim_names = {"x", "y", "selected"};
  out.columns.assign(3, std::vector<float>(n));
  for (std::size_t i = 0; i < n; ++i) {
    out.columns[0][i] = proj.x(i);
    out.columns[1][i] = proj.y(i);
    out.columns[2][i] = selection.size() == n && selection.test(i) ? 1.0f : 0.0f;
  }
  out.labels = ds.labels;
  return out;
}

inline std::string encode_snapshot(const Dataset& ds, const Projection& proj, const Selection& selection,
                                   SnapshotFormat format) {
  const Dataset snap = snapshot_dataset(ds, proj, selection);
  if (format == SnapshotFormat::dtc1) return encode_columnar(snap);
  std::string out = "x,y,selected";
  for (const auto& l : snap.labels) out += "," + detail::csv_quote(l.name);
  out += "\n";
  char buf[64];
  for (std::size_t i = 0; i < snap.n_rows(); ++i) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g,%d", static_cast<double>(proj.x(i)),
                  static_cast<double>(proj.y(i)), snap.columns[2][i] != 0.0f ? 1 : 0);
    out += buf;
    for (const auto& l : snap.labels) {
      out += ",";
      if (l.kind == LabelColumn::Kind::categorical) {
        out += detail::csv_quote(l.dictionary[l.codes[i]]);
      } else {
        std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(l.values[i]));
        out += buf;
      }
    }
    out += "\n";
  }
  return out;
}

inline void write_snapshot(const Dataset& ds, const Projection& proj, const Selection& selection,
                           const std::filesystem::path& path, SnapshotFormat format) {
  const std::string bytes = encode_snapshot(ds, proj, selection, format);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Session

enum class Mode { overview, guided, manual, grand };

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::overview: return "overview";
    case Mode::guided: return "guided";
    case Mode::manual: return "manual";
    case Mode::grand: return "grand";
  }
  return "guided";
}

inline Mode parse_mode(std::string_view s) {
  if (s == "overview") return Mode::overview;
  if (s == "guided") return Mode::guided;
  if (s == "manual") return Mode::manual;
  if (s == "grand") return Mode::grand;
  throw Error(ErrorCode::InvalidArgument, "unknown mode '" + std::string(s) + "'");
}

struct SessionOptions {
  double transition_seconds = 0.5;  // return-to-path blend duration
  std::size_t grand_targets = 8;    // random targets per grand-tour leg
  std::uint64_t seed = 0;
  double default_speed = 0.05;      // arc-length fraction per second
  ProjectOptions projection;
};

/// Single-writer interactive state over one dataset and compiled tour.
///
/// In overview and guided mode with no transition running, the current
/// basis is exactly path().basis_at(t()). Leaving manual or grand mode for
/// the path blends from the current frame to the path frame along
/// frame_geodesic, so the view never jumps. The selection only changes
/// through the selection operations.
class Session {
 public:
  Session(std::shared_ptr<const Dataset> data, std::shared_ptr<const TourPath> path, SessionOptions opt = {})
      : data_(std::move(data)),
        path_(std::move(path)),
        opt_(opt),
        basis_(path_->basis_at(0.0)),
        selection_(data_->n_rows()),
        gain_(blend_gain(basis_, path_->blend())),
        colors_(data_->n_rows(), kNeutralColor) {
    if (data_->n_dims() != path_->dims()) {
      throw Error(ErrorCode::DimensionMismatch, "tour has " + std::to_string(path_->dims()) +
                                                    " dimensions, data has " + std::to_string(data_->n_dims()));
    }
  }

  const Dataset& data() const noexcept { return *data_; }
  const TourPath& path() const noexcept { return *path_; }
  double t() const noexcept { return t_; }
  Mode mode() const noexcept { return mode_; }
  const Basis& basis() const noexcept { return basis_; }
  std::array<double, 2> gain() const noexcept { return gain_; }
  const Selection& selection() const noexcept { return selection_; }
  bool playing() const noexcept { return playing_; }
  double speed() const noexcept { return speed_; }
  bool transitioning() const noexcept { return transition_.has_value(); }
  const ColorEncoding& encoding() const noexcept { return encoding_; }
  const std::vector<std::uint32_t>& colors() const noexcept { return colors_; }
  /// Bumped on every change of basis or gain.
  std::uint64_t revision() const noexcept { return revision_; }

  /// Moves the path parameter (wrapping modulo 1 on cyclic paths). From
  /// manual or grand mode this returns to guided mode through a transition.
  void set_t(double t) {
    t_ = path_->wrap(t);
    if (mode_ == Mode::manual || mode_ == Mode::grand) enter_path_mode(Mode::guided);
    refresh();
  }

  Projection scrub(double t) {
    set_t(t);
    return project_current();
  }

  /// Advances playback and any running transition by dt seconds.
  void tick(double dt) {
    if (!(dt >= 0.0) || !std::isfinite(dt)) throw Error(ErrorCode::InvalidArgument, "dt must be finite and >= 0");
    if (playing_) {
      if (mode_ == Mode::grand) {
        grand_t_ += speed_ * dt;
        if (grand_t_ >= 1.0) {
          grand_t_ = 0.0;
          start_grand_leg(grand_->sequence().keyframes.back().basis);
        }
      } else if (mode_ == Mode::guided || mode_ == Mode::overview) {
        const double next = t_ + speed_ * dt;
        t_ = path_->cyclic() ? path_->wrap(next) : next - std::floor(next);
      }
    }
    if (transition_) transition_->elapsed += dt;
    refresh();
  }

  void play(double speed) {
    if (!std::isfinite(speed)) throw Error(ErrorCode::InvalidArgument, "speed is not finite");
    speed_ = speed;
    playing_ = true;
  }
  void pause() { playing_ = false; }

  void set_mode(Mode m) {
    if (m == mode_) return;
    switch (m) {
      case Mode::manual:
        transition_.reset();
        mode_ = Mode::manual;
        break;
      case Mode::grand:
        transition_.reset();
        mode_ = Mode::grand;
        start_grand_leg(basis_);
        if (speed_ == 0.0) speed_ = opt_.default_speed;
        playing_ = true;
        break;
      case Mode::guided:
      case Mode::overview:
        if (mode_ == Mode::manual || mode_ == Mode::grand) {
          enter_path_mode(m);
        } else {
          mode_ = m;
        }
        break;
    }
    residual_axis_.reset();
    refresh();
  }

  /// Manual axis drag; enters manual mode (freezing the current view).
  DragResult drag(const DragTarget& target, DragMethod method = DragMethod::rotation) {
    set_mode(Mode::manual);
    DragResult r = manual_drag(basis_, target, method);
    if (r.applied) {
      basis_ = r.basis;
      residual_axis_.reset();
      ++revision_;
    }
    return r;
  }

  /// Rotates about the residual principal axis. A new gesture (begin) or a
  /// missing axis recomputes it from the data covariance; otherwise the
  /// axis carried from the previous step is used so a gesture composes.
  /// Returns false when the data has no residual direction.
  bool rotate_residual(double angle, std::array<double, 2> in_plane = {1.0, 0.0}, bool begin = false) {
    set_mode(Mode::manual);
    if (begin || !residual_axis_) {
      if (!covariance_) covariance_ = mean_and_covariance(*data_).second;
      auto axis = residual_axis(basis_, *covariance_);
      if (!axis) return false;
      residual_axis_ = std::move(*axis);
    }
    ResidualRotation r = rotate_about_residual(basis_, *residual_axis_, angle, in_plane);
    basis_ = std::move(r.basis);
    residual_axis_ = std::move(r.axis);
    ++revision_;
    return true;
  }

  void lasso(std::span<const Point2> polygon, Combine combine = Combine::replace) {
    lasso_select(selection_, polygon, project_current(), combine);
  }

  void select_labels(const std::string& column, const std::vector<std::string>& values,
                     Combine combine = Combine::replace, Diagnostics* diag = nullptr) {
    label_select(selection_, *data_, column, values, combine, diag);
  }

  void set_selection(Selection s) {
    if (s.size() != data_->n_rows()) throw Error(ErrorCode::LengthMismatch, "selection length");
    selection_ = std::move(s);
  }

  /// Colors are computed here once; scrubbing never recomputes them.
  void set_encoding(ColorEncoding enc, Diagnostics* diag = nullptr) {
    colors_ = encode_colors(*data_, enc, path_->sequence(), diag);
    encoding_ = std::move(enc);
  }

  Projection project_current() const {
    ProjectOptions po = opt_.projection;
    po.gain = gain_;
    return project(*data_, basis_, po);
  }

  std::string snapshot(SnapshotFormat format) const {
    return encode_snapshot(*data_, project_current(), selection_, format);
  }

 private:
  struct Transition {
    Basis from;
    std::array<double, 2> gain_from;
    double elapsed = 0.0;
  };

  void enter_path_mode(Mode m) {
    transition_ = Transition{basis_, gain_, 0.0};
    mode_ = m;
  }

  void start_grand_leg(const Basis& from) {
    const std::uint64_t seed = opt_.seed ^ (0x9e3779b97f4a7c15ULL * ++grand_legs_);
    KeyframeSequence leg = grand_tour_extend(from, opt_.grand_targets, seed);
    // Open legs end on their last target, where the next leg starts.
    leg.cyclic = false;
    grand_ = std::make_shared<TourPath>(std::move(leg));
    grand_t_ = 0.0;
  }

  void refresh() {
    if (mode_ == Mode::manual) return;
    Basis next = basis_;
    std::array<double, 2> gain = gain_;
    if (mode_ == Mode::grand) {
      next = grand_->basis_at(grand_t_);
    } else {
      next = path_->basis_at(t_);
      gain = blend_gain(next, path_->blend());
      if (transition_) {
        const double s = opt_.transition_seconds > 0 ? transition_->elapsed / opt_.transition_seconds : 1.0;
        if (s >= 1.0) {
          transition_.reset();
        } else {
          for (int c = 0; c < 2; ++c) gain[c] = transition_->gain_from[c] + s * (gain[c] - transition_->gain_from[c]);
          next = frame_geodesic(transition_->from, next, s);
        }
      }
    }
    if (!(next == basis_) || gain != gain_) {
      basis_ = std::move(next);
      gain_ = gain;
      ++revision_;
    }
  }

  std::shared_ptr<const Dataset> data_;
  std::shared_ptr<const TourPath> path_;
  SessionOptions opt_;
  double t_ = 0.0;
  Mode mode_ = Mode::guided;
  Basis basis_;
  Selection selection_;
  std::array<double, 2> gain_;
  bool playing_ = false;
  double speed_ = 0.0;
  std::optional<Transition> transition_;
  std::shared_ptr<const TourPath> grand_;
  double grand_t_ = 0.0;
  std::uint64_t grand_legs_ = 0;
  std::optional<Eigen::MatrixXd> covariance_;
  std::optional<std::vector<double>> residual_axis_;
  ColorEncoding encoding_;
  std::vector<std::uint32_t> colors_;
  std::uint64_t revision_ = 0;
};

}  // namespace dtour
