#pragma once

// Keyframe sequences compiled into arc-length parameterized Catmull-Rom
// paths over projection frames.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "dtour/error.hpp"
#include "dtour/geometry.hpp"

namespace dtour {

/// How a projected frame maps to screen coordinates.
///
/// `orthonormal` is the plain product data * basis. `affine` divides each
/// projected axis by its basis column sum, which turns a stacked-embedding
/// tour (keyframes are coordinate pairs) into the affine blend of the
/// embeddings instead of a norm-inflated one.
enum class BlendMode { orthonormal, affine };

struct Loading {
  std::size_t dim = 0;
  double weight = 0.0;  // in [0, 1]
  friend bool operator==(const Loading&, const Loading&) = default;
};

struct Keyframe {
  Basis basis;
  std::string label;
  std::vector<Loading> loadings;
};

struct KeyframeSequence {
  std::vector<Keyframe> keyframes;
  bool cyclic = true;
  BlendMode blend = BlendMode::orthonormal;

  std::size_t size() const noexcept { return keyframes.size(); }
  std::size_t dims() const { return keyframes.empty() ? 0 : keyframes.front().basis.dims(); }
};

/// Per-axis screen gain for `blend` (1 for orthonormal tours).
inline std::array<double, 2> blend_gain(const Basis& basis, BlendMode blend) {
  if (blend == BlendMode::orthonormal) return {1.0, 1.0};
  std::array<double, 2> gain{1.0, 1.0};
  for (std::size_t c = 0; c < 2; ++c) {
    double sum = 0.0;
    for (double v : basis.col(c)) sum += v;
    if (std::abs(sum) > kDegeneracyEps) gain[c] = 1.0 / sum;
  }
  return gain;
}

/// Rows with the largest contribution ||F_r||^2 to the view plane.
inline std::vector<Loading> top_loadings(const Basis& basis, std::size_t count = 3) {
  std::vector<Loading> all(basis.dims());
  for (std::size_t r = 0; r < basis.dims(); ++r) {
    all[r] = {r, std::min(1.0, basis(r, 0) * basis(r, 0) + basis(r, 1) * basis(r, 1))};
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const Loading& x, const Loading& y) { return x.weight > y.weight; });
  all.resize(std::min(count, all.size()));
  return all;
}

/// Uniform Catmull-Rom weights (tension 0.5) for control points p0..p3.
inline std::array<double, 4> catmull_rom_weights(double t) {
  const double t2 = t * t, t3 = t2 * t;
  return {0.5 * (-t + 2.0 * t2 - t3), 0.5 * (2.0 - 5.0 * t2 + 3.0 * t3),
          0.5 * (t + 4.0 * t2 - 3.0 * t3), 0.5 * (-t2 + t3)};
}

/// Element-wise Catmull-Rom blend of four frames followed by Gram-Schmidt.
/// Hits p1 at t = 0 and p2 at t = 1.
inline Basis catmull_rom_basis(const Basis& p0, const Basis& p1, const Basis& p2, const Basis& p3,
                               double t) {
  const std::size_t p = p1.dims();
  if (p0.dims() != p || p2.dims() != p || p3.dims() != p) {
    throw Error(ErrorCode::DimensionMismatch, "control bases differ in dimension");
  }
  if (t <= 0.0) return p1;
  if (t >= 1.0) return p2;
  const auto w = catmull_rom_weights(t);
  const auto v0 = p0.matrix().values(), v1 = p1.matrix().values(), v2 = p2.matrix().values(),
             v3 = p3.matrix().values();
  PlaneMatrix blend(p);
  for (std::size_t c = 0; c < 2; ++c) {
    auto out = blend.col(c);
    for (std::size_t i = 0; i < p; ++i) {
      const std::size_t k = c * p + i;
      out[i] = w[0] * v0[k] + w[1] * v1[k] + w[2] * v2[k] + w[3] * v3[k];
    }
  }
  return gram_schmidt(blend);
}

/// One arc-length table entry: spline parameter (segment index + local u)
/// and the cumulative geodesic length up to it.
struct ArcSample {
  double raw = 0.0;
  double length = 0.0;
};

/// A compiled, immutable tour path. basis_at() is safe to call concurrently.
class TourPath {
 public:
  TourPath(KeyframeSequence seq, int samples_per_segment = 8)
      : seq_(std::move(seq)), samples_(samples_per_segment) {
    validate();
    build_table();
  }

  const KeyframeSequence& sequence() const noexcept { return seq_; }
  std::size_t dims() const { return seq_.dims(); }
  bool cyclic() const noexcept { return seq_.cyclic; }
  BlendMode blend() const noexcept { return seq_.blend; }
  int samples_per_segment() const noexcept { return samples_; }
  std::size_t segment_count() const noexcept { return segment_lengths_.size(); }
  double total_length() const noexcept { return total_; }
  const std::vector<double>& segment_lengths() const noexcept { return segment_lengths_; }
  const std::vector<ArcSample>& arc_table() const noexcept { return table_; }

  /// Maps t outside [0, 1] back in: modulo 1 when cyclic, clamped otherwise.
  double wrap(double t) const {
    if (!std::isfinite(t)) throw Error(ErrorCode::InvalidArgument, "tour parameter is not finite");
    if (seq_.cyclic) {
      double w = t - std::floor(t);
      return w >= 1.0 ? 0.0 : w;
    }
    return std::clamp(t, 0.0, 1.0);
  }

  /// Control keyframe indices (i-1, i, i+1, i+2) of a segment.
  std::array<std::size_t, 4> controls(std::size_t segment) const {
    const auto k = static_cast<std::ptrdiff_t>(seq_.size());
    std::array<std::size_t, 4> idx{};
    for (int j = 0; j < 4; ++j) {
      std::ptrdiff_t i = static_cast<std::ptrdiff_t>(segment) + j - 1;
      i = seq_.cyclic ? ((i % k) + k) % k : std::clamp<std::ptrdiff_t>(i, 0, k - 1);
      idx[static_cast<std::size_t>(j)] = static_cast<std::size_t>(i);
    }
    return idx;
  }

  /// Spline frame at local parameter u in [0, 1] of a segment. A segment
  /// whose end keyframes span the same plane stays in that plane (the
  /// neighbors' tangents would otherwise pull it out and back): it turns
  /// in-plane, or, for mirror-image frames, holds the first until u = 1.
  Basis segment_basis(std::size_t segment, double u) const {
    const auto c = controls(segment);
    const auto& kf = seq_.keyframes;
    const Basis& a = kf[c[1]].basis;
    const Basis& b = kf[c[2]].basis;
    if (same_span(a, b)) {
      if (a == b || u <= 0.0) return a;
      if (u >= 1.0) return b;
      if (detail::cross_gram(a, b).det() < 0.0) return a;
      return frame_geodesic(a, b, u);
    }
    return catmull_rom_basis(kf[c[0]].basis, kf[c[1]].basis, kf[c[2]].basis, kf[c[3]].basis, u);
  }

  /// Segment and local parameter at arc-length fraction t (binary search).
  std::pair<std::size_t, double> locate(double t) const {
    t = wrap(t);
    if (total_ <= 0.0 || t <= 0.0) return {0, 0.0};
    const double s = t * total_;
    if (s >= total_) return {segment_count() - 1, 1.0};
    const auto it = std::upper_bound(table_.begin(), table_.end(), s,
                                     [](double v, const ArcSample& e) { return v < e.length; });
    const auto hi = static_cast<std::size_t>(it - table_.begin());
    const ArcSample& a = table_[hi - 1];
    const ArcSample& b = table_[hi];
    const double f = (s - a.length) / (b.length - a.length);
    const auto segment = static_cast<std::size_t>(std::floor(a.raw));
    const double u = std::clamp(a.raw + f * (b.raw - a.raw) - static_cast<double>(segment), 0.0, 1.0);
    return {segment, u};
  }

  /// Frame at arc-length fraction t; equal steps in t give (nearly) equal
  /// geodesic steps. t = 0 is keyframe 0.
  Basis basis_at(double t) const {
    t = wrap(t);
    if (total_ <= 0.0 || t <= 0.0) return seq_.keyframes.front().basis;
    const auto [segment, u] = locate(t);
    return segment_basis(segment, u);
  }

  /// Arc-length fractions at which each keyframe is attained.
  std::vector<double> keyframe_positions() const {
    std::vector<double> out(seq_.size(), 0.0);
    if (total_ <= 0.0) return out;
    const auto stride = static_cast<std::size_t>(samples_ + 1);
    for (std::size_t i = 0; i < seq_.size(); ++i) {
      const std::size_t entry = i * stride;
      out[i] = entry < table_.size() ? table_[entry].length / total_ : 1.0;
    }
    out.front() = 0.0;
    return out;
  }

 private:
  static bool same_span(const Basis& a, const Basis& b) {
    return a == b || geodesic_distance(a, b) <= kDegeneracyEps;
  }

  void validate() const {
    if (samples_ < 0) throw Error(ErrorCode::InvalidArgument, "samples_per_segment must be >= 0");
    if (seq_.size() < 2) {
      throw Error(ErrorCode::TooFewKeyframes, "a tour needs at least 2 keyframes");
    }
    const std::size_t p = seq_.dims();
    for (std::size_t i = 0; i < seq_.size(); ++i) {
      const Keyframe& kf = seq_.keyframes[i];
      if (kf.basis.dims() != p) {
        throw Error(ErrorCode::DimensionMismatch, "keyframe " + std::to_string(i) +
                                                      " has a different dimension count");
      }
      for (const Loading& l : kf.loadings) {
        if (l.dim >= p) {
          throw Error(ErrorCode::InvalidArgument,
                      "keyframe " + std::to_string(i) + " loading index out of range");
        }
      }
    }
  }

  void build_table() {
    const std::size_t k = seq_.size();
    const std::size_t segments = seq_.cyclic ? k : k - 1;
    const auto steps = static_cast<std::size_t>(samples_ + 1);
    segment_lengths_.assign(segments, 0.0);
    table_.clear();
    table_.reserve(segments * steps + 1);
    double cumulative = 0.0;
    for (std::size_t seg = 0; seg < segments; ++seg) {
      Basis prev = segment_basis(seg, 0.0);
      table_.push_back({static_cast<double>(seg), cumulative});
      for (std::size_t j = 1; j <= steps; ++j) {
        const double u = static_cast<double>(j) / static_cast<double>(steps);
        Basis cur = segment_basis(seg, u);
        const double d = geodesic_distance(prev, cur);
        segment_lengths_[seg] += d;
        cumulative += d;
        if (j < steps) table_.push_back({static_cast<double>(seg) + u, cumulative});
        prev = std::move(cur);
      }
    }
    table_.push_back({static_cast<double>(segments), cumulative});
    total_ = cumulative;
  }

  KeyframeSequence seq_;
  int samples_ = 8;
  std::vector<ArcSample> table_;
  std::vector<double> segment_lengths_;
  double total_ = 0.0;
};

/// Compiles a keyframe sequence into a traversable path.
inline TourPath compile(KeyframeSequence seq, int samples_per_segment = 8) {
  return TourPath(std::move(seq), samples_per_segment);
}

}  // namespace dtour
