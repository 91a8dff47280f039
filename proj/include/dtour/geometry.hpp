#pragma once

// Linear algebra on p x 2 projection frames: orthonormalization, the
// closed-form 2x2 SVD, principal angles between view planes, the Grassmann
// geodesic distance, polar projection and orthogonal Procrustes in 2D.

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "dtour/error.hpp"

namespace dtour {

/// Threshold below which a norm or residual counts as zero.
inline constexpr double kDegeneracyEps = 1e-12;
/// Tolerance of the Basis orthonormality invariant.
inline constexpr double kOrthoTol = 1e-10;

/// Dense p x 2 matrix, column-major: column 0 occupies [0, p), column 1 [p, 2p).
class PlaneMatrix {
 public:
  PlaneMatrix() = default;
  explicit PlaneMatrix(std::size_t dims) : dims_(dims), values_(2 * dims, 0.0) {}

  static PlaneMatrix from_columns(std::span<const double> col0, std::span<const double> col1) {
    if (col0.size() != col1.size()) {
      throw Error(ErrorCode::DimensionMismatch, "plane columns differ in length");
    }
    PlaneMatrix m(col0.size());
    std::copy(col0.begin(), col0.end(), m.values_.begin());
    std::copy(col1.begin(), col1.end(), m.values_.begin() + static_cast<std::ptrdiff_t>(m.dims_));
    return m;
  }

  /// Builds from p rows of (x, y) pairs laid out row-major.
  static PlaneMatrix from_rows(std::span<const double> row_major) {
    if (row_major.size() % 2 != 0) {
      throw Error(ErrorCode::DimensionMismatch, "row-major plane data has odd length");
    }
    PlaneMatrix m(row_major.size() / 2);
    for (std::size_t r = 0; r < m.dims_; ++r) {
      m(r, 0) = row_major[2 * r];
      m(r, 1) = row_major[2 * r + 1];
    }
    return m;
  }

  std::size_t dims() const noexcept { return dims_; }

  double& operator()(std::size_t row, std::size_t col) { return values_[col * dims_ + row]; }
  double operator()(std::size_t row, std::size_t col) const { return values_[col * dims_ + row]; }

  std::span<double> col(std::size_t c) { return {values_.data() + c * dims_, dims_}; }
  std::span<const double> col(std::size_t c) const { return {values_.data() + c * dims_, dims_}; }

  std::span<const double> values() const noexcept { return values_; }

  std::vector<double> row_major() const {
    std::vector<double> out(2 * dims_);
    for (std::size_t r = 0; r < dims_; ++r) {
      out[2 * r] = (*this)(r, 0);
      out[2 * r + 1] = (*this)(r, 1);
    }
    return out;
  }

  friend bool operator==(const PlaneMatrix&, const PlaneMatrix&) = default;

 private:
  std::size_t dims_ = 0;
  std::vector<double> values_;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

struct BasisKey {
  explicit BasisKey() = default;
};

}  // namespace detail

/// Largest deviation of a p x 2 matrix from column-orthonormality.
inline double orthonormality_error(const PlaneMatrix& m) {
  const double n0 = detail::norm(m.col(0));
  const double n1 = detail::norm(m.col(1));
  const double c = detail::dot(m.col(0), m.col(1));
  return std::max({std::abs(n0 - 1.0), std::abs(n1 - 1.0), std::abs(c)});
}

/// A p x 2 column-orthonormal frame: the view plane a tour shows.
///
/// Instances only come out of the orthonormalizing operations below or out
/// of from_orthonormal(), which checks the invariant.
class Basis {
 public:
  Basis(detail::BasisKey, PlaneMatrix m) : m_(std::move(m)) {}

  /// Adopts an already orthonormal matrix; throws DegenerateBasis otherwise.
  static Basis from_orthonormal(PlaneMatrix m, double tol = kOrthoTol) {
    if (m.dims() < 2) throw Error(ErrorCode::DegenerateBasis, "basis needs at least 2 dimensions");
    const double err = dtour::orthonormality_error(m);
    if (!(err <= tol)) {
      throw Error(ErrorCode::DegenerateBasis,
                  "matrix is not orthonormal (deviation " + std::to_string(err) + ")");
    }
    return Basis(detail::BasisKey{}, std::move(m));
  }

  /// The coordinate plane span(e_i, e_j).
  static Basis canonical(std::size_t dims, std::size_t i, std::size_t j) {
    if (i >= dims || j >= dims || i == j) {
      throw Error(ErrorCode::InvalidArgument, "canonical basis needs two distinct axes < dims");
    }
    PlaneMatrix m(dims);
    m(i, 0) = 1.0;
    m(j, 1) = 1.0;
    return Basis(detail::BasisKey{}, std::move(m));
  }

  std::size_t dims() const noexcept { return m_.dims(); }
  double operator()(std::size_t row, std::size_t col) const { return m_(row, col); }
  std::span<const double> col(std::size_t c) const { return m_.col(c); }
  const PlaneMatrix& matrix() const noexcept { return m_; }
  double orthonormality_error() const { return dtour::orthonormality_error(m_); }

  friend bool operator==(const Basis&, const Basis&) = default;

 private:
  PlaneMatrix m_;
};

/// 2x2 matrix [[a, b], [c, d]].
struct Mat2 {
  double a = 0.0, b = 0.0, c = 0.0, d = 0.0;

  static constexpr Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
  static Mat2 rotation(double angle) {
    const double cs = std::cos(angle), sn = std::sin(angle);
    return {cs, -sn, sn, cs};
  }

  double det() const { return a * d - b * c; }
  Mat2 transpose() const { return {a, c, b, d}; }

  friend Mat2 operator*(const Mat2& x, const Mat2& y) {
    return {x.a * y.a + x.b * y.c, x.a * y.b + x.b * y.d, x.c * y.a + x.d * y.c,
            x.c * y.b + x.d * y.d};
  }
  friend bool operator==(const Mat2&, const Mat2&) = default;
};

/// Orthogonal 2x2 matrix with its orientation recorded.
struct Rotation2 {
  Mat2 m = Mat2::identity();
  bool reflection = false;  // det == -1
};

struct Svd2 {
  std::array<double, 2> sigma{};  // descending, nonnegative
  Rotation2 u;
  Rotation2 v;  // m == u * diag(sigma) * v^T
};

/// Closed-form SVD of a real 2x2 matrix.
inline Svd2 svd_2x2(const Mat2& m) {
  const double e = 0.5 * (m.a + m.d);
  const double f = 0.5 * (m.a - m.d);
  const double g = 0.5 * (m.c + m.b);
  const double h = 0.5 * (m.c - m.b);
  const double q = std::hypot(e, h);
  const double r = std::hypot(f, g);
  const double a1 = std::atan2(g, f);
  const double a2 = std::atan2(h, e);
  const double theta = 0.5 * (a2 - a1);
  const double phi = 0.5 * (a2 + a1);

  Svd2 out;
  out.sigma = {q + r, q - r};
  out.u.m = Mat2::rotation(phi);
  out.v.m = Mat2::rotation(theta).transpose();
  if (out.sigma[1] < 0.0) {
    out.sigma[1] = -out.sigma[1];
    out.u.m.b = -out.u.m.b;
    out.u.m.d = -out.u.m.d;
    out.u.reflection = true;
  }
  return out;
}

struct PrincipalAngles {
  double tau0 = 0.0;  // smaller angle
  double tau1 = 0.0;
};

namespace detail {

inline void require_same_dims(const Basis& a, const Basis& b) {
  if (a.dims() != b.dims()) {
    throw Error(ErrorCode::DimensionMismatch,
                "bases have " + std::to_string(a.dims()) + " and " + std::to_string(b.dims()) +
                    " dimensions");
  }
}

inline Mat2 cross_gram(const Basis& a, const Basis& b) {
  return {dot(a.col(0), b.col(0)), dot(a.col(0), b.col(1)), dot(a.col(1), b.col(0)),
          dot(a.col(1), b.col(1))};
}

inline double sigma_to_angle(double sigma) {
  if (std::abs(sigma - 1.0) < kDegeneracyEps) return 0.0;
  return std::acos(std::clamp(sigma, -1.0, 1.0));
}

/// Unit vector orthogonal to both frame vectors (and `extra`, when given),
/// taken from the coordinate axis with the largest residual.
inline std::vector<double> orthogonal_direction(const std::array<std::vector<double>, 2>& frame,
                                                std::span<const double> extra) {
  const std::size_t p = frame[0].size();
  std::vector<double> best;
  double best_norm = -1.0;
  for (std::size_t axis = 0; axis < p; ++axis) {
    std::vector<double> v(p, 0.0);
    v[axis] = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& f : frame) {
        const double pr = dot(v, f);
        for (std::size_t i = 0; i < p; ++i) v[i] -= pr * f[i];
      }
      if (!extra.empty()) {
        const double en = dot(extra, extra);
        const double pr = en > 0.0 ? dot(v, extra) / en : 0.0;
        for (std::size_t i = 0; i < p; ++i) v[i] -= pr * extra[i];
      }
    }
    const double n = norm(v);
    if (n > best_norm) {
      best_norm = n;
      best = std::move(v);
    }
  }
  for (double& x : best) x /= best_norm;
  return best;
}

}  // namespace detail

/// Principal angles between span(a) and span(b), from the SVD of a^T b.
inline PrincipalAngles principal_angles(const Basis& a, const Basis& b) {
  detail::require_same_dims(a, b);
  const Svd2 s = svd_2x2(detail::cross_gram(a, b));
  return {detail::sigma_to_angle(s.sigma[0]), detail::sigma_to_angle(s.sigma[1])};
}

/// Grassmann geodesic distance sqrt(tau0^2 + tau1^2). Subspace semantics:
/// in-plane rotations or reflections of either frame leave it unchanged.
inline double geodesic_distance(const Basis& a, const Basis& b) {
  const PrincipalAngles pa = principal_angles(a, b);
  return std::hypot(pa.tau0, pa.tau1);
}

/// Gram-Schmidt with one re-orthogonalization pass. The first output column
/// is the normalized first input column.
inline Basis gram_schmidt(const PlaneMatrix& m) {
  const std::size_t p = m.dims();
  if (p < 2) throw Error(ErrorCode::DegenerateBasis, "basis needs at least 2 dimensions");
  const double n0 = detail::norm(m.col(0));
  const double n1 = detail::norm(m.col(1));
  if (!(n0 > kDegeneracyEps) || !(n1 > kDegeneracyEps)) {
    throw Error(ErrorCode::DegenerateBasis, "column norm below threshold");
  }
  PlaneMatrix out(p);
  auto q0 = out.col(0);
  auto q1 = out.col(1);
  for (std::size_t i = 0; i < p; ++i) q0[i] = m(i, 0) / n0;
  std::copy(m.col(1).begin(), m.col(1).end(), q1.begin());
  for (int pass = 0; pass < 2; ++pass) {
    const double proj = detail::dot(q0, q1);
    for (std::size_t i = 0; i < p; ++i) q1[i] -= proj * q0[i];
  }
  const double r = detail::norm(q1);
  if (!(r > kDegeneracyEps * n1)) {
    throw Error(ErrorCode::DegenerateBasis, "columns are parallel");
  }
  for (std::size_t i = 0; i < p; ++i) q1[i] /= r;
  return Basis(detail::BasisKey{}, std::move(out));
}

/// Polar projection: the orthonormal frame closest to m in Frobenius norm,
/// m (m^T m)^{-1/2}.
inline Basis nearest_orthonormal(const PlaneMatrix& m) {
  const std::size_t p = m.dims();
  if (p < 2) throw Error(ErrorCode::DegenerateBasis, "basis needs at least 2 dimensions");
  const double s00 = detail::dot(m.col(0), m.col(0));
  const double s01 = detail::dot(m.col(0), m.col(1));
  const double s11 = detail::dot(m.col(1), m.col(1));
  const double half_tr = 0.5 * (s00 + s11);
  const double rad = std::hypot(0.5 * (s00 - s11), s01);
  const double lmax = half_tr + rad;
  const double lmin = lmax > 0.0 ? (s00 * s11 - s01 * s01) / lmax : 0.0;
  if (!(lmax > kDegeneracyEps) || !(lmin > kDegeneracyEps * lmax)) {
    throw Error(ErrorCode::DegenerateBasis, "matrix has rank < 2");
  }
  // Eigenvectors of m^T m are the columns of rotation(phi).
  const double phi = 0.5 * std::atan2(2.0 * s01, s00 - s11);
  const double cs = std::cos(phi), sn = std::sin(phi);
  const double imax = 1.0 / std::sqrt(lmax), imin = 1.0 / std::sqrt(lmin);
  const double w00 = cs * cs * imax + sn * sn * imin;
  const double w01 = cs * sn * (imax - imin);
  const double w11 = sn * sn * imax + cs * cs * imin;

  PlaneMatrix out(p);
  for (std::size_t i = 0; i < p; ++i) {
    out(i, 0) = m(i, 0) * w00 + m(i, 1) * w01;
    out(i, 1) = m(i, 0) * w01 + m(i, 1) * w11;
  }
  // One Newton-Schulz step X (3I - X^T X) / 2 removes residual drift from
  // ill-conditioned inputs.
  if (orthonormality_error(out) > 1e-14) {
    const double g00 = detail::dot(out.col(0), out.col(0));
    const double g01 = detail::dot(out.col(0), out.col(1));
    const double g11 = detail::dot(out.col(1), out.col(1));
    const double k00 = 0.5 * (3.0 - g00), k01 = -0.5 * g01, k11 = 0.5 * (3.0 - g11);
    PlaneMatrix polished(p);
    for (std::size_t i = 0; i < p; ++i) {
      polished(i, 0) = out(i, 0) * k00 + out(i, 1) * k01;
      polished(i, 1) = out(i, 0) * k01 + out(i, 1) * k11;
    }
    out = std::move(polished);
  }
  return Basis(detail::BasisKey{}, std::move(out));
}

/// Re-expresses the frame with a 2x2 right factor, basis * r. The result is
/// orthonormal whenever r is orthogonal.
inline Basis right_multiply(const Basis& basis, const Mat2& r) {
  const std::size_t p = basis.dims();
  PlaneMatrix out(p);
  for (std::size_t i = 0; i < p; ++i) {
    out(i, 0) = basis(i, 0) * r.a + basis(i, 1) * r.c;
    out(i, 1) = basis(i, 0) * r.b + basis(i, 1) * r.d;
  }
  return Basis::from_orthonormal(std::move(out), 1e-9);
}

/// Point on the frame path from `from` (s = 0) to `to` (s = 1) that moves
/// the view plane at constant geodesic speed while turning the in-plane
/// orientation at constant rate. Used for mode transitions. When
/// det(from^T to) > 0 the plane follows the Grassmann geodesic; otherwise
/// the second principal angle is traversed as pi - tau1, since matching the
/// end frame along the geodesic would need a mirror flip of the view.
inline Basis frame_geodesic(const Basis& from, const Basis& to, double s) {
  detail::require_same_dims(from, to);
  if (s <= 0.0) return from;
  if (s >= 1.0) return to;
  const std::size_t p = from.dims();
  Svd2 svd = svd_2x2(detail::cross_gram(from, to));
  // Give u and v the same handedness so the in-plane turn is a rotation.
  if (svd.u.reflection != svd.v.reflection) {
    svd.v.m.b = -svd.v.m.b;
    svd.v.m.d = -svd.v.m.d;
    svd.v.reflection = !svd.v.reflection;
    svd.sigma[1] = -svd.sigma[1];
  }
  const Mat2& u = svd.u.m;
  const Mat2& v = svd.v.m;

  // Principal vectors a_k = from * u_k, b_k = to * v_k.
  std::array<std::vector<double>, 2> a, b;
  for (int k = 0; k < 2; ++k) {
    a[k].resize(p);
    b[k].resize(p);
    const double uk0 = k == 0 ? u.a : u.b, uk1 = k == 0 ? u.c : u.d;
    const double vk0 = k == 0 ? v.a : v.b, vk1 = k == 0 ? v.c : v.d;
    for (std::size_t i = 0; i < p; ++i) {
      a[k][i] = from(i, 0) * uk0 + from(i, 1) * uk1;
      b[k][i] = to(i, 0) * vk0 + to(i, 1) * vk1;
    }
  }
  PlaneMatrix g(p);
  for (int k = 0; k < 2; ++k) {
    const double sigma = std::clamp(svd.sigma[k], -1.0, 1.0);
    const double tau = std::acos(sigma);
    std::vector<double> dir(p);
    for (std::size_t i = 0; i < p; ++i) dir[i] = b[k][i] - sigma * a[k][i];
    // Keep the direction orthogonal to both principal vectors of `from`.
    for (int j = 0; j < 2; ++j) {
      const double pr = detail::dot(dir, a[j]);
      for (std::size_t i = 0; i < p; ++i) dir[i] -= pr * a[j][i];
    }
    double dn = detail::norm(dir);
    auto col = g.col(static_cast<std::size_t>(k));
    if (tau >= 1e-12 && dn < 1e-14) {
      // b_k == -a_k: any direction orthogonal to the current frame works.
      dir = detail::orthogonal_direction(a, k == 1 ? std::span<const double>(g.col(0)) :
                                                     std::span<const double>());
      dn = 1.0;
    }
    if (tau < 1e-12) {
      for (std::size_t i = 0; i < p; ++i) col[i] = a[k][i] + s * (b[k][i] - a[k][i]);
    } else {
      const double cs = std::cos(s * tau), sn = std::sin(s * tau);
      for (std::size_t i = 0; i < p; ++i) col[i] = a[k][i] * cs + dir[i] / dn * sn;
    }
  }
  // Turn orientation from u^T (at s = 0) to v^T (at s = 1).
  const Mat2 delta = u * v.transpose();  // rotation by some angle alpha
  const double alpha = std::atan2(delta.c, delta.a);
  const Mat2 w = u.transpose() * Mat2::rotation(s * alpha);
  PlaneMatrix out(p);
  for (std::size_t i = 0; i < p; ++i) {
    out(i, 0) = g(i, 0) * w.a + g(i, 1) * w.c;
    out(i, 1) = g(i, 0) * w.b + g(i, 1) * w.d;
  }
  return gram_schmidt(out);
}

/// 2D point.
struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

enum class ProcrustesMode { orthogonal, rotation_only };

struct ProcrustesResult {
  Rotation2 rotation;
  std::vector<Point2> aligned;
  double residual = 0.0;  // ||target_c - source_c R||_F
};

/// Orthogonal Procrustes: finds R minimizing ||target_c - source_c R||_F over
/// orthogonal R (reflections allowed unless mode is rotation_only), with
/// both point sets centered first. aligned = source_c R + centroid(target).
inline ProcrustesResult procrustes_align(std::span<const Point2> source,
                                         std::span<const Point2> target,
                                         ProcrustesMode mode = ProcrustesMode::orthogonal) {
  if (source.size() != target.size()) {
    throw Error(ErrorCode::LengthMismatch, "point sets differ in size");
  }
  const std::size_t n = source.size();
  if (n < 2) throw Error(ErrorCode::DegeneratePointSet, "need at least 2 points");
  Point2 cs{}, ct{};
  for (std::size_t i = 0; i < n; ++i) {
    cs.x += source[i].x;
    cs.y += source[i].y;
    ct.x += target[i].x;
    ct.y += target[i].y;
  }
  const double inv = 1.0 / static_cast<double>(n);
  cs = {cs.x * inv, cs.y * inv};
  ct = {ct.x * inv, ct.y * inv};

  Mat2 m{};
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double sx = source[i].x - cs.x, sy = source[i].y - cs.y;
    const double tx = target[i].x - ct.x, ty = target[i].y - ct.y;
    m.a += sx * tx;
    m.b += sx * ty;
    m.c += sy * tx;
    m.d += sy * ty;
    var += sx * sx + sy * sy;
  }
  if (!(var > kDegeneracyEps)) {
    throw Error(ErrorCode::DegeneratePointSet, "source has zero variance");
  }
  Svd2 svd = svd_2x2(m);
  if (mode == ProcrustesMode::rotation_only && svd.u.reflection != svd.v.reflection) {
    svd.u.m.b = -svd.u.m.b;
    svd.u.m.d = -svd.u.m.d;
    svd.u.reflection = !svd.u.reflection;
  }
  ProcrustesResult out;
  out.rotation.m = svd.u.m * svd.v.m.transpose();
  out.rotation.reflection = out.rotation.m.det() < 0.0;
  const Mat2& r = out.rotation.m;
  out.aligned.resize(n);
  double res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double sx = source[i].x - cs.x, sy = source[i].y - cs.y;
    const double ax = sx * r.a + sy * r.c;
    const double ay = sx * r.b + sy * r.d;
    const double dx = target[i].x - ct.x - ax, dy = target[i].y - ct.y - ay;
    res += dx * dx + dy * dy;
    out.aligned[i] = {ax + ct.x, ay + ct.y};
  }
  out.residual = std::sqrt(res);
  return out;
}

}  // namespace dtour
