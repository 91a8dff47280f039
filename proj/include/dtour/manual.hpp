#pragma once

// Manual tour: dragging one variable's axis handle, and rotating the view
// about the residual principal axis.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "dtour/error.hpp"
#include "dtour/geometry.hpp"

namespace dtour {

/// Requested 2D direction (norm <= 1) for row dim_index of the basis.
struct DragTarget {
  std::size_t dim_index = 0;
  std::array<double, 2> direction{0.0, 0.0};
};

enum class DragMethod {
  rotation,             // rotate within span(F, e_r); places the row exactly
  nearest_orthonormal,  // overwrite the row, then take the polar factor
};

struct DragResult {
  Basis basis;
  bool applied = false;  // false: the request was a no-op and basis is the input
};

namespace detail {

using Mat3 = std::array<std::array<double, 3>, 3>;

/// Smallest rotation taking unit vector a onto unit vector b.
inline Mat3 minimal_rotation(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  const std::array<double, 3> v{a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
  const double c = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
  Mat3 r{};
  if (c < -1.0 + 1e-12) {
    // Half turn about an axis orthogonal to a.
    std::size_t k = 0;
    for (std::size_t i = 1; i < 3; ++i) {
      if (std::abs(a[i]) < std::abs(a[k])) k = i;
    }
    std::array<double, 3> n{};
    n[k] = 1.0;
    const double d = a[k];
    double nn = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      n[i] -= d * a[i];
      nn += n[i] * n[i];
    }
    nn = std::sqrt(nn);
    for (auto& x : n) x /= nn;
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) r[i][j] = 2.0 * n[i] * n[j] - (i == j ? 1.0 : 0.0);
    }
    return r;
  }
  const Mat3 vx{{{0.0, -v[2], v[1]}, {v[2], 0.0, -v[0]}, {-v[1], v[0], 0.0}}};
  const double f = 1.0 / (1.0 + c);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double vx2 = 0.0;
      for (std::size_t k = 0; k < 3; ++k) vx2 += vx[i][k] * vx[k][j];
      r[i][j] = (i == j ? 1.0 : 0.0) + vx[i][j] + f * vx2;
    }
  }
  return r;
}

/// Rotation by angle about unit axis u (Rodrigues).
inline Mat3 axis_rotation(const std::array<double, 3>& u, double angle) {
  const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
  return {{{c + t * u[0] * u[0], t * u[0] * u[1] - s * u[2], t * u[0] * u[2] + s * u[1]},
           {t * u[1] * u[0] + s * u[2], c + t * u[1] * u[1], t * u[1] * u[2] - s * u[0]},
           {t * u[2] * u[0] - s * u[1], t * u[2] * u[1] + s * u[0], c + t * u[2] * u[2]}}};
}

/// First two columns of [c0 c1 w] * r, re-orthonormalized.
inline Basis apply_frame_rotation(const Basis& basis, std::span<const double> w, const Mat3& r) {
  const std::size_t p = basis.dims();
  PlaneMatrix out(p);
  for (std::size_t i = 0; i < p; ++i) {
    const double frame[3] = {basis(i, 0), basis(i, 1), w.empty() ? 0.0 : w[i]};
    for (std::size_t c = 0; c < 2; ++c) {
      out(i, c) = frame[0] * r[0][c] + frame[1] * r[1][c] + frame[2] * r[2][c];
    }
  }
  return gram_schmidt(out);
}

/// Unit vector completing the view plane towards e_r, and the length of
/// e_r's component outside the plane.
inline std::pair<std::vector<double>, double> plane_complement(const Basis& basis, std::size_t r) {
  const std::size_t p = basis.dims();
  auto residual_of = [&](std::size_t axis) {
    std::vector<double> w(p, 0.0);
    w[axis] = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t c = 0; c < 2; ++c) {
        const double d = dot(basis.col(c), w);
        for (std::size_t i = 0; i < p; ++i) w[i] -= d * basis(i, c);
      }
    }
    return w;
  };
  std::vector<double> w = residual_of(r);
  const double wn = norm(w);
  if (wn > 1e-9) {
    for (auto& x : w) x /= wn;
    return {w, wn};
  }
  // e_r lies in the plane: any unit direction outside it will do.
  std::size_t best = r;
  double best_norm = -1.0;
  for (std::size_t axis = 0; axis < p; ++axis) {
    const double n = norm(residual_of(axis));
    if (n > best_norm) {
      best_norm = n;
      best = axis;
    }
  }
  w = residual_of(best);
  for (auto& x : w) x /= best_norm;
  return {w, 0.0};
}

}  // namespace detail

/// Moves row dim_index of the basis towards drag.direction.
///
/// The rotation method works in the 3D space spanned by the view plane and
/// e_r: it applies the smallest rotation that carries e_r's in-frame
/// coordinates (F_r, |e_r - F F_r|) onto (d, sqrt(1 - |d|^2)), so row r of the
/// result equals d and dragging back restores the original frame. With p = 2
/// only the direction of d is attainable.
inline DragResult manual_drag(const Basis& basis, const DragTarget& drag,
                              DragMethod method = DragMethod::rotation) {
  const std::size_t p = basis.dims();
  if (drag.dim_index >= p) throw Error(ErrorCode::InvalidArgument, "drag dimension out of range");
  double dx = drag.direction[0], dy = drag.direction[1];
  if (!std::isfinite(dx) || !std::isfinite(dy)) throw Error(ErrorCode::InvalidArgument, "drag direction is not finite");
  const double dn = std::hypot(dx, dy);
  if (dn > 1.0) {
    dx /= dn;
    dy /= dn;
  }
  const std::size_t r = drag.dim_index;

  if (method == DragMethod::nearest_orthonormal) {
    PlaneMatrix m = basis.matrix();
    m(r, 0) = dx;
    m(r, 1) = dy;
    try {
      return {nearest_orthonormal(m), true};
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateBasis) throw;
      return {basis, false};
    }
  }

  if (p == 2) {
    if (!(dn > kDegeneracyEps)) return {basis, false};
    const double fx = basis(r, 0), fy = basis(r, 1);
    const double angle = std::atan2(fx * dy - fy * dx, fx * dx + fy * dy);
    return {right_multiply(basis, Mat2::rotation(angle).transpose()), true};
  }

  const auto [w, wn] = detail::plane_complement(basis, r);
  const double h2 = std::sqrt(std::max(0.0, 1.0 - dx * dx - dy * dy));
  const std::array<double, 3> g{basis(r, 0), basis(r, 1), wn};
  const std::array<double, 3> h{dx, dy, h2};
  // Columns of the new frame are [F w] * R with R^T g = h.
  const detail::Mat3 rt = detail::minimal_rotation(g, h);
  detail::Mat3 rot{};
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) rot[i][j] = rt[j][i];
  }
  return {detail::apply_frame_rotation(basis, w, rot), true};
}

/// Leading principal direction of the data after projecting out the view
/// plane: the top eigenvector of P Cov P with P = I - F F^T. Empty when
/// there is no residual dimension or no residual variance.
inline std::optional<std::vector<double>> residual_axis(const Basis& basis, const Eigen::MatrixXd& cov) {
  const std::size_t p = basis.dims();
  if (static_cast<std::size_t>(cov.rows()) != p || static_cast<std::size_t>(cov.cols()) != p) {
    throw Error(ErrorCode::DimensionMismatch, "covariance does not match basis dimensions");
  }
  if (p <= 2) return std::nullopt;
  const auto n = static_cast<Eigen::Index>(p);
  Eigen::MatrixXd f(n, 2);
  for (std::size_t i = 0; i < p; ++i) {
    f(static_cast<Eigen::Index>(i), 0) = basis(i, 0);
    f(static_cast<Eigen::Index>(i), 1) = basis(i, 1);
  }
  const Eigen::MatrixXd proj = Eigen::MatrixXd::Identity(n, n) - f * f.transpose();
  Eigen::MatrixXd m = proj * cov * proj;
  m = 0.5 * (m + m.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  const double top = eig.eigenvalues()(n - 1);
  const double scale = std::max(cov.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  if (!(top > 1e-12 * scale)) return std::nullopt;
  Eigen::VectorXd v = eig.eigenvectors().col(n - 1);
  for (int pass = 0; pass < 2; ++pass) v -= f * (f.transpose() * v);
  v.normalize();
  Eigen::Index big = 0;
  for (Eigen::Index i = 1; i < n; ++i) {
    if (std::abs(v(i)) > std::abs(v(big))) big = i;
  }
  if (v(big) < 0) v = -v;
  return std::vector<double>(v.data(), v.data() + n);
}

/// A residual rotation result: the new frame and where the residual axis
/// went, so successive rotations of one gesture compose exactly.
struct ResidualRotation {
  Basis basis;
  std::vector<double> axis;
};

/// Rotates the 3D frame [col0, col1, axis] by angle about the in-plane
/// direction in_plane (a 2D direction of the view, default the x axis),
/// mixing the view plane with the residual axis.
inline ResidualRotation rotate_about_residual(const Basis& basis, std::span<const double> axis, double angle,
                                              std::array<double, 2> in_plane = {1.0, 0.0}) {
  const std::size_t p = basis.dims();
  if (axis.size() != p) throw Error(ErrorCode::DimensionMismatch, "axis length differs from basis dims");
  if (std::abs(detail::norm(axis) - 1.0) > 1e-6) throw Error(ErrorCode::InvalidArgument, "axis is not a unit vector");
  for (std::size_t c = 0; c < 2; ++c) {
    const double d = detail::dot(basis.col(c), axis);
    if (std::abs(d) > 1e-6) {
      throw Error(ErrorCode::AxisNotOrthogonal, "axis has inner product " + std::to_string(d) + " with column " +
                                                    std::to_string(c));
    }
  }
  const double un = std::hypot(in_plane[0], in_plane[1]);
  if (!(un > kDegeneracyEps)) throw Error(ErrorCode::InvalidArgument, "in-plane rotation axis is zero");
  const detail::Mat3 rot = detail::axis_rotation({in_plane[0] / un, in_plane[1] / un, 0.0}, angle);
  ResidualRotation out{detail::apply_frame_rotation(basis, axis, rot), std::vector<double>(p)};
  for (std::size_t i = 0; i < p; ++i) {
    out.axis[i] = basis(i, 0) * rot[0][2] + basis(i, 1) * rot[1][2] + axis[i] * rot[2][2];
  }
  // Keep the carried axis orthogonal to the re-orthonormalized plane.
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t c = 0; c < 2; ++c) {
      const double d = detail::dot(out.basis.col(c), out.axis);
      for (std::size_t i = 0; i < p; ++i) out.axis[i] -= d * out.basis(i, c);
    }
  }
  const double an = detail::norm(out.axis);
  for (auto& x : out.axis) x /= an;
  return out;
}

}  // namespace dtour
