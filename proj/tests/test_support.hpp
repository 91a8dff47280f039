#pragma once

// Independent oracles and fixtures shared by the test suites. Nothing here
// calls into the routine it is used to check.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "dtour/dtour.hpp"

namespace dtour::testing {

/// Runs `f` and returns the code of the dtour::Error it throws.
inline ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorCode::IoError;
}

inline Eigen::MatrixXd to_eigen(const Basis& b) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(b.dims()), 2);
  for (std::size_t i = 0; i < b.dims(); ++i) {
    m(static_cast<Eigen::Index>(i), 0) = b(i, 0);
    m(static_cast<Eigen::Index>(i), 1) = b(i, 1);
  }
  return m;
}

/// Orthonormalizes the columns of m with Householder QR (sign-fixed so the
/// diagonal of R is positive) and adopts the result as a Basis.
inline Basis basis_from_eigen_qr(const Eigen::MatrixXd& m) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), 2);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(2).triangularView<Eigen::Upper>();
  for (Eigen::Index c = 0; c < 2; ++c) {
    if (r(c, c) < 0) q.col(c) = -q.col(c);
  }
  PlaneMatrix pm(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    pm(static_cast<std::size_t>(i), 0) = q(i, 0);
    pm(static_cast<std::size_t>(i), 1) = q(i, 1);
  }
  return Basis::from_orthonormal(std::move(pm), 1e-12);
}

/// A basis drawn with Eigen's own Gaussian matrix and QR, independent of
/// the library's random_basis.
inline Basis oracle_random_basis(std::size_t p, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd m(static_cast<Eigen::Index>(p), 2);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return basis_from_eigen_qr(m);
}

/// Basis from two explicit column vectors (must already be orthonormal).
inline Basis basis_of(const std::vector<double>& c0, const std::vector<double>& c1) {
  PlaneMatrix m = PlaneMatrix::from_columns(c0, c1);
  return Basis::from_orthonormal(std::move(m), 1e-12);
}

/// span(e1, cos(theta) e2 + sin(theta) e3) in p dimensions.
inline Basis tilted_plane(std::size_t p, double theta) {
  std::vector<double> c0(p, 0.0), c1(p, 0.0);
  c0[0] = 1.0;
  c1[1] = std::cos(theta);
  c1[2] = std::sin(theta);
  return basis_of(c0, c1);
}

/// Principal angles from Eigen's Jacobi SVD: cosines from a^T b, sines from
/// (I - a a^T) b, combined with atan2 so tiny angles stay accurate.
inline std::pair<double, double> oracle_principal_angles(const Basis& a, const Basis& b) {
  const Eigen::MatrixXd fa = to_eigen(a), fb = to_eigen(b);
  const Eigen::Vector2d cosines = Eigen::JacobiSVD<Eigen::MatrixXd>(fa.transpose() * fb).singularValues();
  const Eigen::MatrixXd resid = fb - fa * (fa.transpose() * fb);
  const Eigen::Vector2d sines = Eigen::JacobiSVD<Eigen::MatrixXd>(resid).singularValues();
  // Largest cosine pairs with smallest sine.
  return {std::atan2(sines(1), cosines(0)), std::atan2(sines(0), cosines(1))};
}

inline double oracle_geodesic(const Basis& a, const Basis& b) {
  const auto [t0, t1] = oracle_principal_angles(a, b);
  return std::hypot(t0, t1);
}

/// Largest |F^T F - I| entry computed with Eigen.
inline double oracle_orthonormality_error(const Basis& b) {
  const Eigen::MatrixXd f = to_eigen(b);
  return (f.transpose() * f - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff();
}

/// Symmetric eigen-decomposition by cyclic Jacobi rotations; eigenvalues
/// descending with matching eigenvector columns.
inline std::pair<std::vector<double>, std::vector<std::vector<double>>> jacobi_eigen(
    std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) off += a[i][j] * a[i][j];
    }
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x][x] > a[y][y]; });
  std::vector<double> values;
  std::vector<std::vector<double>> vectors;
  for (std::size_t k : order) {
    values.push_back(a[k][k]);
    std::vector<double> col(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = v[i][k];
    vectors.push_back(col);
  }
  return {values, vectors};
}

/// Two-pass sample covariance of the dataset columns (divisor N - 1).
inline std::vector<std::vector<double>> oracle_covariance(const Dataset& ds) {
  const std::size_t n = ds.n_rows(), p = ds.n_dims();
  std::vector<double> mean(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    for (float v : ds.columns[j]) mean[j] += v;
    mean[j] /= static_cast<double>(n);
  }
  std::vector<std::vector<double>> cov(p, std::vector<double>(p, 0.0));
  for (std::size_t a = 0; a < p; ++a) {
    for (std::size_t b = a; b < p; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        s += (ds.columns[a][i] - mean[a]) * (ds.columns[b][i] - mean[b]);
      }
      cov[a][b] = cov[b][a] = s / static_cast<double>(n - 1);
    }
  }
  return cov;
}

/// N rows of independent Gaussians with the given standard deviations.
inline Dataset gaussian_dataset(std::size_t n, const std::vector<double>& sd, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Dataset ds;
  ds.columns.assign(sd.size(), std::vector<float>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < sd.size(); ++j) ds.columns[j][i] = static_cast<float>(sd[j] * normal(rng));
  }
  for (std::size_t j = 0; j < sd.size(); ++j) ds.dim_names.push_back("x" + std::to_string(j));
  return ds;
}

/// Naive double-precision N x 2 product.
inline std::vector<std::array<double, 2>> oracle_project(const Dataset& ds, const Basis& b) {
  std::vector<std::array<double, 2>> out(ds.n_rows(), {0.0, 0.0});
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    for (std::size_t c = 0; c < 2; ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < ds.n_dims(); ++j) s += static_cast<double>(ds.columns[j][i]) * b(j, c);
      out[i][c] = s;
    }
  }
  return out;
}

/// Even-odd point-in-polygon by counting crossings of a ray towards +x,
/// evaluating each edge crossing in long double.
inline bool oracle_inside(const std::vector<std::array<double, 2>>& poly, double x, double y) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % n];
    const bool a_above = a[1] > y, b_above = b[1] > y;
    if (a_above == b_above) continue;
    const long double xc = static_cast<long double>(a[0]) +
                           (static_cast<long double>(y) - a[1]) * (static_cast<long double>(b[0]) - a[0]) /
                               (static_cast<long double>(b[1]) - a[1]);
    if (static_cast<long double>(x) < xc) inside = !inside;
  }
  return inside;
}

/// Unique scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("dtour_test_" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Coefficient of variation of consecutive geodesic steps along `frames`.
inline double step_cv(const std::vector<Basis>& frames) {
  std::vector<double> steps;
  for (std::size_t i = 1; i < frames.size(); ++i) steps.push_back(oracle_geodesic(frames[i - 1], frames[i]));
  double mean = 0.0;
  for (double s : steps) mean += s;
  mean /= static_cast<double>(steps.size());
  double var = 0.0;
  for (double s : steps) var += (s - mean) * (s - mean);
  var /= static_cast<double>(steps.size());
  return std::sqrt(var) / mean;
}

/// Keyframes span(e1, cos(theta) e2 + sin(theta) e3) at theta = 0, 0.1, 0.6,
/// 0.7: a non-cyclic path whose segments have lengths 0.1 : 0.5 : 0.1.
inline KeyframeSequence uneven_sequence() {
  KeyframeSequence seq;
  seq.cyclic = false;
  for (double theta : {0.0, 0.1, 0.6, 0.7}) seq.keyframes.push_back({tilted_plane(4, theta), "", {}});
  return seq;
}

/// Frames at 256 uniform steps of t, by arc length and by the naive
/// per-segment-uniform parameterization.
inline std::pair<double, double> uniformity_cvs(const TourPath& path, std::size_t steps = 256) {
  std::vector<Basis> arc, naive;
  const double segments = static_cast<double>(path.segment_count());
  for (std::size_t i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(steps);
    arc.push_back(path.basis_at(t));
    const double raw = t * segments;
    const auto seg = std::min(static_cast<std::size_t>(raw), path.segment_count() - 1);
    naive.push_back(path.segment_basis(seg, raw - static_cast<double>(seg)));
  }
  return {step_cv(arc), step_cv(naive)};
}

}  // namespace dtour::testing
