#pragma once

// Keyframe generators: little (PCA) tour, Laplacian-eigenmap tour, grand tour
// random walk and sequential embedding tour.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dtour/dataset.hpp"
#include "dtour/error.hpp"
#include "dtour/geometry.hpp"
#include "dtour/spectral.hpp"
#include "dtour/tourpath.hpp"

namespace dtour {

namespace detail {

/// Flips v so that its entry of largest magnitude is positive.
template <typename Vec>
void canonical_sign(Vec&& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (std::abs(v(i)) > std::abs(v(best))) best = i;
  }
  if (v(best) < 0) v = -v;
}

inline Basis basis_from_eigen(const Eigen::VectorXd& c0, const Eigen::VectorXd& c1) {
  return gram_schmidt(PlaneMatrix::from_columns({c0.data(), static_cast<std::size_t>(c0.size())},
                                                {c1.data(), static_cast<std::size_t>(c1.size())}));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// PCA

struct PcaModel {
  Eigen::VectorXd mean;                // p
  Eigen::MatrixXd components;          // p x m, orthonormal columns
  Eigen::VectorXd explained_variance;  // m, descending

  std::size_t dims() const { return static_cast<std::size_t>(mean.size()); }
  std::size_t count() const { return static_cast<std::size_t>(components.cols()); }

  /// Scores (x - mean) * components, N x m.
  Eigen::MatrixXd transform(const Dataset& ds) const {
    const auto n = static_cast<Eigen::Index>(ds.n_rows());
    Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(n, components.cols());
    for (std::size_t j = 0; j < ds.n_dims(); ++j) {
      const auto& col = ds.columns[j];
      const double mu = mean(static_cast<Eigen::Index>(j));
      for (Eigen::Index i = 0; i < n; ++i) {
        const double v = static_cast<double>(col[static_cast<std::size_t>(i)]) - mu;
        scores.row(i) += v * components.row(static_cast<Eigen::Index>(j));
      }
    }
    return scores;
  }
};

/// Sample mean and covariance (N - 1 denominator) in double precision.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> mean_and_covariance(const Dataset& ds) {
  const std::size_t n = ds.n_rows(), p = ds.n_dims();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  for (std::size_t j = 0; j < p; ++j) {
    double s = 0.0;
    for (float v : ds.columns[j]) s += v;
    mean(static_cast<Eigen::Index>(j)) = s / static_cast<double>(n);
  }
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  constexpr std::size_t kBlock = 4096;
  Eigen::MatrixXd block(static_cast<Eigen::Index>(kBlock), static_cast<Eigen::Index>(p));
  for (std::size_t r0 = 0; r0 < n; r0 += kBlock) {
    const std::size_t rows = std::min(kBlock, n - r0);
    for (std::size_t j = 0; j < p; ++j) {
      const double mu = mean(static_cast<Eigen::Index>(j));
      for (std::size_t i = 0; i < rows; ++i) {
        block(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = ds.columns[j][r0 + i] - mu;
      }
    }
    const auto used = block.topRows(static_cast<Eigen::Index>(rows));
    cov.noalias() += used.transpose() * used;
  }
  if (n > 1) cov /= static_cast<double>(n - 1);
  return {mean, cov};
}

/// Top-m principal directions of the centered data, each signed so its
/// largest-magnitude entry is positive.
inline PcaModel fit_pca(const Dataset& ds, std::size_t m) {
  const std::size_t n = ds.n_rows(), p = ds.n_dims();
  if (m < 2 || m > p) throw Error(ErrorCode::InvalidArgument, "need 2 <= m <= p components");
  if (n <= m) throw Error(ErrorCode::InvalidArgument, "need more rows than components");
  auto [mean, cov] = mean_and_covariance(ds);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw Error(ErrorCode::RankDeficient, "eigendecomposition failed");
  const Eigen::VectorXd& values = eig.eigenvalues();  // ascending
  const double top = std::max(values(values.size() - 1), 0.0);
  std::size_t nonzero = 0;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (values(i) > 1e-12 * std::max(top, 1e-300)) ++nonzero;
  }
  if (nonzero < m) {
    throw Error(ErrorCode::RankDeficient, "only " + std::to_string(nonzero) +
                                              " nonzero principal components; reduce m");
  }
  PcaModel model;
  model.mean = mean;
  model.components.resize(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(m));
  model.explained_variance.resize(static_cast<Eigen::Index>(m));
  for (std::size_t k = 0; k < m; ++k) {
    const Eigen::Index src = static_cast<Eigen::Index>(p - 1 - k);
    Eigen::VectorXd v = eig.eigenvectors().col(src);
    detail::canonical_sign(v);
    model.components.col(static_cast<Eigen::Index>(k)) = v;
    model.explained_variance(static_cast<Eigen::Index>(k)) = std::max(values(src), 0.0);
  }
  return model;
}

/// Successive principal-component pairs (PC1,PC2), (PC2,PC3), ...,
/// closed by (PCk,PC1). With two components the wrap pair spans the same
/// plane, so the tour degenerates to one repeated keyframe.
inline KeyframeSequence little_tour(const PcaModel& pca, std::size_t n_components,
                                    Diagnostics* diag = nullptr) {
  if (n_components < 2 || n_components > pca.count()) {
    throw Error(ErrorCode::InvalidArgument, "n_components must be in [2, fitted components]");
  }
  KeyframeSequence seq;
  seq.cyclic = true;
  auto pc_name = [](std::size_t i) { return "PC" + std::to_string(i + 1); };
  if (n_components == 2) {
    warn(diag, "SingleKeyframe: a two-component little tour has a single distinct view");
    Basis b = detail::basis_from_eigen(pca.components.col(0), pca.components.col(1));
    for (int copy = 0; copy < 2; ++copy) seq.keyframes.push_back({b, "PC1-PC2", top_loadings(b)});
    return seq;
  }
  for (std::size_t i = 0; i < n_components; ++i) {
    const std::size_t j = (i + 1) % n_components;
    Basis b = detail::basis_from_eigen(pca.components.col(static_cast<Eigen::Index>(i)),
                                       pca.components.col(static_cast<Eigen::Index>(j)));
    seq.keyframes.push_back({b, pc_name(i) + "-" + pc_name(j), top_loadings(b)});
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Laplacian-eigenmap tour

/// Angles used for the q-eigenvector keyframe. For q >= 3 the uniform angles
/// 2*pi*(i-1)/q give orthogonal, equal-norm columns; q = 2 would make both
/// columns parallel to u1 - u2, so it uses (0, pi/2) instead.
inline std::vector<double> le_angles(std::size_t q) {
  std::vector<double> theta(q);
  for (std::size_t i = 0; i < q; ++i) {
    theta[i] = q == 2 ? 0.5 * std::numbers::pi * static_cast<double>(i)
                      : 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(q);
  }
  return theta;
}

/// Keyframe k spreads the first k + 2 spectral coordinates uniformly around
/// the circle. Bases live in the m-dimensional spectral space, so the data
/// to project is SpectralModel::embedding().
inline KeyframeSequence le_tour(const SpectralModel& model, std::size_t n_frames) {
  const std::size_t m = model.count();
  if (n_frames < 2) throw Error(ErrorCode::InvalidArgument, "n_frames must be >= 2");
  if (m < n_frames + 1) {
    throw Error(ErrorCode::InvalidArgument, "need n_frames + 1 eigenvectors, have " + std::to_string(m));
  }
  KeyframeSequence seq;
  seq.cyclic = true;
  for (std::size_t k = 0; k < n_frames; ++k) {
    const std::size_t q = k + 2;
    const auto theta = le_angles(q);
    PlaneMatrix cols(m);
    for (std::size_t i = 0; i < q; ++i) {
      cols(i, 0) = std::cos(theta[i]);
      cols(i, 1) = std::sin(theta[i]);
    }
    Basis b = gram_schmidt(cols);
    seq.keyframes.push_back({b, "LE1-" + std::to_string(q), top_loadings(b)});
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Grand tour

/// A basis uniformly distributed on the Grassmannian of 2-planes.
template <typename Rng>
Basis random_basis(std::size_t dims, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  while (true) {
    PlaneMatrix m(dims);
    for (std::size_t c = 0; c < 2; ++c) {
      for (double& v : m.col(c)) v = normal(rng);
    }
    try {
      return gram_schmidt(m);
    } catch (const Error&) {
      // Rank loss has probability zero; draw again.
    }
  }
}

/// Appends n_targets random planes to `current`. Deterministic given seed.
inline KeyframeSequence grand_tour_extend(KeyframeSequence current, std::size_t n_targets,
                                          std::uint64_t seed) {
  if (n_targets < 1) throw Error(ErrorCode::InvalidArgument, "n_targets must be >= 1");
  if (current.keyframes.empty()) throw Error(ErrorCode::TooFewKeyframes, "grand tour needs a start");
  std::mt19937_64 rng(seed);
  const std::size_t p = current.dims();
  const std::size_t start = current.size();
  for (std::size_t i = 0; i < n_targets; ++i) {
    Basis b = random_basis(p, rng);
    current.keyframes.push_back({b, "grand " + std::to_string(start + i), top_loadings(b)});
  }
  current.cyclic = true;
  return current;
}

inline KeyframeSequence grand_tour_extend(const Basis& start, std::size_t n_targets, std::uint64_t seed) {
  KeyframeSequence seq;
  seq.keyframes.push_back({start, "start", top_loadings(start)});
  return grand_tour_extend(std::move(seq), n_targets, seed);
}

// ---------------------------------------------------------------------------
// Sequential embedding tour

using Embedding = std::vector<Point2>;

struct SequentialTour {
  KeyframeSequence sequence;
  std::vector<Embedding> aligned;       // centered, unit RMS radius, Procrustes-chained
  Dataset stacked;                      // N x 2K: x0, y0, x1, y1, ...
  std::vector<double> residual_before;  // per consecutive pair, after normalization
  std::vector<double> residual_after;
};

namespace detail {

inline Embedding normalize_embedding(const Embedding& e) {
  Point2 c{};
  for (const auto& q : e) {
    c.x += q.x;
    c.y += q.y;
  }
  const double inv = 1.0 / static_cast<double>(e.size());
  c = {c.x * inv, c.y * inv};
  double ss = 0.0;
  for (const auto& q : e) ss += (q.x - c.x) * (q.x - c.x) + (q.y - c.y) * (q.y - c.y);
  const double rms = std::sqrt(ss * inv);
  if (!(rms > kDegeneracyEps)) throw Error(ErrorCode::DegeneratePointSet, "embedding has zero spread");
  Embedding out(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) out[i] = {(e[i].x - c.x) / rms, (e[i].y - c.y) / rms};
  return out;
}

inline double pair_residual(const Embedding& a, const Embedding& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += (a[i].x - b[i].x) * (a[i].x - b[i].x) + (a[i].y - b[i].y) * (a[i].y - b[i].y);
  }
  return std::sqrt(s);
}

}  // namespace detail

/// Stacks K precomputed 2D embeddings of the same points into one tour.
/// Each embedding is centered and scaled to unit RMS radius, and every
/// embedding after the first is Procrustes-aligned to its aligned
/// predecessor. Keyframe i is the coordinate pair (e_2i, e_2i+1) of the
/// stacked 2K-dimensional space; the tour uses affine blending.
inline SequentialTour sequential_tour(const std::vector<Embedding>& embeddings,
                                      const std::vector<std::string>& labels = {}) {
  const std::size_t k = embeddings.size();
  if (k < 2) throw Error(ErrorCode::TooFewKeyframes, "sequential tour needs at least 2 embeddings");
  if (!labels.empty() && labels.size() != k) throw Error(ErrorCode::LengthMismatch, "labels vs embeddings");
  const std::size_t n = embeddings.front().size();
  for (const auto& e : embeddings) {
    if (e.size() != n) throw Error(ErrorCode::LengthMismatch, "embeddings differ in point count");
  }
  SequentialTour out;
  for (std::size_t i = 0; i < k; ++i) {
    Embedding e = detail::normalize_embedding(embeddings[i]);
    if (i > 0) {
      const Embedding& prev = out.aligned.back();
      out.residual_before.push_back(detail::pair_residual(prev, e));
      ProcrustesResult pr = procrustes_align(e, prev);
      e = std::move(pr.aligned);
      out.residual_after.push_back(pr.residual);
    }
    out.aligned.push_back(std::move(e));
  }
  out.stacked.columns.assign(2 * k, std::vector<float>(n));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t r = 0; r < n; ++r) {
      out.stacked.columns[2 * i][r] = static_cast<float>(out.aligned[i][r].x);
      out.stacked.columns[2 * i + 1][r] = static_cast<float>(out.aligned[i][r].y);
    }
    const std::string name = labels.empty() ? "e" + std::to_string(i) : labels[i];
    out.stacked.dim_names.push_back(name + ".x");
    out.stacked.dim_names.push_back(name + ".y");
  }
  out.sequence.cyclic = true;
  out.sequence.blend = BlendMode::affine;
  for (std::size_t i = 0; i < k; ++i) {
    Basis b = Basis::canonical(2 * k, 2 * i, 2 * i + 1);
    out.sequence.keyframes.push_back(
        {b, labels.empty() ? "embedding " + std::to_string(i) : labels[i], {{2 * i, 1.0}, {2 * i + 1, 1.0}}});
  }
  return out;
}

}  // namespace dtour
