#pragma once

// Laplacian eigenmaps: exact kNN graph, normalized Laplacian, and the
// smallest nontrivial eigenpairs (dense solve for small N, thick-restart
// Lanczos otherwise).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dtour/dataset.hpp"
#include "dtour/error.hpp"

namespace dtour {

struct SpectralModel {
  Eigen::MatrixXd eigenvectors;  // N x m, unit-norm columns
  Eigen::VectorXd eigenvalues;   // m, ascending
  std::size_t knn_k = 0;

  std::size_t count() const { return static_cast<std::size_t>(eigenvectors.cols()); }

  /// The N x m spectral coordinates as a dataset, scaled by sqrt(N) so each
  /// column has unit RMS.
  Dataset embedding() const {
    Dataset ds;
    const auto n = eigenvectors.rows();
    const double scale = std::sqrt(static_cast<double>(n));
    for (Eigen::Index j = 0; j < eigenvectors.cols(); ++j) {
      std::vector<float> col(static_cast<std::size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i) col[static_cast<std::size_t>(i)] = static_cast<float>(eigenvectors(i, j) * scale);
      ds.columns.push_back(std::move(col));
      ds.dim_names.push_back("LE" + std::to_string(j + 1));
    }
    return ds;
  }
};

struct SpectralOptions {
  std::size_t max_points = 50000;
  std::size_t dense_limit = 2000;  // largest N solved with a dense eigensolver
  std::uint64_t seed = 0x5eed;
  double tolerance = 1e-9;
  int max_restarts = 5000;
};

/// Undirected neighbor graph as sorted adjacency lists.
using Adjacency = std::vector<std::vector<std::uint32_t>>;

namespace detail {

inline std::vector<double> row_major_copy(const Dataset& ds) {
  const std::size_t n = ds.n_rows(), p = ds.n_dims();
  std::vector<double> rows(n * p);
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t i = 0; i < n; ++i) rows[i * p + j] = ds.columns[j][i];
  }
  return rows;
}

inline double squared_distance(const double* a, const double* b, std::size_t p) {
  double s = 0.0;
  for (std::size_t k = 0; k < p; ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

inline void add_edge(Adjacency& adj, std::uint32_t a, std::uint32_t b) {
  auto insert = [](std::vector<std::uint32_t>& list, std::uint32_t v) {
    const auto it = std::lower_bound(list.begin(), list.end(), v);
    if (it == list.end() || *it != v) list.insert(it, v);
  };
  insert(adj[a], b);
  insert(adj[b], a);
}

inline std::vector<std::uint32_t> component_labels(const Adjacency& adj, std::uint32_t& count) {
  const auto n = static_cast<std::uint32_t>(adj.size());
  std::vector<std::uint32_t> label(n, std::numeric_limits<std::uint32_t>::max());
  count = 0;
  std::vector<std::uint32_t> stack;
  for (std::uint32_t s = 0; s < n; ++s) {
    if (label[s] != std::numeric_limits<std::uint32_t>::max()) continue;
    label[s] = count;
    stack.push_back(s);
    while (!stack.empty()) {
      const std::uint32_t v = stack.back();
      stack.pop_back();
      for (std::uint32_t w : adj[v]) {
        if (label[w] == std::numeric_limits<std::uint32_t>::max()) {
          label[w] = count;
          stack.push_back(w);
        }
      }
    }
    ++count;
  }
  return label;
}

}  // namespace detail

/// Union of directed k-nearest-neighbor edges (exact, brute force).
inline Adjacency knn_graph(const Dataset& ds, std::size_t k) {
  const std::size_t n = ds.n_rows(), p = ds.n_dims();
  if (k < 1 || k >= n) throw Error(ErrorCode::InvalidArgument, "knn_k must be in [1, N)");
  const auto rows = detail::row_major_copy(ds);
  Adjacency adj(n);
  std::vector<std::pair<double, std::uint32_t>> cand(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      cand[c++] = {detail::squared_distance(&rows[i * p], &rows[j * p], p), static_cast<std::uint32_t>(j)};
    }
    std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k - 1), cand.end());
    for (std::size_t t = 0; t < k; ++t) {
      detail::add_edge(adj, static_cast<std::uint32_t>(i), cand[t].second);
    }
  }
  return adj;
}

/// Links components through their closest inter-component point pairs until
/// the graph is connected. Returns the number of components found initially.
inline std::size_t connect_components(const Dataset& ds, Adjacency& adj) {
  const std::size_t n = ds.n_rows(), p = ds.n_dims();
  std::uint32_t count = 0;
  auto label = detail::component_labels(adj, count);
  const std::size_t initial = count;
  if (count <= 1) return initial;
  const auto rows = detail::row_major_copy(ds);
  while (count > 1) {
    // Closest outside pair for every component (one Boruvka round).
    struct Best {
      double d = std::numeric_limits<double>::infinity();
      std::uint32_t a = 0, b = 0;
    };
    std::vector<Best> best(count);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (label[i] == label[j]) continue;
        const double d = detail::squared_distance(&rows[i * p], &rows[j * p], p);
        for (std::uint32_t c : {label[i], label[j]}) {
          if (d < best[c].d) best[c] = {d, static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)};
        }
      }
    }
    for (const Best& e : best) detail::add_edge(adj, e.a, e.b);
    label = detail::component_labels(adj, count);
  }
  return initial;
}

namespace detail {

/// y = (I + D^-1/2 A D^-1/2) x, whose spectrum is 2 - spectrum(L).
struct ShiftedAdjacencyOperator {
  const Adjacency& adj;
  std::vector<double> inv_sqrt_deg;

  explicit ShiftedAdjacencyOperator(const Adjacency& a) : adj(a), inv_sqrt_deg(a.size()) {
    for (std::size_t i = 0; i < a.size(); ++i) inv_sqrt_deg[i] = 1.0 / std::sqrt(static_cast<double>(a[i].size()));
  }

  void apply(const double* x, double* y) const {
    for (std::size_t i = 0; i < adj.size(); ++i) {
      double s = 0.0;
      for (std::uint32_t j : adj[i]) s += inv_sqrt_deg[j] * x[j];
      y[i] = x[i] + inv_sqrt_deg[i] * s;
    }
  }
};

inline void orthogonalize(Eigen::Ref<Eigen::VectorXd> v, const Eigen::MatrixXd& basis, Eigen::Index cols,
                          const Eigen::VectorXd& trivial) {
  for (int pass = 0; pass < 2; ++pass) {
    v -= trivial * trivial.dot(v);
    if (cols > 0) {
      const auto used = basis.leftCols(cols);
      v -= used * (used.transpose() * v);
    }
  }
}

/// Largest `nev` eigenpairs of the shifted operator on the complement of
/// the trivial vector, by thick-restart Lanczos with full reorthogonalization.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> lanczos_top(const ShiftedAdjacencyOperator& op,
                                                                const Eigen::VectorXd& trivial,
                                                                Eigen::Index nev,
                                                                const SpectralOptions& opt,
                                                                Diagnostics* diag) {
  const auto n = static_cast<Eigen::Index>(op.adj.size());
  const Eigen::Index kmax = std::min<Eigen::Index>(n - 1, std::max<Eigen::Index>(2 * nev + 20, 60));
  const Eigen::Index keep = std::min<Eigen::Index>(kmax - 1, nev + (kmax - nev) / 2);
  Eigen::MatrixXd v(n, kmax), w(n, kmax);
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal;
  auto random_unit = [&](Eigen::Index cols) {
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) r(i) = normal(rng);
    orthogonalize(r, v, cols, trivial);
    return Eigen::VectorXd(r / r.norm());
  };
  v.col(0) = random_unit(0);
  Eigen::Index cur = 1;
  Eigen::VectorXd theta;
  Eigen::MatrixXd ritz;
  for (int restart = 0;; ++restart) {
    while (true) {
      op.apply(v.col(cur - 1).data(), w.col(cur - 1).data());
      if (cur == kmax) break;
      Eigen::VectorXd next = w.col(cur - 1);
      orthogonalize(next, v, cur, trivial);
      const double nn = next.norm();
      v.col(cur) = nn > 1e-12 ? Eigen::VectorXd(next / nn) : random_unit(cur);
      ++cur;
    }
    Eigen::MatrixXd h = v.transpose() * w;
    h = 0.5 * (h + h.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h);
    const Eigen::MatrixXd s = eig.eigenvectors().rightCols(keep).rowwise().reverse();
    theta = eig.eigenvalues().tail(keep).reverse();
    ritz = v * s;
    const Eigen::MatrixXd wr = w * s;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < nev; ++i) {
      worst = std::max(worst, (wr.col(i) - theta(i) * ritz.col(i)).norm());
    }
    if (worst < opt.tolerance) break;
    if (restart >= opt.max_restarts) {
      warn(diag, "Lanczos stopped before convergence (residual " + std::to_string(worst) + ")");
      break;
    }
    Eigen::VectorXd cont = w.col(kmax - 1);
    orthogonalize(cont, v, kmax, trivial);
    const double cn = cont.norm();
    v.leftCols(keep) = ritz;
    w.leftCols(keep) = wr;
    v.col(keep) = cn > 1e-12 ? Eigen::VectorXd(cont / cn) : random_unit(keep);
    cur = keep + 1;
  }
  return {theta.head(nev), ritz.leftCols(nev)};
}

}  // namespace detail

/// Laplacian eigenmap of the data: the m eigenvectors of the normalized
/// Laplacian I - D^-1/2 A D^-1/2 with smallest nonzero eigenvalue. A
/// disconnected kNN graph is repaired (with a warning) before solving.
inline SpectralModel fit_spectral(const Dataset& ds, std::size_t knn_k, std::size_t m,
                                  Diagnostics* diag = nullptr, const SpectralOptions& opt = {}) {
  const std::size_t n = ds.n_rows();
  if (n > opt.max_points) {
    throw Error(ErrorCode::TooManyPoints, std::to_string(n) + " points exceed the limit of " +
                                              std::to_string(opt.max_points) + "; subsample first");
  }
  if (knn_k < 2) throw Error(ErrorCode::InvalidArgument, "knn_k must be >= 2");
  if (m < 2 || m + 1 >= n) throw Error(ErrorCode::InvalidArgument, "need 2 <= m < N - 1");

  Adjacency adj = knn_graph(ds, knn_k);
  const std::size_t components = connect_components(ds, adj);
  if (components > 1) {
    warn(diag, "DisconnectedGraph: linked " + std::to_string(components) +
                   " components through nearest inter-component pairs");
  }

  const auto nn = static_cast<Eigen::Index>(n);
  const auto mm = static_cast<Eigen::Index>(m);
  SpectralModel model;
  model.knn_k = knn_k;
  Eigen::VectorXd trivial(nn);
  for (Eigen::Index i = 0; i < nn; ++i) trivial(i) = std::sqrt(static_cast<double>(adj[static_cast<std::size_t>(i)].size()));
  trivial.normalize();

  if (n <= opt.dense_limit) {
    Eigen::MatrixXd lap = Eigen::MatrixXd::Identity(nn, nn);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::uint32_t j : adj[i]) {
        lap(static_cast<Eigen::Index>(i), j) -=
            1.0 / std::sqrt(static_cast<double>(adj[i].size()) * static_cast<double>(adj[j].size()));
      }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(lap);
    model.eigenvalues = eig.eigenvalues().segment(1, mm);
    model.eigenvectors = eig.eigenvectors().middleCols(1, mm);
  } else {
    detail::ShiftedAdjacencyOperator op(adj);
    auto [theta, vecs] = detail::lanczos_top(op, trivial, mm, opt, diag);
    model.eigenvalues = (2.0 - theta.array()).matrix();
    model.eigenvectors = vecs;
  }
  for (Eigen::Index j = 0; j < mm; ++j) {
    Eigen::VectorXd col = model.eigenvectors.col(j).normalized();
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < col.size(); ++i) {
      if (std::abs(col(i)) > std::abs(col(best))) best = i;
    }
    if (col(best) < 0) col = -col;
    model.eigenvectors.col(j) = col;
  }
  return model;
}

}  // namespace dtour
