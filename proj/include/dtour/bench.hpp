#pragma once

// Headless throughput measurement: full projections per second and
// basis_at latency.

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtour/engine.hpp"
#include "dtour/strategies.hpp"
#include "dtour/tourpath.hpp"

namespace dtour {

struct BenchOptions {
  std::size_t n = 1'000'000;
  std::size_t p = 16;
  double seconds = 2.0;           // projection measurement window
  std::size_t min_frames = 10;
  std::size_t path_dims = 64;     // basis_at benchmark path
  std::size_t path_keyframes = 100;
  std::size_t lookups = 5000;
  std::uint64_t seed = 1;
  ProjectOptions projection;
};

struct LatencySummary {
  double p50_us = 0, p90_us = 0, p99_us = 0, max_us = 0;
};

struct BenchReport {
  std::size_t n = 0, p = 0;
  unsigned threads = 0;
  std::size_t frames = 0;
  double projections_per_second = 0;
  double projection_ms_median = 0;
  std::size_t path_dims = 0, path_keyframes = 0;
  double compile_ms = 0;
  LatencySummary basis_at;

  nlohmann::json to_json() const {
    return {{"n", n},
            {"p", p},
            {"threads", threads},
            {"frames", frames},
            {"projections_per_second", projections_per_second},
            {"projection_ms_median", projection_ms_median},
            {"path", {{"dims", path_dims}, {"keyframes", path_keyframes}, {"compile_ms", compile_ms}}},
            {"basis_at_us",
             {{"p50", basis_at.p50_us}, {"p90", basis_at.p90_us}, {"p99", basis_at.p99_us}, {"max", basis_at.max_us}}}};
  }
};

/// N x p standard normal data (float), seeded.
inline Dataset random_dataset(std::size_t n, std::size_t p, std::uint64_t seed) {
  Dataset ds;
  ds.columns.assign(p, std::vector<float>(n));
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal;
  for (auto& col : ds.columns) {
    for (float& v : col) v = normal(rng);
  }
  for (std::size_t j = 0; j < p; ++j) ds.dim_names.push_back("d" + std::to_string(j));
  return ds;
}

namespace detail {

inline LatencySummary summarize(std::vector<double> us) {
  if (us.empty()) return {};
  std::sort(us.begin(), us.end());
  auto at = [&](double q) { return us[std::min(us.size() - 1, static_cast<std::size_t>(q * static_cast<double>(us.size())))]; };
  return {at(0.5), at(0.9), at(0.99), us.back()};
}

}  // namespace detail

/// Measures projection throughput on `data` (or generated data when null)
/// and basis_at latency on a random path.
inline BenchReport run_bench(const BenchOptions& opt, const Dataset* data = nullptr) {
  using Clock = std::chrono::steady_clock;
  Dataset generated;
  if (data == nullptr) {
    if (opt.n == 0 || opt.p < 2) throw Error(ErrorCode::EmptyDataset, "benchmark needs N >= 1 and p >= 2");
    generated = random_dataset(opt.n, opt.p, opt.seed);
    data = &generated;
  }
  if (data->n_rows() == 0) throw Error(ErrorCode::EmptyDataset, "benchmark data has no rows");
  BenchReport rep;
  rep.n = data->n_rows();
  rep.p = data->n_dims();
  rep.threads = opt.projection.threads != 0 ? opt.projection.threads : std::max(1u, std::thread::hardware_concurrency());

  std::mt19937_64 rng(opt.seed);
  const Basis first = random_basis(rep.p, rng);
  Projection warm = project(*data, first, opt.projection);
  std::vector<double> frame_ms;
  const auto start = Clock::now();
  double elapsed = 0.0;
  while (elapsed < opt.seconds || frame_ms.size() < opt.min_frames) {
    const Basis b = random_basis(rep.p, rng);
    const auto t0 = Clock::now();
    warm = project(*data, b, opt.projection);
    const auto t1 = Clock::now();
    frame_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    elapsed = std::chrono::duration<double>(t1 - start).count();
  }
  rep.frames = frame_ms.size();
  rep.projections_per_second = static_cast<double>(rep.frames) / elapsed;
  std::sort(frame_ms.begin(), frame_ms.end());
  rep.projection_ms_median = frame_ms[frame_ms.size() / 2];

  rep.path_dims = opt.path_dims;
  rep.path_keyframes = opt.path_keyframes;
  const auto seq = grand_tour_extend(random_basis(opt.path_dims, rng), opt.path_keyframes - 1, opt.seed + 1);
  const auto c0 = Clock::now();
  const TourPath path(seq);
  rep.compile_ms = std::chrono::duration<double, std::milli>(Clock::now() - c0).count();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> us;
  us.reserve(opt.lookups);
  volatile double sink = 0.0;
  for (std::size_t i = 0; i < opt.lookups; ++i) {
    const double t = unit(rng);
    const auto t0 = Clock::now();
    const Basis b = path.basis_at(t);
    us.push_back(std::chrono::duration<double, std::micro>(Clock::now() - t0).count());
    sink = sink + b(0, 0);
  }
  rep.basis_at = detail::summarize(std::move(us));
  return rep;
}

}  // namespace dtour
