#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "test_support.hpp"

using namespace dtour;
using namespace dtour::testing;

namespace {

constexpr double kPi = std::numbers::pi;

Mat2 random_mat2(std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng), u(rng)};
}

double max_abs(const Mat2& m) { return std::max({std::abs(m.a), std::abs(m.b), std::abs(m.c), std::abs(m.d)}); }

Mat2 minus(const Mat2& x, const Mat2& y) { return {x.a - y.a, x.b - y.b, x.c - y.c, x.d - y.d}; }

Mat2 reconstruct(const Svd2& s) {
  const Mat2 sig{s.sigma[0], 0.0, 0.0, s.sigma[1]};
  return s.u.m * sig * s.v.m.transpose();
}

}  // namespace

// ---------------------------------------------------------------------------
// Basis and Gram-Schmidt

TEST(GramSchmidt, TextbookExample) {
  const PlaneMatrix m = PlaneMatrix::from_columns(std::vector<double>{1, 0, 0}, std::vector<double>{1, 1, 0});
  const Basis b = gram_schmidt(m);
  EXPECT_NEAR(b(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(b(1, 0), 0.0, 1e-15);
  EXPECT_NEAR(b(0, 1), 0.0, 1e-15);
  EXPECT_NEAR(b(1, 1), 1.0, 1e-15);
  EXPECT_NEAR(b(2, 1), 0.0, 1e-15);
}

TEST(GramSchmidt, OrthonormalInputIsFixedPoint) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Basis b = oracle_random_basis(3 + trial % 20, rng);
    const Basis g = gram_schmidt(b.matrix());
    for (std::size_t i = 0; i < b.dims(); ++i) {
      EXPECT_NEAR(g(i, 0), b(i, 0), 1e-12);
      EXPECT_NEAR(g(i, 1), b(i, 1), 1e-12);
    }
  }
}

TEST(GramSchmidt, RandomRankTwoMatricesAreOrthonormalAndSpanPreserving) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t p = 3 + static_cast<std::size_t>(trial) % 62;
    PlaneMatrix m(p);
    for (std::size_t c = 0; c < 2; ++c) {
      for (double& v : m.col(c)) v = normal(rng);
    }
    const Basis b = gram_schmidt(m);
    ASSERT_LT(oracle_orthonormality_error(b), 1e-10);
    // First column is the normalized first input column.
    const double n0 = detail::norm(m.col(0));
    for (std::size_t i = 0; i < p; ++i) ASSERT_NEAR(b(i, 0), m(i, 0) / n0, 1e-12);
    // Same span: the input columns have no component outside the output plane.
    const Eigen::MatrixXd f = to_eigen(b);
    for (std::size_t c = 0; c < 2; ++c) {
      Eigen::VectorXd v(static_cast<Eigen::Index>(p));
      for (std::size_t i = 0; i < p; ++i) v(static_cast<Eigen::Index>(i)) = m(i, c);
      ASSERT_LT((v - f * (f.transpose() * v)).norm(), 1e-10 * v.norm());
    }
  }
}

TEST(GramSchmidt, DegenerateInputsThrow) {
  auto code_of = [](const PlaneMatrix& m) {
    try {
      (void)gram_schmidt(m);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::IoError;
  };
  EXPECT_EQ(code_of(PlaneMatrix::from_columns(std::vector<double>{0, 0, 0}, std::vector<double>{0, 1, 0})),
            ErrorCode::DegenerateBasis);
  EXPECT_EQ(code_of(PlaneMatrix::from_columns(std::vector<double>{1, 2, 3}, std::vector<double>{2, 4, 6})),
            ErrorCode::DegenerateBasis);
  EXPECT_EQ(code_of(PlaneMatrix::from_columns(std::vector<double>{1}, std::vector<double>{0})),
            ErrorCode::DegenerateBasis);
}

TEST(Basis, FromOrthonormalChecksInvariant) {
  EXPECT_NO_THROW(Basis::from_orthonormal(Basis::canonical(4, 0, 2).matrix()));
  PlaneMatrix m = Basis::canonical(4, 0, 2).matrix();
  m(0, 0) = 1.5;
  EXPECT_THROW(Basis::from_orthonormal(m), Error);
  EXPECT_THROW(Basis::canonical(3, 1, 1), Error);
  EXPECT_THROW(Basis::canonical(3, 0, 3), Error);
}

// ---------------------------------------------------------------------------
// 2x2 SVD

TEST(Svd2, IdentityAndDiagonal) {
  const Svd2 id = svd_2x2(Mat2::identity());
  EXPECT_NEAR(id.sigma[0], 1.0, 1e-15);
  EXPECT_NEAR(id.sigma[1], 1.0, 1e-15);
  const Svd2 d = svd_2x2({2.0, 0.0, 0.0, 0.5});
  EXPECT_NEAR(d.sigma[0], 2.0, 1e-15);
  EXPECT_NEAR(d.sigma[1], 0.5, 1e-15);
  const Svd2 swapped = svd_2x2({0.5, 0.0, 0.0, 2.0});
  EXPECT_NEAR(swapped.sigma[0], 2.0, 1e-15);
  EXPECT_NEAR(swapped.sigma[1], 0.5, 1e-15);
}

TEST(Svd2, MatchesJacobiOracleAndReconstructs) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10000; ++trial) {
    const double scale = std::pow(10.0, static_cast<double>(trial % 7) - 3.0);
    const Mat2 m = random_mat2(rng, scale);
    const Svd2 s = svd_2x2(m);
    Eigen::Matrix2d e;
    e << m.a, m.b, m.c, m.d;
    const Eigen::Vector2d oracle = Eigen::JacobiSVD<Eigen::Matrix2d>(e).singularValues();
    ASSERT_GE(s.sigma[0], s.sigma[1]);
    ASSERT_GE(s.sigma[1], 0.0);
    ASSERT_NEAR(s.sigma[0], oracle(0), 1e-12 * std::max(1.0, oracle(0)));
    ASSERT_NEAR(s.sigma[1], oracle(1), 1e-12 * std::max(1.0, oracle(0)));
    ASSERT_LT(max_abs(minus(reconstruct(s), m)), 1e-12 * std::max(1.0, scale));
    for (const Rotation2* r : {&s.u, &s.v}) {
      ASSERT_LT(max_abs(minus(r->m * r->m.transpose(), Mat2::identity())), 1e-12);
      ASSERT_NEAR(r->m.det(), r->reflection ? -1.0 : 1.0, 1e-12);
    }
  }
}

TEST(Svd2, SingularAndReflectedInputs) {
  for (const Mat2& m : {Mat2{0, 0, 0, 0}, Mat2{1, 2, 2, 4}, Mat2{1, 0, 0, -1}, Mat2{0, 1, 1, 0}, Mat2{3, 0, 0, 0}}) {
    const Svd2 s = svd_2x2(m);
    EXPECT_LT(max_abs(minus(reconstruct(s), m)), 1e-12);
    EXPECT_GE(s.sigma[1], 0.0);
  }
}

// ---------------------------------------------------------------------------
// Principal angles and geodesic distance

TEST(PrincipalAngles, SpotValues) {
  const Basis a = Basis::canonical(4, 0, 1);
  const PrincipalAngles same = principal_angles(a, a);
  EXPECT_EQ(same.tau0, 0.0);
  EXPECT_EQ(same.tau1, 0.0);
  const PrincipalAngles orth = principal_angles(a, Basis::canonical(4, 2, 3));
  EXPECT_NEAR(orth.tau0, kPi / 2, 1e-12);
  EXPECT_NEAR(orth.tau1, kPi / 2, 1e-12);
  const PrincipalAngles tilt = principal_angles(tilted_plane(3, 0.0), tilted_plane(3, 0.3));
  EXPECT_NEAR(tilt.tau0, 0.0, 1e-10);
  EXPECT_NEAR(tilt.tau1, 0.3, 1e-10);
}

TEST(PrincipalAngles, MatchBruteForceSvdOracle) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t p = 2 + static_cast<std::size_t>(trial) % 30;
    const Basis a = oracle_random_basis(p, rng), b = oracle_random_basis(p, rng);
    const PrincipalAngles pa = principal_angles(a, b);
    const auto [t0, t1] = oracle_principal_angles(a, b);
    ASSERT_LE(0.0, pa.tau0);
    ASSERT_LE(pa.tau0, pa.tau1);
    ASSERT_LE(pa.tau1, kPi / 2 + 1e-12);
    // arccos amplifies rounding near sigma = 1, so compare through cosines.
    ASSERT_NEAR(std::cos(pa.tau0), std::cos(t0), 1e-12);
    ASSERT_NEAR(std::cos(pa.tau1), std::cos(t1), 1e-12);
    const PrincipalAngles rev = principal_angles(b, a);
    ASSERT_NEAR(rev.tau0, pa.tau0, 1e-12);
    ASSERT_NEAR(rev.tau1, pa.tau1, 1e-12);
  }
}

TEST(PrincipalAngles, DimensionMismatchThrows) {
  try {
    (void)geodesic_distance(Basis::canonical(3, 0, 1), Basis::canonical(4, 0, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(Geodesic, OrthogonalPlanes) {
  EXPECT_NEAR(geodesic_distance(Basis::canonical(4, 0, 1), Basis::canonical(4, 2, 3)), kPi / std::sqrt(2.0),
              1e-12);
}

TEST(Geodesic, SingleAngleFamily) {
  for (double theta : {0.1, 0.3, 1.0}) {
    EXPECT_NEAR(geodesic_distance(tilted_plane(3, 0.0), tilted_plane(3, theta)), theta, 1e-10);
    EXPECT_NEAR(geodesic_distance(tilted_plane(7, 0.0), tilted_plane(7, theta)), theta, 1e-10);
  }
}

TEST(Geodesic, MetricPropertiesOverRandomTriples) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> angle(-kPi, kPi);
  for (std::size_t p : {3u, 4u, 8u, 64u}) {
    for (int trial = 0; trial < 1000; ++trial) {
      const Basis a = oracle_random_basis(p, rng), b = oracle_random_basis(p, rng), c = oracle_random_basis(p, rng);
      const double ab = geodesic_distance(a, b), ba = geodesic_distance(b, a);
      ASSERT_EQ(ab, ba);
      ASSERT_LE(ab, geodesic_distance(a, c) + geodesic_distance(c, b) + 1e-8);
      ASSERT_EQ(geodesic_distance(a, a), 0.0);
      Mat2 r = Mat2::rotation(angle(rng));
      if (trial % 2 == 1) r = r * Mat2{1, 0, 0, -1};
      ASSERT_NEAR(geodesic_distance(right_multiply(a, r), b), ab, 1e-10);
      ASSERT_NEAR(geodesic_distance(a, right_multiply(b, r)), ab, 1e-10);
      ASSERT_NEAR(geodesic_distance(a, right_multiply(a, r)), 0.0, 1e-10);
    }
  }
}

// ---------------------------------------------------------------------------
// Polar projection and Procrustes

TEST(NearestOrthonormal, FixedPointAndScaling) {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 200; ++trial) {
    const Basis f = oracle_random_basis(5 + trial % 10, rng);
    const Basis same = nearest_orthonormal(f.matrix());
    PlaneMatrix scaled = f.matrix();
    for (std::size_t c = 0; c < 2; ++c) {
      for (double& v : scaled.col(c)) v *= 2.0;
    }
    const Basis unscaled = nearest_orthonormal(scaled);
    for (std::size_t i = 0; i < f.dims(); ++i) {
      for (std::size_t c = 0; c < 2; ++c) {
        ASSERT_NEAR(same(i, c), f(i, c), 1e-12);
        ASSERT_NEAR(unscaled(i, c), f(i, c), 1e-10);
      }
    }
  }
}

TEST(NearestOrthonormal, MatchesSvdPolarFactorOnPerturbations) {
  std::mt19937_64 rng(52);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t p = 3 + static_cast<std::size_t>(trial) % 12;
    const Basis f = oracle_random_basis(p, rng);
    // Perturbation of Frobenius norm 0.01.
    PlaneMatrix noise(p);
    for (std::size_t c = 0; c < 2; ++c) {
      for (double& v : noise.col(c)) v = normal(rng);
    }
    const double scale = 0.01 / std::hypot(detail::norm(noise.col(0)), detail::norm(noise.col(1)));
    PlaneMatrix m = f.matrix();
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t i = 0; i < p; ++i) m(i, c) += scale * noise(i, c);
    }
    const Basis q = nearest_orthonormal(m);
    // Oracle: U V^T from Eigen's thin SVD of m.
    Eigen::MatrixXd em(static_cast<Eigen::Index>(p), 2);
    for (std::size_t i = 0; i < p; ++i) {
      em(static_cast<Eigen::Index>(i), 0) = m(i, 0);
      em(static_cast<Eigen::Index>(i), 1) = m(i, 1);
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(em, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::MatrixXd polar = svd.matrixU() * svd.matrixV().transpose();
    ASSERT_LT((to_eigen(q) - polar).cwiseAbs().maxCoeff(), 1e-12);
    ASSERT_LT(oracle_orthonormality_error(q), 1e-12);
    ASSERT_LT(geodesic_distance(q, f), 0.05);
  }
}

TEST(NearestOrthonormal, RankDeficientThrows) {
  EXPECT_THROW(nearest_orthonormal(PlaneMatrix::from_columns(std::vector<double>{1, 1, 0}, std::vector<double>{2, 2, 0})),
               Error);
}

TEST(Procrustes, RecoversKnownRotation) {
  std::mt19937_64 rng(61);
  std::normal_distribution<double> normal;
  std::vector<Point2> src(50), dst(50);
  const double a = 37.0 * kPi / 180.0;
  const Mat2 r = Mat2::rotation(a);
  for (std::size_t i = 0; i < src.size(); ++i) {
    src[i] = {normal(rng), normal(rng)};
    // Row-vector convention: target = source * R.
    dst[i] = {src[i].x * r.a + src[i].y * r.c + 3.0, src[i].x * r.b + src[i].y * r.d - 1.0};
  }
  const ProcrustesResult res = procrustes_align(src, dst);
  EXPECT_FALSE(res.rotation.reflection);
  EXPECT_LT(max_abs(minus(res.rotation.m, r)), 1e-9);
  EXPECT_LT(res.residual, 1e-9);
  for (std::size_t i = 0; i < src.size(); ++i) {
    EXPECT_NEAR(res.aligned[i].x, dst[i].x, 1e-9);
    EXPECT_NEAR(res.aligned[i].y, dst[i].y, 1e-9);
  }
}

TEST(Procrustes, IdentityAndMirror) {
  std::mt19937_64 rng(62);
  std::normal_distribution<double> normal;
  std::vector<Point2> src(30), mirror(30);
  for (std::size_t i = 0; i < src.size(); ++i) {
    src[i] = {normal(rng), normal(rng)};
    mirror[i] = {-src[i].x, src[i].y};
  }
  const ProcrustesResult same = procrustes_align(src, src);
  EXPECT_LT(max_abs(minus(same.rotation.m, Mat2::identity())), 1e-12);
  for (std::size_t i = 0; i < src.size(); ++i) {
    EXPECT_NEAR(same.aligned[i].x, src[i].x, 1e-12);
    EXPECT_NEAR(same.aligned[i].y, src[i].y, 1e-12);
  }
  const ProcrustesResult flip = procrustes_align(src, mirror);
  EXPECT_TRUE(flip.rotation.reflection);
  EXPECT_NEAR(flip.rotation.m.det(), -1.0, 1e-12);
  EXPECT_LT(flip.residual, 1e-10);
  const ProcrustesResult rot_only = procrustes_align(src, mirror, ProcrustesMode::rotation_only);
  EXPECT_FALSE(rot_only.rotation.reflection);
  EXPECT_GT(rot_only.residual, flip.residual);
}

TEST(Procrustes, EnlargingTheGroupNeverIncreasesResidual) {
  std::mt19937_64 rng(63);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Point2> a(20), b(20);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = {normal(rng), normal(rng)};
      b[i] = {normal(rng), normal(rng)};
    }
    const double full = procrustes_align(a, b).residual;
    const double rot = procrustes_align(a, b, ProcrustesMode::rotation_only).residual;
    ASSERT_LE(full, rot + 1e-12);
    // Brute force over rotation angles never beats the rotation-only optimum.
    double best = 1e300;
    for (int k = 0; k < 720; ++k) {
      const Mat2 r = Mat2::rotation(2 * kPi * k / 720.0);
      double s = 0.0;
      Point2 ca{}, cb{};
      for (std::size_t i = 0; i < a.size(); ++i) {
        ca = {ca.x + a[i].x / 20, ca.y + a[i].y / 20};
        cb = {cb.x + b[i].x / 20, cb.y + b[i].y / 20};
      }
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a[i].x - ca.x, y = a[i].y - ca.y;
        const double dx = x * r.a + y * r.c - (b[i].x - cb.x);
        const double dy = x * r.b + y * r.d - (b[i].y - cb.y);
        s += dx * dx + dy * dy;
      }
      best = std::min(best, std::sqrt(s));
    }
    ASSERT_LE(rot, best + 1e-9);
  }
}

TEST(Procrustes, Errors) {
  const std::vector<Point2> one{{1, 2}};
  const std::vector<Point2> two{{1, 2}, {3, 4}};
  const std::vector<Point2> same{{1, 1}, {1, 1}, {1, 1}};
  const std::vector<Point2> three{{0, 0}, {1, 0}, {0, 1}};
  try {
    (void)procrustes_align(two, three);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
  }
  try {
    (void)procrustes_align(same, three);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegeneratePointSet);
  }
  EXPECT_THROW((void)procrustes_align(one, one), Error);
}

TEST(FrameGeodesic, EndpointsAndConstantSpeed) {
  std::mt19937_64 rng(71);
  for (int trial = 0; trial < 100; ++trial) {
    const Basis a = oracle_random_basis(6, rng), b = oracle_random_basis(6, rng);
    EXPECT_EQ(frame_geodesic(a, b, 0.0), a);
    EXPECT_EQ(frame_geodesic(a, b, 1.0), b);
    const Mat2 g{detail::dot(a.col(0), b.col(0)), detail::dot(a.col(0), b.col(1)), detail::dot(a.col(1), b.col(0)),
                 detail::dot(a.col(1), b.col(1))};
    const auto [t0, t1] = oracle_principal_angles(a, b);
    // Same handedness: the geodesic. Opposite: tau1 is taken the long way.
    const double total = g.det() > 0 ? std::hypot(t0, t1) : std::hypot(t0, kPi - t1);
    std::vector<Basis> frames;
    for (int k = 0; k <= 20; ++k) {
      const Basis f = frame_geodesic(a, b, k / 20.0);
      ASSERT_LT(oracle_orthonormality_error(f), 1e-12);
      frames.push_back(f);
    }
    for (int k = 1; k <= 20; ++k) {
      ASSERT_NEAR(oracle_geodesic(frames[static_cast<std::size_t>(k - 1)], frames[static_cast<std::size_t>(k)]),
                  total / 20.0, 1e-8);
    }
  }
}

// ---------------------------------------------------------------------------
// Catmull-Rom spline

TEST(CatmullRom, ConstantSplineAndEndpoints) {
  std::mt19937_64 rng(81);
  const Basis b = oracle_random_basis(5, rng);
  for (double t : {0.0, 0.2, 0.5, 0.9, 1.0}) {
    const Basis s = catmull_rom_basis(b, b, b, b, t);
    for (std::size_t i = 0; i < 5; ++i) {
      EXPECT_NEAR(s(i, 0), b(i, 0), 1e-12);
      EXPECT_NEAR(s(i, 1), b(i, 1), 1e-12);
    }
  }
  const Basis p0 = oracle_random_basis(5, rng), p1 = oracle_random_basis(5, rng), p2 = oracle_random_basis(5, rng),
              p3 = oracle_random_basis(5, rng);
  EXPECT_EQ(catmull_rom_basis(p0, p1, p2, p3, 0.0), p1);
  EXPECT_EQ(catmull_rom_basis(p0, p1, p2, p3, 1.0), p2);
}

TEST(CatmullRom, MatchesPerElementOracle) {
  // Keyframes at successive 30 degree rotations of a plane about e3.
  auto rotated = [](double deg) {
    const double a = deg * kPi / 180.0;
    return basis_of({std::cos(a), std::sin(a), 0.0}, {0.0, 0.0, 1.0});
  };
  const Basis k0 = rotated(0), k1 = rotated(30), k2 = rotated(60), k3 = rotated(90);
  auto scalar = [](double p0, double p1, double p2, double p3, double t) {
    return 0.5 * (2 * p1 + (-p0 + p2) * t + (2 * p0 - 5 * p1 + 4 * p2 - p3) * t * t +
                  (-p0 + 3 * p1 - 3 * p2 + p3) * t * t * t);
  };
  for (double t : {0.25, 0.5, 0.75}) {
    Eigen::MatrixXd m(3, 2);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t c = 0; c < 2; ++c) {
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = scalar(k0(i, c), k1(i, c), k2(i, c), k3(i, c), t);
      }
    }
    const Basis oracle = basis_from_eigen_qr(m);
    const Basis got = catmull_rom_basis(k0, k1, k2, k3, t);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(got(i, c), oracle(i, c), 1e-12);
    }
  }
}

TEST(CatmullRom, WeightsPartitionUnity) {
  for (int k = 0; k <= 100; ++k) {
    const auto w = catmull_rom_weights(k / 100.0);
    EXPECT_NEAR(w[0] + w[1] + w[2] + w[3], 1.0, 1e-15);
  }
}

// ---------------------------------------------------------------------------
// Tour path

namespace {

KeyframeSequence random_sequence(std::size_t k, std::size_t p, bool cyclic, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  KeyframeSequence seq;
  seq.cyclic = cyclic;
  for (std::size_t i = 0; i < k; ++i) seq.keyframes.push_back({oracle_random_basis(p, rng), "k" + std::to_string(i), {}});
  return seq;
}

/// Arc length re-integrated with `samples` steps per segment, independently
/// of the path's own table.
double dense_segment_length(const TourPath& path, std::size_t seg, int samples) {
  double len = 0.0;
  Basis prev = path.segment_basis(seg, 0.0);
  for (int j = 1; j <= samples; ++j) {
    Basis cur = path.segment_basis(seg, static_cast<double>(j) / samples);
    len += oracle_geodesic(prev, cur);
    prev = cur;
  }
  return len;
}

}  // namespace

TEST(TourPath, TooFewKeyframesAndMismatchedDims) {
  KeyframeSequence one;
  one.keyframes.push_back({Basis::canonical(3, 0, 1), "", {}});
  try {
    (void)compile(one);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewKeyframes);
  }
  KeyframeSequence mixed = one;
  mixed.keyframes.push_back({Basis::canonical(4, 0, 1), "", {}});
  EXPECT_THROW((void)compile(mixed), Error);
  KeyframeSequence bad_loading = one;
  bad_loading.keyframes.push_back({Basis::canonical(3, 1, 2), "", {{7, 0.5}}});
  EXPECT_THROW((void)compile(bad_loading), Error);
}

TEST(TourPath, TableInvariants) {
  for (bool cyclic : {true, false}) {
    const TourPath path = compile(random_sequence(6, 7, cyclic, 91));
    const auto& table = path.arc_table();
    EXPECT_EQ(path.segment_count(), cyclic ? 6u : 5u);
    EXPECT_EQ(table.size(), path.segment_count() * 9 + 1);
    for (std::size_t i = 1; i < table.size(); ++i) {
      EXPECT_LE(table[i - 1].raw, table[i].raw);
      EXPECT_LE(table[i - 1].length, table[i].length);
    }
    EXPECT_EQ(table.back().length, path.total_length());
    double sum = 0.0;
    for (double s : path.segment_lengths()) sum += s;
    EXPECT_NEAR(sum, path.total_length(), 1e-9);
  }
}

TEST(TourPath, ControlsWrapOrClamp) {
  const TourPath cyc = compile(random_sequence(4, 4, true, 92));
  EXPECT_EQ(cyc.controls(0), (std::array<std::size_t, 4>{3, 0, 1, 2}));
  EXPECT_EQ(cyc.controls(3), (std::array<std::size_t, 4>{2, 3, 0, 1}));
  const TourPath open = compile(random_sequence(4, 4, false, 92));
  EXPECT_EQ(open.controls(0), (std::array<std::size_t, 4>{0, 0, 1, 2}));
  EXPECT_EQ(open.controls(2), (std::array<std::size_t, 4>{1, 2, 3, 3}));
}

TEST(TourPath, PassesThroughEveryKeyframe) {
  for (bool cyclic : {true, false}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const TourPath path = compile(random_sequence(3 + seed, 5 + seed, cyclic, 100 + seed));
      const auto pos = path.keyframe_positions();
      ASSERT_EQ(pos.size(), path.sequence().size());
      EXPECT_EQ(pos.front(), 0.0);
      EXPECT_EQ(path.basis_at(0.0), path.sequence().keyframes.front().basis);
      for (std::size_t i = 0; i < pos.size(); ++i) {
        EXPECT_LT(oracle_geodesic(path.basis_at(pos[i]), path.sequence().keyframes[i].basis), 1e-6)
            << "keyframe " << i;
        if (i > 0) EXPECT_LT(pos[i - 1], pos[i]);
      }
      if (!cyclic) EXPECT_NEAR(pos.back(), 1.0, 1e-12);
    }
  }
}

TEST(TourPath, OrthonormalEverywhereAndContinuous) {
  const TourPath path = compile(random_sequence(7, 12, true, 93));
  const double dt = 1.0 / 4096.0;
  for (int k = 0; k < 1000; ++k) {
    const double t = k / 1000.0;
    const Basis b = path.basis_at(t);
    ASSERT_LT(oracle_orthonormality_error(b), 1e-9);
    ASSERT_LE(oracle_geodesic(b, path.basis_at(t + dt)), 4.0 * path.total_length() * dt + 1e-12);
  }
}

TEST(TourPath, CyclicClosureAndWrap) {
  const TourPath path = compile(random_sequence(5, 6, true, 94));
  EXPECT_LT(geodesic_distance(path.basis_at(0.0), path.basis_at(1.0)), 1e-9);
  EXPECT_LT(geodesic_distance(path.basis_at(1.0 - 1e-12), path.basis_at(0.0)), 1e-9);
  EXPECT_EQ(path.basis_at(1.25), path.basis_at(0.25));
  EXPECT_EQ(path.basis_at(-0.75), path.basis_at(0.25));
  EXPECT_EQ(path.wrap(3.5), 0.5);
  EXPECT_THROW((void)path.wrap(std::nan("")), Error);

  const TourPath open = compile(random_sequence(5, 6, false, 94));
  EXPECT_EQ(open.basis_at(-3.0), open.basis_at(0.0));
  EXPECT_EQ(open.basis_at(7.0), open.basis_at(1.0));
  EXPECT_LT(oracle_geodesic(open.basis_at(1.0), open.sequence().keyframes.back().basis), 1e-12);
}

TEST(TourPath, ArcLengthUniformityBeatsPerSegmentParameterization) {
  const TourPath path = compile(uneven_sequence());
  ASSERT_NEAR(path.segment_lengths()[1] / path.segment_lengths()[0], 5.0, 0.05);
  const auto [arc_cv, naive_cv] = uniformity_cvs(path);
  EXPECT_LT(arc_cv, 0.10);
  EXPECT_GT(naive_cv, 0.25);
  EXPECT_LT(arc_cv, 0.25 * naive_cv);
}

TEST(TourPath, RefiningTheTableBarelyMovesKeyframes) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto seq = random_sequence(5, 6, seed % 2 == 0, 200 + seed);
    const auto coarse = compile(seq, 8).keyframe_positions();
    const auto fine = compile(seq, 64).keyframe_positions();
    for (std::size_t i = 0; i < coarse.size(); ++i) EXPECT_LT(std::abs(coarse[i] - fine[i]), 0.01);
  }
  const auto coarse = compile(uneven_sequence(), 8).keyframe_positions();
  const auto fine = compile(uneven_sequence(), 64).keyframe_positions();
  for (std::size_t i = 0; i < coarse.size(); ++i) EXPECT_LT(std::abs(coarse[i] - fine[i]), 0.01);
}

TEST(TourPath, TwoOrthogonalPlanesCyclic) {
  KeyframeSequence seq;
  seq.keyframes = {{Basis::canonical(4, 0, 1), "a", {}}, {Basis::canonical(4, 2, 3), "b", {}}};
  const TourPath path = compile(seq);
  ASSERT_EQ(path.segment_count(), 2u);
  const auto& len = path.segment_lengths();
  EXPECT_NEAR(len[0] / len[1], 1.0, 0.02);
  for (std::size_t s = 0; s < 2; ++s) EXPECT_NEAR(dense_segment_length(path, s, 1024), len[s], 0.02 * len[s]);
  EXPECT_NEAR(path.total_length(), len[0] + len[1], 1e-12);
  const auto pos = path.keyframe_positions();
  EXPECT_NEAR(pos[1], len[0] / path.total_length(), 1e-12);
}

TEST(TourPath, IdenticalKeyframesGiveZeroLength) {
  KeyframeSequence seq;
  const Basis b = Basis::canonical(5, 1, 3);
  for (int i = 0; i < 3; ++i) seq.keyframes.push_back({b, "", {}});
  const TourPath path = compile(seq);
  EXPECT_EQ(path.total_length(), 0.0);
  for (double p : path.keyframe_positions()) EXPECT_EQ(p, 0.0);
  EXPECT_EQ(path.basis_at(0.6), b);
}

TEST(TourPath, ZeroLengthSegmentIsSkipped) {
  KeyframeSequence seq;
  seq.cyclic = false;
  seq.keyframes = {{tilted_plane(4, 0.0), "", {}},
                   {tilted_plane(4, 0.5), "", {}},
                   {tilted_plane(4, 0.5), "", {}},
                   {tilted_plane(4, 1.0), "", {}}};
  const TourPath path = compile(seq);
  EXPECT_EQ(path.segment_lengths()[1], 0.0);
  const auto pos = path.keyframe_positions();
  EXPECT_EQ(pos[1], pos[2]);
  for (int k = 0; k <= 200; ++k) ASSERT_LT(oracle_orthonormality_error(path.basis_at(k / 200.0)), 1e-9);
}

TEST(TourPath, EquallySpacedKeyframes) {
  // (e1,e2), (e2,e3), (e3,e4), (e4,e1): cyclic axis permutation maps each
  // segment onto the next, so all four have the same length.
  KeyframeSequence seq;
  for (std::size_t k = 0; k < 4; ++k) seq.keyframes.push_back({Basis::canonical(4, k, (k + 1) % 4), "", {}});
  const auto pos = compile(seq).keyframe_positions();
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(pos[i], 0.25 * static_cast<double>(i), 0.01);
}

TEST(TourPath, LittleTourRefinementChangesLengthLittle) {
  KeyframeSequence seq;
  for (std::size_t i = 0; i < 4; ++i) seq.keyframes.push_back({Basis::canonical(4, i, (i + 1) % 4), "", {}});
  const double coarse = compile(seq, 8).total_length();
  const double fine = compile(seq, 64).total_length();
  EXPECT_LT(std::abs(coarse - fine) / fine, 0.01);
}

TEST(TourPath, BlendGainAndLoadings) {
  const Basis b = basis_of({0.6, 0.8, 0.0}, {0.0, 0.0, 1.0});
  const auto g = blend_gain(b, BlendMode::affine);
  EXPECT_NEAR(g[0], 1.0 / 1.4, 1e-15);
  EXPECT_NEAR(g[1], 1.0, 1e-15);
  EXPECT_EQ(blend_gain(b, BlendMode::orthonormal), (std::array<double, 2>{1.0, 1.0}));
  const auto l = top_loadings(b, 2);
  ASSERT_EQ(l.size(), 2u);
  EXPECT_EQ(l[0].dim, 2u);
  EXPECT_NEAR(l[0].weight, 1.0, 1e-15);
  EXPECT_EQ(l[1].dim, 1u);
  EXPECT_NEAR(l[1].weight, 0.64, 1e-15);
}

TEST(TourPath, SameSpanSegmentsStayInThePlane) {
  const Basis a = Basis::canonical(4, 0, 1);
  const Basis turned = right_multiply(a, Mat2::rotation(0.8));
  const Basis mirrored = right_multiply(a, Mat2{0, 1, 1, 0});
  for (const Basis& b : {turned, mirrored}) {
    KeyframeSequence seq;
    seq.keyframes = {{Basis::canonical(4, 2, 3), "", {}}, {a, "", {}}, {b, "", {}}, {tilted_plane(4, 0.7), "", {}}};
    const TourPath path = compile(seq);
    EXPECT_NEAR(path.segment_lengths()[1], 0.0, 1e-9);
    for (int k = 0; k <= 16; ++k) {
      const Basis f = path.segment_basis(1, k / 16.0);
      ASSERT_LT(oracle_geodesic(f, a), 1e-7);
      ASSERT_LT(oracle_orthonormality_error(f), 1e-12);
    }
    EXPECT_EQ(path.segment_basis(1, 1.0), b);
  }
}
