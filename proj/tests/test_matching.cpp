#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "sem/matching.hpp"

using namespace sem;

namespace {

FeatureMap random_map(int h, int w, int c, int scale, std::uint64_t seed) {
  FeatureMap f(h, w, c, scale);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& v : f.data) v = u(rng);
  return f;
}

// Exhaustive dual-softmax oracle: explicit row and column softmaxes of S.
Matrix dual_softmax_oracle(const Matrix& s) {
  const int rows = s.rows(), cols = s.cols();
  Matrix out(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      double row_denom = 0.0, col_denom = 0.0;
      for (int q = 0; q < cols; ++q) row_denom += std::exp(s.at(i, q));
      for (int p = 0; p < rows; ++p) col_denom += std::exp(s.at(p, j));
      out.at(i, j) = (std::exp(s.at(i, j)) / row_denom) * (std::exp(s.at(i, j)) / col_denom);
    }
  return out;
}

MatchMatrix matrix_from_scores(const Matrix& scores, GridShape ref, GridShape src) {
  MatchMatrix m;
  m.scores = scores;
  m.ref_dims = ref;
  m.src_dims = src;
  m.temperature = 1.0;
  return m;
}

}  // namespace

TEST_CASE("dual_softmax singleton is one") {
  const FeatureMap a = random_map(1, 1, 4, 8, 1);
  const FeatureMap b = random_map(1, 1, 4, 8, 2);
  const MatchMatrix m = dual_softmax(a, b, 1.0);
  CHECK(m.rows() == 1);
  CHECK(m.scores.at(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("dual_softmax with orthonormal descriptors and large tau is near-identity") {
  const int n = 8;
  FeatureMap a(2, 4, n, 8), b(2, 4, n, 8);
  for (int i = 0; i < n; ++i) {
    a.data[static_cast<size_t>(i) * n + i] = 1.0;  // pixel i holds basis vector e_i
    b.data[static_cast<size_t>(i) * n + i] = 1.0;
  }
  const MatchMatrix m = dual_softmax(a, b, 15.0);
  for (int i = 0; i < n; ++i) {
    CHECK(m.scores.at(i, i) >= 0.99);
    for (int j = 0; j < n; ++j)
      if (j != i) CHECK(m.scores.at(i, j) < 0.01);
  }
}

TEST_CASE("dual_softmax equals exhaustive oracle") {
  for (double tau : {0.1, 1.0, 10.0}) {
    const FeatureMap a = random_map(2, 4, 6, 8, 31);
    const FeatureMap b = random_map(2, 4, 6, 8, 32);
    const MatchMatrix m = dual_softmax(a, b, tau);

    Matrix s(8, 8);
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j) {
        double dot = 0.0;
        for (int c = 0; c < 6; ++c)
          dot += a.data[static_cast<size_t>(i) * 6 + c] * b.data[static_cast<size_t>(j) * 6 + c];
        s.at(i, j) = tau * dot;
      }
    const Matrix want = dual_softmax_oracle(s);
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j) {
        CHECK(std::abs(m.scores.at(i, j) - want.at(i, j)) <= 1e-12);
        CHECK(m.scores.at(i, j) >= 0.0);
        CHECK(m.scores.at(i, j) <= 1.0);
      }
  }
}

TEST_CASE("dual_softmax equivariant under reference-cell permutation") {
  const FeatureMap a = random_map(2, 3, 5, 8, 41);
  const FeatureMap b = random_map(2, 3, 5, 8, 42);
  const MatchMatrix base = dual_softmax(a, b, 2.0);

  const std::vector<int> perm = {4, 2, 0, 5, 1, 3};
  FeatureMap ap = a;
  for (int i = 0; i < 6; ++i)
    for (int c = 0; c < 5; ++c)
      ap.data[static_cast<size_t>(i) * 5 + c] = a.data[static_cast<size_t>(perm[i]) * 5 + c];

  const MatchMatrix permuted = dual_softmax(ap, b, 2.0);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j)
      CHECK(permuted.scores.at(i, j) ==
            doctest::Approx(base.scores.at(perm[i], j)).epsilon(1e-12));
}

TEST_CASE("epipolar_rewrite with invalid bands equals dual_softmax") {
  const FeatureMap a = random_map(2, 4, 6, 8, 51);
  const FeatureMap b = random_map(2, 4, 6, 8, 52);
  const MatchMatrix m = dual_softmax(a, b, 3.0);

  const std::vector<EpipolarBand> invalid_ref(8), invalid_src(8);
  const MatchMatrix r = epipolar_rewrite(m, a, b, invalid_ref, invalid_src, 3.0);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j)
      CHECK(r.scores.at(i, j) == m.scores.at(i, j));
}

TEST_CASE("epipolar_rewrite singleton bands produce a permutation matrix") {
  const FeatureMap a = random_map(1, 4, 6, 8, 61);
  const FeatureMap b = random_map(1, 4, 6, 8, 62);
  const MatchMatrix m = dual_softmax(a, b, 1.0);

  const std::vector<int> sigma = {2, 0, 3, 1};
  std::vector<int> sigma_inv(4);
  for (int i = 0; i < 4; ++i) sigma_inv[sigma[i]] = i;

  auto vertical_band = [](int x) {
    EpipolarBand band;
    band.line = {1.0, 0.0, -static_cast<double>(x)};
    band.tolerance = 0.4;
    band.valid = true;
    return band;
  };
  std::vector<EpipolarBand> bands_ref, bands_src;
  for (int i = 0; i < 4; ++i) bands_ref.push_back(vertical_band(sigma[i]));
  for (int j = 0; j < 4; ++j) bands_src.push_back(vertical_band(sigma_inv[j]));

  const MatchMatrix r = epipolar_rewrite(m, a, b, bands_ref, bands_src, 1.0);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(r.scores.at(i, j) == doctest::Approx(j == sigma[i] ? 1.0 : 0.0));
}

TEST_CASE("extract_matches identity and threshold behavior") {
  Matrix ident(4, 4);
  for (int i = 0; i < 4; ++i) ident.at(i, i) = 1.0;
  const MatchMatrix m = matrix_from_scores(ident, {2, 2}, {2, 2});

  const MatchSet set = extract_matches(m, 0.2);
  REQUIRE(set.matches.size() == 4);
  for (const Match& match : set.matches) {
    CHECK(match.ref_x == match.src_x);
    CHECK(match.ref_y == match.src_y);
    CHECK(match.confidence == doctest::Approx(1.0));
  }

  Matrix low(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) low.at(i, j) = 0.1;
  CHECK(extract_matches(matrix_from_scores(low, {2, 2}, {2, 2}), 0.2).matches.empty());

  CHECK_THROWS_AS(extract_matches(m, 0.0), Error);
  CHECK_THROWS_AS(extract_matches(m, 1.0), Error);
}

TEST_CASE("dual_softmax validates inputs") {
  const FeatureMap a = random_map(1, 2, 4, 8, 91);
  const FeatureMap b = random_map(1, 2, 5, 8, 92);
  CHECK_THROWS_AS(dual_softmax(a, b, 1.0), ShapeMismatch);
  const FeatureMap c = random_map(1, 2, 4, 8, 93);
  CHECK_THROWS_AS(dual_softmax(a, c, 0.0), Error);
}

TEST_CASE("extract_matches equals brute-force MNN oracle") {
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix scores(6, 6);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) scores.at(i, j) = u(rng);
    const MatchMatrix m = matrix_from_scores(scores, {3, 2}, {3, 2});
    const double theta = 0.2;
    const MatchSet set = extract_matches(m, theta);

    std::set<std::pair<int, int>> got;
    for (const Match& match : set.matches)
      got.insert({m.ref_dims.index(match.ref_x, match.ref_y),
                  m.src_dims.index(match.src_x, match.src_y)});

    std::set<std::pair<int, int>> want;
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) {
        bool row_best = true, col_best = true;
        for (int q = 0; q < 6; ++q)
          if (scores.at(i, q) > scores.at(i, j)) row_best = false;
        for (int p = 0; p < 6; ++p)
          if (scores.at(p, j) > scores.at(i, j)) col_best = false;
        if (row_best && col_best && scores.at(i, j) >= theta) want.insert({i, j});
      }
    CHECK(got == want);
  }
}

TEST_CASE("extract_matches on the transpose yields transposed pairs") {
  std::mt19937_64 rng(81);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix scores(6, 4);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 4; ++j) scores.at(i, j) = u(rng);

  const MatchSet fwd = extract_matches(matrix_from_scores(scores, {3, 2}, {2, 2}), 0.2);
  const MatchSet bwd =
      extract_matches(matrix_from_scores(scores.transposed(), {2, 2}, {3, 2}), 0.2);

  std::set<std::pair<int, int>> a, b;
  for (const Match& match : fwd.matches)
    a.insert({fwd.ref_dims.index(match.ref_x, match.ref_y),
              fwd.src_dims.index(match.src_x, match.src_y)});
  for (const Match& match : bwd.matches)
    b.insert({bwd.src_dims.index(match.src_x, match.src_y),
              bwd.ref_dims.index(match.ref_x, match.ref_y)});
  CHECK(a == b);
}

TEST_CASE("refine_match uniform heatmap closed form") {
  FeatureMap fine_ref(16, 16, 4, 2), fine_src(16, 16, 4, 2);
  for (double& v : fine_ref.data) v = 0.5;
  for (double& v : fine_src.data) v = 0.5;

  Match m;
  m.ref_x = 1;
  m.ref_y = 1;
  m.src_x = 1;
  m.src_y = 1;
  const Refinement r = refine_match(m, fine_ref, fine_src, 8, {5, 0.0});

  // Window center: coarse cell 1 center is pixel 11.5 -> fine cell 5.5 -> 6.
  CHECK(r.src_px.x == doctest::Approx(2 * 6 + 0.5));
  CHECK(r.src_px.y == doctest::Approx(2 * 6 + 0.5));
  CHECK(r.sigma2 == doctest::Approx((5.0 * 5.0 - 1.0) / 6.0).epsilon(1e-12));
}

TEST_CASE("refine_match concentrated heatmap has zero variance") {
  FeatureMap fine_ref(16, 16, 4, 2), fine_src(16, 16, 4, 2);
  fine_ref.at(6, 6, 0) = 30.0;
  fine_src.at(7, 5, 0) = 30.0;  // all mass at fine cell (5, 7)

  Match m;
  m.ref_x = 1;
  m.ref_y = 1;
  m.src_x = 1;
  m.src_y = 1;
  const Refinement r = refine_match(m, fine_ref, fine_src, 8, {5, 0.0});
  CHECK(r.src_px.x == doctest::Approx(2 * 5 + 0.5).epsilon(1e-9));
  CHECK(r.src_px.y == doctest::Approx(2 * 7 + 0.5).epsilon(1e-9));
  CHECK(r.sigma2 <= 1e-9);
}

TEST_CASE("refine_match recovers a Gaussian bump center") {
  // Correlation surface exp(-r^2 / (2 sigma^2)) around a subpixel bump:
  // logits are set so the softmax heatmap is the sampled Gaussian.
  const double bx = 6.35, by = 5.75;  // fine-cell units
  const double sigma = 0.9;
  FeatureMap fine_ref(16, 16, 1, 2), fine_src(16, 16, 1, 2);
  for (double& v : fine_ref.data) v = 1.0;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      const double r2 = (x - bx) * (x - bx) + (y - by) * (y - by);
      fine_src.at(y, x, 0) = -r2 / (2.0 * sigma * sigma);
    }

  Match m;
  m.ref_x = 1;
  m.ref_y = 1;
  m.src_x = 1;
  m.src_y = 1;  // coarse center -> fine cell 6
  const Refinement r = refine_match(m, fine_ref, fine_src, 8, {5, 1.0});

  // Dense numeric expectation oracle over the same window.
  double denom = 0.0, ex = 0.0, ey = 0.0;
  for (int y = 4; y <= 8; ++y)
    for (int x = 4; x <= 8; ++x) {
      const double w = std::exp(fine_src.at(y, x, 0));
      denom += w;
      ex += w * x;
      ey += w * y;
    }
  ex /= denom;
  ey /= denom;

  const double got_fx = (r.src_px.x - 0.5) / 2.0;
  const double got_fy = (r.src_px.y - 0.5) / 2.0;
  CHECK(got_fx == doctest::Approx(ex).epsilon(1e-9));
  CHECK(got_fy == doctest::Approx(ey).epsilon(1e-9));
  CHECK(std::abs(got_fx - bx) <= 0.1);
  CHECK(std::abs(got_fy - by) <= 0.1);
}

TEST_CASE("refine_match clamps windows at borders") {
  FeatureMap fine_ref(8, 8, 2, 2), fine_src(8, 8, 2, 2);
  for (double& v : fine_src.data) v = 0.25;
  Match m;
  m.ref_x = 0;
  m.ref_y = 0;
  m.src_x = 0;
  m.src_y = 0;  // fine center would be cell 2; window [0,4] fits after clamp
  const Refinement r = refine_match(m, fine_ref, fine_src, 8, {5, 0.0});
  CHECK(r.src_px.x == doctest::Approx(2 * 2 + 0.5));
  CHECK(r.sigma2 == doctest::Approx((5.0 * 5.0 - 1.0) / 6.0).epsilon(1e-12));

  // Expectation always stays inside the window even for random features.
  FeatureMap noisy = fine_src;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (double& v : noisy.data) v = u(rng);
  for (int cell = 0; cell < 4; ++cell) {
    Match edge;
    edge.ref_x = cell;
    edge.ref_y = cell;
    edge.src_x = cell;
    edge.src_y = cell;
    const Refinement e = refine_match(edge, fine_ref, noisy, 8, {5, 0.0});
    const double fx = (e.src_px.x - 0.5) / 2.0;
    CHECK(fx >= 0.0);
    CHECK(fx <= 7.0);
  }
}
