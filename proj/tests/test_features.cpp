#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "sem/features.hpp"

using namespace sem;

namespace {

ParamStore zero_store(const ModelShape& shape) {
  ParamStore store = ParamStore::seeded(shape, 0);
  ParamStore zeros;
  zeros.set_shape(shape);
  for (const auto& [name, t] : store.tensors())
    zeros.put(name, t.dims, std::vector<double>(t.values.size(), 0.0));
  return zeros;
}

FeatureMap random_map(int h, int w, int c, int scale, std::uint64_t seed) {
  FeatureMap f(h, w, c, scale);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& v : f.data) v = u(rng);
  return f;
}

MatchMatrix random_match_matrix(int rw, int rh, int sw, int sh, std::uint64_t seed) {
  MatchMatrix m;
  m.ref_dims = {rw, rh};
  m.src_dims = {sw, sh};
  m.scores = Matrix(rw * rh, sw * sh);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) m.scores.at(i, j) = u(rng);
  return m;
}

}  // namespace

TEST_CASE("extract_features output shapes") {
  const ModelShape shape;
  const ParamStore params = ParamStore::seeded(shape, 3);
  Image img(64, 64);
  for (size_t i = 0; i < img.v.size(); ++i) img.v[i] = (i % 7) / 7.0;

  const MultiScaleFeatures f = extract_features(img, params);
  CHECK(f.coarse.height == 8);
  CHECK(f.coarse.width == 8);
  CHECK(f.coarse.scale == 8);
  CHECK(f.coarse.channels == shape.channels);
  CHECK(f.global.height == 2);
  CHECK(f.global.width == 2);
  CHECK(f.global.scale == 32);
  CHECK(f.fine.height == 32);
  CHECK(f.fine.width == 32);
  CHECK(f.fine.scale == 2);
  CHECK(f.fine.channels == shape.fine_channels);
}

TEST_CASE("extract_features rejects bad dimensions") {
  const ParamStore params = ParamStore::seeded({}, 3);
  CHECK_THROWS_AS(extract_features(Image(60, 64), params), BadDimensions);
  CHECK_THROWS_AS(extract_features(Image(64, 63), params), BadDimensions);
}

TEST_CASE("extract_features maps zero image to zero (zero biases)") {
  const ParamStore params = ParamStore::seeded({}, 17);  // seeded biases are zero
  const MultiScaleFeatures f = extract_features(Image(64, 64), params);
  for (double v : f.coarse.data) CHECK(v == 0.0);
  for (double v : f.global.data) CHECK(v == 0.0);
  for (double v : f.fine.data) CHECK(v == 0.0);
}

TEST_CASE("extract_features is deterministic") {
  const ParamStore params = ParamStore::seeded({}, 11);
  Image img(64, 64);
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : img.v) v = u(rng);

  const MultiScaleFeatures a = extract_features(img, params);
  const MultiScaleFeatures b = extract_features(img, params);
  CHECK(a.coarse.data == b.coarse.data);
  CHECK(a.global.data == b.global.data);
  CHECK(a.fine.data == b.fine.data);
}

TEST_CASE("fuse_scales identities with zero cross input") {
  const ModelShape shape{8, 4, 4, 1};
  const ParamStore params = ParamStore::seeded(shape, 5);

  const FeatureMap f8 = random_map(8, 8, 8, 8, 21);
  const FeatureMap zero32(2, 2, 8, 32);
  auto [fused8, fused32] = fuse_scales(f8, zero32, params);
  CHECK(fused8.data == f8.data);  // bias is zero, so the update is exactly zero

  const FeatureMap zero8(8, 8, 8, 8);
  const FeatureMap f32 = random_map(2, 2, 8, 32, 22);
  auto [g8, g32] = fuse_scales(zero8, f32, params);
  CHECK(g32.data == f32.data);
}

TEST_CASE("fuse_scales rejects mismatched scales") {
  const ParamStore params = ParamStore::seeded({8, 4, 4, 1}, 5);
  const FeatureMap a(8, 8, 8, 8);
  CHECK_THROWS_AS(fuse_scales(a, a, params), ScaleMismatch);
  const FeatureMap wrong(3, 3, 8, 32);
  CHECK_THROWS_AS(fuse_scales(a, wrong, params), ScaleMismatch);
}

TEST_CASE("fuse_scales matches per-pixel oracle") {
  const ModelShape shape{8, 4, 4, 1};
  const ParamStore params = ParamStore::seeded(shape, 7);
  const FeatureMap f8 = random_map(8, 8, 8, 8, 31);
  const FeatureMap f32 = random_map(2, 2, 8, 32, 32);

  auto [fused8, fused32] = fuse_scales(f8, f32, params);

  const Tensor& wd = params.get("fuse.down.w");
  const Tensor& bd = params.get("fuse.down.b");
  const Tensor& wu = params.get("fuse.up.w");
  const Tensor& bu = params.get("fuse.up.b");
  const int c = 8;

  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x)
      for (int o = 0; o < c; ++o) {
        double pooled = 0.0;
        std::vector<double> avg(c, 0.0);
        for (int dy = 0; dy < 4; ++dy)
          for (int dx = 0; dx < 4; ++dx)
            for (int i = 0; i < c; ++i) avg[i] += f8.at(4 * y + dy, 4 * x + dx, i);
        for (int i = 0; i < c; ++i) avg[i] /= 16.0;
        pooled = bd.values[o];
        for (int i = 0; i < c; ++i) pooled += wd.values[o * c + i] * avg[i];
        CHECK(fused32.at(y, x, o) ==
              doctest::Approx(f32.at(y, x, o) + pooled).epsilon(1e-12));
      }

  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      for (int o = 0; o < c; ++o) {
        double up = bu.values[o];
        for (int i = 0; i < c; ++i) up += wu.values[o * c + i] * f32.at(y / 4, x / 4, i);
        CHECK(fused8.at(y, x, o) ==
              doctest::Approx(f8.at(y, x, o) + up).epsilon(1e-12));
      }
}

TEST_CASE("confidence is the row maximum") {
  MatchMatrix m;
  m.ref_dims = {3, 1};
  m.src_dims = {3, 1};
  m.scores = Matrix(3, 3);
  m.scores.at(0, 0) = 0.1;
  m.scores.at(0, 1) = 0.7;
  m.scores.at(0, 2) = 0.2;
  CHECK(confidence(m, 0) == doctest::Approx(0.7));
  CHECK(confidence(m, 1) == 0.0);

  const MatchMatrix r = random_match_matrix(4, 2, 4, 2, 77);
  for (int i = 0; i < r.rows(); ++i) {
    double want = 0.0;
    for (int j = 0; j < r.cols(); ++j) want = std::max(want, r.scores.at(i, j));
    CHECK(confidence(r, i) == doctest::Approx(want));
  }
}

TEST_CASE("select_anchors under-supply keeps all qualifying pairs") {
  MatchMatrix m = random_match_matrix(4, 2, 4, 2, 3);
  for (auto& v : const_cast<std::vector<double>&>(m.scores.values())) v *= 0.3;
  // Plant exactly 5 confident rows.
  for (int i = 0; i < 5; ++i) m.scores.at(i, i) = 0.9;

  const AnchorSet a = select_anchors(m, 0.5, 32, 9);
  CHECK(a.count() == 5);
  for (int k = 0; k < a.count(); ++k) {
    const Vec2 r = a.ref_anchors[k];
    const Vec2 s = a.src_anchors[k];
    const int i = m.ref_dims.index(static_cast<int>(r.x), static_cast<int>(r.y));
    const int j = m.src_dims.index(static_cast<int>(s.x), static_cast<int>(s.y));
    CHECK(m.scores.at(i, j) >= 0.5);
  }
}

TEST_CASE("select_anchors subsamples deterministically") {
  MatchMatrix m;
  m.ref_dims = {8, 8};
  m.src_dims = {8, 8};
  m.scores = Matrix(64, 64);
  for (int i = 0; i < 64; ++i) m.scores.at(i, i) = 0.95;

  const AnchorSet a = select_anchors(m, 0.5, 32, 1234);
  const AnchorSet b = select_anchors(m, 0.5, 32, 1234);
  const AnchorSet c = select_anchors(m, 0.5, 32, 4321);
  REQUIRE(a.count() == 32);
  bool same = true, differs = false;
  for (int k = 0; k < 32; ++k) {
    same = same && a.ref_anchors[k].x == b.ref_anchors[k].x &&
           a.ref_anchors[k].y == b.ref_anchors[k].y;
    differs = differs || a.ref_anchors[k].x != c.ref_anchors[k].x ||
              a.ref_anchors[k].y != c.ref_anchors[k].y;
  }
  CHECK(same);
  CHECK(differs);  // different seed should pick a different subset
}

TEST_CASE("select_anchors below threshold yields empty set") {
  MatchMatrix m = random_match_matrix(4, 4, 4, 4, 5);
  for (auto& v : const_cast<std::vector<double>&>(m.scores.values())) v *= 0.4;
  CHECK(select_anchors(m, 0.5, 32, 1).empty());
}

TEST_CASE("structured_feature hand-checked values") {
  {
    const Vec2 anchors[] = {Vec2(0, 0)};
    const auto f = structured_feature({3, 4}, anchors);
    REQUIRE(f.size() == 3);
    CHECK(f[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(f[1] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(f[2] == doctest::Approx(1.0).epsilon(1e-9));
  }
  {
    const Vec2 anchors[] = {Vec2(5, 6)};
    const auto f = structured_feature({5, 6}, anchors);
    CHECK(f[0] == 0.0);
    CHECK(f[1] == 0.0);
    CHECK(f[2] == 0.0);
  }
  {
    const Vec2 anchors[] = {Vec2(0, 0), Vec2(8, 0)};
    const auto f = structured_feature({4, 0}, anchors);
    REQUIRE(f.size() == 6);
    CHECK(f[0] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(f[1] == doctest::Approx(-0.5).epsilon(1e-9));
    CHECK(f[2] == doctest::Approx(0.0));
    CHECK(f[3] == doctest::Approx(0.0));
    CHECK(f[4] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(f[5] == doctest::Approx(0.5).epsilon(1e-9));
  }
}

TEST_CASE("structured_feature invariances") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 64.0), s(0.1, 10.0), ang(0.0, 6.28);

  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(u(rng)) % 8;
    std::vector<Vec2> anchors;
    for (int i = 0; i < n; ++i) anchors.push_back({u(rng), u(rng)});
    const Vec2 point{u(rng), u(rng)};
    const auto base = structured_feature(point, anchors);

    // Scale invariance of the whole feature.
    const double k = s(rng);
    std::vector<Vec2> scaled;
    for (const Vec2& a : anchors) scaled.push_back(a * k);
    const auto f_scaled = structured_feature(point * k, scaled);
    for (size_t i = 0; i < base.size(); ++i)
      CHECK(f_scaled[i] == doctest::Approx(base[i]).epsilon(1e-9));

    // Rotation invariance of the D block only.
    const double a = ang(rng);
    const Vec2 center{u(rng), u(rng)};
    auto rotate = [&](const Vec2& p) {
      const Vec2 d = p - center;
      return Vec2{center.x + d.x * std::cos(a) - d.y * std::sin(a),
                  center.y + d.x * std::sin(a) + d.y * std::cos(a)};
    };
    std::vector<Vec2> rotated;
    for (const Vec2& q : anchors) rotated.push_back(rotate(q));
    const auto f_rot = structured_feature(rotate(point), rotated);
    for (int i = 0; i < n; ++i)
      CHECK(f_rot[2 * n + i] == doctest::Approx(base[2 * n + i]).epsilon(1e-9));

    // Translation invariance of everything.
    const Vec2 t{u(rng), u(rng)};
    std::vector<Vec2> moved;
    for (const Vec2& q : anchors) moved.push_back(q + t);
    const auto f_moved = structured_feature(point + t, moved);
    for (size_t i = 0; i < base.size(); ++i)
      CHECK(f_moved[i] == doctest::Approx(base[i]).epsilon(1e-9).scale(1.0));
  }
}

TEST_CASE("fuse_structured skip and zero-weight contracts") {
  const ModelShape shape{8, 4, 4, 1};
  const FeatureMap f = random_map(4, 4, 8, 8, 55);

  const ParamStore seeded = ParamStore::seeded(shape, 5);
  const FeatureMap skipped = fuse_structured(f, {}, seeded);
  CHECK(skipped.data == f.data);

  const ParamStore zeros = zero_store(shape);
  const std::vector<Vec2> anchors = {{1, 1}, {2, 3}};
  const FeatureMap out = fuse_structured(f, anchors, zeros);
  CHECK(out.data == f.data);
}

TEST_CASE("fuse_structured matches dense-layer oracle") {
  const ModelShape shape{8, 4, 4, 1};
  const ParamStore params = ParamStore::seeded(shape, 6);
  const FeatureMap f = random_map(4, 4, 8, 8, 56);
  const std::vector<Vec2> anchors = {{0, 1}, {3, 2}, {1, 3}};

  const FeatureMap out = fuse_structured(f, anchors, params);

  const Tensor& w1 = params.get("sf.mlp1.w");
  const Tensor& b1 = params.get("sf.mlp1.b");
  const Tensor& w2 = params.get("sf.mlp2.w");
  const Tensor& b2 = params.get("sf.mlp2.b");
  const int c = 8, n_max = 4;
  const int in_w = c + 3 * n_max;
  const size_t n = anchors.size();

  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      const auto sf = structured_feature(Vec2(x, y), anchors);
      std::vector<double> in(in_w, 0.0);
      for (int i = 0; i < c; ++i) in[i] = f.at(y, x, i);
      for (size_t i = 0; i < n; ++i) {
        in[c + i] = sf[i];
        in[c + n_max + i] = sf[n + i];
        in[c + 2 * n_max + i] = sf[2 * n + i];
      }
      std::vector<double> hid(c);
      for (int r = 0; r < c; ++r) {
        double acc = b1.values[r];
        for (int q = 0; q < in_w; ++q) acc += w1.values[r * in_w + q] * in[q];
        hid[r] = std::max(0.0, acc);
      }
      for (int r = 0; r < c; ++r) {
        double acc = b2.values[r];
        for (int q = 0; q < c; ++q) acc += w2.values[r * c + q] * hid[q];
        CHECK(out.at(y, x, r) == doctest::Approx(f.at(y, x, r) + acc).epsilon(1e-12));
      }
    }
}

TEST_CASE("fuse_structured rejects anchor sets wider than the MLP") {
  const ModelShape shape{8, 4, 4, 1};
  const ParamStore params = ParamStore::seeded(shape, 7);
  const FeatureMap f = random_map(4, 4, 8, 8, 57);
  const std::vector<Vec2> five(5, Vec2{1, 1});  // shape allows at most 4
  CHECK_THROWS_AS(fuse_structured(f, five, params), ParamShapeMismatch);
}

TEST_CASE("param store reports missing and misshapen tensors") {
  const ParamStore params = ParamStore::seeded({8, 4, 4, 1}, 8);
  CHECK_THROWS_AS(params.get("nonexistent"), ParamShapeMismatch);
  CHECK_THROWS_AS(params.get("fuse.down.w", {3, 3}), ParamShapeMismatch);
}

TEST_CASE("param store round-trips through SEMP files") {
  const ModelShape shape{8, 4, 4, 1};
  const ParamStore params = ParamStore::seeded(shape, 42);
  const std::string path = "/tmp/sem_params_test.semp";
  params.save(path);
  const ParamStore loaded = ParamStore::load(path);

  CHECK(loaded.shape().channels == 8);
  CHECK(loaded.shape().anchor_count == 4);
  CHECK(loaded.tensors().size() == params.tensors().size());
  for (const auto& [name, t] : params.tensors()) {
    const Tensor& l = loaded.get(name, t.dims);
    for (size_t i = 0; i < t.values.size(); ++i)
      CHECK(l.values[i] == doctest::Approx(t.values[i]).epsilon(1e-6));
  }
}
