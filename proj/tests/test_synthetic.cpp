#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "sem/attention.hpp"
#include "sem/matching.hpp"
#include "sem/synthetic.hpp"

using namespace sem;

TEST_CASE("zero-motion scene has identical views and identity ground truth") {
  SceneSpec spec;
  spec.point_count = 20;
  spec.baseline = 0.0;
  spec.rotation_deg = 0.0;
  spec.seed = 3;
  const Scene scene = generate_scene(spec);

  for (const ScenePoint& pt : scene.points) {
    CHECK(pt.src_px.x == doctest::Approx(pt.ref_px.x).epsilon(1e-12));
    CHECK(pt.src_px.y == doctest::Approx(pt.ref_px.y).epsilon(1e-12));
  }
  const GroundTruth gt = ground_truth_matches(scene, 8);
  for (const auto& pair : gt.pairs) {
    CHECK(pair.ref_x == pair.src_x);
    CHECK(pair.ref_y == pair.src_y);
  }
  CHECK(scene.pose().translation.norm() == 0.0);
}

TEST_CASE("scene generation is deterministic per seed") {
  SceneSpec spec;
  spec.point_count = 40;
  spec.seed = 77;
  const Scene a = generate_scene(spec);
  const Scene b = generate_scene(spec);
  REQUIRE(a.points.size() == b.points.size());
  for (size_t i = 0; i < a.points.size(); ++i) {
    CHECK(a.points[i].ref_px.x == b.points[i].ref_px.x);
    CHECK(a.points[i].src_px.y == b.points[i].src_px.y);
  }
  for (size_t i = 0; i < a.descriptors.size(); ++i)
    CHECK(a.descriptors[i] == b.descriptors[i]);
}

TEST_CASE("extreme rotation is infeasible") {
  SceneSpec spec;
  spec.point_count = 10;
  spec.rotation_deg = 180.0;
  spec.seed = 5;
  CHECK_THROWS_AS(generate_scene(spec), InfeasibleSpec);
}

TEST_CASE("small point counts are rejected") {
  SceneSpec spec;
  spec.point_count = 4;
  CHECK_THROWS_AS(generate_scene(spec), Error);
}

TEST_CASE("ground truth cells follow floor arithmetic and the epipolar constraint") {
  SceneSpec spec;
  spec.point_count = 40;
  spec.seed = 11;
  const Scene scene = generate_scene(spec);
  const GroundTruth gt = ground_truth_matches(scene, 8);
  REQUIRE(!gt.pairs.empty());

  const RelativePose pose = scene.pose();
  for (const auto& pair : gt.pairs) {
    CHECK(pair.ref_x == static_cast<int>(std::floor(pair.ref_px.x / 8.0)));
    CHECK(pair.ref_y == static_cast<int>(std::floor(pair.ref_px.y / 8.0)));
    CHECK(pair.src_x == static_cast<int>(std::floor(pair.src_px.x / 8.0)));
    CHECK(pair.src_y == static_cast<int>(std::floor(pair.src_px.y / 8.0)));

    const EpipolarBand band =
        epipolar_line(scene.cam_ref, scene.cam_src, pose, pair.ref_px, 1.0);
    REQUIRE(band.valid);
    CHECK(band.distance(pair.src_px) <= 1e-9);
  }
}

TEST_CASE("duplicate ground-truth cells resolve to the nearest point") {
  SceneSpec spec;
  spec.point_count = 60;
  spec.distinct_cells = false;  // allow collisions
  spec.seed = 13;
  const Scene scene = generate_scene(spec);
  const GroundTruth gt = ground_truth_matches(scene, 8);

  std::set<int> seen;
  for (const auto& pair : gt.pairs) {
    const int idx = gt.ref_dims.index(pair.ref_x, pair.ref_y);
    CHECK(!seen.count(idx));
    seen.insert(idx);
    // The recorded point must be at least as close to the cell center as any
    // other point landing in the same cell.
    const Vec2 center{8.0 * pair.ref_x + 3.5, 8.0 * pair.ref_y + 3.5};
    for (const ScenePoint& pt : scene.points) {
      if (static_cast<int>(std::floor(pt.ref_px.x / 8.0)) == pair.ref_x &&
          static_cast<int>(std::floor(pt.ref_px.y / 8.0)) == pair.ref_y)
        CHECK((pair.ref_px - center).norm() <= (pt.ref_px - center).norm() + 1e-12);
    }
  }
}

TEST_CASE("band membership holds for ground truth under the exact pose") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
    SceneSpec spec;
    spec.point_count = 40;
    spec.seed = seed;
    const Scene scene = generate_scene(spec);
    const GroundTruth gt = ground_truth_matches(scene, 8);
    const CameraModel gref = scene.cam_ref.scaled(8);
    const CameraModel gsrc = scene.cam_src.scaled(8);
    const RelativePose pose = scene.pose();

    for (const auto& pair : gt.pairs) {
      const EpipolarBand band =
          epipolar_line(gref, gsrc, pose, Vec2(pair.ref_x, pair.ref_y), 2.0);
      const bool inside =
          !band.valid || band.contains(Vec2(pair.src_x, pair.src_y));
      CHECK(inside);
    }
  }
}

TEST_CASE("noiseless rendering recovers all ground truth by MNN") {
  SceneSpec spec;
  spec.point_count = 40;
  spec.seed = 21;
  spec.noise = 0.0;
  const Scene scene = generate_scene(spec);
  const auto [f_ref, f_src] = render_feature_maps(scene, 8);
  const GroundTruth gt = ground_truth_matches(scene, 8);

  const MatchMatrix m = dual_softmax(f_ref, f_src, 25.0);
  const MatchSet set = extract_matches(m, 0.2);

  std::set<std::pair<int, int>> got;
  for (const Match& match : set.matches)
    got.insert({gt.ref_dims.index(match.ref_x, match.ref_y),
                gt.src_dims.index(match.src_x, match.src_y)});
  for (const auto& pair : gt.pairs) {
    const std::pair<int, int> key{gt.ref_dims.index(pair.ref_x, pair.ref_y),
                                  gt.src_dims.index(pair.src_x, pair.src_y)};
    CHECK(got.count(key) == 1);
  }
}

TEST_CASE("planted duplicate descriptors create ambiguous rows") {
  SceneSpec spec;
  spec.point_count = 30;
  spec.duplicate_pairs = 15;  // every descriptor shared by two points
  spec.seed = 23;
  const Scene scene = generate_scene(spec);
  const auto [f_ref, f_src] = render_feature_maps(scene, 8);
  const GroundTruth gt = ground_truth_matches(scene, 8);
  const MatchMatrix m = dual_softmax(f_ref, f_src, 25.0);

  // Every ground-truth row's confidence should be split roughly in half by
  // the duplicated source cell: well below the distinct-descriptor regime.
  int ambiguous = 0;
  for (const auto& pair : gt.pairs)
    if (confidence(m, gt.ref_dims.index(pair.ref_x, pair.ref_y)) < 0.6) ++ambiguous;
  CHECK(ambiguous >= static_cast<int>(gt.pairs.size()) / 2);
}

TEST_CASE("rendering is deterministic and respects the noise knob") {
  SceneSpec spec;
  spec.point_count = 20;
  spec.seed = 29;
  spec.noise = 0.02;
  const Scene scene = generate_scene(spec);
  const auto [a_ref, a_src] = render_feature_maps(scene, 8);
  const auto [b_ref, b_src] = render_feature_maps(scene, 8);
  CHECK(a_ref.data == b_ref.data);
  CHECK(a_src.data == b_src.data);

  // Occupied cells sit near unit norm; empty cells near the low amplitude.
  const GroundTruth gt = ground_truth_matches(scene, 8);
  std::set<int> occupied;
  for (const auto& pair : gt.pairs) occupied.insert(gt.ref_dims.index(pair.ref_x, pair.ref_y));
  for (int i = 0; i < a_ref.pixel_count(); ++i) {
    const Vec2 c = gt.ref_dims.coord(i);
    double norm2 = 0.0;
    for (int ch = 0; ch < a_ref.channels; ++ch)
      norm2 += a_ref.at(static_cast<int>(c.y), static_cast<int>(c.x), ch) *
               a_ref.at(static_cast<int>(c.y), static_cast<int>(c.x), ch);
    if (occupied.count(i))
      CHECK(std::sqrt(norm2) >= 0.9);
    else
      CHECK(std::sqrt(norm2) <= 0.1);
  }
}

TEST_CASE("pose recovery from exact ground-truth correspondences") {
  for (std::uint64_t seed : {31ull, 32ull, 33ull}) {
    SceneSpec spec;
    spec.point_count = 30;
    spec.seed = seed;
    const Scene scene = generate_scene(spec);
    const GroundTruth gt = ground_truth_matches(scene, 8);

    std::vector<Correspondence> matches;
    for (const auto& pair : gt.pairs) matches.push_back({pair.ref_px, pair.src_px, 1.0});
    const RelativePose est = estimate_pose(matches, scene.cam_ref, scene.cam_src, 17);
    const PoseErrorDeg err = pose_error(est, scene.pose());
    CHECK(err.rotation <= 1e-3);
    CHECK(err.translation <= 1e-3);
  }
}

TEST_CASE("epipolar rewrite does not lose ground-truth mass on exact poses") {
  SceneSpec spec;
  spec.point_count = 40;
  spec.seed = 37;
  const Scene scene = generate_scene(spec);
  const auto [f_ref, f_src] = render_feature_maps(scene, 8);
  const GroundTruth gt = ground_truth_matches(scene, 8);
  const MatchMatrix m0 = dual_softmax(f_ref, f_src, 25.0);

  const CameraModel gref = scene.cam_ref.scaled(8);
  const CameraModel gsrc = scene.cam_src.scaled(8);
  const RelativePose pose = scene.pose();
  std::vector<EpipolarBand> bands_ref, bands_src;
  for (int i = 0; i < m0.rows(); ++i)
    bands_ref.push_back(epipolar_line(gref, gsrc, pose, gt.ref_dims.coord(i), 2.0));
  const RelativePose inv = pose.inverse();
  for (int j = 0; j < m0.cols(); ++j)
    bands_src.push_back(epipolar_line(gsrc, gref, inv, gt.src_dims.coord(j), 2.0));

  const MatchMatrix m1 = epipolar_rewrite(m0, f_ref, f_src, bands_ref, bands_src, 25.0);

  double mass0 = 0.0, mass1 = 0.0;
  for (const auto& pair : gt.pairs) {
    const int i = gt.ref_dims.index(pair.ref_x, pair.ref_y);
    const int j = gt.src_dims.index(pair.src_x, pair.src_y);
    mass0 += m0.scores.at(i, j);
    mass1 += m1.scores.at(i, j);
  }
  CHECK(mass1 >= mass0 - 1e-12);
}
