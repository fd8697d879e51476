#include "sem/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

namespace sem {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kBorderMarginPx = 4.0;

std::vector<double> unit_gaussian(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> v(static_cast<size_t>(dim));
  double norm2 = 0.0;
  for (double& x : v) {
    x = gauss(rng);
    norm2 += x * x;
  }
  const double inv = norm2 > 0.0 ? 1.0 / std::sqrt(norm2) : 0.0;
  for (double& x : v) x *= inv;
  return v;
}

int cell_of(double px, int scale, int cells) {
  return std::clamp(static_cast<int>(std::floor(px / scale)), 0, cells - 1);
}

double cell_center_px(int cell, int scale) {
  return scale * cell + (scale - 1) / 2.0;
}

// Nearest-to-center winner per cell; ties cannot occur with continuous draws.
std::map<int, int> cell_winners(const Scene& scene, int scale, bool source_side,
                                const GridShape& dims) {
  std::map<int, int> winner;  // flat cell index -> point index
  for (size_t p = 0; p < scene.points.size(); ++p) {
    const Vec2 px = source_side ? scene.points[p].src_px : scene.points[p].ref_px;
    const int cx = cell_of(px.x, scale, dims.width);
    const int cy = cell_of(px.y, scale, dims.height);
    const int idx = dims.index(cx, cy);
    const Vec2 center{cell_center_px(cx, scale), cell_center_px(cy, scale)};
    auto it = winner.find(idx);
    if (it == winner.end()) {
      winner[idx] = static_cast<int>(p);
      continue;
    }
    const Vec2 other = source_side ? scene.points[it->second].src_px
                                   : scene.points[it->second].ref_px;
    if ((px - center).norm() < (other - center).norm()) it->second = static_cast<int>(p);
  }
  return winner;
}

FeatureMap render_side(const Scene& scene, int scale, bool source_side,
                       std::uint64_t stream_seed) {
  const int cells = scene.cam_ref.width / scale;
  const GridShape dims{cells, cells};
  const int d = static_cast<int>(scene.descriptors.empty() ? 0 : scene.descriptors[0].size());
  FeatureMap map(cells, cells, d, scale);

  const std::map<int, int> winner = cell_winners(scene, scale, source_side, dims);

  std::mt19937_64 rng(stream_seed);
  constexpr double kEmptyAmplitude = 0.05;
  for (int y = 0; y < cells; ++y)
    for (int x = 0; x < cells; ++x) {
      const std::vector<double> jitter = unit_gaussian(rng, d);
      const auto it = winner.find(dims.index(x, y));
      double* dst = map.pixel(y, x);
      if (it == winner.end()) {
        for (int c = 0; c < d; ++c) dst[c] = kEmptyAmplitude * jitter[c];
      } else {
        const auto& desc = scene.descriptors[scene.points[it->second].descriptor_id];
        for (int c = 0; c < d; ++c) dst[c] = desc[c] + scene.noise * jitter[c];
      }
    }
  return map;
}

}  // namespace

Scene generate_scene(const SceneSpec& spec) {
  if (spec.point_count < 8)
    throw Error("generate_scene: point count must be >= 8, got " +
                std::to_string(spec.point_count));
  if (spec.image_size < 32 || spec.image_size % 32 != 0)
    throw Error("generate_scene: image size must be a positive multiple of 32");
  if (spec.min_depth <= 0.0 || spec.max_depth < spec.min_depth)
    throw Error("generate_scene: bad depth range");

  Scene scene;
  scene.seed = spec.seed;
  scene.noise = spec.noise;
  const int s = spec.image_size;
  scene.cam_ref = {spec.focal, spec.focal, (s - 1) / 2.0, (s - 1) / 2.0, s, s};
  scene.cam_src = scene.cam_ref;

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);

  const Vec3 axis{0.3 * u(rng), 1.0, 0.3 * u(rng)};
  scene.rotation = axis_angle(axis, spec.rotation_deg * kPi / 180.0);
  const Vec3 t_dir = Vec3{u(rng), 0.4 * u(rng), 0.4 * u(rng)}.normalized();
  scene.translation_metric = t_dir * spec.baseline;

  if (2 * spec.duplicate_pairs > spec.point_count)
    throw Error("generate_scene: more duplicate pairs than points");
  const int n_desc = spec.point_count - spec.duplicate_pairs;
  for (int i = 0; i < n_desc; ++i)
    scene.descriptors.push_back(unit_gaussian(rng, spec.descriptor_dim));
  // Points 0..2*duplicate_pairs-1 pair up on shared descriptors.
  auto descriptor_of = [&](int i) {
    return i < 2 * spec.duplicate_pairs ? i / 2 : i - spec.duplicate_pairs;
  };

  const Mat3 kinv = scene.cam_ref.inverse_intrinsics();
  const Mat3 k = scene.cam_src.intrinsics();
  std::uniform_real_distribution<double> upix(kBorderMarginPx, s - 1 - kBorderMarginPx);
  std::uniform_real_distribution<double> udepth(spec.min_depth, spec.max_depth);

  std::set<int> used_ref_cells, used_src_cells;
  const GridShape coarse{s / 8, s / 8};

  constexpr int kMaxTriesPerPoint = 400;
  for (int i = 0; i < spec.point_count; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxTriesPerPoint; ++attempt) {
      const Vec2 ref_px{upix(rng), upix(rng)};
      const double depth = udepth(rng);
      const Vec3 pos = (kinv * Vec3{ref_px.x, ref_px.y, 1.0}) * depth;

      const Vec3 in_src = scene.rotation * pos + scene.translation_metric;
      if (in_src.z < 0.5) continue;
      const Vec3 proj = k * in_src;
      const Vec2 src_px{proj.x / proj.z, proj.y / proj.z};
      if (src_px.x < kBorderMarginPx || src_px.x > s - 1 - kBorderMarginPx ||
          src_px.y < kBorderMarginPx || src_px.y > s - 1 - kBorderMarginPx)
        continue;

      if (spec.distinct_cells) {
        const int rc = coarse.index(cell_of(ref_px.x, 8, coarse.width),
                                    cell_of(ref_px.y, 8, coarse.height));
        const int sc = coarse.index(cell_of(src_px.x, 8, coarse.width),
                                    cell_of(src_px.y, 8, coarse.height));
        if (used_ref_cells.count(rc) || used_src_cells.count(sc)) continue;
        used_ref_cells.insert(rc);
        used_src_cells.insert(sc);
      }

      ScenePoint pt;
      pt.position = pos;
      pt.descriptor_id = descriptor_of(i);
      pt.ref_px = ref_px;
      pt.src_px = src_px;
      scene.points.push_back(pt);
      placed = true;
      break;
    }
    if (!placed)
      throw InfeasibleSpec("generate_scene: co-visibility unreachable after " +
                           std::to_string(kMaxTriesPerPoint) + " tries (point " +
                           std::to_string(i) + ")");
  }
  return scene;
}

GroundTruth ground_truth_matches(const Scene& scene, int scale) {
  GroundTruth gt;
  gt.scale = scale;
  gt.ref_dims = {scene.cam_ref.width / scale, scene.cam_ref.height / scale};
  gt.src_dims = {scene.cam_src.width / scale, scene.cam_src.height / scale};

  const std::map<int, int> winner = cell_winners(scene, scale, false, gt.ref_dims);
  for (const auto& [cell, p] : winner) {
    const ScenePoint& pt = scene.points[static_cast<size_t>(p)];
    GroundTruthPair pair;
    const Vec2 rc = gt.ref_dims.coord(cell);
    pair.ref_x = static_cast<int>(rc.x);
    pair.ref_y = static_cast<int>(rc.y);
    pair.src_x = cell_of(pt.src_px.x, scale, gt.src_dims.width);
    pair.src_y = cell_of(pt.src_px.y, scale, gt.src_dims.height);
    pair.ref_px = pt.ref_px;
    pair.src_px = pt.src_px;
    gt.pairs.push_back(pair);
  }
  return gt;
}

std::pair<FeatureMap, FeatureMap> render_feature_maps(const Scene& scene, int scale) {
  return {render_side(scene, scale, false, scene.seed * 2654435761u + scale),
          render_side(scene, scale, true, scene.seed * 2654435761u + scale + 1)};
}

Image render_image(const Scene& scene, bool source_view) {
  const int s = scene.cam_ref.width;
  Image img(s, s);
  constexpr double kSigma = 1.5;
  constexpr int kSupport = 5;
  for (const ScenePoint& pt : scene.points) {
    const Vec2 px = source_view ? pt.src_px : pt.ref_px;
    const double intensity =
        0.35 + 0.6 * std::fmod(0.6180339887 * (pt.descriptor_id + 1), 1.0);
    const int x0 = std::max(0, static_cast<int>(px.x) - kSupport);
    const int x1 = std::min(s - 1, static_cast<int>(px.x) + kSupport);
    const int y0 = std::max(0, static_cast<int>(px.y) - kSupport);
    const int y1 = std::min(s - 1, static_cast<int>(px.y) + kSupport);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double r2 = (x - px.x) * (x - px.x) + (y - px.y) * (y - px.y);
        img.at(y, x) += intensity * std::exp(-r2 / (2.0 * kSigma * kSigma));
      }
  }
  for (double& v : img.v) v = std::clamp(v, 0.0, 1.0);
  return img;
}

}  // namespace sem
