#pragma once

#include <cstdint>
#include <vector>

#include "sem/features.hpp"
#include "sem/geometry.hpp"

namespace sem {

struct SceneSpec {
  int point_count = 60;
  double baseline = 0.5;       // metric translation magnitude
  double rotation_deg = 10.0;  // about a mostly-vertical axis
  int image_size = 128;        // square, divisible by 32
  double focal = 110.0;
  double min_depth = 4.0;
  double max_depth = 8.0;
  int descriptor_dim = 32;
  double noise = 0.0;          // descriptor noise amplitude in rendered maps
  int duplicate_pairs = 0;     // planted repetitive texture: this many point
                               // pairs share one descriptor, the rest unique
  bool distinct_cells = true;  // reject points sharing a coarse cell
  std::uint64_t seed = 0;
};

struct ScenePoint {
  Vec3 position;  // reference-camera frame
  int descriptor_id = 0;
  Vec2 ref_px, src_px;  // exact subpixel projections
};

// Calibrated two-view scene with exact pose, depths and per-point
// descriptors: the ground-truth oracle behind the synthetic benchmarks.
struct Scene {
  CameraModel cam_ref, cam_src;
  Mat3 rotation = Mat3::identity();
  Vec3 translation_metric;  // metric-scale T, kept for depth math
  std::vector<ScenePoint> points;
  std::vector<std::vector<double>> descriptors;  // unit norm
  double noise = 0.0;
  std::uint64_t seed = 0;

  // Export with unit-normalized T (zero translation stays zero, which
  // downstream treats as "no epipolar constraint").
  RelativePose pose() const {
    RelativePose p;
    p.rotation = rotation;
    const double n = translation_metric.norm();
    p.translation = n > 0.0 ? translation_metric * (1.0 / n) : Vec3{};
    return p;
  }
};

// Samples frustum-visible points with co-visibility enforced by rejection;
// deterministic per seed. Throws InfeasibleSpec when bounded retries cannot
// satisfy co-visibility (or cell uniqueness when requested).
Scene generate_scene(const SceneSpec& spec);

struct GroundTruthPair {
  int ref_x = 0, ref_y = 0;  // cells at the requested scale
  int src_x = 0, src_y = 0;
  Vec2 ref_px, src_px;  // exact subpixel projections, image pixels
};

struct GroundTruth {
  std::vector<GroundTruthPair> pairs;
  GridShape ref_dims, src_dims;
  int scale = 8;
};

// Cell-level ground truth: one pair per reference cell, duplicates resolved
// nearest-to-center, plus the exact subpixel source target per pair.
GroundTruth ground_truth_matches(const Scene& scene, int scale);

// Descriptor maps at a given scale: each cell containing a projected point
// carries that point's descriptor plus small seeded noise; empty cells carry
// low-norm noise. Returns (reference map, source map).
std::pair<FeatureMap, FeatureMap> render_feature_maps(const Scene& scene, int scale);

// Grayscale rendering (Gaussian splats per point) for the extractor path and
// visualization.
Image render_image(const Scene& scene, bool source_view);

}  // namespace sem
