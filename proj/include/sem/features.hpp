#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sem/match_matrix.hpp"
#include "sem/params.hpp"

namespace sem {

struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> v;  // row-major, grayscale in [0, 1]

  Image() = default;
  Image(int h, int w) : height(h), width(w), v(static_cast<size_t>(h) * w, 0.0) {}

  double at(int y, int x) const { return v[static_cast<size_t>(y) * width + x]; }
  double& at(int y, int x) { return v[static_cast<size_t>(y) * width + x]; }
};

// Dense per-pixel descriptor grid. `scale` is the downsampling denominator
// relative to the input image: 2 (fine), 8 (coarse) or 32 (global).
struct FeatureMap {
  int height = 0;
  int width = 0;
  int channels = 0;
  int scale = 8;
  std::vector<double> data;  // row-major [y][x][c]

  FeatureMap() = default;
  FeatureMap(int h, int w, int c, int s)
      : height(h), width(w), channels(c), scale(s),
        data(static_cast<size_t>(h) * w * c, 0.0) {}

  double at(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  double& at(int y, int x, int c) {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  const double* pixel(int y, int x) const {
    return data.data() + (static_cast<size_t>(y) * width + x) * channels;
  }
  double* pixel(int y, int x) {
    return data.data() + (static_cast<size_t>(y) * width + x) * channels;
  }

  int pixel_count() const { return height * width; }
  GridShape grid() const { return {width, height}; }
  bool same_shape(const FeatureMap& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
};

struct MultiScaleFeatures {
  FeatureMap coarse;  // 1/8
  FeatureMap global;  // 1/32
  FeatureMap fine;    // 1/2
};

// High-confidence correspondence pairs, in grid coordinates.
struct AnchorSet {
  std::vector<Vec2> ref_anchors;
  std::vector<Vec2> src_anchors;

  int count() const { return static_cast<int>(ref_anchors.size()); }
  bool empty() const { return ref_anchors.empty(); }
};

// Toy multi-scale extractor: a stack of seeded 3x3 stride-2 convolutions with
// ReLU between stages (three stages to 1/8, two more to 1/32, one separate
// stage to 1/2). Deterministic in the parameter store. Image dims must be
// divisible by 32.
MultiScaleFeatures extract_features(const Image& image, const ParamStore& params);

// Cross-scale fusion: each scale is updated additively from the other through
// a 1x1 convolution, with 4x average pooling downward and 4x nearest-neighbor
// upsampling upward. Returns (fused 1/8, fused 1/32).
std::pair<FeatureMap, FeatureMap> fuse_scales(const FeatureMap& f8,
                                              const FeatureMap& f32,
                                              const ParamStore& params);

// Confidence of reference cell i: the maximum of row i of the match matrix.
double confidence(const MatchMatrix& m, int row);

// Collects all (i, argmax_j) pairs whose confidence clears sigma_h. More than
// n_a qualifying pairs are subsampled uniformly with the seed; fewer are all
// kept; zero yields an empty set (callers then skip structured fusion).
AnchorSet select_anchors(const MatchMatrix& m, double sigma_h, int n_a,
                         std::uint64_t seed);

// Structured feature of a point against one side's anchors: per-anchor
// coordinate differences and Euclidean distances, each block L1-normalized
// (denominator guarded by 1e-12), concatenated as dX || dY || D.
std::vector<double> structured_feature(const Vec2& point,
                                       std::span<const Vec2> anchors);

// Per-pixel MLP fusing appearance and structured features, with a residual
// connection so zero weights leave the map unchanged. Anchor sets shorter
// than the store's widest block are zero-padded per block; empty sets return
// the input untouched.
FeatureMap fuse_structured(const FeatureMap& f, std::span<const Vec2> anchors,
                           const ParamStore& params);

}  // namespace sem
