#include "sem/features.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace sem {
namespace {

// 3x3 stride-2 convolution with zero padding 1; halves each spatial dim.
FeatureMap conv3x3_s2(const FeatureMap& in, const Tensor& w, const Tensor& b,
                      int out_scale) {
  const int oc = w.dims[0];
  const int ic = w.dims[1];
  FeatureMap out(in.height / 2, in.width / 2, oc, out_scale);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      double* dst = out.pixel(y, x);
      for (int o = 0; o < oc; ++o) dst[o] = b.values[o];
      for (int ky = 0; ky < 3; ++ky) {
        const int sy = 2 * y + ky - 1;
        if (sy < 0 || sy >= in.height) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int sx = 2 * x + kx - 1;
          if (sx < 0 || sx >= in.width) continue;
          const double* srcpx = in.pixel(sy, sx);
          for (int o = 0; o < oc; ++o) {
            const double* wrow = w.values.data() +
                                 ((static_cast<size_t>(o) * ic) * 3 + ky) * 3 + kx;
            double acc = 0.0;
            for (int i = 0; i < ic; ++i) acc += wrow[static_cast<size_t>(i) * 9] * srcpx[i];
            dst[o] += acc;
          }
        }
      }
    }
  }
  return out;
}

FeatureMap relu(FeatureMap f) {
  for (double& v : f.data) v = std::max(0.0, v);
  return f;
}

FeatureMap image_as_map(const Image& img) {
  FeatureMap f(img.height, img.width, 1, 1);
  f.data = img.v;
  return f;
}

void apply_linear(const Tensor& w, const Tensor& b, const double* in, double* out) {
  const int rows = w.dims[0];
  const int cols = w.dims[1];
  for (int r = 0; r < rows; ++r) {
    double acc = b.values.empty() ? 0.0 : b.values[r];
    const double* wr = w.values.data() + static_cast<size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) acc += wr[c] * in[c];
    out[r] = acc;
  }
}

}  // namespace

MultiScaleFeatures extract_features(const Image& image, const ParamStore& params) {
  if (image.height < 32 || image.width < 32 || image.height % 32 != 0 ||
      image.width % 32 != 0)
    throw BadDimensions("extract_features: image dims must be divisible by 32, got " +
                        std::to_string(image.width) + "x" + std::to_string(image.height));

  const ModelShape shape = params.shape();
  const int c = shape.channels;
  const int half = c / 2;

  const FeatureMap img = image_as_map(image);
  const FeatureMap a1 = conv3x3_s2(img, params.get("enc.stage1.w", {half, 1, 3, 3}),
                                   params.get("enc.stage1.b", {half}), 2);
  const FeatureMap a2 = conv3x3_s2(relu(a1), params.get("enc.stage2.w", {c, half, 3, 3}),
                                   params.get("enc.stage2.b", {c}), 4);
  const FeatureMap a3 = conv3x3_s2(relu(a2), params.get("enc.stage3.w", {c, c, 3, 3}),
                                   params.get("enc.stage3.b", {c}), 8);
  const FeatureMap a4 = conv3x3_s2(relu(a3), params.get("enc.stage4.w", {c, c, 3, 3}),
                                   params.get("enc.stage4.b", {c}), 16);
  const FeatureMap a5 = conv3x3_s2(relu(a4), params.get("enc.stage5.w", {c, c, 3, 3}),
                                   params.get("enc.stage5.b", {c}), 32);
  const FeatureMap fine =
      conv3x3_s2(img, params.get("enc.fine.w", {shape.fine_channels, 1, 3, 3}),
                 params.get("enc.fine.b", {shape.fine_channels}), 2);

  MultiScaleFeatures out;
  out.coarse = a3;
  out.global = a5;
  out.fine = fine;
  return out;
}

std::pair<FeatureMap, FeatureMap> fuse_scales(const FeatureMap& f8,
                                              const FeatureMap& f32,
                                              const ParamStore& params) {
  if (f8.scale != 8 || f32.scale != 32)
    throw ScaleMismatch("fuse_scales: expected scales 8 and 32, got " +
                        std::to_string(f8.scale) + " and " + std::to_string(f32.scale));
  if (f8.height != 4 * f32.height || f8.width != 4 * f32.width ||
      f8.channels != f32.channels)
    throw ScaleMismatch("fuse_scales: spatial dims must differ by 4x with equal channels");

  const int c = f8.channels;
  const Tensor& wd = params.get("fuse.down.w", {c, c});
  const Tensor& bd = params.get("fuse.down.b", {c});
  const Tensor& wu = params.get("fuse.up.w", {c, c});
  const Tensor& bu = params.get("fuse.up.b", {c});

  // Down: 4x4 average pooling of the 1/8 map.
  FeatureMap pooled(f32.height, f32.width, c, 32);
  for (int y = 0; y < f32.height; ++y)
    for (int x = 0; x < f32.width; ++x) {
      double* dst = pooled.pixel(y, x);
      for (int dy = 0; dy < 4; ++dy)
        for (int dx = 0; dx < 4; ++dx) {
          const double* s = f8.pixel(4 * y + dy, 4 * x + dx);
          for (int i = 0; i < c; ++i) dst[i] += s[i];
        }
      for (int i = 0; i < c; ++i) dst[i] /= 16.0;
    }

  FeatureMap out32 = f32;
  std::vector<double> tmp(static_cast<size_t>(c));
  for (int y = 0; y < f32.height; ++y)
    for (int x = 0; x < f32.width; ++x) {
      apply_linear(wd, bd, pooled.pixel(y, x), tmp.data());
      double* dst = out32.pixel(y, x);
      for (int i = 0; i < c; ++i) dst[i] += tmp[i];
    }

  // Up: nearest-neighbor replication of the 1/32 map.
  FeatureMap out8 = f8;
  for (int y = 0; y < f8.height; ++y)
    for (int x = 0; x < f8.width; ++x) {
      apply_linear(wu, bu, f32.pixel(y / 4, x / 4), tmp.data());
      double* dst = out8.pixel(y, x);
      for (int i = 0; i < c; ++i) dst[i] += tmp[i];
    }

  return {std::move(out8), std::move(out32)};
}

double confidence(const MatchMatrix& m, int row) {
  double best = 0.0;
  const double* r = m.scores.row(row);
  for (int j = 0; j < m.cols(); ++j) best = std::max(best, r[j]);
  return best;
}

AnchorSet select_anchors(const MatchMatrix& m, double sigma_h, int n_a,
                         std::uint64_t seed) {
  struct Pair {
    int i, j;
  };
  std::vector<Pair> qualified;
  for (int i = 0; i < m.rows(); ++i) {
    const double* r = m.scores.row(i);
    int best_j = 0;
    double best = r[0];
    for (int j = 1; j < m.cols(); ++j)
      if (r[j] > best) {
        best = r[j];
        best_j = j;
      }
    if (best >= sigma_h) qualified.push_back({i, best_j});
  }

  if (static_cast<int>(qualified.size()) > n_a) {
    std::mt19937_64 rng(seed);
    for (int k = 0; k < n_a; ++k) {
      std::uniform_int_distribution<int> pick(k, static_cast<int>(qualified.size()) - 1);
      std::swap(qualified[k], qualified[pick(rng)]);
    }
    qualified.resize(static_cast<size_t>(n_a));
  }

  AnchorSet anchors;
  for (const Pair& p : qualified) {
    anchors.ref_anchors.push_back(m.ref_dims.coord(p.i));
    anchors.src_anchors.push_back(m.src_dims.coord(p.j));
  }
  return anchors;
}

std::vector<double> structured_feature(const Vec2& point,
                                       std::span<const Vec2> anchors) {
  const size_t n = anchors.size();
  std::vector<double> out(3 * n);
  double l1x = 0.0, l1y = 0.0, l1d = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double dx = point.x - anchors[i].x;
    const double dy = point.y - anchors[i].y;
    const double d = std::hypot(dx, dy);
    out[i] = dx;
    out[n + i] = dy;
    out[2 * n + i] = d;
    l1x += std::abs(dx);
    l1y += std::abs(dy);
    l1d += d;
  }
  constexpr double kGuard = 1e-12;
  for (size_t i = 0; i < n; ++i) {
    out[i] /= l1x + kGuard;
    out[n + i] /= l1y + kGuard;
    out[2 * n + i] /= l1d + kGuard;
  }
  return out;
}

FeatureMap fuse_structured(const FeatureMap& f, std::span<const Vec2> anchors,
                           const ParamStore& params) {
  if (anchors.empty()) return f;

  const ModelShape shape = params.shape();
  const int c = f.channels;
  const int n_max = shape.anchor_count;
  if (static_cast<int>(anchors.size()) > n_max)
    throw ParamShapeMismatch("fuse_structured: " + std::to_string(anchors.size()) +
                             " anchors exceed the MLP width " + std::to_string(n_max));

  const Tensor& w1 = params.get("sf.mlp1.w", {c, c + 3 * n_max});
  const Tensor& b1 = params.get("sf.mlp1.b", {c});
  const Tensor& w2 = params.get("sf.mlp2.w", {c, c});
  const Tensor& b2 = params.get("sf.mlp2.b", {c});

  FeatureMap out = f;
  const size_t n = anchors.size();
  std::vector<double> input(static_cast<size_t>(c + 3 * n_max));
  std::vector<double> hidden(static_cast<size_t>(c));
  std::vector<double> delta(static_cast<size_t>(c));

  for (int y = 0; y < f.height; ++y) {
    for (int x = 0; x < f.width; ++x) {
      const std::vector<double> sf = structured_feature(Vec2(x, y), anchors);
      std::fill(input.begin(), input.end(), 0.0);
      const double* px = f.pixel(y, x);
      std::copy(px, px + c, input.begin());
      // Blocks are padded independently so each lands at a fixed offset.
      for (size_t i = 0; i < n; ++i) {
        input[static_cast<size_t>(c) + i] = sf[i];
        input[static_cast<size_t>(c + n_max) + i] = sf[n + i];
        input[static_cast<size_t>(c + 2 * n_max) + i] = sf[2 * n + i];
      }
      apply_linear(w1, b1, input.data(), hidden.data());
      for (double& h : hidden) h = std::max(0.0, h);
      apply_linear(w2, b2, hidden.data(), delta.data());
      double* dst = out.pixel(y, x);
      for (int i = 0; i < c; ++i) dst[i] += delta[i];
    }
  }
  return out;
}

}  // namespace sem
