#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sem/features.hpp"
#include "sem/geometry.hpp"
#include "sem/params.hpp"

namespace sem {

// Boolean attention mask over [queries x keys]; true = attend.
struct AttentionMask {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> v;

  AttentionMask() = default;
  AttentionMask(int r, int c, bool fill = false)
      : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill ? 1 : 0) {}

  bool at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c] != 0; }
  void set(int r, int c, bool b) { v[static_cast<size_t>(r) * cols + c] = b ? 1 : 0; }
};

// Projection and per-block MLP weights for one attention block.
struct AttentionParams {
  Matrix wq, wk, wv, wo;  // C x C
  Matrix mlp_w1, mlp_w2;  // C x C
  std::vector<double> mlp_b1, mlp_b2;
  int head_count = 1;

  static AttentionParams from_store(const ParamStore& store, const std::string& prefix);
};

enum class AttentionKind { kVanilla, kLinear };

// Row-stochastic softmax weights of scaled dot-product attention, restricted
// to unmasked entries. Exposed so properties (convexity, permutation
// equivariance) can be asserted directly. Throws EmptyRow on an all-false
// mask row.
Matrix attention_weights(const Matrix& q, const Matrix& k, const AttentionMask* mask);

// softmax(Q K^T / sqrt(d)) V with masked entries receiving zero weight.
Matrix vanilla_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                         const AttentionMask* mask = nullptr);

// Kernelized attention with phi(u) = elu(u) + 1: rows are
// phi(q) (phi(K)^T V) / (phi(q) phi(K)^T 1). Linear in the key count.
Matrix linear_attention(const Matrix& q, const Matrix& k, const Matrix& v);

// One attention update: x_q + MLP(Wo * Attention(Wq x_q, Wk x_kv, Wv x_kv)).
// Multi-head splitting happens across channel slices when head_count > 1.
Matrix attention_update(const Matrix& x_q, const Matrix& x_kv,
                        const AttentionParams& p, AttentionKind kind,
                        const AttentionMask* mask = nullptr);

// Cross attention where each query cell attends only within its epipolar
// band. Invalid bands and bands missing every cell center fall back to full
// rows, so every query keeps at least one key.
FeatureMap epipolar_cross_attention(const FeatureMap& f_q, const FeatureMap& f_kv,
                                    const std::vector<EpipolarBand>& bands,
                                    const AttentionParams& p);

struct SelfCrossParams {
  AttentionParams self;
  AttentionParams cross;
};

// Self attention within each map, then cross attention between them (both
// cross updates computed from the post-self snapshot). Row-major
// flatten/unflatten. The optional masks apply to the cross stage only.
std::pair<FeatureMap, FeatureMap> self_cross_block(
    const FeatureMap& f_a, const FeatureMap& f_b, const SelfCrossParams& p,
    AttentionKind kind, const AttentionMask* mask_ab = nullptr,
    const AttentionMask* mask_ba = nullptr);

// Flatten helpers shared with the matching stage.
Matrix flatten(const FeatureMap& f);
FeatureMap unflatten(const Matrix& m, const FeatureMap& like);

}  // namespace sem
