#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "sem/attention.hpp"
#include "sem/features.hpp"
#include "sem/geometry.hpp"
#include "sem/matching.hpp"
#include "sem/params.hpp"

namespace sem {

struct PipelineConfig {
  double s0 = 10.0;      // band tolerance, coarse-grid units
  int anchor_count = 32;  // N_A
  double sigma_h = 0.5;   // anchor/pose confidence threshold; values > 1
                          // disable anchors and pose (fallback path)
  double theta = 0.2;     // match extraction threshold
  int iterations = 4;
  double tau = 0.0;  // dual-softmax temperature; <= 0 picks 1/sqrt(C)
  std::uint64_t seed = 0;

  bool enable_pose = true;
  int ransac_iterations = 500;
  double ransac_threshold = 0.0;  // normalized coords; <= 0 derives one grid
                                  // cell's worth from the scaled intrinsics
  int fine_window = 5;
  bool squared_fine_loss = false;

  void validate() const;
};

struct IterationRecord {
  MatchMatrix match_matrix;
  std::optional<RelativePose> pose;
  int anchor_count = 0;
  double band_valid_fraction = 0.0;  // over both directions' band lists
};

using IterationTrace = std::vector<IterationRecord>;

// Iterative coarse matching. Initialization: one self-and-cross vanilla
// attention layer on the 1/32 maps, one self-and-cross linear attention layer
// on the 1/8 maps, then cross-scale fusion. Each iteration then runs:
//   (1) self-and-cross vanilla attention on the 1/32 maps,
//   (2) the matching matrix from the current 1/8 maps (dual softmax on the
//       first iteration, the band-restricted rewrite afterwards),
//   (3) anchor selection and structured-feature fusion on both 1/8 maps,
//   (4) pose estimation from confident matches and band construction in both
//       directions (failures leave the bands invalid: global fallback),
//   (5) banded cross attention in both directions,
//   (6) cross-scale fusion again.
// Returns the last iteration's matrix plus the full per-iteration trace.
std::pair<MatchMatrix, IterationTrace> coarse_match(const MultiScaleFeatures& f_ref,
                                                    const MultiScaleFeatures& f_src,
                                                    const CameraModel& cam_ref,
                                                    const CameraModel& cam_src,
                                                    const PipelineConfig& cfg,
                                                    const ParamStore& params);

// Full forward pass: coarse matching, mutual-nearest-neighbor extraction and
// LoFTR-shaped subpixel refinement against the fine maps (skipped when the
// fine maps are absent).
MatchSet sem_forward(const MultiScaleFeatures& f_ref, const MultiScaleFeatures& f_src,
                     const CameraModel& cam_ref, const CameraModel& cam_src,
                     const PipelineConfig& cfg, const ParamStore& params,
                     IterationTrace* trace_out = nullptr);

// Image-input overload running the toy extractor first.
MatchSet sem_forward(const Image& img_ref, const Image& img_src,
                     const CameraModel& cam_ref, const CameraModel& cam_src,
                     const PipelineConfig& cfg, const ParamStore& params,
                     IterationTrace* trace_out = nullptr);

// Negative log-likelihood of the ground-truth cells under one matching
// matrix, log-clamped at 1e-12. `gt` holds flat (ref cell, src cell) indices.
double coarse_loss_single(const MatchMatrix& m,
                          const std::vector<std::pair<int, int>>& gt);

// Sum of coarse_loss_single over every iteration of the trace.
double coarse_loss(const IterationTrace& trace,
                   const std::vector<std::pair<int, int>>& gt);

// Analytic gradient of the single-iteration coarse loss with respect to the
// similarity matrix S feeding the dual softmax.
Matrix coarse_loss_similarity_gradient(const Matrix& s, GridShape ref_dims,
                                       GridShape src_dims,
                                       const std::vector<std::pair<int, int>>& gt);

// Heatmap-variance-weighted distance between refined source positions and
// ground-truth subpixel targets, averaged over matches whose reference cell
// has a target. The norm is unsquared by default; `squared` switches to the
// squared form. Variances are floored at 1e-6.
double fine_loss(const MatchSet& matches,
                 const std::map<std::pair<int, int>, Vec2>& gt_fine,
                 bool squared = false);

double total_loss(double coarse, double fine);

}  // namespace sem
