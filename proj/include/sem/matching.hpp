#pragma once

#include <vector>

#include "sem/features.hpp"
#include "sem/geometry.hpp"
#include "sem/match_matrix.hpp"

namespace sem {

struct Match {
  int ref_x = 0, ref_y = 0;  // coarse cells
  int src_x = 0, src_y = 0;
  double confidence = 0.0;
  Vec2 src_refined;     // subpixel source location, image pixels
  double sigma2 = 0.0;  // total variance of the refinement heatmap (fine cells^2)
};

struct MatchSet {
  std::vector<Match> matches;
  GridShape ref_dims, src_dims;
  int coarse_scale = 8;
};

// M(i, j) = softmax(S(i, :))(j) * softmax(S(:, j))(i) with
// S(i, j) = tau * <f_ref(i), f_src(j)>.
MatchMatrix dual_softmax(const FeatureMap& f_ref, const FeatureMap& f_src, double tau);

// Same construction from a precomputed similarity matrix (tau already
// applied). Also the entry point for loss-gradient checks.
MatchMatrix dual_softmax_from_scores(const Matrix& s, GridShape ref_dims,
                                     GridShape src_dims, double tau);

// Rewrites the matching matrix over epipolar-band support: entry (i, j) is
// kept iff j lies in ref-cell i's band or i lies in src-cell j's band, with
// softmaxes taken over the restricted support and zeros elsewhere. Invalid
// bands contribute full rows/columns; empty support rows or columns fall back
// to full support.
MatchMatrix epipolar_rewrite(const MatchMatrix& m, const FeatureMap& f_ref,
                             const FeatureMap& f_src,
                             const std::vector<EpipolarBand>& bands_ref,
                             const std::vector<EpipolarBand>& bands_src, double tau);

// Mutual-nearest-neighbor matches above threshold theta. src_refined is
// initialized to the source cell center in image pixels; sigma2 to zero.
MatchSet extract_matches(const MatchMatrix& m, double theta);

struct RefineParams {
  int window = 5;
  double temperature = 0.0;  // <= 0 picks 1/sqrt(C)
};

struct Refinement {
  Vec2 src_px;    // image pixels
  double sigma2;  // fine cells^2
};

// LoFTR-shaped refinement: correlate the reference descriptor at the match
// center against a window x window patch of the fine source map, softmax into
// a heatmap, and take its expectation as the subpixel location. Windows are
// clamped at map borders, never dropped.
Refinement refine_match(const Match& coarse, const FeatureMap& fine_ref,
                        const FeatureMap& fine_src, int coarse_scale,
                        const RefineParams& rp = {});

}  // namespace sem
