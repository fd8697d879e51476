#include "sem/pipeline.hpp"

#include <algorithm>
#include <cmath>

namespace sem {
namespace {

constexpr double kLogClamp = 1e-12;
constexpr double kSigmaFloor = 1e-6;

std::uint64_t iteration_seed(std::uint64_t base, int k) {
  return base ^ (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(k + 1));
}

std::vector<Correspondence> confident_matches(const MatchMatrix& m, double sigma_h) {
  std::vector<Correspondence> out;
  for (int i = 0; i < m.rows(); ++i) {
    const double* row = m.scores.row(i);
    int best_j = 0;
    double best = row[0];
    for (int j = 1; j < m.cols(); ++j)
      if (row[j] > best) {
        best = row[j];
        best_j = j;
      }
    if (best >= sigma_h)
      out.push_back({m.ref_dims.coord(i), m.src_dims.coord(best_j), best});
  }
  return out;
}

std::vector<EpipolarBand> build_bands(const CameraModel& cam_q, const CameraModel& cam_kv,
                                      const RelativePose& pose, const GridShape& grid,
                                      double s0) {
  std::vector<EpipolarBand> bands(static_cast<size_t>(grid.cell_count()));
  for (int i = 0; i < grid.cell_count(); ++i)
    bands[i] = epipolar_line(cam_q, cam_kv, pose, grid.coord(i), s0);
  return bands;
}

}  // namespace

void PipelineConfig::validate() const {
  if (s0 <= 0.0) throw Error("config: s0 must be positive");
  if (anchor_count < 1) throw Error("config: anchor count must be >= 1");
  if (sigma_h <= 0.0) throw Error("config: sigma_h must be positive");
  if (theta <= 0.0 || theta >= 1.0) throw Error("config: theta must lie in (0, 1)");
  if (iterations < 1) throw Error("config: iterations must be >= 1");
  if (fine_window < 1 || fine_window % 2 == 0)
    throw Error("config: fine window must be odd");
  if (ransac_iterations < 1) throw Error("config: ransac iterations must be >= 1");
}

std::pair<MatchMatrix, IterationTrace> coarse_match(const MultiScaleFeatures& f_ref,
                                                    const MultiScaleFeatures& f_src,
                                                    const CameraModel& cam_ref,
                                                    const CameraModel& cam_src,
                                                    const PipelineConfig& cfg,
                                                    const ParamStore& params) {
  cfg.validate();
  const int channels = f_ref.coarse.channels;
  if (channels != f_src.coarse.channels)
    throw ShapeMismatch("coarse_match: channel counts differ");

  const double tau =
      cfg.tau > 0.0 ? cfg.tau : 1.0 / std::sqrt(static_cast<double>(channels));

  const SelfCrossParams att32{AttentionParams::from_store(params, "att32.self"),
                              AttentionParams::from_store(params, "att32.cross")};
  const SelfCrossParams att8{AttentionParams::from_store(params, "att8.self"),
                             AttentionParams::from_store(params, "att8.cross")};
  const AttentionParams epi = AttentionParams::from_store(params, "epi.cross");

  const CameraModel gcam_ref = cam_ref.scaled(8.0);
  const CameraModel gcam_src = cam_src.scaled(8.0);
  PoseEstimateOptions pose_opts;
  pose_opts.iterations = cfg.ransac_iterations;
  pose_opts.inlier_threshold =
      cfg.ransac_threshold > 0.0
          ? cfg.ransac_threshold
          : 0.75 / std::min(gcam_ref.fx, gcam_ref.fy);  // one grid cell's worth

  // Initialization: global connection at both scales, then Eq.-style fusion.
  auto [r32, s32] = self_cross_block(f_ref.global, f_src.global, att32,
                                     AttentionKind::kVanilla);
  auto [r8, s8] =
      self_cross_block(f_ref.coarse, f_src.coarse, att8, AttentionKind::kLinear);
  std::tie(r8, r32) = fuse_scales(r8, r32, params);
  std::tie(s8, s32) = fuse_scales(s8, s32, params);

  const GridShape ref_grid = r8.grid();
  const GridShape src_grid = s8.grid();
  std::vector<EpipolarBand> bands_ref(static_cast<size_t>(ref_grid.cell_count()));
  std::vector<EpipolarBand> bands_src(static_cast<size_t>(src_grid.cell_count()));

  IterationTrace trace;
  for (int k = 0; k < cfg.iterations; ++k) {
    const std::uint64_t seed_k = iteration_seed(cfg.seed, k);
    IterationRecord record;

    std::tie(r32, s32) = self_cross_block(r32, s32, att32, AttentionKind::kVanilla);

    MatchMatrix m = k == 0 ? dual_softmax(r8, s8, tau)
                           : epipolar_rewrite(trace.back().match_matrix, r8, s8,
                                              bands_ref, bands_src, tau);

    const AnchorSet anchors =
        select_anchors(m, cfg.sigma_h, cfg.anchor_count, seed_k);
    record.anchor_count = anchors.count();
    if (!anchors.empty()) {
      r8 = fuse_structured(r8, anchors.ref_anchors, params);
      s8 = fuse_structured(s8, anchors.src_anchors, params);
    }

    std::optional<RelativePose> pose;
    if (cfg.enable_pose) {
      const std::vector<Correspondence> confident = confident_matches(m, cfg.sigma_h);
      if (confident.size() >= 8) {
        try {
          pose = estimate_pose(confident, gcam_ref, gcam_src, seed_k, pose_opts);
        } catch (const Error&) {
          pose.reset();  // this iteration falls back to global support
        }
      }
    }

    if (pose) {
      bands_ref = build_bands(gcam_ref, gcam_src, *pose, ref_grid, cfg.s0);
      bands_src =
          build_bands(gcam_src, gcam_ref, pose->inverse(), src_grid, cfg.s0);
      int valid = 0;
      for (const auto& b : bands_ref) valid += b.valid ? 1 : 0;
      for (const auto& b : bands_src) valid += b.valid ? 1 : 0;
      record.band_valid_fraction =
          static_cast<double>(valid) / (bands_ref.size() + bands_src.size());
    } else {
      std::fill(bands_ref.begin(), bands_ref.end(), EpipolarBand{});
      std::fill(bands_src.begin(), bands_src.end(), EpipolarBand{});
      record.band_valid_fraction = 0.0;
    }
    record.pose = pose;

    const FeatureMap r8_new = epipolar_cross_attention(r8, s8, bands_ref, epi);
    const FeatureMap s8_new = epipolar_cross_attention(s8, r8, bands_src, epi);
    r8 = r8_new;
    s8 = s8_new;

    std::tie(r8, r32) = fuse_scales(r8, r32, params);
    std::tie(s8, s32) = fuse_scales(s8, s32, params);

    record.match_matrix = std::move(m);
    trace.push_back(std::move(record));
  }

  MatchMatrix final_m = trace.back().match_matrix;
  return {std::move(final_m), std::move(trace)};
}

MatchSet sem_forward(const MultiScaleFeatures& f_ref, const MultiScaleFeatures& f_src,
                     const CameraModel& cam_ref, const CameraModel& cam_src,
                     const PipelineConfig& cfg, const ParamStore& params,
                     IterationTrace* trace_out) {
  auto [m, trace] = coarse_match(f_ref, f_src, cam_ref, cam_src, cfg, params);
  MatchSet set = extract_matches(m, cfg.theta);

  const bool have_fine = f_ref.fine.pixel_count() > 0 && f_src.fine.pixel_count() > 0;
  if (have_fine) {
    RefineParams rp;
    rp.window = cfg.fine_window;
    for (Match& match : set.matches) {
      const Refinement r =
          refine_match(match, f_ref.fine, f_src.fine, set.coarse_scale, rp);
      match.src_refined = r.src_px;
      match.sigma2 = r.sigma2;
    }
  }
  if (trace_out) *trace_out = std::move(trace);
  return set;
}

MatchSet sem_forward(const Image& img_ref, const Image& img_src,
                     const CameraModel& cam_ref, const CameraModel& cam_src,
                     const PipelineConfig& cfg, const ParamStore& params,
                     IterationTrace* trace_out) {
  const MultiScaleFeatures f_ref = extract_features(img_ref, params);
  const MultiScaleFeatures f_src = extract_features(img_src, params);
  return sem_forward(f_ref, f_src, cam_ref, cam_src, cfg, params, trace_out);
}

double coarse_loss_single(const MatchMatrix& m,
                          const std::vector<std::pair<int, int>>& gt) {
  if (gt.empty()) throw EmptyGroundTruth("coarse_loss: empty ground truth");
  double sum = 0.0;
  for (const auto& [i, j] : gt) {
    if (i < 0 || i >= m.rows() || j < 0 || j >= m.cols())
      throw Error("coarse_loss: ground-truth index out of range");
    sum += std::log(std::max(m.scores.at(i, j), kLogClamp));
  }
  return -sum / static_cast<double>(gt.size());
}

double coarse_loss(const IterationTrace& trace,
                   const std::vector<std::pair<int, int>>& gt) {
  double total = 0.0;
  for (const IterationRecord& rec : trace) total += coarse_loss_single(rec.match_matrix, gt);
  return total;
}

Matrix coarse_loss_similarity_gradient(const Matrix& s, GridShape ref_dims,
                                       GridShape src_dims,
                                       const std::vector<std::pair<int, int>>& gt) {
  if (gt.empty()) throw EmptyGroundTruth("coarse_loss gradient: empty ground truth");
  const int rows = s.rows();
  const int cols = s.cols();
  if (rows != ref_dims.cell_count() || cols != src_dims.cell_count())
    throw ShapeMismatch("coarse_loss gradient: scores do not match grids");

  // Row and column softmaxes of S.
  Matrix row_sm(rows, cols), col_sm(rows, cols);
  for (int i = 0; i < rows; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < cols; ++j) best = std::max(best, s.at(i, j));
    double denom = 0.0;
    for (int j = 0; j < cols; ++j) denom += std::exp(s.at(i, j) - best);
    for (int j = 0; j < cols; ++j) row_sm.at(i, j) = std::exp(s.at(i, j) - best) / denom;
  }
  for (int j = 0; j < cols; ++j) {
    double best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < rows; ++i) best = std::max(best, s.at(i, j));
    double denom = 0.0;
    for (int i = 0; i < rows; ++i) denom += std::exp(s.at(i, j) - best);
    for (int i = 0; i < rows; ++i) col_sm.at(i, j) = std::exp(s.at(i, j) - best) / denom;
  }

  // d log M(i,j) / d S(p,q) = [p==i]([q==j] - row_sm(i,q))
  //                         + [q==j]([p==i] - col_sm(p,j)).
  Matrix grad(rows, cols);
  const double inv_n = 1.0 / static_cast<double>(gt.size());
  for (const auto& [i, j] : gt) {
    for (int q = 0; q < cols; ++q)
      grad.at(i, q) -= inv_n * ((q == j ? 1.0 : 0.0) - row_sm.at(i, q));
    for (int p = 0; p < rows; ++p)
      grad.at(p, j) -= inv_n * ((p == i ? 1.0 : 0.0) - col_sm.at(p, j));
  }
  return grad;
}

double fine_loss(const MatchSet& matches,
                 const std::map<std::pair<int, int>, Vec2>& gt_fine, bool squared) {
  if (gt_fine.empty()) throw EmptyGroundTruth("fine_loss: empty ground truth");
  double sum = 0.0;
  int counted = 0;
  for (const Match& match : matches.matches) {
    const auto it = gt_fine.find({match.ref_x, match.ref_y});
    if (it == gt_fine.end()) continue;
    const double dist = (match.src_refined - it->second).norm();
    const double weight = 1.0 / std::max(match.sigma2, kSigmaFloor);
    sum += weight * (squared ? dist * dist : dist);
    ++counted;
  }
  if (counted == 0)
    throw EmptyGroundTruth("fine_loss: no match overlaps the ground truth");
  return sum / static_cast<double>(counted);
}

double total_loss(double coarse, double fine) { return coarse + fine; }

}  // namespace sem
