#include "sem/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace sem {
namespace {

constexpr double kPi = 3.14159265358979323846;

double degrees(double rad) { return rad * 180.0 / kPi; }

Vec3 to_normalized(const Mat3& kinv, const Vec2& px) {
  return kinv * Vec3{px.x, px.y, 1.0};
}

// Essential-matrix residual, first order (Sampson) point-to-constraint
// distance in normalized coordinates.
double sampson_distance(const Mat3& e, const Vec3& x_ref, const Vec3& x_src) {
  const Vec3 ex = e * x_ref;
  const Vec3 etx = e.transposed() * x_src;
  const double num = x_src.dot(ex);
  const double den = ex.x * ex.x + ex.y * ex.y + etx.x * etx.x + etx.y * etx.y;
  if (den <= 0.0) return std::numeric_limits<double>::infinity();
  return std::abs(num) / std::sqrt(den);
}

// Least-squares essential matrix from >= 8 normalized correspondences via the
// eight-point algorithm with isotropic (Hartley) preconditioning, projected
// onto the essential manifold.
Mat3 eight_point(const std::vector<Vec3>& ref, const std::vector<Vec3>& src,
                 const std::vector<int>& idx) {
  Vec2 mean_r{0, 0}, mean_s{0, 0};
  for (int i : idx) {
    mean_r = mean_r + Vec2{ref[i].x, ref[i].y};
    mean_s = mean_s + Vec2{src[i].x, src[i].y};
  }
  const double inv_n = 1.0 / static_cast<double>(idx.size());
  mean_r = mean_r * inv_n;
  mean_s = mean_s * inv_n;

  double scale_r = 0.0, scale_s = 0.0;
  for (int i : idx) {
    scale_r += (Vec2{ref[i].x, ref[i].y} - mean_r).norm();
    scale_s += (Vec2{src[i].x, src[i].y} - mean_s).norm();
  }
  scale_r = scale_r * inv_n;
  scale_s = scale_s * inv_n;
  const double sr = scale_r > 1e-12 ? std::sqrt(2.0) / scale_r : 1.0;
  const double ss = scale_s > 1e-12 ? std::sqrt(2.0) / scale_s : 1.0;

  Mat3 t_ref = Mat3::identity();
  t_ref(0, 0) = sr;
  t_ref(1, 1) = sr;
  t_ref(0, 2) = -sr * mean_r.x;
  t_ref(1, 2) = -sr * mean_r.y;
  Mat3 t_src = Mat3::identity();
  t_src(0, 0) = ss;
  t_src(1, 1) = ss;
  t_src(0, 2) = -ss * mean_s.x;
  t_src(1, 2) = -ss * mean_s.y;

  Matrix ata(9, 9);
  for (int i : idx) {
    const Vec3 a = t_ref * ref[i];
    const Vec3 b = t_src * src[i];
    const double row[9] = {b.x * a.x, b.x * a.y, b.x, b.y * a.x, b.y * a.y,
                           b.y,       a.x,       a.y, 1.0};
    for (int p = 0; p < 9; ++p)
      for (int q = 0; q < 9; ++q) ata.at(p, q) += row[p] * row[q];
  }

  std::vector<double> lambda;
  Matrix vecs;
  symmetric_eigen(ata, lambda, vecs);

  Mat3 e;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) e(r, c) = vecs.at(r * 3 + c, 8);  // smallest eigenvalue

  e = t_src.transposed() * e * t_ref;

  // Project onto the essential manifold: singular values (1, 1, 0).
  const Svd3 svd = svd3(e);
  Mat3 sigma{};
  sigma(0, 0) = 1.0;
  sigma(1, 1) = 1.0;
  return svd.u * sigma * svd.v.transposed();
}

struct Candidate {
  Mat3 r;
  Vec3 t;
};

std::array<Candidate, 4> decompose_essential(const Mat3& e) {
  Svd3 svd = svd3(e);
  if (svd.u.det() < 0.0) svd.u = svd.u * -1.0;
  if (svd.v.det() < 0.0) svd.v = svd.v * -1.0;

  Mat3 w{};
  w(0, 1) = -1.0;
  w(1, 0) = 1.0;
  w(2, 2) = 1.0;

  const Mat3 r1 = svd.u * w * svd.v.transposed();
  const Mat3 r2 = svd.u * w.transposed() * svd.v.transposed();
  const Vec3 t{svd.u(0, 2), svd.u(1, 2), svd.u(2, 2)};
  return {Candidate{r1, t}, Candidate{r1, -t}, Candidate{r2, t}, Candidate{r2, -t}};
}

// Two-ray triangulation depths: X_src = z_src * x_src = R * (z_ref * x_ref) + T.
// Returns false when the rays are numerically parallel.
bool triangulate_depths(const Mat3& r, const Vec3& t, const Vec3& x_ref,
                        const Vec3& x_src, double& z_ref, double& z_src) {
  const Vec3 a = r * x_ref;
  const Vec3 b = x_src;
  const double aa = a.dot(a);
  const double ab = a.dot(b);
  const double bb = b.dot(b);
  const double det = aa * bb - ab * ab;
  if (std::abs(det) < 1e-12 * aa * bb) return false;
  const double at = a.dot(t);
  const double bt = b.dot(t);
  // Normal equations of min || z_src*b - z_ref*a - T ||^2.
  z_ref = (bb * (-at) + ab * bt) / det;
  z_src = (ab * (-at) + aa * bt) / det;
  return true;
}

int cheirality_votes(const Candidate& cand, const std::vector<Vec3>& ref,
                     const std::vector<Vec3>& src, const std::vector<int>& idx) {
  int votes = 0;
  for (int i : idx) {
    double zr, zs;
    if (!triangulate_depths(cand.r, cand.t, ref[i], src[i], zr, zs)) continue;
    if (zr > 0.0 && zs > 0.0) ++votes;
  }
  return votes;
}

}  // namespace

Vec3 project_point(const CameraModel& cam_ref, const CameraModel& cam_src,
                   const RelativePose& pose, const Vec2& pixel) {
  const Vec3 ray = cam_ref.inverse_intrinsics() * Vec3{pixel.x, pixel.y, 1.0};
  return cam_src.intrinsics() * (pose.rotation * ray + pose.translation);
}

Vec3 epipole(const CameraModel& cam_src, const RelativePose& pose) {
  return cam_src.intrinsics() * pose.translation;
}

EpipolarBand epipolar_line(const CameraModel& cam_ref, const CameraModel& cam_src,
                           const RelativePose& pose, const Vec2& pixel,
                           double tolerance) {
  EpipolarBand band;
  band.tolerance = tolerance;

  const Vec3 p_epi = epipole(cam_src, pose);
  const Vec3 p_pt = project_point(cam_ref, cam_src, pose, pixel);
  const Vec3 line = p_epi.cross(p_pt);

  const double point_scale = std::max(1.0, p_epi.norm() * p_pt.norm());
  if (line.norm() <= 1e-12 * point_scale) return band;  // linearly dependent points

  const double ab = std::hypot(line.x, line.y);
  if (ab <= 1e-12 * line.norm()) return band;  // line at infinity

  band.line = line * (1.0 / ab);
  band.valid = true;
  return band;
}

BoolGrid band_mask(const EpipolarBand& band, int grid_w, int grid_h) {
  if (!band.valid) return BoolGrid(grid_w, grid_h, true);
  BoolGrid grid(grid_w, grid_h, false);
  for (int y = 0; y < grid_h; ++y)
    for (int x = 0; x < grid_w; ++x)
      grid.set(x, y, band.distance(Vec2(x, y)) <= band.tolerance);
  return grid;
}

RelativePose estimate_pose(const std::vector<Correspondence>& matches,
                           const CameraModel& cam_ref, const CameraModel& cam_src,
                           std::uint64_t seed, const PoseEstimateOptions& opts) {
  const int n = static_cast<int>(matches.size());
  if (n < 8)
    throw InsufficientMatches("estimate_pose: need >= 8 matches, got " +
                              std::to_string(n));

  const Mat3 kinv_ref = cam_ref.inverse_intrinsics();
  const Mat3 kinv_src = cam_src.inverse_intrinsics();
  std::vector<Vec3> ref(n), src(n);
  for (int i = 0; i < n; ++i) {
    ref[i] = to_normalized(kinv_ref, matches[i].ref_pt);
    src[i] = to_normalized(kinv_src, matches[i].src_pt);
  }

  std::vector<int> all(n);
  for (int i = 0; i < n; ++i) all[i] = i;

  std::mt19937_64 rng(seed);
  std::vector<int> pool(all);
  std::vector<int> best_inliers;
  Mat3 best_e;
  int best_count = -1;

  for (int it = 0; it < opts.iterations; ++it) {
    // Partial Fisher-Yates draw of 8 distinct indices.
    for (int k = 0; k < 8; ++k) {
      std::uniform_int_distribution<int> pick(k, n - 1);
      std::swap(pool[k], pool[pick(rng)]);
    }
    const std::vector<int> sample(pool.begin(), pool.begin() + 8);

    Mat3 e;
    try {
      e = eight_point(ref, src, sample);
    } catch (const Error&) {
      continue;
    }

    std::vector<int> inliers;
    for (int i = 0; i < n; ++i)
      if (sampson_distance(e, ref[i], src[i]) < opts.inlier_threshold)
        inliers.push_back(i);

    if (static_cast<int>(inliers.size()) > best_count) {
      best_count = static_cast<int>(inliers.size());
      best_e = e;
      best_inliers = std::move(inliers);
    }
  }

  if (best_inliers.size() < 8) best_inliers = all;

  // Refinement with residual-scale re-gating plus a leave-worst-out probe.
  // A slipped outlier can bend the least-squares fit into a stable state
  // whose residuals all sit inside the fixed threshold; a fit whose residual
  // scale collapses once the worst point is dropped flags that contamination.
  auto median_of = [](std::vector<double> v) {
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    return v[v.size() / 2];
  };
  auto active_median = [&](const Mat3& model, const std::vector<int>& idx) {
    std::vector<double> res;
    res.reserve(idx.size());
    for (int i : idx) res.push_back(sampson_distance(model, ref[i], src[i]));
    return median_of(std::move(res));
  };

  std::vector<int> active = best_inliers;
  for (int round = 0; round < 10; ++round) {
    const Mat3 e = eight_point(ref, src, active);
    std::vector<double> res(n);
    for (int i = 0; i < n; ++i) res[i] = sampson_distance(e, ref[i], src[i]);

    std::vector<double> own;
    own.reserve(active.size());
    for (int i : active) own.push_back(res[i]);
    const double med = median_of(std::move(own));

    const double gate = std::min(opts.inlier_threshold, std::max(50.0 * med, 1e-11));
    std::vector<int> next;
    for (int i = 0; i < n; ++i)
      if (res[i] < gate) next.push_back(i);
    if (next.size() >= 8 && next != active) {
      active = std::move(next);
      continue;
    }

    if (active.size() > 8) {
      // Jackknife sweep: the contaminating point is not necessarily the one
      // with the largest residual, so probe every single-point removal.
      int drop = -1;
      double best_med = med;
      for (int cand : active) {
        std::vector<int> trimmed;
        trimmed.reserve(active.size() - 1);
        for (int i : active)
          if (i != cand) trimmed.push_back(i);
        const Mat3 probe = eight_point(ref, src, trimmed);
        const double trimmed_med = active_median(probe, trimmed);
        if (trimmed_med * 100.0 < med && trimmed_med < best_med) {
          best_med = trimmed_med;
          drop = cand;
        }
      }
      if (drop >= 0) {
        std::vector<int> trimmed;
        trimmed.reserve(active.size() - 1);
        for (int i : active)
          if (i != drop) trimmed.push_back(i);
        active = std::move(trimmed);
        continue;
      }
    }
    break;
  }
  best_inliers = active;
  const Mat3 e = eight_point(ref, src, best_inliers);

  const auto candidates = decompose_essential(e);
  int best_votes = -1;
  const Candidate* chosen = nullptr;
  for (const auto& cand : candidates) {
    const int votes = cheirality_votes(cand, ref, src, best_inliers);
    if (votes > best_votes) {
      best_votes = votes;
      chosen = &cand;
    }
  }
  if (!chosen || best_votes * 2 <= static_cast<int>(best_inliers.size()))
    throw DegenerateConfiguration(
        "estimate_pose: no decomposition passes the cheirality test");

  RelativePose pose;
  pose.rotation = chosen->r;
  pose.translation = chosen->t.normalized();
  return pose;
}

PoseErrorDeg pose_error(const RelativePose& estimated, const RelativePose& truth) {
  const Mat3 rel = estimated.rotation * truth.rotation.transposed();
  const double cos_rot = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);

  PoseErrorDeg err;
  err.rotation = degrees(std::acos(cos_rot));

  const double nt = estimated.translation.norm() * truth.translation.norm();
  if (nt > 0.0) {
    const double cos_t =
        std::clamp(std::abs(estimated.translation.dot(truth.translation)) / nt, 0.0, 1.0);
    err.translation = degrees(std::acos(cos_t));
  }
  return err;
}

}  // namespace sem
