#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sem/linalg.hpp"

namespace sem {

// Coordinate conventions used throughout:
//   - pixel = (x = column, y = row), pixel centers at integer coordinates;
//   - homogeneous point p = (x, y, z), dehomogenized as (p.x/p.z, p.y/p.z);
//   - a grid at scale s groups s*s pixels per cell; cell (cx, cy) covers
//     pixels [s*cx, s*(cx+1)) and its center sits at s*cx + (s-1)/2.
// CameraModel::scaled(s) remaps the intrinsics so that projecting with the
// scaled camera lands directly in grid coordinates with cell centers at
// integer positions.
struct CameraModel {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  Mat3 intrinsics() const {
    Mat3 k = Mat3::identity();
    k(0, 0) = fx;
    k(1, 1) = fy;
    k(0, 2) = cx;
    k(1, 2) = cy;
    return k;
  }

  Mat3 inverse_intrinsics() const {
    Mat3 k = Mat3::identity();
    k(0, 0) = 1.0 / fx;
    k(1, 1) = 1.0 / fy;
    k(0, 2) = -cx / fx;
    k(1, 2) = -cy / fy;
    return k;
  }

  bool contains(const Vec2& px) const {
    return px.x >= -0.5 && px.x < width - 0.5 && px.y >= -0.5 && px.y < height - 0.5;
  }

  CameraModel scaled(double s) const {
    const double shift = (s - 1.0) / 2.0;
    return {fx / s, fy / s, (cx - shift) / s, (cy - shift) / s,
            static_cast<int>(width / s), static_cast<int>(height / s)};
  }
};

struct RelativePose {
  Mat3 rotation = Mat3::identity();
  Vec3 translation;  // unit direction when estimated; zero encodes pure rotation

  RelativePose inverse() const {
    RelativePose inv;
    inv.rotation = rotation.transposed();
    inv.translation = -(inv.rotation * translation);
    return inv;
  }
};

// Epipolar line a*x + b*y + c = 0 (a^2 + b^2 = 1 when valid) thickened by a
// perpendicular-distance tolerance. Invalid bands stand for "no constraint":
// callers treat the whole image as candidate region.
struct EpipolarBand {
  Vec3 line;
  double tolerance = 0.0;
  bool valid = false;

  double distance(const Vec2& p) const {
    return std::abs(line.x * p.x + line.y * p.y + line.z);
  }
  bool contains(const Vec2& p) const { return valid && distance(p) <= tolerance; }
};

struct Correspondence {
  Vec2 ref_pt;
  Vec2 src_pt;
  double confidence = 1.0;
};

struct BoolGrid {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> cells;  // row-major y*width + x

  BoolGrid() = default;
  BoolGrid(int w, int h, bool fill = false)
      : width(w), height(h), cells(static_cast<size_t>(w) * h, fill ? 1 : 0) {}

  bool at(int x, int y) const { return cells[static_cast<size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { cells[static_cast<size_t>(y) * width + x] = v ? 1 : 0; }
  int count() const {
    int n = 0;
    for (auto c : cells) n += c;
    return n;
  }
};

// Homogeneous image of `pixel` carried into the source view:
// K_src * (R * K_ref^-1 * (x, y, 1)^T + T). No normalization applied.
Vec3 project_point(const CameraModel& cam_ref, const CameraModel& cam_src,
                   const RelativePose& pose, const Vec2& pixel);

// Projection of the reference camera center into the source view: K_src * T.
// May have zero third component (epipole at infinity).
Vec3 epipole(const CameraModel& cam_src, const RelativePose& pose);

// Epipolar band for `pixel`: the line joining the epipole and the carried
// point (homogeneous cross product), normalized to a^2 + b^2 = 1, thickened
// by `tolerance`. Returns an invalid band when the two points are linearly
// dependent (pixel on the epipole, zero translation, or line at infinity).
EpipolarBand epipolar_line(const CameraModel& cam_ref, const CameraModel& cam_src,
                           const RelativePose& pose, const Vec2& pixel,
                           double tolerance);

// Rasterizes band membership over a grid: cell (x, y) is true iff its center
// lies within tolerance of the line. An invalid band yields an all-true grid.
BoolGrid band_mask(const EpipolarBand& band, int grid_w, int grid_h);

struct PoseEstimateOptions {
  int iterations = 500;
  double inlier_threshold = 1e-3;  // Sampson distance, normalized coordinates
};

// Relative pose from pixel correspondences: normalized eight-point inside a
// seeded robust-sampling loop, essential-matrix decomposition, cheirality
// disambiguation. T comes out unit-norm. Throws InsufficientMatches (< 8
// pairs) or DegenerateConfiguration (no decomposition places a majority of
// the triangulated points in front of both cameras).
RelativePose estimate_pose(const std::vector<Correspondence>& matches,
                           const CameraModel& cam_ref, const CameraModel& cam_src,
                           std::uint64_t seed, const PoseEstimateOptions& opts = {});

struct PoseErrorDeg {
  double rotation = 0.0;
  double translation = 0.0;
};

// Rotation error: angle of R_est * R_gt^T. Translation error: angle between
// directions, folded to [0, 90] since the sign of T is unrecoverable.
PoseErrorDeg pose_error(const RelativePose& estimated, const RelativePose& truth);

}  // namespace sem
