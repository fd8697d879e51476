#pragma once

#include <map>
#include <string>
#include <vector>

#include "sem/features.hpp"
#include "sem/geometry.hpp"
#include "sem/matching.hpp"
#include "sem/synthetic.hpp"

namespace sem {

// Feature binaries: "SEMF" magic, u32 height/width/channels/scale, then
// row-major [y][x][c] 32-bit floats.
void save_feature_map(const FeatureMap& map, const std::string& path);
FeatureMap load_feature_map(const std::string& path);

// Camera JSON: {fx, fy, cx, cy, width, height}.
void save_camera(const CameraModel& cam, const std::string& path);
CameraModel load_camera(const std::string& path);

// Pose JSON: {"R": row-major 3x3, "T": 3-vector}.
void save_pose(const RelativePose& pose, const std::string& path);
RelativePose load_pose(const std::string& path);

// Scene JSON: cameras, pose with metric translation, points, seed.
// Descriptors are not serialized; the feature binaries carry the rendering.
void save_scene(const Scene& scene, const std::string& path);
Scene load_scene(const std::string& path);

// Match TSV: ref_x ref_y src_x src_y confidence sigma2, image-pixel
// coordinates at 6 significant digits. Reference positions are cell centers.
struct MatchRow {
  Vec2 ref_px, src_px;
  double confidence = 0.0;
  double sigma2 = 0.0;
};
void save_matches_tsv(const MatchSet& set, const std::string& path);
std::vector<MatchRow> load_matches_tsv(const std::string& path);

// Ground-truth TSV: cell pair plus exact subpixel projections per row.
void save_ground_truth_tsv(const GroundTruth& gt, const std::string& path);
GroundTruth load_ground_truth_tsv(const std::string& path);

// Binary 8-bit PGM (P5).
void save_pgm(const Image& img, const std::string& path);
Image load_pgm(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace sem
