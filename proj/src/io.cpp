#include "sem/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace sem {
namespace {

using nlohmann::json;

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

std::string format_g6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

json load_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ParseError("bad JSON in " + path + ": " + e.what());
  }
  return j;
}

void save_json(const json& j, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << j.dump(2) << "\n";
  if (!os) throw IoError("write failed: " + path);
}

json pose_to_json(const Mat3& r, const Vec3& t) {
  json j;
  j["R"] = {{r(0, 0), r(0, 1), r(0, 2)},
            {r(1, 0), r(1, 1), r(1, 2)},
            {r(2, 0), r(2, 1), r(2, 2)}};
  j["T"] = {t.x, t.y, t.z};
  return j;
}

void pose_from_json(const json& j, Mat3& r, Vec3& t) {
  const auto& jr = j.at("R");
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) r(i, k) = jr.at(i).at(k).get<double>();
  t = {j.at("T").at(0).get<double>(), j.at("T").at(1).get<double>(),
       j.at("T").at(2).get<double>()};
}

json camera_to_json(const CameraModel& cam) {
  json j;
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  j["width"] = cam.width;
  j["height"] = cam.height;
  return j;
}

CameraModel camera_from_json(const json& j, const std::string& where) {
  try {
    CameraModel cam{j.at("fx").get<double>(), j.at("fy").get<double>(),
                    j.at("cx").get<double>(), j.at("cy").get<double>(),
                    j.at("width").get<int>(),  j.at("height").get<int>()};
    if (cam.fx <= 0.0 || cam.fy <= 0.0 || cam.width < 8 || cam.height < 8)
      throw ParseError("camera violates invariants in " + where);
    return cam;
  } catch (const json::exception& e) {
    throw ParseError("bad camera JSON in " + where + ": " + e.what());
  }
}

}  // namespace

void save_feature_map(const FeatureMap& map, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write("SEMF", 4);
  write_u32(os, static_cast<std::uint32_t>(map.height));
  write_u32(os, static_cast<std::uint32_t>(map.width));
  write_u32(os, static_cast<std::uint32_t>(map.channels));
  write_u32(os, static_cast<std::uint32_t>(map.scale));
  for (double v : map.data) {
    const float f = static_cast<float>(v);
    os.write(reinterpret_cast<const char*>(&f), sizeof(f));
  }
  if (!os) throw IoError("write failed: " + path);
}

FeatureMap load_feature_map(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SEMF", 4) != 0)
    throw ParseError("bad feature file (expected SEMF magic): " + path);
  const int h = static_cast<int>(read_u32(is));
  const int w = static_cast<int>(read_u32(is));
  const int c = static_cast<int>(read_u32(is));
  const int scale = static_cast<int>(read_u32(is));
  if (!is || h < 1 || w < 1 || c < 1)
    throw ParseError("bad SEMF header in " + path);
  FeatureMap map(h, w, c, scale);
  for (double& v : map.data) {
    float f = 0.0f;
    is.read(reinterpret_cast<char*>(&f), sizeof(f));
    v = static_cast<double>(f);
  }
  if (!is) throw ParseError("truncated SEMF payload in " + path);
  return map;
}

void save_camera(const CameraModel& cam, const std::string& path) {
  save_json(camera_to_json(cam), path);
}

CameraModel load_camera(const std::string& path) {
  return camera_from_json(load_json(path), path);
}

void save_pose(const RelativePose& pose, const std::string& path) {
  save_json(pose_to_json(pose.rotation, pose.translation), path);
}

RelativePose load_pose(const std::string& path) {
  const json j = load_json(path);
  RelativePose pose;
  try {
    pose_from_json(j, pose.rotation, pose.translation);
  } catch (const json::exception& e) {
    throw ParseError("bad pose JSON in " + path + ": " + e.what());
  }
  return pose;
}

void save_scene(const Scene& scene, const std::string& path) {
  json j;
  j["cam_ref"] = camera_to_json(scene.cam_ref);
  j["cam_src"] = camera_to_json(scene.cam_src);
  j["pose"] = pose_to_json(scene.rotation, scene.translation_metric);
  j["seed"] = scene.seed;
  j["noise"] = scene.noise;
  json pts = json::array();
  for (const ScenePoint& p : scene.points) {
    json jp;
    jp["xyz"] = {p.position.x, p.position.y, p.position.z};
    jp["descriptor"] = p.descriptor_id;
    jp["ref_px"] = {p.ref_px.x, p.ref_px.y};
    jp["src_px"] = {p.src_px.x, p.src_px.y};
    pts.push_back(jp);
  }
  j["points"] = pts;
  save_json(j, path);
}

Scene load_scene(const std::string& path) {
  const json j = load_json(path);
  Scene scene;
  try {
    scene.cam_ref = camera_from_json(j.at("cam_ref"), path);
    scene.cam_src = camera_from_json(j.at("cam_src"), path);
    pose_from_json(j.at("pose"), scene.rotation, scene.translation_metric);
    scene.seed = j.at("seed").get<std::uint64_t>();
    scene.noise = j.value("noise", 0.0);
    for (const auto& jp : j.at("points")) {
      ScenePoint p;
      p.position = {jp.at("xyz").at(0).get<double>(), jp.at("xyz").at(1).get<double>(),
                    jp.at("xyz").at(2).get<double>()};
      p.descriptor_id = jp.at("descriptor").get<int>();
      p.ref_px = {jp.at("ref_px").at(0).get<double>(), jp.at("ref_px").at(1).get<double>()};
      p.src_px = {jp.at("src_px").at(0).get<double>(), jp.at("src_px").at(1).get<double>()};
      scene.points.push_back(p);
    }
  } catch (const json::exception& e) {
    throw ParseError("bad scene JSON in " + path + ": " + e.what());
  }
  return scene;
}

void save_matches_tsv(const MatchSet& set, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "# ref_x\tref_y\tsrc_x\tsrc_y\tconfidence\tsigma2\n";
  const double half = (set.coarse_scale - 1) / 2.0;
  for (const Match& m : set.matches) {
    const Vec2 ref_px{set.coarse_scale * m.ref_x + half,
                      set.coarse_scale * m.ref_y + half};
    os << format_g6(ref_px.x) << '\t' << format_g6(ref_px.y) << '\t'
       << format_g6(m.src_refined.x) << '\t' << format_g6(m.src_refined.y) << '\t'
       << format_g6(m.confidence) << '\t' << format_g6(m.sigma2) << '\n';
  }
  if (!os) throw IoError("write failed: " + path);
}

std::vector<MatchRow> load_matches_tsv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  std::vector<MatchRow> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    MatchRow r;
    if (!(ls >> r.ref_px.x >> r.ref_px.y >> r.src_px.x >> r.src_px.y >>
          r.confidence >> r.sigma2))
      throw ParseError(path + ":" + std::to_string(lineno) + ": bad match row");
    rows.push_back(r);
  }
  return rows;
}

void save_ground_truth_tsv(const GroundTruth& gt, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "# scale " << gt.scale << " ref " << gt.ref_dims.width << 'x'
     << gt.ref_dims.height << " src " << gt.src_dims.width << 'x'
     << gt.src_dims.height << '\n';
  os << "# ref_cx\tref_cy\tsrc_cx\tsrc_cy\tref_px_x\tref_px_y\tsrc_px_x\tsrc_px_y\n";
  for (const auto& p : gt.pairs) {
    os << p.ref_x << '\t' << p.ref_y << '\t' << p.src_x << '\t' << p.src_y << '\t'
       << format_g6(p.ref_px.x) << '\t' << format_g6(p.ref_px.y) << '\t'
       << format_g6(p.src_px.x) << '\t' << format_g6(p.src_px.y) << '\n';
  }
  if (!os) throw IoError("write failed: " + path);
}

GroundTruth load_ground_truth_tsv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  GroundTruth gt;
  std::string line;
  int lineno = 0;
  bool header_seen = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ls(line);
      std::string hash, key;
      if (!header_seen && (ls >> hash >> key) && key == "scale") {
        char x = 0;
        std::string tag;
        ls >> gt.scale >> tag >> gt.ref_dims.width >> x >> gt.ref_dims.height >>
            tag >> gt.src_dims.width >> x >> gt.src_dims.height;
        header_seen = true;
      }
      continue;
    }
    std::istringstream ls(line);
    GroundTruthPair p;
    if (!(ls >> p.ref_x >> p.ref_y >> p.src_x >> p.src_y >> p.ref_px.x >>
          p.ref_px.y >> p.src_px.x >> p.src_px.y))
      throw ParseError(path + ":" + std::to_string(lineno) + ": bad ground-truth row");
    gt.pairs.push_back(p);
  }
  if (!header_seen) throw ParseError(path + ": missing ground-truth header");
  return gt;
}

void save_pgm(const Image& img, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "P5\n" << img.width << " " << img.height << "\n255\n";
  for (double v : img.v) {
    const int q = static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    const unsigned char byte = static_cast<unsigned char>(q);
    os.write(reinterpret_cast<const char*>(&byte), 1);
  }
  if (!os) throw IoError("write failed: " + path);
}

Image load_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  std::string magic;
  is >> magic;
  if (magic != "P5") throw ParseError("expected binary PGM (P5) in " + path);

  auto next_token = [&]() {
    std::string tok;
    while (is >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(is, rest);
        continue;
      }
      return tok;
    }
    throw ParseError("truncated PGM header in " + path);
  };

  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (w < 1 || h < 1 || maxval != 255)
    throw ParseError("unsupported PGM header in " + path);
  is.get();  // single whitespace after maxval

  Image img(h, w);
  std::vector<unsigned char> buf(static_cast<size_t>(w) * h);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!is) throw ParseError("truncated PGM payload in " + path);
  for (size_t i = 0; i < buf.size(); ++i) img.v[i] = buf[i] / 255.0;
  return img;
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << content;
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace sem
