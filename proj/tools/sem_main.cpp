// Command-line surface for the structured epipolar matching toolkit:
//   match       run the matcher on an image/feature pair
//   synth       generate a synthetic calibrated scene with ground truth
//   eval        score predicted matches against ground truth
//   viz         render matches and epipolar bands as SVG
//   gen-params  write a seeded random parameter file
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sem/io.hpp"
#include "sem/metrics.hpp"
#include "sem/pipeline.hpp"
#include "sem/synthetic.hpp"
#include "sem/viz.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sem;

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

MultiScaleFeatures load_features_or_extract(const std::string& path,
                                            const ParamStore& params) {
  MultiScaleFeatures f;
  if (ends_with(path, ".pgm")) {
    return extract_features(load_pgm(path), params);
  }
  f.coarse = load_feature_map(path + "_s8.semf");
  f.global = load_feature_map(path + "_s32.semf");
  f.fine = load_feature_map(path + "_s2.semf");
  if (f.coarse.scale != 8 || f.global.scale != 32)
    throw ParseError("feature bundle " + path + " has unexpected scales");
  return f;
}

json pose_json(const RelativePose& p) {
  json j;
  j["R"] = {{p.rotation(0, 0), p.rotation(0, 1), p.rotation(0, 2)},
            {p.rotation(1, 0), p.rotation(1, 1), p.rotation(1, 2)},
            {p.rotation(2, 0), p.rotation(2, 1), p.rotation(2, 2)}};
  j["T"] = {p.translation.x, p.translation.y, p.translation.z};
  return j;
}

std::vector<CellPair> match_cells(const std::vector<MatchRow>& rows, int scale,
                                  GridShape ref_dims, GridShape src_dims) {
  std::vector<CellPair> cells;
  for (const MatchRow& r : rows) {
    CellPair c;
    c.ref_x = std::clamp(static_cast<int>(std::floor(r.ref_px.x / scale)), 0,
                         ref_dims.width - 1);
    c.ref_y = std::clamp(static_cast<int>(std::floor(r.ref_px.y / scale)), 0,
                         ref_dims.height - 1);
    c.src_x = std::clamp(static_cast<int>(std::floor(r.src_px.x / scale)), 0,
                         src_dims.width - 1);
    c.src_y = std::clamp(static_cast<int>(std::floor(r.src_px.y / scale)), 0,
                         src_dims.height - 1);
    cells.push_back(c);
  }
  return cells;
}

std::vector<CellPair> gt_cells(const GroundTruth& gt) {
  std::vector<CellPair> cells;
  for (const auto& p : gt.pairs) cells.push_back({p.ref_x, p.ref_y, p.src_x, p.src_y});
  return cells;
}

struct MatchArgs {
  std::string ref, src, cam_ref, cam_src, params_path, gt_path, gt_pose_path;
  std::string out_dir = ".";
  PipelineConfig cfg;
  bool disable_pose = false;
};

int run_match(const MatchArgs& args) {
  const CameraModel cam_ref = load_camera(args.cam_ref);
  const CameraModel cam_src = load_camera(args.cam_src);
  const ParamStore params = args.params_path.empty()
                                ? ParamStore::seeded({}, args.cfg.seed)
                                : ParamStore::load(args.params_path);

  const MultiScaleFeatures f_ref = load_features_or_extract(args.ref, params);
  const MultiScaleFeatures f_src = load_features_or_extract(args.src, params);

  PipelineConfig cfg = args.cfg;
  cfg.enable_pose = !args.disable_pose;
  cfg.validate();

  IterationTrace trace;
  const MatchSet set =
      sem_forward(f_ref, f_src, cam_ref, cam_src, cfg, params, &trace);

  fs::create_directories(args.out_dir);
  const std::string tsv_path = (fs::path(args.out_dir) / "matches.tsv").string();
  save_matches_tsv(set, tsv_path);

  std::optional<GroundTruth> gt;
  if (!args.gt_path.empty()) gt = load_ground_truth_tsv(args.gt_path);
  std::optional<RelativePose> gt_pose;
  if (!args.gt_pose_path.empty()) gt_pose = load_pose(args.gt_pose_path);

  json report;
  report["config"] = {{"s0", cfg.s0},
                      {"anchors", cfg.anchor_count},
                      {"sigma_h", cfg.sigma_h},
                      {"theta", cfg.theta},
                      {"iterations", cfg.iterations},
                      {"tau", cfg.tau},
                      {"seed", cfg.seed},
                      {"pose_enabled", cfg.enable_pose}};
  report["match_count"] = set.matches.size();
  report["matches_tsv"] = "matches.tsv";  // relative to the output directory

  json iters = json::array();
  for (const IterationRecord& rec : trace) {
    json it;
    it["anchor_count"] = rec.anchor_count;
    it["band_valid_fraction"] = rec.band_valid_fraction;
    it["pose"] = rec.pose ? pose_json(*rec.pose) : json();
    if (rec.pose && gt_pose) {
      const PoseErrorDeg err = pose_error(*rec.pose, *gt_pose);
      it["rot_err_deg"] = err.rotation;
      it["trans_err_deg"] = err.translation;
    }
    if (gt) {
      const MatchSet per_iter = extract_matches(rec.match_matrix, cfg.theta);
      std::vector<CellPair> pred;
      for (const Match& m : per_iter.matches)
        pred.push_back({m.ref_x, m.ref_y, m.src_x, m.src_y});
      const CellMetrics cm = score_cells(pred, gt_cells(*gt));
      it["gt_precision"] = cm.precision;
      it["gt_recall"] = cm.recall;
    }
    iters.push_back(it);
  }
  report["iterations"] = iters;

  if (gt && !gt->pairs.empty()) {
    std::vector<std::pair<int, int>> flat;
    std::map<std::pair<int, int>, Vec2> fine_targets;
    for (const auto& p : gt->pairs) {
      flat.push_back({trace[0].match_matrix.ref_dims.index(p.ref_x, p.ref_y),
                      trace[0].match_matrix.src_dims.index(p.src_x, p.src_y)});
      fine_targets[{p.ref_x, p.ref_y}] = p.src_px;
    }
    report["coarse_loss"] = coarse_loss(trace, flat);
    try {
      const double fl = fine_loss(set, fine_targets, cfg.squared_fine_loss);
      report["fine_loss"] = fl;
      report["total_loss"] = total_loss(report["coarse_loss"].get<double>(), fl);
    } catch (const EmptyGroundTruth&) {
      report["fine_loss"] = json();
    }
  }

  write_text_file((fs::path(args.out_dir) / "report.json").string(),
                  report.dump(2) + "\n");
  return 0;
}

struct SynthArgs {
  SceneSpec spec;
  std::string out_dir = ".";
};

int run_synth(const SynthArgs& args) {
  const Scene scene = generate_scene(args.spec);
  fs::create_directories(args.out_dir);
  const fs::path out(args.out_dir);

  save_scene(scene, (out / "scene.json").string());
  save_camera(scene.cam_ref, (out / "cam_ref.json").string());
  save_camera(scene.cam_src, (out / "cam_src.json").string());
  save_pose(scene.pose(), (out / "pose.json").string());
  save_pgm(render_image(scene, false), (out / "ref.pgm").string());
  save_pgm(render_image(scene, true), (out / "src.pgm").string());

  for (const int scale : {8, 32, 2}) {
    const auto [f_ref, f_src] = render_feature_maps(scene, scale);
    const std::string tag = "_s" + std::to_string(scale) + ".semf";
    save_feature_map(f_ref, (out / ("ref" + tag)).string());
    save_feature_map(f_src, (out / ("src" + tag)).string());
  }

  save_ground_truth_tsv(ground_truth_matches(scene, 8), (out / "gt.tsv").string());
  return 0;
}

struct EvalArgs {
  std::vector<std::string> preds, gts, scenes;
  std::string out_path = "metrics.json";
  std::uint64_t seed = 0;
};

int run_eval(const EvalArgs& args) {
  if (args.preds.size() != args.gts.size() || args.preds.size() != args.scenes.size() ||
      args.preds.empty())
    throw ParseError("eval needs matching --pred/--gt/--scene lists");

  json out;
  json scenes = json::array();
  std::vector<double> errors;
  for (size_t i = 0; i < args.preds.size(); ++i) {
    const std::vector<MatchRow> rows = load_matches_tsv(args.preds[i]);
    const GroundTruth gt = load_ground_truth_tsv(args.gts[i]);
    const Scene scene = load_scene(args.scenes[i]);

    json js;
    js["pred"] = args.preds[i];
    const CellMetrics cm =
        score_cells(match_cells(rows, gt.scale, gt.ref_dims, gt.src_dims), gt_cells(gt));
    js["precision"] = cm.precision;
    js["recall"] = cm.recall;
    js["hits"] = cm.hits;
    js["pred_count"] = cm.pred_count;
    js["gt_count"] = cm.gt_count;
    js["empty_predictions"] = cm.empty_predictions;

    double err = std::numeric_limits<double>::infinity();
    if (rows.size() >= 8) {
      std::vector<Correspondence> matches;
      for (const MatchRow& r : rows) matches.push_back({r.ref_px, r.src_px, r.confidence});
      try {
        const RelativePose est =
            estimate_pose(matches, scene.cam_ref, scene.cam_src, args.seed);
        const PoseErrorDeg pe = pose_error(est, scene.pose());
        err = std::max(pe.rotation, pe.translation);
        js["rot_err_deg"] = pe.rotation;
        js["trans_err_deg"] = pe.translation;
      } catch (const Error& e) {
        js["pose_failure"] = e.what();
      }
    } else {
      js["pose_failure"] = "fewer than 8 predicted matches";
    }
    errors.push_back(err);
    scenes.push_back(js);
  }
  out["scenes"] = scenes;
  out["auc"] = {{"5deg", pose_auc(errors, 5.0)},
                {"10deg", pose_auc(errors, 10.0)},
                {"20deg", pose_auc(errors, 20.0)}};

  write_text_file(args.out_path, out.dump(2) + "\n");
  return 0;
}

struct VizArgs {
  std::string ref, src, matches_path, scene_path;
  std::vector<std::string> band_points;
  double s0 = 10.0;
  std::string out_path = "matches.svg";
};

PanelShading shade_panel(const std::string& path) {
  PanelShading panel;
  panel.scale = 8;
  if (ends_with(path, ".pgm")) {
    const Image img = load_pgm(path);
    panel.dims = {img.width / 8, img.height / 8};
    panel.intensity.assign(static_cast<size_t>(panel.dims.cell_count()), 0.0);
    for (int y = 0; y < panel.dims.height; ++y)
      for (int x = 0; x < panel.dims.width; ++x) {
        double sum = 0.0;
        for (int dy = 0; dy < 8; ++dy)
          for (int dx = 0; dx < 8; ++dx) sum += img.at(8 * y + dy, 8 * x + dx);
        panel.intensity[static_cast<size_t>(y) * panel.dims.width + x] = sum / 64.0;
      }
    return panel;
  }
  const FeatureMap f = load_feature_map(path + "_s8.semf");
  panel.dims = f.grid();
  panel.intensity.assign(static_cast<size_t>(panel.dims.cell_count()), 0.0);
  double peak = 1e-12;
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x) {
      double norm2 = 0.0;
      for (int c = 0; c < f.channels; ++c) norm2 += f.at(y, x, c) * f.at(y, x, c);
      const double n = std::sqrt(norm2);
      panel.intensity[static_cast<size_t>(y) * f.width + x] = n;
      peak = std::max(peak, n);
    }
  for (double& v : panel.intensity) v /= peak;
  return panel;
}

int run_viz(const VizArgs& args) {
  const PanelShading ref_panel = shade_panel(args.ref);
  const PanelShading src_panel = shade_panel(args.src);

  std::vector<VizMatch> matches;
  for (const MatchRow& r : load_matches_tsv(args.matches_path))
    matches.push_back({r.ref_px, r.src_px, r.confidence});

  std::vector<VizBand> bands;
  if (!args.band_points.empty()) {
    if (args.scene_path.empty())
      throw ParseError("--band-point needs --scene for the pose");
    const Scene scene = load_scene(args.scene_path);
    const CameraModel gref = scene.cam_ref.scaled(8);
    const CameraModel gsrc = scene.cam_src.scaled(8);
    for (const std::string& spec : args.band_points) {
      int x = 0, y = 0;
      if (std::sscanf(spec.c_str(), "%d,%d", &x, &y) != 2)
        throw ParseError("bad --band-point (expected x,y): " + spec);
      const EpipolarBand band =
          epipolar_line(gref, gsrc, scene.pose(), Vec2(x, y), args.s0);
      VizBand vb;
      vb.query_x = x;
      vb.query_y = y;
      vb.query_on_ref = true;
      vb.mask = band_mask(band, src_panel.dims.width, src_panel.dims.height);
      bands.push_back(vb);
    }
  }

  write_text_file(args.out_path, render_match_svg(ref_panel, src_panel, matches, bands));
  return 0;
}

struct GenParamsArgs {
  ModelShape shape;
  std::uint64_t seed = 0;
  std::string out_path = "params.semp";
};

int run_gen_params(const GenParamsArgs& args) {
  ParamStore::seeded(args.shape, args.seed).save(args.out_path);
  return 0;
}

// Flat key=value configuration: the file's entries become --key=value tokens
// inserted ahead of the user's flags, so explicit flags take precedence.
// Underscores in keys normalize to dashes.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::string path;
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size())
      path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0)
      path = args[i].substr(9);
  }
  if (path.empty() || args.empty() || args[0].empty() || args[0][0] == '-')
    return args;

  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };

  std::vector<std::string> tokens;
  std::istringstream is(read_text_file(path));
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    for (char& c : key)
      if (c == '_') c = '-';
    if (key.empty())
      throw ParseError(path + ":" + std::to_string(lineno) + ": empty key");
    tokens.push_back("--" + key + "=" + value);
  }
  args.insert(args.begin() + 1, tokens.begin(), tokens.end());
  return args;
}

void add_pipeline_flags(CLI::App* cmd, PipelineConfig& cfg) {
  cmd->add_option("--s0", cfg.s0, "epipolar band tolerance in coarse-grid units");
  cmd->add_option("--anchors", cfg.anchor_count, "anchor count N_A");
  cmd->add_option("--sigma-h", cfg.sigma_h, "anchor/pose confidence threshold");
  cmd->add_option("--theta", cfg.theta, "match extraction threshold");
  cmd->add_option("--iters", cfg.iterations, "coarse matching iterations");
  cmd->add_option("--tau", cfg.tau, "dual-softmax temperature (<=0: 1/sqrt(C))");
  cmd->add_option("--ransac-iters", cfg.ransac_iterations, "robust sampling iterations");
  cmd->add_option("--ransac-threshold", cfg.ransac_threshold,
                  "inlier threshold, normalized coords (<=0: one grid cell)");
  cmd->add_option("--fine-window", cfg.fine_window, "fine refinement window (odd)");
  cmd->add_flag("--squared-fine-loss", cfg.squared_fine_loss,
                "report the squared fine loss variant");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"structured epipolar matching toolkit"};
  app.require_subcommand(1);

  std::string config_path;  // consumed by expand_config before parsing

  MatchArgs match_args;
  CLI::App* match_cmd = app.add_subcommand("match", "match an image/feature pair");
  match_cmd->add_option("--config", config_path, "flat key=value configuration file");
  match_cmd->add_option("--ref", match_args.ref, "reference image (.pgm) or feature prefix")
      ->required();
  match_cmd->add_option("--src", match_args.src, "source image (.pgm) or feature prefix")
      ->required();
  match_cmd->add_option("--cam-ref", match_args.cam_ref, "reference camera JSON")->required();
  match_cmd->add_option("--cam-src", match_args.cam_src, "source camera JSON")->required();
  match_cmd->add_option("--params", match_args.params_path, "SEMP parameter file");
  match_cmd->add_option("--gt", match_args.gt_path, "ground-truth TSV for report metrics");
  match_cmd->add_option("--gt-pose", match_args.gt_pose_path, "ground-truth pose JSON");
  match_cmd->add_option("--out", match_args.out_dir, "output directory");
  match_cmd->add_option("--seed", match_args.cfg.seed, "deterministic seed")
      ->envname("SEM_SEED");
  match_cmd->add_flag("--disable-pose", match_args.disable_pose,
                      "skip pose estimation (global fallback)");
  add_pipeline_flags(match_cmd, match_args.cfg);

  SynthArgs synth_args;
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic scene");
  synth_cmd->add_option("--config", config_path, "flat key=value configuration file");
  synth_cmd->add_option("--points", synth_args.spec.point_count, "3D point count (>= 8)");
  synth_cmd->add_option("--baseline", synth_args.spec.baseline, "camera baseline");
  synth_cmd->add_option("--rotation-deg", synth_args.spec.rotation_deg, "rotation magnitude");
  synth_cmd->add_option("--image-size", synth_args.spec.image_size,
                        "square image size, multiple of 32");
  synth_cmd->add_option("--focal", synth_args.spec.focal, "focal length in pixels");
  synth_cmd->add_option("--noise", synth_args.spec.noise, "descriptor noise amplitude");
  synth_cmd->add_option("--dup-pairs", synth_args.spec.duplicate_pairs,
                        "point pairs sharing a planted duplicate descriptor");
  synth_cmd->add_option("--min-depth", synth_args.spec.min_depth, "nearest point depth");
  synth_cmd->add_option("--max-depth", synth_args.spec.max_depth, "farthest point depth");
  bool allow_collisions = false;
  synth_cmd->add_flag("--allow-cell-collisions", allow_collisions,
                      "let points share coarse cells");
  synth_cmd->add_option("--seed", synth_args.spec.seed, "deterministic seed")
      ->envname("SEM_SEED");
  synth_cmd->add_option("--out", synth_args.out_dir, "output directory");

  EvalArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("eval", "score predictions against ground truth");
  eval_cmd->add_option("--pred", eval_args.preds, "predicted match TSV (repeatable)")
      ->required();
  eval_cmd->add_option("--gt", eval_args.gts, "ground-truth TSV (repeatable)")->required();
  eval_cmd->add_option("--scene", eval_args.scenes, "scene JSON (repeatable)")->required();
  eval_cmd->add_option("--seed", eval_args.seed, "seed for pose estimation")
      ->envname("SEM_SEED");
  eval_cmd->add_option("--out", eval_args.out_path, "metrics JSON path");

  VizArgs viz_args;
  CLI::App* viz_cmd = app.add_subcommand("viz", "render matches as SVG");
  viz_cmd->add_option("--ref", viz_args.ref, "reference image (.pgm) or feature prefix")
      ->required();
  viz_cmd->add_option("--src", viz_args.src, "source image (.pgm) or feature prefix")
      ->required();
  viz_cmd->add_option("--matches", viz_args.matches_path, "match TSV")->required();
  viz_cmd->add_option("--scene", viz_args.scene_path, "scene JSON (for band overlays)");
  viz_cmd->add_option("--band-point", viz_args.band_points,
                      "ref coarse cell x,y to overlay its band (repeatable)");
  viz_cmd->add_option("--s0", viz_args.s0, "band tolerance for overlays");
  viz_cmd->add_option("--out", viz_args.out_path, "output SVG path");

  GenParamsArgs gen_args;
  CLI::App* gen_cmd = app.add_subcommand("gen-params", "write a seeded parameter file");
  gen_cmd->add_option("--seed", gen_args.seed, "deterministic seed")->envname("SEM_SEED");
  gen_cmd->add_option("--channels", gen_args.shape.channels, "coarse feature width");
  gen_cmd->add_option("--fine-channels", gen_args.shape.fine_channels, "fine feature width");
  gen_cmd->add_option("--anchors", gen_args.shape.anchor_count, "widest anchor block");
  gen_cmd->add_option("--heads", gen_args.shape.head_count, "attention heads");
  gen_cmd->add_option("--out", gen_args.out_path, "output SEMP path");

  // Scalar options accept repeats with last-wins so config-file tokens can be
  // overridden by explicit flags.
  for (CLI::App* cmd : {match_cmd, synth_cmd, eval_cmd, viz_cmd, gen_cmd})
    for (CLI::Option* opt : cmd->get_options())
      if (opt->get_items_expected_max() == 1)
        opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(std::move(args));
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (match_cmd->parsed()) return run_match(match_args);
    if (synth_cmd->parsed()) {
      synth_args.spec.distinct_cells = !allow_collisions;
      if (synth_args.spec.point_count < 8) {
        std::cerr << "error: --points must be >= 8\n";
        return 2;
      }
      if (synth_args.spec.image_size < 32 || synth_args.spec.image_size % 32 != 0) {
        std::cerr << "error: --image-size must be a positive multiple of 32\n";
        return 2;
      }
      return run_synth(synth_args);
    }
    if (eval_cmd->parsed()) return run_eval(eval_args);
    if (viz_cmd->parsed()) return run_viz(viz_args);
    if (gen_cmd->parsed()) return run_gen_params(gen_args);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
