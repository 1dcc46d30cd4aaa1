// stcal: marker-free spatiotemporal multi-camera calibration from 3D human
// pose tracks. Subcommands: synth, calibrate, pair, eval, convert.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "stcal/io.hpp"
#include "stcal/pipeline.hpp"
#include "stcal/registration.hpp"
#include "stcal/synth.hpp"
#include "stcal/translation.hpp"

namespace fs = std::filesystem;
using namespace stcal;

namespace {

// Exit codes: 0 ok, 2 usage, then one per failure class.
enum ExitCode {
  kOk = 0,
  kUsage = 2,
  kIoError = 3,
  kEncodingError = 4,
  kRegistrationError = 5,
  kMultiviewError = 6,
  kStbaError = 7,
  kMetricsError = 8,
  kOtherError = 1,
};

int exit_code_for_stage(const std::string& stage) {
  if (stage == "input") return kUsage;
  if (stage == "pr") return kRegistrationError;
  if (stage == "mi") return kMultiviewError;
  if (stage == "ba" || stage == "iba") return kStbaError;
  return kOtherError;
}

int exit_code_for(const Error& e) {
  if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const SchemaError*>(&e)) return kIoError;
  if (dynamic_cast<const SkeletonMismatch*>(&e) || dynamic_cast<const OutOfRange*>(&e)) return kEncodingError;
  if (dynamic_cast<const NoValidData*>(&e) || dynamic_cast<const InsufficientOverlap*>(&e) ||
      dynamic_cast<const RankDeficient*>(&e) || dynamic_cast<const CheiralityAmbiguous*>(&e)) {
    return kRegistrationError;
  }
  if (dynamic_cast<const DisconnectedGraph*>(&e)) return kMultiviewError;
  if (dynamic_cast<const InsufficientObservations*>(&e)) return kStbaError;
  if (dynamic_cast<const CountMismatch*>(&e) || dynamic_cast<const DegenerateBaseline*>(&e) ||
      dynamic_cast<const NoGroundTruth*>(&e)) {
    return kMetricsError;
  }
  return kOtherError;
}

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

std::vector<double> parse_offsets(const std::string& csv) {
  std::vector<double> out;
  if (csv.empty()) return out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

void print_report(const std::string& name, const EvaluationReport& r) {
  std::printf("%-4s E_R=%.6f rad  E_t=%.6f  E_2D=%.4f px  E_delta=%.4f  P=%.4f%s\n", name.c_str(),
              r.rotation_error, r.translation_error, r.reprojection_error, r.offset_error, r.precision,
              r.precision_defined ? "" : " (no matches)");
}

ResultFile make_result_file(const PipelineResult& res, const PipelineConfig& cfg) {
  ResultFile rf;
  rf.poses = res.poses;
  rf.offsets = res.offsets;
  for (const auto& [key, gid] : res.association.ids) {
    rf.associations.emplace_back(key.first, key.second, gid);
  }
  rf.stages = res.stage_metrics;
  rf.has_metrics = res.has_metrics;
  rf.config = cfg;
  rf.seed = cfg.seed;
  rf.generated_at = timestamp_utc();
  return rf;
}

std::vector<ViewTracks> load_track_files(const std::vector<std::string>& paths) {
  std::vector<ViewTracks> views;
  for (const auto& p : paths) {
    TrackFileInfo info;
    ViewTracks v = load_tracks(p, &info);
    if (info.warnings > 0) {
      std::cerr << "warning: " << p << ": " << info.warnings << " joints with non-finite values marked invalid\n";
    }
    views.push_back(std::move(v));
  }
  std::sort(views.begin(), views.end(), [](const ViewTracks& a, const ViewTracks& b) { return a.camera_id < b.camera_id; });
  return views;
}

// ---------------------------------------------------------------------------

int cmd_synth(const std::string& out_dir, SceneSpec spec, const std::string& offsets_csv, double fps) {
  spec.offsets = parse_offsets(offsets_csv);
  if (!spec.offsets.empty() && static_cast<int>(spec.offsets.size()) != spec.n_cameras) {
    std::cerr << "error: --offsets needs one value per camera\n";
    return kUsage;
  }
  const SyntheticScene scene = generate(spec);
  fs::create_directories(out_dir);
  for (std::size_t c = 0; c < scene.views.size(); ++c) {
    save_tracks(out_dir + "/tracks_cam" + std::to_string(c) + ".jsonl", scene.views[c], fps);
  }
  save_intrinsics(out_dir + "/intrinsics.json", scene.intrinsics);
  save_ground_truth(out_dir + "/gt.json", scene.gt);
  std::printf("wrote %zu track files, intrinsics.json, gt.json to %s\n", scene.views.size(), out_dir.c_str());
  return kOk;
}

int cmd_calibrate(const std::vector<std::string>& track_paths, const std::string& intrinsics_path,
                  const std::string& config_path, const std::string& gt_path, const std::string& out_path,
                  bool no_sync, bool no_ransac, const std::string& stop_after, std::uint64_t seed, bool seed_set,
                  int workers, bool keep_intermediates) {
  PipelineConfig cfg;
  if (!config_path.empty()) cfg = load_config(config_path);
  if (no_sync) cfg.synchronize = false;
  if (no_ransac) cfg.registration.use_ransac = false;
  if (!stop_after.empty()) cfg.stop_after = stop_after;
  if (seed_set) cfg.seed = seed;
  if (workers > 0) cfg.workers = workers;
  if (keep_intermediates) cfg.keep_intermediates = true;

  const std::vector<ViewTracks> views = load_track_files(track_paths);
  const std::vector<CameraIntrinsics> intrinsics = load_intrinsics(intrinsics_path);

  GroundTruthBundle gt;
  const bool has_gt = !gt_path.empty();
  if (has_gt) gt = load_ground_truth(gt_path);

  PipelineResult res;
  try {
    run_pipeline_into(views, intrinsics, cfg, has_gt ? &gt : nullptr, res);
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (!out_path.empty() && !res.completed_stage.empty()) {
      save_result(out_path, make_result_file(res, cfg));
      std::cerr << "partial result (through stage " << res.completed_stage << ") written to " << out_path << "\n";
    }
    return exit_code_for_stage(e.stage());
  }

  for (const auto& s : res.stage_metrics) print_report(s.stage, s.report);
  if (!res.has_metrics) {
    std::printf("pipeline finished at stage %s (no ground truth given)\n", res.completed_stage.c_str());
  }
  if (!out_path.empty()) {
    save_result(out_path, make_result_file(res, cfg));
    std::printf("result written to %s\n", out_path.c_str());
    if (cfg.keep_intermediates) {
      for (const auto& snap : res.snapshots) {
        ResultFile rf;
        rf.poses = snap.poses;
        rf.offsets = snap.offsets;
        for (const auto& [key, gid] : snap.association.ids) {
          rf.associations.emplace_back(key.first, key.second, gid);
        }
        rf.config = cfg;
        rf.seed = cfg.seed;
        rf.generated_at = timestamp_utc();
        std::string base = out_path;
        if (base.ends_with(".json")) base.resize(base.size() - 5);
        const std::string stage_path = base + "." + snap.stage + ".json";
        save_result(stage_path, rf);
        std::printf("stage %s snapshot written to %s\n", snap.stage.c_str(), stage_path.c_str());
      }
    }
  }
  return kOk;
}

int cmd_pair(const std::string& source_path, const std::string& target_path, bool no_sync, bool no_ransac,
             int offset_range, std::uint64_t seed) {
  const ViewTracks source = load_tracks(source_path);
  const ViewTracks target = load_tracks(target_path);

  RegistrationOptions opts;
  opts.search_offsets = !no_sync;
  opts.use_ransac = !no_ransac;
  opts.offset_range = offset_range;
  opts.seed = seed;

  const PairRegistration reg = register_pair(source, target, opts);

  std::printf("delta = %d frames, score = %.6f rad over %d matches\n", reg.delta, reg.score,
              reg.association.n_matched);
  std::cout << "rotation (source->target):\n" << reg.rotation << "\n";
  try {
    EpipolarSystem sys;
    sys.pairs = reg.bearing_pairs;
    sys.weights = reg.bearing_weights;
    const TranslationEstimate te = solve_translation(sys, reg.rotation);
    std::cout << "translation direction: " << te.direction.transpose() << "  (residual " << te.residual << ")\n";
  } catch (const Error& e) {
    std::cout << "translation unavailable: " << e.what() << "\n";
  }
  for (const auto& [pt, ps] : reg.association.pairs) {
    std::printf("match: target person %d <- source person %d (cost %.4f rad)\n",
                reg.target_person_ids[static_cast<std::size_t>(pt)],
                reg.source_person_ids[static_cast<std::size_t>(ps)], reg.association.cost(pt, ps));
  }
  return kOk;
}

int cmd_eval(const std::string& result_path, const std::string& gt_path, const std::vector<std::string>& track_paths,
             const std::string& intrinsics_path, bool round_offsets) {
  const ResultFile rf = load_result(result_path);
  const GroundTruthBundle gt = load_ground_truth(gt_path);

  EvaluationReport rep;
  rep.rotation_error = rotation_error(rf.poses, gt.poses);
  rep.translation_error = translation_error(rf.poses, gt.poses);
  rep.offset_error = offset_error(rf.offsets, gt.offsets, round_offsets);

  GlobalAssociation assoc;
  for (const auto& [cam, pid, gid] : rf.associations) {
    assoc.ids[{cam, pid}] = gid;
    assoc.n_global = std::max(assoc.n_global, gid + 1);
  }
  const PrecisionResult pr = association_precision(assoc, gt.person_map);
  rep.precision = pr.precision;
  rep.precision_defined = pr.defined;

  if (!track_paths.empty() && !intrinsics_path.empty()) {
    const std::vector<ViewTracks> views = load_track_files(track_paths);
    const std::vector<CameraIntrinsics> intrinsics = load_intrinsics(intrinsics_path);
    BundleState state;
    state.poses = rf.poses;
    state.intrinsics = intrinsics;
    state.offsets = rf.offsets;
    state.association = assoc;
    state.motion_window = rf.config.stba.motion_window;
    const std::vector<Observation2D> obs = build_observations(views, intrinsics, assoc);
    state.points = estimate_motion(obs, state);
    rep.reprojection_error = reprojection_error(state, obs);
  }

  print_report("eval", rep);
  return kOk;
}

int cmd_convert(const std::string& in_path, const std::string& out_path, double fps) {
  const ViewTracks view = convert_estimator_json(in_path, Skeleton::h36m17());
  save_tracks(out_path, view, fps);
  std::printf("converted %s -> %s (%zu track segments)\n", in_path.c_str(), out_path.c_str(), view.tracks.size());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stcal: spatiotemporal multi-camera calibration from human pose tracks"};
  app.require_subcommand(1);

  // synth ------------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "generate a synthetic multi-camera scene");
  std::string synth_out = "scene";
  SceneSpec spec;
  std::string synth_offsets;
  double synth_fps = 30.0;
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--cameras", spec.n_cameras, "camera count");
  synth->add_option("--people", spec.n_people, "person count");
  synth->add_option("--frames", spec.n_frames, "frame count");
  synth->add_option("--sigma", spec.pixel_sigma, "3D-noise level (reprojected pixels)");
  synth->add_option("--keypoint-sigma", spec.keypoint_sigma, "2D keypoint noise (px); <0 auto");
  synth->add_option("--offsets", synth_offsets, "per-camera gt offsets, comma separated");
  synth->add_option("--dropout", spec.joint_dropout, "per joint-frame dropout rate");
  synth->add_option("--seed", spec.seed, "rng seed");
  synth->add_option("--fps", synth_fps, "frame rate written to track headers");

  // calibrate --------------------------------------------------------------
  auto* cal = app.add_subcommand("calibrate", "run the full calibration pipeline");
  std::vector<std::string> cal_tracks;
  std::string cal_intrinsics, cal_config, cal_gt, cal_out, cal_stop;
  bool cal_no_sync = false, cal_no_ransac = false, cal_keep = false;
  std::uint64_t cal_seed = 1;
  int cal_workers = 0;
  cal->add_option("--tracks", cal_tracks, "track files (one per camera)")->required()->expected(-2);
  cal->add_option("--intrinsics", cal_intrinsics, "intrinsics file")->required();
  cal->add_option("--config", cal_config, "pipeline config file");
  cal->add_option("--gt", cal_gt, "ground-truth file (enables metrics)");
  cal->add_option("--out", cal_out, "result file");
  cal->add_option("--stop-after", cal_stop, "stop after stage: pr|mi|ba")
      ->check(CLI::IsMember({"pr", "mi", "ba"}));
  cal->add_flag("--no-sync", cal_no_sync, "disable temporal offset search");
  cal->add_flag("--no-ransac", cal_no_ransac, "disable RANSAC person-subset hypotheses");
  auto* seed_opt = cal->add_option("--seed", cal_seed, "rng seed (overrides config)");
  cal->add_option("--workers", cal_workers, "worker threads (default: STCAL_WORKERS or hardware)");
  cal->add_flag("--keep-intermediates", cal_keep, "also write one result file per completed stage");

  // pair -------------------------------------------------------------------
  auto* pair = app.add_subcommand("pair", "register a single camera pair (debugging)");
  std::string pair_source, pair_target;
  bool pair_no_sync = false, pair_no_ransac = false;
  int pair_range = 10;
  std::uint64_t pair_seed = 1;
  pair->add_option("--source", pair_source, "source view track file")->required();
  pair->add_option("--target", pair_target, "target view track file")->required();
  pair->add_flag("--no-sync", pair_no_sync, "disable offset search");
  pair->add_flag("--no-ransac", pair_no_ransac, "disable RANSAC");
  pair->add_option("--range", pair_range, "offset search range (frames)");
  pair->add_option("--seed", pair_seed, "rng seed");

  // eval -------------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "evaluate a result file against ground truth");
  std::string eval_result, eval_gt, eval_intrinsics;
  std::vector<std::string> eval_tracks;
  bool eval_round = false;
  eval->add_option("--result", eval_result, "result file")->required();
  eval->add_option("--gt", eval_gt, "ground-truth file")->required();
  eval->add_option("--tracks", eval_tracks, "track files (enables E_2D)")->expected(-2);
  eval->add_option("--intrinsics", eval_intrinsics, "intrinsics file (enables E_2D)");
  eval->add_flag("--round-offsets", eval_round, "round offsets to integers before E_delta");

  // convert ----------------------------------------------------------------
  auto* conv = app.add_subcommand("convert", "convert an estimator JSON export to the track format");
  std::string conv_in, conv_out;
  double conv_fps = 30.0;
  conv->add_option("--in", conv_in, "estimator JSON export")->required();
  conv->add_option("--out", conv_out, "output track file")->required();
  conv->add_option("--fps", conv_fps, "frame rate for the header");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(synth_out, spec, synth_offsets, synth_fps);
    if (*cal) {
      return cmd_calibrate(cal_tracks, cal_intrinsics, cal_config, cal_gt, cal_out, cal_no_sync, cal_no_ransac,
                           cal_stop, cal_seed, seed_opt->count() > 0, cal_workers, cal_keep);
    }
    if (*pair) return cmd_pair(pair_source, pair_target, pair_no_sync, pair_no_ransac, pair_range, pair_seed);
    if (*eval) return cmd_eval(eval_result, eval_gt, eval_tracks, eval_intrinsics, eval_round);
    if (*conv) return cmd_convert(conv_in, conv_out, conv_fps);
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for_stage(e.stage());
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOtherError;
  }
  return kUsage;
}
