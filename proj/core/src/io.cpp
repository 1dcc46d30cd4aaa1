#include "stcal/io.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "stcal/errors.hpp"

namespace stcal {

using nlohmann::json;

namespace {

constexpr int kTracksVersion = 1;

json skeleton_to_json(const Skeleton& skel) {
  return json{{"joint_names", skel.joint_names}, {"parents", skel.parents}};
}

Skeleton skeleton_from_json(const json& j) {
  Skeleton skel;
  skel.joint_names = j.at("joint_names").get<std::vector<std::string>>();
  skel.parents = j.at("parents").get<std::vector<int>>();
  skel.validate();
  return skel;
}

json vec3(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }
json vec2(const Eigen::Vector2d& v) { return json::array({v.x(), v.y()}); }

double json_double(const json& j) {
  // nlohmann serializes non-finite doubles as null; map them back to NaN so
  // the validity flagging can catch them.
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

Eigen::Vector3d to_vec3(const json& j) { return {json_double(j.at(0)), json_double(j.at(1)), json_double(j.at(2))}; }
Eigen::Vector2d to_vec2(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot open " + path + " for writing");
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tracks

void save_tracks(const std::string& path, const ViewTracks& view, double fps) {
  std::ofstream out = open_out(path);
  json header{{"format", "stcal-tracks"},
              {"version", kTracksVersion},
              {"camera_id", view.camera_id},
              {"fps", fps},
              {"skeleton", skeleton_to_json(view.skeleton)}};
  out << header.dump() << "\n";
  for (const auto& track : view.tracks) {
    for (const auto& pf : track.frames) {
      json rec{{"person", track.person_id}, {"frame", pf.frame}};
      json joints = json::array();
      json valid = json::array();
      for (std::size_t j = 0; j < pf.joints.size(); ++j) {
        joints.push_back(vec3(pf.joints[j]));
        valid.push_back(pf.valid[j] ? 1 : 0);
      }
      rec["joints"] = std::move(joints);
      rec["valid"] = std::move(valid);
      if (pf.has_pixels()) {
        json px = json::array();
        for (const auto& p : pf.pixels) px.push_back(vec2(p));
        rec["px"] = std::move(px);
      }
      out << rec.dump() << "\n";
    }
  }
}

ViewTracks load_tracks(const std::string& path, TrackFileInfo* info) {
  std::ifstream in = open_in(path);
  std::string line;
  long line_no = 0;

  if (!std::getline(in, line)) throw SchemaError(path + ": empty file");
  ++line_no;
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what(), line_no);
  }
  if (!header.contains("format") || header.at("format") != "stcal-tracks") {
    throw SchemaError(path + ": missing stcal-tracks header");
  }
  if (header.at("version").get<int>() != kTracksVersion) {
    throw SchemaError(path + ": unsupported version");
  }

  ViewTracks view;
  view.camera_id = header.at("camera_id").get<int>();
  view.skeleton = skeleton_from_json(header.at("skeleton"));
  const int S = view.skeleton.size();
  if (info) {
    info->fps = header.value("fps", 30.0);
    info->warnings = 0;
  }

  // person -> open segment; new segment on any frame gap.
  std::map<int, PersonTrack> open;
  std::map<int, int> last_frame;
  auto flush = [&](int pid) {
    auto it = open.find(pid);
    if (it != open.end() && !it->second.frames.empty()) {
      view.tracks.push_back(std::move(it->second));
      open.erase(it);
    }
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(path + ": " + e.what(), line_no);
    }
    int pid, frame;
    json joints;
    try {
      pid = rec.at("person").get<int>();
      frame = rec.at("frame").get<int>();
      joints = rec.at("joints");
    } catch (const json::exception& e) {
      throw ParseError(path + ": " + e.what(), line_no);
    }
    if (static_cast<int>(joints.size()) != S) {
      throw SkeletonMismatch(path + ": record joint count " + std::to_string(joints.size()) + " != skeleton " +
                             std::to_string(S) + " at line " + std::to_string(line_no));
    }

    auto lf = last_frame.find(pid);
    if (lf != last_frame.end() && frame < lf->second + 1) {
      throw SchemaError(path + ": non-increasing frame for person " + std::to_string(pid) + " at line " +
                        std::to_string(line_no));
    }
    if (lf != last_frame.end() && frame != lf->second + 1) {
      flush(pid);  // gap: split the track
    }
    last_frame[pid] = frame;

    auto it = open.find(pid);
    if (it == open.end()) {
      PersonTrack t;
      t.person_id = pid;
      t.start_frame = frame;
      it = open.emplace(pid, std::move(t)).first;
    }

    PoseFrame pf;
    pf.person_id = pid;
    pf.frame = frame;
    pf.joints.resize(static_cast<std::size_t>(S));
    pf.valid.assign(static_cast<std::size_t>(S), true);
    if (rec.contains("valid")) {
      const auto& valid = rec.at("valid");
      for (int j = 0; j < S; ++j) pf.valid[static_cast<std::size_t>(j)] = valid.at(static_cast<std::size_t>(j)).get<int>() != 0;
    }
    for (int j = 0; j < S; ++j) {
      const Eigen::Vector3d v = to_vec3(joints.at(static_cast<std::size_t>(j)));
      pf.joints[static_cast<std::size_t>(j)] = v;
      if (!v.allFinite()) {
        pf.valid[static_cast<std::size_t>(j)] = false;
        if (info) ++info->warnings;
      }
    }
    if (rec.contains("px")) {
      const auto& px = rec.at("px");
      pf.pixels.resize(static_cast<std::size_t>(S));
      for (int j = 0; j < S; ++j) pf.pixels[static_cast<std::size_t>(j)] = to_vec2(px.at(static_cast<std::size_t>(j)));
    }
    it->second.frames.push_back(std::move(pf));
  }
  for (auto& [pid, t] : open) {
    if (!t.frames.empty()) view.tracks.push_back(std::move(t));
  }
  std::sort(view.tracks.begin(), view.tracks.end(), [](const PersonTrack& a, const PersonTrack& b) {
    return a.person_id != b.person_id ? a.person_id < b.person_id : a.start_frame < b.start_frame;
  });
  return view;
}

// ---------------------------------------------------------------------------
// Intrinsics

void save_intrinsics(const std::string& path, const std::vector<CameraIntrinsics>& cams) {
  json cameras = json::array();
  for (std::size_t c = 0; c < cams.size(); ++c) {
    cameras.push_back(json{{"camera_id", c},
                           {"fx", cams[c].fx},
                           {"fy", cams[c].fy},
                           {"cx", cams[c].cx},
                           {"cy", cams[c].cy},
                           {"width", cams[c].width},
                           {"height", cams[c].height}});
  }
  json root{{"format", "stcal-intrinsics"}, {"version", 1}, {"cameras", cameras}};
  open_out(path) << root.dump(2) << "\n";
}

std::vector<CameraIntrinsics> load_intrinsics(const std::string& path) {
  json root;
  try {
    open_in(path) >> root;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what(), 0);
  }
  if (!root.contains("format") || root.at("format") != "stcal-intrinsics") {
    throw SchemaError(path + ": not an intrinsics file");
  }
  std::vector<CameraIntrinsics> cams;
  for (const auto& c : root.at("cameras")) {
    CameraIntrinsics K;
    K.fx = c.at("fx").get<double>();
    K.fy = c.at("fy").get<double>();
    K.cx = c.at("cx").get<double>();
    K.cy = c.at("cy").get<double>();
    K.width = c.value("width", 0);
    K.height = c.value("height", 0);
    if (K.fx <= 0.0 || K.fy <= 0.0) throw SchemaError(path + ": non-positive focal length");
    if (K.width > 0 && (K.cx < 0.0 || K.cx > K.width || K.cy < 0.0 || K.cy > K.height)) {
      throw SchemaError(path + ": principal point outside image");
    }
    cams.push_back(K);
  }
  return cams;
}

// ---------------------------------------------------------------------------
// Ground truth

namespace {

json pose_to_json(const CameraPose& pose) {
  const Eigen::Quaterniond q(pose.R);
  return json{{"quaternion", {q.w(), q.x(), q.y(), q.z()}}, {"translation", vec3(pose.t)}};
}

CameraPose pose_from_json(const json& j) {
  const auto& q = j.at("quaternion");
  Eigen::Quaterniond quat(q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(), q.at(3).get<double>());
  if (std::abs(quat.norm() - 1.0) > 1e-6) throw SchemaError("non-unit quaternion");
  CameraPose pose;
  pose.R = quat.normalized().toRotationMatrix();
  pose.t = to_vec3(j.at("translation"));
  return pose;
}

}  // namespace

void save_ground_truth(const std::string& path, const GroundTruthBundle& gt) {
  json poses = json::array();
  for (const auto& p : gt.poses) poses.push_back(pose_to_json(p));
  json assoc = json::array();
  for (std::size_t c = 0; c < gt.person_map.size(); ++c) {
    for (const auto& [pid, person] : gt.person_map[c]) {
      assoc.push_back(json::array({c, pid, person}));
    }
  }
  json root{{"format", "stcal-groundtruth"},
            {"version", 1},
            {"poses", poses},
            {"offsets", gt.offsets},
            {"associations", assoc}};
  open_out(path) << root.dump(2) << "\n";
}

GroundTruthBundle load_ground_truth(const std::string& path) {
  json root;
  try {
    open_in(path) >> root;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what(), 0);
  }
  if (!root.contains("format") || root.at("format") != "stcal-groundtruth") {
    throw SchemaError(path + ": not a ground-truth file");
  }
  GroundTruthBundle gt;
  for (const auto& p : root.at("poses")) gt.poses.push_back(pose_from_json(p));
  gt.offsets = root.at("offsets").get<std::vector<double>>();
  gt.person_map.resize(gt.poses.size());
  for (const auto& a : root.at("associations")) {
    const int cam = a.at(0).get<int>();
    gt.person_map[static_cast<std::size_t>(cam)][a.at(1).get<int>()] = a.at(2).get<int>();
  }
  return gt;
}

// ---------------------------------------------------------------------------
// Config

namespace {

json config_to_json(const PipelineConfig& cfg) {
  return json{{"window_length", cfg.registration.window_length},
              {"window_stride", cfg.registration.window_stride},
              {"offset_range", cfg.registration.offset_range},
              {"synchronize", cfg.synchronize},
              {"use_ransac", cfg.registration.use_ransac},
              {"ransac_subset", cfg.registration.ransac_subset},
              {"max_hypotheses", cfg.registration.max_hypotheses},
              {"em_max_outer", cfg.registration.em.max_outer},
              {"em_tol_loglik", cfg.registration.em.tol_loglik},
              {"em_max_inner", cfg.registration.em.max_inner},
              {"em_tol_grad", cfg.registration.em.tol_grad},
              {"theta_match", cfg.registration.em.theta_match},
              {"stba_max_iterations", cfg.stba.max_iterations},
              {"stba_huber_px", cfg.stba.huber_px},
              {"stba_prune_factor", cfg.stba.prune_factor},
              {"stba_max_rounds", cfg.stba.max_rounds},
              {"motion_window", cfg.stba.motion_window},
              {"stop_after", cfg.stop_after},
              {"keep_intermediates", cfg.keep_intermediates},
              {"round_offsets_in_metrics", cfg.round_offsets_in_metrics},
              {"workers", cfg.workers},
              {"seed", cfg.seed}};
}

PipelineConfig config_from_json(const json& j) {
  PipelineConfig cfg;
  cfg.registration.window_length = j.value("window_length", cfg.registration.window_length);
  cfg.registration.window_stride = j.value("window_stride", cfg.registration.window_length);
  cfg.registration.offset_range = j.value("offset_range", cfg.registration.offset_range);
  cfg.synchronize = j.value("synchronize", cfg.synchronize);
  cfg.registration.use_ransac = j.value("use_ransac", cfg.registration.use_ransac);
  cfg.registration.ransac_subset = j.value("ransac_subset", cfg.registration.ransac_subset);
  cfg.registration.max_hypotheses = j.value("max_hypotheses", cfg.registration.max_hypotheses);
  cfg.registration.em.max_outer = j.value("em_max_outer", cfg.registration.em.max_outer);
  cfg.registration.em.tol_loglik = j.value("em_tol_loglik", cfg.registration.em.tol_loglik);
  cfg.registration.em.max_inner = j.value("em_max_inner", cfg.registration.em.max_inner);
  cfg.registration.em.tol_grad = j.value("em_tol_grad", cfg.registration.em.tol_grad);
  cfg.registration.em.theta_match = j.value("theta_match", cfg.registration.em.theta_match);
  cfg.stba.max_iterations = j.value("stba_max_iterations", cfg.stba.max_iterations);
  cfg.stba.huber_px = j.value("stba_huber_px", cfg.stba.huber_px);
  cfg.stba.prune_factor = j.value("stba_prune_factor", cfg.stba.prune_factor);
  cfg.stba.max_rounds = j.value("stba_max_rounds", cfg.stba.max_rounds);
  cfg.stba.motion_window = j.value("motion_window", cfg.stba.motion_window);
  cfg.stop_after = j.value("stop_after", cfg.stop_after);
  cfg.keep_intermediates = j.value("keep_intermediates", cfg.keep_intermediates);
  cfg.round_offsets_in_metrics = j.value("round_offsets_in_metrics", cfg.round_offsets_in_metrics);
  cfg.workers = j.value("workers", cfg.workers);
  cfg.seed = j.value("seed", cfg.seed);

  if (cfg.registration.window_length < 1 || cfg.registration.window_stride < 1 ||
      cfg.registration.offset_range < 0 || cfg.registration.ransac_subset < 2 ||
      cfg.registration.em.theta_match <= 0.0 || cfg.stba.motion_window < 1 || cfg.stba.max_rounds < 0 ||
      (!cfg.stop_after.empty() && cfg.stop_after != "pr" && cfg.stop_after != "mi" && cfg.stop_after != "ba")) {
    throw InvalidSpec("pipeline config out of range");
  }
  return cfg;
}

}  // namespace

PipelineConfig load_config(const std::string& path) {
  json root;
  try {
    open_in(path) >> root;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what(), 0);
  }
  try {
    return config_from_json(root);
  } catch (const json::exception& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

void save_config(const std::string& path, const PipelineConfig& cfg) {
  open_out(path) << config_to_json(cfg).dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Results

namespace {

json report_to_json(const EvaluationReport& r) {
  return json{{"E_R", r.rotation_error},      {"E_t", r.translation_error},
              {"E_2D", r.reprojection_error}, {"E_delta", r.offset_error},
              {"P", r.precision},             {"P_defined", r.precision_defined}};
}

EvaluationReport report_from_json(const json& j) {
  EvaluationReport r;
  r.rotation_error = j.at("E_R").get<double>();
  r.translation_error = j.at("E_t").get<double>();
  r.reprojection_error = j.at("E_2D").get<double>();
  r.offset_error = j.at("E_delta").get<double>();
  r.precision = j.at("P").get<double>();
  r.precision_defined = j.at("P_defined").get<bool>();
  return r;
}

}  // namespace

void save_result(const std::string& path, const ResultFile& result) {
  json cameras = json::array();
  for (std::size_t c = 0; c < result.poses.size(); ++c) {
    json cam = pose_to_json(result.poses[c]);
    cam["camera_id"] = c;
    cam["offset"] = result.offsets[c];
    cameras.push_back(std::move(cam));
  }
  json assoc = json::array();
  for (const auto& [cam, pid, gid] : result.associations) {
    assoc.push_back(json::array({cam, pid, gid}));
  }
  json stages = json::object();
  for (const auto& s : result.stages) stages[s.stage] = report_to_json(s.report);

  json root{{"format", "stcal-result"}, {"version", 1},
            {"generated_at", result.generated_at},
            {"seed", result.seed},
            {"config", config_to_json(result.config)},
            {"cameras", cameras},
            {"associations", assoc},
            {"has_metrics", result.has_metrics},
            {"stages", stages}};
  open_out(path) << root.dump(2) << "\n";
}

ResultFile load_result(const std::string& path) {
  json root;
  try {
    open_in(path) >> root;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what(), 0);
  }
  if (!root.contains("format") || root.at("format") != "stcal-result") {
    throw SchemaError(path + ": not a result file");
  }
  ResultFile out;
  out.generated_at = root.value("generated_at", "");
  out.seed = root.at("seed").get<std::uint64_t>();
  out.config = config_from_json(root.at("config"));
  for (const auto& cam : root.at("cameras")) {
    out.poses.push_back(pose_from_json(cam));
    out.offsets.push_back(cam.at("offset").get<double>());
  }
  for (const auto& a : root.at("associations")) {
    out.associations.emplace_back(a.at(0).get<int>(), a.at(1).get<int>(), a.at(2).get<int>());
  }
  out.has_metrics = root.value("has_metrics", false);
  if (root.contains("stages")) {
    for (const auto& [name, rep] : root.at("stages").items()) {
      out.stages.push_back({name, report_from_json(rep)});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Estimator export adapter

ViewTracks convert_estimator_json(const std::string& path, const Skeleton& skeleton) {
  json root;
  try {
    open_in(path) >> root;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what(), 0);
  }
  ViewTracks view;
  view.camera_id = root.value("camera_id", 0);
  view.skeleton = skeleton;
  const int S = skeleton.size();
  for (const auto& person : root.at("people")) {
    const int pid = person.at("id").get<int>();
    PersonTrack track;
    track.person_id = pid;
    bool first = true;
    int prev = 0;
    for (const auto& fr : person.at("frames")) {
      const int frame = fr.at("frame").get<int>();
      if (!first && frame != prev + 1) {
        if (!track.frames.empty()) view.tracks.push_back(std::move(track));
        track = PersonTrack{};
        track.person_id = pid;
        first = true;
      }
      if (first) {
        track.start_frame = frame;
        first = false;
      }
      prev = frame;
      PoseFrame pf;
      pf.person_id = pid;
      pf.frame = frame;
      pf.joints.resize(static_cast<std::size_t>(S), Eigen::Vector3d::Zero());
      pf.valid.assign(static_cast<std::size_t>(S), false);
      const auto& joints = fr.at("joints");
      if (static_cast<int>(joints.size()) != S) throw SkeletonMismatch(path + ": joint count");
      for (int j = 0; j < S; ++j) {
        const Eigen::Vector3d v = to_vec3(joints.at(static_cast<std::size_t>(j)));
        pf.joints[static_cast<std::size_t>(j)] = v;
        pf.valid[static_cast<std::size_t>(j)] = v.allFinite();
      }
      track.frames.push_back(std::move(pf));
    }
    if (!track.frames.empty()) view.tracks.push_back(std::move(track));
  }
  return view;
}

}  // namespace stcal
