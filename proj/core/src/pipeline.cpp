#include "stcal/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>

#include "stcal/translation.hpp"

namespace stcal {

int effective_workers(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("STCAL_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

namespace {

// Index-deterministic parallel map: job i writes slot i, so results do not
// depend on the worker count or schedule.
template <typename Fn>
void parallel_for(int n_jobs, int workers, Fn&& fn) {
  if (n_jobs <= 0) return;
  workers = std::max(1, std::min(workers, n_jobs));
  if (workers == 1) {
    for (int i = 0; i < n_jobs; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < n_jobs; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

std::uint64_t pair_seed(std::uint64_t base, int i, int j) {
  std::uint64_t h = base ^ 0x9e3779b97f4a7c15ull;
  h ^= (static_cast<std::uint64_t>(i) + 1) * 0xff51afd7ed558ccdull;
  h ^= (static_cast<std::uint64_t>(j) + 1) * 0xc4ceb9fe1a85ec53ull;
  return h;
}

// Edge indices of the naive sequential chain 0-1, 1-2, ...; empty when some
// consecutive pair is missing. The pairwise stage composes along this chain
// (no global reasoning); integration then replaces it with the optimized
// graph solution.
std::vector<int> sequential_chain(const CameraGraph& graph) {
  std::vector<int> chain;
  for (int c = 0; c + 1 < graph.n_cameras; ++c) {
    int found = -1;
    for (std::size_t e = 0; e < graph.edges.size(); ++e) {
      if (graph.edges[e].cam_i == c && graph.edges[e].cam_j == c + 1) found = static_cast<int>(e);
    }
    if (found < 0) return {};
    chain.push_back(found);
  }
  return chain;
}

EvaluationReport evaluate_state(const BundleState& state, const std::vector<Observation2D>& obs,
                                const GroundTruthBundle& gt, const std::vector<ViewTracks>& views,
                                bool round_offsets) {
  EvaluationReport rep;
  rep.rotation_error = rotation_error(state.poses, gt.poses, &rep.per_camera_rotation);
  rep.translation_error = translation_error(state.poses, gt.poses);
  rep.offset_error = offset_error(state.offsets, gt.offsets, round_offsets, &rep.per_camera_offset);
  bool have_labels = false;
  for (const auto& m : gt.person_map) {
    if (!m.empty()) have_labels = true;
  }
  const PrecisionResult pr =
      have_labels ? association_precision(state.association, gt.person_map)
                  : association_precision_geometric(state.association, views, state.intrinsics, gt.poses, gt.offsets);
  rep.precision = pr.precision;
  rep.precision_defined = pr.defined;
  rep.reprojection_error = reprojection_error(state, obs);
  return rep;
}

}  // namespace

std::vector<Observation2D> build_observations(const std::vector<ViewTracks>& views,
                                              const std::vector<CameraIntrinsics>& intrinsics,
                                              const GlobalAssociation& assoc) {
  std::vector<Observation2D> obs;
  for (std::size_t c = 0; c < views.size(); ++c) {
    for (const auto& track : views[c].tracks) {
      const int gid = assoc.global_of(static_cast<int>(c), track.person_id);
      if (gid < 0) continue;
      for (const auto& pf : track.frames) {
        for (std::size_t j = 0; j < pf.joints.size(); ++j) {
          if (!pf.valid[j]) continue;
          Observation2D o;
          o.camera = static_cast<int>(c);
          o.frame = pf.frame;
          o.global_person = gid;
          o.joint = static_cast<int>(j);
          if (pf.has_pixels()) {
            o.pixel = pf.pixels[j];
          } else {
            if (pf.joints[j].z() <= 1e-9) continue;
            o.pixel = project_camera_frame(intrinsics[c], pf.joints[j]);
          }
          obs.push_back(o);
        }
      }
    }
  }
  return obs;
}

void run_pipeline_into(const std::vector<ViewTracks>& views, const std::vector<CameraIntrinsics>& intrinsics,
                       const PipelineConfig& cfg, const GroundTruthBundle* gt, PipelineResult& out) {
  if (views.size() < 2) {
    throw StageError("input", "pipeline needs >= 2 cameras, got " + std::to_string(views.size()));
  }
  if (views.size() != intrinsics.size()) {
    throw StageError("input", "intrinsics count does not match camera count");
  }

  const int n_cams = static_cast<int>(views.size());
  const int workers = effective_workers(cfg.workers);

  // ---------------------------------------------------------------- pairwise
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n_cams; ++i) {
    for (int j = i + 1; j < n_cams; ++j) pairs.emplace_back(i, j);
  }

  std::vector<PairwiseEdge> edges(pairs.size());
  std::vector<char> edge_ok(pairs.size(), 0);
  std::vector<std::string> edge_err(pairs.size());

  parallel_for(static_cast<int>(pairs.size()), workers, [&](int idx) {
    const auto [i, j] = pairs[static_cast<std::size_t>(idx)];
    RegistrationOptions opts = cfg.registration;
    opts.search_offsets = cfg.synchronize;
    opts.seed = pair_seed(cfg.seed, i, j);
    try {
      const PairRegistration reg = register_pair(views[static_cast<std::size_t>(i)],
                                                 views[static_cast<std::size_t>(j)], opts);
      if (reg.association.n_matched == 0) {
        edge_err[static_cast<std::size_t>(idx)] = "no matched persons";
        return;
      }
      EpipolarSystem sys;
      sys.pairs = reg.bearing_pairs;
      sys.weights = reg.bearing_weights;
      const TranslationEstimate te = solve_translation(sys, reg.rotation);

      PairwiseEdge e;
      e.cam_i = i;
      e.cam_j = j;
      e.rotation = reg.rotation;
      e.translation = te.direction;
      e.delta = reg.delta;
      e.score = reg.score;
      for (const auto& [pt, ps] : reg.association.pairs) {
        e.matches.emplace_back(reg.target_person_ids[static_cast<std::size_t>(pt)],
                               reg.source_person_ids[static_cast<std::size_t>(ps)]);
      }
      edges[static_cast<std::size_t>(idx)] = std::move(e);
      edge_ok[static_cast<std::size_t>(idx)] = 1;
    } catch (const std::exception& ex) {
      edge_err[static_cast<std::size_t>(idx)] = ex.what();
    }
  });

  CameraGraph graph;
  graph.n_cameras = n_cams;
  graph.persons.resize(static_cast<std::size_t>(n_cams));
  for (int c = 0; c < n_cams; ++c) graph.persons[static_cast<std::size_t>(c)] = views[static_cast<std::size_t>(c)].person_ids();
  for (std::size_t k = 0; k < edges.size(); ++k) {
    if (edge_ok[k]) graph.edges.push_back(edges[k]);
  }
  out.graph = graph;
  if (graph.edges.empty()) {
    std::string detail;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      detail += " (" + std::to_string(pairs[k].first) + "," + std::to_string(pairs[k].second) + "): " + edge_err[k];
    }
    throw StageError("pr", "every pairwise registration failed:" + detail);
  }

  std::vector<int> tree;
  GlobalAssociation assoc;
  OffsetConsensus consensus;
  try {
    require_connected(graph);
    tree = max_score_spanning_tree(graph);
    assoc = merge_associations_with_tree(graph, tree);
    consensus = consensus_offsets(graph);
  } catch (const Error& e) {
    throw StageError("pr", e.what());
  }

  const std::vector<Observation2D> all_obs = build_observations(views, intrinsics, assoc);

  auto make_state = [&](const std::vector<CameraPose>& poses, const std::vector<double>& offsets) {
    BundleState st;
    st.poses = poses;
    st.intrinsics = intrinsics;
    st.offsets = offsets;
    st.association = assoc;
    st.motion_window = cfg.stba.motion_window;
    st.points = estimate_motion(all_obs, st);
    return st;
  };
  std::vector<double> offsets_d(consensus.offsets.begin(), consensus.offsets.end());

  // ---------------------------------------------------------------- pr stage
  {
    const std::vector<int> chain = sequential_chain(graph);
    std::vector<CameraPose> pr_poses;
    std::vector<double> pr_offsets = offsets_d;
    if (!chain.empty()) {
      pr_poses = chain_tree_poses(graph, chain);
      for (int c = 0; c + 1 < n_cams; ++c) {
        pr_offsets[static_cast<std::size_t>(c) + 1] =
            pr_offsets[static_cast<std::size_t>(c)] + graph.edges[static_cast<std::size_t>(chain[static_cast<std::size_t>(c)])].delta;
      }
    } else {
      pr_poses = chain_tree_poses(graph, tree);  // chain incomplete; reuse the tree
    }
    BundleState pr_state = make_state(pr_poses, pr_offsets);
    out.poses = pr_state.poses;
    out.offsets = pr_state.offsets;
    out.association = assoc;
    out.bundle = pr_state;
    out.observations = all_obs;
    out.completed_stage = "pr";
    out.snapshots.push_back({"pr", pr_state.poses, pr_state.offsets, assoc});
    if (gt != nullptr) {
      out.stage_metrics.push_back({"pr", evaluate_state(pr_state, all_obs, *gt, views, cfg.round_offsets_in_metrics)});
      out.final_metrics = out.stage_metrics.back().report;
      out.has_metrics = true;
    }
    if (cfg.stop_after == "pr") return;
  }

  // ---------------------------------------------------------------- mi stage
  BundleState state;
  try {
    const PgoResult pgo = pose_graph_optimize(graph);
    state = make_state(pgo.poses, offsets_d);
  } catch (const Error& e) {
    throw StageError("mi", e.what());
  }
  out.poses = state.poses;
  out.offsets = state.offsets;
  out.bundle = state;
  out.completed_stage = "mi";
  out.snapshots.push_back({"mi", state.poses, state.offsets, assoc});
  if (gt != nullptr) {
    out.stage_metrics.push_back({"mi", evaluate_state(state, all_obs, *gt, views, cfg.round_offsets_in_metrics)});
    out.final_metrics = out.stage_metrics.back().report;
  }
  if (cfg.stop_after == "mi") return;

  // ---------------------------------------------------------------- ba / iba
  std::vector<Observation2D> obs = all_obs;
  try {
    // The bundle stage starts with the same consistency filter it iterates:
    // persons far off the median reprojection error never enter the solve.
    PruneResult pre = prune_associations(state, obs, cfg.stba);
    if (!pre.removed_global_ids.empty()) {
      state = std::move(pre.state);
      obs = std::move(pre.observations);
    }
    StbaSolveInfo info;
    state = solve_stba(state, obs, cfg.stba, &info);
  } catch (const Error& e) {
    throw StageError("ba", e.what());
  }
  out.poses = state.poses;
  out.offsets = state.offsets;
  out.association = state.association;
  out.bundle = state;
  out.observations = obs;
  out.completed_stage = "ba";
  out.snapshots.push_back({"ba", state.poses, state.offsets, state.association});
  if (gt != nullptr) {
    out.stage_metrics.push_back({"ba", evaluate_state(state, obs, *gt, views, cfg.round_offsets_in_metrics)});
    out.final_metrics = out.stage_metrics.back().report;
  }
  if (cfg.stop_after == "ba") return;

  try {
    for (int round = 1; round < cfg.stba.max_rounds; ++round) {
      PruneResult pr = prune_associations(state, obs, cfg.stba);
      if (pr.removed_global_ids.empty()) break;
      state = std::move(pr.state);
      obs = std::move(pr.observations);
      StbaSolveInfo info;
      state = solve_stba(state, obs, cfg.stba, &info);
    }
  } catch (const Error& e) {
    throw StageError("iba", e.what());
  }
  out.poses = state.poses;
  out.offsets = state.offsets;
  out.association = state.association;
  out.bundle = state;
  out.observations = obs;
  out.completed_stage = "iba";
  out.snapshots.push_back({"iba", state.poses, state.offsets, state.association});
  if (gt != nullptr) {
    out.stage_metrics.push_back({"iba", evaluate_state(state, obs, *gt, views, cfg.round_offsets_in_metrics)});
    out.final_metrics = out.stage_metrics.back().report;
  }
}

PipelineResult run_pipeline(const std::vector<ViewTracks>& views, const std::vector<CameraIntrinsics>& intrinsics,
                            const PipelineConfig& cfg, const GroundTruthBundle* gt) {
  PipelineResult out;
  run_pipeline_into(views, intrinsics, cfg, gt, out);
  return out;
}

}  // namespace stcal
