#include "stcal/multiview.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "stcal/errors.hpp"
#include "stcal/so3.hpp"

namespace stcal {

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int a) {
    while (parent[static_cast<std::size_t>(a)] != a) {
      parent[static_cast<std::size_t>(a)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
      a = parent[static_cast<std::size_t>(a)];
    }
    return a;
  }
  void unite(int a, int b) { parent[static_cast<std::size_t>(find(a))] = find(b); }
};

}  // namespace

void require_connected(const CameraGraph& graph) {
  if (graph.n_cameras <= 1) return;
  UnionFind uf(graph.n_cameras);
  for (const auto& e : graph.edges) uf.unite(e.cam_i, e.cam_j);
  const int root = uf.find(0);
  for (int c = 1; c < graph.n_cameras; ++c) {
    if (uf.find(c) != root) {
      throw DisconnectedGraph("camera " + std::to_string(c) + " unreachable from camera 0");
    }
  }
}

std::vector<int> max_score_spanning_tree(const CameraGraph& graph) {
  require_connected(graph);
  // Kruskal on ascending angular cost: the lowest-cost edges form the tree.
  std::vector<int> order(graph.edges.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return graph.edges[static_cast<std::size_t>(a)].score < graph.edges[static_cast<std::size_t>(b)].score;
  });
  UnionFind uf(graph.n_cameras);
  std::vector<int> tree;
  for (int e : order) {
    const auto& edge = graph.edges[static_cast<std::size_t>(e)];
    if (uf.find(edge.cam_i) != uf.find(edge.cam_j)) {
      uf.unite(edge.cam_i, edge.cam_j);
      tree.push_back(e);
    }
  }
  return tree;
}

// ---------------------------------------------------------------------------
// Pose graph optimization

namespace {

std::vector<CameraPose> chain_initial_poses(const CameraGraph& graph, const std::vector<int>& tree) {
  std::vector<CameraPose> poses(static_cast<std::size_t>(graph.n_cameras));
  std::vector<bool> known(static_cast<std::size_t>(graph.n_cameras), false);
  known[0] = true;
  bool progress = true;
  while (progress) {
    progress = false;
    for (int e : tree) {
      const auto& edge = graph.edges[static_cast<std::size_t>(e)];
      if (known[static_cast<std::size_t>(edge.cam_i)] && !known[static_cast<std::size_t>(edge.cam_j)]) {
        const CameraPose& pi = poses[static_cast<std::size_t>(edge.cam_i)];
        poses[static_cast<std::size_t>(edge.cam_j)] = {edge.rotation * pi.R, edge.rotation * pi.t + edge.translation};
        known[static_cast<std::size_t>(edge.cam_j)] = true;
        progress = true;
      } else if (known[static_cast<std::size_t>(edge.cam_j)] && !known[static_cast<std::size_t>(edge.cam_i)]) {
        const CameraPose& pj = poses[static_cast<std::size_t>(edge.cam_j)];
        const Eigen::Matrix3d Rinv = edge.rotation.transpose();
        poses[static_cast<std::size_t>(edge.cam_i)] = {Rinv * pj.R, Rinv * (pj.t - edge.translation)};
        known[static_cast<std::size_t>(edge.cam_i)] = true;
        progress = true;
      }
    }
  }
  return poses;
}

struct EdgeResidual {
  Eigen::Vector3d rot = Eigen::Vector3d::Zero();
  Eigen::Vector3d trans = Eigen::Vector3d::Zero();
};

EdgeResidual edge_residual(const PairwiseEdge& edge, const std::vector<CameraPose>& poses, double lambda_t) {
  EdgeResidual r;
  const CameraPose& pi = poses[static_cast<std::size_t>(edge.cam_i)];
  const CameraPose& pj = poses[static_cast<std::size_t>(edge.cam_j)];
  const Eigen::Matrix3d pred = pj.R * pi.R.transpose();
  r.rot = log_map(edge.rotation.transpose() * pred);
  Eigen::Vector3d tp = pj.t - pred * pi.t;
  const double n = tp.norm();
  if (n > 1e-12) {
    r.trans = std::sqrt(lambda_t) * (tp / n - edge.translation);
  }
  return r;
}

}  // namespace

std::vector<CameraPose> chain_tree_poses(const CameraGraph& graph, const std::vector<int>& tree_edges) {
  require_connected(graph);
  return chain_initial_poses(graph, tree_edges);
}

PgoResult pose_graph_optimize(const CameraGraph& graph, const PgoOptions& opts) {
  require_connected(graph);
  PgoResult out;
  if (graph.n_cameras == 0) return out;

  const std::vector<int> tree = max_score_spanning_tree(graph);
  std::vector<CameraPose> poses = chain_initial_poses(graph, tree);
  if (graph.n_cameras <= 1 || graph.edges.empty()) {
    out.poses = poses;
    return out;
  }

  std::vector<double> edge_weight(graph.edges.size());
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    edge_weight[e] = 1.0 / std::max(graph.edges[e].score, 1e-3);
  }

  const double c2 = opts.cauchy_scale * opts.cauchy_scale;
  auto robust_cost = [&](const std::vector<CameraPose>& p) {
    double cost = 0.0;
    for (std::size_t e = 0; e < graph.edges.size(); ++e) {
      const EdgeResidual r = edge_residual(graph.edges[e], p, opts.lambda_t);
      const double s2 = r.rot.squaredNorm() + r.trans.squaredNorm();
      cost += edge_weight[e] * (opts.robust ? c2 * std::log1p(s2 / c2) : s2);
    }
    return cost;
  };

  const int n_free = graph.n_cameras - 1;
  const int dim = 6 * n_free;
  const int n_res = 6 * static_cast<int>(graph.edges.size());

  auto apply_step = [&](const std::vector<CameraPose>& base, const Eigen::VectorXd& dx) {
    std::vector<CameraPose> p = base;
    for (int c = 1; c < graph.n_cameras; ++c) {
      const int o = 6 * (c - 1);
      p[static_cast<std::size_t>(c)].R = exp_map(dx.segment<3>(o)) * base[static_cast<std::size_t>(c)].R;
      p[static_cast<std::size_t>(c)].t = base[static_cast<std::size_t>(c)].t + dx.segment<3>(o + 3);
    }
    return p;
  };

  auto stack_residuals = [&](const std::vector<CameraPose>& p) {
    Eigen::VectorXd r(n_res);
    for (std::size_t e = 0; e < graph.edges.size(); ++e) {
      const EdgeResidual er = edge_residual(graph.edges[e], p, opts.lambda_t);
      r.segment<3>(static_cast<Eigen::Index>(6 * e)) = er.rot;
      r.segment<3>(static_cast<Eigen::Index>(6 * e + 3)) = er.trans;
    }
    return r;
  };

  double cost = robust_cost(poses);
  out.cost_history.push_back(cost);
  double lambda = 1e-6;

  for (int it = 0; it < opts.max_iterations; ++it) {
    // Numeric Jacobian about the current linearization point; the problem is
    // a handful of cameras, so central differences are cheap and exact enough.
    const double h = 1e-6;
    Eigen::MatrixXd J(n_res, dim);
    Eigen::VectorXd dx = Eigen::VectorXd::Zero(dim);
    for (int k = 0; k < dim; ++k) {
      dx(k) = h;
      const Eigen::VectorXd rp = stack_residuals(apply_step(poses, dx));
      dx(k) = -h;
      const Eigen::VectorXd rm = stack_residuals(apply_step(poses, dx));
      dx(k) = 0.0;
      J.col(k) = (rp - rm) / (2.0 * h);
    }
    const Eigen::VectorXd r0 = stack_residuals(poses);

    // Frozen robust weights per edge (IRLS): w * rho'(s^2).
    Eigen::VectorXd row_w(n_res);
    for (std::size_t e = 0; e < graph.edges.size(); ++e) {
      const double s2 = r0.segment<6>(static_cast<Eigen::Index>(6 * e)).squaredNorm();
      const double rw = opts.robust ? 1.0 / (1.0 + s2 / c2) : 1.0;
      row_w.segment<6>(static_cast<Eigen::Index>(6 * e)).setConstant(edge_weight[e] * rw);
    }

    const Eigen::MatrixXd Jw = row_w.asDiagonal() * J;
    Eigen::MatrixXd H = J.transpose() * Jw;
    const Eigen::VectorXd g = J.transpose() * (row_w.asDiagonal() * r0);

    bool accepted = false;
    for (int attempt = 0; attempt < 12; ++attempt) {
      Eigen::MatrixXd Hl = H;
      for (int k = 0; k < dim; ++k) Hl(k, k) += lambda * std::max(H(k, k), 1e-12);
      const Eigen::VectorXd step = Hl.ldlt().solve(-g);
      const std::vector<CameraPose> cand = apply_step(poses, step);
      const double cand_cost = robust_cost(cand);
      if (cand_cost < cost) {
        poses = cand;
        cost = cand_cost;
        out.cost_history.push_back(cost);
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        break;
      }
      lambda *= 4.0;
    }
    if (!accepted) break;
    const std::size_t nh = out.cost_history.size();
    if (nh >= 2 && std::abs(out.cost_history[nh - 2] - cost) <= opts.tol_relative * (1.0 + cost)) break;
  }

  // Gauge: camera 0 stays identity by construction; pin the 0-1 baseline.
  const double baseline = poses.size() > 1 ? poses[1].center().norm() : 0.0;
  if (baseline > 1e-12) {
    for (auto& p : poses) p.t /= baseline;
  }
  out.poses = poses;
  out.final_cost = cost;
  return out;
}

// ---------------------------------------------------------------------------
// Association merging

std::vector<std::vector<std::pair<int, int>>> GlobalAssociation::clusters() const {
  std::vector<std::vector<std::pair<int, int>>> out(static_cast<std::size_t>(n_global));
  for (const auto& [key, gid] : ids) {
    out[static_cast<std::size_t>(gid)].push_back(key);
  }
  return out;
}

GlobalAssociation merge_associations_with_tree(const CameraGraph& graph, const std::vector<int>& tree_edges) {
  require_connected(graph);

  // Node registry over every local person of every camera.
  std::map<std::pair<int, int>, int> node_of;
  std::vector<std::pair<int, int>> nodes;
  for (int c = 0; c < graph.n_cameras; ++c) {
    if (c >= static_cast<int>(graph.persons.size())) break;
    for (int pid : graph.persons[static_cast<std::size_t>(c)]) {
      node_of[{c, pid}] = static_cast<int>(nodes.size());
      nodes.emplace_back(c, pid);
    }
  }
  auto node = [&](int cam, int pid) -> int {
    auto it = node_of.find({cam, pid});
    if (it == node_of.end()) {
      node_of[{cam, pid}] = static_cast<int>(nodes.size());
      nodes.emplace_back(cam, pid);
      return static_cast<int>(nodes.size()) - 1;
    }
    return it->second;
  };
  // Touch all matched persons so late registrations are representable too.
  for (const auto& e : graph.edges) {
    for (const auto& [pj, pi] : e.matches) {
      node(e.cam_j, pj);
      node(e.cam_i, pi);
    }
  }

  UnionFind uf(static_cast<int>(nodes.size()));
  std::vector<bool> is_tree(graph.edges.size(), false);
  for (int e : tree_edges) is_tree[static_cast<std::size_t>(e)] = true;
  for (int e : tree_edges) {
    const auto& edge = graph.edges[static_cast<std::size_t>(e)];
    for (const auto& [pj, pi] : edge.matches) {
      uf.unite(node(edge.cam_j, pj), node(edge.cam_i, pi));
    }
  }

  GlobalAssociation out;
  std::map<int, int> gid_of_root;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const int root = uf.find(static_cast<int>(k));
    auto it = gid_of_root.find(root);
    int gid;
    if (it == gid_of_root.end()) {
      gid = out.n_global++;
      gid_of_root[root] = gid;
    } else {
      gid = it->second;
    }
    out.ids[nodes[k]] = gid;
  }

  // Non-tree edges validate the labeling.
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    if (is_tree[e]) continue;
    const auto& edge = graph.edges[e];
    for (const auto& [pj, pi] : edge.matches) {
      const int gj = out.global_of(edge.cam_j, pj);
      const int gi = out.global_of(edge.cam_i, pi);
      if (gj >= 0 && gi >= 0 && gj != gi) {
        out.inconsistent.push_back({static_cast<int>(e), edge.cam_i, pi, edge.cam_j, pj});
      }
    }
  }
  return out;
}

GlobalAssociation merge_associations(const CameraGraph& graph) {
  return merge_associations_with_tree(graph, max_score_spanning_tree(graph));
}

// ---------------------------------------------------------------------------
// Offset consensus

OffsetConsensus consensus_offsets(const CameraGraph& graph) {
  require_connected(graph);
  OffsetConsensus out;
  out.offsets.assign(static_cast<std::size_t>(graph.n_cameras), 0);
  if (graph.n_cameras <= 1) return out;

  const std::vector<int> tree = max_score_spanning_tree(graph);
  std::vector<bool> known(static_cast<std::size_t>(graph.n_cameras), false);
  known[0] = true;
  bool progress = true;
  while (progress) {
    progress = false;
    for (int e : tree) {
      const auto& edge = graph.edges[static_cast<std::size_t>(e)];
      if (known[static_cast<std::size_t>(edge.cam_i)] && !known[static_cast<std::size_t>(edge.cam_j)]) {
        out.offsets[static_cast<std::size_t>(edge.cam_j)] = out.offsets[static_cast<std::size_t>(edge.cam_i)] + edge.delta;
        known[static_cast<std::size_t>(edge.cam_j)] = true;
        progress = true;
      } else if (known[static_cast<std::size_t>(edge.cam_j)] && !known[static_cast<std::size_t>(edge.cam_i)]) {
        out.offsets[static_cast<std::size_t>(edge.cam_i)] = out.offsets[static_cast<std::size_t>(edge.cam_j)] - edge.delta;
        known[static_cast<std::size_t>(edge.cam_i)] = true;
        progress = true;
      }
    }
  }

  std::vector<bool> is_tree(graph.edges.size(), false);
  for (int e : tree) is_tree[static_cast<std::size_t>(e)] = true;
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    if (is_tree[e]) continue;
    const auto& edge = graph.edges[e];
    const int predicted = out.offsets[static_cast<std::size_t>(edge.cam_i)] + edge.delta;
    const int residual = predicted - out.offsets[static_cast<std::size_t>(edge.cam_j)];
    out.cycle_residuals.emplace_back(static_cast<int>(e), residual);
  }
  return out;
}

}  // namespace stcal
