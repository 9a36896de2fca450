#include "cvheat/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "cvheat/louvain.hpp"

namespace cvheat::graph {

std::vector<std::vector<int>> SpatialGraph::adjacency() const {
  std::vector<std::vector<int>> adj(nodes.size());
  for (auto [a, b] : edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  return adj;
}

void SpatialGraph::add_edge(int i, int j) {
  if (i == j) throw std::invalid_argument("SpatialGraph: self-loop rejected");
  if (i < 0 || j < 0 || i >= node_count() || j >= node_count())
    throw std::invalid_argument("SpatialGraph: edge index out of range");
  if (i > j) std::swap(i, j);
  edges.emplace_back(i, j);
}

SpatialGraph build_global_graph(const events::EventTensor& frame, int patch_h, int patch_w,
                                double dist_threshold) {
  if (patch_h <= 0 || patch_w <= 0)
    throw std::invalid_argument("build_global_graph: patch dims must be positive");
  if (dist_threshold <= 0.0)
    throw std::invalid_argument("build_global_graph: dist_threshold must be positive");
  const int c = frame.channels(), h = frame.height(), w = frame.width();
  if (h % patch_h != 0 || w % patch_w != 0)
    throw std::invalid_argument("build_global_graph: frame not divisible by patch size");
  const int ph = h / patch_h, pw = w / patch_w;
  SpatialGraph g;
  for (int pi = 0; pi < ph; ++pi) {
    for (int pj = 0; pj < pw; ++pj) {
      std::vector<double> feat;
      feat.reserve(static_cast<std::size_t>(c) * patch_h * patch_w);
      double mass = 0.0;
      for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < patch_h; ++i)
          for (int j = 0; j < patch_w; ++j) {
            const double v = frame.data.at3(ch, pi * patch_h + i, pj * patch_w + j);
            feat.push_back(v);
            mass += v;
          }
      if (mass <= 0.0) continue;  // empty patches produce no node
      GraphNode n;
      n.x = (pj + 0.5) * patch_w;
      n.y = (pi + 0.5) * patch_h;
      n.feat = std::move(feat);
      g.nodes.push_back(std::move(n));
    }
  }
  const double r2 = dist_threshold * dist_threshold;
  for (int i = 0; i < g.node_count(); ++i)
    for (int j = i + 1; j < g.node_count(); ++j) {
      const double dx = g.nodes[i].x - g.nodes[j].x;
      const double dy = g.nodes[i].y - g.nodes[j].y;
      const double d2 = dx * dx + dy * dy;
      if (d2 > 0.0 && d2 < r2) g.add_edge(i, j);  // strict: ties at R_d excluded
    }
  return g;
}

std::vector<std::vector<int>> filter_subgraphs(const std::vector<std::vector<int>>& partition,
                                               int node_threshold) {
  if (node_threshold < 1) throw std::invalid_argument("filter_subgraphs: threshold must be >= 1");
  std::vector<std::vector<int>> kept;
  for (const auto& s : partition)
    if (static_cast<int>(s.size()) >= node_threshold) kept.push_back(s);
  return kept;
}

SpatialGraph induced_subgraph(const SpatialGraph& g, const std::vector<int>& members) {
  SpatialGraph out;
  std::vector<int> remap(g.node_count(), -1);
  for (std::size_t i = 0; i < members.size(); ++i) {
    remap[members[i]] = static_cast<int>(i);
    out.nodes.push_back(g.nodes[members[i]]);
  }
  for (auto [a, b] : g.edges)
    if (remap[a] >= 0 && remap[b] >= 0) out.add_edge(remap[a], remap[b]);
  return out;
}

SpatialGraph aggregate_contour_graph(const SpatialGraph& g,
                                     const std::vector<std::vector<int>>& kept, int knn_k) {
  if (knn_k < 1) throw std::invalid_argument("aggregate_contour_graph: knn_k must be >= 1");
  SpatialGraph out;
  for (const auto& members : kept) {
    if (members.empty())
      throw std::invalid_argument("aggregate_contour_graph: empty member set");
    GraphNode agg;
    agg.feat.assign(g.nodes[members[0]].feat.size(), 0.0);
    for (int idx : members) {
      const GraphNode& n = g.nodes[idx];
      agg.x += n.x;
      agg.y += n.y;
      for (std::size_t f = 0; f < agg.feat.size(); ++f) agg.feat[f] += n.feat[f];
    }
    const double inv = 1.0 / static_cast<double>(members.size());
    agg.x *= inv;
    agg.y *= inv;
    for (double& f : agg.feat) f *= inv;
    out.nodes.push_back(std::move(agg));
  }
  const int n = out.node_count();
  std::set<std::pair<int, int>> edge_set;
  if (n > 1 && n <= knn_k + 1) {
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) edge_set.insert({i, j});
  } else if (n > 1) {
    for (int i = 0; i < n; ++i) {
      // knn_k nearest neighbors of i, ties by lower index
      std::vector<std::pair<double, int>> cand;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const double dx = out.nodes[i].x - out.nodes[j].x;
        const double dy = out.nodes[i].y - out.nodes[j].y;
        cand.push_back({dx * dx + dy * dy, j});
      }
      std::sort(cand.begin(), cand.end());
      for (int r = 0; r < knn_k; ++r) {
        const int j = cand[r].second;
        edge_set.insert({std::min(i, j), std::max(i, j)});
      }
    }
  }
  for (auto [a, b] : edge_set) out.add_edge(a, b);
  return out;
}

GraphBundle build_bundle(const events::EventTensor& frame, const GraphConfig& cfg) {
  GraphBundle bundle;
  bundle.global = build_global_graph(frame, cfg.patch_h, cfg.patch_w, cfg.dist_threshold);
  std::vector<std::vector<int>> kept;
  if (bundle.global.node_count() > 0) {
    const auto partition = louvain_partition(bundle.global);
    kept = filter_subgraphs(partition, cfg.node_threshold);
  }
  for (const auto& members : kept)
    bundle.subgraphs.push_back(induced_subgraph(bundle.global, members));
  // disjoint union of the kept subgraphs, preserving order
  for (const auto& sg : bundle.subgraphs) {
    const int base = bundle.subgraph_union.node_count();
    for (const auto& n : sg.nodes) bundle.subgraph_union.nodes.push_back(n);
    for (auto [a, b] : sg.edges) bundle.subgraph_union.add_edge(base + a, base + b);
  }
  bundle.contour = aggregate_contour_graph(bundle.global, kept, cfg.knn_k);
  return bundle;
}

}  // namespace cvheat::graph
