#pragma once

#include <utility>
#include <vector>

#include "cvheat/events.hpp"

namespace cvheat::graph {

struct GraphNode {
  double x = 0.0, y = 0.0;          // pixel units
  std::vector<double> feat;
};

// Undirected simple graph with spatial nodes. Edges are stored once with
// i < j; no self-loops, no duplicates.
struct SpatialGraph {
  std::vector<GraphNode> nodes;
  std::vector<std::pair<int, int>> edges;

  int node_count() const { return static_cast<int>(nodes.size()); }
  int edge_count() const { return static_cast<int>(edges.size()); }
  std::vector<std::vector<int>> adjacency() const;
  void add_edge(int i, int j);  // normalizes order, rejects self-loops/dups
};

struct GraphBundle {
  SpatialGraph global;
  std::vector<SpatialGraph> subgraphs;  // induced subgraphs of the kept communities
  SpatialGraph subgraph_union;          // disjoint union of the above
  SpatialGraph contour;
};

struct GraphConfig {
  int patch_h = 8;
  int patch_w = 8;
  double dist_threshold = 20.0;  // R_d
  int node_threshold = 5;        // R_n
  int knn_k = 4;
};

// One node per non-empty patch; pos = patch center, feat = flattened patch
// content (C * patch_h * patch_w). Edge iff 0 < ||pos_i - pos_j|| < R_d.
SpatialGraph build_global_graph(const events::EventTensor& frame, int patch_h, int patch_w,
                                double dist_threshold);

// Keeps exactly the communities with >= node_threshold members.
std::vector<std::vector<int>> filter_subgraphs(const std::vector<std::vector<int>>& partition,
                                               int node_threshold);

// Mean-aggregates each kept community into one node; kNN edges by position.
// Fewer than knn_k+1 nodes means fully connected.
SpatialGraph aggregate_contour_graph(const SpatialGraph& g,
                                     const std::vector<std::vector<int>>& kept, int knn_k);

// Node-induced subgraph over `members` of g (indices re-based to 0..m-1).
SpatialGraph induced_subgraph(const SpatialGraph& g, const std::vector<int>& members);

// Global graph -> Louvain communities -> node-count filter -> contour graph.
GraphBundle build_bundle(const events::EventTensor& frame, const GraphConfig& cfg);

}  // namespace cvheat::graph
