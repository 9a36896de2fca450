#pragma once

#include <vector>

#include "cvheat/graph.hpp"

namespace cvheat::graph {

// Newman modularity of a partition (communities as node-index sets) of an
// unweighted simple graph. A graph with no edges scores 0 by convention.
double modularity(const SpatialGraph& g, const std::vector<std::vector<int>>& partition);

// Two-phase Louvain (local moves by modularity gain, then contraction) with a
// final single-node refinement sweep on the original graph and a split of any
// disconnected community into its connected components. The result therefore
// always satisfies:
//   - communities are disjoint and cover every node,
//   - every induced subgraph is connected,
//   - no single-node move (including isolation) improves modularity,
//   - modularity >= modularity of the all-singletons partition.
// Node sweep order is ascending index; gain ties break to the lowest
// community index, so the output is deterministic.
// Communities are returned sorted internally and ordered by smallest member.
std::vector<std::vector<int>> louvain_partition(const SpatialGraph& g);

// True if no single-node relocation (to a neighboring community or to a new
// singleton) increases modularity by more than tol.
bool is_single_move_local_max(const SpatialGraph& g,
                              const std::vector<std::vector<int>>& partition, double tol = 1e-10);

}  // namespace cvheat::graph
