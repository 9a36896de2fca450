#include "cvheat/louvain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cvheat::graph {

namespace {

constexpr double kGainTol = 1e-12;

// Weighted multigraph used across contraction levels. `self[i]` carries twice
// the total weight of edges internal to the original community a super-node
// represents, so degrees and modularity match the level-0 convention.
struct WGraph {
  int n = 0;
  std::vector<std::vector<std::pair<int, double>>> adj;  // neighbor, weight
  std::vector<double> self;                              // 2 * internal weight
  std::vector<double> degree;                            // self + sum of incident
  double two_m = 0.0;

  void finalize() {
    degree.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
      degree[i] = self[i];
      for (auto& [j, w] : adj[i]) degree[i] += w;
    }
    two_m = std::accumulate(degree.begin(), degree.end(), 0.0);
  }
};

WGraph from_spatial(const SpatialGraph& g) {
  WGraph wg;
  wg.n = g.node_count();
  wg.adj.assign(wg.n, {});
  wg.self.assign(wg.n, 0.0);
  for (auto [a, b] : g.edges) {
    wg.adj[a].push_back({b, 1.0});
    wg.adj[b].push_back({a, 1.0});
  }
  wg.finalize();
  return wg;
}

// One full local-move phase: sweeps nodes in ascending index, moving each to
// the community with the best modularity gain if it strictly beats staying
// (ties to the lowest community index; isolation only if strictly best).
// Repeats until a sweep makes no move.
bool local_move_phase(const WGraph& g, std::vector<int>& comm) {
  if (g.two_m <= 0.0) return false;
  std::vector<double> tot(g.n, 0.0);  // sum of degrees per community
  std::vector<int> cnt(g.n, 0);       // member count per community
  for (int i = 0; i < g.n; ++i) {
    tot[comm[i]] += g.degree[i];
    ++cnt[comm[i]];
  }
  std::vector<double> k_in(g.n, 0.0);
  std::vector<int> touched;
  bool any_move = false;
  bool moved = true;
  // gain of joining c after removal: k_in[c]*2/2m - deg_i * tot_c * 2/(2m)^2
  auto join_gain = [&](int i, int c) {
    return 2.0 * k_in[c] / g.two_m - 2.0 * g.degree[i] * tot[c] / (g.two_m * g.two_m);
  };
  while (moved) {
    moved = false;
    for (int i = 0; i < g.n; ++i) {
      const int old_c = comm[i];
      touched.clear();
      for (auto& [j, w] : g.adj[i]) {
        const int c = comm[j];
        if (k_in[c] == 0.0 && c != old_c) touched.push_back(c);
        k_in[c] += w;
      }
      tot[old_c] -= g.degree[i];
      --cnt[old_c];
      double best_gain = join_gain(i, old_c);  // re-entry baseline
      int best_c = old_c;
      std::sort(touched.begin(), touched.end());
      for (int c : touched) {
        const double gain = join_gain(i, c);
        if (gain > best_gain + kGainTol) {
          best_gain = gain;
          best_c = c;
        }
      }
      if (0.0 > best_gain + kGainTol) {
        // isolation wins; claim any empty community slot (one always exists)
        int free_c = cnt[old_c] == 0 ? old_c : -1;
        for (int c = 0; free_c < 0 && c < g.n; ++c)
          if (cnt[c] == 0) free_c = c;
        best_c = free_c;
      }
      tot[best_c] += g.degree[i];
      ++cnt[best_c];
      if (best_c != old_c) {
        comm[i] = best_c;
        moved = true;
        any_move = true;
      }
      for (int c : touched) k_in[c] = 0.0;
      k_in[old_c] = 0.0;
    }
  }
  return any_move;
}

// Renumbers communities to 0..k-1 preserving order of first appearance.
int compact(std::vector<int>& comm) {
  std::vector<int> remap(comm.size(), -1);
  int next = 0;
  for (int& c : comm) {
    if (remap[c] < 0) remap[c] = next++;
    c = remap[c];
  }
  return next;
}

WGraph contract(const WGraph& g, const std::vector<int>& comm, int k) {
  WGraph out;
  out.n = k;
  out.adj.assign(k, {});
  out.self.assign(k, 0.0);
  std::vector<std::vector<double>> w(k, std::vector<double>(k, 0.0));
  for (int i = 0; i < g.n; ++i) {
    out.self[comm[i]] += g.self[i];
    for (auto& [j, wt] : g.adj[i]) {
      if (comm[i] == comm[j])
        out.self[comm[i]] += wt;  // both directions visited -> counts twice
      else
        w[comm[i]][comm[j]] += wt;
    }
  }
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b)
      if (w[a][b] > 0.0) out.adj[a].push_back({b, w[a][b]});
  out.finalize();
  return out;
}

std::vector<std::vector<int>> to_sets(const std::vector<int>& comm) {
  int k = 0;
  for (int c : comm) k = std::max(k, c + 1);
  std::vector<std::vector<int>> sets(k);
  for (std::size_t i = 0; i < comm.size(); ++i) sets[comm[i]].push_back(static_cast<int>(i));
  std::sort(sets.begin(), sets.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return sets;
}

// Splits every disconnected community into its connected components. Never
// decreases modularity (no edges cross a split).
bool split_disconnected(const SpatialGraph& g, std::vector<int>& comm) {
  const auto adj = g.adjacency();
  const int n = g.node_count();
  std::vector<int> seen(n, 0);
  std::vector<int> stack;
  int next_c = compact(comm);
  bool changed = false;
  for (int root = 0; root < n; ++root) {
    if (seen[root]) continue;
    // flood the component of `root` within its community
    const int c = comm[root];
    bool fresh = true;
    for (int i = 0; i < root; ++i)
      if (comm[i] == c) fresh = false;  // an earlier component already claimed c
    const int assign = fresh ? c : next_c++;
    stack.push_back(root);
    seen[root] = 1;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      if (comm[u] != c) continue;
      if (!fresh) changed = true;
      comm[u] = assign;
      for (int v : adj[u])
        if (!seen[v] && comm[v] == c) {
          seen[v] = 1;
          stack.push_back(v);
        }
    }
  }
  compact(comm);
  return changed;
}

}  // namespace

double modularity(const SpatialGraph& g, const std::vector<std::vector<int>>& partition) {
  const double m = g.edge_count();
  if (m == 0.0) return 0.0;
  std::vector<int> comm(g.node_count(), -1);
  for (std::size_t c = 0; c < partition.size(); ++c)
    for (int i : partition[c]) comm[i] = static_cast<int>(c);
  std::vector<double> in(partition.size(), 0.0), tot(partition.size(), 0.0);
  for (auto [a, b] : g.edges) {
    if (comm[a] == comm[b]) in[comm[a]] += 1.0;
    tot[comm[a]] += 1.0;
    tot[comm[b]] += 1.0;
  }
  double q = 0.0;
  for (std::size_t c = 0; c < partition.size(); ++c)
    q += in[c] / m - (tot[c] / (2.0 * m)) * (tot[c] / (2.0 * m));
  return q;
}

std::vector<std::vector<int>> louvain_partition(const SpatialGraph& g) {
  const int n = g.node_count();
  if (n < 1) throw std::invalid_argument("louvain_partition: graph must have >= 1 node");

  // node -> community on the original graph, maintained across levels
  std::vector<int> node_comm(n);
  std::iota(node_comm.begin(), node_comm.end(), 0);

  WGraph level = from_spatial(g);
  std::vector<int> level_comm(n);
  std::iota(level_comm.begin(), level_comm.end(), 0);
  while (true) {
    const bool improved = local_move_phase(level, level_comm);
    if (!improved) break;
    const int k = compact(level_comm);
    for (int i = 0; i < n; ++i) node_comm[i] = level_comm[node_comm[i]];
    if (k <= 1) break;
    level = contract(level, level_comm, k);
    level_comm.assign(k, 0);
    std::iota(level_comm.begin(), level_comm.end(), 0);
  }

  // Refinement at original granularity: single-node moves can still pay off
  // after contraction rounds, and phase one can leave a community
  // disconnected. Alternate sweeps and component splits to a fixed point.
  WGraph base = from_spatial(g);
  compact(node_comm);
  while (true) {
    const bool moved = local_move_phase(base, node_comm);
    compact(node_comm);
    const bool split = split_disconnected(g, node_comm);
    if (!moved && !split) break;
  }
  return to_sets(node_comm);
}

bool is_single_move_local_max(const SpatialGraph& g,
                              const std::vector<std::vector<int>>& partition, double tol) {
  const double m = g.edge_count();
  if (m == 0.0) return true;
  const int n = g.node_count();
  std::vector<int> comm(n, -1);
  int k = static_cast<int>(partition.size());
  for (int c = 0; c < k; ++c)
    for (int i : partition[c]) comm[i] = c;
  std::vector<double> tot(k, 0.0);
  std::vector<double> deg(n, 0.0);
  for (auto [a, b] : g.edges) {
    deg[a] += 1.0;
    deg[b] += 1.0;
  }
  for (int i = 0; i < n; ++i) tot[comm[i]] += deg[i];
  const auto adj = g.adjacency();
  const double two_m = 2.0 * m;
  for (int i = 0; i < n; ++i) {
    std::vector<double> k_in(k, 0.0);
    for (int j : adj[i]) k_in[comm[j]] += 1.0;
    const double tot_old = tot[comm[i]] - deg[i];
    const double stay = k_in[comm[i]] / m - deg[i] * tot_old / (two_m * m);
    for (int c = 0; c < k; ++c) {
      if (c == comm[i]) continue;
      const double gain = k_in[c] / m - deg[i] * tot[c] / (two_m * m);
      if (gain > stay + tol) return false;
    }
    if (0.0 > stay + tol) return false;  // isolation move
  }
  return true;
}

}  // namespace cvheat::graph
