#include "graphpatch/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace gp {

namespace {

// Snap to 9 decimals so 3 * 0.3 comes out as the double nearest 0.9.
double snap(double x) { return std::round(x * 1e9) / 1e9; }

}  // namespace

CorruptionSchedule build_schedule(double base_strength, std::optional<int> steps) {
  if (!(base_strength > 0.0) || !(base_strength < 1.0))
    throw Error("build_schedule: strength must lie in (0, 1)");
  if (steps && *steps < 1) throw Error("build_schedule: steps must be >= 1");
  const int count = static_cast<int>(std::floor(1.0 / base_strength + 1e-9));
  CorruptionSchedule s;
  for (int m = count; m >= 1; --m) {
    const double t = std::min(snap(m * base_strength), kMaxStrength);
    if (s.strengths.empty() || t < s.strengths.back()) s.strengths.push_back(t);
  }
  if (steps && static_cast<std::size_t>(*steps) < s.strengths.size()) s.strengths.resize(static_cast<std::size_t>(*steps));
  return s;
}

EgoGraph corrupt(const EgoGraph& ego, double strength, RngStream rng, CorruptionDegrees degrees) {
  if (!(strength >= 0.0 && strength <= 1.0)) throw Error("corrupt: strength must lie in [0, 1]");
  const auto adj = ego.adjacency();
  std::vector<NodeId> first = adj[EgoGraph::anchor];
  std::sort(first.begin(), first.end());
  const auto drop = static_cast<std::size_t>(std::lround(strength * static_cast<double>(first.size())));
  if (drop == 0) return ego;

  // Partial Fisher-Yates: the first `drop` slots become the removed neighbours.
  for (std::size_t i = 0; i < drop; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_below(first.size() - i));
    std::swap(first[i], first[j]);
  }
  const NodeId n = ego.num_nodes();
  std::vector<char> removed(n, 0);
  for (std::size_t i = 0; i < drop; ++i) removed[first[i]] = 1;

  std::vector<int> depth(n, -1);
  depth[EgoGraph::anchor] = 0;
  std::deque<NodeId> queue{EgoGraph::anchor};
  while (!queue.empty()) {
    const NodeId u = queue.front();
    queue.pop_front();
    if (depth[u] == ego.hops) continue;
    for (NodeId w : adj[u])
      if (!removed[w] && depth[w] < 0) {
        depth[w] = depth[u] + 1;
        queue.push_back(w);
      }
  }

  EgoGraph out;
  out.hops = ego.hops;
  std::vector<NodeId> local(n, -1);
  for (NodeId v = 0; v < n; ++v) {
    if (depth[v] < 0) continue;
    local[v] = out.num_nodes();
    out.local_to_global.push_back(ego.local_to_global[v]);
    int degree = ego.global_degree[v];
    if (degrees == CorruptionDegrees::kRemoved)
      for (NodeId w : adj[v]) degree -= removed[w];
    out.global_degree.push_back(degree);
    if (ego.is_patch(v)) ++out.patch_count;
  }
  for (auto [u, v] : ego.edges)
    if (local[u] >= 0 && local[v] >= 0) out.edges.emplace_back(local[u], local[v]);
  std::sort(out.edges.begin(), out.edges.end());
  out.features.resize(out.num_nodes(), ego.features.cols());
  for (NodeId v = 0; v < n; ++v)
    if (local[v] >= 0) out.features.row(local[v]) = ego.features.row(v);
  return out;
}

std::vector<EgoGraph> sample_targets(const EgoGraph& ego, double strength, int samples, const RngStream& rng,
                                     CorruptionDegrees degrees) {
  if (samples < 1) throw Error("sample_targets: need at least one sample");
  std::vector<EgoGraph> out;
  out.reserve(static_cast<std::size_t>(samples));
  for (int l = 0; l < samples; ++l) out.push_back(corrupt(ego, strength, rng.child(static_cast<std::uint64_t>(l)), degrees));
  return out;
}

}  // namespace gp
