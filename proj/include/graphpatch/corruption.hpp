#pragma once

#include "graphpatch/graph.hpp"
#include "graphpatch/rng.hpp"

#include <optional>
#include <vector>

namespace gp {

inline constexpr double kMaxStrength = 0.99;

/// Strictly decreasing corruption strengths in (0, 1).
struct CorruptionSchedule {
  std::vector<double> strengths;

  std::size_t size() const { return strengths.size(); }
  friend bool operator==(const CorruptionSchedule&, const CorruptionSchedule&) = default;
};

/// floor(1/t) strengths {M t, (M-1) t, ..., t}, each capped at 0.99 with
/// duplicates collapsed. `steps` keeps only the largest `steps` strengths.
CorruptionSchedule build_schedule(double base_strength, std::optional<int> steps = std::nullopt);

/// How corrupted ego-graphs report the degrees used for normalization.
enum class CorruptionDegrees {
  kSource,   // keep source-graph degrees for every survivor
  kRemoved,  // subtract edges to dropped neighbours, as if they left the graph
};

/// Drops exactly round(t * local anchor degree) first-order neighbours chosen
/// uniformly, then every node no longer within `ego.hops` of the anchor.
EgoGraph corrupt(const EgoGraph& ego, double strength, RngStream rng,
                 CorruptionDegrees degrees = CorruptionDegrees::kSource);

/// L independent corruptions drawn from rng.child(0) ... rng.child(L-1).
std::vector<EgoGraph> sample_targets(const EgoGraph& ego, double strength, int samples, const RngStream& rng,
                                     CorruptionDegrees degrees = CorruptionDegrees::kSource);

}  // namespace gp
