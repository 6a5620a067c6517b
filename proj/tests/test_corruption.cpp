#include "graphpatch/corruption.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>

using namespace gp;
using namespace gp::testing;

namespace {

std::set<NodeId> globals(const EgoGraph& e) { return {e.local_to_global.begin(), e.local_to_global.end()}; }

int anchor_local_degree(const EgoGraph& e) { return static_cast<int>(e.adjacency()[0].size()); }

// Every non-patch node of `e` must be within `hops` of the anchor over local edges.
bool within_hops(const EgoGraph& e) {
  const auto adj = e.adjacency();
  std::vector<int> depth(static_cast<std::size_t>(e.num_nodes()), -1);
  depth[0] = 0;
  std::vector<NodeId> frontier{0};
  while (!frontier.empty()) {
    std::vector<NodeId> next;
    for (NodeId u : frontier)
      for (NodeId w : adj[static_cast<std::size_t>(u)])
        if (depth[static_cast<std::size_t>(w)] < 0) {
          depth[static_cast<std::size_t>(w)] = depth[static_cast<std::size_t>(u)] + 1;
          next.push_back(w);
        }
    frontier = std::move(next);
  }
  return std::all_of(depth.begin(), depth.end(), [&](int d) { return d >= 0 && d <= e.hops; });
}

}  // namespace

TEST_CASE("build_schedule") {
  CHECK(build_schedule(0.3).strengths == std::vector<double>{0.9, 0.6, 0.3});
  CHECK(build_schedule(0.5).strengths == std::vector<double>{0.99, 0.5});
  const auto tenth = build_schedule(0.1);
  CHECK(tenth.size() == 10);
  CHECK(tenth.strengths.front() == 0.99);
  CHECK(tenth.strengths.back() == 0.1);
  CHECK(build_schedule(0.1, 5).strengths == std::vector<double>{0.99, 0.9, 0.8, 0.7, 0.6});
  CHECK(build_schedule(0.3, 10).size() == 3);
  CHECK(build_schedule(0.7).strengths == std::vector<double>{0.7});
  for (double t : {0.05, 0.13, 0.25, 0.33, 0.45}) {
    const auto s = build_schedule(t).strengths;
    for (std::size_t i = 1; i < s.size(); ++i) CHECK(s[i] < s[i - 1]);
    for (double x : s) CHECK((x > 0.0 && x <= 0.99));
  }
  CHECK_THROWS_AS(build_schedule(0.0), Error);
  CHECK_THROWS_AS(build_schedule(1.0), Error);
  CHECK_THROWS_AS(build_schedule(-0.2), Error);
  CHECK_THROWS_AS(build_schedule(0.3, 0), Error);
}

TEST_CASE("corrupt") {
  SUBCASE("t = 0 is the identity") {
    const Graph g = make_graph(8, eight_node_edges());
    const EgoGraph ego = ego_extract(g, 0, 2);
    CHECK(corrupt(ego, 0.0, RngStream(1)) == ego);
  }
  SUBCASE("t = 1 on a star leaves the anchor alone") {
    const Graph g = make_graph(6, star_edges(5));
    const EgoGraph out = corrupt(ego_extract(g, 0, 2), 1.0, RngStream(1));
    CHECK(out.num_nodes() == 1);
    CHECK(out.edges.empty());
    CHECK(out.global_degree[0] == 5);
  }
  SUBCASE("degree-0 anchor") {
    const Graph g = make_graph(2, {});
    const EgoGraph ego = ego_extract(g, 0, 2);
    CHECK(corrupt(ego, 0.7, RngStream(3)) == ego);
  }
  SUBCASE("t = 0.5 on the eight-node ego-graph, every outcome enumerated") {
    // Node 5 hangs only off 1, node 6 only off 2, node 7 off both 3 and 4.
    const Graph g = make_graph(8, eight_node_edges());
    const EgoGraph ego = ego_extract(g, 0, 2);
    std::set<std::set<NodeId>> seen;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      const EgoGraph out = corrupt(ego, 0.5, RngStream(seed));
      const auto kept = globals(out);
      CHECK(anchor_local_degree(out) == 2);
      std::set<NodeId> expected{0};
      for (NodeId u : {1, 2, 3, 4})
        if (kept.count(u)) expected.insert(u);
      if (kept.count(1)) expected.insert(5);
      if (kept.count(2)) expected.insert(6);
      if (kept.count(3) || kept.count(4)) expected.insert(7);
      CHECK(kept == expected);
      CHECK(within_hops(out));
      seen.insert(kept);
    }
    CHECK(seen.size() == 6);  // C(4, 2) ways to keep two neighbours
  }
  SUBCASE("invariants on random graphs") {
    const Graph g = make_graph(80, random_edges(80, 0.06, 9));
    for (NodeId v = 0; v < 80; v += 3) {
      const EgoGraph ego = ego_extract(g, v, 2);
      for (double t : {0.1, 0.3, 0.6, 0.9}) {
        const EgoGraph out = corrupt(ego, t, RngStream(v, static_cast<std::uint64_t>(t * 10)));
        const auto kept = globals(out);
        const auto all = globals(ego);
        CHECK(std::includes(all.begin(), all.end(), kept.begin(), kept.end()));
        CHECK(out.local_to_global[0] == v);
        const int removed = anchor_local_degree(ego) - anchor_local_degree(out);
        CHECK(removed == std::lround(t * anchor_local_degree(ego)));
        CHECK(within_hops(out));
        for (NodeId u = 0; u < out.num_nodes(); ++u)
          CHECK(out.global_degree[static_cast<std::size_t>(u)] == g.degree(out.local_to_global[static_cast<std::size_t>(u)]));
        CHECK(out == corrupt(ego, t, RngStream(v, static_cast<std::uint64_t>(t * 10))));
      }
    }
  }
  SUBCASE("removed-degree mode discounts dropped neighbours") {
    const Graph g = make_graph(6, star_edges(5));
    const EgoGraph out = corrupt(ego_extract(g, 0, 2), 0.4, RngStream(2), CorruptionDegrees::kRemoved);
    CHECK(out.num_nodes() == 4);
    CHECK(out.global_degree[0] == 3);
  }
  SUBCASE("patch nodes survive with the anchor") {
    const Graph g = make_graph(6, star_edges(5));
    const EgoGraph patched = add_patch_node(ego_extract(g, 0, 2), Vector::Ones(3));
    const EgoGraph out = corrupt(patched, 0.0, RngStream(2));
    CHECK(out.patch_count == 1);
  }
  SUBCASE("strength out of range") {
    const Graph g = make_graph(3, path_edges(3));
    CHECK_THROWS_AS(corrupt(ego_extract(g, 0, 2), 1.5, RngStream(1)), Error);
  }
}

TEST_CASE("sample_targets") {
  const Graph g = make_graph(6, star_edges(5));
  const EgoGraph ego = ego_extract(g, 0, 2);
  const RngStream rng(11, 4);
  SUBCASE("L = 1 matches a single draw from child 0") {
    const auto one = sample_targets(ego, 0.4, 1, rng);
    REQUIRE(one.size() == 1);
    CHECK(one[0] == corrupt(ego, 0.4, rng.child(0)));
  }
  SUBCASE("t = 0 gives identical copies") {
    for (const auto& e : sample_targets(ego, 0.0, 10, rng)) CHECK(e == ego);
  }
  SUBCASE("star with five leaves keeps exactly three at t = 0.4") {
    const auto samples = sample_targets(ego, 0.4, 10, rng);
    CHECK(samples.size() == 10);
    std::set<std::set<NodeId>> distinct;
    for (const auto& e : samples) {
      CHECK(e.num_nodes() == 4);
      distinct.insert(globals(e));
    }
    CHECK(distinct.size() > 1);
    CHECK(sample_targets(ego, 0.4, 10, rng) == samples);
  }
  SUBCASE("L = 0") { CHECK_THROWS_AS(sample_targets(ego, 0.4, 0, rng), Error); }
}
