#pragma once

// Small hand-built graphs and randomly initialised models shared by the unit tests.

#include "graphpatch/gcn.hpp"
#include "graphpatch/graph.hpp"
#include "graphpatch/patcher.hpp"
#include "graphpatch/rng.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace gp::testing {

using EdgeList = std::vector<std::pair<NodeId, NodeId>>;

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
  RngStream rng(seed, 99);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(scale * rng.normal());
  return m;
}

/// Graph with random features, labels v % classes and every node in the train split.
inline Graph make_graph(NodeId n, const EdgeList& edges, Eigen::Index dim = 3, std::uint64_t seed = 1,
                        int classes = 2) {
  std::vector<int> labels(static_cast<std::size_t>(n));
  Splits splits;
  for (NodeId v = 0; v < n; ++v) {
    labels[static_cast<std::size_t>(v)] = v % classes;
    splits.train.push_back(v);
  }
  return Graph(n, edges, random_matrix(n, dim, seed), std::move(labels), std::move(splits));
}

inline EdgeList path_edges(NodeId n) {
  EdgeList e;
  for (NodeId v = 0; v + 1 < n; ++v) e.emplace_back(v, v + 1);
  return e;
}

inline EdgeList star_edges(NodeId leaves) {
  EdgeList e;
  for (NodeId v = 1; v <= leaves; ++v) e.emplace_back(0, v);
  return e;
}

/// Anchor 0 with four neighbours 1..4; 5 hangs off 1, 6 off 2, 7 off both 3 and 4.
inline EdgeList eight_node_edges() { return {{0, 1}, {0, 2}, {0, 3}, {0, 4}, {1, 5}, {2, 6}, {3, 7}, {4, 7}}; }

/// Erdos-Renyi graph; handy for random-anchor property checks.
inline EdgeList random_edges(NodeId n, double p, std::uint64_t seed) {
  RngStream rng(seed, 7);
  EdgeList e;
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v = u + 1; v < n; ++v)
      if (rng.uniform() < p) e.emplace_back(u, v);
  return e;
}

inline void randomize_biases(std::vector<Parameter<float>*> params, std::uint64_t seed) {
  RngStream rng(seed, 5);
  for (auto* p : params)
    if (p->value.rows() == 1)
      for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = static_cast<float>(0.3 * rng.normal());
}

inline GCNModel random_gcn(Eigen::Index d, Eigen::Index h, Eigen::Index classes, std::uint64_t seed) {
  GCNModel m = init_gcn(d, h, classes, RngStream(seed, 1));
  randomize_biases(m.parameters(), seed);
  return m;
}

inline PatcherModel random_patcher(Eigen::Index d, Eigen::Index h, std::uint64_t seed) {
  PatcherModel m = init_patcher(d, h, RngStream(seed, 2));
  randomize_biases(m.parameters(), seed + 1);
  return m;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    RngStream rng(static_cast<std::uint64_t>(std::hash<std::string>{}(tag)),
                  static_cast<std::uint64_t>(std::filesystem::file_time_type::clock::now().time_since_epoch().count()));
    path_ = std::filesystem::temp_directory_path() / ("gp-" + tag + "-" + std::to_string(rng.next_u64() % 1000000007));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace gp::testing
