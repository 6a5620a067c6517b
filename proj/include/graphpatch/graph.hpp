#pragma once

// Graph storage, k-hop ego-graphs that remember source-graph degrees, patch
// node insertion and degree stratification.

#include "graphpatch/tensor.hpp"

#include <Eigen/SparseCore>

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace gp {

using NodeId = std::int32_t;

inline constexpr int kUnlabeled = -1;
inline constexpr NodeId kPatchNode = -1;

struct Splits {
  std::vector<NodeId> train;
  std::vector<NodeId> valid;
  std::vector<NodeId> test;
};

/// Immutable undirected graph in CSR form with node features, labels and splits.
class Graph {
 public:
  Graph() = default;
  /// Builds a graph from an edge list. Reversed and duplicate edges collapse;
  /// self-edges and ids outside [0, num_nodes) are rejected.
  Graph(NodeId num_nodes, std::span<const std::pair<NodeId, NodeId>> edges, Matrix features,
        std::vector<int> labels, Splits splits);

  NodeId num_nodes() const { return static_cast<NodeId>(offsets_.size()) - 1; }
  std::size_t num_edges() const { return neighbors_.size() / 2; }
  Eigen::Index feature_dim() const { return features_.cols(); }
  int num_classes() const { return num_classes_; }

  std::span<const NodeId> neighbors(NodeId v) const {
    return {neighbors_.data() + offsets_[v], neighbors_.data() + offsets_[v + 1]};
  }
  int degree(NodeId v) const { return static_cast<int>(offsets_[v + 1] - offsets_[v]); }
  bool has_edge(NodeId u, NodeId v) const;

  const Matrix& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }
  const Splits& splits() const { return splits_; }

 private:
  std::vector<std::int64_t> offsets_{0};
  std::vector<NodeId> neighbors_;
  Matrix features_;
  std::vector<int> labels_;
  int num_classes_ = 0;
  Splits splits_;
};

/// Reads edges.tsv, features.f32, labels.tsv and splits.json from `dir`.
Graph load_graph(const std::filesystem::path& dir);

/// Writes the same four files; the inverse of load_graph.
void save_graph(const Graph& g, const std::filesystem::path& dir);

/// k-hop subgraph around an anchor. Local id 0 is the anchor. Degrees are the
/// source-graph degrees so symmetric normalization matches the full graph.
struct EgoGraph {
  int hops = 0;
  std::vector<NodeId> local_to_global;
  std::vector<std::pair<NodeId, NodeId>> edges;  // local ids, first < second
  std::vector<int> global_degree;
  Matrix features;
  int patch_count = 0;

  static constexpr NodeId anchor = 0;

  NodeId num_nodes() const { return static_cast<NodeId>(local_to_global.size()); }
  bool is_patch(NodeId local) const { return local_to_global[local] == kPatchNode; }
  /// Local adjacency lists built from `edges`.
  std::vector<std::vector<NodeId>> adjacency() const;

  friend bool operator==(const EgoGraph& a, const EgoGraph& b) {
    return a.hops == b.hops && a.local_to_global == b.local_to_global && a.edges == b.edges &&
           a.global_degree == b.global_degree && a.patch_count == b.patch_count &&
           a.features.rows() == b.features.rows() && a.features.cols() == b.features.cols() &&
           a.features == b.features;
  }
};

EgoGraph ego_extract(const Graph& g, NodeId anchor, int hops);

/// Returns a copy of `ego` with one extra node wired only to the anchor.
EgoGraph add_patch_node(const EgoGraph& ego, const Eigen::Ref<const Vector>& feature);

struct DegreeStrata {
  std::vector<NodeId> low;
  std::vector<NodeId> mid;
  std::vector<NodeId> high;
  int low_boundary = 0;   // largest degree in `low`
  int high_boundary = 0;  // smallest degree in `high`
};

/// Sorts by (degree, id); the lowest and highest ceil(n/3) nodes form the
/// outer strata. Requires at least 3 nodes.
DegreeStrata degree_stratify(const Graph& g, std::span<const NodeId> population);

struct Coefficient {
  NodeId row;
  NodeId col;
  float value;

  friend bool operator==(const Coefficient&, const Coefficient&) = default;
};

/// Coefficients of D^-1/2 (A + I) D^-1/2 over the ego edges plus self-loops,
/// using global degrees, ordered by (row, col).
std::vector<Coefficient> normalized_adjacency(const EgoGraph& ego);
std::vector<Coefficient> normalized_adjacency(const Graph& g);

using SparseMatrix = Eigen::SparseMatrix<float, Eigen::RowMajor>;

SparseMatrix to_sparse(std::span<const Coefficient> coefficients, NodeId n);

}  // namespace gp
