#include "graphpatch/graph.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>

namespace gp {

namespace {

constexpr std::array<char, 4> kFeatureMagic{'G', 'P', 'F', '1'};

void check_ids(std::span<const NodeId> ids, NodeId n, const char* what) {
  for (NodeId v : ids)
    if (v < 0 || v >= n) throw Error(std::string(what) + ": node id out of range");
}

std::uint32_t read_u32_le(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

void write_u32_le(std::ostream& os, std::uint32_t v) {
  const unsigned char bytes[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                  static_cast<unsigned char>(v >> 16),
                                  static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(bytes), 4);
}

std::ifstream open_input(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw Error("missing file: " + path.string());
  return in;
}

NodeId parse_id(const std::string& token, const std::filesystem::path& path, std::size_t line) {
  long long value = 0;
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc() || ptr != end || value < 0 || value > std::numeric_limits<NodeId>::max())
    throw Error(path.filename().string() + ":" + std::to_string(line) + ": malformed id '" + token + "'");
  return static_cast<NodeId>(value);
}

// Reads whitespace-separated integer pairs, skipping blank lines and '#' comments.
std::vector<std::pair<NodeId, NodeId>> read_pairs(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<std::pair<NodeId, NodeId>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::string a, b, extra;
    if (!(fields >> a)) continue;
    if (!(fields >> b) || (fields >> extra))
      throw Error(path.filename().string() + ":" + std::to_string(lineno) + ": expected two fields");
    out.emplace_back(parse_id(a, path, lineno), parse_id(b, path, lineno));
  }
  return out;
}

Matrix read_features(const std::filesystem::path& path) {
  auto in = open_input(path, std::ios::binary);
  std::array<unsigned char, 12> header{};
  if (!in.read(reinterpret_cast<char*>(header.data()), header.size()))
    throw Error("features.f32: malformed header");
  if (std::memcmp(header.data(), kFeatureMagic.data(), 4) != 0) throw Error("features.f32: malformed header (bad magic)");
  const std::uint32_t rows = read_u32_le(header.data() + 4);
  const std::uint32_t cols = read_u32_le(header.data() + 8);
  // The header is padded to 16 bytes.
  std::array<char, 4> pad{};
  if (!in.read(pad.data(), pad.size())) throw Error("features.f32: malformed header");
  Matrix x(rows, cols);
  std::vector<unsigned char> buffer(std::size_t(rows) * cols * 4);
  if (!buffer.empty() && !in.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(buffer.size())))
    throw Error("features.f32: truncated payload");
  for (std::size_t i = 0; i < std::size_t(rows) * cols; ++i)
    x.data()[i] = std::bit_cast<float>(read_u32_le(buffer.data() + 4 * i));
  if (in.peek() != std::char_traits<char>::eof()) throw Error("features.f32: trailing bytes after payload");
  if (!x.allFinite()) throw Error("features.f32: non-finite feature value");
  return x;
}

}  // namespace

Graph::Graph(NodeId num_nodes, std::span<const std::pair<NodeId, NodeId>> edges, Matrix features,
             std::vector<int> labels, Splits splits)
    : features_(std::move(features)), labels_(std::move(labels)), splits_(std::move(splits)) {
  if (num_nodes < 0) throw Error("negative node count");
  if (features_.rows() != num_nodes) throw Error("feature/node count mismatch");
  if (labels_.empty()) labels_.assign(num_nodes, kUnlabeled);
  if (static_cast<NodeId>(labels_.size()) != num_nodes) throw Error("label/node count mismatch");

  std::vector<std::pair<NodeId, NodeId>> directed;
  directed.reserve(edges.size() * 2);
  for (auto [u, v] : edges) {
    if (u < 0 || v < 0 || u >= num_nodes || v >= num_nodes) throw Error("edge endpoint out of range");
    if (u == v) throw Error("self-edge " + std::to_string(u) + " rejected");
    directed.emplace_back(u, v);
    directed.emplace_back(v, u);
  }
  std::sort(directed.begin(), directed.end());
  directed.erase(std::unique(directed.begin(), directed.end()), directed.end());

  offsets_.assign(std::size_t(num_nodes) + 1, 0);
  for (auto [u, v] : directed) ++offsets_[std::size_t(u) + 1];
  std::partial_sum(offsets_.begin(), offsets_.end(), offsets_.begin());
  neighbors_.reserve(directed.size());
  for (auto [u, v] : directed) neighbors_.push_back(v);

  for (int y : labels_) {
    if (y < kUnlabeled) throw Error("negative class label");
    num_classes_ = std::max(num_classes_, y + 1);
  }

  for (auto* split : {&splits_.train, &splits_.valid, &splits_.test}) {
    check_ids(*split, num_nodes, "splits");
    std::sort(split->begin(), split->end());
    if (std::adjacent_find(split->begin(), split->end()) != split->end())
      throw Error("splits: duplicate node id");
  }
  std::vector<char> seen(num_nodes, 0);
  for (const auto* split : {&splits_.train, &splits_.valid, &splits_.test})
    for (NodeId v : *split) {
      if (seen[v]) throw Error("splits are not disjoint");
      seen[v] = 1;
    }
}

bool Graph::has_edge(NodeId u, NodeId v) const {
  auto nb = neighbors(u);
  return std::binary_search(nb.begin(), nb.end(), v);
}

Graph load_graph(const std::filesystem::path& dir) {
  for (const char* name : {"edges.tsv", "features.f32", "labels.tsv", "splits.json"})
    if (!std::filesystem::exists(dir / name)) throw Error("missing file: " + (dir / name).string());

  const auto edges = read_pairs(dir / "edges.tsv");
  const auto label_pairs = read_pairs(dir / "labels.tsv");
  Matrix features = read_features(dir / "features.f32");

  nlohmann::json split_json;
  {
    auto in = open_input(dir / "splits.json");
    try {
      split_json = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw Error(std::string("splits.json: ") + e.what());
    }
  }
  Splits splits;
  for (auto [key, target] : {std::pair{"train", &splits.train}, std::pair{"valid", &splits.valid},
                             std::pair{"test", &splits.test}}) {
    if (!split_json.contains(key) || !split_json[key].is_array())
      throw Error(std::string("splits.json: missing array '") + key + "'");
    for (const auto& id : split_json[key]) {
      if (!id.is_number_integer() || id.get<long long>() < 0) throw Error("splits.json: malformed node id");
      target->push_back(id.get<NodeId>());
    }
  }

  // Node ids must be dense: every id below the largest referenced id appears
  // in at least one file.
  NodeId max_id = -1;
  for (auto [u, v] : edges) max_id = std::max({max_id, u, v});
  for (auto [v, y] : label_pairs) max_id = std::max(max_id, v);
  for (const auto* s : {&splits.train, &splits.valid, &splits.test})
    for (NodeId v : *s) max_id = std::max(max_id, v);
  const NodeId n = max_id + 1;
  if (features.rows() != n) throw Error("feature/node count mismatch");
  std::vector<char> referenced(n, 0);
  for (auto [u, v] : edges) referenced[u] = referenced[v] = 1;
  for (auto [v, y] : label_pairs) referenced[v] = 1;
  for (const auto* s : {&splits.train, &splits.valid, &splits.test})
    for (NodeId v : *s) referenced[v] = 1;
  if (std::find(referenced.begin(), referenced.end(), 0) != referenced.end())
    throw Error("non-dense node ids");

  std::vector<int> labels(n, kUnlabeled);
  for (auto [v, y] : label_pairs) {
    if (labels[v] != kUnlabeled && labels[v] != y) throw Error("labels.tsv: conflicting labels");
    labels[v] = y;
  }
  return Graph(n, edges, std::move(features), std::move(labels), std::move(splits));
}

void save_graph(const Graph& g, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "edges.tsv");
    if (!out) throw Error("cannot write " + (dir / "edges.tsv").string());
    for (NodeId u = 0; u < g.num_nodes(); ++u)
      for (NodeId v : g.neighbors(u))
        if (u < v) out << u << '\t' << v << '\n';
  }
  {
    std::ofstream out(dir / "features.f32", std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / "features.f32").string());
    out.write(kFeatureMagic.data(), 4);
    write_u32_le(out, static_cast<std::uint32_t>(g.features().rows()));
    write_u32_le(out, static_cast<std::uint32_t>(g.features().cols()));
    write_u32_le(out, 0);
    for (Eigen::Index i = 0; i < g.features().size(); ++i)
      write_u32_le(out, std::bit_cast<std::uint32_t>(g.features().data()[i]));
  }
  {
    std::ofstream out(dir / "labels.tsv");
    for (NodeId v = 0; v < g.num_nodes(); ++v)
      if (g.labels()[v] != kUnlabeled) out << v << '\t' << g.labels()[v] << '\n';
  }
  {
    nlohmann::ordered_json j;
    j["train"] = g.splits().train;
    j["valid"] = g.splits().valid;
    j["test"] = g.splits().test;
    std::ofstream out(dir / "splits.json");
    out << j.dump() << '\n';
  }
}

std::vector<std::vector<NodeId>> EgoGraph::adjacency() const {
  std::vector<std::vector<NodeId>> adj(local_to_global.size());
  for (auto [u, v] : edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  return adj;
}

EgoGraph ego_extract(const Graph& g, NodeId anchor, int hops) {
  if (anchor < 0 || anchor >= g.num_nodes()) throw Error("ego_extract: anchor out of range");
  if (hops < 1) throw Error("ego_extract: hop count must be >= 1");

  EgoGraph ego;
  ego.hops = hops;
  std::vector<NodeId> order{anchor};
  std::unordered_map<NodeId, NodeId> local_of{{anchor, 0}};
  auto lookup = [&](NodeId v) -> NodeId {
    auto it = local_of.find(v);
    return it == local_of.end() ? NodeId{-1} : it->second;
  };
  std::size_t frontier_begin = 0;
  for (int depth = 0; depth < hops; ++depth) {
    const std::size_t frontier_end = order.size();
    for (std::size_t i = frontier_begin; i < frontier_end; ++i)
      for (NodeId w : g.neighbors(order[i]))
        if (local_of.try_emplace(w, static_cast<NodeId>(order.size())).second) order.push_back(w);
    frontier_begin = frontier_end;
  }

  ego.local_to_global = order;
  ego.global_degree.reserve(order.size());
  for (NodeId v : order) ego.global_degree.push_back(g.degree(v));
  for (NodeId lu = 0; lu < static_cast<NodeId>(order.size()); ++lu)
    for (NodeId w : g.neighbors(order[lu])) {
      const NodeId lw = lookup(w);
      if (lw > lu) ego.edges.emplace_back(lu, lw);
    }
  std::sort(ego.edges.begin(), ego.edges.end());

  ego.features.resize(static_cast<Eigen::Index>(order.size()), g.feature_dim());
  for (std::size_t i = 0; i < order.size(); ++i) ego.features.row(static_cast<Eigen::Index>(i)) = g.features().row(order[i]);
  return ego;
}

EgoGraph add_patch_node(const EgoGraph& ego, const Eigen::Ref<const Vector>& feature) {
  if (feature.size() != ego.features.cols()) throw ShapeError("add_patch_node: feature dimension mismatch");
  EgoGraph out = ego;
  const NodeId local = out.num_nodes();
  out.local_to_global.push_back(kPatchNode);
  out.global_degree.push_back(1);
  out.global_degree[EgoGraph::anchor] += 1;
  out.edges.emplace_back(EgoGraph::anchor, local);
  out.features.conservativeResize(out.features.rows() + 1, Eigen::NoChange);
  out.features.row(local) = feature.transpose();
  ++out.patch_count;
  return out;
}

DegreeStrata degree_stratify(const Graph& g, std::span<const NodeId> population) {
  if (population.empty()) throw Error("degree_stratify: empty population");
  if (population.size() < 3) throw Error("population too small to stratify");
  std::vector<std::pair<int, NodeId>> ranked;
  ranked.reserve(population.size());
  for (NodeId v : population) ranked.emplace_back(g.degree(v), v);
  std::sort(ranked.begin(), ranked.end());
  const std::size_t third = (ranked.size() + 2) / 3;
  DegreeStrata s;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (i < third)
      s.low.push_back(ranked[i].second);
    else if (i >= ranked.size() - third)
      s.high.push_back(ranked[i].second);
    else
      s.mid.push_back(ranked[i].second);
  }
  s.low_boundary = ranked[third - 1].first;
  s.high_boundary = ranked[ranked.size() - third].first;
  return s;
}

namespace {

std::vector<Coefficient> normalize(NodeId n, const std::vector<std::pair<NodeId, NodeId>>& undirected,
                                   const std::vector<int>& degree) {
  std::vector<Coefficient> out;
  out.reserve(undirected.size() * 2 + std::size_t(n));
  auto coef = [&](NodeId u, NodeId v) {
    return static_cast<float>(1.0 / std::sqrt((degree[u] + 1.0) * (degree[v] + 1.0)));
  };
  for (NodeId v = 0; v < n; ++v) out.push_back({v, v, coef(v, v)});
  for (auto [u, v] : undirected) {
    out.push_back({u, v, coef(u, v)});
    out.push_back({v, u, coef(u, v)});
  }
  std::sort(out.begin(), out.end(),
            [](const Coefficient& a, const Coefficient& b) { return std::tie(a.row, a.col) < std::tie(b.row, b.col); });
  return out;
}

}  // namespace

std::vector<Coefficient> normalized_adjacency(const EgoGraph& ego) {
  return normalize(ego.num_nodes(), ego.edges, ego.global_degree);
}

std::vector<Coefficient> normalized_adjacency(const Graph& g) {
  std::vector<std::pair<NodeId, NodeId>> undirected;
  undirected.reserve(g.num_edges());
  std::vector<int> degree(g.num_nodes());
  for (NodeId u = 0; u < g.num_nodes(); ++u) {
    degree[u] = g.degree(u);
    for (NodeId v : g.neighbors(u))
      if (u < v) undirected.emplace_back(u, v);
  }
  return normalize(g.num_nodes(), undirected, degree);
}

SparseMatrix to_sparse(std::span<const Coefficient> coefficients, NodeId n) {
  std::vector<Eigen::Triplet<float>> triplets;
  triplets.reserve(coefficients.size());
  for (const auto& c : coefficients) triplets.emplace_back(c.row, c.col, c.value);
  SparseMatrix m(n, n);
  m.setFromTriplets(triplets.begin(), triplets.end());
  return m;
}

}  // namespace gp
