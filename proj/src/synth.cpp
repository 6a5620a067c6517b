#include "graphpatch/synth.hpp"

#include "graphpatch/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace gp {

void validate(const SynthConfig& cfg) {
  if (cfg.classes < 1) throw Error("synth: classes must be >= 1");
  if (cfg.nodes < 3 * cfg.classes) throw Error("synth: need nodes >= 3 * classes");
  if (!(cfg.p_out >= 0.0 && cfg.p_out < cfg.p_in && cfg.p_in <= 1.0)) throw Error("synth: need 0 <= p_out < p_in <= 1");
  if (cfg.gamma < 0.0) throw Error("synth: gamma must be >= 0");
  if (cfg.dim < cfg.classes) throw Error("synth: dim must be >= classes for orthogonal class means");
  if (cfg.sigma < 0.0) throw Error("synth: sigma must be >= 0");
}

Graph generate_synth(const SynthConfig& cfg) {
  validate(cfg);
  const RngStream root(cfg.seed, 0x73796e74);
  const auto n = static_cast<std::size_t>(cfg.nodes);

  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % static_cast<std::size_t>(cfg.classes));
  {
    RngStream rng = root.child(0);
    for (std::size_t i = n; i > 1; --i) std::swap(labels[i - 1], labels[rng.uniform_below(i)]);
  }

  std::vector<double> weight(n);
  {
    RngStream rng = root.child(1);
    for (auto& w : weight) {
      double u = rng.uniform();
      while (u <= 0.0) u = rng.uniform();
      w = std::pow(u, -cfg.gamma);
    }
    double mean = 0.0;
    for (double w : weight) mean += w;
    mean /= static_cast<double>(n);
    for (auto& w : weight) w /= mean;
  }

  std::vector<std::pair<NodeId, NodeId>> edges;
  {
    RngStream rng = root.child(2);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double p = std::min(1.0, weight[i] * weight[j] * (labels[i] == labels[j] ? cfg.p_in : cfg.p_out));
        if (rng.uniform() < p) edges.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(j));
      }
  }

  Matrix features = Matrix::Zero(static_cast<Eigen::Index>(n), cfg.dim);
  {
    RngStream rng = root.child(3);
    for (std::size_t i = 0; i < n; ++i) {
      for (int c = 0; c < cfg.dim; ++c) features(static_cast<Eigen::Index>(i), c) = static_cast<float>(cfg.sigma * rng.normal());
      features(static_cast<Eigen::Index>(i), labels[i]) += 1.0f;
    }
  }

  Splits splits;
  {
    std::vector<NodeId> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<NodeId>(i);
    RngStream rng = root.child(4);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_below(i)]);
    const std::size_t tenth = n / 10;
    splits.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(tenth));
    splits.valid.assign(order.begin() + static_cast<std::ptrdiff_t>(tenth), order.begin() + static_cast<std::ptrdiff_t>(2 * tenth));
    splits.test.assign(order.begin() + static_cast<std::ptrdiff_t>(2 * tenth), order.end());
  }
  return Graph(static_cast<NodeId>(n), edges, std::move(features), std::move(labels), std::move(splits));
}

Graph gen_synth(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  Graph g = generate_synth(cfg);
  try {
    save_graph(g, out_dir);
  } catch (const std::filesystem::filesystem_error& e) {
    throw Error(std::string("synth: cannot write dataset: ") + e.what());
  }
  nlohmann::ordered_json j;
  j["nodes"] = cfg.nodes;
  j["classes"] = cfg.classes;
  j["p_in"] = cfg.p_in;
  j["p_out"] = cfg.p_out;
  j["gamma"] = cfg.gamma;
  j["dim"] = cfg.dim;
  j["sigma"] = cfg.sigma;
  j["seed"] = cfg.seed;
  std::ofstream out(out_dir / "gen-config.json");
  if (!out) throw Error("synth: cannot write gen-config.json");
  out << j.dump(2) << '\n';
  return g;
}

}  // namespace gp
