#include "graphpatch/eval.hpp"

#include "graphpatch/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <thread>
#include <unordered_map>

namespace gp {

namespace {

// Predictions at each patch count 0..max_patch for one test node.
std::vector<int> predictions_along_chain(const GCNModel& gnn, const Graph& g, const PatcherModel* patcher,
                                         NodeId v, int max_patch) {
  EgoGraph ego = ego_extract(g, v, kGcnLayers);
  std::vector<int> out;
  out.push_back(argmax(anchor_distribution(gnn, ego)));
  for (int n = 1; n <= max_patch; ++n) {
    if (patcher == nullptr) {
      out.push_back(out.front());
      continue;
    }
    ego = add_patch_node(ego, generate_patch(*patcher, ego));
    out.push_back(argmax(anchor_distribution(gnn, ego)));
  }
  return out;
}

std::vector<std::vector<int>> chain_predictions(const GCNModel& gnn, const Graph& g, const PatcherModel* patcher,
                                                int max_patch, int threads) {
  const auto& test = g.splits().test;
  for (NodeId v : test)
    if (g.labels()[v] == kUnlabeled) throw Error("evaluate: unlabeled test node " + std::to_string(v));
  std::vector<std::vector<int>> out(test.size());
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  auto run = [&](std::size_t w) {
    for (std::size_t i = w; i < test.size(); i += workers)
      out[i] = predictions_along_chain(gnn, g, patcher, test[i], max_patch);
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w);
  }
  return out;
}

std::vector<NodePrediction> label_strata(const Graph& g, const std::vector<std::vector<int>>& chains, int n_patch) {
  const auto& test = g.splits().test;
  const DegreeStrata strata = degree_stratify(g, test);
  std::unordered_map<NodeId, const char*> stratum_of;
  for (NodeId v : strata.low) stratum_of[v] = "low";
  for (NodeId v : strata.mid) stratum_of[v] = "mid";
  for (NodeId v : strata.high) stratum_of[v] = "high";
  std::vector<NodePrediction> out;
  out.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    const NodeId v = test[i];
    out.push_back({v, g.degree(v), stratum_of.at(v), g.labels()[v], chains[i].front(),
                   chains[i][static_cast<std::size_t>(n_patch)]});
  }
  return out;
}

StratumAccuracy accuracy(const std::string& name, const std::vector<NodePrediction>& preds, const char* stratum) {
  StratumAccuracy acc{name, 0, 0.0, 0.0};
  std::size_t base_hits = 0;
  std::size_t patch_hits = 0;
  for (const auto& p : preds) {
    if (stratum != nullptr && p.stratum != stratum) continue;
    ++acc.population;
    base_hits += p.baseline == p.truth;
    patch_hits += p.patched == p.truth;
  }
  if (acc.population > 0) {
    acc.baseline = static_cast<double>(base_hits) / static_cast<double>(acc.population);
    acc.patched = static_cast<double>(patch_hits) / static_cast<double>(acc.population);
  }
  return acc;
}

}  // namespace

StratifiedReport summarize(std::vector<NodePrediction> predictions, int n_patch) {
  StratifiedReport r;
  r.n_patch = n_patch;
  r.overall = accuracy("overall", predictions, nullptr);
  r.low = accuracy("low", predictions, "low");
  r.high = accuracy("high", predictions, "high");
  r.predictions = std::move(predictions);
  return r;
}

StratifiedReport evaluate(const GCNModel& gnn, const Graph& g, const PatcherModel* patcher, int n_patch, int threads) {
  if (n_patch < 0) throw Error("evaluate: negative patch count");
  const auto chains = chain_predictions(gnn, g, patcher, n_patch, threads);
  return summarize(label_strata(g, chains, n_patch), n_patch);
}

void write_report_csv(const StratifiedReport& report, std::ostream& os) {
  os << "stratum,population,baseline_acc,patched_acc,delta\n" << std::fixed << std::setprecision(6);
  for (const auto* s : {&report.overall, &report.low, &report.high})
    os << s->name << ',' << s->population << ',' << s->baseline << ',' << s->patched << ',' << s->delta() << '\n';
  os << std::defaultfloat;
}

void write_predictions_tsv(const StratifiedReport& report, std::ostream& os) {
  os << "node_id\tdegree\tstratum\ttrue\tbaseline_pred\tpatched_pred\n";
  for (const auto& p : report.predictions)
    os << p.node << '\t' << p.degree << '\t' << p.stratum << '\t' << p.truth << '\t' << p.baseline << '\t' << p.patched
       << '\n';
}

std::vector<SweepRow> patch_count_sweep(const GCNModel& gnn, const Graph& g, const PatcherModel* patcher,
                                        std::span<const int> n_values, int threads) {
  if (n_values.empty()) return {};
  for (int n : n_values)
    if (n < 0) throw Error("patch_count_sweep: negative patch count");
  const int max_patch = *std::max_element(n_values.begin(), n_values.end());
  const auto chains = chain_predictions(gnn, g, patcher, max_patch, threads);
  std::vector<SweepRow> rows;
  for (int n : n_values) {
    const StratifiedReport r = summarize(label_strata(g, chains, n), n);
    rows.push_back({n, r.overall, r.low, r.high});
  }
  return rows;
}

void write_sweep_csv(std::span<const SweepRow> rows, std::ostream& os) {
  os << "n_patch,overall_acc,low_acc,high_acc\n" << std::fixed << std::setprecision(6);
  for (const auto& r : rows) os << r.n_patch << ',' << r.overall.patched << ',' << r.low.patched << ',' << r.high.patched << '\n';
  os << std::defaultfloat;
}

std::vector<VarianceRow> variance_study(const GCNModel& gnn, const Graph& g, NodeId anchor, double strength,
                                        std::span<const int> sample_counts, int draws, std::uint64_t seed,
                                        const PatcherModel* patcher, CorruptionDegrees degrees) {
  if (draws < 30) throw Error("variance_study: need at least 30 draws");
  if (!(strength >= 0.0 && strength <= 1.0)) throw Error("variance_study: strength must lie in [0, 1]");
  const RngStream root(seed, 0x7661'7200);
  const EgoGraph ego = ego_extract(g, anchor, kGcnLayers);
  const PatcherModel fresh = patcher == nullptr ? init_patcher(g.feature_dim(), 64, root.child(0)) : PatcherModel{};
  const PatcherModel& generator = patcher == nullptr ? fresh : *patcher;
  const EgoGraph corrupted = corrupt(ego, strength, root.child(1), degrees);
  const EgoGraph patched = add_patch_node(corrupted, generate_patch(generator, corrupted));

  std::vector<VarianceRow> rows;
  for (int samples : sample_counts) {
    if (samples < 1) throw Error("variance_study: L must be >= 1");
    const RngStream stream = root.child(2).child(static_cast<std::uint64_t>(samples));
    std::vector<double> losses;
    losses.reserve(static_cast<std::size_t>(draws));
    for (int d = 0; d < draws; ++d) {
      const auto targets = sample_targets(ego, strength, samples, stream.child(static_cast<std::uint64_t>(d)), degrees);
      losses.push_back(patch_step_loss(gnn, patched, targets).loss);
    }
    double mean = 0.0;
    for (double l : losses) mean += l;
    mean /= static_cast<double>(losses.size());
    double ss = 0.0;
    for (double l : losses) ss += (l - mean) * (l - mean);
    rows.push_back({samples, mean, std::sqrt(ss / static_cast<double>(losses.size() - 1))});
  }
  return rows;
}

void write_variance_csv(std::span<const VarianceRow> rows, std::ostream& os) {
  os << "L,mean_loss,std_loss\n" << std::setprecision(9);
  for (const auto& r : rows) os << r.samples << ',' << r.mean << ',' << r.std << '\n';
  os << std::defaultfloat;
}

}  // namespace gp
