#pragma once

#include "graphpatch/gcn.hpp"
#include "graphpatch/graph.hpp"
#include "graphpatch/patcher.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace gp {

struct StratumAccuracy {
  std::string name;
  std::size_t population = 0;
  double baseline = 0.0;
  double patched = 0.0;
  double delta() const { return patched - baseline; }
};

struct NodePrediction {
  NodeId node = 0;
  int degree = 0;
  std::string stratum;
  int truth = 0;
  int baseline = 0;
  int patched = 0;
};

struct StratifiedReport {
  StratumAccuracy overall;
  StratumAccuracy low;
  StratumAccuracy high;
  int n_patch = 0;
  std::uint64_t seed = 0;
  std::vector<NodePrediction> predictions;  // test nodes in ascending id order
};

/// Baseline and patched test accuracy, overall and over the lower/upper
/// degree thirds of the test split (degrees from the unmodified graph).
StratifiedReport evaluate(const GCNModel& gnn, const Graph& g, const PatcherModel* patcher, int n_patch,
                          int threads = 1);

/// Recomputes the three strata accuracies from a prediction dump.
StratifiedReport summarize(std::vector<NodePrediction> predictions, int n_patch);

void write_report_csv(const StratifiedReport& report, std::ostream& os);
void write_predictions_tsv(const StratifiedReport& report, std::ostream& os);

struct SweepRow {
  int n_patch = 0;
  StratumAccuracy overall;
  StratumAccuracy low;
  StratumAccuracy high;
};

/// evaluate() at each requested patch count, in the given order.
std::vector<SweepRow> patch_count_sweep(const GCNModel& gnn, const Graph& g, const PatcherModel* patcher,
                                        std::span<const int> n_values, int threads = 1);
void write_sweep_csv(std::span<const SweepRow> rows, std::ostream& os);

struct VarianceRow {
  int samples = 0;
  double mean = 0.0;
  double std = 0.0;
};

/// Sample std of patch_step_loss over `draws` fresh target sets for each L,
/// around one fixed patched graph: the anchor's ego corrupted at `strength`
/// plus one node from `patcher` (or a freshly initialised one).
std::vector<VarianceRow> variance_study(const GCNModel& gnn, const Graph& g, NodeId anchor, double strength,
                                        std::span<const int> sample_counts, int draws, std::uint64_t seed,
                                        const PatcherModel* patcher = nullptr,
                                        CorruptionDegrees degrees = CorruptionDegrees::kSource);
void write_variance_csv(std::span<const VarianceRow> rows, std::ostream& os);

}  // namespace gp
