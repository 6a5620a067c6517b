#pragma once

// Patch-node generator: a two-layer GCN encoder over the (partially patched)
// ego-graph followed by an MLP head that turns the anchor embedding into the
// feature vector of the next virtual neighbour. Trained against a frozen GCN
// by matching its anchor predictions on progressively less corrupted
// ego-graphs.

#include "graphpatch/corruption.hpp"
#include "graphpatch/gcn.hpp"
#include "graphpatch/graph.hpp"
#include "graphpatch/propagation.hpp"
#include "graphpatch/rng.hpp"
#include "graphpatch/tensor.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gp {

struct PatcherModel {
  DenseLayer<float> encoder1;  // d -> h
  DenseLayer<float> encoder2;  // h -> h
  DenseLayer<float> head1;     // h -> h
  DenseLayer<float> head2;     // h -> d, linear output

  Eigen::Index feature_dim() const { return encoder1.in_dim(); }
  Eigen::Index hidden_dim() const { return encoder1.out_dim(); }

  std::vector<Parameter<float>*> parameters() {
    return {&encoder1.weight, &encoder1.bias, &encoder2.weight, &encoder2.bias,
            &head1.weight,    &head1.bias,    &head2.weight,    &head2.bias};
  }
  std::vector<const Parameter<float>*> parameters() const {
    return {&encoder1.weight, &encoder1.bias, &encoder2.weight, &encoder2.bias,
            &head1.weight,    &head1.bias,    &head2.weight,    &head2.bias};
  }
  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }
};

PatcherModel init_patcher(Eigen::Index feature_dim, Eigen::Index hidden, RngStream rng);

/// Everything generate_patch computed, kept for the backward pass.
struct PatchTape {
  AnchorPropagation prop;
  TwoLayerTape encoder;
  Matrix embedding;     // 1 x h, relu(encoder output)
  Matrix head_pre;      // 1 x h
  Matrix head_hidden;   // 1 x h
  Vector feature;       // generated x_p
};

PatchTape generate_patch_tape(const PatcherModel& patcher, const EgoGraph& ego);
Vector generate_patch(const PatcherModel& patcher, const EgoGraph& ego);

/// Accumulates parameter gradients for dL/dx_p = `grad_feature` and returns
/// dL/dX over the input ego-graph's nodes.
Matrix backward_patch(PatcherModel& patcher, const PatchTape& tape, const Vector& grad_feature);

/// Appends `n` generated patch nodes one at a time.
EgoGraph iterative_patch(const PatcherModel& patcher, const EgoGraph& ego, int n);

struct LossAndFeatureGrad {
  double loss = 0.0;
  Matrix feature_grad;  // dL/d features of the patched graph
};

/// Mean over targets of KL(gnn(target)[anchor] || gnn(patched)[anchor]).
LossAndFeatureGrad patch_step_loss(const GCNModel& gnn, const EgoGraph& patched, std::span<const EgoGraph> targets);
/// KL(gnn(original)[anchor] || gnn(fully_patched)[anchor]).
LossAndFeatureGrad recon_loss(const GCNModel& gnn, const EgoGraph& fully_patched, const EgoGraph& original);

enum class AnchorSet { kTrain, kTrainValid, kAll };

AnchorSet parse_anchor_set(const std::string& name);
std::string to_string(AnchorSet set);

struct PatchTrainConfig {
  double strength = 0.3;
  std::optional<int> steps;
  int samples = 10;
  int batch_size = 64;
  int accumulation = 16;
  double learning_rate = 1e-4;
  double weight_decay = 1e-5;
  int patience = 2;
  int max_epochs = 100;
  int hidden = 128;
  std::uint64_t seed = 0;
  AnchorSet anchors = AnchorSet::kTrain;
  bool detach_steps = false;
  double validation_fraction = 0.1;
  int threads = 1;
  CorruptionDegrees corruption_degrees = CorruptionDegrees::kSource;
};

struct ChainLoss {
  double patch = 0.0;           // sum of the M-1 intermediate step losses
  double recon = 0.0;
  std::vector<double> step_kl;  // per intermediate step
  double total() const { return patch + recon; }
};

/// Runs one anchor's patch chain over `schedule` and, when `grad_sink` is set,
/// accumulates d(total)/d(phi) into its parameter gradients.
ChainLoss anchor_chain_loss(const GCNModel& gnn, const PatcherModel& patcher, const EgoGraph& ego,
                            const CorruptionSchedule& schedule, const PatchTrainConfig& cfg, const RngStream& rng,
                            PatcherModel* grad_sink);

struct LossReport {
  int epoch = 0;
  double patch_loss = 0.0;  // mean over training anchors
  double recon_loss = 0.0;
  double valid_loss = 0.0;  // mean total loss over held-out anchors
  std::vector<double> step_kl;
};

struct PatchTrainResult {
  PatcherModel model;
  CorruptionSchedule schedule;
  std::vector<LossReport> history;
  double initial_valid_loss = 0.0;
  int best_epoch = -1;
  std::size_t train_anchors = 0;
  std::size_t valid_anchors = 0;
};

std::vector<NodeId> select_anchors(const Graph& g, AnchorSet set);

/// Trains the patcher against a frozen GCN; throws if the GCN parameters change.
PatchTrainResult train_patcher(const GCNModel& gnn, const Graph& g, const PatchTrainConfig& cfg);

}  // namespace gp
