#pragma once

// The frozen target classifier: a two-layer symmetric-normalized GCN.

#include "graphpatch/graph.hpp"
#include "graphpatch/propagation.hpp"
#include "graphpatch/rng.hpp"
#include "graphpatch/tensor.hpp"

#include <filesystem>
#include <vector>

namespace gp {

inline constexpr int kGcnLayers = 2;

struct GCNModel {
  DenseLayer<float> layer1;
  DenseLayer<float> layer2;

  Eigen::Index feature_dim() const { return layer1.in_dim(); }
  Eigen::Index hidden_dim() const { return layer1.out_dim(); }
  Eigen::Index num_classes() const { return layer2.out_dim(); }

  std::vector<Parameter<float>*> parameters() { return {&layer1.weight, &layer1.bias, &layer2.weight, &layer2.bias}; }
  std::vector<const Parameter<float>*> parameters() const {
    return {&layer1.weight, &layer1.bias, &layer2.weight, &layer2.bias};
  }
};

/// Glorot-uniform weights, zero biases.
GCNModel init_gcn(Eigen::Index feature_dim, Eigen::Index hidden, Eigen::Index classes, RngStream rng);

struct TrainConfig {
  int hidden = 128;
  double learning_rate = 0.01;
  double weight_decay = 5e-4;
  int epochs = 200;
  int patience = 50;
  double dropout = 0.5;
  std::uint64_t seed = 0;
};

struct GnnTrainResult {
  GCNModel model;
  std::vector<double> train_loss;
  std::vector<double> valid_loss;
  int best_epoch = -1;  // -1 when no epoch ran
};

/// Full-batch cross-entropy training on the train split; keeps the parameters
/// of the epoch with the lowest validation loss.
GnnTrainResult train_gnn(const Graph& g, const TrainConfig& cfg);

/// Per-node class distributions in inference mode.
Matrix gcn_forward(const GCNModel& model, const Graph& g);
Matrix gcn_forward(const GCNModel& model, const EgoGraph& ego);

struct AnchorForward {
  AnchorPropagation prop;
  TwoLayerTape tape;
  Vector probs;
};

AnchorForward gcn_anchor_forward(const GCNModel& model, const EgoGraph& ego);

/// Anchor class distribution of `ego`.
Vector anchor_distribution(const GCNModel& model, const EgoGraph& ego);

/// Gradient of a scalar loss w.r.t. every ego node's input features, given the
/// loss gradient w.r.t. the anchor's class distribution.
Matrix input_feature_grad(const GCNModel& model, const EgoGraph& ego, const Vector& upstream);
Matrix input_feature_grad(const GCNModel& model, const AnchorForward& forward, const Vector& upstream);

/// Index of the largest entry; ties go to the lowest index.
int argmax(const Eigen::Ref<const Vector>& v);

}  // namespace gp
