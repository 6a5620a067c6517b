#include "graphpatch/gcn.hpp"

#include <iostream>
#include <limits>

namespace gp {

namespace {

void glorot(Parameter<float>& p, RngStream& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(p.value.rows() + p.value.cols()));
  for (Eigen::Index i = 0; i < p.value.size(); ++i)
    p.value.data()[i] = static_cast<float>((2.0 * rng.uniform() - 1.0) * bound);
}

struct FullForward {
  Matrix aggregated_input;  // A X
  Matrix pre_hidden;
  Matrix hidden;            // after relu and (training only) dropout
  Matrix dropout_mask;      // empty in inference mode
  Matrix aggregated_hidden; // A H
  Matrix logits;
};

FullForward full_forward(const GCNModel& model, const SparseMatrix& adj, const Matrix& x, double dropout,
                         RngStream* rng) {
  require_shape(x.cols() == model.feature_dim(), "gcn feature width");
  FullForward f;
  f.aggregated_input = adj * x;
  f.pre_hidden = model.layer1.forward(f.aggregated_input);
  f.hidden = relu(f.pre_hidden);
  if (rng != nullptr && dropout > 0.0) {
    const float keep_scale = static_cast<float>(1.0 / (1.0 - dropout));
    f.dropout_mask.resize(f.hidden.rows(), f.hidden.cols());
    for (Eigen::Index i = 0; i < f.dropout_mask.size(); ++i)
      f.dropout_mask.data()[i] = rng->uniform() < dropout ? 0.0f : keep_scale;
    f.hidden = f.hidden.cwiseProduct(f.dropout_mask);
  }
  f.aggregated_hidden = adj * f.hidden;
  f.logits = model.layer2.forward(f.aggregated_hidden);
  return f;
}

Matrix rows_of(const Matrix& m, std::span<const NodeId> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

std::vector<int> labels_of(const Graph& g, std::span<const NodeId> nodes, const char* split) {
  std::vector<int> out;
  out.reserve(nodes.size());
  for (NodeId v : nodes) {
    if (g.labels()[v] == kUnlabeled) throw Error(std::string("train_gnn: unlabeled node in ") + split + " split");
    out.push_back(g.labels()[v]);
  }
  return out;
}

}  // namespace

GCNModel init_gcn(Eigen::Index feature_dim, Eigen::Index hidden, Eigen::Index classes, RngStream rng) {
  GCNModel m{DenseLayer<float>("layer1", feature_dim, hidden), DenseLayer<float>("layer2", hidden, classes)};
  glorot(m.layer1.weight, rng);
  glorot(m.layer2.weight, rng);
  return m;
}

GnnTrainResult train_gnn(const Graph& g, const TrainConfig& cfg) {
  const auto& train = g.splits().train;
  const auto& valid = g.splits().valid;
  if (train.empty()) throw Error("train_gnn: empty train split");
  if (valid.empty()) throw Error("train_gnn: empty validation split");
  if (cfg.hidden < 1 || cfg.learning_rate <= 0 || cfg.patience < 1 || cfg.epochs < 0 || cfg.dropout < 0 ||
      cfg.dropout >= 1)
    throw Error("train_gnn: invalid configuration");
  const auto train_labels = labels_of(g, train, "train");
  const auto valid_labels = labels_of(g, valid, "valid");
  if (std::adjacent_find(train_labels.begin(), train_labels.end(), std::not_equal_to<>()) == train_labels.end())
    std::cerr << "warning: train split contains a single class\n";

  const RngStream root(cfg.seed, 0x6763'6e00);
  GnnTrainResult result;
  result.model = init_gcn(g.feature_dim(), cfg.hidden, std::max(g.num_classes(), 1), root.child(0));
  GCNModel best = result.model;
  const SparseMatrix adj = to_sparse(normalized_adjacency(g), g.num_nodes());

  AdamW<float> optimizer({cfg.learning_rate, cfg.weight_decay});
  auto params = result.model.parameters();
  double best_valid = std::numeric_limits<double>::infinity();
  int since_best = 0;
  RngStream dropout_rng = root.child(1);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (auto* p : params) p->zero_grad();
    const FullForward f = full_forward(result.model, adj, g.features(), cfg.dropout, &dropout_rng);
    const auto ce = cross_entropy<float>(rows_of(f.logits, train), train_labels);

    Matrix grad_logits = Matrix::Zero(f.logits.rows(), f.logits.cols());
    for (std::size_t i = 0; i < train.size(); ++i) grad_logits.row(train[i]) = ce.grad.row(static_cast<Eigen::Index>(i));
    const Matrix grad_agg_hidden = result.model.layer2.backward(f.aggregated_hidden, grad_logits);
    Matrix grad_hidden = adj.transpose() * grad_agg_hidden;
    if (f.dropout_mask.size() > 0) grad_hidden = grad_hidden.cwiseProduct(f.dropout_mask);
    const Matrix grad_pre = grad_hidden.cwiseProduct((f.pre_hidden.array() > 0.0f).cast<float>().matrix());
    result.model.layer1.backward(f.aggregated_input, grad_pre);
    optimizer.step(params);

    const FullForward eval = full_forward(result.model, adj, g.features(), 0.0, nullptr);
    const double valid_loss = cross_entropy<float>(rows_of(eval.logits, valid), valid_labels).loss;
    result.train_loss.push_back(ce.loss);
    result.valid_loss.push_back(valid_loss);
    if (!std::isfinite(ce.loss) || !std::isfinite(valid_loss)) throw Error("train_gnn: non-finite loss");
    if (valid_loss < best_valid) {
      best_valid = valid_loss;
      best = result.model;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  result.model = std::move(best);
  for (auto* p : result.model.parameters()) p->zero_grad();
  return result;
}

Matrix gcn_forward(const GCNModel& model, const Graph& g) {
  const SparseMatrix adj = to_sparse(normalized_adjacency(g), g.num_nodes());
  return softmax_rows(full_forward(model, adj, g.features(), 0.0, nullptr).logits);
}

Matrix gcn_forward(const GCNModel& model, const EgoGraph& ego) {
  const SparseMatrix adj = to_sparse(normalized_adjacency(ego), ego.num_nodes());
  return softmax_rows(full_forward(model, adj, ego.features, 0.0, nullptr).logits);
}

AnchorForward gcn_anchor_forward(const GCNModel& model, const EgoGraph& ego) {
  require_shape(ego.features.cols() == model.feature_dim(), "gcn feature width");
  AnchorForward f;
  f.prop = anchor_propagation(ego);
  f.tape = two_layer_forward(model.layer1, model.layer2, f.prop, ego.features);
  f.probs = softmax_rows<float>(f.tape.output.transpose()).row(0).transpose();
  return f;
}

Vector anchor_distribution(const GCNModel& model, const EgoGraph& ego) {
  return gcn_anchor_forward(model, ego).probs;
}

Matrix input_feature_grad(const GCNModel& model, const AnchorForward& forward, const Vector& upstream) {
  require_shape(upstream.size() == model.num_classes(), "input_feature_grad upstream");
  const Vector grad_logits = softmax_backward(forward.probs, upstream);
  return two_layer_backward(model.layer1, model.layer2, forward.prop, forward.tape, grad_logits);
}

Matrix input_feature_grad(const GCNModel& model, const EgoGraph& ego, const Vector& upstream) {
  return input_feature_grad(model, gcn_anchor_forward(model, ego), upstream);
}

int argmax(const Eigen::Ref<const Vector>& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = static_cast<int>(i);
  return best;
}

}  // namespace gp
