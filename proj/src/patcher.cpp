#include "graphpatch/patcher.hpp"

#include "graphpatch/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

namespace gp {

namespace {

void glorot(Parameter<float>& p, RngStream& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(p.value.rows() + p.value.cols()));
  for (Eigen::Index i = 0; i < p.value.size(); ++i)
    p.value.data()[i] = static_cast<float>((2.0 * rng.uniform() - 1.0) * bound);
}

Matrix relu_mask(const Matrix& pre) { return (pre.array() > 0.0f).cast<float>().matrix(); }

LossAndFeatureGrad kl_to_targets(const GCNModel& gnn, const EgoGraph& patched, std::span<const Vector> targets,
                                 bool need_grad) {
  if (targets.empty()) throw Error("patch loss: no targets");
  const AnchorForward forward = gcn_anchor_forward(gnn, patched);
  LossAndFeatureGrad out;
  Vector upstream = Vector::Zero(forward.probs.size());
  const double weight = 1.0 / static_cast<double>(targets.size());
  for (const auto& target : targets) {
    require_shape(target.size() == forward.probs.size(), "patch loss class count");
    out.loss += weight * kl_div(target, forward.probs);
    if (need_grad) upstream += static_cast<float>(weight) * kl_div_grad(target, forward.probs);
  }
  if (need_grad) out.feature_grad = input_feature_grad(gnn, forward, upstream);
  return out;
}

std::vector<Vector> anchor_distributions(const GCNModel& gnn, std::span<const EgoGraph> graphs) {
  std::vector<Vector> out;
  out.reserve(graphs.size());
  for (const auto& g : graphs) {
    require_shape(g.features.cols() == gnn.feature_dim(), "patch loss feature width");
    out.push_back(anchor_distribution(gnn, g));
  }
  return out;
}

void add_grads(PatcherModel& into, const PatcherModel& from, float scale) {
  auto dst = into.parameters();
  auto src = from.parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->grad += scale * src[i]->grad;
}

}  // namespace

PatcherModel init_patcher(Eigen::Index feature_dim, Eigen::Index hidden, RngStream rng) {
  if (feature_dim < 1 || hidden < 1) throw Error("init_patcher: dimensions must be positive");
  PatcherModel m{DenseLayer<float>("encoder1", feature_dim, hidden), DenseLayer<float>("encoder2", hidden, hidden),
                 DenseLayer<float>("head1", hidden, hidden), DenseLayer<float>("head2", hidden, feature_dim)};
  for (auto* layer : {&m.encoder1, &m.encoder2, &m.head1, &m.head2}) glorot(layer->weight, rng);
  return m;
}

PatchTape generate_patch_tape(const PatcherModel& patcher, const EgoGraph& ego) {
  require_shape(ego.features.cols() == patcher.feature_dim(), "generate_patch feature width");
  PatchTape tape;
  tape.prop = anchor_propagation(ego);
  tape.encoder = two_layer_forward(patcher.encoder1, patcher.encoder2, tape.prop, ego.features);
  tape.embedding = relu(tape.encoder.output.transpose());
  tape.head_pre = patcher.head1.forward(tape.embedding);
  tape.head_hidden = relu(tape.head_pre);
  tape.feature = patcher.head2.forward(tape.head_hidden).row(0).transpose();
  return tape;
}

Vector generate_patch(const PatcherModel& patcher, const EgoGraph& ego) {
  return generate_patch_tape(patcher, ego).feature;
}

Matrix backward_patch(PatcherModel& patcher, const PatchTape& tape, const Vector& grad_feature) {
  require_shape(grad_feature.size() == patcher.feature_dim(), "backward_patch upstream");
  Matrix grad_hidden = patcher.head2.backward(tape.head_hidden, grad_feature.transpose());
  grad_hidden = grad_hidden.cwiseProduct(relu_mask(tape.head_pre));
  Matrix grad_embedding = patcher.head1.backward(tape.embedding, grad_hidden);
  grad_embedding = grad_embedding.cwiseProduct(relu_mask(tape.encoder.output.transpose()));
  return two_layer_backward_accumulate(patcher.encoder1, patcher.encoder2, tape.prop, tape.encoder,
                                       grad_embedding.row(0).transpose());
}

EgoGraph iterative_patch(const PatcherModel& patcher, const EgoGraph& ego, int n) {
  if (n < 0) throw Error("iterative_patch: negative patch count");
  EgoGraph out = ego;
  for (int i = 0; i < n; ++i) out = add_patch_node(out, generate_patch(patcher, out));
  return out;
}

LossAndFeatureGrad patch_step_loss(const GCNModel& gnn, const EgoGraph& patched, std::span<const EgoGraph> targets) {
  const auto dists = anchor_distributions(gnn, targets);
  return kl_to_targets(gnn, patched, dists, true);
}

LossAndFeatureGrad recon_loss(const GCNModel& gnn, const EgoGraph& fully_patched, const EgoGraph& original) {
  return patch_step_loss(gnn, fully_patched, std::span<const EgoGraph>(&original, 1));
}

AnchorSet parse_anchor_set(const std::string& name) {
  if (name == "train") return AnchorSet::kTrain;
  if (name == "train+valid") return AnchorSet::kTrainValid;
  if (name == "all") return AnchorSet::kAll;
  throw Error("unknown anchor set '" + name + "' (expected train, train+valid or all)");
}

std::string to_string(AnchorSet set) {
  switch (set) {
    case AnchorSet::kTrain: return "train";
    case AnchorSet::kTrainValid: return "train+valid";
    case AnchorSet::kAll: return "all";
  }
  return "train";
}

ChainLoss anchor_chain_loss(const GCNModel& gnn, const PatcherModel& patcher, const EgoGraph& ego,
                            const CorruptionSchedule& schedule, const PatchTrainConfig& cfg, const RngStream& rng,
                            PatcherModel* grad_sink) {
  const std::size_t steps = schedule.size();
  if (steps == 0) throw Error("anchor_chain_loss: empty schedule");
  const bool need_grad = grad_sink != nullptr;

  // chain[m] holds m patch nodes; patch j (1-based) sits at row base + j - 1.
  std::vector<EgoGraph> chain;
  chain.reserve(steps + 1);
  chain.push_back(corrupt(ego, schedule.strengths[0], rng.child(0), cfg.corruption_degrees));
  const auto base = static_cast<Eigen::Index>(chain[0].num_nodes());
  std::vector<PatchTape> tapes;
  tapes.reserve(steps);
  std::vector<Vector> grad_patch(steps, Vector::Zero(ego.features.cols()));

  ChainLoss out;
  const Vector original = anchor_distribution(gnn, ego);
  for (std::size_t m = 1; m <= steps; ++m) {
    tapes.push_back(generate_patch_tape(patcher, chain[m - 1]));
    chain.push_back(add_patch_node(chain[m - 1], tapes.back().feature));
    LossAndFeatureGrad step;
    if (m < steps) {
      const auto targets = sample_targets(ego, schedule.strengths[m], cfg.samples, rng.child(m), cfg.corruption_degrees);
      step = kl_to_targets(gnn, chain[m], anchor_distributions(gnn, targets), need_grad);
      out.patch += step.loss;
      out.step_kl.push_back(step.loss);
    } else {
      step = kl_to_targets(gnn, chain[m], std::span<const Vector>(&original, 1), need_grad);
      out.recon = step.loss;
    }
    if (!std::isfinite(step.loss)) throw Error("anchor_chain_loss: non-finite loss");
    if (!need_grad) continue;
    if (cfg.detach_steps) {
      grad_patch[m - 1] += step.feature_grad.row(base + static_cast<Eigen::Index>(m) - 1).transpose();
    } else {
      for (std::size_t j = 1; j <= m; ++j)
        grad_patch[j - 1] += step.feature_grad.row(base + static_cast<Eigen::Index>(j) - 1).transpose();
    }
  }

  if (need_grad) {
    for (std::size_t m = steps; m >= 1; --m) {
      const Matrix grad_input = backward_patch(*grad_sink, tapes[m - 1], grad_patch[m - 1]);
      if (!cfg.detach_steps)
        for (std::size_t j = 1; j < m; ++j)
          grad_patch[j - 1] += grad_input.row(base + static_cast<Eigen::Index>(j) - 1).transpose();
    }
  }
  return out;
}

std::vector<NodeId> select_anchors(const Graph& g, AnchorSet set) {
  std::vector<NodeId> out;
  switch (set) {
    case AnchorSet::kTrain:
      out = g.splits().train;
      break;
    case AnchorSet::kTrainValid:
      out = g.splits().train;
      out.insert(out.end(), g.splits().valid.begin(), g.splits().valid.end());
      break;
    case AnchorSet::kAll:
      out.resize(static_cast<std::size_t>(g.num_nodes()));
      for (NodeId v = 0; v < g.num_nodes(); ++v) out[static_cast<std::size_t>(v)] = v;
      break;
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

template <typename Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < count; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  pool.clear();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void shuffle(std::vector<NodeId>& v, RngStream rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.uniform_below(i)]);
}

}  // namespace

PatchTrainResult train_patcher(const GCNModel& gnn, const Graph& g, const PatchTrainConfig& cfg) {
  if (cfg.samples < 1 || cfg.batch_size < 1 || cfg.accumulation < 1 || cfg.patience < 1 || cfg.max_epochs < 0 ||
      cfg.learning_rate <= 0 || cfg.hidden < 1 || cfg.validation_fraction < 0 || cfg.validation_fraction >= 1)
    throw Error("train_patcher: invalid configuration");
  require_shape(gnn.feature_dim() == g.feature_dim(), "train_patcher: gnn/dataset feature width");

  std::vector<NodeId> anchors = select_anchors(g, cfg.anchors);
  if (anchors.empty()) throw Error("train_patcher: empty anchor set");
  const std::string frozen = parameter_checksum(gnn);

  const RngStream root(cfg.seed, 0x7061'7463'6800);
  PatchTrainResult result;
  result.schedule = build_schedule(cfg.strength, cfg.steps);

  shuffle(anchors, root.child(0));
  std::size_t n_valid = 0;
  if (anchors.size() >= 2)
    n_valid = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(cfg.validation_fraction * anchors.size())));
  if (cfg.validation_fraction == 0.0) n_valid = 0;
  std::vector<NodeId> valid(anchors.begin(), anchors.begin() + static_cast<std::ptrdiff_t>(n_valid));
  std::vector<NodeId> train(anchors.begin() + static_cast<std::ptrdiff_t>(n_valid), anchors.end());
  std::sort(valid.begin(), valid.end());
  std::sort(train.begin(), train.end());
  result.train_anchors = train.size();
  result.valid_anchors = valid.size();
  // Without held-out anchors, early stopping watches the training anchors.
  const std::vector<NodeId>& monitor = valid.empty() ? train : valid;

  std::vector<EgoGraph> egos(static_cast<std::size_t>(g.num_nodes()));
  for (NodeId v : anchors) egos[static_cast<std::size_t>(v)] = ego_extract(g, v, kGcnLayers);

  PatcherModel model = init_patcher(g.feature_dim(), cfg.hidden, root.child(1));
  auto params = model.parameters();
  AdamW<float> optimizer({cfg.learning_rate, cfg.weight_decay});

  const RngStream valid_rng = root.child(2);
  auto monitor_loss = [&](const PatcherModel& m) {
    std::vector<double> losses(monitor.size());
    parallel_for(monitor.size(), cfg.threads, [&](std::size_t i) {
      const NodeId v = monitor[i];
      losses[i] = anchor_chain_loss(gnn, m, egos[static_cast<std::size_t>(v)], result.schedule, cfg,
                                    valid_rng.child(static_cast<std::uint64_t>(v)), nullptr)
                      .total();
    });
    double sum = 0.0;
    for (double l : losses) sum += l;
    return sum / static_cast<double>(losses.size());
  };

  result.initial_valid_loss = monitor_loss(model);
  double best_loss = result.initial_valid_loss;
  PatcherModel best = model;
  int since_best = 0;

  model.zero_grad();
  int accumulated = 0;
  auto apply_update = [&] {
    if (accumulated == 0) return;
    for (auto* p : params) p->grad /= static_cast<float>(accumulated);
    optimizer.step(params);
    model.zero_grad();
    accumulated = 0;
  };

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::vector<NodeId> order = train;
    shuffle(order, root.child(3).child(static_cast<std::uint64_t>(epoch)));
    const RngStream epoch_rng = root.child(4).child(static_cast<std::uint64_t>(epoch));

    LossReport report;
    report.epoch = epoch;
    report.step_kl.assign(result.schedule.size() - 1, 0.0);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::size_t batch = stop - start;
      std::vector<PatcherModel> sinks(batch);
      std::vector<ChainLoss> losses(batch);
      parallel_for(batch, cfg.threads, [&](std::size_t i) {
        const NodeId v = order[start + i];
        sinks[i] = model;
        sinks[i].zero_grad();
        losses[i] = anchor_chain_loss(gnn, model, egos[static_cast<std::size_t>(v)], result.schedule, cfg,
                                      epoch_rng.child(static_cast<std::uint64_t>(v)), &sinks[i]);
      });
      for (std::size_t i = 0; i < batch; ++i) {
        add_grads(model, sinks[i], 1.0f / static_cast<float>(batch));
        report.patch_loss += losses[i].patch;
        report.recon_loss += losses[i].recon;
        for (std::size_t s = 0; s < losses[i].step_kl.size(); ++s) report.step_kl[s] += losses[i].step_kl[s];
      }
      if (++accumulated == cfg.accumulation) apply_update();
    }
    apply_update();

    const double denom = static_cast<double>(std::max<std::size_t>(1, order.size()));
    report.patch_loss /= denom;
    report.recon_loss /= denom;
    for (double& s : report.step_kl) s /= denom;
    report.valid_loss = monitor_loss(model);
    if (!std::isfinite(report.patch_loss) || !std::isfinite(report.recon_loss) || !std::isfinite(report.valid_loss)) {
      std::ostringstream msg;
      msg << "train_patcher: non-finite loss at epoch " << epoch << " (patch " << report.patch_loss << ", recon "
          << report.recon_loss << ", valid " << report.valid_loss << ")";
      throw Error(msg.str());
    }
    result.history.push_back(report);

    if (report.valid_loss < best_loss) {
      best_loss = report.valid_loss;
      best = model;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }

  if (parameter_checksum(gnn) != frozen) throw Error("train_patcher: target GCN parameters changed");
  best.zero_grad();
  result.model = std::move(best);
  return result;
}

}  // namespace gp
