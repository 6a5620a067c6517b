#include "graphpatch/propagation.hpp"

namespace gp {

AnchorPropagation anchor_propagation(const EgoGraph& ego) {
  const auto coefficients = normalized_adjacency(ego);
  const NodeId n = ego.num_nodes();

  // Row 0 of the coefficient list is the anchor's closed neighbourhood.
  std::vector<NodeId> rows;
  std::vector<float> anchor_weights;
  for (const auto& c : coefficients) {
    if (c.row != EgoGraph::anchor) break;
    rows.push_back(c.col);
    anchor_weights.push_back(c.value);
  }
  // Sorted by column, so the anchor's self-loop (column 0) comes first.

  std::vector<int> slot(n, -1);
  for (std::size_t i = 0; i < rows.size(); ++i) slot[rows[i]] = static_cast<int>(i);

  std::vector<Eigen::Triplet<float>> triplets;
  for (const auto& c : coefficients)
    if (slot[c.row] >= 0) triplets.emplace_back(slot[c.row], c.col, c.value);

  AnchorPropagation prop;
  prop.first_hop.resize(static_cast<Eigen::Index>(rows.size()), n);
  prop.first_hop.setFromTriplets(triplets.begin(), triplets.end());
  prop.anchor = Eigen::Map<const Eigen::RowVectorXf>(anchor_weights.data(), static_cast<Eigen::Index>(anchor_weights.size()));
  return prop;
}

TwoLayerTape two_layer_forward(const DenseLayer<float>& first, const DenseLayer<float>& second,
                               const AnchorPropagation& prop, const Matrix& features) {
  require_shape(features.rows() == prop.first_hop.cols(), "propagation/feature rows");
  TwoLayerTape tape;
  tape.aggregated_input = prop.first_hop * features;
  tape.pre_hidden = first.forward(tape.aggregated_input);
  tape.hidden = relu(tape.pre_hidden);
  tape.aggregated_hidden = prop.anchor * tape.hidden;
  tape.output = second.forward(tape.aggregated_hidden).row(0).transpose();
  return tape;
}

namespace {

template <bool kAccumulate, typename Layer>
Matrix backward_impl(Layer& first, Layer& second, const AnchorPropagation& prop, const TwoLayerTape& tape,
                     const Vector& grad_output) {
  require_shape(grad_output.size() == second.out_dim(), "two_layer_backward upstream");
  const Matrix grad_z = grad_output.transpose();
  Matrix grad_agg;
  if constexpr (kAccumulate)
    grad_agg = second.backward(tape.aggregated_hidden, grad_z);
  else
    grad_agg = second.backward_input(grad_z);
  Matrix grad_pre = prop.anchor.transpose() * grad_agg;
  grad_pre = grad_pre.cwiseProduct((tape.pre_hidden.array() > 0.0f).cast<float>().matrix());
  Matrix grad_input;
  if constexpr (kAccumulate)
    grad_input = first.backward(tape.aggregated_input, grad_pre);
  else
    grad_input = first.backward_input(grad_pre);
  return prop.first_hop.transpose() * grad_input;
}

}  // namespace

Matrix two_layer_backward(const DenseLayer<float>& first, const DenseLayer<float>& second,
                          const AnchorPropagation& prop, const TwoLayerTape& tape, const Vector& grad_output) {
  return backward_impl<false>(first, second, prop, tape, grad_output);
}

Matrix two_layer_backward_accumulate(DenseLayer<float>& first, DenseLayer<float>& second,
                                     const AnchorPropagation& prop, const TwoLayerTape& tape,
                                     const Vector& grad_output) {
  return backward_impl<true>(first, second, prop, tape, grad_output);
}

}  // namespace gp
