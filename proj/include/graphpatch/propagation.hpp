#pragma once

// Two-layer graph convolution evaluated only at an ego-graph's anchor. Only
// the anchor and its first-order neighbours need hidden states, so the first
// layer runs on those rows alone.

#include "graphpatch/graph.hpp"
#include "graphpatch/tensor.hpp"

namespace gp {

struct AnchorPropagation {
  SparseMatrix first_hop;      // rows of A_hat for {anchor} + neighbours, all n columns
  Eigen::RowVectorXf anchor;   // A_hat[anchor, S] over the same rows
};

AnchorPropagation anchor_propagation(const EgoGraph& ego);

struct TwoLayerTape {
  Matrix aggregated_input;  // A_S X
  Matrix pre_hidden;        // A_S X W1 + b1
  Matrix hidden;            // relu(pre_hidden)
  Matrix aggregated_hidden; // 1 x h, A[a,S] hidden
  Vector output;            // anchor pre-activation of layer 2
};

TwoLayerTape two_layer_forward(const DenseLayer<float>& first, const DenseLayer<float>& second,
                               const AnchorPropagation& prop, const Matrix& features);

/// dL/dX for every ego node given dL/d(output); parameters untouched.
Matrix two_layer_backward(const DenseLayer<float>& first, const DenseLayer<float>& second,
                          const AnchorPropagation& prop, const TwoLayerTape& tape, const Vector& grad_output);

/// As above, also accumulating parameter gradients into both layers.
Matrix two_layer_backward_accumulate(DenseLayer<float>& first, DenseLayer<float>& second,
                                     const AnchorPropagation& prop, const TwoLayerTape& tape,
                                     const Vector& grad_output);

}  // namespace gp
