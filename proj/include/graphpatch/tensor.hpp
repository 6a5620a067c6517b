#pragma once

// Dense numerical kernels shared by the target GCN and the patcher: row-major
// matrices, activations, losses with analytic gradients, AdamW and a
// central-difference gradient checker.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gp {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = Mat<float>;
using Vector = Vec<float>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

inline constexpr double kKlEpsilon = 1e-8;

inline void require_shape(bool ok, const char* what) {
  if (!ok) throw ShapeError(std::string("shape mismatch: ") + what);
}

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
  if (!m.allFinite()) throw Error(std::string("non-finite input: ") + what);
}

template <typename Scalar>
Mat<Scalar> matmul(const Mat<Scalar>& a, const Mat<Scalar>& b) {
  require_shape(a.cols() == b.rows(), "matmul");
  return a * b;
}

template <typename Derived>
auto relu(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return x.cwiseMax(Scalar(0)).eval();
}

/// Row-wise softmax with max subtraction; row sums are accumulated in double.
template <typename Scalar>
Mat<Scalar> softmax_rows(const Mat<Scalar>& x) {
  Mat<Scalar> out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Scalar top = x.row(r).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double e = std::exp(static_cast<double>(x(r, c) - top));
      out(r, c) = static_cast<Scalar>(e);
      sum += e;
    }
    out.row(r) /= static_cast<Scalar>(sum);
  }
  return out;
}

/// Backprop through a softmax row: given p = softmax(z) and dL/dp, returns dL/dz.
template <typename Scalar>
Vec<Scalar> softmax_backward(const Vec<Scalar>& p, const Vec<Scalar>& grad_p) {
  require_shape(p.size() == grad_p.size(), "softmax_backward");
  double dot = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) dot += static_cast<double>(p[i]) * grad_p[i];
  Vec<Scalar> out(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i)
    out[i] = static_cast<Scalar>(p[i] * (grad_p[i] - dot));
  return out;
}

/// Regularized KL divergence sum_c (t_c+eps) * (log(t_c+eps) - log(p_c+eps)).
template <typename Scalar>
double kl_div(const Vec<Scalar>& target, const Vec<Scalar>& pred, double eps = kKlEpsilon) {
  require_shape(target.size() == pred.size(), "kl_div");
  require_finite(target, "kl_div target");
  require_finite(pred, "kl_div pred");
  double sum = 0.0;
  for (Eigen::Index c = 0; c < target.size(); ++c) {
    const double t = static_cast<double>(target[c]) + eps;
    const double p = static_cast<double>(pred[c]) + eps;
    sum += t * (std::log(t) - std::log(p));
  }
  return sum;
}

/// d kl_div / d pred = -(t+eps)/(p+eps) per coordinate.
template <typename Scalar>
Vec<Scalar> kl_div_grad(const Vec<Scalar>& target, const Vec<Scalar>& pred,
                        double eps = kKlEpsilon) {
  require_shape(target.size() == pred.size(), "kl_div_grad");
  Vec<Scalar> g(pred.size());
  for (Eigen::Index c = 0; c < pred.size(); ++c)
    g[c] = static_cast<Scalar>(-(static_cast<double>(target[c]) + eps) /
                               (static_cast<double>(pred[c]) + eps));
  return g;
}

template <typename Scalar>
struct LossWithGrad {
  double loss = 0.0;
  Mat<Scalar> grad;
};

/// Mean cross-entropy of `logits` rows against class indices; grad = (softmax - onehot)/batch.
template <typename Scalar>
LossWithGrad<Scalar> cross_entropy(const Mat<Scalar>& logits, std::span<const int> labels) {
  require_shape(static_cast<Eigen::Index>(labels.size()) == logits.rows(), "cross_entropy");
  const auto classes = logits.cols();
  for (int y : labels)
    if (y < 0 || y >= classes) throw Error("cross_entropy: label out of range");
  LossWithGrad<Scalar> out;
  out.grad = softmax_rows(logits);
  const auto batch = static_cast<double>(labels.size());
  double total = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const Scalar top = logits.row(r).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index c = 0; c < classes; ++c) sum += std::exp(static_cast<double>(logits(r, c) - top));
    total += std::log(sum) - static_cast<double>(logits(r, labels[r]) - top);
    out.grad(r, labels[r]) -= Scalar(1);
  }
  out.grad /= static_cast<Scalar>(batch);
  out.loss = batch > 0 ? total / batch : 0.0;
  return out;
}

/// A named parameter block with a gradient accumulator of identical shape.
template <typename Scalar>
struct Parameter {
  std::string name;
  Mat<Scalar> value;
  Mat<Scalar> grad;

  Parameter() = default;
  Parameter(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Mat<Scalar>::Zero(rows, cols)), grad(Mat<Scalar>::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Affine map x W + b, with W stored d_in x d_out.
template <typename Scalar>
struct DenseLayer {
  Parameter<Scalar> weight;
  Parameter<Scalar> bias;

  DenseLayer() = default;
  DenseLayer(const std::string& name, Eigen::Index in, Eigen::Index out)
      : weight(name + ".weight", in, out), bias(name + ".bias", 1, out) {}

  Eigen::Index in_dim() const { return weight.value.rows(); }
  Eigen::Index out_dim() const { return weight.value.cols(); }

  Mat<Scalar> forward(const Mat<Scalar>& x) const {
    require_shape(x.cols() == in_dim(), "dense forward");
    Mat<Scalar> y = x * weight.value;
    y.rowwise() += bias.value.row(0);
    return y;
  }

  /// Accumulates parameter gradients for y = x W + b and returns dL/dx.
  Mat<Scalar> backward(const Mat<Scalar>& x, const Mat<Scalar>& grad_y) {
    require_shape(grad_y.cols() == out_dim() && grad_y.rows() == x.rows(), "dense backward");
    weight.grad.noalias() += x.transpose() * grad_y;
    bias.grad.row(0) += grad_y.colwise().sum();
    return grad_y * weight.value.transpose();
  }

  /// dL/dx only; parameters stay untouched.
  Mat<Scalar> backward_input(const Mat<Scalar>& grad_y) const {
    require_shape(grad_y.cols() == out_dim(), "dense backward_input");
    return grad_y * weight.value.transpose();
  }

  std::vector<Parameter<Scalar>*> parameters() { return {&weight, &bias}; }
  std::vector<const Parameter<Scalar>*> parameters() const { return {&weight, &bias}; }
};

struct AdamWConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// AdamW with decoupled weight decay and bias-corrected moments. Moments are
/// created lazily on the first step and keyed by parameter position.
template <typename Scalar>
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  const AdamWConfig& config() const { return config_; }
  std::int64_t steps() const { return step_; }

  void step(std::span<Parameter<Scalar>* const> params) {
    if (first_.empty()) {
      for (const auto* p : params) {
        first_.push_back(Mat<Scalar>::Zero(p->value.rows(), p->value.cols()));
        second_.push_back(Mat<Scalar>::Zero(p->value.rows(), p->value.cols()));
      }
    }
    require_shape(first_.size() == params.size(), "optimizer parameter count");
    ++step_;
    const double lr = config_.learning_rate;
    const double correction1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double correction2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    const auto b1 = static_cast<Scalar>(config_.beta1);
    const auto b2 = static_cast<Scalar>(config_.beta2);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = *params[i];
      require_shape(p.grad.rows() == p.value.rows() && p.grad.cols() == p.value.cols() &&
                        first_[i].rows() == p.value.rows() && first_[i].cols() == p.value.cols(),
                    "optimizer parameter shape");
      p.value *= static_cast<Scalar>(1.0 - lr * config_.weight_decay);
      first_[i] = b1 * first_[i] + (Scalar(1) - b1) * p.grad;
      second_[i] = b2 * second_[i] + (Scalar(1) - b2) * p.grad.cwiseAbs2();
      for (Eigen::Index k = 0; k < p.value.size(); ++k) {
        const double m_hat = static_cast<double>(first_[i].data()[k]) / correction1;
        const double v_hat = static_cast<double>(second_[i].data()[k]) / correction2;
        p.value.data()[k] -= static_cast<Scalar>(lr * m_hat / (std::sqrt(v_hat) + config_.epsilon));
      }
    }
  }

 private:
  AdamWConfig config_;
  std::int64_t step_ = 0;
  std::vector<Mat<Scalar>> first_;
  std::vector<Mat<Scalar>> second_;
};

struct GradcheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates sitting on a kink (one-sided slopes disagree)
};

struct GradcheckOptions {
  double step = 1e-3;
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double floor = 1e-2;
  // Coordinates above this error are re-examined for a kink before counting.
  double tolerance = 1e-2;
  // Check every `stride`-th coordinate of each parameter block.
  std::size_t stride = 1;
};

/// Central-difference check of analytic gradients held in `params[i]->grad`.
/// `loss` evaluates the scalar objective at the current parameter values.
template <typename Scalar>
GradcheckResult gradcheck(const std::function<double()>& loss,
                          std::span<Parameter<Scalar>* const> params,
                          const GradcheckOptions& options = {}) {
  GradcheckResult result;
  const double h = options.step;
  const double base = loss();
  if (!std::isfinite(base)) throw Error("gradcheck: non-finite loss");
  for (auto* p : params) {
    for (Eigen::Index k = 0; k < p->value.size(); k += static_cast<Eigen::Index>(options.stride)) {
      Scalar& slot = p->value.data()[k];
      const Scalar saved = slot;
      // The perturbed values are rounded to Scalar, so the realised step is used, not h.
      slot = static_cast<Scalar>(saved + h);
      const double hi = static_cast<double>(slot);
      const double plus = loss();
      slot = static_cast<Scalar>(saved - h);
      const double lo = static_cast<double>(slot);
      const double minus = loss();
      slot = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus)) throw Error("gradcheck: non-finite loss");
      const double numeric = (plus - minus) / (hi - lo);
      const double analytic = p->grad.data()[k];
      const double scale = std::max({std::abs(analytic), std::abs(numeric), options.floor});
      const double rel = std::abs(analytic - numeric) / scale;
      if (rel > options.tolerance) {
        const double forward = (plus - base) / (hi - static_cast<double>(saved));
        const double backward = (base - minus) / (static_cast<double>(saved) - lo);
        const double slope_scale = std::max({std::abs(forward), std::abs(backward), options.floor});
        if (std::abs(forward - backward) / slope_scale > 0.1) {
          ++result.skipped;
          continue;
        }
      }
      ++result.checked;
      result.max_relative_error = std::max(result.max_relative_error, rel);
    }
  }
  return result;
}

}  // namespace gp
