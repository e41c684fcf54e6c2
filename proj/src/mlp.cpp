#include "natadiff/mlp.hpp"

#include <cmath>

namespace natadiff {

Mlp::Mlp(std::vector<int> widths, Activation hidden, Rng* init)
    : widths_(std::move(widths)), hidden_(hidden) {
  if (widths_.size() < 2) throw ValidationError("mlp.widths", "needs input and output widths");
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const int in = widths_[l];
    const int out = widths_[l + 1];
    Mat w = Mat::Zero(out, in);
    if (init != nullptr) {
      const double scale = 1.0 / std::sqrt(static_cast<double>(in));
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = scale * init->normal();
    }
    weights.push_back(std::move(w));
    biases.push_back(Vec::Zero(out));
  }
}

Mat Mlp::forward(const Mat& x, Tape* tape) const {
  if (x.rows() != input_dim()) throw RangeError("mlp input dimension mismatch");
  if (tape != nullptr) {
    tape->inputs.clear();
    tape->pre.clear();
  }
  Mat h = x;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    Mat z = weights[l] * h;
    z.colwise() += biases[l];
    if (tape != nullptr) {
      tape->inputs.push_back(h);
      tape->pre.push_back(z);
    }
    const bool last = l + 1 == weights.size();
    if (!last && hidden_ == Activation::kTanh) {
      h = z.array().tanh();
    } else {
      h = std::move(z);
    }
  }
  if (tape != nullptr) tape->recorded = true;
  return h;
}

Mlp::Gradients Mlp::backward(const Tape& tape, const Mat& upstream) const {
  if (!tape.recorded) throw StateError("backward called without a recorded forward pass");
  Gradients g;
  g.weights.resize(weights.size());
  g.biases.resize(weights.size());
  Mat delta = upstream;
  for (std::size_t l = weights.size(); l-- > 0;) {
    const bool last = l + 1 == weights.size();
    if (!last && hidden_ == Activation::kTanh) {
      delta = delta.array() * (1.0 - tape.pre[l].array().tanh().square());
    }
    g.weights[l] = delta * tape.inputs[l].transpose();
    g.biases[l] = delta.rowwise().sum();
    delta = weights[l].transpose() * delta;
  }
  g.input = std::move(delta);
  return g;
}

bool Mlp::all_finite() const {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
  }
  return true;
}

void Adam::update(std::size_t slot, Eigen::Ref<Mat> param, const Eigen::Ref<const Mat>& grad) {
  if (slot >= m_.size()) {
    m_.resize(slot + 1);
    v_.resize(slot + 1);
  }
  if (m_[slot].size() == 0) {
    m_[slot] = Mat::Zero(param.rows(), param.cols());
    v_[slot] = Mat::Zero(param.rows(), param.cols());
  }
  m_[slot] = beta1_ * m_[slot] + (1.0 - beta1_) * grad;
  v_[slot] = beta2_ * v_[slot] + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  param.array() -= lr_ * (m_[slot].array() / c1) / ((v_[slot].array() / c2).sqrt() + eps_);
}

}  // namespace natadiff
