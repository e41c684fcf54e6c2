#pragma once

#include <vector>

#include "natadiff/common.hpp"
#include "natadiff/rng.hpp"

namespace natadiff {

enum class Activation { kTanh, kIdentity };

// Dense feed-forward network with a smooth hidden activation and a linear
// output layer. Batches are column-major: one sample per column. Shared by the
// denoiser and the trainable victims.
class Mlp {
 public:
  struct Tape {
    std::vector<Mat> inputs;  // input to each layer
    std::vector<Mat> pre;     // pre-activation of each layer
    bool recorded = false;
  };

  struct Gradients {
    std::vector<Mat> weights;
    std::vector<Vec> biases;
    Mat input;
  };

  Mlp() = default;
  // `init` == nullptr gives an all-zero network.
  Mlp(std::vector<int> widths, Activation hidden, Rng* init);

  Mat forward(const Mat& x, Tape* tape = nullptr) const;
  // Reverse-mode pass over the computation recorded in `tape`.
  Gradients backward(const Tape& tape, const Mat& upstream) const;

  const std::vector<int>& widths() const { return widths_; }
  Activation hidden_activation() const { return hidden_; }
  int input_dim() const { return widths_.front(); }
  int output_dim() const { return widths_.back(); }
  std::size_t num_layers() const { return weights.size(); }
  bool all_finite() const;

  std::vector<Mat> weights;  // layer l maps widths[l] -> widths[l + 1]
  std::vector<Vec> biases;

 private:
  std::vector<int> widths_;
  Activation hidden_ = Activation::kTanh;
};

// Adam over a flat list of parameter blocks.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Call once per optimization step, before any update().
  void begin_step() { ++step_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  // Updates `param` in place; `slot` identifies the parameter block.
  void update(std::size_t slot, Eigen::Ref<Mat> param, const Eigen::Ref<const Mat>& grad);

 private:
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  long step_ = 0;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
};

}  // namespace natadiff
