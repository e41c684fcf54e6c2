#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "natadiff/mlp.hpp"
#include "natadiff/noise_predictor.hpp"

namespace natadiff {

// Conditional noise-prediction network eps_theta(x, t, cond).
//
// Input layout: [(x - input_shift) / input_scale (d) | sinusoidal time
// features (8) | conditioning token].
// Tokens: one per class, one unconditional, one per ordered class pair used
// for intersection conditioning.
class DenoiserNet {
 public:
  static constexpr int kTimeFeatures = 8;
  static constexpr int kTokenDim = 8;

  struct Tape {
    Mlp::Tape mlp;
    std::vector<int> tokens;
    bool recorded = false;
  };

  struct Gradients {
    Mlp::Gradients mlp;  // mlp.input holds the full input-layer gradient
    Mat tokens;          // kTokenDim x num_tokens
    Mat x;               // d x batch
  };

  DenoiserNet(int dim, int num_classes, int num_timesteps, std::vector<std::pair<int, int>> pairs,
              std::vector<int> hidden, Rng* init);

  // Pairs (y_tilde, y) and (y, y_tilde) for every multi-label component;
  // inputs standardized by the world mean and average per-axis spread
  // (at least 1).
  static DenoiserNet for_world(const MixtureWorld& world, int num_timesteps,
                               std::vector<int> hidden, Rng* init);

  int dim() const { return dim_; }
  int num_classes() const { return num_classes_; }
  int num_timesteps() const { return num_timesteps_; }
  int num_tokens() const { return static_cast<int>(tokens.cols()); }
  const std::vector<std::pair<int, int>>& pairs() const { return pairs_; }

  // Throws LookupError if the conditioning has no token.
  int token_index(const ConditioningSet& cond) const;
  bool has_token(const ConditioningSet& cond) const;

  Vec time_features(int t) const;

  Vec forward(const Vec& x, int t, const ConditioningSet& cond, Tape* tape = nullptr) const;
  Mat forward_batch(const Mat& x, std::span<const int> t, std::span<const int> token,
                    Tape* tape = nullptr) const;
  Gradients backward(const Tape& tape, const Mat& upstream) const;

  bool all_finite() const { return mlp.all_finite() && tokens.allFinite(); }

  Mlp mlp;
  Mat tokens;
  Vec input_shift;  // zero unless set, e.g. by for_world
  double input_scale = 1.0;

 private:
  Mat assemble_input(const Mat& x, std::span<const int> t, std::span<const int> token) const;

  int dim_;
  int num_classes_;
  int num_timesteps_;
  std::vector<std::pair<int, int>> pairs_;
  std::map<std::pair<int, int>, int> pair_index_;
};

// Adapts a trained net to the NoisePredictor interface.
class LearnedNoisePredictor final : public NoisePredictor {
 public:
  explicit LearnedNoisePredictor(const DenoiserNet& net) : net_(net) {}
  int dim() const override { return net_.dim(); }
  bool supports(const ConditioningSet& cond) const override { return net_.has_token(cond); }
  Vec epsilon(const Vec& x, int t, const ConditioningSet& cond) const override;
  Vec epsilon_vjp(const Vec& x, int t, const ConditioningSet& cond, const Vec& u) const override;

 private:
  const DenoiserNet& net_;
};

enum class LossWeighting {
  kX0,       // ||x0 - x0_hat||^2 = (beta/alpha)^2 ||eps - eps_theta||^2
  kEpsilon,  // ||eps - eps_theta||^2
};

struct TrainConfig {
  int steps = 20000;
  int batch_size = 128;
  double learning_rate = 2e-3;
  double final_lr_fraction = 0.05;  // cosine decay to learning_rate * this
  double drop_prob = 0.2;
  std::uint64_t seed = 0;
  LossWeighting weighting = LossWeighting::kEpsilon;

  void validate() const;
};

struct TrainResult {
  std::vector<double> loss;  // one entry per step
};

// Minimizes the denoising objective over (x0 ~ world, t ~ U{1..T}, eps).
// With probability drop_prob the conditioning is replaced by the
// unconditional token. Throws TrainingFailure on a non-finite loss.
TrainResult train(DenoiserNet& net, const MixtureWorld& world, const ScheduleTable& table,
                  const TrainConfig& cfg);

// Structured-text (JSON) checkpoint: shapes plus row-major parameters.
void save_checkpoint(std::ostream& out, const DenoiserNet& net);
DenoiserNet load_denoiser_checkpoint(std::istream& in);

void write_loss_csv(std::ostream& out, const TrainResult& result);

}  // namespace natadiff
