#pragma once

#include <span>
#include <vector>

#include "natadiff/common.hpp"
#include "natadiff/rng.hpp"

namespace natadiff {

// Discretized variance-preserving diffusion schedule. alpha_bar[t] is the
// signal power retained at integer time t; alpha(t) = sqrt(alpha_bar[t]) and
// beta(t) = sqrt(1 - alpha_bar[t]). Immutable after construction.
class ScheduleTable {
 public:
  // Throws ValidationError naming the offending field.
  ScheduleTable(std::vector<double> alpha_bar, std::vector<int> sampling_times);

  // alpha_bar linear in t from `start` at t = 0 to `end` at t = T, with
  // `num_steps` uniformly spaced sampling times.
  static ScheduleTable linear(int num_timesteps, double start = 1.0, double end = 1e-5,
                              int num_steps = 200);

  // `count` sampling times spread uniformly over [0, T], endpoints included.
  static std::vector<int> uniform_times(int num_timesteps, int count);

  int num_timesteps() const { return static_cast<int>(alpha_bar_.size()) - 1; }
  double alpha_bar(int t) const;
  std::span<const double> alpha_bar_values() const { return alpha_bar_; }
  std::span<const int> sampling_times() const { return sampling_times_; }

 private:
  std::vector<double> alpha_bar_;
  std::vector<int> sampling_times_;
};

struct AlphaBeta {
  double alpha;
  double beta;
};

// Parameters of x_t | x_tau ~ N(a x_tau, b_sq I).
struct ForwardBridgeParams {
  double a;
  double b_sq;
};

AlphaBeta alpha_beta(const ScheduleTable& table, int t);

ForwardBridgeParams bridge_params(const ScheduleTable& table, int tau, int t);

// alpha(t) x0 + beta(t) eps, eps ~ N(0, I).
Vec sample_forward(const ScheduleTable& table, const Vec& x0, int t, Rng& rng);

// Draws x_t given x_tau. tau == t is allowed and returns x_prev unchanged.
Vec resample_bridge(const ScheduleTable& table, const Vec& x_prev, int tau, int t, Rng& rng);

// Deterministic DDIM update from t to t_prev given a noise prediction.
Vec ddim_reverse_step(const ScheduleTable& table, const Vec& x_t, const Vec& eps_hat, int t,
                      int t_prev);

}  // namespace natadiff
