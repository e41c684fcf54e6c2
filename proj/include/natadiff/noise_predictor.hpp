#pragma once

#include "natadiff/common.hpp"
#include "natadiff/schedule.hpp"
#include "natadiff/world.hpp"

namespace natadiff {

// Anything that predicts the forward-process noise in x_t: the exact mixture
// oracle or a trained network. Implementations are immutable and thread-safe.
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;

  virtual int dim() const = 0;
  virtual Vec epsilon(const Vec& x, int t, const ConditioningSet& cond) const = 0;
  // u^T (d epsilon / d x), the vector-Jacobian product used to push
  // classifier gradients back through the x0 estimate.
  virtual Vec epsilon_vjp(const Vec& x, int t, const ConditioningSet& cond, const Vec& u) const = 0;
  // Whether `cond` has any data (oracle) or a trained token (network).
  virtual bool supports(const ConditioningSet& cond) const = 0;
};

// Exact optimum of the denoising objective for a mixture world.
class OracleNoisePredictor final : public NoisePredictor {
 public:
  OracleNoisePredictor(const MixtureWorld& world, const ScheduleTable& table)
      : world_(world), table_(table) {}

  int dim() const override { return world_.dim(); }
  bool supports(const ConditioningSet& cond) const override { return world_.has_support(cond); }

  Vec epsilon(const Vec& x, int t, const ConditioningSet& cond) const override {
    return oracle_epsilon(world_, cond, x, t, table_);
  }

  Vec epsilon_vjp(const Vec& x, int t, const ConditioningSet& cond, const Vec& u) const override {
    // The Hessian of a log density is symmetric.
    const double beta = alpha_beta(table_, t).beta;
    return -beta * (noised_score_jacobian(world_, cond, x, t, table_) * u);
  }

 private:
  const MixtureWorld& world_;
  const ScheduleTable& table_;
};

}  // namespace natadiff
