#pragma once

#include <utility>
#include <vector>

#include "natadiff/common.hpp"
#include "natadiff/rng.hpp"
#include "natadiff/schedule.hpp"

namespace natadiff {

struct Component {
  Vec mean;
  Mat cov;
  double weight = 0.0;
  std::vector<int> labels;  // sorted, unique, nonempty

  bool has_label(int c) const;
};

// Which mixture components a conditional query draws from.
class ConditioningSet {
 public:
  enum class Mode { kUnconditional, kSingle, kIntersection };

  static ConditioningSet unconditional() { return ConditioningSet(Mode::kUnconditional, -1, -1); }
  static ConditioningSet single(int y) { return ConditioningSet(Mode::kSingle, y, -1); }
  // Data carrying structure of both y and y_tilde. Requires y != y_tilde.
  static ConditioningSet intersection(int y, int y_tilde);

  Mode mode() const { return mode_; }
  int y() const { return y_; }
  int y_tilde() const { return y_tilde_; }
  bool selects(const Component& c) const;

  friend bool operator==(const ConditioningSet&, const ConditioningSet&) = default;

 private:
  ConditioningSet(Mode mode, int y, int y_tilde) : mode_(mode), y_(y), y_tilde_(y_tilde) {}

  Mode mode_;
  int y_;
  int y_tilde_;
};

// Labeled Gaussian mixture. Components whose label set has two or more
// classes model regions where structure from several classes coexists.
class MixtureWorld {
 public:
  // Validates every invariant; throws ValidationError naming `world.<field>`.
  MixtureWorld(std::vector<Component> components, int num_classes);

  int dim() const { return dim_; }
  int num_classes() const { return num_classes_; }
  const std::vector<Component>& components() const { return components_; }

  // Indices of the components selected by `cond`; throws ConditioningError if
  // the selection is empty.
  std::vector<std::size_t> select(const ConditioningSet& cond) const;
  bool has_support(const ConditioningSet& cond) const;

  // Weighted mean of the components that carry class c.
  Vec class_mean(int c) const;

  // Weighted data mean over all components.
  Vec data_mean() const;

 private:
  std::vector<Component> components_;
  int num_classes_;
  int dim_;
};

struct LabeledPoint {
  Vec x;
  std::vector<int> labels;
};

LabeledPoint sample_data(const MixtureWorld& world, const ConditioningSet& cond, Rng& rng);

// log p(x_t | cond) where each selected component is pushed through the
// forward process: N(alpha m, alpha^2 S + beta^2 I), weights renormalized.
double noised_log_density(const MixtureWorld& world, const ConditioningSet& cond, const Vec& x,
                          int t, const ScheduleTable& table);

// grad_x log p(x_t | cond).
Vec noised_score(const MixtureWorld& world, const ConditioningSet& cond, const Vec& x, int t,
                 const ScheduleTable& table);

// Hessian of log p(x_t | cond) with respect to x.
Mat noised_score_jacobian(const MixtureWorld& world, const ConditioningSet& cond, const Vec& x,
                          int t, const ScheduleTable& table);

// Optimal noise prediction: -beta(t) * score.
Vec oracle_epsilon(const MixtureWorld& world, const ConditioningSet& cond, const Vec& x, int t,
                   const ScheduleTable& table);

// log p(class | x_t) and, when `jacobian` is given, its derivative with
// respect to x (num_classes x d).
Vec bayes_log_posterior(const MixtureWorld& world, const Vec& x, int t, const ScheduleTable& table,
                        Mat* jacobian = nullptr);

// p(class | x_t) with multi-label components counting toward each label.
Vec bayes_posterior(const MixtureWorld& world, const Vec& x, int t, const ScheduleTable& table);

}  // namespace natadiff
