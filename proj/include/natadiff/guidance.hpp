#pragma once

#include <optional>
#include <string>
#include <vector>

#include "natadiff/noise_predictor.hpp"
#include "natadiff/schedule.hpp"
#include "natadiff/victims.hpp"

namespace natadiff {

struct GuidanceParams {
  double omega = 7.5;  // class guidance scale
  double rho = 7.5;    // intersection guidance scale
  double mu = 0.2;     // blend between class and intersection guidance, in [0, 1]
  double s = 0.0;      // adversarial classifier guidance strength
  int c_l = 0;         // classifier window, inclusive
  int c_u = 700;

  void validate() const;
  bool in_classifier_window(int t) const { return c_l <= t && t <= c_u; }
};

// Unconditional, class-y and intersection noise predictions at one point.
struct EpsilonBundle {
  Vec eps_uncond;
  Vec eps_cond_y;
  Vec eps_intersection;

  Vec v_y() const { return eps_cond_y - eps_uncond; }
  Vec v_intersection() const { return eps_intersection - eps_uncond; }
  void validate() const;
};

// Map from diffusion space to the space the victim classifies.
class Decoder {
 public:
  static Decoder identity(int dim);
  // x = A z + bias; A must have full column rank.
  static Decoder linear(Mat a, Vec bias);

  bool is_identity() const { return identity_; }
  int input_dim() const { return static_cast<int>(matrix_.cols()); }
  int output_dim() const { return static_cast<int>(matrix_.rows()); }
  const Mat& matrix() const { return matrix_; }
  const Vec& bias() const { return bias_; }

  Vec apply(const Vec& z) const { return identity_ ? z : Vec(matrix_ * z + bias_); }
  Vec vjp(const Vec& u) const { return identity_ ? u : Vec(matrix_.transpose() * u); }

 private:
  Decoder(Mat a, Vec bias, bool identity)
      : matrix_(std::move(a)), bias_(std::move(bias)), identity_(identity) {}

  Mat matrix_;
  Vec bias_;
  bool identity_;
};

struct AffineTransform {
  std::string name;
  Mat matrix;
  Vec offset;

  Vec apply(const Vec& x) const { return matrix * x + offset; }
  Vec vjp(const Vec& u) const { return matrix.transpose() * u; }
};

// Affine augmentations applied to the decoded x0 estimate before the victim.
class TransformSet {
 public:
  explicit TransformSet(std::vector<AffineTransform> transforms);

  // "none": identity only. "default5": identity, +/-10 degree rotations of the
  // first two coordinates about `center`, and shifts by +/-shift along every
  // axis. "symmetric5": as default5 with the negative shift replaced by a sign
  // flip of coordinate 0 about center (only meaningful for worlds symmetric
  // under that reflection).
  static TransformSet preset(const std::string& name, int dim, const Vec& center,
                             double shift = 0.1);

  const std::vector<AffineTransform>& transforms() const { return transforms_; }
  std::size_t size() const { return transforms_.size(); }

 private:
  std::vector<AffineTransform> transforms_;
};

// eps_u + omega * v_y.
Vec cfg_epsilon(const EpsilonBundle& bundle, double omega);

// eps_u + (omega - mu omega) v_y + mu rho v_intersection.
Vec boundary_epsilon(const EpsilonBundle& bundle, const GuidanceParams& params);

// (x_t - beta(t) eps_hat) / alpha(t).
Vec predict_x0(const Vec& x_t, const Vec& eps_hat, int t, const ScheduleTable& table);

// eps_hat - s beta(t) g_unit.
Vec apply_adversarial(const Vec& eps_hat, const Vec& g_unit, double s, int t,
                      const ScheduleTable& table);

// A noise prediction seen as a differentiable function of x_t at fixed t.
class EpsilonField {
 public:
  virtual ~EpsilonField() = default;
  virtual Vec value(const Vec& x) const = 0;
  virtual Vec vjp(const Vec& x, const Vec& u) const = 0;
};

// eps(x, t, cond) of a single conditioning.
class ConditionalField final : public EpsilonField {
 public:
  ConditionalField(const NoisePredictor& predictor, int t, ConditioningSet cond)
      : predictor_(predictor), t_(t), cond_(cond) {}
  Vec value(const Vec& x) const override { return predictor_.epsilon(x, t_, cond_); }
  Vec vjp(const Vec& x, const Vec& u) const override {
    return predictor_.epsilon_vjp(x, t_, cond_, u);
  }

 private:
  const NoisePredictor& predictor_;
  int t_;
  ConditioningSet cond_;
};

// The adversarial boundary guided prediction for true class y and target
// y_tilde. With mu == 0 the intersection model is never queried; when the
// predictor does not support the intersection, the y_tilde prediction stands in.
class BoundaryGuidedField final : public EpsilonField {
 public:
  BoundaryGuidedField(const NoisePredictor& predictor, int t, int y, int y_tilde,
                      const GuidanceParams& params);

  EpsilonBundle bundle(const Vec& x) const;
  Vec value(const Vec& x) const override { return boundary_epsilon(bundle(x), params_); }
  Vec vjp(const Vec& x, const Vec& u) const override;

 private:
  const NoisePredictor& predictor_;
  int t_;
  ConditioningSet uncond_;
  ConditioningSet cond_y_;
  std::optional<ConditioningSet> cond_both_;
  GuidanceParams params_;
};

// log softmax_{target} of the victim logits averaged over `transforms`
// applied to decoder(x0_hat(x_t)).
double adversarial_log_prob(const Vec& x_t, int t, const ScheduleTable& table,
                            const EpsilonField& eps_hat, const Decoder& decoder,
                            const TransformSet& transforms, const VictimModel& victim, int target);

// Unit-norm gradient of adversarial_log_prob with respect to x_t, chaining
// through the noise prediction, the decoder and every transform. Throws
// DegenerateGradient when the raw gradient norm is below 1e-12.
Vec adv_gradient(const Vec& x_t, int t, const ScheduleTable& table, const EpsilonField& eps_hat,
                 const Decoder& decoder, const TransformSet& transforms,
                 const VictimModel& victim, int target);

}  // namespace natadiff
