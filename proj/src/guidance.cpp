#include "natadiff/guidance.hpp"

#include <cmath>
#include <numbers>

namespace natadiff {

void GuidanceParams::validate() const {
  if (!std::isfinite(omega) || omega < 0.0) throw ValidationError("guidance.omega", "must be >= 0");
  if (!std::isfinite(rho) || rho < 0.0) throw ValidationError("guidance.rho", "must be >= 0");
  if (!(mu >= 0.0 && mu <= 1.0)) throw ValidationError("guidance.mu", "must lie in [0, 1]");
  if (!std::isfinite(s) || s < 0.0) throw ValidationError("guidance.s", "must be >= 0");
  if (c_l > c_u) throw ValidationError("guidance.c_l", "classifier window needs c_l <= c_u");
}

void EpsilonBundle::validate() const {
  if (eps_uncond.size() != eps_cond_y.size() || eps_uncond.size() != eps_intersection.size()) {
    throw RangeError("epsilon bundle dimension mismatch");
  }
}

Decoder Decoder::identity(int dim) {
  return Decoder(Mat::Identity(dim, dim), Vec::Zero(dim), true);
}

Decoder Decoder::linear(Mat a, Vec bias) {
  if (bias.size() != a.rows()) throw ValidationError("guidance.decoder", "bias shape mismatch");
  if (Eigen::ColPivHouseholderQR<Mat>(a).rank() != a.cols()) {
    throw ValidationError("guidance.decoder", "linear decoder must have full column rank");
  }
  return Decoder(std::move(a), std::move(bias), false);
}

TransformSet::TransformSet(std::vector<AffineTransform> transforms)
    : transforms_(std::move(transforms)) {
  if (transforms_.empty()) throw ValidationError("guidance.transforms", "set must be nonempty");
}

TransformSet TransformSet::preset(const std::string& name, int dim, const Vec& center,
                                  double shift) {
  if (center.size() != dim) throw ValidationError("guidance.transforms", "center dimension");
  const Mat eye = Mat::Identity(dim, dim);
  std::vector<AffineTransform> out{{"identity", eye, Vec::Zero(dim)}};
  if (name == "none") return TransformSet(std::move(out));
  if (name != "default5" && name != "symmetric5") {
    throw ValidationError("guidance.transforms", "unknown preset '" + name + "'");
  }
  // Affine map about `center`: x -> M (x - c) + c.
  auto about_center = [&](std::string label, const Mat& m) {
    return AffineTransform{std::move(label), m, center - m * center};
  };
  if (dim >= 2) {
    for (double deg : {10.0, -10.0}) {
      const double a = deg * std::numbers::pi / 180.0;
      Mat r = eye;
      r(0, 0) = std::cos(a);
      r(0, 1) = -std::sin(a);
      r(1, 0) = std::sin(a);
      r(1, 1) = std::cos(a);
      out.push_back(about_center(deg > 0 ? "rotate+10" : "rotate-10", r));
    }
  }
  out.push_back({"shift+", eye, Vec::Constant(dim, shift)});
  if (name == "default5") {
    out.push_back({"shift-", eye, Vec::Constant(dim, -shift)});
  } else {
    Mat flip = eye;
    flip(0, 0) = -1.0;
    out.push_back(about_center("reflect0", flip));
  }
  return TransformSet(std::move(out));
}

Vec cfg_epsilon(const EpsilonBundle& bundle, double omega) {
  bundle.validate();
  return bundle.eps_uncond + omega * bundle.v_y();
}

Vec boundary_epsilon(const EpsilonBundle& bundle, const GuidanceParams& params) {
  bundle.validate();
  return bundle.eps_uncond + (params.omega - params.mu * params.omega) * bundle.v_y() +
         params.mu * params.rho * bundle.v_intersection();
}

Vec predict_x0(const Vec& x_t, const Vec& eps_hat, int t, const ScheduleTable& table) {
  const auto [alpha, beta] = alpha_beta(table, t);
  if (alpha == 0.0) throw SingularScheduleError("alpha(t) = 0");
  return (x_t - beta * eps_hat) / alpha;
}

Vec apply_adversarial(const Vec& eps_hat, const Vec& g_unit, double s, int t,
                      const ScheduleTable& table) {
  return eps_hat - s * alpha_beta(table, t).beta * g_unit;
}

BoundaryGuidedField::BoundaryGuidedField(const NoisePredictor& predictor, int t, int y,
                                         int y_tilde, const GuidanceParams& params)
    : predictor_(predictor),
      t_(t),
      uncond_(ConditioningSet::unconditional()),
      cond_y_(ConditioningSet::single(y)),
      params_(params) {
  if (params_.mu != 0.0) {
    // Pairs with no shared data borrow the target-class prediction.
    const auto both = ConditioningSet::intersection(y, y_tilde);
    cond_both_ = predictor.supports(both) ? both : ConditioningSet::single(y_tilde);
  }
}

EpsilonBundle BoundaryGuidedField::bundle(const Vec& x) const {
  EpsilonBundle b;
  b.eps_uncond = predictor_.epsilon(x, t_, uncond_);
  b.eps_cond_y = predictor_.epsilon(x, t_, cond_y_);
  b.eps_intersection = cond_both_ ? predictor_.epsilon(x, t_, *cond_both_) : b.eps_uncond;
  return b;
}

Vec BoundaryGuidedField::vjp(const Vec& x, const Vec& u) const {
  const double w_y = params_.omega - params_.mu * params_.omega;
  const double w_both = params_.mu * params_.rho;
  Vec out = (1.0 - w_y - (cond_both_ ? w_both : 0.0)) * predictor_.epsilon_vjp(x, t_, uncond_, u);
  out += w_y * predictor_.epsilon_vjp(x, t_, cond_y_, u);
  if (cond_both_) out += w_both * predictor_.epsilon_vjp(x, t_, *cond_both_, u);
  return out;
}

namespace {

struct ChainState {
  Vec decoded;
  std::vector<Vec> views;
  Vec mean_logits;
};

ChainState forward_chain(const Vec& x_t, int t, const ScheduleTable& table,
                         const EpsilonField& eps_hat, const Decoder& decoder,
                         const TransformSet& transforms, const VictimModel& victim) {
  ChainState st;
  st.decoded = decoder.apply(predict_x0(x_t, eps_hat.value(x_t), t, table));
  st.mean_logits = Vec::Zero(victim.num_classes());
  for (const auto& tr : transforms.transforms()) {
    st.views.push_back(tr.apply(st.decoded));
    st.mean_logits += victim.logits(st.views.back());
  }
  st.mean_logits /= static_cast<double>(transforms.size());
  return st;
}

}  // namespace

double adversarial_log_prob(const Vec& x_t, int t, const ScheduleTable& table,
                            const EpsilonField& eps_hat, const Decoder& decoder,
                            const TransformSet& transforms, const VictimModel& victim,
                            int target) {
  const auto st = forward_chain(x_t, t, table, eps_hat, decoder, transforms, victim);
  const double m = st.mean_logits.maxCoeff();
  return st.mean_logits[target] - m - std::log((st.mean_logits.array() - m).exp().sum());
}

Vec adv_gradient(const Vec& x_t, int t, const ScheduleTable& table, const EpsilonField& eps_hat,
                 const Decoder& decoder, const TransformSet& transforms,
                 const VictimModel& victim, int target) {
  if (target < 0 || target >= victim.num_classes()) throw RangeError("target class out of range");
  const auto st = forward_chain(x_t, t, table, eps_hat, decoder, transforms, victim);
  // d log softmax_target / d mean_logits
  Vec upstream = -softmax(st.mean_logits);
  upstream[target] += 1.0;
  upstream /= static_cast<double>(transforms.size());
  Vec grad_decoded = Vec::Zero(st.decoded.size());
  for (std::size_t j = 0; j < transforms.size(); ++j) {
    grad_decoded += transforms.transforms()[j].vjp(victim.logits_vjp(st.views[j], upstream));
  }
  const Vec grad_x0 = decoder.vjp(grad_decoded);
  const auto [alpha, beta] = alpha_beta(table, t);
  const Vec g = (grad_x0 - beta * eps_hat.vjp(x_t, grad_x0)) / alpha;
  const double norm = g.norm();
  if (!(norm >= 1e-12)) throw DegenerateGradient("adversarial gradient vanishes");
  return g / norm;
}

}  // namespace natadiff
