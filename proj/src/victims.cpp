#include "natadiff/victims.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "natadiff/checkpoint.hpp"

namespace natadiff {

Vec softmax(const Vec& logits) {
  const Vec e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

Vec VictimModel::logit_grad(const Vec& x, int cls) const {
  if (cls < 0 || cls >= num_classes()) throw RangeError("class index out of range");
  return logit_jacobian(x).row(cls).transpose();
}

Vec VictimModel::logits_vjp(const Vec& x, const Vec& u) const {
  return logit_jacobian(x).transpose() * u;
}

Vec VictimModel::probabilities(const Vec& x) const { return softmax(logits(x)); }

int VictimModel::predict(const Vec& x) const {
  Eigen::Index best = 0;
  logits(x).maxCoeff(&best);
  return static_cast<int>(best);
}

Vec BayesVictim::logits(const Vec& x) const { return bayes_log_posterior(world_, x, 0, table_); }

Mat BayesVictim::logit_jacobian(const Vec& x) const {
  Mat jac;
  bayes_log_posterior(world_, x, 0, table_, &jac);
  return jac;
}

LinearVictim::LinearVictim(Mat weight, Vec bias, std::string name)
    : weight_(std::move(weight)), bias_(std::move(bias)), name_(std::move(name)) {
  if (bias_.size() != weight_.rows()) throw ValidationError("victim.bias", "shape mismatch");
}

void VictimTrainConfig::validate() const {
  if (steps < 0) throw ValidationError("victims.steps", "must be nonnegative");
  if (batch_size < 1) throw ValidationError("victims.batch", "must be positive");
  if (!(learning_rate >= 0.0)) throw ValidationError("victims.lr", "must be nonnegative");
}

ShortcutVictim::ShortcutVictim(Mat projection, Mat weight, Vec bias, std::string name)
    : projection_(std::move(projection)),
      weight_(std::move(weight)),
      bias_(std::move(bias)),
      name_(std::move(name)) {
  if (weight_.cols() != projection_.rows() || bias_.size() != weight_.rows()) {
    throw ValidationError("victim.shortcut", "shape mismatch");
  }
}

Mat ShortcutVictim::coordinate_projection(int dim, const std::vector<int>& keep) {
  Mat p = Mat::Zero(static_cast<Eigen::Index>(keep.size()), dim);
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (keep[i] < 0 || keep[i] >= dim) throw ValidationError("victim.projection", "bad coordinate");
    p(static_cast<Eigen::Index>(i), keep[i]) = 1.0;
  }
  return p;
}

namespace {

struct LabeledBatch {
  Mat x;
  std::vector<int> labels;
};

LabeledBatch draw_batch(const MixtureWorld& world, int n, Rng& rng) {
  LabeledBatch batch{Mat(world.dim(), n), std::vector<int>(static_cast<std::size_t>(n))};
  for (int i = 0; i < n; ++i) {
    auto p = sample_data(world, ConditioningSet::unconditional(), rng);
    batch.x.col(i) = p.x;
    batch.labels[static_cast<std::size_t>(i)] = draw_label(p.labels, rng);
  }
  return batch;
}

// Mean cross-entropy and its gradient with respect to the logits.
double cross_entropy(const Mat& logits, const std::vector<int>& labels, Mat* grad) {
  const auto n = logits.cols();
  double loss = 0.0;
  *grad = Mat(logits.rows(), n);
  for (Eigen::Index b = 0; b < n; ++b) {
    const Vec p = softmax(logits.col(b));
    const int y = labels[static_cast<std::size_t>(b)];
    loss -= std::log(std::max(p[y], 1e-300));
    grad->col(b) = p;
    (*grad)(y, b) -= 1.0;
  }
  *grad /= static_cast<double>(n);
  return loss / static_cast<double>(n);
}

MlpVictim fit_mlp(const MlpVictim& victim_template, const MixtureWorld& world,
                  const VictimTrainConfig& cfg, const PgdConfig* pgd, std::string kind) {
  cfg.validate();
  if (pgd != nullptr) pgd->validate();
  MlpVictim victim(victim_template.mlp(), victim_template.name(), std::move(kind));
  Rng rng(cfg.seed);
  Adam adam(cfg.learning_rate);
  PgdConfig inner;
  if (pgd != nullptr) {
    inner = *pgd;
    inner.targeted = false;
  }
  for (int step = 0; step < cfg.steps; ++step) {
    LabeledBatch batch = draw_batch(world, cfg.batch_size, rng);
    if (pgd != nullptr && inner.steps > 0) {
      for (Eigen::Index b = 0; b < batch.x.cols(); ++b) {
        batch.x.col(b) =
            pgd_attack(victim, batch.x.col(b), batch.labels[static_cast<std::size_t>(b)], inner, rng);
      }
    }
    Mlp& mlp = victim.mutable_mlp();
    Mlp::Tape tape;
    const Mat out = mlp.forward(batch.x, &tape);
    Mat grad;
    const double loss = cross_entropy(out, batch.labels, &grad);
    if (!std::isfinite(loss)) throw TrainingFailure("victim training diverged");
    const auto g = mlp.backward(tape, grad);
    adam.begin_step();
    for (std::size_t l = 0; l < mlp.num_layers(); ++l) {
      adam.update(2 * l, mlp.weights[l], g.weights[l]);
      adam.update(2 * l + 1, mlp.biases[l], g.biases[l]);
    }
  }
  if (!victim.mlp().all_finite()) throw TrainingFailure("victim parameters diverged");
  return victim;
}

}  // namespace

ShortcutVictim ShortcutVictim::fit(const MixtureWorld& world, Mat projection, std::string name,
                                   const VictimTrainConfig& cfg) {
  if (projection.cols() != world.dim()) throw ValidationError("victim.projection", "wrong width");
  // A linear MLP on the projected cue is exactly multinomial logistic regression.
  const int cue_dim = static_cast<int>(projection.rows());
  MlpVictim logistic(Mlp({cue_dim, world.num_classes()}, Activation::kIdentity, nullptr), name);
  cfg.validate();
  Rng rng(cfg.seed);
  Adam adam(cfg.learning_rate);
  for (int step = 0; step < cfg.steps; ++step) {
    const LabeledBatch batch = draw_batch(world, cfg.batch_size, rng);
    Mlp& mlp = logistic.mutable_mlp();
    Mlp::Tape tape;
    const Mat out = mlp.forward(projection * batch.x, &tape);
    Mat grad;
    if (!std::isfinite(cross_entropy(out, batch.labels, &grad))) {
      throw TrainingFailure("shortcut fit diverged");
    }
    const auto g = mlp.backward(tape, grad);
    adam.begin_step();
    adam.update(0, mlp.weights[0], g.weights[0]);
    adam.update(1, mlp.biases[0], g.biases[0]);
  }
  return ShortcutVictim(std::move(projection), logistic.mlp().weights[0], logistic.mlp().biases[0],
                        std::move(name));
}

MlpVictim::MlpVictim(Mlp mlp, std::string name, std::string kind)
    : mlp_(std::move(mlp)), name_(std::move(name)), kind_(std::move(kind)) {}

Mat MlpVictim::logit_jacobian(const Vec& x) const {
  const int K = num_classes();
  // One reverse pass per class, batched as K columns of the same input.
  Mlp::Tape batched;
  const Mat xs = x.replicate(1, K);
  mlp_.forward(xs, &batched);
  const auto g = mlp_.backward(batched, Mat::Identity(K, K));
  return g.input.transpose();
}

void PgdConfig::validate() const {
  if (!(epsilon > 0.0)) throw ValidationError("pgd.epsilon", "must be positive");
  if (steps < 0) throw ValidationError("pgd.steps", "must be nonnegative");
  if (!(step_size >= 0.0)) throw ValidationError("pgd.step_size", "must be nonnegative");
}

Vec pgd_attack(const VictimModel& victim, const Vec& x, int label, const PgdConfig& cfg, Rng& rng) {
  cfg.validate();
  if (cfg.steps == 0) return x;
  Vec delta = Vec::Zero(x.size());
  if (cfg.random_start) {
    for (Eigen::Index i = 0; i < x.size(); ++i) delta[i] = cfg.epsilon * (2.0 * rng.uniform() - 1.0);
  }
  Vec onehot = Vec::Zero(victim.num_classes());
  onehot[label] = 1.0;
  for (int s = 0; s < cfg.steps; ++s) {
    const Vec xa = x + delta;
    // grad_x log softmax_label
    const Vec g = victim.logits_vjp(xa, onehot - victim.probabilities(xa));
    const Vec dir = g.unaryExpr([](double v) { return static_cast<double>((v > 0) - (v < 0)); });
    delta += (cfg.targeted ? cfg.step_size : -cfg.step_size) * dir;
    delta = delta.cwiseMax(-cfg.epsilon).cwiseMin(cfg.epsilon);
  }
  Vec adv = x + delta;
  // Rounding in x + delta can overshoot the budget by an ulp.
  for (Eigen::Index i = 0; i < adv.size(); ++i) {
    while (std::abs(adv[i] - x[i]) > cfg.epsilon) adv[i] = std::nextafter(adv[i], x[i]);
  }
  return adv;
}

MlpVictim make_mlp_victim(const MixtureWorld& world, const VictimTrainConfig& cfg,
                          std::string name) {
  std::vector<int> widths{world.dim()};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(world.num_classes());
  Rng init = Rng(cfg.seed).fork(0x1417);
  return MlpVictim(Mlp(widths, Activation::kTanh, &init), std::move(name));
}

MlpVictim train_victim(const MlpVictim& victim_template, const MixtureWorld& world,
                       const VictimTrainConfig& cfg) {
  return fit_mlp(victim_template, world, cfg, nullptr, "trained_mlp");
}

MlpVictim adversarial_train(const MlpVictim& victim_template, const MixtureWorld& world,
                            const PgdConfig& pgd, const VictimTrainConfig& cfg) {
  return fit_mlp(victim_template, world, cfg, &pgd, "adv_trained");
}

double finite_diff_check(const VictimModel& victim, const Vec& x, int cls, double step) {
  if (!(step > 0.0)) throw ValidationError("finite_diff.step", "must be positive");
  const Vec analytic = victim.logit_grad(x, cls);
  Vec numeric(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vec xp = x;
    Vec xm = x;
    xp[i] += step;
    xm[i] -= step;
    numeric[i] = (victim.logits(xp)[cls] - victim.logits(xm)[cls]) / (2.0 * step);
  }
  const double scale = std::max(analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff());
  if (scale == 0.0) return 0.0;
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

double accuracy(const VictimModel& victim, const std::vector<LabeledPoint>& points) {
  if (points.empty()) throw UndefinedRate("accuracy of an empty set");
  std::size_t correct = 0;
  for (const auto& p : points) {
    const int pred = victim.predict(p.x);
    if (std::find(p.labels.begin(), p.labels.end(), pred) != p.labels.end()) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(points.size());
}

int draw_label(const std::vector<int>& labels, Rng& rng) {
  if (labels.size() == 1) return labels.front();
  return labels[rng.below(labels.size())];
}

void VictimRegistry::add(std::shared_ptr<const VictimModel> victim) {
  const std::string name = victim->name();
  victims_[name] = std::move(victim);
}

const VictimModel& VictimRegistry::get(const std::string& name) const { return *shared(name); }

std::shared_ptr<const VictimModel> VictimRegistry::shared(const std::string& name) const {
  const auto it = victims_.find(name);
  if (it == victims_.end()) throw LookupError("unknown victim '" + name + "'");
  return it->second;
}

std::vector<std::string> VictimRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : victims_) out.push_back(k);
  return out;
}

void save_checkpoint(std::ostream& out, const MlpVictim& victim) {
  auto j = checkpoint::header(victim.kind());
  j["name"] = victim.name();
  j["mlp"] = checkpoint::mlp_to_json(victim.mlp());
  out << j.dump(1) << '\n';
}

MlpVictim load_victim_checkpoint(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint", std::string("unreadable: ") + e.what());
  }
  const std::string kind = j.value("kind", "");
  checkpoint::check_header(j, kind == "adv_trained" ? "adv_trained" : "trained_mlp");
  return MlpVictim(checkpoint::mlp_from_json(j.at("mlp")), j.at("name").get<std::string>(), kind);
}

}  // namespace natadiff
