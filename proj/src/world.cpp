#include "natadiff/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace natadiff {

namespace {

double log_sum_exp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// One noised Gaussian term evaluated at x.
struct Term {
  double log_weighted_pdf;  // log w + log N(x; alpha m, alpha^2 S + beta^2 I)
  Vec grad;                 // grad_x log N
  Mat precision;
};

Term evaluate_term(const Component& c, const Vec& x, double alpha, double beta) {
  const Eigen::Index d = x.size();
  const Mat cov = alpha * alpha * c.cov + beta * beta * Mat::Identity(d, d);
  const Eigen::LLT<Mat> llt(cov);
  if (llt.info() != Eigen::Success) throw UndefinedScoreError("noised covariance not SPD");
  const Vec diff = x - alpha * c.mean;
  const Vec solved = llt.solve(diff);
  const Mat L = llt.matrixL();
  const double log_det = 2.0 * L.diagonal().array().log().sum();
  Term term;
  term.log_weighted_pdf = std::log(c.weight) - 0.5 * diff.dot(solved) - 0.5 * log_det -
                          0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi);
  term.grad = -solved;
  term.precision = llt.solve(Mat::Identity(d, d));
  return term;
}

std::vector<Term> evaluate_terms(const MixtureWorld& world, std::span<const std::size_t> idx,
                                 const Vec& x, int t, const ScheduleTable& table) {
  if (x.size() != world.dim()) throw RangeError("point dimension does not match world");
  const auto [alpha, beta] = alpha_beta(table, t);
  std::vector<Term> terms;
  terms.reserve(idx.size());
  for (std::size_t k : idx) terms.push_back(evaluate_term(world.components()[k], x, alpha, beta));
  return terms;
}

// Responsibilities r_k = w_k N_k / sum_j w_j N_j over `terms`.
std::vector<double> responsibilities(const std::vector<Term>& terms) {
  std::vector<double> logs(terms.size());
  for (std::size_t i = 0; i < terms.size(); ++i) logs[i] = terms[i].log_weighted_pdf;
  const double lse = log_sum_exp(logs);
  if (!std::isfinite(lse)) throw UndefinedScoreError("mixture density underflows at this point");
  for (double& v : logs) v = std::exp(v - lse);
  return logs;
}

}  // namespace

bool Component::has_label(int c) const {
  return std::binary_search(labels.begin(), labels.end(), c);
}

ConditioningSet ConditioningSet::intersection(int y, int y_tilde) {
  if (y == y_tilde) throw ConditioningError("intersection conditioning requires y != y_tilde");
  return ConditioningSet(Mode::kIntersection, y, y_tilde);
}

bool ConditioningSet::selects(const Component& c) const {
  switch (mode_) {
    case Mode::kUnconditional:
      return true;
    case Mode::kSingle:
      return c.has_label(y_);
    case Mode::kIntersection:
      return c.has_label(y_) && c.has_label(y_tilde_);
  }
  return false;
}

MixtureWorld::MixtureWorld(std::vector<Component> components, int num_classes)
    : components_(std::move(components)), num_classes_(num_classes) {
  if (num_classes_ < 1) throw ValidationError("world.num_classes", "must be positive");
  if (components_.empty()) throw ValidationError("world.components", "at least one required");
  dim_ = static_cast<int>(components_.front().mean.size());
  if (dim_ < 1) throw ValidationError("world.dim", "must be positive");
  double total = 0.0;
  std::vector<bool> seen(static_cast<std::size_t>(num_classes_), false);
  for (std::size_t k = 0; k < components_.size(); ++k) {
    Component& c = components_[k];
    const std::string where = "component " + std::to_string(k);
    if (c.mean.size() != dim_) throw ValidationError("world.mean", where + ": dimension mismatch");
    if (!c.mean.allFinite()) throw ValidationError("world.mean", where + ": not finite");
    if (c.cov.rows() != dim_ || c.cov.cols() != dim_) {
      throw ValidationError("world.cov", where + ": must be " + std::to_string(dim_) + "x" +
                                             std::to_string(dim_));
    }
    if (!c.cov.isApprox(c.cov.transpose(), 1e-12)) {
      throw ValidationError("world.cov", where + ": not symmetric");
    }
    if (Eigen::LLT<Mat>(c.cov).info() != Eigen::Success) {
      throw ValidationError("world.cov", where + ": not positive definite");
    }
    if (!(c.weight > 0.0) || !std::isfinite(c.weight)) {
      throw ValidationError("world.weights", where + ": weight must be positive");
    }
    total += c.weight;
    std::sort(c.labels.begin(), c.labels.end());
    c.labels.erase(std::unique(c.labels.begin(), c.labels.end()), c.labels.end());
    if (c.labels.empty()) throw ValidationError("world.labels", where + ": empty label set");
    for (int l : c.labels) {
      if (l < 0 || l >= num_classes_) {
        throw ValidationError("world.labels", where + ": class " + std::to_string(l) +
                                                  " outside [0, num_classes)");
      }
      seen[static_cast<std::size_t>(l)] = true;
    }
  }
  if (std::abs(total - 1.0) > 1e-9) {
    std::ostringstream os;
    os << "weights sum to " << total << ", expected 1";
    throw ValidationError("world.weights", os.str());
  }
  for (int c = 0; c < num_classes_; ++c) {
    if (!seen[static_cast<std::size_t>(c)]) {
      throw ValidationError("world.labels", "class " + std::to_string(c) + " has no component");
    }
  }
}

std::vector<std::size_t> MixtureWorld::select(const ConditioningSet& cond) const {
  for (int c : {cond.y(), cond.y_tilde()}) {
    if (c >= num_classes_) throw ConditioningError("class id out of range");
  }
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < components_.size(); ++k) {
    if (cond.selects(components_[k])) idx.push_back(k);
  }
  if (idx.empty()) throw ConditioningError("conditioning set selects no component");
  return idx;
}

bool MixtureWorld::has_support(const ConditioningSet& cond) const {
  for (int c : {cond.y(), cond.y_tilde()}) {
    if (c >= num_classes_) return false;
  }
  for (const auto& comp : components_) {
    if (cond.selects(comp)) return true;
  }
  return false;
}

Vec MixtureWorld::class_mean(int c) const {
  const auto idx = select(ConditioningSet::single(c));
  Vec m = Vec::Zero(dim_);
  double w = 0.0;
  for (std::size_t k : idx) {
    m += components_[k].weight * components_[k].mean;
    w += components_[k].weight;
  }
  return m / w;
}

Vec MixtureWorld::data_mean() const {
  Vec m = Vec::Zero(dim_);
  for (const auto& c : components_) m += c.weight * c.mean;
  return m;
}

LabeledPoint sample_data(const MixtureWorld& world, const ConditioningSet& cond, Rng& rng) {
  const auto idx = world.select(cond);
  double total = 0.0;
  for (std::size_t k : idx) total += world.components()[k].weight;
  double u = rng.uniform() * total;
  std::size_t pick = idx.back();
  for (std::size_t k : idx) {
    u -= world.components()[k].weight;
    if (u < 0.0) {
      pick = k;
      break;
    }
  }
  const Component& c = world.components()[pick];
  const Mat L = Eigen::LLT<Mat>(c.cov).matrixL();
  return {c.mean + L * rng.normal_vector(world.dim()), c.labels};
}

double noised_log_density(const MixtureWorld& world, const ConditioningSet& cond, const Vec& x,
                          int t, const ScheduleTable& table) {
  const auto idx = world.select(cond);
  const auto terms = evaluate_terms(world, idx, x, t, table);
  std::vector<double> logs;
  double total = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    logs.push_back(terms[i].log_weighted_pdf);
    total += world.components()[idx[i]].weight;
  }
  return log_sum_exp(logs) - std::log(total);
}

Vec noised_score(const MixtureWorld& world, const ConditioningSet& cond, const Vec& x, int t,
                 const ScheduleTable& table) {
  const auto idx = world.select(cond);
  const auto terms = evaluate_terms(world, idx, x, t, table);
  const auto r = responsibilities(terms);
  Vec score = Vec::Zero(x.size());
  for (std::size_t i = 0; i < terms.size(); ++i) score += r[i] * terms[i].grad;
  if (!score.allFinite()) throw UndefinedScoreError("score is not finite");
  return score;
}

Mat noised_score_jacobian(const MixtureWorld& world, const ConditioningSet& cond, const Vec& x,
                          int t, const ScheduleTable& table) {
  const auto idx = world.select(cond);
  const auto terms = evaluate_terms(world, idx, x, t, table);
  const auto r = responsibilities(terms);
  const Eigen::Index d = x.size();
  Vec mean_grad = Vec::Zero(d);
  Mat hess = Mat::Zero(d, d);
  for (std::size_t i = 0; i < terms.size(); ++i) {
    mean_grad += r[i] * terms[i].grad;
    hess += r[i] * (terms[i].grad * terms[i].grad.transpose() - terms[i].precision);
  }
  hess -= mean_grad * mean_grad.transpose();
  return hess;
}

Vec oracle_epsilon(const MixtureWorld& world, const ConditioningSet& cond, const Vec& x, int t,
                   const ScheduleTable& table) {
  return -alpha_beta(table, t).beta * noised_score(world, cond, x, t, table);
}

Vec bayes_log_posterior(const MixtureWorld& world, const Vec& x, int t, const ScheduleTable& table,
                        Mat* jacobian) {
  std::vector<std::size_t> all(world.components().size());
  for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
  const auto terms = evaluate_terms(world, all, x, t, table);
  const int K = world.num_classes();
  Vec log_evidence(K);
  Mat evidence_grad = Mat::Zero(K, x.size());
  std::vector<double> buf;
  for (int c = 0; c < K; ++c) {
    buf.clear();
    for (std::size_t k = 0; k < all.size(); ++k) {
      if (world.components()[k].has_label(c)) buf.push_back(terms[k].log_weighted_pdf);
    }
    log_evidence[c] = log_sum_exp(buf);
    if (jacobian == nullptr) continue;
    for (std::size_t k = 0; k < all.size(); ++k) {
      if (!world.components()[k].has_label(c)) continue;
      const double r = std::exp(terms[k].log_weighted_pdf - log_evidence[c]);
      evidence_grad.row(c) += r * terms[k].grad.transpose();
    }
  }
  const double lse = log_sum_exp(std::span<const double>(log_evidence.data(), log_evidence.size()));
  const Vec log_post = log_evidence.array() - lse;
  if (jacobian != nullptr) {
    const Vec p = log_post.array().exp();
    const Eigen::RowVectorXd mean_grad = p.transpose() * evidence_grad;
    *jacobian = evidence_grad.rowwise() - mean_grad;
  }
  return log_post;
}

Vec bayes_posterior(const MixtureWorld& world, const Vec& x, int t, const ScheduleTable& table) {
  const Vec p = bayes_log_posterior(world, x, t, table).array().exp();
  return p / p.sum();
}

}  // namespace natadiff
