#include "natadiff/eval.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

namespace natadiff {

namespace {

void require_samples(std::size_t n) {
  if (n == 0) throw ValidationError("eval.samples", "no samples");
}

struct Moments {
  Vec mean;
  Mat cov;
};

Moments moments(const std::vector<Vec>& pts) {
  const int d = static_cast<int>(pts.front().size());
  if (static_cast<int>(pts.size()) < d + 1) {
    throw ValidationError("eval.frechet", "need at least d+1 points per set");
  }
  Mat x(d, pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].size() != d) throw ValidationError("eval.frechet", "mixed dimensions");
    x.col(i) = pts[i];
  }
  Moments m;
  m.mean = x.rowwise().mean();
  Mat centered = x.colwise() - m.mean;
  m.cov = centered * centered.transpose() / static_cast<double>(pts.size() - 1);
  return m;
}

bool regularize(Mat& cov) {
  Eigen::SelfAdjointEigenSolver<Mat> es(cov, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() > 0.0) return false;
  cov += 1e-10 * Mat::Identity(cov.rows(), cov.cols());
  return true;
}

}  // namespace

double asr(const std::vector<SampleRecord>& samples, const VictimModel& victim) {
  require_samples(samples.size());
  std::size_t hits = 0;
  for (const auto& s : samples) hits += victim.predict(s.x) == s.y_tilde;
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

double untargeted_asr(const std::vector<SampleRecord>& samples, const VictimModel& victim) {
  require_samples(samples.size());
  std::size_t hits = 0;
  for (const auto& s : samples) hits += victim.predict(s.x) != s.y;
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

double accuracy_on(const std::vector<SampleRecord>& samples, const VictimModel& victim) {
  return 1.0 - untargeted_asr(samples, victim);
}

double adjusted_asr(const std::vector<AlignedPair>& pairs, const VictimModel& victim, AsrMode mode) {
  std::size_t correct = 0;
  std::size_t hits = 0;
  for (const auto& p : pairs) {
    if (victim.predict(p.clean) != p.y) continue;
    ++correct;
    const int pred = victim.predict(p.adv);
    hits += mode == AsrMode::kTargeted ? pred == p.y_tilde : pred != p.y;
  }
  if (correct == 0) throw UndefinedRate("victim misclassifies every clean sample");
  return static_cast<double>(hits) / static_cast<double>(correct);
}

FrechetResult frechet_distance(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  if (a.empty() || b.empty()) throw ValidationError("eval.frechet", "empty point set");
  Moments ma = moments(a);
  Moments mb = moments(b);
  if (ma.mean.size() != mb.mean.size()) throw ValidationError("eval.frechet", "mixed dimensions");
  FrechetResult out;
  out.regularized = regularize(ma.cov);
  out.regularized = regularize(mb.cov) || out.regularized;

  Eigen::SelfAdjointEigenSolver<Mat> ea(ma.cov);
  const Vec root = ea.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Mat sqrt_a = ea.eigenvectors() * root.asDiagonal() * ea.eigenvectors().transpose();
  Mat inner = sqrt_a * mb.cov * sqrt_a;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> ei(inner, Eigen::EigenvaluesOnly);
  const double tr_sqrt = ei.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  const double value =
      (ma.mean - mb.mean).squaredNorm() + ma.cov.trace() + mb.cov.trace() - 2.0 * tr_sqrt;
  out.value = std::max(value, 0.0);
  return out;
}

double entropy_score(const std::vector<Vec>& points, const VictimModel& reference) {
  if (points.empty()) throw ValidationError("eval.entropy", "no samples");
  const int k = reference.num_classes();
  std::vector<Vec> probs;
  Vec marginal = Vec::Zero(k);
  for (const auto& x : points) {
    probs.push_back(reference.probabilities(x));
    marginal += probs.back();
  }
  marginal /= static_cast<double>(points.size());
  double kl_sum = 0.0;
  for (const auto& p : probs) {
    for (int c = 0; c < k; ++c) {
      if (p[c] > 0.0) kl_sum += p[c] * (std::log(p[c]) - std::log(marginal[c]));
    }
  }
  return std::exp(kl_sum / static_cast<double>(points.size()));
}

TransferMatrix transfer_matrix(const std::map<std::string, std::vector<SampleRecord>>& sample_sets,
                               const std::vector<const VictimModel*>& victims) {
  TransferMatrix tm;
  for (const auto* v : victims) tm.evaluated_on.push_back(v->name());
  for (const auto* v : victims) {
    if (sample_sets.count(v->name())) tm.crafted_on.push_back(v->name());
  }
  for (const auto& [name, _] : sample_sets) {
    if (std::find(tm.crafted_on.begin(), tm.crafted_on.end(), name) == tm.crafted_on.end()) {
      tm.crafted_on.push_back(name);
    }
  }
  tm.asr = Mat::Zero(tm.crafted_on.size(), victims.size());
  for (std::size_t r = 0; r < tm.crafted_on.size(); ++r) {
    const auto& set = sample_sets.at(tm.crafted_on[r]);
    for (std::size_t c = 0; c < victims.size(); ++c) tm.asr(r, c) = asr(set, *victims[c]);
  }
  return tm;
}

std::vector<AblationRow> mu_ablation(const AttackModels& models, const AttackConfig& base,
                                     const BatchSpec& spec, const std::vector<Vec>& embeddings,
                                     const std::vector<double>& mu_list,
                                     const std::vector<const VictimModel*>& victims,
                                     const std::vector<Vec>& reference) {
  std::vector<AblationRow> rows;
  for (double mu : mu_list) {
    if (!(mu >= 0.0 && mu <= 1.0)) throw ValidationError("eval.mu_list", "mu outside [0, 1]");
    AttackConfig cfg = base;
    cfg.guidance.mu = mu;
    const auto samples = run_batch(models, cfg, spec, embeddings);
    AblationRow row;
    row.mu = mu;
    for (const auto* v : victims) {
      row.asr[v->name()] = asr(samples, *v);
      row.accuracy[v->name()] = accuracy_on(samples, *v);
    }
    const auto d = static_cast<std::size_t>(models.predictor.dim());
    if (samples.size() > d && reference.size() > d) {
      row.frechet = frechet_distance(points_of(samples), reference).value;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<Vec> points_of(const std::vector<SampleRecord>& samples) {
  std::vector<Vec> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.x);
  return out;
}

}  // namespace natadiff
