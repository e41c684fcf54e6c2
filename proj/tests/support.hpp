#pragma once

// Shared fixtures and independent reference implementations for the tests.

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "natadiff/attack.hpp"
#include "natadiff/experiment.hpp"

namespace natadiff::testing {

inline std::filesystem::path data_dir() { return NATADIFF_DATA_DIR; }
inline std::string demo_config() { return (data_dir() / "demo.cfg").string(); }

inline Experiment demo_experiment() { return load_experiment(Config::load(demo_config())); }

// Density of N(mean, cov) at x via explicit inverse and determinant.
inline double gaussian_pdf(const Vec& x, const Vec& mean, const Mat& cov) {
  const Eigen::FullPivLU<Mat> lu(cov);
  const Vec d = x - mean;
  const double quad = d.dot(lu.inverse() * d);
  const double norm = std::pow(2.0 * std::numbers::pi, 0.5 * static_cast<double>(x.size())) *
                      std::sqrt(lu.determinant());
  return std::exp(-0.5 * quad) / norm;
}

// Plain sum over components carrying every requested label (none = all).
inline double brute_mixture_pdf(const MixtureWorld& w, const std::vector<int>& need, const Vec& x,
                                double alpha, double beta) {
  double num = 0.0;
  double den = 0.0;
  const Mat eye = Mat::Identity(w.dim(), w.dim());
  for (const auto& c : w.components()) {
    bool ok = true;
    for (int l : need) ok = ok && c.has_label(l);
    if (!ok) continue;
    num += c.weight * gaussian_pdf(x, alpha * c.mean, alpha * alpha * c.cov + beta * beta * eye);
    den += c.weight;
  }
  return num / den;
}

// Posterior over classes where a component counts toward each of its labels.
inline Vec brute_posterior(const MixtureWorld& w, const Vec& x, double alpha, double beta) {
  Vec p = Vec::Zero(w.num_classes());
  const Mat eye = Mat::Identity(w.dim(), w.dim());
  for (const auto& c : w.components()) {
    const double m =
        c.weight * gaussian_pdf(x, alpha * c.mean, alpha * alpha * c.cov + beta * beta * eye);
    for (int l : c.labels) p[l] += m;
  }
  return p / p.sum();
}

// Frechet distance through the eigenvalues of the (non-symmetric) product
// S_a S_b, whose square roots sum to tr((S_a S_b)^{1/2}).
inline double spectral_frechet(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  auto moments = [](const std::vector<Vec>& pts, Vec& mean, Mat& cov) {
    const auto n = static_cast<double>(pts.size());
    mean = Vec::Zero(pts[0].size());
    for (const auto& p : pts) mean += p;
    mean /= n;
    cov = Mat::Zero(mean.size(), mean.size());
    for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
    cov /= n - 1.0;
  };
  Vec ma, mb;
  Mat sa, sb;
  moments(a, ma, sa);
  moments(b, mb, sb);
  const Eigen::EigenSolver<Mat> es(sa * sb);
  double tr = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    tr += std::sqrt(std::max(es.eigenvalues()[i].real(), 0.0));
  }
  return (ma - mb).squaredNorm() + sa.trace() + sb.trace() - 2.0 * tr;
}

// Deterministic classifier-free sampler written directly from the update
// rule: z_T ~ N(0, I), then DDIM steps with eps_u + omega (eps_y - eps_u).
inline Vec reference_cfg_sample(const NoisePredictor& p, const ScheduleTable& table, int y,
                                double omega, Rng& rng) {
  Vec z = rng.normal_vector(p.dim());
  const auto& ts = table.sampling_times();
  for (std::size_t i = ts.size() - 1; i >= 1; --i) {
    const int t = ts[i];
    const int tp = ts[i - 1];
    const Vec eu = p.epsilon(z, t, ConditioningSet::unconditional());
    const Vec ey = p.epsilon(z, t, ConditioningSet::single(y));
    const Vec e = eu + omega * (ey - eu);
    const double ab = table.alpha_bar(t);
    const double abp = table.alpha_bar(tp);
    const Vec x0 = (z - std::sqrt(1.0 - ab) * e) / std::sqrt(ab);
    z = std::sqrt(abp) * x0 + std::sqrt(1.0 - abp) * e;
  }
  return z;
}

// Mean and covariance of the components carrying label y, weights renormalized.
inline void conditional_moments(const MixtureWorld& w, int y, Vec& mean, Mat& cov) {
  double total = 0.0;
  mean = Vec::Zero(w.dim());
  for (const auto& c : w.components()) {
    if (!c.has_label(y)) continue;
    total += c.weight;
    mean += c.weight * c.mean;
  }
  mean /= total;
  cov = Mat::Zero(w.dim(), w.dim());
  for (const auto& c : w.components()) {
    if (!c.has_label(y)) continue;
    cov += c.weight / total * (c.cov + (c.mean - mean) * (c.mean - mean).transpose());
  }
}

inline void sample_moments(const std::vector<Vec>& pts, Vec& mean, Mat& cov) {
  const auto n = static_cast<double>(pts.size());
  mean = Vec::Zero(pts[0].size());
  for (const auto& p : pts) mean += p;
  mean /= n;
  cov = Mat::Zero(mean.size(), mean.size());
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  cov /= n - 1.0;
}

}  // namespace natadiff::testing
