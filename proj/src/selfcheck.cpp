#include "natadiff/selfcheck.hpp"

#include <cmath>
#include <sstream>

namespace natadiff {

namespace {

std::string fmt(const char* label, double v) {
  std::ostringstream os;
  os << label << ' ' << v;
  return os.str();
}

CheckResult check(std::string name, double value, double tol, const char* label) {
  return {std::move(name), value <= tol, fmt(label, value)};
}

}  // namespace

std::vector<CheckResult> run_self_checks(const Experiment& exp, const VictimRegistry& victims) {
  std::vector<CheckResult> out;
  const auto& table = exp.table;
  const int T = table.num_timesteps();

  double vp = 0.0;
  for (int t = 0; t <= T; ++t) {
    const auto ab = alpha_beta(table, t);
    vp = std::max(vp, std::abs(ab.alpha * ab.alpha + ab.beta * ab.beta - 1.0));
  }
  out.push_back(check("schedule: variance-preserving identity", vp, 1e-12, "max deviation"));

  double bridge = 0.0;
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) {
      const int tau = i * T / 10;
      const int t = std::min(T, tau + 1 + j * (T - tau) / 10);
      const auto p = bridge_params(table, tau, t);
      const double bt = alpha_beta(table, tau).beta;
      const double b = alpha_beta(table, t).beta;
      bridge = std::max(bridge, std::abs(p.a * p.a * bt * bt + p.b_sq - b * b));
    }
  }
  out.push_back(check("schedule: bridge consistency", bridge, 1e-10, "max deviation"));

  Rng rng(exp.eval.seed);
  const auto& world = exp.world;
  const auto uncond = ConditioningSet::unconditional();
  double score_err = 0.0;
  double post_err = 0.0;
  for (int i = 0; i < 10; ++i) {
    const int t = static_cast<int>(rng.below(static_cast<std::uint64_t>(T)));
    const Vec x = sample_forward(table, sample_data(world, uncond, rng).x, t, rng);
    const Vec score = noised_score(world, uncond, x, t, table);
    const double h = 1e-5;
    for (int k = 0; k < world.dim(); ++k) {
      Vec xp = x, xm = x;
      xp[k] += h;
      xm[k] -= h;
      const double fd = (noised_log_density(world, uncond, xp, t, table) -
                         noised_log_density(world, uncond, xm, t, table)) /
                        (2 * h);
      score_err = std::max(score_err, std::abs(fd - score[k]) / std::max(1.0, std::abs(score[k])));
    }
    post_err = std::max(post_err, std::abs(bayes_posterior(world, x, t, table).sum() - 1.0));
  }
  out.push_back(check("world: score vs finite differences", score_err, 1e-5, "max rel error"));
  out.push_back(check("world: posterior normalization", post_err, 1e-12, "max deviation"));

  for (const auto& name : victims.names()) {
    const auto& v = victims.get(name);
    double err = 0.0;
    for (int i = 0; i < 5; ++i) {
      const Vec x = sample_data(world, uncond, rng).x;
      err = std::max(err, finite_diff_check(v, x, static_cast<int>(i % v.num_classes()), 1e-5));
    }
    out.push_back(check("victim " + name + ": logit gradient", err, 1e-5, "max rel error"));
  }

  const OracleNoisePredictor oracle(world, table);
  const auto& victim = victims.get(exp.attacked_victim);
  const auto decoder = Decoder::identity(world.dim());
  const auto transforms = transforms_for(exp);
  const int y = 0;
  const int y_tilde = world.num_classes() > 1 ? 1 : 0;
  double norm_err = 0.0;
  double worst_cos = 1.0;
  if (y_tilde != y) {
    for (int i = 0; i < 5; ++i) {
      const int t = 100 + static_cast<int>(rng.below(static_cast<std::uint64_t>(T - 200)));
      const Vec x = sample_forward(table, sample_data(world, uncond, rng).x, t, rng);
      GuidanceParams gp = exp.attack.guidance;
      const BoundaryGuidedField field(oracle, t, y, y_tilde, gp);
      const Vec g = adv_gradient(x, t, table, field, decoder, transforms, victim, y_tilde);
      norm_err = std::max(norm_err, std::abs(g.norm() - 1.0));
      Vec fd(x.size());
      const double h = 1e-5;
      for (int k = 0; k < x.size(); ++k) {
        Vec xp = x, xm = x;
        xp[k] += h;
        xm[k] -= h;
        fd[k] = (adversarial_log_prob(xp, t, table, field, decoder, transforms, victim, y_tilde) -
                 adversarial_log_prob(xm, t, table, field, decoder, transforms, victim, y_tilde)) /
                (2 * h);
      }
      if (fd.norm() > 1e-9) worst_cos = std::min(worst_cos, g.dot(fd) / fd.norm());
    }
  }
  out.push_back(check("guidance: adversarial gradient unit norm", norm_err, 1e-9, "max deviation"));
  out.push_back({"guidance: adversarial gradient vs finite differences", worst_cos >= 0.999,
                 fmt("min cosine", worst_cos)});
  return out;
}

}  // namespace natadiff
