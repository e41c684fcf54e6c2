#include "natadiff/attack.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "natadiff/digest.hpp"

namespace natadiff {

namespace {

struct Sampler {
  const AttackModels& models;
  const AttackConfig& cfg;
  Rng& rng;
  Sha256& digest;
  std::vector<StepEvent>* log;
  int attempt = 0;
  GuidanceParams params;

  // One guided reverse step from sampling index i to i - 1.
  Vec step(const Vec& z, int i, bool renoise_follows, int renoise_to) {
    const auto& times = models.table.sampling_times();
    const int t = times[i];
    const int t_prev = times[i - 1];
    BoundaryGuidedField field(models.predictor, t, cfg.true_class, cfg.target_class, params);
    Vec eps = field.value(z);
    bool adversarial = false;
    if (params.s != 0.0 && params.in_classifier_window(t)) {
      try {
        Vec g = adv_gradient(z, t, models.table, field, models.decoder, models.transforms,
                             models.victim, cfg.target_class);
        eps = apply_adversarial(eps, g, params.s, t, models.table);
        adversarial = true;
      } catch (const DegenerateGradient&) {
      }
    }
    Vec next = ddim_reverse_step(models.table, z, eps, t, t_prev);
    digest.add(next);
    if (log) {
      log->push_back({attempt, t, t_prev, adversarial, renoise_follows,
                      renoise_follows ? renoise_to : -1, params.mu, params.s});
    }
    return next;
  }

  Vec sweep(Vec z) {
    const auto& times = models.table.sampling_times();
    const int last = static_cast<int>(times.size()) - 1;
    for (int i = last; i >= 1; --i) {
      const int reps = cfg.in_time_travel_window(times[i]) ? cfg.repeats : 1;
      for (int r = reps; r >= 1; --r) {
        const int j = std::min(i - 1 + cfg.jump, last);
        Vec prev = step(z, i, r > 1, times[j]);
        if (r == 1) {
          z = std::move(prev);
          break;
        }
        Vec back = resample_bridge(models.table, prev, times[i - 1], times[j], rng);
        digest.add(back);
        for (int m = j; m > i; --m) back = step(back, m, false, -1);
        z = std::move(back);
      }
    }
    return z;
  }
};

}  // namespace

std::string to_string(TargetMode mode) {
  return mode == TargetMode::kTargeted ? "targeted" : "similarity";
}

TargetMode parse_target_mode(const std::string& s) {
  if (s == "targeted") return TargetMode::kTargeted;
  if (s == "similarity") return TargetMode::kSimilarity;
  throw ValidationError("attack.mode", "unknown mode '" + s + "'");
}

void AttackConfig::validate() const {
  guidance.validate();
  if (repeats < 1) throw ValidationError("attack.repeats", "must be >= 1");
  if (jump < 1) throw ValidationError("attack.jump", "must be >= 1");
  if (r_l > r_u) throw ValidationError("attack.r_l", "time-travel window is empty");
  if (attempts < 1) throw ValidationError("attack.attempts", "must be >= 1");
  if (delta_mu < 0.0) throw ValidationError("attack.delta_mu", "must be >= 0");
  if (delta_s < 0.0) throw ValidationError("attack.delta_s", "must be >= 0");
  if (true_class < 0) throw ValidationError("attack.true_class", "must be >= 0");
}

SampleRecord natadiff_run(const AttackModels& models, const AttackConfig& cfg, Rng& rng,
                          std::vector<StepEvent>* log) {
  cfg.validate();
  const int k = models.victim.num_classes();
  if (cfg.true_class >= k) throw ValidationError("attack.true_class", "out of range");
  if (cfg.target_class < 0 || cfg.target_class >= k) {
    throw ValidationError("attack.target_class", "out of range");
  }
  if (cfg.target_class == cfg.true_class) {
    throw ValidationError("attack.target_class", "equals the true class");
  }
  if (models.decoder.input_dim() != models.predictor.dim()) {
    throw ValidationError("attack.decoder", "input dimension does not match the denoiser");
  }

  Sha256 digest;
  Sampler sampler{models, cfg, rng, digest, log, 0, cfg.guidance};

  const Vec z_top = rng.normal_vector(models.predictor.dim());
  digest.add(z_top);

  SampleRecord rec;
  rec.y = cfg.true_class;
  rec.y_tilde = cfg.target_class;
  rec.mode = cfg.mode;
  for (int a = 1; a <= cfg.attempts; ++a) {
    sampler.attempt = a;
    const Vec z0 = sampler.sweep(z_top);
    rec.x = models.decoder.apply(z0);
    rec.attempts = a;
    rec.mu_final = sampler.params.mu;
    rec.s_final = sampler.params.s;
    rec.success = models.victim.predict(rec.x) == cfg.target_class;
    if (rec.success) break;
    if (a < cfg.attempts) {
      sampler.params.mu = std::min(sampler.params.mu + cfg.delta_mu, 1.0);
      sampler.params.s += cfg.delta_s;
    }
  }
  digest.add(static_cast<long long>(rec.attempts));
  rec.digest = digest.hex();
  rec.verdicts[models.victim.name()] = models.victim.predict(rec.x);
  for (const VictimModel* judge : models.judges) rec.verdicts[judge->name()] = judge->predict(rec.x);
  return rec;
}

std::vector<int> candidate_classes(int num_classes, int y) {
  std::vector<int> out;
  for (int c = 0; c < num_classes; ++c) {
    if (c != y) out.push_back(c);
  }
  return out;
}

int similarity_target(int y, const std::vector<int>& candidates, const std::vector<Vec>& embeddings,
                      SimilaritySense sense) {
  if (candidates.empty()) throw ValidationError("attack.candidates", "no candidate classes");
  const int n = static_cast<int>(embeddings.size());
  auto embedding = [&](int c) -> const Vec& {
    if (c < 0 || c >= n) throw LookupError("no embedding for class " + std::to_string(c));
    if (embeddings[c].norm() == 0.0) {
      throw ValidationError("attack.embeddings", "class " + std::to_string(c) + " has zero norm");
    }
    return embeddings[c];
  };
  const Vec& ey = embedding(y);
  int best = -1;
  double best_sim = 0.0;
  std::vector<int> sorted = candidates;
  std::sort(sorted.begin(), sorted.end());
  for (int c : sorted) {
    const Vec& ec = embedding(c);
    const double sim = ey.dot(ec) / (ey.norm() * ec.norm());
    const bool better = sense == SimilaritySense::kMost ? sim > best_sim : sim < best_sim;
    if (best < 0 || better) {
      best = c;
      best_sim = sim;
    }
  }
  return best;
}

SampleRecord natadiff_similarity_run(const AttackModels& models, const AttackConfig& cfg,
                                     const std::vector<Vec>& embeddings, Rng& rng,
                                     std::vector<StepEvent>* log) {
  AttackConfig resolved = cfg;
  resolved.mode = TargetMode::kSimilarity;
  resolved.target_class =
      similarity_target(cfg.true_class, candidate_classes(models.victim.num_classes(), cfg.true_class),
                        embeddings, cfg.similarity_sense);
  return natadiff_run(models, resolved, rng, log);
}

std::vector<Vec> class_mean_embeddings(const MixtureWorld& world) {
  std::vector<Vec> out;
  for (int c = 0; c < world.num_classes(); ++c) out.push_back(world.class_mean(c));
  return out;
}

Vec purify(const Vec& x_adv, int t_star, const NoisePredictor& predictor, const ScheduleTable& table,
           Rng& rng) {
  if (t_star < 0 || t_star > table.num_timesteps()) {
    throw RangeError("purification time " + std::to_string(t_star) + " outside [0, T]");
  }
  if (t_star == 0) return x_adv;
  Vec z = sample_forward(table, x_adv, t_star, rng);
  const auto uncond = ConditioningSet::unconditional();
  const auto& times = table.sampling_times();
  int t = t_star;
  for (auto it = times.rbegin(); it != times.rend(); ++it) {
    if (*it >= t) continue;
    z = ddim_reverse_step(table, z, predictor.epsilon(z, t, uncond), t, *it);
    t = *it;
  }
  return z;
}

std::vector<SampleRecord> run_batch(const AttackModels& models, const AttackConfig& cfg,
                                    const BatchSpec& spec, const std::vector<Vec>& embeddings) {
  if (spec.num_samples < 0) throw ValidationError("attack.num_samples", "must be >= 0");
  std::vector<SampleRecord> out(spec.num_samples);
  const Rng root(cfg.seed);
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    for (int i = next++; i < spec.num_samples; i = next++) {
      try {
        Rng rng = root.fork(static_cast<std::uint64_t>(i));
        AttackConfig c = cfg;
        if (spec.cycle_true_class) c.true_class = i % spec.num_classes;
        SampleRecord rec;
        if (c.mode == TargetMode::kSimilarity) {
          rec = natadiff_similarity_run(models, c, embeddings, rng);
        } else {
          if (cfg.target_class < 0 || cfg.target_class == c.true_class) {
            const auto cands = candidate_classes(spec.num_classes, c.true_class);
            c.target_class = cands[rng.below(cands.size())];
          }
          rec = natadiff_run(models, c, rng);
        }
        rec.id = static_cast<std::size_t>(i);
        out[i] = std::move(rec);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = spec.num_samples;
      }
    }
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(spec.threads, spec.num_samples));
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace natadiff
