#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "natadiff/guidance.hpp"

namespace natadiff {

enum class TargetMode { kTargeted, kSimilarity };
enum class SimilaritySense { kMost, kLeast };

std::string to_string(TargetMode mode);
TargetMode parse_target_mode(const std::string& s);

struct AttackConfig {
  GuidanceParams guidance;
  int repeats = 5;  // time-travel repeats R
  int jump = 1;     // time-travel jump k, in sampling-time indices
  int r_l = 500;    // time-travel window, inclusive
  int r_u = 800;
  int attempts = 5;  // S
  double delta_mu = 0.0;
  double delta_s = 0.0;
  int true_class = 0;
  TargetMode mode = TargetMode::kTargeted;
  int target_class = -1;  // targeted mode only
  SimilaritySense similarity_sense = SimilaritySense::kMost;
  std::uint64_t seed = 0;

  void validate() const;
  bool in_time_travel_window(int t) const { return r_l <= t && t <= r_u; }
};

struct SampleRecord {
  std::size_t id = 0;
  Vec x;  // decoded final sample
  int y = -1;
  int y_tilde = -1;
  TargetMode mode = TargetMode::kTargeted;
  int attempts = 0;
  double mu_final = 0.0;
  double s_final = 0.0;
  bool success = false;  // attacked victim's argmax == y_tilde
  std::map<std::string, int> verdicts;  // victim name -> argmax class
  std::string digest;                   // SHA-256 of the trajectory
};

// One executed reverse step, for auditing window discipline.
struct StepEvent {
  int attempt;
  int t;
  int t_prev;
  bool adversarial;  // classifier term applied
  bool renoised;     // followed by a time-travel bridge draw
  int renoise_to;    // target time of that draw, -1 if none
  double mu;
  double s;
};

// Read-only models shared by every run of a batch.
struct AttackModels {
  const NoisePredictor& predictor;
  const VictimModel& victim;
  const ScheduleTable& table;
  const Decoder& decoder;
  const TransformSet& transforms;
  std::vector<const VictimModel*> judges;  // extra victims recorded in verdicts
};

// Guided sampling with adversarial boundary guidance, the normalized
// adversarial classifier term, time travel and escalation over attempts.
// cfg.mode must be kTargeted with target_class resolved.
SampleRecord natadiff_run(const AttackModels& models, const AttackConfig& cfg, Rng& rng,
                          std::vector<StepEvent>* log = nullptr);

// Candidate whose embedding has the largest (kMost) or smallest (kLeast)
// cosine similarity to the embedding of y; ties go to the smallest id.
int similarity_target(int y, const std::vector<int>& candidates, const std::vector<Vec>& embeddings,
                      SimilaritySense sense = SimilaritySense::kMost);

// Every class except y.
std::vector<int> candidate_classes(int num_classes, int y);

// Resolves the target by similarity over all other classes, then delegates.
SampleRecord natadiff_similarity_run(const AttackModels& models, const AttackConfig& cfg,
                                     const std::vector<Vec>& embeddings, Rng& rng,
                                     std::vector<StepEvent>* log = nullptr);

// Class-conditional data means, the default similarity embeddings.
std::vector<Vec> class_mean_embeddings(const MixtureWorld& world);

// Forward-noise to t_star, then an unconditional deterministic reverse sweep
// over the sampling times below t_star.
Vec purify(const Vec& x_adv, int t_star, const NoisePredictor& predictor, const ScheduleTable& table,
           Rng& rng);

struct BatchSpec {
  int num_samples = 1;
  bool cycle_true_class = true;  // y = i mod K, otherwise cfg.true_class
  int num_classes = 1;
  unsigned threads = 1;
};

// Runs num_samples independent attacks; sample i uses Rng(cfg.seed).fork(i).
// In targeted mode without an explicit target, the target is drawn uniformly
// from the other classes using that sample's stream.
std::vector<SampleRecord> run_batch(const AttackModels& models, const AttackConfig& cfg,
                                    const BatchSpec& spec, const std::vector<Vec>& embeddings);

}  // namespace natadiff
