#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "natadiff/attack.hpp"
#include "natadiff/config.hpp"
#include "natadiff/denoiser.hpp"

namespace natadiff {

struct VictimSpec {
  std::string name;
  std::string kind;       // bayes | shortcut | mlp | adv_trained
  std::vector<int> keep;  // shortcut cue coordinates
};

struct DenoiserSettings {
  std::vector<int> hidden{128, 128};
  std::uint64_t init_seed = 0;
  TrainConfig train;
};

struct EvalSettings {
  PgdConfig pgd{1.5, 0.1875, 20, true, false};
  int t_star = 100;
  int reference_samples = 2000;
  std::vector<double> mu_list{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  std::string reference_classifier = "bayes";
  std::uint64_t seed = 0;
};

// Everything a config file describes, validated.
struct Experiment {
  ScheduleTable table;
  MixtureWorld world;
  DenoiserSettings denoiser;
  std::vector<VictimSpec> victims;
  VictimTrainConfig victim_train;
  PgdConfig adv_train_pgd{1.0, 0.25, 7, false, true};
  AttackConfig attack;
  std::string attacked_victim;
  int num_samples = 1;
  bool cycle_true_class = true;
  std::string transforms = "default5";
  double transform_shift = 0.1;
  std::vector<Vec> embeddings;  // class means unless a table is given
  EvalSettings eval;
};

// Parses a loaded config, validates every section and rejects unknown keys.
// Parse problems raise ConfigError; semantic violations raise the module's
// ValidationError (or schedule errors).
Experiment load_experiment(const Config& cfg);

ScheduleTable schedule_from(const ConfigSection& s);
MixtureWorld world_from(const Config& cfg);

// Trains or constructs every configured victim. Victim i trains with
// Rng(victim_train.seed).fork(i).
VictimRegistry build_victims(const Experiment& exp);

TransformSet transforms_for(const Experiment& exp);

}  // namespace natadiff
