#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "natadiff/attack.hpp"

namespace natadiff {

enum class AsrMode { kTargeted, kUntargeted };

// Fraction of records the victim classifies as their target y_tilde.
double asr(const std::vector<SampleRecord>& samples, const VictimModel& victim);

// Fraction of records the victim classifies as anything but y.
double untargeted_asr(const std::vector<SampleRecord>& samples, const VictimModel& victim);

struct AlignedPair {
  Vec clean;
  Vec adv;
  int y;
  int y_tilde;  // ignored in untargeted mode
};

// Rates over the pairs whose clean point the victim gets right. Throws
// UndefinedRate when there are none.
double adjusted_asr(const std::vector<AlignedPair>& pairs, const VictimModel& victim, AsrMode mode);

// Fraction of points the victim classifies as their true class.
double accuracy_on(const std::vector<SampleRecord>& samples, const VictimModel& victim);

struct FrechetResult {
  double value = 0.0;
  bool regularized = false;  // a covariance was singular and got 1e-10 I added
};

FrechetResult frechet_distance(const std::vector<Vec>& a, const std::vector<Vec>& b);

// exp of the mean KL between per-sample class posteriors and their average.
double entropy_score(const std::vector<Vec>& points, const VictimModel& reference);

struct TransferMatrix {
  std::vector<std::string> crafted_on;  // rows
  std::vector<std::string> evaluated_on;  // columns
  Mat asr;
};

// Targeted ASR of each sample set (keyed by crafting victim) on every victim.
TransferMatrix transfer_matrix(const std::map<std::string, std::vector<SampleRecord>>& sample_sets,
                               const std::vector<const VictimModel*>& victims);

struct AblationRow {
  double mu = 0.0;
  std::map<std::string, double> asr;
  std::map<std::string, double> accuracy;
  std::optional<double> frechet;  // absent without enough points or a reference
};

// One batch per mu with the same seed, so sample i shares its initial noise
// across rows. Frechet distance is against `reference` when each set has
// more points than dimensions.
std::vector<AblationRow> mu_ablation(const AttackModels& models, const AttackConfig& base,
                                     const BatchSpec& spec, const std::vector<Vec>& embeddings,
                                     const std::vector<double>& mu_list,
                                     const std::vector<const VictimModel*>& victims,
                                     const std::vector<Vec>& reference);

struct VictimMetrics {
  std::string victim;
  double asr = 0.0;
  double untargeted_asr = 0.0;
  double accuracy = 0.0;
  std::optional<double> adjusted_targeted;
  std::optional<double> adjusted_untargeted;
};

struct MetricReport {
  std::size_t count = 0;
  std::vector<VictimMetrics> victims;
  std::optional<FrechetResult> frechet;
  std::optional<double> entropy;
};

std::vector<Vec> points_of(const std::vector<SampleRecord>& samples);

}  // namespace natadiff
