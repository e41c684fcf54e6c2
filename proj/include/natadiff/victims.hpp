#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "natadiff/mlp.hpp"
#include "natadiff/schedule.hpp"
#include "natadiff/world.hpp"

namespace natadiff {

// A classifier under attack: logits h(x) and their input derivatives.
class VictimModel {
 public:
  virtual ~VictimModel() = default;

  virtual const std::string& name() const = 0;
  virtual int num_classes() const = 0;
  virtual int dim() const = 0;
  virtual Vec logits(const Vec& x) const = 0;
  // d logits / dx, num_classes x d.
  virtual Mat logit_jacobian(const Vec& x) const = 0;

  Vec logit_grad(const Vec& x, int cls) const;
  // u^T (d logits / dx).
  Vec logits_vjp(const Vec& x, const Vec& u) const;
  Vec probabilities(const Vec& x) const;
  int predict(const Vec& x) const;
};

Vec softmax(const Vec& logits);

// Log of the exact class posterior of the (unnoised) world.
class BayesVictim final : public VictimModel {
 public:
  BayesVictim(const MixtureWorld& world, const ScheduleTable& table, std::string name = "bayes")
      : world_(world), table_(table), name_(std::move(name)) {}

  const std::string& name() const override { return name_; }
  int num_classes() const override { return world_.num_classes(); }
  int dim() const override { return world_.dim(); }
  Vec logits(const Vec& x) const override;
  Mat logit_jacobian(const Vec& x) const override;

 private:
  const MixtureWorld& world_;
  const ScheduleTable& table_;
  std::string name_;
};

// logits = W x + b.
class LinearVictim final : public VictimModel {
 public:
  LinearVictim(Mat weight, Vec bias, std::string name = "linear");

  const std::string& name() const override { return name_; }
  int num_classes() const override { return static_cast<int>(weight_.rows()); }
  int dim() const override { return static_cast<int>(weight_.cols()); }
  Vec logits(const Vec& x) const override { return weight_ * x + bias_; }
  Mat logit_jacobian(const Vec&) const override { return weight_; }

 private:
  Mat weight_;
  Vec bias_;
  std::string name_;
};

struct VictimTrainConfig {
  int steps = 1500;
  int batch_size = 128;
  double learning_rate = 1e-2;
  std::vector<int> hidden{32, 32};
  std::uint64_t seed = 0;

  void validate() const;
};

// Low-capacity logistic model that only sees a projection of its input, so it
// can only pick up whatever class signal that cue subspace carries.
class ShortcutVictim final : public VictimModel {
 public:
  ShortcutVictim(Mat projection, Mat weight, Vec bias, std::string name);

  // Keeps coordinates `keep` of a d-dimensional input.
  static Mat coordinate_projection(int dim, const std::vector<int>& keep);

  // Multinomial logistic regression on projected world samples.
  static ShortcutVictim fit(const MixtureWorld& world, Mat projection, std::string name,
                            const VictimTrainConfig& cfg);

  const std::string& name() const override { return name_; }
  int num_classes() const override { return static_cast<int>(weight_.rows()); }
  int dim() const override { return static_cast<int>(projection_.cols()); }
  Vec logits(const Vec& x) const override { return weight_ * (projection_ * x) + bias_; }
  Mat logit_jacobian(const Vec&) const override { return weight_ * projection_; }

  const Mat& projection() const { return projection_; }

 private:
  Mat projection_;  // d' x d
  Mat weight_;      // K x d'
  Vec bias_;
  std::string name_;
};

// Full-input MLP classifier; `kind` is "trained_mlp" or "adv_trained".
class MlpVictim final : public VictimModel {
 public:
  MlpVictim(Mlp mlp, std::string name, std::string kind = "trained_mlp");

  const std::string& name() const override { return name_; }
  const std::string& kind() const { return kind_; }
  int num_classes() const override { return mlp_.output_dim(); }
  int dim() const override { return mlp_.input_dim(); }
  Vec logits(const Vec& x) const override { return mlp_.forward(x).col(0); }
  Mat logit_jacobian(const Vec& x) const override;

  const Mlp& mlp() const { return mlp_; }
  Mlp& mutable_mlp() { return mlp_; }

 private:
  Mlp mlp_;
  std::string name_;
  std::string kind_;
};

struct PgdConfig {
  double epsilon = 0.5;  // L-infinity budget
  double step_size = 0.1;
  int steps = 20;
  bool targeted = true;
  bool random_start = false;

  void validate() const;
};

// Signed-gradient steps on log softmax, projected onto the L-infinity ball
// after every step. Targeted mode ascends log p(label | x); untargeted mode
// descends it. The rng is only consumed when random_start is set.
Vec pgd_attack(const VictimModel& victim, const Vec& x, int label, const PgdConfig& cfg, Rng& rng);

// Untrained MLP victim with the architecture in `cfg`.
MlpVictim make_mlp_victim(const MixtureWorld& world, const VictimTrainConfig& cfg,
                          std::string name);

// Cross-entropy training on labeled world samples.
MlpVictim train_victim(const MlpVictim& victim_template, const MixtureWorld& world,
                       const VictimTrainConfig& cfg);

// Saddle-point training: every batch is replaced by untargeted PGD points
// crafted against the current weights before the gradient step.
MlpVictim adversarial_train(const MlpVictim& victim_template, const MixtureWorld& world,
                            const PgdConfig& pgd, const VictimTrainConfig& cfg);

// Largest coordinate deviation between logit_grad and central differences,
// relative to the larger gradient magnitude.
double finite_diff_check(const VictimModel& victim, const Vec& x, int cls, double step);

// Fraction of points whose prediction lies in their label set.
double accuracy(const VictimModel& victim, const std::vector<LabeledPoint>& points);

// Draws a training/evaluation label uniformly from a point's label set.
int draw_label(const std::vector<int>& labels, Rng& rng);

class VictimRegistry {
 public:
  void add(std::shared_ptr<const VictimModel> victim);
  const VictimModel& get(const std::string& name) const;
  std::shared_ptr<const VictimModel> shared(const std::string& name) const;
  bool contains(const std::string& name) const { return victims_.count(name) != 0; }
  std::vector<std::string> names() const;

 private:
  std::map<std::string, std::shared_ptr<const VictimModel>> victims_;
};

void save_checkpoint(std::ostream& out, const MlpVictim& victim);
MlpVictim load_victim_checkpoint(std::istream& in);

}  // namespace natadiff
