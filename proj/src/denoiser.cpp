#include "natadiff/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <set>

#include "natadiff/checkpoint.hpp"

namespace natadiff {

DenoiserNet::DenoiserNet(int dim, int num_classes, int num_timesteps,
                         std::vector<std::pair<int, int>> pairs, std::vector<int> hidden,
                         Rng* init)
    : dim_(dim), num_classes_(num_classes), num_timesteps_(num_timesteps), pairs_(std::move(pairs)) {
  if (dim_ < 1 || num_classes_ < 1 || num_timesteps_ < 1) {
    throw ValidationError("denoiser.shape", "dim, num_classes and num_timesteps must be positive");
  }
  std::vector<int> widths{dim_ + kTimeFeatures + kTokenDim};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(dim_);
  mlp = Mlp(widths, Activation::kTanh, init);
  input_shift = Vec::Zero(dim_);

  const int n_tokens = num_classes_ + 1 + static_cast<int>(pairs_.size());
  tokens = Mat::Zero(kTokenDim, n_tokens);
  if (init != nullptr) {
    for (int c = 0; c <= num_classes_; ++c) {
      for (int r = 0; r < kTokenDim; ++r) tokens(r, c) = init->normal();
    }
  }
  for (std::size_t j = 0; j < pairs_.size(); ++j) {
    const auto [a, b] = pairs_[j];
    if (a == b || a < 0 || b < 0 || a >= num_classes_ || b >= num_classes_) {
      throw ValidationError("denoiser.pairs", "invalid intersection pair");
    }
    const int col = num_classes_ + 1 + static_cast<int>(j);
    if (!pair_index_.emplace(pairs_[j], col).second) {
      throw ValidationError("denoiser.pairs", "duplicate intersection pair");
    }
    tokens.col(col) = 0.5 * (tokens.col(a) + tokens.col(b));
  }
}

DenoiserNet DenoiserNet::for_world(const MixtureWorld& world, int num_timesteps,
                                   std::vector<int> hidden, Rng* init) {
  std::set<std::pair<int, int>> used;
  for (const auto& c : world.components()) {
    for (int a : c.labels) {
      for (int b : c.labels) {
        if (a != b) used.emplace(a, b);
      }
    }
  }
  DenoiserNet net(world.dim(), world.num_classes(), num_timesteps,
                  std::vector<std::pair<int, int>>(used.begin(), used.end()), std::move(hidden),
                  init);
  net.input_shift = world.data_mean();
  double spread = 0.0;
  for (const auto& c : world.components()) {
    spread += c.weight * (c.cov.trace() + (c.mean - net.input_shift).squaredNorm());
  }
  // Noised inputs spread at least as wide as unit noise.
  net.input_scale = std::max(1.0, std::sqrt(spread / world.dim()));
  return net;
}

int DenoiserNet::token_index(const ConditioningSet& cond) const {
  switch (cond.mode()) {
    case ConditioningSet::Mode::kUnconditional:
      return num_classes_;
    case ConditioningSet::Mode::kSingle:
      if (cond.y() < 0 || cond.y() >= num_classes_) throw LookupError("no token for class");
      return cond.y();
    case ConditioningSet::Mode::kIntersection: {
      const auto it = pair_index_.find({cond.y_tilde(), cond.y()});
      if (it == pair_index_.end()) {
        throw LookupError("no intersection token for (" + std::to_string(cond.y_tilde()) + ", " +
                          std::to_string(cond.y()) + ")");
      }
      return it->second;
    }
  }
  throw LookupError("unknown conditioning mode");
}

bool DenoiserNet::has_token(const ConditioningSet& cond) const {
  switch (cond.mode()) {
    case ConditioningSet::Mode::kUnconditional:
      return true;
    case ConditioningSet::Mode::kSingle:
      return cond.y() >= 0 && cond.y() < num_classes_;
    case ConditioningSet::Mode::kIntersection:
      return pair_index_.count({cond.y_tilde(), cond.y()}) > 0;
  }
  return false;
}

Vec DenoiserNet::time_features(int t) const {
  const double tau = static_cast<double>(t) / num_timesteps_;
  Vec f(kTimeFeatures);
  for (int i = 0; i < kTimeFeatures / 2; ++i) {
    const double w = std::numbers::pi * std::ldexp(1.0, i);
    f[2 * i] = std::sin(w * tau);
    f[2 * i + 1] = std::cos(w * tau);
  }
  return f;
}

Mat DenoiserNet::assemble_input(const Mat& x, std::span<const int> t,
                                std::span<const int> token) const {
  const Eigen::Index batch = x.cols();
  if (x.rows() != dim_) throw RangeError("denoiser input dimension mismatch");
  if (static_cast<Eigen::Index>(t.size()) != batch ||
      static_cast<Eigen::Index>(token.size()) != batch) {
    throw RangeError("denoiser batch size mismatch");
  }
  Mat in(dim_ + kTimeFeatures + kTokenDim, batch);
  in.topRows(dim_) = (x.colwise() - input_shift) / input_scale;
  for (Eigen::Index b = 0; b < batch; ++b) {
    const auto i = static_cast<std::size_t>(b);
    if (token[i] < 0 || token[i] >= num_tokens()) throw LookupError("token index out of range");
    in.block(dim_, b, kTimeFeatures, 1) = time_features(t[i]);
    in.block(dim_ + kTimeFeatures, b, kTokenDim, 1) = tokens.col(token[i]);
  }
  return in;
}

Vec DenoiserNet::forward(const Vec& x, int t, const ConditioningSet& cond, Tape* tape) const {
  const int tok = token_index(cond);
  return forward_batch(x, std::span<const int>(&t, 1), std::span<const int>(&tok, 1), tape).col(0);
}

Mat DenoiserNet::forward_batch(const Mat& x, std::span<const int> t, std::span<const int> token,
                               Tape* tape) const {
  const Mat in = assemble_input(x, t, token);
  if (tape != nullptr) {
    tape->tokens.assign(token.begin(), token.end());
    tape->recorded = false;
  }
  Mat out = mlp.forward(in, tape != nullptr ? &tape->mlp : nullptr);
  if (tape != nullptr) tape->recorded = true;
  return out;
}

DenoiserNet::Gradients DenoiserNet::backward(const Tape& tape, const Mat& upstream) const {
  if (!tape.recorded) throw StateError("backward called without a recorded forward pass");
  Gradients g;
  g.mlp = mlp.backward(tape.mlp, upstream);
  g.x = g.mlp.input.topRows(dim_) / input_scale;
  g.tokens = Mat::Zero(kTokenDim, num_tokens());
  for (std::size_t b = 0; b < tape.tokens.size(); ++b) {
    g.tokens.col(tape.tokens[b]) +=
        g.mlp.input.block(dim_ + kTimeFeatures, static_cast<Eigen::Index>(b), kTokenDim, 1);
  }
  return g;
}

Vec LearnedNoisePredictor::epsilon(const Vec& x, int t, const ConditioningSet& cond) const {
  return net_.forward(x, t, cond);
}

Vec LearnedNoisePredictor::epsilon_vjp(const Vec& x, int t, const ConditioningSet& cond,
                                       const Vec& u) const {
  DenoiserNet::Tape tape;
  net_.forward(x, t, cond, &tape);
  return net_.backward(tape, u).x.col(0);
}

void TrainConfig::validate() const {
  if (steps < 0) throw ValidationError("denoiser.steps", "must be nonnegative");
  if (batch_size < 1) throw ValidationError("denoiser.batch", "must be positive");
  if (!(learning_rate >= 0.0)) throw ValidationError("denoiser.lr", "must be nonnegative");
  if (!(final_lr_fraction >= 0.0 && final_lr_fraction <= 1.0)) {
    throw ValidationError("denoiser.final_lr_fraction", "must lie in [0, 1]");
  }
  if (!(drop_prob >= 0.0 && drop_prob < 1.0)) {
    throw ValidationError("denoiser.drop_prob", "must lie in [0, 1)");
  }
}

TrainResult train(DenoiserNet& net, const MixtureWorld& world, const ScheduleTable& table,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (net.dim() != world.dim() || net.num_classes() != world.num_classes() ||
      net.num_timesteps() != table.num_timesteps()) {
    throw ValidationError("denoiser.shape", "network does not match world/schedule");
  }
  // Conditioning sets addressable by a non-unconditional token.
  std::vector<std::pair<int, ConditioningSet>> conditioned;
  for (int c = 0; c < world.num_classes(); ++c) {
    conditioned.emplace_back(c, ConditioningSet::single(c));
  }
  for (const auto& [y_tilde, y] : net.pairs()) {
    const auto cond = ConditioningSet::intersection(y, y_tilde);
    conditioned.emplace_back(net.token_index(cond), cond);
  }
  const int uncond_token = net.token_index(ConditioningSet::unconditional());

  Rng rng(cfg.seed);
  Adam adam(cfg.learning_rate);
  TrainResult result;
  result.loss.reserve(static_cast<std::size_t>(cfg.steps));
  const int T = table.num_timesteps();
  const int d = world.dim();
  const int B = cfg.batch_size;
  Mat xt(d, B);
  Mat eps(d, B);
  Vec weight(B);
  std::vector<int> ts(static_cast<std::size_t>(B));
  std::vector<int> toks(static_cast<std::size_t>(B));

  for (int step = 0; step < cfg.steps; ++step) {
    for (int b = 0; b < B; ++b) {
      const auto i = static_cast<std::size_t>(b);
      ConditioningSet cond = ConditioningSet::unconditional();
      if (rng.uniform() < cfg.drop_prob) {
        toks[i] = uncond_token;
      } else {
        const auto& pick = conditioned[rng.below(conditioned.size())];
        toks[i] = pick.first;
        cond = pick.second;
      }
      const Vec x0 = sample_data(world, cond, rng).x;
      ts[i] = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(T)));
      const auto [alpha, beta] = alpha_beta(table, ts[i]);
      eps.col(b) = rng.normal_vector(d);
      xt.col(b) = alpha * x0 + beta * eps.col(b);
      weight[b] = cfg.weighting == LossWeighting::kX0 ? (beta * beta) / (alpha * alpha) : 1.0;
    }
    DenoiserNet::Tape tape;
    const Mat out = net.forward_batch(xt, ts, toks, &tape);
    const Mat resid = out - eps;
    const Vec per_sample = resid.colwise().squaredNorm().transpose();
    const double loss = per_sample.dot(weight) / B;
    if (!std::isfinite(loss)) {
      throw TrainingFailure("non-finite loss at step " + std::to_string(step));
    }
    result.loss.push_back(loss);
    const Mat upstream = resid * (2.0 * weight / B).asDiagonal();
    const auto grads = net.backward(tape, upstream);
    const double progress = static_cast<double>(step) / std::max(cfg.steps - 1, 1);
    const double decay = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    adam.set_learning_rate(cfg.learning_rate *
                           (cfg.final_lr_fraction + (1.0 - cfg.final_lr_fraction) * decay));
    adam.begin_step();
    std::size_t slot = 0;
    for (std::size_t l = 0; l < net.mlp.num_layers(); ++l) {
      adam.update(slot++, net.mlp.weights[l], grads.mlp.weights[l]);
      adam.update(slot++, net.mlp.biases[l], grads.mlp.biases[l]);
    }
    adam.update(slot++, net.tokens, grads.tokens);
  }
  if (!net.all_finite()) throw TrainingFailure("parameters diverged");
  return result;
}

void save_checkpoint(std::ostream& out, const DenoiserNet& net) {
  auto j = checkpoint::header("denoiser");
  j["dim"] = net.dim();
  j["num_classes"] = net.num_classes();
  j["num_timesteps"] = net.num_timesteps();
  j["time_features"] = DenoiserNet::kTimeFeatures;
  j["token_dim"] = DenoiserNet::kTokenDim;
  j["pairs"] = net.pairs();
  j["mlp"] = checkpoint::mlp_to_json(net.mlp);
  j["tokens"] = checkpoint::matrix_to_json(net.tokens);
  j["input_shift"] = std::vector<double>(net.input_shift.begin(), net.input_shift.end());
  j["input_scale"] = net.input_scale;
  out << j.dump(1) << '\n';
}

DenoiserNet load_denoiser_checkpoint(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint", std::string("unreadable: ") + e.what());
  }
  checkpoint::check_header(j, "denoiser");
  if (j.at("time_features").get<int>() != DenoiserNet::kTimeFeatures ||
      j.at("token_dim").get<int>() != DenoiserNet::kTokenDim) {
    throw ValidationError("checkpoint.shape", "feature sizes do not match this build");
  }
  Mlp mlp = checkpoint::mlp_from_json(j.at("mlp"));
  const auto& w = mlp.widths();
  std::vector<int> hidden(w.begin() + 1, w.end() - 1);
  DenoiserNet net(j.at("dim").get<int>(), j.at("num_classes").get<int>(),
                  j.at("num_timesteps").get<int>(),
                  j.at("pairs").get<std::vector<std::pair<int, int>>>(), hidden, nullptr);
  if (mlp.widths() != net.mlp.widths()) {
    throw ValidationError("checkpoint.shape", "network widths inconsistent with dim");
  }
  net.mlp = std::move(mlp);
  Mat tokens = checkpoint::matrix_from_json(j.at("tokens"));
  if (tokens.rows() != net.tokens.rows() || tokens.cols() != net.tokens.cols()) {
    throw ValidationError("checkpoint.tokens", "token table shape mismatch");
  }
  net.tokens = std::move(tokens);
  const auto shift = j.at("input_shift").get<std::vector<double>>();
  if (static_cast<int>(shift.size()) != net.dim()) {
    throw ValidationError("checkpoint.input_shift", "length does not match dim");
  }
  net.input_shift = Eigen::Map<const Vec>(shift.data(), net.dim());
  net.input_scale = j.at("input_scale").get<double>();
  if (!(net.input_scale > 0.0)) throw ValidationError("checkpoint.input_scale", "must be positive");
  return net;
}

void write_loss_csv(std::ostream& out, const TrainResult& result) {
  out << "step,loss\n";
  out.precision(17);
  for (std::size_t i = 0; i < result.loss.size(); ++i) out << i << ',' << result.loss[i] << '\n';
}

}  // namespace natadiff
