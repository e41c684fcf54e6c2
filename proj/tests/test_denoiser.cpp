#include <doctest.h>

#include <sstream>

#include "natadiff/checkpoint.hpp"
#include "support.hpp"

using namespace natadiff;
using namespace natadiff::testing;

namespace {

const ScheduleTable& table() {
  static const ScheduleTable t = ScheduleTable::linear(1000);
  return t;
}

MixtureWorld two_class_dual() {
  Vec a(2), b(2), c(2);
  a << -2.0, 0.0;
  b << 2.0, 0.0;
  c << 0.0, 1.0;
  return MixtureWorld({{a, Mat::Identity(2, 2) * 0.3, 0.4, {0}},
                       {b, Mat::Identity(2, 2) * 0.3, 0.4, {1}},
                       {c, Mat::Identity(2, 2) * 0.2, 0.2, {0, 1}}},
                      2);
}

double param_distance(const DenoiserNet& a, const DenoiserNet& b) {
  double d = (a.tokens - b.tokens).cwiseAbs().maxCoeff();
  for (std::size_t l = 0; l < a.mlp.num_layers(); ++l) {
    d = std::max(d, (a.mlp.weights[l] - b.mlp.weights[l]).cwiseAbs().maxCoeff());
    d = std::max(d, (a.mlp.biases[l] - b.mlp.biases[l]).cwiseAbs().maxCoeff());
  }
  return d;
}

}  // namespace

TEST_CASE("zero-initialized net outputs zero in every mode") {
  const auto w = two_class_dual();
  const DenoiserNet net = DenoiserNet::for_world(w, 1000, {16, 16}, nullptr);
  Rng rng(1);
  for (const auto& cond : {ConditioningSet::unconditional(), ConditioningSet::single(1),
                           ConditioningSet::intersection(0, 1), ConditioningSet::intersection(1, 0)}) {
    const Vec out = net.forward(rng.normal_vector(2), 500, cond);
    CHECK(out.size() == 2);
    CHECK(out.norm() == 0.0);
  }
}

TEST_CASE("token lookup") {
  const auto w = two_class_dual();
  Rng init(2);
  const DenoiserNet net = DenoiserNet::for_world(w, 1000, {8}, &init);
  CHECK(net.has_token(ConditioningSet::intersection(1, 0)));
  CHECK_THROWS_AS(net.forward(Vec::Zero(2), 5, ConditioningSet::single(2)), LookupError);

  const DenoiserNet plain(2, 3, 1000, {}, {8}, &init);
  CHECK_FALSE(plain.has_token(ConditioningSet::intersection(0, 1)));
  CHECK_THROWS_AS(plain.forward(Vec::Zero(2), 5, ConditioningSet::intersection(0, 1)), LookupError);
}

TEST_CASE("backward without a recorded forward pass") {
  const auto w = two_class_dual();
  Rng init(3);
  const DenoiserNet net = DenoiserNet::for_world(w, 1000, {8}, &init);
  DenoiserNet::Tape tape;
  CHECK_THROWS_AS(net.backward(tape, Mat::Zero(2, 1)), StateError);
}

TEST_CASE("linear net gradient is the matrix product") {
  Rng init(4);
  const Mlp mlp({3, 5, 2}, Activation::kIdentity, &init);
  Mlp::Tape tape;
  const Mat x = Mat::Random(3, 1);
  mlp.forward(x, &tape);
  const Mat up = Mat::Random(2, 1);
  const auto g = mlp.backward(tape, up);
  const Mat expect = (mlp.weights[1] * mlp.weights[0]).transpose() * up;
  CHECK((g.input - expect).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("gradients match central differences") {
  const auto w = two_class_dual();
  Rng init(5);
  DenoiserNet net = DenoiserNet::for_world(w, 1000, {12, 12}, &init);
  net.tokens = Mat::Random(net.tokens.rows(), net.tokens.cols());
  Rng rng(6);
  const int B = 3;
  Mat x(2, B);
  for (int b = 0; b < B; ++b) x.col(b) = rng.normal_vector(2);
  const std::vector<int> ts{10, 400, 990};
  const std::vector<int> toks{0, net.num_tokens() - 1, 2};
  const Mat up = Mat::Random(2, B);

  DenoiserNet::Tape tape;
  net.forward_batch(x, ts, toks, &tape);
  const auto g = net.backward(tape, up);
  auto objective = [&](const DenoiserNet& n, const Mat& xx) {
    return (n.forward_batch(xx, ts, toks).array() * up.array()).sum();
  };

  const double h = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    const Mat dx = Mat::Random(2, B);
    const double fd = (objective(net, x + h * dx) - objective(net, x - h * dx)) / (2 * h);
    const double an = (g.x.array() * dx.array()).sum();
    CHECK(std::abs(fd - an) <= 1e-5 * std::max(1.0, std::abs(an)));

    const Mat dw = Mat::Random(net.mlp.weights[0].rows(), net.mlp.weights[0].cols());
    const Mat dt = Mat::Random(net.tokens.rows(), net.tokens.cols());
    DenoiserNet plus = net, minus = net;
    plus.mlp.weights[0] += h * dw;
    minus.mlp.weights[0] -= h * dw;
    plus.tokens += h * dt;
    minus.tokens -= h * dt;
    const double fdp = (objective(plus, x) - objective(minus, x)) / (2 * h);
    const double anp = (g.mlp.weights[0].array() * dw.array()).sum() + (g.tokens.array() * dt.array()).sum();
    CHECK(std::abs(fdp - anp) <= 1e-5 * std::max(1.0, std::abs(anp)));
  }
}

TEST_CASE("gradient of a constant head is zero") {
  Rng init(7);
  Mlp mlp({2, 6, 2}, Activation::kTanh, &init);
  mlp.weights[1].setZero();
  Mlp::Tape tape;
  mlp.forward(Mat::Random(2, 4), &tape);
  const auto g = mlp.backward(tape, Mat::Random(2, 4));
  CHECK(g.input.norm() == 0.0);
  CHECK(g.weights[0].norm() == 0.0);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  const auto w = two_class_dual();
  Rng init(8);
  DenoiserNet net = DenoiserNet::for_world(w, 1000, {8}, &init);
  const DenoiserNet before = net;
  TrainConfig cfg;
  cfg.steps = 20;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.0;
  const auto res = train(net, w, table(), cfg);
  CHECK(res.loss.size() == 20);
  CHECK(param_distance(net, before) == 0.0);
}

TEST_CASE("training is deterministic under its seed") {
  const auto w = two_class_dual();
  TrainConfig cfg;
  cfg.steps = 50;
  cfg.batch_size = 16;
  cfg.seed = 9;
  Rng i1(10), i2(10);
  DenoiserNet a = DenoiserNet::for_world(w, 1000, {8}, &i1);
  DenoiserNet b = DenoiserNet::for_world(w, 1000, {8}, &i2);
  const auto ra = train(a, w, table(), cfg);
  const auto rb = train(b, w, table(), cfg);
  CHECK(ra.loss == rb.loss);
  CHECK(param_distance(a, b) == 0.0);
}

TEST_CASE("invalid training settings") {
  TrainConfig cfg;
  cfg.drop_prob = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.drop_prob = 0.1;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("single-datapoint world: the net learns the closed-form noise") {
  Vec x0(2);
  x0 << 1.0, -0.5;
  const MixtureWorld w({{x0, Mat::Identity(2, 2) * 1e-10, 1.0, {0}}}, 1);
  Rng init(11);
  DenoiserNet net = DenoiserNet::for_world(w, 1000, {32, 32}, &init);
  TrainConfig cfg;
  cfg.steps = 8000;
  cfg.batch_size = 64;
  cfg.seed = 12;
  train(net, w, table(), cfg);
  Rng rng(13);
  double num = 0.0, den = 0.0;
  for (int t : {50, 100, 200, 400, 600, 800, 1000}) {
    const auto [alpha, beta] = alpha_beta(table(), t);
    for (int i = 0; i < 50; ++i) {
      const Vec x = alpha * x0 + beta * rng.normal_vector(2);
      const Vec truth = (x - alpha * x0) / beta;
      num += (net.forward(x, t, ConditioningSet::unconditional()) - truth).squaredNorm();
      den += truth.squaredNorm();
    }
  }
  CHECK(std::sqrt(num / den) <= 0.05);
}

TEST_CASE("demo training: loss trends down and x0 error drops tenfold") {
  const auto exp = demo_experiment();
  Rng init(exp.denoiser.init_seed);
  DenoiserNet net = DenoiserNet::for_world(exp.world, exp.table.num_timesteps(), exp.denoiser.hidden, &init);
  const DenoiserNet untrained = net;
  TrainConfig cfg = exp.denoiser.train;
  cfg.steps = 4000;
  const auto res = train(net, exp.world, exp.table, cfg);

  // Moving average over 100 steps, sampled every 100 steps across the second half.
  std::vector<double> avg;
  for (std::size_t end = res.loss.size() / 2; end <= res.loss.size(); end += 100) {
    double s = 0.0;
    for (std::size_t i = end - 100; i < end; ++i) s += res.loss[i];
    avg.push_back(s / 100.0);
  }
  double slope_num = 0.0, slope_den = 0.0;
  const double mid = (static_cast<double>(avg.size()) - 1.0) / 2.0;
  double mean = 0.0;
  for (double a : avg) mean += a / static_cast<double>(avg.size());
  for (std::size_t i = 0; i < avg.size(); ++i) {
    slope_num += (static_cast<double>(i) - mid) * (avg[i] - mean);
    slope_den += (static_cast<double>(i) - mid) * (static_cast<double>(i) - mid);
  }
  CHECK(slope_num / slope_den <= 0.0);
  CHECK(avg.back() <= avg.front());
  for (double l : res.loss) REQUIRE(std::isfinite(l));

  Rng rng(14);
  double trained_err = 0.0, base_err = 0.0;
  for (int i = 0; i < 500; ++i) {
    const int t = 1 + static_cast<int>(rng.below(1000));
    const auto cond = ConditioningSet::single(i % 3);
    const Vec x0 = sample_data(exp.world, cond, rng).x;
    const Vec xt = sample_forward(exp.table, x0, t, rng);
    trained_err += (predict_x0(xt, net.forward(xt, t, cond), t, exp.table) - x0).squaredNorm();
    base_err += (predict_x0(xt, untrained.forward(xt, t, cond), t, exp.table) - x0).squaredNorm();
  }
  CHECK(base_err >= 10.0 * trained_err);
}

TEST_CASE("checkpoint round trip") {
  const auto w = two_class_dual();
  Rng init(15);
  DenoiserNet net = DenoiserNet::for_world(w, 1000, {8, 4}, &init);
  std::stringstream ss;
  save_checkpoint(ss, net);
  const DenoiserNet back = load_denoiser_checkpoint(ss);
  CHECK(param_distance(net, back) == 0.0);
  CHECK(back.pairs() == net.pairs());
  CHECK(back.input_shift == net.input_shift);
  CHECK(back.input_scale == net.input_scale);
  std::stringstream bad("{\"format\": \"other\"}");
  CHECK_THROWS_AS(load_denoiser_checkpoint(bad), ValidationError);
}

TEST_CASE("learned predictor vjp matches finite differences") {
  const auto w = two_class_dual();
  Rng init(16);
  const DenoiserNet net = DenoiserNet::for_world(w, 1000, {10}, &init);
  const LearnedNoisePredictor p(net);
  Rng rng(17);
  const Vec x = rng.normal_vector(2);
  const Vec u = rng.normal_vector(2);
  const auto cond = ConditioningSet::single(1);
  const Vec g = p.epsilon_vjp(x, 300, cond, u);
  const double h = 1e-6;
  for (int k = 0; k < 2; ++k) {
    Vec xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    const double fd = u.dot(p.epsilon(xp, 300, cond) - p.epsilon(xm, 300, cond)) / (2 * h);
    CHECK(std::abs(fd - g[k]) < 1e-7);
  }
}
