#include "natadiff/experiment.hpp"

#include <fstream>
#include <regex>
#include <sstream>

namespace natadiff {

namespace {

// Matches `name(arg, arg, ...)`; returns the argument text.
std::optional<std::string> call_args(const std::string& value, const std::string& name) {
  const std::regex re("^" + name + R"(\s*\((.*)\)$)");
  std::smatch m;
  if (!std::regex_match(value, m, re)) return std::nullopt;
  return m[1].str();
}

std::vector<double> numbers(const ConfigSection& s, const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::string tok;
  std::istringstream in(text);
  while (std::getline(in, tok, ',')) {
    std::istringstream words(tok);
    std::string w;
    while (words >> w) {
      try {
        std::size_t used = 0;
        out.push_back(std::stod(w, &used));
        if (used != w.size()) throw std::invalid_argument(w);
      } catch (const std::exception&) {
        s.fail(key, "expected a number, got '" + w + "'");
      }
    }
  }
  return out;
}

Mat covariance_from(const ConfigSection& s, int dim) {
  const std::string v = s.get_string("cov");
  if (auto a = call_args(v, "iso")) {
    const auto x = numbers(s, "cov", *a);
    if (x.size() != 1) s.fail("cov", "iso() takes one variance");
    return x[0] * Mat::Identity(dim, dim);
  }
  if (auto a = call_args(v, "diag")) {
    const auto x = numbers(s, "cov", *a);
    if (static_cast<int>(x.size()) != dim) s.fail("cov", "diag() needs one variance per axis");
    return Eigen::Map<const Vec>(x.data(), dim).asDiagonal();
  }
  const auto x = numbers(s, "cov", v);
  if (static_cast<int>(x.size()) != dim * dim) {
    s.fail("cov", "expected iso(v), diag(...) or " + std::to_string(dim * dim) + " row-major entries");
  }
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      x.data(), dim, dim);
}

std::vector<Vec> load_embeddings(const ConfigSection& s, const std::string& key) {
  const auto& e = s.entry(key);
  const auto path = std::filesystem::path(e.file).parent_path() / e.value;
  std::ifstream in(path);
  if (!in) s.fail(key, "cannot open embeddings file '" + path.string() + "'");
  std::vector<Vec> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    std::istringstream ls(line);
    std::vector<double> row;
    double x = 0.0;
    while (ls >> x) row.push_back(x);
    if (row.empty()) continue;
    out.push_back(Eigen::Map<const Vec>(row.data(), static_cast<Eigen::Index>(row.size())));
  }
  return out;
}

void read_pgd(const ConfigSection& s, const std::string& prefix, PgdConfig& p) {
  p.epsilon = s.get_double(prefix + "epsilon", p.epsilon);
  p.step_size = s.get_double(prefix + "step", p.step_size);
  p.steps = static_cast<int>(s.get_int(prefix + "steps", p.steps));
  p.random_start = s.get_bool(prefix + "random_start", p.random_start);
}

LossWeighting parse_weighting(const ConfigSection& s) {
  const std::string w = s.get_string("weighting", "epsilon");
  if (w == "epsilon") return LossWeighting::kEpsilon;
  if (w == "x0") return LossWeighting::kX0;
  s.fail("weighting", "expected 'epsilon' or 'x0'");
}

SimilaritySense parse_sense(const ConfigSection& s) {
  const std::string v = s.get_string("similarity_sense", "most");
  if (v == "most") return SimilaritySense::kMost;
  if (v == "least") return SimilaritySense::kLeast;
  s.fail("similarity_sense", "expected 'most' or 'least'");
}

}  // namespace

ScheduleTable schedule_from(const ConfigSection& s) {
  const int T = static_cast<int>(s.get_int("T", 1000));
  if (T < 1) s.fail("T", "must be positive");
  std::vector<double> alpha_bar;
  const std::string ab = s.get_string("alpha_bar", "linear(1.0, 1e-5)");
  if (auto a = call_args(ab, "linear")) {
    const auto x = numbers(s, "alpha_bar", *a);
    if (x.size() != 2) s.fail("alpha_bar", "linear() takes start and end");
    for (int t = 0; t <= T; ++t) alpha_bar.push_back(x[0] + (x[1] - x[0]) * t / T);
  } else {
    alpha_bar = numbers(s, "alpha_bar", ab);
    if (static_cast<int>(alpha_bar.size()) != T + 1) s.fail("alpha_bar", "needs T+1 values");
  }
  std::vector<int> times;
  const std::string st = s.get_string("sampling", "uniform(200)");
  if (auto a = call_args(st, "uniform")) {
    const auto x = numbers(s, "sampling", *a);
    if (x.size() != 1 || x[0] < 1) s.fail("sampling", "uniform() takes a positive step count");
    times = ScheduleTable::uniform_times(T, static_cast<int>(x[0]));
  } else {
    for (double v : numbers(s, "sampling", st)) times.push_back(static_cast<int>(v));
  }
  return ScheduleTable(std::move(alpha_bar), std::move(times));
}

MixtureWorld world_from(const Config& cfg) {
  const auto& w = cfg.require("world");
  const int k = static_cast<int>(w.get_int("num_classes"));
  const int dim = static_cast<int>(w.get_int("dim"));
  if (dim < 1) w.fail("dim", "must be positive");
  std::vector<Component> comps;
  for (const ConfigSection* s : cfg.all("component")) {
    Component c;
    const auto mean = s->get_doubles("mean");
    if (static_cast<int>(mean.size()) != dim) s->fail("mean", "needs " + std::to_string(dim) + " values");
    c.mean = Eigen::Map<const Vec>(mean.data(), dim);
    c.cov = covariance_from(*s, dim);
    c.weight = s->get_double("weight");
    c.labels = s->get_ints("labels");
    comps.push_back(std::move(c));
  }
  return MixtureWorld(std::move(comps), k);
}

Experiment load_experiment(const Config& cfg) {
  static const ConfigSection kEmpty("", "<defaults>", 0);
  auto section = [&](const char* name) -> const ConfigSection& {
    const ConfigSection* s = cfg.find(name);
    return s ? *s : kEmpty;
  };
  Experiment exp{schedule_from(section("schedule")), world_from(cfg)};

  const auto& d = section("denoiser");
  exp.denoiser.hidden = d.has("hidden") ? d.get_ints("hidden") : exp.denoiser.hidden;
  exp.denoiser.init_seed = static_cast<std::uint64_t>(d.get_int("init_seed", 0));
  auto& tc = exp.denoiser.train;
  tc.steps = static_cast<int>(d.get_int("steps", tc.steps));
  tc.batch_size = static_cast<int>(d.get_int("batch", tc.batch_size));
  tc.learning_rate = d.get_double("lr", tc.learning_rate);
  tc.final_lr_fraction = d.get_double("final_lr_fraction", tc.final_lr_fraction);
  tc.drop_prob = d.get_double("drop_prob", tc.drop_prob);
  tc.seed = static_cast<std::uint64_t>(d.get_int("seed", 0));
  tc.weighting = parse_weighting(d);
  tc.validate();

  const auto& v = section("victims");
  auto& vt = exp.victim_train;
  vt.steps = static_cast<int>(v.get_int("steps", vt.steps));
  vt.batch_size = static_cast<int>(v.get_int("batch", vt.batch_size));
  vt.learning_rate = v.get_double("lr", vt.learning_rate);
  vt.hidden = v.has("hidden") ? v.get_ints("hidden") : vt.hidden;
  vt.seed = static_cast<std::uint64_t>(v.get_int("seed", 0));
  vt.validate();
  read_pgd(v, "adv_", exp.adv_train_pgd);
  exp.adv_train_pgd.targeted = false;
  exp.adv_train_pgd.validate();
  for (const ConfigSection* s : cfg.all("victim")) {
    VictimSpec spec{s->get_string("name"), s->get_string("kind"), {}};
    if (spec.kind == "shortcut") {
      spec.keep = s->get_ints("keep");
      for (int c : spec.keep) {
        if (c < 0 || c >= exp.world.dim()) s->fail("keep", "coordinate out of range");
      }
    } else if (spec.kind != "bayes" && spec.kind != "mlp" && spec.kind != "adv_trained") {
      s->fail("kind", "expected bayes, shortcut, mlp or adv_trained");
    }
    for (const auto& other : exp.victims) {
      if (other.name == spec.name) s->fail("name", "duplicate victim name");
    }
    exp.victims.push_back(std::move(spec));
  }
  if (exp.victims.empty()) {
    throw ValidationError("victims", "config defines no [victim] section");
  }

  const auto& g = section("guidance");
  auto& gp = exp.attack.guidance;
  gp.omega = g.get_double("omega", gp.omega);
  gp.rho = g.get_double("rho", gp.rho);
  gp.mu = g.get_double("mu", gp.mu);
  gp.s = g.get_double("s", gp.s);
  gp.c_l = static_cast<int>(g.get_int("c_l", gp.c_l));
  gp.c_u = static_cast<int>(g.get_int("c_u", gp.c_u));
  exp.transforms = g.get_string("transforms", exp.transforms);
  exp.transform_shift = g.get_double("transform_shift", exp.transform_shift);

  const auto& a = section("attack");
  auto& ac = exp.attack;
  ac.repeats = static_cast<int>(a.get_int("R", ac.repeats));
  ac.jump = static_cast<int>(a.get_int("k", ac.jump));
  ac.r_l = static_cast<int>(a.get_int("r_l", ac.r_l));
  ac.r_u = static_cast<int>(a.get_int("r_u", ac.r_u));
  ac.attempts = static_cast<int>(a.get_int("S", ac.attempts));
  ac.delta_mu = a.get_double("delta_mu", ac.delta_mu);
  ac.delta_s = a.get_double("delta_s", ac.delta_s);
  try {
    ac.mode = parse_target_mode(a.get_string("mode", "similarity"));
  } catch (const ValidationError&) {
    a.fail("mode", "expected 'targeted' or 'similarity'");
  }
  ac.target_class = static_cast<int>(a.get_int("target_class", -1));
  ac.similarity_sense = parse_sense(a);
  ac.seed = static_cast<std::uint64_t>(a.get_int("seed", 0));
  exp.cycle_true_class = !a.has("true_class");
  ac.true_class = static_cast<int>(a.get_int("true_class", 0));
  exp.num_samples = static_cast<int>(a.get_int("num_samples", 1));
  exp.attacked_victim = a.get_string("victim", exp.victims.front().name);
  if (exp.num_samples < 1) a.fail("num_samples", "must be positive");
  if (ac.true_class < 0 || ac.true_class >= exp.world.num_classes()) {
    a.fail("true_class", "outside [0, num_classes)");
  }
  if (ac.target_class >= exp.world.num_classes()) a.fail("target_class", "outside [0, num_classes)");
  if (!exp.cycle_true_class && ac.target_class == ac.true_class) {
    a.fail("target_class", "equals the true class");
  }
  ac.validate();
  exp.embeddings = a.has("embeddings") ? load_embeddings(a, "embeddings")
                                       : class_mean_embeddings(exp.world);
  if (static_cast<int>(exp.embeddings.size()) < exp.world.num_classes()) {
    a.fail("embeddings", "needs one row per class");
  }
  bool found = false;
  for (const auto& spec : exp.victims) found = found || spec.name == exp.attacked_victim;
  if (!found) a.fail("victim", "no victim named '" + exp.attacked_victim + "'");

  const auto& e = section("eval");
  read_pgd(e, "pgd_", exp.eval.pgd);
  exp.eval.pgd.validate();
  exp.eval.t_star = static_cast<int>(e.get_int("t_star", exp.eval.t_star));
  if (exp.eval.t_star < 0 || exp.eval.t_star > exp.table.num_timesteps()) {
    e.fail("t_star", "outside [0, T]");
  }
  exp.eval.reference_samples = static_cast<int>(e.get_int("reference_samples", exp.eval.reference_samples));
  if (e.has("mu_list")) exp.eval.mu_list = e.get_doubles("mu_list");
  exp.eval.reference_classifier = e.get_string("reference_classifier", exp.eval.reference_classifier);
  exp.eval.seed = static_cast<std::uint64_t>(e.get_int("seed", 0));

  cfg.check_unused();
  return exp;
}

VictimRegistry build_victims(const Experiment& exp) {
  VictimRegistry reg;
  const Rng root(exp.victim_train.seed);
  for (std::size_t i = 0; i < exp.victims.size(); ++i) {
    const auto& spec = exp.victims[i];
    VictimTrainConfig vc = exp.victim_train;
    vc.seed = root.fork(i).next_u64();
    if (spec.kind == "bayes") {
      reg.add(std::make_shared<BayesVictim>(exp.world, exp.table, spec.name));
    } else if (spec.kind == "shortcut") {
      reg.add(std::make_shared<ShortcutVictim>(ShortcutVictim::fit(
          exp.world, ShortcutVictim::coordinate_projection(exp.world.dim(), spec.keep), spec.name,
          vc)));
    } else if (spec.kind == "mlp") {
      reg.add(std::make_shared<MlpVictim>(
          train_victim(make_mlp_victim(exp.world, vc, spec.name), exp.world, vc)));
    } else {
      auto tmpl = make_mlp_victim(exp.world, vc, spec.name);
      reg.add(std::make_shared<MlpVictim>(adversarial_train(tmpl, exp.world, exp.adv_train_pgd, vc)));
    }
  }
  return reg;
}

TransformSet transforms_for(const Experiment& exp) {
  return TransformSet::preset(exp.transforms, exp.world.dim(), exp.world.data_mean(),
                              exp.transform_shift);
}

}  // namespace natadiff
