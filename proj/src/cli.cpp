#include "natadiff/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include "natadiff/digest.hpp"
#include "natadiff/eval.hpp"
#include "natadiff/experiment.hpp"
#include "natadiff/io.hpp"
#include "natadiff/selfcheck.hpp"

namespace natadiff {

namespace fs = std::filesystem;

namespace {

class UsageError : public Error {
 public:
  using Error::Error;
};

struct Common {
  std::string config;
  std::string out = "runs";
  std::optional<std::uint64_t> seed;
  bool oracle = false;
  bool learned = false;
  std::string checkpoint;
};

struct Loaded {
  Config config;
  Experiment exp;
};

Loaded load(const std::string& path) {
  Config cfg = Config::load(path);
  Experiment exp = load_experiment(cfg);
  return {std::move(cfg), std::move(exp)};
}

unsigned thread_count() {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("NATADIFF_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return std::min(hw, static_cast<unsigned>(n));
  }
  return hw;
}

// Oracle or learned noise predictor, owning whatever it needs.
struct PredictorHolder {
  std::optional<OracleNoisePredictor> oracle;
  std::optional<DenoiserNet> net;
  std::optional<LearnedNoisePredictor> learned;

  const NoisePredictor& get() const {
    if (learned) return *learned;
    return *oracle;
  }
};

void make_predictor(PredictorHolder& h, const Common& c, const Experiment& exp) {
  if (c.oracle && c.learned) throw UsageError("--oracle and --learned are exclusive");
  if (!c.learned) {
    h.oracle.emplace(exp.world, exp.table);
    return;
  }
  if (c.checkpoint.empty()) throw UsageError("--learned requires --checkpoint");
  std::ifstream in(c.checkpoint);
  if (!in) throw Error("cannot read checkpoint " + c.checkpoint);
  h.net.emplace(load_denoiser_checkpoint(in));
  if (h.net->dim() != exp.world.dim() || h.net->num_classes() != exp.world.num_classes() ||
      h.net->num_timesteps() != exp.table.num_timesteps()) {
    throw ValidationError("checkpoint", "denoiser does not match the configured world");
  }
  h.learned.emplace(*h.net);
}

void add_common(CLI::App* sub, Common& c, bool predictor) {
  sub->add_option("-c,--config", c.config, "Experiment config file")->required();
  sub->add_option("-o,--out", c.out, "Root directory for run outputs");
  sub->add_option("--seed", c.seed, "Override the command's seed");
  if (predictor) {
    sub->add_flag("--oracle", c.oracle, "Use the exact mixture noise predictor (default)");
    sub->add_flag("--learned", c.learned, "Use a trained denoiser checkpoint");
    sub->add_option("--checkpoint", c.checkpoint, "Denoiser checkpoint for --learned");
  }
}

RunManifest start_manifest(const std::string& command, const std::vector<std::string>& args,
                           const Loaded& l, const std::string& config_path, std::uint64_t seed) {
  RunManifest m;
  m.tool_version = kToolVersion;
  m.command = command;
  m.args = args;
  m.config_path = config_path;
  m.config_hash = sha256_hex(l.config.canonical());
  m.seed = seed;
  m.started = utc_timestamp();
  m.inputs[config_path] = sha256_file(config_path);
  for (const auto& p : l.config.included_files()) m.inputs[p.string()] = sha256_file(p);
  return m;
}

void finish_manifest(RunManifest& m, const fs::path& dir) {
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name != "manifest.json") m.outputs[name] = sha256_file(entry.path());
  }
  m.finished = utc_timestamp();
  write_manifest(dir / "manifest.json", m);
}

std::vector<const VictimModel*> all_victims(const VictimRegistry& reg) {
  std::vector<const VictimModel*> out;
  for (const auto& n : reg.names()) out.push_back(&reg.get(n));
  return out;
}

std::vector<const VictimModel*> judges_for(const VictimRegistry& reg, const std::string& attacked) {
  std::vector<const VictimModel*> out;
  for (const auto& n : reg.names()) {
    if (n != attacked) out.push_back(&reg.get(n));
  }
  return out;
}

std::string format_rate(double v) {
  std::ostringstream os;
  os.precision(4);
  os << std::fixed << v;
  return os.str();
}

int cmd_validate(const Common& c, std::ostream& out) {
  const Loaded l = load(c.config);
  const auto victims = build_victims(l.exp);
  const auto results = run_self_checks(l.exp, victims);
  bool ok = true;
  for (const auto& r : results) {
    out << (r.passed ? "[ok]   " : "[FAIL] ") << r.name << " (" << r.detail << ")\n";
    ok = ok && r.passed;
  }
  out << (ok ? "all checks passed\n" : "some checks failed\n");
  return ok ? 0 : 1;
}

int cmd_train(const Common& c, std::optional<int> steps, const std::vector<std::string>& args,
              std::ostream& out, fs::path* run_dir) {
  Loaded l = load(c.config);
  auto& exp = l.exp;
  if (steps) {
    if (*steps < 0) throw UsageError("--steps must be nonnegative");
    exp.denoiser.train.steps = *steps;
  }
  if (c.seed) exp.denoiser.train.seed = *c.seed;
  Rng init(exp.denoiser.init_seed);
  DenoiserNet net = DenoiserNet::for_world(exp.world, exp.table.num_timesteps(), exp.denoiser.hidden, &init);
  const TrainResult result = train(net, exp.world, exp.table, exp.denoiser.train);

  const fs::path dir = fresh_run_dir(c.out, "train");
  if (run_dir) *run_dir = dir;
  auto m = start_manifest("train", args, l, c.config, exp.denoiser.train.seed);
  {
    std::ofstream f(dir / "denoiser.json");
    save_checkpoint(f, net);
    std::ofstream loss(dir / "loss.csv");
    write_loss_csv(loss, result);
  }
  const auto victims = build_victims(exp);
  for (const auto& n : victims.names()) {
    if (const auto* mlp = dynamic_cast<const MlpVictim*>(&victims.get(n))) {
      std::ofstream f(dir / ("victim_" + n + ".json"));
      save_checkpoint(f, *mlp);
    }
  }
  finish_manifest(m, dir);
  out << "trained " << exp.denoiser.train.steps << " steps";
  if (!result.loss.empty()) out << ", final loss " << result.loss.back();
  out << "\nwrote " << dir.string() << '\n';
  return 0;
}

struct AttackFlags {
  std::string mode;
  std::string method = "natadiff";
  std::optional<int> num_samples;
  std::optional<int> true_class;
  std::optional<int> target_class;
};

int cmd_attack(const Common& c, const AttackFlags& f, const std::vector<std::string>& args,
               std::ostream& out, fs::path* run_dir) {
  Loaded l = load(c.config);
  auto& exp = l.exp;
  auto& cfg = exp.attack;
  if (!f.mode.empty()) cfg.mode = parse_target_mode(f.mode);
  if (c.seed) cfg.seed = *c.seed;
  if (f.num_samples) {
    if (*f.num_samples < 1) throw UsageError("--num-samples must be positive");
    exp.num_samples = *f.num_samples;
  }
  const int K = exp.world.num_classes();
  if (f.true_class) {
    if (*f.true_class < 0 || *f.true_class >= K) throw UsageError("--true-class out of range");
    cfg.true_class = *f.true_class;
    exp.cycle_true_class = false;
  }
  if (f.target_class) {
    if (*f.target_class < 0 || *f.target_class >= K) throw UsageError("--target-class out of range");
    cfg.target_class = *f.target_class;
  }
  if (cfg.mode == TargetMode::kTargeted && cfg.target_class >= 0 && !exp.cycle_true_class &&
      cfg.target_class == cfg.true_class) {
    throw UsageError("target class must differ from the true class");
  }
  if (f.method != "natadiff" && f.method != "pgd") throw UsageError("--method must be natadiff or pgd");

  PredictorHolder pred;
  make_predictor(pred, c, exp);
  const auto victims = build_victims(exp);
  const auto& victim = victims.get(exp.attacked_victim);
  const auto judges = judges_for(victims, exp.attacked_victim);

  std::vector<SampleRecord> records;
  std::vector<CleanPoint> clean;
  if (f.method == "natadiff") {
    const auto decoder = Decoder::identity(exp.world.dim());
    const auto transforms = transforms_for(exp);
    const AttackModels models{pred.get(), victim, exp.table, decoder, transforms, judges};
    BatchSpec spec{exp.num_samples, exp.cycle_true_class, K, thread_count()};
    records = run_batch(models, cfg, spec, exp.embeddings);
  } else {
    const Rng root(cfg.seed);
    for (int i = 0; i < exp.num_samples; ++i) {
      Rng rng = root.fork(static_cast<std::uint64_t>(i));
      const int y = exp.cycle_true_class ? i % K : cfg.true_class;
      const LabeledPoint p = sample_data(exp.world, ConditioningSet::single(y), rng);
      int target = cfg.target_class;
      if (cfg.mode == TargetMode::kSimilarity) {
        target = similarity_target(y, candidate_classes(K, y), exp.embeddings, cfg.similarity_sense);
      } else if (target < 0 || target == y) {
        const auto cands = candidate_classes(K, y);
        target = cands[rng.below(cands.size())];
      }
      SampleRecord r;
      r.id = static_cast<std::size_t>(i);
      r.x = pgd_attack(victim, p.x, target, exp.eval.pgd, rng);
      r.y = y;
      r.y_tilde = target;
      r.mode = cfg.mode;
      r.attempts = 1;
      r.success = victim.predict(r.x) == target;
      r.verdicts[victim.name()] = victim.predict(r.x);
      for (const auto* j : judges) r.verdicts[j->name()] = j->predict(r.x);
      Sha256 h;
      h.add(p.x);
      h.add(r.x);
      r.digest = h.hex();
      records.push_back(std::move(r));
      clean.push_back({static_cast<std::size_t>(i), p.x, p.labels});
    }
  }

  const fs::path dir = fresh_run_dir(c.out, "attack");
  if (run_dir) *run_dir = dir;
  auto m = start_manifest("attack", args, l, c.config, cfg.seed);
  if (!c.checkpoint.empty() && c.learned) m.inputs[c.checkpoint] = sha256_file(c.checkpoint);
  write_records(dir / "samples.jsonl", records);
  if (!clean.empty()) write_clean(dir / "clean.jsonl", clean);
  finish_manifest(m, dir);
  out << "wrote " << records.size() << " samples to " << dir.string() << "\n";
  out << "white-box ASR on " << victim.name() << ": " << format_rate(asr(records, victim)) << '\n';
  return 0;
}

std::vector<Vec> reference_points(const Experiment& exp) {
  Rng rng = Rng(exp.eval.seed).fork(0x7e7e);
  std::vector<Vec> out;
  for (int i = 0; i < exp.eval.reference_samples; ++i) {
    out.push_back(sample_data(exp.world, ConditioningSet::unconditional(), rng).x);
  }
  return out;
}

int cmd_eval(const Common& c, const std::string& samples_path, const std::string& clean_path,
             bool adjusted, const std::vector<std::string>& args, std::ostream& out,
             fs::path* run_dir) {
  if (adjusted && clean_path.empty()) throw UsageError("--adjusted requires --clean");
  const Loaded l = load(c.config);
  const auto& exp = l.exp;
  const auto records = read_records(samples_path);
  if (records.empty()) throw Error("no samples in " + samples_path);
  std::vector<CleanPoint> clean;
  if (!clean_path.empty()) {
    clean = read_clean(clean_path);
    if (clean.size() != records.size()) {
      throw ValidationError("eval.clean", "clean and adversarial files differ in length");
    }
  }
  const auto victims = build_victims(exp);

  MetricReport report;
  report.count = records.size();
  for (const auto* v : all_victims(victims)) {
    VictimMetrics vm;
    vm.victim = v->name();
    vm.asr = asr(records, *v);
    vm.untargeted_asr = untargeted_asr(records, *v);
    vm.accuracy = accuracy_on(records, *v);
    if (adjusted) {
      std::vector<AlignedPair> pairs;
      for (std::size_t i = 0; i < records.size(); ++i) {
        pairs.push_back({clean[i].x, records[i].x, records[i].y, records[i].y_tilde});
      }
      try {
        vm.adjusted_targeted = adjusted_asr(pairs, *v, AsrMode::kTargeted);
        vm.adjusted_untargeted = adjusted_asr(pairs, *v, AsrMode::kUntargeted);
      } catch (const UndefinedRate&) {
      }
    }
    report.victims.push_back(vm);
  }
  const auto points = points_of(records);
  if (static_cast<int>(points.size()) > exp.world.dim()) {
    report.frechet = frechet_distance(points, reference_points(exp));
  }
  if (points.size() >= 2) {
    report.entropy = entropy_score(points, victims.get(exp.eval.reference_classifier));
  }

  const fs::path dir = fresh_run_dir(c.out, "eval");
  if (run_dir) *run_dir = dir;
  auto m = start_manifest("eval", args, l, c.config, exp.eval.seed);
  m.inputs[samples_path] = sha256_file(samples_path);
  if (!clean_path.empty()) m.inputs[clean_path] = sha256_file(clean_path);
  {
    std::ofstream csv(dir / "metrics.csv");
    csv.precision(17);
    csv << "victim,count,accuracy,asr_unadjusted,untargeted_asr_unadjusted,asr_adjusted,"
           "untargeted_asr_adjusted\n";
    for (const auto& v : report.victims) {
      csv << v.victim << ',' << report.count << ',' << v.accuracy << ',' << v.asr << ','
          << v.untargeted_asr << ',';
      if (v.adjusted_targeted) csv << *v.adjusted_targeted;
      csv << ',';
      if (v.adjusted_untargeted) csv << *v.adjusted_untargeted;
      csv << '\n';
    }
    nlohmann::json j;
    j["count"] = report.count;
    j["formulas"] = {{"asr_unadjusted", "fraction of samples classified as y_tilde"},
                     {"untargeted_asr_unadjusted", "fraction of samples not classified as y"},
                     {"asr_adjusted", "among clean points classified as y, fraction of "
                                      "adversarial counterparts classified as y_tilde"},
                     {"untargeted_asr_adjusted", "among clean points classified as y, fraction "
                                                 "of adversarial counterparts not classified as y"}};
    for (const auto& v : report.victims) {
      auto& e = j["victims"][v.victim];
      e["accuracy"] = v.accuracy;
      e["asr_unadjusted"] = v.asr;
      e["untargeted_asr_unadjusted"] = v.untargeted_asr;
      e["asr_adjusted"] = v.adjusted_targeted ? nlohmann::json(*v.adjusted_targeted) : nlohmann::json();
      e["untargeted_asr_adjusted"] =
          v.adjusted_untargeted ? nlohmann::json(*v.adjusted_untargeted) : nlohmann::json();
    }
    if (report.frechet) {
      j["frechet_distance"] = report.frechet->value;
      j["frechet_regularized"] = report.frechet->regularized;
    }
    if (report.entropy) j["entropy_score"] = *report.entropy;
    std::ofstream js(dir / "summary.json");
    js << j.dump(2) << '\n';
    std::ofstream xy(dir / "points.csv");
    xy.precision(17);
    for (int k = 0; k < exp.world.dim(); ++k) xy << (k ? "," : "") << "x" << k;
    xy << ",y,y_tilde\n";
    for (const auto& r : records) {
      for (int k = 0; k < r.x.size(); ++k) xy << (k ? "," : "") << r.x[k];
      xy << ',' << r.y << ',' << r.y_tilde << '\n';
    }
  }
  finish_manifest(m, dir);
  for (const auto& v : report.victims) {
    out << v.victim << ": asr " << format_rate(v.asr) << ", untargeted " << format_rate(v.untargeted_asr)
        << ", accuracy " << format_rate(v.accuracy);
    if (v.adjusted_targeted) out << ", adjusted asr " << format_rate(*v.adjusted_targeted);
    if (v.adjusted_untargeted) out << ", adjusted untargeted " << format_rate(*v.adjusted_untargeted);
    out << '\n';
  }
  out << "wrote " << dir.string() << '\n';
  return 0;
}

int cmd_ablate(const Common& c, const std::vector<double>& mu_list, std::optional<int> num_samples,
               const std::vector<std::string>& args, std::ostream& out, fs::path* run_dir) {
  Loaded l = load(c.config);
  auto& exp = l.exp;
  if (!mu_list.empty()) exp.eval.mu_list = mu_list;
  if (num_samples) exp.num_samples = *num_samples;
  if (c.seed) exp.attack.seed = *c.seed;
  PredictorHolder pred;
  make_predictor(pred, c, exp);
  const auto victims = build_victims(exp);
  const auto& victim = victims.get(exp.attacked_victim);
  const auto decoder = Decoder::identity(exp.world.dim());
  const auto transforms = transforms_for(exp);
  const AttackModels models{pred.get(), victim, exp.table, decoder, transforms,
                            judges_for(victims, exp.attacked_victim)};
  const BatchSpec spec{exp.num_samples, exp.cycle_true_class, exp.world.num_classes(), thread_count()};
  const auto all = all_victims(victims);
  const auto rows = mu_ablation(models, exp.attack, spec, exp.embeddings, exp.eval.mu_list, all,
                                reference_points(exp));

  const fs::path dir = fresh_run_dir(c.out, "ablate-mu");
  if (run_dir) *run_dir = dir;
  auto m = start_manifest("ablate-mu", args, l, c.config, exp.attack.seed);
  {
    std::ofstream csv(dir / "ablation.csv");
    csv.precision(17);
    csv << "mu";
    for (const auto* v : all) csv << ",asr_" << v->name();
    for (const auto* v : all) csv << ",accuracy_" << v->name();
    csv << ",frechet\n";
    for (const auto& r : rows) {
      csv << r.mu;
      for (const auto* v : all) csv << ',' << r.asr.at(v->name());
      for (const auto* v : all) csv << ',' << r.accuracy.at(v->name());
      csv << ',';
      if (r.frechet) csv << *r.frechet;
      csv << '\n';
    }
  }
  finish_manifest(m, dir);
  for (const auto& r : rows) {
    out << "mu " << r.mu << ": asr";
    for (const auto* v : all) out << ' ' << v->name() << '=' << format_rate(r.asr.at(v->name()));
    if (r.frechet) out << ", frechet " << format_rate(*r.frechet);
    out << '\n';
  }
  out << "wrote " << dir.string() << '\n';
  return 0;
}

int cmd_purify(const Common& c, const std::string& samples_path, std::optional<int> t_star,
               const std::vector<std::string>& args, std::ostream& out, fs::path* run_dir) {
  Loaded l = load(c.config);
  auto& exp = l.exp;
  if (t_star) {
    if (*t_star < 0 || *t_star > exp.table.num_timesteps()) throw UsageError("--t-star outside [0, T]");
    exp.eval.t_star = *t_star;
  }
  const std::uint64_t seed = c.seed.value_or(exp.eval.seed);
  PredictorHolder pred;
  make_predictor(pred, c, exp);
  auto records = read_records(samples_path);
  if (records.empty()) throw Error("no samples in " + samples_path);
  const auto victims = build_victims(exp);
  const auto& victim = victims.get(exp.attacked_victim);
  const Rng root(seed);
  for (auto& r : records) {
    Rng rng = root.fork(r.id);
    r.x = purify(r.x, exp.eval.t_star, pred.get(), exp.table, rng);
    r.success = victim.predict(r.x) == r.y_tilde;
    for (auto& [name, verdict] : r.verdicts) {
      if (victims.contains(name)) verdict = victims.get(name).predict(r.x);
    }
  }
  const fs::path dir = fresh_run_dir(c.out, "purify");
  if (run_dir) *run_dir = dir;
  auto m = start_manifest("purify", args, l, c.config, seed);
  m.inputs[samples_path] = sha256_file(samples_path);
  write_records(dir / "purified.jsonl", records);
  finish_manifest(m, dir);
  out << "purified " << records.size() << " samples at t* = " << exp.eval.t_star << "; asr on "
      << victim.name() << ": " << format_rate(asr(records, victim)) << "\nwrote " << dir.string()
      << '\n';
  return 0;
}

int cmd_replay(const std::string& manifest_path, const std::string& out_root, std::ostream& out,
               std::ostream& err, fs::path* run_dir) {
  const RunManifest m = read_manifest(manifest_path);
  for (const auto& [path, digest] : m.inputs) {
    if (!fs::exists(path) || sha256_file(path) != digest) {
      err << "input changed since the recorded run: " << path << '\n';
      return 1;
    }
  }
  std::vector<std::string> args = m.args;
  bool replaced = false;
  for (std::size_t i = 0; i + 1 < args.size(); ++i) {
    if (args[i] == "--out" || args[i] == "-o") {
      args[i + 1] = out_root;
      replaced = true;
    }
  }
  if (!replaced) {
    args.push_back("--out");
    args.push_back(out_root);
  }
  std::ostringstream sink;
  fs::path dir;
  const int code = run_cli(args, sink, err, &dir);
  if (code != 0) return code;
  if (run_dir) *run_dir = dir;
  bool same = true;
  for (const auto& [name, digest] : m.outputs) {
    const fs::path p = dir / name;
    if (!fs::exists(p) || sha256_file(p) != digest) {
      err << "output differs: " << name << '\n';
      same = false;
    }
  }
  out << (same ? "replay identical: " : "replay differs: ") << dir.string() << '\n';
  return same ? 0 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            fs::path* run_dir) {
  CLI::App app{"Natural adversarial sampling on labeled Gaussian-mixture worlds", "natadiff"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  Common common;
  auto* validate = app.add_subcommand("validate", "Load a config and run self-checks");
  add_common(validate, common, false);

  std::optional<int> steps;
  auto* train_cmd = app.add_subcommand("train", "Train the denoiser and MLP victims");
  add_common(train_cmd, common, false);
  train_cmd->add_option("--steps", steps, "Override the number of training steps");

  AttackFlags af;
  auto* attack = app.add_subcommand("attack", "Generate adversarial samples");
  add_common(attack, common, true);
  attack->add_option("--mode", af.mode, "targeted or similarity")
      ->check(CLI::IsMember({"targeted", "similarity"}));
  attack->add_option("--method", af.method, "natadiff or pgd")->check(CLI::IsMember({"natadiff", "pgd"}));
  attack->add_option("-n,--num-samples", af.num_samples, "Number of samples");
  attack->add_option("--true-class", af.true_class, "Fix the true class instead of cycling");
  attack->add_option("--target-class", af.target_class, "Target class in targeted mode");

  std::string samples;
  std::string clean;
  bool adjusted = false;
  auto* eval = app.add_subcommand("eval", "Compute metrics for a samples file");
  add_common(eval, common, false);
  eval->add_option("-s,--samples", samples, "Samples JSONL")->required();
  eval->add_option("--clean", clean, "Clean counterparts JSONL, aligned by line");
  eval->add_flag("--adjusted", adjusted, "Also report clean-gated ASR");

  std::vector<double> mu_list;
  std::optional<int> ablate_n;
  auto* ablate = app.add_subcommand("ablate-mu", "Sweep the boundary-guidance blend mu");
  add_common(ablate, common, true);
  ablate->add_option("--mu-list", mu_list, "Comma-separated mu values")->delimiter(',');
  ablate->add_option("-n,--num-samples", ablate_n, "Samples per mu");

  std::optional<int> t_star;
  auto* purify_cmd = app.add_subcommand("purify", "Noise and denoise samples");
  add_common(purify_cmd, common, true);
  purify_cmd->add_option("-s,--samples", samples, "Samples JSONL")->required();
  purify_cmd->add_option("--t-star", t_star, "Purification time");

  std::string manifest;
  std::string replay_out = "runs/replay";
  auto* replay = app.add_subcommand("replay", "Re-run a manifest and compare outputs");
  replay->add_option("manifest", manifest, "manifest.json of an earlier run")->required();
  replay->add_option("-o,--out", replay_out, "Root directory for the replayed run");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*validate) return cmd_validate(common, out);
    if (*train_cmd) return cmd_train(common, steps, args, out, run_dir);
    if (*attack) return cmd_attack(common, af, args, out, run_dir);
    if (*eval) return cmd_eval(common, samples, clean, adjusted, args, out, run_dir);
    if (*ablate) return cmd_ablate(common, mu_list, ablate_n, args, out, run_dir);
    if (*purify_cmd) return cmd_purify(common, samples, t_star, args, out, run_dir);
    if (*replay) return cmd_replay(manifest, replay_out, out, err, run_dir);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const ValidationError& e) {
    err << "validation failed: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace natadiff
