#include "commands.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "pickorder/errors.hpp"
#include "pickorder/labels.hpp"
#include "pickorder/sim.hpp"
#include "pickorder/training.hpp"

namespace pickorder::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

// Advisory exclusive lock on <dir>/.pickorder.lock for the lifetime of the object.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
    path_ = dir / ".pickorder.lock";
    fd_ = ::open(path_.c_str(), O_RDWR | O_CREAT, 0644);
    if (fd_ < 0) throw IoError("cannot open lock file " + path_.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      throw IoError("output directory " + dir.string() + " is locked by another process");
    }
  }
  ~DirLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

fs::path parent_or_cwd(const fs::path& file) {
  return file.has_parent_path() ? file.parent_path() : fs::path(".");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ojson manifest_base(const std::string& command, const std::vector<std::string>& args) {
  ojson m;
  m["tool"] = "pickorder";
  m["version"] = kToolVersion;
  m["command"] = command;
  m["argv"] = args;
  return m;
}

void write_manifest(const fs::path& path, const ojson& m) { write_text(path, m.dump(2) + "\n"); }

std::vector<fs::path> scene_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("scene directory " + dir.string() + " does not exist");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json" && e.path().filename() != "manifest.json")
      out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> split_list(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& item : items) {
    std::stringstream ss(item);
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

struct GenerateOpts {
  std::string difficulty = "easy";
  int count = 1;
  std::uint64_t seed = 0;
  std::string out;
};

void cmd_generate(const GenerateOpts& o, const std::vector<std::string>& args, std::ostream& log) {
  const Difficulty d = difficulty_from_string(o.difficulty);
  if (o.count < 1) throw ConfigError("--count must be >= 1");
  const fs::path dir(o.out);
  DirLock lock(dir);
  ojson outputs = ojson::array();
  for (int i = 0; i < o.count; ++i) {
    const std::uint64_t s = o.seed + static_cast<std::uint64_t>(i);
    char name[64];
    std::snprintf(name, sizeof name, "scene_%04d.json", i);
    write_text(dir / name, scene_to_json(generate_scene(s, d)));
    outputs.push_back(name);
  }
  ojson m = manifest_base("generate", args);
  m["config"] = {{"difficulty", std::string(to_string(d))}, {"count", o.count}};
  m["seeds"] = {{"seed", o.seed}, {"scene_seeds", "seed + index"}};
  m["inputs"] = ojson::array();
  m["outputs"] = outputs;
  write_manifest(dir / "manifest.json", m);
  log << "wrote " << o.count << " scenes to " << dir.string() << "\n";
}

struct LabelOpts {
  std::string scenes;
  int k = 5;
  double jitter = 0.0;
  double noise_ratio = 0.0;
  std::uint64_t seed = 0;
  std::string out;
};

void cmd_label(const LabelOpts& o, const std::vector<std::string>& args, std::ostream& log) {
  if (o.k < 1) throw ConfigError("--k must be >= 1");
  if (!(o.jitter >= 0.0 && o.jitter <= 1.0)) throw ConfigError("--jitter must lie in [0, 1]");
  if (!(o.noise_ratio >= 0.0 && o.noise_ratio <= 1.0)) throw ConfigError("--noise-ratio must lie in [0, 1]");
  const fs::path out(o.out);
  const auto files = scene_files(o.scenes);
  if (files.empty()) throw ConfigError("no scene files in " + o.scenes);
  const fs::path out_dir = parent_or_cwd(out);
  DirLock lock(out_dir);

  std::vector<DatasetRecord> records;
  ojson inputs = ojson::array();
  for (const auto& f : files) {
    const Scene scene = load_scene(f.string());
    DatasetRecord rec;
    rec.scene_file = fs::relative(fs::absolute(f), fs::absolute(out_dir)).generic_string();
    rec.ranking = label_scene(scene, o.k, o.jitter, o.noise_ratio, o.seed);
    rec.noise_ratio = o.noise_ratio;
    rec.k = o.k;
    rec.seed = o.seed;
    records.push_back(std::move(rec));
    inputs.push_back(f.generic_string());
  }
  save_dataset(records, out.string());

  ojson m = manifest_base("label", args);
  m["config"] = {{"k", o.k}, {"jitter", o.jitter}, {"noise_ratio", o.noise_ratio}};
  m["seeds"] = {{"seed", o.seed}};
  m["inputs"] = inputs;
  m["outputs"] = ojson::array({out.generic_string()});
  write_manifest(fs::path(out.string() + ".manifest.json"), m);
  log << "labelled " << records.size() << " scenes into " << out.string() << "\n";
}

struct TrainOpts {
  std::string dataset;
  std::string config;
  std::string out;
  std::string metrics;
  std::optional<std::uint64_t> seed;
};

void cmd_train(const TrainOpts& o, const std::vector<std::string>& args, std::ostream& log) {
  TrainConfig cfg = o.config.empty() ? TrainConfig{} : parse_train_config(read_text(o.config));
  if (o.seed) cfg.seed = *o.seed;
  cfg.validate();

  const auto records = load_dataset(o.dataset);
  if (records.empty()) throw ConfigError("dataset " + o.dataset + " is empty");
  const fs::path data_dir = parent_or_cwd(o.dataset);
  std::vector<TrainingExample> all;
  for (const auto& rec : records) {
    const fs::path p = fs::path(rec.scene_file).is_absolute() ? fs::path(rec.scene_file) : data_dir / rec.scene_file;
    TrainingExample ex{load_scene(p.string()), rec.ranking};
    if (!is_permutation_of(ex.ranking, ex.scene.ids()))
      throw ParseError(o.dataset + ": ranking for " + rec.scene_file + " does not match its scene");
    all.push_back(std::move(ex));
  }
  std::vector<TrainingExample> tr, va;
  split_by_seed(all, cfg.val_fraction, tr, va);

  const fs::path out(o.out);
  const fs::path metrics = o.metrics.empty() ? fs::path(o.out + ".metrics.csv") : fs::path(o.metrics);
  DirLock lock(parent_or_cwd(out));
  const TrainResult res = train(tr, va, cfg);
  save_checkpoint(Checkpoint{cfg.scorer, res.params}, out.string());
  write_text(metrics, metrics_csv(res.history));

  ojson m = manifest_base("train", args);
  m["config"] = train_config_to_text(cfg);
  m["seeds"] = {{"seed", cfg.seed}};
  m["inputs"] = ojson::array({o.dataset});
  m["outputs"] = ojson::array({out.generic_string(), metrics.generic_string()});
  m["split"] = {{"train", tr.size()}, {"validation", va.size()}};
  write_manifest(fs::path(o.out + ".manifest.json"), m);
  log << "trained on " << tr.size() << " scenes (" << va.size() << " validation), wrote "
      << out.string() << "\n";
}

struct EvaluateOpts {
  std::string scenes;
  std::vector<std::string> difficulties;
  int count = 10;
  std::vector<std::string> policies;
  std::vector<std::string> intervals;
  double sigma = 0.0;
  int max_attempts = 3;
  std::string checkpoint;
  std::uint64_t seed = 0;
  std::string out;
  std::string logs;
};

void cmd_evaluate(const EvaluateOpts& o, const std::vector<std::string>& args, std::ostream& log) {
  std::vector<PolicyKind> kinds;
  for (const auto& p : split_list(o.policies.empty() ? std::vector<std::string>{"sph"} : o.policies))
    kinds.push_back(policy_kind_from_string(p));
  std::vector<int> intervals;
  for (const auto& s : split_list(o.intervals.empty() ? std::vector<std::string>{"1"} : o.intervals)) {
    try {
      std::size_t pos = 0;
      intervals.push_back(std::stoi(s, &pos));
      if (pos != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw ConfigError("--replan-interval: '" + s + "' is not an integer");
    }
  }
  std::optional<Checkpoint> ckpt;
  const bool needs_ckpt = std::count(kinds.begin(), kinds.end(), PolicyKind::Learned) > 0;
  if (needs_ckpt && o.checkpoint.empty()) throw ConfigError("the learned policy requires --checkpoint");
  if (!o.checkpoint.empty()) ckpt = load_checkpoint(o.checkpoint);

  std::vector<PolicyConfig> policies;
  for (PolicyKind k : kinds)
    for (int iv : intervals) {
      PolicyConfig p;
      p.kind = k;
      p.replan_interval = iv;
      p.perception_sigma = o.sigma;
      p.max_attempts_per_object = o.max_attempts;
      p.validate();
      policies.push_back(p);
    }

  // Scene groups in difficulty order.
  std::map<Difficulty, std::vector<Scene>> groups;
  ojson inputs = ojson::array();
  if (!o.scenes.empty()) {
    for (const auto& f : scene_files(o.scenes)) {
      Scene s = load_scene(f.string());
      groups[s.difficulty].push_back(std::move(s));
      inputs.push_back(f.generic_string());
    }
    if (groups.empty()) throw ConfigError("no scene files in " + o.scenes);
  } else {
    if (o.count < 1) throw ConfigError("--count must be >= 1");
    for (const auto& ds : split_list(o.difficulties.empty() ? std::vector<std::string>{"easy"} : o.difficulties)) {
      const Difficulty d = difficulty_from_string(ds);
      auto& g = groups[d];
      g.clear();
      for (int i = 0; i < o.count; ++i) g.push_back(generate_scene(o.seed + static_cast<std::uint64_t>(i), d));
    }
  }

  const fs::path out(o.out);
  const fs::path logs = o.logs.empty() ? fs::path(o.out + ".logs") : fs::path(o.logs);
  DirLock lock(parent_or_cwd(out));
  std::error_code ec;
  fs::create_directories(logs, ec);
  if (ec) throw IoError("cannot create directory " + logs.string() + ": " + ec.message());

  std::vector<SuiteRow> rows;
  for (const auto& p : policies)
    for (const auto& [d, scenes] : groups) {
      SuiteRow row = evaluate_policy(p, scenes, o.seed, ckpt ? &*ckpt : nullptr);
      for (std::size_t i = 0; i < scenes.size(); ++i) {
        char name[160];
        std::snprintf(name, sizeof name, "%s_%s_%llu.log", row.policy.c_str(),
                      std::string(to_string(d)).c_str(), static_cast<unsigned long long>(scenes[i].seed));
        write_text(logs / name, episode_report_text(row.episodes[i]));
      }
      rows.push_back(std::move(row));
    }
  write_text(out, suite_csv(rows));

  ojson m = manifest_base("evaluate", args);
  m["config"] = {{"policies", split_list(o.policies.empty() ? std::vector<std::string>{"sph"} : o.policies)},
                 {"replan_intervals", intervals},
                 {"perception_sigma", o.sigma},
                 {"max_attempts_per_object", o.max_attempts},
                 {"count", o.count}};
  m["seeds"] = {{"seed", o.seed}};
  if (!o.checkpoint.empty()) inputs.push_back(o.checkpoint);
  m["inputs"] = inputs;
  m["outputs"] = ojson::array({out.generic_string(), logs.generic_string()});
  write_manifest(fs::path(o.out + ".manifest.json"), m);
  log << "wrote " << rows.size() << " report rows to " << out.string() << "\n";
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, int depth);

int cmd_replay(const std::string& manifest, std::ostream& out, std::ostream& err, int depth) {
  if (depth > 0) throw ConfigError("a replay manifest cannot itself be a replay");
  ojson m;
  try {
    m = ojson::parse(read_text(manifest));
  } catch (const ojson::exception& e) {
    throw ParseError(manifest + ": " + e.what());
  }
  if (!m.contains("argv") || !m["argv"].is_array()) throw ParseError(manifest + ": missing field 'argv'");
  return dispatch(m["argv"].get<std::vector<std::string>>(), out, err, depth + 1);
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, int depth) {
  CLI::App app{"Manipulation-ordering toolkit: scenes, labels, training and evaluation", "pickorder"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  GenerateOpts gen;
  auto* g = app.add_subcommand("generate", "Generate seeded cluttered scenes");
  g->add_option("--difficulty", gen.difficulty, "easy, moderate or hard")->capture_default_str();
  g->add_option("--count", gen.count, "Number of scenes")->capture_default_str();
  g->add_option("--seed", gen.seed, "Seed of the first scene")->capture_default_str();
  g->add_option("--out", gen.out, "Output directory")->required();

  LabelOpts lab;
  auto* l = app.add_subcommand("label", "Label scenes with aggregated oracle orders");
  l->add_option("--scenes", lab.scenes, "Directory of scene files")->required();
  l->add_option("--k", lab.k, "Oracle orderings per scene")->capture_default_str();
  l->add_option("--jitter", lab.jitter, "Oracle key jitter")->capture_default_str();
  l->add_option("--noise-ratio", lab.noise_ratio, "Fraction of pairs to invert")->capture_default_str();
  l->add_option("--seed", lab.seed, "Labelling seed")->capture_default_str();
  l->add_option("--out", lab.out, "Dataset file")->required();

  TrainOpts trn;
  std::uint64_t train_seed = 0;
  auto* t = app.add_subcommand("train", "Train the scorer");
  t->add_option("--dataset", trn.dataset, "Dataset file")->required();
  t->add_option("--config", trn.config, "Training config (key = value lines)");
  auto* seed_opt = t->add_option("--seed", train_seed, "Overrides the config seed");
  t->add_option("--out", trn.out, "Checkpoint file")->required();
  t->add_option("--metrics", trn.metrics, "Per-epoch CSV (default <out>.metrics.csv)");

  EvaluateOpts ev;
  auto* e = app.add_subcommand("evaluate", "Run the pick simulator and write a suite report");
  e->add_option("--scenes", ev.scenes, "Directory of scene files (instead of generating)");
  e->add_option("--difficulty", ev.difficulties, "Difficulties to generate (comma separated)");
  e->add_option("--count", ev.count, "Scenes per difficulty when generating")->capture_default_str();
  e->add_option("--policy", ev.policies, "sph, learned, confidence-random, distance-greedy");
  e->add_option("--replan-interval", ev.intervals, "Replanning intervals (comma separated)");
  e->add_option("--sigma", ev.sigma, "Perception noise std, meters")->capture_default_str();
  e->add_option("--max-attempts", ev.max_attempts, "Attempts before an object is skipped")->capture_default_str();
  e->add_option("--checkpoint", ev.checkpoint, "Scorer checkpoint for the learned policy");
  e->add_option("--seed", ev.seed, "Suite seed")->capture_default_str();
  e->add_option("--out", ev.out, "Report CSV")->required();
  e->add_option("--logs", ev.logs, "Episode log directory (default <out>.logs)");

  std::string manifest;
  auto* r = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  r->add_option("manifest", manifest, "Manifest file")->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  if (g->parsed()) cmd_generate(gen, args, out);
  if (l->parsed()) cmd_label(lab, args, out);
  if (t->parsed()) {
    if (seed_opt->count() > 0) trn.seed = train_seed;
    cmd_train(trn, args, out);
  }
  if (e->parsed()) cmd_evaluate(ev, args, out);
  if (r->parsed()) return cmd_replay(manifest, out, err, depth);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err, 0);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}

}  // namespace pickorder::cli
