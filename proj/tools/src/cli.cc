// Copyright 2026 The minstp Authors.
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "minstp_cli/cli.h"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <numbers>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "minstp/error.h"
#include "minstp/exact_ot.h"
#include "minstp/experiments.h"
#include "minstp/measures.h"
#include "minstp/random.h"
#include "minstp/slicer.h"
#include "minstp/stp.h"
#include "minstp/train.h"

namespace minstp::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr const char* kRunDirEnv = "MINSTP_RUN_DIR";
constexpr const char* kDefaultRunDir = "runs";

const std::vector<std::string> kKeys = {
    // run
    "run.dir", "run.seed", "run.jobs",
    // data
    "data.family", "data.n", "data.seed", "data.side", "data.rotation", "data.zoom",
    "data.mu", "data.nu",
    // slicer
    "slicer.kind", "slicer.hidden", "slicer.seed", "slicer.checkpoint",
    // train
    "train.epochs", "train.batch_size", "train.batches", "train.lr", "train.lr_final",
    "train.alpha", "train.optimizer", "train.momentum", "train.p", "train.eval_every",
    "train.keep_best", "train.per_batch_update", "train.seed", "train.workers",
    // drift study
    "drift.family", "drift.tasks", "drift.rotation", "drift.zoom", "drift.n", "drift.runs",
    "drift.hidden",
    // mini-batch study
    "minibatch.family", "minibatch.n", "minibatch.batch_sizes", "minibatch.batches",
    "minibatch.seeds", "minibatch.hidden", "minibatch.export_plans",
    // amortized study
    "amortized.family", "amortized.train_pairs", "amortized.test_pairs", "amortized.n",
    "amortized.hidden", "amortized.steps", "amortized.lr", "amortized.context",
    // theory suite
    "theory.sandwich_pairs", "theory.lemma_instances", "theory.hoeffding_trials",
    "theory.variance_reruns", "theory.mc_samples", "theory.random_pairs",
    // outputs
    "plan.method", "output.path",
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// ---------------------------------------------------------------------------
// Typed access.

const std::string& require(const Settings& s, const std::string& key) {
  if (!s.has(key)) throw ConfigError("missing required setting " + key, key);
  return s.get(key);
}

double as_double(const Settings& s, const std::string& key) {
  const std::string& v = s.get(key);
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || !std::isfinite(x))
    throw ConfigError(key + ": expected a number, got '" + v + "'", key);
  return x;
}

std::uint64_t as_uint(const Settings& s, const std::string& key) {
  const std::string& v = s.get(key);
  char* end = nullptr;
  errno = 0;
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0' || v.front() == '-' || errno != 0)
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'", key);
  return x;
}

bool as_bool(const Settings& s, const std::string& key) {
  const std::string& v = s.get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'", key);
}

std::vector<std::string> as_list(const Settings& s, const std::string& key) {
  std::vector<std::string> out;
  std::stringstream ss(s.get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<int> as_widths(const Settings& s, const std::string& key) {
  std::vector<int> out;
  for (const std::string& w : as_list(s, key)) {
    char* end = nullptr;
    const long v = std::strtol(w.c_str(), &end, 10);
    if (*end != '\0' || v < 1) throw ConfigError(key + ": widths must be positive integers", key);
    out.push_back(static_cast<int>(v));
  }
  return out;
}

template <typename T>
void maybe(const Settings& s, const std::string& key, T& field) {
  if (!s.has(key)) return;
  if constexpr (std::is_same_v<T, double>) {
    field = as_double(s, key);
  } else if constexpr (std::is_same_v<T, bool>) {
    field = as_bool(s, key);
  } else if constexpr (std::is_same_v<T, std::vector<int>>) {
    field = as_widths(s, key);
  } else {
    field = static_cast<T>(as_uint(s, key));
  }
}

Family family_of(const Settings& s, const std::string& key, Family fallback) {
  if (!s.has(key)) return fallback;
  try {
    return parse_family(s.get(key));
  } catch (const ConfigError& e) {
    throw ConfigError(e.what(), key);
  }
}

TrainConfig train_config(const Settings& s, TrainConfig tc) {
  maybe(s, "train.epochs", tc.epochs);
  maybe(s, "train.batch_size", tc.batch_size);
  maybe(s, "train.batches", tc.batches_per_epoch);
  maybe(s, "train.lr", tc.lr);
  maybe(s, "train.lr_final", tc.lr_final_fraction);
  maybe(s, "train.alpha", tc.alpha_fraction);
  maybe(s, "train.momentum", tc.momentum);
  maybe(s, "train.p", tc.p);
  maybe(s, "train.eval_every", tc.eval_every);
  maybe(s, "train.keep_best", tc.keep_best);
  maybe(s, "train.per_batch_update", tc.per_batch_update);
  maybe(s, "train.seed", tc.seed);
  maybe(s, "train.workers", tc.workers);
  if (s.has("train.optimizer")) {
    const std::string& o = s.get("train.optimizer");
    if (o == "gd" || o == "sgd")
      tc.optimizer = Optimizer::kGradientDescent;
    else if (o == "momentum")
      tc.optimizer = Optimizer::kMomentum;
    else
      throw ConfigError("train.optimizer: expected gd or momentum, got '" + o + "'",
                        "train.optimizer");
  }
  return tc;
}

std::uint64_t run_seed(const Settings& s) {
  return s.has("run.seed") ? as_uint(s, "run.seed") : 0;
}

std::size_t jobs(const Settings& s) {
  const std::size_t j = s.has("run.jobs") ? as_uint(s, "run.jobs") : 1;
  if (j < 1) throw ConfigError("run.jobs must be >= 1", "run.jobs");
  return j;
}

// ---------------------------------------------------------------------------
// Files and run directories.

DiscreteMeasure read_measure(const std::string& path) {
  if (!fs::exists(path)) throw IoError("input file not found: " + path);
  return load_points(path, format_from_path(path));
}

void write_text(const fs::path& path, const std::string& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << body;
  if (!f) throw IoError("write failed for " + path.string());
}

class RunDir {
 public:
  RunDir(const std::string& command, const Settings& settings) {
    std::string base;
    if (settings.has("run.dir")) {
      base = settings.get("run.dir");
    } else if (const char* env = std::getenv(kRunDirEnv); env && *env) {
      base = env;
    } else {
      base = kDefaultRunDir;
    }
    path_ = fs::path(base) / (command + "-" + config_hash(command, settings));
    fs::create_directories(path_);
    json cfg;
    cfg["command"] = command;
    cfg["settings"] = json::parse(settings.to_json());
    write("config.json", cfg.dump(2) + "\n");
  }

  void write(const std::string& name, const std::string& body) const {
    write_text(path_ / name, body);
  }
  std::string str() const { return path_.string(); }

 private:
  fs::path path_;
};

void guard_inputs(const std::string& out, std::initializer_list<std::string> inputs) {
  if (out.empty()) return;
  for (const std::string& in : inputs) {
    if (in.empty()) continue;
    std::error_code ec;
    if (in == out || (fs::exists(in) && fs::exists(out) && fs::equivalent(in, out, ec)))
      throw ConfigError("output path would overwrite input file " + in, "output.path");
  }
}

// ---------------------------------------------------------------------------
// Slicers and measures from settings.

std::vector<int> hidden_of(const Settings& s) {
  std::vector<int> hidden = {32, 32};
  maybe(s, "slicer.hidden", hidden);
  return hidden;
}

Slicer slicer_of(const Settings& s, Eigen::Index dim) {
  const std::string kind = s.has("slicer.kind") ? s.get("slicer.kind") : "mlp";
  const std::uint64_t seed = s.has("slicer.seed") ? as_uint(s, "slicer.seed") : run_seed(s);
  std::string variant = kind;
  if (s.has("slicer.checkpoint")) {
    const std::string& cp = s.get("slicer.checkpoint");
    if (cp == "random") {
      // falls through to a fresh draw of slicer.kind
    } else if (cp == "random-linear" || cp == "random-mlp") {
      variant = cp.substr(7);
    } else {
      if (!fs::exists(cp)) throw IoError("slicer checkpoint not found: " + cp);
      Slicer f = load_slicer(cp);
      if (f.input_dim() != dim)
        throw DimensionError("checkpoint expects dimension " + std::to_string(f.input_dim()) +
                             ", data has " + std::to_string(dim));
      return f;
    }
  }
  if (variant == "linear") return Slicer::random_linear(dim, seed);
  if (variant == "mlp") return Slicer::random_mlp(dim, hidden_of(s), seed);
  throw ConfigError("slicer.kind: expected linear or mlp, got '" + variant + "'", "slicer.kind");
}

std::pair<DiscreteMeasure, DiscreteMeasure> pair_of(const Settings& s) {
  if (s.has("data.mu") || s.has("data.nu"))
    return {read_measure(require(s, "data.mu")), read_measure(require(s, "data.nu"))};
  DatasetSpec spec;
  spec.family = family_of(s, "data.family", Family::kRings);
  if (spec.family == Family::kFile)
    throw ConfigError("family 'file' needs data.mu and data.nu", "data.family");
  maybe(s, "data.n", spec.n);
  spec.seed = s.has("data.seed") ? as_uint(s, "data.seed") : run_seed(s);
  if (s.has("data.rotation") || s.has("data.zoom")) {
    Drift d;
    maybe(s, "data.rotation", d.rotation);
    maybe(s, "data.zoom", d.zoom);
    spec.drift = d;
  }
  return generate_pair(spec);
}

double p_of(const Settings& s) {
  double p = 2.0;
  maybe(s, "train.p", p);
  if (!(p >= 1.0)) throw ConfigError("train.p must be >= 1", "train.p");
  return p;
}

// ---------------------------------------------------------------------------
// Commands.

int cmd_gen(const Settings& s, std::ostream& out) {
  DatasetSpec spec;
  spec.family = family_of(s, "data.family", Family::kRings);
  if (spec.family == Family::kFile)
    throw ConfigError("gen needs a generated family", "data.family");
  maybe(s, "data.n", spec.n);
  spec.seed = s.has("data.seed") ? as_uint(s, "data.seed") : run_seed(s);
  if (s.has("data.rotation") || s.has("data.zoom")) {
    Drift d;
    maybe(s, "data.rotation", d.rotation);
    maybe(s, "data.zoom", d.zoom);
    spec.drift = d;
  }
  if (s.has("data.side")) {
    const std::string& side = s.get("data.side");
    if (side == "source")
      spec.side = Side::kSource;
    else if (side == "target")
      spec.side = Side::kTarget;
    else
      throw ConfigError("data.side: expected source or target", "data.side");
  }
  const std::string& path = require(s, "output.path");
  const DiscreteMeasure m = generate(spec);
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  save_points(m, path, format_from_path(path));
  json j = {{"command", "gen"},
            {"family", std::string(family_name(spec.family))},
            {"n", m.size()},
            {"dim", m.dim()},
            {"out", path}};
  out << j.dump() << "\n";
  return kExitOk;
}

int cmd_train(const Settings& s, std::ostream& out) {
  const auto [mu, nu] = pair_of(s);
  TrainConfig tc = train_config(s, TrainConfig{});
  if (!s.has("train.seed")) tc.seed = run_seed(s);
  tc.validate(mu.size(), nu.size());  // before any file is written
  const Slicer f0 = slicer_of(s, mu.dim());
  guard_inputs(s.has("output.path") ? s.get("output.path") : "",
               {s.has("data.mu") ? s.get("data.mu") : "", s.has("data.nu") ? s.get("data.nu") : ""});
  const RunDir dir("train", s);
  const TrainResult r = train_minstp(mu, nu, f0, tc);
  dir.write("trace.jsonl", trace_to_jsonl(r.trace));
  dir.write("slicer.json", slicer_to_json(r.slicer) + "\n");
  if (s.has("output.path")) save_slicer(r.slicer, s.get("output.path"));
  json rep = {{"command", "train"},
              {"initial_cost", r.trace.initial_cost},
              {"final_cost", r.trace.final_cost},
              {"best_epoch", r.trace.best_epoch},
              {"epochs", r.trace.epochs.size()},
              {"checkpoint", (fs::path(dir.str()) / "slicer.json").string()},
              {"run_dir", dir.str()}};
  dir.write("report.json", rep.dump(2) + "\n");
  out << rep.dump() << "\n";
  return kExitOk;
}

int cmd_eval(const Settings& s, std::ostream& out) {
  const auto [mu, nu] = pair_of(s);
  const double p = p_of(s);
  const Slicer f = slicer_of(s, mu.dim());
  const StpResult stp = lift_plan(f, mu, nu, p);
  json rep = {{"command", "eval"},
              {"stp_cost", stp.cost},
              {"stp_value", stp.value},
              {"p", p},
              {"n", mu.size()},
              {"m", nu.size()},
              {"slicer_fingerprint", stp.slicer_id}};
  try {
    const OtResult ot = ot_assignment(mu, nu, p);
    rep["ot_cost"] = ot.cost;
    rep["ot_value"] = ot.value;
  } catch (const UnsupportedError& e) {
    rep["ot_cost"] = nullptr;
    rep["ot_note"] = e.what();
  }
  const RunDir dir("eval", s);
  rep["run_dir"] = dir.str();
  dir.write("report.json", rep.dump(2) + "\n");
  out << rep.dump() << "\n";
  return kExitOk;
}

int cmd_export_plan(const Settings& s, std::ostream& out) {
  const auto [mu, nu] = pair_of(s);
  const double p = p_of(s);
  const std::string method = s.has("plan.method") ? s.get("plan.method") : "stp";
  const std::string& path = require(s, "output.path");
  guard_inputs(path, {s.has("data.mu") ? s.get("data.mu") : "",
                      s.has("data.nu") ? s.get("data.nu") : "",
                      s.has("slicer.checkpoint") ? s.get("slicer.checkpoint") : ""});
  TransportPlan plan;
  double cost = 0.0;
  if (method == "stp") {
    const StpResult r = lift_plan(slicer_of(s, mu.dim()), mu, nu, p);
    plan = r.plan;
    cost = r.cost;
  } else if (method == "ot") {
    const OtResult r = ot_assignment(mu, nu, p);
    plan = r.plan;
    cost = r.cost;
  } else {
    throw ConfigError("plan.method: expected stp or ot, got '" + method + "'", "plan.method");
  }
  write_text(path, plan_to_csv(plan));
  out << json({{"command", "export-plan"}, {"method", method}, {"cost", cost}, {"out", path}})
             .dump()
      << "\n";
  return kExitOk;
}

StudyReport study_drift(const Settings& s) {
  DriftStudyConfig cfg;
  cfg.family = family_of(s, "drift.family", cfg.family);
  maybe(s, "drift.tasks", cfg.num_tasks);
  maybe(s, "drift.zoom", cfg.zoom);
  maybe(s, "drift.n", cfg.n);
  maybe(s, "drift.runs", cfg.runs);
  maybe(s, "drift.hidden", cfg.hidden);
  if (s.has("drift.rotation")) cfg.rotation = as_double(s, "drift.rotation") * std::numbers::pi / 180.0;
  cfg.train = train_config(s, cfg.train);
  cfg.seed = run_seed(s);
  cfg.jobs = jobs(s);
  cfg.validate();
  return run_drift_study(cfg);
}

StudyReport study_minibatch(const Settings& s) {
  MinibatchStudyConfig cfg;
  cfg.family = family_of(s, "minibatch.family", cfg.family);
  maybe(s, "minibatch.n", cfg.n);
  maybe(s, "minibatch.hidden", cfg.hidden);
  maybe(s, "minibatch.export_plans", cfg.export_plans);
  if (s.has("minibatch.batch_sizes")) {
    cfg.batch_sizes.clear();
    Settings one;
    for (const std::string& b : as_list(s, "minibatch.batch_sizes")) {
      one.set("minibatch.n", b);
      cfg.batch_sizes.push_back(as_uint(one, "minibatch.n"));
    }
  }
  if (s.has("minibatch.seeds")) {
    cfg.seeds.clear();
    Settings one;
    for (const std::string& v : as_list(s, "minibatch.seeds")) {
      one.set("run.seed", v);
      cfg.seeds.push_back(as_uint(one, "run.seed"));
    }
  } else if (s.has("run.seed")) {
    cfg.seeds = {run_seed(s)};
  }
  cfg.full = train_config(s, cfg.full);
  cfg.batch = train_config(s, cfg.batch);
  maybe(s, "minibatch.batches", cfg.batch.batches_per_epoch);
  cfg.jobs = jobs(s);
  cfg.validate();
  return run_minibatch_study(cfg);
}

StudyReport study_amortized(const Settings& s) {
  AmortizedStudyConfig cfg;
  if (s.has("amortized.family")) {
    try {
      cfg.family = parse_pair_family(s.get("amortized.family"));
    } catch (const ConfigError& e) {
      throw ConfigError(e.what(), "amortized.family");
    }
  }
  maybe(s, "amortized.train_pairs", cfg.num_train);
  maybe(s, "amortized.test_pairs", cfg.num_test);
  maybe(s, "amortized.n", cfg.n);
  maybe(s, "amortized.hidden", cfg.hidden);
  maybe(s, "amortized.context", cfg.use_context);
  cfg.per_pair = train_config(s, cfg.per_pair);
  maybe(s, "amortized.steps", cfg.amortized.epochs);
  maybe(s, "amortized.lr", cfg.amortized.lr);
  cfg.seed = run_seed(s);
  cfg.jobs = jobs(s);
  cfg.validate();
  return run_amortized_study(cfg);
}

StudyReport study_theory(const Settings& s) {
  TheoryConfig cfg;
  cfg.seed = run_seed(s);
  cfg.jobs = jobs(s);
  maybe(s, "theory.sandwich_pairs", cfg.sandwich_pairs);
  maybe(s, "theory.lemma_instances", cfg.lemma_instances);
  maybe(s, "theory.hoeffding_trials", cfg.hoeffding_trials);
  maybe(s, "theory.variance_reruns", cfg.variance_reruns);
  maybe(s, "theory.mc_samples", cfg.mc_samples);
  maybe(s, "theory.random_pairs", cfg.random_pairs);
  if (cfg.variance_reruns < 2)
    throw ConfigError("theory.variance_reruns must be >= 2", "theory.variance_reruns");
  if (cfg.mc_samples < 2) throw ConfigError("theory.mc_samples must be >= 2", "theory.mc_samples");
  for (const char* k : {"theory.sandwich_pairs", "theory.lemma_instances", "theory.hoeffding_trials"})
    if (s.has(k) && as_uint(s, k) < 1) throw ConfigError(std::string(k) + " must be >= 1", k);
  return run_theory_suite(cfg);
}

int cmd_study(const std::string& kind, const Settings& s, std::ostream& out) {
  StudyReport report;
  if (kind == "drift")
    report = study_drift(s);
  else if (kind == "minibatch")
    report = study_minibatch(s);
  else if (kind == "amortized")
    report = study_amortized(s);
  else if (kind == "theory")
    report = study_theory(s);
  else
    throw ConfigError("unknown study '" + kind + "' (drift, minibatch, amortized, theory)",
                      "study");
  const RunDir dir("study-" + kind, s);
  const std::string body = report_to_json(report);
  dir.write("report.json", body + "\n");
  for (const auto& [name, csv] : report.tables) dir.write(name, csv);
  json summary = {{"command", "study"},
                  {"study", kind},
                  {"passed", report.all_passed()},
                  {"checks", report.checks.size()},
                  {"run_dir", dir.str()}};
  out << summary.dump() << "\n";
  return report.all_passed() ? kExitOk : kExitChecksFailed;
}

// ---------------------------------------------------------------------------
// Error reporting.

void report_error(std::ostream& err, const std::string& kind, const std::string& message,
                  const std::string& field = {}) {
  json j = {{"error", kind}, {"message", message}};
  if (!field.empty()) j["field"] = field;
  err << j.dump() << "\n";
}

int exit_code_for(const Error& e) {
  const std::string& k = e.kind();
  if (k == "io") return kExitMissingFile;
  if (k == "numerical" || k == "infeasible" || k == "undefined") return kExitNumerical;
  return kExitConfig;
}

// Flags shared by every subcommand and the settings key each one sets.
struct FlagMap {
  std::vector<std::pair<CLI::Option*, std::string>> entries;
  std::map<std::string, std::string> storage;

  void add(CLI::App* app, const std::string& flag, const std::string& key,
           const std::string& help) {
    entries.emplace_back(app->add_option(flag, storage[flag + "@" + key], help), key);
  }

  void apply(Settings& s) {
    for (auto& [opt, key] : entries)
      if (opt->count() > 0) s.set(key, opt->as<std::string>());
  }
};

}  // namespace

// ---------------------------------------------------------------------------

Settings Settings::parse(const std::string& text) {
  Settings s;
  std::stringstream ss(text);
  std::string line;
  std::size_t row = 0;
  while (std::getline(ss, line)) {
    ++row;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(row) + ": expected key = value", "config");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(row) + ": empty key", "config");
    s.set(key, value);
  }
  return s;
}

Settings Settings::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("config file not found: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

void Settings::set(const std::string& key, const std::string& value) {
  const auto& keys = known_keys();
  if (std::find(keys.begin(), keys.end(), key) == keys.end())
    throw ConfigError("unknown setting '" + key + "'", key);
  values_[key] = value;
}

const std::string& Settings::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("setting " + key + " is not set", key);
  return it->second;
}

std::string Settings::to_json() const {
  json j = json::object();
  for (const auto& [k, v] : values_) j[k] = v;
  return j.dump();
}

const std::vector<std::string>& known_keys() { return kKeys; }

std::string config_hash(const std::string& command, const Settings& settings) {
  // run.dir and run.jobs decide where and how fast, not what.
  json j = json::object();
  for (const auto& [k, v] : settings.values())
    if (k != "run.dir" && k != "run.jobs") j[k] = v;
  const std::string canon = command + "\n" + j.dump();
  std::uint64_t h = hash_name(canon);
  h = mix64(h);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"min-STP: sliced transport plans with trainable slicers", "minstp"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "key = value settings file");
  app.add_option("--set", overrides, "override one setting, key=value (repeatable)");
  FlagMap flags;
  auto common = [&](CLI::App* sub) {
    flags.add(sub, "--run-dir", "run.dir", "base directory for run artifacts");
    flags.add(sub, "--seed", "run.seed", "master seed");
    flags.add(sub, "--jobs", "run.jobs", "worker threads");
    sub->add_option("--config", config_path, "key = value settings file");
    sub->add_option("--set", overrides, "override one setting, key=value (repeatable)");
  };
  auto data_flags = [&](CLI::App* sub) {
    flags.add(sub, "--mu", "data.mu", "source points (CSV or JSON)");
    flags.add(sub, "--nu", "data.nu", "target points (CSV or JSON)");
    flags.add(sub, "--family", "data.family", "generated family when no files are given");
    flags.add(sub, "--n", "data.n", "points per generated measure");
    flags.add(sub, "--data-seed", "data.seed", "generator seed (defaults to --seed)");
    flags.add(sub, "--p", "train.p", "cost exponent");
  };
  auto slicer_flags = [&](CLI::App* sub) {
    flags.add(sub, "--slicer", "slicer.checkpoint",
              "checkpoint path, or random / random-linear / random-mlp");
    flags.add(sub, "--kind", "slicer.kind", "linear or mlp");
    flags.add(sub, "--hidden", "slicer.hidden", "hidden widths, comma separated");
    flags.add(sub, "--slicer-seed", "slicer.seed", "initialisation seed (defaults to --seed)");
  };

  CLI::App* gen = app.add_subcommand("gen", "generate a point set");
  common(gen);
  flags.add(gen, "--family", "data.family", "rings, moons or blobs");
  flags.add(gen, "--n", "data.n", "number of points");
  flags.add(gen, "--side", "data.side", "source or target half of the template");
  flags.add(gen, "--rotation", "data.rotation", "drift rotation in radians");
  flags.add(gen, "--zoom", "data.zoom", "drift zoom factor");
  flags.add(gen, "--out", "output.path", "output file (.csv or .json)");

  CLI::App* train = app.add_subcommand("train", "train a slicer on one pair");
  common(train);
  data_flags(train);
  slicer_flags(train);
  flags.add(train, "--epochs", "train.epochs", "epochs");
  flags.add(train, "--batch-size", "train.batch_size", "batch size B (0: full batch)");
  flags.add(train, "--batches", "train.batches", "mini-batches per epoch k");
  flags.add(train, "--lr", "train.lr", "learning rate");
  flags.add(train, "--alpha", "train.alpha", "smoothing as a fraction of projected spread");
  flags.add(train, "--optimizer", "train.optimizer", "gd or momentum");
  flags.add(train, "--out", "output.path", "also write the checkpoint here");

  CLI::App* eval = app.add_subcommand("eval", "STP cost of a slicer and the OT lower bound");
  common(eval);
  data_flags(eval);
  slicer_flags(eval);

  CLI::App* study = app.add_subcommand("study", "run an experiment suite");
  common(study);
  std::string study_kind;
  study->add_option("kind", study_kind, "drift, minibatch, amortized or theory")->required();

  CLI::App* plan = app.add_subcommand("export-plan", "write plan triples i,j,mass as CSV");
  common(plan);
  data_flags(plan);
  slicer_flags(plan);
  flags.add(plan, "--method", "plan.method", "stp or ot");
  flags.add(plan, "--out", "output.path", "output CSV");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    report_error(err, "config", e.what());
    return kExitConfig;
  }

  try {
    Settings s = config_path.empty() ? Settings{} : Settings::load(config_path);
    for (const std::string& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw ConfigError("--set expects key=value, got '" + kv + "'", "set");
      s.set(trim(std::string_view(kv).substr(0, eq)), trim(std::string_view(kv).substr(eq + 1)));
    }
    flags.apply(s);
    if (gen->parsed()) return cmd_gen(s, out);
    if (train->parsed()) return cmd_train(s, out);
    if (eval->parsed()) return cmd_eval(s, out);
    if (study->parsed()) return cmd_study(study_kind, s, out);
    if (plan->parsed()) return cmd_export_plan(s, out);
    report_error(err, "config", "no command given");
    return kExitConfig;
  } catch (const ConfigError& e) {
    report_error(err, e.kind(), e.what(), e.field());
    return kExitConfig;
  } catch (const Error& e) {
    report_error(err, e.kind(), e.what());
    return exit_code_for(e);
  } catch (const fs::filesystem_error& e) {
    report_error(err, "io", e.what());
    return kExitMissingFile;
  } catch (const std::exception& e) {
    report_error(err, "internal", e.what());
    return 1;
  }
}

}  // namespace minstp::cli
