#pragma once

// Run configuration: a strict JSON file. Every key is typed, unknown keys
// are hard errors, and the seed has no default.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffex/adam.hpp"
#include "diffex/schedule.hpp"
#include "diffex/sportballs.hpp"

namespace diffex {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const char* where,
                       std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known) throw ConfigError(std::string(where) + ": unknown key \"" + item.key() + "\"");
  }
}

template <typename T>
T get_typed(const nlohmann::json& j, const char* where, const char* key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string(where) + "." + key + ": wrong type");
  }
}

}  // namespace detail

struct PathsConfig {
  std::string dataset = "data";
  std::string checkpoints = "checkpoints";
  std::string output = "out";

  static PathsConfig from_json(const nlohmann::json& j) {
    detail::check_keys(j, "paths", {"dataset", "checkpoints", "output"});
    PathsConfig p;
    p.dataset = detail::get_typed(j, "paths", "dataset", p.dataset);
    p.checkpoints = detail::get_typed(j, "paths", "checkpoints", p.checkpoints);
    p.output = detail::get_typed(j, "paths", "output", p.output);
    if (p.dataset.empty() || p.checkpoints.empty() || p.output.empty())
      throw ConfigError("paths: entries must be nonempty");
    return p;
  }
};

struct DatasetConfig {
  std::size_t train = 20000;
  std::size_t test = 2000;
  std::vector<std::string> difficulty_mix{"any"};

  static DatasetConfig from_json(const nlohmann::json& j) {
    detail::check_keys(j, "dataset", {"train", "test", "difficulty_mix"});
    DatasetConfig d;
    d.train = detail::get_typed(j, "dataset", "train", d.train);
    d.test = detail::get_typed(j, "dataset", "test", d.test);
    d.difficulty_mix = detail::get_typed(j, "dataset", "difficulty_mix", d.difficulty_mix);
    if (d.train == 0 || d.test == 0) throw ConfigError("dataset: train and test must be positive");
    if (d.difficulty_mix.empty()) throw ConfigError("dataset: difficulty_mix must be nonempty");
    for (const auto& name : d.difficulty_mix) parse_difficulty(name);  // throws on bad names
    return d;
  }

  std::vector<Difficulty> mix() const {
    std::vector<Difficulty> m;
    for (const auto& name : difficulty_mix) m.push_back(parse_difficulty(name));
    return m;
  }
};

struct ScheduleConfig {
  std::size_t steps = 300;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  static ScheduleConfig from_json(const nlohmann::json& j) {
    detail::check_keys(j, "schedule", {"steps", "beta_start", "beta_end"});
    ScheduleConfig s;
    s.steps = detail::get_typed(j, "schedule", "steps", s.steps);
    s.beta_start = detail::get_typed(j, "schedule", "beta_start", s.beta_start);
    s.beta_end = detail::get_typed(j, "schedule", "beta_end", s.beta_end);
    if (s.steps < 2) throw ConfigError("schedule.steps: need at least 2");
    if (!(s.beta_start > 0.0) || !(s.beta_end > 0.0) || s.beta_start > s.beta_end ||
        s.beta_end >= 1.0)
      throw ConfigError("schedule: need 0 < beta_start <= beta_end < 1");
    return s;
  }

  NoiseSchedule make() const { return NoiseSchedule::linear(steps, beta_start, beta_end); }
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamConfig from_json(const nlohmann::json& j, const char* where) {
    detail::check_keys(j, where, {"lr", "beta1", "beta2", "eps"});
    AdamConfig a;
    a.lr = detail::get_typed(j, where, "lr", a.lr);
    a.beta1 = detail::get_typed(j, where, "beta1", a.beta1);
    a.beta2 = detail::get_typed(j, where, "beta2", a.beta2);
    a.eps = detail::get_typed(j, where, "eps", a.eps);
    if (!(a.lr > 0.0)) throw ConfigError(std::string(where) + ".lr: must be positive");
    if (a.beta1 < 0.0 || a.beta1 >= 1.0 || a.beta2 < 0.0 || a.beta2 >= 1.0)
      throw ConfigError(std::string(where) + ": betas must lie in [0, 1)");
    if (!(a.eps > 0.0)) throw ConfigError(std::string(where) + ".eps: must be positive");
    return a;
  }

  AdamParams params() const { return AdamParams{lr, beta1, beta2, eps}; }
};

struct DdpmConfig {
  std::vector<std::size_t> hidden{512, 512};
  std::size_t embed_dim = 32;
  std::size_t batch_size = 32;
  std::size_t train_steps = 6000;
  AdamConfig adam;

  static DdpmConfig from_json(const nlohmann::json& j) {
    detail::check_keys(j, "ddpm",
                       {"hidden", "embed_dim", "batch_size", "train_steps", "adam"});
    DdpmConfig d;
    d.hidden = detail::get_typed(j, "ddpm", "hidden", d.hidden);
    d.embed_dim = detail::get_typed(j, "ddpm", "embed_dim", d.embed_dim);
    d.batch_size = detail::get_typed(j, "ddpm", "batch_size", d.batch_size);
    d.train_steps = detail::get_typed(j, "ddpm", "train_steps", d.train_steps);
    if (j.contains("adam")) d.adam = AdamConfig::from_json(j.at("adam"), "ddpm.adam");
    if (d.hidden.empty()) throw ConfigError("ddpm.hidden: need at least one layer");
    for (std::size_t h : d.hidden)
      if (h == 0) throw ConfigError("ddpm.hidden: layer sizes must be positive");
    if (d.embed_dim == 0 || d.batch_size == 0 || d.train_steps == 0)
      throw ConfigError("ddpm: embed_dim, batch_size and train_steps must be positive");
    return d;
  }
};

struct ClassifierConfig {
  std::size_t batch_size = 32;
  std::size_t train_steps = 3000;
  AdamConfig adam;

  static ClassifierConfig from_json(const nlohmann::json& j) {
    detail::check_keys(j, "classifier", {"batch_size", "train_steps", "adam"});
    ClassifierConfig c;
    c.batch_size = detail::get_typed(j, "classifier", "batch_size", c.batch_size);
    c.train_steps = detail::get_typed(j, "classifier", "train_steps", c.train_steps);
    if (j.contains("adam")) c.adam = AdamConfig::from_json(j.at("adam"), "classifier.adam");
    if (c.batch_size == 0 || c.train_steps == 0)
      throw ConfigError("classifier: batch_size and train_steps must be positive");
    return c;
  }
};

struct GuidanceSection {
  double lambda = 0.3;
  double base_scale = 1.0;
  std::size_t count = 16;
  double adam_lr = 1.0;
  std::vector<double> lambda_grid{0.1, 0.3, 0.5, 0.7};
  double adv_step_size = 0.01;
  std::size_t adv_steps = 500;

  static GuidanceSection from_json(const nlohmann::json& j) {
    detail::check_keys(j, "guidance",
                       {"lambda", "base_scale", "count", "adam_lr", "lambda_grid",
                        "adv_step_size", "adv_steps"});
    GuidanceSection g;
    g.lambda = detail::get_typed(j, "guidance", "lambda", g.lambda);
    g.base_scale = detail::get_typed(j, "guidance", "base_scale", g.base_scale);
    g.count = detail::get_typed(j, "guidance", "count", g.count);
    g.adam_lr = detail::get_typed(j, "guidance", "adam_lr", g.adam_lr);
    g.lambda_grid = detail::get_typed(j, "guidance", "lambda_grid", g.lambda_grid);
    g.adv_step_size = detail::get_typed(j, "guidance", "adv_step_size", g.adv_step_size);
    g.adv_steps = detail::get_typed(j, "guidance", "adv_steps", g.adv_steps);
    if (!(g.lambda >= 0.0)) throw ConfigError("guidance.lambda: must be nonnegative");
    if (!(g.base_scale > 0.0)) throw ConfigError("guidance.base_scale: must be positive");
    if (g.count == 0) throw ConfigError("guidance.count: must be positive");
    if (!(g.adam_lr > 0.0)) throw ConfigError("guidance.adam_lr: must be positive");
    for (double l : g.lambda_grid)
      if (!(l >= 0.0)) throw ConfigError("guidance.lambda_grid: entries must be nonnegative");
    if (!(g.adv_step_size > 0.0)) throw ConfigError("guidance.adv_step_size: must be positive");
    if (g.adv_steps == 0) throw ConfigError("guidance.adv_steps: must be positive");
    return g;
  }
};

struct ThresholdSection {
  double delta = 0.25;
  std::size_t calibration_examples = 200;

  static ThresholdSection from_json(const nlohmann::json& j) {
    detail::check_keys(j, "thresholds", {"delta", "calibration_examples"});
    ThresholdSection t;
    t.delta = detail::get_typed(j, "thresholds", "delta", t.delta);
    t.calibration_examples =
        detail::get_typed(j, "thresholds", "calibration_examples", t.calibration_examples);
    if (!(t.delta > 0.0)) throw ConfigError("thresholds.delta: must be positive");
    if (t.calibration_examples < 200)
      throw ConfigError("thresholds.calibration_examples: need at least 200");
    return t;
  }
};

struct RunConfig {
  std::uint64_t seed = 0;
  bool seed_set = false;
  PathsConfig paths;
  DatasetConfig dataset;
  ScheduleConfig schedule;
  DdpmConfig ddpm;
  ClassifierConfig classifier;
  GuidanceSection guidance;
  ThresholdSection thresholds;

  static RunConfig from_json(const nlohmann::json& j) {
    detail::check_keys(j, "config",
                       {"seed", "paths", "dataset", "schedule", "ddpm", "classifier", "guidance",
                        "thresholds"});
    RunConfig c;
    if (j.contains("seed")) {
      try {
        c.seed = j.at("seed").get<std::uint64_t>();
      } catch (const nlohmann::json::exception&) {
        throw ConfigError("config.seed: wrong type");
      }
      c.seed_set = true;
    }
    if (j.contains("paths")) c.paths = PathsConfig::from_json(j.at("paths"));
    if (j.contains("dataset")) c.dataset = DatasetConfig::from_json(j.at("dataset"));
    if (j.contains("schedule")) c.schedule = ScheduleConfig::from_json(j.at("schedule"));
    if (j.contains("ddpm")) c.ddpm = DdpmConfig::from_json(j.at("ddpm"));
    if (j.contains("classifier")) c.classifier = ClassifierConfig::from_json(j.at("classifier"));
    if (j.contains("guidance")) c.guidance = GuidanceSection::from_json(j.at("guidance"));
    if (j.contains("thresholds")) c.thresholds = ThresholdSection::from_json(j.at("thresholds"));
    return c;
  }

  static RunConfig from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config: cannot open " + path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config: " + path + " is not valid JSON: " + e.what());
    }
    return from_json(j);
  }

  // The seed is mandatory; it may arrive via the file or the --seed flag.
  void require_seed() const {
    if (!seed_set) throw ConfigError("config: seed is required (set \"seed\" or pass --seed)");
  }

  nlohmann::json echo() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["paths"] = {{"dataset", paths.dataset},
                  {"checkpoints", paths.checkpoints},
                  {"output", paths.output}};
    j["dataset"] = {{"train", dataset.train},
                    {"test", dataset.test},
                    {"difficulty_mix", dataset.difficulty_mix}};
    j["schedule"] = {{"steps", schedule.steps},
                     {"beta_start", schedule.beta_start},
                     {"beta_end", schedule.beta_end}};
    j["ddpm"] = {{"hidden", ddpm.hidden},
                 {"embed_dim", ddpm.embed_dim},
                 {"batch_size", ddpm.batch_size},
                 {"train_steps", ddpm.train_steps},
                 {"adam", {{"lr", ddpm.adam.lr},
                           {"beta1", ddpm.adam.beta1},
                           {"beta2", ddpm.adam.beta2},
                           {"eps", ddpm.adam.eps}}}};
    j["classifier"] = {{"batch_size", classifier.batch_size},
                       {"train_steps", classifier.train_steps},
                       {"adam", {{"lr", classifier.adam.lr},
                                 {"beta1", classifier.adam.beta1},
                                 {"beta2", classifier.adam.beta2},
                                 {"eps", classifier.adam.eps}}}};
    j["guidance"] = {{"lambda", guidance.lambda},
                     {"base_scale", guidance.base_scale},
                     {"count", guidance.count},
                     {"adam_lr", guidance.adam_lr},
                     {"lambda_grid", guidance.lambda_grid},
                     {"adv_step_size", guidance.adv_step_size},
                     {"adv_steps", guidance.adv_steps}};
    j["thresholds"] = {{"delta", thresholds.delta},
                       {"calibration_examples", thresholds.calibration_examples}};
    return j;
  }
};

}  // namespace diffex
