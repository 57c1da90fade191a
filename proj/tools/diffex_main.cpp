// diffex: train a small DDPM on procedural sport-ball scenes and generate
// counterfactual, adversarial, and affirmative explanations for a binary
// classifier, with metric reports.

#include <cstdint>
#include <exception>
#include <iostream>
#include <stdexcept>
#include <string>

#include <CLI11.hpp>

#include "diffex/config.hpp"
#include "diffex/pipeline.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kInternal = 1;
constexpr int kMissingArtifact = 2;
constexpr int kInvalidArgument = 3;
constexpr int kPrecondition = 4;

struct GlobalArgs {
  std::string config_path;
  std::int64_t seed = -1;
  bool seed_given = false;
  std::string out;
};

diffex::RunConfig load_config(const GlobalArgs& g) {
  diffex::RunConfig cfg;
  if (!g.config_path.empty()) cfg = diffex::RunConfig::from_file(g.config_path);
  if (g.seed_given) {
    if (g.seed < 0) throw diffex::ConfigError("--seed: must be nonnegative");
    cfg.seed = static_cast<std::uint64_t>(g.seed);
    cfg.seed_set = true;
  }
  if (!g.out.empty()) cfg.paths.output = g.out;
  return cfg;
}

void add_globals(CLI::App* cmd, GlobalArgs& g) {
  cmd->add_option("--config", g.config_path, "JSON config file");
  cmd->add_option("--seed", g.seed, "master seed (overrides the config)")
      ->trigger_on_parse()
      ->each([&g](const std::string&) { g.seed_given = true; });
  cmd->add_option("--out", g.out, "output directory (overrides paths.output)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"diffusion-based counterfactual explanations for image classifiers"};
  app.require_subcommand(1);

  GlobalArgs g;
  diffex::ExplainArgs explain_args;
  std::string evaluate_dir;

  CLI::App* dataset = app.add_subcommand("dataset", "generate the train and test image sets");
  add_globals(dataset, g);

  CLI::App* train_ddpm =
      app.add_subcommand("train-ddpm", "train the diffusion model and calibrate thresholds");
  add_globals(train_ddpm, g);

  CLI::App* train_clf = app.add_subcommand("train-clf", "train the image classifier");
  add_globals(train_clf, g);

  CLI::App* explain = app.add_subcommand("explain", "generate explanations for one image");
  add_globals(explain, g);
  explain->add_option("--image", explain_args.image, "test-split row id or a 32x32 PNG path");
  explain->add_option("--target", explain_args.target, "target class for the explanation");
  explain
      ->add_option("--mode", explain_args.mode,
                   "counterfactual | cf_no_closeness | cf_no_validity | affirmative | "
                   "adversarial_baseline")
      ->capture_default_str();
  explain->add_option("--cf-dir", explain_args.cf_dir,
                      "prior counterfactual run (affirmative mode)");

  CLI::App* sweep = app.add_subcommand("sweep", "run explain once per lambda in the grid");
  add_globals(sweep, g);
  sweep->add_option("--image", explain_args.image, "test-split row id or a 32x32 PNG path");
  sweep->add_option("--target", explain_args.target, "target class for the explanation");
  sweep
      ->add_option("--mode", explain_args.mode,
                   "counterfactual | cf_no_closeness | cf_no_validity")
      ->capture_default_str();

  CLI::App* evaluate = app.add_subcommand("evaluate", "re-score a persisted explain run");
  add_globals(evaluate, g);
  evaluate->add_option("--generated", evaluate_dir, "directory written by explain")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInvalidArgument;
  }

  try {
    const diffex::RunConfig cfg = load_config(g);
    if (dataset->parsed()) {
      diffex::cmd_dataset(cfg, std::cout);
    } else if (train_ddpm->parsed()) {
      diffex::cmd_train_ddpm(cfg, std::cout);
    } else if (train_clf->parsed()) {
      diffex::cmd_train_clf(cfg, std::cout);
    } else if (explain->parsed()) {
      diffex::cmd_explain(cfg, explain_args, std::cout);
    } else if (sweep->parsed()) {
      diffex::cmd_sweep(cfg, explain_args, std::cout);
    } else if (evaluate->parsed()) {
      diffex::cmd_evaluate(cfg, evaluate_dir, std::cout);
    }
    return kOk;
  } catch (const diffex::ConfigError& e) {
    std::cerr << "diffex: " << e.what() << "\n";
    return kInvalidArgument;
  } catch (const std::invalid_argument& e) {
    std::cerr << "diffex: " << e.what() << "\n";
    return kInvalidArgument;
  } catch (const diffex::MissingArtifactError& e) {
    std::cerr << "diffex: " << e.what() << "\n";
    return kMissingArtifact;
  } catch (const diffex::PreconditionError& e) {
    std::cerr << "diffex: " << e.what() << "\n";
    return kPrecondition;
  } catch (const std::exception& e) {
    std::cerr << "diffex: internal error: " << e.what() << "\n";
    return kInternal;
  }
}
