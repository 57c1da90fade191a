#pragma once

// The command layer behind the CLI: dataset generation, training, explanation
// runs, lambda sweeps, and re-evaluation of persisted outputs. Every command
// validates its inputs fully before touching the filesystem.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffex/checkpoint.hpp"
#include "diffex/classifier.hpp"
#include "diffex/config.hpp"
#include "diffex/diffusion.hpp"
#include "diffex/explainer.hpp"
#include "diffex/metrics.hpp"
#include "diffex/png.hpp"
#include "diffex/report.hpp"
#include "diffex/rng.hpp"
#include "diffex/sportballs.hpp"

namespace diffex {

// Exit-code classes: a required artifact is absent (2) vs a pipeline step
// was invoked before its prerequisites ran (4). Argument and config problems
// throw ConfigError or std::invalid_argument (3).
class MissingArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PreconditionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::filesystem::path train_split_dir(const RunConfig& cfg) {
  return std::filesystem::path(cfg.paths.dataset) / "train";
}
inline std::filesystem::path test_split_dir(const RunConfig& cfg) {
  return std::filesystem::path(cfg.paths.dataset) / "test";
}
inline std::filesystem::path ddpm_checkpoint_dir(const RunConfig& cfg) {
  return std::filesystem::path(cfg.paths.checkpoints) / "ddpm";
}
inline std::filesystem::path classifier_checkpoint_dir(const RunConfig& cfg) {
  return std::filesystem::path(cfg.paths.checkpoints) / "classifier";
}
inline std::filesystem::path thresholds_path(const RunConfig& cfg) {
  return ddpm_checkpoint_dir(cfg) / "thresholds.json";
}

constexpr std::size_t kImageDim = 3 * kCanvas * kCanvas;

// A dataset split held in memory at 8-bit precision, plane-major.
struct RawDataset {
  std::vector<std::uint8_t> pixels;  // n * kImageDim
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }

  std::vector<double> model_scale(std::size_t i) const {
    std::vector<double> x(kImageDim);
    const std::uint8_t* p = pixels.data() + i * kImageDim;
    for (std::size_t d = 0; d < kImageDim; ++d) x[d] = 2.0 * (p[d] / 255.0) - 1.0;
    return x;
  }
};

inline RawDataset load_split(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "dataset.csv"))
    throw MissingArtifactError("dataset split not found at " + dir.string() +
                               " (run the dataset command first)");
  const auto entries = load_dataset_index(dir.string());
  RawDataset raw;
  raw.pixels.resize(entries.size() * kImageDim);
  raw.labels.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::vector<double> unit = load_dataset_image(dir.string(), entries[i]);
    std::uint8_t* p = raw.pixels.data() + i * kImageDim;
    for (std::size_t d = 0; d < kImageDim; ++d)
      p[d] = static_cast<std::uint8_t>(std::lround(unit[d] * 255.0));
    raw.labels.push_back(entries[i].label);
  }
  return raw;
}

// ---------------------------------------------------------------------------
// dataset

inline void cmd_dataset(const RunConfig& cfg, std::ostream& log) {
  cfg.require_seed();
  const auto mix = cfg.dataset.mix();
  log << "generating " << cfg.dataset.train << " train + " << cfg.dataset.test
      << " test scenes under " << cfg.paths.dataset << "\n";
  generate_dataset(train_split_dir(cfg).string(), cfg.dataset.train, child_seed(cfg.seed, 101),
                   mix);
  generate_dataset(test_split_dir(cfg).string(), cfg.dataset.test, child_seed(cfg.seed, 102),
                   mix);
  log << "done\n";
}

// ---------------------------------------------------------------------------
// train-ddpm

inline void cmd_train_ddpm(const RunConfig& cfg, std::ostream& log) {
  cfg.require_seed();
  const RawDataset train = load_split(train_split_dir(cfg));
  const RawDataset test = load_split(test_split_dir(cfg));
  if (test.size() < cfg.thresholds.calibration_examples)
    throw PreconditionError("test split has " + std::to_string(test.size()) +
                            " images, fewer than thresholds.calibration_examples");

  Rng init(child_seed(cfg.seed, 201));
  DiffusionModel model =
      make_diffusion_model(kImageDim, cfg.ddpm.hidden, cfg.schedule.make(),
                           DecoderMode::discrete_256, init, cfg.ddpm.embed_dim);
  DenseNetAdam opt(model.denoiser, cfg.ddpm.adam.params());
  Rng tr(child_seed(cfg.seed, 202));

  std::string loss_log = "step,loss\n";
  std::vector<std::vector<double>> batch_storage(cfg.ddpm.batch_size);
  std::vector<const std::vector<double>*> batch(cfg.ddpm.batch_size);
  for (std::size_t s = 1; s <= cfg.ddpm.train_steps; ++s) {
    for (std::size_t b = 0; b < cfg.ddpm.batch_size; ++b) {
      batch_storage[b] = train.model_scale(tr.bounded(train.size()));
      batch[b] = &batch_storage[b];
    }
    const double loss = ddpm_train_step(model, batch, tr, opt);
    if (s % 50 == 0 || s == 1 || s == cfg.ddpm.train_steps) {
      char row[64];
      std::snprintf(row, sizeof row, "%zu,%.10g\n", s, loss);
      loss_log += row;
    }
    if (s % 250 == 0 || s == cfg.ddpm.train_steps)
      log << "ddpm step " << s << "/" << cfg.ddpm.train_steps << " loss " << loss << std::endl;
  }

  const auto dir = ddpm_checkpoint_dir(cfg);
  save_diffusion_checkpoint(model, dir);
  write_text_file((dir / "loss.csv").string(), loss_log);

  log << "calibrating fidelity threshold on " << cfg.thresholds.calibration_examples
      << " test images" << std::endl;
  std::vector<std::vector<double>> cal;
  cal.reserve(cfg.thresholds.calibration_examples);
  for (std::size_t i = 0; i < cfg.thresholds.calibration_examples; ++i)
    cal.push_back(test.model_scale(i));
  const Thresholds thr = calibrate_thresholds(model, cal, cfg.thresholds.delta);
  nlohmann::json tj;
  tj["format_version"] = 1;
  tj["delta"] = thr.delta;
  tj["epsilon_bpd"] = thr.epsilon_bpd;
  tj["calibration_examples"] = cfg.thresholds.calibration_examples;
  write_text_file(thresholds_path(cfg).string(), tj.dump(2) + "\n");
  log << "checkpoint at " << dir.string() << ", epsilon_bpd " << thr.epsilon_bpd << "\n";
}

// ---------------------------------------------------------------------------
// train-clf

inline double classifier_accuracy(const Classifier& clf, const RawDataset& data) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i)
    hits += clf.predict(data.model_scale(i)) == data.labels[i];
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

inline void cmd_train_clf(const RunConfig& cfg, std::ostream& log) {
  cfg.require_seed();
  const RawDataset train = load_split(train_split_dir(cfg));
  const RawDataset test = load_split(test_split_dir(cfg));

  Rng init(child_seed(cfg.seed, 301));
  Classifier clf = make_image_classifier(3, kCanvas, kCanvas, 2, init);
  ClassifierTrainer trainer(clf, cfg.classifier.adam.params());
  Rng tr(child_seed(cfg.seed, 302));

  std::vector<Tensor> batch_storage(cfg.classifier.batch_size);
  std::vector<const Tensor*> batch(cfg.classifier.batch_size);
  std::vector<std::size_t> labels(cfg.classifier.batch_size);
  for (std::size_t s = 1; s <= cfg.classifier.train_steps; ++s) {
    for (std::size_t b = 0; b < cfg.classifier.batch_size; ++b) {
      const std::size_t i = tr.bounded(train.size());
      batch_storage[b] = Tensor({3, kCanvas, kCanvas}, train.model_scale(i));
      batch[b] = &batch_storage[b];
      labels[b] = train.labels[i];
    }
    const double loss = trainer.step(clf, batch, labels);
    if (s % 250 == 0 || s == cfg.classifier.train_steps)
      log << "clf step " << s << "/" << cfg.classifier.train_steps << " loss " << loss << std::endl;
  }

  const double train_acc = classifier_accuracy(clf, train);
  const double test_acc = classifier_accuracy(clf, test);
  const auto dir = classifier_checkpoint_dir(cfg);
  save_classifier_checkpoint(clf, dir);
  nlohmann::json aj;
  aj["format_version"] = 1;
  aj["train_accuracy"] = train_acc;
  aj["test_accuracy"] = test_acc;
  aj["train_examples"] = train.size();
  aj["test_examples"] = test.size();
  write_text_file((dir / "accuracy.json").string(), aj.dump(2) + "\n");
  log << "train accuracy " << train_acc << ", test accuracy " << test_acc << "\n";
}

// ---------------------------------------------------------------------------
// explain

struct ExplainArgs {
  std::string image;          // dataset test row id, or a PNG path
  long long target = -1;      // target class
  std::string mode = "counterfactual";
  std::string cf_dir;         // affirmative mode: prior counterfactual run
};

inline DiffusionModel load_ddpm_or_die(const RunConfig& cfg) {
  const auto dir = ddpm_checkpoint_dir(cfg);
  if (!std::filesystem::exists(dir / "manifest.json"))
    throw MissingArtifactError("missing DDPM checkpoint at " + dir.string() +
                               " (run train-ddpm first)");
  return load_diffusion_checkpoint(dir);
}

inline Classifier load_classifier_or_die(const RunConfig& cfg) {
  const auto dir = classifier_checkpoint_dir(cfg);
  if (!std::filesystem::exists(dir / "manifest.json"))
    throw MissingArtifactError("missing classifier checkpoint at " + dir.string() +
                               " (run train-clf first)");
  return load_classifier_checkpoint(dir);
}

inline Thresholds load_thresholds_or_die(const RunConfig& cfg) {
  const auto path = thresholds_path(cfg);
  if (!std::filesystem::exists(path))
    throw MissingArtifactError("missing thresholds at " + path.string() +
                               " (run train-ddpm first)");
  std::ifstream in(path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.contains("delta") || !j.contains("epsilon_bpd"))
    throw MissingArtifactError("unreadable thresholds file at " + path.string());
  Thresholds t;
  t.delta = j.at("delta").get<double>();
  t.epsilon_bpd = j.at("epsilon_bpd").get<double>();
  t.validate();
  return t;
}

// Quantize a model-scale vector through the 8-bit image representation, so
// in-memory metrics describe exactly what the PNG on disk holds.
inline std::vector<double> quantize_model_scale(const std::vector<double>& x, Image* out_image) {
  Image img = unit_to_image(model_to_unit(x), kCanvas, kCanvas);
  std::vector<double> q = unit_to_model(image_to_unit(img));
  if (out_image) *out_image = std::move(img);
  return q;
}

inline std::vector<double> load_png_model_scale(const std::filesystem::path& path,
                                                Image* out_image = nullptr) {
  if (!std::filesystem::exists(path))
    throw MissingArtifactError("missing image file " + path.string());
  Image img = read_png(path.string());
  if (img.width != kCanvas || img.height != kCanvas)
    throw std::invalid_argument("image " + path.string() + " is not " +
                                std::to_string(kCanvas) + "x" + std::to_string(kCanvas));
  std::vector<double> x = unit_to_model(image_to_unit(img));
  if (out_image) *out_image = std::move(img);
  return x;
}

inline bool looks_like_index(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(),
                                   [](unsigned char c) { return std::isdigit(c); });
}

// Resolve --image: a bare integer indexes the test split, anything else is a
// PNG path.
inline std::vector<double> resolve_image(const RunConfig& cfg, const std::string& image,
                                         Image* out_image) {
  if (looks_like_index(image)) {
    const auto dir = test_split_dir(cfg);
    if (!std::filesystem::exists(dir / "dataset.csv"))
      throw MissingArtifactError("dataset split not found at " + dir.string() +
                                 " (run the dataset command first)");
    const auto entries = load_dataset_index(dir.string());
    const std::size_t id = std::stoull(image);
    if (id >= entries.size())
      throw MissingArtifactError("test split has " + std::to_string(entries.size()) +
                                 " rows, no row " + image);
    const std::vector<double> unit = load_dataset_image(dir.string(), entries[id]);
    Image img = unit_to_image(unit, kCanvas, kCanvas);
    std::vector<double> x = unit_to_model(image_to_unit(img));
    if (out_image) *out_image = std::move(img);
    return x;
  }
  return load_png_model_scale(image, out_image);
}

inline std::string generated_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "generated_%03zu.png", i);
  return buf;
}

// Metric rows for a batch of generated examples, all quantized to the 8-bit
// representation that lands on disk. The reference bound is computed once.
inline std::vector<MetricsRow> score_examples(const DiffusionModel& model, const Classifier& clf,
                                              const std::vector<std::vector<double>>& examples,
                                              const std::vector<double>& reference,
                                              std::size_t y_validity, bool targets_differ,
                                              QueryKind kind, const Thresholds& thr,
                                              const char* mode_name, std::uint64_t base_seed,
                                              std::vector<bool>* hits_out) {
  const double ref_bpd = elbo_bpd(model, reference);
  const std::vector<double> ref_unit = model_to_unit(reference);
  std::vector<MetricsRow> rows;
  rows.reserve(examples.size());
  if (hits_out) hits_out->clear();
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const std::vector<double>& x = examples[i];
    MetricsRow r;
    r.example_id = i;
    r.seed = base_seed + i;
    r.mode = mode_name;
    r.closeness = closeness(model_to_unit(x), ref_unit);
    r.validity = validity(clf, x, y_validity);
    const double bpd = elbo_bpd(model, x);
    r.extra_bpd = bpd - ref_bpd;
    const bool valid = clf.predict(x) == y_validity;
    const ExampleVerdict v = classify_example(r.closeness, valid, bpd, targets_differ, thr, kind);
    r.verdict = to_string(v.verdict);
    rows.push_back(std::move(r));
    if (hits_out) hits_out->push_back(valid);
  }
  return rows;
}

struct ExplainPlan {
  ExplanationJob job;
  Image original_image;
  nlohmann::json job_json;  // persisted as job.json
};

// Everything cmd_explain decides before generation: resolved inputs, labels,
// and the job record. Throws instead of writing anything.
inline ExplainPlan plan_explain(const RunConfig& cfg, const ExplainArgs& args,
                                const DiffusionModel& model, const Classifier& clf) {
  const ExplainMode mode = parse_explain_mode(args.mode);

  ExplainPlan plan;
  ExplanationJob& job = plan.job;
  job.mode = mode;
  job.count = cfg.guidance.count;
  job.seed = cfg.seed;
  job.adv_step_size = cfg.guidance.adv_step_size;
  job.adv_steps = cfg.guidance.adv_steps;
  job.config.lambda = cfg.guidance.lambda;
  job.config.base_scale = cfg.guidance.base_scale;
  job.config.adam.lr = cfg.guidance.adam_lr;

  std::string resolved_image = args.image;
  std::string cf_example;
  if (mode == ExplainMode::affirmative) {
    // The affirmative run explains a previous counterfactual run's output;
    // its inputs all come from that artifact.
    if (args.cf_dir.empty())
      throw PreconditionError(
          "affirmative mode explains an existing counterfactual run; pass --cf-dir");
    const std::filesystem::path cf(args.cf_dir);
    if (!std::filesystem::exists(cf / "job.json"))
      throw PreconditionError("no counterfactual artifact at " + cf.string() +
                              " (expected job.json from a prior explain run)");
    std::ifstream in(cf / "job.json");
    nlohmann::json cj = nlohmann::json::parse(in, nullptr, false);
    if (cj.is_discarded() || cj.value("mode", "") != "counterfactual")
      throw PreconditionError("artifact at " + cf.string() +
                              " is not a counterfactual explain run");
    job.original_label = cj.at("original_label").get<std::size_t>();
    job.target_label = cj.at("target_label").get<std::size_t>();
    job.x_star = load_png_model_scale(cf / "original.png", &plan.original_image);
    resolved_image = (cf / "original.png").string();

    // Reference: the first generated example judged a counterfactual, else
    // the first example.
    const auto cf_rows = parse_metrics_csv((cf / "metrics.csv").string());
    if (cf_rows.empty())
      throw PreconditionError("counterfactual run at " + cf.string() + " has no examples");
    std::size_t pick = cf_rows[0].example_id;
    for (const auto& r : cf_rows)
      if (r.verdict == "counterfactual") {
        pick = r.example_id;
        break;
      }
    cf_example = generated_name(pick);
    job.cf_reference = load_png_model_scale(cf / cf_example);
  } else {
    if (args.image.empty())
      throw std::invalid_argument("explain: --image is required for this mode");
    if (args.target < 0 || static_cast<std::size_t>(args.target) >= clf.num_classes)
      throw std::invalid_argument("explain: --target must name one of " +
                                  std::to_string(clf.num_classes) + " classes");
    job.target_label = static_cast<std::size_t>(args.target);
    job.x_star = resolve_image(cfg, args.image, &plan.original_image);
    job.original_label = clf.predict(job.x_star);
    if (job.target_label == job.original_label)
      throw std::invalid_argument("explain: the classifier already assigns class " +
                                  std::to_string(job.original_label) +
                                  " to this image; pick a different --target");
  }
  job.validate(model.data_dim, clf.num_classes);

  nlohmann::json& jj = plan.job_json;
  jj["format_version"] = 1;
  jj["mode"] = to_string(job.mode);
  jj["image"] = resolved_image;
  jj["original_label"] = job.original_label;
  jj["target_label"] = job.target_label;
  jj["count"] = job.count;
  jj["seed"] = job.seed;
  jj["lambda"] = job.config.lambda;
  jj["base_scale"] = job.config.base_scale;
  jj["adam_lr"] = job.config.adam.lr;
  jj["adv_step_size"] = job.adv_step_size;
  jj["adv_steps"] = job.adv_steps;
  if (mode == ExplainMode::affirmative) {
    jj["cf_dir"] = args.cf_dir;
    jj["cf_example"] = cf_example;
  }
  return plan;
}

// Generation plus scoring plus report emission into out_dir.
inline void run_explain_job(const RunConfig& cfg, const ExplainPlan& plan,
                            const DiffusionModel& model, const Classifier& clf,
                            const Thresholds& thr, const std::filesystem::path& out_dir,
                            std::ostream& log) {
  const ExplanationJob& job = plan.job;
  log << "generating " << job.count << " " << to_string(job.mode) << " examples (seed "
      << job.seed << ", lambda " << job.config.lambda << ")" << std::endl;
  const std::vector<std::vector<double>> raw = generate(model, clf, job);

  std::vector<std::vector<double>> examples;
  std::vector<Image> images;
  examples.reserve(raw.size());
  images.reserve(raw.size());
  for (const auto& x : raw) {
    Image img;
    examples.push_back(quantize_model_scale(x, &img));
    images.push_back(std::move(img));
  }

  const std::vector<double>& reference = closeness_reference(job);
  const QueryKind kind =
      job.mode == ExplainMode::affirmative ? QueryKind::affirmative : QueryKind::counterfactual;
  log << "scoring (reference bound plus one bound per example)" << std::endl;
  std::vector<bool> hits;
  const std::vector<MetricsRow> rows =
      score_examples(model, clf, examples, reference, validity_target(job),
                     job.target_label != job.original_label, kind, thr,
                     to_string(job.mode), job.seed, &hits);

  std::filesystem::create_directories(out_dir);
  write_text_file((out_dir / "job.json").string(), plan.job_json.dump(2) + "\n");
  write_png((out_dir / "original.png").string(), plan.original_image);
  if (job.mode == ExplainMode::affirmative)
    write_png((out_dir / "reference.png").string(),
              unit_to_image(model_to_unit(job.cf_reference), kCanvas, kCanvas));
  for (std::size_t i = 0; i < images.size(); ++i)
    write_png((out_dir / generated_name(i)).string(), images[i]);

  nlohmann::json echo;
  echo["run"] = cfg.echo();
  echo["job"] = plan.job_json;
  emit_report(out_dir.string(), rows, thr, echo, &plan.original_image, images, hits);
  log << "report at " << out_dir.string() << "\n";
}

inline void cmd_explain(const RunConfig& cfg, const ExplainArgs& args, std::ostream& log) {
  cfg.require_seed();
  const DiffusionModel model = load_ddpm_or_die(cfg);
  const Classifier clf = load_classifier_or_die(cfg);
  const Thresholds thr = load_thresholds_or_die(cfg);
  const ExplainPlan plan = plan_explain(cfg, args, model, clf);
  run_explain_job(cfg, plan, model, clf, thr, cfg.paths.output, log);
}

// ---------------------------------------------------------------------------
// sweep

inline std::string lambda_dir_name(double lambda) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "lambda_%g", lambda);
  return buf;
}

inline void cmd_sweep(const RunConfig& cfg, const ExplainArgs& args, std::ostream& log) {
  cfg.require_seed();
  if (cfg.guidance.lambda_grid.empty())
    throw std::invalid_argument("sweep: guidance.lambda_grid is empty");
  const DiffusionModel model = load_ddpm_or_die(cfg);
  const Classifier clf = load_classifier_or_die(cfg);
  const Thresholds thr = load_thresholds_or_die(cfg);

  // Validate the job once up front; per-lambda plans differ only in lambda.
  plan_explain(cfg, args, model, clf);

  const std::filesystem::path out(cfg.paths.output);
  std::string table = "lambda,count,closeness_mean,closeness_std,validity_mean,validity_std,"
                      "extra_bpd_mean,extra_bpd_std\n";
  for (double lambda : cfg.guidance.lambda_grid) {
    RunConfig sub = cfg;
    sub.guidance.lambda = lambda;
    const ExplainPlan plan = plan_explain(sub, args, model, clf);
    const auto dir = out / lambda_dir_name(lambda);
    log << "lambda " << lambda << " -> " << dir.string() << "\n";
    run_explain_job(sub, plan, model, clf, thr, dir, log);

    const auto rows = parse_metrics_csv((dir / "metrics.csv").string());
    std::vector<double> c, v, e;
    for (const auto& r : rows) {
      c.push_back(r.closeness);
      v.push_back(r.validity);
      e.push_back(r.extra_bpd);
    }
    const Aggregate ca = aggregate(c), va = aggregate(v), ea = aggregate(e);
    char row[256];
    std::snprintf(row, sizeof row, "%g,%zu,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n", lambda,
                  rows.size(), ca.mean, ca.std, va.mean, va.std, ea.mean, ea.std);
    table += row;
  }
  std::filesystem::create_directories(out);
  write_text_file((out / "sweep.csv").string(), table);
  log << "combined table at " << (out / "sweep.csv").string() << "\n";
}

// ---------------------------------------------------------------------------
// evaluate

inline void cmd_evaluate(const RunConfig& cfg, const std::string& generated_dir,
                         std::ostream& log) {
  const std::filesystem::path src(generated_dir);
  if (!std::filesystem::exists(src / "job.json"))
    throw MissingArtifactError("no explain artifact at " + src.string() +
                               " (expected job.json)");
  std::ifstream in(src / "job.json");
  nlohmann::json jj = nlohmann::json::parse(in, nullptr, false);
  if (jj.is_discarded())
    throw MissingArtifactError("unreadable job.json at " + src.string());

  const ExplainMode mode = parse_explain_mode(jj.at("mode").get<std::string>());
  const std::size_t count = jj.at("count").get<std::size_t>();
  const std::size_t y_original = jj.at("original_label").get<std::size_t>();
  const std::size_t y_target = jj.at("target_label").get<std::size_t>();
  const std::uint64_t seed = jj.at("seed").get<std::uint64_t>();

  const DiffusionModel model = load_ddpm_or_die(cfg);
  const Classifier clf = load_classifier_or_die(cfg);
  const Thresholds thr = load_thresholds_or_die(cfg);

  Image original_image;
  const std::vector<double> x_star =
      load_png_model_scale(src / "original.png", &original_image);
  std::vector<double> reference = x_star;
  if (mode == ExplainMode::affirmative)
    reference = load_png_model_scale(src / "reference.png");

  std::vector<std::vector<double>> examples;
  std::vector<Image> images;
  for (std::size_t i = 0; i < count; ++i) {
    Image img;
    examples.push_back(load_png_model_scale(src / generated_name(i), &img));
    images.push_back(std::move(img));
  }

  const std::size_t y_validity = mode == ExplainMode::affirmative ? y_original : y_target;
  const QueryKind kind =
      mode == ExplainMode::affirmative ? QueryKind::affirmative : QueryKind::counterfactual;
  log << "rescoring " << count << " persisted examples from " << src.string() << "\n";
  std::vector<bool> hits;
  const std::vector<MetricsRow> rows =
      score_examples(model, clf, examples, reference, y_validity, y_target != y_original, kind,
                     thr, to_string(mode), seed, &hits);

  const std::filesystem::path out(cfg.paths.output);
  std::filesystem::create_directories(out);
  nlohmann::json echo;
  echo["run"] = cfg.echo();
  echo["job"] = jj;
  emit_report(out.string(), rows, thr, echo, &original_image, images, hits);
  log << "report at " << out.string() << "\n";
}

}  // namespace diffex
