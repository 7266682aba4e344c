// SPDX-License-Identifier: Apache-2.0
#include "matchkit_cli/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

#include "matchkit/baselines.hpp"
#include "matchkit/checkpoint.hpp"
#include "matchkit/error.hpp"
#include "matchkit/evaluation.hpp"
#include "matchkit/gradcheck.hpp"
#include "matchkit/image_io.hpp"
#include "matchkit/training.hpp"
#include "matchkit_cli/run_config.hpp"

namespace matchkit::cli {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kMaxGradcheckDim = 32;

std::size_t thread_count() {
  const char* env = std::getenv("MATCHKIT_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw ConfigError(std::string("MATCHKIT_THREADS must be a positive integer, got '") + env + "'");
  return static_cast<std::size_t>(n);
}

std::span<const std::uint8_t> as_bytes(const std::string& s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

struct TrainArgs {
  std::string config;
  std::string out;
  bool resume = false;
};

void keep_metrics_through(const fs::path& path, std::uint64_t episode) {
  std::string kept;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    const std::uint64_t step = std::strtoull(line.c_str(), nullptr, 10);
    if (step == 0 || step > episode) break;
    kept += line + '\n';
  }
  in.close();
  write_file_atomic(path, as_bytes(kept));
}

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = RunConfig::load(args.config);
  const std::string text = cfg.to_text();
  const PreparedData data = prepare_data(cfg.dataset);
  const TrainConfig tc = cfg.train_config();

  const fs::path dir(args.out);
  fs::create_directories(dir);
  const fs::path ckpt_path = dir / "checkpoint.ckpt";
  const fs::path metrics_path = dir / "metrics.tsv";

  std::unique_ptr<Trainer> trainer;
  if (args.resume) {
    if (!fs::exists(ckpt_path)) throw DataError("resume: no checkpoint at " + ckpt_path.string());
    Checkpoint ck = load_checkpoint(ckpt_path, config_hash(text));
    const std::uint64_t at = ck.episode;
    trainer = std::make_unique<Trainer>(tc, data.dataset, data.split, std::move(ck), text);
    keep_metrics_through(metrics_path, at);
    out << "resuming at episode " << at << '\n';
  } else {
    trainer = std::make_unique<Trainer>(tc, data.dataset, data.split, text);
    write_file_atomic(metrics_path, {});
  }
  write_file_atomic(dir / "config.ini", as_bytes(text));
  trainer->set_eval_threads(thread_count());

  std::ofstream metrics(metrics_path, std::ios::app);
  if (!metrics) throw DataError("cannot open " + metrics_path.string());
  try {
    trainer->run([&](const StepRecord& r) {
      metrics << format_metrics_line(r) << '\n';
      metrics.flush();
      if (r.eval_accuracy) out << "episode " << r.step << " held-out acc=" << *r.eval_accuracy << '\n';
      if (cfg.train.checkpoint_every > 0 && r.step % cfg.train.checkpoint_every == 0) {
        save_checkpoint(trainer->checkpoint(), ckpt_path);
      }
    });
  } catch (const NumericAbort& e) {
    const fs::path diag = dir / "diagnostic.ckpt";
    save_checkpoint(e.diagnostic(), diag);
    err << "error: " << e.what() << "\ndiagnostic checkpoint: " << diag.string() << '\n';
    return kExitNumeric;
  }
  save_checkpoint(trainer->checkpoint(), ckpt_path);
  out << "trained " << trainer->episode() << " episodes; checkpoint " << ckpt_path.string() << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string config;
  std::string dataset;
  std::string mode = "matching";
  std::optional<std::size_t> ways;
  std::optional<std::size_t> shots;
  std::optional<std::size_t> batch_per_class;
  std::optional<std::size_t> episodes;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> attention;
  std::optional<std::size_t> fine_tune_steps;
  std::optional<std::size_t> train_classes;
  std::optional<std::uint64_t> split_seed;
  std::optional<bool> rotations;
  std::optional<std::size_t> image_size;
  std::string split = "test";
  bool allow_task_mismatch = false;
};

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
  const bool matching = args.mode == "matching";
  const bool pixel = args.mode == "pixel";
  const bool base_cos = args.mode == "baseline-cosine";
  const bool base_soft = args.mode == "baseline-softmax";
  if (!matching && !pixel && !base_cos && !base_soft) {
    throw ConfigError("eval: unknown mode '" + args.mode + "'");
  }
  if (matching && args.checkpoint.empty()) throw ConfigError("eval: matching mode needs --checkpoint");
  if (!args.checkpoint.empty() && !args.config.empty()) {
    throw ConfigError("eval: pass either --checkpoint or --config, not both");
  }

  std::optional<Checkpoint> ck;
  RunConfig cfg;
  bool have_config = false;
  if (!args.checkpoint.empty()) {
    ck = load_checkpoint(args.checkpoint);
    if (config_hash(ck->config_text) != ck->config_hash) {
      throw DataError("eval: checkpoint configuration text does not match its hash");
    }
    cfg = RunConfig::parse(ck->config_text);
    have_config = true;
  } else if (!args.config.empty()) {
    cfg = RunConfig::load(args.config);
    have_config = true;
  }
  if (!args.dataset.empty()) cfg.dataset.path = args.dataset;
  if (args.train_classes) cfg.dataset.train_classes = *args.train_classes;
  if (args.split_seed) cfg.dataset.split_seed = *args.split_seed;
  if (args.rotations) cfg.dataset.rotations = *args.rotations;
  if (args.image_size) cfg.dataset.image_size = *args.image_size;
  if (args.attention) cfg.eval.attention = parse_attention_kind(*args.attention);
  if (args.fine_tune_steps) cfg.baseline.fine_tune_steps = *args.fine_tune_steps;
  if (cfg.dataset.path.empty()) throw ConfigError("eval: no dataset (use --dataset)");
  if (args.split != "test" && args.split != "train") {
    throw ConfigError("eval: --split must be test or train");
  }

  EvalOptions options;
  options.ways = args.ways.value_or(have_config ? cfg.train.ways : 5);
  options.shots = args.shots.value_or(have_config ? cfg.train.shots : 1);
  options.batch_per_class = args.batch_per_class.value_or(have_config ? cfg.train.batch_per_class : 2);
  options.episodes = args.episodes.value_or(cfg.eval.episodes);
  options.seed = args.seed.value_or(cfg.eval.seed);
  options.threads = thread_count();
  if (matching && !args.allow_task_mismatch &&
      (options.ways != cfg.train.ways || options.shots != cfg.train.shots)) {
    throw ConfigError("eval: " + std::to_string(options.ways) + "-way " + std::to_string(options.shots) +
                      "-shot differs from the trained " + std::to_string(cfg.train.ways) + "-way " +
                      std::to_string(cfg.train.shots) + "-shot task (use --allow-task-mismatch)");
  }

  const PreparedData data = prepare_data(cfg.dataset);
  const std::span<const int> pool =
      class_pool(data.split, args.split == "train" ? SplitPart::train : SplitPart::test);
  const ModelConfig model = cfg.model_config();
  const AttentionSpec attention = cfg.attention();

  EvalReport report;
  if (matching) {
    report = evaluate(ck->params, model, data.dataset, pool, options, attention);
  } else if (pixel) {
    report = evaluate(pixel_predictor(attention), data.dataset, pool, options);
  } else {
    BaselineConfig bc;
    bc.epochs = cfg.baseline.epochs;
    bc.batch_size = cfg.baseline.batch_size;
    bc.max_steps = cfg.baseline.max_steps > 0
                       ? cfg.baseline.max_steps
                       : std::max<std::size_t>(1, cfg.episode_image_budget() / cfg.baseline.batch_size);
    bc.adam = cfg.train_config().adam;
    bc.seed = cfg.train.seed;
    const BaselineClassifier classifier =
        train_baseline_classifier(data.dataset, data.split.train_class_ids, model, bc);
    err << "baseline classifier: " << classifier.steps << " steps, train acc="
        << classifier.final_train_accuracy << '\n';
    const ModelParams features = classifier.features();
    const EpisodePredictor predictor =
        base_cos ? baseline_cosine_predictor(features, classifier.encoder, cfg.baseline.fine_tune_steps,
                                             cfg.baseline.fine_tune_lr)
                 : baseline_softmax_predictor(features, classifier.encoder,
                                              cfg.baseline.fine_tune_steps, cfg.baseline.fine_tune_lr);
    report = evaluate(predictor, data.dataset, pool, options);
  }
  out << report.summary() << '\n';
  return kExitOk;
}

struct GradcheckArgs {
  EpisodeGradCheckOptions options;
  std::string encoder = "mlp";
  bool inject_fault = false;
};

int cmd_gradcheck(GradcheckArgs args, std::ostream& out, std::ostream& err) {
  if (args.options.dim > kMaxGradcheckDim) {
    throw ConfigError("gradcheck: --dim must be at most " + std::to_string(kMaxGradcheckDim));
  }
  args.options.encoder = parse_encoder_kind(args.encoder);
  std::optional<testing::ScopedBackwardFault> fault;
  if (args.inject_fault) fault.emplace(testing::FaultSite::cosine_backward);
  const GradCheckReport report = gradcheck_episode(args.options);
  for (const GroupError& g : report.groups) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-36s %6zu  %.3e", g.name.c_str(), g.count, g.relative_error);
    out << buf << '\n';
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "max relative error %.3e (%s)", report.max_error, report.worst_group.c_str());
  out << buf << '\n';
  if (!report.passed) {
    std::snprintf(buf, sizeof buf, "%.3e", args.options.tolerance);
    err << "gradcheck failed: " << report.worst_group << " exceeds " << buf << '\n';
    return kExitGradcheck;
  }
  return kExitOk;
}

struct SampleArgs {
  std::string dataset;
  std::string out;
  std::size_t ways = 5;
  std::size_t shots = 1;
  std::size_t batch_per_class = 2;
  std::uint64_t seed = 1;
  std::size_t image_size = 28;
  bool rotations = false;
};

void write_example(const ClassDataset& dataset, const ExampleRef& ref, const fs::path& path) {
  const auto& values = dataset.classes[static_cast<std::size_t>(ref.class_id)]
                           .examples[static_cast<std::size_t>(ref.index)];
  GrayImage img;
  img.height = dataset.example_shape[1];
  img.width = dataset.example_shape[2];
  img.pixels.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(values[i], 0.0, 1.0) * 255.0));
  }
  write_png_gray(img, path);
}

int cmd_sample(const SampleArgs& args, std::ostream& out, std::ostream&) {
  ClassDataset dataset = load_dataset(args.dataset, args.image_size);
  if (!dataset.is_image() || dataset.example_shape[0] != 1) {
    throw DataError("sample: " + args.dataset + " is not a grayscale image dataset");
  }
  if (args.rotations) dataset = augment_rotations(dataset);
  std::vector<int> pool(dataset.num_classes());
  std::iota(pool.begin(), pool.end(), 0);
  const Episode ep = sample_episode_seeded(dataset, pool, args.ways, args.shots,
                                           args.batch_per_class, args.seed);
  const fs::path dir(args.out);
  std::ostringstream manifest;
  manifest << "ways=" << ep.ways << " shots=" << ep.shots << " seed=" << args.seed << '\n';
  for (std::size_t l = 0; l < ep.class_ids.size(); ++l) {
    manifest << "label\t" << l << '\t' << ep.class_ids[l] << '\t'
             << dataset.classes[static_cast<std::size_t>(ep.class_ids[l])].name << '\n';
  }
  const auto emit = [&](const char* part, const std::vector<ExampleRef>& refs,
                        const std::vector<int>& labels) {
    for (std::size_t i = 0; i < refs.size(); ++i) {
      const fs::path sub = dir / part / std::to_string(labels[i]);
      fs::create_directories(sub);
      const std::string file = std::to_string(i) + ".png";
      write_example(dataset, refs[i], sub / file);
      manifest << part << '\t' << labels[i] << '\t' << refs[i].class_id << '\t' << refs[i].index
               << '\t' << part << '/' << labels[i] << '/' << file << '\n';
    }
  };
  emit("support", ep.support, ep.support_labels);
  emit("batch", ep.batch, ep.batch_labels);
  write_file_atomic(dir / "manifest.txt", as_bytes(manifest.str()));
  out << "wrote " << ep.support.size() << " support and " << ep.batch.size() << " batch images to "
      << dir.string() << '\n';
  return kExitOk;
}

struct SynthArgs {
  std::string out;
  std::size_t classes = 40;
  std::size_t dim = 16;
  double sigma = 0.1;
  std::uint64_t seed = 1;
  std::size_t per_class = 40;
};

int cmd_gen_synthetic(const SynthArgs& args, std::ostream& out, std::ostream&) {
  const ClassDataset ds = gen_synthetic(args.classes, args.dim, args.sigma, args.seed, args.per_class);
  save_synthetic(ds, args.out);
  out << "wrote " << args.classes << " classes x " << args.per_class << " examples (dim " << args.dim
      << ") to " << args.out << '\n';
  return kExitOk;
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Matching networks for one-shot classification", "matchkit"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Episodic meta-training");
  t->add_option("--config", train.config, "Run configuration (INI)")->required();
  t->add_option("--out", train.out, "Output directory")->required();
  t->add_flag("--resume", train.resume, "Continue from <out>/checkpoint.ckpt");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate on seeded held-out episodes");
  e->add_option("--checkpoint", ev.checkpoint, "Trained checkpoint");
  e->add_option("--config", ev.config, "Run configuration when no checkpoint is given");
  e->add_option("--dataset", ev.dataset, "Dataset path (overrides the configuration)");
  e->add_option("--mode", ev.mode, "matching | pixel | baseline-cosine | baseline-softmax")
      ->check(CLI::IsMember({"matching", "pixel", "baseline-cosine", "baseline-softmax"}));
  e->add_option("--ways", ev.ways);
  e->add_option("--shots", ev.shots);
  e->add_option("--batch-per-class", ev.batch_per_class);
  e->add_option("--episodes", ev.episodes);
  e->add_option("--seed", ev.seed);
  e->add_option("--attention", ev.attention, "softmax-cosine | knn | kde");
  e->add_option("--fine-tune-steps", ev.fine_tune_steps);
  e->add_option("--train-classes", ev.train_classes, "Classes assigned to the training split");
  e->add_option("--split-seed", ev.split_seed);
  e->add_option("--rotations", ev.rotations, "Rotation augmentation for image datasets (true|false)");
  e->add_option("--image-size", ev.image_size);
  e->add_option("--split", ev.split, "Class pool to draw episodes from: test | train");
  e->add_flag("--allow-task-mismatch", ev.allow_task_mismatch,
              "Evaluate a (ways, shots) task other than the trained one");

  GradcheckArgs gc;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference check of the episode loss");
  g->add_option("--dim", gc.options.dim, "Input and embedding width (<= 32)");
  g->add_option("--ways", gc.options.ways);
  g->add_option("--shots", gc.options.shots);
  g->add_option("--batch-per-class", gc.options.batch_per_class);
  g->add_flag("--fce", gc.options.fce, "Include full context embeddings");
  g->add_option("--fce-steps", gc.options.fce_steps, "Attention LSTM read steps K");
  g->add_option("--encoder", gc.encoder)->check(CLI::IsMember({"mlp", "conv"}));
  g->add_option("--seed", gc.options.seed);
  g->add_option("--tolerance", gc.options.tolerance);
  g->add_flag("--inject-fault", gc.inject_fault, "Perturb the cosine backward rule (test hook)");

  SampleArgs sm;
  auto* s = app.add_subcommand("sample", "Write one episode as PNGs plus a manifest");
  s->add_option("--dataset", sm.dataset)->required();
  s->add_option("--out", sm.out)->required();
  s->add_option("--ways", sm.ways);
  s->add_option("--shots", sm.shots);
  s->add_option("--batch-per-class", sm.batch_per_class);
  s->add_option("--seed", sm.seed);
  s->add_option("--image-size", sm.image_size);
  s->add_flag("--rotations", sm.rotations);

  SynthArgs sy;
  auto* y = app.add_subcommand("gen-synthetic", "Write a Gaussian-prototype dataset");
  y->add_option("--out", sy.out)->required();
  y->add_option("--classes", sy.classes);
  y->add_option("--dim", sy.dim);
  y->add_option("--sigma", sy.sigma);
  y->add_option("--seed", sy.seed);
  y->add_option("--per-class", sy.per_class);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (t->parsed()) return guarded(err, [&] { return cmd_train(train, out, err); });
  if (e->parsed()) return guarded(err, [&] { return cmd_eval(ev, out, err); });
  if (g->parsed()) return guarded(err, [&] { return cmd_gradcheck(gc, out, err); });
  if (s->parsed()) return guarded(err, [&] { return cmd_sample(sm, out, err); });
  return guarded(err, [&] { return cmd_gen_synthetic(sy, out, err); });
}

}  // namespace matchkit::cli
