#include "tagfog/pipeline/commands.hpp"

#include <fmt/format.h>

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>

#include "tagfog/errors.hpp"
#include "tagfog/eval.hpp"
#include "tagfog/pipeline/ablation.hpp"
#include "tagfog/pipeline/config_file.hpp"
#include "tagfog/pipeline/manifest.hpp"

namespace tagfog::pipeline {

namespace fs = std::filesystem;

namespace {

struct Context {
  std::uint64_t seed = 0;
  RunConfig config;
  bool quiet = false;
  std::optional<fs::path> manifest;
  std::vector<std::string> argv;
};

struct StageIo {
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  out << text;
}

void info(const Context& ctx, const std::string& line) {
  if (!ctx.quiet) fmt::print("{}\n", line);
}

template <typename Fn>
void run_stage(const Context& ctx, const std::string& stage, std::vector<std::string> args, Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  const StageIo io = fn();
  if (!ctx.manifest) return;
  StageRecord record;
  record.stage = stage;
  record.args = std::move(args);
  record.seed = ctx.seed;
  record.inputs = digest_files(io.inputs);
  record.outputs = digest_files(io.outputs);
  record.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  append_stage(*ctx.manifest, record);
}

// make-toy

struct ToyOptions {
  fs::path out_dir;
};

StageIo make_toy(const Context& ctx, const ToyOptions& opt) {
  fog::ToySpec spec = ctx.config.toy;
  spec.seed = derive_seed(ctx.seed, "toy");
  const auto bench = fog::make_toy_benchmark(spec);
  StageIo io;
  fs::create_directories(opt.out_dir);
  const auto put = [&](const data::Dataset& d, const std::string& file) {
    const fs::path p = opt.out_dir / file;
    data::write_dataset(d, p);
    io.outputs.push_back(p);
  };
  put(bench.id_train, "id_train.json");
  put(bench.id_test, "id_test.json");
  for (std::size_t s = 0; s < bench.ood_tests.size(); ++s) put(bench.ood_tests[s], fmt::format("ood_{}.json", s));
  info(ctx, fmt::format("make-toy: K={} train={} test={} ood_sets={} -> {}", spec.num_classes,
                        bench.id_train.samples.size(), bench.id_test.samples.size(), bench.ood_tests.size(),
                        opt.out_dir.string()));
  return io;
}

// gen-fake

struct FakeOptions {
  fs::path in;
  fs::path out;
  std::string grid;
  std::size_t per_image = 0;
};

StageIo gen_fake(const Context& ctx, const FakeOptions& opt) {
  const auto id_set = data::read_dataset(opt.in);
  const data::GridShape grid = opt.grid.empty() ? ctx.config.fake.grid : data::parse_grid(opt.grid);
  const std::size_t per_image = opt.per_image ? opt.per_image : ctx.config.fake.per_image;
  Rng rng = make_rng(ctx.seed, "fake");
  const auto fake = fog::generate_fake_dataset(id_set, grid, per_image, rng);
  data::write_dataset(fake, opt.out);
  info(ctx, fmt::format("gen-fake: {} fakes on a {} grid -> {}", fake.samples.size(), data::grid_string(grid),
                        opt.out.string()));
  return {{opt.in}, {opt.out}};
}

// make-anchors

struct AnchorOptions {
  fs::path out;
  fs::path data;
  std::size_t classes = 0;
  std::size_t dim = 0;
  std::string mode;
  std::vector<std::string> names;
};

StageIo make_anchors(const Context& ctx, const AnchorOptions& opt) {
  StageIo io;
  std::size_t k = opt.classes;
  if (!opt.data.empty()) {
    k = data::read_dataset(opt.data).num_classes;
    io.inputs.push_back(opt.data);
  }
  if (k == 0) throw ConfigError("make-anchors needs --classes or --data");
  anchors::SynthMode mode = ctx.config.anchor_mode;
  if (opt.mode == "orthonormal") {
    mode = anchors::SynthMode::orthonormal;
  } else if (opt.mode == "random_unit") {
    mode = anchors::SynthMode::random_unit;
  } else if (!opt.mode.empty()) {
    throw ConfigError("--mode must be orthonormal or random_unit");
  }
  const std::size_t dim = opt.dim ? opt.dim : ctx.config.model.projection;
  Rng rng = make_rng(ctx.seed, "anchors");
  const auto set = anchors::synth_anchors(k, dim, rng, mode, opt.names);
  anchors::write_anchors(set, opt.out);
  io.outputs.push_back(opt.out);
  info(ctx, fmt::format("make-anchors: K={} d={} -> {}", k, dim, opt.out.string()));
  return io;
}

// train

struct TrainOptions {
  fs::path data;
  fs::path fake;
  fs::path anchors;
  fs::path out;
  fs::path metrics;
};

StageIo train(const Context& ctx, const TrainOptions& opt) {
  StageIo io{{opt.data}, {opt.out}};
  const auto id_train = data::read_dataset(opt.data);
  std::optional<data::Dataset> fake;
  if (!opt.fake.empty()) {
    fake = data::read_dataset(opt.fake);
    io.inputs.push_back(opt.fake);
  }
  trainer::TrainConfig config = ctx.config.train;
  config.seed = ctx.seed;
  std::optional<anchors::AnchorSet> anchor_set;
  if (!opt.anchors.empty()) {
    anchor_set = anchors::load_anchors(opt.anchors);
    io.inputs.push_back(opt.anchors);
  } else if (config.loss_weights.lambda1 > 0.0) {
    throw ConfigError("lambda1 > 0 requires --anchors (or set lambda1 = 0)");
  }

  const auto dims = model_dims(ctx.config.model, id_train.input_dim(), id_train.num_classes);
  auto net = model::TagFogModel::init(ctx.seed, dims);
  const auto fit = trainer::fit(net, id_train, fake ? &*fake : nullptr, anchor_set ? &*anchor_set : nullptr, config);

  model::Checkpoint ckpt{net, scores::compute_activations(net, id_train.samples).features, {}};
  for (const auto& s : id_train.samples) ckpt.id_labels.push_back(s.label);
  model::write_checkpoint(ckpt, opt.out);

  if (!opt.metrics.empty()) {
    std::string csv = "epoch,lr,ce,ci,sc,total,acc\n";
    for (const auto& m : fit.epochs) {
      csv += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", m.epoch, m.lr, m.ce, m.ci, m.sc,
                         m.total, m.id_accuracy);
    }
    write_text(opt.metrics, csv);
    io.outputs.push_back(opt.metrics);
  }
  const auto& last = fit.epochs.back();
  info(ctx, fmt::format("train: {} epochs, final loss {:.4f}, train acc {:.3f} -> {}", fit.epochs.size(), last.total,
                        last.id_accuracy, opt.out.string()));
  return io;
}

// score / eval

struct ScoreOptions {
  fs::path checkpoint;
  fs::path id_train;
  std::string score;
  std::optional<double> react_p;
  std::optional<std::size_t> knn_k;
};

scores::ScoreFn resolve_score(const Context& ctx, const ScoreOptions& opt) {
  scores::ScoreFn fn = ctx.config.score;
  if (!opt.score.empty()) fn.kind = scores::parse_score(opt.score);
  if (opt.react_p) fn.react_percentile = *opt.react_p;
  if (opt.knn_k) fn.knn_k = *opt.knn_k;
  return fn;
}

struct Scorer {
  model::Checkpoint ckpt;
  scores::IdStats stats;
  scores::ScoreFn fn;
};

Scorer load_scorer(const Context& ctx, const ScoreOptions& opt, StageIo& io) {
  Scorer s{model::read_checkpoint(opt.checkpoint), {}, resolve_score(ctx, opt)};
  io.inputs.push_back(opt.checkpoint);
  const std::size_t k = s.ckpt.model.dims().classes;
  if (!opt.id_train.empty()) {
    s.stats = scores::fit_id_stats(s.ckpt.model, data::read_dataset(opt.id_train), s.fn.react_percentile);
    io.inputs.push_back(opt.id_train);
  } else if (!s.ckpt.id_features.empty()) {
    s.stats = scores::fit_id_stats(s.ckpt.id_features, s.ckpt.id_labels, k, s.fn.react_percentile);
  } else if (s.fn.kind == scores::ScoreKind::react || s.fn.kind == scores::ScoreKind::mahalanobis ||
             s.fn.kind == scores::ScoreKind::knn) {
    throw ConfigError("checkpoint carries no ID features; pass --id-train to fit " +
                      std::string(scores::score_name(s.fn.kind)));
  }
  return s;
}

struct ScoreCmdOptions {
  ScoreOptions score;
  fs::path data;
  fs::path out;
};

StageIo score(const Context& ctx, const ScoreCmdOptions& opt) {
  StageIo io;
  const Scorer s = load_scorer(ctx, opt.score, io);
  const auto dataset = data::read_dataset(opt.data);
  io.inputs.push_back(opt.data);
  const auto values = scores::score_samples(s.ckpt.model, s.stats, dataset.samples, s.fn);
  std::string csv = "sample_index,origin,score\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    csv += fmt::format("{},{},{:.17g}\n", i, data::origin_name(dataset.samples[i].origin), values[i]);
  }
  write_text(opt.out, csv);
  io.outputs.push_back(opt.out);
  info(ctx, fmt::format("score: {} samples with {} -> {}", values.size(), scores::score_name(s.fn.kind),
                        opt.out.string()));
  return io;
}

struct EvalOptions {
  ScoreOptions score;
  fs::path id_test;
  std::vector<fs::path> ood;
  fs::path report;
};

StageIo evaluate(const Context& ctx, const EvalOptions& opt) {
  StageIo io;
  const Scorer s = load_scorer(ctx, opt.score, io);
  const auto id_test = data::read_dataset(opt.id_test);
  io.inputs.push_back(opt.id_test);
  std::vector<data::Dataset> ood;
  for (const auto& p : opt.ood) {
    ood.push_back(data::read_dataset(p));
    io.inputs.push_back(p);
  }
  const auto report = eval::evaluate_benchmark(s.ckpt.model, s.stats, id_test, ood, s.fn);
  write_text(opt.report, eval::to_csv(report));
  io.outputs.push_back(opt.report);
  if (!ctx.quiet) fmt::print("{}", eval::to_table(report));
  return io;
}

// ablate

struct AblateOptions {
  std::size_t seeds = 1;
  std::size_t jobs = 1;
  fs::path data;
  fs::path id_test;
  std::vector<fs::path> ood;
  fs::path anchors;
  fs::path report;
};

StageIo ablate(const Context& ctx, const AblateOptions& opt) {
  StageIo io;
  DataSource source;
  if (opt.data.empty()) {
    if (!opt.id_test.empty() || !opt.ood.empty()) throw ConfigError("--id-test and --ood require --data");
    source = toy_source(ctx.config.toy);
  } else {
    if (opt.id_test.empty() || opt.ood.empty()) throw ConfigError("--data requires --id-test and at least one --ood");
    AblationData fixed{data::read_dataset(opt.data), data::read_dataset(opt.id_test), {}, std::nullopt};
    io.inputs = {opt.data, opt.id_test};
    for (const auto& p : opt.ood) {
      fixed.ood_tests.push_back(data::read_dataset(p));
      io.inputs.push_back(p);
    }
    if (!opt.anchors.empty()) {
      fixed.anchors = anchors::load_anchors(opt.anchors);
      io.inputs.push_back(opt.anchors);
    }
    source = [fixed](std::uint64_t) { return fixed; };
  }
  const auto rows = run_ablation(ctx.config, source, {opt.seeds, ctx.seed, opt.jobs});
  if (!opt.report.empty()) {
    write_text(opt.report, ablation_csv(rows));
    io.outputs.push_back(opt.report);
  }
  if (!ctx.quiet) fmt::print("{}", ablation_table(rows));
  return io;
}

// pipeline

struct PipelineOptions {
  fs::path out_dir;
};

void pipeline(Context ctx, const PipelineOptions& opt) {
  const fs::path dir = opt.out_dir;
  fs::create_directories(dir);
  if (!ctx.manifest) ctx.manifest = dir / "manifest.json";
  if (fs::exists(*ctx.manifest)) fs::remove(*ctx.manifest);
  const std::string seed = std::to_string(ctx.seed);

  run_stage(ctx, "make-toy", {"make-toy", "--out-dir", dir.string(), "--seed", seed},
            [&] { return make_toy(ctx, {dir}); });
  run_stage(ctx, "gen-fake", {"gen-fake", "--in", (dir / "id_train.json").string(), "--out", (dir / "fake.json").string()},
            [&] { return gen_fake(ctx, {dir / "id_train.json", dir / "fake.json", "", 0}); });
  run_stage(ctx, "make-anchors", {"make-anchors", "--data", (dir / "id_train.json").string(), "--out",
                                  (dir / "anchors.json").string()},
            [&] { return make_anchors(ctx, {dir / "anchors.json", dir / "id_train.json", 0, 0, "", {}}); });
  const TrainOptions t{dir / "id_train.json", dir / "fake.json", dir / "anchors.json", dir / "model.json",
                       dir / "metrics.csv"};
  run_stage(ctx, "train", {"train", "--data", t.data.string(), "--fake", t.fake.string(), "--anchors",
                           t.anchors.string(), "--out", t.out.string(), "--metrics", t.metrics.string()},
            [&] { return train(ctx, t); });

  EvalOptions e;
  e.score.checkpoint = t.out;
  e.id_test = dir / "id_test.json";
  for (std::size_t s = 0; fs::exists(dir / fmt::format("ood_{}.json", s)); ++s) {
    e.ood.push_back(dir / fmt::format("ood_{}.json", s));
  }
  e.report = dir / "report.csv";
  std::vector<std::string> args{"eval", "--checkpoint", t.out.string(), "--id-test", e.id_test.string()};
  for (const auto& p : e.ood) {
    args.push_back("--ood");
    args.push_back(p.string());
  }
  args.push_back("--report");
  args.push_back(e.report.string());
  run_stage(ctx, "eval", args, [&] { return evaluate(ctx, e); });
}

// manifest-check

int manifest_check(const Context& ctx, const fs::path& path) {
  const auto mismatches = check_manifest(read_manifest(path));
  for (const auto& m : mismatches) {
    fmt::print(stderr, "tagfog: digest mismatch in stage {}: {} (expected {}, found {})\n", m.stage, m.path,
               m.expected, m.actual.empty() ? "missing file" : m.actual);
  }
  if (!mismatches.empty()) return kExitFormat;
  info(ctx, "manifest-check: all digests match");
  return kExitOk;
}

void add_score_flags(CLI::App* cmd, ScoreOptions& opt) {
  cmd->add_option("--checkpoint", opt.checkpoint, "Trained model checkpoint")->required();
  cmd->add_option("--score", opt.score, "msp, maxlogit, energy, react, mahalanobis or knn");
  cmd->add_option("--react-p", opt.react_p, "ReAct clipping percentile in (0, 1)");
  cmd->add_option("--knn-k", opt.knn_k, "Neighbour rank for the knn score");
  cmd->add_option("--id-train", opt.id_train, "Refit ID statistics from this dataset");
}

int dispatch(int argc, char** argv) {
  CLI::App app{"TagFog out-of-distribution training pipeline", "tagfog"};
  app.require_subcommand(1);
  Context ctx;
  fs::path config_path;
  std::string manifest_path;
  app.add_option("--seed", ctx.seed, "Base seed for every random stream");
  app.add_option("--config", config_path, "Flat key = value run configuration");
  app.add_flag("--quiet", ctx.quiet, "Suppress progress output");
  app.add_option("--manifest", manifest_path, "Append a stage record to this manifest");

  ToyOptions toy;
  auto* c_toy = app.add_subcommand("make-toy", "Synthesize the toy patch-arrangement benchmark");
  c_toy->add_option("--out-dir", toy.out_dir, "Output directory")->required();

  FakeOptions fake;
  auto* c_fake = app.add_subcommand("gen-fake", "Generate jigsaw fake outliers from an ID dataset");
  c_fake->add_option("--in", fake.in, "ID dataset")->required();
  c_fake->add_option("--out", fake.out, "Fake dataset to write")->required();
  c_fake->add_option("--grid", fake.grid, "Patch grid, e.g. 2x2");
  c_fake->add_option("--per-image", fake.per_image, "Fakes per ID image");

  AnchorOptions anc;
  auto* c_anc = app.add_subcommand("make-anchors", "Synthesize a unit-norm anchor set");
  c_anc->add_option("--out", anc.out, "Anchor file to write")->required();
  c_anc->add_option("--data", anc.data, "Take K from this dataset");
  c_anc->add_option("--classes", anc.classes, "Number of ID classes");
  c_anc->add_option("--dim", anc.dim, "Anchor dimension");
  c_anc->add_option("--mode", anc.mode, "orthonormal or random_unit");
  c_anc->add_option("--names", anc.names, "Class names")->delimiter(',');

  TrainOptions tr;
  auto* c_train = app.add_subcommand("train", "Train a model");
  c_train->add_option("--data", tr.data, "ID training dataset")->required();
  c_train->add_option("--fake", tr.fake, "Fake outlier dataset");
  c_train->add_option("--anchors", tr.anchors, "Anchor file");
  c_train->add_option("--out", tr.out, "Checkpoint to write")->required();
  c_train->add_option("--metrics", tr.metrics, "Per-epoch metrics CSV");

  ScoreCmdOptions sc;
  auto* c_score = app.add_subcommand("score", "Score every sample of a dataset");
  add_score_flags(c_score, sc.score);
  c_score->add_option("--data", sc.data, "Dataset to score")->required();
  c_score->add_option("--out", sc.out, "Scores CSV")->required();

  EvalOptions ev;
  auto* c_eval = app.add_subcommand("eval", "FPR95 and AUROC per OOD set");
  add_score_flags(c_eval, ev.score);
  c_eval->add_option("--id-test", ev.id_test, "ID test dataset")->required();
  c_eval->add_option("--ood", ev.ood, "OOD test datasets")->required();
  c_eval->add_option("--report", ev.report, "Report CSV")->required();

  AblateOptions ab;
  auto* c_ab = app.add_subcommand("ablate", "Train and evaluate the 8-row component lattice");
  c_ab->add_option("--seeds", ab.seeds, "Number of seeds");
  c_ab->add_option("--jobs", ab.jobs, "Concurrent training runs");
  c_ab->add_option("--data", ab.data, "ID training dataset (default: toy benchmark per seed)");
  c_ab->add_option("--id-test", ab.id_test, "ID test dataset");
  c_ab->add_option("--ood", ab.ood, "OOD test datasets");
  c_ab->add_option("--anchors", ab.anchors, "Anchor file (default: synthesized per seed)");
  c_ab->add_option("--report", ab.report, "Ablation CSV");

  PipelineOptions pl;
  auto* c_pl = app.add_subcommand("pipeline", "make-toy, gen-fake, make-anchors, train and eval in one go");
  c_pl->add_option("--out-dir", pl.out_dir, "Working directory")->required();

  fs::path manifest_file;
  auto* c_mc = app.add_subcommand("manifest-check", "Verify recorded file digests");
  c_mc->add_option("manifest", manifest_file, "Manifest file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fmt::print(stderr, "tagfog: {}\n", e.what());
    return kExitUsage;
  }

  if (!config_path.empty()) ctx.config = load_config(config_path);
  if (!manifest_path.empty()) ctx.manifest = fs::path(manifest_path);
  ctx.argv.assign(argv + 1, argv + argc);

  auto* cmd = app.get_subcommands().front();
  const std::string name = cmd->get_name();
  if (cmd == c_mc) return manifest_check(ctx, manifest_file);
  if (cmd == c_pl) {
    pipeline(ctx, pl);
    return kExitOk;
  }
  run_stage(ctx, name, ctx.argv, [&]() -> StageIo {
    if (cmd == c_toy) return make_toy(ctx, toy);
    if (cmd == c_fake) return gen_fake(ctx, fake);
    if (cmd == c_anc) return make_anchors(ctx, anc);
    if (cmd == c_train) return train(ctx, tr);
    if (cmd == c_score) return score(ctx, sc);
    if (cmd == c_eval) return evaluate(ctx, ev);
    return ablate(ctx, ab);
  });
  return kExitOk;
}

}  // namespace

int run_cli(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "tagfog: {}\n", e.what());
    return kExitUsage;
  } catch (const NumericalError& e) {
    fmt::print(stderr, "tagfog: numerical failure: {}\n", e.what());
    return kExitNumerical;
  } catch (const Error& e) {
    fmt::print(stderr, "tagfog: {}\n", e.what());
    return kExitFormat;
  } catch (const fs::filesystem_error& e) {
    fmt::print(stderr, "tagfog: {}\n", e.what());
    return kExitFormat;
  } catch (const std::exception& e) {
    fmt::print(stderr, "tagfog: unexpected error: {}\n", e.what());
    return kExitUsage;
  }
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<std::string> storage;
  storage.reserve(args.size() + 1);
  storage.emplace_back("tagfog");
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace tagfog::pipeline
