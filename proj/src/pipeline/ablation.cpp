#include "tagfog/pipeline/ablation.hpp"

#include <fmt/format.h>

#include <cmath>
#include <future>

#include "tagfog/errors.hpp"
#include "tagfog/eval.hpp"

namespace tagfog::pipeline {

namespace {

struct SeedData {
  std::uint64_t seed = 0;
  AblationData data;
  data::Dataset fake;
  anchors::AnchorSet anchors;
};

SeedData prepare(const RunConfig& config, const DataSource& source, std::uint64_t seed) {
  AblationData data = source(seed);
  Rng fake_rng = make_rng(seed, "fake");
  data::Dataset fake = fog::generate_fake_dataset(data.id_train, config.fake.grid, config.fake.per_image, fake_rng);
  anchors::AnchorSet anchor_set = [&] {
    if (data.anchors) return *data.anchors;
    Rng rng = make_rng(seed, "anchors");
    return anchors::synth_anchors(data.id_train.num_classes, config.model.projection, rng, config.anchor_mode);
  }();
  return {seed, std::move(data), std::move(fake), std::move(anchor_set)};
}

RunResult train_and_score(const RunConfig& config, const AblationData& data, const data::Dataset* fake,
                          const anchors::AnchorSet& anchor_set, const Components& c, std::uint64_t seed) {
  trainer::TrainConfig train = config.train;
  train.seed = seed;
  if (!c.ci) train.loss_weights.lambda1 = 0.0;
  if (!c.sc) train.loss_weights.lambda2 = 0.0;

  const auto dims = model_dims(config.model, data.id_train.input_dim(), data.id_train.num_classes);
  auto net = model::TagFogModel::init(seed, dims);
  trainer::fit(net, data.id_train, c.fake ? fake : nullptr, c.ci ? &anchor_set : nullptr, train);

  const auto stats = scores::fit_id_stats(net, data.id_train, config.score.react_percentile);
  const auto report = eval::evaluate_benchmark(net, stats, data.id_test, data.ood_tests, config.score);

  const auto acts = scores::compute_activations(net, data.id_test.samples);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < acts.logits.size(); ++i) {
    const auto& row = acts.logits[i];
    const auto best = std::max_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(dims.classes));
    if (static_cast<int>(best - row.begin()) + 1 == data.id_test.samples[i].label) ++correct;
  }
  return {report.mean_auroc, report.mean_fpr95,
          static_cast<double>(correct) / static_cast<double>(std::max<std::size_t>(acts.logits.size(), 1))};
}

std::pair<double, double> mean_sd(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

}  // namespace

const std::array<Components, 8>& ablation_rows() {
  static const std::array<Components, 8> rows = {{
      {false, false, false},
      {true, false, false},
      {false, true, false},
      {false, false, true},
      {true, true, false},
      {false, true, true},
      {true, false, true},
      {true, true, true},
  }};
  return rows;
}

DataSource toy_source(const fog::ToySpec& spec) {
  return [spec](std::uint64_t seed) {
    fog::ToySpec s = spec;
    s.seed = derive_seed(seed, "toy");
    auto bench = fog::make_toy_benchmark(s);
    return AblationData{std::move(bench.id_train), std::move(bench.id_test), std::move(bench.ood_tests), std::nullopt};
  };
}

RunResult run_single(const RunConfig& config, const AblationData& data, const Components& components,
                     std::uint64_t seed) {
  const SeedData prepared = prepare(config, [&](std::uint64_t) { return data; }, seed);
  return train_and_score(config, prepared.data, &prepared.fake, prepared.anchors, components, seed);
}

std::vector<AblationRow> run_ablation(const RunConfig& config, const DataSource& source,
                                      const AblationOptions& options) {
  if (options.seeds == 0) throw ConfigError("ablation needs at least one seed");
  trainer::validate(config.train);

  std::vector<SeedData> seeds;
  for (std::size_t i = 0; i < options.seeds; ++i) seeds.push_back(prepare(config, source, options.base_seed + i));

  const auto& lattice = ablation_rows();
  const std::size_t total = lattice.size() * seeds.size();
  std::vector<RunResult> results(total);
  auto run_task = [&](std::size_t t) {
    const auto& sd = seeds[t / lattice.size()];
    results[t] = train_and_score(config, sd.data, &sd.fake, sd.anchors, lattice[t % lattice.size()], sd.seed);
  };

  const std::size_t jobs = std::max<std::size_t>(1, options.jobs);
  for (std::size_t start = 0; start < total; start += jobs) {
    std::vector<std::future<void>> pending;
    for (std::size_t t = start; t < std::min(total, start + jobs); ++t) {
      pending.push_back(std::async(jobs == 1 ? std::launch::deferred : std::launch::async, run_task, t));
    }
    for (auto& f : pending) f.get();
  }

  std::vector<AblationRow> rows;
  for (std::size_t r = 0; r < lattice.size(); ++r) {
    AblationRow row;
    row.components = lattice[r];
    std::vector<double> a;
    std::vector<double> f;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const auto& res = results[s * lattice.size() + r];
      row.runs.push_back(res);
      a.push_back(res.auroc);
      f.push_back(res.fpr95);
    }
    std::tie(row.auroc_mean, row.auroc_sd) = mean_sd(a);
    std::tie(row.fpr95_mean, row.fpr95_sd) = mean_sd(f);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "fake_ood,ci,sc,seeds,fpr95_mean,fpr95_sd,auroc_mean,auroc_sd\n";
  for (const auto& r : rows) {
    out += fmt::format("{:d},{:d},{:d},{},{:.6f},{:.6f},{:.6f},{:.6f}\n", r.components.fake, r.components.ci,
                       r.components.sc, r.runs.size(), r.fpr95_mean, r.fpr95_sd, r.auroc_mean, r.auroc_sd);
  }
  return out;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  const auto mark = [](bool on) { return on ? "✓" : " "; };
  std::string out = fmt::format("{:^8} {:^4} {:^4}  {:>16}  {:>16}\n", "fake OOD", "CI", "SC", "FPR95", "AUROC");
  for (const auto& r : rows) {
    out += fmt::format("{:^8} {:^4} {:^4}  {:>16}  {:>16}\n", mark(r.components.fake), mark(r.components.ci),
                       mark(r.components.sc),
                       fmt::format("{:.2f} ± {:.2f}", 100.0 * r.fpr95_mean, 100.0 * r.fpr95_sd),
                       fmt::format("{:.2f} ± {:.2f}", 100.0 * r.auroc_mean, 100.0 * r.auroc_sd));
  }
  return out;
}

}  // namespace tagfog::pipeline
