// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <fmt/core.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include "gradcheck.hpp"
#include "jigsaw_checks.hpp"
#include "oracles.hpp"
#include "tagfog/eval.hpp"
#include "tagfog/losses.hpp"
#include "tagfog/pipeline/ablation.hpp"
#include "tagfog/pipeline/commands.hpp"
#include "tagfog/pipeline/config_file.hpp"
#include "tiny_model.hpp"
#include "trained_toy.hpp"

namespace {

using namespace tagfog;
using Clock = std::chrono::steady_clock;

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
  if (!ok) ++failures;
  fmt::print("{} {}: {}\n", ok ? "PASS" : "FAIL", name, detail);
  std::fflush(stdout);
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void gradient_correctness() {
  const auto t0 = Clock::now();
  double worst_rel = 0.0;
  double worst_abs = 0.0;
  double worst_plain = 0.0;
  double floor = 0.0;
  std::size_t below = 0;
  std::size_t checked = 0;
  constexpr std::size_t kBatches = 20;
  for (std::uint64_t seed = 0; seed < kBatches; ++seed) {
    auto c = testing::make_tiny_case(seed);
    const auto g = testing::check_loss_gradients(c);
    worst_rel = std::max(worst_rel, g.max_rel());
    worst_abs = std::max(worst_abs, g.max_abs_small());
    worst_plain = std::max(worst_plain, g.max_rel_all());
    floor = std::max(floor, g.max_floor());
    below += g.below_floor();
    checked += g.total.checked;
  }
  const double secs = seconds_since(t0);
  report(worst_rel < 1e-4 && worst_abs < 1e-8 && secs < 30.0, "gradient-correctness",
         fmt::format("{} batches x {} params x 4 losses, h=1e-5: max rel err {:.3e} (< 1e-4) on entries above the "
                     "difference-noise floor (<= {:.2e}); {} entries below it, max abs err {:.3e} (< 1e-8); "
                     "unfloored max rel err {:.3e}; {:.1f}s (< 30s)",
                     kBatches, checked / kBatches, worst_rel, floor, below, worst_abs, worst_plain, secs));
}

void oracle_equivalence() {
  Rng rng(2024);
  std::normal_distribution<double> n(0.0, 1.0);
  double sc_err = 0.0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t s = std::uniform_int_distribution<std::size_t>(2, 12)(rng);
    const std::size_t d = 4;
    std::vector<std::vector<double>> rows(s, std::vector<double>(d));
    std::vector<double> flat;
    for (auto& r : rows) {
      double norm = 0.0;
      for (double& v : r) {
        v = n(rng);
        norm += v * v;
      }
      for (double& v : r) {
        v /= std::sqrt(norm);
        flat.push_back(v);
      }
    }
    std::vector<int> labels(s);
    for (int& l : labels) l = std::uniform_int_distribution<int>(1, 5)(rng);
    const losses::BatchView view{Tensor::zeros({s, 5}), Tensor::from_vector({s, d}, flat), labels};
    sc_err = std::max(sc_err, std::abs(losses::sc_loss(view, 0.1).item() - testing::supcon_reference(rows, labels, 0.1)));
  }

  double auroc_err = 0.0;
  double fpr_err = 0.0;
  for (int t = 0; t < 100; ++t) {
    std::uniform_int_distribution<std::size_t> size(1, 64);
    const bool coarse = t % 2 == 0;
    auto draw = [&](std::size_t m, double shift) {
      std::vector<double> v(m);
      for (double& x : v) x = coarse ? std::round(4.0 * (n(rng) + shift)) / 4.0 : n(rng) + shift;
      return v;
    };
    const auto id = draw(size(rng), 0.8);
    const auto ood = draw(size(rng), 0.0);
    auroc_err = std::max(auroc_err, std::abs(eval::auroc(id, ood) - testing::auroc_pairwise(id, ood)));
    fpr_err = std::max(fpr_err, std::abs(eval::fpr_at_tpr(id, ood) - testing::fpr_threshold_scan(id, ood, 0.95)));
  }
  report(sc_err <= 1e-10 && auroc_err <= 1e-12 && fpr_err <= 1e-12, "oracle-equivalence",
         fmt::format("supcon vs triple loop on 50 batches max err {:.3e} (<= 1e-10); auroc vs pairwise {:.3e}, "
                     "fpr95 vs threshold scan {:.3e} on 100 fixtures (<= 1e-12)",
                     sc_err, auroc_err, fpr_err));
}

void jigsaw_invariants() {
  const auto t0 = Clock::now();
  const auto t = testing::run_jigsaw_trials(1000, 77);
  const double secs = seconds_since(t0);
  report(t.trials == 1000 && t.multiset_failures == 0 && t.identity_failures == 0 && t.roundtrip_failures == 0 &&
             secs < 10.0,
         "jigsaw-invariants",
         fmt::format("{} trials: multiset failures {}, identity outputs {}, round-trip failures {}, {:.2f}s (< 10s)",
                     t.trials, t.multiset_failures, t.identity_failures, t.roundtrip_failures, secs));
}

std::vector<data::LabeledSample> five_hundred(const testing::TrainedToy& toy) {
  std::vector<data::LabeledSample> out(toy.bench.id_test.samples.begin(), toy.bench.id_test.samples.end());
  out.insert(out.end(), toy.bench.ood_tests[0].samples.begin(), toy.bench.ood_tests[0].samples.end());
  for (std::size_t i = 0; out.size() < 500; ++i) out.push_back(toy.bench.id_train.samples[i]);
  return out;
}

void react_degeneracy(const testing::TrainedToy& toy) {
  const auto samples = five_hundred(toy);
  auto stats = toy.stats;
  stats.react_threshold = std::numeric_limits<double>::infinity();
  const std::size_t k = toy.model.dims().classes;
  std::size_t mismatches = 0;
  for (const auto& s : samples) {
    const auto logits = toy.model.infer(Tensor::from_vector({1, s.input.size()}, s.input)).logits;
    if (scores::score_react(toy.model, s.input, stats) != scores::score_energy(logits.values().first(k))) ++mismatches;
  }
  const auto react = scores::score_samples(toy.model, stats, samples, {scores::ScoreKind::react});
  const auto energy = scores::score_samples(toy.model, stats, samples, {scores::ScoreKind::energy});
  std::size_t batched = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) batched += react[i] != energy[i];
  report(mismatches == 0 && batched == 0 && samples.size() == 500, "react-degeneracy",
         fmt::format("clip=+inf on {} samples of a trained toy model: {} per-sample and {} batched bitwise mismatches",
                     samples.size(), mismatches, batched));
}

void logit_exclusion(const testing::TrainedToy& toy) {
  const auto samples = five_hundred(toy);
  const std::vector<scores::ScoreKind> kinds{scores::ScoreKind::msp,   scores::ScoreKind::maxlogit,
                                             scores::ScoreKind::energy, scores::ScoreKind::react,
                                             scores::ScoreKind::mahalanobis, scores::ScoreKind::knn};
  std::vector<std::vector<double>> before;
  for (auto kind : kinds) before.push_back(scores::score_samples(toy.model, toy.stats, samples, {kind}));
  auto perturbed = model::clone(toy.model);
  const std::size_t k = toy.model.dims().classes;
  Tensor w = perturbed.head().weight;
  Tensor b = perturbed.head().bias;
  Rng rng(5);
  std::normal_distribution<double> n(0.0, 10.0);
  for (std::size_t r = 0; r < w.dim(0); ++r) w.mutable_values()[r * (k + 1) + k] += n(rng);
  b.mutable_values()[k] += 1000.0;
  std::size_t changed = 0;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    const auto after = scores::score_samples(perturbed, toy.stats, samples, {kinds[i]});
    for (std::size_t j = 0; j < samples.size(); ++j) changed += after[j] != before[i][j];
  }
  report(changed == 0, "logit-exclusion",
         fmt::format("fake-OOD head output perturbed; {} of {} (score, sample) pairs changed across msp, maxlogit, "
                     "energy, react, mahalanobis, knn",
                     changed, kinds.size() * samples.size()));
}

void toy_ablation() {
  const auto t0 = Clock::now();
  const pipeline::RunConfig config;
  const auto rows = pipeline::run_ablation(config, pipeline::toy_source(config.toy), {5, 0, 1});
  const double secs = seconds_since(t0);
  fmt::print("{}", pipeline::ablation_table(rows));
  const double baseline = rows[0].auroc_mean;
  const double full = rows[7].auroc_mean;
  const double best_single = std::max({rows[1].auroc_mean, rows[2].auroc_mean, rows[3].auroc_mean});
  report(full - baseline >= 0.03 && secs < 300.0, "toy-ablation",
         fmt::format("5 seeds, K={}, grid 2x2, {} epochs: full AUROC {:.4f} - baseline {:.4f} = {:.4f} (>= 0.03), "
                     "{:.1f}s (< 300s); full {} every single-component row (best single {:.4f}, reported only)",
                     config.toy.num_classes, config.train.epochs, full, baseline, full - baseline, secs,
                     full > best_single ? "exceeds" : "does not exceed", best_single));
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void determinism() {
  const auto root = std::filesystem::temp_directory_path() / "tagfog_acceptance_determinism";
  std::filesystem::remove_all(root);
  std::string reports[2];
  int codes[2];
  for (int run = 0; run < 2; ++run) {
    const auto dir = root / ("run" + std::to_string(run));
    codes[run] = pipeline::run_cli({"--quiet", "--seed", "3", "pipeline", "--out-dir", dir.string()});
    reports[run] = slurp(dir / "report.csv");
  }
  const bool ok = codes[0] == 0 && codes[1] == 0 && !reports[0].empty() && reports[0] == reports[1];
  report(ok, "determinism",
         fmt::format("pipeline run twice with seed 3: exit codes {}/{}, report.csv {} ({} bytes)", codes[0], codes[1],
                     reports[0] == reports[1] ? "byte-identical" : "differs", reports[0].size()));
  std::filesystem::remove_all(root);
}

void loss_defaults() {
  const losses::LossWeights w;
  const trainer::TrainConfig t;
  const auto parsed = pipeline::parse_config("");
  const bool ok = w.tau == 0.1 && w.tau_prime == 0.1 && w.lambda1 == 1.0 && w.lambda2 == 1.0 &&
                  t.loss_weights.tau == 0.1 && t.loss_weights.tau_prime == 0.1 && t.loss_weights.lambda1 == 1.0 &&
                  t.loss_weights.lambda2 == 1.0 && parsed.train.loss_weights.lambda1 == 1.0 &&
                  parsed.train.loss_weights.lambda2 == 1.0 && parsed.train.loss_weights.tau == 0.1 &&
                  parsed.train.loss_weights.tau_prime == 0.1;
  report(ok, "loss-defaults",
         fmt::format("tau={} tau'={} lambda1={} lambda2={} (expected 0.1, 0.1, 1, 1)", w.tau, w.tau_prime, w.lambda1,
                     w.lambda2));
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  gradient_correctness();
  oracle_equivalence();
  jigsaw_invariants();
  {
    const auto toy = testing::train_toy(0);
    react_degeneracy(toy);
    logit_exclusion(toy);
  }
  toy_ablation();
  determinism();
  loss_defaults();
  fmt::print("{} criteria failed, {:.1f}s total\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
