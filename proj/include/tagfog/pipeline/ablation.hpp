#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tagfog/dataset.hpp"
#include "tagfog/pipeline/config_file.hpp"

namespace tagfog::pipeline {

struct Components {
  bool fake = false;
  bool ci = false;
  bool sc = false;
};

// The on/off lattice over {fake outliers, anchor alignment, supervised
// contrast} in reporting order: none, fake, CI, SC, fake+CI, CI+SC,
// fake+SC, all.
const std::array<Components, 8>& ablation_rows();

struct AblationData {
  data::Dataset id_train;
  data::Dataset id_test;
  std::vector<data::Dataset> ood_tests;
  std::optional<anchors::AnchorSet> anchors;  // synthesized when absent
};

// Supplies the benchmark for one seed.
using DataSource = std::function<AblationData(std::uint64_t seed)>;

// Toy benchmark regenerated from each seed.
DataSource toy_source(const fog::ToySpec& spec);

struct RunResult {
  double auroc = 0.0;
  double fpr95 = 0.0;
  double id_accuracy = 0.0;  // ID-test, argmax over K logits
};

struct AblationRow {
  Components components;
  std::vector<RunResult> runs;  // one per seed
  double auroc_mean = 0.0;
  double auroc_sd = 0.0;
  double fpr95_mean = 0.0;
  double fpr95_sd = 0.0;
};

struct AblationOptions {
  std::size_t seeds = 1;
  std::uint64_t base_seed = 0;
  std::size_t jobs = 1;
};

// Trains one model for a component set on one seed and evaluates it with
// config.score.
RunResult run_single(const RunConfig& config, const AblationData& data, const Components& components,
                     std::uint64_t seed);

// Seed i uses base_seed + i for data, fakes, anchors, init and training.
// Results do not depend on `jobs`.
std::vector<AblationRow> run_ablation(const RunConfig& config, const DataSource& source,
                                      const AblationOptions& options);

std::string ablation_csv(const std::vector<AblationRow>& rows);
std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace tagfog::pipeline
