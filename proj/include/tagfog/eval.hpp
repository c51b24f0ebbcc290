#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tagfog/dataset.hpp"
#include "tagfog/model.hpp"
#include "tagfog/scores.hpp"

namespace tagfog::eval {

// Mann-Whitney AUROC with ID as the positive class; ties earn half credit.
double auroc(std::span<const double> id_scores, std::span<const double> ood_scores);

// Fraction of OOD scores at or above the largest threshold that keeps at
// least `tpr` of the ID scores.
double fpr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores, double tpr = 0.95);

struct ScoreReport {
  std::vector<double> id_scores;
  std::vector<double> ood_scores;
  double auroc = 0.0;
  double fpr95 = 0.0;
  std::string score_name;
  std::string id_name;
  std::string ood_name;
};

ScoreReport make_report(std::vector<double> id_scores, std::vector<double> ood_scores, std::string score_name,
                        std::string id_name, std::string ood_name);

struct BenchmarkReport {
  std::vector<ScoreReport> per_set;
  double mean_auroc = 0.0;
  double mean_fpr95 = 0.0;
  std::string score_name;
};

// Scores ID-test once and each OOD set independently, then averages F and A
// without weighting by set size.
BenchmarkReport evaluate_benchmark(const model::TagFogModel& model, const scores::IdStats& stats,
                                   const data::Dataset& id_test, std::span<const data::Dataset> ood_sets,
                                   const scores::ScoreFn& fn);

BenchmarkReport summarize(std::vector<ScoreReport> reports);

// One row per OOD set plus a trailing "mean" row.
std::string to_csv(const BenchmarkReport& report);
std::string to_table(const BenchmarkReport& report);

}  // namespace tagfog::eval
