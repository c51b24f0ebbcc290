#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tagfog/dataset.hpp"
#include "tagfog/model.hpp"

namespace tagfog::scores {

// Post-hoc OOD scores. Every score is oriented so that higher means more
// ID-like, and only the K ID logits are ever read (the fake-OOD output of the
// head is ignored).
enum class ScoreKind { msp, maxlogit, energy, react, mahalanobis, knn };

std::string_view score_name(ScoreKind kind);
ScoreKind parse_score(std::string_view name);

struct ScoreFn {
  ScoreKind kind = ScoreKind::react;
  double react_percentile = 0.9;
  std::size_t knn_k = 5;
  double temperature = 1.0;
};

// State fitted on ID-train penultimate features.
struct IdStats {
  double react_threshold = std::numeric_limits<double>::infinity();
  std::size_t feature_dim = 0;
  std::vector<std::vector<double>> class_means;  // K rows
  std::vector<double> covariance;                // F x F, regularized
  std::vector<double> precision;                 // inverse of covariance
  std::vector<std::vector<double>> bank;         // l2-normalized features
  bool fitted = false;
};

inline constexpr double kCovarianceRidge = 1e-6;

// Empirical p-quantile with linear interpolation between order statistics
// (position p * (n - 1) in the sorted sample).
double quantile(std::vector<double> values, double p);

// Fits from precomputed features; labels are 1-based ID classes.
IdStats fit_id_stats(std::span<const std::vector<double>> features, std::span<const int> labels,
                     std::size_t num_classes, double p);
IdStats fit_id_stats(const model::TagFogModel& model, const data::Dataset& id_train, double p);

double score_energy(std::span<const double> logits_id, double temperature = 1.0);
double score_msp(std::span<const double> logits_id);
double score_maxlogit(std::span<const double> logits_id);
double score_mahalanobis(std::span<const double> feature, const IdStats& stats);
double score_knn(std::span<const double> feature, const IdStats& stats, std::size_t k);

// Clips the penultimate features at the ReAct threshold, re-applies the
// head and returns the energy of the K ID logits.
double score_react(const model::TagFogModel& model, std::span<const double> input, const IdStats& stats,
                   double temperature = 1.0);

// Penultimate features and head logits for a set of inputs, evaluated in
// inference mode in fixed-size chunks.
struct Activations {
  std::vector<std::vector<double>> features;
  std::vector<std::vector<double>> logits;  // K + 1 per row
};

Activations compute_activations(const model::TagFogModel& model, std::span<const data::LabeledSample> samples);

// Batched scoring of a dataset. Energy and ReAct share one chunking of the
// head evaluation, so ReAct with an infinite threshold reproduces energy
// bit for bit.
std::vector<double> score_samples(const model::TagFogModel& model, const IdStats& stats,
                                  std::span<const data::LabeledSample> samples, const ScoreFn& fn);

// ReAct over precomputed features: clip at `clip`, apply the head's ID rows,
// take the energy.
std::vector<double> react_scores(const model::TagFogModel& model, const std::vector<std::vector<double>>& features,
                                 double clip, double temperature);

}  // namespace tagfog::scores
