#include "tagfog/scores.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "tagfog/errors.hpp"
#include "tagfog/ops.hpp"

namespace tagfog::scores {

namespace {

constexpr std::size_t kChunk = 256;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require_fitted(const IdStats& stats) {
  if (!stats.fitted) throw ContractViolation("ID statistics have not been fitted");
}

std::vector<double> normalized(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  const double inv = 1.0 / std::sqrt(s + kL2NormalizeEps);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * inv;
  return out;
}

Tensor rows_to_tensor(const std::vector<std::vector<double>>& rows, std::size_t begin, std::size_t end) {
  const std::size_t width = rows[begin].size();
  std::vector<double> flat;
  flat.reserve((end - begin) * width);
  for (std::size_t i = begin; i < end; ++i) flat.insert(flat.end(), rows[i].begin(), rows[i].end());
  return Tensor::from_vector({end - begin, width}, std::move(flat));
}

std::vector<std::vector<double>> tensor_rows(const Tensor& t) {
  const std::size_t cols = t.dim(1);
  std::vector<std::vector<double>> out;
  const auto v = t.values();
  for (std::size_t r = 0; r < t.dim(0); ++r) out.emplace_back(v.begin() + r * cols, v.begin() + (r + 1) * cols);
  return out;
}

double energy_of_row(std::span<const double> logits, std::size_t k, double temperature) {
  return score_energy(logits.first(k), temperature);
}

}  // namespace

std::string_view score_name(ScoreKind kind) {
  switch (kind) {
    case ScoreKind::msp: return "msp";
    case ScoreKind::maxlogit: return "maxlogit";
    case ScoreKind::energy: return "energy";
    case ScoreKind::react: return "react";
    case ScoreKind::mahalanobis: return "mahalanobis";
    case ScoreKind::knn: return "knn";
  }
  return "unknown";
}

ScoreKind parse_score(std::string_view name) {
  for (ScoreKind k : {ScoreKind::msp, ScoreKind::maxlogit, ScoreKind::energy, ScoreKind::react,
                      ScoreKind::mahalanobis, ScoreKind::knn}) {
    if (score_name(k) == name) return k;
  }
  throw ConfigError("unknown score '" + std::string(name) +
                    "' (expected msp, maxlogit, energy, react, mahalanobis or knn)");
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw DomainError("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

IdStats fit_id_stats(std::span<const std::vector<double>> features, std::span<const int> labels,
                     std::size_t num_classes, double p) {
  if (features.empty()) throw DomainError("cannot fit ID statistics on an empty set");
  if (!(p > 0.0 && p < 1.0)) throw DomainError("ReAct percentile must lie in (0, 1)");
  if (features.size() != labels.size()) throw DimensionError("features and labels differ in length");
  const std::size_t f = features.front().size();

  IdStats stats;
  stats.feature_dim = f;
  std::vector<double> pooled;
  pooled.reserve(features.size() * f);
  for (const auto& row : features) {
    if (row.size() != f) throw DimensionError("ragged feature rows");
    pooled.insert(pooled.end(), row.begin(), row.end());
  }
  stats.react_threshold = quantile(std::move(pooled), p);

  std::vector<std::size_t> counts(num_classes, 0);
  stats.class_means.assign(num_classes, std::vector<double>(f, 0.0));
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (labels[i] < 1 || labels[i] > static_cast<int>(num_classes)) {
      throw DomainError("ID label " + std::to_string(labels[i]) + " outside [1," + std::to_string(num_classes) + "]");
    }
    const auto c = static_cast<std::size_t>(labels[i] - 1);
    ++counts[c];
    for (std::size_t j = 0; j < f; ++j) stats.class_means[c][j] += features[i][j];
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (counts[c] == 0) continue;
    for (double& m : stats.class_means[c]) m /= static_cast<double>(counts[c]);
  }

  RowMatrix cov = RowMatrix::Zero(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(f));
  Eigen::VectorXd centered(static_cast<Eigen::Index>(f));
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& mu = stats.class_means[static_cast<std::size_t>(labels[i] - 1)];
    for (std::size_t j = 0; j < f; ++j) centered[static_cast<Eigen::Index>(j)] = features[i][j] - mu[j];
    cov.noalias() += centered * centered.transpose();
  }
  cov /= static_cast<double>(features.size());
  cov.diagonal().array() += kCovarianceRidge;
  const RowMatrix precision = cov.ldlt().solve(RowMatrix::Identity(cov.rows(), cov.cols()));
  const double residual = (cov * precision - RowMatrix::Identity(cov.rows(), cov.cols())).cwiseAbs().maxCoeff();
  if (!std::isfinite(residual) || residual >= 1e-6) {
    throw NumericalError("feature covariance is singular after regularization (inverse residual " +
                         std::to_string(residual) + ")");
  }
  stats.covariance.assign(cov.data(), cov.data() + cov.size());
  stats.precision.assign(precision.data(), precision.data() + precision.size());

  for (const auto& row : features) stats.bank.push_back(normalized(row));
  stats.fitted = true;
  return stats;
}

IdStats fit_id_stats(const model::TagFogModel& model, const data::Dataset& id_train, double p) {
  const auto acts = compute_activations(model, id_train.samples);
  std::vector<int> labels;
  for (const auto& s : id_train.samples) labels.push_back(s.label);
  return fit_id_stats(acts.features, labels, model.dims().classes, p);
}

double score_energy(std::span<const double> logits_id, double temperature) {
  if (logits_id.empty()) throw DomainError("energy score needs at least one ID logit");
  if (!(temperature > 0.0)) throw DomainError("energy temperature must be > 0");
  std::vector<double> scaled(logits_id.begin(), logits_id.end());
  for (double& v : scaled) v /= temperature;
  return temperature * logsumexp(scaled);
}

double score_msp(std::span<const double> logits_id) {
  if (logits_id.empty()) throw DomainError("MSP needs at least one ID logit");
  const double hi = *std::max_element(logits_id.begin(), logits_id.end());
  return std::exp(hi - logsumexp(logits_id));
}

double score_maxlogit(std::span<const double> logits_id) {
  if (logits_id.empty()) throw DomainError("max-logit needs at least one ID logit");
  return *std::max_element(logits_id.begin(), logits_id.end());
}

double score_mahalanobis(std::span<const double> feature, const IdStats& stats) {
  require_fitted(stats);
  const std::size_t f = stats.feature_dim;
  if (feature.size() != f) throw DimensionError("feature width does not match the fitted statistics");
  Eigen::Map<const RowMatrix> precision(stats.precision.data(), static_cast<Eigen::Index>(f),
                                        static_cast<Eigen::Index>(f));
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd diff(static_cast<Eigen::Index>(f));
  for (const auto& mu : stats.class_means) {
    for (std::size_t j = 0; j < f; ++j) diff[static_cast<Eigen::Index>(j)] = feature[j] - mu[j];
    best = std::min(best, diff.dot(precision * diff));
  }
  return -best;
}

double score_knn(std::span<const double> feature, const IdStats& stats, std::size_t k) {
  require_fitted(stats);
  if (k < 1 || k > stats.bank.size()) {
    throw DomainError("knn k=" + std::to_string(k) + " outside [1," + std::to_string(stats.bank.size()) + "]");
  }
  if (feature.size() != stats.feature_dim) throw DimensionError("feature width does not match the feature bank");
  const auto q = normalized(feature);
  std::vector<double> dist;
  dist.reserve(stats.bank.size());
  for (const auto& b : stats.bank) {
    double s = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) s += (q[j] - b[j]) * (q[j] - b[j]);
    dist.push_back(std::sqrt(s));
  }
  std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k - 1), dist.end());
  return -dist[k - 1];
}

double score_react(const model::TagFogModel& model, std::span<const double> input, const IdStats& stats,
                   double temperature) {
  require_fitted(stats);
  NoGradGuard no_grad;
  const Tensor x = Tensor::from_vector({1, input.size()}, std::vector<double>(input.begin(), input.end()));
  const Tensor logits = model.classify(clamp_max(model.encode(x), stats.react_threshold));
  return energy_of_row(logits.values(), model.dims().classes, temperature);
}

Activations compute_activations(const model::TagFogModel& model, std::span<const data::LabeledSample> samples) {
  NoGradGuard no_grad;
  Activations acts;
  const std::size_t width = model.dims().input;
  for (std::size_t begin = 0; begin < samples.size(); begin += kChunk) {
    const std::size_t end = std::min(samples.size(), begin + kChunk);
    std::vector<double> flat;
    flat.reserve((end - begin) * width);
    for (std::size_t i = begin; i < end; ++i) {
      if (samples[i].input.size() != width) {
        throw DimensionError("sample " + std::to_string(i) + " has width " + std::to_string(samples[i].input.size()) +
                             ", model expects " + std::to_string(width));
      }
      flat.insert(flat.end(), samples[i].input.begin(), samples[i].input.end());
    }
    const Tensor features = model.encode(Tensor::from_vector({end - begin, width}, std::move(flat)));
    const Tensor logits = model.classify(features);
    for (auto& r : tensor_rows(features)) acts.features.push_back(std::move(r));
    for (auto& r : tensor_rows(logits)) acts.logits.push_back(std::move(r));
  }
  return acts;
}

std::vector<double> react_scores(const model::TagFogModel& model, const std::vector<std::vector<double>>& features,
                                 double clip, double temperature) {
  NoGradGuard no_grad;
  std::vector<double> out;
  out.reserve(features.size());
  const std::size_t k = model.dims().classes;
  for (std::size_t begin = 0; begin < features.size(); begin += kChunk) {
    const std::size_t end = std::min(features.size(), begin + kChunk);
    const Tensor logits = model.classify(clamp_max(rows_to_tensor(features, begin, end), clip));
    const std::size_t cols = logits.dim(1);
    for (std::size_t r = 0; r < end - begin; ++r) {
      out.push_back(energy_of_row(logits.values().subspan(r * cols, cols), k, temperature));
    }
  }
  return out;
}

std::vector<double> score_samples(const model::TagFogModel& model, const IdStats& stats,
                                  std::span<const data::LabeledSample> samples, const ScoreFn& fn) {
  const auto acts = compute_activations(model, samples);
  const std::size_t k = model.dims().classes;
  if (fn.kind == ScoreKind::react) {
    require_fitted(stats);
    return react_scores(model, acts.features, stats.react_threshold, fn.temperature);
  }
  std::vector<double> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::span<const double> id_logits = std::span<const double>(acts.logits[i]).first(k);
    switch (fn.kind) {
      case ScoreKind::msp: out.push_back(score_msp(id_logits)); break;
      case ScoreKind::maxlogit: out.push_back(score_maxlogit(id_logits)); break;
      case ScoreKind::energy: out.push_back(score_energy(id_logits, fn.temperature)); break;
      case ScoreKind::mahalanobis: out.push_back(score_mahalanobis(acts.features[i], stats)); break;
      case ScoreKind::knn: out.push_back(score_knn(acts.features[i], stats, fn.knn_k)); break;
      case ScoreKind::react: break;
    }
  }
  return out;
}

}  // namespace tagfog::scores
