#include "tagfog/eval.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <numeric>

#include "tagfog/errors.hpp"

namespace tagfog::eval {

namespace {

void require_nonempty(std::span<const double> id_scores, std::span<const double> ood_scores) {
  if (id_scores.empty()) throw DomainError("ID score set is empty");
  if (ood_scores.empty()) throw DomainError("OOD score set is empty");
}

}  // namespace

double auroc(std::span<const double> id_scores, std::span<const double> ood_scores) {
  require_nonempty(id_scores, ood_scores);
  const std::size_t n = id_scores.size();
  const std::size_t m = ood_scores.size();
  std::vector<std::pair<double, bool>> all;
  all.reserve(n + m);
  for (double s : id_scores) all.emplace_back(s, true);
  for (double s : ood_scores) all.emplace_back(s, false);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  // Sum of 1-based average ranks of the ID scores.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    std::size_t ids = 0;
    while (j < all.size() && all[j].first == all[i].first) {
      if (all[j].second) ++ids;
      ++j;
    }
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    rank_sum += avg_rank * static_cast<double>(ids);
    i = j;
  }
  const double nd = static_cast<double>(n);
  const double u = rank_sum - nd * (nd + 1.0) / 2.0;
  return u / (nd * static_cast<double>(m));
}

double fpr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores, double tpr) {
  require_nonempty(id_scores, ood_scores);
  if (!(tpr > 0.0 && tpr <= 1.0)) throw DomainError("tpr must lie in (0, 1]");
  std::vector<double> sorted(id_scores.begin(), id_scores.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const std::size_t n = sorted.size();
  std::size_t kept = 1;
  while (kept < n && static_cast<double>(kept) / static_cast<double>(n) < tpr) ++kept;
  const double threshold = sorted[kept - 1];
  const auto above = std::count_if(ood_scores.begin(), ood_scores.end(), [&](double s) { return s >= threshold; });
  return static_cast<double>(above) / static_cast<double>(ood_scores.size());
}

ScoreReport make_report(std::vector<double> id_scores, std::vector<double> ood_scores, std::string score_name,
                        std::string id_name, std::string ood_name) {
  ScoreReport r;
  r.auroc = auroc(id_scores, ood_scores);
  r.fpr95 = fpr_at_tpr(id_scores, ood_scores, 0.95);
  r.id_scores = std::move(id_scores);
  r.ood_scores = std::move(ood_scores);
  r.score_name = std::move(score_name);
  r.id_name = std::move(id_name);
  r.ood_name = std::move(ood_name);
  return r;
}

BenchmarkReport summarize(std::vector<ScoreReport> reports) {
  if (reports.empty()) throw DomainError("no OOD sets to summarize");
  BenchmarkReport out;
  out.score_name = reports.front().score_name;
  for (const auto& r : reports) {
    out.mean_auroc += r.auroc;
    out.mean_fpr95 += r.fpr95;
  }
  out.mean_auroc /= static_cast<double>(reports.size());
  out.mean_fpr95 /= static_cast<double>(reports.size());
  out.per_set = std::move(reports);
  return out;
}

BenchmarkReport evaluate_benchmark(const model::TagFogModel& model, const scores::IdStats& stats,
                                   const data::Dataset& id_test, std::span<const data::Dataset> ood_sets,
                                   const scores::ScoreFn& fn) {
  if (ood_sets.empty()) throw DomainError("at least one OOD test set is required");
  const auto check = [&](const data::Dataset& d) {
    if (d.input_dim() != model.dims().input) {
      throw DimensionError("dataset '" + d.name + "' has width " + std::to_string(d.input_dim()) +
                           ", model expects " + std::to_string(model.dims().input));
    }
  };
  check(id_test);
  const auto id_scores = scores::score_samples(model, stats, id_test.samples, fn);
  std::vector<ScoreReport> reports;
  for (const auto& ood : ood_sets) {
    check(ood);
    reports.push_back(make_report(id_scores, scores::score_samples(model, stats, ood.samples, fn),
                                  std::string(scores::score_name(fn.kind)), id_test.name, ood.name));
  }
  return summarize(std::move(reports));
}

std::string to_csv(const BenchmarkReport& report) {
  std::string out = "ood_set,score,n_id,n_ood,fpr95,auroc\n";
  for (const auto& r : report.per_set) {
    out += fmt::format("{},{},{},{},{:.6f},{:.6f}\n", r.ood_name, r.score_name, r.id_scores.size(),
                       r.ood_scores.size(), r.fpr95, r.auroc);
  }
  out += fmt::format("mean,{},,,{:.6f},{:.6f}\n", report.score_name, report.mean_fpr95, report.mean_auroc);
  return out;
}

std::string to_table(const BenchmarkReport& report) {
  std::size_t width = 7;
  for (const auto& r : report.per_set) width = std::max(width, r.ood_name.size());
  std::string out = fmt::format("{:<{}}  {:>8}  {:>8}\n", "OOD set", width, "FPR95", "AUROC");
  for (const auto& r : report.per_set) {
    out += fmt::format("{:<{}}  {:>8.2f}  {:>8.2f}\n", r.ood_name, width, 100.0 * r.fpr95, 100.0 * r.auroc);
  }
  out += fmt::format("{:<{}}  {:>8.2f}  {:>8.2f}\n", "mean", width, 100.0 * report.mean_fpr95,
                     100.0 * report.mean_auroc);
  return out;
}

}  // namespace tagfog::eval
