#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "tagfog/errors.hpp"
#include "tagfog/eval.hpp"
#include "tagfog/scores.hpp"
#include "trained_toy.hpp"

namespace tagfog::scores {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

TEST(Quantile, LinearInterpolation) {
  std::vector<double> v(100);
  std::iota(v.begin(), v.end(), 1.0);
  std::shuffle(v.begin(), v.end(), Rng(1));
  EXPECT_NEAR(quantile(v, 0.9), 90.1, 1e-12);
  EXPECT_EQ(quantile(std::vector<double>(17, 2.5), 0.37), 2.5);
  EXPECT_THROW(quantile({}, 0.5), DomainError);
}

TEST(Energy, Examples) {
  const std::vector<double> zero{0, 0};
  EXPECT_NEAR(score_energy(zero), std::log(2.0), 1e-15);
  using Big = boost::multiprecision::number<boost::multiprecision::cpp_bin_float<256, boost::multiprecision::digit_base_2>>;
  const double oracle = static_cast<double>(boost::multiprecision::log(
      boost::multiprecision::exp(Big(1)) + boost::multiprecision::exp(Big(2)) + boost::multiprecision::exp(Big(3))));
  const std::vector<double> l{1, 2, 3};
  EXPECT_NEAR(score_energy(l), oracle, 1e-12);
  const std::vector<double> shifted{1 + 4.5, 2 + 4.5, 3 + 4.5};
  EXPECT_NEAR(score_energy(shifted), score_energy(l) + 4.5, 1e-12);
  EXPECT_NEAR(score_energy(l, 2.0), 2.0 * std::log(std::exp(0.5) + std::exp(1.0) + std::exp(1.5)), 1e-12);
}

TEST(Msp, Examples) {
  EXPECT_DOUBLE_EQ(score_msp(std::vector<double>{0, 0}), 0.5);
  EXPECT_NEAR(score_msp(std::vector<double>{10, 0}), 1.0 / (1.0 + std::exp(-10.0)), 1e-15);
}

TEST(Msp, RankingOnTwoClassSlices) {
  // Along [a, 0] with a >= 0 the score is sigmoid(a); doubling every logit keeps the order.
  double prev = 0.0;
  double prev2 = 0.0;
  for (double a : {0.0, 0.2, 0.4, 1.5, 3.0, 6.0}) {
    const double s = score_msp(std::vector<double>{a, 0});
    const double s2 = score_msp(std::vector<double>{2 * a, 0});
    EXPECT_NEAR(s, 1.0 / (1.0 + std::exp(-a)), 1e-15);
    EXPECT_GE(s, prev);
    EXPECT_GE(s2, prev2);
    prev = s;
    prev2 = s2;
  }
  EXPECT_EQ(score_msp(std::vector<double>{-2, 0}), score_msp(std::vector<double>{0, -2}));
}

TEST(MaxLogit, Examples) {
  EXPECT_EQ(score_maxlogit(std::vector<double>{-1, 3, 2}), 3.0);
  EXPECT_THROW(score_maxlogit(std::vector<double>{}), DomainError);
}

IdStats identity_stats(std::vector<std::vector<double>> means) {
  IdStats s;
  s.feature_dim = means.front().size();
  s.class_means = std::move(means);
  s.precision.assign(s.feature_dim * s.feature_dim, 0.0);
  for (std::size_t i = 0; i < s.feature_dim; ++i) s.precision[i * s.feature_dim + i] = 1.0;
  s.covariance = s.precision;
  s.fitted = true;
  return s;
}

TEST(Mahalanobis, IdentityCovariance) {
  const auto s = identity_stats({{0, 0, 0}, {1, 2, 3}});
  EXPECT_EQ(score_mahalanobis(std::vector<double>{1, 2, 3}, s), 0.0);
  EXPECT_EQ(score_mahalanobis(std::vector<double>{1, 1, 1}, s), -3.0);
  EXPECT_EQ(score_mahalanobis(std::vector<double>{1, 2, 2}, s), -1.0);
  EXPECT_EQ(score_mahalanobis(std::vector<double>{-1, 0, 0.5}, s), -(1 + 0.25));
}

// Dense Gaussian elimination with partial pivoting, solving A x = b.
std::vector<double> solve(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    }
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[i][k] * x[k];
    x[i] = s / a[i][i];
  }
  return x;
}

TEST(Mahalanobis, TwoClassGaussianMatchesLinearSolve) {
  Rng rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<std::vector<double>> feats;
  std::vector<int> labels;
  for (int i = 0; i < 200; ++i) {
    const int c = 1 + i % 2;
    const double u = n(rng);
    const double v = n(rng);
    feats.push_back({(c == 1 ? -2.0 : 2.0) + 1.5 * u, 0.5 + 0.8 * u + 0.6 * v});
    labels.push_back(c);
  }
  const auto stats = fit_id_stats(feats, labels, 2, 0.9);

  std::vector<std::vector<double>> mu(2, std::vector<double>(2, 0.0));
  std::vector<int> count(2, 0);
  for (std::size_t i = 0; i < feats.size(); ++i) {
    const auto c = static_cast<std::size_t>(labels[i] - 1);
    ++count[c];
    for (int j = 0; j < 2; ++j) mu[c][j] += feats[i][j];
  }
  for (int c = 0; c < 2; ++c) {
    for (int j = 0; j < 2; ++j) mu[c][j] /= count[c];
  }
  std::vector<std::vector<double>> cov(2, std::vector<double>(2, 0.0));
  for (std::size_t i = 0; i < feats.size(); ++i) {
    const auto& m = mu[static_cast<std::size_t>(labels[i] - 1)];
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) cov[a][b] += (feats[i][a] - m[a]) * (feats[i][b] - m[b]) / 200.0;
    }
  }
  for (int a = 0; a < 2; ++a) cov[a][a] += kCovarianceRidge;

  for (const auto& q : std::vector<std::vector<double>>{{0.0, 0.0}, {-2.0, 0.5}, {3.0, -1.0}, {0.3, 2.2}}) {
    double best = kInf;
    for (int c = 0; c < 2; ++c) {
      const std::vector<double> d{q[0] - mu[c][0], q[1] - mu[c][1]};
      const auto x = solve(cov, d);
      best = std::min(best, d[0] * x[0] + d[1] * x[1]);
    }
    EXPECT_NEAR(score_mahalanobis(q, stats), -best, 1e-8);
  }
  EXPECT_EQ(stats.covariance[1], stats.covariance[2]);
}

TEST(Mahalanobis, UnfittedStatsAreContractViolation) {
  EXPECT_THROW(score_mahalanobis(std::vector<double>{1}, IdStats{}), ContractViolation);
  EXPECT_THROW(score_knn(std::vector<double>{1}, IdStats{}, 1), ContractViolation);
}

TEST(Knn, BoundaryCasesAndSortOracle) {
  Rng rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<std::vector<double>> feats(50, std::vector<double>(6));
  for (auto& f : feats) {
    for (double& v : f) v = n(rng);
  }
  const std::vector<int> labels(50, 1);
  const auto stats = fit_id_stats(feats, labels, 1, 0.9);
  EXPECT_EQ(score_knn(feats[7], stats, 1), 0.0);

  for (int t = 0; t < 10; ++t) {
    std::vector<double> q(6);
    for (double& v : q) v = n(rng);
    double qs = 0.0;
    for (double v : q) qs += v * v;
    std::vector<double> qn = q;
    const double inv = 1.0 / std::sqrt(qs + 1e-12);
    for (double& v : qn) v *= inv;
    std::vector<double> dist;
    for (const auto& b : stats.bank) {
      double s = 0.0;
      for (std::size_t j = 0; j < 6; ++j) s += (qn[j] - b[j]) * (qn[j] - b[j]);
      dist.push_back(std::sqrt(s));
    }
    std::sort(dist.begin(), dist.end());
    EXPECT_EQ(score_knn(q, stats, 5), -dist[4]);
    EXPECT_EQ(score_knn(q, stats, 50), -dist.back());
  }
  EXPECT_THROW(score_knn(feats[0], stats, 0), DomainError);
  EXPECT_THROW(score_knn(feats[0], stats, 51), DomainError);
}

TEST(FitIdStats, PreconditionsAndInverseQuality) {
  Rng rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<std::vector<double>> feats(40, std::vector<double>(5));
  std::vector<int> labels(40);
  for (std::size_t i = 0; i < 40; ++i) {
    for (double& v : feats[i]) v = std::max(0.0, n(rng));
    labels[i] = 1 + static_cast<int>(i % 3);
  }
  const auto stats = fit_id_stats(feats, labels, 3, 0.9);
  for (std::size_t a = 0; a < 5; ++a) {
    for (std::size_t b = 0; b < 5; ++b) {
      EXPECT_EQ(stats.covariance[a * 5 + b], stats.covariance[b * 5 + a]);
      double s = 0.0;
      for (std::size_t k = 0; k < 5; ++k) s += stats.covariance[a * 5 + k] * stats.precision[k * 5 + b];
      EXPECT_NEAR(s, a == b ? 1.0 : 0.0, 1e-6);
    }
  }
  EXPECT_THROW(fit_id_stats(feats, labels, 3, 0.0), DomainError);
  EXPECT_THROW(fit_id_stats(feats, labels, 3, 1.0), DomainError);
  EXPECT_THROW(fit_id_stats(std::vector<std::vector<double>>{}, std::vector<int>{}, 3, 0.9), DomainError);
}

TEST(ParseScore, NamesRoundTrip) {
  for (auto k : {ScoreKind::msp, ScoreKind::maxlogit, ScoreKind::energy, ScoreKind::react, ScoreKind::mahalanobis,
                 ScoreKind::knn}) {
    EXPECT_EQ(parse_score(score_name(k)), k);
  }
  EXPECT_THROW(parse_score("odin"), ConfigError);
}

class TrainedScores : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { toy_ = new testing::TrainedToy(testing::train_toy(21)); }
  static void TearDownTestSuite() { delete toy_; }
  static testing::TrainedToy* toy_;
};

testing::TrainedToy* TrainedScores::toy_ = nullptr;

TEST_F(TrainedScores, ReactWithInfiniteClipIsEnergy) {
  auto stats = toy_->stats;
  stats.react_threshold = kInf;
  const auto& m = toy_->model;
  const std::size_t k = m.dims().classes;
  for (const auto* set : {&toy_->bench.id_test, &toy_->bench.ood_tests[0]}) {
    const auto react = score_samples(m, stats, set->samples, {ScoreKind::react});
    const auto energy = score_samples(m, stats, set->samples, {ScoreKind::energy});
    EXPECT_EQ(react, energy);
    for (std::size_t i = 0; i < 20; ++i) {
      const auto& x = set->samples[i].input;
      const auto logits = m.infer(Tensor::from_vector({1, x.size()}, x)).logits;
      EXPECT_EQ(score_react(m, x, stats), score_energy(logits.values().first(k)));
    }
  }
}

TEST_F(TrainedScores, ReactWithZeroClipCollapsesToBias) {
  auto stats = toy_->stats;
  stats.react_threshold = 0.0;
  const auto s = score_samples(toy_->model, stats, toy_->bench.id_test.samples, {ScoreKind::react});
  for (double v : s) EXPECT_EQ(v, s.front());
  const auto bias = toy_->model.head().bias.values().first(toy_->model.dims().classes);
  EXPECT_NEAR(s.front(), score_energy(bias), 1e-12);
  IdStats blank;
  EXPECT_THROW(score_react(toy_->model, toy_->bench.id_test.samples[0].input, blank), ContractViolation);
}

TEST_F(TrainedScores, FakeLogitNeverMatters) {
  const std::size_t k = toy_->model.dims().classes;
  const auto& samples = toy_->bench.ood_tests[0].samples;
  std::vector<std::vector<double>> before;
  for (auto kind : {ScoreKind::msp, ScoreKind::maxlogit, ScoreKind::energy, ScoreKind::react, ScoreKind::mahalanobis,
                    ScoreKind::knn}) {
    before.push_back(score_samples(toy_->model, toy_->stats, samples, {kind}));
  }
  auto perturbed = model::clone(toy_->model);
  Tensor w = perturbed.head().weight;
  Tensor b = perturbed.head().bias;
  const std::size_t cols = k + 1;
  for (std::size_t r = 0; r < w.dim(0); ++r) w.mutable_values()[r * cols + k] += 5.0 * std::sin(double(r));
  b.mutable_values()[k] += 100.0;
  std::size_t idx = 0;
  for (auto kind : {ScoreKind::msp, ScoreKind::maxlogit, ScoreKind::energy, ScoreKind::react, ScoreKind::mahalanobis,
                    ScoreKind::knn}) {
    EXPECT_EQ(score_samples(perturbed, toy_->stats, samples, {kind}), before[idx++]) << score_name(kind);
  }
}

TEST_F(TrainedScores, ReactDoesNotDegradeEnergy) {
  const auto& m = toy_->model;
  const auto& id = toy_->bench.id_test.samples;
  const auto& ood = toy_->bench.ood_tests[0].samples;
  const double react = eval::auroc(score_samples(m, toy_->stats, id, {ScoreKind::react}),
                                   score_samples(m, toy_->stats, ood, {ScoreKind::react}));
  const double energy = eval::auroc(score_samples(m, toy_->stats, id, {ScoreKind::energy}),
                                    score_samples(m, toy_->stats, ood, {ScoreKind::energy}));
  RecordProperty("auroc_react", std::to_string(react));
  RecordProperty("auroc_energy", std::to_string(energy));
  EXPECT_GE(react, energy - 0.02);
}

TEST_F(TrainedScores, SwappingSetsFlipsAuroc) {
  const auto& m = toy_->model;
  for (auto kind : {ScoreKind::msp, ScoreKind::maxlogit, ScoreKind::energy, ScoreKind::react, ScoreKind::mahalanobis,
                    ScoreKind::knn}) {
    const auto id = score_samples(m, toy_->stats, toy_->bench.id_test.samples, {kind});
    const auto ood = score_samples(m, toy_->stats, toy_->bench.ood_tests[0].samples, {kind});
    EXPECT_NEAR(eval::auroc(id, ood) + eval::auroc(ood, id), 1.0, 1e-12) << score_name(kind);
  }
}

TEST_F(TrainedScores, ScoringIsDeterministic) {
  for (auto kind : {ScoreKind::react, ScoreKind::knn, ScoreKind::mahalanobis}) {
    EXPECT_EQ(score_samples(toy_->model, toy_->stats, toy_->bench.id_test.samples, {kind}),
              score_samples(toy_->model, toy_->stats, toy_->bench.id_test.samples, {kind}));
  }
}

}  // namespace
}  // namespace tagfog::scores
