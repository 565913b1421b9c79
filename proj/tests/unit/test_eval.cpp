#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "drrl/ebal.hpp"
#include "drrl/eval.hpp"
#include "test_util.hpp"

using namespace drrl;

namespace {

Dataset truth_data(std::size_t n, RngStream& rng) {
  Dataset d;
  d.x = drrl::testing::random_normal(static_cast<Eigen::Index>(n), 2, rng);
  d.t.resize(n);
  d.y.resize(static_cast<Eigen::Index>(n));
  Vector mu0(static_cast<Eigen::Index>(n)), mu1(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    mu0(r) = 0.3 + 0.2 * d.x(r, 0);
    mu1(r) = mu0(r) + 0.5 * d.x(r, 1) + 0.1;
    d.t[i] = rng.bernoulli(0.4) ? 1 : 0;
    d.y(r) = d.t[i] ? mu1(r) : mu0(r);
  }
  d.mu0 = mu0;
  d.mu1 = mu1;
  return d;
}

// Binary outcomes with a randomized flag and no truth columns.
Dataset randomized_data(std::size_t n, RngStream& rng) {
  Dataset d;
  d.x = Matrix::Zero(static_cast<Eigen::Index>(n), 1);
  d.t.resize(n);
  d.y.resize(static_cast<Eigen::Index>(n));
  d.randomized = std::vector<int>(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    d.t[i] = rng.bernoulli(0.5) ? 1 : 0;
    (*d.randomized)[i] = i % 4 == 0 ? 0 : 1;
    d.y(static_cast<Eigen::Index>(i)) = rng.bernoulli(d.t[i] ? 0.7 : 0.4) ? 1.0 : 0.0;
  }
  return d;
}

std::vector<double> random_distribution(std::size_t k, RngStream& rng) {
  std::vector<double> p(k);
  double s = 0.0;
  for (auto& v : p) {
    v = rng.uniform() < 0.15 ? 0.0 : -std::log(1.0 - rng.uniform());
    s += v;
  }
  if (s == 0.0) {
    p[0] = 1.0;
    return p;
  }
  for (auto& v : p) v /= s;
  return p;
}

}  // namespace

TEST(Metrics, PerfectPrediction) {
  RngStream rng(1);
  const Dataset d = truth_data(200, rng);
  const Vector ite = d.true_ite();
  const MetricsReport m = compute_metrics(ite, ite.mean(), d, Estimand::kAte);
  EXPECT_EQ(*m.eps_ate, 0.0);
  EXPECT_EQ(*m.sqrt_pehe, 0.0);
  EXPECT_FALSE(m.eps_att.has_value());
}

TEST(Metrics, ConstantOffset) {
  RngStream rng(2);
  const Dataset d = truth_data(300, rng);
  const Vector pred = d.true_ite().array() + 1.0;
  const MetricsReport m = compute_metrics(pred, pred.mean(), d, Estimand::kAte);
  EXPECT_NEAR(*m.eps_ate, 1.0, 1e-12);
  EXPECT_NEAR(*m.sqrt_pehe, 1.0, 1e-12);
}

TEST(Metrics, AttUsesTreatedUnits) {
  RngStream rng(3);
  const Dataset d = truth_data(100, rng);
  const Vector ite = d.true_ite();
  double sum = 0.0;
  double n1 = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.t[i]) {
      sum += ite(static_cast<Eigen::Index>(i));
      n1 += 1.0;
    }
  }
  const MetricsReport m = compute_metrics(ite, 2.0, d, Estimand::kAtt);
  EXPECT_NEAR(*m.tau_true, sum / n1, 1e-14);
  EXPECT_NEAR(*m.eps_att, std::abs(2.0 - sum / n1), 1e-14);
  EXPECT_FALSE(m.eps_ate.has_value());
}

TEST(Metrics, AttFromRandomizedSubset) {
  RngStream rng(4);
  const Dataset d = randomized_data(400, rng);
  double s[2] = {0.0, 0.0}, c[2] = {0.0, 0.0};
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!(*d.randomized)[i]) continue;
    s[d.t[i]] += d.y(static_cast<Eigen::Index>(i));
    c[d.t[i]] += 1.0;
  }
  const MetricsReport m = compute_metrics(Vector::Zero(400), 0.1, d, Estimand::kAtt);
  EXPECT_NEAR(*m.tau_true, s[1] / c[1] - s[0] / c[0], 1e-14);
  EXPECT_FALSE(m.sqrt_pehe.has_value());
}

TEST(Metrics, MissingTruth) {
  Dataset d;
  d.x = Matrix::Zero(2, 1);
  d.t = {0, 1};
  d.y = Vector::Zero(2);
  try {
    compute_metrics(Vector::Zero(2), 0.0, d, Estimand::kAte);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingTruth);
  }
}

TEST(PolicyRisk, AllControlOnRandomizedSubset) {
  RngStream rng(5);
  const Dataset d = randomized_data(500, rng);
  double s = 0.0, c = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if ((*d.randomized)[i] && d.t[i] == 0) {
      s += d.y(static_cast<Eigen::Index>(i));
      c += 1.0;
    }
  }
  const Vector pred = drrl::testing::random_normal(500, 1, rng).col(0);
  const auto curve = policy_risk_curve(pred, d, {std::numeric_limits<double>::infinity()});
  ASSERT_EQ(curve.size(), 1u);
  EXPECT_EQ(curve[0].inclusion_rate, 0.0);
  EXPECT_NEAR(*curve[0].risk, 1.0 - s / c, 1e-14);
}

TEST(PolicyRisk, RandomizedHandValue) {
  Dataset d;
  d.x = Matrix::Zero(6, 1);
  d.t = {1, 1, 0, 0, 1, 0};
  d.y.resize(6);
  d.y << 1.0, 0.0, 1.0, 0.0, 1.0, 1.0;
  d.randomized = std::vector<int>{1, 1, 1, 1, 1, 0};
  Vector pred(6);
  pred << 1.0, 1.0, 1.0, -1.0, -1.0, 5.0;
  // Randomized: pi = (1, 1, 1, 0, 0); p(pi=1) = 3/5.
  // E[Y | T=1, pi=1] = 1/2, E[Y | T=0, pi=0] = 0.
  const auto curve = policy_risk_curve(pred, d, {0.0});
  EXPECT_NEAR(curve[0].inclusion_rate, 0.6, 1e-15);
  EXPECT_NEAR(*curve[0].risk, 1.0 - 0.5 * 0.6, 1e-15);
}

TEST(PolicyRisk, EmptyAgreementCellIsUndefined) {
  Dataset d;
  d.x = Matrix::Zero(4, 1);
  d.t = {0, 0, 1, 1};
  d.y = Vector::Ones(4);
  d.randomized = std::vector<int>{1, 1, 1, 1};
  Vector pred(4);
  pred << 1.0, 1.0, -1.0, -1.0;  // treated units all get pi = 0
  const auto curve = policy_risk_curve(pred, d, {0.0});
  EXPECT_FALSE(curve[0].risk.has_value());
  EXPECT_EQ(curve[0].inclusion_rate, 0.5);
}

TEST(PolicyRisk, AllTreatedOnGroundTruth) {
  RngStream rng(6);
  const Dataset d = truth_data(1000, rng);
  const Vector pred = Vector::Constant(1000, 3.0);
  const auto curve = policy_risk_curve(pred, d, {0.0});
  EXPECT_EQ(curve[0].inclusion_rate, 1.0);
  EXPECT_NEAR(*curve[0].risk, 1.0 - d.mu1->mean(), 1e-14);
}

TEST(PolicyRisk, RandomPolicyLinearInInclusion) {
  RngStream rng(7);
  const std::size_t n = 100000;
  const Dataset d = truth_data(n, rng);
  Vector score(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < score.size(); ++i) score(i) = rng.uniform();
  const double ey0 = d.mu0->mean();
  const double ey1 = d.mu1->mean();
  for (double q : {0.0, 0.1, 0.25, 0.5, 0.8, 1.0}) {
    const auto point = policy_risk_curve(score, d, {q == 0.0 ? 2.0 : 1.0 - q})[0];
    double value = 0.0;
    for (Eigen::Index i = 0; i < score.size(); ++i) {
      value += score(i) > point.delta ? (*d.mu1)(i) : (*d.mu0)(i);
    }
    EXPECT_NEAR(*point.risk, 1.0 - value / static_cast<double>(n), 1e-12);
    const double qi = point.inclusion_rate;
    EXPECT_NEAR(qi, q, 0.01);
    EXPECT_NEAR(*point.risk, 1.0 - (qi * ey1 + (1.0 - qi) * ey0), 0.01);
  }
}

TEST(BoundDiagnostics, PerfectNoiseFreeModel) {
  RngStream rng(8);
  const Dataset d = truth_data(500, rng);
  const BoundDiagnostics b = bound_diagnostics(*d.mu0, *d.mu1, d, 0.0);
  EXPECT_EQ(b.eps_f0, 0.0);
  EXPECT_EQ(b.eps_f1, 0.0);
  EXPECT_EQ(b.eps_cf0, 0.0);
  EXPECT_EQ(b.eps_cf1, 0.0);
  EXPECT_EQ(b.pehe, 0.0);
  EXPECT_EQ(b.bound_value, 0.0);
  EXPECT_NEAR(b.alpha, static_cast<double>(d.n_treated()) / 500.0, 1e-15);
}

TEST(BoundDiagnostics, FactualLossReachesNoiseFloor) {
  RngStream rng(9);
  Dataset d = truth_data(200000, rng);
  const double sigma = 0.5;
  for (Eigen::Index i = 0; i < d.y.size(); ++i) d.y(i) += sigma * rng.normal();
  const BoundDiagnostics b = bound_diagnostics(*d.mu0, *d.mu1, d, sigma);
  EXPECT_NEAR(b.eps_f0, sigma * sigma, 0.005);
  EXPECT_NEAR(b.eps_f1, sigma * sigma, 0.005);
  EXPECT_DOUBLE_EQ(b.eps_cf0, sigma * sigma);
  EXPECT_DOUBLE_EQ(b.eps_cf1, sigma * sigma);
  EXPECT_EQ(b.pehe, 0.0);
  EXPECT_NEAR(b.bound_value, 0.0, 0.02);
}

TEST(BoundDiagnostics, PeheBelowBoundForImperfectModels) {
  RngStream rng(10);
  const double sigma = 1.0;
  for (int k = 0; k < 10; ++k) {
    Dataset d = truth_data(20000, rng);
    for (Eigen::Index i = 0; i < d.y.size(); ++i) d.y(i) += sigma * rng.normal();
    const double a = rng.normal(), b = rng.normal();
    const Vector f0 = d.mu0->array() + 0.3 * a * d.x.col(0).array() + 0.2;
    const Vector f1 = d.mu1->array() + 0.3 * b * d.x.col(1).array().square() - 0.1;
    const BoundDiagnostics diag = bound_diagnostics(f0, f1, d, sigma);
    EXPECT_GT(diag.pehe, 0.0);
    EXPECT_LE(diag.pehe, diag.bound_value + 0.05);
  }
}

TEST(BoundDiagnostics, RequiresTruth) {
  Dataset d;
  d.x = Matrix::Zero(2, 1);
  d.t = {0, 1};
  d.y = Vector::Zero(2);
  EXPECT_THROW(bound_diagnostics(Vector::Zero(2), Vector::Zero(2), d, 1.0), Error);
}

TEST(JsdOracle, IdenticalGaussiansGiveZero) {
  EXPECT_NEAR(jsd_alpha_oracle({0.0, 1.0}, {0.0, 1.0}, 0.5), 0.0, 1e-12);
  EXPECT_NEAR(jsd_alpha_oracle({2.0, 0.3}, {2.0, 0.3}, 0.2), 0.0, 1e-12);
}

TEST(JsdOracle, IncreasingInSeparation) {
  double prev = -1.0;
  for (double delta : {0.0, 0.25, 0.5, 1.0, 2.0, 4.0}) {
    const double v = jsd_alpha_oracle({delta, 1.0}, {0.0, 1.0}, 0.5);
    EXPECT_GT(v, prev);
    prev = v;
    EXPECT_NEAR(jsd_alpha_oracle({-delta, 1.0}, {0.0, 1.0}, 0.5), v, 1e-10);
  }
}

TEST(JsdOracle, MatchesFineGridRiemannSum) {
  auto pdf = [](double x, double m) { return std::exp(-0.5 * (x - m) * (x - m)) / std::sqrt(2.0 * M_PI); };
  for (double alpha : {0.5, 0.3}) {
    double acc = 0.0;
    const double h = 1e-4;
    for (double x = -10.0; x <= 10.0; x += h) {
      const double p1 = pdf(x, 1.0), p0 = pdf(x, 0.0);
      const double m = alpha * p1 + (1.0 - alpha) * p0;
      acc += h * (p1 * std::log(p1 / m) + p0 * std::log(p0 / m));
    }
    EXPECT_NEAR(jsd_alpha_oracle({1.0, 1.0}, {0.0, 1.0}, alpha), acc, 1e-5);
  }
}

TEST(JsdOracle, UnequalVariancesAgainstRiemannSum) {
  auto pdf = [](double x, double m, double s) {
    const double z = (x - m) / s;
    return std::exp(-0.5 * z * z) / (s * std::sqrt(2.0 * M_PI));
  };
  double acc = 0.0;
  const double h = 1e-4;
  for (double x = -15.0; x <= 15.0; x += h) {
    const double p1 = pdf(x, 0.5, 2.0), p0 = pdf(x, 0.0, 0.7);
    const double m = 0.4 * p1 + 0.6 * p0;
    acc += h * (p1 * std::log(p1 / m) + p0 * std::log(p0 / m));
  }
  EXPECT_NEAR(jsd_alpha_oracle({0.5, 2.0}, {0.0, 0.7}, 0.4), acc, 1e-5);
}

TEST(JsdOracle, RejectsBadArguments) {
  EXPECT_THROW(jsd_alpha_oracle({0.0, 0.0}, {0.0, 1.0}, 0.5), Error);
  EXPECT_THROW(jsd_alpha_oracle({0.0, 1.0}, {0.0, -1.0}, 0.5), Error);
  EXPECT_THROW(jsd_alpha_oracle({0.0, 1.0}, {0.0, 1.0}, 1.0), Error);
}

TEST(Discrete, HandValues) {
  // Disjoint supports at alpha = 1/2: each KL against the mixture is log 2.
  EXPECT_NEAR(jsd_alpha_discrete({1.0, 0.0}, {0.0, 1.0}, 0.5), 2.0 * std::log(2.0), 1e-15);
  EXPECT_NEAR(jsd_alpha_discrete({0.2, 0.8}, {0.2, 0.8}, 0.3), 0.0, 1e-15);
  EXPECT_NEAR(total_variation({0.5, 0.5, 0.0}, {0.25, 0.25, 0.5}), 1.0, 1e-15);
}

TEST(Discrete, TotalVariationBoundedByJsd) {
  RngStream rng(11);
  for (int k = 0; k < 1000; ++k) {
    const std::size_t support = 2 + rng.uniform_index(9);
    const auto p = random_distribution(support, rng);
    const auto q = random_distribution(support, rng);
    const double alpha = 0.02 + 0.96 * rng.uniform();
    const double jsd = jsd_alpha_discrete(p, q, alpha);
    const double tv = total_variation(p, q);
    const double middle = (2.0 / alpha) * std::sqrt(1.0 - std::exp(-jsd));
    EXPECT_LE(tv, middle);
    EXPECT_LE(middle, (2.0 / alpha) * std::sqrt(jsd));
  }
}

TEST(EntropyStatistic, AffineInOracleJsd) {
  const std::size_t n = 20000;
  const double deltas[] = {0.0, 0.5, 1.0, 2.0};
  std::vector<double> stat, oracle;
  for (double delta : deltas) {
    RngStream rng(12, static_cast<std::uint64_t>(delta * 10));
    BalanceProblem p;
    p.phi.resize(static_cast<Eigen::Index>(n), 1);
    p.treatment.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const int t = rng.bernoulli(0.5) ? 1 : 0;
      p.treatment[i] = t;
      p.phi(static_cast<Eigen::Index>(i), 0) = rng.normal() + (t ? delta : 0.0);
    }
    stat.push_back(entropy_stat(weights_from_dual(p, solve_dual(p))));
    oracle.push_back(jsd_alpha_oracle({delta, 1.0}, {0.0, 1.0}, 0.5));
  }
  for (std::size_t k = 1; k < stat.size(); ++k) EXPECT_GT(stat[k], stat[k - 1]);
  const double mx = (oracle[0] + oracle[1] + oracle[2] + oracle[3]) / 4.0;
  const double my = (stat[0] + stat[1] + stat[2] + stat[3]) / 4.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    sxy += (oracle[k] - mx) * (stat[k] - my);
    sxx += (oracle[k] - mx) * (oracle[k] - mx);
    syy += (stat[k] - my) * (stat[k] - my);
  }
  const double r2 = sxy * sxy / (sxx * syy);
  RecordProperty("r_squared", std::to_string(r2));
  EXPECT_GT(r2, 0.95);
}
