#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "drrl/baselines.hpp"
#include "drrl/data.hpp"
#include "test_util.hpp"

using namespace drrl;
using drrl::testing::random_normal;

namespace {

Dataset random_dataset(std::size_t n, Eigen::Index p, RngStream& rng) {
  Dataset d;
  d.x = random_normal(static_cast<Eigen::Index>(n), p, rng);
  d.y = random_normal(static_cast<Eigen::Index>(n), 1, rng).col(0);
  d.t.resize(n);
  for (std::size_t i = 0; i < n; ++i) d.t[i] = rng.bernoulli(0.45) ? 1 : 0;
  d.t[0] = 0;
  d.t[1] = 1;
  return d;
}

// Interaction-model data: y = a + x b + t (c + x g) + noise.
Dataset interaction_data(std::size_t n, Eigen::Index p, double noise, RngStream& rng, Vector* coef) {
  Dataset d = random_dataset(n, p, rng);
  Vector beta = random_normal(2 * p + 2, 1, rng).col(0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double t = d.t[i];
    const double mu0 = beta(0) + d.x.row(r).dot(beta.segment(1, p));
    const double tau = beta(p + 1) + d.x.row(r).dot(beta.segment(p + 2, p));
    d.y(r) = mu0 + t * tau + noise * rng.normal();
  }
  if (coef) *coef = beta;
  return d;
}

std::vector<Eigen::Index> nearest(const Matrix& z, const Matrix& q, Eigen::Index row, const Treatment& t,
                                  int group, std::size_t k) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    if (t[static_cast<std::size_t>(i)] == group) idx.push_back(i);
  }
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
    return (z.row(a) - q.row(row)).squaredNorm() < (z.row(b) - q.row(row)).squaredNorm();
  });
  idx.resize(k);
  return idx;
}

}  // namespace

TEST(Ols, RecoversNoiselessInteractionModel) {
  RngStream rng(1);
  Vector beta;
  const Dataset d = interaction_data(200, 4, 0.0, rng, &beta);
  const LinearModel m = ols_interactions(d);
  EXPECT_FALSE(m.ridge_used);
  EXPECT_EQ(m.coefficients.size(), 10);
  EXPECT_LT((m.coefficients - beta).cwiseAbs().maxCoeff(), 1e-8);
  const Vector truth = (d.x * beta.segment(6, 4)).array() + beta(5);
  EXPECT_LT((m.predict_ite(d.x) - truth).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Ols, HomogeneousEffect) {
  RngStream rng(2);
  Dataset d = random_dataset(400, 3, rng);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    d.y(r) = 1.0 + d.x(r, 0) - 2.0 * d.x(r, 2) + 1.5 * d.t[i];
  }
  const Vector ite = ols_interactions(d).predict_ite(d.x);
  EXPECT_LT((ite.array() - 1.5).abs().maxCoeff(), 1e-10);
}

TEST(Ols, MatchesNormalEquationsByInversion) {
  RngStream rng(3);
  const Dataset d = random_dataset(50, 3, rng);
  Eigen::MatrixXd a(50, 8);
  for (Eigen::Index i = 0; i < 50; ++i) {
    const double t = d.t[static_cast<std::size_t>(i)];
    a(i, 0) = 1.0;
    for (Eigen::Index j = 0; j < 3; ++j) {
      a(i, 1 + j) = d.x(i, j);
      a(i, 5 + j) = t * d.x(i, j);
    }
    a(i, 4) = t;
  }
  const Eigen::MatrixXd gram = a.transpose() * a;
  const Vector oracle = gram.inverse() * (a.transpose() * d.y);
  EXPECT_LT((ols_interactions(d).coefficients - oracle).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Ols, PredictArmsAndIteAgree) {
  RngStream rng(4);
  const Dataset d = random_dataset(80, 2, rng);
  const LinearModel m = ols_interactions(d);
  EXPECT_LT((m.predict(d.x, 1) - m.predict(d.x, 0) - m.predict_ite(d.x)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(m.predict_ite(Matrix::Zero(3, 5)), Error);
}

TEST(Ols, RidgeFallbackOnDuplicatedColumn) {
  RngStream rng(5);
  Dataset d = random_dataset(60, 3, rng);
  d.x.col(2) = d.x.col(1);
  const LinearModel m = ols_interactions(d);
  EXPECT_TRUE(m.ridge_used);
  EXPECT_TRUE(m.coefficients.allFinite());
}

TEST(Ols, IteConvergesOnRealizableDesign) {
  std::vector<double> errors;
  for (int s = 0; s < 10; ++s) {
    RngStream rng(6, static_cast<std::uint64_t>(s));
    Vector beta;
    const Dataset d = interaction_data(8000, 5, 0.1, rng, &beta);
    const Vector truth = (d.x * beta.segment(7, 5)).array() + beta(6);
    const Vector ite = ols_interactions(d).predict_ite(d.x);
    errors.push_back(std::sqrt((ite - truth).squaredNorm() / 8000.0));
  }
  EXPECT_LT(median(errors), 0.05);
}

TEST(Knn, FullGroupAverage) {
  RngStream rng(7);
  const Dataset d = random_dataset(30, 2, rng);
  const std::size_t n1 = d.n_treated();
  const std::size_t k = std::min(n1, d.size() - n1);
  // Trim to equal group sizes so that k covers both groups.
  std::vector<std::size_t> rows;
  std::size_t c0 = 0, c1 = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.t[i] == 0 && c0 < k) {
      rows.push_back(i);
      ++c0;
    } else if (d.t[i] == 1 && c1 < k) {
      rows.push_back(i);
      ++c1;
    }
  }
  const Dataset eq = d.subset(rows);
  double e0 = 0.0, e1 = 0.0;
  for (std::size_t i = 0; i < eq.size(); ++i) (eq.t[i] ? e1 : e0) += eq.y(static_cast<Eigen::Index>(i));
  const KnnPrediction pred = knn_predict(eq, random_normal(5, 2, rng), k);
  for (Eigen::Index r = 0; r < 5; ++r) {
    EXPECT_NEAR(pred.f0(r), e0 / static_cast<double>(k), 1e-12);
    EXPECT_NEAR(pred.f1(r), e1 / static_cast<double>(k), 1e-12);
  }
}

TEST(Knn, TrainingPointsReturnOwnOutcome) {
  RngStream rng(8);
  const Dataset d = random_dataset(50, 3, rng);
  const KnnPrediction pred = knn_predict(d, d.x, 1);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    EXPECT_EQ((d.t[i] ? pred.f1 : pred.f0)(r), d.y(r));
  }
}

TEST(Knn, MatchesBruteForce) {
  RngStream rng(9);
  const Dataset d = random_dataset(150, 3, rng);
  const Matrix query = random_normal(20, 3, rng);
  const StandardizedMatrix z = standardize_columns(d.x);
  const Matrix q = z.params.apply(query);
  for (std::size_t k : {1u, 3u, 7u}) {
    const KnnPrediction pred = knn_predict(d, query, k);
    for (Eigen::Index r = 0; r < 20; ++r) {
      for (int g = 0; g < 2; ++g) {
        double sum = 0.0;
        for (Eigen::Index i : nearest(z.values, q, r, d.t, g, k)) sum += d.y(i);
        EXPECT_NEAR((g ? pred.f1 : pred.f0)(r), sum / static_cast<double>(k), 1e-12);
      }
    }
  }
}

TEST(Knn, ArgumentErrors) {
  RngStream rng(10);
  const Dataset d = random_dataset(20, 2, rng);
  EXPECT_THROW(knn_predict(d, d.x, 0), Error);
  EXPECT_THROW(knn_predict(d, d.x, 19), Error);
  EXPECT_THROW(knn_predict(d, Matrix::Zero(2, 3), 1), Error);
}

TEST(Mmd, IdenticalGroupsGiveZero) {
  RngStream rng(11);
  const Matrix half = random_normal(25, 3, rng);
  Matrix phi(50, 3);
  phi << half, half;
  Treatment t(50, 0);
  std::fill(t.begin() + 25, t.end(), 1);
  EXPECT_NEAR(mmd_rbf(phi, t, 1.3), 0.0, 1e-14);
  EXPECT_NEAR(mmd_linear(phi, t), 0.0, 1e-14);
}

TEST(Mmd, LinearKernelIsMeanDifference) {
  RngStream rng(12);
  Matrix phi = random_normal(40, 4, rng);
  Treatment t(40);
  for (std::size_t i = 0; i < 40; ++i) t[i] = i % 3 == 0;
  Vector m0 = Vector::Zero(4), m1 = Vector::Zero(4);
  double n0 = 0.0, n1 = 0.0;
  for (Eigen::Index i = 0; i < 40; ++i) {
    if (t[static_cast<std::size_t>(i)]) {
      m1 += phi.row(i).transpose();
      n1 += 1.0;
    } else {
      m0 += phi.row(i).transpose();
      n0 += 1.0;
    }
  }
  EXPECT_NEAR(mmd_linear(phi, t), (m1 / n1 - m0 / n0).squaredNorm(), 1e-13);
}

TEST(Mmd, GaussianSamplesMatchAnalyticValue) {
  // For N(0, I) vs N(mu, I) in d dimensions and bandwidth h:
  // E k(x, x') = (h^2 / (h^2 + 2))^(d/2), and the cross term carries
  // exp(-|mu|^2 / (2 (h^2 + 2))).
  RngStream rng(13);
  const Eigen::Index dim = 2;
  const double h = 1.5;
  Matrix phi = random_normal(2000, dim, rng);
  Treatment t(2000);
  for (std::size_t i = 0; i < 2000; ++i) {
    t[i] = i < 1000 ? 0 : 1;
    if (t[i]) phi(static_cast<Eigen::Index>(i), 0) += 1.0;
  }
  const double base = std::pow(h * h / (h * h + 2.0), dim / 2.0);
  const double analytic = 2.0 * base * (1.0 - std::exp(-1.0 / (2.0 * (h * h + 2.0))));
  EXPECT_NEAR(mmd_rbf(phi, t, h), analytic, 0.1 * analytic);
}

TEST(Mmd, SymmetricAndPermutationInvariant) {
  RngStream rng(14);
  const Matrix phi = random_normal(60, 2, rng);
  Treatment t(60);
  for (std::size_t i = 0; i < 60; ++i) t[i] = rng.bernoulli(0.5) ? 1 : 0;
  t[0] = 0;
  t[1] = 1;
  Treatment flipped(t);
  for (int& v : flipped) v = 1 - v;
  const double base = mmd_rbf(phi, t, 0.8);
  EXPECT_NEAR(mmd_rbf(phi, flipped, 0.8), base, 1e-14);
  std::vector<std::size_t> perm(60);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  Matrix phi_p(60, 2);
  Treatment t_p(60);
  for (std::size_t i = 0; i < 60; ++i) {
    phi_p.row(static_cast<Eigen::Index>(i)) = phi.row(static_cast<Eigen::Index>(perm[i]));
    t_p[i] = t[perm[i]];
  }
  EXPECT_NEAR(mmd_rbf(phi_p, t_p, 0.8), base, 1e-13);
}

TEST(Mmd, GradientMatchesFiniteDifferences) {
  RngStream rng(15);
  const Matrix phi = random_normal(12, 2, rng);
  Treatment t{0, 1, 0, 1, 1, 0, 0, 1, 0, 0, 1, 1};
  const Matrix grad = mmd_rbf_grad(phi, t, 0.9);
  Vector flat = Eigen::Map<const Vector>(phi.data(), phi.size());
  auto f = [&](const Vector& v) {
    const Matrix p = Eigen::Map<const Matrix>(v.data(), 12, 2);
    return mmd_rbf(p, t, 0.9);
  };
  const Vector fd = finite_diff_grad(f, flat, 1e-5);
  const Vector analytic = Eigen::Map<const Vector>(grad.data(), grad.size());
  EXPECT_LT((fd - analytic).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Mmd, MedianHeuristic) {
  Matrix phi(3, 1);
  phi << 0.0, 1.0, 3.0;  // pairwise distances 1, 2, 3
  EXPECT_EQ(median_heuristic_bandwidth(phi), 2.0);
  EXPECT_EQ(median_heuristic_bandwidth(Matrix::Zero(4, 2)), 1.0);
}
