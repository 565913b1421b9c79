// OLS with treatment interactions, k-NN outcome regression and MMD.
#ifndef DRRL_BASELINES_HPP_
#define DRRL_BASELINES_HPP_

#include "drrl/numerics.hpp"

namespace drrl {

struct Dataset;

// Coefficients over [1, X, T, T*X]; length 2p + 2.
struct LinearModel {
  Vector coefficients;
  bool fitted = false;
  bool ridge_used = false;

  Eigen::Index input_dim() const { return (coefficients.size() - 2) / 2; }
  Vector predict_ite(const Matrix& x) const;
  Vector predict(const Matrix& x, int t) const;
};

LinearModel ols_interactions(const Dataset& data);

struct KnnPrediction {
  Vector f0;
  Vector f1;
};

// Distances use the training covariates' standardization; ties go to the lower
// training index.
KnnPrediction knn_predict(const Dataset& data, const Matrix& query, std::size_t k);

// Biased V-statistic of the squared MMD with kernel exp(-|x - y|^2 / (2 h^2)).
double mmd_rbf(const Matrix& phi, const Treatment& treatment, double bandwidth);
// Linear-kernel MMD, equal to the squared distance of the group means.
double mmd_linear(const Matrix& phi, const Treatment& treatment);
// Median pairwise Euclidean distance over all rows.
double median_heuristic_bandwidth(const Matrix& phi);
// d mmd_rbf / d phi, same shape as phi.
Matrix mmd_rbf_grad(const Matrix& phi, const Treatment& treatment, double bandwidth);

}  // namespace drrl

#endif  // DRRL_BASELINES_HPP_
