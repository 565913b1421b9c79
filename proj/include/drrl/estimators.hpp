// Point estimators for the ATE and ATT.
#ifndef DRRL_ESTIMATORS_HPP_
#define DRRL_ESTIMATORS_HPP_

#include "drrl/data.hpp"
#include "drrl/ebal.hpp"

namespace drrl {

struct EstimateReport {
  Estimand estimand = Estimand::kAte;
  double point = 0.0;
  double residual_term = 0.0;  // weighted residuals
  double outcome_term = 0.0;   // mean head difference
  WeightDiagnostics weights;
  std::size_t clipped = 0;  // classic_dr_ate only
};

// sum_i w_i (2T_i - 1)(Y_i - f_{T_i}(x_i)) + mean(f1 - f0).
EstimateReport dr_ate(const Vector& f0, const Vector& f1, const BalancingWeights& weights,
                      const Dataset& data);

// sum_{T=1} w Y - sum_{T=0} w Y.
double ipw_ate(const BalancingWeights& weights, const Dataset& data);

double outcome_ate(const Vector& f0, const Vector& f1);

// Augmented IPW with propensities clipped to [0.01, 0.99] and the inverse
// weights normalized within each group.
EstimateReport classic_dr_ate(const Vector& f0, const Vector& f1, const Vector& propensity,
                              const Dataset& data);

// Treated mean minus the weighted control mean.
double att_eb(const BalancingWeights& weights, const Dataset& data);

// Difference in group means.
double naive_difference(const Dataset& data);

}  // namespace drrl

#endif  // DRRL_ESTIMATORS_HPP_
