#include "drrl/estimators.hpp"

#include <algorithm>
#include <cmath>

namespace drrl {

namespace {

void check_aligned(const Vector& f0, const Vector& f1, const Dataset& data) {
  const auto n = static_cast<Eigen::Index>(data.size());
  if (f0.size() != n || f1.size() != n) {
    throw Error(ErrorCode::kArgument, "estimator: predictions are not aligned with the dataset");
  }
}

void check_weights(const BalancingWeights& weights, const Dataset& data, Estimand expected,
                   const char* who) {
  if (weights.estimand != expected) {
    throw Error(ErrorCode::kArgument, std::string(who) + ": weights were built for the " +
                                          std::string(estimand_name(weights.estimand)) +
                                          ", expected the " + std::string(estimand_name(expected)));
  }
  if (weights.w.size() != static_cast<Eigen::Index>(data.size())) {
    throw Error(ErrorCode::kArgument, std::string(who) + ": weights are not aligned with the dataset");
  }
}

}  // namespace

EstimateReport dr_ate(const Vector& f0, const Vector& f1, const BalancingWeights& weights,
                      const Dataset& data) {
  check_aligned(f0, f1, data);
  check_weights(weights, data, Estimand::kAte, "dr_ate");
  EstimateReport report;
  report.estimand = Estimand::kAte;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const bool treated = data.t[i] == 1;
    const double fitted = treated ? f1(r) : f0(r);
    report.residual_term += weights.w(r) * (treated ? 1.0 : -1.0) * (data.y(r) - fitted);
  }
  report.outcome_term = outcome_ate(f0, f1);
  report.point = report.residual_term + report.outcome_term;
  report.weights = weight_diagnostics(weights, data.t);
  return report;
}

double ipw_ate(const BalancingWeights& weights, const Dataset& data) {
  check_weights(weights, data, Estimand::kAte, "ipw_ate");
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    acc += (data.t[i] == 1 ? 1.0 : -1.0) * weights.w(r) * data.y(r);
  }
  return acc;
}

double outcome_ate(const Vector& f0, const Vector& f1) {
  if (f0.size() != f1.size() || f0.size() == 0) {
    throw Error(ErrorCode::kArgument, "outcome_ate: head vectors must be nonempty and aligned");
  }
  return (f1 - f0).mean();
}

EstimateReport classic_dr_ate(const Vector& f0, const Vector& f1, const Vector& propensity,
                              const Dataset& data) {
  check_aligned(f0, f1, data);
  if (propensity.size() != static_cast<Eigen::Index>(data.size())) {
    throw Error(ErrorCode::kArgument, "classic_dr_ate: propensity is not aligned with the dataset");
  }
  if (!propensity.allFinite()) throw Error(ErrorCode::kArgument, "classic_dr_ate: non-finite propensity");
  EstimateReport report;
  report.estimand = Estimand::kAte;
  BalancingWeights w{Vector(propensity.size()), Estimand::kAte};
  std::array<double, 2> totals{0.0, 0.0};
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double e = std::clamp(propensity(r), 0.01, 0.99);
    if (e != propensity(r)) ++report.clipped;
    w.w(r) = data.t[i] == 1 ? 1.0 / e : 1.0 / (1.0 - e);
    totals[static_cast<std::size_t>(data.t[i])] += w.w(r);
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    w.w(static_cast<Eigen::Index>(i)) /= totals[static_cast<std::size_t>(data.t[i])];
  }
  const EstimateReport core = dr_ate(f0, f1, w, data);
  report.point = core.point;
  report.residual_term = core.residual_term;
  report.outcome_term = core.outcome_term;
  report.weights = core.weights;
  return report;
}

double att_eb(const BalancingWeights& weights, const Dataset& data) {
  check_weights(weights, data, Estimand::kAtt, "att_eb");
  double treated_sum = 0.0;
  std::size_t treated = 0;
  double control = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    if (data.t[i] == 1) {
      treated_sum += data.y(r);
      ++treated;
    } else {
      control += weights.w(r) * data.y(r);
    }
  }
  if (treated == 0) throw Error(ErrorCode::kArgument, "att_eb: no treated units");
  return treated_sum / static_cast<double>(treated) - control;
}

double naive_difference(const Dataset& data) {
  std::array<double, 2> sum{0.0, 0.0};
  std::array<std::size_t, 2> count{0, 0};
  for (std::size_t i = 0; i < data.size(); ++i) {
    sum[static_cast<std::size_t>(data.t[i])] += data.y(static_cast<Eigen::Index>(i));
    ++count[static_cast<std::size_t>(data.t[i])];
  }
  if (count[0] == 0 || count[1] == 0) {
    throw Error(ErrorCode::kArgument, "naive_difference: both groups must be present");
  }
  return sum[1] / static_cast<double>(count[1]) - sum[0] / static_cast<double>(count[0]);
}

}  // namespace drrl
