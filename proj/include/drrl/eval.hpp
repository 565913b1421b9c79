// Evaluation metrics, policy risk, bound diagnostics and divergence oracles.
#ifndef DRRL_EVAL_HPP_
#define DRRL_EVAL_HPP_

#include <optional>
#include <vector>

#include "drrl/data.hpp"
#include "drrl/ebal.hpp"

namespace drrl {

struct MetricsReport {
  Estimand estimand = Estimand::kAte;
  double tau_hat = 0.0;
  std::optional<double> tau_true;
  std::optional<double> eps_ate;
  std::optional<double> eps_att;
  std::optional<double> sqrt_pehe;
  std::optional<double> policy_risk;  // at delta = 0
  std::optional<double> inclusion_rate;
  std::optional<double> entropy_stat;
};

// With mu0/mu1 the truth is the mean true ITE (over treated units for the
// ATT). Without them an ATT truth is taken from the randomized subset as the
// difference of treated and control means there; PEHE is then unavailable.
MetricsReport compute_metrics(const Vector& predicted_ite, double tau_hat, const Dataset& data,
                              Estimand estimand);

struct PolicyPoint {
  double delta = 0.0;
  double inclusion_rate = 0.0;
  std::optional<double> risk;  // empty when an agreement cell is empty
};

// Treat when predicted ITE > delta. Exact from mu0/mu1 when present, otherwise
// estimated on the randomized subset.
std::vector<PolicyPoint> policy_risk_curve(const Vector& predicted_ite, const Dataset& data,
                                           const std::vector<double>& deltas);

struct BoundDiagnostics {
  double alpha = 0.0;  // treated fraction
  double eps_f0 = 0.0;
  double eps_f1 = 0.0;
  double eps_cf0 = 0.0;
  double eps_cf1 = 0.0;
  double pehe = 0.0;
  double bound_value = 0.0;
};

// Factual losses use observed outcomes; counterfactual losses are the squared
// error against mu plus sigma_e^2.
BoundDiagnostics bound_diagnostics(const Vector& f0, const Vector& f1, const Dataset& data,
                                   double sigma_e);

struct Gaussian1D {
  double mean = 0.0;
  double sd = 1.0;
};

// KL(p1 || m) + KL(p0 || m) with m = alpha p1 + (1 - alpha) p0.
double jsd_alpha_oracle(const Gaussian1D& p1, const Gaussian1D& p0, double alpha);

// Same divergence for distributions on a finite support.
double jsd_alpha_discrete(const std::vector<double>& p1, const std::vector<double>& p0, double alpha);
// sum |p - q|
double total_variation(const std::vector<double>& p, const std::vector<double>& q);

}  // namespace drrl

#endif  // DRRL_EVAL_HPP_
