#include "drrl/eval.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace drrl {

MetricsReport compute_metrics(const Vector& predicted_ite, double tau_hat, const Dataset& data,
                              Estimand estimand) {
  if (predicted_ite.size() != static_cast<Eigen::Index>(data.size())) {
    throw Error(ErrorCode::kArgument, "compute_metrics: predictions are not aligned with the dataset");
  }
  MetricsReport report;
  report.estimand = estimand;
  report.tau_hat = tau_hat;
  if (data.has_truth()) {
    const Vector truth = data.true_ite();
    report.sqrt_pehe = std::sqrt((predicted_ite - truth).squaredNorm() / static_cast<double>(truth.size()));
    if (estimand == Estimand::kAte) {
      report.tau_true = truth.mean();
      report.eps_ate = std::abs(tau_hat - *report.tau_true);
    } else {
      double sum = 0.0;
      std::size_t count = 0;
      for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.t[i] == 1) {
          sum += truth(static_cast<Eigen::Index>(i));
          ++count;
        }
      }
      if (count == 0) throw Error(ErrorCode::kEvaluation, "compute_metrics: no treated units for the ATT");
      report.tau_true = sum / static_cast<double>(count);
      report.eps_att = std::abs(tau_hat - *report.tau_true);
    }
    return report;
  }
  if (estimand == Estimand::kAtt && data.randomized) {
    std::array<double, 2> sum{0.0, 0.0};
    std::array<std::size_t, 2> count{0, 0};
    for (std::size_t i = 0; i < data.size(); ++i) {
      if ((*data.randomized)[i] != 1) continue;
      sum[static_cast<std::size_t>(data.t[i])] += data.y(static_cast<Eigen::Index>(i));
      ++count[static_cast<std::size_t>(data.t[i])];
    }
    if (count[0] == 0 || count[1] == 0) {
      throw Error(ErrorCode::kMissingTruth, "compute_metrics: randomized subset lacks one treatment group");
    }
    report.tau_true = sum[1] / static_cast<double>(count[1]) - sum[0] / static_cast<double>(count[0]);
    report.eps_att = std::abs(tau_hat - *report.tau_true);
    return report;
  }
  throw Error(ErrorCode::kMissingTruth,
              "compute_metrics: dataset has neither mu0/mu1 nor a randomized subset for the ATT");
}

std::vector<PolicyPoint> policy_risk_curve(const Vector& predicted_ite, const Dataset& data,
                                           const std::vector<double>& deltas) {
  if (predicted_ite.size() != static_cast<Eigen::Index>(data.size())) {
    throw Error(ErrorCode::kArgument, "policy_risk_curve: predictions are not aligned with the dataset");
  }
  const bool exact = data.has_truth();
  if (!exact && !data.randomized) {
    throw Error(ErrorCode::kMissingTruth, "policy_risk_curve: need mu0/mu1 or a randomized subset");
  }
  std::vector<PolicyPoint> curve;
  curve.reserve(deltas.size());
  for (double delta : deltas) {
    PolicyPoint point;
    point.delta = delta;
    if (exact) {
      double value = 0.0;
      double treated = 0.0;
      for (std::size_t i = 0; i < data.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const bool pi = predicted_ite(r) > delta;
        value += pi ? (*data.mu1)(r) : (*data.mu0)(r);
        treated += pi ? 1.0 : 0.0;
      }
      const double n = static_cast<double>(data.size());
      point.inclusion_rate = treated / n;
      point.risk = 1.0 - value / n;
    } else {
      // cells indexed by [pi][t]
      double sum[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
      double count[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
      double total = 0.0;
      double included = 0.0;
      for (std::size_t i = 0; i < data.size(); ++i) {
        if ((*data.randomized)[i] != 1) continue;
        const auto r = static_cast<Eigen::Index>(i);
        const int pi = predicted_ite(r) > delta ? 1 : 0;
        sum[pi][data.t[i]] += data.y(r);
        count[pi][data.t[i]] += 1.0;
        total += 1.0;
        included += pi;
      }
      if (total == 0.0) throw Error(ErrorCode::kMissingTruth, "policy_risk_curve: randomized subset is empty");
      const double p1 = included / total;
      point.inclusion_rate = p1;
      bool defined = true;
      double value = 0.0;
      if (p1 > 0.0) {
        if (count[1][1] == 0.0) defined = false;
        else value += sum[1][1] / count[1][1] * p1;
      }
      if (p1 < 1.0) {
        if (count[0][0] == 0.0) defined = false;
        else value += sum[0][0] / count[0][0] * (1.0 - p1);
      }
      if (defined) point.risk = 1.0 - value;
    }
    curve.push_back(point);
  }
  return curve;
}

BoundDiagnostics bound_diagnostics(const Vector& f0, const Vector& f1, const Dataset& data,
                                   double sigma_e) {
  if (!data.has_truth()) throw Error(ErrorCode::kMissingTruth, "bound_diagnostics: dataset has no mu0/mu1");
  const auto n = static_cast<Eigen::Index>(data.size());
  if (f0.size() != n || f1.size() != n) {
    throw Error(ErrorCode::kArgument, "bound_diagnostics: predictions are not aligned with the dataset");
  }
  if (!(sigma_e >= 0.0)) throw Error(ErrorCode::kArgument, "bound_diagnostics: sigma_e must be >= 0");
  const double noise = sigma_e * sigma_e;
  std::array<double, 2> factual{0.0, 0.0};
  std::array<double, 2> counterfactual{0.0, 0.0};
  std::array<double, 2> count{0.0, 0.0};
  const Vector& mu0 = *data.mu0;
  const Vector& mu1 = *data.mu1;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int t = data.t[static_cast<std::size_t>(i)];
    count[static_cast<std::size_t>(t)] += 1.0;
    if (t == 1) {
      factual[1] += std::pow(data.y(i) - f1(i), 2);
      counterfactual[0] += std::pow(f0(i) - mu0(i), 2) + noise;
    } else {
      factual[0] += std::pow(data.y(i) - f0(i), 2);
      counterfactual[1] += std::pow(f1(i) - mu1(i), 2) + noise;
    }
  }
  if (count[0] == 0.0 || count[1] == 0.0) {
    throw Error(ErrorCode::kEvaluation, "bound_diagnostics: both treatment groups must be present");
  }
  BoundDiagnostics out;
  out.alpha = count[1] / static_cast<double>(n);
  out.eps_f1 = factual[1] / count[1];
  out.eps_f0 = factual[0] / count[0];
  out.eps_cf0 = counterfactual[0] / count[1];
  out.eps_cf1 = counterfactual[1] / count[0];
  out.pehe = ((f1 - f0) - (mu1 - mu0)).squaredNorm() / static_cast<double>(n);
  const double a = out.alpha;
  out.bound_value = 2.0 * (a * out.eps_f1 + (1.0 - a) * out.eps_f0 + (1.0 - a) * out.eps_cf1 +
                           a * out.eps_cf0 - 2.0 * noise);
  return out;
}

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double log_normal_pdf(double x, const Gaussian1D& g) {
  const double z = (x - g.mean) / g.sd;
  return -0.5 * z * z - std::log(g.sd) - kLogSqrt2Pi;
}

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::kArgument, "jsd: alpha must lie in (0, 1)");
}

}  // namespace

double jsd_alpha_oracle(const Gaussian1D& p1, const Gaussian1D& p0, double alpha) {
  check_alpha(alpha);
  if (!(p1.sd > 0.0) || !(p0.sd > 0.0)) throw Error(ErrorCode::kArgument, "jsd: variances must be positive");
  const double log_a = std::log(alpha);
  const double log_b = std::log1p(-alpha);
  auto integrand = [&](double x) {
    const double l1 = log_normal_pdf(x, p1);
    const double l0 = log_normal_pdf(x, p0);
    const double top = std::max(log_a + l1, log_b + l0);
    const double lm = top + std::log(std::exp(log_a + l1 - top) + std::exp(log_b + l0 - top));
    return std::exp(l1) * (l1 - lm) + std::exp(l0) * (l0 - lm);
  };
  const double pooled = std::sqrt(0.5 * (p1.sd * p1.sd + p0.sd * p0.sd));
  const double lo = std::min(p1.mean, p0.mean) - 8.0 * pooled;
  const double hi = std::max(p1.mean, p0.mean) + 8.0 * pooled;
  double error = 0.0;
  const double value = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      integrand, lo, hi, 15, 1e-12, &error);
  return std::max(value, 0.0);
}

double jsd_alpha_discrete(const std::vector<double>& p1, const std::vector<double>& p0, double alpha) {
  check_alpha(alpha);
  if (p1.size() != p0.size() || p1.empty()) {
    throw Error(ErrorCode::kArgument, "jsd: distributions must share a nonempty support");
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < p1.size(); ++k) {
    const double m = alpha * p1[k] + (1.0 - alpha) * p0[k];
    if (p1[k] > 0.0) acc += p1[k] * std::log(p1[k] / m);
    if (p0[k] > 0.0) acc += p0[k] * std::log(p0[k] / m);
  }
  return acc;
}

double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw Error(ErrorCode::kArgument, "total_variation: support size mismatch");
  double acc = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) acc += std::abs(p[k] - q[k]);
  return acc;
}

}  // namespace drrl
