#include "drrl/ebal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace drrl {

std::string_view estimand_name(Estimand estimand) {
  return estimand == Estimand::kAte ? "ate" : "att";
}

Estimand parse_estimand(std::string_view text) {
  if (text == "ate" || text == "ATE") return Estimand::kAte;
  if (text == "att" || text == "ATT") return Estimand::kAtt;
  throw Error(ErrorCode::kArgument, "unknown estimand '" + std::string(text) + "'");
}

std::size_t BalanceProblem::n_treated() const {
  return static_cast<std::size_t>(std::count(treatment.begin(), treatment.end(), 1));
}

void BalanceProblem::validate() const {
  if (static_cast<std::size_t>(phi.rows()) != treatment.size()) {
    throw Error(ErrorCode::kArgument, "balance problem: phi rows and treatment length differ");
  }
  if (phi.cols() < 1) throw Error(ErrorCode::kArgument, "balance problem: m must be >= 1");
  for (int t : treatment) {
    if (t != 0 && t != 1) throw Error(ErrorCode::kArgument, "balance problem: treatment not binary");
  }
  if (n_treated() == 0 || n_control() == 0) {
    throw Error(ErrorCode::kArgument, "balance problem: both treatment groups must be nonempty");
  }
  if (!phi.allFinite()) throw Error(ErrorCode::kArgument, "balance problem: non-finite phi");
}

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

const char* group_name(int t) { return t == 0 ? "control" : "treated"; }

double sign_of(int t) { return t == 0 ? 1.0 : -1.0; }

// Columns with nonzero variance over the whole sample, and their scaling.
struct ActiveColumns {
  std::vector<Eigen::Index> index;
  Vector mean;
  Vector sd;
};

ActiveColumns active_columns(const Matrix& phi) {
  const double n = static_cast<double>(phi.rows());
  ActiveColumns out;
  std::vector<double> means, sds;
  for (Eigen::Index j = 0; j < phi.cols(); ++j) {
    const double mean = phi.col(j).sum() / n;
    const double sd = std::sqrt((phi.col(j).array() - mean).square().sum() / n);
    if (sd > 1e-12 * std::max(1.0, std::abs(mean))) {
      out.index.push_back(j);
      means.push_back(mean);
      sds.push_back(sd);
    }
  }
  out.mean = Eigen::Map<Vector>(means.data(), static_cast<Eigen::Index>(means.size()));
  out.sd = Eigen::Map<Vector>(sds.data(), static_cast<Eigen::Index>(sds.size()));
  return out;
}

std::vector<Eigen::Index> rows_of(const Treatment& treatment, int t) {
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < treatment.size(); ++i) {
    if (treatment[i] == t) rows.push_back(static_cast<Eigen::Index>(i));
  }
  return rows;
}

// Standardized representation rows of one group, restricted to active columns.
Matrix standardized_rows(const Matrix& phi, const std::vector<Eigen::Index>& rows,
                         const ActiveColumns& cols) {
  Matrix z(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.index.size()));
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
      z(r, c) = (phi(rows[r], cols.index[c]) - cols.mean(c)) / cols.sd(c);
    }
  }
  return z;
}

Vector target_moments(const BalanceProblem& problem) {
  if (problem.estimand == Estimand::kAte) {
    return problem.phi.colwise().mean().transpose();
  }
  Vector sum = Vector::Zero(problem.phi.cols());
  std::size_t count = 0;
  for (std::size_t i = 0; i < problem.treatment.size(); ++i) {
    if (problem.treatment[i] == 1) {
      sum += problem.phi.row(static_cast<Eigen::Index>(i)).transpose();
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

// Softmax of sign * z * lambda; returns the log-partition.
double tilt_weights(const Matrix& z, const Vector& lambda, double sign, Vector& w) {
  Vector eta = sign * (z * lambda);
  const double lse = logsumexp(eta);
  w = (eta.array() - lse).exp().matrix();
  return lse;
}

struct GroupResult {
  Vector lambda_z;
  bool converged = false;
  int iterations = 0;
  double grad_norm = 0.0;
  std::string failure;
  std::vector<double> trace;
};

// Minimizes log sum_i exp(sign <lambda, z_i>) - sign <lambda, target>.
GroupResult solve_group(const Matrix& z, const Vector& target, double sign,
                        const SolverOptions& opts, const char* group) {
  const Eigen::Index m = z.cols();
  GroupResult res;
  res.lambda_z = Vector::Zero(m);
  if (m == 0) {
    res.converged = true;
    return res;
  }
  const bool newton = m <= opts.newton_max_dim;
  auto objective = [&](const Vector& lambda) {
    Vector eta = sign * (z * lambda);
    return logsumexp(eta) - sign * lambda.dot(target);
  };

  Vector w;
  Vector prev_grad;
  Vector prev_lambda;
  double bb_step = 1.0;
  for (int it = 0; it < opts.max_iter; ++it) {
    res.iterations = it + 1;
    const double lse = tilt_weights(z, res.lambda_z, sign, w);
    const double f = lse - sign * res.lambda_z.dot(target);
    res.trace.push_back(f);
    const Vector mean_w = z.transpose() * w;
    const Vector grad = sign * (mean_w - target);
    res.grad_norm = grad.lpNorm<Eigen::Infinity>();

    Vector direction;
    if (newton) {
      const Matrix centered = z.rowwise() - mean_w.transpose();
      Matrix hess = centered.transpose() * w.asDiagonal() * centered;
      const double ridge = 1e-12 * std::max(hess.trace(), 1e-300);
      hess.diagonal().array() += ridge;
      direction = hess.ldlt().solve(grad);
      if (!direction.allFinite()) direction = grad;
      if (res.grad_norm <= opts.tol && direction.lpNorm<Eigen::Infinity>() <= opts.step_tol) {
        res.converged = true;
        return res;
      }
    } else {
      if (res.grad_norm <= opts.tol) {
        res.converged = true;
        return res;
      }
      if (prev_grad.size() == m) {
        const Vector s = res.lambda_z - prev_lambda;
        const Vector y = grad - prev_grad;
        const double sy = s.dot(y);
        if (sy > 0.0) bb_step = s.squaredNorm() / sy;
      }
      direction = bb_step * grad;
      prev_grad = grad;
      prev_lambda = res.lambda_z;
    }

    const double slope = grad.dot(direction);
    // Below ~100 ulps of f the Armijo test only sees rounding noise.
    const bool roundoff = slope <= 100.0 * kEps * std::max(1.0, std::abs(f));
    double step = 1.0;
    Vector candidate = res.lambda_z - direction;
    bool accepted = roundoff;
    while (!accepted && step > 1e-12) {
      candidate = res.lambda_z - step * direction;
      const double fc = objective(candidate);
      if (std::isfinite(fc) && fc <= f - 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      const bool settled = !newton || direction.lpNorm<Eigen::Infinity>() <= opts.step_tol;
      if (res.grad_norm <= opts.tol && settled) {
        res.converged = true;
        return res;
      }
      std::ostringstream msg;
      msg << group << " group: line search stalled at gradient norm " << res.grad_norm
          << (settled ? "" : " with Newton step still O(1) (balance target on the boundary of "
                             "the convex hull of the group's representations)");
      res.failure = msg.str();
      return res;
    }
    res.lambda_z = candidate;
    if (res.lambda_z.lpNorm<Eigen::Infinity>() > opts.lambda_cap) {
      std::ostringstream msg;
      msg << group << " group: |lambda| exceeded cap " << opts.lambda_cap
          << " (balance target lies on or outside the convex hull of the group's "
             "representations)";
      res.failure = msg.str();
      return res;
    }
  }
  std::ostringstream msg;
  msg << group << " group: no convergence within " << opts.max_iter
      << " iterations (gradient norm " << res.grad_norm << ")";
  res.failure = msg.str();
  return res;
}

Vector to_raw(const GroupResult& g, const ActiveColumns& cols, Eigen::Index m) {
  Vector raw = Vector::Zero(m);
  for (std::size_t c = 0; c < cols.index.size(); ++c) {
    raw(cols.index[c]) = g.lambda_z(static_cast<Eigen::Index>(c)) / cols.sd(static_cast<Eigen::Index>(c));
  }
  return raw;
}

using GroupSolver = GroupResult (*)(const Matrix&, const Vector&, double,
                                    const SolverOptions&, const char*);

DualSolution solve_with(const BalanceProblem& problem, const SolverOptions& opts,
                        GroupSolver solver) {
  problem.validate();
  const Eigen::Index m = problem.phi.cols();
  const ActiveColumns cols = active_columns(problem.phi);
  const Vector target = target_moments(problem);
  Vector target_z(static_cast<Eigen::Index>(cols.index.size()));
  for (Eigen::Index c = 0; c < target_z.size(); ++c) {
    target_z(c) = (target(cols.index[c]) - cols.mean(c)) / cols.sd(c);
  }

  DualSolution out;
  out.lambda0 = Vector::Zero(m);
  out.lambda1 = Vector::Zero(m);
  out.converged = true;
  const int groups = problem.estimand == Estimand::kAte ? 2 : 1;
  for (int t = 0; t < groups; ++t) {
    const Matrix z = standardized_rows(problem.phi, rows_of(problem.treatment, t), cols);
    GroupResult g = solver(z, target_z, sign_of(t), opts, group_name(t));
    (t == 0 ? out.lambda0 : out.lambda1) = to_raw(g, cols, m);
    out.iterations = std::max(out.iterations, g.iterations);
    out.grad_norm = std::max(out.grad_norm, g.grad_norm);
    out.objective_trace[static_cast<std::size_t>(t)] = std::move(g.trace);
    if (!g.converged) {
      out.converged = false;
      if (!out.failure.empty()) out.failure += "; ";
      out.failure += g.failure;
    }
  }
  out.constraint_violation = moment_residual(problem, weights_from_dual(problem, out));
  return out;
}

// Gradient steps on lambda with the inner Fenchel variable held at its
// closed-form maximizer. At fixed u the outer objective
//   exp(u) sum_i exp(s <lambda, z_i>) - u - 1 - s <lambda, target>
// upper-bounds the dual, so a decrease at fixed u is a decrease of the dual.
GroupResult solve_group_fenchel(const Matrix& z, const Vector& target, double sign,
                                const SolverOptions& opts, const char* group) {
  const Eigen::Index m = z.cols();
  GroupResult res;
  res.lambda_z = Vector::Zero(m);
  if (m == 0) {
    res.converged = true;
    return res;
  }
  double step = 1.0;
  for (int it = 0; it < opts.fenchel_max_iter; ++it) {
    res.iterations = it + 1;
    const Vector eta = sign * (z * res.lambda_z);
    const double log_partition = logsumexp(eta);
    // fenchel_inner_max(exp(log_partition)).u_star, kept in log space.
    const double inner = -log_partition;
    const Vector scaled = (eta.array() + inner).exp().matrix();
    const double outer = scaled.sum() - inner - 1.0 - sign * res.lambda_z.dot(target);
    res.trace.push_back(outer);
    const Vector grad = sign * (z.transpose() * scaled - target);
    res.grad_norm = grad.lpNorm<Eigen::Infinity>();
    if (res.grad_norm <= opts.fenchel_tol) {
      res.converged = true;
      return res;
    }
    const double g2 = grad.squaredNorm();
    bool accepted = false;
    while (step > 1e-14) {
      const Vector candidate = res.lambda_z - step * grad;
      const Vector eta_c = sign * (z * candidate);
      const double value = (eta_c.array() + inner).exp().sum() - inner - 1.0 -
                           sign * candidate.dot(target);
      if (std::isfinite(value) && value <= outer - 0.5 * step * g2) {
        res.lambda_z = candidate;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      res.failure = std::string(group) + " group: mini-max step size collapsed";
      return res;
    }
    step = std::min(step * 2.0, 1e3);
    if (res.lambda_z.lpNorm<Eigen::Infinity>() > opts.lambda_cap) {
      res.failure = std::string(group) + " group: |lambda| exceeded cap " +
                    std::to_string(opts.lambda_cap) +
                    " (balance target lies on or outside the convex hull)";
      return res;
    }
  }
  res.failure = std::string(group) + " group: mini-max did not converge within " +
                std::to_string(opts.fenchel_max_iter) + " iterations";
  return res;
}

void throw_if_failed(const DualSolution& sol) {
  if (!sol.converged) throw Error(ErrorCode::kInfeasible, sol.failure);
}

}  // namespace

DualSolution try_solve_dual(const BalanceProblem& problem, const SolverOptions& opts) {
  return solve_with(problem, opts, &solve_group);
}

DualSolution solve_dual(const BalanceProblem& problem, const SolverOptions& opts) {
  DualSolution sol = try_solve_dual(problem, opts);
  throw_if_failed(sol);
  return sol;
}

BalancingWeights weights_from_dual(const BalanceProblem& problem, const DualSolution& dual) {
  const Eigen::Index n = problem.phi.rows();
  if (dual.lambda0.size() != problem.phi.cols() ||
      (problem.estimand == Estimand::kAte && dual.lambda1.size() != problem.phi.cols())) {
    throw Error(ErrorCode::kArgument, "weights_from_dual: lambda length differs from m");
  }
  BalancingWeights out;
  out.estimand = problem.estimand;
  out.w.resize(n);
  Vector eta(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int t = problem.treatment[static_cast<std::size_t>(i)];
    const Vector& lambda = t == 0 ? dual.lambda0 : dual.lambda1;
    eta(i) = -(2.0 * t - 1.0) * problem.phi.row(i).dot(lambda);
  }
  const int groups = problem.estimand == Estimand::kAte ? 2 : 1;
  for (int t = 0; t < 2; ++t) {
    const auto rows = rows_of(problem.treatment, t);
    if (t >= groups) {
      for (Eigen::Index r : rows) out.w(r) = 1.0 / static_cast<double>(rows.size());
      continue;
    }
    std::vector<double> group_eta;
    group_eta.reserve(rows.size());
    for (Eigen::Index r : rows) group_eta.push_back(eta(r));
    const double lse = logsumexp(group_eta);
    for (std::size_t k = 0; k < rows.size(); ++k) out.w(rows[k]) = std::exp(group_eta[k] - lse);
  }
  return out;
}

double entropy_stat(const BalancingWeights& weights) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < weights.w.size(); ++i) {
    const double w = weights.w(i);
    if (w > 0.0) acc += w * std::log(w);
  }
  return acc;
}

DualSolution solve_fenchel_minimax(const BalanceProblem& problem, const SolverOptions& opts) {
  DualSolution sol = solve_with(problem, opts, &solve_group_fenchel);
  throw_if_failed(sol);
  return sol;
}

FenchelInner fenchel_inner_max(double partition_sum) {
  if (!(partition_sum > 0.0)) {
    throw Error(ErrorCode::kArgument, "fenchel_inner_max: partition sum must be positive");
  }
  const double u = -std::log(partition_sum);
  return {u, u - 1.0};
}

std::pair<DualSolution, BalancingWeights> att_weights(const BalanceProblem& problem,
                                                       const SolverOptions& opts) {
  if (problem.estimand != Estimand::kAtt) {
    throw Error(ErrorCode::kArgument, "att_weights: problem estimand must be ATT");
  }
  DualSolution dual = solve_dual(problem, opts);
  BalancingWeights w = weights_from_dual(problem, dual);
  return {std::move(dual), std::move(w)};
}

Vector logistic_mle(const Matrix& phi, const Treatment& treatment, bool include_intercept,
                    const LogisticOptions& opts) {
  const Eigen::Index n = phi.rows();
  if (static_cast<std::size_t>(n) != treatment.size()) {
    throw Error(ErrorCode::kArgument, "logistic_mle: phi rows and treatment length differ");
  }
  const auto treated = std::count(treatment.begin(), treatment.end(), 1);
  if (treated == 0 || treated == n) {
    throw Error(ErrorCode::kArgument, "logistic_mle: both classes must be present");
  }
  const Eigen::Index d = phi.cols() + (include_intercept ? 1 : 0);
  Matrix design(n, d);
  design.leftCols(phi.cols()) = phi;
  if (include_intercept) design.col(d - 1).setOnes();
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = treatment[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0;

  // log(1 + exp(-m)) for margin m.
  auto softplus_neg = [](double margin) {
    return margin > 0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
  };
  auto loss = [&](const Vector& beta) {
    const Vector margin = y.cwiseProduct(design * beta);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) acc += softplus_neg(margin(i));
    return acc;
  };

  Vector beta = Vector::Zero(d);
  for (int it = 0; it < opts.max_iter; ++it) {
    const Vector margin = y.cwiseProduct(design * beta);
    Vector coeff(n);  // d loss / d eta_i
    Vector curvature(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p_wrong = 1.0 / (1.0 + std::exp(margin(i)));  // sigmoid(-margin)
      coeff(i) = -y(i) * p_wrong;
      curvature(i) = p_wrong * (1.0 - p_wrong);
    }
    const Vector grad = design.transpose() * coeff;
    Matrix hess = design.transpose() * curvature.asDiagonal() * design;
    hess.diagonal().array() += 1e-12 * std::max(hess.trace(), 1e-300);
    Vector direction = hess.ldlt().solve(grad);
    if (!direction.allFinite()) direction = grad;
    // Under separation the gradient vanishes while the Newton step stays O(1).
    const bool small_step = direction.lpNorm<Eigen::Infinity>() <= opts.step_tol;
    if (grad.lpNorm<Eigen::Infinity>() <= opts.tol && small_step) return beta;
    const double f = loss(beta);
    const double slope = grad.dot(direction);
    const bool roundoff = slope <= 100.0 * kEps * std::max(1.0, std::abs(f));
    double step = 1.0;
    while (!roundoff && step > 1e-12 && loss(beta - step * direction) > f - 1e-4 * step * slope) {
      step *= 0.5;
    }
    if (step <= 1e-12) {
      if (grad.lpNorm<Eigen::Infinity>() <= std::sqrt(opts.tol) && small_step) return beta;
      break;
    }
    beta -= step * direction;
    if (beta.lpNorm<Eigen::Infinity>() > opts.lambda_cap) {
      throw Error(ErrorCode::kSeparation,
                  "logistic_mle: |lambda| exceeded cap (classes appear perfectly separated)");
    }
  }
  throw Error(ErrorCode::kSeparation, "logistic_mle: Newton iterations did not converge");
}

namespace {

// Weights w (summing to one) are tilted along column values a so that the
// weighted mean of a becomes zero. Returns false if zero is outside the range
// of a.
bool project_onto_moment(Vector& w, const Vector& a) {
  const double lo = a.minCoeff();
  const double hi = a.maxCoeff();
  if (lo >= 0.0 || hi <= 0.0) return std::abs(w.dot(a)) == 0.0;
  // phi(theta) = log sum w exp(theta a) is convex; its derivative is the
  // tilted mean of a. Newton on the derivative, safeguarded by bisection.
  double theta = 0.0;
  double left = -std::numeric_limits<double>::infinity();
  double right = std::numeric_limits<double>::infinity();
  Vector tilted(w.size());
  for (int it = 0; it < 200; ++it) {
    const Vector log_terms = (w.array().log() + theta * a.array()).matrix();
    const double lse = logsumexp(log_terms);
    tilted = (log_terms.array() - lse).exp().matrix();
    const double mean = tilted.dot(a);
    const double var = tilted.dot(a.cwiseProduct(a)) - mean * mean;
    if (std::abs(mean) <= 1e-15 * (hi - lo)) break;
    if (mean > 0.0) right = theta; else left = theta;
    double next = var > 0.0 ? theta - mean / var : theta;
    const bool bracketed = std::isfinite(left) && std::isfinite(right);
    if (!(next > left && next < right)) {
      if (bracketed) next = 0.5 * (left + right);
      else next = mean > 0.0 ? theta - 1.0 : theta + 1.0;
    }
    if (next == theta) break;
    theta = next;
  }
  w = tilted / tilted.sum();
  return true;
}

}  // namespace

BalancingWeights solve_primal_oracle(const BalanceProblem& problem,
                                     const PrimalOracleOptions& opts) {
  problem.validate();
  if (problem.phi.rows() > 200) {
    throw Error(ErrorCode::kArgument, "solve_primal_oracle: intended for N <= 200");
  }
  const ActiveColumns cols = active_columns(problem.phi);
  const Vector target = target_moments(problem);
  BalancingWeights out;
  out.estimand = problem.estimand;
  out.w.resize(problem.phi.rows());
  const int groups = problem.estimand == Estimand::kAte ? 2 : 1;
  for (int t = 0; t < 2; ++t) {
    const auto rows = rows_of(problem.treatment, t);
    const Eigen::Index ng = static_cast<Eigen::Index>(rows.size());
    Vector w = Vector::Constant(ng, 1.0 / static_cast<double>(ng));
    if (t < groups) {
      std::vector<Vector> centered;
      for (std::size_t c = 0; c < cols.index.size(); ++c) {
        Vector a(ng);
        for (Eigen::Index r = 0; r < ng; ++r) {
          a(r) = (problem.phi(rows[r], cols.index[c]) - target(cols.index[c])) /
                 cols.sd(static_cast<Eigen::Index>(c));
        }
        centered.push_back(std::move(a));
      }
      bool feasible = false;
      for (int sweep = 0; sweep < opts.max_sweeps && !centered.empty(); ++sweep) {
        for (const Vector& a : centered) {
          if (!project_onto_moment(w, a)) {
            throw Error(ErrorCode::kInfeasible,
                        std::string("primal oracle: ") + group_name(t) +
                            " group cannot reach the balance target");
          }
        }
        double worst = 0.0;
        for (const Vector& a : centered) worst = std::max(worst, std::abs(w.dot(a)));
        if (worst <= opts.feasibility_tol) {
          feasible = true;
          break;
        }
      }
      if (!feasible && !centered.empty()) {
        throw Error(ErrorCode::kInfeasible, std::string("primal oracle: ") + group_name(t) +
                                                " group not feasible after sweep cap");
      }
    }
    for (Eigen::Index r = 0; r < ng; ++r) out.w(rows[r]) = w(r);
  }
  return out;
}

double dual_objective(const BalanceProblem& problem, const Vector& lambda0,
                      const Vector& lambda1) {
  const Vector target = target_moments(problem);
  double total = 0.0;
  const int groups = problem.estimand == Estimand::kAte ? 2 : 1;
  for (int t = 0; t < groups; ++t) {
    const Vector& lambda = t == 0 ? lambda0 : lambda1;
    const double s = sign_of(t);
    std::vector<double> eta;
    for (std::size_t i = 0; i < problem.treatment.size(); ++i) {
      if (problem.treatment[i] == t) {
        eta.push_back(s * problem.phi.row(static_cast<Eigen::Index>(i)).dot(lambda));
      }
    }
    total += logsumexp(eta) - s * lambda.dot(target);
  }
  return total;
}

Vector dual_gradient(const BalanceProblem& problem, const Vector& lambda0,
                     const Vector& lambda1) {
  const Eigen::Index m = problem.phi.cols();
  const Vector target = target_moments(problem);
  Vector grad = Vector::Zero(2 * m);
  DualSolution probe;
  probe.lambda0 = lambda0;
  probe.lambda1 = problem.estimand == Estimand::kAte ? lambda1 : Vector::Zero(m);
  const BalancingWeights w = weights_from_dual(problem, probe);
  const int groups = problem.estimand == Estimand::kAte ? 2 : 1;
  for (int t = 0; t < groups; ++t) {
    Vector mean = Vector::Zero(m);
    for (std::size_t i = 0; i < problem.treatment.size(); ++i) {
      if (problem.treatment[i] == t) {
        mean += w.w(static_cast<Eigen::Index>(i)) * problem.phi.row(static_cast<Eigen::Index>(i)).transpose();
      }
    }
    grad.segment(t * m, m) = sign_of(t) * (mean - target);
  }
  return grad;
}

double moment_residual(const BalanceProblem& problem, const BalancingWeights& weights) {
  const Eigen::Index m = problem.phi.cols();
  const Vector target = target_moments(problem);
  double worst = 0.0;
  const int groups = problem.estimand == Estimand::kAte ? 2 : 1;
  for (int t = 0; t < groups; ++t) {
    Vector mean = Vector::Zero(m);
    for (std::size_t i = 0; i < problem.treatment.size(); ++i) {
      if (problem.treatment[i] == t) {
        mean += weights.w(static_cast<Eigen::Index>(i)) *
                problem.phi.row(static_cast<Eigen::Index>(i)).transpose();
      }
    }
    worst = std::max(worst, (mean - target).lpNorm<Eigen::Infinity>());
  }
  return worst;
}

WeightDiagnostics weight_diagnostics(const BalancingWeights& weights,
                                     const Treatment& treatment) {
  WeightDiagnostics d;
  for (std::size_t i = 0; i < treatment.size(); ++i) {
    const auto t = static_cast<std::size_t>(treatment[i]);
    const double w = weights.w(static_cast<Eigen::Index>(i));
    d.sum[t] += w;
    d.max_weight[t] = std::max(d.max_weight[t], w);
  }
  for (std::size_t t = 0; t < 2; ++t) {
    d.effective_size[t] = d.max_weight[t] > 0.0 ? d.sum[t] / d.max_weight[t] : 0.0;
  }
  return d;
}

}  // namespace drrl
