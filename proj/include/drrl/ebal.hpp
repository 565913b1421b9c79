// Entropy balancing on a fixed representation matrix.
//
// For the ATE each treatment group is tilted so that its weighted mean
// representation equals the full-sample mean; for the ATT only the control
// group is tilted, towards the treated mean. Group t uses the sign
// s_0 = +1, s_1 = -1 in both the dual objective
//
//   L_t(lambda) = log sum_{T_i = t} exp(s_t <lambda, phi_i>) - s_t <lambda, target>
//
// and the softmax weights, so lambda from solve_dual plugs straight into
// weights_from_dual.
#ifndef DRRL_EBAL_HPP_
#define DRRL_EBAL_HPP_

#include <array>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "drrl/numerics.hpp"

namespace drrl {

enum class Estimand { kAte, kAtt };

std::string_view estimand_name(Estimand estimand);
Estimand parse_estimand(std::string_view text);

struct BalanceProblem {
  Matrix phi;  // N x m
  Treatment treatment;
  Estimand estimand = Estimand::kAte;

  std::size_t n_treated() const;
  std::size_t n_control() const { return treatment.size() - n_treated(); }
  // Throws kArgument unless both groups are present, shapes agree and every
  // entry is finite.
  void validate() const;
};

struct SolverOptions {
  double tol = 1e-8;       // gradient infinity norm, standardized coordinates
  int max_iter = 500;
  double lambda_cap = 50.0;  // on standardized representations
  // A Newton step must also have shrunk below this before convergence is
  // declared; near the boundary of the convex hull the gradient vanishes
  // while the step stays O(1).
  double step_tol = 1e-6;
  Eigen::Index newton_max_dim = 200;  // gradient descent above this

  // Fenchel mini-max solver.
  double fenchel_tol = 1e-7;
  int fenchel_max_iter = 50000;
};

struct DualSolution {
  Vector lambda0;
  Vector lambda1;  // all zeros for the ATT
  bool converged = false;
  int iterations = 0;
  double grad_norm = 0.0;
  double constraint_violation = 0.0;
  std::string failure;  // empty when converged
  // Objective value at every accepted iterate, per group.
  std::array<std::vector<double>, 2> objective_trace;
};

struct BalancingWeights {
  Vector w;
  Estimand estimand = Estimand::kAte;
};

// Solves the dual for problem.estimand. Throws kInfeasible naming the group
// when lambda exceeds the cap or the iteration budget runs out.
DualSolution solve_dual(const BalanceProblem& problem, const SolverOptions& opts = {});

// Same as solve_dual but reports failure through DualSolution::failure and
// converged = false, returning the last iterate.
DualSolution try_solve_dual(const BalanceProblem& problem, const SolverOptions& opts = {});

BalancingWeights weights_from_dual(const BalanceProblem& problem, const DualSolution& dual);

// sum_i w_i log w_i over all units.
double entropy_stat(const BalancingWeights& weights);

// Mini-max form: the log-partition term is replaced by its Fenchel pair, the
// inner variable u_t is maximized in closed form and lambda_t takes gradient
// steps with u_t held fixed.
DualSolution solve_fenchel_minimax(const BalanceProblem& problem,
                                   const SolverOptions& opts = {});

struct FenchelInner {
  double u_star;
  double value;
};
// argmax_u { u - exp(u) * partition_sum } and its value.
FenchelInner fenchel_inner_max(double partition_sum);

std::pair<DualSolution, BalancingWeights> att_weights(const BalanceProblem& problem,
                                                       const SolverOptions& opts = {});

struct LogisticOptions {
  double tol = 1e-8;
  int max_iter = 100;
  double lambda_cap = 100.0;
  double step_tol = 1e-6;
};

// Newton minimizer of sum_i log(1 + exp(-(2T_i - 1) <lambda, phi_i>)). With
// include_intercept the returned vector has m + 1 entries, intercept last.
Vector logistic_mle(const Matrix& phi, const Treatment& treatment, bool include_intercept,
                    const LogisticOptions& opts = {});

struct PrimalOracleOptions {
  double feasibility_tol = 1e-10;
  int max_sweeps = 200000;
};

// Test-scale primal solver: cyclic KL projections of the uniform weights onto
// one moment constraint at a time, renormalizing after every projection.
BalancingWeights solve_primal_oracle(const BalanceProblem& problem,
                                     const PrimalOracleOptions& opts = {});

// Dual objective and gradient in raw coordinates. The gradient stacks the
// lambda0 block over the lambda1 block (zero for the ATT).
double dual_objective(const BalanceProblem& problem, const Vector& lambda0,
                      const Vector& lambda1);
Vector dual_gradient(const BalanceProblem& problem, const Vector& lambda0,
                     const Vector& lambda1);

// Largest absolute moment residual of the weights against the targets.
double moment_residual(const BalanceProblem& problem, const BalancingWeights& weights);

struct WeightDiagnostics {
  std::array<double, 2> sum{0.0, 0.0};
  std::array<double, 2> max_weight{0.0, 0.0};
  std::array<double, 2> effective_size{0.0, 0.0};  // sum w / max w
};
WeightDiagnostics weight_diagnostics(const BalancingWeights& weights,
                                     const Treatment& treatment);

}  // namespace drrl

#endif  // DRRL_EBAL_HPP_
