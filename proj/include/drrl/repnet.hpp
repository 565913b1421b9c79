// ReLU representation network with two linear outcome heads, the balanced
// training loss and the training loop.
#ifndef DRRL_REPNET_HPP_
#define DRRL_REPNET_HPP_

#include <string>
#include <string_view>
#include <vector>

#include "drrl/data.hpp"
#include "drrl/ebal.hpp"
#include "drrl/numerics.hpp"

namespace drrl {

enum class OutcomeType { kContinuous, kBinary };

std::string_view outcome_type_name(OutcomeType type);
OutcomeType parse_outcome_type(std::string_view text);

struct NetworkConfig {
  Eigen::Index input_dim = 0;
  std::vector<Eigen::Index> layer_sizes;  // last entry is the representation width m
  OutcomeType outcome_type = OutcomeType::kContinuous;

  Eigen::Index rep_dim() const { return layer_sizes.empty() ? 0 : layer_sizes.back(); }
  void validate() const;
};

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;
};

struct ModelParams {
  std::vector<DenseLayer> layers;
  Vector gamma0;
  Vector gamma1;
  double b0 = 0.0;
  double b1 = 0.0;

  Eigen::Index size() const;
  // Layer weights then biases in layer order, then gamma0, gamma1, b0, b1.
  Vector flatten() const;
  void assign(const Vector& flat);
  static ModelParams zeros_like(const NetworkConfig& config);
};

// Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases and heads.
ModelParams init_params(const NetworkConfig& config, RngStream& rng);

struct ForwardResult {
  Matrix phi;
  Vector f0;  // probabilities for binary outcomes
  Vector f1;
};

ForwardResult forward(const NetworkConfig& config, const ModelParams& params, const Matrix& x);

enum class Regularizer { kEntropy, kMmd };
enum class Optimizer { kSgd, kAdam };

struct TrainingHyper {
  double kappa = 1.0;
  std::size_t batch_size = 100;
  double learning_rate = 1e-3;
  double lambda_learning_rate = 0.0;  // 0 uses learning_rate
  std::size_t iterations = 1000;
  std::size_t inner_steps = 1;
  bool full_dual_per_batch = false;
  Estimand estimand = Estimand::kAte;
  Optimizer optimizer = Optimizer::kSgd;
  Regularizer regularizer = Regularizer::kEntropy;
  double mmd_bandwidth = 0.0;  // 0 selects the median heuristic per batch
  std::uint64_t seed = 0;

  void validate() const;
};

struct LossResult {
  double loss = 0.0;
  double prediction_loss = 0.0;
  double regularizer = 0.0;  // sum w log w, or MMD^2
  ModelParams grads;
};

// Batch loss: sum of squared errors (or cross-entropy) on factual outcomes
// plus kappa times the regularizer. The entropy term uses the softmax weights
// at the given lambda, held fixed.
LossResult loss_and_grad(const NetworkConfig& config, const ModelParams& params, const Matrix& x,
                         const Treatment& t, const Vector& y, const DualSolution& lambda,
                         const TrainingHyper& hyper);

struct TrainedModel {
  NetworkConfig config;
  ModelParams params;
  Estimand estimand = Estimand::kAte;
  Standardization x_scaling;
  double y_mean = 0.0;  // continuous outcomes are fit on (y - y_mean) / y_sd
  double y_sd = 1.0;
  DualSolution dual;  // full training set, representation coordinates
  BalancingWeights weights;
  bool balance_converged = false;
  std::vector<double> loss_trace;
};

TrainedModel train(const Dataset& data, const NetworkConfig& config, const TrainingHyper& hyper,
                   RngStream& rng);

struct OutcomePredictions {
  Matrix phi;
  Vector f0;
  Vector f1;
};

// Heads on the outcome scale of the training data.
OutcomePredictions predict_outcomes(const TrainedModel& model, const Matrix& x);
Vector predict_ite(const TrainedModel& model, const Matrix& x);

}  // namespace drrl

#endif  // DRRL_REPNET_HPP_
