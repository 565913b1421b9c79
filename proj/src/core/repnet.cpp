#include "drrl/repnet.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "drrl/baselines.hpp"

namespace drrl {

std::string_view outcome_type_name(OutcomeType type) {
  return type == OutcomeType::kContinuous ? "cont" : "bin";
}

OutcomeType parse_outcome_type(std::string_view text) {
  if (text == "cont" || text == "continuous") return OutcomeType::kContinuous;
  if (text == "bin" || text == "binary") return OutcomeType::kBinary;
  throw Error(ErrorCode::kArgument, "unknown outcome type '" + std::string(text) + "'");
}

void NetworkConfig::validate() const {
  if (input_dim < 1) throw Error(ErrorCode::kArgument, "network: input_dim must be >= 1");
  if (layer_sizes.empty()) throw Error(ErrorCode::kArgument, "network: at least one layer is required");
  for (Eigen::Index s : layer_sizes) {
    if (s < 1) throw Error(ErrorCode::kArgument, "network: layer sizes must be >= 1");
  }
}

void TrainingHyper::validate() const {
  if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw Error(ErrorCode::kArgument, "hyper: kappa must be >= 0");
  if (batch_size < 4) throw Error(ErrorCode::kArgument, "hyper: batch size must be >= 4");
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::kArgument, "hyper: learning rate must be > 0");
  if (!(lambda_learning_rate >= 0.0)) {
    throw Error(ErrorCode::kArgument, "hyper: lambda learning rate must be >= 0");
  }
  if (!(mmd_bandwidth >= 0.0)) throw Error(ErrorCode::kArgument, "hyper: MMD bandwidth must be >= 0");
}

Eigen::Index ModelParams::size() const {
  Eigen::Index total = gamma0.size() + gamma1.size() + 2;
  for (const auto& layer : layers) total += layer.weight.size() + layer.bias.size();
  return total;
}

Vector ModelParams::flatten() const {
  Vector flat(size());
  Eigen::Index pos = 0;
  auto put = [&](const double* data, Eigen::Index n) {
    flat.segment(pos, n) = Eigen::Map<const Vector>(data, n);
    pos += n;
  };
  for (const auto& layer : layers) {
    put(layer.weight.data(), layer.weight.size());
    put(layer.bias.data(), layer.bias.size());
  }
  put(gamma0.data(), gamma0.size());
  put(gamma1.data(), gamma1.size());
  flat(pos++) = b0;
  flat(pos++) = b1;
  return flat;
}

void ModelParams::assign(const Vector& flat) {
  if (flat.size() != size()) throw Error(ErrorCode::kArgument, "model params: flat size mismatch");
  Eigen::Index pos = 0;
  auto get = [&](double* data, Eigen::Index n) {
    Eigen::Map<Vector>(data, n) = flat.segment(pos, n);
    pos += n;
  };
  for (auto& layer : layers) {
    get(layer.weight.data(), layer.weight.size());
    get(layer.bias.data(), layer.bias.size());
  }
  get(gamma0.data(), gamma0.size());
  get(gamma1.data(), gamma1.size());
  b0 = flat(pos++);
  b1 = flat(pos++);
}

ModelParams ModelParams::zeros_like(const NetworkConfig& config) {
  ModelParams params;
  Eigen::Index fan_in = config.input_dim;
  for (Eigen::Index width : config.layer_sizes) {
    params.layers.push_back({Matrix::Zero(width, fan_in), Vector::Zero(width)});
    fan_in = width;
  }
  params.gamma0 = Vector::Zero(config.rep_dim());
  params.gamma1 = Vector::Zero(config.rep_dim());
  return params;
}

ModelParams init_params(const NetworkConfig& config, RngStream& rng) {
  config.validate();
  ModelParams params = ModelParams::zeros_like(config);
  for (auto& layer : params.layers) {
    const double limit =
        std::sqrt(6.0 / static_cast<double>(layer.weight.rows() + layer.weight.cols()));
    for (Eigen::Index k = 0; k < layer.weight.size(); ++k) {
      layer.weight.data()[k] = limit * (2.0 * rng.uniform() - 1.0);
    }
  }
  return params;
}

namespace {

void check_shapes(const NetworkConfig& config, const ModelParams& params, const Matrix& x) {
  if (x.cols() != config.input_dim) {
    throw Error(ErrorCode::kArgument, "forward: input has " + std::to_string(x.cols()) +
                                          " columns, network expects " +
                                          std::to_string(config.input_dim));
  }
  if (params.layers.size() != config.layer_sizes.size()) {
    throw Error(ErrorCode::kArgument, "forward: parameter layer count differs from config");
  }
  Eigen::Index fan_in = config.input_dim;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    if (layer.weight.rows() != config.layer_sizes[l] || layer.weight.cols() != fan_in ||
        layer.bias.size() != config.layer_sizes[l]) {
      throw Error(ErrorCode::kArgument, "forward: layer " + std::to_string(l) + " has wrong shape");
    }
    fan_in = config.layer_sizes[l];
  }
  if (params.gamma0.size() != fan_in || params.gamma1.size() != fan_in) {
    throw Error(ErrorCode::kArgument, "forward: head length differs from representation width");
  }
}

// acts[0] = x, acts[l] = relu(acts[l-1] W_l' + b_l').
std::vector<Matrix> run_layers(const ModelParams& params, const Matrix& x) {
  std::vector<Matrix> acts;
  acts.reserve(params.layers.size() + 1);
  acts.push_back(x);
  for (const auto& layer : params.layers) {
    Matrix z = acts.back() * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    acts.push_back(z.cwiseMax(0.0));
  }
  return acts;
}

double sigmoid(double v) {
  return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
}

double softplus(double v) {
  return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

}  // namespace

ForwardResult forward(const NetworkConfig& config, const ModelParams& params, const Matrix& x) {
  check_shapes(config, params, x);
  std::vector<Matrix> acts = run_layers(params, x);
  ForwardResult out;
  out.phi = std::move(acts.back());
  out.f0 = (out.phi * params.gamma0).array() + params.b0;
  out.f1 = (out.phi * params.gamma1).array() + params.b1;
  if (config.outcome_type == OutcomeType::kBinary) {
    out.f0 = out.f0.unaryExpr(&sigmoid);
    out.f1 = out.f1.unaryExpr(&sigmoid);
  }
  return out;
}

LossResult loss_and_grad(const NetworkConfig& config, const ModelParams& params, const Matrix& x,
                         const Treatment& t, const Vector& y, const DualSolution& lambda,
                         const TrainingHyper& hyper) {
  check_shapes(config, params, x);
  const Eigen::Index n = x.rows();
  if (static_cast<Eigen::Index>(t.size()) != n || y.size() != n) {
    throw Error(ErrorCode::kArgument, "loss_and_grad: x, t and y lengths differ");
  }
  const auto treated = std::count(t.begin(), t.end(), 1);
  if (treated == 0 || treated == n) {
    throw Error(ErrorCode::kDegenerateBatch, "loss_and_grad: batch contains a single treatment group");
  }
  const Eigen::Index m = config.rep_dim();
  const bool binary = config.outcome_type == OutcomeType::kBinary;

  std::vector<Matrix> acts = run_layers(params, x);
  const Matrix& phi = acts.back();

  LossResult res;
  res.grads = ModelParams::zeros_like(config);
  Matrix grad_phi(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool is_treated = t[static_cast<std::size_t>(i)] == 1;
    const Vector& gamma = is_treated ? params.gamma1 : params.gamma0;
    const double logit = phi.row(i).dot(gamma) + (is_treated ? params.b1 : params.b0);
    double dlogit;
    if (binary) {
      res.prediction_loss += softplus(logit) - y(i) * logit;
      dlogit = sigmoid(logit) - y(i);
    } else {
      const double r = logit - y(i);
      res.prediction_loss += r * r;
      dlogit = 2.0 * r;
    }
    grad_phi.row(i) = dlogit * gamma.transpose();
    if (is_treated) {
      res.grads.gamma1 += dlogit * phi.row(i).transpose();
      res.grads.b1 += dlogit;
    } else {
      res.grads.gamma0 += dlogit * phi.row(i).transpose();
      res.grads.b0 += dlogit;
    }
  }

  if (hyper.kappa != 0.0) {
    if (hyper.regularizer == Regularizer::kEntropy) {
      if (lambda.lambda0.size() != m ||
          (hyper.estimand == Estimand::kAte && lambda.lambda1.size() != m)) {
        throw Error(ErrorCode::kArgument, "loss_and_grad: lambda length differs from rep_dim");
      }
      BalanceProblem problem{phi, t, hyper.estimand};
      const BalancingWeights w = weights_from_dual(problem, lambda);
      res.regularizer = entropy_stat(w);
      std::array<double, 2> group_entropy{0.0, 0.0};
      for (Eigen::Index i = 0; i < n; ++i) {
        const double wi = w.w(i);
        if (wi > 0.0) group_entropy[static_cast<std::size_t>(t[static_cast<std::size_t>(i)])] += wi * std::log(wi);
      }
      for (Eigen::Index j = 0; j < n; ++j) {
        const int tj = t[static_cast<std::size_t>(j)];
        if (hyper.estimand == Estimand::kAtt && tj == 1) continue;  // fixed weights
        const double wj = w.w(j);
        if (!(wj > 0.0)) continue;
        const double d_eta = wj * (std::log(wj) - group_entropy[static_cast<std::size_t>(tj)]);
        const Vector& lam = tj == 1 ? lambda.lambda1 : lambda.lambda0;
        grad_phi.row(j) += hyper.kappa * d_eta * -(2.0 * tj - 1.0) * lam.transpose();
      }
    } else {
      const double h = hyper.mmd_bandwidth > 0.0 ? hyper.mmd_bandwidth : median_heuristic_bandwidth(phi);
      res.regularizer = mmd_rbf(phi, t, h);
      grad_phi += hyper.kappa * mmd_rbf_grad(phi, t, h);
    }
  }
  res.loss = res.prediction_loss + hyper.kappa * res.regularizer;

  Matrix delta = grad_phi.cwiseProduct((phi.array() > 0.0).cast<double>().matrix());
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const Matrix& input = acts[l];
    res.grads.layers[l].weight = delta.transpose() * input;
    res.grads.layers[l].bias = delta.colwise().sum().transpose();
    if (l > 0) {
      delta = (delta * params.layers[l].weight).cwiseProduct((input.array() > 0.0).cast<double>().matrix());
    }
  }
  return res;
}

namespace {

std::vector<std::size_t> sample_batch(std::size_t n, std::size_t b, RngStream& rng,
                                      std::vector<std::size_t>& scratch) {
  if (b >= n) {
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    return all;
  }
  // Partial Fisher-Yates on a persistent index array.
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t j = i + rng.uniform_index(n - i);
    std::swap(scratch[i], scratch[j]);
  }
  std::vector<std::size_t> batch(scratch.begin(), scratch.begin() + static_cast<long>(b));
  std::sort(batch.begin(), batch.end());
  return batch;
}

std::string trace_tail(const std::vector<double>& trace) {
  std::ostringstream out;
  const std::size_t start = trace.size() > 10 ? trace.size() - 10 : 0;
  out << "[";
  for (std::size_t i = start; i < trace.size(); ++i) out << (i > start ? ", " : "") << trace[i];
  out << "]";
  return out.str();
}

}  // namespace

TrainedModel train(const Dataset& data, const NetworkConfig& config, const TrainingHyper& hyper,
                   RngStream& rng) {
  config.validate();
  hyper.validate();
  data.validate();
  if (data.dim() != config.input_dim) {
    throw Error(ErrorCode::kArgument, "train: dataset has " + std::to_string(data.dim()) +
                                          " covariates, network expects " +
                                          std::to_string(config.input_dim));
  }
  const std::size_t treated = data.n_treated();
  if (treated == 0 || treated == data.size()) {
    throw Error(ErrorCode::kArgument, "train: both treatment groups must be present");
  }

  TrainedModel model;
  model.config = config;
  model.estimand = hyper.estimand;
  const StandardizedMatrix xs = standardize_columns(data.x);
  model.x_scaling = xs.params;
  Vector y = data.y;
  if (config.outcome_type == OutcomeType::kContinuous) {
    const double n = static_cast<double>(y.size());
    model.y_mean = y.sum() / n;
    const double sd = std::sqrt((y.array() - model.y_mean).square().sum() / n);
    model.y_sd = sd > 1e-12 ? sd : 1.0;
    y = (y.array() - model.y_mean) / model.y_sd;
  } else {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      if (y(i) != 0.0 && y(i) != 1.0) throw Error(ErrorCode::kArgument, "train: binary outcomes must be 0 or 1");
    }
  }

  RngStream init_rng = rng.split(0);
  RngStream batch_rng = rng.split(1);
  model.params = init_params(config, init_rng);
  const Eigen::Index m = config.rep_dim();
  DualSolution lambda;
  lambda.lambda0 = Vector::Zero(m);
  lambda.lambda1 = Vector::Zero(m);
  const double lambda_rate = hyper.lambda_learning_rate > 0.0 ? hyper.lambda_learning_rate : hyper.learning_rate;
  const bool use_entropy = hyper.kappa != 0.0 && hyper.regularizer == Regularizer::kEntropy;

  const std::size_t n = data.size();
  std::vector<std::size_t> scratch(n);
  for (std::size_t i = 0; i < n; ++i) scratch[i] = i;

  Vector adam_m, adam_v;
  if (hyper.optimizer == Optimizer::kAdam) {
    adam_m = Vector::Zero(model.params.size());
    adam_v = Vector::Zero(model.params.size());
  }

  Matrix xb;
  Treatment tb;
  Vector yb;
  for (std::size_t k = 0; k < hyper.iterations; ++k) {
    std::vector<std::size_t> batch;
    for (int attempt = 0;; ++attempt) {
      batch = sample_batch(n, hyper.batch_size, batch_rng, scratch);
      std::size_t bt = 0;
      for (std::size_t i : batch) bt += static_cast<std::size_t>(data.t[i]);
      if (bt > 0 && bt < batch.size()) break;
      if (attempt + 1 >= 100) {
        throw Error(ErrorCode::kDegenerateBatch,
                    "train: 100 consecutive batches contained a single treatment group at iteration " +
                        std::to_string(k));
      }
    }
    const auto b = static_cast<Eigen::Index>(batch.size());
    xb.resize(b, data.dim());
    yb.resize(b);
    tb.resize(batch.size());
    for (Eigen::Index r = 0; r < b; ++r) {
      const std::size_t src = batch[static_cast<std::size_t>(r)];
      xb.row(r) = xs.values.row(static_cast<Eigen::Index>(src));
      yb(r) = y(static_cast<Eigen::Index>(src));
      tb[static_cast<std::size_t>(r)] = data.t[src];
    }

    if (use_entropy) {
      BalanceProblem problem{run_layers(model.params, xb).back(), tb, hyper.estimand};
      if (hyper.full_dual_per_batch) {
        const DualSolution solved = try_solve_dual(problem);
        lambda.lambda0 = solved.lambda0;
        lambda.lambda1 = solved.lambda1;
      } else {
        for (std::size_t s = 0; s < hyper.inner_steps; ++s) {
          const Vector g = dual_gradient(problem, lambda.lambda0, lambda.lambda1);
          lambda.lambda0 -= lambda_rate * g.head(m);
          if (hyper.estimand == Estimand::kAte) lambda.lambda1 -= lambda_rate * g.tail(m);
        }
      }
    }

    LossResult res = loss_and_grad(config, model.params, xb, tb, yb, lambda, hyper);
    model.loss_trace.push_back(res.loss);
    Vector grad = res.grads.flatten();
    if (!std::isfinite(res.loss) || !grad.allFinite() || !lambda.lambda0.allFinite() ||
        !lambda.lambda1.allFinite()) {
      throw Error(ErrorCode::kTrainingDiverged, "train: non-finite loss at iteration " +
                                                    std::to_string(k) + ", recent losses " +
                                                    trace_tail(model.loss_trace));
    }
    Vector theta = model.params.flatten();
    if (hyper.optimizer == Optimizer::kSgd) {
      theta -= hyper.learning_rate * grad;
    } else {
      constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
      adam_m = beta1 * adam_m + (1.0 - beta1) * grad;
      adam_v = beta2 * adam_v + (1.0 - beta2) * grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(k + 1));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(k + 1));
      theta.array() -= hyper.learning_rate * (adam_m.array() / c1) /
                       ((adam_v.array() / c2).sqrt() + eps);
    }
    if (!theta.allFinite()) {
      throw Error(ErrorCode::kTrainingDiverged, "train: non-finite parameters after iteration " +
                                                    std::to_string(k) + ", recent losses " +
                                                    trace_tail(model.loss_trace));
    }
    model.params.assign(theta);
  }

  BalanceProblem full{run_layers(model.params, xs.values).back(), data.t, hyper.estimand};
  model.dual = try_solve_dual(full);
  model.weights = weights_from_dual(full, model.dual);
  model.balance_converged = model.dual.converged;
  return model;
}

OutcomePredictions predict_outcomes(const TrainedModel& model, const Matrix& x) {
  ForwardResult fr = forward(model.config, model.params, model.x_scaling.apply(x));
  OutcomePredictions out;
  out.phi = std::move(fr.phi);
  if (model.config.outcome_type == OutcomeType::kContinuous) {
    out.f0 = (fr.f0.array() * model.y_sd + model.y_mean).matrix();
    out.f1 = (fr.f1.array() * model.y_sd + model.y_mean).matrix();
  } else {
    out.f0 = std::move(fr.f0);
    out.f1 = std::move(fr.f1);
  }
  return out;
}

Vector predict_ite(const TrainedModel& model, const Matrix& x) {
  const OutcomePredictions pred = predict_outcomes(model, x);
  return pred.f1 - pred.f0;
}

}  // namespace drrl
