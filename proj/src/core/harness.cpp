#include "drrl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

namespace drrl {

NetworkConfig ArchitectureSpec::build(Eigen::Index input_dim) const {
  if (layers < 1) throw Error(ErrorCode::kArgument, "architecture: layers must be >= 1");
  NetworkConfig config;
  config.input_dim = input_dim;
  config.outcome_type = outcome_type;
  for (std::size_t l = 0; l + 1 < layers; ++l) config.layer_sizes.push_back(layer_dim);
  config.layer_sizes.push_back(rep_dim > 0 ? rep_dim : layer_dim);
  config.validate();
  return config;
}

EvaluationResult evaluate_model(const TrainedModel& model, const Dataset& data,
                                const EvaluationOptions& options) {
  data.validate();
  EvaluationResult out;
  out.estimand = model.estimand;
  const OutcomePredictions pred = predict_outcomes(model, data.x);
  out.ite = pred.f1 - pred.f0;

  const std::size_t treated = data.n_treated();
  if (model.estimand == Estimand::kAte) {
    out.vanilla = out.ite.mean();
  } else {
    if (treated == 0) throw Error(ErrorCode::kEvaluation, "evaluate: ATT needs treated units");
    double sum = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data.t[i] == 1) sum += out.ite(static_cast<Eigen::Index>(i));
    }
    out.vanilla = sum / static_cast<double>(treated);
  }
  out.tau_hat = out.vanilla;

  if (treated == 0 || treated == data.size()) {
    out.balance_fallback = true;
    out.balance_failure = "evaluation data contains a single treatment group";
  } else {
    BalanceProblem problem{pred.phi, data.t, model.estimand};
    const DualSolution dual = try_solve_dual(problem);
    if (!dual.converged) {
      out.balance_fallback = true;
      out.balance_failure = dual.failure;
    } else {
      const BalancingWeights w = weights_from_dual(problem, dual);
      out.entropy_stat = entropy_stat(w);
      if (model.estimand == Estimand::kAte) {
        out.dr = dr_ate(pred.f0, pred.f1, w, data);
        out.tau_hat = out.dr->point;
      } else {
        out.att_weighted = att_eb(w, data);
        out.tau_hat = *out.att_weighted;
      }
    }
  }

  const bool policy_ok = data.has_truth() || data.randomized.has_value();
  if (data.has_truth() || (model.estimand == Estimand::kAtt && data.randomized)) {
    out.metrics = compute_metrics(out.ite, out.tau_hat, data, model.estimand);
    out.has_metrics = true;
  } else {
    out.metrics.estimand = model.estimand;
    out.metrics.tau_hat = out.tau_hat;
  }
  out.metrics.entropy_stat = out.entropy_stat;
  if (policy_ok) {
    out.policy_curve = policy_risk_curve(out.ite, data, options.deltas);
    const PolicyPoint at_zero = policy_risk_curve(out.ite, data, {0.0}).front();
    out.metrics.policy_risk = at_zero.risk;
    out.metrics.inclusion_rate = at_zero.inclusion_rate;
  }
  if (options.sigma_e && data.has_truth()) {
    out.bounds = bound_diagnostics(pred.f0, pred.f1, data, *options.sigma_e);
  }
  return out;
}

std::size_t SearchGrid::combinations() const {
  std::size_t total = 1;
  auto mul = [&total](std::size_t n) {
    if (n > 0) total *= n;
  };
  mul(kappa.size());
  mul(layers.size());
  mul(layer_dim.size());
  mul(rep_dim.size());
  mul(batch.size());
  mul(lr.size());
  mul(lambda_lr.size());
  mul(iters.size());
  mul(inner_steps.size());
  mul(optimizer.size());
  mul(full_dual.size());
  return total;
}

SearchGrid default_search_grid() {
  SearchGrid grid;
  for (int k = -10; k <= 6; ++k) grid.kappa.push_back(std::pow(10.0, k / 2.0));
  grid.layers = {1, 2, 3, 4, 5};
  grid.layer_dim = {20, 50, 100, 200};
  grid.batch = {100, 200, 500};
  return grid;
}

namespace {

bool policy_scorable(const TrainedModel& model, const Dataset& validation) {
  return model.config.outcome_type == OutcomeType::kBinary &&
         (validation.has_truth() || validation.randomized.has_value());
}

double score_with(const TrainedModel& model, const Dataset& validation, const Vector* surrogate,
                  std::string* criterion) {
  if (policy_scorable(model, validation)) {
    if (criterion) *criterion = "policy-risk";
    const Vector ite = predict_ite(model, validation.x);
    const PolicyPoint point = policy_risk_curve(ite, validation, {0.0}).front();
    if (!point.risk) throw Error(ErrorCode::kEvaluation, "validation policy risk is undefined at delta 0");
    return *point.risk;
  }
  if (criterion) *criterion = "surrogate-pehe";
  Vector owned;
  if (!surrogate) {
    owned = nn_match_ite(validation);
    surrogate = &owned;
  }
  const Vector ite = predict_ite(model, validation.x);
  return (ite - *surrogate).squaredNorm() / static_cast<double>(ite.size());
}

template <typename T>
T pick(const std::vector<T>& values, RngStream& rng) {
  return values[rng.uniform_index(values.size())];
}

TrainSettings sample_settings(const TrainSettings& base, const SearchGrid& grid, RngStream& rng) {
  TrainSettings s = base;
  if (!grid.kappa.empty()) s.hyper.kappa = pick(grid.kappa, rng);
  if (!grid.layers.empty()) s.arch.layers = pick(grid.layers, rng);
  if (!grid.layer_dim.empty()) s.arch.layer_dim = pick(grid.layer_dim, rng);
  if (!grid.rep_dim.empty()) s.arch.rep_dim = pick(grid.rep_dim, rng);
  if (!grid.batch.empty()) s.hyper.batch_size = pick(grid.batch, rng);
  if (!grid.lr.empty()) s.hyper.learning_rate = pick(grid.lr, rng);
  if (!grid.lambda_lr.empty()) s.hyper.lambda_learning_rate = pick(grid.lambda_lr, rng);
  if (!grid.iters.empty()) s.hyper.iterations = pick(grid.iters, rng);
  if (!grid.inner_steps.empty()) s.hyper.inner_steps = pick(grid.inner_steps, rng);
  if (!grid.optimizer.empty()) s.hyper.optimizer = pick(grid.optimizer, rng);
  if (!grid.full_dual.empty()) s.hyper.full_dual_per_batch = pick(grid.full_dual, rng);
  return s;
}

}  // namespace

double validation_score(const TrainedModel& model, const Dataset& validation, std::string* criterion) {
  return score_with(model, validation, nullptr, criterion);
}

void parallel_for(std::size_t count, std::size_t workers,
                  const std::function<void(std::size_t)>& task) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& thread : pool) thread.join();
  if (first_error) std::rethrow_exception(first_error);
}

SearchResult run_search(const Dataset& train_data, const Dataset& validation,
                        const TrainSettings& base, const SearchGrid& grid, std::size_t n_samples,
                        const RngStream& rng, std::size_t workers) {
  if (n_samples == 0) throw Error(ErrorCode::kArgument, "search: n_samples must be >= 1");
  const std::size_t val_treated = validation.n_treated();
  if (val_treated == 0 || val_treated == validation.size()) {
    throw Error(ErrorCode::kArgument, "search: validation split must contain both treatment groups");
  }
  SearchResult result;
  RngStream sampler = rng.split(0);
  for (std::size_t d = 0; d < n_samples; ++d) {
    DrawRecord record;
    record.index = d;
    record.settings = sample_settings(base, grid, sampler);
    result.draws.push_back(std::move(record));
  }

  Vector surrogate;
  NetworkConfig probe = base.arch.build(train_data.dim());
  TrainedModel probe_model;
  probe_model.config = probe;
  const bool policy = policy_scorable(probe_model, validation);
  result.criterion = policy ? "policy-risk" : "surrogate-pehe";
  if (!policy) surrogate = nn_match_ite(validation);

  std::vector<std::optional<TrainedModel>> models(n_samples);
  parallel_for(n_samples, workers, [&](std::size_t d) {
    DrawRecord& record = result.draws[d];
    try {
      RngStream draw_rng = rng.split(1000 + d);
      TrainedModel model = train(train_data, record.settings.arch.build(train_data.dim()),
                                 record.settings.hyper, draw_rng);
      const double score = score_with(model, validation, policy ? nullptr : &surrogate, nullptr);
      if (!std::isfinite(score)) throw Error(ErrorCode::kEvaluation, "non-finite validation score");
      record.score = score;
      models[d] = std::move(model);
    } catch (const std::exception& e) {
      record.error = e.what();
    }
  });

  std::optional<std::size_t> best;
  for (std::size_t d = 0; d < n_samples; ++d) {
    const auto& score = result.draws[d].score;
    if (score && (!best || *score < *result.draws[*best].score)) best = d;
  }
  if (!best) {
    std::ostringstream msg;
    msg << "search: all " << n_samples << " draws failed";
    for (const auto& draw : result.draws) msg << "; draw " << draw.index << ": " << draw.error;
    throw Error(ErrorCode::kSearchFailed, msg.str());
  }
  result.best = *best;
  result.model = std::move(*models[*best]);
  return result;
}

ReplicateResult run_replicate(const ReplicateConfig& config) {
  if (!config.hdd && config.data_files.empty()) {
    throw Error(ErrorCode::kArgument, "replicate: need an HDD configuration or data files");
  }
  if (config.hdd) config.hdd->validate();
  const std::size_t count =
      config.hdd ? config.reps : std::min(config.reps == 0 ? config.data_files.size() : config.reps,
                                          config.data_files.size());
  if (count == 0) throw Error(ErrorCode::kArgument, "replicate: at least one replication is required");
  const std::array<double, 3> fractions = config.fractions.value_or(
      config.hdd ? std::array<double, 3>{0.54, 0.21, 0.25} : std::array<double, 3>{0.63, 0.27, 0.10});
  split_sizes(10, fractions);  // validates the fractions up front

  ReplicateResult result;
  result.rows.resize(count);
  parallel_for(count, config.workers, [&](std::size_t r) {
    ReplicationRow& row = result.rows[r];
    row.index = r;
    row.chosen = config.settings;
    try {
      const RngStream stream(config.seed, r);
      Dataset data;
      if (config.hdd) {
        RngStream gen = stream.split(0);
        data = generate_hdd(*config.hdd, gen);
        row.source = std::string("hdd-") + scenario_letter(config.hdd->scenario) + "#" + std::to_string(r);
      } else {
        data = load_csv(config.data_files[r]);
        row.source = config.data_files[r];
      }
      RngStream split_rng = stream.split(1);
      const SplitResult parts = split(data, fractions, split_rng);
      TrainedModel model;
      if (config.grid) {
        SearchResult search = run_search(parts.train, parts.validation, config.settings, *config.grid,
                                         config.n_samples, stream.split(2), 1);
        row.chosen = search.draws[search.best].settings;
        model = std::move(search.model);
      } else {
        RngStream train_rng = stream.split(3);
        model = train(parts.train, config.settings.arch.build(data.dim()), config.settings.hyper, train_rng);
      }
      row.result = evaluate_model(model, parts.test, config.evaluation);
      row.ok = true;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
  });

  std::map<std::string, std::vector<double>> columns;
  for (const auto& row : result.rows) {
    if (!row.ok) {
      ++result.n_failed;
      continue;
    }
    ++result.n_ok;
    const auto& res = row.result;
    auto add = [&columns](const char* name, const std::optional<double>& v) {
      if (v) columns[name].push_back(*v);
    };
    columns["tau_hat"].push_back(res.tau_hat);
    columns["vanilla"].push_back(res.vanilla);
    add("eps_ate", res.metrics.eps_ate);
    add("eps_att", res.metrics.eps_att);
    add("sqrt_pehe", res.metrics.sqrt_pehe);
    add("policy_risk", res.metrics.policy_risk);
    add("entropy_stat", res.entropy_stat);
    if (res.metrics.tau_true) columns["eps_vanilla"].push_back(std::abs(res.vanilla - *res.metrics.tau_true));
  }
  for (const auto& [name, values] : columns) result.aggregate[name] = mean_sd(values);
  return result;
}

}  // namespace drrl
