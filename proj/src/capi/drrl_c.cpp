#include "drrl/drrl.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <fstream>
#include <string>

#include "drrl/baselines.hpp"
#include "drrl/harness.hpp"
#include "drrl/serialize.hpp"
#include "json.hpp"

struct drrl_dataset {
  drrl::Dataset data;
};

struct drrl_model {
  drrl::TrainedModel model;
};

namespace {

thread_local std::string g_last_error;

drrl_status status_of(drrl::ErrorCode code) {
  switch (code) {
    case drrl::ErrorCode::kArgument:
      return DRRL_ERR_ARGUMENT;
    case drrl::ErrorCode::kParse:
      return DRRL_ERR_PARSE;
    case drrl::ErrorCode::kIo:
      return DRRL_ERR_IO;
    case drrl::ErrorCode::kInfeasible:
      return DRRL_ERR_INFEASIBLE;
    case drrl::ErrorCode::kDegenerateBatch:
      return DRRL_ERR_DEGENERATE_BATCH;
    case drrl::ErrorCode::kTrainingDiverged:
      return DRRL_ERR_TRAINING_DIVERGED;
    case drrl::ErrorCode::kMissingTruth:
      return DRRL_ERR_MISSING_TRUTH;
    case drrl::ErrorCode::kSeparation:
      return DRRL_ERR_SEPARATION;
    case drrl::ErrorCode::kEvaluation:
      return DRRL_ERR_EVALUATION;
    case drrl::ErrorCode::kSearchFailed:
      return DRRL_ERR_SEARCH_FAILED;
    case drrl::ErrorCode::kInternal:
      return DRRL_ERR_INTERNAL;
  }
  return DRRL_ERR_INTERNAL;
}

template <typename F>
drrl_status guarded(F&& body) {
  g_last_error.clear();
  try {
    body();
    return DRRL_OK;
  } catch (const drrl::Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return DRRL_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DRRL_ERR_INTERNAL;
  }
}

void require(const void* ptr, const char* name) {
  if (!ptr) throw drrl::Error(drrl::ErrorCode::kArgument, std::string(name) + " must not be NULL");
}

char* copy_string(const std::string& text) {
  char* out = static_cast<char*>(std::malloc(text.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, text.c_str(), text.size() + 1);
  return out;
}

nlohmann::json parse_request(const char* text, const char* what) {
  if (!text) return nlohmann::json::object();
  try {
    nlohmann::json j = nlohmann::json::parse(text);
    if (!j.is_object()) throw drrl::Error(drrl::ErrorCode::kArgument, std::string(what) + ": expected a JSON object");
    return j;
  } catch (const nlohmann::json::parse_error& e) {
    throw drrl::Error(drrl::ErrorCode::kParse, std::string(what) + ": " + e.what());
  }
}

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys, const char* what) {
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* k : keys) known = known || key == k;
    if (!known) throw drrl::Error(drrl::ErrorCode::kArgument, std::string(what) + ": unknown key '" + key + "'");
  }
}

drrl::EvaluationOptions evaluation_options(const char* options_json) {
  const auto j = parse_request(options_json, "evaluation options");
  reject_unknown(j, {"deltas", "sigma_e"}, "evaluation options");
  drrl::EvaluationOptions options;
  try {
    if (j.contains("deltas")) options.deltas = j.at("deltas").get<std::vector<double>>();
    if (j.contains("sigma_e") && !j.at("sigma_e").is_null()) options.sigma_e = j.at("sigma_e").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw drrl::Error(drrl::ErrorCode::kArgument, std::string("evaluation options: ") + e.what());
  }
  return options;
}

}  // namespace

extern "C" {

const char* drrl_version(void) { return "0.1.0"; }

const char* drrl_last_error(void) { return g_last_error.c_str(); }

const char* drrl_status_name(drrl_status status) {
  switch (status) {
    case DRRL_OK:
      return "ok";
    case DRRL_ERR_ARGUMENT:
      return "argument-error";
    case DRRL_ERR_PARSE:
      return "parse-error";
    case DRRL_ERR_IO:
      return "io-error";
    case DRRL_ERR_INFEASIBLE:
      return "infeasible-or-poor-overlap";
    case DRRL_ERR_DEGENERATE_BATCH:
      return "degenerate-batch";
    case DRRL_ERR_TRAINING_DIVERGED:
      return "training-diverged";
    case DRRL_ERR_MISSING_TRUTH:
      return "missing-ground-truth";
    case DRRL_ERR_SEPARATION:
      return "separation";
    case DRRL_ERR_EVALUATION:
      return "evaluation-error";
    case DRRL_ERR_SEARCH_FAILED:
      return "search-failed";
    case DRRL_ERR_INTERNAL:
      return "internal-error";
  }
  return "internal-error";
}

void drrl_string_free(char* text) { std::free(text); }

drrl_status drrl_dataset_load_csv(const char* path, drrl_dataset** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto* handle = new drrl_dataset{drrl::load_csv(path)};
    *out = handle;
  });
}

drrl_status drrl_dataset_write_csv(const drrl_dataset* data, const char* path) {
  return guarded([&] {
    require(data, "data");
    require(path, "path");
    drrl::write_csv(data->data, path);
  });
}

drrl_status drrl_dataset_generate_hdd(const char* config_json, drrl_dataset** out) {
  return guarded([&] {
    require(out, "out");
    const drrl::HddConfig config = drrl::hdd_config_from_json(config_json ? config_json : "{}");
    drrl::RngStream rng(config.seed, 0);
    *out = new drrl_dataset{drrl::generate_hdd(config, rng)};
  });
}

drrl_status drrl_dataset_shape(const drrl_dataset* data, size_t* rows, size_t* cols) {
  return guarded([&] {
    require(data, "data");
    if (rows) *rows = data->data.size();
    if (cols) *cols = static_cast<size_t>(data->data.dim());
  });
}

void drrl_dataset_free(drrl_dataset* data) { delete data; }

drrl_status drrl_train(const drrl_dataset* data, const char* settings_json, drrl_model** out) {
  return guarded([&] {
    require(data, "data");
    require(out, "out");
    const drrl::TrainSettings settings = drrl::train_settings_from_json(settings_json ? settings_json : "{}");
    drrl::RngStream rng(settings.hyper.seed, 0);
    auto model = drrl::train(data->data, settings.arch.build(data->data.dim()), settings.hyper, rng);
    *out = new drrl_model{std::move(model)};
  });
}

drrl_status drrl_model_load(const char* path, drrl_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new drrl_model{drrl::load_model(path)};
  });
}

drrl_status drrl_model_save(const drrl_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    drrl::save_model(model->model, path);
  });
}

void drrl_model_free(drrl_model* model) { delete model; }

drrl_status drrl_predict_ite(const drrl_model* model, const drrl_dataset* data, double* out, size_t out_len) {
  return guarded([&] {
    require(model, "model");
    require(data, "data");
    require(out, "out");
    if (out_len < data->data.size()) {
      throw drrl::Error(drrl::ErrorCode::kArgument, "predict_ite: output buffer is too small");
    }
    const drrl::Vector ite = drrl::predict_ite(model->model, data->data.x);
    std::memcpy(out, ite.data(), sizeof(double) * static_cast<size_t>(ite.size()));
  });
}

drrl_status drrl_evaluate(const drrl_model* model, const drrl_dataset* data, const char* options_json,
                          char** metrics_json) {
  return guarded([&] {
    require(model, "model");
    require(data, "data");
    require(metrics_json, "metrics_json");
    const auto result = drrl::evaluate_model(model->model, data->data, evaluation_options(options_json));
    *metrics_json = copy_string(drrl::evaluation_to_json(result));
  });
}

drrl_status drrl_search(const drrl_dataset* data, const char* request_json, drrl_model** best, char** log_json) {
  return guarded([&] {
    require(data, "data");
    require(log_json, "log_json");
    const auto j = parse_request(request_json, "search request");
    reject_unknown(j, {"settings", "grid", "n_samples", "seed", "fractions", "workers"}, "search request");
    drrl::TrainSettings settings;
    drrl::SearchGrid grid;
    std::size_t n_samples = 10;
    std::uint64_t seed = 0;
    std::array<double, 3> fractions{0.63, 0.27, 0.10};
    std::size_t workers = 0;
    try {
      if (j.contains("settings")) settings = drrl::train_settings_from_json(j.at("settings").dump());
      if (j.contains("grid")) grid = drrl::grid_from_json(j.at("grid").dump());
      if (j.contains("n_samples")) n_samples = j.at("n_samples").get<std::size_t>();
      if (j.contains("seed")) seed = j.at("seed").get<std::uint64_t>();
      if (j.contains("fractions")) {
        const auto f = j.at("fractions").get<std::vector<double>>();
        if (f.size() != 3) throw drrl::Error(drrl::ErrorCode::kArgument, "search request: fractions needs three values");
        fractions = {f[0], f[1], f[2]};
      }
      if (j.contains("workers")) workers = j.at("workers").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
      throw drrl::Error(drrl::ErrorCode::kArgument, std::string("search request: ") + e.what());
    }
    const drrl::RngStream stream(seed, 0);
    drrl::RngStream split_rng = stream.split(1);
    const auto parts = drrl::split(data->data, fractions, split_rng);
    auto result = drrl::run_search(parts.train, parts.validation, settings, grid, n_samples, stream.split(2), workers);
    *log_json = copy_string(drrl::search_to_json(result));
    if (best) *best = new drrl_model{std::move(result.model)};
  });
}

drrl_status drrl_replicate(const char* request_json, char** result_json, char** rows_csv) {
  return guarded([&] {
    require(request_json, "request_json");
    require(result_json, "result_json");
    const drrl::ReplicateConfig config = drrl::replicate_config_from_json(request_json);
    const drrl::ReplicateResult result = drrl::run_replicate(config);
    std::string json_text = drrl::replicate_to_json(result);
    std::string csv_text = drrl::replicate_rows_csv(result);
    *result_json = copy_string(json_text);
    if (rows_csv) *rows_csv = copy_string(csv_text);
  });
}

drrl_status drrl_baseline(const drrl_dataset* train, const drrl_dataset* test, const char* request_json,
                          char** metrics_json) {
  return guarded([&] {
    require(train, "train");
    require(metrics_json, "metrics_json");
    const auto j = parse_request(request_json, "baseline request");
    reject_unknown(j, {"method", "k", "estimand", "deltas"}, "baseline request");
    std::string method = "ols";
    std::size_t k = 5;
    drrl::Estimand estimand = drrl::Estimand::kAte;
    std::vector<double> deltas{0.0};
    try {
      if (j.contains("method")) method = j.at("method").get<std::string>();
      if (j.contains("k")) k = j.at("k").get<std::size_t>();
      if (j.contains("estimand")) estimand = drrl::parse_estimand(j.at("estimand").get<std::string>());
      if (j.contains("deltas")) deltas = j.at("deltas").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw drrl::Error(drrl::ErrorCode::kArgument, std::string("baseline request: ") + e.what());
    }
    const drrl::Dataset& eval = test ? test->data : train->data;
    drrl::Vector ite;
    if (method == "ols") {
      ite = drrl::ols_interactions(train->data).predict_ite(eval.x);
    } else if (method == "knn") {
      const auto pred = drrl::knn_predict(train->data, eval.x, k);
      ite = pred.f1 - pred.f0;
    } else {
      throw drrl::Error(drrl::ErrorCode::kArgument, "baseline: unknown method '" + method + "'");
    }
    double tau_hat = 0.0;
    if (estimand == drrl::Estimand::kAte) {
      tau_hat = ite.mean();
    } else {
      double sum = 0.0;
      std::size_t count = 0;
      for (std::size_t i = 0; i < eval.size(); ++i) {
        if (eval.t[i] == 1) {
          sum += ite(static_cast<Eigen::Index>(i));
          ++count;
        }
      }
      if (count == 0) throw drrl::Error(drrl::ErrorCode::kEvaluation, "baseline: ATT needs treated units");
      tau_hat = sum / static_cast<double>(count);
    }
    drrl::EvaluationResult result;
    result.estimand = estimand;
    result.ite = ite;
    result.vanilla = tau_hat;
    result.tau_hat = tau_hat;
    if (eval.has_truth() || (estimand == drrl::Estimand::kAtt && eval.randomized)) {
      result.metrics = drrl::compute_metrics(ite, tau_hat, eval, estimand);
      result.has_metrics = true;
    } else {
      result.metrics.estimand = estimand;
      result.metrics.tau_hat = tau_hat;
    }
    if (eval.has_truth() || eval.randomized) {
      result.policy_curve = drrl::policy_risk_curve(ite, eval, deltas);
      const auto at_zero = drrl::policy_risk_curve(ite, eval, {0.0}).front();
      result.metrics.policy_risk = at_zero.risk;
      result.metrics.inclusion_rate = at_zero.inclusion_rate;
    }
    auto doc = nlohmann::json::parse(drrl::evaluation_to_json(result));
    doc["kind"] = "baseline";
    doc["method"] = method;
    *metrics_json = copy_string(doc.dump(2));
  });
}

drrl_status drrl_export_repr(const drrl_model* model, const drrl_dataset* data, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(data, "data");
    require(path, "path");
    const auto pred = drrl::predict_outcomes(model->model, data->data.x);
    drrl::BalanceProblem problem{pred.phi, data->data.t, model->model.estimand};
    problem.validate();
    const drrl::DualSolution dual = drrl::try_solve_dual(problem);
    const drrl::BalancingWeights w = drrl::weights_from_dual(problem, dual);
    std::ofstream out(path);
    if (!out) throw drrl::Error(drrl::ErrorCode::kIo, std::string("cannot open '") + path + "' for writing");
    out.precision(17);
    out << "t,y,w";
    for (Eigen::Index c = 0; c < pred.phi.cols(); ++c) out << ",phi" << (c + 1);
    out << '\n';
    for (Eigen::Index i = 0; i < pred.phi.rows(); ++i) {
      out << data->data.t[static_cast<std::size_t>(i)] << ',' << data->data.y(i) << ',' << w.w(i);
      for (Eigen::Index c = 0; c < pred.phi.cols(); ++c) out << ',' << pred.phi(i, c);
      out << '\n';
    }
    if (!out) throw drrl::Error(drrl::ErrorCode::kIo, std::string("error while writing '") + path + "'");
  });
}

}  // extern "C"
