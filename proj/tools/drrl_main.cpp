// drrl command-line front end. All work goes through the C interface.
#include <glob.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "drrl/drrl.h"
#include "json.hpp"

using nlohmann::json;

namespace {

struct CliFailure {
  std::string code;
  std::string message;
};

void check(drrl_status status) {
  if (status != DRRL_OK) throw CliFailure{drrl_status_name(status), drrl_last_error()};
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliFailure{"io-error", "cannot open '" + path + "' for reading"};
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CliFailure{"io-error", "cannot open '" + path + "' for writing"};
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
  if (!out) throw CliFailure{"io-error", "error while writing '" + path + "'"};
}

json read_json_object(const std::string& path) {
  try {
    json j = json::parse(read_file(path));
    if (!j.is_object()) throw CliFailure{"parse-error", "'" + path + "' must hold a JSON object"};
    return j;
  } catch (const json::parse_error& e) {
    throw CliFailure{"parse-error", "'" + path + "': " + e.what()};
  }
}

// Owns a string allocated by the library.
struct LibString {
  char* ptr = nullptr;
  ~LibString() { drrl_string_free(ptr); }
  std::string str() const { return ptr ? ptr : ""; }
};

struct Dataset {
  drrl_dataset* ptr = nullptr;
  ~Dataset() { drrl_dataset_free(ptr); }
};

struct Model {
  drrl_model* ptr = nullptr;
  ~Model() { drrl_model_free(ptr); }
};

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> values;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw CliFailure{"argument-error", "cannot parse list entry '" + item + "'"};
    }
  }
  return values;
}

std::vector<std::string> expand_glob(const std::string& pattern) {
  glob_t matches{};
  const int rc = ::glob(pattern.c_str(), 0, nullptr, &matches);
  std::vector<std::string> files;
  if (rc == 0) {
    for (std::size_t i = 0; i < matches.gl_pathc; ++i) files.emplace_back(matches.gl_pathv[i]);
  }
  globfree(&matches);
  if (files.empty()) throw CliFailure{"io-error", "no files match '" + pattern + "'"};
  return files;  // glob() sorts
}

// The grid of the original study.
json default_grid() {
  json kappa = json::array();
  for (int k = -10; k <= 6; ++k) kappa.push_back(std::pow(10.0, k / 2.0));
  return json{{"kappa", kappa}, {"layers", {1, 2, 3, 4, 5}}, {"layer_dim", {20, 50, 100, 200}},
              {"batch", {100, 200, 500}}};
}

struct TrainFlags {
  std::optional<double> kappa, lr, lambda_lr, mmd_bandwidth;
  std::optional<long long> rep_dim, layers, layer_dim, batch, iters, inner_steps;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> estimand, outcome, optimizer, regularizer;
  bool full_dual = false;

  void attach(CLI::App* app) {
    app->add_option("--kappa", kappa, "Balance weight kappa");
    app->add_option("--rep-dim", rep_dim, "Representation width m");
    app->add_option("--layers", layers, "Number of dense layers");
    app->add_option("--layer-dim", layer_dim, "Width of the hidden layers");
    app->add_option("--batch", batch, "Batch size");
    app->add_option("--lr", lr, "Learning rate");
    app->add_option("--lambda-lr", lambda_lr, "Learning rate of the balance multipliers");
    app->add_option("--iters", iters, "Training iterations");
    app->add_option("--inner-steps", inner_steps, "Multiplier steps per batch");
    app->add_option("--estimand", estimand, "ate or att")->check(CLI::IsMember({"ate", "att"}));
    app->add_option("--outcome", outcome, "cont or bin")->check(CLI::IsMember({"cont", "bin"}));
    app->add_option("--optimizer", optimizer, "sgd or adam")->check(CLI::IsMember({"sgd", "adam"}));
    app->add_option("--regularizer", regularizer, "entropy or mmd")->check(CLI::IsMember({"entropy", "mmd"}));
    app->add_option("--mmd-bandwidth", mmd_bandwidth, "MMD kernel bandwidth (0 = median heuristic)");
    app->add_flag("--full-dual", full_dual, "Solve the balance dual on every batch");
    app->add_option("--seed", seed, "Random seed");
  }

  void merge_into(json& settings) const {
    if (kappa) settings["kappa"] = *kappa;
    if (rep_dim) settings["rep_dim"] = *rep_dim;
    if (layers) settings["layers"] = *layers;
    if (layer_dim) settings["layer_dim"] = *layer_dim;
    if (batch) settings["batch"] = *batch;
    if (lr) settings["lr"] = *lr;
    if (lambda_lr) settings["lambda_lr"] = *lambda_lr;
    if (iters) settings["iters"] = *iters;
    if (inner_steps) settings["inner_steps"] = *inner_steps;
    if (estimand) settings["estimand"] = *estimand;
    if (outcome) settings["outcome"] = *outcome;
    if (optimizer) settings["optimizer"] = *optimizer;
    if (regularizer) settings["regularizer"] = *regularizer;
    if (mmd_bandwidth) settings["mmd_bandwidth"] = *mmd_bandwidth;
    if (full_dual) settings["full_dual"] = true;
    if (seed) settings["seed"] = *seed;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Double robust representation learning for treatment effects"};
  app.require_subcommand(1);

  // gen-hdd
  auto* gen = app.add_subcommand("gen-hdd", "Generate a synthetic high-dimensional dataset");
  std::string gen_scenario = "A", gen_out, gen_config;
  std::optional<long long> gen_p, gen_p_star, gen_n;
  std::optional<double> gen_rho, gen_sigma_e, gen_coef;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--scenario", gen_scenario, "A, B or C")->check(CLI::IsMember({"A", "B", "C"}));
  gen->add_option("--p", gen_p, "Covariate count");
  gen->add_option("--p-star", gen_p_star, "Support size");
  gen->add_option("--rho", gen_rho, "Equicorrelation");
  gen->add_option("--n", gen_n, "Units");
  gen->add_option("--sigma-e", gen_sigma_e, "Outcome noise sd");
  gen->add_option("--coef-scale", gen_coef, "Magnitude of nonzero outcome coefficients");
  gen->add_option("--seed", gen_seed, "Random seed");
  gen->add_option("--config", gen_config, "JSON configuration file");
  gen->add_option("--out", gen_out, "Output CSV")->required();

  // train
  auto* train = app.add_subcommand("train", "Train a model on a dataset");
  std::string train_data, train_config, train_model_out;
  TrainFlags train_flags;
  train->add_option("--data", train_data, "Training CSV")->required();
  train->add_option("--config", train_config, "JSON settings file");
  train->add_option("--model-out", train_model_out, "Model JSON output")->required();
  train_flags.attach(train);

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a trained model");
  std::string eval_model, eval_data, eval_out, eval_deltas;
  std::optional<double> eval_sigma_e;
  eval->add_option("--model", eval_model, "Model JSON")->required();
  eval->add_option("--data", eval_data, "Evaluation CSV")->required();
  eval->add_option("--metrics-out", eval_out, "Metrics JSON output")->required();
  eval->add_option("--deltas", eval_deltas, "Comma-separated policy thresholds");
  eval->add_option("--sigma-e", eval_sigma_e, "Outcome noise sd, enables bound diagnostics");

  // search
  auto* search = app.add_subcommand("search", "Random hyperparameter search");
  std::string search_data, search_grid, search_out, search_config, search_model_out, search_fractions;
  long long search_n = 10;
  std::uint64_t search_seed = 0;
  std::optional<long long> search_workers;
  TrainFlags search_flags;
  search->add_option("--data", search_data, "Dataset CSV")->required();
  search->add_option("--grid", search_grid, "Grid JSON (object of arrays)");
  search->add_option("--n-samples", search_n, "Number of draws");
  search->add_option("--out", search_out, "Search log JSON")->required();
  search->add_option("--model-out", search_model_out, "Best model JSON");
  search->add_option("--config", search_config, "JSON base settings file");
  search->add_option("--fractions", search_fractions, "train,validation,test fractions");
  search->add_option("--workers", search_workers, "Worker threads");
  search_flags.attach(search);
  search->remove_option(search->get_option("--seed"));
  search->add_option("--seed", search_seed, "Random seed");

  // replicate
  auto* rep = app.add_subcommand("replicate", "Run replications and aggregate metrics");
  std::string rep_glob, rep_hdd, rep_out, rep_rows, rep_config, rep_grid, rep_deltas, rep_fractions;
  std::optional<long long> rep_reps, rep_workers;
  long long rep_n = 10;
  std::uint64_t rep_seed = 0;
  std::optional<double> rep_sigma_e;
  bool rep_fixed = false;
  TrainFlags rep_flags;
  auto* glob_opt = rep->add_option("--data-glob", rep_glob, "Replication CSV files");
  auto* hdd_opt = rep->add_option("--hdd-config", rep_hdd, "HDD configuration JSON");
  glob_opt->excludes(hdd_opt);
  rep->add_option("--reps", rep_reps, "Replication count");
  rep->add_option("--out", rep_out, "Metrics JSON output")->required();
  rep->add_option("--rows-out", rep_rows, "Per-replication CSV output");
  rep->add_option("--config", rep_config, "JSON base settings file");
  rep->add_option("--grid", rep_grid, "Grid JSON for per-replication search");
  rep->add_option("--n-samples", rep_n, "Search draws per replication");
  rep->add_flag("--fixed", rep_fixed, "Train the base settings without searching");
  rep->add_option("--deltas", rep_deltas, "Comma-separated policy thresholds");
  rep->add_option("--sigma-e", rep_sigma_e, "Outcome noise sd, enables bound diagnostics");
  rep->add_option("--fractions", rep_fractions, "train,validation,test fractions");
  rep->add_option("--workers", rep_workers, "Worker threads");
  rep_flags.attach(rep);
  rep->remove_option(rep->get_option("--seed"));
  rep->add_option("--seed", rep_seed, "Random seed");

  // baseline
  auto* base = app.add_subcommand("baseline", "Fit a reference method");
  std::string base_method = "ols", base_data, base_test, base_out, base_deltas, base_estimand = "ate";
  long long base_k = 5;
  base->add_option("--method", base_method, "ols or knn")->check(CLI::IsMember({"ols", "knn"}));
  base->add_option("--data", base_data, "Training CSV")->required();
  base->add_option("--test", base_test, "Evaluation CSV (default: training data)");
  base->add_option("--metrics-out", base_out, "Metrics JSON output")->required();
  base->add_option("--k", base_k, "Neighbours for knn");
  base->add_option("--estimand", base_estimand, "ate or att")->check(CLI::IsMember({"ate", "att"}));
  base->add_option("--deltas", base_deltas, "Comma-separated policy thresholds");

  // export-repr
  auto* exp = app.add_subcommand("export-repr", "Write representation coordinates and weights");
  std::string exp_model, exp_data, exp_out;
  exp->add_option("--model", exp_model, "Model JSON")->required();
  exp->add_option("--data", exp_data, "Dataset CSV")->required();
  exp->add_option("--out", exp_out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"error", "argument-error"}, {"message", e.what()}}.dump() << '\n';
    return 2;
  }

  try {
    if (*gen) {
      json config = gen_config.empty() ? json::object() : read_json_object(gen_config);
      if (gen->count("--scenario") || !config.contains("scenario")) config["scenario"] = gen_scenario;
      if (gen_p) config["p"] = *gen_p;
      if (gen_p_star) config["p_star"] = *gen_p_star;
      if (gen_rho) config["rho"] = *gen_rho;
      if (gen_n) config["n"] = *gen_n;
      if (gen_sigma_e) config["sigma_e"] = *gen_sigma_e;
      if (gen_coef) config["coef_scale"] = *gen_coef;
      if (gen_seed) config["seed"] = *gen_seed;
      Dataset data;
      check(drrl_dataset_generate_hdd(config.dump().c_str(), &data.ptr));
      check(drrl_dataset_write_csv(data.ptr, gen_out.c_str()));
    } else if (*train) {
      json settings = train_config.empty() ? json::object() : read_json_object(train_config);
      train_flags.merge_into(settings);
      Dataset data;
      check(drrl_dataset_load_csv(train_data.c_str(), &data.ptr));
      Model model;
      check(drrl_train(data.ptr, settings.dump().c_str(), &model.ptr));
      check(drrl_model_save(model.ptr, train_model_out.c_str()));
    } else if (*eval) {
      json options = json::object();
      if (!eval_deltas.empty()) options["deltas"] = parse_list(eval_deltas);
      if (eval_sigma_e) options["sigma_e"] = *eval_sigma_e;
      Dataset data;
      Model model;
      check(drrl_dataset_load_csv(eval_data.c_str(), &data.ptr));
      check(drrl_model_load(eval_model.c_str(), &model.ptr));
      LibString metrics;
      check(drrl_evaluate(model.ptr, data.ptr, options.dump().c_str(), &metrics.ptr));
      write_file(eval_out, metrics.str());
    } else if (*search) {
      json settings = search_config.empty() ? json::object() : read_json_object(search_config);
      search_flags.merge_into(settings);
      json request{{"settings", settings},
                   {"grid", search_grid.empty() ? default_grid() : read_json_object(search_grid)},
                   {"n_samples", search_n},
                   {"seed", search_seed}};
      if (!search_fractions.empty()) request["fractions"] = parse_list(search_fractions);
      if (search_workers) request["workers"] = *search_workers;
      Dataset data;
      check(drrl_dataset_load_csv(search_data.c_str(), &data.ptr));
      Model best;
      LibString log;
      check(drrl_search(data.ptr, request.dump().c_str(), &best.ptr, &log.ptr));
      write_file(search_out, log.str());
      if (!search_model_out.empty()) check(drrl_model_save(best.ptr, search_model_out.c_str()));
    } else if (*rep) {
      if (rep_glob.empty() && rep_hdd.empty()) {
        throw CliFailure{"argument-error", "replicate needs --data-glob or --hdd-config"};
      }
      json settings = rep_config.empty() ? json::object() : read_json_object(rep_config);
      rep_flags.merge_into(settings);
      json request{{"settings", settings}, {"seed", rep_seed}, {"n_samples", rep_n}};
      if (!rep_hdd.empty()) {
        request["hdd"] = read_json_object(rep_hdd);
        request["reps"] = rep_reps.value_or(1);
      } else {
        const auto files = expand_glob(rep_glob);
        request["data_files"] = files;
        request["reps"] = rep_reps ? *rep_reps : static_cast<long long>(files.size());
      }
      if (!rep_fixed) request["grid"] = rep_grid.empty() ? default_grid() : read_json_object(rep_grid);
      if (!rep_deltas.empty()) request["deltas"] = parse_list(rep_deltas);
      if (rep_sigma_e) request["sigma_e"] = *rep_sigma_e;
      if (!rep_fractions.empty()) request["fractions"] = parse_list(rep_fractions);
      if (rep_workers) request["workers"] = *rep_workers;
      LibString result, rows;
      check(drrl_replicate(request.dump().c_str(), &result.ptr, &rows.ptr));
      write_file(rep_out, result.str());
      if (!rep_rows.empty()) write_file(rep_rows, rows.str());
    } else if (*base) {
      json request{{"method", base_method}, {"k", base_k}, {"estimand", base_estimand}};
      if (!base_deltas.empty()) request["deltas"] = parse_list(base_deltas);
      Dataset train_set, test_set;
      check(drrl_dataset_load_csv(base_data.c_str(), &train_set.ptr));
      if (!base_test.empty()) check(drrl_dataset_load_csv(base_test.c_str(), &test_set.ptr));
      LibString metrics;
      check(drrl_baseline(train_set.ptr, test_set.ptr, request.dump().c_str(), &metrics.ptr));
      write_file(base_out, metrics.str());
    } else if (*exp) {
      Dataset data;
      Model model;
      check(drrl_dataset_load_csv(exp_data.c_str(), &data.ptr));
      check(drrl_model_load(exp_model.c_str(), &model.ptr));
      check(drrl_export_repr(model.ptr, data.ptr, exp_out.c_str()));
    }
  } catch (const CliFailure& failure) {
    std::cerr << json{{"error", failure.code}, {"message", failure.message}}.dump() << '\n';
    return 1;
  }
  return 0;
}
