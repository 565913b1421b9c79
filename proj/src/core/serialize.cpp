#include "drrl/serialize.hpp"

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "json.hpp"

namespace drrl {

using nlohmann::json;

namespace {

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParse, std::string(what) + ": " + e.what());
  }
}

void reject_unknown(const json& object, const std::set<std::string>& allowed, const char* what) {
  if (!object.is_object()) throw Error(ErrorCode::kArgument, std::string(what) + ": expected a JSON object");
  for (const auto& [key, value] : object.items()) {
    if (!allowed.count(key)) {
      throw Error(ErrorCode::kArgument, std::string(what) + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
T get_as(const json& object, const char* key, const char* what) {
  try {
    return object.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kArgument, std::string(what) + ": bad value for '" + key + "': " + e.what());
  }
}

json vector_json(const Vector& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Vector vector_from(const json& j, const char* key) {
  const auto values = get_as<std::vector<double>>(j, key, "model");
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string optimizer_name(Optimizer o) { return o == Optimizer::kSgd ? "sgd" : "adam"; }

Optimizer parse_optimizer(const std::string& text) {
  if (text == "sgd") return Optimizer::kSgd;
  if (text == "adam") return Optimizer::kAdam;
  throw Error(ErrorCode::kArgument, "unknown optimizer '" + text + "'");
}

std::string regularizer_name(Regularizer r) { return r == Regularizer::kEntropy ? "entropy" : "mmd"; }

Regularizer parse_regularizer(const std::string& text) {
  if (text == "entropy") return Regularizer::kEntropy;
  if (text == "mmd") return Regularizer::kMmd;
  throw Error(ErrorCode::kArgument, "unknown regularizer '" + text + "'");
}

std::size_t positive_count(const json& object, const char* key, const char* what) {
  const auto value = get_as<long long>(object, key, what);
  if (value < 0) throw Error(ErrorCode::kArgument, std::string(what) + ": '" + key + "' must be >= 0");
  return static_cast<std::size_t>(value);
}

void apply_settings(const json& j, TrainSettings& s) {
  static const std::set<std::string> keys{"kappa", "layers", "layer_dim", "rep_dim", "batch",
                                          "lr", "lambda_lr", "iters", "inner_steps", "full_dual",
                                          "estimand", "outcome", "optimizer", "regularizer",
                                          "mmd_bandwidth", "seed"};
  const char* what = "settings";
  reject_unknown(j, keys, what);
  if (j.contains("kappa")) s.hyper.kappa = get_as<double>(j, "kappa", what);
  if (j.contains("layers")) s.arch.layers = positive_count(j, "layers", what);
  if (j.contains("layer_dim")) s.arch.layer_dim = static_cast<Eigen::Index>(positive_count(j, "layer_dim", what));
  if (j.contains("rep_dim")) s.arch.rep_dim = static_cast<Eigen::Index>(positive_count(j, "rep_dim", what));
  if (j.contains("batch")) s.hyper.batch_size = positive_count(j, "batch", what);
  if (j.contains("lr")) s.hyper.learning_rate = get_as<double>(j, "lr", what);
  if (j.contains("lambda_lr")) s.hyper.lambda_learning_rate = get_as<double>(j, "lambda_lr", what);
  if (j.contains("iters")) s.hyper.iterations = positive_count(j, "iters", what);
  if (j.contains("inner_steps")) s.hyper.inner_steps = positive_count(j, "inner_steps", what);
  if (j.contains("full_dual")) s.hyper.full_dual_per_batch = get_as<bool>(j, "full_dual", what);
  if (j.contains("estimand")) s.hyper.estimand = parse_estimand(get_as<std::string>(j, "estimand", what));
  if (j.contains("outcome")) s.arch.outcome_type = parse_outcome_type(get_as<std::string>(j, "outcome", what));
  if (j.contains("optimizer")) s.hyper.optimizer = parse_optimizer(get_as<std::string>(j, "optimizer", what));
  if (j.contains("regularizer")) {
    s.hyper.regularizer = parse_regularizer(get_as<std::string>(j, "regularizer", what));
  }
  if (j.contains("mmd_bandwidth")) s.hyper.mmd_bandwidth = get_as<double>(j, "mmd_bandwidth", what);
  if (j.contains("seed")) s.hyper.seed = get_as<std::uint64_t>(j, "seed", what);
}

json settings_json(const TrainSettings& s) {
  return json{{"kappa", s.hyper.kappa},
              {"layers", s.arch.layers},
              {"layer_dim", s.arch.layer_dim},
              {"rep_dim", s.arch.rep_dim},
              {"batch", s.hyper.batch_size},
              {"lr", s.hyper.learning_rate},
              {"lambda_lr", s.hyper.lambda_learning_rate},
              {"iters", s.hyper.iterations},
              {"inner_steps", s.hyper.inner_steps},
              {"full_dual", s.hyper.full_dual_per_batch},
              {"estimand", std::string(estimand_name(s.hyper.estimand))},
              {"outcome", std::string(outcome_type_name(s.arch.outcome_type))},
              {"optimizer", optimizer_name(s.hyper.optimizer)},
              {"regularizer", regularizer_name(s.hyper.regularizer)},
              {"mmd_bandwidth", s.hyper.mmd_bandwidth},
              {"seed", s.hyper.seed}};
}

void apply_hdd(const json& j, HddConfig& c) {
  static const std::set<std::string> keys{"p", "p_star", "rho", "sigma", "sigma_e",
                                          "n", "scenario", "coef_scale", "seed"};
  const char* what = "hdd config";
  reject_unknown(j, keys, what);
  if (j.contains("p")) c.p = positive_count(j, "p", what);
  if (j.contains("p_star")) c.p_star = positive_count(j, "p_star", what);
  if (j.contains("rho")) c.rho = get_as<double>(j, "rho", what);
  if (j.contains("sigma")) c.sigma = get_as<double>(j, "sigma", what);
  if (j.contains("sigma_e")) c.sigma_e = get_as<double>(j, "sigma_e", what);
  if (j.contains("n")) c.n = positive_count(j, "n", what);
  if (j.contains("scenario")) c.scenario = parse_scenario(get_as<std::string>(j, "scenario", what));
  if (j.contains("coef_scale")) c.coef_scale = get_as<double>(j, "coef_scale", what);
  if (j.contains("seed")) c.seed = get_as<std::uint64_t>(j, "seed", what);
}

template <typename T>
std::vector<T> grid_values(const json& j, const char* key) {
  if (!j.contains(key)) return {};
  const json& arr = j.at(key);
  if (!arr.is_array() || arr.empty()) {
    throw Error(ErrorCode::kArgument, std::string("grid: '") + key + "' must be a nonempty array");
  }
  return get_as<std::vector<T>>(j, key, "grid");
}

SearchGrid grid_from(const json& j) {
  static const std::set<std::string> keys{"kappa", "layers", "layer_dim", "rep_dim", "batch", "lr",
                                          "lambda_lr", "iters", "inner_steps", "optimizer", "full_dual"};
  reject_unknown(j, keys, "grid");
  SearchGrid g;
  g.kappa = grid_values<double>(j, "kappa");
  g.layers = grid_values<std::size_t>(j, "layers");
  for (long long v : grid_values<long long>(j, "layer_dim")) g.layer_dim.push_back(static_cast<Eigen::Index>(v));
  for (long long v : grid_values<long long>(j, "rep_dim")) g.rep_dim.push_back(static_cast<Eigen::Index>(v));
  g.batch = grid_values<std::size_t>(j, "batch");
  g.lr = grid_values<double>(j, "lr");
  g.lambda_lr = grid_values<double>(j, "lambda_lr");
  g.iters = grid_values<std::size_t>(j, "iters");
  g.inner_steps = grid_values<std::size_t>(j, "inner_steps");
  for (const auto& name : grid_values<std::string>(j, "optimizer")) g.optimizer.push_back(parse_optimizer(name));
  g.full_dual = grid_values<bool>(j, "full_dual");
  for (double k : g.kappa) {
    if (!(k >= 0.0)) throw Error(ErrorCode::kArgument, "grid: kappa values must be >= 0");
  }
  return g;
}

json weight_json(const WeightDiagnostics& d) {
  return json{{"sum", d.sum}, {"max_weight", d.max_weight}, {"effective_size", d.effective_size}};
}

json metrics_json(const MetricsReport& m) {
  return json{{"estimand", std::string(estimand_name(m.estimand))},
              {"tau_hat", m.tau_hat},
              {"tau_true", optional_json(m.tau_true)},
              {"eps_ate", optional_json(m.eps_ate)},
              {"eps_att", optional_json(m.eps_att)},
              {"sqrt_pehe", optional_json(m.sqrt_pehe)},
              {"policy_risk", optional_json(m.policy_risk)},
              {"inclusion_rate", optional_json(m.inclusion_rate)},
              {"entropy_stat", optional_json(m.entropy_stat)}};
}

json evaluation_json(const EvaluationResult& r) {
  json out{{"estimand", std::string(estimand_name(r.estimand))},
           {"tau_hat", r.tau_hat},
           {"vanilla", r.vanilla},
           {"balance_fallback", r.balance_fallback},
           {"metrics", metrics_json(r.metrics)}};
  if (r.balance_fallback) out["balance_failure"] = r.balance_failure;
  if (r.dr) {
    out["dr"] = json{{"point", r.dr->point},
                     {"residual_term", r.dr->residual_term},
                     {"outcome_term", r.dr->outcome_term},
                     {"weights", weight_json(r.dr->weights)}};
  }
  if (r.att_weighted) out["att_weighted"] = *r.att_weighted;
  json curve = json::array();
  for (const auto& p : r.policy_curve) {
    curve.push_back(json{{"delta", p.delta}, {"inclusion_rate", p.inclusion_rate}, {"risk", optional_json(p.risk)}});
  }
  out["policy_curve"] = curve;
  if (r.bounds) {
    const auto& b = *r.bounds;
    out["bounds"] = json{{"alpha", b.alpha}, {"eps_f0", b.eps_f0}, {"eps_f1", b.eps_f1},
                         {"eps_cf0", b.eps_cf0}, {"eps_cf1", b.eps_cf1}, {"pehe", b.pehe},
                         {"bound_value", b.bound_value}};
  }
  return out;
}

}  // namespace

std::string model_to_json(const TrainedModel& model) {
  json layers = json::array();
  for (const auto& layer : model.params.layers) {
    layers.push_back(json{{"rows", layer.weight.rows()},
                          {"cols", layer.weight.cols()},
                          {"weight", std::vector<double>(layer.weight.data(), layer.weight.data() + layer.weight.size())},
                          {"bias", vector_json(layer.bias)}});
  }
  json doc{{"format_version", kModelFormatVersion},
           {"config", json{{"input_dim", model.config.input_dim},
                           {"layer_sizes", model.config.layer_sizes},
                           {"outcome_type", std::string(outcome_type_name(model.config.outcome_type))}}},
           {"estimand", std::string(estimand_name(model.estimand))},
           {"layers", layers},
           {"gamma0", vector_json(model.params.gamma0)},
           {"gamma1", vector_json(model.params.gamma1)},
           {"b0", model.params.b0},
           {"b1", model.params.b1},
           {"x_means", vector_json(model.x_scaling.means)},
           {"x_sds", vector_json(model.x_scaling.sds)},
           {"y_mean", model.y_mean},
           {"y_sd", model.y_sd},
           {"lambda0", vector_json(model.dual.lambda0)},
           {"lambda1", vector_json(model.dual.lambda1)},
           {"balance_converged", model.balance_converged},
           {"balance_failure", model.dual.failure},
           {"weights", vector_json(model.weights.w)}};
  return doc.dump(1);
}

TrainedModel model_from_json(const std::string& text) {
  const json doc = parse_json(text, "model");
  try {
    const int version = doc.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw Error(ErrorCode::kParse, "model: unsupported format_version " + std::to_string(version));
    }
    TrainedModel model;
    const json& cfg = doc.at("config");
    model.config.input_dim = cfg.at("input_dim").get<Eigen::Index>();
    model.config.layer_sizes = cfg.at("layer_sizes").get<std::vector<Eigen::Index>>();
    model.config.outcome_type = parse_outcome_type(cfg.at("outcome_type").get<std::string>());
    model.config.validate();
    model.estimand = parse_estimand(doc.at("estimand").get<std::string>());
    model.params = ModelParams::zeros_like(model.config);
    const json& layers = doc.at("layers");
    if (!layers.is_array() || layers.size() != model.params.layers.size()) {
      throw Error(ErrorCode::kParse, "model: layer count differs from config");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto& layer = model.params.layers[l];
      const auto rows = layers[l].at("rows").get<Eigen::Index>();
      const auto cols = layers[l].at("cols").get<Eigen::Index>();
      const auto weight = layers[l].at("weight").get<std::vector<double>>();
      const Vector bias = vector_from(layers[l], "bias");
      if (rows != layer.weight.rows() || cols != layer.weight.cols() ||
          static_cast<Eigen::Index>(weight.size()) != rows * cols || bias.size() != rows) {
        throw Error(ErrorCode::kParse, "model: layer " + std::to_string(l) + " has inconsistent shape");
      }
      layer.weight = Eigen::Map<const Matrix>(weight.data(), rows, cols);
      layer.bias = bias;
    }
    model.params.gamma0 = vector_from(doc, "gamma0");
    model.params.gamma1 = vector_from(doc, "gamma1");
    if (model.params.gamma0.size() != model.config.rep_dim() || model.params.gamma1.size() != model.config.rep_dim()) {
      throw Error(ErrorCode::kParse, "model: head length differs from rep_dim");
    }
    model.params.b0 = doc.at("b0").get<double>();
    model.params.b1 = doc.at("b1").get<double>();
    model.x_scaling.means = vector_from(doc, "x_means");
    model.x_scaling.sds = vector_from(doc, "x_sds");
    if (model.x_scaling.means.size() != model.config.input_dim || model.x_scaling.sds.size() != model.config.input_dim) {
      throw Error(ErrorCode::kParse, "model: scaling length differs from input_dim");
    }
    model.y_mean = doc.at("y_mean").get<double>();
    model.y_sd = doc.at("y_sd").get<double>();
    model.dual.lambda0 = vector_from(doc, "lambda0");
    model.dual.lambda1 = vector_from(doc, "lambda1");
    model.balance_converged = doc.at("balance_converged").get<bool>();
    model.dual.converged = model.balance_converged;
    model.dual.failure = doc.at("balance_failure").get<std::string>();
    model.weights.w = vector_from(doc, "weights");
    model.weights.estimand = model.estimand;
    return model;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("model: ") + e.what());
  }
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path + "' for reading");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "error while writing '" + path + "'");
}

void save_model(const TrainedModel& model, const std::string& path) {
  write_text_file(path, model_to_json(model) + "\n");
}

TrainedModel load_model(const std::string& path) { return model_from_json(read_text_file(path)); }

HddConfig hdd_config_from_json(const std::string& text, HddConfig base) {
  apply_hdd(parse_json(text, "hdd config"), base);
  base.validate();
  return base;
}

std::string hdd_config_to_json(const HddConfig& c) {
  return json{{"p", c.p}, {"p_star", c.p_star}, {"rho", c.rho}, {"sigma", c.sigma},
              {"sigma_e", c.sigma_e}, {"n", c.n}, {"scenario", std::string(1, scenario_letter(c.scenario))},
              {"coef_scale", c.coef_scale}, {"seed", c.seed}}
      .dump(2);
}

TrainSettings train_settings_from_json(const std::string& text, TrainSettings base) {
  apply_settings(parse_json(text, "settings"), base);
  base.hyper.validate();
  return base;
}

std::string train_settings_to_json(const TrainSettings& settings) { return settings_json(settings).dump(2); }

SearchGrid grid_from_json(const std::string& text) { return grid_from(parse_json(text, "grid")); }

ReplicateConfig replicate_config_from_json(const std::string& text) {
  const json j = parse_json(text, "replicate config");
  static const std::set<std::string> keys{"hdd", "data_files", "reps", "seed", "settings", "grid",
                                          "n_samples", "fractions", "deltas", "sigma_e", "workers"};
  const char* what = "replicate config";
  reject_unknown(j, keys, what);
  ReplicateConfig c;
  if (j.contains("hdd")) {
    HddConfig h;
    apply_hdd(j.at("hdd"), h);
    h.validate();
    c.hdd = h;
  }
  if (j.contains("data_files")) c.data_files = get_as<std::vector<std::string>>(j, "data_files", what);
  if (j.contains("reps")) c.reps = positive_count(j, "reps", what);
  else if (!c.hdd) c.reps = c.data_files.size();
  if (j.contains("seed")) c.seed = get_as<std::uint64_t>(j, "seed", what);
  if (j.contains("settings")) apply_settings(j.at("settings"), c.settings);
  c.settings.hyper.validate();
  if (j.contains("grid") && !j.at("grid").is_null()) c.grid = grid_from(j.at("grid"));
  if (j.contains("n_samples")) c.n_samples = positive_count(j, "n_samples", what);
  if (j.contains("fractions")) {
    const auto f = get_as<std::vector<double>>(j, "fractions", what);
    if (f.size() != 3) throw Error(ErrorCode::kArgument, "replicate config: fractions needs three values");
    c.fractions = std::array<double, 3>{f[0], f[1], f[2]};
  }
  if (j.contains("deltas")) c.evaluation.deltas = get_as<std::vector<double>>(j, "deltas", what);
  if (j.contains("sigma_e") && !j.at("sigma_e").is_null()) c.evaluation.sigma_e = get_as<double>(j, "sigma_e", what);
  if (j.contains("workers")) c.workers = positive_count(j, "workers", what);
  if (c.hdd && !c.data_files.empty()) {
    throw Error(ErrorCode::kArgument, "replicate config: give either hdd or data_files, not both");
  }
  return c;
}

std::string evaluation_to_json(const EvaluationResult& result) {
  json doc = evaluation_json(result);
  doc["schema_version"] = kMetricsSchemaVersion;
  doc["kind"] = "evaluation";
  return doc.dump(2);
}

std::string search_to_json(const SearchResult& result) {
  json draws = json::array();
  for (const auto& d : result.draws) {
    json entry{{"index", d.index}, {"settings", settings_json(d.settings)}, {"score", optional_json(d.score)}};
    if (!d.error.empty()) entry["error"] = d.error;
    draws.push_back(entry);
  }
  json doc{{"schema_version", kMetricsSchemaVersion},
           {"kind", "search"},
           {"criterion", result.criterion},
           {"best", result.best},
           {"best_settings", settings_json(result.draws.at(result.best).settings)},
           {"draws", draws}};
  return doc.dump(2);
}

std::string replicate_to_json(const ReplicateResult& result) {
  json rows = json::array();
  for (const auto& row : result.rows) {
    json entry{{"index", row.index}, {"ok", row.ok}, {"source", row.source}};
    if (row.ok) {
      entry["evaluation"] = evaluation_json(row.result);
      entry["settings"] = settings_json(row.chosen);
    } else {
      entry["error"] = row.error;
    }
    rows.push_back(entry);
  }
  json aggregate = json::object();
  for (const auto& [name, stats] : result.aggregate) {
    aggregate[name] = json{{"mean", stats.mean}, {"sd", stats.sd}};
  }
  json doc{{"schema_version", kMetricsSchemaVersion},
           {"kind", "replicate"},
           {"n_ok", result.n_ok},
           {"n_failed", result.n_failed},
           {"aggregate", aggregate},
           {"rows", rows}};
  return doc.dump(2);
}

std::string replicate_rows_csv(const ReplicateResult& result) {
  std::ostringstream out;
  out << "replication,ok,tau_hat,vanilla,tau_true,eps_ate,eps_att,sqrt_pehe,policy_risk,entropy_stat,kappa\n";
  auto cell = [&out](const std::optional<double>& v) {
    out << ',';
    if (v) out << std::setprecision(17) << *v;
  };
  for (const auto& row : result.rows) {
    out << row.index << ',' << (row.ok ? 1 : 0);
    if (row.ok) {
      const auto& r = row.result;
      cell(r.tau_hat);
      cell(r.vanilla);
      cell(r.metrics.tau_true);
      cell(r.metrics.eps_ate);
      cell(r.metrics.eps_att);
      cell(r.metrics.sqrt_pehe);
      cell(r.metrics.policy_risk);
      cell(r.entropy_stat);
      cell(row.chosen.hyper.kappa);
    } else {
      out << ",,,,,,,,,";
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace drrl
