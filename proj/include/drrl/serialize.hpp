// JSON documents: trained models, configurations, grids and reports.
#ifndef DRRL_SERIALIZE_HPP_
#define DRRL_SERIALIZE_HPP_

#include <string>

#include "drrl/data.hpp"
#include "drrl/harness.hpp"
#include "drrl/repnet.hpp"

namespace drrl {

inline constexpr int kModelFormatVersion = 1;
inline constexpr int kMetricsSchemaVersion = 1;

std::string model_to_json(const TrainedModel& model);
TrainedModel model_from_json(const std::string& text);
void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

// Unknown keys are rejected with kArgument.
HddConfig hdd_config_from_json(const std::string& text, HddConfig base = {});
std::string hdd_config_to_json(const HddConfig& config);

// Keys: kappa, layers, layer_dim, rep_dim, batch, lr, lambda_lr, iters,
// inner_steps, full_dual, estimand, outcome, optimizer, regularizer,
// mmd_bandwidth, seed.
TrainSettings train_settings_from_json(const std::string& text, TrainSettings base = {});
std::string train_settings_to_json(const TrainSettings& settings);

// JSON object of arrays over the keys kappa, layers, layer_dim, rep_dim,
// batch, lr, lambda_lr, iters, inner_steps, optimizer, full_dual.
SearchGrid grid_from_json(const std::string& text);

// Keys: hdd (object) or data_files (array), reps, seed, settings (object),
// grid (object), n_samples, fractions, deltas, sigma_e, workers.
ReplicateConfig replicate_config_from_json(const std::string& text);

std::string evaluation_to_json(const EvaluationResult& result);
std::string search_to_json(const SearchResult& result);
std::string replicate_to_json(const ReplicateResult& result);
// One row per replication, failed replications included with ok = 0.
std::string replicate_rows_csv(const ReplicateResult& result);

}  // namespace drrl

#endif  // DRRL_SERIALIZE_HPP_
