// Model evaluation, random hyperparameter search and replication batches.
#ifndef DRRL_HARNESS_HPP_
#define DRRL_HARNESS_HPP_

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "drrl/data.hpp"
#include "drrl/estimators.hpp"
#include "drrl/eval.hpp"
#include "drrl/repnet.hpp"

namespace drrl {

// Architecture in terms of the search grid: `layers` dense layers, all of
// width layer_dim except the last, which has width rep_dim (layer_dim when 0).
struct ArchitectureSpec {
  std::size_t layers = 2;
  Eigen::Index layer_dim = 50;
  Eigen::Index rep_dim = 0;
  OutcomeType outcome_type = OutcomeType::kContinuous;

  NetworkConfig build(Eigen::Index input_dim) const;
};

struct TrainSettings {
  ArchitectureSpec arch;
  TrainingHyper hyper;
};

struct EvaluationResult {
  Estimand estimand = Estimand::kAte;
  Vector ite;
  double vanilla = 0.0;  // mean predicted ITE (over treated units for the ATT)
  std::optional<EstimateReport> dr;  // ATE only
  std::optional<double> att_weighted;  // ATT only
  double tau_hat = 0.0;
  bool balance_fallback = false;  // EB failed on this data, tau_hat = vanilla
  std::string balance_failure;
  std::optional<double> entropy_stat;
  MetricsReport metrics;  // empty optionals when no truth is available
  bool has_metrics = false;
  std::vector<PolicyPoint> policy_curve;
  std::optional<BoundDiagnostics> bounds;
};

struct EvaluationOptions {
  std::vector<double> deltas{0.0};
  std::optional<double> sigma_e;  // enables bound diagnostics
};

EvaluationResult evaluate_model(const TrainedModel& model, const Dataset& data,
                                const EvaluationOptions& options = {});

// Each key lists the values a draw picks from uniformly; absent keys keep the
// base settings.
struct SearchGrid {
  std::vector<double> kappa;
  std::vector<std::size_t> layers;
  std::vector<Eigen::Index> layer_dim;
  std::vector<Eigen::Index> rep_dim;
  std::vector<std::size_t> batch;
  std::vector<double> lr;
  std::vector<double> lambda_lr;
  std::vector<std::size_t> iters;
  std::vector<std::size_t> inner_steps;
  std::vector<Optimizer> optimizer;
  std::vector<bool> full_dual;

  std::size_t combinations() const;
};

// The grid of the original study: kappa = 10^(k/2), k = -10..6; 1..5 layers;
// widths {20, 50, 100, 200}; batch {100, 200, 500}.
SearchGrid default_search_grid();

struct DrawRecord {
  std::size_t index = 0;
  TrainSettings settings;
  std::optional<double> score;
  std::string error;
};

struct SearchResult {
  std::size_t best = 0;
  TrainedModel model;
  std::vector<DrawRecord> draws;
  std::string criterion;  // "surrogate-pehe" or "policy-risk"
};

// Validation score: policy risk at delta = 0 for binary outcomes when the
// validation data supports it, otherwise the surrogate PEHE against 1-NN
// matched ITEs.
double validation_score(const TrainedModel& model, const Dataset& validation, std::string* criterion = nullptr);

SearchResult run_search(const Dataset& train_data, const Dataset& validation,
                        const TrainSettings& base, const SearchGrid& grid, std::size_t n_samples,
                        const RngStream& rng, std::size_t workers = 0);

struct ReplicateConfig {
  std::optional<HddConfig> hdd;
  std::vector<std::string> data_files;
  std::size_t reps = 1;
  std::uint64_t seed = 0;
  TrainSettings settings;
  std::optional<SearchGrid> grid;  // per-replication search when set
  std::size_t n_samples = 10;
  std::optional<std::array<double, 3>> fractions;  // HDD 54/21/25, files 63/27/10
  EvaluationOptions evaluation;
  std::size_t workers = 0;
};

struct ReplicationRow {
  std::size_t index = 0;
  bool ok = false;
  std::string error;
  std::string source;
  EvaluationResult result;
  TrainSettings chosen;
};

struct ReplicateResult {
  std::vector<ReplicationRow> rows;
  std::map<std::string, MeanSd> aggregate;
  std::size_t n_ok = 0;
  std::size_t n_failed = 0;
};

ReplicateResult run_replicate(const ReplicateConfig& config);

// Runs tasks 0..count-1 on a pool of `workers` threads (0 = hardware
// concurrency); the first exception is rethrown after all tasks finish.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& task);

}  // namespace drrl

#endif  // DRRL_HARNESS_HPP_
