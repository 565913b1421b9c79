// Datasets, the synthetic high-dimensional design, CSV I/O and splits.
#ifndef DRRL_DATA_HPP_
#define DRRL_DATA_HPP_

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "drrl/numerics.hpp"

namespace drrl {

struct Dataset {
  Matrix x;
  Treatment t;
  Vector y;
  std::optional<Vector> mu0;
  std::optional<Vector> mu1;
  std::optional<Vector> e_true;
  std::optional<std::vector<int>> randomized;
  std::vector<std::string> column_names;  // covariate names, x1..xp by default

  std::size_t size() const { return t.size(); }
  Eigen::Index dim() const { return x.cols(); }
  std::size_t n_treated() const;
  bool has_truth() const { return mu0.has_value() && mu1.has_value(); }
  Vector true_ite() const;  // throws kMissingTruth without mu0/mu1

  // Throws kArgument on misaligned fields or non-binary treatment.
  void validate() const;
  Dataset subset(const std::vector<std::size_t>& rows) const;
};

enum class HddScenario { kA, kB, kC };

HddScenario parse_scenario(std::string_view text);
char scenario_letter(HddScenario scenario);

struct HddConfig {
  std::size_t p = 2000;
  std::size_t p_star = 20;
  double rho = 0.3;
  double sigma = 1.0;
  double sigma_e = 1.0;
  std::size_t n = 800;
  HddScenario scenario = HddScenario::kA;
  double coef_scale = 0.0;  // 0 selects 1 / sqrt(p_star)
  std::uint64_t seed = 0;

  void validate() const;
};

// The generated coefficients, kept for tests.
struct HddTruth {
  std::vector<std::size_t> outcome_support;
  std::vector<std::size_t> propensity_support;
  Vector beta0;
  Vector beta_tau;
  Vector gamma;
};

Dataset generate_hdd(const HddConfig& config, RngStream& rng, HddTruth* truth = nullptr);

Dataset load_csv(const std::string& path);
void write_csv(const Dataset& data, const std::string& path);

struct SplitResult {
  Dataset train;
  Dataset validation;
  Dataset test;
  std::vector<std::string> warnings;
  std::array<std::vector<std::size_t>, 3> rows;
};

// Part sizes: every part but the last is rounded to nearest, the last takes
// the remainder.
std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& fractions);

SplitResult split(const Dataset& data, const std::array<double, 3>& fractions, RngStream& rng);

// One-nearest-neighbour surrogate ITE on standardized X.
Vector nn_match_ite(const Dataset& data);

}  // namespace drrl

#endif  // DRRL_DATA_HPP_
