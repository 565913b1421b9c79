// Dense arithmetic, random streams and stable primitives shared by every
// other module.
#ifndef DRRL_NUMERICS_HPP_
#define DRRL_NUMERICS_HPP_

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace drrl {

// Row-major so that a unit's covariates or representation are contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Binary treatment indicator, one entry per unit (0 = control, 1 = treated).
using Treatment = std::vector<int>;

enum class ErrorCode {
  kArgument,
  kParse,
  kIo,
  kInfeasible,
  kDegenerateBatch,
  kTrainingDiverged,
  kMissingTruth,
  kSeparation,
  kEvaluation,
  kSearchFailed,
  kInternal,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// Seeded 64-bit stream. Two streams with the same (seed, stream id) produce
// identical sequences on every platform: the engine is mt19937_64 seeded via
// seed_seq, and all distributions below are implemented here rather than
// taken from <random>, whose distributions are implementation-defined.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  // Independent child stream keyed by (seed, stream id, child).
  RngStream split(std::uint64_t child) const;

  std::uint64_t next_u64() { return engine_(); }
  double uniform();           // [0, 1)
  double normal();            // standard normal, Marsaglia polar method
  bool bernoulli(double p) { return uniform() < p; }
  std::size_t uniform_index(std::size_t n);  // [0, n), unbiased
  void shuffle(std::vector<std::size_t>& items);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// log(sum(exp(v))) with max-shift.
double logsumexp(std::span<const double> v);
double logsumexp(const Vector& v);

// Rows i.i.d. N(0, sigma^2 [(1 - rho) I + rho 11']).
Matrix sample_equicorrelated(std::size_t n, std::size_t p, double rho, double sigma,
                             RngStream& rng);

struct Standardization {
  Vector means;
  Vector sds;  // zero-variance columns are recorded as 1

  Matrix apply(const Matrix& x) const;
  Matrix invert(const Matrix& z) const;
};

struct StandardizedMatrix {
  Matrix values;
  Standardization params;
};

// Population (1/n) moments.
StandardizedMatrix standardize_columns(const Matrix& x);

// Central differences, one coordinate at a time.
Vector finite_diff_grad(const std::function<double(const Vector&)>& f, const Vector& x,
                        double h);

// Sample mean and (n-1) standard deviation; sd is 0 for fewer than two values.
struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
};
MeanSd mean_sd(std::span<const double> values);

double median(std::vector<double> values);

}  // namespace drrl

#endif  // DRRL_NUMERICS_HPP_
