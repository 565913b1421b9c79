#include "drrl/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace drrl {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kArgument:
      return "argument-error";
    case ErrorCode::kParse:
      return "parse-error";
    case ErrorCode::kIo:
      return "io-error";
    case ErrorCode::kInfeasible:
      return "infeasible-or-poor-overlap";
    case ErrorCode::kDegenerateBatch:
      return "degenerate-batch";
    case ErrorCode::kTrainingDiverged:
      return "training-diverged";
    case ErrorCode::kMissingTruth:
      return "missing-ground-truth";
    case ErrorCode::kSeparation:
      return "separation";
    case ErrorCode::kEvaluation:
      return "evaluation-error";
    case ErrorCode::kSearchFailed:
      return "search-failed";
    case ErrorCode::kInternal:
      return "internal-error";
  }
  return "internal-error";
}

namespace {

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream_id),
                    static_cast<std::uint32_t>(stream_id >> 32), 0x6472726cu};
  return std::mt19937_64(seq);
}

// splitmix64 finalizer, used to derive child stream ids.
std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(make_engine(seed, stream_id)) {}

RngStream RngStream::split(std::uint64_t child) const {
  return RngStream(seed_, mix64(stream_id_ ^ mix64(child + 1)));
}

double RngStream::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double factor = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * factor;
  has_spare_ = true;
  return u * factor;
}

std::size_t RngStream::uniform_index(std::size_t n) {
  if (n == 0) throw Error(ErrorCode::kArgument, "uniform_index: empty range");
  const std::uint64_t range = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % range;
  std::uint64_t draw;
  do {
    draw = engine_();
  } while (draw >= limit);
  return static_cast<std::size_t>(draw % range);
}

void RngStream::shuffle(std::vector<std::size_t>& items) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[uniform_index(i)]);
  }
}

double logsumexp(std::span<const double> v) {
  if (v.empty()) throw Error(ErrorCode::kArgument, "logsumexp: empty vector");
  const double top = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(top)) return top;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - top);
  return top + std::log(acc);
}

double logsumexp(const Vector& v) {
  return logsumexp(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

Matrix sample_equicorrelated(std::size_t n, std::size_t p, double rho, double sigma,
                             RngStream& rng) {
  if (!(rho >= 0.0 && rho < 1.0)) {
    throw Error(ErrorCode::kArgument, "sample_equicorrelated: rho must lie in [0, 1)");
  }
  if (!(sigma > 0.0)) {
    throw Error(ErrorCode::kArgument, "sample_equicorrelated: sigma must be positive");
  }
  const double shared = std::sqrt(rho);
  const double own = std::sqrt(1.0 - rho);
  Matrix x(n, p);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = rng.normal();
    for (std::size_t j = 0; j < p; ++j) {
      x(i, j) = sigma * (shared * g + own * rng.normal());
    }
  }
  return x;
}

Matrix Standardization::apply(const Matrix& x) const {
  if (x.cols() != means.size()) {
    throw Error(ErrorCode::kArgument, "standardization: column count mismatch");
  }
  Matrix z = x.rowwise() - means.transpose();
  return z.array().rowwise() / sds.transpose().array();
}

Matrix Standardization::invert(const Matrix& z) const {
  Matrix x = z.array().rowwise() * sds.transpose().array();
  return x.rowwise() + means.transpose();
}

StandardizedMatrix standardize_columns(const Matrix& x) {
  if (x.rows() == 0 || x.cols() == 0) {
    throw Error(ErrorCode::kArgument, "standardize_columns: empty matrix");
  }
  const double n = static_cast<double>(x.rows());
  StandardizedMatrix out;
  out.params.means = x.colwise().sum().transpose() / n;
  out.params.sds.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double var = (x.col(j).array() - out.params.means(j)).square().sum() / n;
    const double sd = std::sqrt(var);
    const double scale = std::max(1.0, std::abs(out.params.means(j)));
    out.params.sds(j) = sd > 1e-12 * scale ? sd : 1.0;
  }
  out.values = out.params.apply(x);
  return out;
}

Vector finite_diff_grad(const std::function<double(const Vector&)>& f, const Vector& x,
                        double h) {
  if (!(h > 0.0)) throw Error(ErrorCode::kArgument, "finite_diff_grad: h must be positive");
  Vector grad(x.size());
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe(i) = x(i) + h;
    const double up = f(probe);
    probe(i) = x(i) - h;
    const double down = f(probe);
    probe(i) = x(i);
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw Error(ErrorCode::kEvaluation,
                  "finite_diff_grad: non-finite value at coordinate " + std::to_string(i));
    }
    grad(i) = (up - down) / (2.0 * h);
  }
  return grad;
}

MeanSd mean_sd(std::span<const double> values) {
  MeanSd out;
  if (values.empty()) return out;
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) /
             static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorCode::kArgument, "median: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

}  // namespace drrl
