#include "drrl/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "drrl/data.hpp"

namespace drrl {

Vector LinearModel::predict_ite(const Matrix& x) const {
  const Eigen::Index p = input_dim();
  if (!fitted || x.cols() != p) throw Error(ErrorCode::kArgument, "linear model: dimension mismatch");
  return (x * coefficients.segment(p + 2, p)).array() + coefficients(p + 1);
}

Vector LinearModel::predict(const Matrix& x, int t) const {
  const Eigen::Index p = input_dim();
  if (!fitted || x.cols() != p) throw Error(ErrorCode::kArgument, "linear model: dimension mismatch");
  Vector out = (x * coefficients.segment(1, p)).array() + coefficients(0);
  if (t == 1) out += predict_ite(x);
  return out;
}

LinearModel ols_interactions(const Dataset& data) {
  data.validate();
  const Eigen::Index n = data.x.rows();
  const Eigen::Index p = data.x.cols();
  Matrix design(n, 2 * p + 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = data.t[static_cast<std::size_t>(i)];
    design(i, 0) = 1.0;
    design.row(i).segment(1, p) = data.x.row(i);
    design(i, p + 1) = t;
    design.row(i).segment(p + 2, p) = t * data.x.row(i);
  }
  Eigen::MatrixXd gram = design.transpose() * design;
  const Vector rhs = design.transpose() * data.y;
  LinearModel model;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-12) {
    gram.diagonal().array() += 1e-8 * gram.trace();
    ldlt.compute(gram);
    model.ridge_used = true;
    if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-15) {
      throw Error(ErrorCode::kEvaluation, "ols_interactions: design is rank deficient beyond ridge fallback");
    }
  }
  model.coefficients = ldlt.solve(rhs);
  if (!model.coefficients.allFinite()) {
    throw Error(ErrorCode::kEvaluation, "ols_interactions: non-finite coefficients");
  }
  model.fitted = true;
  return model;
}

KnnPrediction knn_predict(const Dataset& data, const Matrix& query, std::size_t k) {
  data.validate();
  if (k == 0) throw Error(ErrorCode::kArgument, "knn_predict: k must be at least 1");
  if (query.cols() != data.x.cols()) throw Error(ErrorCode::kArgument, "knn_predict: dimension mismatch");
  const std::size_t treated = data.n_treated();
  if (k > std::min(treated, data.size() - treated)) {
    throw Error(ErrorCode::kArgument, "knn_predict: k exceeds the smaller group size");
  }
  const StandardizedMatrix train = standardize_columns(data.x);
  const Matrix q = train.params.apply(query);
  std::array<std::vector<Eigen::Index>, 2> groups;
  for (std::size_t i = 0; i < data.size(); ++i) {
    groups[static_cast<std::size_t>(data.t[i])].push_back(static_cast<Eigen::Index>(i));
  }
  KnnPrediction out;
  out.f0.resize(q.rows());
  out.f1.resize(q.rows());
  std::vector<std::pair<double, Eigen::Index>> dist;
  for (Eigen::Index r = 0; r < q.rows(); ++r) {
    for (int t = 0; t < 2; ++t) {
      const auto& rows = groups[static_cast<std::size_t>(t)];
      dist.clear();
      for (Eigen::Index i : rows) dist.emplace_back((train.values.row(i) - q.row(r)).squaredNorm(), i);
      std::partial_sort(dist.begin(), dist.begin() + static_cast<long>(k), dist.end());
      double sum = 0.0;
      for (std::size_t j = 0; j < k; ++j) sum += data.y(dist[j].second);
      (t == 0 ? out.f0 : out.f1)(r) = sum / static_cast<double>(k);
    }
  }
  return out;
}

namespace {

std::array<std::vector<Eigen::Index>, 2> group_rows(const Matrix& phi, const Treatment& treatment) {
  if (static_cast<std::size_t>(phi.rows()) != treatment.size()) {
    throw Error(ErrorCode::kArgument, "mmd: phi rows and treatment length differ");
  }
  std::array<std::vector<Eigen::Index>, 2> rows;
  for (std::size_t i = 0; i < treatment.size(); ++i) {
    rows[static_cast<std::size_t>(treatment[i] == 1)].push_back(static_cast<Eigen::Index>(i));
  }
  if (rows[0].empty() || rows[1].empty()) {
    throw Error(ErrorCode::kArgument, "mmd: both treatment groups must be present");
  }
  return rows;
}

}  // namespace

double mmd_rbf(const Matrix& phi, const Treatment& treatment, double bandwidth) {
  if (!(bandwidth > 0.0)) throw Error(ErrorCode::kArgument, "mmd_rbf: bandwidth must be positive");
  const auto rows = group_rows(phi, treatment);
  const double scale = -0.5 / (bandwidth * bandwidth);
  auto mean_kernel = [&](const std::vector<Eigen::Index>& a, const std::vector<Eigen::Index>& b) {
    double acc = 0.0;
    for (Eigen::Index i : a) {
      for (Eigen::Index j : b) acc += std::exp(scale * (phi.row(i) - phi.row(j)).squaredNorm());
    }
    return acc / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
  };
  return mean_kernel(rows[0], rows[0]) + mean_kernel(rows[1], rows[1]) -
         2.0 * mean_kernel(rows[0], rows[1]);
}

double mmd_linear(const Matrix& phi, const Treatment& treatment) {
  const auto rows = group_rows(phi, treatment);
  Vector diff = Vector::Zero(phi.cols());
  for (Eigen::Index i : rows[1]) diff += phi.row(i).transpose() / static_cast<double>(rows[1].size());
  for (Eigen::Index i : rows[0]) diff -= phi.row(i).transpose() / static_cast<double>(rows[0].size());
  return diff.squaredNorm();
}

double median_heuristic_bandwidth(const Matrix& phi) {
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(phi.rows() * (phi.rows() - 1) / 2));
  for (Eigen::Index i = 0; i < phi.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < phi.rows(); ++j) d.push_back((phi.row(i) - phi.row(j)).norm());
  }
  if (d.empty()) return 1.0;
  const double med = median(std::move(d));
  return med > 0.0 ? med : 1.0;
}

Matrix mmd_rbf_grad(const Matrix& phi, const Treatment& treatment, double bandwidth) {
  if (!(bandwidth > 0.0)) throw Error(ErrorCode::kArgument, "mmd_rbf_grad: bandwidth must be positive");
  const auto rows = group_rows(phi, treatment);
  const double h2 = bandwidth * bandwidth;
  const double n0 = static_cast<double>(rows[0].size());
  const double n1 = static_cast<double>(rows[1].size());
  Matrix grad = Matrix::Zero(phi.rows(), phi.cols());
  // d k(a, b) / d a = -k(a, b) (a - b) / h^2
  for (std::size_t g = 0; g < 2; ++g) {
    const double n_own = g == 0 ? n0 : n1;
    for (Eigen::Index a : rows[g]) {
      for (std::size_t h = 0; h < 2; ++h) {
        const double coeff = g == h ? 2.0 / (n_own * n_own) : -2.0 / (n0 * n1);
        for (Eigen::Index b : rows[h]) {
          const auto diff = phi.row(a) - phi.row(b);
          const double k = std::exp(-0.5 * diff.squaredNorm() / h2);
          grad.row(a) -= coeff * k / h2 * diff;
        }
      }
    }
  }
  return grad;
}

}  // namespace drrl
