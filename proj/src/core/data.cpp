#include "drrl/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace drrl {

std::size_t Dataset::n_treated() const {
  return static_cast<std::size_t>(std::count(t.begin(), t.end(), 1));
}

Vector Dataset::true_ite() const {
  if (!has_truth()) throw Error(ErrorCode::kMissingTruth, "dataset has no mu0/mu1 columns");
  return *mu1 - *mu0;
}

void Dataset::validate() const {
  const auto n = static_cast<Eigen::Index>(t.size());
  if (x.rows() != n || y.size() != n) {
    throw Error(ErrorCode::kArgument, "dataset: x, t and y must have the same number of rows");
  }
  for (int v : t) {
    if (v != 0 && v != 1) throw Error(ErrorCode::kArgument, "dataset: treatment must be 0 or 1");
  }
  auto check = [n](const std::optional<Vector>& v, const char* name) {
    if (v && v->size() != n) {
      throw Error(ErrorCode::kArgument, std::string("dataset: column ") + name + " is misaligned");
    }
  };
  check(mu0, "mu0");
  check(mu1, "mu1");
  check(e_true, "e");
  if (mu0.has_value() != mu1.has_value()) {
    throw Error(ErrorCode::kArgument, "dataset: mu0 and mu1 must be given together");
  }
  if (randomized && static_cast<Eigen::Index>(randomized->size()) != n) {
    throw Error(ErrorCode::kArgument, "dataset: column rand is misaligned");
  }
  if (!column_names.empty() && static_cast<Eigen::Index>(column_names.size()) != x.cols()) {
    throw Error(ErrorCode::kArgument, "dataset: column name count differs from p");
  }
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset out;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.x.resize(n, x.cols());
  out.y.resize(n);
  out.t.resize(rows.size());
  auto take = [&](const std::optional<Vector>& src, std::optional<Vector>& dst) {
    if (!src) return;
    Vector v(n);
    for (Eigen::Index r = 0; r < n; ++r) v(r) = (*src)(static_cast<Eigen::Index>(rows[r]));
    dst = std::move(v);
  };
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto src = static_cast<Eigen::Index>(rows[r]);
    out.x.row(r) = x.row(src);
    out.y(r) = y(src);
    out.t[r] = t[rows[r]];
  }
  take(mu0, out.mu0);
  take(mu1, out.mu1);
  take(e_true, out.e_true);
  if (randomized) {
    std::vector<int> flags(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) flags[r] = (*randomized)[rows[r]];
    out.randomized = std::move(flags);
  }
  out.column_names = column_names;
  return out;
}

HddScenario parse_scenario(std::string_view text) {
  if (text == "A" || text == "a") return HddScenario::kA;
  if (text == "B" || text == "b") return HddScenario::kB;
  if (text == "C" || text == "c") return HddScenario::kC;
  throw Error(ErrorCode::kArgument, "unknown HDD scenario '" + std::string(text) + "'");
}

char scenario_letter(HddScenario scenario) {
  switch (scenario) {
    case HddScenario::kA:
      return 'A';
    case HddScenario::kB:
      return 'B';
    case HddScenario::kC:
      return 'C';
  }
  return '?';
}

void HddConfig::validate() const {
  if (p == 0 || p_star == 0 || n == 0) {
    throw Error(ErrorCode::kArgument, "hdd: p, p_star and n must be positive");
  }
  if (p_star > p) throw Error(ErrorCode::kArgument, "hdd: p_star must not exceed p");
  if (scenario == HddScenario::kB && p_star % 2 != 0) {
    throw Error(ErrorCode::kArgument, "hdd: scenario B needs an even p_star");
  }
  if (scenario == HddScenario::kB && p_star + p_star / 2 > p) {
    throw Error(ErrorCode::kArgument, "hdd: scenario B needs 3 p_star / 2 <= p");
  }
  if (scenario == HddScenario::kC && 2 * p_star > p) {
    throw Error(ErrorCode::kArgument, "hdd: scenario C needs 2 p_star <= p for disjoint supports");
  }
  if (!(rho >= 0.0 && rho < 1.0)) throw Error(ErrorCode::kArgument, "hdd: rho must lie in [0, 1)");
  if (!(sigma > 0.0)) throw Error(ErrorCode::kArgument, "hdd: sigma must be positive");
  if (!(sigma_e >= 0.0)) throw Error(ErrorCode::kArgument, "hdd: sigma_e must be non-negative");
  if (!(coef_scale >= 0.0)) throw Error(ErrorCode::kArgument, "hdd: coef_scale must be >= 0");
}

Dataset generate_hdd(const HddConfig& config, RngStream& rng, HddTruth* truth) {
  config.validate();
  const std::size_t p = config.p;
  const std::size_t ps = config.p_star;
  RngStream coef_rng = rng.split(0);
  RngStream x_rng = rng.split(1);
  RngStream t_rng = rng.split(2);
  RngStream noise_rng = rng.split(3);

  std::vector<std::size_t> perm(p);
  std::iota(perm.begin(), perm.end(), 0);
  coef_rng.shuffle(perm);
  std::vector<std::size_t> outcome_support(perm.begin(), perm.begin() + static_cast<long>(ps));
  std::vector<std::size_t> propensity_support;
  switch (config.scenario) {
    case HddScenario::kA:
      propensity_support = outcome_support;
      break;
    case HddScenario::kB:
      propensity_support.assign(outcome_support.begin(), outcome_support.begin() + static_cast<long>(ps / 2));
      propensity_support.insert(propensity_support.end(), perm.begin() + static_cast<long>(ps),
                                perm.begin() + static_cast<long>(ps + ps / 2));
      break;
    case HddScenario::kC:
      propensity_support.assign(perm.begin() + static_cast<long>(ps), perm.begin() + static_cast<long>(2 * ps));
      break;
  }

  const double scale = config.coef_scale > 0.0 ? config.coef_scale : 1.0 / std::sqrt(static_cast<double>(ps));
  auto random_sign = [&coef_rng] { return coef_rng.bernoulli(0.5) ? 1.0 : -1.0; };
  Vector beta0 = Vector::Zero(static_cast<Eigen::Index>(p));
  Vector beta_tau = Vector::Zero(static_cast<Eigen::Index>(p));
  Vector gamma = Vector::Zero(static_cast<Eigen::Index>(p));
  for (std::size_t j : outcome_support) beta0(static_cast<Eigen::Index>(j)) = scale * random_sign();
  for (std::size_t j : outcome_support) beta_tau(static_cast<Eigen::Index>(j)) = scale * random_sign();
  double sign_sum = 0.0;
  for (std::size_t j : propensity_support) {
    const double s = random_sign();
    gamma(static_cast<Eigen::Index>(j)) = s;
    sign_sum += s;
  }
  // sd(X gamma) = 1 under the equicorrelated covariance.
  const double c = 1.0 / (config.sigma * std::sqrt((1.0 - config.rho) * static_cast<double>(ps) +
                                                   config.rho * sign_sum * sign_sum));
  gamma *= c;

  Dataset data;
  data.x = sample_equicorrelated(config.n, p, config.rho, config.sigma, x_rng);
  const Vector logit = data.x * gamma;
  Vector e(logit.size());
  data.t.resize(config.n);
  for (Eigen::Index i = 0; i < logit.size(); ++i) {
    e(i) = 1.0 / (1.0 + std::exp(-logit(i)));
    data.t[static_cast<std::size_t>(i)] = t_rng.bernoulli(e(i)) ? 1 : 0;
  }
  Vector mu0 = data.x * beta0;
  Vector mu1 = mu0 + data.x * beta_tau;
  data.y.resize(mu0.size());
  for (Eigen::Index i = 0; i < mu0.size(); ++i) {
    const double mean = data.t[static_cast<std::size_t>(i)] == 1 ? mu1(i) : mu0(i);
    data.y(i) = mean + config.sigma_e * noise_rng.normal();
  }
  data.mu0 = std::move(mu0);
  data.mu1 = std::move(mu1);
  data.e_true = std::move(e);
  data.column_names.reserve(p);
  for (std::size_t j = 0; j < p; ++j) data.column_names.push_back("x" + std::to_string(j + 1));

  if (truth) {
    truth->outcome_support = std::move(outcome_support);
    truth->propensity_support = std::move(propensity_support);
    truth->beta0 = std::move(beta0);
    truth->beta_tau = std::move(beta_tau);
    truth->gamma = std::move(gamma);
  }
  return data;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                         : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  for (auto& f : fields) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.remove_suffix(1);
  }
  return fields;
}

double parse_number(std::string_view field, std::size_t line_no, std::string_view column) {
  double value = 0.0;
  const char* begin = field.data();
  const char* end = field.data() + field.size();
  if (!field.empty() && *begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (field.empty() || ec != std::errc() || ptr != end || !std::isfinite(value)) {
    throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": column '" +
                                       std::string(column) + "' has non-numeric value '" +
                                       std::string(field) + "'");
  }
  return value;
}

bool is_covariate_name(std::string_view name, std::size_t& index) {
  if (name.size() < 2 || name[0] != 'x') return false;
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(name.data() + 1, name.data() + name.size(), value);
  if (ec != std::errc() || ptr != name.data() + name.size() || value == 0) return false;
  index = value;
  return true;
}

}  // namespace

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path + "' for reading");
  std::string line;
  std::size_t line_no = 0;
  do {
    if (!std::getline(in, line)) throw Error(ErrorCode::kParse, "'" + path + "': missing header row");
    ++line_no;
  } while (line.find_first_not_of(" \t\r") == std::string::npos);
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM

  enum class Role { kT, kY, kMu0, kMu1, kE, kRand, kX };
  const std::vector<std::string_view> header_view = split_fields(line);
  std::vector<std::string> header(header_view.begin(), header_view.end());
  std::vector<Role> roles;
  std::vector<std::string> x_names;
  std::vector<int> seen(6, 0);
  for (const std::string& name : header) {
    std::size_t idx = 0;
    Role role;
    if (name == "t") role = Role::kT;
    else if (name == "y") role = Role::kY;
    else if (name == "mu0") role = Role::kMu0;
    else if (name == "mu1") role = Role::kMu1;
    else if (name == "e") role = Role::kE;
    else if (name == "rand") role = Role::kRand;
    else if (is_covariate_name(name, idx)) {
      role = Role::kX;
      if (idx != x_names.size() + 1) {
        throw Error(ErrorCode::kParse, "line 1: covariate columns must be x1..xp in order, found '" +
                                           name + "'");
      }
      x_names.push_back(name);
    } else {
      throw Error(ErrorCode::kParse, "line 1: unknown column '" + name + "'");
    }
    if (role != Role::kX) {
      if (seen[static_cast<std::size_t>(role)]++) {
        throw Error(ErrorCode::kParse, "line 1: duplicate column '" + name + "'");
      }
    }
    roles.push_back(role);
  }
  if (!seen[0]) throw Error(ErrorCode::kParse, "line 1: mandatory column 't' is missing");
  if (!seen[1]) throw Error(ErrorCode::kParse, "line 1: mandatory column 'y' is missing");
  if (x_names.empty()) throw Error(ErrorCode::kParse, "line 1: no covariate columns x1..xp");
  if (seen[2] != seen[3]) throw Error(ErrorCode::kParse, "line 1: mu0 and mu1 must appear together");

  std::vector<double> xs, ys, mu0, mu1, es;
  std::vector<int> ts, rand;
  const std::size_t p = x_names.size();
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": expected " +
                                         std::to_string(header.size()) + " fields, found " +
                                         std::to_string(fields.size()));
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const double v = parse_number(fields[c], line_no, header[c]);
      switch (roles[c]) {
        case Role::kT:
        case Role::kRand:
          if (v != 0.0 && v != 1.0) {
            throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": column '" +
                                               header[c] + "' must be 0 or 1");
          }
          (roles[c] == Role::kT ? ts : rand).push_back(static_cast<int>(v));
          break;
        case Role::kY:
          ys.push_back(v);
          break;
        case Role::kMu0:
          mu0.push_back(v);
          break;
        case Role::kMu1:
          mu1.push_back(v);
          break;
        case Role::kE:
          es.push_back(v);
          break;
        case Role::kX:
          xs.push_back(v);
          break;
      }
    }
  }
  if (ts.empty()) throw Error(ErrorCode::kParse, "'" + path + "': no data rows");

  Dataset data;
  const auto n = static_cast<Eigen::Index>(ts.size());
  data.x = Eigen::Map<Matrix>(xs.data(), n, static_cast<Eigen::Index>(p));
  data.t = std::move(ts);
  data.y = Eigen::Map<Vector>(ys.data(), n);
  if (seen[2]) {
    data.mu0 = Eigen::Map<Vector>(mu0.data(), n);
    data.mu1 = Eigen::Map<Vector>(mu1.data(), n);
  }
  if (seen[4]) data.e_true = Eigen::Map<Vector>(es.data(), n);
  if (seen[5]) data.randomized = std::move(rand);
  data.column_names = std::move(x_names);
  return data;
}

void write_csv(const Dataset& data, const std::string& path) {
  data.validate();
  std::FILE* out = std::fopen(path.c_str(), "w");
  if (!out) throw Error(ErrorCode::kIo, "cannot open '" + path + "' for writing");
  std::string header = "t,y";
  if (data.has_truth()) header += ",mu0,mu1";
  if (data.e_true) header += ",e";
  if (data.randomized) header += ",rand";
  for (Eigen::Index j = 0; j < data.x.cols(); ++j) header += ",x" + std::to_string(j + 1);
  std::fprintf(out, "%s\n", header.c_str());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    std::fprintf(out, "%d,%.17g", data.t[i], data.y(r));
    if (data.has_truth()) std::fprintf(out, ",%.17g,%.17g", (*data.mu0)(r), (*data.mu1)(r));
    if (data.e_true) std::fprintf(out, ",%.17g", (*data.e_true)(r));
    if (data.randomized) std::fprintf(out, ",%d", (*data.randomized)[i]);
    for (Eigen::Index j = 0; j < data.x.cols(); ++j) std::fprintf(out, ",%.17g", data.x(r, j));
    std::fputc('\n', out);
  }
  if (std::fclose(out) != 0) throw Error(ErrorCode::kIo, "error while writing '" + path + "'");
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& fractions) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw Error(ErrorCode::kArgument, "split: fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::kArgument, "split: fractions must sum to 1");
  std::array<std::size_t, 3> sizes{};
  std::size_t used = 0;
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    sizes[k] = std::min(n - used, static_cast<std::size_t>(std::llround(fractions[k] * static_cast<double>(n))));
    used += sizes[k];
  }
  sizes.back() = n - used;
  return sizes;
}

SplitResult split(const Dataset& data, const std::array<double, 3>& fractions, RngStream& rng) {
  const auto sizes = split_sizes(data.size(), fractions);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  SplitResult out;
  std::size_t offset = 0;
  const char* names[] = {"train", "validation", "test"};
  Dataset* parts[] = {&out.train, &out.validation, &out.test};
  for (std::size_t k = 0; k < 3; ++k) {
    out.rows[k].assign(order.begin() + static_cast<long>(offset),
                       order.begin() + static_cast<long>(offset + sizes[k]));
    offset += sizes[k];
    *parts[k] = data.subset(out.rows[k]);
    if (fractions[k] > 0.0) {
      const std::size_t treated = parts[k]->n_treated();
      if (sizes[k] == 0) {
        out.warnings.push_back(std::string(names[k]) + " split is empty");
      } else if (treated == 0 || treated == sizes[k]) {
        out.warnings.push_back(std::string(names[k]) + " split contains a single treatment group");
      }
    }
  }
  return out;
}

Vector nn_match_ite(const Dataset& data) {
  data.validate();
  const std::size_t treated = data.n_treated();
  if (treated == 0 || treated == data.size()) {
    throw Error(ErrorCode::kArgument, "nn_match_ite: both treatment groups must be present");
  }
  const Matrix z = standardize_columns(data.x).values;
  const auto n = static_cast<Eigen::Index>(data.size());
  Vector out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int ti = data.t[static_cast<std::size_t>(i)];
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index match = -1;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (data.t[static_cast<std::size_t>(j)] == ti) continue;
      const double d = (z.row(i) - z.row(j)).squaredNorm();
      if (d < best) {
        best = d;
        match = j;
      }
    }
    out(i) = (2.0 * ti - 1.0) * (data.y(i) - data.y(match));
  }
  return out;
}

}  // namespace drrl
