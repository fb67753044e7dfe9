#pragma once

// Synthetic data for the simulation studies and CSV ingestion of real data.

#include <tlmix/error.hpp>
#include <tlmix/model.hpp>
#include <tlmix/random.hpp>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tlmix {

/// A response-scale error density with its CDF, used as ground truth.
struct TrueDensity {
  std::function<double(double)> pdf;
  std::function<double(double)> cdf;
};

/// One Azzalini-type skew-t component: mu + sqrt(sigma2) * SN(lambda) / sqrt(W),
/// W ~ Gamma(nu/2, nu/2), where SN(lambda) = delta|T0| + sqrt(1 - delta^2) T1 and
/// delta = lambda / sqrt(1 + lambda^2).
struct SkewTComponent {
  double mu = 0.0;
  double sigma2 = 1.0;
  double lambda = 0.0;
  double nu = 4.0;
  double weight = 1.0;
};

struct Moments {
  double mean;
  double variance;
};

/// Closed-form mean and variance of a skew-t component.
inline Moments skew_t_moments(const SkewTComponent& c) {
  if (!(c.sigma2 > 0)) throw DomainError("skew_t_moments: sigma2 must be > 0");
  if (!(c.nu > 2)) throw InfiniteVarianceError("skew_t_moments: variance requires nu > 2");
  const double delta = c.lambda / std::sqrt(1.0 + c.lambda * c.lambda);
  const double b = std::sqrt(c.nu / std::numbers::pi) * boost::math::tgamma_ratio(0.5 * (c.nu - 1.0), 0.5 * c.nu);
  return {c.mu + std::sqrt(c.sigma2) * delta * b, c.sigma2 * (c.nu / (c.nu - 2.0) - delta * delta * b * b)};
}

/// Total variance of a finite mixture of skew-t components (weights must sum to 1).
inline double skew_t_mixture_variance(const std::vector<SkewTComponent>& comps) {
  double mean = 0.0;
  std::vector<Moments> m;
  for (const auto& c : comps) {
    m.push_back(skew_t_moments(c));
    mean += c.weight * m.back().mean;
  }
  double v = 0.0;
  for (std::size_t j = 0; j < comps.size(); ++j)
    v += comps[j].weight * ((m[j].mean - mean) * (m[j].mean - mean) + m[j].variance);
  return v;
}

inline double skew_t_draw(const SkewTComponent& c, Rng& rng) {
  const double delta = c.lambda / std::sqrt(1.0 + c.lambda * c.lambda);
  const double t0 = rnd::normal(rng), t1 = rnd::normal(rng);
  const double sn = delta * std::abs(t0) + std::sqrt(1.0 - delta * delta) * t1;
  const double w = rnd::gamma(rng, 0.5 * c.nu, 0.5 * c.nu);
  return c.mu + std::sqrt(c.sigma2) * sn / std::sqrt(w);
}

/// Density 2/s t(z; nu) T(lambda z sqrt((nu+1)/(nu+z^2)); nu+1), z = (x - mu)/s.
inline double skew_t_pdf(double x, const SkewTComponent& c) {
  const double s = std::sqrt(c.sigma2);
  const double z = (x - c.mu) / s;
  const boost::math::students_t_distribution<double> t(c.nu), t1(c.nu + 1.0);
  const double arg = c.lambda * z * std::sqrt((c.nu + 1.0) / (c.nu + z * z));
  return 2.0 / s * boost::math::pdf(t, z) * boost::math::cdf(t1, arg);
}

/// Draws Z ~ w, Zdot ~ wdot_Z, U ~ Gamma(nu/2, nu/2), e ~ N(mu_Z, sigma2_Z / U),
/// with mu centered (sum_j w_j mu_j = 0). Returns one error per call.
inline double two_level_error_draw(const ParamState& theta, const Vector& mu_centered, const Vector& nu, Rng& rng) {
  const int j = rnd::categorical(rng, theta.w);
  const int k = rnd::categorical(rng, theta.wdot.row(j).transpose());
  const double u = rnd::gamma(rng, 0.5 * nu[k], 0.5 * nu[k]);
  return rnd::normal(rng, mu_centered[j], std::sqrt(theta.sigma2[j] / u));
}

/// Draws y | X, theta together with the latent labels and scales used.
struct SimulatedResponse {
  Vector y;
  LatentState latent;
};

inline SimulatedResponse simulate_response(const Matrix& X, const ParamState& theta, const ModelSpec& spec,
                                           Rng& rng) {
  const auto n = X.rows();
  const Vector& nu = effective_nu(theta, spec);
  SimulatedResponse out{Vector(n), {Vector(n), Eigen::VectorXi(n), Eigen::VectorXi(n)}};
  for (Eigen::Index i = 0; i < n; ++i) {
    const int j = rnd::categorical(rng, theta.w);
    const int k = rnd::categorical(rng, theta.wdot.row(j).transpose());
    const double u = rnd::gamma(rng, 0.5 * nu[k], 0.5 * nu[k]);
    const double mean = theta.mu_star[j] + (spec.p > 0 ? X.row(i).dot(theta.beta) : 0.0);
    out.y[i] = rnd::normal(rng, mean, std::sqrt(theta.sigma2[j] / u));
    out.latent.z[i] = j;
    out.latent.zdot[i] = k;
    out.latent.u[i] = u;
  }
  return out;
}

/// CDF of the two-level error mixture (intercept removed).
inline double two_level_error_cdf(double e, const ParamState& theta, const ModelSpec& spec) {
  const Vector mu = identify_transform(theta).mu;
  const Vector& nu = effective_nu(theta, spec);
  double F = 0.0;
  for (int j = 0; j < spec.J; ++j)
    for (int k = 0; k < spec.K; ++k) {
      if (theta.wdot(j, k) <= 0) continue;
      const boost::math::students_t_distribution<double> t(nu[k]);
      F += theta.w[j] * theta.wdot(j, k) * boost::math::cdf(t, (e - mu[j]) / std::sqrt(theta.sigma2[j]));
    }
  return F;
}

inline TrueDensity two_level_error_density(const ParamState& theta, const ModelSpec& spec) {
  return {[theta, spec](double e) { return std::exp(error_logpdf(e, theta, spec)); },
          [theta, spec](double e) { return two_level_error_cdf(e, theta, spec); }};
}

/// Output of a simulation study: data, errors and the generating truth.
struct Study1 {
  Dataset data;
  Vector errors;
  ParamState truth;  // mu* = mu + beta0
  ModelSpec truth_spec;
  double beta0;
};

/// Study 1: J = K = 2 two-level errors, w = (0.6, 0.4), wdot_j = (0.5, 0.5),
/// sigma2 = (1, 0.75), nu = (2.8, 4), mu = (-1, 1.5); X1 ~ N(0,1), X2 ~ U(0,1);
/// (beta0, beta1, beta2) = (1, -2, 1).
inline Study1 study1_truth() {
  Study1 s;
  s.beta0 = 1.0;
  PriorSpec pr = PriorSpec::defaults(2, 2, 2, 0.0);
  s.truth_spec = ModelSpec::create(2, 2, 2, (Vector(2) << 2.8, 4.0).finished(), pr);
  s.truth.w = (Vector(2) << 0.6, 0.4).finished();
  s.truth.wdot = Matrix::Constant(2, 2, 0.5);
  s.truth.sigma2 = (Vector(2) << 1.0, 0.75).finished();
  s.truth.mu_star = (Vector(2) << -1.0 + s.beta0, 1.5 + s.beta0).finished();
  s.truth.beta = (Vector(2) << -2.0, 1.0).finished();
  return s;
}

inline Study1 simulate_study1(int n, std::uint64_t seed) {
  if (n < 1) throw DomainError("simulate_study1: n must be >= 1");
  Study1 s = study1_truth();
  Rng rng(seed);
  const Vector mu = identify_transform(s.truth).mu;
  s.data.X.resize(n, 2);
  s.data.y.resize(n);
  s.errors.resize(n);
  for (int i = 0; i < n; ++i) {
    const double x1 = rnd::normal(rng);
    const double x2 = rnd::uniform(rng);
    const double e = two_level_error_draw(s.truth, mu, s.truth_spec.nu, rng);
    s.data.X(i, 0) = x1;
    s.data.X(i, 1) = x2;
    s.errors[i] = e;
    s.data.y[i] = s.beta0 - 2.0 * x1 + x2 + e;
  }
  return s;
}

struct Study2 {
  Dataset data;
  Vector errors;
  double beta0 = 1.0;
  Vector beta;
  std::vector<SkewTComponent> components;

  /// Closed-form total error variance.
  double error_variance() const { return skew_t_mixture_variance(components); }
  double error_mean() const {
    double m = 0.0;
    for (const auto& c : components) m += c.weight * skew_t_moments(c).mean;
    return m;
  }
  /// Density of the centered error e - E[e], comparable with fitted error densities.
  TrueDensity density() const;
};

inline TrueDensity Study2::density() const {
  auto comps = components;
  const double shift = error_mean();
  auto pdf = [comps, shift](double x) {
    double f = 0.0;
    for (const auto& c : comps) f += c.weight * skew_t_pdf(x + shift, c);
    return f;
  };
  auto cdf = [pdf](double x) {
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        pdf, -std::numeric_limits<double>::infinity(), x, 15, 1e-12);
  };
  return {pdf, cdf};
}

/// Study 2: two skew-t components, w = (0.6, 0.4), sigma2 = (1, 0.75),
/// nu = (2.8, 4), lambda = (-1.5, 0.8), mu = (-0.8, 1.2); X1 ~ N(0,1),
/// X2 ~ Bernoulli(0.5); (beta0, beta1, beta2) = (1, -2, 1).
inline Study2 study2_truth() {
  Study2 s;
  s.beta = (Vector(2) << -2.0, 1.0).finished();
  s.components = {{-0.8, 1.0, -1.5, 2.8, 0.6}, {1.2, 0.75, 0.8, 4.0, 0.4}};
  return s;
}

inline Study2 simulate_study2(int n, std::uint64_t seed) {
  if (n < 1) throw DomainError("simulate_study2: n must be >= 1");
  Study2 s = study2_truth();
  Rng rng(seed);
  const Vector w = (Vector(2) << s.components[0].weight, s.components[1].weight).finished();
  s.data.X.resize(n, 2);
  s.data.y.resize(n);
  s.errors.resize(n);
  for (int i = 0; i < n; ++i) {
    const double x1 = rnd::normal(rng);
    const double x2 = rnd::uniform(rng) < 0.5 ? 1.0 : 0.0;
    const double e = skew_t_draw(s.components[rnd::categorical(rng, w)], rng);
    s.data.X(i, 0) = x1;
    s.data.X(i, 1) = x2;
    s.errors[i] = e;
    s.data.y[i] = s.beta0 + s.beta[0] * x1 + s.beta[1] * x2 + e;
  }
  return s;
}

/// Body-weight-like regression used as a stand-in for survey data: covariates
/// age ~ U(18, 80), male ~ Bernoulli(0.5), diabetes ~ Bernoulli(0.1);
/// y = 66 + 0.15 age + 12 male + 8 diabetes + e, with right-skewed two-level
/// errors scaled so that Var(e) = 23^2.
inline Study1 simulate_weight_survey(int n, std::uint64_t seed, double error_sd = 23.0) {
  if (n < 1) throw DomainError("simulate_weight_survey: n must be >= 1");
  Study1 s;
  s.beta0 = 66.0;
  PriorSpec pr = PriorSpec::defaults(2, 2, 3, 0.0);
  s.truth_spec = ModelSpec::create(2, 2, 3, (Vector(2) << 6.0, 14.4).finished(), pr);
  s.truth.w = (Vector(2) << 0.7, 0.3).finished();
  s.truth.wdot = Matrix::Constant(2, 2, 0.5);
  s.truth.mu_star = (Vector(2) << -6.0 + s.beta0, 14.0 + s.beta0).finished();
  s.truth.beta = (Vector(3) << 0.15, 12.0, 8.0).finished();
  // between-component spread is fixed; solve the common sigma2 for the target variance
  s.truth.sigma2 = Vector::Ones(2);
  const double at_one = error_variance(s.truth, s.truth_spec);
  const double spread = 0.7 * 36.0 + 0.3 * 196.0;
  s.truth.sigma2.setConstant((error_sd * error_sd - spread) / (at_one - spread));

  Rng rng(seed);
  const Vector mu = identify_transform(s.truth).mu;
  s.data.X.resize(n, 3);
  s.data.y.resize(n);
  s.errors.resize(n);
  for (int i = 0; i < n; ++i) {
    s.data.X(i, 0) = 18.0 + 62.0 * rnd::uniform(rng);
    s.data.X(i, 1) = rnd::uniform(rng) < 0.5 ? 1.0 : 0.0;
    s.data.X(i, 2) = rnd::uniform(rng) < 0.1 ? 1.0 : 0.0;
    s.errors[i] = two_level_error_draw(s.truth, mu, s.truth_spec.nu, rng);
    s.data.y[i] = s.beta0 + s.data.X.row(i).dot(s.truth.beta) + s.errors[i];
  }
  return s;
}

// ---------------------------------------------------------------------------
// CSV ingestion

namespace detail {

// Splits one RFC-4180 record (no embedded newlines). Returns false on an
// unterminated quote.
inline bool split_csv_record(std::string_view line, std::vector<std::string>& out) {
  out.clear();
  std::string field;
  bool quoted = false, was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') { field += '"'; ++i; }
        else quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"' && field.empty() && !was_quoted) {
      quoted = was_quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
      was_quoted = false;
    } else {
      field += c;
    }
  }
  if (quoted) return false;
  out.push_back(std::move(field));
  return true;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline bool is_missing(std::string_view s) {
  s = trim(s);
  return s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "nan" || s == ".";
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

/// Column names from the header row.
inline std::vector<std::string> csv_header(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::string line;
  std::vector<std::string> fields;
  if (!std::getline(in, line) || !detail::split_csv_record(line, fields))
    throw ParseError("missing or malformed header row in '" + path + "'", 1);
  for (auto& f : fields) f = std::string(detail::trim(f));
  return fields;
}

struct LoadedDataset {
  Dataset data;
  std::size_t dropped_rows = 0;  // rows with a missing value in a used column
  std::vector<std::string> covariate_names;
};

/// Reads a CSV with a header row. Rows with a missing value (empty, NA, NaN)
/// in any used column are dropped and counted; any other unparsable value is
/// an error naming the line. An empty response name reads covariates only and
/// leaves y at zero.
inline LoadedDataset load_csv(const std::string& path, const std::string& response_column,
                              const std::vector<std::string>& covariate_columns,
                              const std::string& id_column = {}) {
  std::ifstream in(path);
  if (!in) throw Error("load_csv: cannot open '" + path + "'");
  std::string line;
  std::vector<std::string> fields;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError("load_csv: missing header row in '" + path + "'", 1);
  ++lineno;
  if (!detail::split_csv_record(line, fields)) throw ParseError("load_csv: malformed header", lineno);
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < fields.size(); ++c) index.emplace(std::string(detail::trim(fields[c])), c);
  const std::size_t width = fields.size();
  auto column = [&](const std::string& name) {
    const auto it = index.find(name);
    if (it == index.end()) throw Error("load_csv: column '" + name + "' not found in '" + path + "'");
    return it->second;
  };
  const bool has_y = !response_column.empty();
  const std::size_t ycol = has_y ? column(response_column) : 0;
  std::vector<std::size_t> xcols;
  for (const auto& c : covariate_columns) xcols.push_back(column(c));
  const std::optional<std::size_t> idcol =
      id_column.empty() ? std::nullopt : std::optional<std::size_t>(column(id_column));

  std::vector<double> ys, xs;
  std::vector<std::string> ids;
  LoadedDataset out;
  out.covariate_names = covariate_columns;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    if (!detail::split_csv_record(line, fields)) throw ParseError("load_csv: unterminated quote", lineno);
    if (fields.size() != width)
      throw ParseError("load_csv: expected " + std::to_string(width) + " fields, found " +
                           std::to_string(fields.size()),
                       lineno);
    bool missing = has_y && detail::is_missing(fields[ycol]);
    for (auto c : xcols) missing = missing || detail::is_missing(fields[c]);
    if (missing) {
      ++out.dropped_rows;
      continue;
    }
    auto parse = [&](std::size_t c) {
      const auto v = detail::parse_double(fields[c]);
      if (!v) throw ParseError("load_csv: cannot parse '" + fields[c] + "' as a number", lineno);
      return *v;
    };
    ys.push_back(has_y ? parse(ycol) : 0.0);
    for (auto c : xcols) xs.push_back(parse(c));
    if (idcol) ids.emplace_back(detail::trim(fields[*idcol]));
  }
  const auto n = static_cast<Eigen::Index>(ys.size());
  const auto p = static_cast<Eigen::Index>(xcols.size());
  out.data.y = Eigen::Map<Vector>(ys.data(), n);
  out.data.X = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(xs.data(), n, p);
  out.data.ids = std::move(ids);
  out.data.validate();
  return out;
}

}  // namespace tlmix
