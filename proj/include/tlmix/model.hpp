#pragma once

// Domain types and density/moment computations for linear regression with
// errors following a two-level finite mixture of Student-t distributions:
//
//   f(y_i) = sum_j w_j sum_k wdot_jk t(y_i | mu*_j + x_i' beta, sigma2_j, nu_k)
//
// The outer level (J components) carries location and dispersion, the inner
// level (K components) mixes fixed degrees of freedom to shape the tails.

#include <tlmix/error.hpp>

#include <Eigen/Dense>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace tlmix {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Tolerance used when validating simplex constraints.
inline constexpr double kSimplexTolerance = 1e-12;

/// Prior hyperparameters: NIG on (mu*_j, sigma2_j), Dirichlet on w and on each
/// row of wdot, isotropic normal on beta.
struct PriorSpec {
  double mu0 = 0.0;
  double tau = 0.005;
  double alpha_dot = 1.0;
  double beta_dot = 1.5;
  Vector alpha_w;     // J
  Matrix alpha_wdot;  // J x K
  Vector phi;         // p
  double upsilon2 = 1e4;

  /// Uniform Dirichlet weights, phi = 0, remaining fields at their defaults.
  static PriorSpec defaults(int J, int K, int p, double mu0) {
    PriorSpec pr;
    pr.mu0 = mu0;
    pr.alpha_w = Vector::Ones(J);
    pr.alpha_wdot = Matrix::Ones(J, K);
    pr.phi = Vector::Zero(p);
    return pr;
  }
};

/// Immutable problem definition: dimensions, fixed degrees of freedom, priors.
///
/// `tail_per_component` marks the ordinary mixture-of-t layout (K == J, wdot
/// fixed at the identity) in which nu_k belongs to component k and need not be
/// ordered.
struct ModelSpec {
  int J = 1;
  int K = 1;
  int p = 0;
  Vector nu;
  PriorSpec priors;
  bool tail_per_component = false;

  /// Validates and returns a two-level spec. nu must be strictly increasing
  /// with every entry above 2.
  static ModelSpec create(int J, int K, int p, Vector nu, PriorSpec priors) {
    ModelSpec s{J, K, p, std::move(nu), std::move(priors), false};
    s.validate();
    return s;
  }

  /// Ordinary J-component t mixture: K = J and wdot is the identity.
  static ModelSpec ordinary_t(int J, int p, Vector nu, PriorSpec priors) {
    ModelSpec s{J, J, p, std::move(nu), std::move(priors), true};
    s.validate();
    return s;
  }

  void validate() const {
    if (J < 1 || K < 1 || p < 0)
      throw DomainError("ModelSpec: require J >= 1, K >= 1, p >= 0");
    if (nu.size() != K)
      throw DimensionError("ModelSpec: nu must have K entries");
    for (int k = 0; k < K; ++k) {
      if (!std::isfinite(nu[k]) || nu[k] <= 2.0)
        throw DomainError("ModelSpec: every nu_k must be finite and > 2");
      if (!tail_per_component && k > 0 && !(nu[k] > nu[k - 1]))
        throw DomainError("ModelSpec: nu must be strictly increasing");
    }
    if (tail_per_component && K != J)
      throw DimensionError("ModelSpec: ordinary t layout requires K == J");
    const auto& pr = priors;
    if (!std::isfinite(pr.mu0)) throw DomainError("PriorSpec: mu0 must be finite");
    if (!(pr.tau > 0) || !(pr.alpha_dot > 0) || !(pr.beta_dot > 0) || !(pr.upsilon2 > 0))
      throw DomainError("PriorSpec: tau, alpha_dot, beta_dot, upsilon2 must be > 0");
    if (pr.alpha_w.size() != J) throw DimensionError("PriorSpec: alpha_w must have J entries");
    if (pr.alpha_wdot.rows() != J || pr.alpha_wdot.cols() != K)
      throw DimensionError("PriorSpec: alpha_wdot must be J x K");
    if (pr.phi.size() != p) throw DimensionError("PriorSpec: phi must have p entries");
    if ((pr.alpha_w.array() <= 0).any() || (pr.alpha_wdot.array() <= 0).any())
      throw DomainError("PriorSpec: Dirichlet weights must be > 0");
  }
};

/// One draw of the sampled parameters.
struct ParamState {
  Vector mu_star;  // J, unrestricted component means
  Vector sigma2;   // J, squared scales
  Vector w;        // J, simplex
  Matrix wdot;     // J x K, row-stochastic
  Vector beta;     // p
  Vector nu;       // empty unless degrees of freedom are sampled

  bool operator==(const ParamState&) const = default;
};

/// Auxiliary variables. Labels are 0-based internally.
struct LatentState {
  Vector u;
  Eigen::VectorXi z;
  Eigen::VectorXi zdot;
};

/// Response vector and covariates. No intercept column: the intercept lives in
/// mu* and is recovered by identify_transform.
struct Dataset {
  Vector y;
  Matrix X;  // n x p
  std::vector<std::string> ids;

  int n() const { return static_cast<int>(y.size()); }
  int p() const { return static_cast<int>(X.cols()); }

  void validate() const {
    if (y.size() < 1) throw DomainError("Dataset: need at least one observation");
    if (X.rows() != y.size()) throw DimensionError("Dataset: X must have n rows");
    if (!y.allFinite() || !X.allFinite()) throw DomainError("Dataset: non-finite entry");
    if (!ids.empty() && static_cast<int>(ids.size()) != n())
      throw DimensionError("Dataset: ids must have n entries");
  }
};

/// Degrees of freedom in force for `theta`: its own when sampled, else the spec's.
inline const Vector& effective_nu(const ParamState& theta, const ModelSpec& spec) {
  return theta.nu.size() > 0 ? theta.nu : spec.nu;
}

inline void validate(const ParamState& theta, const ModelSpec& spec) {
  const int J = spec.J, K = spec.K;
  if (theta.mu_star.size() != J || theta.sigma2.size() != J || theta.w.size() != J ||
      theta.wdot.rows() != J || theta.wdot.cols() != K || theta.beta.size() != spec.p)
    throw DimensionError("ParamState: dimensions do not match ModelSpec");
  if (theta.nu.size() != 0 && theta.nu.size() != K)
    throw DimensionError("ParamState: nu must be empty or have K entries");
  if (!theta.mu_star.allFinite() || !theta.beta.allFinite())
    throw DomainError("ParamState: non-finite location or coefficient");
  if (!(theta.sigma2.array() > 0).all() || !theta.sigma2.allFinite())
    throw DomainError("ParamState: sigma2 must be positive and finite");
  if ((theta.w.array() < 0).any() || std::abs(theta.w.sum() - 1.0) > kSimplexTolerance)
    throw DomainError("ParamState: w must lie on the simplex");
  for (int j = 0; j < J; ++j)
    if ((theta.wdot.row(j).array() < 0).any() ||
        std::abs(theta.wdot.row(j).sum() - 1.0) > kSimplexTolerance)
      throw DomainError("ParamState: wdot rows must lie on the simplex");
}

/// log(sum_i exp(v_i)); returns -inf for an all -inf input.
inline double log_sum_exp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

/// Normalizing constant of the standard t: lgamma((nu+1)/2) - lgamma(nu/2) - log(nu pi)/2.
/// Uses the gamma ratio directly, which stays accurate for large nu.
inline double student_t_log_const(double nu) {
  return -std::log(boost::math::tgamma_delta_ratio(0.5 * nu, 0.5)) -
         0.5 * std::log(nu * std::numbers::pi);
}

/// Log density of the location-scale Student-t with squared scale sigma2.
inline double student_t_logpdf(double y, double mu, double sigma2, double nu) {
  if (!std::isfinite(y) || !std::isfinite(mu) || !std::isfinite(sigma2) || !std::isfinite(nu))
    throw DomainError("student_t_logpdf: non-finite input");
  if (!(sigma2 > 0) || !(nu > 0)) throw DomainError("student_t_logpdf: require sigma2 > 0, nu > 0");
  const double r = y - mu;
  return student_t_log_const(nu) - 0.5 * std::log(sigma2) -
         0.5 * (nu + 1.0) * std::log1p(r * r / (nu * sigma2));
}

/// Cached per-k constants for repeated mixture evaluations under one nu vector.
class TKernel {
public:
  explicit TKernel(const Vector& nu) : nu_(nu), c_(nu.size()) {
    for (Eigen::Index k = 0; k < nu.size(); ++k) c_[k] = student_t_log_const(nu[k]);
  }

  /// log t(resid | 0, sigma2, nu_k) given log(sigma2).
  double operator()(Eigen::Index k, double resid, double sigma2, double log_sigma2) const {
    const double nu = nu_[k];
    return c_[k] - 0.5 * log_sigma2 - 0.5 * (nu + 1.0) * std::log1p(resid * resid / (nu * sigma2));
  }

  Eigen::Index size() const { return nu_.size(); }

private:
  Vector nu_;
  Vector c_;
};

namespace detail {

inline double mixture_logpdf_at(double resid0, const ParamState& th, const TKernel& kern,
                                std::vector<double>& terms) {
  const Eigen::Index J = th.w.size(), K = kern.size();
  terms.clear();
  for (Eigen::Index j = 0; j < J; ++j) {
    if (th.w[j] <= 0) continue;
    const double lw = std::log(th.w[j]);
    const double s2 = th.sigma2[j];
    const double ls2 = std::log(s2);
    const double r = resid0 - th.mu_star[j];
    for (Eigen::Index k = 0; k < K; ++k) {
      if (th.wdot(j, k) <= 0) continue;
      terms.push_back(lw + std::log(th.wdot(j, k)) + kern(k, r, s2, ls2));
    }
  }
  return log_sum_exp(terms);
}

}  // namespace detail

/// Log mixture density of a response y at covariate row x.
inline double mixture_logpdf(double y, const Eigen::Ref<const Vector>& x, const ParamState& theta,
                             const ModelSpec& spec) {
  if (x.size() != spec.p || theta.beta.size() != spec.p || theta.w.size() != spec.J ||
      theta.wdot.rows() != spec.J || theta.wdot.cols() != spec.K)
    throw DimensionError("mixture_logpdf: dimension mismatch");
  if (!std::isfinite(y)) throw DomainError("mixture_logpdf: non-finite response");
  const TKernel kern(effective_nu(theta, spec));
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(spec.J * spec.K));
  const double lin = spec.p > 0 ? x.dot(theta.beta) : 0.0;
  return detail::mixture_logpdf_at(y - lin, theta, kern, terms);
}

/// Observed-data log-likelihood sum_i log f(y_i | x_i, theta).
inline double log_likelihood(const Dataset& data, const ParamState& theta, const ModelSpec& spec) {
  if (data.p() != spec.p) throw DimensionError("log_likelihood: dataset p differs from spec");
  const TKernel kern(effective_nu(theta, spec));
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(spec.J * spec.K));
  const Vector lin = spec.p > 0 ? Vector(data.X * theta.beta) : Vector::Zero(data.n());
  double ll = 0.0;
  for (int i = 0; i < data.n(); ++i)
    ll += detail::mixture_logpdf_at(data.y[i] - lin[i], theta, kern, terms);
  return ll;
}

/// Intercept and centered component means: beta0 = sum_j w_j mu*_j, mu = mu* - beta0.
struct Identified {
  double beta0;
  Vector mu;
};

inline Identified identify_transform(const ParamState& theta) {
  const double beta0 = theta.w.dot(theta.mu_star);
  return {beta0, (theta.mu_star.array() - beta0).matrix()};
}

/// Total error variance V_eps = sum_j w_j[(mu_j - mu_mix)^2 + s2_j], where
/// component j has variance s2_j = sigma2_j sum_k wdot_jk nu_k / (nu_k - 2).
inline double error_variance(const ParamState& theta, const ModelSpec& spec) {
  const Vector& nu = effective_nu(theta, spec);
  if ((nu.array() <= 2.0).any())
    throw InfiniteVarianceError("error_variance: every nu_k must exceed 2");
  const auto [beta0, mu] = identify_transform(theta);
  const double mix = theta.w.dot(mu);
  const Vector factor = (nu.array() / (nu.array() - 2.0)).matrix();
  double v = 0.0;
  for (Eigen::Index j = 0; j < theta.w.size(); ++j) {
    const double within = theta.sigma2[j] * theta.wdot.row(j).dot(factor);
    v += theta.w[j] * ((mu[j] - mix) * (mu[j] - mix) + within);
  }
  return v;
}

/// Error density at e (intercept removed): sum_j w_j sum_k wdot_jk t(e | mu_j, sigma2_j, nu_k).
inline double error_logpdf(double e, const ParamState& theta, const ModelSpec& spec) {
  ParamState centered = theta;
  centered.mu_star = identify_transform(theta).mu;
  centered.beta = Vector::Zero(spec.p);
  const TKernel kern(effective_nu(theta, spec));
  std::vector<double> terms;
  return detail::mixture_logpdf_at(e, centered, kern, terms);
}

/// Permutes components so that mu* is ascending. Returns the permutation used.
/// In the ordinary-t layout tail k belongs to component k, so the wdot columns
/// and the degrees of freedom are permuted alongside (wdot stays the identity).
inline std::vector<int> relabel_by_location(ParamState& theta, const ModelSpec& spec) {
  const int J = static_cast<int>(theta.mu_star.size());
  std::vector<int> order(J);
  for (int j = 0; j < J; ++j) order[j] = j;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return theta.mu_star[a] < theta.mu_star[b]; });
  ParamState out = theta;
  for (int j = 0; j < J; ++j) {
    out.mu_star[j] = theta.mu_star[order[j]];
    out.sigma2[j] = theta.sigma2[order[j]];
    out.w[j] = theta.w[order[j]];
    out.wdot.row(j) = theta.wdot.row(order[j]);
  }
  if (spec.tail_per_component) {
    const Vector nu = effective_nu(theta, spec);
    const Matrix rows = out.wdot;
    out.nu.resize(J);
    for (int k = 0; k < J; ++k) {
      out.wdot.col(k) = rows.col(order[k]);
      out.nu[k] = nu[order[k]];
    }
  }
  theta = std::move(out);
  return order;
}

}  // namespace tlmix
