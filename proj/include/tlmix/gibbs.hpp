#pragma once

// Blocked Gibbs sampler for the two-level Student-t mixture regression.
//
// Blocks, in sweep order: (Z, Zdot, U), (w, wdot), (mu*, sigma2), beta and,
// for the ordinary mixture-of-t variant with nu sampling, a Metropolis step
// on each component's degrees of freedom.
//
// With t-kernel r_ikj = t(y_i | mu*_j + x_i'beta, sigma2_j, nu_k):
//   P(Z_i = j | .)          ∝ w_j sum_k wdot_jk r_ikj
//   P(Zdot_i = k | Z_i = j) ∝ wdot_jk r_ikj
//   U_i | Z_i=j, Zdot_i=k   ~ Gamma((nu_k + 1)/2, nu_k/2 + e_ij^2 / (2 sigma2_j))
//   w | .                   ~ Dir(alpha_w + n_j),  wdot_j | . ~ Dir(alpha_wdot_j + n_jk)
//   (mu*_j, sigma2_j) | .   ~ NIG over residuals y_i - x_i'beta with weights u_i
//   beta | .                ~ N_p with precision I/upsilon2 + sum_i (u_i/sigma2_zi) x_i x_i'

#include <tlmix/error.hpp>
#include <tlmix/model.hpp>
#include <tlmix/nuplan.hpp>
#include <tlmix/random.hpp>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tlmix {

enum class Variant { TwoLevel, OrdinaryT };

inline std::string_view to_string(Variant v) {
  return v == Variant::TwoLevel ? "two-level" : "ordinary-t";
}

inline Variant parse_variant(std::string_view s) {
  if (s == "two-level") return Variant::TwoLevel;
  if (s == "ordinary-t") return Variant::OrdinaryT;
  throw DomainError("unknown variant '" + std::string(s) + "'");
}

struct SamplerConfig {
  long iterations = 50000;
  long burn_in = 10000;
  long thin = 1;
  std::uint64_t seed = 1;
  Variant variant = Variant::TwoLevel;
  bool nu_sampling = false;  // OrdinaryT only
  bool relabel = false;      // store draws ordered by ascending mu*
  PcPriorSpec pc{};
  double nu_step = 0.25;  // random-walk sd on log(nu - 2)

  void validate() const {
    if (iterations < 1) throw DomainError("SamplerConfig: iterations must be >= 1");
    if (burn_in < 0 || burn_in >= iterations)
      throw DomainError("SamplerConfig: require 0 <= burn_in < iterations");
    if (thin < 1) throw DomainError("SamplerConfig: thin must be >= 1");
    if (nu_sampling && variant != Variant::OrdinaryT)
      throw DomainError("SamplerConfig: nu sampling requires the ordinary-t variant");
    if (!(nu_step > 0)) throw DomainError("SamplerConfig: nu_step must be > 0");
    pc.validate();
  }
};

/// Post-burn-in, thinned output of one chain.
struct Chain {
  std::vector<ParamState> draws;
  std::vector<double> loglik_trace;
  std::vector<Eigen::VectorXi> occupancy;       // n_j per stored draw
  std::vector<Eigen::MatrixXi> tail_occupancy;  // n_jk per stored draw
  double wall_time = 0.0;                       // seconds
  double nu_acceptance_rate = std::numeric_limits<double>::quiet_NaN();

  std::size_t size() const { return draws.size(); }
};

struct GibbsState {
  ParamState theta;
  LatentState latent;
};

struct Occupancy {
  Eigen::VectorXi n_j;
  Eigen::MatrixXi n_jk;
};

inline Occupancy count_occupancy(const Eigen::VectorXi& z, const Eigen::VectorXi& zdot, int J, int K) {
  Occupancy o{Eigen::VectorXi::Zero(J), Eigen::MatrixXi::Zero(J, K)};
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    ++o.n_j[z[i]];
    ++o.n_jk(z[i], zdot[i]);
  }
  return o;
}

namespace detail {

inline Vector linear_predictor(const Dataset& data, const ParamState& theta) {
  return data.p() > 0 ? Vector(data.X * theta.beta) : Vector::Zero(data.n());
}

inline void check_compatible(const Dataset& data, const ParamState& theta, const ModelSpec& spec) {
  if (data.p() != spec.p) throw DimensionError("dataset has p=" + std::to_string(data.p()) +
                                               " covariates, spec expects " + std::to_string(spec.p));
  validate(theta, spec);
}

inline void check_labels(const Eigen::VectorXi& lab, int n, int range, const char* what) {
  if (lab.size() != n) throw DimensionError(std::string(what) + ": expected n labels");
  if (n > 0 && (lab.minCoeff() < 0 || lab.maxCoeff() >= range))
    throw DomainError(std::string(what) + ": label out of range");
}

}  // namespace detail

/// Draws Z_i from P(Z_i = j) ∝ w_j sum_k wdot_jk r_ikj, in log domain.
inline Eigen::VectorXi sample_labels_z(const Dataset& data, const ParamState& theta,
                                       const ModelSpec& spec, Rng& rng) {
  const int n = data.n(), J = spec.J, K = spec.K;
  const TKernel kern(effective_nu(theta, spec));
  const Vector lin = detail::linear_predictor(data, theta);
  Vector log_w(J), log_s2(J);
  Matrix log_wdot(J, K);
  for (int j = 0; j < J; ++j) {
    log_w[j] = std::log(theta.w[j]);
    log_s2[j] = std::log(theta.sigma2[j]);
    for (int k = 0; k < K; ++k) log_wdot(j, k) = std::log(theta.wdot(j, k));
  }
  std::vector<double> lp(J), inner(K);
  Eigen::VectorXi z(n);
  for (int i = 0; i < n; ++i) {
    const double e = data.y[i] - lin[i];
    for (int j = 0; j < J; ++j) {
      const double r = e - theta.mu_star[j];
      for (int k = 0; k < K; ++k) inner[k] = log_wdot(j, k) + kern(k, r, theta.sigma2[j], log_s2[j]);
      lp[j] = log_w[j] + log_sum_exp(inner);
    }
    z[i] = rnd::categorical_log(rng, lp);
  }
  return z;
}

/// Draws Zdot_i from P(Zdot_i = k | Z_i = j) ∝ wdot_jk r_ikj.
inline Eigen::VectorXi sample_labels_zdot(const Dataset& data, const ParamState& theta,
                                          const Eigen::VectorXi& z, const ModelSpec& spec, Rng& rng) {
  const int n = data.n(), K = spec.K;
  detail::check_labels(z, n, spec.J, "sample_labels_zdot");
  const TKernel kern(effective_nu(theta, spec));
  const Vector lin = detail::linear_predictor(data, theta);
  std::vector<double> lp(K);
  Eigen::VectorXi zdot(n);
  for (int i = 0; i < n; ++i) {
    const int j = z[i];
    const double r = data.y[i] - lin[i] - theta.mu_star[j];
    const double s2 = theta.sigma2[j], ls2 = std::log(s2);
    for (int k = 0; k < K; ++k) lp[k] = std::log(theta.wdot(j, k)) + kern(k, r, s2, ls2);
    zdot[i] = rnd::categorical_log(rng, lp);
  }
  return zdot;
}

/// Draws U_i ~ Gamma((nu_k + 1)/2, nu_k/2 + e^2/(2 sigma2_j)) (shape, rate).
inline Vector sample_mixing_u(const Dataset& data, const ParamState& theta, const Eigen::VectorXi& z,
                              const Eigen::VectorXi& zdot, const ModelSpec& spec, Rng& rng) {
  const int n = data.n();
  detail::check_labels(z, n, spec.J, "sample_mixing_u");
  detail::check_labels(zdot, n, spec.K, "sample_mixing_u");
  const Vector& nu = effective_nu(theta, spec);
  const Vector lin = detail::linear_predictor(data, theta);
  Vector u(n);
  for (int i = 0; i < n; ++i) {
    const int j = z[i], k = zdot[i];
    const double r = data.y[i] - lin[i] - theta.mu_star[j];
    u[i] = rnd::gamma(rng, 0.5 * (nu[k] + 1.0), 0.5 * nu[k] + 0.5 * r * r / theta.sigma2[j]);
  }
  return u;
}

struct WeightsDraw {
  Vector w;
  Matrix wdot;
};

/// w ~ Dir(alpha_w + n_j); each row wdot_j ~ Dir(alpha_wdot_j + n_jk) independently.
inline WeightsDraw sample_weights(const Eigen::VectorXi& z, const Eigen::VectorXi& zdot,
                                  const ModelSpec& spec, Rng& rng) {
  const auto occ = count_occupancy(z, zdot, spec.J, spec.K);
  WeightsDraw out;
  out.w = rnd::dirichlet(rng, spec.priors.alpha_w + occ.n_j.cast<double>());
  out.wdot.resize(spec.J, spec.K);
  for (int j = 0; j < spec.J; ++j)
    out.wdot.row(j) = rnd::dirichlet(
        rng, (spec.priors.alpha_wdot.row(j).transpose() + occ.n_jk.row(j).transpose().cast<double>()));
  return out;
}

/// Hyperparameters of the NIG full conditional of (mu*_j, sigma2_j).
struct NigPosterior {
  double mu0;
  double tau;
  double alpha;
  double beta;
};

/// Conjugate update over residuals e_i = y_i - x_i'beta of the observations
/// assigned to component j, weighted by u_i.
inline NigPosterior nig_posterior(const Dataset& data, const ParamState& theta, const Eigen::VectorXi& z,
                                  const Vector& u, const ModelSpec& spec, int j) {
  const auto& pr = spec.priors;
  const Vector lin = detail::linear_predictor(data, theta);
  double su = 0.0, sue = 0.0, sue2 = 0.0;
  int nj = 0;
  for (int i = 0; i < data.n(); ++i) {
    if (z[i] != j) continue;
    const double e = data.y[i] - lin[i];
    su += u[i];
    sue += u[i] * e;
    sue2 += u[i] * e * e;
    ++nj;
  }
  NigPosterior post;
  post.tau = su + pr.tau;
  post.mu0 = (sue + pr.tau * pr.mu0) / post.tau;
  post.alpha = pr.alpha_dot + 0.5 * nj;
  post.beta = pr.beta_dot + 0.5 * (sue2 + pr.tau * pr.mu0 * pr.mu0 - post.tau * post.mu0 * post.mu0);
  return post;
}

struct LocationScaleDraw {
  Vector mu_star;
  Vector sigma2;
};

inline LocationScaleDraw sample_location_scale(const Dataset& data, const ParamState& theta,
                                               const Eigen::VectorXi& z, const Vector& u,
                                               const ModelSpec& spec, Rng& rng) {
  detail::check_labels(z, data.n(), spec.J, "sample_location_scale");
  if (u.size() != data.n()) throw DimensionError("sample_location_scale: u must have n entries");
  LocationScaleDraw out{Vector(spec.J), Vector(spec.J)};
  for (int j = 0; j < spec.J; ++j) {
    NigPosterior post = nig_posterior(data, theta, z, u, spec, j);
    if (!(post.beta > 0)) {
      std::clog << "tlmix: warning: NIG rate " << post.beta << " for component " << j + 1
                << " clamped to 1e-12\n";
      post.beta = 1e-12;
    }
    out.sigma2[j] = rnd::inverse_gamma(rng, post.alpha, post.beta);
    out.mu_star[j] = rnd::normal(rng, post.mu0, std::sqrt(out.sigma2[j] / post.tau));
  }
  return out;
}

/// Gaussian full conditional of beta in precision form.
struct CoefficientPosterior {
  Matrix precision;
  Vector mean;
};

namespace detail {

// precision = I/upsilon2 + X' diag(u_i/sigma2_zi) X, rhs = phi/upsilon2 + X' diag(.) (y - mu*_z)
inline std::pair<Matrix, Vector> coefficient_system(const Dataset& data, const ParamState& theta,
                                                    const Eigen::VectorXi& z, const Vector& u,
                                                    const ModelSpec& spec) {
  const int n = data.n();
  const auto& pr = spec.priors;
  Vector weight(n), target(n);
  for (int i = 0; i < n; ++i) {
    weight[i] = u[i] / theta.sigma2[z[i]];
    target[i] = data.y[i] - theta.mu_star[z[i]];
  }
  Matrix prec = data.X.transpose() * weight.asDiagonal() * data.X;
  prec.diagonal().array() += 1.0 / pr.upsilon2;
  Vector rhs = pr.phi / pr.upsilon2 + data.X.transpose() * (weight.array() * target.array()).matrix();
  return {std::move(prec), std::move(rhs)};
}

}  // namespace detail

inline CoefficientPosterior coefficient_posterior(const Dataset& data, const ParamState& theta,
                                                  const Eigen::VectorXi& z, const Vector& u,
                                                  const ModelSpec& spec) {
  auto [prec, rhs] = detail::coefficient_system(data, theta, z, u, spec);
  Eigen::LLT<Matrix> llt(prec);
  if (llt.info() != Eigen::Success) throw NumericalError("coefficient_posterior: precision not SPD");
  return {prec, llt.solve(rhs)};
}

/// Draws beta ~ N(mean, precision^-1) through a Cholesky factor of the
/// precision, retrying once with diagonal jitter if the factorization fails.
inline Vector sample_coefficients(const Dataset& data, const ParamState& theta, const Eigen::VectorXi& z,
                                  const Vector& u, const ModelSpec& spec, Rng& rng) {
  const int p = spec.p;
  if (p == 0) return Vector(0);
  detail::check_labels(z, data.n(), spec.J, "sample_coefficients");
  auto [prec, rhs] = detail::coefficient_system(data, theta, z, u, spec);
  Eigen::LLT<Matrix> llt(prec);
  if (llt.info() != Eigen::Success) {
    prec.diagonal().array() += 1e-10 * prec.trace() / p;
    llt.compute(prec);
    if (llt.info() != Eigen::Success)
      throw NumericalError("sample_coefficients: precision matrix is not positive definite");
  }
  const Vector mean = llt.solve(rhs);
  Vector eps(p);
  for (int k = 0; k < p; ++k) eps[k] = rnd::normal(rng);
  // prec = L L', so L'^{-1} eps has covariance prec^{-1}
  return mean + llt.matrixU().solve(eps);
}

/// Sufficient statistics of the mixing scales attached to one tail component.
struct TailStats {
  int n = 0;
  double sum_log_u = 0.0;
  double sum_u = 0.0;
};

/// Log target of the nu Metropolis step on the eta = log(nu - 2) scale:
/// prod_i Gamma(u_i | nu/2, nu/2) times the PC prior, plus the Jacobian log(nu - 2).
inline double nu_log_target(double nu, const TailStats& s, const PcPriorSpec& pc) {
  const double a = 0.5 * nu;
  const double ll = s.n * (a * std::log(a) - boost::math::lgamma(a)) + (a - 1.0) * s.sum_log_u - a * s.sum_u;
  return ll + pc_prior_logpdf(nu, pc) + std::log(nu - 2.0);
}

struct NuStepResult {
  Vector nu;
  int accepted = 0;
};

/// One random-walk Metropolis update of every component's nu on log(nu - 2).
/// Proposals whose prior cannot be evaluated are rejected.
inline NuStepResult sample_nu_mh(const ParamState& theta, const LatentState& latent, const ModelSpec& spec,
                                 const PcPriorSpec& pc, double step, Rng& rng) {
  if (!spec.tail_per_component) throw DomainError("sample_nu_mh: requires the ordinary-t layout");
  NuStepResult out{effective_nu(theta, spec), 0};
  std::vector<TailStats> stats(spec.K);
  for (Eigen::Index i = 0; i < latent.u.size(); ++i) {
    auto& s = stats[latent.zdot[i]];
    ++s.n;
    s.sum_log_u += std::log(latent.u[i]);
    s.sum_u += latent.u[i];
  }
  for (int k = 0; k < spec.K; ++k) {
    const double cur = out.nu[k];
    const double prop = 2.0 + std::exp(std::log(cur - 2.0) + step * rnd::normal(rng));
    const double log_u = std::log(rnd::uniform(rng));
    double log_ratio;
    try {
      log_ratio = nu_log_target(prop, stats[k], pc) - nu_log_target(cur, stats[k], pc);
    } catch (const Error&) {
      continue;
    }
    if (std::isfinite(log_ratio) && log_u < log_ratio) {
      out.nu[k] = prop;
      ++out.accepted;
    }
  }
  return out;
}

/// Default starting point: mu* at J quantiles of the OLS residual-plus-intercept,
/// sigma2 = pooled residual variance / J, uniform weights, beta from least
/// squares, u = 1 and labels by nearest mu*.
inline GibbsState initial_state(const Dataset& data, const ModelSpec& spec, const SamplerConfig& cfg) {
  const int n = data.n(), p = spec.p, J = spec.J, K = spec.K;
  Matrix design(n, p + 1);
  design.col(0).setOnes();
  if (p > 0) design.rightCols(p) = data.X;
  Vector coef = Vector::Zero(p + 1);
  if (n > p + 1) coef = design.colPivHouseholderQr().solve(data.y);
  else coef[0] = data.y.mean();

  GibbsState st;
  auto& th = st.theta;
  th.beta = coef.tail(p);
  Vector resid = data.y - (p > 0 ? Vector(data.X * th.beta) : Vector::Zero(n));
  std::vector<double> sorted(resid.data(), resid.data() + n);
  std::sort(sorted.begin(), sorted.end());
  th.mu_star.resize(J);
  for (int j = 0; j < J; ++j) {
    const double pos = ((j + 0.5) / J) * (n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min<std::size_t>(lo + 1, static_cast<std::size_t>(n - 1));
    th.mu_star[j] = sorted[lo] + (pos - lo) * (sorted[hi] - sorted[lo]);
  }
  const double mean = resid.mean();
  double var = n > 1 ? (resid.array() - mean).square().sum() / (n - 1) : 1.0;
  if (!(var > 0)) var = 1.0;
  th.sigma2 = Vector::Constant(J, var / J);
  th.w = Vector::Constant(J, 1.0 / J);
  th.wdot = spec.tail_per_component ? Matrix(Matrix::Identity(J, K)) : Matrix::Constant(J, K, 1.0 / K);
  if (cfg.nu_sampling) th.nu = spec.nu;

  auto& lat = st.latent;
  lat.u = Vector::Ones(n);
  lat.z.resize(n);
  lat.zdot.resize(n);
  for (int i = 0; i < n; ++i) {
    int best = 0;
    for (int j = 1; j < J; ++j)
      if (std::abs(resid[i] - th.mu_star[j]) < std::abs(resid[i] - th.mu_star[best])) best = j;
    lat.z[i] = best;
    lat.zdot[i] = spec.tail_per_component ? best : K - 1;
  }
  return st;
}

/// Prior draw of theta (Dirichlet weights, NIG locations/scales, normal beta).
inline ParamState draw_from_prior(const ModelSpec& spec, Rng& rng) {
  const auto& pr = spec.priors;
  ParamState th;
  th.w = rnd::dirichlet(rng, pr.alpha_w);
  th.wdot.resize(spec.J, spec.K);
  if (spec.tail_per_component) th.wdot = Matrix::Identity(spec.J, spec.K);
  else
    for (int j = 0; j < spec.J; ++j) th.wdot.row(j) = rnd::dirichlet(rng, pr.alpha_wdot.row(j).transpose());
  th.mu_star.resize(spec.J);
  th.sigma2.resize(spec.J);
  for (int j = 0; j < spec.J; ++j) {
    th.sigma2[j] = rnd::inverse_gamma(rng, pr.alpha_dot, pr.beta_dot);
    th.mu_star[j] = rnd::normal(rng, pr.mu0, std::sqrt(th.sigma2[j] / pr.tau));
  }
  th.beta.resize(spec.p);
  for (int k = 0; k < spec.p; ++k) th.beta[k] = rnd::normal(rng, pr.phi[k], std::sqrt(pr.upsilon2));
  return th;
}

/// One full sweep, updating `state` in place. Returns the number of accepted
/// nu proposals (0 when nu is not sampled).
inline int gibbs_sweep(const Dataset& data, const ModelSpec& spec, const SamplerConfig& cfg,
                       GibbsState& state, Rng& rng) {
  auto& th = state.theta;
  auto& lat = state.latent;
  lat.z = sample_labels_z(data, th, spec, rng);
  lat.zdot = sample_labels_zdot(data, th, lat.z, spec, rng);
  lat.u = sample_mixing_u(data, th, lat.z, lat.zdot, spec, rng);

  auto wd = sample_weights(lat.z, lat.zdot, spec, rng);
  th.w = std::move(wd.w);
  if (cfg.variant == Variant::TwoLevel) th.wdot = std::move(wd.wdot);

  auto ls = sample_location_scale(data, th, lat.z, lat.u, spec, rng);
  th.mu_star = std::move(ls.mu_star);
  th.sigma2 = std::move(ls.sigma2);

  th.beta = sample_coefficients(data, th, lat.z, lat.u, spec, rng);

  if (cfg.nu_sampling) {
    auto step = sample_nu_mh(th, lat, spec, cfg.pc, cfg.nu_step, rng);
    th.nu = std::move(step.nu);
    return step.accepted;
  }
  return 0;
}

/// Runs one chain. Deterministic given (data, spec, cfg, init).
inline Chain run_chain(const Dataset& data, const ModelSpec& spec, const SamplerConfig& cfg,
                       std::optional<ParamState> init = std::nullopt) {
  data.validate();
  spec.validate();
  cfg.validate();
  if (cfg.variant == Variant::OrdinaryT && !spec.tail_per_component)
    throw DomainError("run_chain: ordinary-t variant needs a ModelSpec built with ModelSpec::ordinary_t");
  if (cfg.variant == Variant::TwoLevel && spec.tail_per_component)
    throw DomainError("run_chain: two-level variant needs a two-level ModelSpec");

  GibbsState state = initial_state(data, spec, cfg);
  if (init) {
    state.theta = *init;
    if (cfg.nu_sampling && state.theta.nu.size() == 0) state.theta.nu = spec.nu;
    if (cfg.variant == Variant::OrdinaryT) state.theta.wdot = Matrix::Identity(spec.J, spec.K);
  }
  detail::check_compatible(data, state.theta, spec);

  Rng rng(cfg.seed);
  Chain chain;
  const long kept = (cfg.iterations - cfg.burn_in + cfg.thin - 1) / cfg.thin;
  chain.draws.reserve(static_cast<std::size_t>(kept));
  chain.loglik_trace.reserve(static_cast<std::size_t>(kept));
  long nu_accepted = 0, nu_proposed = 0;

  const auto t0 = std::chrono::steady_clock::now();
  for (long it = 0; it < cfg.iterations; ++it) {
    nu_accepted += gibbs_sweep(data, spec, cfg, state, rng);
    if (cfg.nu_sampling) nu_proposed += spec.K;

    const double ll = log_likelihood(data, state.theta, spec);
    if (!std::isfinite(ll))
      throw NumericalError("run_chain: non-finite log-likelihood at sweep " + std::to_string(it + 1));
    if (it < cfg.burn_in || (it - cfg.burn_in) % cfg.thin != 0) continue;

    ParamState draw = state.theta;
    auto occ = count_occupancy(state.latent.z, state.latent.zdot, spec.J, spec.K);
    if (cfg.relabel) {
      const auto order = relabel_by_location(draw, spec);
      Occupancy perm = occ;
      for (int j = 0; j < spec.J; ++j) {
        perm.n_j[j] = occ.n_j[order[j]];
        perm.n_jk.row(j) = occ.n_jk.row(order[j]);
      }
      if (spec.tail_per_component) {
        const Eigen::MatrixXi rows = perm.n_jk;
        for (int k = 0; k < spec.K; ++k) perm.n_jk.col(k) = rows.col(order[k]);
      }
      occ = std::move(perm);
    }
    chain.draws.push_back(std::move(draw));
    chain.loglik_trace.push_back(ll);
    chain.occupancy.push_back(std::move(occ.n_j));
    chain.tail_occupancy.push_back(std::move(occ.n_jk));
  }
  chain.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (cfg.nu_sampling && nu_proposed > 0)
    chain.nu_acceptance_rate = static_cast<double>(nu_accepted) / static_cast<double>(nu_proposed);
  return chain;
}

}  // namespace tlmix
