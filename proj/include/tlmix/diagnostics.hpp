#pragma once

// Model-comparison and chain-quality summaries: DIC, relative density
// distance to a known error density, posterior of the error variance, ESS.

#include <tlmix/datagen.hpp>
#include <tlmix/error.hpp>
#include <tlmix/gibbs.hpp>
#include <tlmix/model.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tlmix {

struct VEpsSummary {
  double mean = 0.0;
  double var = 0.0;
  std::optional<double> bias;
  std::optional<double> mse;
};

struct FitReport {
  double dic = 0.0;
  double dbar = 0.0;
  double d_theta_tilde = 0.0;
  std::optional<VEpsSummary> v_eps_posterior;
  double ess_loglik = std::numeric_limits<double>::quiet_NaN();
};

/// Coordinate-wise mean of relabeled draws with simplex parts renormalized.
inline ParamState posterior_mean_theta(const Chain& chain, const ModelSpec& spec) {
  if (chain.size() == 0) throw DomainError("posterior_mean_theta: empty chain");
  ParamState acc = chain.draws.front();
  acc.mu_star.setZero();
  acc.sigma2.setZero();
  acc.w.setZero();
  acc.wdot.setZero();
  acc.beta.setZero();
  acc.nu.setZero();
  for (ParamState d : chain.draws) {
    relabel_by_location(d, spec);
    acc.mu_star += d.mu_star;
    acc.sigma2 += d.sigma2;
    acc.w += d.w;
    acc.wdot += d.wdot;
    acc.beta += d.beta;
    if (acc.nu.size() > 0) acc.nu += d.nu;
  }
  const double M = static_cast<double>(chain.size());
  acc.mu_star /= M;
  acc.sigma2 /= M;
  acc.beta /= M;
  acc.nu /= M;
  acc.w /= acc.w.sum();
  for (Eigen::Index j = 0; j < acc.wdot.rows(); ++j) acc.wdot.row(j) /= acc.wdot.row(j).sum();
  return acc;
}

/// dbar = -2 mean(loglik trace); d_theta_tilde = -2 log f(y | theta~); dic = 2 dbar - d_theta_tilde.
inline FitReport dic(const Chain& chain, const Dataset& data, const ModelSpec& spec) {
  if (chain.size() == 0) throw DomainError("dic: empty chain");
  if (chain.loglik_trace.size() != chain.size()) throw DimensionError("dic: loglik trace length mismatch");
  if (data.p() != spec.p) throw DimensionError("dic: dataset p differs from spec");
  FitReport r;
  double s = 0.0;
  for (double v : chain.loglik_trace) s += v;
  r.dbar = -2.0 * s / static_cast<double>(chain.size());
  const ParamState tilde = posterior_mean_theta(chain, spec);
  double ll = 0.0;
  for (int i = 0; i < data.n(); ++i) {
    const double li = mixture_logpdf(data.y[i], data.X.row(i).transpose(), tilde, spec);
    if (!std::isfinite(li))
      throw NumericalError("dic: non-finite log density at observation " + std::to_string(i + 1));
    ll += li;
  }
  r.d_theta_tilde = -2.0 * ll;
  r.dic = 2.0 * r.dbar - r.d_theta_tilde;
  return r;
}

/// Grid layout for density_distance; percentiles refer to the true density.
struct GridSpec {
  int B = 512;
  double lo = 0.001, hi = 0.999;            // global range
  double tail_lo = 0.01, tail_hi = 0.99;    // tails: below tail_lo and above tail_hi
};

struct DensityDistance {
  double dbar_global = 0.0;
  double dbar_tail = 0.0;
};

/// x with cdf(x) = p, by bracketing and bisection.
inline double quantile_from_cdf(const std::function<double(double)>& cdf, double p) {
  if (!(p > 0 && p < 1)) throw DomainError("quantile_from_cdf: p must be in (0, 1)");
  double a = -1.0, b = 1.0;
  for (int i = 0; i < 200 && cdf(a) > p; ++i) a *= 2.0;
  for (int i = 0; i < 200 && cdf(b) < p; ++i) b *= 2.0;
  for (int it = 0; it < 200 && (b - a) > 1e-12 * std::max(1.0, std::abs(a) + std::abs(b)); ++it) {
    const double m = 0.5 * (a + b);
    if (cdf(m) < p) a = m; else b = m;
  }
  return 0.5 * (a + b);
}

/// Evaluates a posterior-mean error density on a set of points.
using DensityEstimate = std::function<double(double)>;

/// Pointwise posterior mean of the centered error density over the chain.
inline DensityEstimate posterior_mean_density(const Chain& chain, const ModelSpec& spec) {
  if (chain.size() == 0) throw DomainError("posterior_mean_density: empty chain");
  return [&chain, &spec](double e) {
    double f = 0.0;
    for (const auto& d : chain.draws) f += std::exp(error_logpdf(e, d, spec));
    return f / static_cast<double>(chain.size());
  };
}

namespace detail {

inline double mean_relative_gap(const TrueDensity& truth, const DensityEstimate& fhat, double a, double b, int B) {
  double s = 0.0;
  for (int i = 0; i < B; ++i) {
    const double x = B == 1 ? 0.5 * (a + b) : a + (b - a) * i / (B - 1);
    const double ft = truth.pdf(x);
    if (!(ft > 0) || !std::isfinite(ft))
      throw NumericalError("density_distance: true density is zero at x=" + std::to_string(x));
    s += std::abs((ft - fhat(x)) / ft);
  }
  return s / B;
}

}  // namespace detail

/// Mean absolute relative deviation of fhat from the true density. The tail
/// version spends B/2 points below the tail_lo and B/2 above the tail_hi
/// percentile, each within the global range.
inline DensityDistance density_distance(const TrueDensity& truth, const DensityEstimate& fhat,
                                        const GridSpec& grid = {}) {
  if (grid.B < 2) throw DomainError("density_distance: B must be >= 2");
  if (!(0 < grid.lo && grid.lo < grid.tail_lo && grid.tail_lo < grid.tail_hi && grid.tail_hi < grid.hi &&
        grid.hi < 1))
    throw DomainError("density_distance: percentiles must satisfy 0 < lo < tail_lo < tail_hi < hi < 1");
  const double a = quantile_from_cdf(truth.cdf, grid.lo);
  const double b = quantile_from_cdf(truth.cdf, grid.hi);
  const double ta = quantile_from_cdf(truth.cdf, grid.tail_lo);
  const double tb = quantile_from_cdf(truth.cdf, grid.tail_hi);
  DensityDistance out;
  out.dbar_global = detail::mean_relative_gap(truth, fhat, a, b, grid.B);
  const int half = grid.B / 2;
  out.dbar_tail = 0.5 * (detail::mean_relative_gap(truth, fhat, a, ta, half) +
                         detail::mean_relative_gap(truth, fhat, tb, b, grid.B - half));
  return out;
}

inline DensityDistance density_distance(const TrueDensity& truth, const Chain& chain, const ModelSpec& spec,
                                        const GridSpec& grid = {}) {
  return density_distance(truth, posterior_mean_density(chain, spec), grid);
}

inline DensityDistance density_distance(const TrueDensity& truth, const ParamState& theta, const ModelSpec& spec,
                                        const GridSpec& grid = {}) {
  return density_distance(truth, [&](double e) { return std::exp(error_logpdf(e, theta, spec)); }, grid);
}

/// (x, fhat(x)) on B equally spaced points of [a, b].
inline Matrix density_curve(const DensityEstimate& fhat, double a, double b, int B = 512) {
  if (B < 2 || !(b > a)) throw DomainError("density_curve: need B >= 2 and b > a");
  Matrix out(B, 2);
  for (int i = 0; i < B; ++i) {
    const double x = a + (b - a) * i / (B - 1);
    out(i, 0) = x;
    out(i, 1) = fhat(x);
  }
  return out;
}

/// Moments of V_eps over the draws. var divides by the number of draws, so
/// mse = bias^2 + var holds exactly.
inline VEpsSummary v_eps_summary(const Chain& chain, const ModelSpec& spec, std::optional<double> truth = {}) {
  if (chain.size() == 0) throw DomainError("v_eps_summary: empty chain");
  std::vector<double> v;
  v.reserve(chain.size());
  for (const auto& d : chain.draws) v.push_back(error_variance(d, spec));
  const double M = static_cast<double>(v.size());
  VEpsSummary s;
  for (double x : v) s.mean += x;
  s.mean /= M;
  for (double x : v) s.var += (x - s.mean) * (x - s.mean);
  s.var /= M;
  if (truth) {
    s.bias = s.mean - *truth;
    s.mse = *s.bias * *s.bias + s.var;
  }
  return s;
}

inline constexpr std::size_t kMinEssLength = 10;

/// Effective sample size by the initial positive sequence estimator: sums of
/// adjacent autocorrelation pairs are accumulated while positive. Capped at
/// the trace length; a constant trace returns its length.
inline double ess(std::span<const double> trace) {
  const std::size_t n = trace.size();
  if (n < kMinEssLength) throw DomainError("ess: need at least 10 values");
  double mean = 0.0;
  for (double v : trace) mean += v;
  mean /= static_cast<double>(n);
  std::vector<double> c(trace.begin(), trace.end());
  for (double& v : c) v -= mean;
  auto acov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += c[i] * c[i + lag];
    return s / static_cast<double>(n);
  };
  const double c0 = acov(0);
  const double dn = static_cast<double>(n);
  if (!(c0 > 0)) return dn;
  double tau = -1.0;
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    const double pair = (acov(2 * k) + acov(2 * k + 1)) / c0;
    if (!(pair > 0)) break;
    tau += 2.0 * pair;
  }
  if (!(tau > 0)) return dn;
  return std::min(dn, dn / tau);
}

inline double ess(const std::vector<double>& trace) { return ess(std::span<const double>(trace)); }

/// DIC, V_eps posterior and ESS of the log-likelihood trace.
inline FitReport fit_report(const Chain& chain, const Dataset& data, const ModelSpec& spec,
                            std::optional<double> v_eps_truth = {}) {
  FitReport r = dic(chain, data, spec);
  try {
    r.v_eps_posterior = v_eps_summary(chain, spec, v_eps_truth);
  } catch (const InfiniteVarianceError&) {
    // heavy tails (nu <= 2) leave V_eps undefined; the report omits it
  }
  if (chain.size() >= kMinEssLength) r.ess_loglik = ess(chain.loglik_trace);
  return r;
}

}  // namespace tlmix
