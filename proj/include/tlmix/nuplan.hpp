#pragma once

// Degrees-of-freedom planning: Kullback-Leibler divergence between the
// standard normal and the standard Student-t, design of a nu grid that is
// equally spaced on the KLD scale, and the penalised-complexity prior on nu.

#include <tlmix/error.hpp>
#include <tlmix/model.hpp>

#include <boost/math/quadrature/exp_sinh.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

namespace tlmix {

/// Which density plays f in KLD(f || h).
enum class KldDirection {
  FlexibleVsBase,  // KLD(t_nu || N(0,1))
  BaseVsFlexible,  // KLD(N(0,1) || t_nu)
};

/// Coordinate in which grid points are equally spaced.
enum class GridScale {
  Kld,       // KLD itself
  Distance,  // d(nu) = sqrt(2 KLD)
};

inline std::string_view to_string(KldDirection d) {
  return d == KldDirection::FlexibleVsBase ? "flexible-vs-base" : "base-vs-flexible";
}

inline KldDirection parse_kld_direction(std::string_view s) {
  if (s == "flexible-vs-base" || s == "t||normal") return KldDirection::FlexibleVsBase;
  if (s == "base-vs-flexible" || s == "normal||t") return KldDirection::BaseVsFlexible;
  throw DomainError("unknown KLD direction '" + std::string(s) + "'");
}

/// Absolute tolerance targeted by every KLD quadrature.
inline constexpr double kKldTolerance = 1e-9;

namespace detail {

template <class F>
double integrate_half_line(F f, const char* what, double nu) {
  // thread_local: the integrator caches abscissae and is not reentrant
  thread_local boost::math::quadrature::exp_sinh<double> rule;
  double err = 0.0, l1 = 0.0;
  std::size_t levels = 0;
  double v = 0.0;
  try {
    v = rule.integrate(f, 0.0, std::numeric_limits<double>::infinity(), 1e-13, &err, &l1, &levels);
  } catch (const std::exception& e) {
    throw NumericalError(std::string(what) + ": quadrature failed at nu=" + std::to_string(nu) +
                         ": " + e.what());
  }
  if (!std::isfinite(v) || err > 0.5 * kKldTolerance)
    throw NumericalError(std::string(what) + ": quadrature did not converge at nu=" +
                         std::to_string(nu) + " (error estimate " + std::to_string(err) +
                         ", levels " + std::to_string(levels) + ")");
  return v;
}

}  // namespace detail

/// KL divergence between the standard normal and the standard Student-t with
/// nu degrees of freedom, by adaptive double-exponential quadrature over the
/// half line (both integrands are even).
///
/// KLD(t || N) needs nu > 2. Below nu = 4 its integrand decays too slowly for
/// direct quadrature, so it is evaluated as -H(t) + log(2 pi)/2 + E_t[y^2]/2
/// with the entropy integrated numerically.
inline double kld_normal_t(double nu, KldDirection direction) {
  if (!std::isfinite(nu) || !(nu > 0)) throw DomainError("kld_normal_t: nu must be finite and > 0");
  const double ct = student_t_log_const(nu);
  const double cn = -0.5 * std::log(2.0 * std::numbers::pi);
  const double half = 0.5 * (nu + 1.0);
  auto log_t = [&](double y) { return ct - half * std::log1p(y * y / nu); };

  if (direction == KldDirection::BaseVsFlexible) {
    auto g = [&](double y) {
      const double ln = cn - 0.5 * y * y;
      const double fn = std::exp(ln);
      return fn == 0.0 ? 0.0 : fn * (ln - log_t(y));
    };
    return 2.0 * detail::integrate_half_line(g, "kld_normal_t", nu);
  }

  if (!(nu > 2)) throw DomainError("kld_normal_t: KLD(t || normal) requires nu > 2");
  if (nu < 4.0) {
    auto g = [&](double y) {
      const double lt = log_t(y);
      const double ft = std::exp(lt);
      return ft == 0.0 ? 0.0 : ft * lt;
    };
    const double neg_entropy = 2.0 * detail::integrate_half_line(g, "kld_normal_t", nu);
    return neg_entropy - cn + 0.5 * nu / (nu - 2.0);
  }
  auto g = [&](double y) {
    const double lt = log_t(y);
    const double ft = std::exp(lt);
    return ft == 0.0 ? 0.0 : ft * (lt - (cn - 0.5 * y * y));
  };
  return 2.0 * detail::integrate_half_line(g, "kld_normal_t", nu);
}

/// d(nu) = sqrt(2 KLD).
inline double kld_distance(double nu, KldDirection direction) {
  return std::sqrt(2.0 * std::max(0.0, kld_normal_t(nu, direction)));
}

inline double grid_coordinate(double nu, KldDirection direction, GridScale scale) {
  return scale == GridScale::Kld ? kld_normal_t(nu, direction) : kld_distance(nu, direction);
}

struct NuGridRequest {
  double nu_min = 2.8;
  double nu_max = 14.4;
  int K = 4;
  int rounding = 1;  // decimal places for the reported grid

  void validate() const {
    if (!std::isfinite(nu_min) || !(nu_min > 2.0))
      throw DomainError("NuGridRequest: nu_min must exceed 2");
    if (!std::isfinite(nu_max) || !(nu_max > nu_min))
      throw DomainError("NuGridRequest: nu_max must exceed nu_min");
    if (nu_max > 50.0) throw DomainError("NuGridRequest: nu_max must not exceed 50");
    if (K < 2) throw DomainError("NuGridRequest: K must be at least 2");
    if (rounding < 0 || rounding > 12) throw DomainError("NuGridRequest: rounding must be in [0, 12]");
  }
};

struct NuGrid {
  std::vector<double> nu;          // unrounded, nu.front() == nu_min, nu.back() == nu_max
  std::vector<double> coordinate;  // KLD (or distance) at each nu
  std::vector<double> rounded;     // nu rounded to the requested decimals

  /// max_j |delta_j - delta_1| over consecutive coordinate gaps.
  double spacing_residual() const {
    double worst = 0.0;
    const double d1 = coordinate[0] - coordinate[1];
    for (std::size_t j = 1; j + 1 < coordinate.size(); ++j)
      worst = std::max(worst, std::abs((coordinate[j] - coordinate[j + 1]) - d1));
    return worst;
  }
};

inline double round_to(double v, int decimals) {
  const double s = std::pow(10.0, decimals);
  return std::round(v * s) / s;
}

/// Grid of K degrees of freedom from nu_min to nu_max whose coordinates
/// (KLD or sqrt(2 KLD)) are arithmetically equally spaced. Interior points are
/// found by bisection, which converges because the coordinate is monotone in nu.
inline NuGrid build_nu_grid(const NuGridRequest& req,
                            KldDirection direction = KldDirection::FlexibleVsBase,
                            GridScale scale = GridScale::Kld) {
  req.validate();
  const double c_lo = grid_coordinate(req.nu_min, direction, scale);
  const double c_hi = grid_coordinate(req.nu_max, direction, scale);
  if (!(c_lo > c_hi))
    throw NumericalError("build_nu_grid: coordinate is not decreasing on [nu_min, nu_max]");

  NuGrid g;
  g.nu.push_back(req.nu_min);
  g.coordinate.push_back(c_lo);
  const double step = (c_lo - c_hi) / (req.K - 1);
  double lo_bracket = req.nu_min;
  for (int j = 1; j < req.K - 1; ++j) {
    const double target = c_lo - step * j;
    double a = lo_bracket, b = req.nu_max;
    double fa = grid_coordinate(a, direction, scale) - target;
    double fb = c_hi - target;
    if (!(fa > 0 && fb < 0))
      throw NumericalError("build_nu_grid: root not bracketed for interior point " +
                           std::to_string(j + 1));
    double mid = 0.5 * (a + b);
    for (int it = 0; it < 200 && (b - a) > 1e-14 * b; ++it) {
      mid = 0.5 * (a + b);
      const double fm = grid_coordinate(mid, direction, scale) - target;
      if (fm == 0.0) { a = b = mid; break; }
      if (fm > 0) a = mid; else b = mid;
    }
    mid = 0.5 * (a + b);
    g.nu.push_back(mid);
    g.coordinate.push_back(grid_coordinate(mid, direction, scale));
    lo_bracket = mid;
  }
  g.nu.push_back(req.nu_max);
  g.coordinate.push_back(c_hi);
  for (double v : g.nu) g.rounded.push_back(round_to(v, req.rounding));
  return g;
}

/// Penalised-complexity prior pi(nu) = lambda exp(-lambda d(nu)) |d'(nu)|,
/// supported on nu > 2. P(nu < a) = exp(-lambda d(a)) under KLD(t || N).
struct PcPriorSpec {
  double lambda = 1.0;
  KldDirection direction = KldDirection::FlexibleVsBase;

  void validate() const {
    if (!std::isfinite(lambda) || !(lambda > 0)) throw DomainError("PcPriorSpec: lambda must be > 0");
  }

  /// Rate giving prior mass `mass` to nu < `nu_upper` (default 0.8 below 10);
  /// exact under KLD(t || N).
  static PcPriorSpec with_mass_below(double nu_upper = 10.0, double mass = 0.8,
                                     KldDirection direction = KldDirection::FlexibleVsBase) {
    if (!(mass > 0 && mass < 1)) throw DomainError("PcPriorSpec: mass must be in (0, 1)");
    const double d = kld_distance(nu_upper, direction);
    return {-std::log(mass) / d, direction};
  }
};

/// Central finite-difference derivative of d(nu), one-sided near nu = 2.
inline double kld_distance_derivative(double nu, KldDirection direction) {
  const double h = 1e-4 * std::max(1.0, nu);
  if (nu - h > 2.0)
    return (kld_distance(nu + h, direction) - kld_distance(nu - h, direction)) / (2.0 * h);
  return (kld_distance(nu + h, direction) - kld_distance(nu, direction)) / h;
}

inline double pc_prior_logpdf(double nu, const PcPriorSpec& pc) {
  pc.validate();
  if (!std::isfinite(nu) || !(nu > 2.0)) throw DomainError("pc_prior_logpdf: nu must exceed 2");
  const double d = kld_distance(nu, pc.direction);
  const double dd = kld_distance_derivative(nu, pc.direction);
  if (!std::isfinite(dd) || dd == 0.0)
    throw NumericalError("pc_prior_logpdf: non-finite or zero derivative at nu=" + std::to_string(nu));
  return std::log(pc.lambda) - pc.lambda * d + std::log(std::abs(dd));
}

/// Prior probability of (2, nu]: exp(-lambda d(nu)) - exp(-lambda d(2)). The
/// second term vanishes under KLD(t || N), where d(2) is infinite.
inline double pc_prior_cdf(double nu, const PcPriorSpec& pc) {
  if (!(nu > 2.0)) return 0.0;
  const double floor =
      pc.direction == KldDirection::FlexibleVsBase ? 0.0 : std::exp(-pc.lambda * kld_distance(2.0, pc.direction));
  return std::exp(-pc.lambda * kld_distance(nu, pc.direction)) - floor;
}

}  // namespace tlmix
