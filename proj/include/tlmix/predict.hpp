#pragma once

// Posterior predictive simulation, HPD intervals and out-of-sample metrics.

#include <tlmix/error.hpp>
#include <tlmix/gibbs.hpp>
#include <tlmix/model.hpp>
#include <tlmix/random.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

namespace tlmix {

/// draws(i, m) is a predictive draw for new row i under posterior draw m.
struct PredictiveDraws {
  Matrix draws;

  Vector point() const { return draws.rowwise().mean(); }
};

/// For every retained posterior draw and every new row, draws fresh labels,
/// a fresh mixing scale and then y from the conditional normal.
inline PredictiveDraws posterior_predictive(const Matrix& Xnew, const Chain& chain, const ModelSpec& spec,
                                            Rng& rng) {
  if (chain.size() == 0) throw DomainError("posterior_predictive: empty chain");
  if (Xnew.cols() != spec.p) throw DimensionError("posterior_predictive: Xnew must have p columns");
  const auto m = Xnew.rows();
  const auto M = static_cast<Eigen::Index>(chain.size());
  PredictiveDraws out{Matrix(m, M)};
  for (Eigen::Index d = 0; d < M; ++d) {
    const ParamState& th = chain.draws[static_cast<std::size_t>(d)];
    const Vector& nu = effective_nu(th, spec);
    const Vector lin = spec.p > 0 ? Vector(Xnew * th.beta) : Vector::Zero(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const int j = rnd::categorical(rng, th.w);
      const int k = rnd::categorical(rng, th.wdot.row(j).transpose());
      const double u = rnd::gamma(rng, 0.5 * nu[k], 0.5 * nu[k]);
      out.draws(i, d) = rnd::normal(rng, th.mu_star[j] + lin[i], std::sqrt(th.sigma2[j] / u));
    }
  }
  return out;
}

inline constexpr int kMinHpdSamples = 20;

/// Shortest interval containing ceil(level * n) of the sorted samples; ties go
/// to the lowest start.
inline std::pair<double, double> hpd_interval(std::vector<double> samples, double level) {
  if (!(level > 0 && level < 1)) throw DomainError("hpd_interval: level must be in (0, 1)");
  const auto n = samples.size();
  if (n < static_cast<std::size_t>(kMinHpdSamples))
    throw DomainError("hpd_interval: need at least " + std::to_string(kMinHpdSamples) + " samples");
  for (double v : samples)
    if (!std::isfinite(v)) throw DomainError("hpd_interval: non-finite sample");
  std::sort(samples.begin(), samples.end());
  auto keep = static_cast<std::size_t>(std::ceil(level * static_cast<double>(n) - 1e-9));
  keep = std::clamp<std::size_t>(keep, 1, n);
  std::size_t best = 0;
  double width = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + keep <= n; ++i) {
    const double w = samples[i + keep - 1] - samples[i];
    if (w < width) {
      width = w;
      best = i;
    }
  }
  return {samples[best], samples[best + keep - 1]};
}

inline std::pair<double, double> hpd_interval(const Eigen::Ref<const Vector>& samples, double level) {
  return hpd_interval(std::vector<double>(samples.data(), samples.data() + samples.size()), level);
}

struct PredictionMetrics {
  double rmse = 0.0;
  double mae = 0.0;
  double re = std::numeric_limits<double>::quiet_NaN();  // NaN when every |y| is ~0
  std::size_t re_excluded = 0;
  double hpd_width_mean = 0.0;
  double hpd_width_median = 0.0;
  double hpd_coverage = 0.0;
  double hpd_level = 0.99;
};

/// Rows of |y| below this are left out of the relative error.
inline constexpr double kRelativeErrorFloor = 1e-8;

struct PredictionSummary {
  Vector y_hat;
  Vector hpd_lo;
  Vector hpd_hi;
};

inline PredictionSummary summarize_predictions(const PredictiveDraws& pd, double level = 0.99) {
  const auto m = pd.draws.rows();
  PredictionSummary s{pd.point(), Vector(m), Vector(m)};
  for (Eigen::Index i = 0; i < m; ++i) {
    const Vector row = pd.draws.row(i).transpose();
    std::tie(s.hpd_lo[i], s.hpd_hi[i]) = hpd_interval(row, level);
  }
  return s;
}

inline PredictionMetrics prediction_metrics(const Eigen::Ref<const Vector>& y_true, const PredictionSummary& s,
                                            double level = 0.99) {
  const auto m = y_true.size();
  if (m == 0) throw DomainError("prediction_metrics: no rows");
  if (s.y_hat.size() != m || s.hpd_lo.size() != m || s.hpd_hi.size() != m)
    throw DimensionError("prediction_metrics: size mismatch");
  PredictionMetrics out;
  out.hpd_level = level;
  double se = 0.0, ae = 0.0, rel = 0.0;
  std::size_t n_rel = 0, covered = 0;
  std::vector<double> widths(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) {
    const double r = y_true[i] - s.y_hat[i];
    se += r * r;
    ae += std::abs(r);
    if (std::abs(y_true[i]) < kRelativeErrorFloor) {
      ++out.re_excluded;
    } else {
      rel += std::abs(r) / std::abs(y_true[i]);
      ++n_rel;
    }
    widths[static_cast<std::size_t>(i)] = s.hpd_hi[i] - s.hpd_lo[i];
    if (y_true[i] >= s.hpd_lo[i] && y_true[i] <= s.hpd_hi[i]) ++covered;
  }
  const double dm = static_cast<double>(m);
  out.rmse = std::sqrt(se / dm);
  out.mae = ae / dm;
  if (n_rel > 0) out.re = rel / static_cast<double>(n_rel);
  out.hpd_coverage = static_cast<double>(covered) / dm;
  double total = 0.0;
  for (double w : widths) total += w;
  out.hpd_width_mean = total / dm;
  std::sort(widths.begin(), widths.end());
  const auto h = widths.size() / 2;
  out.hpd_width_median = widths.size() % 2 ? widths[h] : 0.5 * (widths[h - 1] + widths[h]);
  return out;
}

inline PredictionMetrics prediction_metrics(const Eigen::Ref<const Vector>& y_true, const PredictiveDraws& pd,
                                            double level = 0.99) {
  if (pd.draws.rows() != y_true.size()) throw DimensionError("prediction_metrics: size mismatch");
  return prediction_metrics(y_true, summarize_predictions(pd, level), level);
}

}  // namespace tlmix
