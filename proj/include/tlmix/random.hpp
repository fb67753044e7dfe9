#pragma once

#include <tlmix/error.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>

namespace tlmix {

/// Per-chain random engine. Every sampler takes it by reference and draws in a
/// fixed order, so a chain is reproducible from its seed.
using Rng = std::mt19937_64;

/// Seed for the c-th of several chains derived from one user seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x9e3779b9u};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

namespace rnd {

inline double uniform(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline double normal(Rng& rng, double mean = 0.0, double sd = 1.0) {
  return mean + sd * std::normal_distribution<double>(0.0, 1.0)(rng);
}

/// Gamma with shape/rate parametrisation.
inline double gamma(Rng& rng, double shape, double rate) {
  return std::gamma_distribution<double>(shape, 1.0)(rng) / rate;
}

/// Inverse gamma: 1/X with X ~ Gamma(shape, rate).
inline double inverse_gamma(Rng& rng, double shape, double rate) {
  return rate / std::gamma_distribution<double>(shape, 1.0)(rng);
}

inline Eigen::VectorXd dirichlet(Rng& rng, const Eigen::Ref<const Eigen::VectorXd>& alpha) {
  Eigen::VectorXd g(alpha.size());
  for (Eigen::Index i = 0; i < alpha.size(); ++i)
    g[i] = std::gamma_distribution<double>(alpha[i], 1.0)(rng);
  const double s = g.sum();
  if (!(s > 0)) throw NumericalError("dirichlet: all gamma draws underflowed");
  return g / s;
}

/// Index drawn with probability proportional to exp(log_weights[i]).
inline int categorical_log(Rng& rng, std::span<const double> log_weights) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : log_weights) m = std::max(m, v);
  if (!std::isfinite(m)) throw NumericalError("categorical: no finite log weight");
  double total = 0.0;
  for (double v : log_weights) total += std::exp(v - m);
  double r = uniform(rng) * total;
  const int n = static_cast<int>(log_weights.size());
  for (int i = 0; i < n; ++i) {
    r -= std::exp(log_weights[i] - m);
    if (r < 0) return i;
  }
  for (int i = n - 1; i >= 0; --i)
    if (std::isfinite(log_weights[i])) return i;
  return n - 1;
}

/// Index drawn with probability proportional to weights[i] >= 0.
inline int categorical(Rng& rng, const Eigen::Ref<const Eigen::VectorXd>& weights) {
  const double total = weights.sum();
  double r = uniform(rng) * total;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    r -= weights[i];
    if (r < 0) return static_cast<int>(i);
  }
  for (Eigen::Index i = weights.size() - 1; i >= 0; --i)
    if (weights[i] > 0) return static_cast<int>(i);
  return static_cast<int>(weights.size() - 1);
}

}  // namespace rnd
}  // namespace tlmix
