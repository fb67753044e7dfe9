#include <tlmix/datagen.hpp>
#include <tlmix/diagnostics.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace tlmix;

namespace {

Chain degenerate_chain(const ParamState& t, int copies, double ll = 0.0) {
  Chain c;
  for (int m = 0; m < copies; ++m) {
    c.draws.push_back(t);
    c.loglik_trace.push_back(ll);
  }
  return c;
}

}  // namespace

TEST(Dic, IdenticalDrawsGiveDevianceAtTheta) {
  const auto sim = simulate_study1(100, 4);
  const double ll = log_likelihood(sim.data, sim.truth, sim.truth_spec);
  const auto r = dic(degenerate_chain(sim.truth, 5, ll), sim.data, sim.truth_spec);
  EXPECT_NEAR(r.dbar, -2.0 * ll, 1e-9);
  EXPECT_NEAR(r.d_theta_tilde, -2.0 * ll, 1e-9);
  EXPECT_NEAR(r.dic, -2.0 * ll, 1e-9);
  EXPECT_EQ(r.dic, 2.0 * r.dbar - r.d_theta_tilde);
}

TEST(Dic, DbarFromTrace) {
  const auto sim = simulate_study1(10, 4);
  Chain c = degenerate_chain(sim.truth, 2);
  c.loglik_trace = {-10.0, -12.0};
  EXPECT_DOUBLE_EQ(dic(c, sim.data, sim.truth_spec).dbar, 22.0);
}

TEST(Dic, PosteriorMeanIgnoresLabelOrder) {
  const auto sim = simulate_study1(10, 4);
  ParamState swapped = sim.truth;
  relabel_by_location(swapped, sim.truth_spec);
  std::swap(swapped.mu_star[0], swapped.mu_star[1]);
  std::swap(swapped.sigma2[0], swapped.sigma2[1]);
  std::swap(swapped.w[0], swapped.w[1]);
  Chain c = degenerate_chain(sim.truth, 1);
  c.draws.push_back(swapped);
  c.loglik_trace.push_back(0.0);
  const auto mean = posterior_mean_theta(c, sim.truth_spec);
  EXPECT_NEAR((mean.mu_star - sim.truth.mu_star).norm(), 0.0, 1e-14);
  EXPECT_THROW(dic(Chain{}, sim.data, sim.truth_spec), DomainError);
}

TEST(DensityDistance, ZeroForTruthAndScaledForMultiple) {
  const auto s = study1_truth();
  const auto truth = two_level_error_density(s.truth, s.truth_spec);
  EXPECT_NEAR(density_distance(truth, s.truth, s.truth_spec).dbar_global, 0.0, 1e-12);
  const auto d = density_distance(truth, [&](double e) { return 1.1 * truth.pdf(e); });
  EXPECT_NEAR(d.dbar_global, 0.1, 1e-12);
  EXPECT_NEAR(d.dbar_tail, 0.1, 1e-12);
}

TEST(DensityDistance, ZeroTrueDensityThrows) {
  TrueDensity uniform{[](double x) { return (x > 0 && x < 1) ? 1.0 : 0.0; },
                      [](double x) { return std::clamp(x, 0.0, 1.0); }};
  GridSpec g;
  EXPECT_NO_THROW(density_distance(uniform, [](double) { return 1.0; }, g));
  TrueDensity holey{[](double x) { return std::abs(x - 0.5) < 0.01 ? 0.0 : 1.0; }, uniform.cdf};
  EXPECT_THROW(density_distance(holey, [](double) { return 1.0; }, g), NumericalError);
}

TEST(DensityDistance, QuantilesOfTrueDensity) {
  const auto s = study1_truth();
  const auto truth = two_level_error_density(s.truth, s.truth_spec);
  for (double p : {0.001, 0.01, 0.5, 0.99, 0.999}) EXPECT_NEAR(truth.cdf(quantile_from_cdf(truth.cdf, p)), p, 1e-10);
}

TEST(VEps, DegenerateChainAtStudy1Truth) {
  const auto s = study1_truth();
  const auto v = v_eps_summary(degenerate_chain(s.truth, 20), s.truth_spec, 3.975);
  EXPECT_NEAR(v.mean, 3.975, 1e-12);
  EXPECT_NEAR(v.var, 0.0, 1e-20);
  EXPECT_NEAR(*v.bias, 0.0, 1e-12);
  EXPECT_NEAR(*v.mse, 0.0, 1e-20);
}

TEST(VEps, MseIsBiasSquaredPlusVariance) {
  const auto s = study1_truth();
  Chain c;
  for (double f : {0.8, 1.0, 1.3, 0.95}) {
    ParamState t = s.truth;
    t.sigma2 *= f;
    c.draws.push_back(t);
    c.loglik_trace.push_back(0.0);
  }
  const auto v = v_eps_summary(c, s.truth_spec, 4.2);
  EXPECT_DOUBLE_EQ(*v.mse, *v.bias * *v.bias + v.var);
  EXPECT_FALSE(v_eps_summary(c, s.truth_spec).bias.has_value());
}

TEST(Ess, WhiteNoise) {
  Rng rng(3);
  std::vector<double> x(10000);
  for (auto& v : x) v = rnd::normal(rng);
  EXPECT_NEAR(ess(x), 10000.0, 1500.0);
}

TEST(Ess, AlternatingIsCappedAtLength) {
  std::vector<double> x(1000);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = i % 2 ? 1.0 : -1.0;
  EXPECT_EQ(ess(x), 1000.0);
}

TEST(Ess, ConstantAndShort) {
  EXPECT_EQ(ess(std::vector<double>(50, 2.0)), 50.0);
  EXPECT_THROW(ess(std::vector<double>(9, 1.0)), DomainError);
}

TEST(Ess, Ar1ClosedForm) {
  Rng rng(4);
  const double rho = 0.9;
  std::vector<double> x(100000);
  double v = 0.0;
  for (auto& xi : x) {
    v = rho * v + std::sqrt(1 - rho * rho) * rnd::normal(rng);
    xi = v;
  }
  const double target = x.size() * (1 - rho) / (1 + rho);
  EXPECT_NEAR(ess(x), target, 0.2 * target);
}
