#include <tlmix/nuplan.hpp>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace tlmix;

namespace {

constexpr auto FB = KldDirection::FlexibleVsBase;
constexpr auto BF = KldDirection::BaseVsFlexible;

// -H(t) + log(2 pi)/2 + nu / (2 (nu - 2)), entropy in closed form.
double kld_t_normal_closed(double nu) {
  const double h = 0.5 * (nu + 1.0) * (boost::math::digamma(0.5 * (nu + 1.0)) - boost::math::digamma(0.5 * nu)) +
                   std::log(std::sqrt(nu) * boost::math::beta(0.5 * nu, 0.5));
  return -h + 0.5 * std::log(2.0 * std::numbers::pi) + 0.5 * nu / (nu - 2.0);
}

}  // namespace

// Values from tests/oracles/kld_oracle.py (mpmath, 30 digits).
TEST(Kld, FlexibleVsBaseOracle) {
  EXPECT_NEAR(kld_normal_t(2.8, FB), 0.86901197901524761, 1e-9);
  EXPECT_NEAR(kld_normal_t(4.0, FB), 0.23717851632600639, 1e-9);
  EXPECT_NEAR(kld_normal_t(10.0, FB), 0.022676040228991906, 1e-9);
  EXPECT_NEAR(kld_normal_t(14.4, FB), 0.01005330470944685, 1e-9);
  EXPECT_NEAR(kld_normal_t(50.0, FB), 0.000734685692242665, 1e-9);
}

TEST(Kld, BaseVsFlexibleOracle) {
  EXPECT_NEAR(kld_normal_t(2.8, BF), 0.075893905418994356, 1e-9);
  EXPECT_NEAR(kld_normal_t(4.0, BF), 0.046270531042630118, 1e-9);
  EXPECT_NEAR(kld_normal_t(14.4, BF), 0.0060418790491933529, 1e-9);
}

TEST(Kld, ClosedFormAgreementAcrossRange) {
  for (double nu = 2.05; nu <= 50.0; nu *= 1.17) EXPECT_NEAR(kld_normal_t(nu, FB), kld_t_normal_closed(nu), 1e-9) << nu;
}

TEST(Kld, LargeNuAsymptote) {
  for (double nu : {30.0, 50.0}) EXPECT_NEAR(kld_normal_t(nu, FB) * nu * nu, 1.75, 0.25);
}

TEST(Kld, MonotoneDecreasing) {
  for (auto dir : {FB, BF}) {
    double prev = kld_normal_t(2.1, dir);
    for (double nu = 2.2; nu <= 50.0; nu += 0.37) {
      const double v = kld_normal_t(nu, dir);
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, prev) << nu;
      prev = v;
    }
  }
}

TEST(Kld, DomainErrors) {
  EXPECT_THROW(kld_normal_t(2.0, FB), DomainError);
  EXPECT_THROW(kld_normal_t(-1.0, BF), DomainError);
  EXPECT_NO_THROW(kld_normal_t(1.5, BF));
}

TEST(Grid, AdoptedConventionMatchesPublishedPoints) {
  const auto g4 = build_nu_grid({2.8, 14.4, 4, 1});
  ASSERT_EQ(g4.nu.size(), 4u);
  EXPECT_NEAR(g4.nu[1], 3.2, 0.3);
  EXPECT_NEAR(g4.nu[2], 3.9, 0.3);
  const auto g3 = build_nu_grid({2.8, 14.4, 3, 1});
  EXPECT_NEAR(g3.nu[1], 3.5, 0.3);
}

TEST(Grid, FrozenInteriorPoints) {
  const auto g4 = build_nu_grid({2.8, 14.4, 4, 4});
  EXPECT_NEAR(g4.nu[1], 3.0777, 1e-3);
  EXPECT_NEAR(g4.nu[2], 3.7263, 1e-3);
  EXPECT_NEAR(build_nu_grid({2.8, 14.4, 3, 3}).nu[1], 3.318, 1e-3);
}

TEST(Grid, PropertiesUnderEveryConvention) {
  for (auto dir : {FB, BF})
    for (auto scale : {GridScale::Kld, GridScale::Distance})
      for (int K : {2, 3, 4, 6}) {
        const auto g = build_nu_grid({2.8, 14.4, K, 1}, dir, scale);
        ASSERT_EQ(static_cast<int>(g.nu.size()), K);
        EXPECT_DOUBLE_EQ(g.nu.front(), 2.8);
        EXPECT_DOUBLE_EQ(g.nu.back(), 14.4);
        for (int j = 1; j < K; ++j) EXPECT_GT(g.nu[j], g.nu[j - 1]);
        EXPECT_LT(g.spacing_residual(), 1e-7);
      }
}

TEST(Grid, TwoPointsAreEndpoints) {
  const auto g = build_nu_grid({3.0, 20.0, 2, 1});
  EXPECT_EQ(g.nu, (std::vector<double>{3.0, 20.0}));
}

TEST(Grid, RequestValidation) {
  EXPECT_THROW(build_nu_grid({1.5, 14.4, 4, 1}), DomainError);
  EXPECT_THROW(build_nu_grid({2.8, 60.0, 4, 1}), DomainError);
  EXPECT_THROW(build_nu_grid({2.8, 14.4, 1, 1}), DomainError);
  EXPECT_THROW(build_nu_grid({5.0, 4.0, 3, 1}), DomainError);
}

TEST(PcPrior, DefaultRatePutsMassBelowTen) {
  const auto pc = PcPriorSpec::with_mass_below();
  EXPECT_NEAR(pc_prior_cdf(10.0, pc), 0.8, 1e-12);
}

TEST(PcPrior, DensityIntegratesToCdf) {
  for (auto dir : {FB, BF}) {
    PcPriorSpec pc{0.7, dir};
    // trapezoid in log(nu - 2) over (2.001, 200]
    const int N = 4000;
    const double a = std::log(0.001), b = std::log(198.0);
    double s = 0.0;
    for (int i = 0; i <= N; ++i) {
      const double t = a + (b - a) * i / N, nu = 2.0 + std::exp(t);
      const double f = std::exp(pc_prior_logpdf(nu, pc)) * (nu - 2.0);
      s += (i == 0 || i == N ? 0.5 : 1.0) * f;
    }
    s *= (b - a) / N;
    const double exact = pc_prior_cdf(200.0, pc) - pc_prior_cdf(2.001, pc);
    EXPECT_NEAR(s, exact, 1e-3) << to_string(dir);
  }
}

TEST(PcPrior, RejectsNuAtMostTwo) {
  EXPECT_THROW(pc_prior_logpdf(2.0, PcPriorSpec{}), DomainError);
  EXPECT_THROW(pc_prior_logpdf(3.0, PcPriorSpec{-1.0}), DomainError);
}

TEST(Direction, ParseRoundTrip) {
  for (auto d : {FB, BF}) EXPECT_EQ(parse_kld_direction(to_string(d)), d);
  EXPECT_THROW(parse_kld_direction("sideways"), DomainError);
}
