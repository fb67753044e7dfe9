#include <tlmix/model.hpp>

#include <boost/math/distributions/students_t.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

using namespace tlmix;

namespace {

ModelSpec study1_spec() {
  return ModelSpec::create(2, 2, 2, (Vector(2) << 2.8, 4.0).finished(), PriorSpec::defaults(2, 2, 2, 0.0));
}

ParamState study1_theta() {
  ParamState t;
  t.mu_star = (Vector(2) << 0.0, 2.5).finished();
  t.sigma2 = (Vector(2) << 1.0, 0.75).finished();
  t.w = (Vector(2) << 0.6, 0.4).finished();
  t.wdot = Matrix::Constant(2, 2, 0.5);
  t.beta = (Vector(2) << -2.0, 1.0).finished();
  return t;
}

}  // namespace

TEST(ErrorVariance, Study1TruthIsExact) {
  EXPECT_NEAR(error_variance(study1_theta(), study1_spec()), 3.975, 1e-12);
}

TEST(ErrorVariance, SingleNormalLikeComponent) {
  auto spec = ModelSpec::create(1, 1, 0, (Vector(1) << 1e6).finished(), PriorSpec::defaults(1, 1, 0, 0.0));
  ParamState t{(Vector(1) << 3.0).finished(), (Vector(1) << 2.0).finished(), Vector::Ones(1),
               Matrix::Ones(1, 1), Vector(0), Vector()};
  EXPECT_NEAR(error_variance(t, spec), 2.0, 1e-5);
}

TEST(ErrorVariance, InfiniteWhenSampledNuAtMostTwo) {
  auto spec = study1_spec();
  auto t = study1_theta();
  t.nu = (Vector(2) << 2.0, 4.0).finished();
  EXPECT_THROW(error_variance(t, spec), InfiniteVarianceError);
}

TEST(StudentT, MatchesReferenceDensity) {
  for (double nu : {2.1, 2.8, 4.0, 14.4, 50.0, 1e4}) {
    const boost::math::students_t_distribution<double> t(nu);
    for (double y : {-7.5, -1.0, 0.0, 0.3, 12.0}) {
      const double mu = 0.7, s2 = 2.3, s = std::sqrt(s2);
      const double ref = std::log(boost::math::pdf(t, (y - mu) / s) / s);
      EXPECT_NEAR(student_t_logpdf(y, mu, s2, nu), ref, 1e-12) << nu << " " << y;
    }
  }
}

TEST(StudentT, RejectsBadScale) {
  EXPECT_THROW(student_t_logpdf(0.0, 0.0, 0.0, 3.0), DomainError);
  EXPECT_THROW(student_t_logpdf(std::numeric_limits<double>::infinity(), 0.0, 1.0, 3.0), DomainError);
}

TEST(MixtureLogpdf, SingleComponentIsStudentT) {
  auto spec = ModelSpec::create(1, 1, 1, (Vector(1) << 3.0).finished(), PriorSpec::defaults(1, 1, 1, 0.0));
  ParamState t{(Vector(1) << 0.5).finished(), (Vector(1) << 1.7).finished(), Vector::Ones(1),
               Matrix::Ones(1, 1), (Vector(1) << 2.0).finished(), Vector()};
  const Vector x = (Vector(1) << 0.25).finished();
  EXPECT_NEAR(mixture_logpdf(1.2, x, t, spec), student_t_logpdf(1.2, 0.5 + 0.5, 1.7, 3.0), 1e-13);
}

TEST(MixtureLogpdf, EqualsExplicitDoubleSum) {
  auto spec = study1_spec();
  auto t = study1_theta();
  const Vector x = (Vector(2) << 0.3, -1.1).finished();
  const double y = 1.9;
  const double lin = x.dot(t.beta);
  double f = 0.0;
  for (int j = 0; j < 2; ++j)
    for (int k = 0; k < 2; ++k)
      f += t.w[j] * t.wdot(j, k) * std::exp(student_t_logpdf(y, t.mu_star[j] + lin, t.sigma2[j], spec.nu[k]));
  EXPECT_NEAR(mixture_logpdf(y, x, t, spec), std::log(f), 1e-13);
}

TEST(MixtureLogpdf, DimensionMismatchThrows) {
  auto spec = study1_spec();
  EXPECT_THROW(mixture_logpdf(0.0, Vector::Zero(3), study1_theta(), spec), DimensionError);
}

TEST(MixtureLogpdf, FarTailStaysFinite) {
  auto spec = study1_spec();
  const double v = mixture_logpdf(1e150, Vector::Zero(2), study1_theta(), spec);
  EXPECT_TRUE(std::isfinite(v));
}

TEST(LogLikelihood, SumsObservations) {
  auto spec = study1_spec();
  auto t = study1_theta();
  Dataset d{(Vector(3) << 0.1, 2.0, -3.0).finished(), Matrix::Random(3, 2), {}};
  double s = 0.0;
  for (int i = 0; i < 3; ++i) s += mixture_logpdf(d.y[i], d.X.row(i).transpose(), t, spec);
  EXPECT_NEAR(log_likelihood(d, t, spec), s, 1e-12);
}

TEST(Identify, InterceptAndCenteredMeans) {
  const auto id = identify_transform(study1_theta());
  EXPECT_NEAR(id.beta0, 1.0, 1e-15);
  EXPECT_NEAR(id.mu[0], -1.0, 1e-15);
  EXPECT_NEAR(id.mu[1], 1.5, 1e-15);
  EXPECT_NEAR(study1_theta().w.dot(id.mu), 0.0, 1e-15);
}

TEST(LogSumExp, Edges) {
  const double ninf = -std::numeric_limits<double>::infinity();
  std::vector<double> all{ninf, ninf};
  EXPECT_EQ(log_sum_exp(all), ninf);
  std::vector<double> big{1000.0, 1000.0};
  EXPECT_NEAR(log_sum_exp(big), 1000.0 + std::log(2.0), 1e-12);
}

TEST(ModelSpec, Validation) {
  const auto pr = PriorSpec::defaults(2, 2, 0, 0.0);
  EXPECT_THROW(ModelSpec::create(2, 2, 0, (Vector(2) << 2.0, 4.0).finished(), pr), DomainError);
  EXPECT_THROW(ModelSpec::create(2, 2, 0, (Vector(2) << 4.0, 3.0).finished(), pr), DomainError);
  EXPECT_THROW(ModelSpec::create(2, 2, 0, (Vector(1) << 4.0).finished(), pr), DimensionError);
  EXPECT_NO_THROW(ModelSpec::ordinary_t(2, 0, (Vector(2) << 9.0, 3.0).finished(), pr));
}

TEST(ParamState, SimplexValidation) {
  auto spec = study1_spec();
  auto t = study1_theta();
  EXPECT_NO_THROW(validate(t, spec));
  t.w[0] = 0.7;
  EXPECT_THROW(validate(t, spec), DomainError);
  t = study1_theta();
  t.sigma2[1] = -1.0;
  EXPECT_THROW(validate(t, spec), DomainError);
}

TEST(TKernel, TailLabelPosteriorAtTenScales) {
  // P(k = heavy | r = 10 sigma) with nu = (2.8, 14.4), equal inner weights.
  const TKernel kern((Vector(2) << 2.8, 14.4).finished());
  const double s2 = 1.3, r = 10.0 * std::sqrt(s2);
  const double a = kern(0, r, s2, std::log(s2)), b = kern(1, r, s2, std::log(s2));
  EXPECT_NEAR(1.0 / (1.0 + std::exp(b - a)), 0.99988165233482584, 1e-12);
}

TEST(Relabel, SortsByLocationAndPermutesRows) {
  auto spec = study1_spec();
  ParamState t = study1_theta();
  std::swap(t.mu_star[0], t.mu_star[1]);
  std::swap(t.sigma2[0], t.sigma2[1]);
  std::swap(t.w[0], t.w[1]);
  t.wdot << 0.2, 0.8, 0.5, 0.5;
  const auto before = mixture_logpdf(0.4, Vector::Zero(2), t, spec);
  const auto order = relabel_by_location(t, spec);
  EXPECT_EQ(order, (std::vector<int>{1, 0}));
  EXPECT_EQ(t.mu_star, study1_theta().mu_star);
  EXPECT_EQ(t.w, study1_theta().w);
  EXPECT_DOUBLE_EQ(t.wdot(1, 0), 0.2);
  EXPECT_NEAR(mixture_logpdf(0.4, Vector::Zero(2), t, spec), before, 1e-14);
}

TEST(Relabel, OrdinaryTPermutesTails) {
  auto spec = ModelSpec::ordinary_t(2, 0, (Vector(2) << 3.0, 9.0).finished(), PriorSpec::defaults(2, 2, 0, 0.0));
  ParamState t{(Vector(2) << 5.0, -1.0).finished(), (Vector(2) << 1.0, 2.0).finished(),
               (Vector(2) << 0.3, 0.7).finished(), Matrix::Identity(2, 2), Vector(0), Vector()};
  const double before = mixture_logpdf(0.4, Vector(0), t, spec);
  relabel_by_location(t, spec);
  EXPECT_EQ(t.nu, (Vector(2) << 9.0, 3.0).finished());
  EXPECT_EQ(t.wdot, Matrix::Identity(2, 2));
  EXPECT_NEAR(mixture_logpdf(0.4, Vector(0), t, spec), before, 1e-14);
}
