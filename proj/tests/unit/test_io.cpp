#include <tlmix/io.hpp>

#include <gtest/gtest.h>

#include <filesystem>

using namespace tlmix;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("tlmix_io_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST(ChainCsv, RoundTripIsExact) {
  const auto sim = simulate_study1(120, 1);
  auto spec = ModelSpec::create(2, 3, 2, (Vector(3) << 2.8, 3.3, 14.4).finished(),
                                PriorSpec::defaults(2, 3, 2, sim.data.y.mean()));
  SamplerConfig cfg;
  cfg.iterations = 30;
  cfg.burn_in = 5;
  const auto chain = run_chain(sim.data, spec, cfg);
  const auto dir = scratch("roundtrip");
  const auto path = (dir / "chain.csv").string();
  io::write_chain_csv(path, chain, spec);
  const auto back = io::read_chain_csv(path, spec);
  ASSERT_EQ(back.size(), chain.size());
  for (std::size_t m = 0; m < chain.size(); ++m) EXPECT_EQ(back.draws[m], chain.draws[m]);
  EXPECT_EQ(back.loglik_trace, chain.loglik_trace);

  const auto again = (dir / "again.csv").string();
  io::write_chain_csv(again, run_chain(sim.data, spec, cfg), spec);
  EXPECT_EQ(io::read_text(path), io::read_text(again));
}

TEST(ChainCsv, HeaderLayout) {
  auto spec = ModelSpec::create(2, 2, 1, (Vector(2) << 3.0, 9.0).finished(), PriorSpec::defaults(2, 2, 1, 0.0));
  const auto cols = io::chain_columns(spec, false);
  const std::vector<std::string> expect{"mu_star.1", "mu_star.2", "sigma2.1", "sigma2.2", "w.1",    "w.2",
                                        "wdot.1.1",  "wdot.1.2",  "wdot.2.1", "wdot.2.2", "beta.1", "loglik"};
  EXPECT_EQ(cols, expect);
  EXPECT_EQ(io::chain_columns(spec, true).size(), expect.size() + 2);
}

TEST(ChainCsv, SampledNuColumnsRoundTrip) {
  auto spec = ModelSpec::ordinary_t(1, 0, (Vector(1) << 4.0).finished(), PriorSpec::defaults(1, 1, 0, 0.0));
  Chain c;
  c.draws.push_back({Vector::Ones(1), Vector::Ones(1), Vector::Ones(1), Matrix::Ones(1, 1), Vector(0),
                     (Vector(1) << 3.25).finished()});
  c.loglik_trace.push_back(-1.5);
  const auto path = (scratch("nu") / "c.csv").string();
  io::write_chain_csv(path, c, spec);
  EXPECT_EQ(io::read_chain_csv(path, spec).draws.front().nu[0], 3.25);
  auto other = ModelSpec::ordinary_t(2, 0, (Vector(2) << 4.0, 4.0).finished(), PriorSpec::defaults(2, 2, 0, 0.0));
  EXPECT_THROW(io::read_chain_csv(path, other), ParseError);
}

TEST(Json, SpecAndConfigRoundTrip) {
  PriorSpec pr = PriorSpec::defaults(2, 3, 1, 1.25);
  pr.alpha_wdot(1, 2) = 4.0;
  const auto spec = ModelSpec::create(2, 3, 1, (Vector(3) << 2.8, 3.3, 14.4).finished(), pr);
  const auto back = io::spec_from_json(io::to_json(spec));
  EXPECT_EQ(back.nu, spec.nu);
  EXPECT_EQ(back.priors.alpha_wdot, spec.priors.alpha_wdot);
  EXPECT_EQ(back.priors.mu0, 1.25);
  SamplerConfig cfg;
  cfg.seed = 1234567890123ull;
  cfg.variant = Variant::OrdinaryT;
  cfg.nu_sampling = true;
  const auto c2 = io::config_from_json(io::to_json(cfg));
  EXPECT_EQ(c2.seed, cfg.seed);
  EXPECT_EQ(c2.variant, Variant::OrdinaryT);
  EXPECT_TRUE(c2.nu_sampling);
}

TEST(Fingerprint, SensitiveToData) {
  auto a = simulate_study1(50, 1).data;
  const auto fa = io::fingerprint(a);
  EXPECT_EQ(fa, io::fingerprint(simulate_study1(50, 1).data));
  a.y[3] += 1e-12;
  EXPECT_NE(fa, io::fingerprint(a));
}

TEST(DatasetCsv, WriteThenLoad) {
  const auto sim = simulate_study2(40, 2);
  const auto path = (scratch("ds") / "d.csv").string();
  io::write_dataset_csv(path, sim.data, {"x1", "x2"});
  const auto back = load_csv(path, "y", {"x1", "x2"});
  EXPECT_EQ(back.data.y, sim.data.y);
  EXPECT_EQ(back.data.X, sim.data.X);
  EXPECT_EQ(io::fingerprint(back.data), io::fingerprint(sim.data));
}

TEST(PredictionCsv, Columns) {
  PredictionSummary s{(Vector(2) << 1.0, 2.0).finished(), (Vector(2) << 0.0, 1.0).finished(),
                      (Vector(2) << 2.0, 3.0).finished()};
  const auto dir = scratch("pred");
  const Vector y = (Vector(2) << 1.5, 2.5).finished();
  io::write_prediction_csv((dir / "a.csv").string(), s, {}, &y);
  EXPECT_EQ(io::read_text((dir / "a.csv").string()), "id,y_true,y_hat,hpd99_lo,hpd99_hi\n1,1.5,1,0,2\n2,2.5,2,1,3\n");
  io::write_prediction_csv((dir / "b.csv").string(), s, {"u", "v"}, nullptr);
  EXPECT_EQ(io::read_text((dir / "b.csv").string()), "id,y_hat,hpd99_lo,hpd99_hi\nu,1,0,2\nv,2,1,3\n");
}

TEST(FitReportJson, Fields) {
  FitReport r{10.0, 8.0, 6.0, VEpsSummary{4.0, 0.1, 0.2, 0.14}, 321.0};
  const auto j = io::to_json(r);
  EXPECT_EQ(j["dic"], 10.0);
  EXPECT_EQ(j["v_eps_posterior"]["mse"], 0.14);
  EXPECT_EQ(j["ess_loglik"], 321.0);
}
