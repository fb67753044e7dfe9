// tlmix: command-line driver for two-level Student-t mixture regression.
//
//   tlmix nu-grid   --min 2.8 --max 14.4 --k 4
//   tlmix simulate  --study 1 --n 2500 --seed 1
//   tlmix fit       --data d.csv --response y --covariates x1,x2 -J 2 -K 4
//   tlmix predict   --chain out/chain_1.csv --data new.csv
//   tlmix compare   --chains a/chain_1.csv b/chain_1.csv
//
// Outputs go to --out, or $TLMIX_OUT_DIR, or ./tlmix_out.

#include <tlmix/tlmix.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using namespace tlmix;
using io::json;

namespace {

std::string resolve_out_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("TLMIX_OUT_DIR"); env && *env) return env;
  return "tlmix_out";
}

std::string prepare_out_dir(const std::string& flag) {
  const std::string dir = resolve_out_dir(flag);
  fs::create_directories(dir);
  return dir;
}

std::string path_in(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

std::string sidecar_of(const std::string& chain_csv) {
  fs::path p(chain_csv);
  p.replace_extension(".json");
  return p.string();
}

void print_row(const std::vector<std::string>& cells, const std::vector<int>& widths) {
  for (std::size_t c = 0; c < cells.size(); ++c) std::printf("%-*s", widths[c], cells[c].c_str());
  std::printf("\n");
}

std::string f4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string join(const std::vector<double>& v, int decimals) {
  std::string s = "(";
  for (std::size_t i = 0; i < v.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v[i]);
    s += (i ? ", " : "") + std::string(buf);
  }
  return s + ")";
}

// ---------------------------------------------------------------------------
// nu-grid

struct GridArgs {
  double min = 2.8, max = 14.4;
  int k = 4, rounding = 1;
  std::string direction = "flexible-vs-base", scale = "kld", out;
};

GridScale parse_scale(const std::string& s) {
  if (s == "kld") return GridScale::Kld;
  if (s == "distance") return GridScale::Distance;
  throw DomainError("unknown grid scale '" + s + "' (kld or distance)");
}

// Published interior points for the (2.8, 14.4) design.
std::optional<std::vector<double>> published_interior(const NuGridRequest& r) {
  if (r.nu_min != 2.8 || r.nu_max != 14.4) return std::nullopt;
  if (r.K == 4) return std::vector<double>{3.2, 3.9};
  if (r.K == 3) return std::vector<double>{3.5};
  return std::nullopt;
}

int cmd_nu_grid(const GridArgs& a) {
  const NuGridRequest req{a.min, a.max, a.k, a.rounding};
  req.validate();
  const auto dir = parse_kld_direction(a.direction);
  const auto scale = parse_scale(a.scale);
  const auto grid = build_nu_grid(req, dir, scale);

  std::printf("nu grid, K=%d on [%g, %g], %s %s scale\n\n", a.k, a.min, a.max, std::string(to_string(dir)).c_str(),
              a.scale.c_str());
  const std::vector<int> w{6, 22, 12, 22};
  print_row({"k", "nu", "rounded", a.scale == "kld" ? "KLD" : "sqrt(2 KLD)"}, w);
  for (std::size_t k = 0; k < grid.nu.size(); ++k) {
    char nu[32], r[32], c[32];
    std::snprintf(nu, sizeof nu, "%.10f", grid.nu[k]);
    std::snprintf(r, sizeof r, "%.*f", a.rounding, grid.rounded[k]);
    std::snprintf(c, sizeof c, "%.12g", grid.coordinate[k]);
    print_row({std::to_string(k + 1), nu, r, c}, w);
  }
  std::printf("\nspacing residual: %.3g\n", grid.spacing_residual());

  json conventions = json::array();
  const auto ref = published_interior(req);
  std::printf("\ninterior points under each convention");
  if (ref) std::printf(" (published: %s)", join(*ref, 1).c_str());
  std::printf("\n");
  for (auto d : {KldDirection::FlexibleVsBase, KldDirection::BaseVsFlexible})
    for (auto s : {GridScale::Kld, GridScale::Distance}) {
      const auto g = build_nu_grid(req, d, s);
      const std::vector<double> interior(g.nu.begin() + 1, g.nu.end() - 1);
      double worst = 0.0;
      if (ref)
        for (std::size_t i = 0; i < interior.size(); ++i) worst = std::max(worst, std::abs(interior[i] - (*ref)[i]));
      const std::string name = std::string(to_string(d)) + (s == GridScale::Kld ? " / kld" : " / distance");
      std::printf("  %-34s %s", name.c_str(), join(interior, 3).c_str());
      if (ref) std::printf("  max |dev| = %.3f%s", worst, worst <= 0.3 ? "" : "  (outside 0.3)");
      std::printf("\n");
      json cj = {{"direction", to_string(d)}, {"scale", s == GridScale::Kld ? "kld" : "distance"},
                 {"interior", interior}};
      if (ref) cj["max_deviation_from_published"] = worst;
      conventions.push_back(cj);
    }

  const std::string dirp = prepare_out_dir(a.out);
  json out = {{"request", {{"nu_min", a.min}, {"nu_max", a.max}, {"K", a.k}, {"rounding", a.rounding}}},
              {"direction", to_string(dir)},
              {"scale", a.scale},
              {"nu", grid.nu},
              {"rounded", grid.rounded},
              {"coordinate", grid.coordinate},
              {"spacing_residual", grid.spacing_residual()},
              {"conventions", conventions}};
  if (ref) out["published_interior"] = *ref;
  io::write_json(path_in(dirp, "nu_grid.json"), out);
  return 0;
}

// ---------------------------------------------------------------------------
// simulate

struct SimArgs {
  std::string study = "1", out;
  int n = 2500;
  std::uint64_t seed = 1;
  long check_n = 0;
};

struct SelfCheck {
  double closed_form, target, empirical, se;
};

SelfCheck variance_check(const Vector& errors, double closed, double target) {
  const double n = static_cast<double>(errors.size());
  const double m = errors.mean();
  const Eigen::ArrayXd d2 = (errors.array() - m).square();
  const double var = d2.sum() / (n - 1.0);
  const double se = std::sqrt((d2 - var).square().sum() / (n - 1.0) / n);
  return {closed, target, var, se};
}

int cmd_simulate(const SimArgs& a) {
  const std::string dir = prepare_out_dir(a.out);
  json truth;
  Dataset data;
  std::vector<std::string> names;
  std::optional<SelfCheck> check;
  const long check_n = a.check_n > 0 ? a.check_n : a.n;
  if (a.study == "1") {
    const auto s = simulate_study1(a.n, a.seed);
    data = s.data;
    names = {"x1", "x2"};
    truth = {{"study", 1}, {"beta0", s.beta0}, {"theta", io::to_json(s.truth)}, {"spec", io::to_json(s.truth_spec)}};
    const double closed = error_variance(s.truth, s.truth_spec);
    const auto big = check_n == a.n ? s : simulate_study1(static_cast<int>(check_n), a.seed);
    check = variance_check(big.errors, closed, 3.975);
  } else if (a.study == "2") {
    const auto s = simulate_study2(a.n, a.seed);
    data = s.data;
    names = {"x1", "x2"};
    json comps = json::array();
    for (const auto& c : s.components)
      comps.push_back({{"mu", c.mu}, {"sigma2", c.sigma2}, {"lambda", c.lambda}, {"nu", c.nu}, {"weight", c.weight}});
    truth = {{"study", 2}, {"beta0", s.beta0}, {"beta", io::vec_json(s.beta)}, {"components", comps},
             {"error_mean", s.error_mean()}};
    const double closed = s.error_variance();
    const auto big = check_n == a.n ? s : simulate_study2(static_cast<int>(check_n), a.seed);
    check = variance_check(big.errors, closed, 4.964);
  } else if (a.study == "survey") {
    const auto s = simulate_weight_survey(a.n, a.seed);
    data = s.data;
    names = {"age", "male", "diabetes"};
    truth = {{"study", "survey"}, {"beta0", s.beta0}, {"theta", io::to_json(s.truth)},
             {"spec", io::to_json(s.truth_spec)}};
    check = variance_check(s.errors, error_variance(s.truth, s.truth_spec), 529.0);
  } else {
    throw DomainError("unknown study '" + a.study + "' (1, 2 or survey)");
  }
  const auto& c = *check;
  const double z = (c.empirical - c.closed_form) / c.se;
  truth["seed"] = a.seed;
  truth["n"] = a.n;
  truth["error_variance"] = {{"closed_form", c.closed_form}, {"target", c.target},
                             {"empirical", c.empirical}, {"empirical_se", c.se},
                             {"check_n", check_n}, {"z", z}};
  io::write_dataset_csv(path_in(dir, "data.csv"), data, names);
  io::write_json(path_in(dir, "truth.json"), truth);
  io::write_json(path_in(dir, "config.json"),
                 {{"command", "simulate"}, {"study", a.study}, {"n", a.n}, {"seed", a.seed}, {"check_n", check_n}});
  std::printf("wrote %d rows to %s\n", data.n(), path_in(dir, "data.csv").c_str());
  std::printf("error variance: closed form %.6f (target %.3f), empirical %.6f +- %.6f at n=%ld (z = %.2f)\n",
              c.closed_form, c.target, c.empirical, c.se, check_n, z);
  return 0;
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
  std::string data, response = "y", variant = "two-level", out;
  std::vector<std::string> covariates;
  int J = 2, K = 4;
  std::vector<double> nu;
  bool sample_nu = false, relabel = false;
  long iterations = 50000, burn_in = 10000, thin = 1;
  std::uint64_t seed = 1;
  int chains = 1;
  std::optional<double> mu0;
  double tau = 0.005, alpha_dot = 1.0, beta_dot = 1.5, upsilon2 = 1e4;
  double pc_mass = 0.8, pc_upper = 10.0, nu_step = 0.25;
};

Vector default_grid(int K) {
  const auto g = build_nu_grid({2.8, 14.4, K, 1});
  std::vector<double> v = g.rounded;
  if (std::adjacent_find(v.begin(), v.end()) != v.end()) v = g.nu;
  return Eigen::Map<const Vector>(v.data(), K);
}

int cmd_fit(const FitArgs& a) {
  const auto variant = parse_variant(a.variant);
  const auto loaded = load_csv(a.data, a.response, a.covariates);
  const Dataset& data = loaded.data;
  const int p = data.p();
  PriorSpec pr = PriorSpec::defaults(a.J, variant == Variant::OrdinaryT ? a.J : a.K, p,
                                     a.mu0.value_or(data.y.mean()));
  pr.tau = a.tau;
  pr.alpha_dot = a.alpha_dot;
  pr.beta_dot = a.beta_dot;
  pr.upsilon2 = a.upsilon2;

  ModelSpec spec;
  if (variant == Variant::TwoLevel) {
    const Vector nu = a.nu.empty() ? default_grid(a.K) : Eigen::Map<const Vector>(a.nu.data(), std::ssize(a.nu));
    if (nu.size() != a.K) throw DimensionError("--nu must list K values");
    spec = ModelSpec::create(a.J, a.K, p, nu, pr);
  } else {
    Vector nu = Vector::Constant(a.J, 4.0);
    if (a.nu.size() == 1) nu.setConstant(a.nu[0]);
    else if (!a.nu.empty()) {
      if (static_cast<int>(a.nu.size()) != a.J) throw DimensionError("--nu must list 1 or J values");
      nu = Eigen::Map<const Vector>(a.nu.data(), a.J);
    }
    spec = ModelSpec::ordinary_t(a.J, p, nu, pr);
  }

  SamplerConfig cfg;
  cfg.iterations = a.iterations;
  cfg.burn_in = a.burn_in;
  cfg.thin = a.thin;
  cfg.seed = a.seed;
  cfg.variant = variant;
  cfg.nu_sampling = a.sample_nu;
  cfg.relabel = a.relabel;
  cfg.pc = PcPriorSpec::with_mass_below(a.pc_upper, a.pc_mass);
  cfg.nu_step = a.nu_step;
  cfg.validate();
  if (a.chains < 1) throw DomainError("--chains must be >= 1");

  const std::string dir = prepare_out_dir(a.out);
  io::write_json(path_in(dir, "config.json"),
                 {{"command", "fit"},
                  {"data", a.data},
                  {"response", a.response},
                  {"covariates", a.covariates},
                  {"dropped_rows", loaded.dropped_rows},
                  {"chains", a.chains},
                  {"spec", io::to_json(spec)},
                  {"config", io::to_json(cfg)}});
  if (loaded.dropped_rows > 0)
    std::fprintf(stderr, "note: dropped %zu rows with missing values\n", loaded.dropped_rows);

  std::vector<Chain> chains(static_cast<std::size_t>(a.chains));
  std::vector<SamplerConfig> cfgs(chains.size(), cfg);
  std::vector<std::exception_ptr> errors(chains.size());
  for (std::size_t c = 0; c < chains.size(); ++c)
    cfgs[c].seed = c == 0 ? a.seed : derive_seed(a.seed, c);
  {
    std::vector<std::jthread> workers;
    for (std::size_t c = 0; c < chains.size(); ++c)
      workers.emplace_back([&, c] {
        try {
          chains[c] = run_chain(data, spec, cfgs[c]);
        } catch (...) {
          errors[c] = std::current_exception();
        }
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  const std::string fp = io::fingerprint(data);
  json summary = json::array();
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const std::string stem = "chain_" + std::to_string(c + 1);
    const auto& ch = chains[c];
    io::write_chain_csv(path_in(dir, stem + ".csv"), ch, spec);
    io::ChainMeta meta{spec, cfgs[c], fs::absolute(a.data).string(), fp, data.n(), a.covariates, a.response,
                       ch.wall_time, ch.nu_acceptance_rate};
    io::write_json(path_in(dir, stem + ".json"), io::to_json(meta));
    const auto report = fit_report(ch, data, spec);
    io::write_json(path_in(dir, "report_" + std::to_string(c + 1) + ".json"), io::to_json(report));

    const auto fhat = posterior_mean_density(ch, spec);
    const ParamState tilde = posterior_mean_theta(ch, spec);
    const Vector resid = (data.y - (p > 0 ? Vector(data.X * tilde.beta) : Vector::Zero(data.n()))).array() -
                         identify_transform(tilde).beta0;
    const double lo = resid.minCoeff(), hi = resid.maxCoeff();
    const double pad = 0.1 * (hi - lo + 1.0);
    io::write_density_csv(path_in(dir, "density_" + std::to_string(c + 1) + ".csv"),
                          density_curve(fhat, lo - pad, hi + pad, 256));

    std::printf("chain %zu: %zu draws, %.1f s, DIC %.3f (Dbar %.3f, D(theta~) %.3f), ESS(loglik) %.0f", c + 1,
                ch.size(), ch.wall_time, report.dic, report.dbar, report.d_theta_tilde, report.ess_loglik);
    if (cfg.nu_sampling) std::printf(", nu acceptance %.3f", ch.nu_acceptance_rate);
    std::printf("\n");
    summary.push_back({{"chain", stem + ".csv"}, {"seed", cfgs[c].seed}, {"report", io::to_json(report)}});
  }
  io::write_json(path_in(dir, "fit_summary.json"), summary);
  return 0;
}

// ---------------------------------------------------------------------------
// predict

struct PredictArgs {
  std::string chain, data, response, id_column, out;
  std::uint64_t seed = 1;
  double level = 0.99;
};

int cmd_predict(const PredictArgs& a) {
  if (!fs::exists(a.chain)) throw Error("chain file '" + a.chain + "' not found");
  const auto meta = io::chain_meta_from_json(io::read_json(sidecar_of(a.chain)));
  const auto chain = io::read_chain_csv(a.chain, meta.spec);
  if (chain.size() == 0) throw DomainError("chain file '" + a.chain + "' holds no draws");

  const auto header = csv_header(a.data);
  std::string response = a.response;
  if (response.empty() && std::find(header.begin(), header.end(), meta.response) != header.end())
    response = meta.response;
  const auto loaded = load_csv(a.data, response, meta.covariates, a.id_column);
  Rng rng(a.seed);
  const auto pd = posterior_predictive(loaded.data.X, chain, meta.spec, rng);
  const auto summary = summarize_predictions(pd, a.level);

  const std::string dir = prepare_out_dir(a.out);
  io::write_json(path_in(dir, "config.json"), {{"command", "predict"},
                                               {"chain", a.chain},
                                               {"data", a.data},
                                               {"response", response},
                                               {"seed", a.seed},
                                               {"level", a.level}});
  const Vector* y = response.empty() ? nullptr : &loaded.data.y;
  io::write_prediction_csv(path_in(dir, "predictions.csv"), summary, loaded.data.ids, y);
  std::printf("wrote %d predictions to %s\n", loaded.data.n(), path_in(dir, "predictions.csv").c_str());
  if (y) {
    const auto m = prediction_metrics(*y, summary, a.level);
    json mj = {{"rmse", m.rmse},
               {"mae", m.mae},
               {"re", std::isfinite(m.re) ? json(m.re) : json(nullptr)},
               {"re_excluded_rows", m.re_excluded},
               {"interval_range_mean", m.hpd_width_mean},
               {"interval_range_median", m.hpd_width_median},
               {"interval_coverage", m.hpd_coverage},
               {"level", a.level}};
    io::write_json(path_in(dir, "metrics.json"), mj);
    std::printf("RMSE %.4f  MAE %.4f  RE %s  HPD width mean %.4f (median %.4f)  coverage %.3f\n", m.rmse, m.mae,
                std::isfinite(m.re) ? f4(m.re).c_str() : "undefined", m.hpd_width_mean, m.hpd_width_median,
                m.hpd_coverage);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// compare

struct CompareArgs {
  std::vector<std::string> chains;
  std::string data, out;
};

int cmd_compare(const CompareArgs& a) {
  struct Row {
    std::string chain;
    int J, K;
    FitReport report;
  };
  std::vector<Row> rows;
  std::optional<std::string> fingerprint;
  for (const auto& path : a.chains) {
    if (!fs::exists(path)) throw Error("chain file '" + path + "' not found");
    const auto meta = io::chain_meta_from_json(io::read_json(sidecar_of(path)));
    if (fingerprint && *fingerprint != meta.data_fingerprint)
      throw DomainError("chains were fitted to different datasets ('" + path + "' differs)");
    fingerprint = meta.data_fingerprint;
    const std::string data_path = a.data.empty() ? meta.data_path : a.data;
    const auto data = load_csv(data_path, meta.response, meta.covariates).data;
    if (io::fingerprint(data) != meta.data_fingerprint)
      throw DomainError("dataset '" + data_path + "' does not match the data '" + path + "' was fitted to");
    const auto chain = io::read_chain_csv(path, meta.spec);
    rows.push_back({path, meta.spec.J, meta.spec.K, fit_report(chain, data, meta.spec)});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& x, const Row& y) { return x.report.dic < y.report.dic; });
  const std::vector<int> w{40, 5, 5, 14, 14, 14};
  print_row({"chain", "J", "K", "DIC", "Dbar", "D(theta~)"}, w);
  json table = json::array();
  for (const auto& r : rows) {
    print_row({r.chain, std::to_string(r.J), std::to_string(r.K), f4(r.report.dic), f4(r.report.dbar),
               f4(r.report.d_theta_tilde)},
              w);
    table.push_back({{"chain", r.chain}, {"J", r.J}, {"K", r.K}, {"report", io::to_json(r.report)}});
  }
  const std::string dir = prepare_out_dir(a.out);
  io::write_json(path_in(dir, "config.json"), {{"command", "compare"}, {"chains", a.chains}, {"data", a.data}});
  io::write_json(path_in(dir, "compare.json"), table);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian regression with two-level Student-t mixture errors"};
  app.require_subcommand(1);

  GridArgs grid;
  auto* g = app.add_subcommand("nu-grid", "Design a degrees-of-freedom grid equally spaced in KLD");
  g->add_option("--min", grid.min, "smallest nu (> 2)");
  g->add_option("--max", grid.max, "largest nu (<= 50)");
  g->add_option("--k", grid.k, "number of grid points");
  g->add_option("--rounding", grid.rounding, "decimals for the rounded grid");
  g->add_option("--direction", grid.direction, "flexible-vs-base or base-vs-flexible");
  g->add_option("--scale", grid.scale, "kld or distance");
  g->add_option("--out", grid.out, "output directory");

  SimArgs sim;
  auto* s = app.add_subcommand("simulate", "Generate a simulation-study dataset");
  s->add_option("--study", sim.study, "1, 2 or survey");
  s->add_option("--n", sim.n, "number of rows");
  s->add_option("--seed", sim.seed, "random seed");
  s->add_option("--check-n", sim.check_n, "sample size for the empirical variance check (default n)");
  s->add_option("--out", sim.out, "output directory");

  FitArgs fit;
  std::optional<double> mu0;
  auto* f = app.add_subcommand("fit", "Run the Gibbs sampler");
  f->add_option("--data", fit.data, "CSV with a header row")->required();
  f->add_option("--response", fit.response, "response column");
  f->add_option("--covariates", fit.covariates, "covariate columns")->delimiter(',');
  f->add_option("--variant", fit.variant, "two-level or ordinary-t");
  f->add_option("-J", fit.J, "outer components");
  f->add_option("-K", fit.K, "tail components (two-level)");
  f->add_option("--nu", fit.nu, "degrees of freedom")->delimiter(',');
  f->add_flag("--sample-nu", fit.sample_nu, "Metropolis step on nu (ordinary-t)");
  f->add_flag("--relabel", fit.relabel, "store draws ordered by location");
  f->add_option("--iterations", fit.iterations);
  f->add_option("--burn-in", fit.burn_in);
  f->add_option("--thin", fit.thin);
  f->add_option("--seed", fit.seed);
  f->add_option("--chains", fit.chains, "independent chains run concurrently");
  f->add_option("--mu0", mu0, "prior location (default: mean of y)");
  f->add_option("--tau", fit.tau);
  f->add_option("--alpha-dot", fit.alpha_dot);
  f->add_option("--beta-dot", fit.beta_dot);
  f->add_option("--upsilon2", fit.upsilon2);
  f->add_option("--nu-step", fit.nu_step, "random-walk sd on log(nu - 2)");
  f->add_option("--pc-mass", fit.pc_mass, "PC prior mass below --pc-upper");
  f->add_option("--pc-upper", fit.pc_upper);
  f->add_option("--out", fit.out, "output directory");

  PredictArgs pred;
  auto* p = app.add_subcommand("predict", "Posterior predictive draws and HPD intervals");
  p->add_option("--chain", pred.chain, "chain CSV written by fit")->required();
  p->add_option("--data", pred.data, "CSV with the covariate columns")->required();
  p->add_option("--response", pred.response, "observed response column, if any");
  p->add_option("--id", pred.id_column, "id column");
  p->add_option("--seed", pred.seed);
  p->add_option("--level", pred.level, "HPD level");
  p->add_option("--out", pred.out, "output directory");

  CompareArgs cmp;
  auto* c = app.add_subcommand("compare", "DIC table across fitted chains");
  c->add_option("--chains", cmp.chains, "chain CSVs")->required()->expected(1, -1);
  c->add_option("--data", cmp.data, "dataset (default: path recorded at fit time)");
  c->add_option("--out", cmp.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  fit.mu0 = mu0;

  try {
    if (*g) return cmd_nu_grid(grid);
    if (*s) return cmd_simulate(sim);
    if (*f) return cmd_fit(fit);
    if (*p) return cmd_predict(pred);
    if (*c) return cmd_compare(cmp);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
