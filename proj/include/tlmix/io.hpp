#pragma once

// File formats: chain CSV with a JSON sidecar, dataset CSV with a truth
// sidecar, prediction CSV, density curve CSV and FitReport JSON.

#include <tlmix/datagen.hpp>
#include <tlmix/diagnostics.hpp>
#include <tlmix/error.hpp>
#include <tlmix/gibbs.hpp>
#include <tlmix/model.hpp>
#include <tlmix/nuplan.hpp>
#include <tlmix/predict.hpp>

#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace tlmix::io {

using nlohmann::json;

/// Shortest round-trip text for a double.
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  return out;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// FNV-1a over the raw bytes of y and X (column-major) plus the dimensions.
inline std::string fingerprint(const Dataset& data) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const void* p, std::size_t len) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  const std::int64_t n = data.n(), p = data.p();
  mix(&n, sizeof n);
  mix(&p, sizeof p);
  mix(data.y.data(), sizeof(double) * static_cast<std::size_t>(data.y.size()));
  mix(data.X.data(), sizeof(double) * static_cast<std::size_t>(data.X.size()));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// JSON conversions

inline json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vector json_vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline json mat_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vec_json(m.row(r).transpose()));
  return rows;
}

inline Matrix json_mat(const json& j, Eigen::Index cols) {
  Matrix m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Vector row = json_vec(j[r]);
    if (row.size() != cols) throw DimensionError("json matrix: ragged rows");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

inline json to_json(const ModelSpec& s) {
  const auto& p = s.priors;
  return {{"J", s.J},
          {"K", s.K},
          {"p", s.p},
          {"nu", vec_json(s.nu)},
          {"tail_per_component", s.tail_per_component},
          {"priors",
           {{"mu0", p.mu0},
            {"tau", p.tau},
            {"alpha_dot", p.alpha_dot},
            {"beta_dot", p.beta_dot},
            {"alpha_w", vec_json(p.alpha_w)},
            {"alpha_wdot", mat_json(p.alpha_wdot)},
            {"phi", vec_json(p.phi)},
            {"upsilon2", p.upsilon2}}}};
}

inline ModelSpec spec_from_json(const json& j) {
  ModelSpec s;
  s.J = j.at("J").get<int>();
  s.K = j.at("K").get<int>();
  s.p = j.at("p").get<int>();
  s.nu = json_vec(j.at("nu"));
  s.tail_per_component = j.at("tail_per_component").get<bool>();
  const auto& p = j.at("priors");
  s.priors.mu0 = p.at("mu0").get<double>();
  s.priors.tau = p.at("tau").get<double>();
  s.priors.alpha_dot = p.at("alpha_dot").get<double>();
  s.priors.beta_dot = p.at("beta_dot").get<double>();
  s.priors.alpha_w = json_vec(p.at("alpha_w"));
  s.priors.alpha_wdot = json_mat(p.at("alpha_wdot"), s.K);
  s.priors.phi = json_vec(p.at("phi"));
  s.priors.upsilon2 = p.at("upsilon2").get<double>();
  s.validate();
  return s;
}

inline json to_json(const SamplerConfig& c) {
  return {{"iterations", c.iterations},
          {"burn_in", c.burn_in},
          {"thin", c.thin},
          {"seed", c.seed},
          {"variant", std::string(to_string(c.variant))},
          {"nu_sampling", c.nu_sampling},
          {"relabel", c.relabel},
          {"pc_lambda", c.pc.lambda},
          {"pc_direction", std::string(to_string(c.pc.direction))},
          {"nu_step", c.nu_step}};
}

inline SamplerConfig config_from_json(const json& j) {
  SamplerConfig c;
  c.iterations = j.at("iterations").get<long>();
  c.burn_in = j.at("burn_in").get<long>();
  c.thin = j.at("thin").get<long>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.nu_sampling = j.at("nu_sampling").get<bool>();
  c.relabel = j.at("relabel").get<bool>();
  c.pc.lambda = j.at("pc_lambda").get<double>();
  c.pc.direction = parse_kld_direction(j.at("pc_direction").get<std::string>());
  c.nu_step = j.at("nu_step").get<double>();
  return c;
}

inline json to_json(const ParamState& t) {
  json j = {{"mu_star", vec_json(t.mu_star)},
            {"sigma2", vec_json(t.sigma2)},
            {"w", vec_json(t.w)},
            {"wdot", mat_json(t.wdot)},
            {"beta", vec_json(t.beta)}};
  if (t.nu.size() > 0) j["nu"] = vec_json(t.nu);
  return j;
}

inline json to_json(const VEpsSummary& v) {
  json j = {{"mean", v.mean}, {"var", v.var}};
  if (v.bias) j["bias"] = *v.bias;
  if (v.mse) j["mse"] = *v.mse;
  return j;
}

inline json to_json(const FitReport& r) {
  json j = {{"dic", r.dic}, {"dbar", r.dbar}, {"d_theta_tilde", r.d_theta_tilde}};
  j["ess_loglik"] = std::isfinite(r.ess_loglik) ? json(r.ess_loglik) : json(nullptr);
  j["v_eps_posterior"] = r.v_eps_posterior ? to_json(*r.v_eps_posterior) : json(nullptr);
  return j;
}

// ---------------------------------------------------------------------------
// Chain CSV

inline std::vector<std::string> chain_columns(const ModelSpec& spec, bool with_nu) {
  std::vector<std::string> c;
  auto idx = [](int i) { return std::to_string(i + 1); };
  for (int j = 0; j < spec.J; ++j) c.push_back("mu_star." + idx(j));
  for (int j = 0; j < spec.J; ++j) c.push_back("sigma2." + idx(j));
  for (int j = 0; j < spec.J; ++j) c.push_back("w." + idx(j));
  for (int j = 0; j < spec.J; ++j)
    for (int k = 0; k < spec.K; ++k) c.push_back("wdot." + idx(j) + "." + idx(k));
  for (int j = 0; j < spec.p; ++j) c.push_back("beta." + idx(j));
  if (with_nu)
    for (int k = 0; k < spec.K; ++k) c.push_back("nu." + idx(k));
  c.push_back("loglik");
  return c;
}

/// One row per stored draw. Deterministic text, so equal chains give equal bytes.
inline void write_chain_csv(const std::string& path, const Chain& chain, const ModelSpec& spec) {
  const bool with_nu = chain.size() > 0 && chain.draws.front().nu.size() > 0;
  auto out = open_out(path);
  const auto cols = chain_columns(spec, with_nu);
  for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << cols[c];
  out << '\n';
  for (std::size_t m = 0; m < chain.size(); ++m) {
    const auto& d = chain.draws[m];
    std::string line;
    auto put = [&](double v) {
      if (!line.empty()) line += ',';
      line += fmt(v);
    };
    for (int j = 0; j < spec.J; ++j) put(d.mu_star[j]);
    for (int j = 0; j < spec.J; ++j) put(d.sigma2[j]);
    for (int j = 0; j < spec.J; ++j) put(d.w[j]);
    for (int j = 0; j < spec.J; ++j)
      for (int k = 0; k < spec.K; ++k) put(d.wdot(j, k));
    for (int j = 0; j < spec.p; ++j) put(d.beta[j]);
    if (with_nu)
      for (int k = 0; k < spec.K; ++k) put(d.nu[k]);
    put(chain.loglik_trace[m]);
    out << line << '\n';
  }
  if (!out) throw Error("write failed for '" + path + "'");
}

/// Reads draws and the log-likelihood trace back; occupancy is not stored.
inline Chain read_chain_csv(const std::string& path, const ModelSpec& spec) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open chain file '" + path + "'");
  std::string line;
  std::vector<std::string> fields;
  if (!std::getline(in, line)) throw ParseError("chain file is empty", 1);
  detail::split_csv_record(line, fields);
  for (auto& f : fields) f = std::string(detail::trim(f));
  const bool with_nu = fields == chain_columns(spec, true);
  if (!with_nu && fields != chain_columns(spec, false))
    throw ParseError("chain header does not match the model dimensions", 1);
  Chain chain;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    detail::split_csv_record(line, fields);
    if (fields.size() != chain_columns(spec, with_nu).size()) throw ParseError("wrong field count", lineno);
    std::size_t c = 0;
    auto next = [&] {
      const auto v = detail::parse_double(fields[c++]);
      if (!v) throw ParseError("cannot parse '" + fields[c - 1] + "'", lineno);
      return *v;
    };
    ParamState d{Vector(spec.J), Vector(spec.J), Vector(spec.J), Matrix(spec.J, spec.K), Vector(spec.p), Vector()};
    for (int j = 0; j < spec.J; ++j) d.mu_star[j] = next();
    for (int j = 0; j < spec.J; ++j) d.sigma2[j] = next();
    for (int j = 0; j < spec.J; ++j) d.w[j] = next();
    for (int j = 0; j < spec.J; ++j)
      for (int k = 0; k < spec.K; ++k) d.wdot(j, k) = next();
    for (int j = 0; j < spec.p; ++j) d.beta[j] = next();
    if (with_nu) {
      d.nu.resize(spec.K);
      for (int k = 0; k < spec.K; ++k) d.nu[k] = next();
    }
    chain.loglik_trace.push_back(next());
    chain.draws.push_back(std::move(d));
  }
  return chain;
}

/// Metadata written next to every chain CSV.
struct ChainMeta {
  ModelSpec spec;
  SamplerConfig config;
  std::string data_path;
  std::string data_fingerprint;
  int n = 0;
  std::vector<std::string> covariates;
  std::string response;
  double wall_time = 0.0;
  double nu_acceptance_rate = std::numeric_limits<double>::quiet_NaN();
};

inline json to_json(const ChainMeta& m) {
  json j = {{"spec", to_json(m.spec)},
            {"config", to_json(m.config)},
            {"seed", m.config.seed},
            {"data", {{"path", m.data_path}, {"fingerprint", m.data_fingerprint}, {"n", m.n},
                      {"response", m.response}, {"covariates", m.covariates}}},
            {"wall_time", m.wall_time}};
  j["nu_acceptance_rate"] = std::isfinite(m.nu_acceptance_rate) ? json(m.nu_acceptance_rate) : json(nullptr);
  return j;
}

inline ChainMeta chain_meta_from_json(const json& j) {
  ChainMeta m;
  m.spec = spec_from_json(j.at("spec"));
  m.config = config_from_json(j.at("config"));
  const auto& d = j.at("data");
  m.data_path = d.at("path").get<std::string>();
  m.data_fingerprint = d.at("fingerprint").get<std::string>();
  m.n = d.at("n").get<int>();
  m.response = d.at("response").get<std::string>();
  m.covariates = d.at("covariates").get<std::vector<std::string>>();
  m.wall_time = j.at("wall_time").get<double>();
  if (j.contains("nu_acceptance_rate") && !j["nu_acceptance_rate"].is_null())
    m.nu_acceptance_rate = j["nu_acceptance_rate"].get<double>();
  return m;
}

inline void write_json(const std::string& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw Error("write failed for '" + path + "'");
}

inline json read_json(const std::string& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ParseError("invalid JSON in '" + path + "': " + e.what(), 0);
  }
}

// ---------------------------------------------------------------------------
// Datasets, predictions, density curves

inline void write_dataset_csv(const std::string& path, const Dataset& data,
                              const std::vector<std::string>& covariate_names, const std::string& response = "y") {
  if (static_cast<int>(covariate_names.size()) != data.p())
    throw DimensionError("write_dataset_csv: need one name per covariate");
  auto out = open_out(path);
  const bool ids = !data.ids.empty();
  if (ids) out << "id,";
  out << response;
  for (const auto& c : covariate_names) out << ',' << c;
  out << '\n';
  for (int i = 0; i < data.n(); ++i) {
    if (ids) out << data.ids[static_cast<std::size_t>(i)] << ',';
    out << fmt(data.y[i]);
    for (int c = 0; c < data.p(); ++c) out << ',' << fmt(data.X(i, c));
    out << '\n';
  }
  if (!out) throw Error("write failed for '" + path + "'");
}

/// Columns id, y_true (when known), y_hat, hpd99_lo, hpd99_hi.
inline void write_prediction_csv(const std::string& path, const PredictionSummary& s,
                                 const std::vector<std::string>& ids, const Vector* y_true) {
  auto out = open_out(path);
  out << "id" << (y_true ? ",y_true" : "") << ",y_hat,hpd99_lo,hpd99_hi\n";
  for (Eigen::Index i = 0; i < s.y_hat.size(); ++i) {
    out << (ids.empty() ? std::to_string(i + 1) : ids[static_cast<std::size_t>(i)]);
    if (y_true) out << ',' << fmt((*y_true)[i]);
    out << ',' << fmt(s.y_hat[i]) << ',' << fmt(s.hpd_lo[i]) << ',' << fmt(s.hpd_hi[i]) << '\n';
  }
  if (!out) throw Error("write failed for '" + path + "'");
}

inline void write_density_csv(const std::string& path, const Matrix& curve) {
  auto out = open_out(path);
  out << "x,density\n";
  for (Eigen::Index i = 0; i < curve.rows(); ++i) out << fmt(curve(i, 0)) << ',' << fmt(curve(i, 1)) << '\n';
  if (!out) throw Error("write failed for '" + path + "'");
}

}  // namespace tlmix::io
