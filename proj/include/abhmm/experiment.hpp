// Experiment orchestration: flat key=value configs, named presets, and the
// drivers that turn a configuration into CSV/JSON files on disk.
//
// Configs are flat `key = value` text (one pair per line, '#' comments).
// A `preset` key pulls in a named default map; explicitly given keys always
// override preset defaults, and re-resolving an already-resolved config is a
// no-op, so the manifest's config echo reproduces the run byte for byte.

#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "abhmm/dynamics.hpp"
#include "abhmm/filter.hpp"
#include "abhmm/model.hpp"
#include "abhmm/serialize.hpp"
#include "abhmm/sim.hpp"

namespace abhmm {

// ---------------------------------------------------------------------------
// Key=value parsing

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline std::vector<std::string> split(const std::string& s, char delim) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, delim)) out.push_back(trim(item));
  if (!s.empty() && s.back() == delim) out.push_back("");
  return out;
}

}  // namespace detail

inline std::map<std::string, std::string> parse_kv_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  " is not a key = value pair: " + line);
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument("config line " + std::to_string(lineno) + " has an empty key");
    kv[key] = value;  // later lines override earlier ones
  }
  return kv;
}

inline std::map<std::string, std::string> load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot read config file: " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_kv_text(buf.str());
}

// Typed accessors over a resolved key map. All parse errors name the key.
class KvConfig {
 public:
  explicit KvConfig(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string get_string(const std::string& key) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) throw std::invalid_argument("missing required key: " + key);
    return it->second;
  }
  std::string get_string(const std::string& key, const std::string& fallback) const {
    const auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key) const { return parse_double(key, get_string(key)); }
  double get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
  }

  int get_int(const std::string& key) const { return parse_int(key, get_string(key)); }
  int get_int(const std::string& key, int fallback) const {
    return has(key) ? get_int(key) : fallback;
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get_string(key);
    std::uint64_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
      throw std::invalid_argument("invalid value for " + key + ": " + v);
    return out;
  }

  std::vector<double> get_double_list(const std::string& key) const {
    const std::string v = get_string(key);
    std::vector<double> out;
    for (const std::string& item : detail::split(v, ','))
      out.push_back(parse_double(key, item));
    if (out.empty()) throw std::invalid_argument("empty list for " + key);
    return out;
  }
  std::vector<double> get_double_list(const std::string& key,
                                      std::vector<double> fallback) const {
    return has(key) ? get_double_list(key) : fallback;
  }

  std::vector<std::string> get_string_list(const std::string& key) const {
    return detail::split(get_string(key), ',');
  }

  VecD get_vector(const std::string& key) const {
    const std::vector<double> v = get_double_list(key);
    return Eigen::Map<const VecD>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  Eigen::MatrixXd get_matrix(const std::string& key) const {
    const std::vector<std::string> rows = detail::split(get_string(key), ';');
    if (rows.empty()) throw std::invalid_argument("empty matrix for " + key);
    std::vector<std::vector<double>> parsed;
    for (const std::string& row : rows) {
      std::vector<double> entries;
      for (const std::string& item : detail::split(row, ','))
        entries.push_back(parse_double(key, item));
      parsed.push_back(std::move(entries));
    }
    const std::size_t cols = parsed.front().size();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(parsed.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < parsed.size(); ++r) {
      if (parsed[r].size() != cols)
        throw std::invalid_argument("ragged matrix for " + key);
      for (std::size_t c = 0; c < cols; ++c)
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = parsed[r][c];
    }
    return m;
  }

  const std::map<std::string, std::string>& raw() const { return kv_; }

 private:
  double parse_double(const std::string& key, const std::string& v) const {
    double out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
      throw std::invalid_argument("invalid value for " + key + ": " + v);
    return out;
  }
  int parse_int(const std::string& key, const std::string& v) const {
    int out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
      throw std::invalid_argument("invalid value for " + key + ": " + v);
    return out;
  }

  std::map<std::string, std::string> kv_;
};

// ---------------------------------------------------------------------------
// Presets

struct Preset {
  std::string name;
  std::string command;  // subcommand the preset belongs to: simulate | bounds
  std::string description;
  std::map<std::string, std::string> defaults;
};

inline const std::vector<Preset>& presets() {
  static const std::vector<Preset> all = {
      {"fig-ne1", "simulate",
       "5-state Gaussian tracking with periodic state redraws: overall accuracy of the "
       "mixing filter vs its linearized form across an alpha sweep",
       {{"model.family", "gaussian"},
        {"model.means", "1,2,3,4,5"},
        {"model.sigma", "0.5"},
        {"env.variant", "periodic"},
        {"env.period", "10"},
        {"horizon", "10000"},
        {"runs", "4"},
        {"seed", "1"},
        {"filters", "abhmm,linearized_abhmm"},
        {"alpha", "0.01,0.02,0.04,0.06,0.08,0.11,0.14,0.17"},
        {"beta", "1"}}},
      {"fig-ne2", "simulate",
       "Step-size sweep under two noise levels (variance 1 and 2): overall accuracy per "
       "(variance, beta) pair",
       {{"model.family", "gaussian"},
        {"model.means", "1,2,3,4,5"},
        {"sweep.sigma2", "1,2"},
        {"env.variant", "periodic"},
        {"env.period", "10"},
        {"horizon", "10000"},
        {"runs", "4"},
        {"seed", "1"},
        {"alpha", "0.1"},
        {"beta", "0.5,1,2"}}},
      {"fig-ne2-alt", "simulate",
       "Step-size sweep under two noise levels (variance 1 and 0.5)",
       {{"model.family", "gaussian"},
        {"model.means", "1,2,3,4,5"},
        {"sweep.sigma2", "1,0.5"},
        {"env.variant", "periodic"},
        {"env.period", "10"},
        {"horizon", "10000"},
        {"runs", "4"},
        {"seed", "1"},
        {"alpha", "0.1"},
        {"beta", "0.5,1,2"}}},
      {"fig-ne3", "simulate",
       "Deterministic reference system through an environment switch: log-ratio "
       "trajectories, gap decay with its contraction envelope, and belief bounds "
       "(alpha and beta lists are paired, not crossed)",
       {{"model.family", "gaussian"},
        {"model.means", "1,2,3,4,5"},
        {"model.sigma", "0.5"},
        {"env.variant", "switch"},
        {"env.from", "0"},
        {"env.to", "4"},
        {"env.switch-at", "25"},
        {"horizon", "100"},
        {"alpha", "0.02,0.05,0.1,0.05,0.05"},
        {"beta", "1,1,1,0.5,2"}}},
      {"fig-ne4", "simulate",
       "Truncated-Gaussian error-probability curves: likelihood means 1,2,3 vs true mean "
       "0 on [-5,5], beta = alpha grid crossed with a noise sweep, 1000 runs",
       {{"model.family", "truncated"},
        {"model.means", "1,2,3"},
        {"model.lo", "-5"},
        {"model.hi", "5"},
        {"true.means", "0"},
        {"sweep.sigma", "1,2,3"},
        {"alpha", "0.01,0.05,0.1"},
        {"env.variant", "constant"},
        {"env.state", "0"},
        {"horizon", "200"},
        {"runs", "1000"},
        {"seed", "1"},
        {"gap", "1"}}},
      {"fig-2", "bounds",
       "Grid of closed-form steady-state belief bounds and contraction rates over "
       "(alpha, beta, d_min), binary state space",
       {{"alpha", "0.02,0.05,0.08,0.11,0.14,0.17"},
        {"beta", "0.5,1,2"},
        {"dmin", "0.5,1,2,4"},
        {"dmax-ratio", "1"},
        {"M", "2"}}},
  };
  return all;
}

inline const Preset* find_preset(const std::string& name) {
  for (const Preset& p : presets())
    if (p.name == name) return &p;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Config resolution

namespace detail {

inline const std::set<std::string>& known_simulate_keys() {
  static const std::set<std::string> keys = {
      "preset", "out", "seed", "runs", "threads", "horizon", "gap",
      "model.family", "model.means", "model.sigma", "model.lo", "model.hi",
      "true.family", "true.means", "true.sigma", "true.lo", "true.hi",
      "env.variant", "env.state", "env.from", "env.to", "env.switch-at", "env.period",
      "env.transition", "env.initial",
      "filters", "alpha", "beta", "delta", "h", "filter.transition",
      "sweep.sigma", "sweep.sigma2"};
  return keys;
}

inline const std::set<std::string>& known_bounds_keys() {
  static const std::set<std::string> keys = {"preset", "out",  "alpha", "beta", "dmin",
                                             "dmax-ratio", "M", "C",   "x0",    "U"};
  return keys;
}

inline std::map<std::string, std::string> resolve_config(
    const std::map<std::string, std::string>& user, const std::string& command) {
  const auto& known =
      command == "bounds" ? known_bounds_keys() : known_simulate_keys();
  for (const auto& [key, value] : user) {
    (void)value;
    if (known.count(key) == 0)
      throw std::invalid_argument("unknown configuration key: " + key);
  }
  std::map<std::string, std::string> resolved;
  const auto preset_it = user.find("preset");
  if (preset_it != user.end()) {
    const Preset* p = find_preset(preset_it->second);
    if (p == nullptr) throw std::invalid_argument("unknown preset: " + preset_it->second);
    if (p->command != command)
      throw std::invalid_argument("preset " + p->name + " belongs to the " + p->command +
                                  " subcommand");
    resolved = p->defaults;
  }
  for (const auto& [key, value] : user) resolved[key] = value;
  return resolved;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Model and environment construction

// Builds the likelihood model ("model.*") or the environment's emission model
// ("true.*", falling back to "model.*" field by field). A sigma override
// serves the drivers that sweep the noise level.
inline std::unique_ptr<ObservationModel> build_model(
    const KvConfig& cfg, bool true_side, std::optional<double> sigma_override = std::nullopt) {
  const auto field = [&](const std::string& name) -> std::string {
    if (true_side && cfg.has("true." + name)) return "true." + name;
    return "model." + name;
  };
  const std::string family = cfg.get_string(field("family"), "gaussian");
  const VecD means = cfg.get_vector(field("means"));
  const double sigma = sigma_override ? *sigma_override : cfg.get_double(field("sigma"));
  if (family == "gaussian") return std::make_unique<GaussianGridModel>(means, sigma);
  if (family == "truncated")
    return std::make_unique<TruncatedGaussianModel>(means, sigma, cfg.get_double(field("lo")),
                                                    cfg.get_double(field("hi")));
  throw std::invalid_argument("invalid value for " + field("family") + ": " + family);
}

inline EnvironmentSpec build_env(const KvConfig& cfg) {
  const std::string variant = cfg.get_string("env.variant", "constant");
  const int horizon = cfg.get_int("horizon", 100);
  if (variant == "constant")
    return EnvironmentSpec::constant(cfg.get_int("env.state", 0), horizon);
  if (variant == "switch")
    return EnvironmentSpec::switch_at(cfg.get_int("env.from"), cfg.get_int("env.to"),
                                      cfg.get_int("env.switch-at"), horizon);
  if (variant == "periodic")
    return EnvironmentSpec::periodic_redraw(cfg.get_int("env.period"), horizon);
  if (variant == "markov")
    return EnvironmentSpec::markov(cfg.get_matrix("env.transition"),
                                   cfg.get_vector("env.initial"), horizon);
  throw std::invalid_argument("invalid value for env.variant: " + variant);
}

// ---------------------------------------------------------------------------
// Output plumbing

namespace detail {

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open output file: " + path.string());
  f << content;
  f.flush();
  if (!f) throw std::runtime_error("failed writing output file: " + path.string());
}

inline void write_manifest(const std::filesystem::path& out_dir, const std::string& command,
                           const std::map<std::string, std::string>& resolved,
                           const std::vector<std::string>& outputs) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["tool"] = "abhmm";
#ifdef ABHMM_VERSION
  j["version"] = ABHMM_VERSION;
#else
  j["version"] = "unknown";
#endif
  j["command"] = command;
  j["resolved_config"] = resolved;
  j["outputs"] = outputs;
  write_text_file(out_dir / "manifest.json", j.dump(2) + "\n");
}

inline MonteCarloConfig monte_carlo_config(const KvConfig& cfg) {
  MonteCarloConfig mc;
  mc.n_runs = cfg.get_int("runs", 1);
  mc.master_seed = cfg.get_u64("seed", 0);
  mc.threads = cfg.get_int("threads", 0);
  return mc;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Simulate drivers

namespace detail {

// Arbitrary user configuration: one model/environment, a list of filters,
// parameter sweeps crossed per filter. Writes one metrics CSV and one summary
// JSON per (filter, parameter) combination.
inline std::vector<std::string> drive_generic(const KvConfig& cfg,
                                              const std::filesystem::path& out_dir) {
  const std::unique_ptr<ObservationModel> lik = build_model(cfg, false);
  const std::unique_ptr<ObservationModel> true_model = build_model(cfg, true);
  const EnvironmentSpec env = build_env(cfg);
  const MonteCarloConfig mc = monte_carlo_config(cfg);
  const int want_gap = cfg.get_int("gap", 0);
  if (want_gap != 0 && want_gap != 1)
    throw std::invalid_argument("invalid value for gap: " + cfg.get_string("gap"));

  std::optional<VecD> d;
  if (want_gap == 1) {
    if (env.variant != EnvironmentSpec::Variant::constant || env.state != 0)
      throw std::invalid_argument(
          "gap = 1 needs a constant environment with state 0 (the reference state)");
    d = compute_identifiability(*true_model, env.state, *lik, 0);
  }

  std::vector<std::string> outputs;
  const auto emit = [&](const FilterConfig& fcfg, const std::string& tag,
                        const std::optional<VecD>& fp, nlohmann::json extra) {
    const MetricsSeries ms = monte_carlo(mc, env, *true_model, *lik, fcfg, fp);
    const std::string base = "metrics_" + to_string(fcfg.variant) + tag;
    write_text_file(out_dir / (base + ".csv"), metrics_to_csv(ms));
    outputs.push_back(base + ".csv");
    nlohmann::json summary = metrics_summary_json(ms);
    summary["filter"] = to_string(fcfg.variant);
    for (auto& [k, v] : extra.items()) summary[k] = v;
    const std::string summary_name = "summary_" + to_string(fcfg.variant) + tag + ".json";
    write_text_file(out_dir / summary_name, summary.dump(2) + "\n");
    outputs.push_back(summary_name);
  };

  for (const std::string& name : cfg.get_string_list("filters")) {
    const FilterVariant variant = parse_filter_variant(name);
    FilterConfig fcfg;
    fcfg.variant = variant;
    switch (variant) {
      case FilterVariant::abhmm:
      case FilterVariant::linearized_abhmm:
        for (double a : cfg.get_double_list("alpha", {0.1})) {
          for (double b : cfg.get_double_list("beta", {1.0})) {
            fcfg.alpha = a;
            fcfg.beta = b;
            std::optional<VecD> fp;
            if (d && variant == FilterVariant::abhmm && a > 0.0)
              fp = solve_fixed_point(a, b, *d).x_inf;
            emit(fcfg, "_a" + format_double(a) + "_b" + format_double(b), fp,
                 {{"alpha", a}, {"beta", b}});
          }
        }
        break;
      case FilterVariant::asl:
        for (double dl : cfg.get_double_list("delta", {0.1})) {
          fcfg.delta = dl;
          emit(fcfg, "_d" + format_double(dl), std::nullopt, {{"delta", dl}});
        }
        break;
      case FilterVariant::equal_exit_hmm:
        for (double h : cfg.get_double_list("h", {0.1})) {
          fcfg.h = h;
          emit(fcfg, "_h" + format_double(h), std::nullopt, {{"h", h}});
        }
        break;
      case FilterVariant::bayes:
        emit(fcfg, "", std::nullopt, nlohmann::json::object());
        break;
      case FilterVariant::full_hmm:
        fcfg.transition = cfg.get_matrix("filter.transition");
        emit(fcfg, "", std::nullopt, nlohmann::json::object());
        break;
    }
  }
  return outputs;
}

// Accuracy-vs-alpha comparison of the mixing filter against its linearized
// form, common random numbers per alpha.
inline std::vector<std::string> drive_fig_ne1(const KvConfig& cfg,
                                              const std::filesystem::path& out_dir) {
  const std::unique_ptr<ObservationModel> model = build_model(cfg, false);
  const EnvironmentSpec env = build_env(cfg);
  const MonteCarloConfig mc = monte_carlo_config(cfg);
  const std::vector<double> alphas = cfg.get_double_list("alpha");
  const double beta = cfg.get_double_list("beta", {1.0}).front();

  std::vector<std::string> outputs;
  std::string fig = "alpha,accuracy_abhmm,accuracy_linearized\n";
  for (double a : alphas) {
    FilterConfig fc;
    fc.alpha = a;
    fc.beta = beta;
    fc.variant = FilterVariant::abhmm;
    const MetricsSeries ms_ab = monte_carlo(mc, env, *model, *model, fc);
    fc.variant = FilterVariant::linearized_abhmm;
    const MetricsSeries ms_lin = monte_carlo(mc, env, *model, *model, fc);
    fig += format_double(a) + ',' + format_double(ms_ab.overall_accuracy) + ',' +
           format_double(ms_lin.overall_accuracy) + '\n';
    const std::string tag = "_a" + format_double(a) + "_b" + format_double(beta);
    write_text_file(out_dir / ("metrics_abhmm" + tag + ".csv"), metrics_to_csv(ms_ab));
    outputs.push_back("metrics_abhmm" + tag + ".csv");
    write_text_file(out_dir / ("metrics_linearized_abhmm" + tag + ".csv"),
                    metrics_to_csv(ms_lin));
    outputs.push_back("metrics_linearized_abhmm" + tag + ".csv");
  }
  write_text_file(out_dir / "fig_ne1.csv", fig);
  outputs.push_back("fig_ne1.csv");
  return outputs;
}

// Overall accuracy per (noise variance, beta) pair at fixed alpha.
inline std::vector<std::string> drive_fig_ne2(const KvConfig& cfg,
                                              const std::filesystem::path& out_dir) {
  const EnvironmentSpec env = build_env(cfg);
  const MonteCarloConfig mc = monte_carlo_config(cfg);
  const double alpha = cfg.get_double_list("alpha").front();
  const std::vector<double> betas = cfg.get_double_list("beta");
  const std::vector<double> sigma2s = cfg.get_double_list("sweep.sigma2");

  std::vector<std::string> outputs;
  std::string fig = "sigma2,beta,overall_accuracy\n";
  for (double s2 : sigma2s) {
    if (!(s2 > 0.0))
      throw std::invalid_argument("invalid value for sweep.sigma2: variances must be positive");
    const std::unique_ptr<ObservationModel> model = build_model(cfg, false, std::sqrt(s2));
    for (double b : betas) {
      FilterConfig fc;
      fc.variant = FilterVariant::abhmm;
      fc.alpha = alpha;
      fc.beta = b;
      const MetricsSeries ms = monte_carlo(mc, env, *model, *model, fc);
      fig += format_double(s2) + ',' + format_double(b) + ',' +
             format_double(ms.overall_accuracy) + '\n';
      const std::string base =
          "metrics_abhmm_a" + format_double(alpha) + "_b" + format_double(b) + "_var" +
          format_double(s2);
      write_text_file(out_dir / (base + ".csv"), metrics_to_csv(ms));
      outputs.push_back(base + ".csv");
    }
  }
  write_text_file(out_dir / "fig_ne2.csv", fig);
  outputs.push_back("fig_ne2.csv");
  return outputs;
}

// Deterministic reference system: (a) log-ratio trajectories through a true-
// state switch, (b) distance to the fixed point with its geometric envelope,
// (c) belief on the true state with its closed-form steady-state bounds.
// The alpha and beta lists are paired entries, not a cartesian product.
inline std::vector<std::string> drive_fig_ne3(const KvConfig& cfg,
                                              const std::filesystem::path& out_dir) {
  const VecD means = cfg.get_vector("model.means");
  const double sigma = cfg.get_double("model.sigma");
  if (!(sigma > 0.0)) throw std::invalid_argument("invalid value for model.sigma: must be > 0");
  const Eigen::Index M = means.size();
  if (M < 2) throw std::invalid_argument("fig-ne3 needs at least two states");
  const int l_from = cfg.get_int("env.from", 0);
  const int l_to = cfg.get_int("env.to", static_cast<int>(M) - 1);
  const int t1 = cfg.get_int("env.switch-at", 25);
  const int horizon = cfg.get_int("horizon", 100);
  if (l_from != 0)
    throw std::invalid_argument(
        "fig-ne3 needs env.from = 0: the pre-switch true state is the reference state");
  if (l_to < 0 || l_to >= M || l_to == l_from)
    throw std::invalid_argument("invalid value for env.to");
  if (t1 < 1 || t1 >= horizon)
    throw std::invalid_argument("invalid value for env.switch-at: needs 1 <= t1 < horizon");
  const std::vector<double> alphas = cfg.get_double_list("alpha");
  const std::vector<double> betas = cfg.get_double_list("beta");
  if (alphas.size() != betas.size())
    throw std::invalid_argument("fig-ne3 pairs the alpha and beta lists: sizes must match");

  // Mean log-likelihood-ratio drift of each non-reference state when the true
  // state is l: E_l[log L_m - log L_0], affine in the squared mean offsets.
  const auto drift = [&](int l) {
    VecD v(M - 1);
    for (Eigen::Index m = 1; m < M; ++m) {
      const double to_ref = means[l] - means[0];
      const double to_m = means[l] - means[m];
      v[m - 1] = (to_ref * to_ref - to_m * to_m) / (2.0 * sigma * sigma);
    }
    return v;
  };
  const VecD drift_from = drift(l_from);
  const VecD drift_to = drift(l_to);
  const GaussianGridModel model(means, sigma);
  const VecD d = compute_identifiability(model, l_from, model, 0);

  std::string traj_csv = "alpha,beta,step";
  for (Eigen::Index m = 1; m < M; ++m) traj_csv += ",x" + std::to_string(m);
  traj_csv += '\n';
  std::string gap_csv = "alpha,beta,step,gap,envelope\n";
  std::string belief_csv = "alpha,beta,step,mu0,mu_lower,mu_upper\n";

  for (std::size_t k = 0; k < alphas.size(); ++k) {
    const double a = alphas[k], b = betas[k];
    const std::string prefix = format_double(a) + ',' + format_double(b) + ',';

    // (a) switch trajectory
    VecD x = VecD::Zero(M - 1);
    const auto append_x = [&](int step) {
      traj_csv += prefix + std::to_string(step);
      for (Eigen::Index m = 0; m < M - 1; ++m) traj_csv += ',' + format_double(x[m]);
      traj_csv += '\n';
    };
    append_x(0);
    for (int i = 1; i <= horizon; ++i) {
      x = map_F(x, a, M) + b * (i <= t1 ? drift_from : drift_to);
      append_x(i);
    }

    // (b) + (c) constant-environment trajectory against the fixed point
    const FixedPointResult fp = solve_fixed_point(a, b, d);
    const double lambda = theorem1_lambda(a, b, d.minCoeff(), 0.0, M);
    const Theorem2Bounds mu = theorem2_bounds(a, b, d.minCoeff(), d.maxCoeff(), M);
    x.setZero();
    const double gap0 = fp.x_inf.lpNorm<Eigen::Infinity>();
    double envelope = gap0;
    const auto append_rows = [&](int step) {
      const double gap = (x - fp.x_inf).lpNorm<Eigen::Infinity>();
      gap_csv += prefix + std::to_string(step) + ',' + format_double(gap) + ',' +
                 format_double(envelope) + '\n';
      VecD log_w(M);
      log_w[0] = 0.0;
      log_w.tail(M - 1) = x;
      const double mu0 = std::exp(-log_sum_exp(log_w));
      belief_csv += prefix + std::to_string(step) + ',' + format_double(mu0) + ',' +
                    format_double(mu.mu_lower) + ',' + format_double(mu.mu_upper) + '\n';
    };
    append_rows(0);
    for (int i = 1; i <= horizon; ++i) {
      x = reference_step(x, a, b, d);
      envelope *= lambda;
      append_rows(i);
    }
  }

  write_text_file(out_dir / "fig_ne3_trajectories.csv", traj_csv);
  write_text_file(out_dir / "fig_ne3_gap.csv", gap_csv);
  write_text_file(out_dir / "fig_ne3_belief.csv", belief_csv);
  return {"fig_ne3_trajectories.csv", "fig_ne3_gap.csv", "fig_ne3_belief.csv"};
}

// Error-probability curves on the truncated model: beta = alpha grid crossed
// with a noise sweep, fixed-point gap tracked per setting.
inline std::vector<std::string> drive_fig_ne4(const KvConfig& cfg,
                                              const std::filesystem::path& out_dir) {
  const EnvironmentSpec env = build_env(cfg);
  if (env.variant != EnvironmentSpec::Variant::constant || env.state != 0)
    throw std::invalid_argument("fig-ne4 needs a constant environment with state 0");
  const MonteCarloConfig mc = monte_carlo_config(cfg);
  const std::vector<double> alphas = cfg.get_double_list("alpha");
  const std::vector<double> sigmas = cfg.get_double_list("sweep.sigma");

  std::vector<std::string> outputs;
  for (double sigma : sigmas) {
    const std::unique_ptr<ObservationModel> lik = build_model(cfg, false, sigma);
    const std::unique_ptr<ObservationModel> true_model = build_model(cfg, true, sigma);
    const VecD d = compute_identifiability(*true_model, 0, *lik, 0);
    for (double a : alphas) {
      FilterConfig fc;
      fc.variant = FilterVariant::abhmm;
      fc.alpha = a;
      fc.beta = a;
      const std::optional<VecD> fp = solve_fixed_point(a, a, d).x_inf;
      const MetricsSeries ms = monte_carlo(mc, env, *true_model, *lik, fc, fp);
      const std::string base = "metrics_abhmm_a" + format_double(a) + "_b" + format_double(a) +
                               "_sig" + format_double(sigma);
      write_text_file(out_dir / (base + ".csv"), metrics_to_csv(ms));
      outputs.push_back(base + ".csv");
    }
  }
  return outputs;
}

}  // namespace detail

// Runs the simulate command for an already-merged user configuration (file
// values overlaid with CLI flags). Returns the names of all files written,
// manifest included, relative to the output directory.
inline std::vector<std::string> run_simulate(const std::map<std::string, std::string>& user_kv) {
  const std::map<std::string, std::string> resolved =
      detail::resolve_config(user_kv, "simulate");
  const KvConfig cfg(resolved);
  const std::filesystem::path out_dir = cfg.get_string("out", ".");
  std::filesystem::create_directories(out_dir);

  const std::string preset = cfg.get_string("preset", "");
  std::vector<std::string> outputs;
  if (preset == "fig-ne1")
    outputs = detail::drive_fig_ne1(cfg, out_dir);
  else if (preset == "fig-ne2" || preset == "fig-ne2-alt")
    outputs = detail::drive_fig_ne2(cfg, out_dir);
  else if (preset == "fig-ne3")
    outputs = detail::drive_fig_ne3(cfg, out_dir);
  else if (preset == "fig-ne4")
    outputs = detail::drive_fig_ne4(cfg, out_dir);
  else
    outputs = detail::drive_generic(cfg, out_dir);

  detail::write_manifest(out_dir, "simulate", resolved, outputs);
  outputs.push_back("manifest.json");
  return outputs;
}

// Runs the bounds command: cartesian product of the parameter lists, one CSV
// row per tuple. For M = 2 there is a single identifiability component, so
// tuples with dmax-ratio != 1 are skipped (d_max necessarily equals d_min).
inline std::vector<std::string> run_bounds(const std::map<std::string, std::string>& user_kv) {
  const std::map<std::string, std::string> resolved = detail::resolve_config(user_kv, "bounds");
  const KvConfig cfg(resolved);
  const std::filesystem::path out_dir = cfg.get_string("out", ".");
  std::filesystem::create_directories(out_dir);

  const std::vector<double> alphas = cfg.get_double_list("alpha");
  const std::vector<double> betas = cfg.get_double_list("beta", {1.0});
  const std::vector<double> dmins = cfg.get_double_list("dmin");
  const std::vector<double> ratios = cfg.get_double_list("dmax-ratio", {1.0});
  std::vector<int> Ms;
  for (double m : cfg.get_double_list("M", {2.0})) {
    const int mi = static_cast<int>(m);
    if (mi < 2 || static_cast<double>(mi) != m)
      throw std::invalid_argument("invalid value for M: must be an integer >= 2");
    Ms.push_back(mi);
  }
  const std::optional<double> C =
      cfg.has("C") ? std::optional<double>(cfg.get_double("C")) : std::nullopt;
  const double x0 = cfg.get_double("x0", 0.0);
  const double U = cfg.get_double("U", 1.0);

  std::string csv = bounds_csv_header();
  int rows = 0;
  for (int M : Ms) {
    for (double ratio : ratios) {
      if (!(ratio >= 1.0))
        throw std::invalid_argument("invalid value for dmax-ratio: must be >= 1");
      if (M == 2 && ratio != 1.0) continue;
      for (double dmin : dmins) {
        VecD d(M - 1);
        if (M == 2) {
          d[0] = dmin;
        } else {
          const double dmax = dmin * ratio;
          for (int k = 0; k < M - 1; ++k)
            d[k] = dmin + (dmax - dmin) * static_cast<double>(k) / static_cast<double>(M - 2);
        }
        for (double a : alphas) {
          for (double b : betas) {
            csv += bounds_csv_row(compute_bounds_report(a, b, d, C, x0, U));
            ++rows;
          }
        }
      }
    }
  }
  if (rows == 0) throw std::invalid_argument("empty parameter grid");

  detail::write_text_file(out_dir / "bounds.csv", csv);
  detail::write_manifest(out_dir, "bounds", resolved, {"bounds.csv"});
  return {"bounds.csv", "manifest.json"};
}

}  // namespace abhmm
