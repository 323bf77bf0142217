// CSV and JSON rendering of results. All floating-point output uses the
// shortest round-trip decimal form, so files are byte-stable across reruns
// and reload to the exact same doubles.

#pragma once

#include <charconv>
#include <cmath>
#include <string>

#include <json.hpp>

#include "abhmm/dynamics.hpp"
#include "abhmm/sim.hpp"

namespace abhmm {

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline nlohmann::json to_json(const VecD& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

// One row per step, steps numbered from 1 (the shared prior is not a row).
// The mean_gap column is left empty when no fixed point was tracked.
inline std::string metrics_to_csv(const MetricsSeries& m) {
  std::string out = "step,accuracy,p_e,mean_belief_true,mean_gap\n";
  const bool has_gap = m.mean_gap.size() == m.accuracy.size() && m.mean_gap.size() > 0;
  for (Eigen::Index j = 0; j < m.accuracy.size(); ++j) {
    out += std::to_string(j + 1);
    out += ',';
    out += format_double(m.accuracy[j]);
    out += ',';
    out += format_double(m.p_e[j]);
    out += ',';
    out += format_double(m.mean_belief_true[j]);
    out += ',';
    if (has_gap) out += format_double(m.mean_gap[j]);
    out += '\n';
  }
  return out;
}

inline nlohmann::json metrics_summary_json(const MetricsSeries& m) {
  nlohmann::json j;
  j["overall_accuracy"] = m.overall_accuracy;
  j["adaptation_time"] =
      m.adaptation_time ? nlohmann::json(*m.adaptation_time) : nlohmann::json(nullptr);
  j["n_runs"] = m.n_runs;
  j["master_seed"] = m.master_seed;
  return j;
}

inline nlohmann::json to_json(const FixedPointResult& fp) {
  nlohmann::json j;
  j["x_inf"] = to_json(fp.x_inf);
  j["mu_inf"] = to_json(fp.mu_inf);
  j["iterations"] = fp.iterations;
  j["residual"] = fp.residual;
  j["alpha"] = fp.alpha;
  j["beta"] = fp.beta;
  j["d"] = to_json(fp.d);
  return j;
}

inline nlohmann::json to_json(const BoundsReport& r) {
  nlohmann::json j;
  j["alpha"] = r.alpha;
  j["beta"] = r.beta;
  j["M"] = static_cast<int>(r.M);
  j["d"] = to_json(r.d);
  j["d_min"] = r.d_min;
  j["d_max"] = r.d_max;
  j["lambda"] = r.lambda;
  j["gamma"] = r.rates.gamma;
  j["gamma1"] = r.rates.gamma1;
  j["mu_lower_raw"] = r.mu.mu_lower_raw;
  j["mu_lower"] = r.mu.mu_lower;
  // NaN (vacuous lower bound) serializes as null.
  j["mu_upper_raw"] = std::isnan(r.mu.mu_upper_raw) ? nlohmann::json(nullptr)
                                                    : nlohmann::json(r.mu.mu_upper_raw);
  j["mu_upper"] = r.mu.mu_upper;
  j["lower_vacuous"] = r.mu.lower_vacuous;
  j["upper_clamped"] = r.mu.upper_clamped;
  j["x_inf"] = to_json(r.x_inf);
  j["mu0_inf"] = r.mu0_inf;
  if (r.C) {
    j["C"] = *r.C;
    j["lambda1"] = r.stochastic->lambda1;
    j["steady_gap_bound"] = std::isinf(r.stochastic->steady_gap_bound)
                                ? nlohmann::json(nullptr)
                                : nlohmann::json(r.stochastic->steady_gap_bound);
    j["lambda1_vacuous"] = r.stochastic->vacuous;
    j["error_prob_steady"] = r.error->steady_bound;
    j["error_decay_rate"] = r.error->decay_rate;
    j["small_alpha_regime"] = r.error->small_alpha_regime;
  }
  return j;
}

inline std::string bounds_csv_header() {
  return "alpha,beta,M,d_min,d_max,lambda,gamma,gamma1,mu_lower,mu_upper,"
         "lower_vacuous,upper_clamped,mu0_inf,x_max_inf,C,lambda1,steady_gap_bound,"
         "error_prob_steady\n";
}

// The C-dependent columns stay empty when no log-likelihood-ratio bound
// exists (unbounded observation support). Flags are 0/1.
inline std::string bounds_csv_row(const BoundsReport& r) {
  std::string out;
  out += format_double(r.alpha);
  out += ',';
  out += format_double(r.beta);
  out += ',';
  out += std::to_string(r.M);
  out += ',';
  out += format_double(r.d_min);
  out += ',';
  out += format_double(r.d_max);
  out += ',';
  out += format_double(r.lambda);
  out += ',';
  out += format_double(r.rates.gamma);
  out += ',';
  out += format_double(r.rates.gamma1);
  out += ',';
  out += format_double(r.mu.mu_lower);
  out += ',';
  out += format_double(r.mu.mu_upper);
  out += ',';
  out += r.mu.lower_vacuous ? "1" : "0";
  out += ',';
  out += r.mu.upper_clamped ? "1" : "0";
  out += ',';
  out += format_double(r.mu0_inf);
  out += ',';
  out += format_double(r.x_inf.maxCoeff());
  out += ',';
  if (r.C) out += format_double(*r.C);
  out += ',';
  if (r.stochastic) out += format_double(r.stochastic->lambda1);
  out += ',';
  if (r.stochastic) out += format_double(r.stochastic->steady_gap_bound);
  out += ',';
  if (r.error) out += format_double(r.error->steady_bound);
  out += '\n';
  return out;
}

}  // namespace abhmm
