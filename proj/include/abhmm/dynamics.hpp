// Deterministic reference dynamics of the filter in log-ratio coordinates,
// the associated fixed point, and the closed-form convergence rates and
// steady-state bounds built on them.
//
// Coordinates: x is the vector of log-belief ratios relative to state 0,
// x_m = log(w_m / w_0) for m = 1..M-1. When state 0 is the true state, the
// average update drives x toward a strictly negative fixed point; "correct
// learning" is x < 0 componentwise.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

#include "abhmm/belief.hpp"

namespace abhmm {

namespace detail {

template <class Scalar>
void check_alpha_open(Scalar alpha, Eigen::Index M, const char* who) {
  if (M < 2) throw std::invalid_argument(std::string(who) + ": needs at least two states");
  if (!(alpha > Scalar(0)) || !(alpha * static_cast<Scalar>(M) < Scalar(1)))
    throw std::invalid_argument(std::string(who) + ": alpha must lie in (0, 1/M)");
}

}  // namespace detail

// Expected one-step map of the log-belief ratios under the mixing update,
// with the likelihood term removed:
//   F_m(x) = log[((1-aM) e^{x_m} + a + a sum_n e^{x_n}) /
//                (1-aM+a      + a sum_n e^{x_n})].
// Evaluated through log-sum-exp so arbitrarily negative (or large) components
// are safe. F(0) = 0, and F maps the non-positive orthant into itself.
template <class Scalar>
Vec<Scalar> map_F(const Vec<Scalar>& x, Scalar alpha, Eigen::Index M) {
  using std::log;
  detail::check_alpha_open(alpha, M, "map_F");
  if (x.size() != M - 1)
    throw std::invalid_argument("map_F: x must have length M - 1");
  if (!x.allFinite()) throw std::invalid_argument("map_F: components must be finite");

  const Scalar log_keep = log(Scalar(1) - alpha * static_cast<Scalar>(M));
  const Scalar log_alpha = log(alpha);
  const Scalar log_sum = log_sum_exp(x);  // log sum_n e^{x_n}

  Vec<Scalar> denom_terms(2);
  denom_terms << log(Scalar(1) - alpha * static_cast<Scalar>(M) + alpha), log_alpha + log_sum;
  const Scalar log_denom = log_sum_exp(denom_terms);

  Vec<Scalar> out(x.size());
  Vec<Scalar> num_terms(3);
  for (Eigen::Index m = 0; m < x.size(); ++m) {
    num_terms << log_keep + x[m], log_alpha, log_alpha + log_sum;
    out[m] = log_sum_exp(num_terms) - log_denom;
  }
  return out;
}

// One step of the reference system when state 0 is true: x <- F(x) - beta d,
// where d holds the (positive) identifiability gaps of states 1..M-1.
template <class Scalar>
Vec<Scalar> reference_step(const Vec<Scalar>& x, Scalar alpha, Scalar beta,
                           const Vec<Scalar>& d) {
  if (d.size() != x.size())
    throw std::invalid_argument("reference_step: d must have the same length as x");
  if (!(beta > Scalar(0))) throw std::invalid_argument("reference_step: beta must be positive");
  if (!d.allFinite() || (d.array() <= Scalar(0)).any())
    throw std::invalid_argument("reference_step: identifiability gaps must be positive");
  return map_F(x, alpha, static_cast<Eigen::Index>(x.size()) + 1) - beta * d;
}

template <class Scalar>
struct FixedPointResultT {
  Vec<Scalar> x_inf;   // fixed point of x <- F(x) - beta d, length M-1
  Vec<Scalar> mu_inf;  // corresponding belief (softmax of [0; x_inf]), length M
  int iterations = 0;
  Scalar residual = 0;  // inf-norm of x_inf - (F(x_inf) - beta d)
  // Parameters echoed so downstream bounds can be derived from the result.
  Scalar alpha = 0;
  Scalar beta = 0;
  Vec<Scalar> d;
};

using FixedPointResult = FixedPointResultT<double>;

// Iterates the reference system from x = 0 until the step shrinks below the
// tolerance. The map contracts toward a unique fixed point, so plain
// iteration terminates; the cap guards misuse outside the theory range.
template <class Scalar>
FixedPointResultT<Scalar> solve_fixed_point(Scalar alpha, Scalar beta, const Vec<Scalar>& d,
                                            Scalar tolerance = Scalar(1e-12),
                                            int max_iterations = 1000000) {
  const Eigen::Index M = d.size() + 1;
  detail::check_alpha_open(alpha, M, "solve_fixed_point");
  if (!(beta > Scalar(0)))
    throw std::invalid_argument("solve_fixed_point: beta must be positive");
  if (d.size() < 1 || !d.allFinite() || (d.array() <= Scalar(0)).any())
    throw std::invalid_argument("solve_fixed_point: identifiability gaps must be positive");
  if (!(tolerance > Scalar(0)))
    throw std::invalid_argument("solve_fixed_point: tolerance must be positive");
  if (max_iterations < 1)
    throw std::invalid_argument("solve_fixed_point: iteration cap must be positive");

  Vec<Scalar> x = Vec<Scalar>::Zero(d.size());
  int it = 0;
  Scalar step = std::numeric_limits<Scalar>::infinity();
  while (it < max_iterations) {
    Vec<Scalar> next = reference_step(x, alpha, beta, d);
    step = (next - x).template lpNorm<Eigen::Infinity>();
    x.swap(next);
    ++it;
    if (step < tolerance) break;
  }

  FixedPointResultT<Scalar> r;
  r.residual = (x - reference_step(x, alpha, beta, d)).template lpNorm<Eigen::Infinity>();
  if (step >= tolerance)
    throw std::runtime_error("solve_fixed_point: iteration cap exceeded, residual " +
                             std::to_string(static_cast<double>(r.residual)));
  r.x_inf = x;
  Vec<Scalar> log_w(M);
  log_w[0] = Scalar(0);
  log_w.tail(d.size()) = x;
  const Scalar lse = log_sum_exp(log_w);
  r.mu_inf = (log_w.array() - lse).exp().matrix();
  r.iterations = it;
  r.alpha = alpha;
  r.beta = beta;
  r.d = d;
  return r;
}

// Contraction rate of the reference trajectory toward its fixed point:
//   lambda = 1 - min{ 2a/(1-aM+2a),  b d_min / (x_bar_0 + log((1-aM+a)/a) + b d_min) },
// valid along trajectories whose components start at or below x_bar_0 >= 0.
inline double theorem1_lambda(double alpha, double beta, double d_min, double x_bar_0,
                              Eigen::Index M) {
  detail::check_alpha_open(alpha, M, "theorem1_lambda");
  if (!(beta > 0.0)) throw std::invalid_argument("theorem1_lambda: beta must be positive");
  if (!(d_min > 0.0)) throw std::invalid_argument("theorem1_lambda: d_min must be positive");
  if (!(x_bar_0 >= 0.0))
    throw std::invalid_argument("theorem1_lambda: x_bar_0 must be non-negative");
  const double aM = alpha * static_cast<double>(M);
  const double t1 = 2.0 * alpha / (1.0 - aM + 2.0 * alpha);
  const double t2 = beta * d_min / (x_bar_0 + std::log((1.0 - aM + alpha) / alpha) + beta * d_min);
  return 1.0 - std::min(t1, t2);
}

struct Corollary1Rates {
  double gamma = 0.0;   // rate valid from initial beliefs with max(1, e^{x_0}) <= U
  double gamma1 = 0.0;  // sharper rate once the trajectory sits below the fixed point
};

// Contraction rates in the probability (exponential) domain:
//   gamma  = (1-aM)(1 + 2aU(M-1)) e^{-b d_min} / (1-aM+a)^2,
//   gamma1 = (1-aM)               e^{-b d_min} / (1-aM+a)^2.
inline Corollary1Rates corollary1_gamma(double alpha, double beta, double d_min, double U,
                                        Eigen::Index M) {
  detail::check_alpha_open(alpha, M, "corollary1_gamma");
  if (!(beta > 0.0)) throw std::invalid_argument("corollary1_gamma: beta must be positive");
  if (!(d_min > 0.0)) throw std::invalid_argument("corollary1_gamma: d_min must be positive");
  if (!(U >= 1.0)) throw std::invalid_argument("corollary1_gamma: U must be >= 1");
  const double aM = alpha * static_cast<double>(M);
  const double denom = (1.0 - aM + alpha) * (1.0 - aM + alpha);
  const double decay = std::exp(-beta * d_min);
  Corollary1Rates r;
  r.gamma1 = (1.0 - aM) * decay / denom;
  r.gamma = r.gamma1 * (1.0 + 2.0 * alpha * U * static_cast<double>(M - 1));
  return r;
}

struct Theorem2Bounds {
  double mu_lower_raw = 0.0;  // formula value, may be <= 0 in weak-identifiability regimes
  double mu_upper_raw = 0.0;  // formula value, may exceed 1; NaN when the lower bound is vacuous
  double mu_lower = 0.0;      // clamped to [0, 1]
  double mu_upper = 1.0;      // clamped to [0, 1]
  bool lower_vacuous = false;
  bool upper_clamped = false;
};

// Steady-state belief bounds on the true state, mu_lower <= mu_0^inf <=
// mu_upper. Written in terms of t = e^{-b d} so that large b d is exact:
//   mu_lower = ((1-aM) - (1-a) t) / ((1-aM)(1-t)),       t = e^{-b d_min},
//   mu_upper = ((1-aM-a+a/mu_lower) - (1-a) s) / ((1-aM)(1-s)), s = e^{-b d_max}.
// A non-positive mu_lower carries no information (flagged vacuous); the upper
// formula then degenerates and the pair is reported as [0, 1].
inline Theorem2Bounds theorem2_bounds(double alpha, double beta, double d_min, double d_max,
                                      Eigen::Index M) {
  detail::check_alpha_open(alpha, M, "theorem2_bounds");
  if (!(beta > 0.0)) throw std::invalid_argument("theorem2_bounds: beta must be positive");
  if (!(d_min > 0.0)) throw std::invalid_argument("theorem2_bounds: d_min must be positive");
  if (!(d_max >= d_min)) throw std::invalid_argument("theorem2_bounds: needs d_min <= d_max");
  const double aM = alpha * static_cast<double>(M);
  const double t = std::exp(-beta * d_min);
  Theorem2Bounds b;
  b.mu_lower_raw = ((1.0 - aM) - (1.0 - alpha) * t) / ((1.0 - aM) * (1.0 - t));
  if (!(b.mu_lower_raw > 0.0)) {
    b.lower_vacuous = true;
    b.mu_lower = 0.0;
    b.mu_upper = 1.0;
    b.mu_upper_raw = std::numeric_limits<double>::quiet_NaN();
    return b;
  }
  b.mu_lower = b.mu_lower_raw;
  const double s = std::exp(-beta * d_max);
  b.mu_upper_raw =
      ((1.0 - aM - alpha + alpha / b.mu_lower_raw) - (1.0 - alpha) * s) / ((1.0 - aM) * (1.0 - s));
  b.upper_clamped = b.mu_upper_raw > 1.0;
  b.mu_upper = std::min(b.mu_upper_raw, 1.0);
  return b;
}

struct Lemma5Rate {
  double lambda1 = 1.0;           // asymptotic contraction rate of the stochastic gap
  double steady_gap_bound = 0.0;  // beta C / (1 - lambda1)
  bool vacuous = false;           // degenerate inputs (d_min = 0): no contraction guaranteed
};

// Contraction rate of the expected gap between the stochastic filter and the
// reference trajectory, with C bounding the centered log-likelihood ratios:
//   lambda1 = 1 - min{ 2a/(1-aM+2a),  b d_min / (2 log((1-aM+a)/a) + b C) }.
inline Lemma5Rate lemma5_lambda1(double alpha, double beta, double d_min, double C,
                                 Eigen::Index M) {
  detail::check_alpha_open(alpha, M, "lemma5_lambda1");
  if (!(beta > 0.0)) throw std::invalid_argument("lemma5_lambda1: beta must be positive");
  if (!std::isfinite(C))
    throw std::invalid_argument("lemma5_lambda1: bound unavailable, C is not finite");
  if (!(C >= 0.0)) throw std::invalid_argument("lemma5_lambda1: C must be non-negative");
  if (!(d_min >= 0.0)) throw std::invalid_argument("lemma5_lambda1: d_min must be non-negative");
  if (C < d_min - 1e-12)
    throw std::invalid_argument(
        "lemma5_lambda1: C must be at least d_min (C bounds the centered ratios)");
  Lemma5Rate r;
  if (d_min == 0.0) {
    // Identical likelihoods: nothing contracts, the bound carries no information.
    r.lambda1 = 1.0;
    r.steady_gap_bound = std::numeric_limits<double>::infinity();
    r.vacuous = true;
    return r;
  }
  const double aM = alpha * static_cast<double>(M);
  const double t1 = 2.0 * alpha / (1.0 - aM + 2.0 * alpha);
  const double t2 = beta * d_min / (2.0 * std::log((1.0 - aM + alpha) / alpha) + beta * C);
  r.lambda1 = 1.0 - std::min(t1, t2);
  r.steady_gap_bound = beta * C / (1.0 - r.lambda1);
  return r;
}

struct Theorem3Bound {
  double steady_bound = 1.0;  // asymptotic error-probability bound, clamped to <= 1
  double decay_rate = 1.0;    // lambda1; the transient is O(decay_rate^i) with an
                              // unspecified constant, so the pair is reported, not a sum
  bool small_alpha_regime = false;  // beta <= alpha: the regime where the steady
                                    // bound vanishes as alpha -> 0
};

// Steady-state bound on the instantaneous error probability,
//   p_e <= min(1, b C / (-(1 - lambda1) x_max_inf)),   x_max_inf = max_m x_inf_m < 0,
// paired with the geometric rate at which the transient dies.
inline Theorem3Bound theorem3_error_bound(const FixedPointResult& fp, double C) {
  if (!std::isfinite(C) || !(C >= 0.0))
    throw std::invalid_argument("theorem3_error_bound: bound unavailable, C must be finite");
  const double x_max = fp.x_inf.maxCoeff();
  if (!(x_max < 0.0))
    throw std::runtime_error("theorem3_error_bound: fixed point not in correct-learning region");
  const Eigen::Index M = fp.d.size() + 1;
  const Lemma5Rate l = lemma5_lambda1(fp.alpha, fp.beta, fp.d.minCoeff(), C, M);
  Theorem3Bound b;
  b.decay_rate = l.lambda1;
  b.steady_bound = std::min(1.0, fp.beta * C / (-(1.0 - l.lambda1) * x_max));
  b.small_alpha_regime = fp.beta <= fp.alpha;
  return b;
}

struct AdaptationBounds {
  double bayes_lb = 0.0;  // grows linearly with the pre-switch dwell time
  double abhmm_lb = 0.0;  // saturates as the dwell time grows
};

// Lower bounds on the number of post-switch steps before the belief ordering
// flips to the new true state, in the binary setting. x is the scalar
// log-ratio of the post-switch true state over the pre-switch one; the switch
// happens after T1 updates. The mixing filter's bound is built from the two
// stage fixed points (the post-switch stage is the mirrored system) and the
// stage contraction rates.
inline AdaptationBounds adaptation_times(double alpha, double beta, double d_s1, double d_s2,
                                         double x_0, int T1) {
  detail::check_alpha_open(alpha, Eigen::Index{2}, "adaptation_times");
  if (!(beta > 0.0)) throw std::invalid_argument("adaptation_times: beta must be positive");
  if (!(d_s1 > 0.0) || !(d_s2 > 0.0))
    throw std::invalid_argument("adaptation_times: stage gaps must be positive");
  if (T1 < 0) throw std::invalid_argument("adaptation_times: T1 must be non-negative");
  if (!std::isfinite(x_0)) throw std::invalid_argument("adaptation_times: x_0 must be finite");

  AdaptationBounds out;
  out.bayes_lb = (d_s1 * static_cast<double>(T1) - x_0) / d_s2;

  VecD d1(1), d2(1);
  d1 << d_s1;
  d2 << d_s2;
  // Stage-1 fixed point of x <- F(x) - beta d_s1; in mirrored coordinates
  // (y = -x) the post-switch system x <- F(x) + beta d_s2 has fixed point
  // -x_inf(d_s2), which is positive.
  const double x_s1 = solve_fixed_point(alpha, beta, d1).x_inf[0];
  const double x_s2 = -solve_fixed_point(alpha, beta, d2).x_inf[0];

  const double lambda_s1 = theorem1_lambda(alpha, beta, d_s1, std::max(x_0, 0.0), 2);

  // Exact pre-switch trajectory to locate the state at the switch; the
  // post-switch rate is evaluated from there (mirrored, so the sign flips).
  VecD x(1);
  x << x_0;
  for (int i = 0; i < T1; ++i) x = reference_step(x, alpha, beta, d1);
  const double lambda_s2 = theorem1_lambda(alpha, beta, d_s2, std::max(-x[0], 0.0), 2);
  if (!(lambda_s1 < 1.0) || !(lambda_s2 < 1.0) || !(lambda_s2 > 0.0))
    throw std::runtime_error("adaptation_times: bound unavailable, degenerate stage rate");

  const double denom = std::pow(lambda_s1, static_cast<double>(T1)) * std::abs(x_0 - x_s1) +
                       std::abs(x_s2 - x_s1);
  out.abhmm_lb = std::log(std::abs(x_s2) / denom) / std::log(lambda_s2);
  return out;
}

// Scalar reference trajectory through an environment switch: stage-1 drift
// -beta d_s1 for the first T1 steps, then +beta d_s2. alpha may be 0, in
// which case the map is the identity and the trajectory is exactly linear
// (the Bayes reference). Returns x_0..x_horizon (size horizon + 1).
inline VecD simulate_switch_reference(double alpha, double beta, double d_s1, double d_s2,
                                      double x_0, int T1, int horizon) {
  if (alpha != 0.0) detail::check_alpha_open(alpha, Eigen::Index{2}, "simulate_switch_reference");
  if (!(beta > 0.0))
    throw std::invalid_argument("simulate_switch_reference: beta must be positive");
  if (!(d_s1 > 0.0) || !(d_s2 > 0.0))
    throw std::invalid_argument("simulate_switch_reference: stage gaps must be positive");
  if (T1 < 0 || horizon < T1)
    throw std::invalid_argument("simulate_switch_reference: needs 0 <= T1 <= horizon");
  if (!std::isfinite(x_0))
    throw std::invalid_argument("simulate_switch_reference: x_0 must be finite");

  VecD series(horizon + 1);
  VecD x(1);
  x << x_0;
  series[0] = x_0;
  for (int i = 1; i <= horizon; ++i) {
    const double drift = i <= T1 ? -beta * d_s1 : beta * d_s2;
    if (alpha == 0.0) {
      x[0] += drift;
    } else {
      x = map_F(x, alpha, Eigen::Index{2});
      x[0] += drift;
    }
    series[i] = x[0];
  }
  return series;
}

// Everything the closed-form theory says about one parameter point, bundled
// for reporting. The C-dependent quantities are present only when a finite
// log-likelihood-ratio bound exists (bounded observation support).
struct BoundsReport {
  double alpha = 0.0;
  double beta = 0.0;
  VecD d;
  double d_min = 0.0;
  double d_max = 0.0;
  Eigen::Index M = 0;

  double lambda = 0.0;  // trajectory contraction rate (from x_bar_0)
  Corollary1Rates rates;
  Theorem2Bounds mu;
  VecD x_inf;
  double mu0_inf = 0.0;

  std::optional<double> C;
  std::optional<Lemma5Rate> stochastic;  // lambda1 + steady gap bound
  std::optional<Theorem3Bound> error;    // steady error-probability bound + rate
};

inline BoundsReport compute_bounds_report(double alpha, double beta, const VecD& d,
                                          std::optional<double> C = std::nullopt,
                                          double x_bar_0 = 0.0, double U = 1.0) {
  BoundsReport r;
  r.alpha = alpha;
  r.beta = beta;
  r.d = d;
  r.M = d.size() + 1;
  r.d_min = d.minCoeff();
  r.d_max = d.maxCoeff();
  const FixedPointResult fp = solve_fixed_point(alpha, beta, d);
  r.x_inf = fp.x_inf;
  r.mu0_inf = fp.mu_inf[0];
  r.lambda = theorem1_lambda(alpha, beta, r.d_min, x_bar_0, r.M);
  r.rates = corollary1_gamma(alpha, beta, r.d_min, U, r.M);
  r.mu = theorem2_bounds(alpha, beta, r.d_min, r.d_max, r.M);
  if (C) {
    r.C = C;
    r.stochastic = lemma5_lambda1(alpha, beta, r.d_min, *C, r.M);
    r.error = theorem3_error_bound(fp, *C);
  }
  return r;
}

}  // namespace abhmm
