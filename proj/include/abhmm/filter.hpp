// Online filter updates over a discrete state space.
//
// All updates map a prior belief and a log-likelihood vector to a posterior
// belief, working in the log domain. The headline update mixes the prior
// toward uniform before the Bayesian reweighting: each state keeps a fraction
// (1 - alpha M) of its mass and receives alpha from the pool, and the
// likelihood enters raised to a step-size power beta,
//
//   post_m  propto  ((1 - alpha M) prior_m + alpha) * L_m^beta.
//
// At alpha = 0, beta = 1 this is exact Bayesian filtering (bit-for-bit: the
// mixing branch is skipped entirely). At alpha = 1/M the prior is forgotten
// each step. At alpha = h/(M-1), beta = 1 it coincides with the full HMM
// filter whose transition matrix keeps 1 - h and spreads h equally.

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "abhmm/belief.hpp"
#include "abhmm/model.hpp"

namespace abhmm {

namespace detail {

template <class Scalar>
void check_log_likelihoods(const Vec<Scalar>& log_lik, Eigen::Index M) {
  if (log_lik.size() != M)
    throw std::invalid_argument("filter: log-likelihood size does not match belief size");
  for (Eigen::Index m = 0; m < M; ++m) {
    if (std::isnan(log_lik[m]) || log_lik[m] == std::numeric_limits<Scalar>::infinity())
      throw std::invalid_argument("filter: log-likelihoods must not be NaN or +inf");
  }
}

template <class Scalar>
BeliefT<Scalar> normalize_posterior(Vec<Scalar> log_post) {
  const Scalar lse = log_sum_exp(log_post);
  if (lse == neg_inf<Scalar>())
    throw std::runtime_error("filter: all posterior mass zero");
  log_post.array() -= lse;
  // Already normalized; reuse the validating constructor on the shifted
  // vector (its log-sum-exp is 0 up to rounding, which it re-absorbs).
  return BeliefT<Scalar>::from_log_weights(std::move(log_post));
}

}  // namespace detail

// Log-likelihood vector for one observation. -inf entries (zero likelihood)
// are allowed; NaN or +inf is a modeling error and is rejected.
inline VecD log_likelihoods(const ObservationModel& model, double xi, Eigen::Index expect = -1) {
  const int M = model.num_states();
  if (expect >= 0 && expect != M)
    throw std::invalid_argument("log_likelihoods: model size does not match belief size");
  VecD v(M);
  for (int m = 0; m < M; ++m) {
    v[m] = model.log_likelihood(xi, m);
    if (std::isnan(v[m]) || v[m] == std::numeric_limits<double>::infinity())
      throw std::invalid_argument("log_likelihoods: observation " + std::to_string(xi) +
                                  " yields an invalid log-likelihood");
  }
  return v;
}

// Mixing-then-reweighting update. alpha in [0, 1/M] (both ends included:
// alpha = 0 is Bayes, alpha = 1/M is memoryless), beta > 0.
template <class Scalar>
BeliefT<Scalar> abhmm_step(const BeliefT<Scalar>& prior, const Vec<Scalar>& log_lik,
                           Scalar alpha, Scalar beta) {
  const Eigen::Index M = prior.size();
  detail::check_log_likelihoods(log_lik, M);
  if (std::isnan(alpha) || alpha < Scalar(0) || alpha * static_cast<Scalar>(M) > Scalar(1))
    throw std::invalid_argument("abhmm_step: alpha must lie in [0, 1/M]");
  if (!(beta > Scalar(0))) throw std::invalid_argument("abhmm_step: beta must be positive");

  if (alpha == Scalar(0)) {
    // Pure Bayesian reweighting (tempered when beta != 1).
    Vec<Scalar> log_post = prior.log_weights() + beta * log_lik;
    return detail::normalize_posterior(std::move(log_post));
  }
  // Mixed prior is >= alpha everywhere, so the log is safe.
  Vec<Scalar> mixed =
      ((Scalar(1) - alpha * static_cast<Scalar>(M)) * prior.probabilities().array() + alpha)
          .matrix();
  Vec<Scalar> log_post = mixed.array().log().matrix() + beta * log_lik;
  return detail::normalize_posterior(std::move(log_post));
}

inline Belief abhmm_step(const Belief& prior, const ObservationModel& model, double xi,
                         double alpha, double beta) {
  return abhmm_step(prior, log_likelihoods(model, xi, prior.size()), alpha, beta);
}

// Exact Bayesian update. Zero-mass states stay at zero; an all-zero posterior
// (every state ruled out) is a runtime error.
template <class Scalar>
BeliefT<Scalar> bayes_step(const BeliefT<Scalar>& prior, const Vec<Scalar>& log_lik) {
  detail::check_log_likelihoods(log_lik, prior.size());
  Vec<Scalar> log_post = prior.log_weights() + log_lik;
  return detail::normalize_posterior(std::move(log_post));
}

// Full HMM filter step: predict through a row-stochastic transition matrix,
// then reweight.
template <class Scalar>
BeliefT<Scalar> full_hmm_step(const BeliefT<Scalar>& prior, const Vec<Scalar>& log_lik,
                              const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& P) {
  const Eigen::Index M = prior.size();
  detail::check_log_likelihoods(log_lik, M);
  if (P.rows() != M || P.cols() != M)
    throw std::invalid_argument("full_hmm_step: transition matrix size does not match belief");
  if (!P.allFinite() || (P.array() < Scalar(0)).any())
    throw std::invalid_argument("full_hmm_step: transition entries must be finite and >= 0");
  for (Eigen::Index r = 0; r < M; ++r) {
    if (std::abs(P.row(r).sum() - Scalar(1)) > Scalar(1e-12))
      throw std::invalid_argument("full_hmm_step: transition matrix rows must sum to one");
  }
  Vec<Scalar> predicted = P.transpose() * prior.probabilities();
  Vec<Scalar> log_post = predicted.array().log().matrix() + log_lik;
  return detail::normalize_posterior(std::move(log_post));
}

// Transition matrix that keeps 1 - h and exits to each other state with equal
// probability h/(M-1).
template <class Scalar = double>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> equal_exit_matrix(Eigen::Index M,
                                                                        Scalar h) {
  if (M < 2) throw std::invalid_argument("equal_exit_matrix: needs at least two states");
  if (!(h > Scalar(0)) || !(h < Scalar(1)))
    throw std::invalid_argument("equal_exit_matrix: h must lie in (0, 1)");
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> P =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Constant(
          M, M, h / static_cast<Scalar>(M - 1));
  P.diagonal().setConstant(Scalar(1) - h);
  return P;
}

// First-order version of the mixing update, linear in the log-weights:
// log w <- (1 - alpha M) log w + beta log L (then normalize). Requires a
// strictly positive prior; the contraction toward zero has no meaning for
// -inf entries.
template <class Scalar>
BeliefT<Scalar> linearized_abhmm_step(const BeliefT<Scalar>& prior, const Vec<Scalar>& log_lik,
                                      Scalar alpha, Scalar beta) {
  const Eigen::Index M = prior.size();
  detail::check_log_likelihoods(log_lik, M);
  if (std::isnan(alpha) || alpha < Scalar(0) || alpha * static_cast<Scalar>(M) > Scalar(1))
    throw std::invalid_argument("linearized_abhmm_step: alpha must lie in [0, 1/M]");
  if (!(beta > Scalar(0)))
    throw std::invalid_argument("linearized_abhmm_step: beta must be positive");
  if ((prior.log_weights().array() == neg_inf<Scalar>()).any())
    throw std::invalid_argument("linearized_abhmm_step: prior must be strictly positive");
  Vec<Scalar> log_post =
      (Scalar(1) - alpha * static_cast<Scalar>(M)) * prior.log_weights() + beta * log_lik;
  return detail::normalize_posterior(std::move(log_post));
}

// Adaptive social learning update: geometric mixing of prior and likelihood,
// log w <- (1 - delta) log w + delta log L. Equivalent to the linearized
// update with alpha = delta/M, beta = delta.
template <class Scalar>
BeliefT<Scalar> asl_step(const BeliefT<Scalar>& prior, const Vec<Scalar>& log_lik, Scalar delta) {
  if (!(delta > Scalar(0)) || !(delta < Scalar(1)))
    throw std::invalid_argument("asl_step: delta must lie in (0, 1)");
  return linearized_abhmm_step(prior, log_lik, delta / static_cast<Scalar>(prior.size()), delta);
}

// Log-ratio coordinates relative to state 0: x_m = log w_m - log w_0 for
// m = 1..M-1. Requires the reference state to carry mass.
template <class Scalar>
Vec<Scalar> belief_to_log_ratios(const BeliefT<Scalar>& b) {
  if (b.log_weights()[0] == neg_inf<Scalar>())
    throw std::runtime_error("belief_to_log_ratios: reference state has zero mass");
  return (b.log_weights().tail(b.size() - 1).array() - b.log_weights()[0]).matrix();
}

template <class Scalar>
BeliefT<Scalar> log_ratios_to_belief(const Vec<Scalar>& x) {
  Vec<Scalar> log_w(x.size() + 1);
  log_w[0] = Scalar(0);
  log_w.tail(x.size()) = x;
  return BeliefT<Scalar>::from_log_weights(std::move(log_w));
}

enum class FilterVariant { abhmm, bayes, equal_exit_hmm, full_hmm, linearized_abhmm, asl };

inline std::string to_string(FilterVariant v) {
  switch (v) {
    case FilterVariant::abhmm: return "abhmm";
    case FilterVariant::bayes: return "bayes";
    case FilterVariant::equal_exit_hmm: return "equal_exit_hmm";
    case FilterVariant::full_hmm: return "full_hmm";
    case FilterVariant::linearized_abhmm: return "linearized_abhmm";
    case FilterVariant::asl: return "asl";
  }
  throw std::logic_error("to_string: unknown filter variant");
}

inline FilterVariant parse_filter_variant(const std::string& s) {
  if (s == "abhmm") return FilterVariant::abhmm;
  if (s == "bayes") return FilterVariant::bayes;
  if (s == "equal_exit_hmm") return FilterVariant::equal_exit_hmm;
  if (s == "full_hmm") return FilterVariant::full_hmm;
  if (s == "linearized_abhmm") return FilterVariant::linearized_abhmm;
  if (s == "asl") return FilterVariant::asl;
  throw std::invalid_argument("unknown filter variant: " + s);
}

// One filter to run: which update, and its parameters. Only the fields of the
// chosen variant are read.
struct FilterConfig {
  FilterVariant variant = FilterVariant::abhmm;
  double alpha = 0.0;  // abhmm, linearized_abhmm
  double beta = 1.0;   // abhmm, linearized_abhmm
  double delta = 0.0;  // asl
  double h = 0.0;      // equal_exit_hmm
  Eigen::MatrixXd transition;  // full_hmm
};

inline void validate(const FilterConfig& cfg, Eigen::Index M) {
  switch (cfg.variant) {
    case FilterVariant::abhmm:
    case FilterVariant::linearized_abhmm:
      if (std::isnan(cfg.alpha) || cfg.alpha < 0.0 || cfg.alpha * static_cast<double>(M) > 1.0)
        throw std::invalid_argument("FilterConfig: alpha must lie in [0, 1/M]");
      if (!(cfg.beta > 0.0)) throw std::invalid_argument("FilterConfig: beta must be positive");
      break;
    case FilterVariant::bayes:
      break;
    case FilterVariant::equal_exit_hmm:
      if (!(cfg.h > 0.0) || !(cfg.h < 1.0))
        throw std::invalid_argument("FilterConfig: h must lie in (0, 1)");
      break;
    case FilterVariant::full_hmm:
      if (cfg.transition.rows() != M || cfg.transition.cols() != M)
        throw std::invalid_argument("FilterConfig: transition matrix must be M x M");
      break;
    case FilterVariant::asl:
      if (!(cfg.delta > 0.0) || !(cfg.delta < 1.0))
        throw std::invalid_argument("FilterConfig: delta must lie in (0, 1)");
      break;
  }
}

// Single dispatch point used by simulations. For equal_exit_hmm the caller
// may pass a prebuilt matrix via cfg.transition (run_filter does); otherwise
// it is built here from h.
inline Belief filter_step(const Belief& prior, const VecD& log_lik, const FilterConfig& cfg) {
  switch (cfg.variant) {
    case FilterVariant::abhmm: return abhmm_step(prior, log_lik, cfg.alpha, cfg.beta);
    case FilterVariant::bayes: return bayes_step(prior, log_lik);
    case FilterVariant::equal_exit_hmm: {
      if (cfg.transition.rows() == prior.size())
        return full_hmm_step(prior, log_lik, Eigen::MatrixXd(cfg.transition));
      return full_hmm_step(prior, log_lik, equal_exit_matrix(prior.size(), cfg.h));
    }
    case FilterVariant::full_hmm:
      return full_hmm_step(prior, log_lik, Eigen::MatrixXd(cfg.transition));
    case FilterVariant::linearized_abhmm:
      return linearized_abhmm_step(prior, log_lik, cfg.alpha, cfg.beta);
    case FilterVariant::asl: return asl_step(prior, log_lik, cfg.delta);
  }
  throw std::logic_error("filter_step: unknown filter variant");
}

}  // namespace abhmm
