// Belief state over a discrete state space, stored in the log domain.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace abhmm {

template <class Scalar>
using Vec = Eigen::Vector<Scalar, Eigen::Dynamic>;
using VecD = Vec<double>;

template <class Scalar>
constexpr Scalar neg_inf() {
  return -std::numeric_limits<Scalar>::infinity();
}

// Max-shifted log(sum(exp(v))). Tolerates -inf entries; returns -inf when all
// entries are -inf.
template <class Scalar>
Scalar log_sum_exp(const Vec<Scalar>& v) {
  using std::log;
  const Scalar m = v.maxCoeff();
  if (m == neg_inf<Scalar>()) return m;
  return m + log((v.array() - m).exp().sum());
}

// Normalized belief over M >= 2 states. Probabilities are kept as log-weights
// with log_sum_exp(log_weights) == 0, so states may carry exactly zero mass
// (-inf) but the vector always sums to one.
template <class Scalar>
class BeliefT {
 public:
  static BeliefT uniform(Eigen::Index states) {
    using std::log;
    check_state_count(states);
    return BeliefT(Vec<Scalar>::Constant(states, -log(static_cast<Scalar>(states))));
  }

  // Accepts any non-negative vector with positive total mass.
  static BeliefT from_probabilities(const Vec<Scalar>& p) {
    check_state_count(p.size());
    if (!p.allFinite() || (p.array() < Scalar(0)).any())
      throw std::invalid_argument("Belief: probabilities must be finite and non-negative");
    if (!(p.sum() > Scalar(0))) throw std::invalid_argument("Belief: no probability mass");
    Vec<Scalar> log_w = p.array().log().matrix();
    const Scalar lse = log_sum_exp(log_w);
    return BeliefT(std::move(log_w), lse);
  }

  // Accepts unnormalized log-weights; -inf marks zero-mass states.
  static BeliefT from_log_weights(Vec<Scalar> log_w) {
    check_state_count(log_w.size());
    for (Eigen::Index m = 0; m < log_w.size(); ++m) {
      if (std::isnan(log_w[m]) || log_w[m] == std::numeric_limits<Scalar>::infinity())
        throw std::invalid_argument("Belief: log-weights must not be NaN or +inf");
    }
    const Scalar lse = log_sum_exp(log_w);
    if (lse == neg_inf<Scalar>()) throw std::invalid_argument("Belief: no probability mass");
    return BeliefT(std::move(log_w), lse);
  }

  const Vec<Scalar>& log_weights() const { return log_w_; }
  // Scalar exp per entry: Eigen's vectorized exp clamps its argument and maps
  // -inf to a subnormal, but zero-mass states must come back as exactly 0.
  Vec<Scalar> probabilities() const {
    return log_w_.unaryExpr([](Scalar v) {
      using std::exp;
      return exp(v);
    });
  }
  Eigen::Index size() const { return log_w_.size(); }

 private:
  explicit BeliefT(Vec<Scalar> normalized) : log_w_(std::move(normalized)) {}
  BeliefT(Vec<Scalar> log_w, Scalar lse) : log_w_(std::move(log_w)) {
    log_w_.array() -= lse;
  }
  static void check_state_count(Eigen::Index states) {
    if (states < 2) throw std::invalid_argument("Belief: needs at least two states");
  }

  Vec<Scalar> log_w_;
};

using Belief = BeliefT<double>;

}  // namespace abhmm
