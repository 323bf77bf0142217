#include <doctest.h>

#include <cmath>
#include <limits>
#include <stdexcept>

#include "abhmm/filter.hpp"
#include "abhmm/rng.hpp"

using namespace abhmm;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Belief random_belief(Eigen::Index M, Rng& rng) {
  VecD w(M);
  for (Eigen::Index m = 0; m < M; ++m) w[m] = rng.uniform01() + 1e-3;
  return Belief::from_probabilities(w);
}

VecD random_log_lik(Eigen::Index M, Rng& rng, double scale = 10.0) {
  VecD l(M);
  for (Eigen::Index m = 0; m < M; ++m) l[m] = scale * (2.0 * rng.uniform01() - 1.0);
  return l;
}

}  // namespace

// ---------------------------------------------------------------------------
// Belief container
// ---------------------------------------------------------------------------

TEST_CASE("Belief normalizes and exposes both representations") {
  VecD p(3);
  p << 2.0, 3.0, 5.0;
  const Belief b = Belief::from_probabilities(p);
  CHECK(b.size() == 3);
  CHECK(b.probabilities()[0] == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(b.probabilities()[2] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(log_sum_exp(b.log_weights()) == doctest::Approx(0.0).epsilon(1e-14));

  const Belief u = Belief::uniform(4);
  for (int m = 0; m < 4; ++m) CHECK(u.probabilities()[m] == doctest::Approx(0.25));
}

TEST_CASE("Belief accepts zero-mass states but not empty or invalid input") {
  VecD lw(3);
  lw << 0.0, -kInf, -1.0;
  const Belief b = Belief::from_log_weights(lw);
  CHECK(b.probabilities()[1] == 0.0);

  VecD bad(2);
  bad << 0.0, std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(Belief::from_log_weights(bad), std::invalid_argument);
  bad << 0.0, kInf;
  CHECK_THROWS_AS(Belief::from_log_weights(bad), std::invalid_argument);
  VecD all_zero(2);
  all_zero << -kInf, -kInf;
  CHECK_THROWS_AS(Belief::from_log_weights(all_zero), std::invalid_argument);
  CHECK_THROWS_AS(Belief::uniform(1), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Core update and its degenerate corners
// ---------------------------------------------------------------------------

TEST_CASE("abhmm_step with alpha = 0, beta = 1 is exactly the Bayes update") {
  Rng rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    const Eigen::Index M = 2 + static_cast<Eigen::Index>(rng.uniform_int(9));
    const Belief prior = random_belief(M, rng);
    const VecD l = random_log_lik(M, rng);
    const Belief a = abhmm_step(prior, l, 0.0, 1.0);
    const Belief b = bayes_step(prior, l);
    // Same arithmetic path: bit-for-bit equality, not just tolerance.
    for (Eigen::Index m = 0; m < M; ++m) CHECK(a.log_weights()[m] == b.log_weights()[m]);
  }
}

TEST_CASE("abhmm_step at alpha = h/(M-1) reproduces the equal-exit HMM filter") {
  Rng rng(12);
  for (int rep = 0; rep < 50; ++rep) {
    const Eigen::Index M = 2 + static_cast<Eigen::Index>(rng.uniform_int(6));
    const double h = 0.999 * rng.uniform01() * (static_cast<double>(M) - 1.0) /
                     static_cast<double>(M);
    if (h <= 0.0) continue;
    const Belief prior = random_belief(M, rng);
    const VecD l = random_log_lik(M, rng);
    const Belief a = abhmm_step(prior, l, h / (static_cast<double>(M) - 1.0), 1.0);
    const Belief b = full_hmm_step(prior, l, equal_exit_matrix(M, h));
    for (Eigen::Index m = 0; m < M; ++m)
      CHECK(a.probabilities()[m] == doctest::Approx(b.probabilities()[m]).epsilon(1e-12));
  }
}

TEST_CASE("abhmm_step at alpha = 1/M forgets the prior") {
  Rng rng(13);
  const Eigen::Index M = 4;
  const VecD l = random_log_lik(M, rng);
  const Belief p1 = random_belief(M, rng);
  const Belief p2 = random_belief(M, rng);
  const Belief a = abhmm_step(p1, l, 1.0 / static_cast<double>(M), 1.0);
  const Belief b = abhmm_step(p2, l, 1.0 / static_cast<double>(M), 1.0);
  for (Eigen::Index m = 0; m < M; ++m)
    CHECK(a.probabilities()[m] == doctest::Approx(b.probabilities()[m]).epsilon(1e-14));
}

TEST_CASE("beta exponentiates the likelihood") {
  Rng rng(14);
  const Belief prior = random_belief(3, rng);
  const VecD l = random_log_lik(3, rng);
  const Belief twice = abhmm_step(prior, l, 0.0, 2.0);
  const Belief doubled = bayes_step(prior, VecD(2.0 * l));
  for (int m = 0; m < 3; ++m)
    CHECK(twice.probabilities()[m] == doctest::Approx(doubled.probabilities()[m]).epsilon(1e-13));
}

TEST_CASE("abhmm_step validates parameters and inputs") {
  Rng rng(15);
  const Belief prior = random_belief(3, rng);
  const VecD l = random_log_lik(3, rng);
  CHECK_THROWS_AS(abhmm_step(prior, l, -0.01, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(abhmm_step(prior, l, 1.0 / 3.0 + 1e-9, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(abhmm_step(prior, l, 0.1, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(abhmm_step(prior, l, 0.1, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(abhmm_step(prior, random_log_lik(4, rng), 0.1, 1.0), std::invalid_argument);
  VecD bad = l;
  bad[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(abhmm_step(prior, bad, 0.1, 1.0), std::invalid_argument);
  bad[1] = kInf;
  CHECK_THROWS_AS(abhmm_step(prior, bad, 0.1, 1.0), std::invalid_argument);
}

TEST_CASE("a likelihood that kills all mass is reported, not normalized away") {
  Rng rng(16);
  const Belief prior = random_belief(2, rng);
  VecD l(2);
  l << -kInf, -kInf;
  CHECK_THROWS_AS(bayes_step(prior, l), std::runtime_error);
  CHECK_THROWS_AS(abhmm_step(prior, l, 0.1, 1.0), std::runtime_error);
}

TEST_CASE("zero likelihood on one state is fine when mass survives elsewhere") {
  Rng rng(17);
  const Belief prior = random_belief(3, rng);
  VecD l(3);
  l << 0.0, -kInf, -0.5;
  const Belief post = abhmm_step(prior, l, 0.05, 1.0);
  CHECK(post.probabilities()[1] == 0.0);
  CHECK(post.probabilities().sum() == doctest::Approx(1.0).epsilon(1e-14));
}

// ---------------------------------------------------------------------------
// Full HMM step
// ---------------------------------------------------------------------------

TEST_CASE("full_hmm_step with the identity matrix is the Bayes update") {
  Rng rng(18);
  const Belief prior = random_belief(4, rng);
  const VecD l = random_log_lik(4, rng);
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(4, 4);
  const Belief a = full_hmm_step(prior, l, identity);
  const Belief b = bayes_step(prior, l);
  for (int m = 0; m < 4; ++m)
    CHECK(a.probabilities()[m] == doctest::Approx(b.probabilities()[m]).epsilon(1e-13));
}

TEST_CASE("full_hmm_step validates the transition matrix") {
  Rng rng(19);
  const Belief prior = random_belief(3, rng);
  const VecD l = random_log_lik(3, rng);
  Eigen::MatrixXd P = Eigen::MatrixXd::Constant(3, 3, 1.0 / 3.0);
  CHECK_NOTHROW(full_hmm_step(prior, l, P));
  P(0, 0) = 0.5;  // row no longer sums to one
  CHECK_THROWS_AS(full_hmm_step(prior, l, P), std::invalid_argument);
  P(0, 0) = 1.0 / 3.0;
  P(1, 2) = -P(1, 2);
  CHECK_THROWS_AS(full_hmm_step(prior, l, P), std::invalid_argument);
  const Eigen::MatrixXd wrong_size = Eigen::MatrixXd::Identity(2, 2);
  CHECK_THROWS_AS(full_hmm_step(prior, l, wrong_size), std::invalid_argument);
}

TEST_CASE("equal_exit_matrix is row-stochastic with the stated off-diagonal") {
  const Eigen::MatrixXd P = equal_exit_matrix(4, 0.3);
  for (int i = 0; i < 4; ++i) {
    CHECK(P(i, i) == doctest::Approx(0.7));
    CHECK(P.row(i).sum() == doctest::Approx(1.0).epsilon(1e-15));
    for (int j = 0; j < 4; ++j)
      if (i != j) CHECK(P(i, j) == doctest::Approx(0.1));
  }
  CHECK_THROWS_AS(equal_exit_matrix(3, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(equal_exit_matrix(3, 1.0), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Linearized update and the adaptive-social-learning form
// ---------------------------------------------------------------------------

TEST_CASE("linearized_abhmm_step shrinks log-weights toward uniform") {
  // One step from a known prior: log posterior ∝ (1-alpha M) log prior + beta l.
  VecD p(2);
  p << 0.8, 0.2;
  const Belief prior = Belief::from_probabilities(p);
  VecD l(2);
  l << 0.3, -0.1;
  const double alpha = 0.1, beta = 2.0;
  const Belief post = linearized_abhmm_step(prior, l, alpha, beta);
  const double shrink = 1.0 - alpha * 2.0;
  VecD expected = (shrink * prior.log_weights() + beta * l).eval();
  expected.array() -= log_sum_exp(expected);
  for (int m = 0; m < 2; ++m)
    CHECK(post.log_weights()[m] == doctest::Approx(expected[m]).epsilon(1e-14));
}

TEST_CASE("linearized_abhmm_step rejects zero-mass priors") {
  VecD lw(2);
  lw << 0.0, -kInf;
  const Belief prior = Belief::from_log_weights(lw);
  VecD l(2);
  l << 0.0, 0.0;
  CHECK_THROWS_AS(linearized_abhmm_step(prior, l, 0.1, 1.0), std::invalid_argument);
}

TEST_CASE("asl_step is the linearized update at alpha = delta/M, beta = delta") {
  Rng rng(20);
  const Belief prior = random_belief(5, rng);
  const VecD l = random_log_lik(5, rng);
  const double delta = 0.37;
  const Belief a = asl_step(prior, l, delta);
  const Belief b = linearized_abhmm_step(prior, l, delta / 5.0, delta);
  for (int m = 0; m < 5; ++m) CHECK(a.log_weights()[m] == b.log_weights()[m]);
  CHECK_THROWS_AS(asl_step(prior, l, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(asl_step(prior, l, 1.0), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Log-ratio coordinates
// ---------------------------------------------------------------------------

TEST_CASE("belief and log-ratio representations round-trip") {
  Rng rng(21);
  for (int rep = 0; rep < 20; ++rep) {
    const Belief b = random_belief(4, rng);
    const VecD x = belief_to_log_ratios(b);
    REQUIRE(x.size() == 3);
    const Belief back = log_ratios_to_belief(x);
    for (int m = 0; m < 4; ++m)
      CHECK(back.probabilities()[m] == doctest::Approx(b.probabilities()[m]).epsilon(1e-13));
  }
  VecD lw(2);
  lw << -kInf, 0.0;
  CHECK_THROWS_AS(belief_to_log_ratios(Belief::from_log_weights(lw)), std::runtime_error);
}

// ---------------------------------------------------------------------------
// Variant dispatch
// ---------------------------------------------------------------------------

TEST_CASE("filter variants parse and print round-trip") {
  for (FilterVariant v : {FilterVariant::abhmm, FilterVariant::bayes,
                          FilterVariant::equal_exit_hmm, FilterVariant::full_hmm,
                          FilterVariant::linearized_abhmm, FilterVariant::asl})
    CHECK(parse_filter_variant(to_string(v)) == v);
  CHECK_THROWS_AS(parse_filter_variant("kalman"), std::invalid_argument);
}

namespace {

bool same_log_weights(const Belief& a, const Belief& b) {
  return (a.log_weights().array() == b.log_weights().array()).all();
}

}  // namespace

TEST_CASE("filter_step dispatches every variant consistently") {
  Rng rng(22);
  const Eigen::Index M = 3;
  const Belief prior = random_belief(M, rng);
  const VecD l = random_log_lik(M, rng);

  FilterConfig cfg;
  cfg.variant = FilterVariant::abhmm;
  cfg.alpha = 0.1;
  cfg.beta = 1.5;
  CHECK(same_log_weights(filter_step(prior, l, cfg), abhmm_step(prior, l, 0.1, 1.5)));

  cfg.variant = FilterVariant::bayes;
  CHECK(same_log_weights(filter_step(prior, l, cfg), bayes_step(prior, l)));

  cfg.variant = FilterVariant::equal_exit_hmm;
  cfg.h = 0.2;
  CHECK(same_log_weights(filter_step(prior, l, cfg),
                         full_hmm_step(prior, l, equal_exit_matrix(M, 0.2))));

  cfg.variant = FilterVariant::full_hmm;
  cfg.transition = equal_exit_matrix(M, 0.4);
  CHECK(same_log_weights(filter_step(prior, l, cfg),
                         full_hmm_step(prior, l, equal_exit_matrix(M, 0.4))));

  cfg.variant = FilterVariant::linearized_abhmm;
  CHECK(same_log_weights(filter_step(prior, l, cfg),
                         linearized_abhmm_step(prior, l, 0.1, 1.5)));

  cfg.variant = FilterVariant::asl;
  cfg.delta = 0.25;
  CHECK(same_log_weights(filter_step(prior, l, cfg), asl_step(prior, l, 0.25)));
}
