// Observation models and identifiability quantities.
//
// An ObservationModel describes the per-state emission densities L_m. The
// filter only ever sees log-likelihood vectors, so models and filtering stay
// decoupled; everything that needs densities beyond pointwise evaluation
// (identifiability gaps, log-likelihood-ratio bounds) lives here too.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "abhmm/belief.hpp"
#include "abhmm/quadrature.hpp"
#include "abhmm/rng.hpp"

namespace abhmm {

// Discrete hidden-state space. State 0 is the reference state used when
// beliefs are expressed as log-ratios.
struct StateSpace {
  int M = 0;
  std::vector<std::string> labels;

  StateSpace() = default;
  explicit StateSpace(int states) : M(states) {
    if (M < 2) throw std::invalid_argument("StateSpace: needs at least two states");
    labels.reserve(static_cast<std::size_t>(M));
    for (int m = 0; m < M; ++m) labels.push_back("state" + std::to_string(m));
  }
  StateSpace(int states, std::vector<std::string> names) : M(states), labels(std::move(names)) {
    if (M < 2) throw std::invalid_argument("StateSpace: needs at least two states");
    if (static_cast<int>(labels.size()) != M)
      throw std::invalid_argument("StateSpace: label count must match state count");
    for (int a = 0; a < M; ++a)
      for (int b = a + 1; b < M; ++b)
        if (labels[static_cast<std::size_t>(a)] == labels[static_cast<std::size_t>(b)])
          throw std::invalid_argument("StateSpace: labels must be distinct");
  }
};

// Observation support: the whole real line or a closed interval.
struct Support {
  bool bounded = false;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();

  static Support real_line() { return Support{}; }
  static Support interval(double lo, double hi) {
    if (!(lo < hi)) throw std::invalid_argument("Support: interval needs lo < hi");
    return Support{true, lo, hi};
  }
  friend bool operator==(const Support& a, const Support& b) {
    return a.bounded == b.bounded && a.lo == b.lo && a.hi == b.hi;
  }
};

class ObservationModel {
 public:
  virtual ~ObservationModel() = default;

  virtual int num_states() const = 0;
  // log L_m(xi); -inf where the density vanishes.
  virtual double log_likelihood(double xi, int m) const = 0;
  virtual double sample(int m, Rng& rng) const = 0;
  virtual Support support() const = 0;

  // True when E_f[log L_m] has a closed form in terms of the mean and
  // variance of f (log-density quadratic in xi on the support).
  virtual bool closed_form_kl() const = 0;
  virtual double state_mean(int m) const = 0;
  virtual double state_variance(int m) const = 0;
  // E[log L_m(xi)] for xi drawn with the given mean/variance from a
  // distribution living on the same support. Only meaningful when
  // closed_form_kl() is true.
  virtual double expected_log_likelihood(int /*m*/, double /*mean*/, double /*variance*/) const {
    throw std::logic_error("ObservationModel: no closed-form expected log-likelihood");
  }
  // True when every pairwise log-likelihood ratio is affine in xi, so
  // suprema over a bounded support sit at the endpoints.
  virtual bool llr_affine() const = 0;

 protected:
  void check_state(int m) const {
    if (m < 0 || m >= num_states())
      throw std::invalid_argument("ObservationModel: state index out of range");
  }
};

// Gaussian emissions on the real line: L_m = N(a_m, sigma^2).
class GaussianGridModel final : public ObservationModel {
 public:
  // A single-state model is allowed: it cannot host a belief, but it can act
  // as the environment's emission density when that density matches none of
  // the likelihood states.
  GaussianGridModel(VecD means, double sigma) : means_(std::move(means)), sigma_(sigma) {
    if (means_.size() < 1)
      throw std::invalid_argument("GaussianGridModel: needs at least one state");
    if (!(sigma_ > 0.0)) throw std::invalid_argument("GaussianGridModel: sigma must be positive");
    if (!means_.allFinite()) throw std::invalid_argument("GaussianGridModel: means must be finite");
    for (Eigen::Index a = 0; a < means_.size(); ++a)
      for (Eigen::Index b = a + 1; b < means_.size(); ++b)
        if (means_[a] == means_[b])
          throw std::invalid_argument("GaussianGridModel: means must be pairwise distinct");
    log_norm_ = -std::log(sigma_ * std::sqrt(2.0 * std::acos(-1.0)));
  }

  int num_states() const override { return static_cast<int>(means_.size()); }
  double log_likelihood(double xi, int m) const override {
    check_state(m);
    const double z = (xi - means_[m]) / sigma_;
    return log_norm_ - 0.5 * z * z;
  }
  double sample(int m, Rng& rng) const override {
    check_state(m);
    return rng.normal(means_[m], sigma_);
  }
  Support support() const override { return Support::real_line(); }
  bool closed_form_kl() const override { return true; }
  double state_mean(int m) const override {
    check_state(m);
    return means_[m];
  }
  double state_variance(int m) const override {
    check_state(m);
    return sigma_ * sigma_;
  }
  // E[log L_m] = log_norm - ((mean - a_m)^2 + variance) / (2 sigma^2).
  double expected_log_likelihood(int m, double mean, double variance) const override {
    check_state(m);
    const double dm = mean - means_[m];
    return log_norm_ - (dm * dm + variance) / (2.0 * sigma_ * sigma_);
  }
  bool llr_affine() const override { return true; }

  const VecD& means() const { return means_; }
  double sigma() const { return sigma_; }

 private:
  VecD means_;
  double sigma_;
  double log_norm_;
};

// Gaussians renormalized to a common interval [lo, hi]:
// L_m(xi) = N(xi; a_m, sigma^2) / Z_m on [lo, hi], zero outside,
// Z_m = Phi((hi - a_m)/sigma) - Phi((lo - a_m)/sigma).
class TruncatedGaussianModel final : public ObservationModel {
 public:
  TruncatedGaussianModel(VecD means, double sigma, double lo, double hi)
      : means_(std::move(means)), sigma_(sigma), lo_(lo), hi_(hi) {
    if (means_.size() < 1)
      throw std::invalid_argument("TruncatedGaussianModel: needs at least one state");
    if (!(sigma_ > 0.0))
      throw std::invalid_argument("TruncatedGaussianModel: sigma must be positive");
    if (!(lo_ < hi_)) throw std::invalid_argument("TruncatedGaussianModel: needs lo < hi");
    if (!means_.allFinite())
      throw std::invalid_argument("TruncatedGaussianModel: means must be finite");
    for (Eigen::Index a = 0; a < means_.size(); ++a)
      for (Eigen::Index b = a + 1; b < means_.size(); ++b)
        if (means_[a] == means_[b])
          throw std::invalid_argument("TruncatedGaussianModel: means must be pairwise distinct");
    log_norm_ = -std::log(sigma_ * std::sqrt(2.0 * std::acos(-1.0)));
    const Eigen::Index M = means_.size();
    log_z_.resize(M);
    mean_.resize(M);
    var_.resize(M);
    for (Eigen::Index m = 0; m < M; ++m) {
      const double zl = (lo_ - means_[m]) / sigma_;
      const double zh = (hi_ - means_[m]) / sigma_;
      const double mass = normal_cdf(zh) - normal_cdf(zl);
      if (!(mass > 0.0))
        throw std::invalid_argument(
            "TruncatedGaussianModel: interval carries no mass for a state");
      log_z_[m] = std::log(mass);
      const double pl = std_normal_pdf(zl);
      const double ph = std_normal_pdf(zh);
      mean_[m] = means_[m] + sigma_ * (pl - ph) / mass;
      const double r = (pl - ph) / mass;
      var_[m] = sigma_ * sigma_ * (1.0 + (zl * pl - zh * ph) / mass - r * r);
    }
  }

  int num_states() const override { return static_cast<int>(means_.size()); }
  double log_likelihood(double xi, int m) const override {
    check_state(m);
    if (xi < lo_ || xi > hi_) return neg_inf<double>();
    const double z = (xi - means_[m]) / sigma_;
    return log_norm_ - 0.5 * z * z - log_z_[m];
  }
  double sample(int m, Rng& rng) const override {
    check_state(m);
    return rng.truncated_normal(means_[m], sigma_, lo_, hi_);
  }
  Support support() const override { return Support::interval(lo_, hi_); }
  // Identifiability gaps fall back to quadrature: the normalization constants
  // make E_f[log L_m] depend on more than f's first two moments only through
  // constants, but keeping one numeric path exercised is worth the cost.
  bool closed_form_kl() const override { return false; }
  double state_mean(int m) const override {
    check_state(m);
    return mean_[m];
  }
  double state_variance(int m) const override {
    check_state(m);
    return var_[m];
  }
  bool llr_affine() const override { return true; }

  const VecD& means() const { return means_; }
  double sigma() const { return sigma_; }

 private:
  static double std_normal_pdf(double z) {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::acos(-1.0));
  }

  VecD means_;
  double sigma_;
  double lo_, hi_;
  double log_norm_;
  VecD log_z_, mean_, var_;
};

// Identifiability gap of state m relative to the reference state:
//   d_m = KL(f || L_m) - KL(f || L_ref) = E_f[log L_ref - log L_m],
// where f is the emission density of the environment's true state. All gaps
// must be strictly positive for the filter to concentrate on the reference
// state; a non-positive gap means some other state explains the data at
// least as well.
//
// Returns a vector of length M-1: entry k is the gap of state (k < ref ? k :
// k + 1), matching the order in which non-reference states appear.
inline VecD compute_identifiability(const ObservationModel& true_model, int true_state,
                                    const ObservationModel& lik, int ref_state) {
  const int M = lik.num_states();
  if (true_state < 0 || true_state >= true_model.num_states())
    throw std::invalid_argument("compute_identifiability: true state out of range");
  if (ref_state < 0 || ref_state >= M)
    throw std::invalid_argument("compute_identifiability: reference state out of range");
  if (!(true_model.support() == lik.support()))
    throw std::invalid_argument(
        "compute_identifiability: true model and likelihood model must share a support");

  VecD expected(M);  // E_f[log L_m] for every state of the likelihood model
  if (lik.closed_form_kl()) {
    const double mean = true_model.state_mean(true_state);
    const double variance = true_model.state_variance(true_state);
    for (int m = 0; m < M; ++m) expected[m] = lik.expected_log_likelihood(m, mean, variance);
  } else {
    const Support s = lik.support();
    if (!s.bounded)
      throw std::invalid_argument(
          "compute_identifiability: quadrature needs a bounded support");
    for (int m = 0; m < M; ++m) {
      expected[m] = integrate(
          [&](double xi) {
            const double lf = true_model.log_likelihood(xi, true_state);
            if (lf == neg_inf<double>()) return 0.0;
            return std::exp(lf) * lik.log_likelihood(xi, m);
          },
          s.lo, s.hi, 1e-10);
    }
  }

  VecD d(M - 1);
  Eigen::Index k = 0;
  for (int m = 0; m < M; ++m) {
    if (m == ref_state) continue;
    d[k] = expected[ref_state] - expected[m];
    if (!(d[k] > 1e-8))
      throw std::runtime_error(
          "compute_identifiability: assumption violated, state " + std::to_string(m) +
          " is not distinguishable from the reference state (gap " + std::to_string(d[k]) + ")");
    ++k;
  }
  return d;
}

// Uniform bound on the centered log-likelihood ratios:
//   C = max_m sup_xi | log L_m(xi) - log L_ref(xi) + d_m |.
// Finite only for bounded supports. When ratios are affine in xi the supremum
// sits at an endpoint; otherwise a dense grid with local refinement is used.
inline double compute_llr_bound(const ObservationModel& true_model, int true_state,
                                const ObservationModel& lik, int ref_state) {
  const Support s = lik.support();
  if (!s.bounded)
    throw std::invalid_argument(
        "compute_llr_bound: unbounded support, log-likelihood ratios are unbounded");
  const VecD d = compute_identifiability(true_model, true_state, lik, ref_state);

  const auto centered = [&](double xi, int m) {
    const double llr = lik.log_likelihood(xi, m) - lik.log_likelihood(xi, ref_state);
    Eigen::Index k = m < ref_state ? m : m - 1;
    return std::abs(llr + d[k]);
  };

  const int M = lik.num_states();
  double c = 0.0;
  for (int m = 0; m < M; ++m) {
    if (m == ref_state) continue;
    if (lik.llr_affine()) {
      c = std::max({c, centered(s.lo, m), centered(s.hi, m)});
      continue;
    }
    // Dense scan, then golden-section refinement around the best grid point.
    constexpr int grid = 10000;
    double best_x = s.lo, best = -1.0;
    for (int i = 0; i <= grid; ++i) {
      const double x = s.lo + (s.hi - s.lo) * static_cast<double>(i) / grid;
      const double v = centered(x, m);
      if (v > best) {
        best = v;
        best_x = x;
      }
    }
    const double h = (s.hi - s.lo) / grid;
    double a = std::max(s.lo, best_x - h), b = std::min(s.hi, best_x + h);
    constexpr double inv_phi = 0.6180339887498949;
    double x1 = b - inv_phi * (b - a), x2 = a + inv_phi * (b - a);
    double f1 = centered(x1, m), f2 = centered(x2, m);
    for (int it = 0; it < 200 && (b - a) > 1e-13 * (s.hi - s.lo); ++it) {
      if (f1 > f2) {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - inv_phi * (b - a);
        f1 = centered(x1, m);
      } else {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + inv_phi * (b - a);
        f2 = centered(x2, m);
      }
    }
    c = std::max({c, best, f1, f2});
  }
  return c;
}

// Identifiability profile of an environment/model pair: all gaps, their
// extremes, and the ratio bound C when the support allows one.
struct InfoProfile {
  VecD d;
  double d_min = 0.0;
  double d_max = 0.0;
  std::optional<double> C;
};

inline InfoProfile make_info_profile(const ObservationModel& true_model, int true_state,
                                     const ObservationModel& lik, int ref_state) {
  InfoProfile p;
  p.d = compute_identifiability(true_model, true_state, lik, ref_state);
  p.d_min = p.d.minCoeff();
  p.d_max = p.d.maxCoeff();
  if (lik.support().bounded) p.C = compute_llr_bound(true_model, true_state, lik, ref_state);
  return p;
}

}  // namespace abhmm
