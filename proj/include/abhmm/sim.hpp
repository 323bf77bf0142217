// Non-stationary environments, filter execution over sampled trajectories,
// and Monte Carlo estimation of the learning metrics.
//
// Determinism contract: every run r of a Monte Carlo job draws from its own
// generator seeded by mix_seed(master_seed, r), and the aggregation reduces
// per-run results in a fixed block structure, so the output is bit-identical
// for any thread count.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <thread>
#include <vector>

#include "abhmm/belief.hpp"
#include "abhmm/filter.hpp"
#include "abhmm/model.hpp"
#include "abhmm/rng.hpp"

namespace abhmm {

// Schedule of the true state over a finite horizon.
struct EnvironmentSpec {
  enum class Variant { constant, switch_at, periodic_redraw, markov };

  Variant variant = Variant::constant;
  int horizon = 1;
  int state = 0;              // constant
  int state_a = 0;            // switch_at: true state before the switch
  int state_b = 0;            // switch_at: true state from the switch on
  int t1 = 0;                 // switch_at: number of pre-switch observations
  int period = 1;             // periodic_redraw
  Eigen::MatrixXd transition; // markov
  VecD initial;               // markov

  static EnvironmentSpec constant(int state, int horizon) {
    EnvironmentSpec e;
    e.variant = Variant::constant;
    e.state = state;
    e.horizon = horizon;
    e.validate();
    return e;
  }
  static EnvironmentSpec switch_at(int state_a, int state_b, int t1, int horizon) {
    EnvironmentSpec e;
    e.variant = Variant::switch_at;
    e.state_a = state_a;
    e.state_b = state_b;
    e.t1 = t1;
    e.horizon = horizon;
    e.validate();
    return e;
  }
  static EnvironmentSpec periodic_redraw(int period, int horizon) {
    EnvironmentSpec e;
    e.variant = Variant::periodic_redraw;
    e.period = period;
    e.horizon = horizon;
    e.validate();
    return e;
  }
  static EnvironmentSpec markov(Eigen::MatrixXd transition, VecD initial, int horizon) {
    EnvironmentSpec e;
    e.variant = Variant::markov;
    e.transition = std::move(transition);
    e.initial = std::move(initial);
    e.horizon = horizon;
    e.validate();
    return e;
  }

  void validate() const {
    if (horizon < 1) throw std::invalid_argument("EnvironmentSpec: horizon must be >= 1");
    switch (variant) {
      case Variant::constant:
        if (state < 0) throw std::invalid_argument("EnvironmentSpec: state must be >= 0");
        break;
      case Variant::switch_at:
        if (state_a < 0 || state_b < 0)
          throw std::invalid_argument("EnvironmentSpec: states must be >= 0");
        if (state_a == state_b)
          throw std::invalid_argument("EnvironmentSpec: switch states must differ");
        if (t1 < 1 || t1 >= horizon)
          throw std::invalid_argument("EnvironmentSpec: needs 1 <= t1 < horizon");
        break;
      case Variant::periodic_redraw:
        if (period < 1) throw std::invalid_argument("EnvironmentSpec: period must be >= 1");
        break;
      case Variant::markov: {
        const Eigen::Index n = transition.rows();
        if (n < 2 || transition.cols() != n)
          throw std::invalid_argument("EnvironmentSpec: transition matrix must be square, M >= 2");
        if (!transition.allFinite() || (transition.array() < 0.0).any())
          throw std::invalid_argument("EnvironmentSpec: transition entries must be >= 0");
        for (Eigen::Index r = 0; r < n; ++r)
          if (std::abs(transition.row(r).sum() - 1.0) > 1e-12)
            throw std::invalid_argument("EnvironmentSpec: transition rows must sum to one");
        if (initial.size() != n)
          throw std::invalid_argument("EnvironmentSpec: initial distribution size mismatch");
        if (!initial.allFinite() || (initial.array() < 0.0).any() ||
            std::abs(initial.sum() - 1.0) > 1e-12)
          throw std::invalid_argument("EnvironmentSpec: initial distribution must be normalized");
        break;
      }
    }
  }
};

// One sampled run: the true-state schedule and the observation it emitted at
// each step. 0-indexed; observation j is drawn from state j's density.
struct Trajectory {
  Eigen::VectorXi states;
  VecD observations;
};

namespace detail {

inline int sample_categorical(const VecD& p, Rng& rng) {
  const double u = rng.uniform01();
  double cum = 0.0;
  for (Eigen::Index m = 0; m < p.size(); ++m) {
    cum += p[m];
    if (u < cum) return static_cast<int>(m);
  }
  return static_cast<int>(p.size() - 1);
}

}  // namespace detail

// Samples a state schedule and observations. The generator is consumed in a
// fixed order (state draw, if any, then the observation) so results are a
// pure function of (env, model, seed). The periodic redraw picks uniformly
// from all states, repeats allowed; the first periodic state is also uniform.
inline Trajectory generate_trajectory(const EnvironmentSpec& env,
                                      const ObservationModel& true_model, Rng& rng) {
  env.validate();
  const int M = true_model.num_states();
  using V = EnvironmentSpec::Variant;
  switch (env.variant) {
    case V::constant:
      if (env.state >= M)
        throw std::invalid_argument("generate_trajectory: state index out of range");
      break;
    case V::switch_at:
      if (env.state_a >= M || env.state_b >= M)
        throw std::invalid_argument("generate_trajectory: state index out of range");
      break;
    case V::periodic_redraw:
      break;
    case V::markov:
      if (env.transition.rows() != M)
        throw std::invalid_argument(
            "generate_trajectory: transition matrix does not match model state count");
      break;
  }

  Trajectory traj;
  traj.states.resize(env.horizon);
  traj.observations.resize(env.horizon);
  int current = 0;
  for (int j = 0; j < env.horizon; ++j) {
    switch (env.variant) {
      case V::constant:
        current = env.state;
        break;
      case V::switch_at:
        current = j < env.t1 ? env.state_a : env.state_b;
        break;
      case V::periodic_redraw:
        if (j == 0 || j % env.period == 0)
          current = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(M)));
        break;
      case V::markov:
        if (j == 0)
          current = detail::sample_categorical(env.initial, rng);
        else
          current = detail::sample_categorical(env.transition.row(current).transpose(), rng);
        break;
    }
    traj.states[j] = current;
    traj.observations[j] = true_model.sample(current, rng);
  }
  return traj;
}

// Applies one filter across a trajectory. Returns the belief history of
// length (steps + 1), starting with the initial belief. The equal-exit
// transition matrix is materialized once up front.
inline std::vector<Belief> run_filter(const FilterConfig& cfg, const ObservationModel& model,
                                      const Trajectory& traj, const Belief& initial) {
  const Eigen::Index M = model.num_states();
  if (initial.size() != M)
    throw std::invalid_argument("run_filter: initial belief does not match model state count");
  if (traj.states.size() != traj.observations.size())
    throw std::invalid_argument("run_filter: trajectory arrays must have equal length");
  validate(cfg, M);
  FilterConfig resolved = cfg;
  if (cfg.variant == FilterVariant::equal_exit_hmm && cfg.transition.rows() != M)
    resolved.transition = equal_exit_matrix(M, cfg.h);

  std::vector<Belief> history;
  history.reserve(static_cast<std::size_t>(traj.observations.size()) + 1);
  history.push_back(initial);
  for (Eigen::Index j = 0; j < traj.observations.size(); ++j)
    history.push_back(
        filter_step(history.back(), log_likelihoods(model, traj.observations[j], M), resolved));
  return history;
}

// True when the belief puts strictly more mass on the true state than on
// every other state. Exact ties count as errors.
inline bool correct_learning_indicator(const Belief& belief, int true_state) {
  if (true_state < 0 || true_state >= belief.size())
    throw std::invalid_argument("correct_learning_indicator: state index out of range");
  const VecD& w = belief.log_weights();
  for (Eigen::Index m = 0; m < w.size(); ++m)
    if (m != true_state && w[m] >= w[true_state]) return false;
  return true;
}

// First post-switch step at which the log-ratio favors the new state:
// smallest T >= 1 with x[t1 + T] > 0, scanning x[t1+1] onward. Returns -1 if
// the ordering never flips within the series.
inline int measure_adaptation_time(const VecD& x_series, int t1) {
  if (t1 < 0 || t1 >= x_series.size())
    throw std::invalid_argument("measure_adaptation_time: t1 outside the series");
  for (Eigen::Index i = t1 + 1; i < x_series.size(); ++i)
    if (x_series[i] > 0.0) return static_cast<int>(i) - t1;
  return -1;
}

// Belief-history variant for the binary setting, with the switch going from
// state 0 to state 1: x_i = log w_i(1) - log w_i(0).
inline int measure_adaptation_time(const std::vector<Belief>& history, int t1) {
  if (history.empty()) throw std::invalid_argument("measure_adaptation_time: empty history");
  if (history.front().size() != 2)
    throw std::invalid_argument("measure_adaptation_time: needs a binary state space");
  VecD x(static_cast<Eigen::Index>(history.size()));
  for (std::size_t i = 0; i < history.size(); ++i)
    x[static_cast<Eigen::Index>(i)] = history[i].log_weights()[1] - history[i].log_weights()[0];
  return measure_adaptation_time(x, t1);
}

struct MonteCarloConfig {
  int n_runs = 1;
  std::uint64_t master_seed = 0;
  int threads = 0;  // 0: one per hardware thread
};

// Per-step averages over runs. Step i (1-based) is the belief after the i-th
// observation; the shared prior is not included.
struct MetricsSeries {
  VecD accuracy;          // fraction of runs learning correctly at each step
  VecD p_e;               // 1 - accuracy, exactly
  VecD mean_belief_true;  // mean posterior mass on the step's true state
  VecD mean_gap;          // mean inf-norm distance of the log-ratios from the
                          // supplied fixed point; empty when none was supplied
  double overall_accuracy = 0.0;
  std::optional<int> adaptation_time;  // lower median over runs; set only for
                                       // binary switch environments where a
                                       // majority of runs adapt
  int n_runs = 0;
  std::uint64_t master_seed = 0;
};

namespace detail {

// Fixed number of runs per aggregation block. The block structure (not the
// thread count) defines the reduction tree, which keeps floating-point
// aggregation bit-identical under any parallel schedule.
constexpr int kRunsPerBlock = 64;

struct BlockAccumulator {
  Eigen::VectorXi correct;
  VecD belief_sum;
  VecD gap_sum;

  void init(int horizon, bool want_gap) {
    correct = Eigen::VectorXi::Zero(horizon);
    belief_sum = VecD::Zero(horizon);
    gap_sum = want_gap ? VecD::Zero(horizon) : VecD();
  }
  void absorb(const BlockAccumulator& other) {
    correct += other.correct;
    belief_sum += other.belief_sum;
    if (gap_sum.size() > 0) gap_sum += other.gap_sum;
  }
};

// Pairwise reduction over the block range [lo, hi), always splitting at the
// midpoint, so the summation tree depends only on the block count.
inline BlockAccumulator reduce_blocks(std::vector<BlockAccumulator>& blocks, int lo, int hi) {
  if (hi - lo == 1) return std::move(blocks[static_cast<std::size_t>(lo)]);
  const int mid = lo + (hi - lo) / 2;
  BlockAccumulator left = reduce_blocks(blocks, lo, mid);
  left.absorb(reduce_blocks(blocks, mid, hi));
  return left;
}

}  // namespace detail

// Runs n_runs independent trajectories of the environment through the filter
// and averages the per-step metrics. Deterministic for a fixed
// (config, environment, models, filter) tuple, regardless of thread count.
// When a fixed point is supplied, the mean log-ratio gap to it is tracked.
inline MetricsSeries monte_carlo(const MonteCarloConfig& mc, const EnvironmentSpec& env,
                                 const ObservationModel& true_model,
                                 const ObservationModel& lik_model, const FilterConfig& fcfg,
                                 const std::optional<VecD>& fixed_point = std::nullopt) {
  env.validate();
  const int M = lik_model.num_states();
  validate(fcfg, M);
  if (mc.n_runs < 1) throw std::invalid_argument("monte_carlo: n_runs must be >= 1");
  const int H = env.horizon;
  const bool want_gap = fixed_point.has_value();
  if (want_gap && fixed_point->size() != M - 1)
    throw std::invalid_argument("monte_carlo: fixed point must have length M - 1");
  const bool measure_adapt = env.variant == EnvironmentSpec::Variant::switch_at && M == 2;

  const int n_blocks = (mc.n_runs + detail::kRunsPerBlock - 1) / detail::kRunsPerBlock;
  std::vector<detail::BlockAccumulator> blocks(static_cast<std::size_t>(n_blocks));
  std::vector<int> adapt(static_cast<std::size_t>(mc.n_runs), -1);

  std::atomic<int> next_block{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  const auto worker = [&]() {
    try {
      for (;;) {
        const int b = next_block.fetch_add(1);
        if (b >= n_blocks) return;
        detail::BlockAccumulator& acc = blocks[static_cast<std::size_t>(b)];
        acc.init(H, want_gap);
        const int run_lo = b * detail::kRunsPerBlock;
        const int run_hi = std::min(mc.n_runs, run_lo + detail::kRunsPerBlock);
        for (int r = run_lo; r < run_hi; ++r) {
          Rng rng(mix_seed(mc.master_seed, static_cast<std::uint64_t>(r)));
          const Trajectory traj = generate_trajectory(env, true_model, rng);
          const std::vector<Belief> history =
              run_filter(fcfg, lik_model, traj, Belief::uniform(M));
          for (int j = 0; j < H; ++j) {
            const Belief& bel = history[static_cast<std::size_t>(j) + 1];
            const int s = traj.states[j];
            if (correct_learning_indicator(bel, s)) acc.correct[j] += 1;
            acc.belief_sum[j] += std::exp(bel.log_weights()[s]);
            if (want_gap) {
              double gap;
              if (bel.log_weights()[0] == neg_inf<double>())
                gap = std::numeric_limits<double>::infinity();
              else
                gap = (belief_to_log_ratios(bel) - *fixed_point).lpNorm<Eigen::Infinity>();
              acc.gap_sum[j] += gap;
            }
          }
          if (measure_adapt) {
            VecD x(H + 1);
            for (int i = 0; i <= H; ++i) {
              const VecD& w = history[static_cast<std::size_t>(i)].log_weights();
              x[i] = w[env.state_b] - w[env.state_a];
            }
            adapt[static_cast<std::size_t>(r)] = measure_adaptation_time(x, env.t1);
          }
        }
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!first_error) first_error = std::current_exception();
      next_block.store(n_blocks);  // stop the other workers
    }
  };

  int n_threads = mc.threads > 0 ? mc.threads : static_cast<int>(std::thread::hardware_concurrency());
  n_threads = std::clamp(n_threads, 1, n_blocks);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  const detail::BlockAccumulator total = detail::reduce_blocks(blocks, 0, n_blocks);

  MetricsSeries out;
  out.n_runs = mc.n_runs;
  out.master_seed = mc.master_seed;
  out.accuracy.resize(H);
  out.p_e.resize(H);
  out.mean_belief_true.resize(H);
  if (want_gap) out.mean_gap.resize(H);
  const double denom = static_cast<double>(mc.n_runs);
  std::uint64_t correct_total = 0;
  for (int j = 0; j < H; ++j) {
    correct_total += static_cast<std::uint64_t>(total.correct[j]);
    out.accuracy[j] = static_cast<double>(total.correct[j]) / denom;
    out.p_e[j] = 1.0 - out.accuracy[j];
    out.mean_belief_true[j] = total.belief_sum[j] / denom;
    if (want_gap) out.mean_gap[j] = total.gap_sum[j] / denom;
  }
  out.overall_accuracy = static_cast<double>(correct_total) /
                         (denom * static_cast<double>(H));

  if (measure_adapt) {
    // Lower median with "never adapted" sorted last; the summary stays unset
    // when the median run never adapts.
    std::vector<int> sorted(adapt);
    for (int& v : sorted)
      if (v < 0) v = std::numeric_limits<int>::max();
    std::nth_element(sorted.begin(), sorted.begin() + (sorted.size() - 1) / 2, sorted.end());
    const int median = sorted[(sorted.size() - 1) / 2];
    if (median != std::numeric_limits<int>::max()) out.adaptation_time = median;
  }
  return out;
}

}  // namespace abhmm
