#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "hatr/game.hpp"

namespace hatr {

/**
 * Seeded on-policy rollouts: num_episodes x horizon steps of state, joint
 * action, shared reward and per-agent behavior log-probabilities, plus the
 * state reached after the last step of each episode (for truncated
 * bootstrapping). Flat arrays are indexed episode-major.
 */
struct TrajectoryBatch {
  int num_episodes = 0;
  int horizon = 0;
  int num_agents = 0;

  std::vector<int> states;            // num_episodes * horizon
  std::vector<int> actions;           // num_episodes * horizon * num_agents
  std::vector<double> rewards;        // num_episodes * horizon
  std::vector<double> behavior_logp;  // num_episodes * horizon * num_agents
  std::vector<std::uint8_t> done;     // truncation flag, set on the last step
  std::vector<int> final_states;      // num_episodes

  int size() const { return num_episodes * horizon; }
  int flat(int episode, int t) const { return episode * horizon + t; }
  int state(int episode, int t) const { return states[flat(episode, t)]; }
  double reward(int episode, int t) const { return rewards[flat(episode, t)]; }
  int action(int episode, int t, int agent) const {
    return actions[(flat(episode, t)) * num_agents + agent];
  }
  double logp(int episode, int t, int agent) const {
    return behavior_logp[(flat(episode, t)) * num_agents + agent];
  }
};

/**
 * Collects episodes by simulating the game under the product of the given
 * per-agent action tables. Each episode draws from its own RNG stream derived
 * from (seed, episode index), so the batch is bit-reproducible and
 * independent of collection order.
 */
TrajectoryBatch collect_rollouts(const CooperativeMarkovGame& game,
                                 std::span<const Eigen::MatrixXd> policy_tables,
                                 int num_episodes, int horizon, std::uint64_t seed);

/** Tabular critic: one value per state. */
struct ValueTable {
  Eigen::VectorXd values;
  explicit ValueTable(int num_states) : values(Eigen::VectorXd::Zero(num_states)) {}
};

/**
 * Per-sample GAE advantages, empirical return-to-go targets and the M-factor
 * that carries predecessors' ratio products through a sequential update pass.
 */
struct AdvantageBuffer {
  std::vector<double> advantages;  // GAE
  std::vector<double> returns;     // discounted within-episode return-to-go
  std::vector<double> m_factor;
  std::vector<int> permutation;  // expected update order (set by init_m_factor)
  int cursor = -1;               // agents applied so far; -1 before init

  /** Agent whose update slot is next; requires an initialized M-factor. */
  int current_agent() const;
  bool initialized() const { return cursor >= 0; }
};

/**
 * Backward-recursion GAE over each episode, truncated at the episode end with
 * a bootstrap from value(final_state). lambda in [0, 1].
 */
AdvantageBuffer compute_gae(const TrajectoryBatch& batch, const ValueTable& critic, double gamma,
                            double lambda);

/**
 * Least-squares refit of the tabular critic: the value of every visited state
 * becomes the mean return target over its visits; unvisited states keep their
 * previous value.
 */
ValueTable fit_value_table(const TrajectoryBatch& batch, std::span<const double> returns,
                           ValueTable previous);

/** Starts a sequential pass: M = advantages, cursor at the first slot. */
void init_m_factor(AdvantageBuffer& buffer, std::vector<int> permutation);

/**
 * Rescales M by agent's per-sample ratio new/old. Must be called once per
 * agent in permutation order; anything else is a state error (std::logic_error).
 */
void update_m_factor(AdvantageBuffer& buffer, const TrajectoryBatch& batch, int agent,
                     const Eigen::MatrixXd& old_table, const Eigen::MatrixXd& new_table);

/** Normalized state-visit frequencies of a batch (sums to 1). */
Eigen::VectorXd state_visit_weights(const TrajectoryBatch& batch, int num_states);

/** Mean over episodes of the discounted empirical return. */
double mean_episode_return(const TrajectoryBatch& batch, double gamma);

/** In-place zero-mean unit-variance rescaling (optional, off by default). */
void normalize_advantages(std::vector<double>& advantages);

/**
 * Batch dump with one row per sample:
 * episode, t, state, a0..a{n-1}, reward, logp0..logp{n-1}, adv, ret, m.
 */
void write_batch_csv(std::ostream& out, const TrajectoryBatch& batch,
                     const AdvantageBuffer& buffer);

}  // namespace hatr
