#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "hatr/rng.hpp"

namespace hatr {

/**
 * Mixed-radix codec for joint actions.
 *
 * Agent 0 is the most significant digit, so the joint index of
 * (a0, a1, ..., an-1) with counts (c0, ..., cn-1) is
 * a0*c1*...*cn-1 + a1*c2*...*cn-1 + ... + an-1. This single flattening is
 * shared by the transition and reward tensors, serialization and rollouts.
 */
class JointActionIndexer {
 public:
  JointActionIndexer() = default;
  explicit JointActionIndexer(std::vector<int> action_counts);

  int num_agents() const { return static_cast<int>(counts_.size()); }
  long num_joint_actions() const { return total_; }
  int action_count(int agent) const { return counts_[agent]; }
  const std::vector<int>& action_counts() const { return counts_; }

  long encode(std::span<const int> actions) const;
  void decode(long joint, std::span<int> actions) const;
  /** Extracts one agent's action from a joint index. */
  int action_of(long joint, int agent) const {
    return static_cast<int>((joint / strides_[agent]) % counts_[agent]);
  }

 private:
  std::vector<int> counts_;
  std::vector<long> strides_;
  long total_ = 1;
};

/**
 * Finite shared-reward Markov game.
 *
 * transition rows are indexed by state*num_joint_actions + joint_action and
 * hold the distribution over next states; reward is (state x joint_action).
 * The constructor validates stochasticity of every transition row and of the
 * initial distribution to 1e-12, 0 <= discount < 1, and the desk-scale cap
 * num_states * num_joint_actions <= 1e6.
 */
struct CooperativeMarkovGame {
  CooperativeMarkovGame(int num_agents, int num_states, std::vector<int> action_counts,
                        Eigen::MatrixXd transition, Eigen::MatrixXd reward, double discount,
                        Eigen::VectorXd initial_dist);

  int num_agents = 0;
  int num_states = 0;
  std::vector<int> action_counts;
  Eigen::MatrixXd transition;  // (num_states * num_joint_actions) x num_states
  Eigen::MatrixXd reward;      // num_states x num_joint_actions
  double discount = 0.0;
  Eigen::VectorXd initial_dist;
  JointActionIndexer actions;

  long num_joint_actions() const { return actions.num_joint_actions(); }
  long transition_row(int state, long joint_action) const {
    return static_cast<long>(state) * actions.num_joint_actions() + joint_action;
  }
};

/**
 * Product policy over eta-soft per-agent tables.
 *
 * Table i has shape (num_states x action_count(i)); every row sums to 1
 * within 1e-12 and every entry is >= eta_floor.
 */
class JointTabularPolicy {
 public:
  JointTabularPolicy(std::vector<Eigen::MatrixXd> per_agent_tables, double eta_floor);

  int num_agents() const { return static_cast<int>(tables_.size()); }
  int num_states() const { return static_cast<int>(tables_.front().rows()); }
  double eta() const { return eta_; }
  const Eigen::MatrixXd& table(int agent) const { return tables_[agent]; }
  std::span<const Eigen::MatrixXd> tables() const { return tables_; }

  /** Probability of a joint action (product over agents). */
  double joint_prob(int state, std::span<const int> actions) const;

  /** Copy with one agent's table replaced (revalidated). */
  JointTabularPolicy with_table(int agent, Eigen::MatrixXd table) const;

  static JointTabularPolicy uniform(const CooperativeMarkovGame& game, double eta);
  /** Eta-soft vertex: mass 1-(|A|-1)*eta on the given action per agent. */
  static JointTabularPolicy vertex(const CooperativeMarkovGame& game,
                                   std::span<const int> joint_action, double eta);
  static JointTabularPolicy random(const CooperativeMarkovGame& game, double eta, Rng& rng);

 private:
  std::vector<Eigen::MatrixXd> tables_;
  double eta_ = 0.0;
};

/** Ordered subset i_{1:m} of agents; complement derived on demand. */
class AgentSubset {
 public:
  AgentSubset() = default;
  AgentSubset(std::vector<int> ordered_ids, int num_agents);

  int size() const { return static_cast<int>(ids_.size()); }
  bool empty() const { return ids_.empty(); }
  int num_agents() const { return num_agents_; }
  const std::vector<int>& ids() const { return ids_; }
  int id(int position) const { return ids_[position]; }
  bool contains(int agent) const { return member_[agent]; }
  /** Agents not in the subset, ascending. */
  std::vector<int> complement() const;
  /** Ordered union of this subset and another (must be disjoint). */
  AgentSubset joined(const AgentSubset& tail) const;

 private:
  std::vector<int> ids_;
  std::vector<char> member_;
  int num_agents_ = 0;
};

/**
 * Euclidean projection of a row onto the eta-floored simplex
 * {x : x_i >= eta, sum x = 1}. Requires dim*eta < 1.
 */
void project_to_eta_simplex(Eigen::Ref<Eigen::VectorXd> row, double eta);

/** Default policy-space floor; small enough not to bias desk-scale optima. */
inline constexpr double kDefaultEta = 1e-6;

}  // namespace hatr
