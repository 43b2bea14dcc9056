#pragma once

#include <Eigen/Dense>
#include <span>

#include "hatr/game.hpp"

namespace hatr {

/**
 * Everything the exact solver knows about one (game, policy) pair.
 *
 * values / action_values / advantages are the fixed-point V, Q and A = Q - V;
 * state_occupancy is the improper discounted distribution rho (sums to
 * 1/(1-discount), deliberately not normalized); expected_return is
 * initial_dist' * V.
 */
struct ExactEvaluation {
  Eigen::VectorXd values;
  Eigen::MatrixXd action_values;
  Eigen::MatrixXd advantages;
  Eigen::VectorXd state_occupancy;
  double expected_return = 0.0;
  double max_abs_advantage = 0.0;
};

/** Per-state joint action probabilities (num_states x num_joint_actions). */
Eigen::MatrixXd joint_action_probabilities(const CooperativeMarkovGame& game,
                                           std::span<const Eigen::MatrixXd> tables);

/**
 * Solves V = r_pi + discount * P_pi * V by dense LU.
 * Throws std::invalid_argument on a policy/game dimension mismatch and
 * std::runtime_error if the solve residual exceeds 1e-10.
 */
Eigen::VectorXd exact_state_values(const CooperativeMarkovGame& game,
                                   std::span<const Eigen::MatrixXd> tables);
Eigen::VectorXd exact_state_values(const CooperativeMarkovGame& game,
                                   const JointTabularPolicy& policy);

/** Q(s,a) = r(s,a) + discount * sum_s' P(s'|s,a) V(s'). */
Eigen::MatrixXd exact_action_values(const CooperativeMarkovGame& game,
                                    std::span<const Eigen::MatrixXd> tables);
Eigen::MatrixXd exact_action_values(const CooperativeMarkovGame& game,
                                    const JointTabularPolicy& policy);

/** Improper discounted state distribution rho' = rho0' (I - discount P_pi)^-1. */
Eigen::VectorXd discounted_state_distribution(const CooperativeMarkovGame& game,
                                              std::span<const Eigen::MatrixXd> tables);
Eigen::VectorXd discounted_state_distribution(const CooperativeMarkovGame& game,
                                              const JointTabularPolicy& policy);

double expected_return(const CooperativeMarkovGame& game,
                       std::span<const Eigen::MatrixXd> tables);
double expected_return(const CooperativeMarkovGame& game, const JointTabularPolicy& policy);

ExactEvaluation evaluate_exactly(const CooperativeMarkovGame& game,
                                 std::span<const Eigen::MatrixXd> tables);
ExactEvaluation evaluate_exactly(const CooperativeMarkovGame& game,
                                 const JointTabularPolicy& policy);

/**
 * Multi-agent state-action value Q^{i_{1:m}}(s, a^{i_{1:m}}): expectation of
 * the joint Q over the complement agents' product policy. The empty subset
 * yields V(s); the full subset yields the joint Q entry.
 */
double multi_agent_q(const CooperativeMarkovGame& game, std::span<const Eigen::MatrixXd> tables,
                     const ExactEvaluation& eval, const AgentSubset& subset,
                     std::span<const int> subset_actions, int state);
double multi_agent_q(const CooperativeMarkovGame& game, const JointTabularPolicy& policy,
                     const AgentSubset& subset, std::span<const int> subset_actions, int state);

/**
 * Multi-agent advantage A^{i_{1:m}}(s, a^{j_{1:k}}, a^{i_{1:m}})
 *   = Q^{j,i}(s, a^j, a^i) - Q^{j}(s, a^j), for disjoint subsets.
 */
double multi_agent_advantage(const CooperativeMarkovGame& game,
                             std::span<const Eigen::MatrixXd> tables,
                             const ExactEvaluation& eval, const AgentSubset& subset_j,
                             std::span<const int> actions_j, const AgentSubset& subset_i,
                             std::span<const int> actions_i, int state);
double multi_agent_advantage(const CooperativeMarkovGame& game, const JointTabularPolicy& policy,
                             const AgentSubset& subset_j, std::span<const int> actions_j,
                             const AgentSubset& subset_i, std::span<const int> actions_i,
                             int state);

}  // namespace hatr
