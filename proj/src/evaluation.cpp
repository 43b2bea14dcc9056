#include "hatr/evaluation.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace hatr {

namespace {

constexpr double kSolveTol = 1e-10;

void check_compatible(const CooperativeMarkovGame& game,
                      std::span<const Eigen::MatrixXd> tables) {
  if (static_cast<int>(tables.size()) != game.num_agents) {
    throw std::invalid_argument("policy has wrong number of agent tables");
  }
  for (int i = 0; i < game.num_agents; ++i) {
    if (tables[i].rows() != game.num_states || tables[i].cols() != game.action_counts[i]) {
      throw std::invalid_argument("policy table shape mismatch for agent " + std::to_string(i));
    }
  }
}

struct InducedChain {
  Eigen::MatrixXd state_transition;  // P_pi, num_states x num_states
  Eigen::VectorXd reward;            // r_pi
};

InducedChain induced_chain(const CooperativeMarkovGame& game, const Eigen::MatrixXd& joint_probs) {
  InducedChain chain;
  chain.state_transition = Eigen::MatrixXd::Zero(game.num_states, game.num_states);
  chain.reward = Eigen::VectorXd::Zero(game.num_states);
  const long joint_count = game.num_joint_actions();
  for (int s = 0; s < game.num_states; ++s) {
    for (long a = 0; a < joint_count; ++a) {
      const double p = joint_probs(s, a);
      if (p == 0.0) continue;
      chain.state_transition.row(s) += p * game.transition.row(game.transition_row(s, a));
      chain.reward[s] += p * game.reward(s, a);
    }
  }
  return chain;
}

}  // namespace

Eigen::MatrixXd joint_action_probabilities(const CooperativeMarkovGame& game,
                                           std::span<const Eigen::MatrixXd> tables) {
  check_compatible(game, tables);
  const long joint_count = game.num_joint_actions();
  Eigen::MatrixXd probs = Eigen::MatrixXd::Ones(game.num_states, joint_count);
  for (int i = 0; i < game.num_agents; ++i) {
    for (long a = 0; a < joint_count; ++a) {
      const int ai = game.actions.action_of(a, i);
      for (int s = 0; s < game.num_states; ++s) probs(s, a) *= tables[i](s, ai);
    }
  }
  return probs;
}

Eigen::VectorXd exact_state_values(const CooperativeMarkovGame& game,
                                   std::span<const Eigen::MatrixXd> tables) {
  const Eigen::MatrixXd probs = joint_action_probabilities(game, tables);
  const InducedChain chain = induced_chain(game, probs);
  const Eigen::MatrixXd system =
      Eigen::MatrixXd::Identity(game.num_states, game.num_states) -
      game.discount * chain.state_transition;
  Eigen::VectorXd values = Eigen::PartialPivLU<Eigen::MatrixXd>(system).solve(chain.reward);
  const double residual =
      (values - (chain.reward + game.discount * chain.state_transition * values))
          .lpNorm<Eigen::Infinity>();
  if (!values.allFinite() || residual > kSolveTol) {
    throw std::runtime_error("state-value solve failed to reach tolerance");
  }
  return values;
}

Eigen::MatrixXd exact_action_values(const CooperativeMarkovGame& game,
                                    std::span<const Eigen::MatrixXd> tables) {
  const Eigen::VectorXd values = exact_state_values(game, tables);
  const long joint_count = game.num_joint_actions();
  Eigen::MatrixXd q(game.num_states, joint_count);
  for (int s = 0; s < game.num_states; ++s) {
    for (long a = 0; a < joint_count; ++a) {
      q(s, a) = game.reward(s, a) +
                game.discount * game.transition.row(game.transition_row(s, a)).dot(values);
    }
  }
  return q;
}

Eigen::VectorXd discounted_state_distribution(const CooperativeMarkovGame& game,
                                              std::span<const Eigen::MatrixXd> tables) {
  const Eigen::MatrixXd probs = joint_action_probabilities(game, tables);
  const InducedChain chain = induced_chain(game, probs);
  const Eigen::MatrixXd system =
      Eigen::MatrixXd::Identity(game.num_states, game.num_states) -
      game.discount * chain.state_transition.transpose();
  Eigen::VectorXd occupancy =
      Eigen::PartialPivLU<Eigen::MatrixXd>(system).solve(game.initial_dist);
  const double mass_error = std::abs(occupancy.sum() - 1.0 / (1.0 - game.discount));
  if (!occupancy.allFinite() || mass_error > kSolveTol / (1.0 - game.discount)) {
    throw std::runtime_error("occupancy solve failed to reach tolerance");
  }
  // Tiny negative entries can appear from elimination; clamp them.
  occupancy = occupancy.cwiseMax(0.0);
  return occupancy;
}

double expected_return(const CooperativeMarkovGame& game,
                       std::span<const Eigen::MatrixXd> tables) {
  return game.initial_dist.dot(exact_state_values(game, tables));
}

ExactEvaluation evaluate_exactly(const CooperativeMarkovGame& game,
                                 std::span<const Eigen::MatrixXd> tables) {
  ExactEvaluation eval;
  eval.values = exact_state_values(game, tables);
  const long joint_count = game.num_joint_actions();
  eval.action_values.resize(game.num_states, joint_count);
  for (int s = 0; s < game.num_states; ++s) {
    for (long a = 0; a < joint_count; ++a) {
      eval.action_values(s, a) =
          game.reward(s, a) +
          game.discount * game.transition.row(game.transition_row(s, a)).dot(eval.values);
    }
  }
  eval.advantages = eval.action_values.colwise() - eval.values;
  eval.state_occupancy = discounted_state_distribution(game, tables);
  eval.expected_return = game.initial_dist.dot(eval.values);
  eval.max_abs_advantage = eval.advantages.cwiseAbs().maxCoeff();
  return eval;
}

double multi_agent_q(const CooperativeMarkovGame& game, std::span<const Eigen::MatrixXd> tables,
                     const ExactEvaluation& eval, const AgentSubset& subset,
                     std::span<const int> subset_actions, int state) {
  check_compatible(game, tables);
  if (state < 0 || state >= game.num_states) throw std::invalid_argument("state out of range");
  if (subset.num_agents() != game.num_agents) {
    throw std::invalid_argument("subset was built for a different agent count");
  }
  if (static_cast<int>(subset_actions.size()) != subset.size()) {
    throw std::invalid_argument("subset_actions size must match the subset");
  }
  std::vector<int> joint(game.num_agents, 0);
  for (int k = 0; k < subset.size(); ++k) {
    const int agent = subset.id(k);
    if (subset_actions[k] < 0 || subset_actions[k] >= game.action_counts[agent]) {
      throw std::invalid_argument("subset action out of range");
    }
    joint[agent] = subset_actions[k];
  }
  const std::vector<int> rest = subset.complement();
  // Odometer over the complement agents' actions.
  double total = 0.0;
  std::vector<int> counter(rest.size(), 0);
  while (true) {
    double weight = 1.0;
    for (std::size_t r = 0; r < rest.size(); ++r) {
      joint[rest[r]] = counter[r];
      weight *= tables[rest[r]](state, counter[r]);
    }
    total += weight * eval.action_values(state, game.actions.encode(joint));
    std::size_t digit = rest.size();
    while (digit > 0) {
      --digit;
      if (++counter[digit] < game.action_counts[rest[digit]]) break;
      counter[digit] = 0;
      if (digit == 0) return total;
    }
    if (rest.empty()) return total;
  }
}

double multi_agent_advantage(const CooperativeMarkovGame& game,
                             std::span<const Eigen::MatrixXd> tables,
                             const ExactEvaluation& eval, const AgentSubset& subset_j,
                             std::span<const int> actions_j, const AgentSubset& subset_i,
                             std::span<const int> actions_i, int state) {
  for (int id : subset_i.ids()) {
    if (subset_j.contains(id)) {
      throw std::invalid_argument("multi_agent_advantage: subsets must be disjoint");
    }
  }
  const AgentSubset combined = subset_j.joined(subset_i);
  std::vector<int> combined_actions(actions_j.begin(), actions_j.end());
  combined_actions.insert(combined_actions.end(), actions_i.begin(), actions_i.end());
  const double q_combined = multi_agent_q(game, tables, eval, combined, combined_actions, state);
  const double q_condition = multi_agent_q(game, tables, eval, subset_j, actions_j, state);
  return q_combined - q_condition;
}

// Convenience overloads: validate and evaluate on demand.

Eigen::VectorXd exact_state_values(const CooperativeMarkovGame& game,
                                   const JointTabularPolicy& policy) {
  return exact_state_values(game, policy.tables());
}

Eigen::MatrixXd exact_action_values(const CooperativeMarkovGame& game,
                                    const JointTabularPolicy& policy) {
  return exact_action_values(game, policy.tables());
}

Eigen::VectorXd discounted_state_distribution(const CooperativeMarkovGame& game,
                                              const JointTabularPolicy& policy) {
  return discounted_state_distribution(game, policy.tables());
}

double expected_return(const CooperativeMarkovGame& game, const JointTabularPolicy& policy) {
  return expected_return(game, policy.tables());
}

ExactEvaluation evaluate_exactly(const CooperativeMarkovGame& game,
                                 const JointTabularPolicy& policy) {
  return evaluate_exactly(game, policy.tables());
}

double multi_agent_q(const CooperativeMarkovGame& game, const JointTabularPolicy& policy,
                     const AgentSubset& subset, std::span<const int> subset_actions, int state) {
  const ExactEvaluation eval = evaluate_exactly(game, policy.tables());
  return multi_agent_q(game, policy.tables(), eval, subset, subset_actions, state);
}

double multi_agent_advantage(const CooperativeMarkovGame& game, const JointTabularPolicy& policy,
                             const AgentSubset& subset_j, std::span<const int> actions_j,
                             const AgentSubset& subset_i, std::span<const int> actions_i,
                             int state) {
  const ExactEvaluation eval = evaluate_exactly(game, policy.tables());
  return multi_agent_advantage(game, policy.tables(), eval, subset_j, actions_j, subset_i,
                               actions_i, state);
}

}  // namespace hatr
