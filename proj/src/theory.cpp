#include "hatr/theory.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "hatr/exact_iteration.hpp"

namespace hatr {

namespace {

/** Iterates all joint assignments for the given agents; f(actions) per combo. */
template <typename Fn>
void for_each_assignment(const CooperativeMarkovGame& game, std::span<const int> agents, Fn&& f) {
  std::vector<int> actions(agents.size(), 0);
  while (true) {
    f(std::span<const int>(actions));
    std::size_t digit = agents.size();
    bool done = agents.empty();
    while (digit > 0) {
      --digit;
      if (++actions[digit] < game.action_counts[agents[digit]]) break;
      actions[digit] = 0;
      if (digit == 0) done = true;
    }
    if (done) break;
  }
}

double penalty_constant(const CooperativeMarkovGame& game, double epsilon) {
  return 4.0 * game.discount * epsilon / ((1.0 - game.discount) * (1.0 - game.discount));
}

}  // namespace

double check_advantage_decomposition(const CooperativeMarkovGame& game,
                                     const JointTabularPolicy& policy,
                                     const ExactEvaluation& eval, const AgentSubset& subset,
                                     std::span<const int> subset_actions, int state) {
  const AgentSubset empty({}, game.num_agents);
  const double lhs = multi_agent_advantage(game, policy.tables(), eval, empty, {}, subset,
                                           subset_actions, state);
  double rhs = 0.0;
  for (int j = 0; j < subset.size(); ++j) {
    const AgentSubset prefix(std::vector<int>(subset.ids().begin(), subset.ids().begin() + j),
                             game.num_agents);
    const AgentSubset own({subset.id(j)}, game.num_agents);
    const int own_action[1] = {subset_actions[j]};
    rhs += multi_agent_advantage(game, policy.tables(), eval, prefix,
                                 subset_actions.subspan(0, j), own, own_action, state);
  }
  return std::abs(lhs - rhs);
}

double check_advantage_decomposition(const CooperativeMarkovGame& game,
                                     const JointTabularPolicy& policy, const AgentSubset& subset,
                                     std::span<const int> subset_actions, int state) {
  return check_advantage_decomposition(game, policy, evaluate_exactly(game, policy), subset,
                                       subset_actions, state);
}

double check_surrogate_lower_bound(const CooperativeMarkovGame& game,
                                   const JointTabularPolicy& policy,
                                   const JointTabularPolicy& candidate,
                                   std::span<const int> permutation) {
  if (static_cast<int>(permutation.size()) != game.num_agents) {
    throw std::invalid_argument("permutation must order all agents");
  }
  const ExactEvaluation eval = evaluate_exactly(game, policy);
  const double penalty = penalty_constant(game, eval.max_abs_advantage);

  double bound = expected_return(game, policy);
  std::vector<int> prefix_ids;
  std::vector<Eigen::MatrixXd> prefix_tables;
  for (int agent : permutation) {
    const AgentSubset prefix(prefix_ids, game.num_agents);
    const double gain = surrogate_value(game, policy, eval, prefix, prefix_tables, agent,
                                        candidate.table(agent));
    bound += gain - penalty * max_kl(policy.table(agent), candidate.table(agent));
    prefix_ids.push_back(agent);
    prefix_tables.push_back(candidate.table(agent));
  }
  return expected_return(game, candidate) - bound;
}

std::pair<double, double> check_kl_sum_inequality(const JointTabularPolicy& policy,
                                                  const JointTabularPolicy& candidate) {
  if (policy.num_agents() != candidate.num_agents() ||
      policy.num_states() != candidate.num_states()) {
    throw std::invalid_argument("policies must share agents and states");
  }
  const int n = policy.num_agents();
  const int states = policy.num_states();

  double lhs = 0.0;
  std::vector<int> actions(n, 0);
  for (int s = 0; s < states; ++s) {
    double joint_kl = 0.0;
    std::fill(actions.begin(), actions.end(), 0);
    while (true) {
      double p = 1.0;
      double q = 1.0;
      for (int i = 0; i < n; ++i) {
        p *= policy.table(i)(s, actions[i]);
        q *= candidate.table(i)(s, actions[i]);
      }
      joint_kl += p * std::log(p / q);
      int digit = n;
      bool done = false;
      while (digit > 0) {
        --digit;
        if (++actions[digit] < policy.table(digit).cols()) break;
        actions[digit] = 0;
        if (digit == 0) done = true;
      }
      if (done) break;
    }
    lhs = std::max(lhs, joint_kl);
  }

  double rhs = 0.0;
  for (int i = 0; i < n; ++i) rhs += max_kl(policy.table(i), candidate.table(i));
  return {lhs, rhs};
}

double check_estimator_identity(const CooperativeMarkovGame& game,
                                const JointTabularPolicy& policy, const AgentSubset& prefix,
                                std::span<const Eigen::MatrixXd> prefix_tables, int agent,
                                const Eigen::MatrixXd& hat_table, int state) {
  if (prefix.contains(agent)) {
    throw std::invalid_argument("prefix and target agent must be disjoint");
  }
  if (static_cast<int>(prefix_tables.size()) != prefix.size()) {
    throw std::invalid_argument("one table per prefix agent is required");
  }
  const ExactEvaluation eval = evaluate_exactly(game, policy);
  const AgentSubset own({agent}, game.num_agents);

  // Left side: direct expectation over (prefix ~ bar, own ~ hat).
  double lhs = 0.0;
  for_each_assignment(game, prefix.ids(), [&](std::span<const int> prefix_actions) {
    double weight = 1.0;
    for (int k = 0; k < prefix.size(); ++k) weight *= prefix_tables[k](state, prefix_actions[k]);
    if (weight == 0.0) return;
    for (int a = 0; a < game.action_counts[agent]; ++a) {
      const int own_action[1] = {a};
      lhs += weight * hat_table(state, a) *
             multi_agent_advantage(game, policy.tables(), eval, prefix, prefix_actions, own,
                                   own_action, state);
    }
  });

  // Right side: importance-weighted expectation over the base joint policy.
  std::vector<int> all(game.num_agents);
  for (int i = 0; i < game.num_agents; ++i) all[i] = i;
  double rhs = 0.0;
  for_each_assignment(game, all, [&](std::span<const int> joint) {
    const double base_prob = policy.joint_prob(state, joint);
    if (base_prob == 0.0) return;
    const double own_ratio =
        hat_table(state, joint[agent]) / policy.table(agent)(state, joint[agent]);
    double prefix_ratio = 1.0;
    for (int k = 0; k < prefix.size(); ++k) {
      const int id = prefix.id(k);
      prefix_ratio *= prefix_tables[k](state, joint[id]) / policy.table(id)(state, joint[id]);
    }
    rhs += base_prob * (own_ratio - 1.0) * prefix_ratio *
           eval.advantages(state, game.actions.encode(joint));
  });

  return std::abs(lhs - rhs);
}

namespace {

/** Exact best response value for one-state games: scan eta-soft vertices. */
double one_shot_best_response_value(const CooperativeMarkovGame& game,
                                    const JointTabularPolicy& policy, int agent) {
  double best = -std::numeric_limits<double>::infinity();
  const int count = game.action_counts[agent];
  for (int a = 0; a < count; ++a) {
    Eigen::MatrixXd table = Eigen::MatrixXd::Constant(1, count, policy.eta());
    table(0, a) = 1.0 - (count - 1) * policy.eta();
    std::vector<Eigen::MatrixXd> tables(policy.tables().begin(), policy.tables().end());
    tables[agent] = table;
    best = std::max(best, expected_return(game, tables));
  }
  return best;
}

/**
 * Projected policy-gradient ascent on J(pi_i, pi_-i) for multi-state games.
 * The gradient of the return in the agent's table entries is
 * rho(s) * Q^i(s, a), both re-evaluated at the current point.
 */
double ascended_best_response_value(const CooperativeMarkovGame& game,
                                    const JointTabularPolicy& policy, int agent) {
  constexpr int kMaxSteps = 10000;
  constexpr double kStep = 0.1;
  constexpr double kTol = 1e-8;
  const AgentSubset own({agent}, game.num_agents);
  std::vector<Eigen::MatrixXd> tables(policy.tables().begin(), policy.tables().end());
  double best = expected_return(game, tables);
  for (int step = 0; step < kMaxSteps; ++step) {
    const ExactEvaluation eval = evaluate_exactly(game, tables);
    best = std::max(best, eval.expected_return);
    Eigen::MatrixXd grad(game.num_states, game.action_counts[agent]);
    for (int s = 0; s < game.num_states; ++s) {
      for (int a = 0; a < game.action_counts[agent]; ++a) {
        const int own_action[1] = {a};
        grad(s, a) = eval.state_occupancy[s] *
                     multi_agent_q(game, tables, eval, own, own_action, s);
      }
    }
    Eigen::MatrixXd next = tables[agent] + kStep * grad;
    for (int s = 0; s < game.num_states; ++s) {
      Eigen::VectorXd row = next.row(s);
      project_to_eta_simplex(row, policy.eta());
      next.row(s) = row;
    }
    const double movement = (next - tables[agent]).cwiseAbs().maxCoeff();
    tables[agent] = std::move(next);
    if (movement < kTol) break;
  }
  best = std::max(best, expected_return(game, tables));
  return best;
}

/** Exact one-state maximum of c'x - C*KL(p, x) via the shared KKT dual solver. */
double one_shot_penalized_max(const Eigen::VectorXd& coeff, const Eigen::VectorXd& anchor,
                              double penalty_c, double eta) {
  const Eigen::VectorXd x = penalized_row_argmax(coeff, anchor, penalty_c, eta);
  double kl = 0.0;
  for (long a = 0; a < coeff.size(); ++a) kl += anchor[a] * std::log(anchor[a] / x[a]);
  return std::max(coeff.dot(x) - penalty_c * std::max(kl, 0.0), 0.0);
}

/** Subgradient ascent lower bound on the TR gap for multi-state games. */
double ascended_penalized_max(const CooperativeMarkovGame& game, const Eigen::MatrixXd& coeff,
                              const Eigen::MatrixXd& anchor, double penalty_c, double eta) {
  constexpr int kSteps = 4000;
  constexpr double kStep = 0.05;
  Eigen::MatrixXd current = anchor;
  double best = 0.0;
  for (int step = 0; step < kSteps; ++step) {
    Eigen::MatrixXd grad = coeff;
    int active = 0;
    double active_kl = -1.0;
    for (int s = 0; s < game.num_states; ++s) {
      double kl = 0.0;
      for (long a = 0; a < anchor.cols(); ++a) {
        kl += anchor(s, a) * std::log(anchor(s, a) / current(s, a));
      }
      if (kl > active_kl) {
        active_kl = kl;
        active = s;
      }
    }
    if (active_kl > 0.0) {
      grad.row(active).array() += penalty_c * anchor.row(active).array() /
                                  current.row(active).array();
    }
    current += kStep * grad;
    for (int s = 0; s < game.num_states; ++s) {
      Eigen::VectorXd row = current.row(s);
      project_to_eta_simplex(row, eta);
      current.row(s) = row;
    }
    const double objective =
        (coeff.array() * current.array()).sum() - penalty_c * max_kl(anchor, current);
    best = std::max(best, objective);
  }
  return best;
}

}  // namespace

Eigen::VectorXd best_response_gap(const CooperativeMarkovGame& game,
                                  const JointTabularPolicy& policy) {
  const double baseline = expected_return(game, policy);
  Eigen::VectorXd gaps(game.num_agents);
  for (int i = 0; i < game.num_agents; ++i) {
    const double best = game.num_states == 1 ? one_shot_best_response_value(game, policy, i)
                                             : ascended_best_response_value(game, policy, i);
    gaps[i] = best - baseline;
  }
  return gaps;
}

Eigen::VectorXd tr_stationarity_gap(const CooperativeMarkovGame& game,
                                    const JointTabularPolicy& policy) {
  const ExactEvaluation eval = evaluate_exactly(game, policy);
  const double penalty = penalty_constant(game, eval.max_abs_advantage);
  Eigen::VectorXd gaps(game.num_agents);
  const AgentSubset empty({}, game.num_agents);
  for (int i = 0; i < game.num_agents; ++i) {
    const AgentSubset own({i}, game.num_agents);
    Eigen::MatrixXd coeff(game.num_states, game.action_counts[i]);
    for (int s = 0; s < game.num_states; ++s) {
      for (int a = 0; a < game.action_counts[i]; ++a) {
        const int own_action[1] = {a};
        coeff(s, a) = eval.state_occupancy[s] *
                      multi_agent_advantage(game, policy.tables(), eval, empty, {}, own,
                                            own_action, s);
      }
    }
    if (game.num_states == 1) {
      gaps[i] = one_shot_penalized_max(coeff.row(0), policy.table(i).row(0), penalty,
                                       policy.eta());
    } else {
      gaps[i] = ascended_penalized_max(game, coeff, policy.table(i), penalty, policy.eta());
    }
  }
  return gaps;
}

SharedPolicyGap shared_policy_gap(int n) {
  if (n < 2 || n % 2 != 0) {
    throw std::invalid_argument("shared_policy_gap requires an even n >= 2");
  }
  SharedPolicyGap result;
  result.optimal = 1.0;
  result.shared_optimal = std::ldexp(1.0, 1 - n);  // 2 / 2^n
  result.ratio = result.shared_optimal / result.optimal;

  // Cross-check by grid search: expected coordination reward under the shared
  // policy (theta, 1-theta), evaluated by direct enumeration of the two
  // rewarded joint actions.
  const int half = n / 2;
  double best = 0.0;
  for (int k = 0; k <= 10000; ++k) {
    const double theta = k * 1e-4;
    const double value = std::pow(theta, half) * std::pow(1.0 - theta, half) * 2.0;
    best = std::max(best, value);
  }
  result.grid_optimal = best;
  return result;
}

}  // namespace hatr
