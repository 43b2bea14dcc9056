#include "hatr/hatrpo.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "hatr/evaluation.hpp"
#include "hatr/rng.hpp"

namespace hatr {

namespace {

constexpr std::uint64_t kRolloutStream = 0x726f6c6c;
constexpr std::uint64_t kPermutationStream = 0x7065726d;

void require_current_slot(const AdvantageBuffer& buffer, int agent) {
  if (buffer.current_agent() != agent) {
    throw std::logic_error("M-factor is stale for this agent's permutation slot");
  }
}

}  // namespace

Eigen::VectorXd surrogate_gradient(const TrajectoryBatch& batch, const AdvantageBuffer& buffer,
                                   int agent, const SoftmaxPolicy& policy) {
  require_current_slot(buffer, agent);
  const int actions = policy.num_actions();
  Eigen::MatrixXd weighted = Eigen::MatrixXd::Zero(policy.num_states(), actions);
  Eigen::VectorXd row_mass = Eigen::VectorXd::Zero(policy.num_states());
  for (int index = 0; index < batch.size(); ++index) {
    const int state = batch.states[index];
    const int action = batch.actions[static_cast<std::size_t>(index) * batch.num_agents + agent];
    weighted(state, action) += buffer.m_factor[index];
    row_mass[state] += buffer.m_factor[index];
  }
  const Eigen::MatrixXd probs = policy.prob_table();
  Eigen::VectorXd grad(policy.param_count());
  for (int s = 0; s < policy.num_states(); ++s) {
    grad.segment(s * actions, actions) =
        (weighted.row(s) - row_mass[s] * probs.row(s)) / batch.num_episodes;
  }
  if (!grad.allFinite()) throw std::runtime_error("surrogate gradient is not finite");
  return grad;
}

double sampled_surrogate_gain(const TrajectoryBatch& batch, const AdvantageBuffer& buffer,
                              int agent, const SoftmaxPolicy& behavior,
                              const Eigen::VectorXd& parameters) {
  SoftmaxPolicy shifted = behavior;
  shifted.set_parameters(parameters);
  double total = 0.0;
  for (int index = 0; index < batch.size(); ++index) {
    const int state = batch.states[index];
    const int action = batch.actions[static_cast<std::size_t>(index) * batch.num_agents + agent];
    const double behavior_logp =
        batch.behavior_logp[static_cast<std::size_t>(index) * batch.num_agents + agent];
    const double ratio = std::exp(shifted.log_prob(state, action) - behavior_logp);
    total += (ratio - 1.0) * buffer.m_factor[index];
  }
  return total / batch.num_episodes;
}

Eigen::VectorXd conjugate_gradient_solve(const HvpOperator& hvp, const Eigen::VectorXd& g,
                                         int iterations, double residual_tol) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(g.size());
  Eigen::VectorXd residual = g;
  Eigen::VectorXd direction = residual;
  double rho = residual.squaredNorm();
  const double threshold = residual_tol * g.norm();
  for (int iter = 0; iter < iterations && std::sqrt(rho) > threshold; ++iter) {
    const Eigen::VectorXd h_direction = hvp(direction);
    const double curvature = direction.dot(h_direction);
    if (!std::isfinite(curvature)) {
      throw std::runtime_error("conjugate gradient: non-finite curvature");
    }
    if (curvature <= 0.0) break;
    const double alpha = rho / curvature;
    x += alpha * direction;
    residual -= alpha * h_direction;
    const double rho_next = residual.squaredNorm();
    direction = residual + (rho_next / rho) * direction;
    rho = rho_next;
  }
  if (!x.allFinite()) throw std::runtime_error("conjugate gradient produced non-finite values");
  return x;
}

std::optional<double> trust_region_step_size(const Eigen::VectorXd& direction,
                                             const HvpOperator& hvp, double delta) {
  const double curvature = direction.dot(hvp(direction));
  if (!(curvature > 1e-12)) return std::nullopt;
  return std::sqrt(2.0 * delta / curvature);
}

LineSearchResult backtracking_line_search(const LineSearchProblem& problem,
                                          const HatrpoConfig& config) {
  LineSearchResult result;
  result.parameters = problem.base_parameters;
  double scale = 1.0;
  for (int j = 0; j <= config.line_search_max_steps; ++j) {
    const double step = scale * problem.max_step;
    const Eigen::VectorXd candidate = problem.base_parameters + step * problem.direction;
    const double gain = problem.objective_gain(candidate);
    const double kl = problem.realized_kl(candidate);
    const double required = config.accept_ratio * step * problem.directional_gain;
    if (gain >= required && kl <= config.kl_threshold) {
      result.accepted = true;
      result.backtrack_index = j;
      result.parameters = candidate;
      result.kl_realized = kl;
      result.surrogate_gain = gain;
      return result;
    }
    scale *= config.line_search_backoff;
  }
  return result;
}

LineSearchResult backtracking_line_search(const SoftmaxPolicy& policy,
                                          const Eigen::VectorXd& direction, double max_step,
                                          const TrajectoryBatch& batch,
                                          const AdvantageBuffer& buffer, int agent,
                                          const HatrpoConfig& config) {
  const Eigen::VectorXd weights = state_visit_weights(batch, policy.num_states());
  LineSearchProblem problem;
  problem.base_parameters = policy.parameters();
  problem.direction = direction;
  problem.max_step = max_step;
  problem.directional_gain = direction.dot(surrogate_gradient(batch, buffer, agent, policy));
  problem.objective_gain = [&](const Eigen::VectorXd& params) {
    return sampled_surrogate_gain(batch, buffer, agent, policy, params);
  };
  problem.realized_kl = [&, weights](const Eigen::VectorXd& params) {
    SoftmaxPolicy shifted = policy;
    shifted.set_parameters(params);
    return softmax_kl(policy, shifted, weights);
  };
  return backtracking_line_search(problem, config);
}

std::vector<HatrpoAgentRecord> hatrpo_iteration(const CooperativeMarkovGame& game,
                                                std::vector<SoftmaxPolicy>& policies,
                                                ValueTable& critic, const HatrpoConfig& config,
                                                int iteration_index) {
  if (static_cast<int>(policies.size()) != game.num_agents) {
    throw std::invalid_argument("hatrpo_iteration: one policy per agent is required");
  }
  std::vector<Eigen::MatrixXd> tables;
  tables.reserve(policies.size());
  for (const SoftmaxPolicy& policy : policies) tables.push_back(policy.prob_table());

  const TrajectoryBatch batch = collect_rollouts(
      game, tables, config.batch_episodes, config.episode_length,
      mix_seed(config.seed ^ mix_seed(kRolloutStream + iteration_index)));
  AdvantageBuffer buffer = compute_gae(batch, critic, game.discount, config.gae_lambda);

  const ExactEvaluation start_eval = evaluate_exactly(game, tables);
  if (config.use_exact_advantages) {
    std::vector<int> joint(game.num_agents);
    for (int index = 0; index < batch.size(); ++index) {
      for (int i = 0; i < game.num_agents; ++i) {
        joint[i] = batch.actions[static_cast<std::size_t>(index) * game.num_agents + i];
      }
      buffer.advantages[index] =
          start_eval.advantages(batch.states[index], game.actions.encode(joint));
    }
  }
  if (config.normalize_advantages) normalize_advantages(buffer.advantages);

  std::vector<int> permutation(game.num_agents);
  std::iota(permutation.begin(), permutation.end(), 0);
  Rng perm_rng = Rng::stream(config.seed ^ kPermutationStream, iteration_index);
  perm_rng.shuffle(permutation);
  init_m_factor(buffer, permutation);

  const double j_sampled = mean_episode_return(batch, game.discount);
  const Eigen::VectorXd exact_weights =
      start_eval.state_occupancy * (1.0 - game.discount);

  std::vector<HatrpoAgentRecord> records;
  records.reserve(game.num_agents);
  for (int slot = 0; slot < game.num_agents; ++slot) {
    const int agent = permutation[slot];
    SoftmaxPolicy& policy = policies[agent];
    const SoftmaxPolicy before = policy;

    HatrpoAgentRecord record;
    record.iteration = iteration_index;
    record.permutation = permutation;
    record.agent = agent;
    record.j_sampled = j_sampled;

    const Eigen::VectorXd gradient = surrogate_gradient(batch, buffer, agent, policy);
    if (gradient.norm() > 0.0) {
      const Eigen::VectorXd weights = state_visit_weights(batch, game.num_states);
      const HvpOperator hvp = [&](const Eigen::VectorXd& v) {
        return (softmax_fisher_vector_product(policy, weights, v) + config.damping * v).eval();
      };
      const Eigen::VectorXd direction =
          conjugate_gradient_solve(hvp, gradient, config.cg_iterations, config.cg_residual_tol);
      const std::optional<double> max_step =
          trust_region_step_size(direction, hvp, config.kl_threshold);
      if (max_step) {
        // The feasibility side of the search uses the exact expected KL under
        // the iteration-start occupancy: the subsampled Fisher underweights
        // rarely visited states and the batch-average KL alone would let
        // their logits take real steps past the threshold.
        LineSearchProblem problem;
        problem.base_parameters = policy.parameters();
        problem.direction = direction;
        problem.max_step = *max_step;
        problem.directional_gain = direction.dot(gradient);
        problem.objective_gain = [&](const Eigen::VectorXd& params) {
          return sampled_surrogate_gain(batch, buffer, agent, policy, params);
        };
        problem.realized_kl = [&](const Eigen::VectorXd& params) {
          SoftmaxPolicy shifted = policy;
          shifted.set_parameters(params);
          return softmax_kl(policy, shifted, exact_weights);
        };
        const LineSearchResult search = backtracking_line_search(problem, config);
        if (search.accepted) {
          policy.set_parameters(search.parameters);
          record.accepted_j = search.backtrack_index;
          record.kl_realized = search.kl_realized;
          record.surrogate_gain = search.surrogate_gain;
          record.kl_exact = softmax_kl(before, policy, exact_weights);
        }
      }
    }
    if (slot + 1 < game.num_agents) {
      update_m_factor(buffer, batch, agent, before.prob_table(), policy.prob_table());
    }
    records.push_back(std::move(record));
  }

  critic = fit_value_table(batch, buffer.returns, std::move(critic));

  std::vector<Eigen::MatrixXd> updated_tables;
  updated_tables.reserve(policies.size());
  for (const SoftmaxPolicy& policy : policies) updated_tables.push_back(policy.prob_table());
  const double j_exact = expected_return(game, updated_tables);
  for (HatrpoAgentRecord& record : records) record.j_exact = j_exact;
  return records;
}

HatrpoRunResult run_hatrpo(const CooperativeMarkovGame& game, const HatrpoConfig& config,
                           int iterations) {
  HatrpoRunResult result{{}, ValueTable(game.num_states), {}};
  result.policies.reserve(game.num_agents);
  for (int i = 0; i < game.num_agents; ++i) {
    result.policies.emplace_back(game.num_states, game.action_counts[i]);
  }
  for (int k = 0; k < iterations; ++k) {
    auto records = hatrpo_iteration(game, result.policies, result.critic, config, k);
    result.records.insert(result.records.end(), std::make_move_iterator(records.begin()),
                          std::make_move_iterator(records.end()));
  }
  return result;
}

void write_hatrpo_csv(std::ostream& out, std::span<const HatrpoAgentRecord> records) {
  out << "iter,perm,agent,j_accepted,kl_realized,surrogate_gain,J_exact,J_sampled\n";
  char buffer[512];
  for (const HatrpoAgentRecord& record : records) {
    std::string perm;
    for (std::size_t i = 0; i < record.permutation.size(); ++i) {
      if (i > 0) perm += '-';
      perm += std::to_string(record.permutation[i]);
    }
    std::snprintf(buffer, sizeof(buffer), "%d,%s,%d,%d,%.17g,%.17g,%.17g,%.17g\n",
                  record.iteration, perm.c_str(), record.agent, record.accepted_j,
                  record.kl_realized, record.surrogate_gain, record.j_exact, record.j_sampled);
    out << buffer;
  }
}

}  // namespace hatr
