#include "hatr/happo.hpp"

#include <algorithm>
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
}  // namespace

double clip_objective(double ratio, double m_value, double epsilon) {
  if (!(ratio > 0.0)) throw std::invalid_argument("clip_objective: ratio must be positive");
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * m_value, clipped * m_value);
}

MomentAscender::MomentAscender(int dim, double decay1, double decay2, double stability_epsilon)
    : first_(Eigen::VectorXd::Zero(dim)),
      second_(Eigen::VectorXd::Zero(dim)),
      decay1_(decay1),
      decay2_(decay2),
      epsilon_(stability_epsilon) {}

Eigen::VectorXd MomentAscender::step(const Eigen::VectorXd& gradient, double learning_rate) {
  ++count_;
  first_ = decay1_ * first_ + (1.0 - decay1_) * gradient;
  second_ = decay2_ * second_ + (1.0 - decay2_) * gradient.cwiseProduct(gradient);
  const double correction1 = 1.0 - std::pow(decay1_, count_);
  const double correction2 = 1.0 - std::pow(decay2_, count_);
  const Eigen::VectorXd corrected_first = first_ / correction1;
  const Eigen::VectorXd corrected_second = second_ / correction2;
  return learning_rate *
         (corrected_first.array() / (corrected_second.array().sqrt() + epsilon_)).matrix();
}

double happo_objective_value(const TrajectoryBatch& batch, const AdvantageBuffer& buffer,
                             int agent, const SoftmaxPolicy& policy, double clip) {
  double total = 0.0;
  for (int index = 0; index < batch.size(); ++index) {
    const int state = batch.states[index];
    const int action = batch.actions[static_cast<std::size_t>(index) * batch.num_agents + agent];
    const double behavior_logp =
        batch.behavior_logp[static_cast<std::size_t>(index) * batch.num_agents + agent];
    const double ratio = std::exp(policy.log_prob(state, action) - behavior_logp);
    total += clip_objective(ratio, buffer.m_factor[index], clip);
  }
  return total / batch.size();
}

Eigen::VectorXd happo_objective_gradient(const TrajectoryBatch& batch,
                                         const AdvantageBuffer& buffer, int agent,
                                         const SoftmaxPolicy& policy, double clip) {
  const int actions = policy.num_actions();
  Eigen::MatrixXd weighted = Eigen::MatrixXd::Zero(policy.num_states(), actions);
  Eigen::VectorXd row_mass = Eigen::VectorXd::Zero(policy.num_states());
  for (int index = 0; index < batch.size(); ++index) {
    const int state = batch.states[index];
    const int action = batch.actions[static_cast<std::size_t>(index) * batch.num_agents + agent];
    const double behavior_logp =
        batch.behavior_logp[static_cast<std::size_t>(index) * batch.num_agents + agent];
    const double ratio = std::exp(policy.log_prob(state, action) - behavior_logp);
    const double m_value = buffer.m_factor[index];
    const bool flat = (m_value > 0.0 && ratio > 1.0 + clip) ||
                      (m_value < 0.0 && ratio < 1.0 - clip);
    if (flat) continue;
    weighted(state, action) += m_value * ratio;
    row_mass[state] += m_value * ratio;
  }
  Eigen::VectorXd gradient(policy.param_count());
  const Eigen::MatrixXd probs = policy.prob_table();
  for (int s = 0; s < policy.num_states(); ++s) {
    gradient.segment(s * actions, actions) =
        (weighted.row(s) - row_mass[s] * probs.row(s)) / batch.size();
  }
  if (!gradient.allFinite()) {
    throw std::runtime_error("happo objective gradient is not finite");
  }
  return gradient;
}

HappoUpdateStats happo_agent_update(const TrajectoryBatch& batch, const AdvantageBuffer& buffer,
                                    int agent, SoftmaxPolicy& policy, const HappoConfig& config) {
  if (buffer.current_agent() != agent) {
    throw std::logic_error("M-factor is stale for this agent's permutation slot");
  }
  const int sample_count = batch.size();
  MomentAscender optimizer(policy.param_count(), config.moment_decay1, config.moment_decay2,
                           config.stability_epsilon);
  HappoUpdateStats stats;
  double ratio_sum = 0.0;
  long clipped = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (int index = 0; index < sample_count; ++index) {
      const int state = batch.states[index];
      const int action =
          batch.actions[static_cast<std::size_t>(index) * batch.num_agents + agent];
      const double behavior_logp =
          batch.behavior_logp[static_cast<std::size_t>(index) * batch.num_agents + agent];
      const double ratio = std::exp(policy.log_prob(state, action) - behavior_logp);
      const double m_value = buffer.m_factor[index];
      ratio_sum += ratio;
      const bool outside_band = ratio > 1.0 + config.clip || ratio < 1.0 - config.clip;
      if (outside_band) ++clipped;
      if (config.check_invariants) {
        ++stats.samples_checked;
        const double value = clip_objective(ratio, m_value, config.clip);
        const double clipped_ratio = std::clamp(ratio, 1.0 - config.clip, 1.0 + config.clip);
        const double envelope = std::max(ratio * m_value, clipped_ratio * m_value);
        const bool flat = (m_value > 0.0 && ratio > 1.0 + config.clip) ||
                          (m_value < 0.0 && ratio < 1.0 - config.clip);
        if (value > envelope + 1e-12) ++stats.envelope_violations;
        if (!outside_band && value != ratio * m_value) ++stats.envelope_violations;
        if (flat && !(value == clipped_ratio * m_value && value < ratio * m_value)) {
          ++stats.zero_gradient_violations;
        }
      }
    }
    const Eigen::VectorXd gradient =
        happo_objective_gradient(batch, buffer, agent, policy, config.clip);
    policy.set_parameters(policy.parameters() +
                          optimizer.step(gradient, config.learning_rate));
    ++stats.epochs_run;
  }
  const long evaluated = static_cast<long>(config.epochs) * sample_count;
  stats.mean_ratio = evaluated > 0 ? ratio_sum / evaluated : 1.0;
  stats.clip_fraction = evaluated > 0 ? static_cast<double>(clipped) / evaluated : 0.0;
  return stats;
}

std::vector<HappoAgentRecord> happo_iteration(const CooperativeMarkovGame& game,
                                              std::vector<SoftmaxPolicy>& policies,
                                              ValueTable& critic, const HappoConfig& config,
                                              int iteration_index) {
  if (static_cast<int>(policies.size()) != game.num_agents) {
    throw std::invalid_argument("happo_iteration: one policy per agent is required");
  }
  std::vector<Eigen::MatrixXd> tables;
  tables.reserve(policies.size());
  for (const SoftmaxPolicy& policy : policies) tables.push_back(policy.prob_table());

  const TrajectoryBatch batch = collect_rollouts(
      game, tables, config.batch_episodes, config.episode_length,
      mix_seed(config.seed ^ mix_seed(kRolloutStream + iteration_index)));
  AdvantageBuffer buffer = compute_gae(batch, critic, game.discount, config.gae_lambda);
  if (config.normalize_advantages) normalize_advantages(buffer.advantages);

  std::vector<int> permutation(game.num_agents);
  std::iota(permutation.begin(), permutation.end(), 0);
  if (!config.fixed_permutation) {
    Rng perm_rng = Rng::stream(config.seed ^ kPermutationStream, iteration_index);
    perm_rng.shuffle(permutation);
  }
  init_m_factor(buffer, permutation);

  const double j_sampled = mean_episode_return(batch, game.discount);

  std::vector<HappoAgentRecord> records;
  records.reserve(game.num_agents);
  for (int slot = 0; slot < game.num_agents; ++slot) {
    const int agent = permutation[slot];
    const SoftmaxPolicy before = policies[agent];
    HappoAgentRecord record;
    record.iteration = iteration_index;
    record.permutation = permutation;
    record.agent = agent;
    record.j_sampled = j_sampled;
    record.stats = happo_agent_update(batch, buffer, agent, policies[agent], config);
    if (slot + 1 < game.num_agents) {
      update_m_factor(buffer, batch, agent, before.prob_table(), policies[agent].prob_table());
    }
    records.push_back(std::move(record));
  }

  critic = fit_value_table(batch, buffer.returns, std::move(critic));

  std::vector<Eigen::MatrixXd> updated_tables;
  updated_tables.reserve(policies.size());
  for (const SoftmaxPolicy& policy : policies) updated_tables.push_back(policy.prob_table());
  const double j_exact = expected_return(game, updated_tables);
  for (HappoAgentRecord& record : records) record.j_exact = j_exact;
  return records;
}

HappoRunResult run_happo(const CooperativeMarkovGame& game, const HappoConfig& config,
                         int iterations) {
  HappoRunResult result{{}, ValueTable(game.num_states), {}};
  result.policies.reserve(game.num_agents);
  for (int i = 0; i < game.num_agents; ++i) {
    result.policies.emplace_back(game.num_states, game.action_counts[i]);
  }
  for (int k = 0; k < iterations; ++k) {
    auto records = happo_iteration(game, result.policies, result.critic, config, k);
    result.records.insert(result.records.end(), std::make_move_iterator(records.begin()),
                          std::make_move_iterator(records.end()));
  }
  return result;
}

void write_happo_csv(std::ostream& out, std::span<const HappoAgentRecord> records) {
  out << "iter,perm,agent,epochs_run,mean_ratio,clip_fraction,J_exact,J_sampled\n";
  char buffer[512];
  for (const HappoAgentRecord& record : records) {
    std::string perm;
    for (std::size_t i = 0; i < record.permutation.size(); ++i) {
      if (i > 0) perm += '-';
      perm += std::to_string(record.permutation[i]);
    }
    std::snprintf(buffer, sizeof(buffer), "%d,%s,%d,%d,%.17g,%.17g,%.17g,%.17g\n",
                  record.iteration, perm.c_str(), record.agent, record.stats.epochs_run,
                  record.stats.mean_ratio, record.stats.clip_fraction, record.j_exact,
                  record.j_sampled);
    out << buffer;
  }
}

}  // namespace hatr
