#include "hatr/rollout.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "hatr/rng.hpp"

namespace hatr {

namespace {

/** Categorical draw from one row of a (possibly column-major) matrix. */
int sample_matrix_row(Rng& rng, const Eigen::MatrixXd& matrix, long row) {
  const double u = rng.uniform();
  double cumulative = 0.0;
  for (long a = 0; a + 1 < matrix.cols(); ++a) {
    cumulative += matrix(row, a);
    if (u < cumulative) return static_cast<int>(a);
  }
  return static_cast<int>(matrix.cols()) - 1;
}

}  // namespace

TrajectoryBatch collect_rollouts(const CooperativeMarkovGame& game,
                                 std::span<const Eigen::MatrixXd> policy_tables,
                                 int num_episodes, int horizon, std::uint64_t seed) {
  if (num_episodes < 1 || horizon < 1) {
    throw std::invalid_argument("collect_rollouts: need at least one episode and step");
  }
  if (static_cast<int>(policy_tables.size()) != game.num_agents) {
    throw std::invalid_argument("collect_rollouts: one table per agent is required");
  }
  TrajectoryBatch batch;
  batch.num_episodes = num_episodes;
  batch.horizon = horizon;
  batch.num_agents = game.num_agents;
  batch.states.resize(batch.size());
  batch.actions.resize(static_cast<std::size_t>(batch.size()) * game.num_agents);
  batch.rewards.resize(batch.size());
  batch.behavior_logp.resize(static_cast<std::size_t>(batch.size()) * game.num_agents);
  batch.done.assign(batch.size(), 0);
  batch.final_states.resize(num_episodes);

  std::vector<int> joint(game.num_agents);
  for (int episode = 0; episode < num_episodes; ++episode) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(episode));
    int state = rng.categorical(
        std::span<const double>(game.initial_dist.data(), game.initial_dist.size()));
    for (int t = 0; t < horizon; ++t) {
      const int index = batch.flat(episode, t);
      batch.states[index] = state;
      for (int i = 0; i < game.num_agents; ++i) {
        const Eigen::MatrixXd& table = policy_tables[i];
        const int action = sample_matrix_row(rng, table, state);
        joint[i] = action;
        batch.actions[static_cast<std::size_t>(index) * game.num_agents + i] = action;
        batch.behavior_logp[static_cast<std::size_t>(index) * game.num_agents + i] =
            std::log(table(state, action));
      }
      const long joint_index = game.actions.encode(joint);
      batch.rewards[index] = game.reward(state, joint_index);
      state = sample_matrix_row(rng, game.transition, game.transition_row(state, joint_index));
    }
    batch.done[batch.flat(episode, horizon - 1)] = 1;
    batch.final_states[episode] = state;
  }
  return batch;
}

int AdvantageBuffer::current_agent() const {
  if (!initialized()) throw std::logic_error("M-factor has not been initialized");
  if (cursor >= static_cast<int>(permutation.size())) {
    throw std::logic_error("all agents in the permutation have already been applied");
  }
  return permutation[cursor];
}

AdvantageBuffer compute_gae(const TrajectoryBatch& batch, const ValueTable& critic, double gamma,
                            double lambda) {
  if (lambda < 0.0 || lambda > 1.0) {
    throw std::invalid_argument("compute_gae: lambda must lie in [0, 1]");
  }
  AdvantageBuffer buffer;
  buffer.advantages.resize(batch.size());
  buffer.returns.resize(batch.size());
  for (int episode = 0; episode < batch.num_episodes; ++episode) {
    double gae = 0.0;
    double ret = 0.0;
    for (int t = batch.horizon - 1; t >= 0; --t) {
      const int index = batch.flat(episode, t);
      const double next_value = t + 1 < batch.horizon
                                    ? critic.values[batch.state(episode, t + 1)]
                                    : critic.values[batch.final_states[episode]];
      const double delta =
          batch.rewards[index] + gamma * next_value - critic.values[batch.states[index]];
      gae = delta + gamma * lambda * gae;
      buffer.advantages[index] = gae;
      ret = batch.rewards[index] + gamma * ret;
      buffer.returns[index] = ret;
    }
  }
  return buffer;
}

ValueTable fit_value_table(const TrajectoryBatch& batch, std::span<const double> returns,
                           ValueTable previous) {
  if (static_cast<int>(returns.size()) != batch.size()) {
    throw std::invalid_argument("fit_value_table: one return per sample is required");
  }
  Eigen::VectorXd sums = Eigen::VectorXd::Zero(previous.values.size());
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(previous.values.size());
  for (int index = 0; index < batch.size(); ++index) {
    sums[batch.states[index]] += returns[index];
    counts[batch.states[index]] += 1.0;
  }
  for (long s = 0; s < previous.values.size(); ++s) {
    if (counts[s] > 0.0) previous.values[s] = sums[s] / counts[s];
  }
  return previous;
}

void init_m_factor(AdvantageBuffer& buffer, std::vector<int> permutation) {
  buffer.m_factor = buffer.advantages;
  buffer.permutation = std::move(permutation);
  buffer.cursor = 0;
}

void update_m_factor(AdvantageBuffer& buffer, const TrajectoryBatch& batch, int agent,
                     const Eigen::MatrixXd& old_table, const Eigen::MatrixXd& new_table) {
  if (!buffer.initialized()) {
    throw std::logic_error("update_m_factor: init_m_factor must run first");
  }
  if (buffer.cursor >= static_cast<int>(buffer.permutation.size()) ||
      buffer.permutation[buffer.cursor] != agent) {
    throw std::logic_error("update_m_factor: agent applied out of permutation order");
  }
  for (int index = 0; index < batch.size(); ++index) {
    const int state = batch.states[index];
    const int action = batch.actions[static_cast<std::size_t>(index) * batch.num_agents + agent];
    buffer.m_factor[index] *= new_table(state, action) / old_table(state, action);
  }
  ++buffer.cursor;
}

Eigen::VectorXd state_visit_weights(const TrajectoryBatch& batch, int num_states) {
  Eigen::VectorXd weights = Eigen::VectorXd::Zero(num_states);
  for (int index = 0; index < batch.size(); ++index) weights[batch.states[index]] += 1.0;
  weights /= static_cast<double>(batch.size());
  return weights;
}

double mean_episode_return(const TrajectoryBatch& batch, double gamma) {
  double total = 0.0;
  for (int episode = 0; episode < batch.num_episodes; ++episode) {
    double discount = 1.0;
    for (int t = 0; t < batch.horizon; ++t) {
      total += discount * batch.reward(episode, t);
      discount *= gamma;
    }
  }
  return total / batch.num_episodes;
}

void write_batch_csv(std::ostream& out, const TrajectoryBatch& batch,
                     const AdvantageBuffer& buffer) {
  out << "episode,t,state";
  for (int i = 0; i < batch.num_agents; ++i) out << ",a" << i;
  out << ",reward";
  for (int i = 0; i < batch.num_agents; ++i) out << ",logp" << i;
  out << ",adv,ret,m\n";
  char cell[256];
  const bool has_m = static_cast<int>(buffer.m_factor.size()) == batch.size();
  for (int episode = 0; episode < batch.num_episodes; ++episode) {
    for (int t = 0; t < batch.horizon; ++t) {
      const int index = batch.flat(episode, t);
      out << episode << ',' << t << ',' << batch.states[index];
      for (int i = 0; i < batch.num_agents; ++i) out << ',' << batch.action(episode, t, i);
      std::snprintf(cell, sizeof(cell), ",%.17g", batch.rewards[index]);
      out << cell;
      for (int i = 0; i < batch.num_agents; ++i) {
        std::snprintf(cell, sizeof(cell), ",%.17g", batch.logp(episode, t, i));
        out << cell;
      }
      std::snprintf(cell, sizeof(cell), ",%.17g,%.17g,%.17g\n", buffer.advantages[index],
                    buffer.returns[index], has_m ? buffer.m_factor[index] : 0.0);
      out << cell;
    }
  }
}

void normalize_advantages(std::vector<double>& advantages) {
  if (advantages.empty()) return;
  double mean = 0.0;
  for (double a : advantages) mean += a;
  mean /= advantages.size();
  double variance = 0.0;
  for (double a : advantages) variance += (a - mean) * (a - mean);
  variance /= advantages.size();
  const double scale = 1.0 / (std::sqrt(variance) + 1e-8);
  for (double& a : advantages) a = (a - mean) * scale;
}

}  // namespace hatr
