#include "hatr/game.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace hatr {

namespace {
constexpr double kStochasticTol = 1e-12;
constexpr long kMaxTensorEntries = 1'000'000;
}  // namespace

JointActionIndexer::JointActionIndexer(std::vector<int> action_counts)
    : counts_(std::move(action_counts)) {
  if (counts_.empty()) throw std::invalid_argument("action_counts must be non-empty");
  strides_.assign(counts_.size(), 1);
  for (int i = static_cast<int>(counts_.size()) - 1; i >= 0; --i) {
    if (counts_[i] <= 0) throw std::invalid_argument("action counts must be positive");
    if (i + 1 < static_cast<int>(counts_.size())) {
      strides_[i] = strides_[i + 1] * counts_[i + 1];
    }
  }
  total_ = strides_[0] * counts_[0];
}

long JointActionIndexer::encode(std::span<const int> actions) const {
  if (static_cast<int>(actions.size()) != num_agents()) {
    throw std::invalid_argument("encode: wrong number of agent actions");
  }
  long joint = 0;
  for (int i = 0; i < num_agents(); ++i) {
    if (actions[i] < 0 || actions[i] >= counts_[i]) {
      throw std::invalid_argument("encode: action index out of range for agent " +
                                  std::to_string(i));
    }
    joint += strides_[i] * actions[i];
  }
  return joint;
}

void JointActionIndexer::decode(long joint, std::span<int> actions) const {
  if (static_cast<int>(actions.size()) != num_agents()) {
    throw std::invalid_argument("decode: wrong output size");
  }
  for (int i = 0; i < num_agents(); ++i) {
    actions[i] = static_cast<int>((joint / strides_[i]) % counts_[i]);
  }
}

CooperativeMarkovGame::CooperativeMarkovGame(int num_agents_in, int num_states_in,
                                             std::vector<int> action_counts_in,
                                             Eigen::MatrixXd transition_in,
                                             Eigen::MatrixXd reward_in, double discount_in,
                                             Eigen::VectorXd initial_dist_in)
    : num_agents(num_agents_in),
      num_states(num_states_in),
      action_counts(std::move(action_counts_in)),
      transition(std::move(transition_in)),
      reward(std::move(reward_in)),
      discount(discount_in),
      initial_dist(std::move(initial_dist_in)),
      actions(action_counts) {
  if (num_agents <= 0 || num_states <= 0) {
    throw std::invalid_argument("game must have positive agent and state counts");
  }
  if (static_cast<int>(action_counts.size()) != num_agents) {
    throw std::invalid_argument("action_counts size must equal num_agents");
  }
  const long joint = actions.num_joint_actions();
  if (static_cast<long>(num_states) * joint > kMaxTensorEntries) {
    throw std::invalid_argument("game exceeds the desk-scale cap of 1e6 state-action entries");
  }
  if (transition.rows() != static_cast<long>(num_states) * joint ||
      transition.cols() != num_states) {
    throw std::invalid_argument("transition tensor has wrong shape");
  }
  if (reward.rows() != num_states || reward.cols() != joint) {
    throw std::invalid_argument("reward tensor has wrong shape");
  }
  if (initial_dist.size() != num_states) {
    throw std::invalid_argument("initial_dist has wrong length");
  }
  if (!(discount >= 0.0 && discount < 1.0)) {
    throw std::invalid_argument("discount must lie in [0, 1)");
  }
  for (long row = 0; row < transition.rows(); ++row) {
    if (transition.row(row).minCoeff() < 0.0) {
      throw std::invalid_argument("transition probabilities must be nonnegative");
    }
    if (std::abs(transition.row(row).sum() - 1.0) > kStochasticTol) {
      throw std::invalid_argument("transition row " + std::to_string(row) +
                                  " does not sum to 1");
    }
  }
  if (initial_dist.minCoeff() < 0.0 ||
      std::abs(initial_dist.sum() - 1.0) > kStochasticTol) {
    throw std::invalid_argument("initial_dist is not a probability distribution");
  }
}

JointTabularPolicy::JointTabularPolicy(std::vector<Eigen::MatrixXd> per_agent_tables,
                                       double eta_floor)
    : tables_(std::move(per_agent_tables)), eta_(eta_floor) {
  if (tables_.empty()) throw std::invalid_argument("policy needs at least one agent table");
  if (!(eta_ > 0.0)) throw std::invalid_argument("eta_floor must be positive");
  const long states = tables_.front().rows();
  for (std::size_t i = 0; i < tables_.size(); ++i) {
    const Eigen::MatrixXd& table = tables_[i];
    if (table.rows() != states) {
      throw std::invalid_argument("all agent tables must share the state dimension");
    }
    for (long s = 0; s < table.rows(); ++s) {
      if (std::abs(table.row(s).sum() - 1.0) > kStochasticTol) {
        throw std::invalid_argument("policy row does not sum to 1 (agent " +
                                    std::to_string(i) + ", state " + std::to_string(s) + ")");
      }
      // Allow one ulp-scale slack under the floor from projection rounding.
      if (table.row(s).minCoeff() < eta_ - 1e-12) {
        throw std::invalid_argument("policy violates the eta-soft floor (agent " +
                                    std::to_string(i) + ", state " + std::to_string(s) + ")");
      }
    }
  }
}

double JointTabularPolicy::joint_prob(int state, std::span<const int> actions) const {
  if (static_cast<int>(actions.size()) != num_agents()) {
    throw std::invalid_argument("joint_prob: wrong number of actions");
  }
  double p = 1.0;
  for (int i = 0; i < num_agents(); ++i) p *= tables_[i](state, actions[i]);
  return p;
}

JointTabularPolicy JointTabularPolicy::with_table(int agent, Eigen::MatrixXd table) const {
  std::vector<Eigen::MatrixXd> tables = tables_;
  tables.at(agent) = std::move(table);
  return JointTabularPolicy(std::move(tables), eta_);
}

JointTabularPolicy JointTabularPolicy::uniform(const CooperativeMarkovGame& game, double eta) {
  std::vector<Eigen::MatrixXd> tables;
  tables.reserve(game.num_agents);
  for (int i = 0; i < game.num_agents; ++i) {
    const int count = game.action_counts[i];
    tables.push_back(Eigen::MatrixXd::Constant(game.num_states, count, 1.0 / count));
  }
  return JointTabularPolicy(std::move(tables), eta);
}

JointTabularPolicy JointTabularPolicy::vertex(const CooperativeMarkovGame& game,
                                              std::span<const int> joint_action, double eta) {
  if (static_cast<int>(joint_action.size()) != game.num_agents) {
    throw std::invalid_argument("vertex: wrong number of actions");
  }
  std::vector<Eigen::MatrixXd> tables;
  tables.reserve(game.num_agents);
  for (int i = 0; i < game.num_agents; ++i) {
    const int count = game.action_counts[i];
    Eigen::MatrixXd table = Eigen::MatrixXd::Constant(game.num_states, count, eta);
    table.col(joint_action[i]).setConstant(1.0 - (count - 1) * eta);
    tables.push_back(std::move(table));
  }
  return JointTabularPolicy(std::move(tables), eta);
}

JointTabularPolicy JointTabularPolicy::random(const CooperativeMarkovGame& game, double eta,
                                              Rng& rng) {
  std::vector<Eigen::MatrixXd> tables;
  tables.reserve(game.num_agents);
  for (int i = 0; i < game.num_agents; ++i) {
    const int count = game.action_counts[i];
    Eigen::MatrixXd table(game.num_states, count);
    for (int s = 0; s < game.num_states; ++s) {
      double sum = 0.0;
      for (int a = 0; a < count; ++a) {
        table(s, a) = -std::log(1.0 - rng.uniform());
        sum += table(s, a);
      }
      table.row(s) /= sum;
      Eigen::VectorXd row = table.row(s);
      project_to_eta_simplex(row, eta);
      table.row(s) = row;
    }
    tables.push_back(std::move(table));
  }
  return JointTabularPolicy(std::move(tables), eta);
}

AgentSubset::AgentSubset(std::vector<int> ordered_ids, int num_agents)
    : ids_(std::move(ordered_ids)), member_(num_agents, 0), num_agents_(num_agents) {
  for (int id : ids_) {
    if (id < 0 || id >= num_agents) throw std::invalid_argument("agent id out of range");
    if (member_[id]) throw std::invalid_argument("agent ids must be distinct");
    member_[id] = 1;
  }
}

std::vector<int> AgentSubset::complement() const {
  std::vector<int> rest;
  rest.reserve(num_agents_ - size());
  for (int i = 0; i < num_agents_; ++i) {
    if (!member_[i]) rest.push_back(i);
  }
  return rest;
}

AgentSubset AgentSubset::joined(const AgentSubset& tail) const {
  std::vector<int> ids = ids_;
  for (int id : tail.ids()) ids.push_back(id);
  return AgentSubset(std::move(ids), num_agents_);
}

void project_to_eta_simplex(Eigen::Ref<Eigen::VectorXd> row, double eta) {
  const int dim = static_cast<int>(row.size());
  const double mass = 1.0 - dim * eta;
  if (mass <= 0.0) throw std::invalid_argument("eta too large for the simplex dimension");
  // Shift by eta, project onto the simplex of total mass `mass`, shift back.
  Eigen::VectorXd shifted = row.array() - eta;
  std::vector<double> sorted(shifted.data(), shifted.data() + dim);
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  double running = 0.0;
  double tau = 0.0;
  for (int k = 0; k < dim; ++k) {
    running += sorted[k];
    const double candidate = (running - mass) / (k + 1);
    if (k + 1 == dim || sorted[k + 1] <= candidate) {
      tau = candidate;
      break;
    }
  }
  for (int i = 0; i < dim; ++i) {
    row[i] = std::max(0.0, shifted[i] - tau) + eta;
  }
  // Remove accumulated rounding from the largest coordinate.
  int argmax = 0;
  row.maxCoeff(&argmax);
  row[argmax] += 1.0 - row.sum();
}

}  // namespace hatr
