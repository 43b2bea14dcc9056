#include "hatr/serialization.hpp"

#include <stdexcept>

namespace hatr {

using nlohmann::json;

json game_to_json(const CooperativeMarkovGame& game) {
  json doc;
  doc["num_agents"] = game.num_agents;
  doc["num_states"] = game.num_states;
  doc["action_counts"] = game.action_counts;
  doc["gamma"] = game.discount;
  doc["initial_dist"] = std::vector<double>(game.initial_dist.data(),
                                            game.initial_dist.data() + game.num_states);
  const long joint_count = game.num_joint_actions();
  json transition = json::array();
  for (int s = 0; s < game.num_states; ++s) {
    json per_action = json::array();
    for (long a = 0; a < joint_count; ++a) {
      json row = json::array();
      for (int next = 0; next < game.num_states; ++next) {
        row.push_back(game.transition(game.transition_row(s, a), next));
      }
      per_action.push_back(std::move(row));
    }
    transition.push_back(std::move(per_action));
  }
  doc["transition"] = std::move(transition);
  json reward = json::array();
  for (int s = 0; s < game.num_states; ++s) {
    json row = json::array();
    for (long a = 0; a < joint_count; ++a) row.push_back(game.reward(s, a));
    reward.push_back(std::move(row));
  }
  doc["reward"] = std::move(reward);
  return doc;
}

CooperativeMarkovGame game_from_json(const json& doc) {
  const int num_agents = doc.at("num_agents").get<int>();
  const int num_states = doc.at("num_states").get<int>();
  const std::vector<int> counts = doc.at("action_counts").get<std::vector<int>>();
  const double gamma = doc.at("gamma").get<double>();

  const JointActionIndexer indexer(counts);
  const long joint_count = indexer.num_joint_actions();

  const auto initial_values = doc.at("initial_dist").get<std::vector<double>>();
  if (static_cast<int>(initial_values.size()) != num_states) {
    throw std::invalid_argument("initial_dist length mismatch");
  }
  Eigen::VectorXd initial(num_states);
  for (int s = 0; s < num_states; ++s) initial[s] = initial_values[s];

  Eigen::MatrixXd transition(static_cast<long>(num_states) * joint_count, num_states);
  const json& transition_doc = doc.at("transition");
  for (int s = 0; s < num_states; ++s) {
    for (long a = 0; a < joint_count; ++a) {
      const json& row = transition_doc.at(s).at(a);
      for (int next = 0; next < num_states; ++next) {
        transition(static_cast<long>(s) * joint_count + a, next) = row.at(next).get<double>();
      }
    }
  }
  Eigen::MatrixXd reward(num_states, joint_count);
  const json& reward_doc = doc.at("reward");
  for (int s = 0; s < num_states; ++s) {
    for (long a = 0; a < joint_count; ++a) reward(s, a) = reward_doc.at(s).at(a).get<double>();
  }
  return CooperativeMarkovGame(num_agents, num_states, counts, std::move(transition),
                               std::move(reward), gamma, std::move(initial));
}

json parameter_block_to_json(int rows, int cols, const Eigen::VectorXd& flat) {
  if (flat.size() != static_cast<long>(rows) * cols) {
    throw std::invalid_argument("parameter block shape mismatch");
  }
  json doc;
  doc["shape"] = {rows, cols};
  doc["data"] = std::vector<double>(flat.data(), flat.data() + flat.size());
  return doc;
}

Eigen::MatrixXd matrix_from_parameter_block(const json& doc) {
  const auto shape = doc.at("shape").get<std::vector<int>>();
  if (shape.size() != 2) throw std::invalid_argument("shape header must have two entries");
  const auto data = doc.at("data").get<std::vector<double>>();
  if (static_cast<long>(data.size()) != static_cast<long>(shape[0]) * shape[1]) {
    throw std::invalid_argument("data length does not match the shape header");
  }
  Eigen::MatrixXd matrix(shape[0], shape[1]);
  for (int r = 0; r < shape[0]; ++r) {
    for (int c = 0; c < shape[1]; ++c) matrix(r, c) = data[r * shape[1] + c];
  }
  return matrix;
}

json policy_to_json(const JointTabularPolicy& policy) {
  json doc;
  doc["eta"] = policy.eta();
  json agents = json::array();
  for (int i = 0; i < policy.num_agents(); ++i) {
    const Eigen::MatrixXd& table = policy.table(i);
    Eigen::VectorXd flat(table.size());
    for (long r = 0; r < table.rows(); ++r) {
      flat.segment(r * table.cols(), table.cols()) = table.row(r);
    }
    agents.push_back(parameter_block_to_json(static_cast<int>(table.rows()),
                                             static_cast<int>(table.cols()), flat));
  }
  doc["agents"] = std::move(agents);
  return doc;
}

JointTabularPolicy policy_from_json(const json& doc) {
  const double eta = doc.at("eta").get<double>();
  std::vector<Eigen::MatrixXd> tables;
  for (const json& block : doc.at("agents")) {
    tables.push_back(matrix_from_parameter_block(block));
  }
  return JointTabularPolicy(std::move(tables), eta);
}

json softmax_policies_to_json(const std::vector<SoftmaxPolicy>& policies) {
  json agents = json::array();
  for (const SoftmaxPolicy& policy : policies) {
    json block = parameter_block_to_json(policy.num_states(), policy.num_actions(),
                                         policy.parameters());
    const Eigen::MatrixXd probs = policy.prob_table();
    Eigen::VectorXd flat(probs.size());
    for (long r = 0; r < probs.rows(); ++r) {
      flat.segment(r * probs.cols(), probs.cols()) = probs.row(r);
    }
    block["probs"] =
        std::vector<double>(flat.data(), flat.data() + flat.size());
    agents.push_back(std::move(block));
  }
  json doc;
  doc["agents"] = std::move(agents);
  return doc;
}

}  // namespace hatr
