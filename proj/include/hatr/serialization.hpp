#pragma once

#include <json.hpp>

#include "hatr/game.hpp"
#include "hatr/policy_model.hpp"

namespace hatr {

/**
 * Game document: num_agents, num_states, action_counts, gamma, initial_dist,
 * transition (nested [state][joint_action][next_state], joint actions in
 * mixed-radix order) and reward ([state][joint_action]). Doubles round-trip
 * bit-exactly through nlohmann's shortest-representation printer.
 */
nlohmann::json game_to_json(const CooperativeMarkovGame& game);
CooperativeMarkovGame game_from_json(const nlohmann::json& doc);

nlohmann::json policy_to_json(const JointTabularPolicy& policy);
JointTabularPolicy policy_from_json(const nlohmann::json& doc);

/** Flat array with a shape header: {"shape": [rows, cols], "data": [...]}. */
nlohmann::json parameter_block_to_json(int rows, int cols, const Eigen::VectorXd& flat);
Eigen::MatrixXd matrix_from_parameter_block(const nlohmann::json& doc);

nlohmann::json softmax_policies_to_json(const std::vector<SoftmaxPolicy>& policies);

}  // namespace hatr
