#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "hatr/game.hpp"
#include "hatr/policy_model.hpp"
#include "hatr/rollout.hpp"

namespace hatr {

/**
 * HATRPO knobs. The line-search backoff, step cap, CG budget and damping
 * follow standard trust-region practice; everything is config-exposed.
 */
struct HatrpoConfig {
  double kl_threshold = 0.06;       // delta
  int cg_iterations = 10;
  double cg_residual_tol = 1e-10;
  double damping = 1e-5;            // added to Fisher-vector products in CG
  double line_search_backoff = 0.5; // alpha
  int line_search_max_steps = 10;   // L
  double accept_ratio = 0.5;        // kappa
  int batch_episodes = 32;          // B
  int episode_length = 16;          // T
  double gae_lambda = 0.95;
  std::uint64_t seed = 0;
  bool normalize_advantages = false;
  /** Replace GAE with the exact advantage tensor (test hook). */
  bool use_exact_advantages = false;
};

using HvpOperator = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/**
 * Sample gradient of agent's sequential objective,
 *   g = (1/B) sum_episodes sum_t M(s_t, a_t) * grad log pi(a^agent_t | s_t).
 * The buffer's M-factor must be positioned at this agent's slot.
 */
Eigen::VectorXd surrogate_gradient(const TrajectoryBatch& batch, const AdvantageBuffer& buffer,
                                   int agent, const SoftmaxPolicy& policy);

/**
 * Sampled surrogate gain (1/B) sum (ratio - 1) * M at the given parameters;
 * zero at the behavior parameters. Shares normalization with
 * surrogate_gradient, whose value it is the integral of.
 */
double sampled_surrogate_gain(const TrajectoryBatch& batch, const AdvantageBuffer& buffer,
                              int agent, const SoftmaxPolicy& behavior,
                              const Eigen::VectorXd& parameters);

/** Plain conjugate gradient for H x = g with an implicit SPD operator. */
Eigen::VectorXd conjugate_gradient_solve(const HvpOperator& hvp, const Eigen::VectorXd& g,
                                         int iterations, double residual_tol);

/**
 * Maximal step beta = sqrt(2 delta / (x' H x)). Empty when the curvature
 * x' H x falls below 1e-12 (degenerate direction; skip the agent).
 */
std::optional<double> trust_region_step_size(const Eigen::VectorXd& direction,
                                             const HvpOperator& hvp, double delta);

/** Objective/constraint callbacks the backtracking search evaluates. */
struct LineSearchProblem {
  Eigen::VectorXd base_parameters;
  Eigen::VectorXd direction;      // x
  double max_step = 0.0;          // beta
  double directional_gain = 0.0;  // direction . g
  std::function<double(const Eigen::VectorXd&)> objective_gain;
  std::function<double(const Eigen::VectorXd&)> realized_kl;
};

struct LineSearchResult {
  bool accepted = false;
  int backtrack_index = -1;  // j of the accepted step
  Eigen::VectorXd parameters;
  double kl_realized = 0.0;
  double surrogate_gain = 0.0;
};

/**
 * Backtracking search over j = 0..L with step alpha^j * beta: accepts the
 * first point whose objective gain reaches kappa * alpha^j * beta * (x.g)
 * AND whose realized expected KL stays within kl_threshold. Rejection leaves
 * the base parameters untouched (a valid outcome).
 */
LineSearchResult backtracking_line_search(const LineSearchProblem& problem,
                                          const HatrpoConfig& config);

/** Batch-backed convenience wrapper of the search for one softmax agent. */
LineSearchResult backtracking_line_search(const SoftmaxPolicy& policy,
                                          const Eigen::VectorXd& direction, double max_step,
                                          const TrajectoryBatch& batch,
                                          const AdvantageBuffer& buffer, int agent,
                                          const HatrpoConfig& config);

struct HatrpoAgentRecord {
  int iteration = 0;
  std::vector<int> permutation;
  int agent = 0;
  int accepted_j = -1;  // -1 when the update was rejected or skipped
  double kl_realized = 0.0;
  /** Expected KL of the accepted update under the exact normalized occupancy. */
  double kl_exact = 0.0;
  double surrogate_gain = 0.0;
  double j_exact = 0.0;
  double j_sampled = 0.0;
};

/**
 * One HATRPO pass: collect rollouts, fit GAE advantages, draw a permutation,
 * update agents sequentially with M-factor propagation, then refit the
 * critic. Returns one record per agent slot.
 */
std::vector<HatrpoAgentRecord> hatrpo_iteration(const CooperativeMarkovGame& game,
                                                std::vector<SoftmaxPolicy>& policies,
                                                ValueTable& critic, const HatrpoConfig& config,
                                                int iteration_index);

struct HatrpoRunResult {
  std::vector<SoftmaxPolicy> policies;
  ValueTable critic;
  std::vector<HatrpoAgentRecord> records;
};

/** Runs `iterations` passes from uniform policies and a zero critic. */
HatrpoRunResult run_hatrpo(const CooperativeMarkovGame& game, const HatrpoConfig& config,
                           int iterations);

/** Columns: iter, perm, agent, j_accepted, kl_realized, surrogate_gain, J_exact, J_sampled. */
void write_hatrpo_csv(std::ostream& out, std::span<const HatrpoAgentRecord> records);

}  // namespace hatr
