#pragma once

#include <Eigen/Dense>
#include <span>
#include <utility>
#include <vector>

#include "hatr/evaluation.hpp"
#include "hatr/game.hpp"

namespace hatr {

/**
 * Brute-force checks of the identities and bounds the library relies on.
 * Every check is exact (enumeration or dense solves); callers assert on the
 * returned residual/slack.
 */

/**
 * Advantage decomposition residual
 *   | A^{i_{1:m}}(s, a^{i_{1:m}}) - sum_j A^{i_j}(s, a^{i_{1:j-1}}, a^{i_j}) |.
 */
double check_advantage_decomposition(const CooperativeMarkovGame& game,
                                     const JointTabularPolicy& policy,
                                     const ExactEvaluation& eval, const AgentSubset& subset,
                                     std::span<const int> subset_actions, int state);
double check_advantage_decomposition(const CooperativeMarkovGame& game,
                                     const JointTabularPolicy& policy, const AgentSubset& subset,
                                     std::span<const int> subset_actions, int state);

/**
 * Slack of the sequential surrogate lower bound,
 *   J(candidate) - J(policy)
 *     - sum_m [ L^{i_{1:m}}(candidate^{i_{1:m-1}}, candidate^{i_m})
 *               - C * maxKL(policy^{i_m}, candidate^{i_m}) ],
 * with C = 4*discount*max|A| / (1-discount)^2. Nonnegative up to numerics;
 * exactly zero when candidate == policy. n = 1 recovers the single-agent
 * bound.
 */
double check_surrogate_lower_bound(const CooperativeMarkovGame& game,
                                   const JointTabularPolicy& policy,
                                   const JointTabularPolicy& candidate,
                                   std::span<const int> permutation);

/**
 * (lhs, rhs) of maxKL(joint, joint_candidate) <= sum_i maxKL(pi_i, cand_i),
 * with per-state joint KLs computed by exact enumeration of joint actions.
 */
std::pair<double, double> check_kl_sum_inequality(const JointTabularPolicy& policy,
                                                  const JointTabularPolicy& candidate);

/**
 * Residual between the two sides of the off-policy estimator identity
 *   E_{prefix~bar, a^i~hat}[A^i(s, a^prefix, a^i)]
 *     = E_{a~pi}[(hat/pi^i - 1) * (bar^prefix/pi^prefix) * A(s, a)],
 * both evaluated by enumeration.
 */
double check_estimator_identity(const CooperativeMarkovGame& game,
                                const JointTabularPolicy& policy, const AgentSubset& prefix,
                                std::span<const Eigen::MatrixXd> prefix_tables, int agent,
                                const Eigen::MatrixXd& hat_table, int state);

/**
 * Per-agent best-response gap max_{pi_i} J(pi_i, pi_-i) - J(pi), over the
 * eta-soft policy space. One-state games are solved exactly (the maximum sits
 * at an eta-soft vertex); multi-state games use projected policy-gradient
 * ascent and the result is a lower bound on the true gap.
 */
Eigen::VectorXd best_response_gap(const CooperativeMarkovGame& game,
                                  const JointTabularPolicy& policy);

/**
 * Per-agent trust-region stationarity gap
 *   max_{pi_i} E_{s~rho, a~pi_i}[A^i(s,a)] - C * maxKL(policy^i, pi_i).
 * Always >= 0 (pi_i = policy^i attains 0); one-state games are solved to
 * machine precision via the KKT dual, multi-state games by subgradient
 * ascent (lower bound).
 */
Eigen::VectorXd tr_stationarity_gap(const CooperativeMarkovGame& game,
                                    const JointTabularPolicy& policy);

/** Result of the parameter-sharing suboptimality computation. */
struct SharedPolicyGap {
  double optimal = 0.0;         // unconstrained optimum (1 by construction)
  double shared_optimal = 0.0;  // best value under one shared policy
  double ratio = 0.0;           // shared_optimal / optimal = 2 / 2^n
  double grid_optimal = 0.0;    // cross-check by theta grid search
};

/**
 * Parameter-sharing gap on the n-agent coordination game: shared policies
 * (theta, 1-theta) attain at most 2 theta^{n/2} (1-theta)^{n/2}, maximized at
 * theta = 1/2 with value 2/2^n. n must be even and >= 2.
 */
SharedPolicyGap shared_policy_gap(int n);

}  // namespace hatr
