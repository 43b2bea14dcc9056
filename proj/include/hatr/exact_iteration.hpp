#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "hatr/evaluation.hpp"
#include "hatr/game.hpp"

namespace hatr {

/**
 * Knobs of the exact sequential policy iteration. The per-agent argmax is
 * approximated by projected gradient ascent on the eta-soft simplex; the
 * monotonic guarantee only needs the accepted point to beat the zero update,
 * which the accept-if-no-worse safeguard enforces regardless of these values.
 */
struct ExactIterationConfig {
  int max_iterations = 1000;
  int inner_steps = 500;
  double inner_step_size = 0.05;
  std::uint64_t permutation_seed = 0;
  /** Stop once the per-iteration return gain falls below this; <= 0 disables. */
  double convergence_tol = 1e-10;
};

struct AgentUpdateRecord {
  int agent = 0;
  double surrogate = 0.0;
  double max_kl = 0.0;
  double penalized = 0.0;
};

struct IterationRecord {
  int iteration = 0;
  std::vector<int> permutation;
  double epsilon = 0.0;    // max_{s,a} |A(s,a)| at iteration start
  double penalty_c = 0.0;  // 4*discount*epsilon / (1-discount)^2
  double return_value = 0.0;
  std::vector<AgentUpdateRecord> agents;
};

/** Full per-iteration record; the return sequence is the Theorem-2 surface. */
struct IterationTrace {
  double initial_return = 0.0;
  std::vector<IterationRecord> iterations;

  /** Columns: iter, perm, agent, surrogate, max_kl, penalized, J. */
  void write_csv(std::ostream& out) const;
  /** Smallest J_{k+1} - J_k over the trace (>= -1e-9 when monotone). */
  double min_return_delta() const;
};

/** max over states of KL(row of a, row of b); tables must be strictly positive. */
double max_kl(const Eigen::MatrixXd& table_a, const Eigen::MatrixXd& table_b);

/**
 * Linear coefficients of the sequential surrogate: c(s, a) such that
 * L(candidate) = sum_{s,a} c(s,a) * candidate(s,a), where
 * c(s,a) = rho_base(s) * E_{prefix~prefix_tables}[ A^agent_base(s, a^prefix, a) ].
 */
Eigen::MatrixXd surrogate_coefficients(const CooperativeMarkovGame& game,
                                       const JointTabularPolicy& base,
                                       const ExactEvaluation& base_eval,
                                       const AgentSubset& prefix,
                                       std::span<const Eigen::MatrixXd> prefix_tables, int agent);

/**
 * L^{i_{1:m}}(prefix_tables, candidate): expected conditional advantage of
 * `agent` under the base policy's improper state distribution, predecessors
 * drawn from their updated tables and the agent from `candidate_table`.
 * Zero when candidate_table equals the base table.
 */
double surrogate_value(const CooperativeMarkovGame& game, const JointTabularPolicy& base,
                       const AgentSubset& prefix, std::span<const Eigen::MatrixXd> prefix_tables,
                       int agent, const Eigen::MatrixXd& candidate_table);
double surrogate_value(const CooperativeMarkovGame& game, const JointTabularPolicy& base,
                       const ExactEvaluation& base_eval, const AgentSubset& prefix,
                       std::span<const Eigen::MatrixXd> prefix_tables, int agent,
                       const Eigen::MatrixXd& candidate_table);

struct AgentUpdateResult {
  Eigen::MatrixXd table;
  double surrogate = 0.0;
  double max_kl = 0.0;
  double penalized = 0.0;
};

/**
 * Exact argmax of coeff.x - penalty_c * KL(anchor, x) over one eta-floored
 * simplex row, by bisection on the KKT multiplier (unclamped coordinates
 * satisfy x_a = penalty_c * anchor_a / (mu - coeff_a)). penalty_c = 0
 * degenerates to the eta-soft vertex on the best coefficient.
 */
Eigen::VectorXd penalized_row_argmax(const Eigen::VectorXd& coeff, const Eigen::VectorXd& anchor,
                                     double penalty_c, double eta);

/**
 * One penalized subproblem: ascend L - C * maxKL over the agent's eta-soft
 * table, re-identifying the active KL state each step, and return the best
 * visited point (never worse than the zero update, whose objective is 0).
 */
AgentUpdateResult agent_update_step(const CooperativeMarkovGame& game,
                                    const JointTabularPolicy& base,
                                    const ExactEvaluation& base_eval, const AgentSubset& prefix,
                                    std::span<const Eigen::MatrixXd> prefix_tables, int agent,
                                    double penalty_c, const ExactIterationConfig& config);

struct ExactIterationResult {
  JointTabularPolicy policy;
  IterationTrace trace;
};

/**
 * Sequential multi-agent policy iteration: per iteration, recompute exact
 * advantages, set epsilon = max|A| and C = 4*discount*epsilon/(1-discount)^2,
 * draw a uniform random permutation of agents (seeded), and update agents in
 * order against the already-updated predecessors. The resulting return
 * sequence is monotone up to solver tolerance for every permutation.
 */
ExactIterationResult run_exact_iteration(const CooperativeMarkovGame& game,
                                         const JointTabularPolicy& initial_policy,
                                         const ExactIterationConfig& config);

}  // namespace hatr
