#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "hatr/game.hpp"
#include "hatr/policy_model.hpp"
#include "hatr/rollout.hpp"

namespace hatr {

/**
 * HAPPO knobs. The learning-rate default targets tabular-softmax logits;
 * neural actors would want it orders of magnitude lower.
 */
struct HappoConfig {
  double clip = 0.3;  // epsilon of the clip band
  int epochs = 5;
  double learning_rate = 5e-3;
  double moment_decay1 = 0.9;
  double moment_decay2 = 0.999;
  double stability_epsilon = 1e-5;
  int batch_episodes = 32;
  int episode_length = 16;
  double gae_lambda = 0.95;
  std::uint64_t seed = 0;
  bool normalize_advantages = false;
  /** Verify the clip envelope and zero-gradient region on every sample. */
  bool check_invariants = false;
  /** Use the identity agent order every iteration instead of drawing one. */
  bool fixed_permutation = false;
};

/** min(ratio * m, clip(ratio, 1 +- epsilon) * m); requires ratio > 0. */
double clip_objective(double ratio, double m_value, double epsilon);

/** Sampled clip objective (1/(B T)) sum min(ratio * M, clip(ratio) * M) with
 * ratios taken against the batch's behavior log-probabilities. */
double happo_objective_value(const TrajectoryBatch& batch, const AdvantageBuffer& buffer,
                             int agent, const SoftmaxPolicy& policy, double clip);

/** Gradient of the sampled clip objective; samples in the flat region of the
 * min contribute exactly zero. */
Eigen::VectorXd happo_objective_gradient(const TrajectoryBatch& batch,
                                         const AdvantageBuffer& buffer, int agent,
                                         const SoftmaxPolicy& policy, double clip);

/**
 * First-order moment-based adaptive ascender (the standard bias-corrected
 * two-moment recurrence). step() returns the increment to ADD to the
 * parameters for the given ascent gradient.
 */
class MomentAscender {
 public:
  MomentAscender(int dim, double decay1, double decay2, double stability_epsilon);
  Eigen::VectorXd step(const Eigen::VectorXd& gradient, double learning_rate);

 private:
  Eigen::VectorXd first_;
  Eigen::VectorXd second_;
  int count_ = 0;
  double decay1_;
  double decay2_;
  double epsilon_;
};

struct HappoUpdateStats {
  int epochs_run = 0;
  double mean_ratio = 1.0;
  double clip_fraction = 0.0;  // share of samples outside the clip band
  long samples_checked = 0;
  long envelope_violations = 0;
  long zero_gradient_violations = 0;
};

/**
 * `epochs` full-batch ascent steps on the sampled clip objective
 * (1/(B T)) sum min(ratio * M, clip(ratio) * M). Samples pushed into the
 * flat region of the min contribute exactly zero gradient.
 */
HappoUpdateStats happo_agent_update(const TrajectoryBatch& batch, const AdvantageBuffer& buffer,
                                    int agent, SoftmaxPolicy& policy, const HappoConfig& config);

struct HappoAgentRecord {
  int iteration = 0;
  std::vector<int> permutation;
  int agent = 0;
  HappoUpdateStats stats;
  double j_exact = 0.0;
  double j_sampled = 0.0;
};

/** One HAPPO pass; mirrors hatrpo_iteration with the clip update. */
std::vector<HappoAgentRecord> happo_iteration(const CooperativeMarkovGame& game,
                                              std::vector<SoftmaxPolicy>& policies,
                                              ValueTable& critic, const HappoConfig& config,
                                              int iteration_index);

struct HappoRunResult {
  std::vector<SoftmaxPolicy> policies;
  ValueTable critic;
  std::vector<HappoAgentRecord> records;
};

HappoRunResult run_happo(const CooperativeMarkovGame& game, const HappoConfig& config,
                         int iterations);

/** Columns: iter, perm, agent, epochs_run, mean_ratio, clip_fraction, J_exact, J_sampled. */
void write_happo_csv(std::ostream& out, std::span<const HappoAgentRecord> records);

}  // namespace hatr
