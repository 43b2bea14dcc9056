#pragma once

#include <Eigen/Dense>
#include <vector>

#include "hatr/rng.hpp"

namespace hatr {

/**
 * Tabular-softmax policy for one agent: logits theta of shape
 * (num_states x num_actions), probabilities softmax(theta(s, .)) per row.
 * Parameters flatten row-major (state-major). All derivative operations are
 * analytic; the categorical Fisher diag(p) - p p' per state block is the KL
 * Hessian at the anchor point.
 */
class SoftmaxPolicy {
 public:
  SoftmaxPolicy(int num_states, int num_actions);
  explicit SoftmaxPolicy(Eigen::MatrixXd logits);

  int num_states() const { return static_cast<int>(logits_.rows()); }
  int num_actions() const { return static_cast<int>(logits_.cols()); }
  int param_count() const { return num_states() * num_actions(); }

  const Eigen::MatrixXd& logits() const { return logits_; }
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& params);

  Eigen::VectorXd state_probs(int state) const;
  Eigen::MatrixXd prob_table() const;

  double log_prob(int state, int action) const;
  /** Gradient of log_prob in the flat parameter vector. */
  Eigen::VectorXd score(int state, int action) const;

 private:
  Eigen::MatrixXd logits_;
};

/**
 * Expected KL(old, new) under the given per-state weights. Weights need not
 * be normalized; they are used as given.
 */
double softmax_kl(const SoftmaxPolicy& old_policy, const SoftmaxPolicy& new_policy,
                  const Eigen::VectorXd& state_weights);

/**
 * Hessian-vector product of the weighted expected KL at new == old: the
 * weighted categorical Fisher applied blockwise,
 * (Hv)(s,.) = w(s) * (p_s .* v_s - p_s (p_s . v_s)).
 */
Eigen::VectorXd softmax_fisher_vector_product(const SoftmaxPolicy& policy,
                                              const Eigen::VectorXd& state_weights,
                                              const Eigen::VectorXd& vector);

/** Central-difference check of the KL Hessian; testing fallback. */
Eigen::VectorXd finite_difference_kl_hvp(const SoftmaxPolicy& policy,
                                         const Eigen::VectorXd& state_weights,
                                         const Eigen::VectorXd& vector, double step);

/**
 * One-dimensional Gaussian policy with learnable mean and fixed unit
 * standard deviation, matching the differential-game scenario.
 */
class GaussianMeanPolicy {
 public:
  explicit GaussianMeanPolicy(double mean) : mean_(mean) {}

  double mean() const { return mean_; }
  static constexpr double stddev() { return 1.0; }

  double log_prob(double action) const;
  /** d log_prob / d mean = action - mean. */
  double score(double action) const { return action - mean_; }
  double sample(Rng& rng) const { return mean_ + rng.normal(); }

  /** KL(N(old,1), N(new,1)) = (old - new)^2 / 2. */
  static double kl(const GaussianMeanPolicy& old_policy, const GaussianMeanPolicy& new_policy);

 private:
  double mean_ = 0.0;
};

/**
 * Flat parameter vector spanning several agents' policies, with slicing
 * offsets; the serialization carrier for joint policy snapshots.
 */
struct ParameterVector {
  Eigen::VectorXd values;
  std::vector<int> offsets;  // offsets.size() == num_agents + 1

  int num_agents() const { return static_cast<int>(offsets.size()) - 1; }
  Eigen::VectorXd slice(int agent) const {
    return values.segment(offsets[agent], offsets[agent + 1] - offsets[agent]);
  }
  static ParameterVector concatenate(const std::vector<SoftmaxPolicy>& policies);
};

}  // namespace hatr
