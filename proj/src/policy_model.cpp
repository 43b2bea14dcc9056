#include "hatr/policy_model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace hatr {

SoftmaxPolicy::SoftmaxPolicy(int num_states, int num_actions)
    : logits_(Eigen::MatrixXd::Zero(num_states, num_actions)) {
  if (num_states <= 0 || num_actions <= 0) {
    throw std::invalid_argument("softmax policy needs positive dimensions");
  }
}

SoftmaxPolicy::SoftmaxPolicy(Eigen::MatrixXd logits) : logits_(std::move(logits)) {
  if (!logits_.allFinite()) throw std::invalid_argument("logits must be finite");
}

Eigen::VectorXd SoftmaxPolicy::parameters() const {
  Eigen::VectorXd flat(param_count());
  for (int s = 0; s < num_states(); ++s) {
    flat.segment(s * num_actions(), num_actions()) = logits_.row(s);
  }
  return flat;
}

void SoftmaxPolicy::set_parameters(const Eigen::VectorXd& params) {
  if (params.size() != param_count()) {
    throw std::invalid_argument("parameter vector has wrong length");
  }
  if (!params.allFinite()) throw std::invalid_argument("parameters must be finite");
  for (int s = 0; s < num_states(); ++s) {
    logits_.row(s) = params.segment(s * num_actions(), num_actions());
  }
}

Eigen::VectorXd SoftmaxPolicy::state_probs(int state) const {
  const Eigen::VectorXd row = logits_.row(state);
  const double top = row.maxCoeff();
  Eigen::VectorXd probs = (row.array() - top).exp();
  probs /= probs.sum();
  return probs;
}

Eigen::MatrixXd SoftmaxPolicy::prob_table() const {
  Eigen::MatrixXd table(num_states(), num_actions());
  for (int s = 0; s < num_states(); ++s) table.row(s) = state_probs(s);
  return table;
}

double SoftmaxPolicy::log_prob(int state, int action) const {
  if (state < 0 || state >= num_states() || action < 0 || action >= num_actions()) {
    throw std::invalid_argument("log_prob: index out of range");
  }
  const Eigen::VectorXd row = logits_.row(state);
  const double top = row.maxCoeff();
  const double log_norm = top + std::log((row.array() - top).exp().sum());
  return logits_(state, action) - log_norm;
}

Eigen::VectorXd SoftmaxPolicy::score(int state, int action) const {
  if (state < 0 || state >= num_states() || action < 0 || action >= num_actions()) {
    throw std::invalid_argument("score: index out of range");
  }
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(param_count());
  const Eigen::VectorXd probs = state_probs(state);
  grad.segment(state * num_actions(), num_actions()) = -probs;
  grad[state * num_actions() + action] += 1.0;
  return grad;
}

double softmax_kl(const SoftmaxPolicy& old_policy, const SoftmaxPolicy& new_policy,
                  const Eigen::VectorXd& state_weights) {
  if (old_policy.num_states() != new_policy.num_states() ||
      old_policy.num_actions() != new_policy.num_actions()) {
    throw std::invalid_argument("softmax_kl: policies must share a shape");
  }
  if (state_weights.size() != old_policy.num_states()) {
    throw std::invalid_argument("softmax_kl: one weight per state is required");
  }
  double total = 0.0;
  for (int s = 0; s < old_policy.num_states(); ++s) {
    if (state_weights[s] == 0.0) continue;
    double kl = 0.0;
    for (int a = 0; a < old_policy.num_actions(); ++a) {
      kl += std::exp(old_policy.log_prob(s, a)) *
            (old_policy.log_prob(s, a) - new_policy.log_prob(s, a));
    }
    total += state_weights[s] * std::max(kl, 0.0);
  }
  return total;
}

Eigen::VectorXd softmax_fisher_vector_product(const SoftmaxPolicy& policy,
                                              const Eigen::VectorXd& state_weights,
                                              const Eigen::VectorXd& vector) {
  if (vector.size() != policy.param_count()) {
    throw std::invalid_argument("fisher_vector_product: vector length mismatch");
  }
  if (state_weights.size() != policy.num_states()) {
    throw std::invalid_argument("fisher_vector_product: one weight per state is required");
  }
  const int actions = policy.num_actions();
  Eigen::VectorXd result = Eigen::VectorXd::Zero(policy.param_count());
  for (int s = 0; s < policy.num_states(); ++s) {
    if (state_weights[s] == 0.0) continue;
    const Eigen::VectorXd probs = policy.state_probs(s);
    const Eigen::VectorXd segment = vector.segment(s * actions, actions);
    const double mean = probs.dot(segment);
    result.segment(s * actions, actions) =
        state_weights[s] * (probs.array() * (segment.array() - mean)).matrix();
  }
  return result;
}

Eigen::VectorXd finite_difference_kl_hvp(const SoftmaxPolicy& policy,
                                         const Eigen::VectorXd& state_weights,
                                         const Eigen::VectorXd& vector, double step) {
  // Central difference of the analytic KL gradient
  // d KL(old, theta) / d theta(s,a) = w(s) * (softmax(theta)(s,a) - p_old(s,a)).
  const Eigen::MatrixXd old_probs = policy.prob_table();
  const auto kl_gradient = [&](const Eigen::VectorXd& params) {
    SoftmaxPolicy shifted = policy;
    shifted.set_parameters(params);
    const Eigen::MatrixXd probs = shifted.prob_table();
    Eigen::VectorXd grad(policy.param_count());
    const int actions = policy.num_actions();
    for (int s = 0; s < policy.num_states(); ++s) {
      grad.segment(s * actions, actions) =
          state_weights[s] * (probs.row(s) - old_probs.row(s));
    }
    return grad;
  };
  const Eigen::VectorXd base = policy.parameters();
  return (kl_gradient(base + step * vector) - kl_gradient(base - step * vector)) /
         (2.0 * step);
}

double GaussianMeanPolicy::log_prob(double action) const {
  const double centered = action - mean_;
  return -0.5 * centered * centered - 0.5 * std::log(2.0 * std::numbers::pi);
}

double GaussianMeanPolicy::kl(const GaussianMeanPolicy& old_policy,
                              const GaussianMeanPolicy& new_policy) {
  const double diff = old_policy.mean() - new_policy.mean();
  return 0.5 * diff * diff;
}

ParameterVector ParameterVector::concatenate(const std::vector<SoftmaxPolicy>& policies) {
  ParameterVector out;
  out.offsets.push_back(0);
  int total = 0;
  for (const SoftmaxPolicy& policy : policies) {
    total += policy.param_count();
    out.offsets.push_back(total);
  }
  out.values.resize(total);
  for (std::size_t i = 0; i < policies.size(); ++i) {
    out.values.segment(out.offsets[i], policies[i].param_count()) = policies[i].parameters();
  }
  return out;
}

}  // namespace hatr
