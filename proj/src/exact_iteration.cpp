#include "hatr/exact_iteration.hpp"

#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "hatr/rng.hpp"

namespace hatr {

namespace {

/** KL(p, q) between two strictly positive rows of equal length. */
double row_kl(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  double kl = 0.0;
  for (long i = 0; i < p.size(); ++i) kl += p[i] * std::log(p[i] / q[i]);
  return std::max(kl, 0.0);
}

}  // namespace

double max_kl(const Eigen::MatrixXd& table_a, const Eigen::MatrixXd& table_b) {
  if (table_a.rows() != table_b.rows() || table_a.cols() != table_b.cols()) {
    throw std::invalid_argument("max_kl: tables must share a shape");
  }
  if (table_a.minCoeff() <= 0.0 || table_b.minCoeff() <= 0.0) {
    throw std::invalid_argument("max_kl: tables must be strictly positive");
  }
  double worst = 0.0;
  for (long s = 0; s < table_a.rows(); ++s) {
    worst = std::max(worst, row_kl(table_a.row(s), table_b.row(s)));
  }
  return worst;
}

Eigen::MatrixXd surrogate_coefficients(const CooperativeMarkovGame& game,
                                       const JointTabularPolicy& base,
                                       const ExactEvaluation& base_eval,
                                       const AgentSubset& prefix,
                                       std::span<const Eigen::MatrixXd> prefix_tables,
                                       int agent) {
  if (prefix.contains(agent)) {
    throw std::invalid_argument("surrogate agent must not belong to the prefix");
  }
  if (static_cast<int>(prefix_tables.size()) != prefix.size()) {
    throw std::invalid_argument("one updated table per prefix agent is required");
  }
  const int actions = game.action_counts[agent];
  const AgentSubset agent_subset({agent}, game.num_agents);
  Eigen::MatrixXd coeff = Eigen::MatrixXd::Zero(game.num_states, actions);

  std::vector<int> prefix_actions(prefix.size(), 0);
  for (int s = 0; s < game.num_states; ++s) {
    const double occupancy = base_eval.state_occupancy[s];
    if (occupancy == 0.0) continue;
    // Odometer over the prefix agents' joint actions.
    std::fill(prefix_actions.begin(), prefix_actions.end(), 0);
    while (true) {
      double weight = occupancy;
      for (int k = 0; k < prefix.size(); ++k) {
        weight *= prefix_tables[k](s, prefix_actions[k]);
      }
      if (weight != 0.0) {
        for (int a = 0; a < actions; ++a) {
          const int own[1] = {a};
          coeff(s, a) += weight * multi_agent_advantage(game, base.tables(), base_eval, prefix,
                                                        prefix_actions, agent_subset, own, s);
        }
      }
      int digit = prefix.size();
      bool done = prefix.empty();
      while (digit > 0) {
        --digit;
        if (++prefix_actions[digit] < game.action_counts[prefix.id(digit)]) break;
        prefix_actions[digit] = 0;
        if (digit == 0) done = true;
      }
      if (done) break;
    }
  }
  return coeff;
}

double surrogate_value(const CooperativeMarkovGame& game, const JointTabularPolicy& base,
                       const ExactEvaluation& base_eval, const AgentSubset& prefix,
                       std::span<const Eigen::MatrixXd> prefix_tables, int agent,
                       const Eigen::MatrixXd& candidate_table) {
  const Eigen::MatrixXd coeff =
      surrogate_coefficients(game, base, base_eval, prefix, prefix_tables, agent);
  return (coeff.array() * candidate_table.array()).sum();
}

double surrogate_value(const CooperativeMarkovGame& game, const JointTabularPolicy& base,
                       const AgentSubset& prefix, std::span<const Eigen::MatrixXd> prefix_tables,
                       int agent, const Eigen::MatrixXd& candidate_table) {
  return surrogate_value(game, base, evaluate_exactly(game, base), prefix, prefix_tables, agent,
                         candidate_table);
}

Eigen::VectorXd penalized_row_argmax(const Eigen::VectorXd& coeff, const Eigen::VectorXd& anchor,
                                     double penalty_c, double eta) {
  const int dim = static_cast<int>(coeff.size());
  if (anchor.size() != dim) throw std::invalid_argument("coeff/anchor length mismatch");
  if (!(penalty_c > 0.0)) {
    int best = 0;
    coeff.maxCoeff(&best);
    Eigen::VectorXd x = Eigen::VectorXd::Constant(dim, eta);
    x[best] = 1.0 - (dim - 1) * eta;
    return x;
  }
  const double top = coeff.maxCoeff();
  const auto mass = [&](double mu) {
    double total = 0.0;
    for (int a = 0; a < dim; ++a) {
      total += std::max(eta, penalty_c * anchor[a] / (mu - coeff[a]));
    }
    return total;
  };
  double hi = top + penalty_c + 1.0;
  while (mass(hi) > 1.0) hi *= 2.0;
  // Walk the lower bracket toward the pole at max(coeff).
  double lo = top;
  double gap = hi - top;
  while (true) {
    gap *= 0.5;
    if (top + gap >= hi || gap < 1e-300) break;
    if (mass(top + gap) > 1.0) {
      lo = top + gap;
      break;
    }
    hi = top + gap;
  }
  if (lo == top) lo = std::nextafter(top, hi);
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mass(mid) > 1.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double mu = 0.5 * (lo + hi);
  Eigen::VectorXd x(dim);
  for (int a = 0; a < dim; ++a) x[a] = std::max(eta, penalty_c * anchor[a] / (mu - coeff[a]));
  x /= x.sum();
  return x;
}

AgentUpdateResult agent_update_step(const CooperativeMarkovGame& game,
                                    const JointTabularPolicy& base,
                                    const ExactEvaluation& base_eval, const AgentSubset& prefix,
                                    std::span<const Eigen::MatrixXd> prefix_tables, int agent,
                                    double penalty_c, const ExactIterationConfig& config) {
  const Eigen::MatrixXd coeff =
      surrogate_coefficients(game, base, base_eval, prefix, prefix_tables, agent);
  const Eigen::MatrixXd& anchor = base.table(agent);
  const double eta = base.eta();

  const auto objective = [&](const Eigen::MatrixXd& table, double& kl_out) {
    kl_out = max_kl(anchor, table);
    return (coeff.array() * table.array()).sum() - penalty_c * kl_out;
  };

  Eigen::MatrixXd current = anchor;
  AgentUpdateResult best{anchor, 0.0, 0.0, 0.0};  // zero update attains 0

  if (game.num_states == 1) {
    // One state: the penalized argmax is available in closed form (up to the
    // dual bisection); no ascent needed.
    current.row(0) = penalized_row_argmax(coeff.row(0), anchor.row(0), penalty_c, eta);
    double kl = 0.0;
    const double value = objective(current, kl);
    if (value > 0.0) {
      best.table = current;
      best.max_kl = kl;
      best.penalized = value;
      best.surrogate = (coeff.array() * current.array()).sum();
    }
    return best;
  }

  // Projected subgradient ascent with step backtracking: the penalty term's
  // curvature scales with penalty_c / probability, so a fixed step would
  // overshoot badly for strongly discounted games.
  double kl_scratch = 0.0;
  double current_value = 0.0;
  for (int step = 0; step < config.inner_steps; ++step) {
    Eigen::MatrixXd grad = coeff;
    if (penalty_c > 0.0) {
      // Subgradient of -C * maxKL: only the active state contributes.
      int active = 0;
      double active_kl = -1.0;
      for (int s = 0; s < game.num_states; ++s) {
        const double kl = row_kl(anchor.row(s), current.row(s));
        if (kl > active_kl) {
          active_kl = kl;
          active = s;
        }
      }
      if (active_kl > 0.0) {
        grad.row(active).array() +=
            penalty_c * anchor.row(active).array() / current.row(active).array();
      }
    }
    double trial_step = config.inner_step_size;
    bool advanced = false;
    for (int halving = 0; halving < 40; ++halving) {
      Eigen::MatrixXd candidate = current + trial_step * grad;
      for (int s = 0; s < game.num_states; ++s) {
        Eigen::VectorXd row = candidate.row(s);
        project_to_eta_simplex(row, eta);
        candidate.row(s) = row;
      }
      if (!candidate.allFinite()) {
        throw std::runtime_error("agent_update_step: ascent produced non-finite values");
      }
      const double value = objective(candidate, kl_scratch);
      if (value > current_value) {
        current = std::move(candidate);
        current_value = value;
        advanced = true;
        break;
      }
      trial_step *= 0.5;
    }
    if (!advanced) break;  // no ascent direction left at this subgradient
    if (current_value > best.penalized) {
      best.table = current;
      best.max_kl = kl_scratch;
      best.penalized = current_value;
      best.surrogate = (coeff.array() * current.array()).sum();
    }
  }
  return best;
}

ExactIterationResult run_exact_iteration(const CooperativeMarkovGame& game,
                                         const JointTabularPolicy& initial_policy,
                                         const ExactIterationConfig& config) {
  JointTabularPolicy policy = initial_policy;
  Rng rng = Rng::stream(config.permutation_seed, 0x7065726d);

  IterationTrace trace;
  trace.initial_return = expected_return(game, policy);
  double previous_return = trace.initial_return;

  std::vector<int> identity(game.num_agents);
  std::iota(identity.begin(), identity.end(), 0);

  for (int k = 0; k < config.max_iterations; ++k) {
    const ExactEvaluation eval = evaluate_exactly(game, policy);
    IterationRecord record;
    record.iteration = k;
    record.epsilon = eval.max_abs_advantage;
    record.penalty_c =
        4.0 * game.discount * record.epsilon / ((1.0 - game.discount) * (1.0 - game.discount));
    record.permutation = identity;
    rng.shuffle(record.permutation);

    std::vector<int> prefix_ids;
    std::vector<Eigen::MatrixXd> prefix_tables;
    JointTabularPolicy updated = policy;
    for (int agent : record.permutation) {
      const AgentSubset prefix(prefix_ids, game.num_agents);
      AgentUpdateResult result = agent_update_step(game, policy, eval, prefix, prefix_tables,
                                                   agent, record.penalty_c, config);
      record.agents.push_back({agent, result.surrogate, result.max_kl, result.penalized});
      updated = updated.with_table(agent, result.table);
      prefix_ids.push_back(agent);
      prefix_tables.push_back(std::move(result.table));
    }
    policy = std::move(updated);
    record.return_value = expected_return(game, policy);
    trace.iterations.push_back(std::move(record));

    const double gain = trace.iterations.back().return_value - previous_return;
    previous_return = trace.iterations.back().return_value;
    if (config.convergence_tol > 0.0 && gain < config.convergence_tol) break;
  }
  return {std::move(policy), std::move(trace)};
}

void IterationTrace::write_csv(std::ostream& out) const {
  out << "iter,perm,agent,surrogate,max_kl,penalized,J\n";
  char buffer[512];
  for (const IterationRecord& record : iterations) {
    std::string perm;
    for (std::size_t i = 0; i < record.permutation.size(); ++i) {
      if (i > 0) perm += '-';
      perm += std::to_string(record.permutation[i]);
    }
    for (const AgentUpdateRecord& agent : record.agents) {
      std::snprintf(buffer, sizeof(buffer), "%d,%s,%d,%.17g,%.17g,%.17g,%.17g\n",
                    record.iteration, perm.c_str(), agent.agent, agent.surrogate, agent.max_kl,
                    agent.penalized, record.return_value);
      out << buffer;
    }
  }
}

double IterationTrace::min_return_delta() const {
  double previous = initial_return;
  double worst = 0.0;
  for (const IterationRecord& record : iterations) {
    worst = std::min(worst, record.return_value - previous);
    previous = record.return_value;
  }
  return worst;
}

}  // namespace hatr
