// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Tolerances and budgets are pinned in code next to each check.

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "hatr/evaluation.hpp"
#include "hatr/exact_iteration.hpp"
#include "hatr/happo.hpp"
#include "hatr/hatrpo.hpp"
#include "hatr/policy_model.hpp"
#include "hatr/rollout.hpp"
#include "hatr/scenarios.hpp"
#include "hatr/theory.hpp"
#include "test_support.hpp"

using namespace hatr;

namespace {

int failures = 0;

void report(int index, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] %2d. %s: %s\n", pass ? "PASS" : "FAIL", index, name.c_str(),
              detail.c_str());
  if (!pass) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string format(const char* pattern, double a, double b = 0.0, double c = 0.0) {
  char buffer[256];
  std::snprintf(buffer, sizeof(buffer), pattern, a, b, c);
  return buffer;
}

/** All non-empty ordered subsets of {0..n-1}. */
std::vector<std::vector<int>> ordered_subsets(int n) {
  std::vector<std::vector<int>> result;
  std::vector<std::vector<int>> frontier{{}};
  for (int depth = 0; depth < n; ++depth) {
    std::vector<std::vector<int>> next;
    for (const auto& prefix : frontier) {
      for (int agent = 0; agent < n; ++agent) {
        if (std::find(prefix.begin(), prefix.end(), agent) != prefix.end()) continue;
        std::vector<int> extended = prefix;
        extended.push_back(agent);
        result.push_back(extended);
        next.push_back(std::move(extended));
      }
    }
    frontier = std::move(next);
  }
  return result;
}

void criterion_advantage_decomposition() {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const CooperativeMarkovGame game = random_game(seed);
    const JointTabularPolicy policy = random_policy(game, kDefaultEta, seed + 9000);
    const ExactEvaluation eval = evaluate_exactly(game, policy);
    for (const std::vector<int>& ids : ordered_subsets(game.num_agents)) {
      const AgentSubset subset(ids, game.num_agents);
      std::vector<int> actions(ids.size(), 0);
      while (true) {
        for (int s = 0; s < game.num_states; ++s) {
          worst = std::max(
              worst, check_advantage_decomposition(game, policy, eval, subset, actions, s));
        }
        std::size_t digit = ids.size();
        bool done = false;
        while (digit > 0) {
          --digit;
          if (++actions[digit] < game.action_counts[ids[digit]]) break;
          actions[digit] = 0;
          if (digit == 0) done = true;
        }
        if (done) break;
      }
    }
  }
  const double elapsed = seconds_since(start);
  report(1, "advantage decomposition over all ordered subsets (200 games)",
         worst <= 1e-10 && elapsed < 60.0,
         format("max residual %.3e (tol 1e-10), %.1f s (budget 60 s)", worst, elapsed));
}

void criterion_surrogate_lower_bound() {
  const auto start = std::chrono::steady_clock::now();
  double min_slack = 1e300;
  double worst_zero = 0.0;
  Rng perm_rng(424242);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const CooperativeMarkovGame game = random_game(seed + 300);
    const JointTabularPolicy policy = random_policy(game, kDefaultEta, seed + 11000);
    const JointTabularPolicy candidate = random_policy(game, kDefaultEta, seed + 12000);
    std::vector<int> permutation(game.num_agents);
    for (int i = 0; i < game.num_agents; ++i) permutation[i] = i;
    perm_rng.shuffle(permutation);
    min_slack =
        std::min(min_slack, check_surrogate_lower_bound(game, policy, candidate, permutation));
    if (seed % 10 == 0) {
      worst_zero = std::max(
          worst_zero, std::abs(check_surrogate_lower_bound(game, policy, policy, permutation)));
    }
  }
  const double elapsed = seconds_since(start);
  report(2, "sequential surrogate lower bound (200 policy pairs)",
         min_slack >= -1e-9 && worst_zero <= 1e-12 && elapsed < 60.0,
         format("min slack %.3e (tol -1e-9), identity slack %.3e (tol 1e-12), %.1f s",
                min_slack, worst_zero, elapsed));
}

void criterion_estimator_identity() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const CooperativeMarkovGame game = random_game(seed + 600);
    const JointTabularPolicy policy = random_policy(game, kDefaultEta, seed + 13000);
    const JointTabularPolicy updated = random_policy(game, kDefaultEta, seed + 14000);
    Rng pick = Rng::stream(seed, 0xacce97);
    const int agent = pick.uniform_int(0, game.num_agents - 1);
    std::vector<int> prefix_ids;
    for (int i = 0; i < game.num_agents; ++i) {
      if (i != agent && pick.uniform() < 0.6) prefix_ids.push_back(i);
    }
    const AgentSubset prefix(prefix_ids, game.num_agents);
    std::vector<Eigen::MatrixXd> prefix_tables;
    for (int id : prefix_ids) prefix_tables.push_back(updated.table(id));
    const int state = pick.uniform_int(0, game.num_states - 1);
    worst = std::max(worst, check_estimator_identity(game, policy, prefix, prefix_tables,
                                                     agent, updated.table(agent), state));
  }
  report(3, "off-policy estimator identity (200 configurations)", worst <= 1e-12,
         format("max residual %.3e (tol 1e-12)", worst));
}

void criterion_monotonic_improvement() {
  const auto start = std::chrono::steady_clock::now();
  double worst_delta = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const CooperativeMarkovGame game = random_game(seed + 900);
    ExactIterationConfig config;
    config.permutation_seed = seed;
    const ExactIterationResult result =
        run_exact_iteration(game, JointTabularPolicy::uniform(game, kDefaultEta), config);
    worst_delta = std::min(worst_delta, result.trace.min_return_delta());
  }
  const double elapsed = seconds_since(start);
  report(4, "monotonic improvement of the exact iteration (20 games)",
         worst_delta >= -1e-9 && elapsed < 300.0,
         format("min return delta %.3e (tol -1e-9), %.1f s (budget 300 s)", worst_delta,
                elapsed));
}

void criterion_ne_at_convergence() {
  double worst_tr = 0.0;
  double worst_br = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const CooperativeMarkovGame game = random_one_shot_game(seed);
    ExactIterationConfig config;
    config.max_iterations = 20000;
    config.convergence_tol = 0.0;
    config.permutation_seed = seed;
    const ExactIterationResult result =
        run_exact_iteration(game, JointTabularPolicy::uniform(game, kDefaultEta), config);
    worst_tr = std::max(worst_tr, tr_stationarity_gap(game, result.policy).maxCoeff());
    worst_br = std::max(worst_br, best_response_gap(game, result.policy).maxCoeff());
  }
  report(5, "NE at one-shot fixpoints (10 games)", worst_tr <= 1e-6 && worst_br <= 1e-4,
         format("max TR gap %.3e (tol 1e-6), max best-response gap %.3e (tol 1e-4)", worst_tr,
                worst_br));
}

void criterion_shared_policy_gap() {
  bool pass = true;
  double worst_grid = 0.0;
  for (int n : {2, 4, 6}) {
    const SharedPolicyGap gap = shared_policy_gap(n);
    if (gap.ratio != std::ldexp(1.0, 1 - n) || gap.optimal != 1.0) pass = false;
    worst_grid = std::max(worst_grid, std::abs(gap.grid_optimal - gap.shared_optimal));
  }
  report(6, "parameter-sharing suboptimality ratio 2/2^n for n in {2,4,6}",
         pass && worst_grid <= 1e-6,
         format("exact ratios, grid deviation %.3e (tol 1e-6)", worst_grid));
}

void criterion_figure1() {
  const DifferentialGame game;
  const double j0 = differential_game_return(game.mu1, game.mu2);
  const MeanPair seq = sequential_trust_region_step(game, 0.5, {1, 2});
  const MeanPair sim = simultaneous_trust_region_step(game, 0.5);
  const double j_seq = differential_game_return(seq.mu1, seq.mu2);
  const double j_sim = differential_game_return(sim.mu1, sim.mu2);
  const bool pass = std::abs(j_seq - 0.9375) <= 1e-12 && std::abs(j_sim - -0.5625) <= 1e-12 &&
                    std::abs(j0 - -0.0625) <= 1e-12 && j_seq > j0 && j_sim < j0;
  report(7, "differential-game reproduction (sequential vs simultaneous)", pass,
         format("J0 %.6f, sequential %.6f, simultaneous %.6f (tol 1e-12)", j0, j_seq, j_sim));
}

void criterion_hatrpo() {
  const auto start = std::chrono::steady_clock::now();
  const CooperativeMarkovGame game = build_proposition1_game(2);
  int successes = 0;
  double worst_kl = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    HatrpoConfig config;
    config.seed = seed;
    const HatrpoRunResult result = run_hatrpo(game, config, 200);
    for (const HatrpoAgentRecord& record : result.records) {
      if (record.accepted_j >= 0) worst_kl = std::max(worst_kl, record.kl_exact);
    }
    if (result.records.back().j_exact >= 0.9) ++successes;
  }
  const double elapsed = seconds_since(start);
  report(8, "HATRPO on the coordination game (20 seeds x 200 iterations)",
         worst_kl <= 0.06 + 1e-8 && successes >= 18 && elapsed < 120.0,
         format("max exact KL %.6f (cap 0.06+1e-8), %.0f/20 seeds reached J>=0.9, %.1f s",
                worst_kl, static_cast<double>(successes), elapsed));
}

void criterion_happo() {
  const auto start = std::chrono::steady_clock::now();
  const CooperativeMarkovGame game = build_proposition1_game(2);
  int successes = 0;
  long violations = 0;
  long checked = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    HappoConfig config;
    config.seed = seed;
    config.check_invariants = true;
    const HappoRunResult result = run_happo(game, config, 500);
    for (const HappoAgentRecord& record : result.records) {
      checked += record.stats.samples_checked;
      violations += record.stats.envelope_violations + record.stats.zero_gradient_violations;
    }
    if (result.records.back().j_exact >= 0.9) ++successes;
  }
  const double elapsed = seconds_since(start);
  report(9, "HAPPO on the coordination game (20 seeds x 500 iterations)",
         successes >= 18 && violations == 0 && checked > 0,
         format("%.0f/20 seeds reached J>=0.9, %.0f clip-invariant violations, %.1f s",
                static_cast<double>(successes), static_cast<double>(violations), elapsed));
}

void criterion_numerical_hygiene() {
  bool pass = true;

  // Scores against central differences on 100 random points.
  Rng rng(515151);
  double worst_score = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int states = rng.uniform_int(1, 3);
    const int actions = rng.uniform_int(2, 4);
    Eigen::MatrixXd logits(states, actions);
    for (int s = 0; s < states; ++s) {
      for (int a = 0; a < actions; ++a) logits(s, a) = rng.uniform(-2.0, 2.0);
    }
    SoftmaxPolicy policy(logits);
    const int s = rng.uniform_int(0, states - 1);
    const int a = rng.uniform_int(0, actions - 1);
    const Eigen::VectorXd analytic = policy.score(s, a);
    const Eigen::VectorXd base = policy.parameters();
    const double h = 1e-6;
    for (int k = 0; k < policy.param_count(); ++k) {
      Eigen::VectorXd params = base;
      params[k] += h;
      policy.set_parameters(params);
      const double upper = policy.log_prob(s, a);
      params[k] -= 2.0 * h;
      policy.set_parameters(params);
      const double lower = policy.log_prob(s, a);
      policy.set_parameters(base);
      const double numeric = (upper - lower) / (2.0 * h);
      worst_score = std::max(
          worst_score, std::abs(analytic[k] - numeric) / std::max(1.0, std::abs(numeric)));
    }
  }
  if (worst_score > 1e-5) pass = false;

  // Fisher quadratic form against the KL Hessian-vector product.
  double worst_fisher = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int states = rng.uniform_int(1, 3);
    const int actions = rng.uniform_int(2, 4);
    Eigen::MatrixXd logits(states, actions);
    for (int s = 0; s < states; ++s) {
      for (int a = 0; a < actions; ++a) logits(s, a) = rng.uniform(-1.5, 1.5);
    }
    const SoftmaxPolicy policy(logits);
    Eigen::VectorXd weights(states);
    for (int s = 0; s < states; ++s) weights[s] = rng.uniform(0.1, 1.0);
    weights /= weights.sum();
    Eigen::VectorXd v(policy.param_count());
    for (int k = 0; k < v.size(); ++k) v[k] = rng.uniform(-1.0, 1.0);
    const double quadratic = v.dot(softmax_fisher_vector_product(policy, weights, v));
    double fisher_form = 0.0;
    for (int s = 0; s < states; ++s) {
      const Eigen::VectorXd probs = policy.state_probs(s);
      for (int a = 0; a < actions; ++a) {
        const double dot = policy.score(s, a).dot(v);
        fisher_form += weights[s] * probs[a] * dot * dot;
      }
    }
    worst_fisher = std::max(worst_fisher, std::abs(quadratic - fisher_form));
  }
  if (worst_fisher > 1e-8) pass = false;

  // GAE recursion vs direct summation.
  double worst_gae = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const CooperativeMarkovGame game = random_game(seed + 1500);
    const JointTabularPolicy policy = random_policy(game, kDefaultEta, seed + 1600);
    const std::vector<Eigen::MatrixXd> tables(policy.tables().begin(), policy.tables().end());
    const TrajectoryBatch batch = collect_rollouts(game, tables, 4, 12, seed);
    ValueTable critic(game.num_states);
    Rng vals(seed + 1700);
    for (int s = 0; s < game.num_states; ++s) critic.values[s] = vals.uniform(-1.0, 1.0);
    for (double lambda : {0.0, 0.5, 0.95, 1.0}) {
      const AdvantageBuffer recursive = compute_gae(batch, critic, game.discount, lambda);
      for (int episode = 0; episode < batch.num_episodes; ++episode) {
        for (int t = 0; t < batch.horizon; ++t) {
          double direct = 0.0;
          double weight = 1.0;
          for (int l = 0; t + l < batch.horizon; ++l) {
            const int step = t + l;
            const double next_value = step + 1 < batch.horizon
                                          ? critic.values[batch.state(episode, step + 1)]
                                          : critic.values[batch.final_states[episode]];
            direct += weight * (batch.reward(episode, step) + game.discount * next_value -
                                critic.values[batch.state(episode, step)]);
            weight *= game.discount * lambda;
          }
          worst_gae = std::max(
              worst_gae, std::abs(recursive.advantages[batch.flat(episode, t)] - direct));
        }
      }
    }
  }
  if (worst_gae > 1e-12) pass = false;

  // Bit-identical repetition of seeded learner runs.
  bool bit_identical = true;
  {
    const CooperativeMarkovGame game = build_proposition1_game(2);
    HatrpoConfig trpo_config;
    trpo_config.seed = 23;
    const HatrpoRunResult a = run_hatrpo(game, trpo_config, 20);
    const HatrpoRunResult b = run_hatrpo(game, trpo_config, 20);
    for (int i = 0; i < 2 && bit_identical; ++i) {
      const Eigen::VectorXd pa = a.policies[i].parameters();
      const Eigen::VectorXd pb = b.policies[i].parameters();
      for (long k = 0; k < pa.size(); ++k) {
        if (pa[k] != pb[k]) bit_identical = false;
      }
    }
    HappoConfig ppo_config;
    ppo_config.seed = 29;
    const HappoRunResult c = run_happo(game, ppo_config, 20);
    const HappoRunResult d = run_happo(game, ppo_config, 20);
    for (int i = 0; i < 2 && bit_identical; ++i) {
      const Eigen::VectorXd pc = c.policies[i].parameters();
      const Eigen::VectorXd pd = d.policies[i].parameters();
      for (long k = 0; k < pc.size(); ++k) {
        if (pc[k] != pd[k]) bit_identical = false;
      }
    }
  }
  if (!bit_identical) pass = false;

  report(10, "numerical hygiene (scores, Fisher form, GAE, determinism)", pass,
         format("score FD %.2e (tol 1e-5), Fisher %.2e (tol 1e-8), GAE %.2e (tol 1e-12), ",
                worst_score, worst_fisher, worst_gae) +
             (bit_identical ? "bit-identical runs" : "determinism FAILED"));
}

}  // namespace

int main() {
  criterion_advantage_decomposition();
  criterion_surrogate_lower_bound();
  criterion_estimator_identity();
  criterion_monotonic_improvement();
  criterion_ne_at_convergence();
  criterion_shared_policy_gap();
  criterion_figure1();
  criterion_hatrpo();
  criterion_happo();
  criterion_numerical_hygiene();
  if (failures > 0) {
    std::printf("%d criterion(s) failed\n", failures);
    return 1;
  }
  std::printf("all 10 acceptance criteria passed\n");
  return 0;
}
