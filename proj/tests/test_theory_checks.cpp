#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numeric>
#include <vector>

#include "hatr/evaluation.hpp"
#include "hatr/exact_iteration.hpp"
#include "hatr/scenarios.hpp"
#include "hatr/theory.hpp"

using namespace hatr;

namespace {

std::vector<int> identity_permutation(int n) {
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  return perm;
}

}  // namespace

TEST_SUITE("theory_checks") {

TEST_CASE("advantage decomposition: singleton, full subsets and all orderings") {
  const CooperativeMarkovGame game = random_game(101);
  const JointTabularPolicy policy = random_policy(game, 1e-6, 102);
  const ExactEvaluation eval = evaluate_exactly(game, policy);

  // m = 1: both sides are the same single-agent advantage.
  for (int agent = 0; agent < game.num_agents; ++agent) {
    const AgentSubset single({agent}, game.num_agents);
    for (int a = 0; a < game.action_counts[agent]; ++a) {
      const int act[1] = {a};
      CHECK(check_advantage_decomposition(game, policy, eval, single, act, 0) <= 1e-14);
    }
  }

  // Full subset in both natural and reversed order, over all joint actions.
  std::vector<int> forward = identity_permutation(game.num_agents);
  std::vector<int> backward(forward.rbegin(), forward.rend());
  for (const std::vector<int>& order : {forward, backward}) {
    const AgentSubset subset(order, game.num_agents);
    std::vector<int> joint(game.num_agents);
    std::vector<int> reordered(game.num_agents);
    for (long a = 0; a < game.num_joint_actions(); ++a) {
      game.actions.decode(a, joint);
      for (int k = 0; k < game.num_agents; ++k) reordered[k] = joint[order[k]];
      for (int s = 0; s < game.num_states; ++s) {
        CHECK(check_advantage_decomposition(game, policy, eval, subset, reordered, s) <= 1e-12);
      }
    }
  }
}

TEST_CASE("surrogate lower bound: zero at the base policy, nonnegative slack, n = 1") {
  const CooperativeMarkovGame game = random_game(111);
  const JointTabularPolicy policy = random_policy(game, 1e-6, 112);
  const std::vector<int> perm = identity_permutation(game.num_agents);

  CHECK(std::abs(check_surrogate_lower_bound(game, policy, policy, perm)) <= 1e-12);

  Rng rng(113);
  for (int trial = 0; trial < 200; ++trial) {
    const std::uint64_t seed = 200 + trial;
    const CooperativeMarkovGame trial_game = random_game(seed);
    const JointTabularPolicy base = random_policy(trial_game, 1e-6, seed + 10000);
    const JointTabularPolicy candidate = random_policy(trial_game, 1e-6, seed + 20000);
    std::vector<int> trial_perm = identity_permutation(trial_game.num_agents);
    rng.shuffle(trial_perm);
    CHECK(check_surrogate_lower_bound(trial_game, base, candidate, trial_perm) >= -1e-9);
  }

  // n = 1 reproduces the single-agent bound.
  RandomGameOptions single;
  single.min_agents = single.max_agents = 1;
  for (std::uint64_t seed : {301ull, 302ull, 303ull}) {
    const CooperativeMarkovGame solo = random_game(seed, single);
    const JointTabularPolicy base = random_policy(solo, 1e-6, seed + 1);
    const JointTabularPolicy candidate = random_policy(solo, 1e-6, seed + 2);
    CHECK(check_surrogate_lower_bound(solo, base, candidate, std::vector<int>{0}) >= -1e-9);
  }
}

TEST_CASE("slack is strictly positive when every summand strictly improves") {
  // Build the candidate by one round of penalized agent updates; each
  // accepted summand is then strictly positive and the bound is loose.
  for (std::uint64_t seed : {310ull, 311ull, 312ull}) {
    const CooperativeMarkovGame game = random_game(seed);
    const JointTabularPolicy base = random_policy(game, 1e-6, seed + 41);
    const ExactEvaluation eval = evaluate_exactly(game, base);
    const double penalty = 4.0 * game.discount * eval.max_abs_advantage /
                           ((1.0 - game.discount) * (1.0 - game.discount));
    ExactIterationConfig config;
    std::vector<int> permutation(game.num_agents);
    std::iota(permutation.begin(), permutation.end(), 0);
    std::vector<int> prefix_ids;
    std::vector<Eigen::MatrixXd> prefix_tables;
    JointTabularPolicy candidate = base;
    bool all_strict = true;
    for (int agent : permutation) {
      const AgentSubset prefix(prefix_ids, game.num_agents);
      const AgentUpdateResult update =
          agent_update_step(game, base, eval, prefix, prefix_tables, agent, penalty, config);
      all_strict = all_strict && update.penalized > 0.0;
      candidate = candidate.with_table(agent, update.table);
      prefix_ids.push_back(agent);
      prefix_tables.push_back(update.table);
    }
    if (all_strict) {
      CHECK(check_surrogate_lower_bound(game, base, candidate, permutation) > 0.0);
    }
  }
}

TEST_CASE("KL sum inequality: identical, single differing agent, random pairs") {
  const CooperativeMarkovGame game = random_game(121);
  const JointTabularPolicy policy = random_policy(game, 1e-6, 122);

  const auto [same_lhs, same_rhs] = check_kl_sum_inequality(policy, policy);
  CHECK(same_lhs == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(same_rhs == doctest::Approx(0.0).epsilon(1e-15));

  // Only one agent differs: the per-state joint KL collapses to that agent's
  // KL, so lhs = max_s KL_0(s) = rhs.
  const JointTabularPolicy other = random_policy(game, 1e-6, 123);
  const JointTabularPolicy candidate = policy.with_table(0, other.table(0));
  const auto [lhs, rhs] = check_kl_sum_inequality(policy, candidate);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));

  for (std::uint64_t seed : {401ull, 402ull, 403ull, 404ull}) {
    const CooperativeMarkovGame trial_game = random_game(seed);
    const JointTabularPolicy a = random_policy(trial_game, 1e-6, seed + 11);
    const JointTabularPolicy b = random_policy(trial_game, 1e-6, seed + 13);
    const auto [trial_lhs, trial_rhs] = check_kl_sum_inequality(a, b);
    CHECK(trial_lhs <= trial_rhs + 1e-12);
  }
}

TEST_CASE("estimator identity: vanishing ratio, empty prefix, three agents") {
  // hat = base policy of the agent makes the right side exactly zero.
  const CooperativeMarkovGame game = random_game(131);
  const JointTabularPolicy policy = random_policy(game, 1e-6, 132);
  const JointTabularPolicy bar = random_policy(game, 1e-6, 133);
  const AgentSubset prefix({1}, game.num_agents);
  const std::vector<Eigen::MatrixXd> prefix_tables{bar.table(1)};
  CHECK(check_estimator_identity(game, policy, prefix, prefix_tables, 0, policy.table(0), 0) <=
        1e-13);

  // Empty prefix: E_{a^i ~ hat}[A^i(s, a^i)] identity.
  const AgentSubset empty({}, game.num_agents);
  CHECK(check_estimator_identity(game, policy, empty, {}, 0, bar.table(0), 0) <= 1e-13);

  RandomGameOptions three;
  three.min_agents = three.max_agents = 3;
  for (std::uint64_t seed : {501ull, 502ull, 503ull}) {
    const CooperativeMarkovGame trio = random_game(seed, three);
    const JointTabularPolicy base = random_policy(trio, 1e-6, seed + 3);
    const JointTabularPolicy updated = random_policy(trio, 1e-6, seed + 5);
    const AgentSubset pair({2, 0}, 3);
    const std::vector<Eigen::MatrixXd> tables{updated.table(2), updated.table(0)};
    for (int s = 0; s < trio.num_states; ++s) {
      CHECK(check_estimator_identity(trio, base, pair, tables, 1, updated.table(1), s) <= 1e-12);
    }
  }
}

TEST_CASE("best response gap: nonnegative, vertex policies, the coordination game") {
  const CooperativeMarkovGame one_shot = random_one_shot_game(5);
  const JointTabularPolicy random_pi = random_policy(one_shot, 1e-6, 141);
  const Eigen::VectorXd gaps = best_response_gap(one_shot, random_pi);
  CHECK(gaps.minCoeff() >= -1e-10);

  // A mutual eta-soft vertex best response: every gap below the eta bound.
  const CooperativeMarkovGame prop1 = build_proposition1_game(2);
  const int coordinated[2] = {0, 1};
  const JointTabularPolicy vertex = JointTabularPolicy::vertex(prop1, coordinated, 1e-6);
  const Eigen::VectorXd vertex_gaps = best_response_gap(prop1, vertex);
  for (int i = 0; i < 2; ++i) {
    CHECK(vertex_gaps[i] >= -1e-12);
    CHECK(vertex_gaps[i] <= 2 * 1e-6 * 1.0);  // |A^i| * eta * max|r|
  }

  // Multi-state ascent path: still a nonnegative lower bound.
  const CooperativeMarkovGame multi = random_game(142);
  const JointTabularPolicy multi_policy = random_policy(multi, 1e-6, 143);
  CHECK(best_response_gap(multi, multi_policy).minCoeff() >= -1e-8);
}

TEST_CASE("TR stationarity gap: nonnegative, zero at fixpoints, positive when perturbed") {
  const CooperativeMarkovGame game = random_one_shot_game(9);
  const JointTabularPolicy policy = random_policy(game, 1e-6, 151);
  CHECK(tr_stationarity_gap(game, policy).minCoeff() >= 0.0);

  ExactIterationConfig config;
  config.max_iterations = 4000;
  config.convergence_tol = 0.0;
  config.permutation_seed = 9;
  const ExactIterationResult run =
      run_exact_iteration(game, JointTabularPolicy::uniform(game, 1e-6), config);
  const Eigen::VectorXd gaps = tr_stationarity_gap(game, run.policy);
  CHECK(gaps.maxCoeff() <= 1e-6);
  CHECK(best_response_gap(game, run.policy).maxCoeff() <= 1e-4);

  // Deliberate perturbation away from the fixpoint must open a gap.
  const CooperativeMarkovGame prop1 = build_proposition1_game(2);
  const int coordinated[2] = {0, 1};
  JointTabularPolicy perturbed = JointTabularPolicy::vertex(prop1, coordinated, 1e-6);
  Eigen::MatrixXd mixed(1, 2);
  mixed << 0.6, 0.4;
  perturbed = perturbed.with_table(0, mixed);
  CHECK(tr_stationarity_gap(prop1, perturbed).maxCoeff() > 1e-3);
}

TEST_CASE("shared policy gap: exact ratios and the grid cross-check") {
  const SharedPolicyGap two = shared_policy_gap(2);
  CHECK(two.ratio == 0.5);
  CHECK(two.optimal == 1.0);
  CHECK(std::abs(two.grid_optimal - two.shared_optimal) <= 1e-6);

  const SharedPolicyGap four = shared_policy_gap(4);
  CHECK(four.ratio == 0.125);
  CHECK(four.optimal == 1.0);
  CHECK(std::abs(four.grid_optimal - four.shared_optimal) <= 1e-6);

  CHECK_THROWS_AS(shared_policy_gap(3), std::invalid_argument);
  CHECK_THROWS_AS(shared_policy_gap(0), std::invalid_argument);
}

}  // TEST_SUITE
