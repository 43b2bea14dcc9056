#pragma once

#include <array>
#include <cstdint>

#include "hatr/game.hpp"

namespace hatr {

/**
 * One-state differential game with reward a1*a2 and independent unit-variance
 * Gaussian policies; the analytic setting where simultaneous trust-region
 * updates can jointly hurt while sequential ones improve.
 */
struct DifferentialGame {
  double mu1 = -0.25;
  double mu2 = 0.25;
  double kl_radius = 0.5;
};

struct MeanPair {
  double mu1 = 0.0;
  double mu2 = 0.0;
};

/** Expected reward E[a1*a2] = mu1*mu2. */
double differential_game_return(double mu1, double mu2);

/**
 * Both agents step sqrt(2*delta) in the sign of their own partial derivative
 * evaluated at the OLD means (the radius of a Gaussian KL ball of size delta).
 */
MeanPair simultaneous_trust_region_step(const DifferentialGame& game, double delta);

/**
 * Agents step one at a time in the given order; the second mover's gradient
 * sign is taken at the first mover's NEW mean.
 */
MeanPair sequential_trust_region_step(const DifferentialGame& game, double delta,
                                      std::array<int, 2> order);

/**
 * Sampled variant of the sequential step: gradient signs estimated from
 * Monte-Carlo rollouts with a baseline-centered advantage, the second mover
 * reweighted by the first mover's ratio. Qualitative counterpart of the
 * closed form.
 */
MeanPair sampled_sequential_step(const DifferentialGame& game, double delta, int num_samples,
                                 std::uint64_t seed);

/**
 * The n-agent one-state coordination game (n even, discount 0): reward 1
 * exactly on the joint actions (0..0, 1..1) and (1..1, 0..0) between the two
 * halves, 0 elsewhere.
 */
CooperativeMarkovGame build_proposition1_game(int n);

struct RandomGameOptions {
  int min_agents = 2;
  int max_agents = 4;
  int min_states = 2;
  int max_states = 5;
  int min_actions = 2;
  int max_actions = 3;
  double min_gamma = 0.2;
  double max_gamma = 0.95;
};

/** Seeded random dense game within the given size menu. */
CooperativeMarkovGame random_game(std::uint64_t seed, const RandomGameOptions& options = {});

/** Seeded one-state game; gamma cycles over {0, 0.3, 0.6, 0.9} by seed. */
CooperativeMarkovGame random_one_shot_game(std::uint64_t seed);

/** Seeded eta-soft random policy for a game. */
JointTabularPolicy random_policy(const CooperativeMarkovGame& game, double eta,
                                 std::uint64_t seed);

}  // namespace hatr
