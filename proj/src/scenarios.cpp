#include "hatr/scenarios.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "hatr/policy_model.hpp"
#include "hatr/rng.hpp"

namespace hatr {

namespace {

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

double differential_game_return(double mu1, double mu2) { return mu1 * mu2; }

MeanPair simultaneous_trust_region_step(const DifferentialGame& game, double delta) {
  if (delta < 0.0) throw std::invalid_argument("delta must be nonnegative");
  const double radius = std::sqrt(2.0 * delta);
  // dJ/dmu1 = mu2 and dJ/dmu2 = mu1, both taken at the old means.
  return {game.mu1 + radius * sign(game.mu2), game.mu2 + radius * sign(game.mu1)};
}

MeanPair sequential_trust_region_step(const DifferentialGame& game, double delta,
                                      std::array<int, 2> order) {
  if (delta < 0.0) throw std::invalid_argument("delta must be nonnegative");
  if (!((order[0] == 1 && order[1] == 2) || (order[0] == 2 && order[1] == 1))) {
    throw std::invalid_argument("order must be a permutation of {1, 2}");
  }
  const double radius = std::sqrt(2.0 * delta);
  MeanPair means{game.mu1, game.mu2};
  if (order[0] == 1) {
    means.mu1 += radius * sign(means.mu2);
    means.mu2 += radius * sign(means.mu1);
  } else {
    means.mu2 += radius * sign(means.mu1);
    means.mu1 += radius * sign(means.mu2);
  }
  return means;
}

MeanPair sampled_sequential_step(const DifferentialGame& game, double delta, int num_samples,
                                 std::uint64_t seed) {
  if (num_samples < 2) throw std::invalid_argument("need at least two samples");
  const double radius = std::sqrt(2.0 * delta);
  Rng rng = Rng::stream(seed, 0x666967);
  const GaussianMeanPolicy first(game.mu1);
  const GaussianMeanPolicy second(game.mu2);

  std::vector<double> a1(num_samples), a2(num_samples), reward(num_samples);
  double mean_reward = 0.0;
  for (int i = 0; i < num_samples; ++i) {
    a1[i] = first.sample(rng);
    a2[i] = second.sample(rng);
    reward[i] = a1[i] * a2[i];
    mean_reward += reward[i];
  }
  mean_reward /= num_samples;

  // First mover: score-weighted advantage; unit Fisher makes the natural
  // step a boundary move in the gradient's sign.
  double grad1 = 0.0;
  for (int i = 0; i < num_samples; ++i) {
    grad1 += (reward[i] - mean_reward) * first.score(a1[i]);
  }
  grad1 /= num_samples;
  const GaussianMeanPolicy first_new(game.mu1 + radius * sign(grad1));

  // Second mover: advantage reweighted by the first mover's ratio.
  double grad2 = 0.0;
  for (int i = 0; i < num_samples; ++i) {
    const double ratio = std::exp(first_new.log_prob(a1[i]) - first.log_prob(a1[i]));
    grad2 += ratio * (reward[i] - mean_reward) * second.score(a2[i]);
  }
  grad2 /= num_samples;
  return {first_new.mean(), game.mu2 + radius * sign(grad2)};
}

CooperativeMarkovGame build_proposition1_game(int n) {
  if (n < 2 || n % 2 != 0) {
    throw std::invalid_argument("the coordination game needs an even n >= 2");
  }
  const std::vector<int> counts(n, 2);
  const JointActionIndexer indexer(counts);
  const long joint_count = indexer.num_joint_actions();

  Eigen::MatrixXd reward = Eigen::MatrixXd::Zero(1, joint_count);
  std::vector<int> first_half(n, 0), second_half(n, 1);
  for (int i = n / 2; i < n; ++i) {
    first_half[i] = 1;
    second_half[i] = 0;
  }
  reward(0, indexer.encode(first_half)) = 1.0;
  reward(0, indexer.encode(second_half)) = 1.0;

  const Eigen::MatrixXd transition = Eigen::MatrixXd::Ones(joint_count, 1);
  Eigen::VectorXd initial(1);
  initial[0] = 1.0;
  return CooperativeMarkovGame(n, 1, counts, transition, reward, 0.0, initial);
}

CooperativeMarkovGame random_game(std::uint64_t seed, const RandomGameOptions& options) {
  Rng rng = Rng::stream(seed, 0x67616d65);
  const int n = rng.uniform_int(options.min_agents, options.max_agents);
  const int states = rng.uniform_int(options.min_states, options.max_states);
  std::vector<int> counts(n);
  for (int i = 0; i < n; ++i) counts[i] = rng.uniform_int(options.min_actions, options.max_actions);
  const double gamma = options.min_gamma == options.max_gamma
                           ? options.min_gamma
                           : rng.uniform(options.min_gamma, options.max_gamma);

  const JointActionIndexer indexer(counts);
  const long joint_count = indexer.num_joint_actions();
  Eigen::MatrixXd transition(static_cast<long>(states) * joint_count, states);
  for (long row = 0; row < transition.rows(); ++row) {
    double sum = 0.0;
    for (int s = 0; s < states; ++s) {
      transition(row, s) = -std::log(1.0 - rng.uniform());
      sum += transition(row, s);
    }
    transition.row(row) /= sum;
    // Compensate rounding on the largest entry to hit the 1e-12 row-sum gate.
    long argmax = 0;
    transition.row(row).maxCoeff(&argmax);
    transition(row, argmax) += 1.0 - transition.row(row).sum();
  }
  Eigen::MatrixXd reward(states, joint_count);
  for (int s = 0; s < states; ++s) {
    for (long a = 0; a < joint_count; ++a) reward(s, a) = rng.uniform(-1.0, 1.0);
  }
  Eigen::VectorXd initial(states);
  double sum = 0.0;
  for (int s = 0; s < states; ++s) {
    initial[s] = -std::log(1.0 - rng.uniform());
    sum += initial[s];
  }
  initial /= sum;
  long argmax = 0;
  initial.maxCoeff(&argmax);
  initial[argmax] += 1.0 - initial.sum();
  return CooperativeMarkovGame(n, states, counts, transition, reward, gamma, initial);
}

CooperativeMarkovGame random_one_shot_game(std::uint64_t seed) {
  static constexpr double kGammas[] = {0.0, 0.3, 0.6, 0.9};
  RandomGameOptions options;
  options.min_states = 1;
  options.max_states = 1;
  options.min_agents = 2;
  options.max_agents = 3;
  options.min_gamma = options.max_gamma = kGammas[seed % 4];
  return random_game(seed, options);
}

JointTabularPolicy random_policy(const CooperativeMarkovGame& game, double eta,
                                 std::uint64_t seed) {
  Rng rng = Rng::stream(seed, 0x706f6c69);
  return JointTabularPolicy::random(game, eta, rng);
}

}  // namespace hatr
