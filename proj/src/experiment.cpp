#include "hatr/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "hatr/evaluation.hpp"
#include "hatr/exact_iteration.hpp"
#include "hatr/happo.hpp"
#include "hatr/hatrpo.hpp"
#include "hatr/rng.hpp"
#include "hatr/scenarios.hpp"
#include "hatr/serialization.hpp"
#include "hatr/theory.hpp"

namespace hatr {

using nlohmann::json;

namespace {

double performance_difference_residual(const CooperativeMarkovGame& game,
                                       const JointTabularPolicy& policy,
                                       const JointTabularPolicy& candidate) {
  const ExactEvaluation base = evaluate_exactly(game, policy);
  const ExactEvaluation cand = evaluate_exactly(game, candidate);
  const Eigen::MatrixXd cand_probs = joint_action_probabilities(game, candidate.tables());
  double expectation = 0.0;
  for (int s = 0; s < game.num_states; ++s) {
    for (long a = 0; a < game.num_joint_actions(); ++a) {
      expectation += cand.state_occupancy[s] * cand_probs(s, a) * base.advantages(s, a);
    }
  }
  return std::abs(cand.expected_return - base.expected_return - expectation);
}

/** All non-empty ordered subsets of {0..n-1} with size <= n. */
std::vector<std::vector<int>> all_ordered_subsets(int n) {
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

double max_decomposition_residual(const CooperativeMarkovGame& game,
                                  const JointTabularPolicy& policy) {
  const ExactEvaluation eval = evaluate_exactly(game, policy);
  double worst = 0.0;
  for (const std::vector<int>& ids : all_ordered_subsets(game.num_agents)) {
    const AgentSubset subset(ids, game.num_agents);
    std::vector<int> actions(ids.size(), 0);
    while (true) {
      for (int s = 0; s < game.num_states; ++s) {
        worst = std::max(worst,
                         check_advantage_decomposition(game, policy, eval, subset, actions, s));
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
  return worst;
}

int thread_budget() {
  if (const char* env = std::getenv("HATR_LAB_THREADS")) {
    const int requested = std::atoi(env);
    if (requested >= 1) return requested;
  }
  const unsigned hardware = std::thread::hardware_concurrency();
  return hardware == 0 ? 1 : static_cast<int>(hardware);
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

HatrpoConfig hatrpo_config_from_json(const json& doc, std::uint64_t seed) {
  HatrpoConfig config;
  config.kl_threshold = doc.value("kl_threshold", config.kl_threshold);
  config.cg_iterations = doc.value("cg_iterations", config.cg_iterations);
  config.cg_residual_tol = doc.value("cg_residual_tol", config.cg_residual_tol);
  config.damping = doc.value("damping", config.damping);
  config.line_search_backoff = doc.value("line_search_backoff", config.line_search_backoff);
  config.line_search_max_steps = doc.value("line_search_max_steps", config.line_search_max_steps);
  config.accept_ratio = doc.value("accept_ratio", config.accept_ratio);
  config.batch_episodes = doc.value("batch_episodes", config.batch_episodes);
  config.episode_length = doc.value("episode_length", config.episode_length);
  config.gae_lambda = doc.value("gae_lambda", config.gae_lambda);
  config.normalize_advantages = doc.value("normalize_advantages", config.normalize_advantages);
  config.seed = doc.value("seed", seed);
  return config;
}

HappoConfig happo_config_from_json(const json& doc, std::uint64_t seed) {
  HappoConfig config;
  config.clip = doc.value("clip", config.clip);
  config.epochs = doc.value("epochs", config.epochs);
  config.learning_rate = doc.value("learning_rate", config.learning_rate);
  config.moment_decay1 = doc.value("moment_decay1", config.moment_decay1);
  config.moment_decay2 = doc.value("moment_decay2", config.moment_decay2);
  config.stability_epsilon = doc.value("stability_epsilon", config.stability_epsilon);
  config.batch_episodes = doc.value("batch_episodes", config.batch_episodes);
  config.episode_length = doc.value("episode_length", config.episode_length);
  config.gae_lambda = doc.value("gae_lambda", config.gae_lambda);
  config.normalize_advantages = doc.value("normalize_advantages", config.normalize_advantages);
  config.check_invariants = doc.value("check_invariants", config.check_invariants);
  config.seed = doc.value("seed", seed);
  return config;
}

ExactIterationConfig exact_config_from_json(const json& doc, std::uint64_t seed, int iterations) {
  ExactIterationConfig config;
  config.max_iterations = doc.value("max_iterations", iterations);
  config.inner_steps = doc.value("inner_steps", config.inner_steps);
  config.inner_step_size = doc.value("inner_step_size", config.inner_step_size);
  config.convergence_tol = doc.value("convergence_tol", config.convergence_tol);
  config.permutation_seed = doc.value("permutation_seed", seed);
  return config;
}

CooperativeMarkovGame make_scenario_game(const ExperimentConfig& config, std::uint64_t seed) {
  if (config.scenario == "prop1") return build_proposition1_game(config.prop1_agents);
  if (config.scenario == "random") return random_game(seed);
  throw std::invalid_argument("unknown scenario '" + config.scenario +
                              "'; registered scenarios: prop1, random, figure1");
}

void run_figure1(const ExperimentConfig& config) {
  std::filesystem::create_directories(config.output_dir);
  const DifferentialGame game;
  const double delta = game.kl_radius;
  const double j0 = differential_game_return(game.mu1, game.mu2);
  const MeanPair sequential = sequential_trust_region_step(game, delta, {1, 2});
  const MeanPair simultaneous = simultaneous_trust_region_step(game, delta);

  char line[256];
  std::string csv = "scheme,step,mu1,mu2,J\n";
  const auto append = [&](const char* scheme, int step, double mu1, double mu2) {
    std::snprintf(line, sizeof(line), "%s,%d,%.17g,%.17g,%.17g\n", scheme, step, mu1, mu2,
                  differential_game_return(mu1, mu2));
    csv += line;
  };
  append("sequential", 0, game.mu1, game.mu2);
  append("sequential", 1, sequential.mu1, sequential.mu2);
  append("simultaneous", 0, game.mu1, game.mu2);
  append("simultaneous", 1, simultaneous.mu1, simultaneous.mu2);
  if (config.sampled_figure) {
    for (std::uint64_t seed : config.seeds) {
      const MeanPair sampled =
          sampled_sequential_step(game, delta, config.figure_samples, seed);
      std::snprintf(line, sizeof(line), "sampled_sequential_seed%llu,1,%.17g,%.17g,%.17g\n",
                    static_cast<unsigned long long>(seed), sampled.mu1, sampled.mu2,
                    differential_game_return(sampled.mu1, sampled.mu2));
      csv += line;
    }
  }
  write_text_file(config.output_dir / "trace.csv", csv);

  json report;
  report["scenario"] = "figure1";
  report["delta"] = delta;
  report["j_initial"] = j0;
  report["j_sequential"] = differential_game_return(sequential.mu1, sequential.mu2);
  report["j_simultaneous"] = differential_game_return(simultaneous.mu1, simultaneous.mu2);
  write_text_file(config.output_dir / "report.json", report.dump(2) + "\n");
}

void run_training_seed(const ExperimentConfig& config, std::uint64_t seed) {
  const std::filesystem::path seed_dir =
      config.output_dir / ("seed_" + std::to_string(seed));
  std::filesystem::create_directories(seed_dir);
  const CooperativeMarkovGame game = make_scenario_game(config, seed);

  json report;
  report["scenario"] = config.scenario;
  report["algorithm"] = config.algorithm;
  report["seed"] = seed;
  report["iterations"] = config.iterations;

  std::string trace_csv;
  json final_policy;
  if (config.algorithm == "exact") {
    const ExactIterationConfig exact_config =
        exact_config_from_json(config.algo_config, seed, config.iterations);
    const JointTabularPolicy initial = JointTabularPolicy::uniform(game, kDefaultEta);
    report["j_initial"] = expected_return(game, initial);
    const ExactIterationResult result = run_exact_iteration(game, initial, exact_config);
    std::ostringstream csv;
    result.trace.write_csv(csv);
    trace_csv = csv.str();
    final_policy = policy_to_json(result.policy);
    report["j_final"] = result.trace.iterations.empty()
                            ? report["j_initial"].get<double>()
                            : result.trace.iterations.back().return_value;
    report["min_return_delta"] = result.trace.min_return_delta();
  } else if (config.algorithm == "hatrpo") {
    const HatrpoConfig learner_config = hatrpo_config_from_json(config.algo_config, seed);
    const HatrpoRunResult result = run_hatrpo(game, learner_config, config.iterations);
    std::ostringstream csv;
    write_hatrpo_csv(csv, result.records);
    trace_csv = csv.str();
    final_policy = softmax_policies_to_json(result.policies);
    report["j_initial"] =
        expected_return(game, JointTabularPolicy::uniform(game, kDefaultEta));
    report["j_final"] = result.records.empty() ? 0.0 : result.records.back().j_exact;
  } else if (config.algorithm == "happo") {
    const HappoConfig learner_config = happo_config_from_json(config.algo_config, seed);
    const HappoRunResult result = run_happo(game, learner_config, config.iterations);
    std::ostringstream csv;
    write_happo_csv(csv, result.records);
    trace_csv = csv.str();
    final_policy = softmax_policies_to_json(result.policies);
    report["j_initial"] =
        expected_return(game, JointTabularPolicy::uniform(game, kDefaultEta));
    report["j_final"] = result.records.empty() ? 0.0 : result.records.back().j_exact;
  } else {
    throw std::invalid_argument("unknown algorithm '" + config.algorithm +
                                "'; registered algorithms: exact, hatrpo, happo");
  }

  if (config.with_verification) {
    report["verification"] = check_records_to_json(run_verification_suite(seed));
  }
  write_text_file(seed_dir / "trace.csv", trace_csv);
  write_text_file(seed_dir / "final_policy.json", final_policy.dump(2) + "\n");
  write_text_file(seed_dir / "report.json", report.dump(2) + "\n");
}

}  // namespace

std::vector<CheckRecord> run_verification_suite(std::uint64_t seed) {
  std::vector<CheckRecord> records;
  const auto push = [&](const std::string& name, double value, bool pass) {
    records.push_back({name, seed, value, pass});
  };

  const CooperativeMarkovGame game = random_game(seed);
  const JointTabularPolicy policy = random_policy(game, kDefaultEta, seed);
  const JointTabularPolicy candidate = random_policy(game, kDefaultEta, seed + 1000003);

  const double decomposition = max_decomposition_residual(game, policy);
  push("advantage_decomposition", decomposition, decomposition <= 1e-10);

  Rng perm_rng = Rng::stream(seed, 0x76657269);
  std::vector<int> permutation(game.num_agents);
  for (int i = 0; i < game.num_agents; ++i) permutation[i] = i;
  perm_rng.shuffle(permutation);
  const double slack = check_surrogate_lower_bound(game, policy, candidate, permutation);
  push("surrogate_lower_bound", slack, slack >= -1e-9);
  const double zero_slack =
      std::abs(check_surrogate_lower_bound(game, policy, policy, permutation));
  push("surrogate_zero_at_base", zero_slack, zero_slack <= 1e-12);

  const auto [kl_lhs, kl_rhs] = check_kl_sum_inequality(policy, candidate);
  push("kl_sum_inequality", kl_rhs - kl_lhs, kl_lhs <= kl_rhs + 1e-12);

  {
    Rng pick = Rng::stream(seed, 0x65737469);
    const int agent = pick.uniform_int(0, game.num_agents - 1);
    std::vector<int> prefix_ids;
    for (int i = 0; i < game.num_agents; ++i) {
      if (i != agent && pick.uniform() < 0.5) prefix_ids.push_back(i);
    }
    const AgentSubset prefix(prefix_ids, game.num_agents);
    std::vector<Eigen::MatrixXd> prefix_tables;
    for (int id : prefix_ids) prefix_tables.push_back(candidate.table(id));
    const int state = pick.uniform_int(0, game.num_states - 1);
    const double residual = check_estimator_identity(game, policy, prefix, prefix_tables, agent,
                                                     candidate.table(agent), state);
    push("estimator_identity", residual, residual <= 1e-12);
  }

  const double perf_residual = performance_difference_residual(game, policy, candidate);
  push("performance_difference", perf_residual, perf_residual <= 1e-10);

  {
    const ExactEvaluation eval = evaluate_exactly(game, policy);
    const Eigen::MatrixXd probs = joint_action_probabilities(game, policy.tables());
    double worst = 0.0;
    for (int s = 0; s < game.num_states; ++s) {
      worst = std::max(worst, std::abs(probs.row(s).dot(eval.advantages.row(s))));
    }
    push("advantage_expectation_zero", worst, worst <= 1e-10);
    const double mass =
        std::abs(eval.state_occupancy.sum() - 1.0 / (1.0 - game.discount));
    push("occupancy_mass", mass, mass <= 1e-10);
  }

  {
    ExactIterationConfig config;
    config.max_iterations = 60;
    config.permutation_seed = seed;
    const ExactIterationResult result =
        run_exact_iteration(game, JointTabularPolicy::uniform(game, kDefaultEta), config);
    const double delta = result.trace.min_return_delta();
    push("monotonic_improvement", delta, delta >= -1e-9);
  }

  {
    const CooperativeMarkovGame one_shot = random_one_shot_game(seed);
    ExactIterationConfig config;
    config.max_iterations = 20000;
    config.convergence_tol = 0.0;
    config.permutation_seed = seed;
    const ExactIterationResult result =
        run_exact_iteration(one_shot, JointTabularPolicy::uniform(one_shot, kDefaultEta), config);
    const double tr_gap = tr_stationarity_gap(one_shot, result.policy).maxCoeff();
    push("tr_stationarity_at_fixpoint", tr_gap, tr_gap <= 1e-6);
    const double br_gap = best_response_gap(one_shot, result.policy).maxCoeff();
    push("best_response_at_fixpoint", br_gap, br_gap <= 1e-4);
  }

  {
    const SharedPolicyGap gap = shared_policy_gap(2 + 2 * static_cast<int>(seed % 3));
    const double ratio_error = std::abs(gap.ratio - gap.grid_optimal / gap.optimal);
    push("shared_policy_gap_grid", ratio_error, ratio_error <= 1e-6);
  }
  return records;
}

json check_records_to_json(const std::vector<CheckRecord>& records) {
  json doc = json::array();
  for (const CheckRecord& record : records) {
    doc.push_back({{"check_name", record.check_name},
                   {"seed", record.seed},
                   {"residual_or_slack", record.residual_or_slack},
                   {"pass", record.pass}});
  }
  return doc;
}

ExperimentConfig experiment_config_from_json(const json& doc) {
  ExperimentConfig config;
  config.scenario = doc.value("scenario", config.scenario);
  config.algorithm = doc.value("algorithm", config.algorithm);
  if (doc.contains("seeds")) config.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
  config.iterations = doc.value("iterations", config.iterations);
  config.prop1_agents = doc.value("n", config.prop1_agents);
  if (doc.contains("config")) config.algo_config = doc.at("config");
  if (doc.contains("output_dir")) {
    config.output_dir = doc.at("output_dir").get<std::string>();
  }
  config.with_verification = doc.value("with_verification", config.with_verification);
  config.sampled_figure = doc.value("sampled", config.sampled_figure);
  config.figure_samples = doc.value("figure_samples", config.figure_samples);
  return config;
}

int run_experiment(const ExperimentConfig& config) {
  if (config.scenario != "prop1" && config.scenario != "random" &&
      config.scenario != "figure1") {
    throw std::invalid_argument("unknown scenario '" + config.scenario +
                                "'; registered scenarios: prop1, random, figure1");
  }
  if (config.scenario == "figure1") {
    run_figure1(config);
    return 0;
  }
  if (config.algorithm != "exact" && config.algorithm != "hatrpo" &&
      config.algorithm != "happo") {
    throw std::invalid_argument("unknown algorithm '" + config.algorithm +
                                "'; registered algorithms: exact, hatrpo, happo");
  }
  if (config.seeds.empty()) throw std::invalid_argument("at least one seed is required");

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::vector<std::string> errors;
  const int workers =
      std::min<int>(thread_budget(), static_cast<int>(config.seeds.size()));
  const auto worker = [&]() {
    while (true) {
      const std::size_t index = next.fetch_add(1);
      if (index >= config.seeds.size()) return;
      try {
        run_training_seed(config, config.seeds[index]);
      } catch (const std::exception& error) {
        std::lock_guard<std::mutex> lock(error_mutex);
        errors.push_back("seed " + std::to_string(config.seeds[index]) + ": " + error.what());
      }
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (std::thread& thread : pool) thread.join();
  }
  if (!errors.empty()) {
    std::string message = "experiment failures:";
    for (const std::string& error : errors) message += "\n  " + error;
    throw std::runtime_error(message);
  }
  return 0;
}

}  // namespace hatr
