#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "hatr/game.hpp"

namespace hatr {

/** One verification-suite outcome; `verify` emits an array of these. */
struct CheckRecord {
  std::string check_name;
  std::uint64_t seed = 0;
  double residual_or_slack = 0.0;
  bool pass = false;
};

/**
 * All desk-scale theory checks for one seed: the decomposition, bound,
 * estimator and KL-sum identities on a seeded game, the performance
 * difference identity, occupancy mass, a short monotone run, the one-shot
 * NE-at-convergence gaps and the parameter-sharing ratio.
 */
std::vector<CheckRecord> run_verification_suite(std::uint64_t seed);

nlohmann::json check_records_to_json(const std::vector<CheckRecord>& records);

/**
 * Scenario/algorithm experiment description, normally parsed from a JSON
 * config file. Registered scenarios: prop1, random, figure1. Registered
 * algorithms: exact, hatrpo, happo.
 */
struct ExperimentConfig {
  std::string scenario = "prop1";
  std::string algorithm = "hatrpo";
  std::vector<std::uint64_t> seeds = {0};
  int iterations = 200;
  int prop1_agents = 2;
  nlohmann::json algo_config = nlohmann::json::object();
  std::filesystem::path output_dir = "out";
  bool with_verification = false;
  bool sampled_figure = false;
  int figure_samples = 4096;
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& doc);

/**
 * Runs every seed (in parallel up to HATR_LAB_THREADS), writing
 * <output_dir>/seed_<k>/{trace.csv, final_policy.json, report.json} per seed;
 * the figure1 scenario writes its closed-form trajectories directly into
 * <output_dir>. Returns 0 on success.
 */
int run_experiment(const ExperimentConfig& config);

}  // namespace hatr
