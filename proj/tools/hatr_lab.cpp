// hatr-lab: verify the theory checks, train exact/HATRPO/HAPPO learners on
// the scenario pack, and reproduce the analytic differential-game figures.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <string>
#include <vector>

#include "hatr/experiment.hpp"

namespace {

/** Parses "a..b" (inclusive) or a single integer into a seed list. */
std::vector<std::uint64_t> parse_seed_range(const std::string& text) {
  const auto dots = text.find("..");
  if (dots == std::string::npos) {
    return {static_cast<std::uint64_t>(std::stoull(text))};
  }
  const std::uint64_t lo = std::stoull(text.substr(0, dots));
  const std::uint64_t hi = std::stoull(text.substr(dots + 2));
  if (hi < lo) throw CLI::ValidationError("--seeds", "range end below start");
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
  return seeds;
}

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CLI::ValidationError("--config", "cannot open " + path);
  nlohmann::json doc;
  in >> doc;
  return doc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heterogeneous-agent trust region lab"};
  app.require_subcommand(1);

  // verify
  auto* verify = app.add_subcommand("verify", "run the theory-check suite over seeds");
  std::string verify_seeds = "0..19";
  std::string verify_out;
  verify->add_option("--seeds", verify_seeds, "seed or inclusive range a..b");
  verify->add_option("--out", verify_out, "write the JSON report to this file");

  // train
  auto* train = app.add_subcommand("train", "train a learner on a scenario");
  std::string train_algo;
  std::string train_scenario = "prop1";
  std::string train_out = "out";
  std::string train_config;
  std::string train_seeds = "0";
  int train_iterations = 200;
  int train_agents = 2;
  bool train_with_verify = false;
  train->add_option("algo", train_algo, "exact | hatrpo | happo")->required();
  train->add_option("--scenario", train_scenario, "prop1 | random");
  train->add_option("--seed,--seeds", train_seeds, "seed or inclusive range a..b");
  train->add_option("--iterations", train_iterations, "training iterations");
  train->add_option("--n", train_agents, "agent count for the prop1 scenario");
  train->add_option("--out", train_out, "output directory");
  train->add_option("--config", train_config, "JSON file with algorithm config overrides");
  train->add_flag("--with-verify", train_with_verify,
                  "append verification-suite results to each report");

  // run
  auto* run = app.add_subcommand("run", "run an analytic scenario");
  std::string run_scenario;
  std::string run_out = "out";
  std::string run_seeds = "0";
  bool run_sampled = false;
  int run_samples = 4096;
  run->add_option("scenario", run_scenario, "figure1")->required();
  run->add_option("--out", run_out, "output directory");
  run->add_option("--seed,--seeds", run_seeds, "seeds for the sampled variant");
  run->add_flag("--sampled", run_sampled, "add Monte-Carlo sequential-step rows");
  run->add_option("--samples", run_samples, "samples per sampled step");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*verify) {
      const std::vector<std::uint64_t> seeds = parse_seed_range(verify_seeds);
      std::vector<hatr::CheckRecord> records;
      for (std::uint64_t seed : seeds) {
        auto seed_records = hatr::run_verification_suite(seed);
        records.insert(records.end(), seed_records.begin(), seed_records.end());
      }
      const nlohmann::json report = hatr::check_records_to_json(records);
      if (!verify_out.empty()) {
        std::ofstream out(verify_out);
        out << report.dump(2) << "\n";
      } else {
        std::cout << report.dump(2) << "\n";
      }
      int failures = 0;
      for (const hatr::CheckRecord& record : records) {
        if (!record.pass) {
          ++failures;
          std::fprintf(stderr, "FAIL %s (seed %llu): %.3e\n", record.check_name.c_str(),
                       static_cast<unsigned long long>(record.seed),
                       record.residual_or_slack);
        }
      }
      std::fprintf(stderr, "verify: %zu checks, %d failures\n", records.size(), failures);
      return failures == 0 ? 0 : 1;
    }

    hatr::ExperimentConfig config;
    if (*train) {
      if (!train_config.empty()) {
        config = hatr::experiment_config_from_json(load_json_file(train_config));
      }
      config.algorithm = train_algo;
      config.scenario = train_scenario;
      config.seeds = parse_seed_range(train_seeds);
      config.iterations = train_iterations;
      config.prop1_agents = train_agents;
      config.output_dir = train_out;
      config.with_verification = train_with_verify;
      return hatr::run_experiment(config);
    }
    if (*run) {
      config.scenario = run_scenario;
      config.seeds = parse_seed_range(run_seeds);
      config.output_dir = run_out;
      config.sampled_figure = run_sampled;
      config.figure_samples = run_samples;
      return hatr::run_experiment(config);
    }
  } catch (const std::exception& error) {
    std::fprintf(stderr, "error: %s\n", error.what());
    return 1;
  }
  return 0;
}
