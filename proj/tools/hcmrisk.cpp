#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "hcmrisk/commands.hpp"
#include "hcmrisk/parallel.hpp"

int main(int argc, char** argv) {
  CLI::App app{"hcmrisk: risk modelling experiments on HCM cohorts"};
  app.require_subcommand(1);
  app.set_version_flag("--version", hcmrisk::cli::kVersion);

  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  int threads = 0;

  const std::pair<const char*, const char*> commands[] = {
      {"train", "nested cross-validation per model kind, fold reports, ensemble and figures"},
      {"validate", "apply an ensemble to an external cohort"},
      {"survival", "Kaplan-Meier and log-rank for model and ESC groupings"},
      {"longitudinal", "risk trajectories over repeated exams"},
      {"synth", "generate a synthetic cohort"},
      {"esc-score", "ESC HCM Risk-SCD score per patient"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--out", out, "override the output directory");
    sub->add_option("--threads", threads, "worker threads (default: HCMRISK_THREADS, else all cores)")
        ->check(CLI::NonNegativeNumber);
  }
  CLI11_PARSE(app, argc, argv);

  const auto* sub = app.get_subcommands().front();
  if (threads == 0) {
    if (const char* env = std::getenv("HCMRISK_THREADS")) {
      try {
        threads = std::stoi(env);
      } catch (const std::exception&) {
        std::cerr << "error: HCMRISK_THREADS must be an integer, got '" << env << "'\n";
        return 2;
      }
    }
  }
  if (threads > 0) hcmrisk::set_threads(threads);

  try {
    hcmrisk::cli::RunOptions opts;
    opts.config = config;
    if (sub->count("--seed") > 0) opts.seed = seed;
    if (!out.empty()) opts.out = out;
    const auto cfg = hcmrisk::cli::ExperimentConfig::load(opts);
    hcmrisk::cli::run_command(sub->get_name(), cfg);
    std::cout << sub->get_name() << ": outputs written to " << cfg.output_dir.string() << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
