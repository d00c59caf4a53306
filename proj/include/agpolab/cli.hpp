#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "agpolab/envs.hpp"
#include "agpolab/trainer.hpp"

namespace agpolab {

/// Everything a run needs, parsed from a JSON config file. Either
/// `task_suite` (a JSONL path) or `task_family` (inline generation) defines
/// the tasks; heldout defaults to the training suite.
struct ExperimentConfig {
  TrainConfig train;
  TaskSuite suite;
  TaskSuite heldout;
  std::vector<double> sweep_delta;  // appendix-style delta grid
  std::vector<double> sweep_beta;   // appendix-style beta grid
};

/// Loads and validates a config file. Referenced paths must exist.
ExperimentConfig load_experiment_config(const std::string& path);

/// Grid-point sub-seed: the root seed folded with the grid indices through
/// the splitmix64 finalizer chain. Keyed by index, so appending grid points
/// never perturbs existing ones.
std::uint64_t sweep_point_seed(std::uint64_t root, int delta_index, int beta_index);

/// Subcommand dispatch: {train, simulate, eval-passk, metrics-ads,
/// advantage-table, sweep}. Returns 0 on success, 1 on usage errors, 2 on
/// runtime errors; diagnostics go to stderr, data to files.
int run_cli(const std::vector<std::string>& args);

}  // namespace agpolab
