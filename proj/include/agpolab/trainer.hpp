#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "agpolab/advantage.hpp"
#include "agpolab/envs.hpp"
#include "agpolab/objective.hpp"
#include "agpolab/policy.hpp"

namespace agpolab {

/// Full training-run configuration. Defaults mirror the reference
/// hyperparameters scaled to desk size: the 4:1 batch to mini-batch ratio
/// and G = 8 are kept while absolute sizes shrink.
struct TrainConfig {
  EstimatorConfig estimator = EstimatorConfig::defaults_for(EstimatorVariant::agpo);
  ClipConfig clip;
  int group_size = 8;
  int batch_prompts = 32;
  int mini_batch_prompts = 8;
  int epochs_per_batch = 1;
  double temperature = 0.6;
  double learning_rate = 0.05;
  double critic_learning_rate = 0.5;  // ppo_baseline value-table fit
  long total_steps = 100;
  long eval_every = 10;
  std::uint64_t seed = 1;

  void validate() const;
};

/// One prompt's collected group: G trajectories plus their signed rewards.
/// Re-running the verifier over the trajectories reproduces group_rewards.
struct RolloutGroup {
  std::string prompt_id;
  std::vector<Trajectory> trajectories;
  GroupRewards group_rewards;
};

/// One training step's observables.
struct TelemetryRecord {
  long step = 0;
  double train_correct_ratio = 0.0;
  double heldout_greedy_acc = 0.0;
  double mean_entropy = 0.0;
  double mean_abs_adv_pos = 0.0;
  double mean_abs_adv_neg = 0.0;
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
};

/// Header `step,train_correct_ratio,...`, one row per step, 7 significant
/// digits.
std::string telemetry_csv(std::span<const TelemetryRecord> records);

/// One independent policy per prompt, keyed by prompt_id (ordered, so every
/// iteration over the set is deterministic).
using PolicySet = std::map<std::string, TabularPolicy>;

PolicySet uniform_policies(const TaskSuite& suite);

/// Samples G trajectories per suite task from the given policies, verifies
/// and sign-maps the rewards. Streams derive from (prompt_id, member), so
/// the result is independent of any execution order.
std::vector<RolloutGroup> collect_groups(const PolicySet& policies, const TaskSuite& suite,
                                         int group_size, double temperature,
                                         std::uint64_t rng_root);

/// Test and logging hooks; all optional.
struct TrainHooks {
  std::function<void(long step, int mini_index, const SurrogateReport&)> on_minibatch;
  std::function<void(long step, const std::vector<RolloutGroup>&)> on_rollouts;
};

struct TrainRunOptions {
  std::string out_dir;           // when set: checkpoints under <out_dir>/checkpoints
  bool write_rollout_log = false;  // when set with out_dir: <out_dir>/rollouts.jsonl
};

struct TrainResult {
  std::vector<TelemetryRecord> telemetry;
  PolicySet policies;
  std::map<std::string, double> ppo_values;  // ppo_baseline critic table
};

/// The sampled RLVR loop. Per step: collect groups from the step-start
/// snapshot, then walk mini-batches computing advantages, maximizing the
/// clipped surrogate, and applying per-prompt updates. Evaluation (heldout
/// greedy accuracy, mean entropy) runs at step 1, every eval_every steps,
/// and at the final step; other records carry the last evaluated values.
/// Fully deterministic given cfg.seed.
TrainResult train_run(const TrainConfig& cfg, const TaskSuite& train_suite,
                      const TaskSuite& heldout_suite, const TrainRunOptions& options = {},
                      const TrainHooks& hooks = {});

/// Draws n samples per prompt at the given temperature, counts correct ones
/// and averages the unbiased pass@k estimate over prompts.
struct PasskTable {
  std::vector<long> ks;
  std::vector<double> values;
};
PasskTable eval_passk_sampled(const PolicySet& policies, const TaskSuite& suite, long n,
                              std::span<const long> ks, double temperature, std::uint64_t seed);

/// Fraction of heldout tasks whose greedy decode verifies correct.
double greedy_accuracy(const PolicySet& policies, const TaskSuite& suite);

/// Mean of mean_token_entropy over the suite's policies.
double suite_mean_entropy(const PolicySet& policies, const TaskSuite& suite);

}  // namespace agpolab
