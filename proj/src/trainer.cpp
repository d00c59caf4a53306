#include "agpolab/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "agpolab/evalkit.hpp"
#include "agpolab/io.hpp"

namespace agpolab {

namespace {

// Seed-derivation namespaces; distinct constants keep streams disjoint.
constexpr std::uint64_t kNsBatchSelection = 0xb5;
constexpr std::uint64_t kNsRollout = 0xc0;
constexpr std::uint64_t kNsEval = 0xe7;

}  // namespace

void TrainConfig::validate() const {
  estimator.validate();
  clip.validate();
  require(group_size >= 2, Errc::config, "group_size must be >= 2");
  require(batch_prompts >= 1, Errc::config, "batch_prompts must be >= 1");
  require(mini_batch_prompts >= 1 && batch_prompts % mini_batch_prompts == 0, Errc::config,
          "mini_batch_prompts must divide batch_prompts");
  require(epochs_per_batch >= 1, Errc::config, "epochs_per_batch must be >= 1");
  require(temperature > 0.0, Errc::config, "temperature must be > 0");
  require(learning_rate > 0.0, Errc::config, "learning_rate must be > 0");
  require(critic_learning_rate > 0.0 && critic_learning_rate <= 1.0, Errc::config,
          "critic_learning_rate must be in (0, 1]");
  require(total_steps >= 1, Errc::config, "total_steps must be >= 1");
  require(eval_every >= 1, Errc::config, "eval_every must be >= 1");
}

std::string telemetry_csv(std::span<const TelemetryRecord> records) {
  std::string out =
      "step,train_correct_ratio,heldout_greedy_acc,mean_entropy,"
      "mean_abs_adv_pos,mean_abs_adv_neg,mean_kl,clip_fraction\n";
  for (const TelemetryRecord& r : records) {
    out += std::to_string(r.step);
    for (double v : {r.train_correct_ratio, r.heldout_greedy_acc, r.mean_entropy,
                     r.mean_abs_adv_pos, r.mean_abs_adv_neg, r.mean_kl, r.clip_fraction}) {
      out += ',';
      out += format_sig7(v);
    }
    out += '\n';
  }
  return out;
}

PolicySet uniform_policies(const TaskSuite& suite) {
  PolicySet policies;
  for (const TaskSpec& task : suite.tasks) {
    policies.emplace(task.prompt_id, TabularPolicy(task.vocab_size, task.seq_len, task.prompt_id));
  }
  return policies;
}

namespace {

RolloutGroup collect_one_group(const TabularPolicy& policy, const TaskSpec& task, int group_size,
                               double temperature, std::uint64_t group_root) {
  RolloutGroup group;
  group.prompt_id = task.prompt_id;
  group.group_rewards.prompt_id = task.prompt_id;
  group.trajectories.reserve(static_cast<std::size_t>(group_size));
  for (int member = 0; member < group_size; ++member) {
    RngStream stream(derive_seed(group_root, {static_cast<std::uint64_t>(member)}));
    Trajectory traj = sample_trajectory(policy, temperature, stream);
    const int correct = verify(task, traj.tokens);
    traj.reward = reward_from_verifier(correct);
    group.group_rewards.rewards.push_back(*traj.reward);
    group.trajectories.push_back(std::move(traj));
  }
  return group;
}

AdvantageVector advantages_for(const GroupRewards& rewards, const EstimatorConfig& cfg,
                               double ppo_value) {
  switch (cfg.variant) {
    case EstimatorVariant::agpo:
      return agpo_advantage(rewards, cfg);
    case EstimatorVariant::grpo:
      return grpo_advantage(rewards, cfg);
    case EstimatorVariant::reinforce:
    case EstimatorVariant::w_reinforce:
      return signed_reinforce_advantage(rewards, cfg);
    case EstimatorVariant::ppo_baseline: {
      AdvantageVector adv(rewards.rewards.size());
      for (int i = 0; i < static_cast<int>(rewards.rewards.size()); ++i) {
        adv[i] = ppo_baseline_advantage(rewards.rewards[i], ppo_value);
      }
      return adv;
    }
  }
  fail(Errc::config, "unknown estimator variant");
}

void append_rollout_log(std::string& log, long step, const RolloutGroup& group) {
  using nlohmann::json;
  for (std::size_t member = 0; member < group.trajectories.size(); ++member) {
    const Trajectory& traj = group.trajectories[member];
    json line;
    line["step"] = step;
    line["prompt_id"] = group.prompt_id;
    line["member"] = member;
    line["tokens"] = traj.tokens;
    line["logprob_old"] = traj.logprob_old;
    line["reward"] = static_cast<int>(reward_value(*traj.reward));
    log += line.dump();
    log += '\n';
  }
}

void write_checkpoint(const PolicySet& policies, const std::string& out_dir, long step) {
  char name[32];
  std::snprintf(name, sizeof(name), "step_%06ld", step);
  const std::filesystem::path dir = std::filesystem::path(out_dir) / "checkpoints" / name;
  std::filesystem::create_directories(dir);
  for (const auto& [prompt_id, policy] : policies) {
    save_policy_file(policy, (dir / (prompt_id + ".txt")).string());
  }
}

}  // namespace

std::vector<RolloutGroup> collect_groups(const PolicySet& policies, const TaskSuite& suite,
                                         int group_size, double temperature,
                                         std::uint64_t rng_root) {
  require(group_size >= 2, Errc::invalid_group, "group_size must be >= 2");
  std::vector<RolloutGroup> groups;
  groups.reserve(suite.tasks.size());
  for (const TaskSpec& task : suite.tasks) {
    const auto it = policies.find(task.prompt_id);
    require(it != policies.end(), Errc::config, "no policy for prompt " + task.prompt_id);
    const std::uint64_t group_root = derive_seed(rng_root, {fnv1a64(task.prompt_id)});
    groups.push_back(collect_one_group(it->second, task, group_size, temperature, group_root));
  }
  return groups;
}

TrainResult train_run(const TrainConfig& cfg, const TaskSuite& train_suite,
                      const TaskSuite& heldout_suite, const TrainRunOptions& options,
                      const TrainHooks& hooks) {
  cfg.validate();
  require(!train_suite.tasks.empty(), Errc::config, "training suite is empty");

  TrainResult result;
  result.policies = uniform_policies(train_suite);
  for (const TaskSpec& task : heldout_suite.tasks) {
    require(result.policies.count(task.prompt_id) == 1, Errc::config,
            "heldout prompt_id not in the training suite: " + task.prompt_id);
  }

  // KL anchors to the initial policy set.
  const PolicySet reference = result.policies;
  for (const TaskSpec& task : train_suite.tasks) result.ppo_values[task.prompt_id] = 0.0;

  std::string rollout_log;
  const int num_tasks = static_cast<int>(train_suite.tasks.size());
  const int minis_per_batch = cfg.batch_prompts / cfg.mini_batch_prompts;

  double eval_greedy = 0.0;
  double eval_entropy = 0.0;

  for (long step = 1; step <= cfg.total_steps; ++step) {
    // Snapshot: rollouts and ratios are both anchored to the step start.
    const PolicySet old_policies = result.policies;

    // Batch selection: batch_prompts task slots drawn with replacement.
    RngStream selector(derive_seed(cfg.seed, {kNsBatchSelection, static_cast<std::uint64_t>(step)}));
    std::vector<int> slots(static_cast<std::size_t>(cfg.batch_prompts));
    for (int& slot : slots) {
      slot = static_cast<int>(selector.next_below(static_cast<std::uint32_t>(num_tasks)));
    }

    // Rollout collection from the snapshot, one stream per (slot, member).
    const std::uint64_t rollout_root =
        derive_seed(cfg.seed, {kNsRollout, static_cast<std::uint64_t>(step)});
    std::vector<RolloutGroup> batch;
    batch.reserve(slots.size());
    long correct = 0;
    for (std::size_t s = 0; s < slots.size(); ++s) {
      const TaskSpec& task = train_suite.tasks[static_cast<std::size_t>(slots[s])];
      const TabularPolicy& policy = old_policies.at(task.prompt_id);
      const std::uint64_t group_root = derive_seed(rollout_root, {static_cast<std::uint64_t>(s)});
      batch.push_back(collect_one_group(policy, task, cfg.group_size, cfg.temperature, group_root));
      for (const RewardSign r : batch.back().group_rewards.rewards) {
        if (is_positive(r)) ++correct;
      }
    }
    if (hooks.on_rollouts) hooks.on_rollouts(step, batch);
    if (options.write_rollout_log && !options.out_dir.empty()) {
      for (const RolloutGroup& group : batch) append_rollout_log(rollout_log, step, group);
    }

    // Advantage telemetry and updates, mini-batch by mini-batch.
    double abs_pos_sum = 0.0, abs_neg_sum = 0.0;
    long pos_count = 0, neg_count = 0;
    double kl_sum = 0.0, clip_sum = 0.0;
    long report_count = 0;

    for (int epoch = 0; epoch < cfg.epochs_per_batch; ++epoch) {
      for (int mini = 0; mini < minis_per_batch; ++mini) {
        std::vector<PromptBatchEntry> entries;
        std::vector<const RolloutGroup*> entry_groups;
        entries.reserve(static_cast<std::size_t>(cfg.mini_batch_prompts));
        for (int j = 0; j < cfg.mini_batch_prompts; ++j) {
          const std::size_t slot = static_cast<std::size_t>(mini * cfg.mini_batch_prompts + j);
          const RolloutGroup& group = batch[slot];
          const AdvantageVector adv = advantages_for(group.group_rewards, cfg.estimator,
                                                     result.ppo_values.at(group.prompt_id));
          PromptBatchEntry entry;
          entry.current = &result.policies.at(group.prompt_id);
          entry.reference = &reference.at(group.prompt_id);
          entry.temperature = cfg.temperature;
          entry.sequences.reserve(group.trajectories.size());
          for (std::size_t i = 0; i < group.trajectories.size(); ++i) {
            const Trajectory& traj = group.trajectories[i];
            entry.sequences.push_back(
                {traj.tokens, adv[static_cast<Eigen::Index>(i)], traj.per_token_logprob_old});
            if (epoch == 0) {
              const double a = adv[static_cast<Eigen::Index>(i)];
              if (is_positive(*traj.reward)) {
                abs_pos_sum += std::abs(a);
                ++pos_count;
              } else {
                abs_neg_sum += std::abs(a);
                ++neg_count;
              }
            }
          }
          entries.push_back(std::move(entry));
          entry_groups.push_back(&group);
        }

        const SurrogateReport report = sequence_objective(entries, cfg.clip);
        if (hooks.on_minibatch) {
          hooks.on_minibatch(step, epoch * minis_per_batch + mini, report);
        }
        kl_sum += report.mean_kl;
        clip_sum += report.clip_fraction;
        ++report_count;

        for (std::size_t e = 0; e < entries.size(); ++e) {
          const std::string& prompt_id = entry_groups[e]->prompt_id;
          TabularPolicy& policy = result.policies.at(prompt_id);
          policy = apply_update(policy, report.gradients[e], cfg.learning_rate);
        }
      }
    }

    // Critic fit for ppo_baseline: move each visited prompt's value toward
    // its mean group reward this step.
    if (cfg.estimator.variant == EstimatorVariant::ppo_baseline) {
      std::map<std::string, std::pair<double, long>> sums;
      for (const RolloutGroup& group : batch) {
        auto& [sum, count] = sums[group.prompt_id];
        for (const RewardSign r : group.group_rewards.rewards) {
          sum += reward_value(r);
          ++count;
        }
      }
      for (const auto& [prompt_id, sc] : sums) {
        double& value = result.ppo_values.at(prompt_id);
        value += cfg.critic_learning_rate * (sc.first / static_cast<double>(sc.second) - value);
      }
    }

    const bool eval_now =
        ((step - 1) % cfg.eval_every == 0) || step == cfg.total_steps;
    if (eval_now) {
      eval_greedy = greedy_accuracy(result.policies, heldout_suite);
      eval_entropy = suite_mean_entropy(result.policies, train_suite);
      if (!options.out_dir.empty()) write_checkpoint(result.policies, options.out_dir, step);
    }

    TelemetryRecord record;
    record.step = step;
    record.train_correct_ratio =
        static_cast<double>(correct) /
        static_cast<double>(static_cast<long>(slots.size()) * cfg.group_size);
    record.heldout_greedy_acc = eval_greedy;
    record.mean_entropy = eval_entropy;
    record.mean_abs_adv_pos = pos_count > 0 ? abs_pos_sum / static_cast<double>(pos_count) : 0.0;
    record.mean_abs_adv_neg = neg_count > 0 ? abs_neg_sum / static_cast<double>(neg_count) : 0.0;
    record.mean_kl = report_count > 0 ? kl_sum / static_cast<double>(report_count) : 0.0;
    record.clip_fraction = report_count > 0 ? clip_sum / static_cast<double>(report_count) : 0.0;
    result.telemetry.push_back(record);
  }

  if (options.write_rollout_log && !options.out_dir.empty()) {
    write_text_file(std::filesystem::path(options.out_dir) / "rollouts.jsonl", rollout_log);
  }
  return result;
}

PasskTable eval_passk_sampled(const PolicySet& policies, const TaskSuite& suite, long n,
                              std::span<const long> ks, double temperature, std::uint64_t seed) {
  require(n >= 1, Errc::invalid_query, "n must be >= 1");
  for (long k : ks) {
    require(k >= 1 && k <= n, Errc::invalid_query, "k must be in [1, n]");
  }
  std::vector<PromptSampleCount> counts;
  counts.reserve(suite.tasks.size());
  for (const TaskSpec& task : suite.tasks) {
    const auto it = policies.find(task.prompt_id);
    require(it != policies.end(), Errc::config, "no policy for prompt " + task.prompt_id);
    RngStream stream(derive_seed(seed, {kNsEval, fnv1a64(task.prompt_id)}));
    long c = 0;
    for (long i = 0; i < n; ++i) {
      const Trajectory traj = sample_trajectory(it->second, temperature, stream);
      c += verify(task, traj.tokens);
    }
    counts.push_back({task.prompt_id, n, c});
  }
  PasskTable table;
  table.ks.assign(ks.begin(), ks.end());
  table.values = passk_curve_from_log(counts, ks);
  return table;
}

double greedy_accuracy(const PolicySet& policies, const TaskSuite& suite) {
  require(!suite.tasks.empty(), Errc::config, "suite is empty");
  long correct = 0;
  for (const TaskSpec& task : suite.tasks) {
    const auto it = policies.find(task.prompt_id);
    require(it != policies.end(), Errc::config, "no policy for prompt " + task.prompt_id);
    correct += verify(task, greedy_decode(it->second).tokens);
  }
  return static_cast<double>(correct) / static_cast<double>(suite.tasks.size());
}

double suite_mean_entropy(const PolicySet& policies, const TaskSuite& suite) {
  require(!suite.tasks.empty(), Errc::config, "suite is empty");
  double total = 0.0;
  for (const TaskSpec& task : suite.tasks) {
    total += mean_token_entropy(policies.at(task.prompt_id));
  }
  return total / static_cast<double>(suite.tasks.size());
}

}  // namespace agpolab
