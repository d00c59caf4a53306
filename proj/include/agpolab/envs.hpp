#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "agpolab/error.hpp"
#include "agpolab/policy.hpp"

namespace agpolab {

enum class TaskFamily : std::uint8_t { modsum, subset, longtail };

const char* family_name(TaskFamily f);
std::optional<TaskFamily> family_from_name(std::string_view name);

/// Family construction knobs; each family reads its own subset.
struct FamilyParams {
  int num_tasks = 1;
  int modulus = 4;     // modsum: correct iff sum(tokens) % modulus == target
  int target = -1;     // modsum; -1 varies the target with the task index
  double density = 0.25;  // subset: |correct| = round(density * V^T)
  int rare_count = 4;  // longtail: isolated correct sequences outside the cluster
};

/// A prompt with an enumerable sequence space and an explicit correct set.
/// Sequences are stored base-V encoded (first token most significant),
/// sorted, so membership is a binary search.
struct TaskSpec {
  std::string prompt_id;
  TaskFamily family = TaskFamily::subset;
  int vocab_size = 2;
  int seq_len = 1;
  FamilyParams params;
  std::vector<std::uint32_t> correct_set;
  double difficulty_target = 0.0;  // intended |correct| / V^T

  std::size_t space_size() const;
  bool contains(std::span<const int> tokens) const;
};

std::uint32_t encode_sequence(std::span<const int> tokens, int vocab_size);
std::vector<int> decode_sequence(std::uint32_t code, int vocab_size, int seq_len);

/// Prior-correctness regimes: prompts the policy cannot solve, the learnable
/// middle, and mastered prompts.
struct TaskSuite {
  std::vector<TaskSpec> tasks;
  std::uint64_t seed = 0;
  std::array<int, 3> regime_mix{0, 0, 0};  // {unsolvable, learnable, mastered}
};

/// Deterministic in seed, bit-identical across runs and platforms.
/// longtail builds a Hamming ball of radius 1 around a seeded center plus
/// params.rare_count isolated sequences sampled outside the ball.
TaskSuite build_task_family(TaskFamily family, int vocab_size, int seq_len, std::uint64_t seed,
                            const FamilyParams& params);

/// 1 iff tokens is in the task's correct set. Pure and total; throws
/// Errc::invalid_response for inputs of the wrong length.
int verify(const TaskSpec& task, std::span<const int> tokens);

/// Exact total probability mass the policy puts on the correct set.
double prior_correctness_exact(const TabularPolicy& policy, const TaskSpec& task);

/// JSONL: one task per line with fields prompt_id, family, V, T, params,
/// correct_set (arrays of token ids). The canonical experiment input.
std::string suite_to_jsonl(const TaskSuite& suite);
TaskSuite suite_from_jsonl(const std::string& text);
TaskSuite load_suite_file(const std::string& path);
void save_suite_file(const TaskSuite& suite, const std::string& path);

}  // namespace agpolab
