#include "agpolab/envs.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "agpolab/io.hpp"

namespace agpolab {

using nlohmann::json;

const char* family_name(TaskFamily f) {
  switch (f) {
    case TaskFamily::modsum: return "modsum";
    case TaskFamily::subset: return "subset";
    case TaskFamily::longtail: return "longtail";
  }
  return "unknown";
}

std::optional<TaskFamily> family_from_name(std::string_view name) {
  for (TaskFamily f : {TaskFamily::modsum, TaskFamily::subset, TaskFamily::longtail}) {
    if (name == family_name(f)) return f;
  }
  return std::nullopt;
}

std::uint32_t encode_sequence(std::span<const int> tokens, int vocab_size) {
  std::uint32_t code = 0;
  for (int tok : tokens) {
    code = code * static_cast<std::uint32_t>(vocab_size) + static_cast<std::uint32_t>(tok);
  }
  return code;
}

std::vector<int> decode_sequence(std::uint32_t code, int vocab_size, int seq_len) {
  std::vector<int> tokens(static_cast<std::size_t>(seq_len));
  for (int i = seq_len - 1; i >= 0; --i) {
    tokens[static_cast<std::size_t>(i)] = static_cast<int>(code % static_cast<std::uint32_t>(vocab_size));
    code /= static_cast<std::uint32_t>(vocab_size);
  }
  return tokens;
}

std::size_t TaskSpec::space_size() const {
  std::size_t total = 1;
  for (int i = 0; i < seq_len; ++i) total *= static_cast<std::size_t>(vocab_size);
  return total;
}

bool TaskSpec::contains(std::span<const int> tokens) const {
  const std::uint32_t code = encode_sequence(tokens, vocab_size);
  return std::binary_search(correct_set.begin(), correct_set.end(), code);
}

namespace {

constexpr std::size_t kSpaceBudget = 65536;

std::size_t checked_space(int vocab_size, int seq_len) {
  require(vocab_size >= 2, Errc::config, "vocab_size must be >= 2");
  require(seq_len >= 1, Errc::config, "seq_len must be >= 1");
  std::size_t total = 1;
  for (int i = 0; i < seq_len; ++i) {
    total *= static_cast<std::size_t>(vocab_size);
    require(total <= kSpaceBudget, Errc::size_budget,
            "V^T exceeds the enumeration budget of 65536");
  }
  return total;
}

std::string make_prompt_id(TaskFamily family, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s-%03d", family_name(family), index);
  return buf;
}

TaskSpec build_modsum(int vocab_size, int seq_len, const FamilyParams& p, int index) {
  TaskSpec task;
  task.family = TaskFamily::modsum;
  task.vocab_size = vocab_size;
  task.seq_len = seq_len;
  task.params = p;
  require(p.modulus >= 2, Errc::config, "modsum modulus must be >= 2");
  const int target = p.target >= 0 ? p.target % p.modulus : index % p.modulus;
  task.params.target = target;
  const std::size_t space = checked_space(vocab_size, seq_len);
  for (std::uint32_t code = 0; code < space; ++code) {
    const std::vector<int> tokens = decode_sequence(code, vocab_size, seq_len);
    long sum = 0;
    for (int tok : tokens) sum += tok;
    if (sum % p.modulus == target) task.correct_set.push_back(code);
  }
  task.difficulty_target = static_cast<double>(task.correct_set.size()) / static_cast<double>(space);
  return task;
}

TaskSpec build_subset(int vocab_size, int seq_len, const FamilyParams& p, std::uint64_t task_seed) {
  TaskSpec task;
  task.family = TaskFamily::subset;
  task.vocab_size = vocab_size;
  task.seq_len = seq_len;
  task.params = p;
  require(p.density >= 0.0 && p.density <= 1.0, Errc::config, "subset density must be in [0,1]");
  const std::size_t space = checked_space(vocab_size, seq_len);
  const std::size_t want =
      static_cast<std::size_t>(std::llround(p.density * static_cast<double>(space)));
  // Seeded Fisher-Yates over the whole space; the first `want` entries form
  // the correct set.
  std::vector<std::uint32_t> order(space);
  for (std::uint32_t i = 0; i < space; ++i) order[i] = i;
  RngStream rng(task_seed);
  for (std::size_t i = space; i > 1; --i) {
    const std::uint32_t j = rng.next_below(static_cast<std::uint32_t>(i));
    std::swap(order[i - 1], order[j]);
  }
  task.correct_set.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(want));
  std::sort(task.correct_set.begin(), task.correct_set.end());
  task.difficulty_target = p.density;
  return task;
}

TaskSpec build_longtail(int vocab_size, int seq_len, const FamilyParams& p,
                        std::uint64_t task_seed) {
  TaskSpec task;
  task.family = TaskFamily::longtail;
  task.vocab_size = vocab_size;
  task.seq_len = seq_len;
  task.params = p;
  require(p.rare_count >= 0, Errc::config, "rare_count must be >= 0");
  const std::size_t space = checked_space(vocab_size, seq_len);

  RngStream rng(task_seed);
  std::vector<int> center(static_cast<std::size_t>(seq_len));
  for (int& tok : center) tok = static_cast<int>(rng.next_below(static_cast<std::uint32_t>(vocab_size)));

  // Easy cluster: the Hamming ball of radius 1 around the center.
  std::vector<std::uint32_t> ball;
  ball.push_back(encode_sequence(center, vocab_size));
  for (int t = 0; t < seq_len; ++t) {
    std::vector<int> variant = center;
    for (int v = 0; v < vocab_size; ++v) {
      if (v == center[static_cast<std::size_t>(t)]) continue;
      variant[static_cast<std::size_t>(t)] = v;
      ball.push_back(encode_sequence(variant, vocab_size));
    }
  }
  std::sort(ball.begin(), ball.end());

  // Rare paths: uniform draws outside the ball, all distinct.
  std::vector<std::uint32_t> chosen = ball;
  const std::size_t rare_want =
      std::min(static_cast<std::size_t>(p.rare_count), space - ball.size());
  std::vector<std::uint32_t> rare;
  while (rare.size() < rare_want) {
    const std::uint32_t code = rng.next_below(static_cast<std::uint32_t>(space));
    if (std::binary_search(chosen.begin(), chosen.end(), code)) continue;
    chosen.insert(std::lower_bound(chosen.begin(), chosen.end(), code), code);
    rare.push_back(code);
  }

  task.correct_set = chosen;
  task.difficulty_target =
      static_cast<double>(task.correct_set.size()) / static_cast<double>(space);
  return task;
}

int classify_regime(double density) {
  if (density <= 0.02) return 0;   // effectively unsolvable
  if (density >= 0.9) return 2;    // mastered
  return 1;                        // learnable middle
}

}  // namespace

TaskSuite build_task_family(TaskFamily family, int vocab_size, int seq_len, std::uint64_t seed,
                            const FamilyParams& params) {
  require(params.num_tasks >= 1, Errc::config, "num_tasks must be >= 1");
  checked_space(vocab_size, seq_len);
  TaskSuite suite;
  suite.seed = seed;
  suite.tasks.reserve(static_cast<std::size_t>(params.num_tasks));
  for (int i = 0; i < params.num_tasks; ++i) {
    const std::uint64_t task_seed = derive_seed(seed, {fnv1a64(family_name(family)),
                                                       static_cast<std::uint64_t>(i)});
    TaskSpec task;
    switch (family) {
      case TaskFamily::modsum: task = build_modsum(vocab_size, seq_len, params, i); break;
      case TaskFamily::subset: task = build_subset(vocab_size, seq_len, params, task_seed); break;
      case TaskFamily::longtail: task = build_longtail(vocab_size, seq_len, params, task_seed); break;
    }
    task.prompt_id = make_prompt_id(family, i);
    suite.regime_mix[static_cast<std::size_t>(classify_regime(task.difficulty_target))] += 1;
    suite.tasks.push_back(std::move(task));
  }
  return suite;
}

int verify(const TaskSpec& task, std::span<const int> tokens) {
  require(static_cast<int>(tokens.size()) == task.seq_len, Errc::invalid_response,
          "response length must equal seq_len");
  for (int tok : tokens) {
    require(tok >= 0 && tok < task.vocab_size, Errc::invalid_response, "token id out of range");
  }
  return task.contains(tokens) ? 1 : 0;
}

double prior_correctness_exact(const TabularPolicy& policy, const TaskSpec& task) {
  require(policy.vocab_size() == task.vocab_size && policy.max_len() == task.seq_len,
          Errc::shape_mismatch, "policy and task disagree on V or T");
  double total = 0.0;
  for (std::uint32_t code : task.correct_set) {
    const std::vector<int> tokens = decode_sequence(code, task.vocab_size, task.seq_len);
    total += std::exp(sequence_logprob(policy, tokens));
  }
  return total;
}

namespace {

json params_to_json(const TaskSpec& task) {
  json p;
  switch (task.family) {
    case TaskFamily::modsum:
      p["m"] = task.params.modulus;
      p["target"] = task.params.target;
      break;
    case TaskFamily::subset:
      p["density"] = task.params.density;
      break;
    case TaskFamily::longtail:
      p["rare_count"] = task.params.rare_count;
      break;
  }
  return p;
}

void params_from_json(const json& p, TaskSpec& task) {
  if (p.contains("m")) task.params.modulus = p.at("m").get<int>();
  if (p.contains("target")) task.params.target = p.at("target").get<int>();
  if (p.contains("density")) task.params.density = p.at("density").get<double>();
  if (p.contains("rare_count")) task.params.rare_count = p.at("rare_count").get<int>();
}

}  // namespace

std::string suite_to_jsonl(const TaskSuite& suite) {
  std::string out;
  for (const TaskSpec& task : suite.tasks) {
    json line;
    line["prompt_id"] = task.prompt_id;
    line["family"] = family_name(task.family);
    line["V"] = task.vocab_size;
    line["T"] = task.seq_len;
    line["params"] = params_to_json(task);
    json correct = json::array();
    for (std::uint32_t code : task.correct_set) {
      correct.push_back(decode_sequence(code, task.vocab_size, task.seq_len));
    }
    line["correct_set"] = std::move(correct);
    out += line.dump();
    out += '\n';
  }
  return out;
}

TaskSuite suite_from_jsonl(const std::string& text) {
  TaskSuite suite;
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> seen_ids;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(Errc::io, std::string("malformed task line: ") + e.what());
    }
    TaskSpec task;
    task.prompt_id = j.at("prompt_id").get<std::string>();
    const auto family = family_from_name(j.at("family").get<std::string>());
    require(family.has_value(), Errc::config, "unknown task family: " + task.prompt_id);
    task.family = *family;
    task.vocab_size = j.at("V").get<int>();
    task.seq_len = j.at("T").get<int>();
    checked_space(task.vocab_size, task.seq_len);
    if (j.contains("params")) params_from_json(j.at("params"), task);
    for (const json& seq : j.at("correct_set")) {
      std::vector<int> tokens = seq.get<std::vector<int>>();
      require(static_cast<int>(tokens.size()) == task.seq_len, Errc::config,
              "correct_set entry of the wrong length in " + task.prompt_id);
      for (int tok : tokens) {
        require(tok >= 0 && tok < task.vocab_size, Errc::config,
                "correct_set token out of range in " + task.prompt_id);
      }
      task.correct_set.push_back(encode_sequence(tokens, task.vocab_size));
    }
    std::sort(task.correct_set.begin(), task.correct_set.end());
    task.correct_set.erase(std::unique(task.correct_set.begin(), task.correct_set.end()),
                           task.correct_set.end());
    task.difficulty_target =
        static_cast<double>(task.correct_set.size()) / static_cast<double>(task.space_size());
    require(std::find(seen_ids.begin(), seen_ids.end(), task.prompt_id) == seen_ids.end(),
            Errc::config, "duplicate prompt_id: " + task.prompt_id);
    seen_ids.push_back(task.prompt_id);
    suite.regime_mix[static_cast<std::size_t>(classify_regime(task.difficulty_target))] += 1;
    suite.tasks.push_back(std::move(task));
  }
  return suite;
}

TaskSuite load_suite_file(const std::string& path) {
  return suite_from_jsonl(read_text_file(path));
}

void save_suite_file(const TaskSuite& suite, const std::string& path) {
  write_text_file(path, suite_to_jsonl(suite));
}

}  // namespace agpolab
