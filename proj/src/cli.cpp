#include "agpolab/cli.hpp"

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "agpolab/evalkit.hpp"
#include "agpolab/exactsim.hpp"
#include "agpolab/io.hpp"

namespace agpolab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kNsSweepDelta = 0x51;
constexpr std::uint64_t kNsSweepBeta = 0x52;

EstimatorConfig estimator_from_json(const json& j) {
  EstimatorVariant variant = EstimatorVariant::agpo;
  if (j.contains("variant")) {
    const auto parsed = estimator_from_name(j.at("variant").get<std::string>());
    require(parsed.has_value(), Errc::config,
            "unknown estimator variant: " + j.at("variant").get<std::string>());
    variant = *parsed;
  }
  EstimatorConfig cfg = EstimatorConfig::defaults_for(variant);
  if (j.contains("delta")) cfg.delta = j.at("delta").get<double>();
  if (j.contains("r_floor")) cfg.r_floor = j.at("r_floor").get<double>();
  if (j.contains("lambda_pos")) cfg.lambda_pos = j.at("lambda_pos").get<double>();
  if (j.contains("eps_std")) cfg.eps_std = j.at("eps_std").get<double>();
  cfg.validate();
  return cfg;
}

ClipConfig clip_from_json(const json& j) {
  ClipConfig cfg;
  if (j.contains("epsilon")) cfg.epsilon = j.at("epsilon").get<double>();
  if (j.contains("kl_coeff")) cfg.kl_coeff = j.at("kl_coeff").get<double>();
  if (j.contains("length_norm")) {
    const std::string norm = j.at("length_norm").get<std::string>();
    if (norm == "per_token_mean") {
      cfg.length_norm = LengthNorm::per_token_mean;
    } else if (norm == "sequence_sum") {
      cfg.length_norm = LengthNorm::sequence_sum;
    } else {
      fail(Errc::config, "unknown length_norm: " + norm);
    }
  }
  cfg.validate();
  return cfg;
}

TaskSuite suite_from_family_json(const json& j, std::uint64_t seed) {
  const auto family = family_from_name(j.at("family").get<std::string>());
  require(family.has_value(), Errc::config,
          "unknown task family: " + j.at("family").get<std::string>());
  const int vocab = j.at("vocab_size").get<int>();
  const int len = j.at("seq_len").get<int>();
  FamilyParams params;
  if (j.contains("num_tasks")) params.num_tasks = j.at("num_tasks").get<int>();
  if (j.contains("modulus")) params.modulus = j.at("modulus").get<int>();
  if (j.contains("target")) params.target = j.at("target").get<int>();
  if (j.contains("density")) params.density = j.at("density").get<double>();
  if (j.contains("rare_count")) params.rare_count = j.at("rare_count").get<int>();
  return build_task_family(*family, vocab, len, seed, params);
}

}  // namespace

ExperimentConfig load_experiment_config(const std::string& path) {
  require(fs::exists(path), Errc::io, "config file not found: " + path);
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    fail(Errc::config, std::string("malformed config JSON: ") + e.what());
  }

  ExperimentConfig cfg;
  if (j.contains("seed")) cfg.train.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("estimator")) cfg.train.estimator = estimator_from_json(j.at("estimator"));
  if (j.contains("clip")) cfg.train.clip = clip_from_json(j.at("clip"));
  if (j.contains("group_size")) cfg.train.group_size = j.at("group_size").get<int>();
  if (j.contains("batch_prompts")) cfg.train.batch_prompts = j.at("batch_prompts").get<int>();
  if (j.contains("mini_batch_prompts")) {
    cfg.train.mini_batch_prompts = j.at("mini_batch_prompts").get<int>();
  }
  if (j.contains("epochs_per_batch")) cfg.train.epochs_per_batch = j.at("epochs_per_batch").get<int>();
  if (j.contains("temperature")) cfg.train.temperature = j.at("temperature").get<double>();
  if (j.contains("learning_rate")) cfg.train.learning_rate = j.at("learning_rate").get<double>();
  if (j.contains("critic_learning_rate")) {
    cfg.train.critic_learning_rate = j.at("critic_learning_rate").get<double>();
  }
  if (j.contains("total_steps")) cfg.train.total_steps = j.at("total_steps").get<long>();
  if (j.contains("eval_every")) cfg.train.eval_every = j.at("eval_every").get<long>();
  cfg.train.validate();

  const bool has_path = j.contains("task_suite");
  const bool has_family = j.contains("task_family");
  require(has_path != has_family, Errc::config,
          "config needs exactly one of task_suite (path) or task_family (inline)");
  if (has_path) {
    const std::string suite_path = j.at("task_suite").get<std::string>();
    require(fs::exists(suite_path), Errc::io, "task_suite file not found: " + suite_path);
    cfg.suite = load_suite_file(suite_path);
  } else {
    cfg.suite = suite_from_family_json(j.at("task_family"), cfg.train.seed);
  }
  require(!cfg.suite.tasks.empty(), Errc::config, "task suite is empty");

  if (j.contains("heldout_suite")) {
    const std::string heldout_path = j.at("heldout_suite").get<std::string>();
    require(fs::exists(heldout_path), Errc::io, "heldout_suite file not found: " + heldout_path);
    cfg.heldout = load_suite_file(heldout_path);
  } else {
    cfg.heldout = cfg.suite;
  }

  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    if (s.contains("delta")) cfg.sweep_delta = s.at("delta").get<std::vector<double>>();
    if (s.contains("beta")) cfg.sweep_beta = s.at("beta").get<std::vector<double>>();
  }
  return cfg;
}

std::uint64_t sweep_point_seed(std::uint64_t root, int delta_index, int beta_index) {
  return derive_seed(root, {kNsSweepDelta, static_cast<std::uint64_t>(delta_index),
                            kNsSweepBeta, static_cast<std::uint64_t>(beta_index)});
}

namespace {

int worker_cap() {
  const char* env = std::getenv("AGPOLAB_THREADS");
  if (env == nullptr) return 1;
  const int n = std::atoi(env);
  return n >= 1 ? n : 1;
}

void run_train_to_dir(const ExperimentConfig& cfg, const std::string& out_dir,
                      bool rollout_log) {
  fs::create_directories(out_dir);
  save_suite_file(cfg.suite, (fs::path(out_dir) / "tasks.jsonl").string());
  TrainRunOptions options;
  options.out_dir = out_dir;
  options.write_rollout_log = rollout_log;
  const TrainResult result = train_run(cfg.train, cfg.suite, cfg.heldout, options);
  write_text_file(fs::path(out_dir) / "telemetry.csv", telemetry_csv(result.telemetry));
}

int cmd_train(const std::string& config_path, const std::string& out_dir, bool rollout_log) {
  run_train_to_dir(load_experiment_config(config_path), out_dir, rollout_log);
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir) {
  const ExperimentConfig base = load_experiment_config(config_path);
  std::vector<double> deltas = base.sweep_delta;
  std::vector<double> betas = base.sweep_beta;
  if (deltas.empty()) deltas = {base.train.estimator.delta};
  if (betas.empty()) betas = {base.train.clip.kl_coeff};
  require(!deltas.empty() && !betas.empty(), Errc::config, "sweep grid is empty");
  fs::create_directories(out_dir);

  struct Point {
    int di, bi;
    double delta, beta;
    std::string dir;
  };
  std::vector<Point> grid;
  for (int di = 0; di < static_cast<int>(deltas.size()); ++di) {
    for (int bi = 0; bi < static_cast<int>(betas.size()); ++bi) {
      std::ostringstream name;
      name << "delta_" << format_sig(deltas[static_cast<std::size_t>(di)], 6) << "_beta_"
           << format_sig(betas[static_cast<std::size_t>(bi)], 6);
      grid.push_back({di, bi, deltas[static_cast<std::size_t>(di)],
                      betas[static_cast<std::size_t>(bi)],
                      (fs::path(out_dir) / name.str()).string()});
    }
  }

  // Grid points are independent runs; fan out up to AGPOLAB_THREADS workers.
  // Each point owns its subdirectory, so parallel and serial execution
  // produce identical bytes.
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::string first_error;
  std::mutex error_mutex;
  const int workers =
      std::min<int>(worker_cap(), static_cast<int>(grid.size()));
  auto work = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= grid.size() || failed.load()) break;
      const Point& point = grid[i];
      try {
        ExperimentConfig cfg = base;
        cfg.train.estimator.delta = point.delta;
        cfg.train.clip.kl_coeff = point.beta;
        cfg.train.seed = sweep_point_seed(base.train.seed, point.di, point.bi);
        run_train_to_dir(cfg, point.dir, false);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!failed.exchange(true)) {
          first_error = "sweep point delta=" + format_sig(point.delta, 6) +
                        " beta=" + format_sig(point.beta, 6) + ": " + e.what();
        }
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }
  if (failed.load()) fail(Errc::config, first_error);

  // Summary in grid order, assembled after every point finished.
  std::string summary = "delta,beta,final_greedy_acc,final_entropy,exact_pass_16\n";
  for (const Point& point : grid) {
    ExperimentConfig cfg = base;
    cfg.train.estimator.delta = point.delta;
    cfg.train.clip.kl_coeff = point.beta;
    cfg.train.seed = sweep_point_seed(base.train.seed, point.di, point.bi);
    // Final policies are reloaded from the last checkpoint for the exact
    // pass@16 column.
    char name[32];
    std::snprintf(name, sizeof(name), "step_%06ld", cfg.train.total_steps);
    PolicySet finals;
    for (const TaskSpec& task : cfg.suite.tasks) {
      const fs::path file = fs::path(point.dir) / "checkpoints" / name / (task.prompt_id + ".txt");
      finals.emplace(task.prompt_id, load_policy_file(file.string()));
    }
    const std::string telemetry = read_text_file(fs::path(point.dir) / "telemetry.csv");
    std::istringstream lines(telemetry);
    std::string line, last;
    std::getline(lines, line);  // header
    while (std::getline(lines, line)) {
      if (!line.empty()) last = line;
    }
    // Columns: step,ratio,greedy,entropy,...
    std::istringstream cells(last);
    std::string cell;
    std::vector<std::string> row;
    while (std::getline(cells, cell, ',')) row.push_back(cell);
    require(row.size() >= 4, Errc::internal_check, "telemetry row too short");

    double pass16 = 0.0;
    const std::array<int, 1> ks{16};
    for (const TaskSpec& task : cfg.suite.tasks) {
      pass16 += exact_passk_curve(finals.at(task.prompt_id), task, ks)[0];
    }
    pass16 /= static_cast<double>(cfg.suite.tasks.size());

    summary += format_sig(point.delta, 7) + "," + format_sig(point.beta, 7) + "," + row[2] + "," +
               row[3] + "," + format_sig7(pass16) + "\n";
  }
  write_text_file(fs::path(out_dir) / "sweep_summary.csv", summary);
  return 0;
}

int cmd_simulate(const std::string& config_path, const std::string& mode_name, long steps,
                 const std::string& out_path) {
  const ExperimentConfig cfg = load_experiment_config(config_path);
  FlowMode mode;
  mode.group_size = cfg.train.group_size;
  mode.estimator = cfg.train.estimator;
  mode.lambda = cfg.train.estimator.lambda_pos;
  if (mode_name == "psr") {
    mode.kind = FlowKind::psr_only;
  } else if (mode_name == "nsr") {
    mode.kind = FlowKind::nsr_only;
  } else if (mode_name == "weighted") {
    mode.kind = FlowKind::weighted;
  } else if (mode_name == "grpo") {
    mode.kind = FlowKind::grpo_expected;
  } else if (mode_name == "agpo") {
    mode.kind = FlowKind::agpo_expected;
  } else {
    fail(Errc::config, "unknown flow mode: " + mode_name);
  }
  require(steps >= 1, Errc::config, "steps must be >= 1");

  PolicySet policies = uniform_policies(cfg.suite);
  const std::array<int, 3> ks{1, 16, 256};
  std::string csv = "step,j_psr,j_nsr,passk_1,passk_16,passk_256,entropy\n";
  const auto emit = [&](long step) {
    double psr = 0.0, nsr = 0.0, entropy = 0.0;
    std::array<double, 3> passk{0.0, 0.0, 0.0};
    for (const TaskSpec& task : cfg.suite.tasks) {
      const TabularPolicy& policy = policies.at(task.prompt_id);
      const DecompositionReport report = psr_nsr_decomposition(policy, task);
      psr += report.j_psr;
      nsr += report.j_nsr;
      const std::vector<double> curve = exact_passk_curve(policy, task, ks);
      for (std::size_t i = 0; i < ks.size(); ++i) passk[i] += curve[i];
      entropy += mean_token_entropy(policy);
    }
    const double scale = 1.0 / static_cast<double>(cfg.suite.tasks.size());
    csv += std::to_string(step);
    for (double v : {psr * scale, nsr * scale, passk[0] * scale, passk[1] * scale,
                     passk[2] * scale, entropy * scale}) {
      csv += ',';
      csv += format_sig7(v);
    }
    csv += '\n';
  };

  emit(0);  // row s reports the state after s steps
  for (long step = 1; step <= steps; ++step) {
    for (const TaskSpec& task : cfg.suite.tasks) {
      TabularPolicy& policy = policies.at(task.prompt_id);
      policy = exact_gradient_step(policy, task, mode, cfg.train.learning_rate);
    }
    emit(step);
  }
  write_text_file(out_path, csv);
  return 0;
}

int cmd_eval_passk(const std::string& log_path, const std::string& ks_csv,
                   const std::string& out_path) {
  require(fs::exists(log_path), Errc::io, "log file not found: " + log_path);
  std::vector<long> ks;
  {
    std::istringstream in(ks_csv);
    std::string item;
    while (std::getline(in, item, ',')) {
      if (!item.empty()) ks.push_back(std::stol(item));
    }
  }
  require(!ks.empty(), Errc::config, "--ks list is empty");

  std::vector<PromptSampleCount> records;
  std::istringstream in(read_text_file(log_path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(Errc::config, std::string("malformed pass@k log line: ") + e.what());
    }
    records.push_back({j.at("prompt_id").get<std::string>(), j.at("n").get<long>(),
                       j.at("c").get<long>()});
  }
  const std::vector<double> means = passk_curve_from_log(records, ks);
  std::string csv = "k,pass_at_k\n";
  for (std::size_t i = 0; i < ks.size(); ++i) {
    csv += std::to_string(ks[i]) + "," + format_sig7(means[i]) + "\n";
  }
  write_text_file(out_path, csv);
  return 0;
}

int cmd_metrics_ads(const std::string& log_path, const std::string& out_path) {
  require(fs::exists(log_path), Errc::io, "log file not found: " + log_path);
  std::vector<AdsRecord> records;
  std::istringstream in(read_text_file(log_path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(Errc::config, std::string("malformed ads log line: ") + e.what());
    }
    AdsRecord r;
    r.predicted_label = j.at("predicted_label").get<int>();
    r.gt_label = j.at("gt_label").get<int>();
    r.impressions = j.at("impressions").get<long>();
    r.clicks = j.at("clicks").get<long>();
    r.revenue = j.at("revenue").get<double>();
    if (j.contains("purchase_price")) r.purchase_price = j.at("purchase_price").get<double>();
    if (j.contains("purchase_qty")) r.purchase_qty = j.at("purchase_qty").get<long>();
    validate_record(r);
    records.push_back(r);
  }
  require(!records.empty(), Errc::empty_input, "ads log is empty");

  const double pir_value = pir(records);
  const AdRevenueMetrics m = ad_revenue_metrics(records);
  long predicted_full = 0;
  for (const AdsRecord& r : records) {
    if (r.predicted_label == 2) ++predicted_full;
  }
  json out;
  out["pir"] = pir_value;
  out["ctrpi"] = m.ctrpi;
  out["cpc"] = m.cpc;
  out["cpm"] = m.cpm;
  out["gmv"] = m.gmv;
  out["record_count"] = records.size();
  out["predicted_fully_relevant"] = predicted_full;
  write_text_file(out_path, out.dump(2) + "\n");
  return 0;
}

int cmd_advantage_table(int group_size, const std::string& estimator, double delta,
                        double r_floor, double lambda, double eps_std,
                        const std::string& out_path) {
  const auto variant = estimator_from_name(estimator);
  require(variant.has_value(), Errc::config, "unknown estimator: " + estimator);
  EstimatorConfig cfg = EstimatorConfig::defaults_for(*variant);
  cfg.delta = delta;
  cfg.r_floor = r_floor;
  if (lambda > 0.0) cfg.lambda_pos = lambda;
  if (eps_std > 0.0) cfg.eps_std = eps_std;
  const std::string csv = advantage_table_csv(advantage_table(group_size, cfg));
  write_text_file(out_path, csv);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"desk-scale group-advantage RLVR laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_path, mode_name = "psr", log_path, ks_csv = "1,2,4,8,16";
  std::string estimator = "agpo";
  long steps = 100;
  int group_size = 8;
  double delta = 2.0, r_floor = -1.0, lambda = 0.0, eps_std = 0.0;
  bool rollout_log = false;

  CLI::App* train = app.add_subcommand("train", "run the sampled RLVR training loop");
  train->add_option("--config", config_path, "experiment config JSON")->required();
  train->add_option("--out", out_path, "output directory")->required();
  train->add_flag("--rollout-log", rollout_log, "also write rollouts.jsonl");

  CLI::App* simulate = app.add_subcommand("simulate", "run the exact-distribution flow");
  simulate->add_option("--config", config_path, "experiment config JSON")->required();
  simulate->add_option("--mode", mode_name, "psr|nsr|weighted|grpo|agpo")->required();
  simulate->add_option("--steps", steps, "number of exact steps")->required();
  simulate->add_option("--out", out_path, "output CSV path")->required();

  CLI::App* evalp = app.add_subcommand("eval-passk", "pass@k curve from a sample log");
  evalp->add_option("--log", log_path, "JSONL rows {prompt_id, n, c}")->required();
  evalp->add_option("--ks", ks_csv, "comma-separated k values");
  evalp->add_option("--out", out_path, "output CSV path")->required();

  CLI::App* ads = app.add_subcommand("metrics-ads", "search-ads metrics from a record log");
  ads->add_option("--log", log_path, "JSONL of ads records")->required();
  ads->add_option("--out", out_path, "output JSON path")->required();

  CLI::App* table = app.add_subcommand("advantage-table", "advantage vs k table");
  table->add_option("--G", group_size, "group size")->required();
  table->add_option("--estimator", estimator, "agpo|grpo|reinforce|w_reinforce|ppo_baseline");
  table->add_option("--delta", delta, "constraint factor");
  table->add_option("--r-floor", r_floor, "gated negative reward");
  table->add_option("--lambda", lambda, "positive weight");
  table->add_option("--eps-std", eps_std, "std stability constant");
  table->add_option("--out", out_path, "output CSV path")->required();

  CLI::App* sweep = app.add_subcommand("sweep", "train over the config's delta x beta grid");
  sweep->add_option("--config", config_path, "experiment config JSON")->required();
  sweep->add_option("--out", out_path, "output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      std::cout << app.help() << std::flush;
      return 0;
    }
    std::cerr << e.what() << "\n" << app.help() << std::flush;
    return 1;
  }

  try {
    if (train->parsed()) return cmd_train(config_path, out_path, rollout_log);
    if (simulate->parsed()) return cmd_simulate(config_path, mode_name, steps, out_path);
    if (evalp->parsed()) return cmd_eval_passk(log_path, ks_csv, out_path);
    if (ads->parsed()) return cmd_metrics_ads(log_path, out_path);
    if (table->parsed()) {
      return cmd_advantage_table(group_size, estimator, delta, r_floor, lambda, eps_std, out_path);
    }
    if (sweep->parsed()) return cmd_sweep(config_path, out_path);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return (e.code() == Errc::io || e.code() == Errc::config) ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
  return 1;
}

}  // namespace agpolab
