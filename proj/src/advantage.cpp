#include "agpolab/advantage.hpp"

#include <cmath>

#include "agpolab/io.hpp"

namespace agpolab {

GroupRewards canonical_group(int count_correct, int group_size) {
  require(group_size >= 2, Errc::invalid_group, "group size must be >= 2");
  require(count_correct >= 0 && count_correct <= group_size, Errc::invalid_group,
          "count_correct out of range");
  GroupRewards g;
  g.rewards.reserve(static_cast<std::size_t>(group_size));
  for (int i = 0; i < group_size; ++i) {
    g.rewards.push_back(i < count_correct ? RewardSign::positive : RewardSign::negative);
  }
  return g;
}

const char* estimator_name(EstimatorVariant v) {
  switch (v) {
    case EstimatorVariant::agpo: return "agpo";
    case EstimatorVariant::grpo: return "grpo";
    case EstimatorVariant::reinforce: return "reinforce";
    case EstimatorVariant::w_reinforce: return "w_reinforce";
    case EstimatorVariant::ppo_baseline: return "ppo_baseline";
  }
  return "unknown";
}

std::optional<EstimatorVariant> estimator_from_name(std::string_view name) {
  for (EstimatorVariant v : {EstimatorVariant::agpo, EstimatorVariant::grpo,
                             EstimatorVariant::reinforce, EstimatorVariant::w_reinforce,
                             EstimatorVariant::ppo_baseline}) {
    if (name == estimator_name(v)) return v;
  }
  return std::nullopt;
}

EstimatorConfig EstimatorConfig::defaults_for(EstimatorVariant v) {
  EstimatorConfig cfg;
  cfg.variant = v;
  cfg.lambda_pos = (v == EstimatorVariant::w_reinforce) ? 0.1 : 1.0;
  return cfg;
}

void EstimatorConfig::validate() const {
  require(delta >= 0.0, Errc::config, "delta must be >= 0");
  require(r_floor <= 0.0, Errc::config, "r_floor must be <= 0");
  require(lambda_pos > 0.0, Errc::config, "lambda_pos must be > 0");
  require(eps_std > 0.0, Errc::config, "eps_std must be > 0");
}

GroupStats group_stats(const GroupRewards& group) {
  const int n = group.size();
  require(n >= 2, Errc::invalid_group, "group shorter than 2");
  double sum = 0.0;
  int correct = 0;
  for (RewardSign r : group.rewards) {
    sum += reward_value(r);
    if (is_positive(r)) ++correct;
  }
  const double mean = sum / n;
  double sq = 0.0;
  for (RewardSign r : group.rewards) {
    const double d = reward_value(r) - mean;
    sq += d * d;
  }
  GroupStats stats;
  stats.mean = mean;
  stats.stddev = std::sqrt(sq / n);  // population form
  stats.count_correct = correct;
  return stats;
}

AdvantageVector agpo_advantage(const GroupRewards& group, const EstimatorConfig& cfg) {
  cfg.validate();
  const GroupStats s = group_stats(group);
  const double var = s.stddev * s.stddev;
  const double denom_sq = var + cfg.delta * cfg.delta;
  require(denom_sq > 0.0, Errc::degenerate_denominator,
          "delta = 0 with a homogeneous group: advantage denominator is 0");
  const double inv_denom = 1.0 / std::sqrt(denom_sq);
  AdvantageVector adv(group.size());
  for (int i = 0; i < group.size(); ++i) {
    const double r = reward_value(group.rewards[i]);
    const double gated = is_positive(group.rewards[i]) ? 0.0 : cfg.r_floor;
    adv[i] = (r - s.mean) * inv_denom + gated;
  }
  return adv;
}

AdvantageVector grpo_advantage(const GroupRewards& group, const EstimatorConfig& cfg) {
  cfg.validate();
  const GroupStats s = group_stats(group);
  const double inv_denom = 1.0 / (s.stddev + cfg.eps_std);
  AdvantageVector adv(group.size());
  for (int i = 0; i < group.size(); ++i) {
    adv[i] = (reward_value(group.rewards[i]) - s.mean) * inv_denom;
  }
  return adv;
}

AdvantageVector signed_reinforce_advantage(const GroupRewards& group, const EstimatorConfig& cfg) {
  cfg.validate();
  require(group.size() >= 2, Errc::invalid_group, "group shorter than 2");
  AdvantageVector adv(group.size());
  for (int i = 0; i < group.size(); ++i) {
    adv[i] = is_positive(group.rewards[i]) ? cfg.lambda_pos : -1.0;
  }
  return adv;
}

double ppo_baseline_advantage(RewardSign reward, double baseline) {
  require(baseline >= -1.0 && baseline <= 1.0, Errc::invalid_baseline,
          "baseline outside [-1, 1]");
  return reward_value(reward) - baseline;
}

namespace {

// Positive/negative member advantages for the canonical group at a given k.
std::pair<std::optional<double>, std::optional<double>> table_entries(
    int k, int group_size, const EstimatorConfig& cfg) {
  const GroupRewards group = canonical_group(k, group_size);
  AdvantageVector adv;
  switch (cfg.variant) {
    case EstimatorVariant::agpo:
      adv = agpo_advantage(group, cfg);
      break;
    case EstimatorVariant::grpo:
      adv = grpo_advantage(group, cfg);
      break;
    case EstimatorVariant::reinforce:
    case EstimatorVariant::w_reinforce:
      adv = signed_reinforce_advantage(group, cfg);
      break;
    case EstimatorVariant::ppo_baseline: {
      const GroupStats s = group_stats(group);
      adv.resize(group.size());
      for (int i = 0; i < group.size(); ++i) {
        adv[i] = ppo_baseline_advantage(group.rewards[i], s.mean);
      }
      break;
    }
  }
  std::optional<double> pos, neg;
  if (k > 0) pos = adv[0];
  if (k < group_size) neg = adv[group_size - 1];
  return {pos, neg};
}

}  // namespace

std::vector<AdvantageTableRow> advantage_table(int group_size, const EstimatorConfig& cfg) {
  require(group_size >= 2, Errc::invalid_group, "group size must be >= 2");
  cfg.validate();
  std::vector<AdvantageTableRow> rows;
  rows.reserve(static_cast<std::size_t>(group_size) + 1);
  for (int k = 0; k <= group_size; ++k) {
    auto [pos, neg] = table_entries(k, group_size, cfg);
    rows.push_back({k, pos, neg});
  }
  return rows;
}

std::string advantage_table_csv(const std::vector<AdvantageTableRow>& rows) {
  std::string out = "k,adv_pos,adv_neg\n";
  for (const AdvantageTableRow& row : rows) {
    out += std::to_string(row.count_correct);
    out += ',';
    if (row.adv_pos) out += format_sig7(*row.adv_pos);
    out += ',';
    if (row.adv_neg) out += format_sig7(*row.adv_neg);
    out += '\n';
  }
  return out;
}

}  // namespace agpolab
