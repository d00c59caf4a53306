#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "agpolab/error.hpp"

namespace agpolab {

/// Signed outcome reward. Verifiers emit {0,1}; the trainer maps that to
/// {-1,+1} at the boundary so every estimator consumes one convention.
enum class RewardSign : std::int8_t { negative = -1, positive = +1 };

inline RewardSign reward_from_verifier(int bit) {
  return bit != 0 ? RewardSign::positive : RewardSign::negative;
}
inline bool is_positive(RewardSign r) { return r == RewardSign::positive; }
inline double reward_value(RewardSign r) { return is_positive(r) ? 1.0 : -1.0; }

/// One prompt's group of G signed outcome rewards, in rollout order.
struct GroupRewards {
  std::vector<RewardSign> rewards;
  std::string prompt_id;

  int size() const { return static_cast<int>(rewards.size()); }
};

/// Builds the canonical group with k leading +1 rewards out of G.
GroupRewards canonical_group(int count_correct, int group_size);

struct GroupStats {
  double mean = 0.0;       // mu
  double stddev = 0.0;     // population sigma, never the (G-1) form
  int count_correct = 0;   // k
};

enum class EstimatorVariant : std::uint8_t {
  agpo,
  grpo,
  reinforce,
  w_reinforce,
  ppo_baseline,
};

const char* estimator_name(EstimatorVariant v);
std::optional<EstimatorVariant> estimator_from_name(std::string_view name);

/// Which advantage rule plus its constants. Fields unused by a variant are
/// ignored but still range-checked.
struct EstimatorConfig {
  EstimatorVariant variant = EstimatorVariant::agpo;
  double delta = 2.0;       // constraint factor, >= 0
  double r_floor = -1.0;    // gated negative reward, <= 0
  double lambda_pos = 1.0;  // positive weight, > 0
  double eps_std = 1e-6;    // std stability constant, > 0

  /// Per-variant defaults: lambda_pos is 0.1 for w_reinforce, 1.0 for
  /// reinforce; everything else is shared.
  static EstimatorConfig defaults_for(EstimatorVariant v);

  void validate() const;
};

/// Per-member advantages aligned with the source GroupRewards order.
using AdvantageVector = Eigen::VectorXd;

/// Exact mean / population std / correct count of a group. Throws
/// Errc::invalid_group for groups shorter than 2.
GroupStats group_stats(const GroupRewards& group);

/// A_i = (r_i - mu) / sqrt(sigma^2 + delta^2) + [r_i < 0] * r_floor.
/// Throws Errc::degenerate_denominator when delta = 0 and sigma = 0.
AdvantageVector agpo_advantage(const GroupRewards& group, const EstimatorConfig& cfg);

/// A_i = (r_i - mu) / (sigma + eps_std).
AdvantageVector grpo_advantage(const GroupRewards& group, const EstimatorConfig& cfg);

/// A_i = +lambda for correct members, -1 for incorrect ones; independent of
/// group composition. lambda = 1 recovers plain signed rewards.
AdvantageVector signed_reinforce_advantage(const GroupRewards& group, const EstimatorConfig& cfg);

/// Episodic outcome advantage r - baseline. Throws Errc::invalid_baseline
/// outside [-1, 1].
double ppo_baseline_advantage(RewardSign reward, double baseline);

/// One row of the advantage-vs-k table: positive entry undefined at k = 0,
/// negative entry undefined at k = G.
struct AdvantageTableRow {
  int count_correct = 0;
  std::optional<double> adv_pos;
  std::optional<double> adv_neg;
};

/// One row per k in {0..G}, evaluated on the canonical group. For
/// ppo_baseline the baseline is the group mean (the value a critic fit to
/// mean group reward converges to).
std::vector<AdvantageTableRow> advantage_table(int group_size, const EstimatorConfig& cfg);

/// CSV with header `k,adv_pos,adv_neg`, 7 significant digits, empty string
/// for undefined cells.
std::string advantage_table_csv(const std::vector<AdvantageTableRow>& rows);

}  // namespace agpolab
