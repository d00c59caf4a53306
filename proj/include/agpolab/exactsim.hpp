#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "agpolab/advantage.hpp"
#include "agpolab/envs.hpp"
#include "agpolab/policy.hpp"

namespace agpolab {

/// How the full fixed-length space splits across the correct set and its
/// complement. j_psr is exactly the prior correctness probability.
struct DecompositionReport {
  double j_psr = 0.0;   // mass on the correct set
  double j_nsr = 0.0;   // mass on the complement
  double j_total = 0.0; // j_psr - j_nsr
};

enum class FlowKind : std::uint8_t {
  psr_only,       // ascend correct mass:            + sum_{y+} pi(y) grad ln pi(y)
  nsr_only,       // suppress incorrect mass:        - sum_{y-} pi(y) grad ln pi(y)
  weighted,       // lambda * psr_only + nsr_only (the lambda-weighted signed update)
  grpo_expected,  // per-sequence weight = expected group-normalized advantage
  agpo_expected,  // per-sequence weight = expected asymmetric advantage
};

/// Expected-flow selector. For grpo_expected / agpo_expected the update is
///
///   u = w+ * grad(mass on Y+) + w- * grad(mass on Y-),
///
/// where w+/w- are the estimator's advantages averaged over the group
/// composition k ~ Binomial(G, p) conditioned on the member's own
/// correctness (k = 1 + Binomial(G-1, p) for correct members,
/// k = Binomial(G-1, p) for incorrect ones) — the exact expectation of the
/// sampled algorithm's per-sequence weight.
struct FlowMode {
  FlowKind kind = FlowKind::psr_only;
  double lambda = 1.0;  // weighted; > 0
  int group_size = 8;   // grpo/agpo expected
  EstimatorConfig estimator = EstimatorConfig::defaults_for(EstimatorVariant::agpo);
};

/// Exact masses on the correct set and its complement, both by direct
/// enumeration (their sum reconstructing 1 is a checked property, not an
/// identity shortcut).
DecompositionReport psr_nsr_decomposition(const TabularPolicy& policy, const TaskSpec& task);

/// Exact gradient of the total probability mass on `members` (encoded,
/// sorted) with respect to every logit, via one forward-backward pass over
/// the prefix tree.
Eigen::MatrixXd mass_gradient(const TabularPolicy& policy,
                              std::span<const std::uint32_t> members, bool complement = false);

/// E[A | member correct] and E[A | member incorrect] under composition
/// k ~ Binomial(G, p) for the grpo/agpo estimators.
double expected_positive_advantage(int group_size, double p, const EstimatorConfig& cfg);
double expected_negative_advantage(int group_size, double p, const EstimatorConfig& cfg);

/// The applied update direction for one flow step (before the learning
/// rate). All flows are exact expectations; no sampling anywhere.
Eigen::MatrixXd exact_flow_gradient(const TabularPolicy& policy, const TaskSpec& task,
                                    const FlowMode& mode);

/// One ascent step on the exact expected objective; returns the updated
/// policy.
TabularPolicy exact_gradient_step(const TabularPolicy& policy, const TaskSpec& task,
                                  const FlowMode& mode, double learning_rate);

/// 1 - (1-p)^k with p the exact prior correctness probability — the
/// infinite-sample limit of the unbiased estimator.
std::vector<double> exact_passk_curve(const TabularPolicy& policy, const TaskSpec& task,
                                      std::span<const int> ks);

/// Per-position view of the negative-sample gradient on the chosen token:
/// magnitude equals 1 - pi(chosen), so confident tokens are barely
/// penalized. The probe asserts the identity to 1e-12 itself.
struct DampeningProbeEntry {
  double prob_chosen = 0.0;
  double gradient_magnitude = 0.0;
};
std::vector<DampeningProbeEntry> nsr_dampening_probe(const TabularPolicy& policy,
                                                     std::span<const int> sequence);

}  // namespace agpolab
