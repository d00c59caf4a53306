#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "agpolab/error.hpp"
#include "agpolab/policy.hpp"

namespace agpolab {

enum class LengthNorm : std::uint8_t { per_token_mean, sequence_sum };

/// Clipped-surrogate knobs: epsilon is the clip range, kl_coeff the weight
/// of the KL-to-reference penalty.
struct ClipConfig {
  double epsilon = 0.2;
  double kl_coeff = 0.0;
  LengthNorm length_norm = LengthNorm::per_token_mean;

  void validate() const {
    require(epsilon > 0.0 && epsilon < 1.0, Errc::config, "epsilon must be in (0,1)");
    require(kl_coeff >= 0.0, Errc::config, "kl_coeff must be >= 0");
  }
};

/// One group member inside a surrogate batch: the sampled tokens, the
/// sequence-level advantage (broadcast to every token), and the per-token
/// log-probs recorded at collection time.
struct SequenceTerm {
  std::vector<int> tokens;
  double advantage = 0.0;
  Eigen::VectorXd old_per_token_logprob;
};

/// One prompt's group. `current` is the policy being optimized; `reference`
/// is the KL anchor (required whenever kl_coeff > 0, otherwise optional —
/// when present, mean_kl is still reported). `temperature` must match the
/// distribution that produced old_per_token_logprob so ratios start at 1.
struct PromptBatchEntry {
  const TabularPolicy* current = nullptr;
  const TabularPolicy* reference = nullptr;
  double temperature = 1.0;
  std::vector<SequenceTerm> sequences;
};

/// Objective telemetry plus the exact analytic gradient, one matrix per
/// batch entry, shaped like that entry's logits table. The objective is a
/// quantity to MAXIMIZE; callers doing descent must negate it themselves.
struct SurrogateReport {
  double objective_value = 0.0;
  double clip_fraction = 0.0;  // share of tokens on the clipped branch
  double mean_kl = 0.0;        // the beta-coefficient aggregate (see below)
  std::vector<Eigen::MatrixXd> gradients;
  long token_count = 0;
};

/// min(ratio * adv, clip(ratio, 1-eps, 1+eps) * adv).
double clipped_term(double ratio, double advantage, double eps);

/// Exact KL(p || q) over a shared vocabulary: sum_v p(v) ln(p(v)/q(v)).
/// Throws Errc::support_mismatch where q(v) = 0 while p(v) > 0.
double exact_token_kl(const Eigen::Ref<const Eigen::VectorXd>& p,
                      const Eigen::Ref<const Eigen::VectorXd>& q);

/// The group-based clipped surrogate:
///
///   J = mean over entries of (1/G) sum_i norm_i sum_t
///         [ clipped_term(rho_{i,t}, A_i, eps) - beta * KL_t ]
///
/// with norm_i = 1/|y_i| under per_token_mean and 1 under sequence_sum.
/// mean_kl is aggregated with the objective's own weights, so J is affine in
/// beta with slope exactly -mean_kl. Gradients are exact in every logit of
/// each entry's current policy (and bitwise zero when every advantage is
/// zero and beta = 0).
SurrogateReport sequence_objective(const std::vector<PromptBatchEntry>& batch,
                                   const ClipConfig& cfg);

}  // namespace agpolab
