#include "agpolab/objective.hpp"

#include <algorithm>
#include <cmath>

namespace agpolab {

double clipped_term(double ratio, double advantage, double eps) {
  require(std::isfinite(ratio) && ratio > 0.0, Errc::invalid_ratio,
          "probability ratio must be positive");
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  return std::min(ratio * advantage, clipped * advantage);
}

double exact_token_kl(const Eigen::Ref<const Eigen::VectorXd>& p,
                      const Eigen::Ref<const Eigen::VectorXd>& q) {
  require(p.size() == q.size(), Errc::shape_mismatch, "KL over different vocabularies");
  double kl = 0.0;
  for (Eigen::Index v = 0; v < p.size(); ++v) {
    if (p[v] == 0.0) continue;
    require(q[v] > 0.0, Errc::support_mismatch, "q has a zero where p is positive");
    kl += p[v] * std::log(p[v] / q[v]);
  }
  return kl;
}

SurrogateReport sequence_objective(const std::vector<PromptBatchEntry>& batch,
                                   const ClipConfig& cfg) {
  cfg.validate();
  require(!batch.empty(), Errc::empty_input, "surrogate batch is empty");

  SurrogateReport report;
  report.gradients.reserve(batch.size());
  const double entry_weight = 1.0 / static_cast<double>(batch.size());
  long clipped_tokens = 0;

  for (const PromptBatchEntry& entry : batch) {
    require(entry.current != nullptr, Errc::config, "batch entry without a current policy");
    require(cfg.kl_coeff == 0.0 || entry.reference != nullptr, Errc::config,
            "kl_coeff > 0 requires a reference policy");
    require(!entry.sequences.empty(), Errc::invalid_group, "batch entry with no sequences");
    const TabularPolicy& policy = *entry.current;
    if (entry.reference != nullptr) {
      require(entry.reference->vocab_size() == policy.vocab_size() &&
                  entry.reference->max_len() == policy.max_len(),
              Errc::shape_mismatch, "reference policy shaped unlike the current policy");
    }
    const double temp = entry.temperature;
    const double inv_temp = 1.0 / temp;
    const double group_weight = entry_weight / static_cast<double>(entry.sequences.size());

    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(policy.context_count(), policy.vocab_size());

    for (const SequenceTerm& seq : entry.sequences) {
      const int len = static_cast<int>(seq.tokens.size());
      require(len == policy.max_len(), Errc::alignment,
              "trajectory length differs from the policy's max_len");
      require(seq.old_per_token_logprob.size() == len, Errc::alignment,
              "old log-probs misaligned with the trajectory");
      const double norm =
          cfg.length_norm == LengthNorm::per_token_mean ? 1.0 / static_cast<double>(len) : 1.0;
      const double weight = group_weight * norm;
      const double adv = seq.advantage;

      Eigen::Index ctx = 0;
      for (int t = 0; t < len; ++t) {
        const int tok = seq.tokens[static_cast<std::size_t>(t)];
        require(tok >= 0 && tok < policy.vocab_size(), Errc::invalid_token,
                "token id out of range");
        const Eigen::VectorXd cur_logp = policy.token_log_probs(ctx, temp);
        const double ratio = std::exp(cur_logp[tok] - seq.old_per_token_logprob[t]);
        require(std::isfinite(ratio) && ratio > 0.0, Errc::invalid_ratio,
                "probability ratio must be positive and finite");

        const double unclipped = ratio * adv;
        const double clipped_ratio = std::clamp(ratio, 1.0 - cfg.epsilon, 1.0 + cfg.epsilon);
        const double clipped = clipped_ratio * adv;
        const bool clip_active = clipped < unclipped;  // min takes the constant branch
        report.objective_value += weight * std::min(unclipped, clipped);
        if (clip_active) ++clipped_tokens;

        // d(rho * A)/d logit = rho * A * (indicator - pi)/temp; zero on the
        // clipped branch. Skipped entirely at A = 0 to keep the all-correct
        // group update bitwise zero.
        if (!clip_active && adv != 0.0) {
          const double coeff = weight * unclipped * inv_temp;
          grad.row(ctx).array() -= coeff * cur_logp.array().exp().transpose();
          grad(ctx, tok) += coeff;
        }

        if (entry.reference != nullptr) {
          const Eigen::VectorXd ref_logp = entry.reference->token_log_probs(ctx, temp);
          const Eigen::ArrayXd cur_p = cur_logp.array().exp();
          const Eigen::ArrayXd diff = cur_logp.array() - ref_logp.array();
          const double kl = (cur_p * diff).sum();
          report.mean_kl += weight * kl;
          if (cfg.kl_coeff > 0.0) {
            report.objective_value -= weight * cfg.kl_coeff * kl;
            // dKL/d logit_w = pi_w * (diff_w - KL)/temp
            grad.row(ctx).array() -=
                (weight * cfg.kl_coeff * inv_temp) * (cur_p * (diff - kl)).transpose();
          }
        }

        ++report.token_count;
        if (t + 1 < len) ctx = policy.child_context(ctx, t, tok);
      }
    }
    report.gradients.push_back(std::move(grad));
  }

  report.clip_fraction =
      report.token_count > 0
          ? static_cast<double>(clipped_tokens) / static_cast<double>(report.token_count)
          : 0.0;
  return report;
}

}  // namespace agpolab
