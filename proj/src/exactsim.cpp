#include "agpolab/exactsim.hpp"

#include <algorithm>
#include <cmath>

namespace agpolab {

namespace {

void check_shapes(const TabularPolicy& policy, const TaskSpec& task) {
  require(policy.vocab_size() == task.vocab_size && policy.max_len() == task.seq_len,
          Errc::shape_mismatch, "policy and task disagree on V or T");
}

// Enumerates every full-length sequence once, accumulating the probability
// mass of the correct set and of its complement separately.
void enumerate_masses(const TabularPolicy& policy, const TaskSpec& task, double& correct_mass,
                      double& incorrect_mass) {
  const int len = policy.max_len();
  const int vocab = policy.vocab_size();
  correct_mass = 0.0;
  incorrect_mass = 0.0;

  struct Frame {
    Eigen::Index ctx;
    double prob;
    std::uint32_t code;
  };
  std::vector<std::pair<Frame, int>> work;  // frame + depth
  work.push_back({{0, 1.0, 0}, 0});
  while (!work.empty()) {
    auto [frame, depth] = work.back();
    work.pop_back();
    const Eigen::VectorXd probs = policy.token_probs(frame.ctx);
    for (int v = 0; v < vocab; ++v) {
      const double p = frame.prob * probs[v];
      const std::uint32_t code = frame.code * static_cast<std::uint32_t>(vocab) +
                                 static_cast<std::uint32_t>(v);
      if (depth + 1 == len) {
        if (std::binary_search(task.correct_set.begin(), task.correct_set.end(), code)) {
          correct_mass += p;
        } else {
          incorrect_mass += p;
        }
      } else {
        work.push_back({{policy.child_context(frame.ctx, depth, v), p, code}, depth + 1});
      }
    }
  }
}

}  // namespace

DecompositionReport psr_nsr_decomposition(const TabularPolicy& policy, const TaskSpec& task) {
  check_shapes(policy, task);
  DecompositionReport report;
  enumerate_masses(policy, task, report.j_psr, report.j_nsr);
  report.j_total = report.j_psr - report.j_nsr;
  return report;
}

Eigen::MatrixXd mass_gradient(const TabularPolicy& policy,
                              std::span<const std::uint32_t> members, bool complement) {
  const int len = policy.max_len();
  const int vocab = policy.vocab_size();
  const Eigen::Index contexts = policy.context_count();

  const auto is_member = [&](std::uint32_t code) {
    const bool in = std::binary_search(members.begin(), members.end(), code);
    return complement ? !in : in;
  };

  // subtree_mass[c]: conditional probability of completing a member sequence
  // from context c. Filled bottom-up.
  Eigen::VectorXd subtree_mass = Eigen::VectorXd::Zero(contexts);
  for (int d = len - 1; d >= 0; --d) {
    const Eigen::Index begin = policy.level_offset(d);
    const Eigen::Index end = policy.level_offset(d + 1);
    for (Eigen::Index c = begin; c < end; ++c) {
      const Eigen::VectorXd probs = policy.token_probs(c);
      double mass = 0.0;
      if (d == len - 1) {
        const std::uint32_t prefix_code = static_cast<std::uint32_t>(c - begin);
        for (int v = 0; v < vocab; ++v) {
          const std::uint32_t code =
              prefix_code * static_cast<std::uint32_t>(vocab) + static_cast<std::uint32_t>(v);
          if (is_member(code)) mass += probs[v];
        }
      } else {
        for (int v = 0; v < vocab; ++v) {
          mass += probs[v] * subtree_mass[policy.child_context(c, d, v)];
        }
      }
      subtree_mass[c] = mass;
    }
  }

  // reach[c]: probability of visiting context c. Filled top-down.
  Eigen::VectorXd reach = Eigen::VectorXd::Zero(contexts);
  reach[0] = 1.0;
  for (int d = 0; d + 1 < len; ++d) {
    const Eigen::Index begin = policy.level_offset(d);
    const Eigen::Index end = policy.level_offset(d + 1);
    for (Eigen::Index c = begin; c < end; ++c) {
      if (reach[c] == 0.0) continue;
      const Eigen::VectorXd probs = policy.token_probs(c);
      for (int v = 0; v < vocab; ++v) {
        reach[policy.child_context(c, d, v)] += reach[c] * probs[v];
      }
    }
  }

  // d mass / d logit(c, w) = reach(c) * pi(w|c) * (child_mass(c, w) - subtree_mass(c)).
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(contexts, vocab);
  for (int d = 0; d < len; ++d) {
    const Eigen::Index begin = policy.level_offset(d);
    const Eigen::Index end = policy.level_offset(d + 1);
    for (Eigen::Index c = begin; c < end; ++c) {
      const Eigen::VectorXd probs = policy.token_probs(c);
      for (int w = 0; w < vocab; ++w) {
        double child_mass;
        if (d == len - 1) {
          const std::uint32_t code = static_cast<std::uint32_t>(c - begin) *
                                         static_cast<std::uint32_t>(vocab) +
                                     static_cast<std::uint32_t>(w);
          child_mass = is_member(code) ? 1.0 : 0.0;
        } else {
          child_mass = subtree_mass[policy.child_context(c, d, w)];
        }
        grad(c, w) = reach[c] * probs[w] * (child_mass - subtree_mass[c]);
      }
    }
  }
  return grad;
}

namespace {

// Binomial(n, p) pmf via log-gamma; exact enough for double accumulation.
double binom_pmf(int n, int j, double p) {
  if (p <= 0.0) return j == 0 ? 1.0 : 0.0;
  if (p >= 1.0) return j == n ? 1.0 : 0.0;
  const double log_choose =
      std::lgamma(n + 1.0) - std::lgamma(j + 1.0) - std::lgamma(n - j + 1.0);
  return std::exp(log_choose + j * std::log(p) + (n - j) * std::log1p(-p));
}

// Positive/negative member advantage on the canonical group with k correct.
double member_advantage(int k, int group_size, bool positive, const EstimatorConfig& cfg) {
  const GroupRewards group = canonical_group(k, group_size);
  AdvantageVector adv;
  if (cfg.variant == EstimatorVariant::grpo) {
    adv = grpo_advantage(group, cfg);
  } else {
    adv = agpo_advantage(group, cfg);
  }
  return positive ? adv[0] : adv[group_size - 1];
}

}  // namespace

double expected_positive_advantage(int group_size, double p, const EstimatorConfig& cfg) {
  // Own member correct: the other G-1 members contribute j ~ Binomial(G-1, p).
  double acc = 0.0;
  for (int j = 0; j <= group_size - 1; ++j) {
    acc += binom_pmf(group_size - 1, j, p) * member_advantage(j + 1, group_size, true, cfg);
  }
  return acc;
}

double expected_negative_advantage(int group_size, double p, const EstimatorConfig& cfg) {
  double acc = 0.0;
  for (int j = 0; j <= group_size - 1; ++j) {
    acc += binom_pmf(group_size - 1, j, p) * member_advantage(j, group_size, false, cfg);
  }
  return acc;
}

Eigen::MatrixXd exact_flow_gradient(const TabularPolicy& policy, const TaskSpec& task,
                                    const FlowMode& mode) {
  check_shapes(policy, task);
  switch (mode.kind) {
    case FlowKind::psr_only:
      return mass_gradient(policy, task.correct_set);
    case FlowKind::nsr_only:
      return -mass_gradient(policy, task.correct_set, /*complement=*/true);
    case FlowKind::weighted: {
      require(mode.lambda > 0.0, Errc::config, "weighted flow needs lambda > 0");
      return mode.lambda * mass_gradient(policy, task.correct_set) -
             mass_gradient(policy, task.correct_set, /*complement=*/true);
    }
    case FlowKind::grpo_expected:
    case FlowKind::agpo_expected: {
      require(mode.group_size >= 2, Errc::invalid_group, "expected flow needs G >= 2");
      EstimatorConfig cfg = mode.estimator;
      cfg.variant = mode.kind == FlowKind::grpo_expected ? EstimatorVariant::grpo
                                                         : EstimatorVariant::agpo;
      const double p = prior_correctness_exact(policy, task);
      const double w_pos = expected_positive_advantage(mode.group_size, p, cfg);
      const double w_neg = expected_negative_advantage(mode.group_size, p, cfg);
      return w_pos * mass_gradient(policy, task.correct_set) +
             w_neg * mass_gradient(policy, task.correct_set, /*complement=*/true);
    }
  }
  fail(Errc::config, "unknown flow mode");
}

TabularPolicy exact_gradient_step(const TabularPolicy& policy, const TaskSpec& task,
                                  const FlowMode& mode, double learning_rate) {
  return apply_update(policy, exact_flow_gradient(policy, task, mode), learning_rate);
}

std::vector<double> exact_passk_curve(const TabularPolicy& policy, const TaskSpec& task,
                                      std::span<const int> ks) {
  const double p = prior_correctness_exact(policy, task);
  std::vector<double> out;
  out.reserve(ks.size());
  for (int k : ks) {
    require(k >= 1, Errc::invalid_query, "k must be >= 1");
    out.push_back(1.0 - std::pow(1.0 - p, k));
  }
  return out;
}

std::vector<DampeningProbeEntry> nsr_dampening_probe(const TabularPolicy& policy,
                                                     std::span<const int> sequence) {
  // The negative-sample update applies -grad ln pi(y); on the chosen-token
  // logit that entry is -(1 - pi).
  const Eigen::MatrixXd grad = grad_sequence_logprob(policy, sequence);
  std::vector<DampeningProbeEntry> report;
  report.reserve(sequence.size());
  Eigen::Index ctx = 0;
  for (int t = 0; t < policy.max_len(); ++t) {
    const int tok = sequence[static_cast<std::size_t>(t)];
    DampeningProbeEntry entry;
    entry.prob_chosen = policy.token_probs(ctx)[tok];
    entry.gradient_magnitude = std::abs(-grad(ctx, tok));
    require(std::abs(entry.gradient_magnitude - (1.0 - entry.prob_chosen)) <= 1e-12,
            Errc::internal_check, "dampening factor deviates from 1 - pi(chosen)");
    report.push_back(entry);
    if (t + 1 < policy.max_len()) ctx = policy.child_context(ctx, t, tok);
  }
  return report;
}

}  // namespace agpolab
