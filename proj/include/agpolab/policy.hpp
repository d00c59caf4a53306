#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "agpolab/advantage.hpp"
#include "agpolab/error.hpp"
#include "agpolab/rng.hpp"

namespace agpolab {

/// A tabular autoregressive softmax policy over fixed-length token
/// sequences. Contexts are all prefixes of length < T, stored breadth-first:
/// row 0 is the root, rows offset(d)..offset(d+1) are the depth-d prefixes in
/// base-V order. The logits matrix (contexts x V) is the full parameter set.
///
/// Policies are immutable values in practice: updates go through
/// apply_update, which returns a new policy, so the pre-update snapshot stays
/// available as the old policy for ratio computation.
class TabularPolicy {
 public:
  /// Uniform policy (all logits zero). Enforces V^T <= 65536.
  TabularPolicy(int vocab_size, int max_len, std::string prompt_id);

  int vocab_size() const { return vocab_size_; }
  int max_len() const { return max_len_; }
  const std::string& prompt_id() const { return prompt_id_; }

  Eigen::Index context_count() const { return logits_.rows(); }
  std::size_t sequence_space_size() const;  // V^T

  const Eigen::MatrixXd& logits() const { return logits_; }
  void set_logits(const Eigen::MatrixXd& logits);

  /// Row index of a prefix (length < T) in the logits table.
  Eigen::Index context_index(std::span<const int> prefix) const;
  /// Row index of the child context reached by taking `token` at `context`.
  Eigen::Index child_context(Eigen::Index context, int depth, int token) const;
  /// First row index of depth-d contexts; depth may be T (one past the end).
  Eigen::Index level_offset(int depth) const { return level_offsets_[static_cast<std::size_t>(depth)]; }
  /// Decodes a context row index back into its prefix tokens.
  std::vector<int> context_prefix(Eigen::Index context) const;

  /// softmax(logits[context]/temperature); sums to 1 within 1e-12.
  Eigen::VectorXd token_probs(Eigen::Index context, double temperature = 1.0) const;
  /// log softmax(logits[context]/temperature).
  Eigen::VectorXd token_log_probs(Eigen::Index context, double temperature = 1.0) const;

 private:
  int vocab_size_ = 2;
  int max_len_ = 1;
  std::string prompt_id_;
  std::vector<Eigen::Index> level_offsets_;  // size T+1
  Eigen::MatrixXd logits_;
};

/// One sampled episode: fixed length T, per-token log-probs recorded under
/// the distribution that generated it. The reward is attached after
/// verification.
struct Trajectory {
  std::vector<int> tokens;
  Eigen::VectorXd per_token_logprob_old;
  double logprob_old = 0.0;  // sum of per_token_logprob_old
  std::optional<RewardSign> reward;
};

/// Draws tokens autoregressively from softmax(logits/temperature).
/// Deterministic given the stream state.
Trajectory sample_trajectory(const TabularPolicy& policy, double temperature, RngStream& rng);

/// Argmax-logit token at every context; ties break to the lowest token id.
/// Log-probs are recorded under the policy's own (temperature 1) distribution.
Trajectory greedy_decode(const TabularPolicy& policy);

/// Sum over t of ln softmax(logits[context_t]/temperature)[token_t].
double sequence_logprob(const TabularPolicy& policy, std::span<const int> tokens,
                        double temperature = 1.0);

/// Exact gradient of sequence_logprob with respect to every logit: at each
/// visited context, (indicator - probs)/temperature; zero elsewhere. The
/// chosen-token entry is 1 - pi, the dampening factor that caps how hard a
/// negative update can push on a confident token.
Eigen::MatrixXd grad_sequence_logprob(const TabularPolicy& policy, std::span<const int> tokens,
                                      double temperature = 1.0);

/// Visitation-weighted mean per-token Shannon entropy (natural log),
/// computed exactly by prefix-tree recursion. Bounded by [0, ln V].
double mean_token_entropy(const TabularPolicy& policy, double temperature = 1.0);

/// logits + learning_rate * gradient (ascent). Returns the updated policy.
TabularPolicy apply_update(const TabularPolicy& policy, const Eigen::MatrixXd& gradient,
                           double learning_rate);

/// Checkpoint text format: header line `V<TAB>T<TAB>prompt_id`, then one
/// line per context in breadth-first order:
/// `tok,tok,...<TAB>logit,logit,...` (empty prefix for the root). Logits use
/// 17 significant digits so save/load round-trips exactly.
void save_policy(const TabularPolicy& policy, std::ostream& out);
void save_policy_file(const TabularPolicy& policy, const std::string& path);
TabularPolicy load_policy(std::istream& in);
TabularPolicy load_policy_file(const std::string& path);

}  // namespace agpolab
