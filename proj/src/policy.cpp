#include "agpolab/policy.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "agpolab/io.hpp"

namespace agpolab {

namespace {

constexpr std::size_t kSequenceSpaceBudget = 65536;  // V^T cap (desk scale)

std::size_t checked_pow(int base, int exp) {
  std::size_t value = 1;
  for (int i = 0; i < exp; ++i) {
    value *= static_cast<std::size_t>(base);
    require(value <= kSequenceSpaceBudget, Errc::size_budget,
            "V^T exceeds the enumeration budget of 65536");
  }
  return value;
}

}  // namespace

TabularPolicy::TabularPolicy(int vocab_size, int max_len, std::string prompt_id)
    : vocab_size_(vocab_size), max_len_(max_len), prompt_id_(std::move(prompt_id)) {
  require(vocab_size_ >= 2, Errc::config, "vocab_size must be >= 2");
  require(max_len_ >= 1, Errc::config, "max_len must be >= 1");
  checked_pow(vocab_size_, max_len_);
  level_offsets_.resize(static_cast<std::size_t>(max_len_) + 1);
  Eigen::Index offset = 0;
  Eigen::Index level = 1;
  for (int d = 0; d <= max_len_; ++d) {
    level_offsets_[static_cast<std::size_t>(d)] = offset;
    offset += level;
    level *= vocab_size_;
  }
  logits_ = Eigen::MatrixXd::Zero(level_offsets_[static_cast<std::size_t>(max_len_)], vocab_size_);
}

std::size_t TabularPolicy::sequence_space_size() const {
  std::size_t value = 1;
  for (int i = 0; i < max_len_; ++i) value *= static_cast<std::size_t>(vocab_size_);
  return value;
}

void TabularPolicy::set_logits(const Eigen::MatrixXd& logits) {
  require(logits.rows() == logits_.rows() && logits.cols() == logits_.cols(),
          Errc::shape_mismatch, "logits table has the wrong shape");
  logits_ = logits;
}

Eigen::Index TabularPolicy::context_index(std::span<const int> prefix) const {
  require(static_cast<int>(prefix.size()) <= max_len_ - 1, Errc::shape_mismatch,
          "prefix must be shorter than max_len");
  Eigen::Index code = 0;
  for (int tok : prefix) {
    require(tok >= 0 && tok < vocab_size_, Errc::invalid_token, "token id out of range");
    code = code * vocab_size_ + tok;
  }
  return level_offsets_[prefix.size()] + code;
}

Eigen::Index TabularPolicy::child_context(Eigen::Index context, int depth, int token) const {
  const Eigen::Index code = context - level_offsets_[static_cast<std::size_t>(depth)];
  return level_offsets_[static_cast<std::size_t>(depth) + 1] + code * vocab_size_ + token;
}

std::vector<int> TabularPolicy::context_prefix(Eigen::Index context) const {
  int depth = 0;
  while (depth + 1 <= max_len_ && level_offsets_[static_cast<std::size_t>(depth) + 1] <= context) {
    ++depth;
  }
  Eigen::Index code = context - level_offsets_[static_cast<std::size_t>(depth)];
  std::vector<int> prefix(static_cast<std::size_t>(depth));
  for (int i = depth - 1; i >= 0; --i) {
    prefix[static_cast<std::size_t>(i)] = static_cast<int>(code % vocab_size_);
    code /= vocab_size_;
  }
  return prefix;
}

Eigen::VectorXd TabularPolicy::token_log_probs(Eigen::Index context, double temperature) const {
  require(temperature > 0.0, Errc::config, "temperature must be > 0");
  Eigen::VectorXd scaled = logits_.row(context).transpose() / temperature;
  const double max = scaled.maxCoeff();
  const double logsum = max + std::log((scaled.array() - max).exp().sum());
  return scaled.array() - logsum;
}

Eigen::VectorXd TabularPolicy::token_probs(Eigen::Index context, double temperature) const {
  return token_log_probs(context, temperature).array().exp();
}

Trajectory sample_trajectory(const TabularPolicy& policy, double temperature, RngStream& rng) {
  require(temperature > 0.0, Errc::config, "temperature must be > 0");
  const int len = policy.max_len();
  Trajectory traj;
  traj.tokens.resize(static_cast<std::size_t>(len));
  traj.per_token_logprob_old.resize(len);
  Eigen::Index ctx = 0;
  for (int t = 0; t < len; ++t) {
    const Eigen::VectorXd logp = policy.token_log_probs(ctx, temperature);
    const Eigen::VectorXd probs = logp.array().exp();
    const int tok = rng.sample_categorical(probs);
    traj.tokens[static_cast<std::size_t>(t)] = tok;
    traj.per_token_logprob_old[t] = logp[tok];
    if (t + 1 < len) ctx = policy.child_context(ctx, t, tok);
  }
  traj.logprob_old = traj.per_token_logprob_old.sum();
  return traj;
}

Trajectory greedy_decode(const TabularPolicy& policy) {
  const int len = policy.max_len();
  Trajectory traj;
  traj.tokens.resize(static_cast<std::size_t>(len));
  traj.per_token_logprob_old.resize(len);
  Eigen::Index ctx = 0;
  for (int t = 0; t < len; ++t) {
    // maxCoeff scans in index order, so ties resolve to the lowest token id.
    Eigen::Index tok = 0;
    policy.logits().row(ctx).maxCoeff(&tok);
    traj.tokens[static_cast<std::size_t>(t)] = static_cast<int>(tok);
    traj.per_token_logprob_old[t] = policy.token_log_probs(ctx)[tok];
    if (t + 1 < len) ctx = policy.child_context(ctx, t, static_cast<int>(tok));
  }
  traj.logprob_old = traj.per_token_logprob_old.sum();
  return traj;
}

double sequence_logprob(const TabularPolicy& policy, std::span<const int> tokens,
                        double temperature) {
  require(static_cast<int>(tokens.size()) == policy.max_len(), Errc::alignment,
          "sequence length must equal max_len");
  double total = 0.0;
  Eigen::Index ctx = 0;
  for (int t = 0; t < policy.max_len(); ++t) {
    const int tok = tokens[static_cast<std::size_t>(t)];
    require(tok >= 0 && tok < policy.vocab_size(), Errc::invalid_token, "token id out of range");
    total += policy.token_log_probs(ctx, temperature)[tok];
    if (t + 1 < policy.max_len()) ctx = policy.child_context(ctx, t, tok);
  }
  return total;
}

Eigen::MatrixXd grad_sequence_logprob(const TabularPolicy& policy, std::span<const int> tokens,
                                      double temperature) {
  require(static_cast<int>(tokens.size()) == policy.max_len(), Errc::alignment,
          "sequence length must equal max_len");
  Eigen::MatrixXd grad =
      Eigen::MatrixXd::Zero(policy.context_count(), policy.vocab_size());
  Eigen::Index ctx = 0;
  const double inv_temp = 1.0 / temperature;
  for (int t = 0; t < policy.max_len(); ++t) {
    const int tok = tokens[static_cast<std::size_t>(t)];
    require(tok >= 0 && tok < policy.vocab_size(), Errc::invalid_token, "token id out of range");
    grad.row(ctx) = -policy.token_probs(ctx, temperature).transpose() * inv_temp;
    grad(ctx, tok) += inv_temp;
    if (t + 1 < policy.max_len()) ctx = policy.child_context(ctx, t, tok);
  }
  return grad;
}

double mean_token_entropy(const TabularPolicy& policy, double temperature) {
  const int len = policy.max_len();
  Eigen::VectorXd reach = Eigen::VectorXd::Ones(1);
  double total = 0.0;
  for (int d = 0; d < len; ++d) {
    const Eigen::Index begin = policy.level_offset(d);
    const Eigen::Index count = reach.size();
    Eigen::VectorXd next;
    if (d + 1 < len) next = Eigen::VectorXd::Zero(count * policy.vocab_size());
    for (Eigen::Index i = 0; i < count; ++i) {
      const Eigen::VectorXd logp = policy.token_log_probs(begin + i, temperature);
      const Eigen::VectorXd probs = logp.array().exp();
      const double entropy = -(probs.array() * logp.array()).sum();
      total += reach[i] * entropy;
      if (d + 1 < len) next.segment(i * policy.vocab_size(), policy.vocab_size()) = reach[i] * probs;
    }
    if (d + 1 < len) reach = std::move(next);
  }
  return total / len;
}

TabularPolicy apply_update(const TabularPolicy& policy, const Eigen::MatrixXd& gradient,
                           double learning_rate) {
  require(learning_rate > 0.0, Errc::config, "learning_rate must be > 0");
  require(gradient.rows() == policy.logits().rows() && gradient.cols() == policy.logits().cols(),
          Errc::shape_mismatch, "gradient shaped unlike the logits table");
  TabularPolicy updated = policy;
  updated.set_logits(policy.logits() + learning_rate * gradient);
  return updated;
}

void save_policy(const TabularPolicy& policy, std::ostream& out) {
  out << policy.vocab_size() << '\t' << policy.max_len() << '\t' << policy.prompt_id() << '\n';
  for (Eigen::Index c = 0; c < policy.context_count(); ++c) {
    const std::vector<int> prefix = policy.context_prefix(c);
    for (std::size_t i = 0; i < prefix.size(); ++i) {
      if (i > 0) out << ',';
      out << prefix[i];
    }
    out << '\t';
    for (int v = 0; v < policy.vocab_size(); ++v) {
      if (v > 0) out << ',';
      out << format_sig17(policy.logits()(c, v));
    }
    out << '\n';
  }
}

void save_policy_file(const TabularPolicy& policy, const std::string& path) {
  std::ostringstream ss;
  save_policy(policy, ss);
  write_text_file(path, ss.str());
}

TabularPolicy load_policy(std::istream& in) {
  std::string header;
  require(static_cast<bool>(std::getline(in, header)), Errc::io, "empty policy checkpoint");
  std::istringstream hs(header);
  int vocab = 0, len = 0;
  std::string prompt_id;
  hs >> vocab >> len;
  require(!hs.fail(), Errc::io, "malformed policy header");
  std::getline(hs, prompt_id);
  if (!prompt_id.empty() && prompt_id.front() == '\t') prompt_id.erase(0, 1);

  TabularPolicy policy(vocab, len, prompt_id);
  Eigen::MatrixXd logits(policy.context_count(), vocab);
  std::string line;
  for (Eigen::Index c = 0; c < policy.context_count(); ++c) {
    require(static_cast<bool>(std::getline(in, line)), Errc::io,
            "policy checkpoint truncated");
    const std::size_t tab = line.find('\t');
    require(tab != std::string::npos, Errc::io, "malformed policy row");
    std::istringstream vs(line.substr(tab + 1));
    for (int v = 0; v < vocab; ++v) {
      double value = 0.0;
      char sep = 0;
      vs >> value;
      require(!vs.fail(), Errc::io, "malformed logit value");
      if (v + 1 < vocab) vs >> sep;
      logits(c, v) = value;
    }
  }
  policy.set_logits(logits);
  return policy;
}

TabularPolicy load_policy_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::io, "cannot open policy checkpoint: " + path);
  return load_policy(in);
}

}  // namespace agpolab
