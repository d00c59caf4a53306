#pragma once

#include <stdexcept>
#include <string>

namespace agpolab {

/// Failure categories surfaced by the library. The CLI maps `config` and
/// `io` to usage errors (exit 1) and everything else to runtime errors
/// (exit 2); tests dispatch on the code.
enum class Errc {
  invalid_group,            // group shorter than 2
  degenerate_denominator,   // delta = 0 with sigma = 0
  invalid_baseline,         // baseline outside [-1, 1]
  invalid_ratio,            // non-positive probability ratio
  alignment,                // token-length mismatch across log-prob sources
  support_mismatch,         // q(v) = 0 where p(v) > 0
  invalid_token,            // token id out of vocabulary range
  shape_mismatch,           // dimension mismatch between policy/task/gradient
  size_budget,              // V^T over the enumeration budget
  invalid_response,         // verifier input of the wrong length
  invalid_query,            // pass@k query with k > n or c > n
  undefined_metric,         // ads metric with an empty denominator set
  empty_input,              // empty log where at least one record is required
  internal_check,           // a library self-check failed
  config,                   // malformed or inconsistent configuration
  io,                       // file not found / unreadable / unwritable
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool ok, Errc code, const std::string& what) {
  if (!ok) fail(code, what);
}

}  // namespace agpolab
