#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The Mirror Authors

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mirror/types.hpp"

namespace mirror {

/**
 * Source of next-token predictive distributions.
 *
 * Implementations accept one in-flight call at a time unless
 * `descriptor().reentrant` is set. Returned values are plain data and safe to
 * share across threads.
 */
class Backend {
 public:
  virtual ~Backend() = default;

  virtual const BackendDescriptor& descriptor() const = 0;

  /// Throws ContextOverflow (never truncates) when the text does not fit.
  virtual Tokenization tokenize(std::string_view text) = 0;

  /// Distribution i predicts the token at `distributions[i].context_position`.
  /// Position 0 is scored from BOS when available and requested; otherwise
  /// it is listed in `unscored_positions`.
  virtual ScoredSequence score_sequence(const std::vector<TokenSpan>& tokens,
                                        const ScoreOptions& options = {}) = 0;

  /// Argmax decoding of at most `n` tokens after `prefix`. Ties go to the
  /// lowest token id.
  virtual std::vector<TokenId> greedy_continuation(std::span<const TokenId> prefix,
                                                   std::size_t n) = 0;

  /// Surface text of a vocabulary entry, used for alternatives and missing tokens.
  virtual std::string token_text(TokenId id) const = 0;
};

/// Scoring capacity for a document: max_context minus the BOS slot.
inline std::size_t max_scorable_tokens(const BackendDescriptor& d, bool use_bos) {
  const std::size_t reserved = (use_bos && d.bos_id) ? 1 : 0;
  return d.max_context > reserved ? d.max_context - reserved : 0;
}

inline void check_context(const BackendDescriptor& d, std::size_t token_count, bool use_bos) {
  const std::size_t cap = max_scorable_tokens(d, use_bos);
  if (token_count > cap) throw Error::context_overflow(token_count, cap);
}

/// Most probable listed token; ties broken by lowest id. The TopK tail is
/// not a token and never wins.
inline TokenId argmax(const NextTokenDistribution& dist) {
  if (dist.entries.empty()) throw Error(ErrorCode::InvalidArgument, "argmax of empty distribution");
  auto best = dist.entries.front();
  for (const auto& e : dist.entries) {
    if (e.second > best.second || (e.second == best.second && e.first < best.first)) best = e;
  }
  return best.first;
}

struct Alternative {
  std::string text;
  double probability = 0.0;
  TokenId id = 0;
};

/// The k most probable entries as (text, probability), descending.
inline std::vector<Alternative> top_alternatives(
    const NextTokenDistribution& dist, std::size_t k,
    const std::function<std::string(TokenId)>& text_of) {
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "top_alternatives requires k >= 1");
  std::vector<std::pair<TokenId, double>> sorted = dist.entries;
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  const std::size_t n = std::min(k, sorted.size());
  std::vector<Alternative> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({text_of(sorted[i].first), std::exp(sorted[i].second), sorted[i].first});
  return out;
}

inline std::vector<Alternative> top_alternatives(const NextTokenDistribution& dist, std::size_t k,
                                                 const Backend& backend) {
  return top_alternatives(dist, k, [&backend](TokenId id) { return backend.token_text(id); });
}

}  // namespace mirror
