#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The Mirror Authors

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mirror/error.hpp"
#include "mirror/numeric.hpp"

namespace mirror {

using TokenId = std::int64_t;

/// A tokenizer unit and its byte extent in the source document.
struct TokenSpan {
  TokenId id = 0;
  std::string text;
  std::size_t byte_start = 0;
  std::size_t byte_end = 0;

  bool operator==(const TokenSpan&) const = default;
};

struct Tokenization {
  std::vector<TokenSpan> spans;
  // Set when span texts do not concatenate back to the input verbatim.
  bool normalized = false;
};

inline std::string detokenize(const std::vector<TokenSpan>& spans) {
  std::string out;
  for (const auto& s : spans) out += s.text;
  return out;
}

inline std::vector<TokenId> token_ids(const std::vector<TokenSpan>& spans) {
  std::vector<TokenId> ids;
  ids.reserve(spans.size());
  for (const auto& s : spans) ids.push_back(s.id);
  return ids;
}

/// Checks ordering, non-overlap and byte bounds of a span list.
inline void validate_spans(const std::vector<TokenSpan>& spans) {
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const auto& s = spans[i];
    if (s.id < 0) throw Error(ErrorCode::InvalidArgument, "negative token id at " + std::to_string(i));
    if (s.byte_start > s.byte_end)
      throw Error(ErrorCode::InvalidArgument, "span " + std::to_string(i) + " has start > end");
    if (s.byte_start < cursor)
      throw Error(ErrorCode::InvalidArgument, "span " + std::to_string(i) + " overlaps its predecessor");
    cursor = s.byte_end;
  }
}

enum class DistKind { Full, TopK };

inline constexpr double kNormalizationTolerance = 1e-6;

/// Predictive distribution for the token at `context_position`. Logprobs are
/// natural-log. TopK distributions carry the aggregate unlisted mass in
/// `tail_logprob`.
struct NextTokenDistribution {
  DistKind kind = DistKind::Full;
  std::vector<std::pair<TokenId, double>> entries;
  std::optional<double> tail_logprob;
  std::size_t context_position = 0;

  bool is_exact() const noexcept { return kind == DistKind::Full; }

  const std::pair<TokenId, double>* find(TokenId id) const {
    for (const auto& e : entries)
      if (e.first == id) return &e;
    return nullptr;
  }

  double log_normalizer() const {
    std::vector<double> lps;
    lps.reserve(entries.size() + 1);
    for (const auto& e : entries) lps.push_back(e.second);
    if (kind == DistKind::TopK && tail_logprob) lps.push_back(*tail_logprob);
    return numeric::logsumexp(lps);
  }

  /// Sorts entries by descending logprob, ties by ascending id.
  void sort_entries() {
    std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
  }

  void validate() const {
    if (entries.empty()) throw Error(ErrorCode::InvalidArgument, "distribution has no entries");
    if (kind == DistKind::TopK && !tail_logprob)
      throw Error(ErrorCode::InvalidArgument, "top-k distribution without tail_logprob");
    if (kind == DistKind::Full && tail_logprob)
      throw Error(ErrorCode::InvalidArgument, "full distribution carries a tail_logprob");
    std::unordered_set<TokenId> seen;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (!seen.insert(entries[i].first).second)
        throw Error(ErrorCode::InvalidArgument, "duplicate token id " + std::to_string(entries[i].first));
      if (std::isnan(entries[i].second) || entries[i].second > 0.0)
        throw Error(ErrorCode::InvalidArgument, "logprob out of range");
      if (i > 0 && entries[i].second > entries[i - 1].second)
        throw Error(ErrorCode::InvalidArgument, "entries not sorted by descending logprob");
    }
    const double z = log_normalizer();
    if (!(std::abs(z) <= kNormalizationTolerance))
      throw Error(ErrorCode::InvalidArgument,
                  "distribution at position " + std::to_string(context_position) +
                      " is not normalized (logsumexp=" + std::to_string(z) + ")");
  }
};

/// Identity and capabilities of a backend.
struct BackendDescriptor {
  std::string backend_id;
  std::int64_t vocab_size = 0;
  std::optional<TokenId> bos_id;
  bool supports_full_distribution = false;
  std::size_t max_context = 0;
  // Whether concurrent calls on one instance are allowed.
  bool reentrant = false;

  void validate() const {
    if (vocab_size <= 0) throw Error(ErrorCode::InvalidArgument, "vocab_size must be positive");
    if (bos_id && (*bos_id < 0 || *bos_id >= vocab_size))
      throw Error(ErrorCode::InvalidArgument, "bos_id outside the vocabulary");
  }
};

struct ScoreOptions {
  bool use_bos = true;
};

/// One distribution per scored position plus the positions left unscored.
struct ScoredSequence {
  std::vector<NextTokenDistribution> distributions;
  std::vector<std::size_t> unscored_positions;
};

}  // namespace mirror
