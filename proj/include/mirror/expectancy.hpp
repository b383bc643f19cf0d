#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The Mirror Authors

/**
 * @file expectancy.hpp
 * @brief Per-token surprisal, entropy, surprisal spread and z-score.
 *
 * For the predictive distribution p at position t and the observed token x_t:
 *
 *   S_t = -log p(x_t)
 *   H_t = sum_v p(v) * -log p(v)
 *   sigma_t = sqrt(sum_v p(v) * (-log p(v) - H_t)^2)
 *   Z_t = (S_t - H_t) / sigma_t,  0 when sigma_t < 1e-9
 *
 * All values are in nats. For TopK distributions the unlisted mass counts as
 * a single pseudo-event, so H_t and sigma_t are lower bounds and the result
 * is marked TopKApprox.
 */

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mirror/backend.hpp"

namespace mirror {

enum class Exactness { Exact, TopKApprox };

inline const char* to_string(Exactness e) { return e == Exactness::Exact ? "exact" : "topk_approx"; }

inline constexpr double kSigmaGuard = 1e-9;

struct SurprisalValue {
  double nats = 0.0;
  Exactness exactness = Exactness::Exact;
};

/// -log p(actual). An actual token missing from a TopK list scores
/// -tail_logprob, a lower bound.
inline SurprisalValue surprisal(const NextTokenDistribution& dist, TokenId actual,
                                std::optional<std::int64_t> vocab_size = std::nullopt) {
  if (actual < 0 || (vocab_size && actual >= *vocab_size))
    throw Error(ErrorCode::InvalidArgument, "actual token id " + std::to_string(actual) + " outside vocabulary");
  const Exactness ex = dist.is_exact() ? Exactness::Exact : Exactness::TopKApprox;
  if (const auto* e = dist.find(actual)) return {std::max(0.0, -e->second), ex};
  if (dist.kind == DistKind::TopK) return {std::max(0.0, -*dist.tail_logprob), Exactness::TopKApprox};
  throw Error(ErrorCode::InvalidArgument,
              "token " + std::to_string(actual) + " has zero probability at position " +
                  std::to_string(dist.context_position));
}

namespace detail {

template <typename F>
void for_each_event(const NextTokenDistribution& dist, F&& f) {
  for (const auto& e : dist.entries) f(e.second);
  if (dist.kind == DistKind::TopK && dist.tail_logprob) f(*dist.tail_logprob);
}

}  // namespace detail

inline double entropy(const NextTokenDistribution& dist) {
  numeric::CompensatedSum h;
  detail::for_each_event(dist, [&h](double lp) {
    if (std::isfinite(lp)) h.add(-std::exp(lp) * lp);
  });
  return std::max(0.0, h.value());
}

/// Centered form; never negative.
inline double surprisal_std(const NextTokenDistribution& dist, double entropy_nats) {
  numeric::CompensatedSum var;
  detail::for_each_event(dist, [&](double lp) {
    if (!std::isfinite(lp)) return;
    const double d = -lp - entropy_nats;
    var.add(std::exp(lp) * d * d);
  });
  return std::sqrt(std::max(0.0, var.value()));
}

inline double surprisal_std(const NextTokenDistribution& dist) { return surprisal_std(dist, entropy(dist)); }

inline double zscore(double surprisal_nats, double entropy_nats, double sigma_nats) {
  if (sigma_nats < kSigmaGuard) return 0.0;
  return (surprisal_nats - entropy_nats) / sigma_nats;
}

struct TokenStats {
  std::size_t position = 0;
  double surprisal_nats = 0.0;
  double entropy_nats = 0.0;
  double sigma_nats = 0.0;
  double z = 0.0;
  std::size_t actual_rank = 1;
  double actual_probability = 0.0;
  std::vector<Alternative> alternatives;
  Exactness exactness = Exactness::Exact;
  bool flagged = false;
};

/// 1-based rank of `actual`; an unlisted TopK token ranks just past the list.
inline std::size_t actual_rank(const NextTokenDistribution& dist, TokenId actual) {
  const auto* hit = dist.find(actual);
  if (!hit) return dist.entries.size() + 1;
  std::size_t rank = 1;
  for (const auto& e : dist.entries)
    if (e.second > hit->second || (e.second == hit->second && e.first < actual)) ++rank;
  return rank;
}

inline TokenStats token_stats(const NextTokenDistribution& dist, TokenId actual, double z_threshold,
                              std::size_t top_k, const std::function<std::string(TokenId)>& text_of,
                              std::optional<std::int64_t> vocab_size = std::nullopt) {
  TokenStats s;
  s.position = dist.context_position;
  const auto sv = surprisal(dist, actual, vocab_size);
  s.surprisal_nats = sv.nats;
  s.exactness = sv.exactness;
  s.entropy_nats = entropy(dist);
  s.sigma_nats = surprisal_std(dist, s.entropy_nats);
  s.z = zscore(s.surprisal_nats, s.entropy_nats, s.sigma_nats);
  s.actual_rank = actual_rank(dist, actual);
  s.actual_probability = std::exp(-s.surprisal_nats);
  if (top_k > 0) s.alternatives = top_alternatives(dist, top_k, text_of);
  s.flagged = s.z >= z_threshold;
  return s;
}

struct AnalysisOptions {
  std::size_t top_k = 10;
  double z_threshold = 1.5;
  // Entries kept per position for the missing-token view; 0 = stats only.
  std::size_t retain_dist = 50;
  bool use_bos = true;
  std::size_t rank_n = 20;
  std::size_t missing_n = 20;
  std::optional<std::string> created_at;

  void validate() const {
    if (top_k < 1) throw Error(ErrorCode::InvalidArgument, "top_k must be >= 1");
    if (!std::isfinite(z_threshold)) throw Error(ErrorCode::InvalidArgument, "z_threshold must be finite");
    if (rank_n < 1) throw Error(ErrorCode::InvalidArgument, "rank_n must be >= 1");
  }
};

struct RetainedEntry {
  TokenId id = 0;
  std::string text;
  double probability = 0.0;
};

/// Head of one position's distribution kept after analysis.
struct RetainedDistribution {
  std::size_t position = 0;
  std::vector<RetainedEntry> entries;
  bool truncated = false;
};

struct DocumentAnalysis {
  std::string source_text;
  std::vector<TokenSpan> tokens;
  bool tokenizer_normalized = false;
  std::vector<TokenStats> stats;
  std::vector<std::size_t> unscored_positions;
  BackendDescriptor backend;
  AnalysisOptions options;
  std::optional<std::string> created_at;
  // Aligned with stats; empty when options.retain_dist == 0.
  std::vector<RetainedDistribution> retained;

  bool has_retained() const noexcept { return options.retain_dist > 0 && retained.size() == stats.size(); }

  const TokenStats* stats_at(std::size_t position) const {
    auto it = std::lower_bound(stats.begin(), stats.end(), position,
                               [](const TokenStats& s, std::size_t p) { return s.position < p; });
    return (it != stats.end() && it->position == position) ? &*it : nullptr;
  }
};

inline RetainedDistribution retain(const NextTokenDistribution& dist, std::size_t n,
                                   const std::function<std::string(TokenId)>& text_of) {
  RetainedDistribution r;
  r.position = dist.context_position;
  const auto head = top_alternatives(dist, std::max<std::size_t>(n, 1), text_of);
  for (const auto& a : head) r.entries.push_back({a.id, a.text, a.probability});
  r.truncated = dist.kind == DistKind::TopK || head.size() < dist.entries.size();
  return r;
}

/// tokenize -> score_sequence -> per-position statistics. Deterministic for a
/// deterministic backend.
inline DocumentAnalysis analyze_document(std::string_view text, Backend& backend,
                                         const AnalysisOptions& options = {}) {
  options.validate();
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos)
    throw Error(ErrorCode::InvalidArgument, "document is empty");

  DocumentAnalysis a;
  a.source_text = std::string(text);
  a.backend = backend.descriptor();
  a.options = options;
  a.created_at = options.created_at;

  auto tok = backend.tokenize(text);
  a.tokens = std::move(tok.spans);
  a.tokenizer_normalized = tok.normalized;
  check_context(a.backend, a.tokens.size(), options.use_bos);

  auto scored = backend.score_sequence(a.tokens, ScoreOptions{options.use_bos});
  a.unscored_positions = std::move(scored.unscored_positions);
  std::sort(a.unscored_positions.begin(), a.unscored_positions.end());
  std::sort(scored.distributions.begin(), scored.distributions.end(),
            [](const auto& x, const auto& y) { return x.context_position < y.context_position; });

  const auto text_of = [&backend](TokenId id) { return backend.token_text(id); };
  a.stats.reserve(scored.distributions.size());
  for (const auto& dist : scored.distributions) {
    if (dist.context_position >= a.tokens.size())
      throw Error(ErrorCode::FixtureMismatch, "distribution for position beyond the document");
    const TokenId actual = a.tokens[dist.context_position].id;
    a.stats.push_back(token_stats(dist, actual, options.z_threshold, options.top_k, text_of, a.backend.vocab_size));
    if (options.retain_dist > 0) a.retained.push_back(retain(dist, options.retain_dist, text_of));
  }
  if (a.stats.size() + a.unscored_positions.size() != a.tokens.size())
    throw Error(ErrorCode::FixtureMismatch, "backend scored " + std::to_string(a.stats.size()) + " of " +
                                                std::to_string(a.tokens.size()) + " tokens");
  return a;
}

}  // namespace mirror
