#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The Mirror Authors

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mirror/backend.hpp"

namespace mirror {

enum class ProbeMode { TeacherForced, FreeRun };

inline const char* to_string(ProbeMode m) { return m == ProbeMode::TeacherForced ? "teacher_forced" : "free_run"; }

/// Per-position agreement between the model's argmax and the original text.
struct MemorizationReport {
  ProbeMode mode = ProbeMode::TeacherForced;
  std::vector<std::size_t> positions;  // token index of each comparison
  std::vector<bool> matches;
  std::vector<TokenId> predicted;      // argmax / generated id per position; -1 when none
  double match_fraction = 0.0;
  std::size_t longest_match_run = 0;
  std::optional<std::size_t> prefix_len;
};

inline std::size_t longest_run(const std::vector<bool>& matches) {
  std::size_t best = 0, cur = 0;
  for (bool m : matches) {
    cur = m ? cur + 1 : 0;
    best = std::max(best, cur);
  }
  return best;
}

inline void finalize(MemorizationReport& r) {
  if (r.matches.empty()) throw Error(ErrorCode::InvalidArgument, "memorization probe has no positions to compare");
  const auto hits = static_cast<double>(std::count(r.matches.begin(), r.matches.end(), true));
  r.match_fraction = hits / static_cast<double>(r.matches.size());
  r.longest_match_run = longest_run(r.matches);
}

/// Position t matches iff the argmax of its distribution is the actual token.
inline MemorizationReport teacher_forced_overlay(std::string_view text, Backend& backend, bool use_bos = true) {
  const auto tok = backend.tokenize(text);
  if (tok.spans.empty()) throw Error(ErrorCode::InvalidArgument, "document is empty");
  auto scored = backend.score_sequence(tok.spans, ScoreOptions{use_bos});
  std::sort(scored.distributions.begin(), scored.distributions.end(),
            [](const auto& a, const auto& b) { return a.context_position < b.context_position; });
  MemorizationReport r;
  r.mode = ProbeMode::TeacherForced;
  for (const auto& d : scored.distributions) {
    const TokenId guess = argmax(d);
    r.positions.push_back(d.context_position);
    r.predicted.push_back(guess);
    r.matches.push_back(guess == tok.spans.at(d.context_position).id);
  }
  finalize(r);
  return r;
}

/**
 * Greedy continuation from the first `prefix_tokens` tokens, compared
 * position by position with the original continuation. Positions the
 * generator did not reach count as mismatches; no resynchronization.
 */
inline MemorizationReport freerun_match(std::string_view text, Backend& backend, std::size_t prefix_tokens) {
  const auto tok = backend.tokenize(text);
  const auto ids = token_ids(tok.spans);
  if (prefix_tokens < 1 || prefix_tokens >= ids.size())
    throw Error(ErrorCode::InvalidArgument, "prefix_tokens must be in [1, " + std::to_string(ids.size()) + ")");
  const std::size_t n = ids.size() - prefix_tokens;
  const auto generated = backend.greedy_continuation(std::span<const TokenId>(ids.data(), prefix_tokens), n);
  MemorizationReport r;
  r.mode = ProbeMode::FreeRun;
  r.prefix_len = prefix_tokens;
  for (std::size_t i = 0; i < n; ++i) {
    const TokenId g = i < generated.size() ? generated[i] : TokenId{-1};
    r.positions.push_back(prefix_tokens + i);
    r.predicted.push_back(g);
    r.matches.push_back(i < generated.size() && g == ids[prefix_tokens + i]);
  }
  finalize(r);
  return r;
}

inline nlohmann::ordered_json report_to_json(const MemorizationReport& r) {
  nlohmann::ordered_json j;
  j["mode"] = to_string(r.mode);
  j["prefix_len"] = r.prefix_len ? nlohmann::ordered_json(*r.prefix_len) : nlohmann::ordered_json();
  j["positions"] = r.positions;
  j["predicted"] = r.predicted;
  j["matches"] = r.matches;
  j["match_fraction"] = numeric::round_sig12(r.match_fraction);
  j["longest_match_run"] = r.longest_match_run;
  return j;
}

}  // namespace mirror
