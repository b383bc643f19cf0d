#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The Mirror Authors

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mirror/expectancy.hpp"

namespace mirror {

enum class SegmentKind { Sentence, Paragraph };

inline const char* to_string(SegmentKind k) { return k == SegmentKind::Sentence ? "sentence" : "paragraph"; }

struct Extent {
  std::size_t byte_start = 0;
  std::size_t byte_end = 0;
  bool operator==(const Extent&) const = default;
};

inline const std::vector<std::string>& default_abbreviations() {
  static const std::vector<std::string> list = {
      "e.g.", "i.e.", "et al.", "Dr.", "Fig.", "Figs.", "Mr.", "Mrs.", "Ms.", "Prof.", "vs.",
      "cf.", "Eq.", "Eqs.", "No.", "Vol.", "pp.", "p.", "St.", "Jr.", "Sr.", "approx.", "ca.",
  };
  return list;
}

namespace detail {

inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

inline bool ends_with_abbreviation(std::string_view text, std::size_t end,
                                   const std::vector<std::string>& abbreviations) {
  for (const auto& abbr : abbreviations) {
    if (abbr.size() > end) continue;
    const std::size_t start = end - abbr.size();
    if (text.substr(start, abbr.size()) != abbr) continue;
    if (start == 0) return true;
    const char before = text[start - 1];
    if (is_space(before) || before == '(' || before == '[' || before == '"') return true;
  }
  return false;
}

inline std::optional<Extent> trimmed(std::string_view text, std::size_t start, std::size_t end) {
  while (start < end && is_space(text[start])) ++start;
  while (end > start && is_space(text[end - 1])) --end;
  if (start == end) return std::nullopt;
  return Extent{start, end};
}

}  // namespace detail

/**
 * Rule-based sentence extents. A boundary follows a terminator in {. ! ?}
 * (plus any closing quotes or brackets) when whitespace and then an
 * uppercase ASCII letter or digit come next, unless the word ending at a
 * period is a listed abbreviation. Extents are trimmed of whitespace.
 */
inline std::vector<Extent> segment_sentences(std::string_view text,
                                             const std::vector<std::string>& abbreviations = default_abbreviations()) {
  std::vector<Extent> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c != '.' && c != '!' && c != '?') continue;
    std::size_t j = i + 1;
    while (j < text.size() && std::string_view(")]\"'").find(text[j]) != std::string_view::npos) ++j;
    if (j >= text.size() || !detail::is_space(text[j])) continue;
    std::size_t k = j;
    while (k < text.size() && detail::is_space(text[k])) ++k;
    if (k >= text.size()) continue;
    const auto next = static_cast<unsigned char>(text[k]);
    if (!std::isupper(next) && !std::isdigit(next)) continue;
    if (c == '.' && detail::ends_with_abbreviation(text, i + 1, abbreviations)) continue;
    if (auto e = detail::trimmed(text, start, j)) out.push_back(*e);
    start = j;
    i = j - 1;
  }
  if (auto e = detail::trimmed(text, start, text.size())) out.push_back(*e);
  return out;
}

/// Paragraph extents split on blank lines (two or more newlines, optionally
/// separated by horizontal whitespace). Leading and trailing blank lines are ignored.
inline std::vector<Extent> segment_paragraphs(std::string_view text) {
  std::vector<Extent> out;
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '\n') {
      ++i;
      continue;
    }
    std::size_t j = i;
    int newlines = 0;
    while (j < text.size() && detail::is_space(text[j])) {
      if (text[j] == '\n') ++newlines;
      ++j;
    }
    if (newlines >= 2) {
      if (auto e = detail::trimmed(text, start, i)) out.push_back(*e);
      start = j;
    }
    i = j;
  }
  if (auto e = detail::trimmed(text, start, text.size())) out.push_back(*e);
  return out;
}

struct SegmentStats {
  SegmentKind kind = SegmentKind::Sentence;
  std::size_t byte_start = 0;
  std::size_t byte_end = 0;
  std::size_t token_begin = 0;  // [token_begin, token_end)
  std::size_t token_end = 0;
  std::size_t scored_count = 0;
  // Null when the segment holds only unscored tokens.
  std::optional<double> mean_z;
  std::optional<double> max_z;
  std::optional<double> mean_surprisal_nats;
  std::optional<double> flagged_fraction;

  bool operator==(const SegmentStats&) const = default;
};

/**
 * Token index ranges per extent. A token is anchored at its first
 * non-whitespace byte; whitespace-only tokens join the preceding token's
 * segment (leading ones join the first). Extents that receive no token are
 * dropped, so the ranges partition all tokens.
 */
inline std::vector<std::pair<Extent, std::pair<std::size_t, std::size_t>>> assign_tokens(
    std::string_view text, const std::vector<TokenSpan>& spans, std::vector<Extent> extents) {
  std::vector<std::pair<Extent, std::pair<std::size_t, std::size_t>>> out;
  if (spans.empty()) return out;
  if (extents.empty()) extents.push_back({0, text.size()});
  std::vector<std::size_t> owner(spans.size(), 0);
  std::optional<std::size_t> last;
  for (std::size_t t = 0; t < spans.size(); ++t) {
    std::optional<std::size_t> anchor;
    for (std::size_t b = spans[t].byte_start; b < spans[t].byte_end && b < text.size(); ++b) {
      if (!detail::is_space(text[b])) {
        anchor = b;
        break;
      }
    }
    if (!anchor) {
      owner[t] = last.value_or(0);
      continue;
    }
    auto it = std::upper_bound(extents.begin(), extents.end(), *anchor,
                               [](std::size_t pos, const Extent& e) { return pos < e.byte_start; });
    std::size_t seg = it == extents.begin() ? 0 : static_cast<std::size_t>(it - extents.begin()) - 1;
    if (last && seg < *last) seg = *last;
    if (!last) {
      for (std::size_t p = 0; p < t; ++p) owner[p] = seg;
    }
    owner[t] = seg;
    last = seg;
  }
  for (std::size_t t = 0; t < spans.size();) {
    std::size_t u = t;
    while (u < spans.size() && owner[u] == owner[t]) ++u;
    out.push_back({extents[owner[t]], {t, u}});
    t = u;
  }
  return out;
}

inline std::vector<SegmentStats> aggregate_segments(const DocumentAnalysis& analysis, SegmentKind kind,
                                                    const std::vector<Extent>& extents) {
  for (const auto& e : extents)
    if (e.byte_start > e.byte_end || e.byte_end > analysis.source_text.size())
      throw Error(ErrorCode::InvalidArgument, "extent outside the analyzed text");
  std::vector<SegmentStats> out;
  for (const auto& [extent, range] : assign_tokens(analysis.source_text, analysis.tokens, extents)) {
    SegmentStats s;
    s.kind = kind;
    s.byte_start = extent.byte_start;
    s.byte_end = extent.byte_end;
    s.token_begin = range.first;
    s.token_end = range.second;
    numeric::CompensatedSum z_sum, s_sum;
    double max_z = -std::numeric_limits<double>::infinity();
    std::size_t flagged = 0;
    for (std::size_t p = range.first; p < range.second; ++p) {
      const auto* st = analysis.stats_at(p);
      if (!st) continue;
      ++s.scored_count;
      z_sum.add(st->z);
      s_sum.add(st->surprisal_nats);
      max_z = std::max(max_z, st->z);
      if (st->flagged) ++flagged;
    }
    if (s.scored_count > 0) {
      const double n = static_cast<double>(s.scored_count);
      s.mean_z = z_sum.value() / n;
      s.max_z = max_z;
      s.mean_surprisal_nats = s_sum.value() / n;
      s.flagged_fraction = static_cast<double>(flagged) / n;
    }
    out.push_back(s);
  }
  return out;
}

inline std::vector<SegmentStats> sentence_stats(const DocumentAnalysis& a) {
  return aggregate_segments(a, SegmentKind::Sentence, segment_sentences(a.source_text));
}

inline std::vector<SegmentStats> paragraph_stats(const DocumentAnalysis& a) {
  return aggregate_segments(a, SegmentKind::Paragraph, segment_paragraphs(a.source_text));
}

struct RankedToken {
  std::size_t position = 0;
  std::string text;
  double surprisal_nats = 0.0;
  double z = 0.0;
  bool flagged = false;
};

/// Top-n scored tokens by surprisal, descending; ties by position.
inline std::vector<RankedToken> rank_by_surprisal(const DocumentAnalysis& analysis, std::size_t n) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "rank_by_surprisal requires n >= 1");
  std::vector<const TokenStats*> order;
  for (const auto& s : analysis.stats) order.push_back(&s);
  std::stable_sort(order.begin(), order.end(), [](const TokenStats* a, const TokenStats* b) {
    if (a->surprisal_nats != b->surprisal_nats) return a->surprisal_nats > b->surprisal_nats;
    return a->position < b->position;
  });
  order.resize(std::min(n, order.size()));
  std::vector<RankedToken> out;
  for (const auto* s : order)
    out.push_back({s->position, analysis.tokens[s->position].text, s->surprisal_nats, s->z, s->flagged});
  return out;
}

/// Case-folded surface form with leading word-start markers (whitespace,
/// U+0120, U+2581) and trailing whitespace removed.
inline std::string normalize_surface(std::string_view token) {
  std::size_t i = 0;
  while (i < token.size()) {
    if (detail::is_space(token[i])) {
      ++i;
    } else if (token.substr(i, 2) == "\xC4\xA0") {
      i += 2;
    } else if (token.substr(i, 3) == "\xE2\x96\x81") {
      i += 3;
    } else {
      break;
    }
  }
  std::size_t end = token.size();
  while (end > i && detail::is_space(token[end - 1])) --end;
  std::string out(token.substr(i, end - i));
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline bool is_punctuation_only(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return std::ispunct(static_cast<unsigned char>(c)); });
}

struct MissingTokenOptions {
  bool default_stoplist = true;  // whitespace-only and punctuation-only tokens
  std::vector<std::string> extra_stopwords;
  bool exclude_present = true;
};

struct MissingTokenEntry {
  std::string text;
  TokenId id = 0;
  double cumulative_probability = 0.0;
  std::size_t appearances_in_text = 0;
};

struct MissingTokenView {
  std::vector<MissingTokenEntry> entries;
  // Cumulative masses are lower bounds when any position was truncated.
  Exactness exactness = Exactness::Exact;
};

/// Occurrence counts of normalized forms, from document tokens and from
/// the text's words.
inline std::unordered_map<std::string, std::size_t> surface_occurrences(const DocumentAnalysis& a) {
  std::unordered_map<std::string, std::size_t> by_token, by_word;
  for (const auto& t : a.tokens) {
    auto n = normalize_surface(t.text);
    if (!n.empty()) ++by_token[n];
  }
  std::string word;
  auto flush = [&] {
    if (!word.empty()) ++by_word[normalize_surface(word)];
    word.clear();
  };
  for (char c : a.source_text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || u >= 0x80) {
      word += c;
    } else {
      flush();
    }
  }
  flush();
  for (const auto& [k, v] : by_word) by_token[k] = std::max(by_token[k], v);
  return by_token;
}

/**
 * Vocabulary tokens ranked by summed predictive probability over scored
 * positions, excluding tokens whose normalized form occurs in the text.
 * Needs retained distributions.
 */
inline MissingTokenView missing_tokens(const DocumentAnalysis& analysis, std::size_t n,
                                       const MissingTokenOptions& options = {}) {
  if (!analysis.has_retained())
    throw Error(ErrorCode::Unsupported, "missing tokens need retained distributions (analysis ran stats-only)");
  const auto present = surface_occurrences(analysis);
  std::set<std::string> stop;
  for (const auto& w : options.extra_stopwords) stop.insert(normalize_surface(w));

  struct Acc {
    std::string text;
    numeric::CompensatedSum mass;
  };
  std::map<TokenId, Acc> acc;
  MissingTokenView view;
  for (const auto& r : analysis.retained) {
    if (r.truncated) view.exactness = Exactness::TopKApprox;
    for (const auto& e : r.entries) {
      if (analysis.backend.bos_id && e.id == *analysis.backend.bos_id) continue;
      auto& slot = acc[e.id];
      slot.text = e.text;
      slot.mass.add(e.probability);
    }
  }
  for (auto& [id, a] : acc) {
    const auto norm = normalize_surface(a.text);
    if (options.default_stoplist && (norm.empty() || is_punctuation_only(norm))) continue;
    if (stop.count(norm)) continue;
    std::size_t appearances = 0;
    if (auto it = present.find(norm); it != present.end()) appearances = it->second;
    if (options.exclude_present && appearances > 0) continue;
    view.entries.push_back({a.text, id, a.mass.value(), appearances});
  }
  std::stable_sort(view.entries.begin(), view.entries.end(), [](const auto& x, const auto& y) {
    if (x.cumulative_probability != y.cumulative_probability) return x.cumulative_probability > y.cumulative_probability;
    return x.id < y.id;
  });
  if (view.entries.size() > n) view.entries.resize(n);
  return view;
}

}  // namespace mirror
