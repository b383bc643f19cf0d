#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The Mirror Authors

/**
 * @file analysis_json.hpp
 * @brief Canonical JSON for DocumentAnalysis, the service payload and UI contract.
 *
 * Field order is fixed (ordered_json insertion order) and every float is
 * rounded to 12 significant digits before printing, so identical analyses
 * serialize to identical bytes on every platform.
 */

#include <string>

#include <json.hpp>

#include "mirror/aggregate.hpp"

namespace mirror {

inline constexpr const char* kAnalysisFormat = "mirror.analysis/1";

namespace detail {

using ojson = nlohmann::ordered_json;

inline ojson num(double x) { return ojson(numeric::round_sig12(x)); }

inline ojson opt_num(const std::optional<double>& x) { return x ? num(*x) : ojson(); }

inline ojson descriptor_json(const BackendDescriptor& d) {
  ojson j;
  j["backend_id"] = d.backend_id;
  j["vocab_size"] = d.vocab_size;
  j["bos_id"] = d.bos_id ? ojson(*d.bos_id) : ojson();
  j["supports_full_distribution"] = d.supports_full_distribution;
  j["max_context"] = d.max_context;
  return j;
}

inline ojson segment_json(const SegmentStats& s) {
  ojson j;
  j["kind"] = to_string(s.kind);
  j["byte_start"] = s.byte_start;
  j["byte_end"] = s.byte_end;
  j["token_begin"] = s.token_begin;
  j["token_end"] = s.token_end;
  j["scored_count"] = s.scored_count;
  j["mean_z"] = opt_num(s.mean_z);
  j["max_z"] = opt_num(s.max_z);
  j["mean_surprisal_nats"] = opt_num(s.mean_surprisal_nats);
  j["flagged_fraction"] = opt_num(s.flagged_fraction);
  return j;
}

}  // namespace detail

inline nlohmann::ordered_json options_json(const AnalysisOptions& o) {
  detail::ojson j;
  j["top_k"] = o.top_k;
  j["z_threshold"] = detail::num(o.z_threshold);
  j["retain_dist"] = o.retain_dist;
  j["use_bos"] = o.use_bos;
  j["rank_n"] = o.rank_n;
  j["missing_n"] = o.missing_n;
  return j;
}

/// Reads analysis options; unknown keys and ill-typed values are rejected.
inline AnalysisOptions options_from_json(const nlohmann::json& j, AnalysisOptions base = {}) {
  if (j.is_null()) return base;
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "options must be an object");
  try {
    for (const auto& [key, value] : j.items()) {
      auto non_negative = [&](const char* name) {
        if (!value.is_number_integer() || value.get<std::int64_t>() < 0)
          throw Error(ErrorCode::InvalidArgument, std::string(name) + " must be a non-negative integer");
        return value.get<std::size_t>();
      };
      if (key == "top_k") {
        base.top_k = non_negative("top_k");
      } else if (key == "z_threshold") {
        if (!value.is_number()) throw Error(ErrorCode::InvalidArgument, "z_threshold must be a number");
        base.z_threshold = value.get<double>();
      } else if (key == "retain_dist") {
        base.retain_dist = non_negative("retain_dist");
      } else if (key == "use_bos") {
        if (!value.is_boolean()) throw Error(ErrorCode::InvalidArgument, "use_bos must be a boolean");
        base.use_bos = value.get<bool>();
      } else if (key == "rank_n") {
        base.rank_n = non_negative("rank_n");
      } else if (key == "missing_n") {
        base.missing_n = non_negative("missing_n");
      } else {
        throw Error(ErrorCode::InvalidArgument, "unknown option '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, e.what());
  }
  base.validate();
  return base;
}

inline nlohmann::ordered_json analysis_views_json(const DocumentAnalysis& a) {
  using detail::ojson;
  ojson views;
  ojson ranked = ojson::array();
  for (const auto& r : rank_by_surprisal(a, a.options.rank_n)) {
    ojson j;
    j["position"] = r.position;
    j["text"] = r.text;
    j["surprisal_nats"] = detail::num(r.surprisal_nats);
    j["z"] = detail::num(r.z);
    j["flagged"] = r.flagged;
    ranked.push_back(std::move(j));
  }
  views["ranked"] = std::move(ranked);
  ojson sentences = ojson::array();
  for (const auto& s : sentence_stats(a)) sentences.push_back(detail::segment_json(s));
  views["sentences"] = std::move(sentences);
  ojson paragraphs = ojson::array();
  for (const auto& s : paragraph_stats(a)) paragraphs.push_back(detail::segment_json(s));
  views["paragraphs"] = std::move(paragraphs);
  ojson missing;
  if (a.has_retained() && a.options.missing_n > 0) {
    const auto view = missing_tokens(a, a.options.missing_n);
    missing["available"] = true;
    missing["exactness"] = to_string(view.exactness);
    ojson entries = ojson::array();
    for (const auto& e : view.entries) {
      ojson j;
      j["text"] = e.text;
      j["id"] = e.id;
      j["cumulative_probability"] = detail::num(e.cumulative_probability);
      j["appearances_in_text"] = e.appearances_in_text;
      entries.push_back(std::move(j));
    }
    missing["entries"] = std::move(entries);
  } else {
    missing["available"] = false;
    missing["exactness"] = nullptr;
    missing["entries"] = ojson::array();
  }
  views["missing"] = std::move(missing);
  return views;
}

inline nlohmann::ordered_json analysis_to_json(const DocumentAnalysis& a) {
  using detail::ojson;
  ojson j;
  j["format"] = kAnalysisFormat;
  j["source_text"] = a.source_text;
  j["backend"] = detail::descriptor_json(a.backend);
  j["options"] = options_json(a.options);
  j["created_at"] = a.created_at ? ojson(*a.created_at) : ojson();
  j["tokenizer_normalized"] = a.tokenizer_normalized;
  ojson tokens = ojson::array();
  for (const auto& t : a.tokens) {
    ojson tj;
    tj["id"] = t.id;
    tj["text"] = t.text;
    tj["byte_start"] = t.byte_start;
    tj["byte_end"] = t.byte_end;
    tokens.push_back(std::move(tj));
  }
  j["tokens"] = std::move(tokens);
  j["unscored_positions"] = a.unscored_positions;
  ojson stats = ojson::array();
  for (const auto& s : a.stats) {
    ojson sj;
    sj["position"] = s.position;
    sj["surprisal_nats"] = detail::num(s.surprisal_nats);
    sj["entropy_nats"] = detail::num(s.entropy_nats);
    sj["sigma_nats"] = detail::num(s.sigma_nats);
    sj["z"] = detail::num(s.z);
    sj["actual_rank"] = s.actual_rank;
    sj["actual_probability"] = detail::num(s.actual_probability);
    sj["exactness"] = to_string(s.exactness);
    sj["flagged"] = s.flagged;
    ojson alts = ojson::array();
    for (const auto& alt : s.alternatives) alts.push_back(ojson::array({alt.text, detail::num(alt.probability)}));
    sj["alternatives"] = std::move(alts);
    stats.push_back(std::move(sj));
  }
  j["stats"] = std::move(stats);
  j["views"] = analysis_views_json(a);
  return j;
}

/// The canonical byte form.
inline std::string to_canonical_json(const DocumentAnalysis& a) { return analysis_to_json(a).dump() + "\n"; }

}  // namespace mirror
