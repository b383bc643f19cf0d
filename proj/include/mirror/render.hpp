#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The Mirror Authors

/**
 * @file render.hpp
 * @brief Terminal and HTML views derived only from canonical analysis JSON.
 */

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "mirror/memorization.hpp"
#include "mirror/numeric.hpp"

namespace mirror::render {

/// Quantized z band for terminals: 0 none, 1 dim, 2..4 increasingly strong red.
inline int ansi_band(double z, double threshold) {
  if (z >= threshold + 2.0) return 4;
  if (z >= threshold + 1.0) return 3;
  if (z >= threshold) return 2;
  if (z >= 1.0) return 1;
  return 0;
}

inline const char* ansi_code(int band) {
  switch (band) {
    case 1: return "\x1b[2m";
    case 2: return "\x1b[31m";
    case 3: return "\x1b[1;31m";
    case 4: return "\x1b[1;97;41m";
    default: return "";
  }
}

inline std::string html_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

namespace detail {

inline std::map<std::size_t, const nlohmann::json*> stats_by_position(const nlohmann::json& analysis) {
  std::map<std::size_t, const nlohmann::json*> out;
  for (const auto& s : analysis.at("stats")) out[s.at("position").get<std::size_t>()] = &s;
  return out;
}

inline double threshold_of(const nlohmann::json& analysis, std::optional<double> override_threshold) {
  return override_threshold ? *override_threshold : analysis.at("options").at("z_threshold").get<double>();
}

}  // namespace detail

inline std::string ansi(const std::string& canonical_json, std::optional<double> threshold = std::nullopt) {
  const auto a = nlohmann::json::parse(canonical_json);
  const double thr = detail::threshold_of(a, threshold);
  const auto stats = detail::stats_by_position(a);
  std::string out;
  const auto& tokens = a.at("tokens");
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto text = tokens[i].at("text").get<std::string>();
    auto it = stats.find(i);
    const int band = it == stats.end() ? 0 : ansi_band(it->second->at("z").get<double>(), thr);
    if (band == 0) {
      out += text;
    } else {
      out += ansi_code(band);
      out += text;
      out += "\x1b[0m";
    }
  }
  out += '\n';
  return out;
}

/// Standalone page; tokens with z >= threshold carry class "salient", and
/// hovering shows the retained alternatives.
inline std::string html(const std::string& canonical_json, std::optional<double> threshold = std::nullopt) {
  const auto a = nlohmann::json::parse(canonical_json);
  const double thr = detail::threshold_of(a, threshold);
  const auto stats = detail::stats_by_position(a);
  std::ostringstream out;
  out << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>mirror analysis</title>\n"
      << "<style>\n"
      << "body{font-family:Georgia,serif;max-width:52em;margin:2em auto;line-height:1.8}\n"
      << ".doc{white-space:pre-wrap}\n"
      << ".tok{position:relative;border-radius:2px}\n"
      << ".tok.salient{outline:1px solid #b91c1c}\n"
      << ".tok.approx{text-decoration:underline dashed}\n"
      << ".tok.unscored{color:#777}\n"
      << ".tip{display:none;position:absolute;left:0;top:1.6em;z-index:9;background:#fff;border:1px solid #999;"
         "padding:.3em .6em;font:12px monospace;white-space:pre;color:#000}\n"
      << ".tok:hover .tip{display:block}\n"
      << "</style></head><body>\n"
      << "<p>backend: " << html_escape(a.at("backend").at("backend_id").get<std::string>())
      << " &middot; z threshold: " << numeric::format_sig3(thr) << "</p>\n<div class=\"doc\">";
  const auto& tokens = a.at("tokens");
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto text = tokens[i].at("text").get<std::string>();
    auto it = stats.find(i);
    if (it == stats.end()) {
      out << "<span class=\"tok unscored\" data-pos=\"" << i << "\">" << html_escape(text) << "</span>";
      continue;
    }
    const auto& s = *it->second;
    const double z = s.at("z").get<double>();
    std::string cls = "tok";
    if (z >= thr) cls += " salient";
    if (s.at("exactness").get<std::string>() != "exact") cls += " approx";
    const double alpha = z <= 0.0 ? 0.0 : std::min(1.0, z / (2.0 * std::max(thr, 1e-9)));
    char style[96];
    std::snprintf(style, sizeof style, "background-color:rgba(220,38,38,%.3f)", alpha);
    out << "<span class=\"" << cls << "\" style=\"" << style << "\" data-pos=\"" << i << "\" data-z=\""
        << numeric::format_sig3(z) << "\">" << html_escape(text) << "<span class=\"tip\">";
    out << "z " << numeric::format_sig3(z) << "  rank " << s.at("actual_rank").get<std::size_t>() << "  p "
        << numeric::format_sig3(s.at("actual_probability").get<double>()) << "\n";
    for (const auto& alt : s.at("alternatives"))
      out << html_escape(alt.at(0).get<std::string>()) << "  " << numeric::format_sig3(alt.at(1).get<double>())
          << "\n";
    out << "</span></span>";
  }
  out << "</div>\n</body></html>\n";
  return out.str();
}

/// Green for matched positions, red for mismatches, plain for the rest.
inline std::string memcheck_ansi(const std::vector<TokenSpan>& tokens, const MemorizationReport& report) {
  std::map<std::size_t, bool> match;
  for (std::size_t i = 0; i < report.positions.size(); ++i) match[report.positions[i]] = report.matches[i];
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto it = match.find(i);
    if (it == match.end()) {
      out += tokens[i].text;
    } else {
      out += it->second ? "\x1b[32m" : "\x1b[31m";
      out += tokens[i].text;
      out += "\x1b[0m";
    }
  }
  out += '\n';
  return out;
}

inline std::string memcheck_html(const std::vector<TokenSpan>& tokens, const MemorizationReport& report) {
  std::map<std::size_t, bool> match;
  for (std::size_t i = 0; i < report.positions.size(); ++i) match[report.positions[i]] = report.matches[i];
  std::ostringstream out;
  out << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>mirror memcheck</title>\n"
      << "<style>.doc{white-space:pre-wrap;font-family:Georgia,serif}.hit{color:#15803d}.miss{color:#b91c1c}</style>"
      << "</head><body>\n<p>" << to_string(report.mode) << " match fraction "
      << numeric::format_sig3(report.match_fraction) << ", longest run " << report.longest_match_run
      << "</p>\n<div class=\"doc\">";
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto it = match.find(i);
    if (it == match.end()) {
      out << html_escape(tokens[i].text);
    } else {
      out << "<span class=\"" << (it->second ? "hit" : "miss") << "\">" << html_escape(tokens[i].text) << "</span>";
    }
  }
  out << "</div>\n</body></html>\n";
  return out.str();
}

}  // namespace mirror::render
