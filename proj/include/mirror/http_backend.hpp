#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The Mirror Authors

/**
 * @file http_backend.hpp
 * @brief Client for a remote top-k logprob endpoint.
 *
 * Wire protocol (scoring):
 *   POST <score_url>  {"tokens":[int,...],"top_k":int}
 *   200               {"distributions":[{"entries":[[id,logprob],...],"tail_logprob":float|null},...]}
 *
 * The server returns one distribution per input token; distribution i is the
 * predictive distribution after tokens[0..i]. The client prepends BOS when the
 * backend declares one, so every document token gets a distribution.
 *
 * Tokenization is either local (whitespace tokenizer over a configured
 * vocabulary) or remote:
 *   POST <tokenize_url>  {"text":str}
 *   200                  {"tokens":[{"id":int,"text":str,"byte_start":int,"byte_end":int},...]}
 *
 * Logprobs are converted to nats at this boundary when the server reports
 * another base. Remote distributions are always treated as TopK.
 */

#include <cmath>
#include <mutex>
#include <numbers>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "mirror/backend.hpp"
#include "mirror/tokenizer.hpp"

namespace mirror {

struct HttpBackendConfig {
  std::string backend_id;
  std::string score_url;
  std::optional<std::string> tokenize_url;
  std::vector<std::string> vocab;  // local whitespace tokenizer when tokenize_url is unset
  std::optional<TokenId> unk_id;
  std::int64_t vocab_size = 0;  // 0: use vocab.size()
  std::optional<TokenId> bos_id;
  std::size_t max_context = 2048;
  int top_k = 20;
  int timeout_ms = 30000;
  std::optional<std::string> auth_header;  // "Name: value"
  double logprob_base = std::numbers::e;
};

namespace detail {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

inline ParsedUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::InvalidArgument, "URL without scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace detail

class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
    descriptor_.backend_id = config_.backend_id;
    descriptor_.vocab_size =
        config_.vocab_size > 0 ? config_.vocab_size : static_cast<std::int64_t>(config_.vocab.size());
    descriptor_.bos_id = config_.bos_id;
    descriptor_.supports_full_distribution = false;
    descriptor_.max_context = config_.max_context;
    descriptor_.reentrant = false;
    descriptor_.validate();
    if (config_.top_k < 1) throw Error(ErrorCode::InvalidArgument, "top_k must be >= 1");
    if (!config_.tokenize_url && config_.vocab.empty())
      throw Error(ErrorCode::InvalidArgument, "http backend needs a vocabulary or a tokenize_url");
    if (!config_.vocab.empty()) tokenizer_ = WhitespaceTokenizer(config_.vocab, config_.unk_id);
    log_scale_ = std::log(config_.logprob_base);
  }

  const BackendDescriptor& descriptor() const override { return descriptor_; }

  Tokenization tokenize(std::string_view text) override {
    if (text.empty()) return {};
    Tokenization out;
    if (config_.tokenize_url) {
      nlohmann::json body = {{"text", std::string(text)}};
      const auto reply = post(*config_.tokenize_url, body);
      try {
        for (const auto& t : reply.at("tokens"))
          out.spans.push_back({t.at("id").get<TokenId>(), t.at("text").get<std::string>(),
                               t.at("byte_start").get<std::size_t>(), t.at("byte_end").get<std::size_t>()});
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Transport, std::string("malformed tokenize response: ") + e.what());
      }
      validate_spans(out.spans);
      std::lock_guard lock(text_mu_);
      for (const auto& s : out.spans) seen_text_.emplace(s.id, s.text);
    } else {
      out.spans = tokenizer_.tokenize(text);
    }
    out.normalized = detokenize(out.spans) != text;
    check_context(descriptor_, out.spans.size(), true);
    return out;
  }

  ScoredSequence score_sequence(const std::vector<TokenSpan>& tokens, const ScoreOptions& options) override {
    if (tokens.empty()) throw Error(ErrorCode::InvalidArgument, "score_sequence requires tokens");
    check_context(descriptor_, tokens.size(), options.use_bos);
    const bool with_bos = options.use_bos && descriptor_.bos_id.has_value();
    std::vector<TokenId> sent;
    if (with_bos) sent.push_back(*descriptor_.bos_id);
    for (const auto& t : tokens) sent.push_back(t.id);

    auto dists = request_distributions(sent);
    ScoredSequence out;
    if (with_bos) {
      for (std::size_t j = 0; j < tokens.size(); ++j) {
        dists[j].context_position = j;
        out.distributions.push_back(std::move(dists[j]));
      }
    } else {
      out.unscored_positions.push_back(0);
      for (std::size_t j = 0; j + 1 < tokens.size(); ++j) {
        dists[j].context_position = j + 1;
        out.distributions.push_back(std::move(dists[j]));
      }
    }
    return out;
  }

  std::vector<TokenId> greedy_continuation(std::span<const TokenId> prefix, std::size_t n) override {
    std::vector<TokenId> context;
    if (descriptor_.bos_id) context.push_back(*descriptor_.bos_id);
    context.insert(context.end(), prefix.begin(), prefix.end());
    if (context.empty() && n > 0)
      throw Error(ErrorCode::Unsupported, "generation from an empty context needs a BOS token");
    std::vector<TokenId> generated;
    while (generated.size() < n && context.size() < descriptor_.max_context) {
      const auto dists = request_distributions(context);
      const TokenId next = argmax(dists.back());
      generated.push_back(next);
      context.push_back(next);
    }
    return generated;
  }

  std::string token_text(TokenId id) const override {
    if (!config_.vocab.empty()) return tokenizer_.text_of(id);
    std::lock_guard lock(text_mu_);
    if (auto it = seen_text_.find(id); it != seen_text_.end()) return it->second;
    return "<" + std::to_string(id) + ">";
  }

 private:
  nlohmann::json post(const std::string& url, const nlohmann::json& body) const {
    const auto parsed = detail::split_url(url);
    httplib::Client client(parsed.origin);
    const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers;
    if (config_.auth_header) {
      const auto colon = config_.auth_header->find(':');
      if (colon == std::string::npos) throw Error(ErrorCode::InvalidArgument, "auth_header must be 'Name: value'");
      std::string value = config_.auth_header->substr(colon + 1);
      value.erase(0, value.find_first_not_of(' '));
      headers.emplace(config_.auth_header->substr(0, colon), value);
    }
    auto res = client.Post(parsed.path, headers, body.dump(), "application/json");
    if (!res) throw Error(ErrorCode::Transport, url + ": " + httplib::to_string(res.error()));
    if (res->status != 200)
      throw Error(ErrorCode::Transport, url + ": HTTP " + std::to_string(res->status));
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Transport, url + ": invalid JSON: " + e.what());
    }
  }

  std::vector<NextTokenDistribution> request_distributions(const std::vector<TokenId>& ids) const {
    nlohmann::json body = {{"tokens", ids}, {"top_k", config_.top_k}};
    const auto reply = post(config_.score_url, body);
    std::vector<NextTokenDistribution> out;
    try {
      const auto& dists = reply.at("distributions");
      if (dists.size() != ids.size())
        throw Error(ErrorCode::Transport, "expected " + std::to_string(ids.size()) + " distributions, got " +
                                              std::to_string(dists.size()));
      for (const auto& jd : dists) {
        NextTokenDistribution d;
        d.kind = DistKind::TopK;
        double listed_mass = 0.0;
        for (const auto& e : jd.at("entries")) {
          const double lp = e.at(1).get<double>() * log_scale_;
          d.entries.emplace_back(e.at(0).get<TokenId>(), lp);
          listed_mass += std::exp(lp);
        }
        if (jd.contains("tail_logprob") && !jd.at("tail_logprob").is_null()) {
          d.tail_logprob = jd.at("tail_logprob").get<double>() * log_scale_;
        } else {
          d.tail_logprob = listed_mass < 1.0 ? std::log1p(-listed_mass) : -std::numeric_limits<double>::infinity();
        }
        d.sort_entries();
        d.validate();
        out.push_back(std::move(d));
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Transport, std::string("malformed score response: ") + e.what());
    }
    return out;
  }

  HttpBackendConfig config_;
  BackendDescriptor descriptor_;
  WhitespaceTokenizer tokenizer_;
  double log_scale_ = 1.0;
  mutable std::mutex text_mu_;
  std::unordered_map<TokenId, std::string> seen_text_;
};

}  // namespace mirror
