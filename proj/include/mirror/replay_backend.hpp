#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The Mirror Authors

/**
 * @file replay_backend.hpp
 * @brief Deterministic backend replaying recorded tokenizations and distributions.
 *
 * Fixture format (line-delimited JSON, UTF-8):
 *
 *   {"type":"header","backend_id":str,"vocab_size":int,"bos_id":int|null,"tokenizer":str}
 *   {"type":"vocab","entries":[[id,text],...]}                       (optional)
 *   {"type":"token","id":int,"text":str,"byte_start":int,"byte_end":int,
 *    "dist":{"kind":"full"|"topk","entries":[[id,logprob],...],"tail_logprob":float|null}}
 *
 * A further header line starts another recorded document of the same
 * backend. When the header has no bos_id, the first token's "dist" is null.
 * Logprobs are written with 17 significant digits so replay is bit-exact.
 *
 * Generation is supported only along recorded paths: a greedy step needs a
 * recorded distribution for the current context, so decoding stops after the
 * first token that leaves every recording.
 */

#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mirror/backend.hpp"

namespace mirror {

struct ReplayRecording {
  std::string tokenizer;
  std::vector<TokenSpan> tokens;
  // Aligned with tokens; empty for position 0 when there is no BOS.
  std::vector<std::optional<NextTokenDistribution>> distributions;

  std::string text() const { return detokenize(tokens); }
};

namespace detail {

inline std::string format_logprob(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  std::string s(buf);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

inline std::string dist_to_json(const NextTokenDistribution& d) {
  std::string out = R"({"kind":")";
  out += d.kind == DistKind::Full ? "full" : "topk";
  out += R"(","entries":[)";
  for (std::size_t i = 0; i < d.entries.size(); ++i) {
    if (i) out += ',';
    out += '[' + std::to_string(d.entries[i].first) + ',' + format_logprob(d.entries[i].second) + ']';
  }
  out += R"(],"tail_logprob":)";
  out += d.tail_logprob ? format_logprob(*d.tail_logprob) : "null";
  out += '}';
  return out;
}

inline NextTokenDistribution dist_from_json(const nlohmann::json& j, std::size_t position) {
  NextTokenDistribution d;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "full") {
    d.kind = DistKind::Full;
  } else if (kind == "topk") {
    d.kind = DistKind::TopK;
  } else {
    throw Error(ErrorCode::Parse, "unknown distribution kind '" + kind + "'");
  }
  for (const auto& e : j.at("entries")) d.entries.emplace_back(e.at(0).get<TokenId>(), e.at(1).get<double>());
  if (j.contains("tail_logprob") && !j.at("tail_logprob").is_null())
    d.tail_logprob = j.at("tail_logprob").get<double>();
  d.context_position = position;
  return d;
}

}  // namespace detail

class ReplayBackend final : public Backend {
 public:
  static constexpr std::size_t kDefaultMaxContext = 4096;

  ReplayBackend(BackendDescriptor descriptor, std::vector<ReplayRecording> recordings,
                std::map<TokenId, std::string> vocab = {})
      : descriptor_(std::move(descriptor)), recordings_(std::move(recordings)), vocab_(std::move(vocab)) {
    descriptor_.reentrant = true;
    descriptor_.validate();
    for (const auto& r : recordings_) check_recording(r);
  }

  static std::unique_ptr<ReplayBackend> load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::BackendUnavailable, "cannot open fixture " + path);
    try {
      return parse(in);
    } catch (const Error& e) {
      throw Error(e.code(), path + ": " + e.what());
    }
  }

  static std::unique_ptr<ReplayBackend> parse(std::istream& in) {
    BackendDescriptor desc;
    bool have_header = false;
    std::vector<ReplayRecording> recordings;
    std::map<TokenId, std::string> vocab;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Parse, "line " + std::to_string(line_no) + ": " + e.what());
      }
      try {
        const std::string type = j.at("type").get<std::string>();
        if (type == "header") {
          BackendDescriptor h;
          h.backend_id = j.at("backend_id").get<std::string>();
          h.vocab_size = j.at("vocab_size").get<std::int64_t>();
          if (!j.at("bos_id").is_null()) h.bos_id = j.at("bos_id").get<TokenId>();
          h.max_context = j.value("max_context", kDefaultMaxContext);
          h.supports_full_distribution = true;
          if (have_header && (h.backend_id != desc.backend_id || h.vocab_size != desc.vocab_size ||
                              h.bos_id != desc.bos_id))
            throw Error(ErrorCode::Parse, "header disagrees with the first header");
          desc = h;
          have_header = true;
          recordings.push_back({j.value("tokenizer", std::string()), {}, {}});
        } else if (type == "vocab") {
          for (const auto& e : j.at("entries")) vocab[e.at(0).get<TokenId>()] = e.at(1).get<std::string>();
        } else if (type == "token") {
          if (!have_header) throw Error(ErrorCode::Parse, "token record before header");
          auto& rec = recordings.back();
          TokenSpan span{j.at("id").get<TokenId>(), j.at("text").get<std::string>(),
                         j.at("byte_start").get<std::size_t>(), j.at("byte_end").get<std::size_t>()};
          const std::size_t pos = rec.tokens.size();
          rec.tokens.push_back(std::move(span));
          if (j.contains("dist") && !j.at("dist").is_null()) {
            rec.distributions.push_back(detail::dist_from_json(j.at("dist"), pos));
          } else {
            rec.distributions.emplace_back(std::nullopt);
          }
        } else {
          throw Error(ErrorCode::Parse, "unknown record type '" + type + "'");
        }
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Parse, "line " + std::to_string(line_no) + ": " + e.what());
      } catch (const Error& e) {
        throw Error(e.code(), "line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    if (!have_header) throw Error(ErrorCode::Parse, "fixture has no header line");
    for (const auto& rec : recordings)
      for (const auto& d : rec.distributions)
        if (d && d->kind != DistKind::Full) desc.supports_full_distribution = false;
    return std::make_unique<ReplayBackend>(desc, std::move(recordings), std::move(vocab));
  }

  std::string to_jsonl() const {
    std::ostringstream out;
    for (std::size_t r = 0; r < recordings_.size(); ++r) {
      const auto& rec = recordings_[r];
      nlohmann::ordered_json h;
      h["type"] = "header";
      h["backend_id"] = descriptor_.backend_id;
      h["vocab_size"] = descriptor_.vocab_size;
      h["bos_id"] = descriptor_.bos_id ? nlohmann::ordered_json(*descriptor_.bos_id) : nlohmann::ordered_json();
      h["tokenizer"] = rec.tokenizer;
      if (descriptor_.max_context != kDefaultMaxContext) h["max_context"] = descriptor_.max_context;
      out << h.dump() << '\n';
      if (r == 0 && !vocab_.empty()) {
        nlohmann::ordered_json v;
        v["type"] = "vocab";
        v["entries"] = nlohmann::ordered_json::array();
        for (const auto& [id, text] : vocab_) v["entries"].push_back({id, text});
        out << v.dump() << '\n';
      }
      for (std::size_t i = 0; i < rec.tokens.size(); ++i) {
        const auto& t = rec.tokens[i];
        out << R"({"type":"token","id":)" << t.id << R"(,"text":)" << nlohmann::json(t.text).dump()
            << R"(,"byte_start":)" << t.byte_start << R"(,"byte_end":)" << t.byte_end << R"(,"dist":)"
            << (rec.distributions[i] ? detail::dist_to_json(*rec.distributions[i]) : "null") << "}\n";
      }
    }
    return out.str();
  }

  const BackendDescriptor& descriptor() const override { return descriptor_; }
  const std::vector<ReplayRecording>& recordings() const noexcept { return recordings_; }

  Tokenization tokenize(std::string_view text) override {
    if (text.empty()) return {};
    for (const auto& rec : recordings_) {
      if (rec.text() == text) {
        check_context(descriptor_, rec.tokens.size(), true);
        return {rec.tokens, false};
      }
    }
    throw Error(ErrorCode::FixtureMismatch, "text is not a recorded document of '" + descriptor_.backend_id + "'");
  }

  ScoredSequence score_sequence(const std::vector<TokenSpan>& tokens, const ScoreOptions& options) override {
    if (tokens.empty()) throw Error(ErrorCode::InvalidArgument, "score_sequence requires tokens");
    check_context(descriptor_, tokens.size(), options.use_bos);
    const auto ids = token_ids(tokens);
    for (const auto& rec : recordings_) {
      if (token_ids(rec.tokens) != ids) continue;
      ScoredSequence out;
      for (std::size_t i = 0; i < rec.tokens.size(); ++i) {
        const bool bos_scored = descriptor_.bos_id && options.use_bos;
        if (i == 0 && (!bos_scored || !rec.distributions[0])) {
          out.unscored_positions.push_back(0);
          continue;
        }
        out.distributions.push_back(*rec.distributions[i]);
      }
      return out;
    }
    throw Error(ErrorCode::FixtureMismatch, "token sequence is not recorded in '" + descriptor_.backend_id + "'");
  }

  std::vector<TokenId> greedy_continuation(std::span<const TokenId> prefix, std::size_t n) override {
    std::vector<TokenId> context(prefix.begin(), prefix.end());
    std::vector<TokenId> generated;
    bool found_prefix = false;
    while (generated.size() < n) {
      const NextTokenDistribution* next = nullptr;
      for (const auto& rec : recordings_) {
        if (rec.tokens.size() < context.size()) continue;
        bool match = true;
        for (std::size_t i = 0; i < context.size() && match; ++i) match = rec.tokens[i].id == context[i];
        if (!match) continue;
        found_prefix = true;
        if (rec.tokens.size() > context.size() && rec.distributions[context.size()] &&
            (context.size() > 0 || descriptor_.bos_id)) {
          next = &*rec.distributions[context.size()];
          break;
        }
      }
      if (!found_prefix)
        throw Error(ErrorCode::Unsupported, "replay generation is only available along recorded paths");
      if (!next) break;
      const TokenId id = argmax(*next);
      generated.push_back(id);
      context.push_back(id);
    }
    return generated;
  }

  std::string token_text(TokenId id) const override {
    if (auto it = vocab_.find(id); it != vocab_.end()) return it->second;
    for (const auto& rec : recordings_)
      for (const auto& t : rec.tokens)
        if (t.id == id) return t.text;
    return "<" + std::to_string(id) + ">";
  }

 private:
  void check_recording(const ReplayRecording& rec) const {
    if (rec.tokens.size() != rec.distributions.size())
      throw Error(ErrorCode::FixtureMismatch, "distribution count differs from token count");
    validate_spans(rec.tokens);
    for (std::size_t i = 0; i < rec.tokens.size(); ++i) {
      const auto& t = rec.tokens[i];
      if (t.id >= descriptor_.vocab_size)
        throw Error(ErrorCode::FixtureMismatch, "token id outside vocabulary at position " + std::to_string(i));
      if (t.byte_end - t.byte_start != t.text.size())
        throw Error(ErrorCode::FixtureMismatch, "byte extent does not match text at position " + std::to_string(i));
      const auto& d = rec.distributions[i];
      if (!d) {
        if (i != 0 || descriptor_.bos_id)
          throw Error(ErrorCode::FixtureMismatch, "missing distribution at position " + std::to_string(i));
        continue;
      }
      if (d->context_position != i)
        throw Error(ErrorCode::FixtureMismatch, "distribution position mismatch at " + std::to_string(i));
      d->validate();
      for (const auto& e : d->entries)
        if (e.first < 0 || e.first >= descriptor_.vocab_size)
          throw Error(ErrorCode::FixtureMismatch, "entry id outside vocabulary at position " + std::to_string(i));
    }
  }

  BackendDescriptor descriptor_;
  std::vector<ReplayRecording> recordings_;
  std::map<TokenId, std::string> vocab_;
};

}  // namespace mirror
