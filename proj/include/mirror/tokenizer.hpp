#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The Mirror Authors

#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mirror/types.hpp"

namespace mirror {

/**
 * Table-driven tokenizer splitting text into maximal whitespace runs and
 * maximal non-whitespace runs; with `split_punctuation`, every ASCII
 * punctuation byte becomes its own piece. Pieces map to ids through a fixed
 * vocabulary. Span texts are the source bytes, so detokenize() round-trips.
 */
class WhitespaceTokenizer {
 public:
  WhitespaceTokenizer() = default;

  WhitespaceTokenizer(std::vector<std::string> vocab, std::optional<TokenId> unk_id = std::nullopt,
                      bool split_punctuation = false)
      : vocab_(std::move(vocab)), unk_id_(unk_id), split_punctuation_(split_punctuation) {
    for (std::size_t i = 0; i < vocab_.size(); ++i) index_.emplace(vocab_[i], static_cast<TokenId>(i));
  }

  /// Vocabulary made of every piece of `texts`, in order of first appearance,
  /// after the given leading entries (e.g. "<bos>").
  static WhitespaceTokenizer from_texts(const std::vector<std::string>& texts,
                                        std::vector<std::string> leading = {},
                                        bool split_punctuation = false) {
    WhitespaceTokenizer probe({}, std::nullopt, split_punctuation);
    std::vector<std::string> vocab = std::move(leading);
    std::unordered_map<std::string, bool> seen;
    for (const auto& v : vocab) seen.emplace(v, true);
    for (const auto& t : texts) {
      for (const auto& [start, end] : probe.pieces(t)) {
        std::string piece = t.substr(start, end - start);
        if (seen.emplace(piece, true).second) vocab.push_back(std::move(piece));
      }
    }
    return WhitespaceTokenizer(std::move(vocab), std::nullopt, split_punctuation);
  }

  std::size_t vocab_size() const noexcept { return vocab_.size(); }
  const std::vector<std::string>& vocab() const noexcept { return vocab_; }

  std::optional<TokenId> lookup(std::string_view piece) const {
    auto it = index_.find(std::string(piece));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::string text_of(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size()) return "<" + std::to_string(id) + ">";
    return vocab_[static_cast<std::size_t>(id)];
  }

  std::vector<TokenSpan> tokenize(std::string_view text) const {
    std::vector<TokenSpan> spans;
    for (const auto& [start, end] : pieces(text)) {
      std::string piece(text.substr(start, end - start));
      auto id = lookup(piece);
      if (!id) {
        if (!unk_id_) throw Error(ErrorCode::InvalidArgument, "out-of-vocabulary piece '" + piece + "'");
        id = unk_id_;
      }
      spans.push_back({*id, std::move(piece), start, end});
    }
    return spans;
  }

  std::vector<std::pair<std::size_t, std::size_t>> pieces(std::string_view text) const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::size_t i = 0;
    while (i < text.size()) {
      const auto c = static_cast<unsigned char>(text[i]);
      std::size_t j = i + 1;
      if (std::isspace(c)) {
        while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
      } else if (split_punctuation_ && std::ispunct(c)) {
        // single byte
      } else {
        while (j < text.size()) {
          const auto d = static_cast<unsigned char>(text[j]);
          if (std::isspace(d) || (split_punctuation_ && std::ispunct(d))) break;
          ++j;
        }
      }
      out.emplace_back(i, j);
      i = j;
    }
    return out;
  }

 private:
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, TokenId> index_;
  std::optional<TokenId> unk_id_;
  bool split_punctuation_ = false;
};

}  // namespace mirror
