#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The Mirror Authors

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mirror {

enum class ErrorCode {
  InvalidArgument,
  BackendUnavailable,
  ContextOverflow,
  FixtureMismatch,
  Transport,
  Unsupported,
  NotFound,
  Parse,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::BackendUnavailable: return "backend-unavailable";
    case ErrorCode::ContextOverflow: return "context-overflow";
    case ErrorCode::FixtureMismatch: return "fixture-mismatch";
    case ErrorCode::Transport: return "transport";
    case ErrorCode::Unsupported: return "unsupported";
    case ErrorCode::NotFound: return "not-found";
    case ErrorCode::Parse: return "parse";
  }
  return "unknown";
}

/// Every engine failure surfaces as this exception. `max_prefix_tokens` is
/// set only for ContextOverflow and names the longest analyzable prefix.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  static Error context_overflow(std::size_t token_count, std::size_t max_prefix_tokens) {
    Error e(ErrorCode::ContextOverflow,
            "document has " + std::to_string(token_count) +
                " tokens; the maximum analyzable prefix is " +
                std::to_string(max_prefix_tokens) + " tokens");
    e.max_prefix_tokens_ = max_prefix_tokens;
    return e;
  }

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> max_prefix_tokens() const noexcept { return max_prefix_tokens_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> max_prefix_tokens_;
};

}  // namespace mirror
