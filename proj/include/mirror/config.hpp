#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The Mirror Authors

/**
 * @file config.hpp
 * @brief Service configuration and backend construction.
 *
 *   {
 *     "bind": "127.0.0.1:8080",
 *     "data_dir": "runs",
 *     "max_text_bytes": 1048576,
 *     "z_threshold": 1.5,
 *     "workers": 2,
 *     "backends": [
 *       {"type": "replay", "path": "fixtures/doc.jsonl", "id": "optional-override"},
 *       {"type": "http", "id": "remote", "score_url": "http://host/score",
 *        "tokenize_url": "http://host/tokenize", "vocab": "vocab.json" | [...],
 *        "vocab_size": 50257, "bos_id": 50256, "max_context": 2048, "top_k": 20,
 *        "timeout_ms": 30000, "auth_header": "Authorization: Bearer ...", "logprob_base": "e"|"2"|"10"}
 *     ]
 *   }
 *
 * Relative paths resolve against the config file's directory.
 */

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "mirror/http_backend.hpp"
#include "mirror/replay_backend.hpp"

namespace mirror {

/// Configuration problem with a location: "line:col" for syntax errors or a
/// field path such as "backends[1].path".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string where, const std::string& message)
      : std::runtime_error(where + ": " + message), where_(std::move(where)), message_(message) {}
  const std::string& where() const noexcept { return where_; }
  const std::string& message() const noexcept { return message_; }

 private:
  std::string where_;
  std::string message_;
};

struct BackendSpec {
  std::string id;  // empty: take the backend's own id
  std::string type;
  nlohmann::json raw;
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path data_dir = "mirror-data";
  std::size_t max_text_bytes = 1 << 20;
  double z_threshold = 1.5;
  std::size_t workers = 2;
  std::vector<BackendSpec> backends;
  std::filesystem::path base_dir = ".";
};

namespace detail {

inline std::pair<std::size_t, std::size_t> line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

template <typename T>
T field(const nlohmann::json& obj, const std::string& path, const char* key, const T& fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(path + "." + key, "wrong type");
  }
}

template <typename T>
T required(const nlohmann::json& obj, const std::string& path, const char* key) {
  if (!obj.contains(key)) throw ConfigError(path + "." + key, "missing required field");
  return field<T>(obj, path, key, T{});
}

}  // namespace detail

inline ServiceConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto [line, col] = detail::line_col(text, e.byte > 0 ? e.byte - 1 : 0);
    throw ConfigError("line " + std::to_string(line) + ":" + std::to_string(col), e.what());
  }
  if (!j.is_object()) throw ConfigError("$", "config must be a JSON object");
  static const std::vector<std::string> known = {"bind", "data_dir", "max_text_bytes", "z_threshold", "workers",
                                                 "backends"};
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("$." + key, "unknown field");

  ServiceConfig cfg;
  cfg.base_dir = base_dir;
  const auto bind = detail::field<std::string>(j, "$", "bind", "127.0.0.1:8080");
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) throw ConfigError("$.bind", "expected host:port");
  cfg.host = bind.substr(0, colon);
  try {
    std::size_t used = 0;
    cfg.port = std::stoi(bind.substr(colon + 1), &used);
    if (used != bind.size() - colon - 1 || cfg.port < 0 || cfg.port > 65535) throw std::invalid_argument("port");
  } catch (const std::exception&) {
    throw ConfigError("$.bind", "invalid port in '" + bind + "'");
  }
  cfg.data_dir = base_dir / detail::field<std::string>(j, "$", "data_dir", "mirror-data");
  const auto max_bytes = detail::field<std::int64_t>(j, "$", "max_text_bytes", 1 << 20);
  if (max_bytes <= 0) throw ConfigError("$.max_text_bytes", "must be positive");
  cfg.max_text_bytes = static_cast<std::size_t>(max_bytes);
  cfg.z_threshold = detail::field<double>(j, "$", "z_threshold", 1.5);
  const auto workers = detail::field<std::int64_t>(j, "$", "workers", 2);
  if (workers < 1) throw ConfigError("$.workers", "must be >= 1");
  cfg.workers = static_cast<std::size_t>(workers);

  if (j.contains("backends")) {
    if (!j["backends"].is_array()) throw ConfigError("$.backends", "must be an array");
    for (std::size_t i = 0; i < j["backends"].size(); ++i) {
      const auto& b = j["backends"][i];
      const std::string path = "$.backends[" + std::to_string(i) + "]";
      if (!b.is_object()) throw ConfigError(path, "must be an object");
      BackendSpec spec;
      spec.type = detail::required<std::string>(b, path, "type");
      spec.id = detail::field<std::string>(b, path, "id", "");
      if (spec.type == "replay") {
        detail::required<std::string>(b, path, "path");
      } else if (spec.type == "http") {
        if (spec.id.empty()) throw ConfigError(path + ".id", "missing required field");
        detail::required<std::string>(b, path, "score_url");
        if (!b.contains("tokenize_url") && !b.contains("vocab"))
          throw ConfigError(path, "http backend needs 'vocab' or 'tokenize_url'");
      } else {
        throw ConfigError(path + ".type", "unknown backend type '" + spec.type + "'");
      }
      spec.raw = b;
      cfg.backends.push_back(std::move(spec));
    }
  }
  return cfg;
}

inline ServiceConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string(), "cannot open config file");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_config(text, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.where(), e.message());
  }
}

/// Path from --config, else MIRROR_CONFIG, else empty.
inline std::string resolve_config_path(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("MIRROR_CONFIG")) return env;
  return {};
}

inline std::unique_ptr<Backend> make_backend(const BackendSpec& spec, const std::filesystem::path& base_dir) {
  const auto& b = spec.raw;
  if (spec.type == "replay") return ReplayBackend::load((base_dir / b.at("path").get<std::string>()).string());

  HttpBackendConfig hc;
  hc.backend_id = spec.id;
  hc.score_url = b.at("score_url").get<std::string>();
  if (b.contains("tokenize_url")) hc.tokenize_url = b.at("tokenize_url").get<std::string>();
  if (b.contains("vocab")) {
    const auto& v = b.at("vocab");
    if (v.is_string()) {
      std::ifstream in(base_dir / v.get<std::string>());
      if (!in) throw Error(ErrorCode::BackendUnavailable, "cannot open vocabulary " + v.get<std::string>());
      hc.vocab = nlohmann::json::parse(in).get<std::vector<std::string>>();
    } else {
      hc.vocab = v.get<std::vector<std::string>>();
    }
  }
  if (b.contains("unk_id")) hc.unk_id = b.at("unk_id").get<TokenId>();
  hc.vocab_size = b.value("vocab_size", std::int64_t{0});
  if (b.contains("bos_id") && !b.at("bos_id").is_null()) hc.bos_id = b.at("bos_id").get<TokenId>();
  hc.max_context = b.value("max_context", std::size_t{2048});
  hc.top_k = b.value("top_k", 20);
  hc.timeout_ms = b.value("timeout_ms", 30000);
  if (b.contains("auth_header")) hc.auth_header = b.at("auth_header").get<std::string>();
  const auto base = b.value("logprob_base", std::string("e"));
  if (base == "e") {
    hc.logprob_base = std::numbers::e;
  } else if (base == "2") {
    hc.logprob_base = 2.0;
  } else if (base == "10") {
    hc.logprob_base = 10.0;
  } else {
    throw Error(ErrorCode::InvalidArgument, "logprob_base must be e, 2 or 10");
  }
  return std::make_unique<HttpBackend>(std::move(hc));
}

}  // namespace mirror
