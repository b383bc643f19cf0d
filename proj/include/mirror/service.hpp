#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The Mirror Authors

/**
 * @file service.hpp
 * @brief Analysis service: backend registry, asynchronous runs, HTTP routes.
 *
 * Endpoints
 *   POST /api/analyze          {"text","backend_id","options"?} -> 202/200 {"run_id","status"}
 *   GET  /api/runs/{id}        {"run_id","status","created_at","error","result":<canonical>}
 *   GET  /api/runs/{id}/result canonical analysis bytes, verbatim
 *   GET  /api/backends         [descriptor + "id", ...]
 *   POST /api/bench            {"backend_id","items":[ClozeItem],"scope"?,"length_normalized"?}
 *   POST /api/memcheck         {"backend_id","text","prefix_tokens"?}
 *   GET  /api/health           {"status":"ok"}
 */

#include <chrono>
#include <condition_variable>
#include <ctime>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "mirror/analysis_json.hpp"
#include "mirror/bench.hpp"
#include "mirror/config.hpp"
#include "mirror/hash.hpp"
#include "mirror/memorization.hpp"
#include "mirror/run_store.hpp"

namespace mirror {

/// Failure mapped to an HTTP status.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, const std::string& message) : std::runtime_error(message), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

inline std::string utc_now_iso8601() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Content address of an analysis request.
inline std::string analysis_run_id(std::string_view text, const AnalysisOptions& options,
                                   const std::string& backend_id) {
  nlohmann::ordered_json key;
  key["backend_id"] = backend_id;
  key["options"] = options_json(options);
  key["text"] = std::string(text);
  return sha256_hex(key.dump());
}

/// A backend plus the lock that serializes calls when it is not reentrant.
class BackendSlot {
 public:
  explicit BackendSlot(std::shared_ptr<Backend> backend) : backend_(std::move(backend)) {}

  template <typename F>
  auto with(F&& f) {
    if (backend_->descriptor().reentrant) return f(*backend_);
    std::lock_guard lock(mu_);
    return f(*backend_);
  }

  const BackendDescriptor& descriptor() const { return backend_->descriptor(); }

 private:
  std::shared_ptr<Backend> backend_;
  std::mutex mu_;
};

struct SubmitResult {
  std::string run_id;
  RunStatus status = RunStatus::Pending;
  bool created = false;
};

class Service {
 public:
  using Clock = std::function<std::string()>;

  Service(ServiceConfig config, std::map<std::string, std::shared_ptr<Backend>> backends, Clock clock = utc_now_iso8601)
      : config_(std::move(config)), store_(config_.data_dir), clock_(std::move(clock)) {
    for (auto& [id, b] : backends) slots_.emplace(id, std::make_unique<BackendSlot>(std::move(b)));
    for (std::size_t i = 0; i < config_.workers; ++i) workers_.emplace_back([this] { work(); });
  }

  /// Builds every backend named in the configuration.
  static std::map<std::string, std::shared_ptr<Backend>> build_backends(const ServiceConfig& config) {
    std::map<std::string, std::shared_ptr<Backend>> out;
    for (std::size_t i = 0; i < config.backends.size(); ++i) {
      const auto& spec = config.backends[i];
      std::shared_ptr<Backend> b;
      try {
        b = make_backend(spec, config.base_dir);
      } catch (const std::exception& e) {
        throw ConfigError("$.backends[" + std::to_string(i) + "]", e.what());
      }
      const std::string id = spec.id.empty() ? b->descriptor().backend_id : spec.id;
      if (!out.emplace(id, std::move(b)).second)
        throw ConfigError("$.backends[" + std::to_string(i) + "].id", "duplicate backend id '" + id + "'");
    }
    return out;
  }

  ~Service() {
    {
      std::lock_guard lock(queue_mu_);
      stopping_ = true;
    }
    queue_cv_.notify_all();
    for (auto& w : workers_) w.join();
  }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  const ServiceConfig& config() const noexcept { return config_; }

  AnalysisOptions default_options() const {
    AnalysisOptions o;
    o.z_threshold = config_.z_threshold;
    return o;
  }

  SubmitResult submit_analysis(const std::string& text, const std::string& backend_id,
                               const nlohmann::json& options_in = nullptr) {
    auto* slot = find(backend_id);
    if (text.size() > config_.max_text_bytes)
      throw ServiceError(413, "text exceeds " + std::to_string(config_.max_text_bytes) + " bytes");
    AnalysisOptions options;
    try {
      options = options_from_json(options_in, default_options());
    } catch (const Error& e) {
      throw ServiceError(422, e.what());
    }
    const auto run_id = analysis_run_id(text, options, backend_id);
    auto [run, created] = store_.create_pending(run_id, clock_());
    if (created) {
      options.created_at = run.created_at;
      {
        std::lock_guard lock(queue_mu_);
        queue_.push_back(Job{run_id, text, slot, options});
      }
      queue_cv_.notify_one();
    }
    return {run_id, run.status, created};
  }

  std::optional<AnalysisRun> get_run(const std::string& run_id) const { return store_.get(run_id); }

  /// Polls until the run leaves Pending or the timeout passes.
  std::optional<AnalysisRun> wait_for(const std::string& run_id,
                                      std::chrono::milliseconds timeout = std::chrono::seconds(30)) const {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
      auto run = store_.get(run_id);
      if (!run || run->status != RunStatus::Pending || std::chrono::steady_clock::now() >= deadline) return run;
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
  }

  nlohmann::ordered_json list_backends() const {
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    for (const auto& [id, slot] : slots_) {
      nlohmann::ordered_json j;
      j["id"] = id;
      const auto desc = detail::descriptor_json(slot->descriptor());
      for (const auto& [k, v] : desc.items()) j[k] = v;
      out.push_back(std::move(j));
    }
    return out;
  }

  nlohmann::ordered_json bench(const nlohmann::json& body) {
    auto* slot = find(body.value("backend_id", std::string()));
    std::vector<ClozeItem> items;
    ClozeOptions opts;
    try {
      for (const auto& j : body.at("items")) items.push_back(cloze_item_from_json(j));
      const auto scope = body.value("scope", std::string("full"));
      if (scope == "span") {
        opts.scope = ClozeScope::SpanOnly;
      } else if (scope != "full") {
        throw Error(ErrorCode::InvalidArgument, "scope must be 'full' or 'span'");
      }
      opts.length_normalized = body.value("length_normalized", false);
    } catch (const std::exception& e) {
      throw ServiceError(422, e.what());
    }
    return slot->with([&](Backend& b) { return bench_report_to_json(run_cloze(items, b, opts)); });
  }

  nlohmann::ordered_json memcheck(const nlohmann::json& body) {
    auto* slot = find(body.value("backend_id", std::string()));
    std::string text;
    std::size_t prefix = 64;
    try {
      text = body.at("text").get<std::string>();
      prefix = body.value("prefix_tokens", std::size_t{64});
    } catch (const std::exception& e) {
      throw ServiceError(422, e.what());
    }
    if (text.size() > config_.max_text_bytes) throw ServiceError(413, "text too large");
    return slot->with([&](Backend& b) {
      nlohmann::ordered_json out;
      out["teacher_forced"] = report_to_json(teacher_forced_overlay(text, b));
      const auto count = b.tokenize(text).spans.size();
      out["free_run"] = prefix >= 1 && prefix < count ? report_to_json(freerun_match(text, b, prefix))
                                                       : nlohmann::ordered_json();
      return out;
    });
  }

  /// Run wrapper JSON; the canonical result is spliced in byte for byte.
  static std::string run_to_json(const AnalysisRun& run) {
    nlohmann::ordered_json head;
    head["run_id"] = run.run_id;
    head["status"] = to_string(run.status);
    head["created_at"] = run.created_at;
    head["error"] = run.error ? nlohmann::ordered_json(*run.error) : nlohmann::ordered_json();
    std::string out = head.dump();
    out.pop_back();
    out += ",\"result\":";
    if (run.result) {
      std::string body = *run.result;
      while (!body.empty() && body.back() == '\n') body.pop_back();
      out += body;
    } else {
      out += "null";
    }
    out += "}";
    return out;
  }

  /// Registers every route on `server`.
  void mount(httplib::Server& server) {
    auto guard = [](httplib::Response& res, const std::function<void()>& f) {
      try {
        f();
      } catch (const ServiceError& e) {
        res.status = e.status();
        res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
      } catch (const nlohmann::json::exception& e) {
        res.status = 400;
        res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
      } catch (const Error& e) {
        res.status = e.code() == ErrorCode::InvalidArgument || e.code() == ErrorCode::FixtureMismatch ||
                             e.code() == ErrorCode::ContextOverflow
                         ? 422
                         : 500;
        res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
      } catch (const std::exception& e) {
        res.status = 500;
        res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
      }
    };
    server.Get("/api/health", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"status":"ok"})", "application/json");
    });
    server.Get("/api/backends", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(list_backends().dump(), "application/json");
    });
    server.Post("/api/analyze", [this, guard](const httplib::Request& req, httplib::Response& res) {
      guard(res, [&] {
        const auto body = nlohmann::json::parse(req.body);
        if (!body.is_object() || !body.contains("text") || !body["text"].is_string())
          throw ServiceError(422, "body needs a string 'text'");
        const auto r = submit_analysis(body["text"].get<std::string>(), body.value("backend_id", std::string()),
                                       body.contains("options") ? body["options"] : nlohmann::json());
        res.status = r.status == RunStatus::Pending ? 202 : 200;
        res.set_content(nlohmann::ordered_json{{"run_id", r.run_id}, {"status", to_string(r.status)}}.dump(),
                        "application/json");
      });
    });
    server.Get(R"(/api/runs/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const auto run = get_run(req.matches[1]);
      if (!run) {
        res.status = 404;
        res.set_content(R"({"error":"unknown run"})", "application/json");
        return;
      }
      res.set_content(run_to_json(*run), "application/json");
    });
    server.Get(R"(/api/runs/([0-9a-f]+)/result)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto run = get_run(req.matches[1]);
      if (!run || !run->result) {
        res.status = 404;
        res.set_content(R"({"error":"no result for run"})", "application/json");
        return;
      }
      res.set_content(*run->result, "application/json");
    });
    server.Post("/api/bench", [this, guard](const httplib::Request& req, httplib::Response& res) {
      guard(res, [&] { res.set_content(bench(nlohmann::json::parse(req.body)).dump(), "application/json"); });
    });
    server.Post("/api/memcheck", [this, guard](const httplib::Request& req, httplib::Response& res) {
      guard(res, [&] { res.set_content(memcheck(nlohmann::json::parse(req.body)).dump(), "application/json"); });
    });
  }

 private:
  struct Job {
    std::string run_id;
    std::string text;
    BackendSlot* slot;
    AnalysisOptions options;
  };

  BackendSlot* find(const std::string& backend_id) {
    auto it = slots_.find(backend_id);
    if (it == slots_.end()) throw ServiceError(404, "unknown backend '" + backend_id + "'");
    return it->second.get();
  }

  void work() {
    while (true) {
      Job job;
      {
        std::unique_lock lock(queue_mu_);
        queue_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
        if (queue_.empty()) return;
        job = std::move(queue_.front());
        queue_.pop_front();
      }
      try {
        auto payload = job.slot->with(
            [&](Backend& b) { return to_canonical_json(analyze_document(job.text, b, job.options)); });
        store_.complete(job.run_id, payload);
      } catch (const std::exception& e) {
        store_.fail(job.run_id, e.what());
      }
    }
  }

  ServiceConfig config_;
  RunStore store_;
  Clock clock_;
  std::map<std::string, std::unique_ptr<BackendSlot>> slots_;
  std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::deque<Job> queue_;
  bool stopping_ = false;
  std::vector<std::thread> workers_;
};

}  // namespace mirror
