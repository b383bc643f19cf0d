#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The Mirror Authors

/**
 * @file run_store.hpp
 * @brief Content-addressed, file-backed store of analysis runs.
 *
 * Layout under the data directory:
 *   index.jsonl        append-only status log, one JSON object per transition
 *   runs/<run_id>.json result bytes of a Done run, written once
 *
 * Reopening replays the index; the last transition per run wins. Runs still
 * Pending when the previous process stopped are recorded as Failed.
 * Single writer, many readers.
 */

#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

#include <json.hpp>

#include "mirror/error.hpp"

namespace mirror {

enum class RunStatus { Pending, Done, Failed };

inline const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Pending: return "pending";
    case RunStatus::Done: return "done";
    case RunStatus::Failed: return "failed";
  }
  return "unknown";
}

inline RunStatus run_status_from(const std::string& s) {
  if (s == "pending") return RunStatus::Pending;
  if (s == "done") return RunStatus::Done;
  if (s == "failed") return RunStatus::Failed;
  throw Error(ErrorCode::Parse, "unknown run status '" + s + "'");
}

struct AnalysisRun {
  std::string run_id;
  RunStatus status = RunStatus::Pending;
  std::string created_at;
  std::optional<std::string> error;
  std::optional<std::string> result;  // canonical analysis bytes
};

class RunStore {
 public:
  explicit RunStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_ / "runs");
    replay();
  }

  std::optional<AnalysisRun> get(const std::string& run_id) const {
    std::shared_lock lock(mu_);
    auto it = runs_.find(run_id);
    if (it == runs_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return runs_.size();
  }

  /// Inserts a Pending run unless one exists that is Pending or Done.
  /// Returns the stored run and whether it was newly created.
  std::pair<AnalysisRun, bool> create_pending(const std::string& run_id, const std::string& created_at) {
    std::unique_lock lock(mu_);
    if (auto it = runs_.find(run_id); it != runs_.end() && it->second.status != RunStatus::Failed)
      return {it->second, false};
    AnalysisRun run{run_id, RunStatus::Pending, created_at, std::nullopt, std::nullopt};
    append_index(run);
    runs_[run_id] = run;
    return {run, true};
  }

  void complete(const std::string& run_id, const std::string& result) {
    std::unique_lock lock(mu_);
    auto& run = existing(run_id);
    if (run.status == RunStatus::Done) throw Error(ErrorCode::InvalidArgument, "run " + run_id + " is immutable");
    const auto final_path = result_path(run_id);
    const auto tmp = final_path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << result;
      if (!out) throw Error(ErrorCode::Unsupported, "cannot write " + tmp);
    }
    std::filesystem::rename(tmp, final_path);
    run.status = RunStatus::Done;
    run.result = result;
    run.error.reset();
    append_index(run);
  }

  void fail(const std::string& run_id, const std::string& message) {
    std::unique_lock lock(mu_);
    auto& run = existing(run_id);
    if (run.status == RunStatus::Done) throw Error(ErrorCode::InvalidArgument, "run " + run_id + " is immutable");
    run.status = RunStatus::Failed;
    run.error = message;
    append_index(run);
  }

  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  std::filesystem::path result_path(const std::string& run_id) const { return dir_ / "runs" / (run_id + ".json"); }
  std::filesystem::path index_path() const { return dir_ / "index.jsonl"; }

  AnalysisRun& existing(const std::string& run_id) {
    auto it = runs_.find(run_id);
    if (it == runs_.end()) throw Error(ErrorCode::NotFound, "no run " + run_id);
    return it->second;
  }

  void append_index(const AnalysisRun& run) {
    nlohmann::ordered_json j;
    j["run_id"] = run.run_id;
    j["status"] = to_string(run.status);
    j["created_at"] = run.created_at;
    j["error"] = run.error ? nlohmann::ordered_json(*run.error) : nlohmann::ordered_json();
    std::ofstream out(index_path(), std::ios::binary | std::ios::app);
    out << j.dump() << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::Unsupported, "cannot append to " + index_path().string());
  }

  void replay() {
    std::ifstream in(index_path(), std::ios::binary);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception&) {
        continue;  // torn final line after a crash
      }
      AnalysisRun run;
      run.run_id = j.at("run_id").get<std::string>();
      run.status = run_status_from(j.at("status").get<std::string>());
      run.created_at = j.at("created_at").get<std::string>();
      if (!j.at("error").is_null()) run.error = j.at("error").get<std::string>();
      runs_[run.run_id] = std::move(run);
    }
    std::vector<std::string> interrupted;
    for (auto& [id, run] : runs_) {
      if (run.status == RunStatus::Done) {
        std::ifstream f(result_path(id), std::ios::binary);
        if (!f) {
          run.status = RunStatus::Failed;
          run.error = "result file missing";
          interrupted.push_back(id);
          continue;
        }
        run.result.emplace((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
      } else if (run.status == RunStatus::Pending) {
        run.status = RunStatus::Failed;
        run.error = "interrupted by service restart";
        interrupted.push_back(id);
      }
    }
    for (const auto& id : interrupted) append_index(runs_[id]);
  }

  std::filesystem::path dir_;
  mutable std::shared_mutex mu_;
  std::map<std::string, AnalysisRun> runs_;
};

}  // namespace mirror
