// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The Mirror Authors

#include <gtest/gtest.h>

#include <httplib.h>

#include <thread>

#include "mirror/service.hpp"
#include "scripted_backend.hpp"
#include "test_paths.hpp"

namespace {

using namespace mirror;
using mirror::testing::TempDir;

std::map<std::string, std::shared_ptr<Backend>> fixture_backends() {
  std::map<std::string, std::shared_ptr<Backend>> out;
  for (const char* name : mirror::testing::kFixtureNames) {
    std::shared_ptr<Backend> b = ReplayBackend::load(mirror::testing::fixture(name));
    out.emplace(b->descriptor().backend_id, b);
  }
  return out;
}

ServiceConfig config_in(const TempDir& dir) {
  ServiceConfig cfg;
  cfg.data_dir = dir.path() / "data";
  cfg.workers = 2;
  return cfg;
}

std::string fixed_clock() { return "2026-01-02T03:04:05Z"; }

TEST(Service, DoneResultMatchesDirectAnalysisBytes) {
  TempDir dir;
  auto backends = fixture_backends();
  Service svc(config_in(dir), backends, fixed_clock);
  for (const char* name : mirror::testing::kFixtureNames) {
    auto replay = ReplayBackend::load(mirror::testing::fixture(name));
    const auto id = replay->descriptor().backend_id;
    const auto text = replay->recordings().front().text();
    const auto sub = svc.submit_analysis(text, id);
    const auto run = svc.wait_for(sub.run_id);
    ASSERT_TRUE(run);
    ASSERT_EQ(run->status, RunStatus::Done) << run->error.value_or("");
    AnalysisOptions opts = svc.default_options();
    opts.created_at = run->created_at;
    EXPECT_EQ(*run->result, to_canonical_json(analyze_document(text, *replay, opts))) << name;
  }
}

TEST(Service, RunIdIsIdempotent) {
  TempDir dir;
  Service svc(config_in(dir), fixture_backends(), fixed_clock);
  const std::string text = "Agenda setting is a concept proposed by Gerbner and Katz. It explains how media coverage shapes public priorities.";
  const auto a = svc.submit_analysis(text, "share-14b-replay");
  const auto b = svc.submit_analysis(text, "share-14b-replay");
  EXPECT_EQ(a.run_id, b.run_id);
  EXPECT_TRUE(a.created);
  EXPECT_FALSE(b.created);
  const auto c = svc.submit_analysis(text, "share-14b-replay", {{"top_k", 5}});
  EXPECT_NE(a.run_id, c.run_id);
  // created_at does not take part in the address.
  TempDir other;
  Service later(config_in(other), fixture_backends(), [] { return std::string("2030-01-01T00:00:00Z"); });
  EXPECT_EQ(later.submit_analysis(text, "share-14b-replay").run_id, a.run_id);
  svc.wait_for(a.run_id);
  svc.wait_for(c.run_id);
}

TEST(Service, ErrorStatuses) {
  TempDir dir;
  auto cfg = config_in(dir);
  cfg.max_text_bytes = 16;
  Service svc(cfg, fixture_backends(), fixed_clock);
  auto status_of = [&](auto&& f) {
    try {
      f();
    } catch (const ServiceError& e) {
      return e.status();
    }
    return 0;
  };
  EXPECT_EQ(status_of([&] { svc.submit_analysis("x", "nope"); }), 404);
  EXPECT_EQ(status_of([&] { svc.submit_analysis(std::string(17, 'a'), "share-14b-replay"); }), 413);
  EXPECT_EQ(status_of([&] { svc.submit_analysis("x", "share-14b-replay", {{"top_k", "ten"}}); }), 422);
  EXPECT_EQ(status_of([&] { svc.submit_analysis("x", "share-14b-replay", {{"bogus", 1}}); }), 422);
  EXPECT_FALSE(svc.get_run("deadbeef"));
}

TEST(Service, FailedRunCarriesError) {
  TempDir dir;
  Service svc(config_in(dir), fixture_backends(), fixed_clock);
  const auto sub = svc.submit_analysis("text that was never recorded", "share-14b-replay");
  const auto run = svc.wait_for(sub.run_id);
  ASSERT_TRUE(run);
  EXPECT_EQ(run->status, RunStatus::Failed);
  EXPECT_TRUE(run->error);
  EXPECT_FALSE(run->result);
}

TEST(Service, RunsSurviveRestart) {
  TempDir dir;
  std::string run_id, first;
  const std::string text = "Communication research rarely centers African locations or cosmopolitan curiosity.";
  {
    Service svc(config_in(dir), fixture_backends(), fixed_clock);
    run_id = svc.submit_analysis(text, "share-14b-topk").run_id;
    const auto run = svc.wait_for(run_id);
    ASSERT_EQ(run->status, RunStatus::Done);
    first = Service::run_to_json(*run);
  }
  Service again(config_in(dir), fixture_backends(), [] { return std::string("2031-01-01T00:00:00Z"); });
  const auto run = again.get_run(run_id);
  ASSERT_TRUE(run);
  EXPECT_EQ(Service::run_to_json(*run), first);
  const auto resubmit = again.submit_analysis(text, "share-14b-topk");
  EXPECT_FALSE(resubmit.created);
  EXPECT_EQ(resubmit.status, RunStatus::Done);
}

TEST(RunStore, PendingBecomesFailedAfterRestart) {
  TempDir dir;
  {
    RunStore store(dir.path());
    store.create_pending("abc123", "2026-01-01T00:00:00Z");
    store.create_pending("def456", "2026-01-01T00:00:00Z");
    store.complete("def456", "{\"x\":1}\n");
  }
  RunStore store(dir.path());
  const auto interrupted = store.get("abc123");
  ASSERT_TRUE(interrupted);
  EXPECT_EQ(interrupted->status, RunStatus::Failed);
  EXPECT_TRUE(interrupted->error);
  const auto done = store.get("def456");
  ASSERT_TRUE(done);
  EXPECT_EQ(done->status, RunStatus::Done);
  EXPECT_EQ(*done->result, "{\"x\":1}\n");
}

TEST(Service, ListBackends) {
  TempDir dir;
  Service svc(config_in(dir), fixture_backends(), fixed_clock);
  const auto list = svc.list_backends();
  ASSERT_EQ(list.size(), 3u);
  auto agenda = ReplayBackend::load(mirror::testing::fixture("agenda.jsonl"));
  bool found = false;
  for (const auto& b : list) {
    if (b["id"] != "share-14b-replay") continue;
    found = true;
    EXPECT_EQ(b["vocab_size"].get<std::size_t>(), agenda->descriptor().vocab_size);
  }
  EXPECT_TRUE(found);
  TempDir empty;
  Service none(config_in(empty), {}, fixed_clock);
  EXPECT_EQ(none.list_backends().dump(), "[]");
}

TEST(Config, SyntaxErrorHasLineAndColumn) {
  try {
    parse_config("{\n  \"bind\": \"127.0.0.1:9000\",\n  \"workers\": ,\n}");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.where().rfind("line 3:", 0), 0u) << e.where();
  }
}

TEST(Config, FieldErrorsNameThePath) {
  auto where = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return e.where();
    }
    return std::string("none");
  };
  EXPECT_EQ(where(R"({"backends":[{"type":"replay","path":"a"},{"type":"replay"}]})"), "$.backends[1].path");
  EXPECT_EQ(where(R"({"backends":[{"type":"gguf"}]})"), "$.backends[0].type");
  EXPECT_EQ(where(R"({"workers":"two"})"), "$.workers");
  EXPECT_EQ(where(R"({"colour":1})"), "$.colour");
  EXPECT_EQ(where(R"({"bind":"localhost"})"), "$.bind");
  EXPECT_EQ(where(R"({})"), "none");
}

TEST(Config, BuildBackendsFromFixtures) {
  const auto dir = std::filesystem::path(mirror::testing::fixture("agenda.jsonl")).parent_path();
  const auto cfg = parse_config(
      R"({"backends":[{"type":"replay","path":"agenda.jsonl"},{"id":"alias","type":"replay","path":"african.jsonl"}]})",
      dir);
  const auto backends = Service::build_backends(cfg);
  EXPECT_EQ(backends.size(), 2u);
  EXPECT_TRUE(backends.count("share-14b-replay"));
  EXPECT_TRUE(backends.count("alias"));
  const auto missing = parse_config(R"({"backends":[{"type":"replay","path":"nope.jsonl"}]})", dir);
  try {
    Service::build_backends(missing);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.where(), "$.backends[0]");
  }
}

class HttpService : public ::testing::Test {
 protected:
  void SetUp() override {
    service_ = std::make_unique<Service>(config_in(dir_), fixture_backends(), fixed_clock);
    service_->mount(server_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
    service_.reset();
  }
  httplib::Client client() { return httplib::Client("127.0.0.1", port_); }

  TempDir dir_;
  std::unique_ptr<Service> service_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

TEST_F(HttpService, AnalyzePollAndFetchResult) {
  auto cli = client();
  auto replay = ReplayBackend::load(mirror::testing::fixture("discussion.jsonl"));
  const auto text = replay->recordings().front().text();
  nlohmann::json body{{"text", text}, {"backend_id", "share-4b-replay"}};
  auto res = cli.Post("/api/analyze", body.dump(), "application/json");
  ASSERT_TRUE(res);
  ASSERT_TRUE(res->status == 202 || res->status == 200);
  const auto run_id = nlohmann::json::parse(res->body)["run_id"].get<std::string>();
  ASSERT_TRUE(service_->wait_for(run_id));

  auto again = cli.Post("/api/analyze", body.dump(), "application/json");
  ASSERT_TRUE(again);
  EXPECT_EQ(again->status, 200);
  EXPECT_EQ(nlohmann::json::parse(again->body)["run_id"], run_id);

  auto run = cli.Get("/api/runs/" + run_id);
  ASSERT_TRUE(run);
  EXPECT_EQ(run->status, 200);
  const auto parsed = nlohmann::json::parse(run->body);
  EXPECT_EQ(parsed["status"], "done");

  auto result = cli.Get("/api/runs/" + run_id + "/result");
  ASSERT_TRUE(result);
  EXPECT_EQ(result->body, *service_->get_run(run_id)->result);
  AnalysisOptions opts = service_->default_options();
  opts.created_at = parsed["created_at"].get<std::string>();
  EXPECT_EQ(result->body, to_canonical_json(analyze_document(text, *replay, opts)));
}

TEST_F(HttpService, ErrorRoutes) {
  auto cli = client();
  auto r404 = cli.Get("/api/runs/0123abcd");
  ASSERT_TRUE(r404);
  EXPECT_EQ(r404->status, 404);
  auto unknown = cli.Post("/api/analyze", R"({"text":"x","backend_id":"nope"})", "application/json");
  ASSERT_TRUE(unknown);
  EXPECT_EQ(unknown->status, 404);
  auto bad = cli.Post("/api/analyze", R"({"backend_id":"share-4b-replay"})", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 422);
  auto garbage = cli.Post("/api/analyze", "{not json", "application/json");
  ASSERT_TRUE(garbage);
  EXPECT_EQ(garbage->status, 400);
  auto backends = cli.Get("/api/backends");
  ASSERT_TRUE(backends);
  EXPECT_EQ(nlohmann::json::parse(backends->body).size(), 3u);
  auto health = cli.Get("/api/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
}

TEST_F(HttpService, MemcheckRoute) {
  auto cli = client();
  auto replay = ReplayBackend::load(mirror::testing::fixture("agenda.jsonl"));
  nlohmann::json body{{"backend_id", "share-14b-replay"},
                      {"text", replay->recordings().front().text()},
                      {"prefix_tokens", 4}};
  auto res = cli.Post("/api/memcheck", body.dump(), "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200) << res->body;
  const auto j = nlohmann::json::parse(res->body);
  EXPECT_TRUE(j["teacher_forced"].is_object());
  EXPECT_TRUE(j["free_run"].is_object());
}

}  // namespace
