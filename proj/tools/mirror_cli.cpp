// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The Mirror Authors

// mirror: command-line front end.
//
//   mirror analyze     --backend B [--input F] [--format ansi|html|json]
//   mirror bench       --backend B [--backend C ...] --items F [--format table|json]
//   mirror compare-ppl --backend-a A --backend-b B --corpus DIR --manifest F
//   mirror memcheck    --backend B [--input F] [--prefix-tokens 64]
//   mirror serve       [--config F]
//
// A backend is either a replay fixture path or an id from the config file
// (--config, else $MIRROR_CONFIG). Exit codes: 0 ok, 1 runtime failure,
// 2 usage or configuration error.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mirror/mirror.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  if (path == "-") {
    std::ostringstream ss;
    ss << std::cin.rdbuf();
    return ss.str();
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open input file '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_output(const std::string& path, const std::string& bytes) {
  if (path.empty() || path == "-") {
    std::cout << bytes;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw mirror::Error(mirror::ErrorCode::InvalidArgument, "cannot write '" + path + "'");
  out << bytes;
}

std::shared_ptr<mirror::Backend> open_backend(const std::string& name, const std::string& config_flag) {
  if (std::filesystem::is_regular_file(name)) return mirror::ReplayBackend::load(name);
  const auto config_path = mirror::resolve_config_path(config_flag);
  if (config_path.empty())
    throw UsageError("backend '" + name + "' is not a fixture file and no --config or MIRROR_CONFIG is set");
  const auto cfg = mirror::load_config(config_path);
  for (const auto& spec : cfg.backends) {
    if (spec.id == name) return mirror::make_backend(spec, cfg.base_dir);
  }
  // Replay entries may omit the id and use the fixture's own.
  auto all = mirror::Service::build_backends(cfg);
  if (auto it = all.find(name); it != all.end()) return it->second;
  throw UsageError("unknown backend '" + name + "' in " + config_path);
}

/// Input text: --input, else the single document recorded in a replay fixture.
std::string input_text(const std::string& input, mirror::Backend& backend) {
  if (!input.empty()) return read_file(input);
  if (auto* replay = dynamic_cast<mirror::ReplayBackend*>(&backend); replay && replay->recordings().size() == 1)
    return replay->recordings().front().text();
  throw UsageError("--input is required for this backend");
}

void require_text(const std::string& text) {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw UsageError("input document is empty");
}

int run_analyze(const std::string& backend_name, const std::string& config, const std::string& input,
                const std::string& format, const mirror::AnalysisOptions& options, const std::string& out) {
  auto backend = open_backend(backend_name, config);
  const auto text = input_text(input, *backend);
  require_text(text);
  const auto canonical = mirror::to_canonical_json(mirror::analyze_document(text, *backend, options));
  if (format == "json") {
    write_output(out, canonical);
  } else if (format == "html") {
    write_output(out, mirror::render::html(canonical));
  } else {
    write_output(out, mirror::render::ansi(canonical));
  }
  return 0;
}

int run_bench(const std::vector<std::string>& backends, const std::string& config, const std::string& items_path,
              const std::string& scope, bool length_normalized, const std::vector<double>& flops,
              const std::string& format, const std::string& out) {
  if (!std::filesystem::is_regular_file(items_path)) throw UsageError("items file '" + items_path + "' not found");
  const auto items = mirror::load_cloze_items(items_path);
  if (items.empty()) throw UsageError("items file '" + items_path + "' has no items");
  if (!flops.empty() && flops.size() != backends.size())
    throw UsageError("--flops must be given once per --backend");
  mirror::ClozeOptions opts;
  opts.scope = scope == "span" ? mirror::ClozeScope::SpanOnly : mirror::ClozeScope::FullSequence;
  opts.length_normalized = length_normalized;

  std::vector<mirror::BenchReport> reports;
  for (std::size_t i = 0; i < backends.size(); ++i) {
    auto backend = open_backend(backends[i], config);
    reports.push_back(mirror::run_cloze(items, *backend, opts));
    if (!flops.empty()) reports.back().flops = flops[i];
  }
  if (format == "json") {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& r : reports) j.push_back(mirror::bench_report_to_json(r));
    write_output(out, j.dump(2) + "\n");
  } else {
    std::vector<const mirror::BenchReport*> ptrs;
    for (const auto& r : reports) ptrs.push_back(&r);
    write_output(out, mirror::bench_table(ptrs));
  }
  return 0;
}

int run_compare(const std::string& a, const std::string& b, const std::string& config, const std::string& corpus,
                const std::string& manifest, const std::string& format, const std::string& out) {
  if (!std::filesystem::is_regular_file(manifest)) throw UsageError("manifest '" + manifest + "' not found");
  const auto docs = mirror::load_corpus(corpus, manifest);
  auto ba = open_backend(a, config);
  auto bb = open_backend(b, config);
  const auto cmp = mirror::perplexity_compare(docs, *ba, *bb);
  write_output(out, format == "json" ? mirror::perplexity_to_json(cmp).dump(2) + "\n" : mirror::perplexity_table(cmp));
  return 0;
}

int run_memcheck(const std::string& backend_name, const std::string& config, const std::string& input,
                 std::size_t prefix_tokens, const std::string& format, const std::string& out) {
  auto backend = open_backend(backend_name, config);
  const auto text = input_text(input, *backend);
  require_text(text);
  const auto tokens = backend->tokenize(text).spans;
  const auto tf = mirror::teacher_forced_overlay(text, *backend);
  std::optional<mirror::MemorizationReport> fr;
  if (prefix_tokens >= 1 && prefix_tokens < tokens.size()) fr = mirror::freerun_match(text, *backend, prefix_tokens);

  if (format == "json") {
    nlohmann::ordered_json j;
    j["teacher_forced"] = mirror::report_to_json(tf);
    j["free_run"] = fr ? mirror::report_to_json(*fr) : nlohmann::ordered_json();
    write_output(out, j.dump(2) + "\n");
    return 0;
  }
  if (format == "html") {
    write_output(out, mirror::render::memcheck_html(tokens, tf));
    return 0;
  }
  std::ostringstream s;
  s << mirror::render::memcheck_ansi(tokens, tf);
  char line[160];
  std::snprintf(line, sizeof line, "teacher-forced: %.3f of %zu positions match, longest run %zu\n",
                tf.match_fraction, tf.matches.size(), tf.longest_match_run);
  s << line;
  if (fr) {
    std::snprintf(line, sizeof line, "free-run from %zu tokens: %.3f of %zu positions match, longest run %zu\n",
                  prefix_tokens, fr->match_fraction, fr->matches.size(), fr->longest_match_run);
    s << line;
  } else {
    s << "free-run skipped: document has " << tokens.size() << " tokens, prefix is " << prefix_tokens << "\n";
  }
  write_output(out, s.str());
  return 0;
}

httplib::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

int run_serve(const std::string& config_flag) {
  const auto path = mirror::resolve_config_path(config_flag);
  if (path.empty()) throw UsageError("serve needs --config or MIRROR_CONFIG");
  mirror::ServiceConfig cfg;
  std::map<std::string, std::shared_ptr<mirror::Backend>> backends;
  try {
    cfg = mirror::load_config(path);
    backends = mirror::Service::build_backends(cfg);
  } catch (const mirror::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  }
  if (backends.empty()) {
    std::cerr << "config error: " << path << ": $.backends: no backends configured\n";
    return kExitUsage;
  }
  mirror::Service service(cfg, std::move(backends));
  httplib::Server server;
  service.mount(server);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << "mirror: serving " << service.list_backends().size() << " backend(s) on " << cfg.host << ":"
            << cfg.port << "\n";
  if (!server.listen(cfg.host, cfg.port)) {
    std::cerr << "mirror: cannot listen on " << cfg.host << ":" << cfg.port << "\n";
    return kExitRuntime;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Token-level expectancy analysis for language-model output"};
  app.require_subcommand(1);
  app.fallthrough();  // lets --config follow the subcommand
  std::string config;
  app.add_option("--config", config, "Service/backend config (default: $MIRROR_CONFIG)");

  std::string backend, input, format = "ansi", out;
  mirror::AnalysisOptions aopts;
  bool no_bos = false;
  auto* analyze = app.add_subcommand("analyze", "Per-token surprisal, entropy and z-scores");
  analyze->add_option("--backend", backend, "Fixture path or configured backend id")->required();
  analyze->add_option("--input", input, "Document file, '-' for stdin");
  analyze->add_option("--format", format)->check(CLI::IsMember({"ansi", "html", "json"}));
  analyze->add_option("--top-k", aopts.top_k, "Alternatives kept per token")->check(CLI::PositiveNumber);
  analyze->add_option("--z-threshold", aopts.z_threshold, "Salience threshold");
  analyze->add_option("--retain-dist", aopts.retain_dist, "Distribution entries kept for the missing-token view");
  analyze->add_flag("--no-bos", no_bos, "Leave position 0 unscored");
  analyze->add_option("--out", out, "Output file (default stdout)");

  std::vector<std::string> bench_backends;
  std::string items, scope = "full", bench_format = "table";
  std::vector<double> flops;
  bool length_normalized = false;
  auto* bench = app.add_subcommand("bench", "Two-choice cloze benchmark");
  bench->add_option("--backend", bench_backends, "Fixture path or configured backend id (repeatable)")->required();
  bench->add_option("--items", items, "Cloze items, JSON lines")->required();
  bench->add_option("--scope", scope)->check(CLI::IsMember({"full", "span"}));
  bench->add_flag("--length-normalized", length_normalized);
  bench->add_option("--flops", flops, "Training compute per backend, reported as-is");
  bench->add_option("--format", bench_format)->check(CLI::IsMember({"table", "json"}));
  bench->add_option("--out", out);

  std::string backend_a, backend_b, corpus, manifest, ppl_format = "table";
  auto* compare = app.add_subcommand("compare-ppl", "Per-group log-perplexity difference between two backends");
  compare->add_option("--backend-a", backend_a)->required();
  compare->add_option("--backend-b", backend_b)->required();
  compare->add_option("--corpus", corpus, "Directory holding the documents")->required();
  compare->add_option("--manifest", manifest, "JSON lines {path, group}")->required();
  compare->add_option("--format", ppl_format)->check(CLI::IsMember({"table", "json"}));
  compare->add_option("--out", out);

  std::size_t prefix_tokens = 64;
  std::string mem_format = "ansi";
  auto* memcheck = app.add_subcommand("memcheck", "Teacher-forced and free-run memorization probes");
  memcheck->add_option("--backend", backend)->required();
  memcheck->add_option("--input", input);
  memcheck->add_option("--prefix-tokens", prefix_tokens, "Free-run prefix length");
  memcheck->add_option("--format", mem_format)->check(CLI::IsMember({"ansi", "html", "json"}));
  memcheck->add_option("--out", out);

  auto* serve = app.add_subcommand("serve", "Run the HTTP analysis service");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*analyze) {
      aopts.use_bos = !no_bos;
      return run_analyze(backend, config, input, format, aopts, out);
    }
    if (*bench) return run_bench(bench_backends, config, items, scope, length_normalized, flops, bench_format, out);
    if (*compare) return run_compare(backend_a, backend_b, config, corpus, manifest, ppl_format, out);
    if (*memcheck) return run_memcheck(backend, config, input, prefix_tokens, mem_format, out);
    if (*serve) return run_serve(config);
  } catch (const UsageError& e) {
    std::cerr << "mirror: " << e.what() << "\n";
    return kExitUsage;
  } catch (const mirror::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const mirror::Error& e) {
    std::cerr << "mirror: " << mirror::to_string(e.code()) << ": " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "mirror: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
