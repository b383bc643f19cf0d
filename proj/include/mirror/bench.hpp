#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The Mirror Authors

/**
 * @file bench.hpp
 * @brief Minimal-pair cloze harness and per-group log-perplexity comparison.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mirror/expectancy.hpp"

namespace mirror {

inline constexpr const char* kHarnessVersion = "mirror-bench/1";

struct ClozeItem {
  std::string text_before;
  std::string text_after;
  std::array<std::string, 2> candidates;
  int answer_index = 0;
  std::string field;
  std::string source_id;

  void validate() const {
    if (candidates[0].empty() || candidates[1].empty())
      throw Error(ErrorCode::InvalidArgument, "cloze item " + source_id + ": empty candidate");
    if (candidates[0] == candidates[1])
      throw Error(ErrorCode::InvalidArgument, "cloze item " + source_id + ": candidates are identical");
    if (answer_index != 0 && answer_index != 1)
      throw Error(ErrorCode::InvalidArgument, "cloze item " + source_id + ": answer_index must be 0 or 1");
  }
};

inline ClozeItem cloze_item_from_json(const nlohmann::json& j) {
  static const std::array<const char*, 6> keys = {"text_before", "text_after", "candidates",
                                                   "answer_index", "field", "source_id"};
  if (!j.is_object()) throw Error(ErrorCode::Parse, "cloze item must be an object");
  for (const auto& [key, _] : j.items())
    if (std::find_if(keys.begin(), keys.end(), [&](const char* k) { return key == k; }) == keys.end())
      throw Error(ErrorCode::Parse, "unknown cloze item field '" + key + "'");
  ClozeItem item;
  try {
    item.text_before = j.at("text_before").get<std::string>();
    item.text_after = j.at("text_after").get<std::string>();
    const auto& c = j.at("candidates");
    if (!c.is_array() || c.size() != 2) throw Error(ErrorCode::Parse, "candidates must hold exactly two strings");
    item.candidates = {c.at(0).get<std::string>(), c.at(1).get<std::string>()};
    item.answer_index = j.at("answer_index").get<int>();
    item.field = j.at("field").get<std::string>();
    item.source_id = j.at("source_id").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, e.what());
  }
  item.validate();
  return item;
}

inline nlohmann::ordered_json cloze_item_to_json(const ClozeItem& item) {
  nlohmann::ordered_json j;
  j["text_before"] = item.text_before;
  j["text_after"] = item.text_after;
  j["candidates"] = item.candidates;
  j["answer_index"] = item.answer_index;
  j["field"] = item.field;
  j["source_id"] = item.source_id;
  return j;
}

inline std::vector<ClozeItem> load_cloze_items(std::istream& in) {
  std::vector<ClozeItem> items;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      items.push_back(cloze_item_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Parse, "line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return items;
}

inline std::vector<ClozeItem> load_cloze_items(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::NotFound, "cannot open items file " + path);
  return load_cloze_items(in);
}

enum class ClozeScope {
  FullSequence,  // candidate span plus every later position
  SpanOnly,
};

struct ClozeOptions {
  ClozeScope scope = ClozeScope::FullSequence;
  bool length_normalized = false;
  bool use_bos = true;
  std::size_t max_parallel = 0;  // 0: hardware concurrency
};

struct ClozeResult {
  int chosen = 0;
  std::array<double, 2> loglik{};
  std::array<std::size_t, 2> scored_tokens{};
  bool tie = false;
  bool correct = false;
};

/// Summed log-likelihood of the completed text from the insertion point on.
inline std::pair<double, std::size_t> candidate_loglik(const ClozeItem& item, int which, Backend& backend,
                                                       const ClozeOptions& options) {
  const std::string& cand = item.candidates[static_cast<std::size_t>(which)];
  const std::string text = item.text_before + cand + item.text_after;
  const std::size_t ins_begin = item.text_before.size();
  const std::size_t ins_end = ins_begin + cand.size();
  const auto tok = backend.tokenize(text);
  std::optional<std::size_t> first, last;
  for (std::size_t i = 0; i < tok.spans.size(); ++i) {
    const auto& s = tok.spans[i];
    if (s.byte_end > ins_begin && s.byte_start < ins_end) {
      if (!first) first = i;
      last = i;
    }
  }
  if (!first)
    throw Error(ErrorCode::InvalidArgument, "candidate '" + cand + "' tokenizes to empty in item " + item.source_id);
  const std::size_t end = options.scope == ClozeScope::FullSequence ? tok.spans.size() : *last + 1;
  const auto scored = backend.score_sequence(tok.spans, ScoreOptions{options.use_bos});
  numeric::CompensatedSum sum;
  std::size_t count = 0;
  for (const auto& d : scored.distributions) {
    if (d.context_position < *first || d.context_position >= end) continue;
    sum.add(-surprisal(d, tok.spans[d.context_position].id).nats);
    ++count;
  }
  return {sum.value(), count};
}

/// Chooses the candidate with the higher log-likelihood; ties choose index 0.
inline ClozeResult score_cloze_item(const ClozeItem& item, Backend& backend, const ClozeOptions& options = {}) {
  item.validate();
  ClozeResult r;
  for (int c = 0; c < 2; ++c) {
    auto [ll, n] = candidate_loglik(item, c, backend, options);
    if (options.length_normalized && n > 0) ll /= static_cast<double>(n);
    r.loglik[static_cast<std::size_t>(c)] = ll;
    r.scored_tokens[static_cast<std::size_t>(c)] = n;
  }
  r.tie = r.loglik[0] == r.loglik[1];
  r.chosen = (r.tie || r.loglik[0] > r.loglik[1]) ? 0 : 1;
  r.correct = r.chosen == item.answer_index;
  return r;
}

/// Candidate class label: trimmed, lower-cased word.
inline std::string candidate_class(std::string_view word) {
  const auto b = word.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = word.find_last_not_of(" \t\r\n");
  std::string out(word.substr(b, e - b + 1));
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

struct ClozeOutcome {
  std::string field;
  std::string gold_class;
  std::string predicted_class;
  bool correct = false;
  bool tie = false;
};

inline double raw_accuracy(const std::vector<ClozeOutcome>& outcomes) {
  if (outcomes.empty()) throw Error(ErrorCode::InvalidArgument, "accuracy of zero items is undefined");
  const auto hits = std::count_if(outcomes.begin(), outcomes.end(), [](const auto& o) { return o.correct; });
  return static_cast<double>(hits) / static_cast<double>(outcomes.size());
}

struct PriorCorrected {
  double value = 0.0;
  std::vector<std::string> warnings;
};

/**
 * Balanced accuracy: unweighted mean of per-gold-class accuracies. Always
 * picking the more frequent class scores chance. Declared classes with no
 * gold items are excluded with a warning.
 */
inline PriorCorrected prior_corrected_accuracy(const std::vector<ClozeOutcome>& outcomes,
                                               const std::vector<std::string>& declared_classes = {}) {
  if (outcomes.empty()) throw Error(ErrorCode::InvalidArgument, "accuracy of zero items is undefined");
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_class;  // correct, total
  for (const auto& c : declared_classes) per_class.emplace(c, std::pair<std::size_t, std::size_t>{0, 0});
  for (const auto& o : outcomes) {
    auto& slot = per_class[o.gold_class];
    slot.second += 1;
    if (o.correct) slot.first += 1;
  }
  PriorCorrected out;
  double sum = 0.0;
  std::size_t classes = 0;
  for (const auto& [label, counts] : per_class) {
    if (counts.second == 0) {
      out.warnings.push_back("class '" + label + "' has no gold items and is excluded");
      continue;
    }
    sum += static_cast<double>(counts.first) / static_cast<double>(counts.second);
    ++classes;
  }
  out.value = sum / static_cast<double>(classes);
  return out;
}

struct BenchGroup {
  std::string label;
  std::size_t items = 0;
  double raw_accuracy = 0.0;
  double prior_corrected_accuracy = 0.0;
  std::size_t ties = 0;
  // gold class -> predicted class -> count
  std::map<std::string, std::map<std::string, std::size_t>> confusion;
  std::vector<std::string> warnings;
};

inline BenchGroup summarize(std::string label, const std::vector<ClozeOutcome>& outcomes,
                            const std::vector<std::string>& declared_classes = {}) {
  BenchGroup g;
  g.label = std::move(label);
  g.items = outcomes.size();
  g.raw_accuracy = raw_accuracy(outcomes);
  auto pc = prior_corrected_accuracy(outcomes, declared_classes);
  g.prior_corrected_accuracy = pc.value;
  g.warnings = std::move(pc.warnings);
  for (const auto& o : outcomes) {
    ++g.confusion[o.gold_class][o.predicted_class];
    if (o.tie) ++g.ties;
  }
  return g;
}

struct BenchReport {
  std::string backend_id;
  std::string harness_version = kHarnessVersion;
  BenchGroup overall;
  std::vector<BenchGroup> per_field;
  std::vector<ClozeResult> results;
  std::optional<double> flops;
};

inline ClozeOutcome outcome_of(const ClozeItem& item, const ClozeResult& r) {
  return {item.field, candidate_class(item.candidates[static_cast<std::size_t>(item.answer_index)]),
          candidate_class(item.candidates[static_cast<std::size_t>(r.chosen)]), r.correct, r.tie};
}

/// Scores every item; runs in parallel only when the backend is reentrant.
inline BenchReport run_cloze(const std::vector<ClozeItem>& items, Backend& backend, const ClozeOptions& options = {}) {
  if (items.empty()) throw Error(ErrorCode::InvalidArgument, "no cloze items");
  std::vector<ClozeResult> results(items.size());
  std::size_t workers = 1;
  if (backend.descriptor().reentrant) {
    workers = options.max_parallel ? options.max_parallel : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, items.size());
  }
  if (workers <= 1) {
    for (std::size_t i = 0; i < items.size(); ++i) results[i] = score_cloze_item(items[i], backend, options);
  } else {
    std::vector<std::future<void>> tasks;
    for (std::size_t w = 0; w < workers; ++w) {
      tasks.push_back(std::async(std::launch::async, [&, w] {
        for (std::size_t i = w; i < items.size(); i += workers) results[i] = score_cloze_item(items[i], backend, options);
      }));
    }
    for (auto& t : tasks) t.get();
  }

  std::vector<ClozeOutcome> all;
  std::map<std::string, std::vector<ClozeOutcome>> by_field;
  std::vector<std::string> classes;
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto o = outcome_of(items[i], results[i]);
    by_field[o.field].push_back(o);
    all.push_back(std::move(o));
    for (const auto& c : items[i].candidates) {
      auto label = candidate_class(c);
      if (std::find(classes.begin(), classes.end(), label) == classes.end()) classes.push_back(label);
    }
  }
  BenchReport report;
  report.backend_id = backend.descriptor().backend_id;
  report.overall = summarize("overall", all);
  for (const auto& [field, outcomes] : by_field) report.per_field.push_back(summarize(field, outcomes));
  report.results = std::move(results);
  // Candidate words that never served as gold are worth surfacing.
  for (const auto& w : prior_corrected_accuracy(all, classes).warnings) report.overall.warnings.push_back(w);
  return report;
}

namespace detail {

inline nlohmann::ordered_json group_json(const BenchGroup& g) {
  nlohmann::ordered_json j;
  j["label"] = g.label;
  j["items"] = g.items;
  j["raw_accuracy"] = numeric::round_sig12(g.raw_accuracy);
  j["prior_corrected_accuracy"] = numeric::round_sig12(g.prior_corrected_accuracy);
  j["ties"] = g.ties;
  nlohmann::ordered_json conf = nlohmann::ordered_json::object();
  for (const auto& [gold, row] : g.confusion) {
    nlohmann::ordered_json r = nlohmann::ordered_json::object();
    for (const auto& [pred, n] : row) r[pred] = n;
    conf[gold] = std::move(r);
  }
  j["confusion"] = std::move(conf);
  j["warnings"] = g.warnings;
  return j;
}

}  // namespace detail

inline nlohmann::ordered_json bench_report_to_json(const BenchReport& r) {
  nlohmann::ordered_json j;
  j["backend_id"] = r.backend_id;
  j["harness_version"] = r.harness_version;
  j["flops"] = r.flops ? nlohmann::ordered_json(*r.flops) : nlohmann::ordered_json();
  j["overall"] = detail::group_json(r.overall);
  j["per_field"] = nlohmann::ordered_json::array();
  for (const auto& g : r.per_field) j["per_field"].push_back(detail::group_json(g));
  j["items"] = nlohmann::ordered_json::array();
  for (const auto& res : r.results) {
    nlohmann::ordered_json i;
    i["chosen"] = res.chosen;
    i["loglik"] = {numeric::round_sig12(res.loglik[0]), numeric::round_sig12(res.loglik[1])};
    i["tie"] = res.tie;
    i["correct"] = res.correct;
    j["items"].push_back(std::move(i));
  }
  return j;
}

/// Aligned table ranked by prior-corrected accuracy.
inline std::string bench_table(std::vector<const BenchReport*> reports) {
  std::stable_sort(reports.begin(), reports.end(), [](const BenchReport* a, const BenchReport* b) {
    return a->overall.prior_corrected_accuracy > b->overall.prior_corrected_accuracy;
  });
  const bool with_flops = std::any_of(reports.begin(), reports.end(), [](const auto* r) { return r->flops.has_value(); });
  std::size_t width = 5;
  for (const auto* r : reports) width = std::max(width, r->backend_id.size());
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %6s  %12s  %15s", static_cast<int>(width), "Model", "Items", "Raw accuracy",
                "Prior corrected");
  out << buf;
  if (with_flops) out << "  " << "FLOPs";
  out << '\n';
  for (const auto* r : reports) {
    std::snprintf(buf, sizeof buf, "%-*s  %6zu  %11.1f%%  %14.1f%%", static_cast<int>(width), r->backend_id.c_str(),
                  r->overall.items, 100.0 * r->overall.raw_accuracy, 100.0 * r->overall.prior_corrected_accuracy);
    out << buf;
    if (with_flops) {
      if (r->flops) {
        std::snprintf(buf, sizeof buf, "  %.3g", *r->flops);
        out << buf;
      } else {
        out << "  -";
      }
    }
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Perplexity comparison

struct CorpusDocument {
  std::string path;
  std::string group;
  std::string text;
};

/// Manifest lines: {"path":str,"group":str}, paths relative to `dir`.
inline std::vector<CorpusDocument> load_corpus(const std::filesystem::path& dir, const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw Error(ErrorCode::NotFound, "cannot open manifest " + manifest.string());
  std::vector<CorpusDocument> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    CorpusDocument d;
    try {
      const auto j = nlohmann::json::parse(line);
      d.path = j.at("path").get<std::string>();
      d.group = j.at("group").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Parse, manifest.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    std::ifstream f(dir / d.path, std::ios::binary);
    if (!f) throw Error(ErrorCode::NotFound, "corpus document missing: " + (dir / d.path).string());
    d.text.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
    docs.push_back(std::move(d));
  }
  return docs;
}

/// Mean per-token negative log-likelihood in nats over scored tokens.
inline double mean_nll(const std::vector<double>& nlls) {
  if (nlls.empty()) throw Error(ErrorCode::InvalidArgument, "no scored tokens");
  numeric::CompensatedSum s;
  for (double x : nlls) s.add(x);
  return s.value() / static_cast<double>(nlls.size());
}

inline double log_perplexity(std::string_view text, Backend& backend, bool use_bos = true) {
  const auto tok = backend.tokenize(text);
  if (tok.spans.empty()) throw Error(ErrorCode::InvalidArgument, "empty document");
  const auto scored = backend.score_sequence(tok.spans, ScoreOptions{use_bos});
  std::vector<double> nlls;
  for (const auto& d : scored.distributions) nlls.push_back(surprisal(d, tok.spans[d.context_position].id).nats);
  return mean_nll(nlls);
}

struct PerplexityRow {
  std::string group;
  std::size_t n = 0;
  double mean_delta = 0.0;  // A - B
  double ci95 = 0.0;        // 1.96 * sample std / sqrt(n); 0 when n == 1
  double mean_log_ppl_a = 0.0;
  double mean_log_ppl_b = 0.0;
};

struct PerplexityComparison {
  std::string backend_a;
  std::string backend_b;
  std::vector<PerplexityRow> rows;  // sorted by group label
  std::vector<std::pair<std::string, std::string>> excluded;  // path, reason
};

inline PerplexityRow summarize_deltas(std::string group, const std::vector<double>& a, const std::vector<double>& b) {
  PerplexityRow row;
  row.group = std::move(group);
  row.n = a.size();
  if (row.n == 0) throw Error(ErrorCode::InvalidArgument, "group has no documents");
  std::vector<double> deltas(row.n);
  for (std::size_t i = 0; i < row.n; ++i) deltas[i] = a[i] - b[i];
  row.mean_delta = mean_nll(deltas);
  row.mean_log_ppl_a = mean_nll(a);
  row.mean_log_ppl_b = mean_nll(b);
  if (row.n > 1) {
    numeric::CompensatedSum ss;
    for (double d : deltas) ss.add((d - row.mean_delta) * (d - row.mean_delta));
    const double sd = std::sqrt(ss.value() / static_cast<double>(row.n - 1));
    row.ci95 = 1.96 * sd / std::sqrt(static_cast<double>(row.n));
  }
  return row;
}

inline PerplexityComparison perplexity_compare(const std::vector<CorpusDocument>& corpus, Backend& backend_a,
                                               Backend& backend_b, bool use_bos = true) {
  PerplexityComparison out;
  out.backend_a = backend_a.descriptor().backend_id;
  out.backend_b = backend_b.descriptor().backend_id;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (const auto& doc : corpus) {
    try {
      const double la = log_perplexity(doc.text, backend_a, use_bos);
      const double lb = log_perplexity(doc.text, backend_b, use_bos);
      auto& g = groups[doc.group];
      g.first.push_back(la);
      g.second.push_back(lb);
    } catch (const Error& e) {
      out.excluded.emplace_back(doc.path, e.what());
    }
  }
  for (const auto& [group, series] : groups) out.rows.push_back(summarize_deltas(group, series.first, series.second));
  return out;
}

inline nlohmann::ordered_json perplexity_to_json(const PerplexityComparison& c) {
  nlohmann::ordered_json j;
  j["backend_a"] = c.backend_a;
  j["backend_b"] = c.backend_b;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : c.rows) {
    nlohmann::ordered_json row;
    row["group"] = r.group;
    row["n"] = r.n;
    row["mean_delta_log_ppl"] = numeric::round_sig12(r.mean_delta);
    row["ci95"] = numeric::round_sig12(r.ci95);
    row["mean_log_ppl_a"] = numeric::round_sig12(r.mean_log_ppl_a);
    row["mean_log_ppl_b"] = numeric::round_sig12(r.mean_log_ppl_b);
    j["rows"].push_back(std::move(row));
  }
  j["excluded"] = nlohmann::ordered_json::array();
  for (const auto& [path, reason] : c.excluded) j["excluded"].push_back({{"path", path}, {"reason", reason}});
  return j;
}

inline std::string perplexity_table(const PerplexityComparison& c) {
  std::size_t width = 5;
  for (const auto& r : c.rows) width = std::max(width, r.group.size());
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %5s  %12s  %10s\n", static_cast<int>(width), "Group", "Docs", "Mean delta",
                "CI95");
  out << "delta = log-ppl(" << c.backend_a << ") - log-ppl(" << c.backend_b << ")\n" << buf;
  for (const auto& r : c.rows) {
    std::snprintf(buf, sizeof buf, "%-*s  %5zu  %12.6f  %10.6f\n", static_cast<int>(width), r.group.c_str(), r.n,
                  r.mean_delta, r.ci95);
    out << buf;
  }
  for (const auto& [path, reason] : c.excluded) out << "excluded " << path << ": " << reason << '\n';
  return out.str();
}

}  // namespace mirror
