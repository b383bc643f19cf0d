// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The Mirror Authors

// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <sstream>

#include "mirror/mirror.hpp"
#include "scripted_backend.hpp"
#include "test_paths.hpp"

namespace {

using namespace mirror;
namespace mt = mirror::testing;

struct Failure {
  std::string what;
};

struct Skip {
  std::string why;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Failure{what};
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// -------------------------------------------------------------------------
// Statistics

NextTokenDistribution full_from_logprobs(const std::vector<double>& lp, std::size_t position = 0) {
  NextTokenDistribution d;
  d.kind = DistKind::Full;
  d.context_position = position;
  for (std::size_t i = 0; i < lp.size(); ++i) d.entries.emplace_back(static_cast<TokenId>(i), lp[i]);
  d.sort_entries();
  return d;
}

std::string statistics_oracle() {
  std::mt19937_64 rng(20260101);
  const auto start = std::chrono::steady_clock::now();
  long double worst = 0, worst_forms = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = std::uniform_int_distribution<std::size_t>(2, 512)(rng);
    const double scale = std::uniform_real_distribution<double>(0.1, 8.0)(rng);
    std::normal_distribution<double> normal(0.0, scale);
    std::vector<long double> logits(n);
    for (auto& x : logits) x = normal(rng);
    long double mx = logits[0];
    for (auto x : logits) mx = std::max(mx, x);
    long double z = 0;
    for (auto x : logits) z += std::exp(x - mx);
    const long double lse = mx + std::log(z);
    std::vector<double> lp(n);
    for (std::size_t i = 0; i < n; ++i) lp[i] = static_cast<double>(logits[i] - lse);
    const auto actual = static_cast<TokenId>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));

    // Brute force in extended precision from the same log-probabilities.
    long double h = 0, second = 0;
    for (double x : lp) {
      const long double p = std::exp(static_cast<long double>(x));
      h -= p * x;
      second += p * static_cast<long double>(x) * x;
    }
    long double centered = 0;
    for (double x : lp) {
      const long double p = std::exp(static_cast<long double>(x));
      const long double dev = -static_cast<long double>(x) - h;
      centered += p * dev * dev;
    }
    const long double sigma = std::sqrt(centered);
    const long double sigma_raw = std::sqrt(std::max<long double>(0, second - h * h));
    const long double s = -static_cast<long double>(lp[actual]);
    const long double zz = sigma < 1e-9L ? 0 : (s - h) / sigma;

    const auto st = token_stats(full_from_logprobs(lp), actual, 1.5, 0, {});
    for (long double diff : {std::fabs(st.surprisal_nats - s), std::fabs(st.entropy_nats - h),
                             std::fabs(st.sigma_nats - sigma), std::fabs(st.z - zz)})
      worst = std::max(worst, diff);
    worst_forms = std::max(worst_forms, std::fabs(static_cast<long double>(st.sigma_nats) - sigma_raw));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  require(worst <= 1e-9L, fmt("max deviation from oracle %.3g > 1e-9", static_cast<double>(worst)));
  require(worst_forms <= 1e-9L, fmt("centered vs uncentered sigma differ by %.3g", static_cast<double>(worst_forms)));
  require(secs < 5.0, fmt("took %.2f s", secs));
  return fmt("1000 distributions, max dev %.2g, centered vs uncentered %.2g, %.2f s", static_cast<double>(worst),
             static_cast<double>(worst_forms), secs);
}

std::string closed_form() {
  for (std::size_t v : {2u, 3u, 7u, 10u, 100u, 1000u, 50257u}) {
    const auto st = token_stats(full_from_logprobs(std::vector<double>(v, -std::log(static_cast<double>(v)))),
                                static_cast<TokenId>(v / 2), 1.5, 0, {});
    require(std::fabs(st.entropy_nats - std::log(static_cast<double>(v))) <= 1e-12,
            fmt("uniform V=%.0f entropy off by %.3g", static_cast<double>(v), st.entropy_nats - std::log(double(v))));
    require(st.z == 0.0, fmt("uniform V=%.0f z = %.3g", static_cast<double>(v), st.z));
  }
  double worst = 0;
  for (int k = 0; k < 50; ++k) {
    const double p = 0.01 + 0.02 * k;  // 0.01 .. 0.99, skipping 0.5
    const std::vector<double> lp = {std::log(p), std::log1p(-p)};
    const auto d = full_from_logprobs(lp);
    const double z_p = token_stats(d, 0, 1.5, 0, {}).z;
    const double z_q = token_stats(d, 1, 1.5, 0, {}).z;
    // The rarer outcome r sits at +sqrt((1-r)/r), the likelier one at -sqrt(r/(1-r)).
    const double rare = std::min(p, 1 - p);
    const double want_rare = std::sqrt((1 - rare) / rare), want_common = -std::sqrt(rare / (1 - rare));
    const double got_rare = p < 0.5 ? z_p : z_q, got_common = p < 0.5 ? z_q : z_p;
    worst = std::max({worst, std::fabs(got_rare - want_rare), std::fabs(got_common - want_common)});
  }
  require(worst <= 1e-9, fmt("two-point z off by %.3g", worst));
  return fmt("uniform V up to 50257; two-point max dev %.2g over 50 p", worst);
}

// -------------------------------------------------------------------------
// Replay and aggregation

std::string replay_determinism() {
  for (const char* name : mt::kFixtureNames) {
    auto b = ReplayBackend::load(mt::fixture(name));
    const auto text = b->recordings().front().text();
    const auto first = to_canonical_json(analyze_document(text, *b, AnalysisOptions{}));
    auto fresh = ReplayBackend::load(mt::fixture(name));
    const auto second = to_canonical_json(analyze_document(text, *fresh, AnalysisOptions{}));
    require(first == second, std::string(name) + ": two runs differ");
    const std::string golden = std::string(MIRROR_GOLDEN_DIR) + "/" +
                               std::string(name).substr(0, std::string(name).find('.')) + ".analysis.json";
    require(std::filesystem::exists(golden), golden + " missing");
    require(first == mt::slurp(golden), std::string(name) + ": differs from golden file");
  }
  return "3 fixtures byte-identical across runs and to golden files";
}

std::string aggregation_conservation() {
  std::mt19937 rng(4242);
  const std::vector<std::string> words = {"Media", "coverage", "Agenda", "e.g.", "Dr.", "42", "x", "Fig.", "U.S."};
  const std::vector<std::string> seps = {" ", " ", " ", ". ", "! ", "? ", "\n", "\n\n", ".\n\n", ": "};
  double worst = 0;
  for (int doc = 0; doc < 200; ++doc) {
    std::string text;
    const int n = std::uniform_int_distribution<int>(1, 60)(rng);
    for (int i = 0; i < n; ++i) {
      text += words[rng() % words.size()];
      if (i + 1 < n) text += seps[rng() % seps.size()];
    }
    auto tok = WhitespaceTokenizer::from_texts({text}, {"<bos>"}, doc % 2 == 0);
    const std::size_t v = tok.vocab_size();
    std::mt19937 local(static_cast<unsigned>(doc));
    mt::ScriptedBackend b("fuzz", tok, doc % 3 ? std::optional<TokenId>(0) : std::nullopt,
                          [v, &local](std::span<const TokenId>, std::size_t t) {
                            std::vector<double> p(v);
                            for (auto& x : p) x = std::uniform_real_distribution<double>(0.001, 1)(local);
                            return mt::full_from_probs(p, t);
                          });
    const auto a = analyze_document(text, b);
    numeric::CompensatedSum total;
    for (const auto& s : a.stats) total.add(s.surprisal_nats);
    for (const auto& segs : {sentence_stats(a), paragraph_stats(a)}) {
      numeric::CompensatedSum recon;
      std::size_t cursor = 0, scored = 0;
      for (const auto& s : segs) {
        require(s.token_begin == cursor, "segments leave a gap or overlap in document " + std::to_string(doc));
        cursor = s.token_end;
        scored += s.scored_count;
        if (s.mean_surprisal_nats) recon.add(static_cast<double>(s.scored_count) * *s.mean_surprisal_nats);
      }
      require(cursor == a.tokens.size(), "segments do not reach the end of document " + std::to_string(doc));
      require(scored == a.stats.size(), "scored tokens not partitioned in document " + std::to_string(doc));
      worst = std::max(worst, std::fabs(recon.value() - total.value()));
    }
  }
  require(worst <= 1e-9, fmt("reconstruction off by %.3g", worst));
  return fmt("200 documents, max reconstruction error %.2g", worst);
}

// -------------------------------------------------------------------------
// Benchmarks

std::string cloze_harness() {
  const char* fields[] = {"psychology", "economics", "biology"};
  std::vector<ClozeItem> items;
  std::vector<std::string> all, gold;
  for (int i = 0; i < 30; ++i) {
    ClozeItem it{"Item " + std::to_string(i) + ": the effect was ", " overall.", {"positive", "negative"},
                 i % 3 == 0 ? 1 : 0, fields[i % 3], std::to_string(i)};
    for (const auto& c : it.candidates) all.push_back(it.text_before + c + it.text_after);
    gold.push_back(it.text_before + it.candidates[static_cast<std::size_t>(it.answer_index)] + it.text_after);
    items.push_back(it);
  }
  auto oracle = mt::gold_backend("oracle", all, gold, 0.95);
  auto anti = mt::gold_backend("anti", all, gold, 0.001);
  const double good = run_cloze(items, *oracle).overall.raw_accuracy;
  const double bad = run_cloze(items, *anti).overall.raw_accuracy;
  require(good == 1.0, fmt("oracle raw accuracy %.4f", good));
  require(bad == 0.0, fmt("anti-oracle raw accuracy %.4f", bad));

  std::vector<ClozeOutcome> o;
  for (int i = 0; i < 60; ++i) o.push_back({"f", "a", i < 48 ? "a" : "b", i < 48, false});
  for (int i = 0; i < 40; ++i) o.push_back({"f", "b", i < 20 ? "b" : "a", i < 20, false});
  const double raw = raw_accuracy(o), pc = prior_corrected_accuracy(o).value;
  require(raw == 0.68, fmt("raw %.17g != 0.68", raw));
  require(pc == 0.65, fmt("prior-corrected %.17g != 0.65", pc));

  std::size_t compared = 0;
  for (auto* backend : {oracle.get(), anti.get()}) {
    for (const auto& it : items) {
      ClozeItem sw = it;
      std::swap(sw.candidates[0], sw.candidates[1]);
      sw.answer_index = 1 - it.answer_index;
      const auto a = score_cloze_item(it, *backend), b = score_cloze_item(sw, *backend);
      require(a.tie || it.candidates[static_cast<std::size_t>(a.chosen)] ==
                           sw.candidates[static_cast<std::size_t>(b.chosen)],
              "swap changed the choice for item " + it.source_id);
      ++compared;
    }
  }
  return "oracle 1.0, anti-oracle 0.0, raw 0.68, corrected 0.65, " + std::to_string(compared) + " swaps stable";
}

std::string perplexity() {
  const std::vector<CorpusDocument> docs = {{"a", "cs", "one two three"},
                                            {"b", "cs", "four five"},
                                            {"c", "bio", "six seven eight nine"},
                                            {"d", "bio", "ten eleven"},
                                            {"e", "law", "twelve"}};
  std::vector<std::string> texts;
  for (const auto& d : docs) texts.push_back(d.text);
  auto a = mt::constant_nll_backend("a", texts, 2.0);
  auto b = mt::constant_nll_backend("b", texts, 1.5);
  const auto ab = perplexity_compare(docs, *a, *b);
  const auto ba = perplexity_compare(docs, *b, *a);
  require(ab.rows.size() == 3 && ab.excluded.empty(), "unexpected group count or exclusions");
  for (std::size_t i = 0; i < ab.rows.size(); ++i) {
    const auto& r = ab.rows[i];
    require(std::fabs(r.mean_delta - 0.5) <= 1e-12, r.group + fmt(": delta %.17g", r.mean_delta));
    require(std::fabs(r.ci95) <= 1e-12, r.group + fmt(": ci %.3g", r.ci95));
    require(ba.rows[i].mean_delta == -r.mean_delta && ba.rows[i].ci95 == r.ci95, r.group + ": not antisymmetric");
  }
  const double ppl = std::exp(mean_nll({1, 2, 3}));
  require(std::fabs(ppl - std::exp(2.0)) <= 1e-9, fmt("perplexity %.17g", ppl));
  return "3 groups at delta 0.5, ci 0, antisymmetric; ppl([1,2,3]) = e^2";
}

// -------------------------------------------------------------------------
// Memorization

std::string memorization() {
  const std::string text = "the cat sat on the mat";
  std::vector<std::string> pieces;
  for (const auto& s : WhitespaceTokenizer::from_texts({text}).tokenize(text)) pieces.push_back(s.text);
  auto all = mt::believer_backend("all", text, pieces);
  const auto tf_all = teacher_forced_overlay(text, *all);
  require(tf_all.match_fraction == 1.0, fmt("all-argmax fraction %.4f", tf_all.match_fraction));

  const std::string five = "!#$%&";
  WhitespaceTokenizer tok({"<bos>", "<end>", "!", "#", "$", "%", "&", "X", "Y"}, std::nullopt, true);
  mt::ScriptedBackend b("five", tok, TokenId{0}, [](std::span<const TokenId>, std::size_t t) {
    const TokenId believed[] = {2, 3, 7, 5, 8};
    return mt::peaked(9, t < 5 ? believed[t] : 1, 0.7, t);
  });
  const auto r = teacher_forced_overlay(five, b);
  require(r.matches == std::vector<bool>{true, true, false, true, false}, "five-token pattern mismatch");
  require(r.match_fraction == 0.6, fmt("fraction %.17g", r.match_fraction));
  require(r.longest_match_run == 2, "longest run " + std::to_string(r.longest_match_run));

  const std::string sentence = "one two three four five";
  auto partial = mt::believer_backend("partial", sentence, {"one", " ", "two", " ", "six", " ", "four", " ", "nine"});
  const auto tf = teacher_forced_overlay(sentence, *partial);
  for (std::size_t prefix = 1; prefix < 9; ++prefix) {
    const auto fr = freerun_match(sentence, *partial, prefix);
    const auto it = std::find(tf.positions.begin(), tf.positions.end(), prefix);
    require(it != tf.positions.end() && !fr.matches.empty(), "boundary position missing");
    const auto idx = static_cast<std::size_t>(it - tf.positions.begin());
    require(fr.matches.front() == tf.matches[idx] && fr.predicted.front() == tf.predicted[idx],
            "free-run and teacher-forced disagree at prefix " + std::to_string(prefix));
  }
  return "all-argmax 1.0; [1,1,0,1,0] -> 0.6, run 2; boundary agrees for 8 prefixes";
}

// -------------------------------------------------------------------------
// Service

std::map<std::string, std::shared_ptr<Backend>> fixture_backends() {
  std::map<std::string, std::shared_ptr<Backend>> out;
  for (const char* name : mt::kFixtureNames) {
    std::shared_ptr<Backend> b = ReplayBackend::load(mt::fixture(name));
    out.emplace(b->descriptor().backend_id, b);
  }
  return out;
}

std::string service_equivalence() {
  mt::TempDir dir("mirror-acceptance");
  ServiceConfig cfg;
  cfg.data_dir = dir.path() / "data";
  std::map<std::string, std::string> ids;
  {
    Service svc(cfg, fixture_backends());
    for (const char* name : mt::kFixtureNames) {
      auto replay = ReplayBackend::load(mt::fixture(name));
      const auto backend_id = replay->descriptor().backend_id;
      const auto text = replay->recordings().front().text();
      const auto sub = svc.submit_analysis(text, backend_id);
      const auto run = svc.wait_for(sub.run_id);
      require(run && run->status == RunStatus::Done, std::string(name) + ": run did not finish");
      AnalysisOptions opts = svc.default_options();
      opts.created_at = run->created_at;
      require(*run->result == to_canonical_json(analyze_document(text, *replay, opts)),
              std::string(name) + ": Done payload differs from direct analysis");
      const auto again = svc.submit_analysis(text, backend_id);
      require(again.run_id == sub.run_id && !again.created, std::string(name) + ": resubmission not idempotent");
      ids[sub.run_id] = Service::run_to_json(*run);
    }
  }
  Service restarted(cfg, fixture_backends());
  for (const auto& [id, bytes] : ids) {
    const auto run = restarted.get_run(id);
    require(run && Service::run_to_json(*run) == bytes, "run " + id + " lost or changed across restart");
  }
  return "3 fixtures byte-identical, idempotent, restored after restart";
}

// -------------------------------------------------------------------------
// Optional: a real causal LM behind the HTTP adapter.

std::size_t token_at_byte(const std::vector<TokenSpan>& spans, std::size_t byte) {
  for (std::size_t i = 0; i < spans.size(); ++i)
    if (spans[i].byte_start <= byte && byte < spans[i].byte_end) return i;
  throw Failure{"no token covers byte " + std::to_string(byte)};
}

std::string typo_integration() {
  const char* cfg_path = std::getenv("MIRROR_LM_CONFIG");
  const char* backend_id = std::getenv("MIRROR_LM_BACKEND");
  if (!cfg_path || !backend_id) throw Skip{"set MIRROR_LM_CONFIG and MIRROR_LM_BACKEND to run"};
  const auto cfg = load_config(cfg_path);
  auto backends = Service::build_backends(cfg);
  auto it = backends.find(backend_id);
  require(it != backends.end(), std::string("backend ") + backend_id + " not in config");
  const std::string clean = "The committee approved the budget for the coming year.";
  const std::string typo = "The committee approved the budgte for the coming year.";
  const std::size_t at = clean.find("budget");
  auto surprisal_at = [&](const std::string& text) {
    const auto a = analyze_document(text, *it->second);
    const auto* s = a.stats_at(token_at_byte(a.tokens, at));
    require(s != nullptr, "token at the typo is unscored");
    return s->surprisal_nats;
  };
  const double c = surprisal_at(clean), t = surprisal_at(typo);
  require(t > c, fmt("typo surprisal %.4f not above clean %.4f", t, c));
  return fmt("clean %.3f nats, typo %.3f nats", c, t);
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<std::string()> run;
    bool gating;
  };
  const std::vector<Criterion> criteria = {
      {"statistics-oracle", statistics_oracle, true},
      {"closed-form", closed_form, true},
      {"replay-determinism", replay_determinism, true},
      {"aggregation-conservation", aggregation_conservation, true},
      {"cloze-harness", cloze_harness, true},
      {"perplexity-comparison", perplexity, true},
      {"memorization-probe", memorization, true},
      {"service-equivalence", service_equivalence, true},
      {"typo-integration (optional)", typo_integration, false},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    try {
      const auto detail = c.run();
      std::printf("PASS %s: %s\n", c.name, detail.c_str());
    } catch (const Skip& s) {
      std::printf("SKIP %s: %s\n", c.name, s.why.c_str());
    } catch (const Failure& f) {
      std::printf("FAIL %s: %s\n", c.name, f.what.c_str());
      if (c.gating) ++failures;
    } catch (const std::exception& e) {
      std::printf("FAIL %s: exception: %s\n", c.name, e.what());
      if (c.gating) ++failures;
    }
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
