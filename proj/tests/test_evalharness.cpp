#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "dslr/error.hpp"
#include "dslr/evalharness.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace dslr;
using dslr::testing::fixture;
using dslr::testing::LoopbackServer;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no dslr::Error thrown");
  return ErrorCode::kInternal;
}

struct Fixture {
  CorpusIndex index = CorpusIndex::build(read_corpus_jsonl(fixture("corpus20.jsonl")));
  Segmenter segmenter;
  MockScorer scorer = MockScorer::from_file(fixture("scorer_table.json"));
  MockScorer failing = MockScorer::from_file(fixture("scorer_table_fail.json"));
  MockReader reader = MockReader::from_file(fixture("reader_table.json"));
  WhitespaceTokenizer tokenizer;
  std::vector<QaExample> dataset = load_dataset_jsonl(fixture("dataset10.jsonl"));

  Pipeline pipeline(const Scorer& s) const { return Pipeline{index, segmenter, s, &reader, tokenizer}; }
  Pipeline pipeline() const { return pipeline(scorer); }
};

RefineConfig dslr_at(double t) {
  RefineConfig c;
  c.threshold = t;
  return c;
}

RefineConfig passage() {
  RefineConfig c;
  c.mode = Mode::kPassage;
  return c;
}

EvalOptions quiet(std::size_t workers = 1) {
  EvalOptions o;
  o.timing = Timing::kNone;
  o.workers = workers;
  o.keep_contexts = true;
  return o;
}

// ASCII only: the oracle normalizer does not fold Unicode.
std::string random_text(std::mt19937_64& rng) {
  static const std::vector<std::string> pieces = {"Oxygen", "oxygen!", "U.S.A.", "13",   "episodes", " ",
                                                  "  ",     ",",       "Nitro",  "gen", "-",        "van Rossum",
                                                  "\t",     "(O)",     "8,849",  "8 849"};
  std::string s;
  const std::size_t n = rng() % 8;
  for (std::size_t i = 0; i < n; ++i) s += pieces[rng() % pieces.size()];
  return s;
}

}  // namespace

TEST_CASE("normalize examples") {
  CHECK(normalize("The answer is: Oxygen!") == "the answer is oxygen");
  CHECK(normalize("") == "");
  CHECK(normalize("U.S.A.") == "u s a");
  CHECK(normalize("  8,849\tmetres ") == "8 849 metres");
  CHECK(normalize("ÉTÉ") == "été");
}

TEST_CASE("accuracy_contains examples") {
  const std::vector<std::string> oxygen{"Oxygen"};
  CHECK(accuracy_contains("Oxygen is the most abundant", oxygen));
  CHECK(accuracy_contains("Oxygen", oxygen));
  CHECK_FALSE(accuracy_contains("Nitrogen", oxygen));
  CHECK(accuracy_contains("oxygen (O)", oxygen));
  const std::vector<std::string> blank{"!!", ""};
  CHECK_FALSE(accuracy_contains("anything", blank));
  CHECK_FALSE(accuracy_contains("", oxygen));
}

TEST_CASE("hit_rate examples") {
  RefinedContext ctx;
  ctx.rendered = "[1] Harbour Lights\nThe series ran for 13 episodes.";
  const std::vector<std::string> thirteen{"13"};
  CHECK(hit_rate(ctx, thirteen));
  const RefinedContext empty;
  CHECK_FALSE(hit_rate(empty, thirteen));
}

TEST_CASE("containment matches the brute-force oracle") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 3000; ++trial) {
    const auto hay = random_text(rng);
    std::vector<std::string> answers(1 + rng() % 3);
    for (auto& a : answers) a = random_text(rng);
    const bool expected = oracle::contains_any(hay, answers);
    REQUIRE(accuracy_contains(hay, answers) == expected);
    RefinedContext ctx;
    ctx.rendered = hay;
    REQUIRE(hit_rate(ctx, answers) == expected);
  }
}

TEST_CASE("whitespace token counts") {
  CHECK(count_tokens("a b  c") == 3);
  CHECK(count_tokens("") == 0);
  CHECK(count_tokens(" \n\t ") == 0);
  CHECK(count_tokens("one") == 1);
}

TEST_CASE("remote tokenizer echoes the service count") {
  LoopbackServer server([](httplib::Server& s) {
    s.Post("/tokenize", [](const httplib::Request& req, httplib::Response& res) {
      const auto text = nlohmann::json::parse(req.body).at("text").get<std::string>();
      if (text == "bad") {
        res.set_content(R"({"n": 1})", "application/json");
        return;
      }
      // Byte count stands in for a subword tokenizer.
      res.set_content(nlohmann::json{{"count", text.size()}}.dump(), "application/json");
    });
  });
  TokenizerConfig c;
  c.kind = TokenizerKind::kRemote;
  c.endpoint = server.url();
  CHECK(count_tokens("Oxygen is abundant", c) == 18);
  CHECK(count_tokens("", c) == 0);
  CHECK(code_of([&] { count_tokens("bad", c); }) == ErrorCode::kRemoteMalformed);
  TokenizerConfig none;
  none.kind = TokenizerKind::kRemote;
  CHECK(code_of([&] { make_tokenizer(none); }) == ErrorCode::kRemoteUnavailable);
  CHECK(parse_tokenizer_kind("whitespace") == TokenizerKind::kWhitespace);
  CHECK(code_of([] { parse_tokenizer_kind("bpe"); }) == ErrorCode::kConfig);
}

TEST_CASE("dataset parsing") {
  const auto ok = parse_dataset_jsonl("{\"id\":\"a\",\"question\":\"q?\",\"answers\":[\"x\",\"y\"]}\n\n"
                                      "{\"id\":7,\"question\":\"r?\",\"answers\":[\"z\"]}\n");
  REQUIRE(ok.size() == 2);
  CHECK(ok[0].answers == std::vector<std::string>{"x", "y"});
  CHECK(ok[1].id == "7");

  auto message_of = [](std::string_view content) {
    try {
      parse_dataset_jsonl(content);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kParse);
      return std::string(e.what());
    }
    return std::string("no error");
  };
  const std::string good = "{\"id\":\"a\",\"question\":\"q\",\"answers\":[\"x\"]}\n";
  CHECK(message_of(good + "{oops\n").find("line 2") != std::string::npos);
  CHECK(message_of(good + good + "{\"id\":\"b\",\"question\":\"q\",\"answers\":[]}").find("line 3") !=
        std::string::npos);
  CHECK(message_of("{\"id\":\"b\",\"question\":\"\",\"answers\":[\"x\"]}").find("line 1") != std::string::npos);
  CHECK(message_of("{\"id\":\"b\",\"answers\":[\"x\"]}").find("line 1") != std::string::npos);
}

TEST_CASE("fixture run: refined context beats the distracted baseline") {
  const Fixture f;
  const auto refined = run_eval(f.pipeline(), f.dataset, dslr_at(0.5), quiet());
  const auto base = run_eval(f.pipeline(), f.dataset, passage(), quiet());
  CHECK(refined.report.n_queries == 10);
  CHECK(refined.report.n_errors == 0);
  CHECK(refined.report.accuracy == 0.9);
  CHECK(refined.report.avg_tokens == doctest::Approx(15.1).epsilon(1e-12));
  CHECK(base.report.accuracy == 0.9);
  CHECK(base.report.avg_tokens == doctest::Approx(53.1).epsilon(1e-12));

  CHECK(refined.records[0].query_id == "q01");
  CHECK(refined.records[0].prediction == "Oxygen");
  CHECK(refined.records[0].correct);
  CHECK(base.records[0].prediction == "Nitrogen");
  CHECK_FALSE(base.records[0].correct);
  CHECK(base.records[0].hit);

  for (std::size_t i = 0; i < f.dataset.size(); ++i) {
    CHECK(refined.records[i].context_tokens <= base.records[i].context_tokens);
    CHECK(refined.records[i].query_id == f.dataset[i].id);
  }
}

TEST_CASE("no-op refinement equals the passage baseline") {
  const Fixture f;
  const auto identity = run_eval(f.pipeline(), f.dataset, dslr_at(-kInf), quiet());
  const auto base = run_eval(f.pipeline(), f.dataset, passage(), quiet());
  CHECK(identity.report.accuracy == base.report.accuracy);
  CHECK(identity.report.avg_tokens == base.report.avg_tokens);
  for (std::size_t i = 0; i < f.dataset.size(); ++i) {
    REQUIRE(identity.contexts[i]);
    CHECK(identity.contexts[i]->rendered == base.contexts[i]->rendered);
    CHECK(identity.records[i].prediction == base.records[i].prediction);
  }
}

TEST_CASE("report averages recompute from the records") {
  const Fixture f;
  for (double t : {-kInf, 0.05, 0.5, 0.9, kInf}) {
    const auto run = run_eval(f.pipeline(f.failing), f.dataset, dslr_at(t), quiet());
    double correct = 0, hits = 0, tokens = 0;
    std::size_t ok = 0, errors = 0;
    for (const auto& r : run.records) {
      if (r.error) {
        ++errors;
        continue;
      }
      ++ok;
      correct += r.correct;
      hits += r.hit;
      tokens += static_cast<double>(r.context_tokens);
    }
    CHECK(run.report.n_queries == ok);
    CHECK(run.report.n_errors == errors);
    CHECK(run.report.accuracy == correct / static_cast<double>(ok));
    CHECK(run.report.hit_rate == hits / static_cast<double>(ok));
    CHECK(run.report.avg_tokens == tokens / static_cast<double>(ok));
    CHECK(run.report.failure_rate == static_cast<double>(errors) / 10.0);
    CHECK(run.report.accuracy >= 0.0);
    CHECK(run.report.accuracy <= 1.0);
  }
}

TEST_CASE("an injected scorer failure is isolated to its query") {
  const Fixture f;
  const auto run = run_eval(f.pipeline(f.failing), f.dataset, dslr_at(0.5), quiet());
  REQUIRE(run.records.size() == 10);
  std::size_t failed = 0;
  for (const auto& r : run.records) {
    if (!r.error) continue;
    ++failed;
    CHECK(r.query_id == "q03");
    CHECK(r.error_kind == std::string("RemoteUnavailable"));
    const auto j = to_json(r);
    CHECK(j.contains("error"));
    CHECK_FALSE(j.contains("prediction"));
  }
  CHECK(failed == 1);
  CHECK(run.report.n_queries == 9);
  CHECK(run.report.failure_rate == doctest::Approx(0.1));
  CHECK(above_failure_ceiling(run.report, 0.05));
  CHECK_FALSE(above_failure_ceiling(run.report, 0.1));

  const auto clean = run_eval(f.pipeline(), f.dataset, dslr_at(0.5), quiet());
  for (std::size_t i = 0; i < 10; ++i) {
    if (run.records[i].error) continue;
    CHECK(to_json(run.records[i]) == to_json(clean.records[i]));
  }
}

TEST_CASE("worker count does not change results") {
  const Fixture f;
  const auto one = run_eval(f.pipeline(), f.dataset, dslr_at(0.5), quiet(1));
  for (std::size_t w : {2u, 3u, 8u, 32u}) {
    const auto many = run_eval(f.pipeline(), f.dataset, dslr_at(0.5), quiet(w));
    REQUIRE(many.records.size() == one.records.size());
    for (std::size_t i = 0; i < one.records.size(); ++i) CHECK(to_json(many.records[i]) == to_json(one.records[i]));
    CHECK(to_json(many.report) == to_json(one.report));
  }
}

TEST_CASE("wall timings cover every stage") {
  const Fixture f;
  EvalOptions o;
  o.timing = Timing::kWall;
  const auto run = run_eval(f.pipeline(), f.dataset, dslr_at(0.5), o);
  for (const auto& r : run.records) {
    REQUIRE(r.breakdown.size() == 5);
    double top = 0.0;
    for (const auto& [stage, ms] : r.breakdown) {
      CHECK(ms >= 0.0);
      top = std::max(top, ms);
    }
    CHECK(r.e2e_latency_ms >= top);
  }
  CHECK(run.report.avg_e2e_ms >= 0.0);
}

TEST_CASE("configuration errors stop the run before any query") {
  const Fixture f;
  RefineConfig c;
  c.mode = Mode::kRandom;
  CHECK(code_of([&] { run_eval(f.pipeline(), f.dataset, c, quiet()); }) == ErrorCode::kConfig);
  CHECK(code_of([&] { run_eval(f.pipeline(), f.dataset, dslr_at(0.5), quiet(0)); }) == ErrorCode::kConfig);
}

TEST_CASE("refine-only pipelines skip generation") {
  const Fixture f;
  Pipeline p = f.pipeline();
  p.reader = nullptr;
  const auto run = run_eval(p, f.dataset, dslr_at(0.5), quiet());
  for (const auto& r : run.records) {
    CHECK(r.prediction.empty());
    CHECK_FALSE(r.correct);
  }
  CHECK(run.report.hit_rate > 0.0);
}

TEST_CASE("json number helpers") {
  CHECK(json_number(kInf) == "inf");
  CHECK(json_number(-kInf) == "-inf");
  CHECK(json_number(0.25) == 0.25);
  CHECK(json_to_double("inf") == kInf);
  CHECK(json_to_double("-inf") == -kInf);
  CHECK(json_to_double(3) == 3.0);
  CHECK(code_of([] { json_to_double("fast"); }) == ErrorCode::kParse);
}

TEST_CASE("aggregate of an all-failed run") {
  std::vector<EvalRecord> recs(3);
  for (auto& r : recs) r.error = "boom";
  const auto rep = aggregate(recs, "fp");
  CHECK(rep.n_queries == 0);
  CHECK(rep.n_errors == 3);
  CHECK(rep.failure_rate == 1.0);
  CHECK(rep.accuracy == 0.0);
  CHECK(rep.config_fingerprint == "fp");
  CHECK(aggregate({}).failure_rate == 0.0);
}
