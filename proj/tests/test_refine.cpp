#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "dslr/error.hpp"
#include "dslr/refine.hpp"
#include "dslr/text.hpp"
#include "refine_fixtures.hpp"

using namespace dslr;
using dslr::testing::as_retrieval;
using dslr::testing::sentence_scores;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

const Segmenter& segmenter() {
  static const Segmenter s;
  return s;
}

const WhitespaceTokenizer& tokenizer() {
  static const WhitespaceTokenizer t;
  return t;
}

RefineEnv env() { return RefineEnv{segmenter(), tokenizer()}; }

RefineConfig config(Mode mode, double threshold = -kInf, std::size_t top_n = 1) {
  RefineConfig c;
  c.mode = mode;
  c.threshold = threshold;
  c.top_n_docs = top_n;
  if (mode_needs_seed(mode)) c.seed = 17;
  return c;
}

std::vector<std::string> kept_texts(const RefinedContext& ctx) {
  std::vector<std::string> out;
  for (const auto& b : ctx.per_doc)
    for (const auto& s : b.kept) out.push_back(s.sentence.text);
  return out;
}

std::multiset<std::string> kept_set(const RefinedContext& ctx) {
  const auto v = kept_texts(ctx);
  return {v.begin(), v.end()};
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kInternal;
}

const PassageDoc kWorked{"gf", "Grace and Frankie",
                         "Grace and Frankie is an American comedy series created by Marta Kauffman and Howard J. "
                         "Morris. The series stars Jane Fonda and Lily Tomlin. It premiered in 2015 and the first "
                         "season has 13 episodes."};

const PassageDoc kTea{"tea", "Tea",
                      "Tea is a drink. It comes from China. Tea is made from leaves of Camellia sinensis. "
                      "Many people drink it daily."};

MockScorer tea_scores() {
  return sentence_scores({{"Tea is a drink.", 0.9},
                          {"It comes from China.", 0.2},
                          {"Tea is made from leaves of Camellia sinensis.", 0.7},
                          {"Many people drink it daily.", 0.8}});
}

std::vector<PassageDoc> five_docs() {
  return {{"a", "Alpha", "A1 one. A2 two. A3 three."},
          {"b", "Beta", "B1 one. B2 two."},
          {"g", "Gamma", "G1 one."},
          {"d", "Delta", "D1 one. D2 two. D3 three."},
          {"e", "Epsilon", "E1 one. E2 two."}};
}

MockScorer five_scores() {
  return sentence_scores({{"A1 one.", 0.9},
                          {"A2 two.", 0.1},
                          {"A3 three.", 0.6},
                          {"B1 one.", 0.2},
                          {"B2 two.", 0.3},
                          {"G1 one.", 0.5},
                          {"D1 one.", 0.7},
                          {"D2 two.", 0.8},
                          {"D3 three.", 0.4},
                          {"E1 one.", 0.55},
                          {"E2 two.", 0.95}});
}

}  // namespace

TEST_CASE("mode names round-trip") {
  for (auto m : {Mode::kDslr, Mode::kDescend, Mode::kAscend, Mode::kRandom, Mode::kPassage, Mode::kFixedTrunc,
                 Mode::kFixedSent, Mode::kFixedRand, Mode::kNoRerank})
    CHECK(parse_mode(to_string(m)) == m);
  CHECK(code_of([] { parse_mode("bogus"); }) == ErrorCode::kConfig);
}

TEST_CASE("config validation") {
  RefineConfig c;
  CHECK_NOTHROW(c.validate());
  c.mode = Mode::kRandom;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kConfig);
  c.seed = 1;
  CHECK_NOTHROW(c.validate());
  c.mode = Mode::kFixedSent;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kConfig);
  c.budget_tokens = 10;
  CHECK_NOTHROW(c.validate());
  c.mode = Mode::kDslr;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kConfig);
  c.budget_tokens.reset();
  c.top_n_docs = 0;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kConfig);
}

TEST_CASE("filter_sentences") {
  const auto set = segmenter().decompose_set(std::vector<PassageDoc>{kWorked});
  std::vector<ScoredSentence> scored;
  const double s[] = {0.7, 0.8, 0.1};
  for (std::size_t i = 0; i < 3; ++i) scored.push_back({set.sentences[i], s[i], 0});
  assign_ranks(scored);
  const auto kept = filter_sentences(scored, 0.5);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].sentence.position == 0);
  CHECK(kept[1].sentence.position == 1);
  CHECK(filter_sentences(scored, -kInf).size() == 3);
  CHECK(filter_sentences(scored, kInf).empty());
  CHECK(filter_sentences(scored, 0.8).size() == 1);
  CHECK(filter_sentences(scored, 0.8, true).empty());
}

TEST_CASE("ranks follow score then document rank then position") {
  const std::vector<PassageDoc> docs = {{"x", "X", "P0 a. P1 b."}, {"y", "Y", "Q0 c. Q1 d."}};
  const auto set = segmenter().decompose_set(docs);
  std::vector<ScoredSentence> scored;
  const double s[] = {0.5, 0.9, 0.9, 0.5};
  for (std::size_t i = 0; i < 4; ++i) scored.push_back({set.sentences[i], s[i], 0});
  assign_ranks(scored);
  CHECK(scored[1].rank == 0);
  CHECK(scored[2].rank == 1);
  CHECK(scored[0].rank == 2);
  CHECK(scored[3].rank == 3);
}

TEST_CASE("reconstruct restores original order") {
  const std::vector<PassageDoc> docs = {kWorked};
  const auto set = segmenter().decompose_set(docs);
  REQUIRE(set.sentences.size() == 3);
  // Kept in score order: s2 then s1.
  const std::vector<ScoredSentence> kept = {{set.sentences[1], 0.9, 0}, {set.sentences[0], 0.7, 1}};
  const auto ctx = reconstruct(kept, set, docs, tokenizer());
  CHECK(ctx.rendered == "[1] Grace and Frankie\n" + set.sentences[0].text + " " + set.sentences[1].text);
  CHECK(ctx.kept_count == 2);
  CHECK(ctx.dropped_count == 1);
  CHECK(ctx.token_count == text::count_whitespace_tokens(ctx.rendered));
}

TEST_CASE("reconstruct of everything equals the space-joined original") {
  const std::vector<PassageDoc> docs = {kWorked};
  const auto set = segmenter().decompose_set(docs);
  std::vector<ScoredSentence> all;
  for (const auto& s : set.sentences) all.push_back({s, 0, 0});
  const auto ctx = reconstruct(all, set, docs, tokenizer());
  CHECK(ctx.rendered == render_baseline(docs));
}

TEST_CASE("reconstruct of nothing leaves the headers") {
  const auto docs = five_docs();
  const auto set = segmenter().decompose_set(docs);
  const auto ctx = reconstruct({}, set, docs, tokenizer());
  CHECK(ctx.rendered == "[1] Alpha\n\n[2] Beta\n\n[3] Gamma\n\n[4] Delta\n\n[5] Epsilon");
  CHECK(ctx.token_count == 10);
  CHECK(ctx.kept_count == 0);
  CHECK(ctx.dropped_count == 11);
}

TEST_CASE("reconstruct rejects unknown and duplicate sentences") {
  const std::vector<PassageDoc> docs = {kWorked};
  const auto set = segmenter().decompose_set(docs);
  auto foreign = set.sentences[0];
  foreign.text = "Not in the passage.";
  const std::vector<ScoredSentence> bad = {{foreign, 1, 0}};
  CHECK(code_of([&] { reconstruct(bad, set, docs, tokenizer()); }) == ErrorCode::kUnknownSentence);
  auto moved = set.sentences[0];
  moved.position = 9;
  const std::vector<ScoredSentence> bad2 = {{moved, 1, 0}};
  CHECK(code_of([&] { reconstruct(bad2, set, docs, tokenizer()); }) == ErrorCode::kUnknownSentence);
  const std::vector<ScoredSentence> twice = {{set.sentences[0], 1, 0}, {set.sentences[0], 1, 0}};
  CHECK(code_of([&] { reconstruct(twice, set, docs, tokenizer()); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("dslr on the worked example keeps two sentences in original order") {
  const auto set = segmenter().decompose_text(kWorked.text);
  const auto scorer = sentence_scores({{set[0].text, 0.7}, {set[1].text, 0.9}, {set[2].text, 0.1}});
  const auto ctx = refine_dslr("who stars in it", as_retrieval({kWorked}), scorer, config(Mode::kDslr, 0.5), env());
  CHECK(kept_texts(ctx) == std::vector<std::string>{set[0].text, set[1].text});
  CHECK(ctx.per_doc[0].kept[0].rank == 1);
  CHECK(ctx.per_doc[0].kept[1].rank == 0);
  CHECK(ctx.threshold_used == 0.5);
  CHECK(ctx.scored);
}

TEST_CASE("dslr with threshold -inf is the baseline rendering") {
  const LexicalScorer lex;
  for (std::size_t n = 1; n <= 5; ++n) {
    const auto docs = five_docs();
    const auto ctx = refine_dslr("one two", as_retrieval(docs), lex, config(Mode::kDslr, -kInf, n), env());
    const std::vector<PassageDoc> top(docs.begin(), docs.begin() + static_cast<std::ptrdiff_t>(n));
    CHECK(ctx.rendered == render_baseline(top));
    const auto base = refine_passage("one two", as_retrieval(docs), lex, config(Mode::kPassage, -kInf, n), env());
    CHECK(ctx.rendered == base.rendered);
    CHECK(ctx.token_count == base.token_count);
  }
  // Irregular whitespace inside the passage is collapsed on both routes.
  const std::vector<PassageDoc> messy = {{"m", "  Messy   title ", "First  one.\n\nSecond\tone.  "}};
  const auto ctx = refine_dslr("q", as_retrieval(messy), lex, config(Mode::kDslr), env());
  CHECK(ctx.rendered == "[1] Messy title\nFirst one. Second one.");
  CHECK(ctx.rendered == render_baseline(messy));
}

TEST_CASE("hand-traced 5-document golden") {
  const auto scorer = five_scores();
  const auto ctx = refine_dslr("q", as_retrieval(five_docs()), scorer, config(Mode::kDslr, 0.5, 5), env());
  CHECK(ctx.rendered ==
        "[1] Alpha\nA1 one. A3 three.\n\n[2] Beta\n\n[3] Gamma\nG1 one.\n\n[4] Delta\nD1 one. D2 two.\n\n"
        "[5] Epsilon\nE1 one. E2 two.");
  CHECK(ctx.token_count == 24);
  CHECK(ctx.kept_count == 7);
  CHECK(ctx.dropped_count == 4);

  auto strict = config(Mode::kDslr, 0.5, 5);
  strict.strict = true;
  const auto s = refine_dslr("q", as_retrieval(five_docs()), scorer, strict, env());
  CHECK(s.rendered ==
        "[1] Alpha\nA1 one. A3 three.\n\n[2] Beta\n\n[3] Gamma\n\n[4] Delta\nD1 one. D2 two.\n\n"
        "[5] Epsilon\nE1 one. E2 two.");
}

TEST_CASE("descend, ascend and random reorder the dslr kept set") {
  const auto scorer = five_scores();
  const auto docs = as_retrieval(five_docs());
  const auto dslr = refine("q", docs, scorer, config(Mode::kDslr, 0.5, 5), env());
  const auto desc = refine("q", docs, scorer, config(Mode::kDescend, 0.5, 5), env());
  const auto asc = refine("q", docs, scorer, config(Mode::kAscend, 0.5, 5), env());
  const auto rnd = refine("q", docs, scorer, config(Mode::kRandom, 0.5, 5), env());
  CHECK(desc.rendered ==
        "[1] Alpha\nA1 one. A3 three.\n\n[2] Beta\n\n[3] Gamma\nG1 one.\n\n[4] Delta\nD2 two. D1 one.\n\n"
        "[5] Epsilon\nE2 two. E1 one.");
  CHECK(asc.rendered ==
        "[1] Alpha\nA3 three. A1 one.\n\n[2] Beta\n\n[3] Gamma\nG1 one.\n\n[4] Delta\nD1 one. D2 two.\n\n"
        "[5] Epsilon\nE1 one. E2 two.");
  for (const auto* v : {&desc, &asc, &rnd}) {
    CHECK(kept_set(*v) == kept_set(dslr));
    CHECK(v->token_count == dslr.token_count);
    CHECK(v->kept_count == dslr.kept_count);
  }
  const auto again = refine("q", docs, scorer, config(Mode::kRandom, 0.5, 5), env());
  CHECK(again.rendered == rnd.rendered);
}

TEST_CASE("descend on two kept sentences") {
  const PassageDoc doc{"x", "X", "First sentence here. Second sentence here."};
  const auto scorer = sentence_scores({{"First sentence here.", 0.3}, {"Second sentence here.", 0.9}});
  const auto ctx = refine("q", as_retrieval({doc}), scorer, config(Mode::kDescend), env());
  CHECK(kept_texts(ctx) == std::vector<std::string>{"Second sentence here.", "First sentence here."});
}

TEST_CASE("random mode depends on seed and query id") {
  std::vector<PassageDoc> docs = {{"x", "X", ""}};
  std::vector<std::pair<std::string, double>> scores;
  for (int i = 0; i < 12; ++i) {
    const auto s = "Sentence number " + std::to_string(i) + ".";
    docs[0].text += s + " ";
    scores.emplace_back(s, 1.0);
  }
  const auto scorer = sentence_scores(scores);
  auto c = config(Mode::kRandom);
  const auto a = refine("q", as_retrieval(docs, "q1"), scorer, c, env()).rendered;
  CHECK(refine("q", as_retrieval(docs, "q1"), scorer, c, env()).rendered == a);
  CHECK(refine("q", as_retrieval(docs, "q2"), scorer, c, env()).rendered != a);
  c.seed = 18;
  CHECK(refine("q", as_retrieval(docs, "q1"), scorer, c, env()).rendered != a);
}

TEST_CASE("no_rerank stays within the dslr token count") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const auto c = testing::random_case(rng);
    const auto scorer = sentence_scores(c.scores);
    const double t = static_cast<double>(rng() % 21) / 20.0;
    const auto docs = as_retrieval(c.docs, "q" + std::to_string(trial));
    const auto dslr = refine("q", docs, scorer, config(Mode::kDslr, t, c.docs.size()), env());
    const auto nr = refine("q", docs, scorer, config(Mode::kNoRerank, t, c.docs.size()), env());
    CHECK(nr.token_count <= dslr.token_count);
    CHECK(nr.kept_count + nr.dropped_count == c.sentence_count);
    for (const auto& b : nr.per_doc)
      for (std::size_t i = 1; i < b.kept.size(); ++i)
        CHECK(b.kept[i - 1].sentence.position < b.kept[i].sentence.position);
  }
}

TEST_CASE("no_rerank with everything kept keeps everything") {
  const LexicalScorer lex;
  const auto docs = as_retrieval(five_docs());
  const auto ctx = refine("one", docs, lex, config(Mode::kNoRerank, -kInf, 5), env());
  CHECK(ctx.rendered == render_baseline(five_docs()));
}

TEST_CASE("fixed budgets with slack return the whole document") {
  const auto scorer = tea_scores();
  const auto docs = as_retrieval({kTea});
  for (auto m : {Mode::kFixedTrunc, Mode::kFixedSent, Mode::kFixedRand}) {
    auto c = config(m);
    c.budget_tokens = 1000;
    const auto ctx = refine("tea", docs, scorer, c, env());
    CAPTURE(to_string(m));
    CHECK(ctx.rendered == render_baseline(std::vector<PassageDoc>{kTea}));
    CHECK(ctx.kept_count == 4);
  }
}

TEST_CASE("zero budget leaves headers only") {
  const auto scorer = tea_scores();
  const auto docs = as_retrieval({kTea});
  for (auto m : {Mode::kFixedTrunc, Mode::kFixedSent, Mode::kFixedRand}) {
    auto c = config(m);
    c.budget_tokens = 0;
    const auto ctx = refine("tea", docs, scorer, c, env());
    CHECK(ctx.rendered == "[1] Tea");
    CHECK(ctx.token_count == 2);
    CHECK(ctx.kept_count == 0);
  }
}

TEST_CASE("fixed_sent with a 12-token budget") {
  // Descending: "Tea is a drink." (4, 0.9), "Many people drink it daily." (5, 0.8),
  // then the 8-token sentence (0.7) would reach 17 > 12, so filling stops.
  const auto scorer = tea_scores();
  auto c = config(Mode::kFixedSent);
  c.budget_tokens = 12;
  const auto ctx = refine("tea", as_retrieval({kTea}), scorer, c, env());
  CHECK(ctx.rendered == "[1] Tea\nTea is a drink. Many people drink it daily.");
  CHECK(ctx.token_count == 11);
  CHECK(ctx.kept_count == 2);
  CHECK(ctx.dropped_count == 2);
  // Filling stops at the first overflow even when a later, shorter sentence would fit.
  c.budget_tokens = 13;
  CHECK(refine("tea", as_retrieval({kTea}), scorer, c, env()).kept_count == 2);
}

TEST_CASE("fixed_trunc cuts the body after budget tokens") {
  const auto scorer = tea_scores();
  auto c = config(Mode::kFixedTrunc);
  c.budget_tokens = 5;
  const auto ctx = refine("tea", as_retrieval({kTea}), scorer, c, env());
  CHECK(ctx.rendered == "[1] Tea\nTea is a drink. It");
  CHECK(ctx.kept_count == 1);
  CHECK_FALSE(ctx.scored);
}

TEST_CASE("fixed_rand respects the budget and original order") {
  const auto scorer = tea_scores();
  for (std::size_t budget = 0; budget <= 25; ++budget) {
    auto c = config(Mode::kFixedRand);
    c.budget_tokens = budget;
    const auto ctx = refine("tea", as_retrieval({kTea}), scorer, c, env());
    std::size_t body = 0;
    for (const auto& s : ctx.per_doc[0].kept) body += text::count_whitespace_tokens(s.sentence.text);
    CHECK(body <= budget);
    CHECK(ctx.token_count == body + 2);
    for (std::size_t i = 1; i < ctx.per_doc[0].kept.size(); ++i)
      CHECK(ctx.per_doc[0].kept[i - 1].sentence.position < ctx.per_doc[0].kept[i].sentence.position);
    CHECK(refine("tea", as_retrieval({kTea}), scorer, c, env()).rendered == ctx.rendered);
  }
}

TEST_CASE("rerank_passages follows the scorer") {
  auto docs = five_docs();
  MockScorer::Table t;
  // Inverts retrieval order.
  for (std::size_t i = 0; i < docs.size(); ++i) t.scores[{"*", docs[i].text}] = static_cast<double>(i);
  const MockScorer m(t);
  const auto r = rerank_passages("q", as_retrieval(docs), m, 3);
  REQUIRE(r.hits.size() == 3);
  CHECK(r.hits[0].doc.id == "e");
  CHECK(r.hits[1].doc.id == "d");
  CHECK(r.hits[2].doc.id == "g");
  const auto all = rerank_passages("q", as_retrieval(docs), m, 10);
  CHECK(all.hits.size() == 5);
  CHECK(all.hits[4].doc.id == "a");
  CHECK(code_of([&] { rerank_passages("q", as_retrieval(docs), m, 0); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("rerank_passages equals a score-and-sort oracle on 20 docs") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<PassageDoc> docs;
    MockScorer::Table t;
    std::vector<double> s;
    for (int i = 0; i < 20; ++i) {
      docs.push_back({"d" + std::to_string(i), "T", "Body " + std::to_string(i) + "."});
      s.push_back(static_cast<double>(rng() % 7));
      t.scores[{"*", docs.back().text}] = s.back();
    }
    const MockScorer m(t);
    const std::size_t k = 1 + rng() % 20;
    std::vector<std::size_t> idx(20);
    for (std::size_t i = 0; i < 20; ++i) idx[i] = i;
    // Insertion sort: stable by construction.
    for (std::size_t i = 1; i < idx.size(); ++i)
      for (std::size_t j = i; j > 0 && s[idx[j]] > s[idx[j - 1]]; --j) std::swap(idx[j], idx[j - 1]);
    const auto r = rerank_passages("q", as_retrieval(docs), m, k);
    REQUIRE(r.hits.size() == k);
    for (std::size_t i = 0; i < k; ++i) CHECK(r.hits[i].doc.id == docs[idx[i]].id);
  }
}

TEST_CASE("passage mode with rerank_m renders the re-ranked documents") {
  auto docs = five_docs();
  MockScorer::Table t;
  for (std::size_t i = 0; i < docs.size(); ++i) t.scores[{"*", docs[i].text}] = static_cast<double>(i);
  const MockScorer m(t);
  auto c = config(Mode::kPassage);
  c.rerank_m = 2;
  const auto ctx = refine("q", as_retrieval(docs), m, c, env());
  CHECK(ctx.rendered == "[1] Epsilon\nE1 one. E2 two.\n\n[2] Delta\nD1 one. D2 two. D3 three.");
  CHECK_FALSE(ctx.scored);
}

TEST_CASE("refinement depends only on the score vector, not the backend") {
  const auto docs = five_docs();
  const auto set = segmenter().decompose_set(docs);
  std::vector<double> scores;
  std::vector<std::pair<std::string, double>> table;
  std::mt19937_64 rng(3);
  for (const auto& s : set.sentences) {
    scores.push_back(static_cast<double>(rng() % 10) / 10.0);
    table.emplace_back(s.text, scores.back());
  }
  const auto mock = sentence_scores(table);
  const testing::VectorScorer vec(scores);
  for (auto m : {Mode::kDslr, Mode::kDescend, Mode::kAscend, Mode::kRandom, Mode::kNoRerank}) {
    const auto a = refine("q", as_retrieval(docs), mock, config(m, 0.4, 5), env());
    const auto b = refine("q", as_retrieval(docs), vec, config(m, 0.4, 5), env());
    CHECK(a.rendered == b.rendered);
    CHECK(kept_texts(a) == kept_texts(b));
  }
}

TEST_CASE("conservation and token accounting over random cases") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const auto c = testing::random_case(rng);
    const auto scorer = sentence_scores(c.scores);
    const double t = static_cast<double>(rng() % 21) / 20.0;
    for (auto m : {Mode::kDslr, Mode::kDescend, Mode::kAscend, Mode::kRandom, Mode::kPassage}) {
      const auto ctx = refine("q", as_retrieval(c.docs), scorer, config(m, t, c.docs.size()), env());
      CHECK(ctx.kept_count + ctx.dropped_count == c.sentence_count);
      CHECK(ctx.token_count == text::count_whitespace_tokens(ctx.rendered));
      CHECK(ctx.per_doc.size() == c.docs.size());
    }
  }
}

TEST_CASE("scorer failures propagate") {
  MockScorer::Table t;
  t.fail_queries.insert("boom");
  const MockScorer m(t);
  CHECK(code_of([&] { refine("boom", as_retrieval({kTea}), m, config(Mode::kDslr), env()); }) ==
        ErrorCode::kRemoteUnavailable);
}

TEST_CASE("stage timings are recorded when requested") {
  StageTimings timings;
  RefineEnv e{segmenter(), tokenizer(), 64, &timings};
  const LexicalScorer lex;
  refine("tea", as_retrieval({kTea}), lex, config(Mode::kDslr), e);
  CHECK(timings.decompose_ms >= 0.0);
  CHECK(timings.score_ms > 0.0);
}
