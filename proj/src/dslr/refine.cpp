#include "dslr/refine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "dslr/error.hpp"
#include "dslr/rng.hpp"
#include "dslr/text.hpp"

namespace dslr {

namespace {

constexpr std::pair<Mode, std::string_view> kModeNames[] = {
    {Mode::kDslr, "dslr"},           {Mode::kDescend, "descend"},       {Mode::kAscend, "ascend"},
    {Mode::kRandom, "random"},       {Mode::kPassage, "passage"},       {Mode::kFixedTrunc, "fixed_trunc"},
    {Mode::kFixedSent, "fixed_sent"}, {Mode::kFixedRand, "fixed_rand"}, {Mode::kNoRerank, "no_rerank"},
};

std::vector<PassageDoc> top_docs(const RetrievalResult& docs, std::size_t n) {
  std::vector<PassageDoc> out;
  for (std::size_t i = 0; i < docs.hits.size() && i < n; ++i) out.push_back(docs.hits[i].doc);
  return out;
}

std::string sentence_body(const std::vector<ScoredSentence>& kept) {
  std::string body;
  for (const auto& s : kept) {
    auto piece = text::collapse_whitespace(s.sentence.text);
    if (piece.empty()) continue;
    if (!body.empty()) body.push_back(' ');
    body += piece;
  }
  return body;
}

// Builds the context from per-document sentence lists already in render order.
RefinedContext assemble(Mode mode, std::vector<std::vector<ScoredSentence>> per_doc,
                        std::span<const PassageDoc> docs, std::size_t total_sentences,
                        const Tokenizer& tokenizer) {
  RefinedContext ctx;
  ctx.mode = mode;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    DocBlock block;
    block.doc_id = docs[d].id;
    block.title = docs[d].title;
    block.rank = d + 1;
    block.kept = std::move(per_doc[d]);
    block.body = sentence_body(block.kept);
    ctx.kept_count += block.kept.size();
    ctx.per_doc.push_back(std::move(block));
  }
  ctx.dropped_count = total_sentences - ctx.kept_count;
  ctx.rendered = render_blocks(ctx.per_doc);
  ctx.token_count = tokenizer.count(ctx.rendered);
  return ctx;
}

std::vector<std::vector<ScoredSentence>> group_by_doc(std::span<const ScoredSentence> sentences,
                                                      std::size_t n_docs) {
  std::vector<std::vector<ScoredSentence>> per_doc(n_docs);
  for (const auto& s : sentences) per_doc.at(s.sentence.doc_index).push_back(s);
  return per_doc;
}

void sort_by_position(std::vector<ScoredSentence>& v) {
  std::sort(v.begin(), v.end(),
            [](const auto& a, const auto& b) { return a.sentence.position < b.sentence.position; });
}

struct Prepared {
  std::vector<PassageDoc> docs;
  SentenceSet set;
  std::vector<ScoredSentence> scored;
};

Prepared prepare(std::string_view query, const RetrievalResult& retrieval, const Scorer* scorer,
                 const RefineConfig& config, const RefineEnv& env) {
  using Clock = std::chrono::steady_clock;
  auto ms_since = [](Clock::time_point t) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t).count();
  };
  Prepared p;
  auto t0 = Clock::now();
  p.docs = top_docs(retrieval, config.top_n_docs);
  p.set = env.segmenter.decompose_set(p.docs);
  if (env.timings) env.timings->decompose_ms += ms_since(t0);
  if (scorer != nullptr && !p.set.sentences.empty()) {
    t0 = Clock::now();
    p.scored = score_sentences(query, p.set, p.docs, *scorer, env.max_batch);
    if (env.timings) env.timings->score_ms += ms_since(t0);
  } else {
    for (std::size_t i = 0; i < p.set.sentences.size(); ++i) p.scored.push_back({p.set.sentences[i], 0.0, i});
  }
  return p;
}

std::uint64_t query_seed(const RefineConfig& config, const RetrievalResult& retrieval) {
  if (!config.seed) throw Error(ErrorCode::kConfig, std::string(to_string(config.mode)) + " mode requires a seed");
  return derive_seed(*config.seed, retrieval.query_id);
}

std::vector<std::size_t> token_weights(std::span<const ScoredSentence> sentences, const Tokenizer& tokenizer) {
  std::vector<std::size_t> w;
  w.reserve(sentences.size());
  for (const auto& s : sentences) w.push_back(tokenizer.count(text::collapse_whitespace(s.sentence.text)));
  return w;
}

// Greedy fill in the given order; stops at the first sentence that overflows.
std::vector<ScoredSentence> fill_budget(std::span<const ScoredSentence> sentences,
                                        const std::vector<std::size_t>& order, std::size_t budget,
                                        const Tokenizer& tokenizer) {
  std::vector<ScoredSentence> chosen;
  std::size_t used = 0;
  for (auto idx : order) {
    const auto w = tokenizer.count(text::collapse_whitespace(sentences[idx].sentence.text));
    if (used + w > budget) break;
    used += w;
    chosen.push_back(sentences[idx]);
  }
  return chosen;
}

// Indices (into `order`) of the subset with the largest total weight <= cap,
// preferring items that come earlier in `order`.
std::vector<std::size_t> closest_subset(const std::vector<std::size_t>& weights,
                                        const std::vector<std::size_t>& order, std::size_t cap) {
  const std::size_t m = order.size();
  // reach[i][c]: items order[i..m) can sum to exactly c.
  std::vector<std::vector<char>> reach(m + 1, std::vector<char>(cap + 1, 0));
  reach[m][0] = 1;
  for (std::size_t i = m; i-- > 0;) {
    const auto w = weights[order[i]];
    for (std::size_t c = 0; c <= cap; ++c)
      reach[i][c] = reach[i + 1][c] || (w <= c && reach[i + 1][c - w]);
  }
  std::size_t best = cap;
  while (best > 0 && !reach[0][best]) --best;
  std::vector<std::size_t> picked;
  std::size_t rem = best;
  for (std::size_t i = 0; i < m && rem > 0; ++i) {
    const auto w = weights[order[i]];
    if (w <= rem && reach[i + 1][rem - w]) {
      picked.push_back(order[i]);
      rem -= w;
    }
  }
  return picked;
}

}  // namespace

std::string_view to_string(Mode mode) noexcept {
  for (const auto& [m, name] : kModeNames)
    if (m == mode) return name;
  return "dslr";
}

Mode parse_mode(std::string_view s) {
  for (const auto& [m, name] : kModeNames)
    if (name == s) return m;
  throw Error(ErrorCode::kConfig, "unknown refinement mode '" + std::string(s) + "'");
}

bool mode_needs_seed(Mode mode) noexcept {
  return mode == Mode::kRandom || mode == Mode::kFixedRand || mode == Mode::kNoRerank;
}

bool mode_needs_budget(Mode mode) noexcept {
  return mode == Mode::kFixedTrunc || mode == Mode::kFixedSent || mode == Mode::kFixedRand;
}

void RefineConfig::validate() const {
  if (std::isnan(threshold)) throw Error(ErrorCode::kConfig, "threshold is NaN");
  if (top_n_docs < 1) throw Error(ErrorCode::kConfig, "top_n_docs must be >= 1");
  if (mode_needs_budget(mode) != budget_tokens.has_value())
    throw Error(ErrorCode::kConfig, mode_needs_budget(mode)
                                        ? std::string(to_string(mode)) + " mode requires budget_tokens"
                                        : "budget_tokens is only valid for fixed-budget modes");
  if (mode_needs_seed(mode) && !seed)
    throw Error(ErrorCode::kConfig, std::string(to_string(mode)) + " mode requires a seed");
  if (rerank_m && (mode != Mode::kPassage || *rerank_m < 1))
    throw Error(ErrorCode::kConfig, "rerank_m must be >= 1 and is only valid for passage mode");
}

void assign_ranks(std::vector<ScoredSentence>& scored) {
  std::vector<std::size_t> order(scored.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = scored[a];
    const auto& y = scored[b];
    if (x.score != y.score) return x.score > y.score;
    if (x.sentence.doc_index != y.sentence.doc_index) return x.sentence.doc_index < y.sentence.doc_index;
    return x.sentence.position < y.sentence.position;
  });
  for (std::size_t r = 0; r < order.size(); ++r) scored[order[r]].rank = r;
}

std::vector<ScoredSentence> score_sentences(std::string_view query, const SentenceSet& set,
                                            std::span<const PassageDoc> docs, const Scorer& scorer,
                                            std::size_t max_batch) {
  std::vector<Candidate> candidates;
  candidates.reserve(set.sentences.size());
  for (const auto& s : set.sentences) candidates.push_back({docs[s.doc_index].title, s.text});
  auto scores = scorer.score_batched(query, candidates, Granularity::kSentence, max_batch);
  if (scores.scores.size() != candidates.size())
    throw Error(ErrorCode::kRemoteMalformed, "scorer returned a mismatched score vector");
  std::vector<ScoredSentence> out;
  out.reserve(set.sentences.size());
  for (std::size_t i = 0; i < set.sentences.size(); ++i) {
    if (!std::isfinite(scores.scores[i])) throw Error(ErrorCode::kRemoteMalformed, "non-finite sentence score");
    out.push_back({set.sentences[i], scores.scores[i], 0});
  }
  assign_ranks(out);
  return out;
}

std::vector<ScoredSentence> filter_sentences(std::span<const ScoredSentence> scored, double threshold,
                                             bool strict) {
  std::vector<ScoredSentence> kept;
  for (const auto& s : scored) {
    if (strict ? s.score > threshold : s.score >= threshold) kept.push_back(s);
  }
  return kept;
}

std::string render_header(std::size_t rank, std::string_view title) {
  std::string header = "[" + std::to_string(rank) + "]";
  auto t = text::collapse_whitespace(title);
  if (!t.empty()) header += " " + t;
  return header;
}

std::string render_blocks(std::span<const DocBlock> blocks) {
  std::string out;
  for (const auto& b : blocks) {
    if (!out.empty()) out += "\n\n";
    out += render_header(b.rank, b.title);
    if (!b.body.empty()) out += "\n" + b.body;
  }
  return out;
}

std::string render_baseline(std::span<const PassageDoc> docs) {
  std::string out;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    if (!out.empty()) out += "\n\n";
    out += render_header(d + 1, docs[d].title);
    auto body = text::collapse_whitespace(docs[d].text);
    if (!body.empty()) out += "\n" + body;
  }
  return out;
}

RefinedContext reconstruct(std::span<const ScoredSentence> kept, const SentenceSet& original,
                           std::span<const PassageDoc> docs, const Tokenizer& tokenizer) {
  if (docs.size() != original.source_docs.size())
    throw Error(ErrorCode::kInvalidArgument, "reconstruct: document list does not match the sentence set");
  std::map<std::pair<std::size_t, std::size_t>, const Sentence*> lookup;
  for (const auto& s : original.sentences) lookup[{s.doc_index, s.position}] = &s;

  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& k : kept) {
    const auto key = std::make_pair(k.sentence.doc_index, k.sentence.position);
    auto it = lookup.find(key);
    if (it == lookup.end() || it->second->doc_id != k.sentence.doc_id || it->second->text != k.sentence.text)
      throw Error(ErrorCode::kUnknownSentence, "sentence " + std::to_string(k.sentence.position) + " of '" +
                                                   k.sentence.doc_id + "' is not in the original set");
    if (!seen.insert(key).second)
      throw Error(ErrorCode::kInvalidArgument, "sentence kept twice: " + k.sentence.doc_id + "#" +
                                                   std::to_string(k.sentence.position));
  }
  auto per_doc = group_by_doc(kept, docs.size());
  for (auto& v : per_doc) sort_by_position(v);
  return assemble(Mode::kDslr, std::move(per_doc), docs, original.sentences.size(), tokenizer);
}

RefinedContext refine_dslr(std::string_view query, const RetrievalResult& docs, const Scorer& scorer,
                           const RefineConfig& config, const RefineEnv& env) {
  auto p = prepare(query, docs, &scorer, config, env);
  auto kept = filter_sentences(p.scored, config.threshold, config.strict);
  auto ctx = reconstruct(kept, p.set, p.docs, env.tokenizer);
  ctx.scored = true;
  ctx.threshold_used = config.threshold;
  return ctx;
}

RefinedContext refine_variant(std::string_view query, const RetrievalResult& docs, const Scorer& scorer,
                              const RefineConfig& config, const RefineEnv& env) {
  auto p = prepare(query, docs, &scorer, config, env);
  auto kept = filter_sentences(p.scored, config.threshold, config.strict);
  auto per_doc = group_by_doc(kept, p.docs.size());

  switch (config.mode) {
    case Mode::kDescend:
    case Mode::kAscend: {
      const bool desc = config.mode == Mode::kDescend;
      for (auto& v : per_doc) {
        std::stable_sort(v.begin(), v.end(), [desc](const auto& a, const auto& b) {
          if (a.score != b.score) return desc ? a.score > b.score : a.score < b.score;
          return a.sentence.position < b.sentence.position;
        });
      }
      break;
    }
    case Mode::kRandom: {
      Rng rng(query_seed(config, docs));
      for (auto& v : per_doc) {
        sort_by_position(v);
        rng.shuffle(v);
      }
      break;
    }
    case Mode::kNoRerank: {
      std::size_t target = 0;
      for (auto w : token_weights(kept, env.tokenizer)) target += w;
      const auto weights = token_weights(p.scored, env.tokenizer);
      const auto order = random_permutation(p.scored.size(), query_seed(config, docs));
      std::vector<ScoredSentence> chosen;
      for (auto idx : closest_subset(weights, order, target)) chosen.push_back(p.scored[idx]);
      per_doc = group_by_doc(chosen, p.docs.size());
      for (auto& v : per_doc) sort_by_position(v);
      break;
    }
    default:
      throw Error(ErrorCode::kInvalidArgument,
                  "refine_variant: unsupported mode " + std::string(to_string(config.mode)));
  }
  auto ctx = assemble(config.mode, std::move(per_doc), p.docs, p.set.sentences.size(), env.tokenizer);
  ctx.scored = true;
  ctx.threshold_used = config.threshold;
  return ctx;
}

RefinedContext refine_fixed_budget(std::string_view query, const RetrievalResult& docs, const Scorer& scorer,
                                   const RefineConfig& config, const RefineEnv& env) {
  if (!config.budget_tokens) throw Error(ErrorCode::kConfig, "fixed-budget modes require budget_tokens");
  const std::size_t budget = *config.budget_tokens;

  if (config.mode == Mode::kFixedTrunc) {
    // Truncation works on whitespace tokens of the collapsed passage bodies.
    auto p = prepare(query, docs, nullptr, config, env);
    RefinedContext ctx;
    ctx.mode = Mode::kFixedTrunc;
    std::size_t remaining = budget;
    auto per_doc = group_by_doc(p.scored, p.docs.size());
    for (std::size_t d = 0; d < p.docs.size(); ++d) {
      DocBlock block;
      block.doc_id = p.docs[d].id;
      block.title = p.docs[d].title;
      block.rank = d + 1;
      const auto body = text::collapse_whitespace(p.docs[d].text);
      std::size_t taken = 0;
      std::size_t cut = 0;
      for (std::size_t i = 0; i <= body.size() && taken < remaining; ++i) {
        if (i == body.size() || body[i] == ' ') {
          ++taken;
          cut = i;
        }
      }
      if (body.empty()) taken = 0;
      block.body = body.substr(0, cut);
      remaining -= taken;
      // A sentence counts as kept only when all of its tokens survive.
      std::size_t used = 0;
      for (const auto& s : per_doc[d]) {
        used += text::count_whitespace_tokens(s.sentence.text);
        if (used > taken) break;
        block.kept.push_back(s);
      }
      ctx.kept_count += block.kept.size();
      ctx.per_doc.push_back(std::move(block));
    }
    ctx.dropped_count = p.set.sentences.size() - ctx.kept_count;
    ctx.rendered = render_blocks(ctx.per_doc);
    ctx.token_count = env.tokenizer.count(ctx.rendered);
    return ctx;
  }

  const bool by_score = config.mode == Mode::kFixedSent;
  if (!by_score && config.mode != Mode::kFixedRand)
    throw Error(ErrorCode::kInvalidArgument,
                "refine_fixed_budget: unsupported mode " + std::string(to_string(config.mode)));
  auto p = prepare(query, docs, by_score ? &scorer : nullptr, config, env);
  std::vector<std::size_t> order(p.scored.size());
  if (by_score) {
    for (std::size_t i = 0; i < p.scored.size(); ++i) order[p.scored[i].rank] = i;
  } else {
    order = random_permutation(p.scored.size(), query_seed(config, docs));
  }
  auto chosen = fill_budget(p.scored, order, budget, env.tokenizer);
  auto per_doc = group_by_doc(chosen, p.docs.size());
  for (auto& v : per_doc) sort_by_position(v);
  auto ctx = assemble(config.mode, std::move(per_doc), p.docs, p.set.sentences.size(), env.tokenizer);
  ctx.scored = by_score;
  return ctx;
}

RetrievalResult rerank_passages(std::string_view query, const RetrievalResult& docs, const Scorer& scorer,
                                std::size_t m, std::size_t max_batch) {
  if (m < 1) throw Error(ErrorCode::kInvalidArgument, "rerank_passages: m must be >= 1");
  RetrievalResult out;
  out.query_id = docs.query_id;
  out.n_requested = m;
  if (docs.hits.empty()) return out;
  std::vector<Candidate> candidates;
  for (const auto& h : docs.hits) candidates.push_back({h.doc.title, h.doc.text});
  const auto scores = scorer.score_batched(query, candidates, Granularity::kPassage, max_batch);
  if (scores.scores.size() != candidates.size())
    throw Error(ErrorCode::kRemoteMalformed, "scorer returned a mismatched score vector");
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores.scores[a] > scores.scores[b]; });
  for (std::size_t i = 0; i < order.size() && i < m; ++i)
    out.hits.push_back({docs.hits[order[i]].doc, scores.scores[order[i]]});
  return out;
}

RefinedContext refine_passage(std::string_view query, const RetrievalResult& docs, const Scorer& scorer,
                              const RefineConfig& config, const RefineEnv& env) {
  RefineConfig effective = config;
  const RetrievalResult* source = &docs;
  RetrievalResult reranked;
  if (config.rerank_m) {
    reranked = rerank_passages(query, docs, scorer, *config.rerank_m, env.max_batch);
    source = &reranked;
    effective.top_n_docs = *config.rerank_m;
  }
  auto p = prepare(query, *source, nullptr, effective, env);
  RefinedContext ctx;
  ctx.mode = Mode::kPassage;
  auto per_doc = group_by_doc(p.scored, p.docs.size());
  for (std::size_t d = 0; d < p.docs.size(); ++d) {
    DocBlock block;
    block.doc_id = p.docs[d].id;
    block.title = p.docs[d].title;
    block.rank = d + 1;
    block.kept = std::move(per_doc[d]);
    block.body = text::collapse_whitespace(p.docs[d].text);
    ctx.kept_count += block.kept.size();
    ctx.per_doc.push_back(std::move(block));
  }
  ctx.rendered = render_baseline(p.docs);
  ctx.token_count = env.tokenizer.count(ctx.rendered);
  return ctx;
}

RefinedContext refine(std::string_view query, const RetrievalResult& docs, const Scorer& scorer,
                      const RefineConfig& config, const RefineEnv& env) {
  config.validate();
  switch (config.mode) {
    case Mode::kDslr: return refine_dslr(query, docs, scorer, config, env);
    case Mode::kDescend:
    case Mode::kAscend:
    case Mode::kRandom:
    case Mode::kNoRerank: return refine_variant(query, docs, scorer, config, env);
    case Mode::kFixedTrunc:
    case Mode::kFixedSent:
    case Mode::kFixedRand: return refine_fixed_budget(query, docs, scorer, config, env);
    case Mode::kPassage: return refine_passage(query, docs, scorer, config, env);
  }
  throw Error(ErrorCode::kInternal, "unhandled mode");
}

}  // namespace dslr
