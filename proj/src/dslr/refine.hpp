#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dslr/corpus_index.hpp"
#include "dslr/scorers.hpp"
#include "dslr/segmenter.hpp"
#include "dslr/tokenizer.hpp"

namespace dslr {

enum class Mode {
  kDslr,
  kDescend,
  kAscend,
  kRandom,
  kPassage,
  kFixedTrunc,
  kFixedSent,
  kFixedRand,
  kNoRerank,
};

std::string_view to_string(Mode mode) noexcept;
Mode parse_mode(std::string_view s);
bool mode_needs_seed(Mode mode) noexcept;
bool mode_needs_budget(Mode mode) noexcept;

struct ScoredSentence {
  Sentence sentence;
  double score = 0.0;
  std::size_t rank = 0;  // position in score-descending order over the query's sentences
};

struct DocBlock {
  std::string doc_id;
  std::string title;
  std::size_t rank = 0;  // 1-based retrieval rank, rendered as "[rank]"
  std::vector<ScoredSentence> kept;  // in rendered order
  std::string body;
};

/// The reconstructed context handed to the reader.
struct RefinedContext {
  std::vector<DocBlock> per_doc;
  std::string rendered;
  std::size_t token_count = 0;
  std::size_t kept_count = 0;
  std::size_t dropped_count = 0;
  std::optional<double> threshold_used;
  bool scored = false;  // false when no relevance scores were computed (passage, fixed_trunc)
  Mode mode = Mode::kDslr;
};

struct RefineConfig {
  double threshold = -std::numeric_limits<double>::infinity();
  /// Keep-if score > T instead of score >= T.
  bool strict = false;
  std::size_t top_n_docs = 1;
  Mode mode = Mode::kDslr;
  std::optional<std::size_t> budget_tokens;
  std::optional<std::uint64_t> seed;
  /// Passage mode only: re-rank the retrieved set and keep this many.
  std::optional<std::size_t> rerank_m;

  /// Throws Config unless budget is set iff the mode is fixed-budget and
  /// seed is set whenever the mode is random-dependent.
  void validate() const;
};

struct StageTimings {
  double decompose_ms = 0.0;
  double score_ms = 0.0;
};

/// Collaborators shared by every refinement call. `timings`, when set,
/// receives per-stage wall-clock durations of the call.
struct RefineEnv {
  const Segmenter& segmenter;
  const Tokenizer& tokenizer;
  std::size_t max_batch = 64;
  StageTimings* timings = nullptr;
};

/// Assigns ranks: score descending, ties by (doc rank, position).
void assign_ranks(std::vector<ScoredSentence>& scored);

/// Scores every sentence (title context included) and assigns ranks.
std::vector<ScoredSentence> score_sentences(std::string_view query, const SentenceSet& set,
                                            std::span<const PassageDoc> docs, const Scorer& scorer,
                                            std::size_t max_batch);

/// Sentences with score >= threshold (or > when strict), in input order.
std::vector<ScoredSentence> filter_sentences(std::span<const ScoredSentence> scored, double threshold,
                                             bool strict = false);

/// "[k] Title" header line.
std::string render_header(std::size_t rank, std::string_view title);
std::string render_blocks(std::span<const DocBlock> blocks);

/// Unrefined rendering of whole passages; the reference for no-op refinement.
std::string render_baseline(std::span<const PassageDoc> docs);

/// Groups kept sentences per document in retrieval order and restores their
/// original positions. Throws UnknownSentence when a kept sentence is not in
/// `original`. `docs` supplies titles and must parallel original.source_docs.
RefinedContext reconstruct(std::span<const ScoredSentence> kept, const SentenceSet& original,
                           std::span<const PassageDoc> docs, const Tokenizer& tokenizer);

RefinedContext refine_dslr(std::string_view query, const RetrievalResult& docs, const Scorer& scorer,
                           const RefineConfig& config, const RefineEnv& env);

/// descend / ascend / random reorder the dslr kept set; no_rerank draws a
/// seeded random subset whose body tokens are the closest achievable total
/// not exceeding the dslr output's.
RefinedContext refine_variant(std::string_view query, const RetrievalResult& docs, const Scorer& scorer,
                              const RefineConfig& config, const RefineEnv& env);

/// fixed_trunc / fixed_sent / fixed_rand. Budgets count body tokens; headers
/// are always kept.
RefinedContext refine_fixed_budget(std::string_view query, const RetrievalResult& docs, const Scorer& scorer,
                                   const RefineConfig& config, const RefineEnv& env);

/// Baseline: top-n passages (optionally re-ranked to rerank_m) rendered whole.
RefinedContext refine_passage(std::string_view query, const RetrievalResult& docs, const Scorer& scorer,
                              const RefineConfig& config, const RefineEnv& env);

/// Reorders by passage-granularity scores (stable), truncated to m.
RetrievalResult rerank_passages(std::string_view query, const RetrievalResult& docs, const Scorer& scorer,
                                std::size_t m, std::size_t max_batch = 64);

/// Dispatches on config.mode.
RefinedContext refine(std::string_view query, const RetrievalResult& docs, const Scorer& scorer,
                      const RefineConfig& config, const RefineEnv& env);

}  // namespace dslr
