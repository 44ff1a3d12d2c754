#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dslr/corpus_index.hpp"

namespace dslr {

enum class Granularity { kPassage, kSentence };

std::string_view to_string(Granularity g) noexcept;
Granularity parse_granularity(std::string_view s);

struct Candidate {
  std::string title;
  std::string text;
};

/// Text a backend sees for one candidate: "title. text", or whichever of the
/// two is non-empty.
std::string scoring_text(const Candidate& candidate);

struct ScoreVector {
  std::vector<double> scores;  // parallel to the submitted candidates
  std::string scorer_id;
  Granularity granularity = Granularity::kSentence;
};

enum class ScorerKind { kLexical, kRemote, kMock };

std::string_view to_string(ScorerKind k) noexcept;
ScorerKind parse_scorer_kind(std::string_view s);

struct ScorerConfig {
  ScorerKind kind = ScorerKind::kLexical;
  std::string endpoint;          // remote only
  std::string table_path;        // mock only
  int timeout_ms = 30000;
  std::size_t max_batch = 64;
  std::size_t concurrency_limit = 4;
  int retries = 2;
  int backoff_ms = 50;

  /// Throws Config when the invariants (endpoint iff remote, max_batch >= 1,
  /// table iff mock) do not hold.
  void validate() const;
};

/// Relevance scorer R over (query, candidate) pairs. Implementations are
/// immutable and may be shared across threads.
class Scorer {
 public:
  virtual ~Scorer() = default;

  virtual std::string id() const = 0;

  /// One finite score per candidate. Throws on an empty candidate list.
  virtual ScoreVector score(std::string_view query, std::span<const Candidate> candidates,
                            Granularity granularity) const = 0;

  /// Splits the request into chunks of at most `max_batch` candidates. The
  /// result is element-wise identical to score() for every max_batch >= 1.
  virtual ScoreVector score_batched(std::string_view query, std::span<const Candidate> candidates,
                                    Granularity granularity, std::size_t max_batch) const;
};

/// BM25 with the candidate list itself as the statistics corpus.
class LexicalScorer final : public Scorer {
 public:
  explicit LexicalScorer(IndexOptions options = {}) : options_(options) {}

  std::string id() const override { return "lexical-bm25"; }
  ScoreVector score(std::string_view query, std::span<const Candidate> candidates,
                    Granularity granularity) const override;
  ScoreVector score_batched(std::string_view query, std::span<const Candidate> candidates,
                            Granularity granularity, std::size_t max_batch) const override;

 private:
  IndexOptions options_;
};

/// Table-driven scorer for tests and fixtures.
///
/// Lookup key is (query, candidate text); an entry with query "*" matches any
/// query. Missing pairs get `default_score`. Queries listed in
/// `fail_queries` raise RemoteUnavailable, which lets tests inject failures.
class MockScorer final : public Scorer {
 public:
  struct Table {
    std::string scorer_id = "mock";
    double default_score = 0.0;
    std::map<std::pair<std::string, std::string>, double> scores;
    std::set<std::string> fail_queries;
  };

  explicit MockScorer(Table table) : table_(std::move(table)) {}

  /// {"scorer_id", "default", "scores": [{"query","text","score"}], "fail_queries": [...]}
  static MockScorer from_file(const std::filesystem::path& path);
  static MockScorer from_json_text(std::string_view json);

  std::string id() const override { return table_.scorer_id; }
  ScoreVector score(std::string_view query, std::span<const Candidate> candidates,
                    Granularity granularity) const override;

 private:
  Table table_;
};

/// Client for the POST /score wire protocol.
class RemoteScorer final : public Scorer {
 public:
  explicit RemoteScorer(ScorerConfig config);

  /// "remote:<endpoint>"; the server's own scorer_id is carried in ScoreVector.
  std::string id() const override;
  ScoreVector score(std::string_view query, std::span<const Candidate> candidates,
                    Granularity granularity) const override;
  /// Chunks are issued with up to concurrency_limit requests in flight and
  /// reassembled in submission order.
  ScoreVector score_batched(std::string_view query, std::span<const Candidate> candidates,
                            Granularity granularity, std::size_t max_batch) const override;

 private:
  ScorerConfig config_;
};

std::unique_ptr<Scorer> make_scorer(const ScorerConfig& config, const IndexOptions& lexical_options = {});

}  // namespace dslr
