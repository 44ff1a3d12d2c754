#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dslr {

/// A titled retrieval unit.
struct PassageDoc {
  std::string id;
  std::string title;
  std::string text;

  bool operator==(const PassageDoc&) const = default;
};

struct AnalyzerOptions {
  /// Harman S-stemmer on each token. Off by default.
  bool stem = false;
};

/// Okapi BM25 parameters.
struct Bm25Params {
  double k1 = 0.9;
  double b = 0.4;
};

struct IndexOptions {
  Bm25Params bm25;
  AnalyzerOptions analyzer;
};

/// Lowercases, treats every non-alphanumeric code point as a separator and
/// drops empty tokens. Deterministic and locale-independent.
std::vector<std::string> analyze(std::string_view text, const AnalyzerOptions& options = {});

/// Analyzed query terms with duplicates removed, first-occurrence order kept.
std::vector<std::string> query_terms(std::string_view query, const AnalyzerOptions& options = {});

/// idf = ln(1 + (N - df + 0.5) / (df + 0.5)); never negative.
double bm25_idf(std::size_t doc_count, std::size_t df) noexcept;

/// Contribution of one term occurrence count to a document's score.
double bm25_term_weight(double idf, std::uint32_t tf, std::uint32_t doc_len, double avg_doc_len,
                        const Bm25Params& params) noexcept;

struct Posting {
  std::uint32_t doc;
  std::uint32_t tf;

  bool operator==(const Posting&) const = default;
};

/// Immutable inverted index over a passage corpus. Safe for concurrent reads.
class CorpusIndex {
 public:
  static constexpr std::string_view kMagic = "DSLRIDX1";
  static constexpr std::uint32_t kFormatVersion = 1;

  /// Throws DuplicateId or EmptyCorpus.
  static CorpusIndex build(std::span<const PassageDoc> docs, const IndexOptions& options = {});

  static CorpusIndex load(const std::filesystem::path& path);
  static CorpusIndex deserialize(std::string_view bytes);

  void save(const std::filesystem::path& path) const;
  /// Byte-stable: terms are written in lexicographic order.
  std::string serialize() const;

  std::size_t doc_count() const noexcept { return docs_.size(); }
  double avg_doc_len() const noexcept { return avg_doc_len_; }
  const IndexOptions& options() const noexcept { return options_; }

  const PassageDoc& doc(std::uint32_t ordinal) const { return docs_.at(ordinal); }
  std::uint32_t doc_length(std::uint32_t ordinal) const { return doc_lengths_.at(ordinal); }
  std::span<const PassageDoc> docs() const noexcept { return docs_; }

  std::span<const Posting> postings(const std::string& term) const;
  std::size_t df(const std::string& term) const { return postings(term).size(); }
  std::uint32_t tf(const std::string& term, std::uint32_t ordinal) const;
  std::size_t term_count() const noexcept { return postings_.size(); }

 private:
  CorpusIndex() = default;
  void finalize();

  IndexOptions options_;
  std::vector<PassageDoc> docs_;
  std::vector<std::uint32_t> doc_lengths_;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  double avg_doc_len_ = 0.0;
};

/// Okapi BM25 of `query` against one document; 0 iff no query term occurs.
double bm25_score(const CorpusIndex& index, std::string_view query, std::uint32_t ordinal);

struct Hit {
  PassageDoc doc;
  double score = 0.0;
};

struct RetrievalResult {
  std::string query_id;
  std::vector<Hit> hits;  // score descending, ties by ascending doc id
  std::size_t n_requested = 0;
};

/// Top-n matching documents. Documents sharing no query term are never hits.
RetrievalResult retrieve(const CorpusIndex& index, std::string_view query, std::size_t n,
                         std::string query_id = {});

/// JSON-lines corpus reader: {"id","title","text"} per line. Blank lines are
/// skipped; malformed lines raise a Parse error naming the 1-based line.
std::vector<PassageDoc> read_corpus_jsonl(const std::filesystem::path& path);
std::vector<PassageDoc> parse_corpus_jsonl(std::string_view content);

}  // namespace dslr
