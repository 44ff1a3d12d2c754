#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "dslr/corpus_index.hpp"

namespace dslr {

struct Sentence {
  std::string doc_id;
  std::size_t doc_index = 0;  // rank of the source document within its SentenceSet
  std::size_t position = 0;   // 0-based index within the document
  std::string text;           // trimmed source substring, byte-exact
  std::size_t begin = 0;      // byte span [begin, end) in the source passage text
  std::size_t end = 0;

  bool operator==(const Sentence&) const = default;
};

struct SentenceSet {
  std::vector<Sentence> sentences;  // ordered by (doc_index, position)
  std::vector<std::string> source_docs;
};

/// Deterministic rule-based sentence splitter.
///
/// A boundary is placed after a run of '.', '?' or '!' (plus any closing
/// quotes/brackets) when it is followed by whitespace and then an uppercase
/// letter, a digit or an opening quote. A lone '.' does not split when the
/// word it ends is a listed abbreviation or a single-capital initial ("J.").
/// No boundary is placed inside a balanced ( ), [ ], "..." or “...” pair.
class Segmenter {
 public:
  /// Uses the built-in abbreviation list.
  Segmenter();
  explicit Segmenter(std::vector<std::string> abbreviations);

  /// Plain-text list, one abbreviation per line; '#' lines and blanks ignored.
  static Segmenter from_file(const std::filesystem::path& path);
  static std::vector<std::string> parse_abbreviations(std::string_view content);

  std::vector<Sentence> decompose(const PassageDoc& doc) const;
  std::vector<Sentence> decompose_text(std::string_view text, std::string_view doc_id = {}) const;
  SentenceSet decompose_set(std::span<const PassageDoc> docs) const;

  bool is_abbreviation(std::string_view word) const;

 private:
  std::unordered_set<std::string> abbreviations_;
};

}  // namespace dslr
