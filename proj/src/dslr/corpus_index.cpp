#include "dslr/corpus_index.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <map>
#include <unordered_set>

#include <json.hpp>

#include "dslr/digest.hpp"
#include "dslr/error.hpp"
#include "dslr/text.hpp"

namespace dslr {

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Harman (1991) S-stemmer.
void s_stem(std::string& word) {
  if (word.size() <= 3) return;
  if (ends_with(word, "ies") && !ends_with(word, "eies") && !ends_with(word, "aies")) {
    word.replace(word.size() - 3, 3, "y");
  } else if (ends_with(word, "es") && !ends_with(word, "aes") && !ends_with(word, "ees") &&
             !ends_with(word, "oes")) {
    word.pop_back();
  } else if (ends_with(word, "s") && !ends_with(word, "us") && !ends_with(word, "ss")) {
    word.pop_back();
  }
}

}  // namespace

std::vector<std::string> analyze(std::string_view text, const AnalyzerOptions& options) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (current.empty()) return;
    if (options.stem) s_stem(current);
    tokens.push_back(std::move(current));
    current.clear();
  };
  for (std::size_t i = 0; i < text.size();) {
    const char32_t cp = text::decode(text, i);
    if (text::is_alnum(cp)) {
      text::append_utf8(current, text::to_lower(cp));
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

std::vector<std::string> query_terms(std::string_view query, const AnalyzerOptions& options) {
  std::vector<std::string> terms;
  std::unordered_set<std::string> seen;
  for (auto& token : analyze(query, options)) {
    if (seen.insert(token).second) terms.push_back(std::move(token));
  }
  return terms;
}

double bm25_idf(std::size_t doc_count, std::size_t df) noexcept {
  const double n = static_cast<double>(doc_count);
  const double d = static_cast<double>(df);
  return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

double bm25_term_weight(double idf, std::uint32_t tf, std::uint32_t doc_len, double avg_doc_len,
                        const Bm25Params& params) noexcept {
  if (tf == 0) return 0.0;
  const double f = static_cast<double>(tf);
  const double norm = avg_doc_len > 0.0 ? static_cast<double>(doc_len) / avg_doc_len : 1.0;
  return idf * (f * (params.k1 + 1.0)) / (f + params.k1 * (1.0 - params.b + params.b * norm));
}

CorpusIndex CorpusIndex::build(std::span<const PassageDoc> docs, const IndexOptions& options) {
  if (docs.empty()) throw Error(ErrorCode::kEmptyCorpus, "corpus contains no documents");
  CorpusIndex index;
  index.options_ = options;
  index.docs_.reserve(docs.size());
  index.doc_lengths_.reserve(docs.size());

  std::unordered_set<std::string> ids;
  std::unordered_map<std::string, std::uint32_t> counts;
  for (const auto& doc : docs) {
    if (doc.id.empty()) throw Error(ErrorCode::kInvalidArgument, "document with empty id");
    if (!ids.insert(doc.id).second) throw Error(ErrorCode::kDuplicateId, "duplicate document id: " + doc.id);
    if (doc.text.empty() && doc.title.empty())
      throw Error(ErrorCode::kInvalidArgument, "document " + doc.id + " has neither title nor text");

    const auto ordinal = static_cast<std::uint32_t>(index.docs_.size());
    auto tokens = analyze(doc.title, options.analyzer);
    auto body = analyze(doc.text, options.analyzer);
    tokens.insert(tokens.end(), std::make_move_iterator(body.begin()), std::make_move_iterator(body.end()));

    counts.clear();
    for (const auto& t : tokens) ++counts[t];
    for (auto& [term, tf] : counts) index.postings_[term].push_back({ordinal, tf});

    index.doc_lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
    index.docs_.push_back(doc);
  }
  index.finalize();
  return index;
}

void CorpusIndex::finalize() {
  std::uint64_t total = 0;
  for (auto len : doc_lengths_) total += len;
  avg_doc_len_ = docs_.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(docs_.size());
  // Ordinals are appended in increasing order during build; loading re-checks.
  for (const auto& [term, list] : postings_) {
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (list[i].doc >= docs_.size() || (i > 0 && list[i - 1].doc >= list[i].doc))
        throw Error(ErrorCode::kParse, "corrupt postings for term '" + term + "'");
    }
  }
}

std::span<const Posting> CorpusIndex::postings(const std::string& term) const {
  auto it = postings_.find(term);
  if (it == postings_.end()) return {};
  return it->second;
}

std::uint32_t CorpusIndex::tf(const std::string& term, std::uint32_t ordinal) const {
  auto list = postings(term);
  auto it = std::lower_bound(list.begin(), list.end(), ordinal,
                             [](const Posting& p, std::uint32_t d) { return p.doc < d; });
  return (it != list.end() && it->doc == ordinal) ? it->tf : 0;
}

// ---- binary persistence (little-endian) -------------------------------------

namespace {

class Writer {
 public:
  void bytes(std::string_view s) { out_.append(s); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  std::string_view bytes(std::size_t n) {
    if (pos_ + n > in_.size()) throw Error(ErrorCode::kParse, "truncated index file");
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(bytes(1)[0]); }
  std::uint32_t u32() {
    auto b = bytes(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[i]);
    return v;
  }
  std::uint64_t u64() {
    auto b = bytes(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[i]);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() { return std::string(bytes(u32())); }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string CorpusIndex::serialize() const {
  Writer w;
  w.bytes(kMagic);
  w.u32(kFormatVersion);
  w.f64(options_.bm25.k1);
  w.f64(options_.bm25.b);
  w.u8(options_.analyzer.stem ? 1 : 0);
  w.u64(docs_.size());
  for (std::size_t i = 0; i < docs_.size(); ++i) {
    w.str(docs_[i].id);
    w.str(docs_[i].title);
    w.str(docs_[i].text);
    w.u32(doc_lengths_[i]);
  }
  std::vector<const std::string*> terms;
  terms.reserve(postings_.size());
  for (const auto& [term, list] : postings_) terms.push_back(&term);
  std::sort(terms.begin(), terms.end(), [](auto* a, auto* b) { return *a < *b; });
  w.u64(terms.size());
  for (const auto* term : terms) {
    const auto& list = postings_.at(*term);
    w.str(*term);
    w.u32(static_cast<std::uint32_t>(list.size()));
    for (const auto& p : list) {
      w.u32(p.doc);
      w.u32(p.tf);
    }
  }
  return w.take();
}

CorpusIndex CorpusIndex::deserialize(std::string_view bytes) {
  Reader r(bytes);
  if (bytes.size() < kMagic.size() || r.bytes(kMagic.size()) != kMagic)
    throw Error(ErrorCode::kVersionMismatch, "not a DSLRIDX1 index file (bad magic)");
  const auto version = r.u32();
  if (version != kFormatVersion)
    throw Error(ErrorCode::kVersionMismatch,
                "index format version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(kFormatVersion) + ")");
  CorpusIndex index;
  index.options_.bm25.k1 = r.f64();
  index.options_.bm25.b = r.f64();
  index.options_.analyzer.stem = r.u8() != 0;
  const auto n_docs = r.u64();
  for (std::uint64_t i = 0; i < n_docs; ++i) {
    PassageDoc doc;
    doc.id = r.str();
    doc.title = r.str();
    doc.text = r.str();
    index.doc_lengths_.push_back(r.u32());
    index.docs_.push_back(std::move(doc));
  }
  const auto n_terms = r.u64();
  for (std::uint64_t t = 0; t < n_terms; ++t) {
    auto term = r.str();
    const auto n = r.u32();
    std::vector<Posting> list;
    list.reserve(n);
    for (std::uint32_t k = 0; k < n; ++k) {
      const auto doc = r.u32();
      const auto tf = r.u32();
      list.push_back({doc, tf});
    }
    index.postings_.emplace(std::move(term), std::move(list));
  }
  if (!r.done()) throw Error(ErrorCode::kParse, "trailing bytes after index payload");
  index.finalize();
  return index;
}

void CorpusIndex::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

CorpusIndex CorpusIndex::load(const std::filesystem::path& path) { return deserialize(read_file(path)); }

// ---- scoring and retrieval ---------------------------------------------------

double bm25_score(const CorpusIndex& index, std::string_view query, std::uint32_t ordinal) {
  const auto& opts = index.options();
  const auto doc_len = index.doc_length(ordinal);
  double score = 0.0;
  for (const auto& term : query_terms(query, opts.analyzer)) {
    const auto tf = index.tf(term, ordinal);
    if (tf == 0) continue;
    score += bm25_term_weight(bm25_idf(index.doc_count(), index.df(term)), tf, doc_len,
                              index.avg_doc_len(), opts.bm25);
  }
  return score;
}

RetrievalResult retrieve(const CorpusIndex& index, std::string_view query, std::size_t n,
                         std::string query_id) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "retrieve: n must be >= 1");
  const auto& opts = index.options();
  std::vector<double> acc(index.doc_count(), 0.0);
  std::vector<std::uint32_t> touched;
  std::vector<char> seen(index.doc_count(), 0);

  // Term-at-a-time in query-term order; per-document sums therefore add the
  // same terms in the same order as bm25_score.
  for (const auto& term : query_terms(query, opts.analyzer)) {
    auto list = index.postings(term);
    if (list.empty()) continue;
    const double idf = bm25_idf(index.doc_count(), list.size());
    for (const auto& p : list) {
      acc[p.doc] += bm25_term_weight(idf, p.tf, index.doc_length(p.doc), index.avg_doc_len(), opts.bm25);
      if (!seen[p.doc]) {
        seen[p.doc] = 1;
        touched.push_back(p.doc);
      }
    }
  }

  auto better = [&](std::uint32_t a, std::uint32_t b) {
    if (acc[a] != acc[b]) return acc[a] > acc[b];
    return index.doc(a).id < index.doc(b).id;
  };
  const std::size_t k = std::min(n, touched.size());
  std::partial_sort(touched.begin(), touched.begin() + static_cast<std::ptrdiff_t>(k), touched.end(), better);

  RetrievalResult result;
  result.query_id = std::move(query_id);
  result.n_requested = n;
  result.hits.reserve(k);
  for (std::size_t i = 0; i < k; ++i) result.hits.push_back({index.doc(touched[i]), acc[touched[i]]});
  return result;
}

std::vector<PassageDoc> parse_corpus_jsonl(std::string_view content) {
  std::vector<PassageDoc> docs;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    auto end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    auto line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      PassageDoc doc;
      doc.id = j.at("id").get<std::string>();
      doc.title = j.value("title", std::string{});
      doc.text = j.value("text", std::string{});
      docs.push_back(std::move(doc));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParse, "corpus line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return docs;
}

std::vector<PassageDoc> read_corpus_jsonl(const std::filesystem::path& path) {
  return parse_corpus_jsonl(read_file(path));
}

}  // namespace dslr
