#include "dslr/segmenter.hpp"

#include <vector>

#include "dslr/digest.hpp"
#include "dslr/embedded_resources.hpp"
#include "dslr/text.hpp"

namespace dslr {

namespace {

struct CodePoint {
  char32_t cp;
  std::size_t begin;
  std::size_t end;
};

bool is_terminator(char32_t c) { return c == '.' || c == '?' || c == '!'; }

bool is_closer(char32_t c) {
  return c == ')' || c == ']' || c == '"' || c == '\'' || c == 0x201D || c == 0x2019;
}

bool is_opening_quote(char32_t c) { return c == '"' || c == '\'' || c == 0x201C || c == 0x2018; }

bool is_digit(char32_t c) { return c >= '0' && c <= '9'; }

// inside[i] is true when code point i lies strictly within a matched pair.
std::vector<char> protected_mask(const std::vector<CodePoint>& cps) {
  const std::size_t n = cps.size();
  std::vector<int> delta(n + 1, 0);
  auto mark = [&](std::size_t open, std::size_t close) {
    if (close > open + 1) {
      ++delta[open + 1];
      --delta[close];
    }
  };
  std::vector<std::size_t> parens, brackets, curly;
  std::size_t straight_open = n;
  for (std::size_t i = 0; i < n; ++i) {
    switch (cps[i].cp) {
      case '(': parens.push_back(i); break;
      case ')':
        if (!parens.empty()) { mark(parens.back(), i); parens.pop_back(); }
        break;
      case '[': brackets.push_back(i); break;
      case ']':
        if (!brackets.empty()) { mark(brackets.back(), i); brackets.pop_back(); }
        break;
      case 0x201C: curly.push_back(i); break;
      case 0x201D:
        if (!curly.empty()) { mark(curly.back(), i); curly.pop_back(); }
        break;
      case '"':
        if (straight_open == n) {
          straight_open = i;
        } else {
          mark(straight_open, i);
          straight_open = n;
        }
        break;
      default: break;
    }
  }
  std::vector<char> inside(n, 0);
  int depth = 0;
  for (std::size_t i = 0; i < n; ++i) {
    depth += delta[i];
    inside[i] = depth > 0;
  }
  return inside;
}

}  // namespace

Segmenter::Segmenter() : Segmenter(parse_abbreviations(resources::kAbbreviations)) {}

Segmenter::Segmenter(std::vector<std::string> abbreviations)
    : abbreviations_(std::make_move_iterator(abbreviations.begin()),
                     std::make_move_iterator(abbreviations.end())) {}

Segmenter Segmenter::from_file(const std::filesystem::path& path) {
  return Segmenter(parse_abbreviations(read_file(path)));
}

std::vector<std::string> Segmenter::parse_abbreviations(std::string_view content) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= content.size()) {
    auto end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    auto line = text::trim(content.substr(pos, end - pos));
    if (!line.empty() && line.front() != '#') out.emplace_back(line);
    pos = end + 1;
  }
  return out;
}

bool Segmenter::is_abbreviation(std::string_view word) const {
  return abbreviations_.contains(std::string(word));
}

std::vector<Sentence> Segmenter::decompose(const PassageDoc& doc) const {
  return decompose_text(doc.text, doc.id);
}

std::vector<Sentence> Segmenter::decompose_text(std::string_view source, std::string_view doc_id) const {
  std::vector<CodePoint> cps;
  cps.reserve(source.size());
  for (std::size_t i = 0; i < source.size();) {
    const std::size_t start = i;
    const char32_t cp = text::decode(source, i);
    cps.push_back({cp, start, i});
  }
  const std::size_t n = cps.size();
  const auto inside = protected_mask(cps);

  std::vector<Sentence> out;
  auto emit = [&](std::size_t from, std::size_t to) {  // code point range [from, to)
    while (from < to && text::is_space(cps[from].cp)) ++from;
    while (to > from && text::is_space(cps[to - 1].cp)) --to;
    if (from == to) return;
    Sentence s;
    s.doc_id = std::string(doc_id);
    s.position = out.size();
    s.begin = cps[from].begin;
    s.end = cps[to - 1].end;
    s.text = std::string(source.substr(s.begin, s.end - s.begin));
    out.push_back(std::move(s));
  };

  std::size_t seg_start = 0;
  std::size_t k = 0;
  while (k < n) {
    if (!is_terminator(cps[k].cp)) {
      ++k;
      continue;
    }
    std::size_t e = k + 1;
    while (e < n && is_terminator(cps[e].cp)) ++e;
    const bool lone_period = (e == k + 1) && cps[k].cp == '.';
    while (e < n && is_closer(cps[e].cp)) ++e;

    std::size_t f = e;
    while (f < n && text::is_space(cps[f].cp)) ++f;
    const bool followed_by_space = f > e;
    bool split = followed_by_space && f < n &&
                 (text::is_upper(cps[f].cp) || is_digit(cps[f].cp) || is_opening_quote(cps[f].cp));
    if (split && inside[e - 1]) split = false;

    if (split && lone_period) {
      // The word ending at the period, minus any leading opening punctuation.
      std::size_t w = k;
      while (w > 0 && !text::is_space(cps[w - 1].cp)) --w;
      while (w < k && (cps[w].cp == '(' || cps[w].cp == '[' || is_opening_quote(cps[w].cp))) ++w;
      const auto word = source.substr(cps[w].begin, cps[k].end - cps[w].begin);
      const bool initial = (k == w + 1) && text::is_upper(cps[w].cp);
      if (initial || is_abbreviation(word)) split = false;
    }

    if (split) {
      emit(seg_start, e);
      seg_start = f;
      k = f;
    } else {
      k = e;
    }
  }
  emit(seg_start, n);
  return out;
}

SentenceSet Segmenter::decompose_set(std::span<const PassageDoc> docs) const {
  SentenceSet set;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    set.source_docs.push_back(docs[d].id);
    for (auto& s : decompose(docs[d])) {
      s.doc_index = d;
      set.sentences.push_back(std::move(s));
    }
  }
  return set;
}

}  // namespace dslr
