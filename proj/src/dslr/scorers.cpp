#include "dslr/scorers.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <unordered_map>

#include <json.hpp>

#include "dslr/digest.hpp"
#include "dslr/error.hpp"
#include "dslr/http_client.hpp"

namespace dslr {

std::string_view to_string(Granularity g) noexcept {
  return g == Granularity::kPassage ? "passage" : "sentence";
}

Granularity parse_granularity(std::string_view s) {
  if (s == "passage") return Granularity::kPassage;
  if (s == "sentence") return Granularity::kSentence;
  throw Error(ErrorCode::kInvalidArgument, "unknown granularity '" + std::string(s) + "'");
}

std::string_view to_string(ScorerKind k) noexcept {
  switch (k) {
    case ScorerKind::kLexical: return "lexical";
    case ScorerKind::kRemote: return "remote";
    case ScorerKind::kMock: return "mock";
  }
  return "lexical";
}

ScorerKind parse_scorer_kind(std::string_view s) {
  if (s == "lexical" || s == "lexical-bm25") return ScorerKind::kLexical;
  if (s == "remote") return ScorerKind::kRemote;
  if (s == "mock") return ScorerKind::kMock;
  throw Error(ErrorCode::kConfig, "unknown scorer kind '" + std::string(s) + "'");
}

void ScorerConfig::validate() const {
  if (kind == ScorerKind::kRemote && endpoint.empty())
    throw Error(ErrorCode::kRemoteUnavailable, "remote scorer requires an endpoint");
  if (kind != ScorerKind::kRemote && !endpoint.empty())
    throw Error(ErrorCode::kConfig, "scorer endpoint is only valid for kind=remote");
  if (kind == ScorerKind::kMock && table_path.empty())
    throw Error(ErrorCode::kConfig, "mock scorer requires a score table");
  if (max_batch < 1) throw Error(ErrorCode::kConfig, "max_batch must be >= 1");
  if (concurrency_limit < 1) throw Error(ErrorCode::kConfig, "concurrency_limit must be >= 1");
  if (timeout_ms <= 0) throw Error(ErrorCode::kConfig, "timeout_ms must be > 0");
}

std::string scoring_text(const Candidate& candidate) {
  if (candidate.title.empty()) return candidate.text;
  if (candidate.text.empty()) return candidate.title;
  return candidate.title + ". " + candidate.text;
}

namespace {

void require_candidates(std::span<const Candidate> candidates) {
  if (candidates.empty()) throw Error(ErrorCode::kInvalidArgument, "score: empty candidate list");
}

void require_finite(const ScoreVector& v) {
  for (double s : v.scores) {
    if (!std::isfinite(s)) throw Error(ErrorCode::kRemoteMalformed, "scorer returned a non-finite score");
  }
}

}  // namespace

ScoreVector Scorer::score_batched(std::string_view query, std::span<const Candidate> candidates,
                                  Granularity granularity, std::size_t max_batch) const {
  require_candidates(candidates);
  if (max_batch < 1) throw Error(ErrorCode::kInvalidArgument, "max_batch must be >= 1");
  ScoreVector out;
  out.granularity = granularity;
  out.scores.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); i += max_batch) {
    auto chunk = candidates.subspan(i, std::min(max_batch, candidates.size() - i));
    auto part = score(query, chunk, granularity);
    if (part.scores.size() != chunk.size())
      throw Error(ErrorCode::kRemoteMalformed, "scorer returned " + std::to_string(part.scores.size()) +
                                                   " scores for " + std::to_string(chunk.size()) + " candidates");
    out.scorer_id = part.scorer_id;
    out.scores.insert(out.scores.end(), part.scores.begin(), part.scores.end());
  }
  return out;
}

// ---- lexical -----------------------------------------------------------------

ScoreVector LexicalScorer::score(std::string_view query, std::span<const Candidate> candidates,
                                 Granularity granularity) const {
  return score_batched(query, candidates, granularity, candidates.empty() ? 1 : candidates.size());
}

// Statistics always come from the full candidate list, so chunking only
// affects the loop structure.
ScoreVector LexicalScorer::score_batched(std::string_view query, std::span<const Candidate> candidates,
                                         Granularity granularity, std::size_t max_batch) const {
  require_candidates(candidates);
  if (max_batch < 1) throw Error(ErrorCode::kInvalidArgument, "max_batch must be >= 1");

  std::vector<std::unordered_map<std::string, std::uint32_t>> tfs(candidates.size());
  std::vector<std::uint32_t> lengths(candidates.size());
  std::unordered_map<std::string, std::size_t> df;
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto tokens = analyze(scoring_text(candidates[i]), options_.analyzer);
    lengths[i] = static_cast<std::uint32_t>(tokens.size());
    total += tokens.size();
    for (auto& t : tokens) ++tfs[i][t];
    for (const auto& [term, tf] : tfs[i]) ++df[term];
  }
  const double avg = static_cast<double>(total) / static_cast<double>(candidates.size());
  const auto terms = query_terms(query, options_.analyzer);

  ScoreVector out;
  out.scorer_id = id();
  out.granularity = granularity;
  out.scores.reserve(candidates.size());
  for (std::size_t begin = 0; begin < candidates.size(); begin += max_batch) {
    const std::size_t end = std::min(candidates.size(), begin + max_batch);
    for (std::size_t i = begin; i < end; ++i) {
      double s = 0.0;
      for (const auto& term : terms) {
        auto it = tfs[i].find(term);
        if (it == tfs[i].end()) continue;
        s += bm25_term_weight(bm25_idf(candidates.size(), df.at(term)), it->second, lengths[i], avg,
                              options_.bm25);
      }
      out.scores.push_back(s);
    }
  }
  return out;
}

// ---- mock --------------------------------------------------------------------

MockScorer MockScorer::from_json_text(std::string_view json) {
  try {
    auto j = nlohmann::json::parse(json);
    Table t;
    t.scorer_id = j.value("scorer_id", std::string("mock"));
    t.default_score = j.value("default", 0.0);
    for (const auto& e : j.value("scores", nlohmann::json::array())) {
      t.scores[{e.at("query").get<std::string>(), e.at("text").get<std::string>()}] = e.at("score").get<double>();
    }
    for (const auto& q : j.value("fail_queries", nlohmann::json::array())) t.fail_queries.insert(q.get<std::string>());
    return MockScorer(std::move(t));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("mock score table: ") + e.what());
  }
}

MockScorer MockScorer::from_file(const std::filesystem::path& path) { return from_json_text(read_file(path)); }

ScoreVector MockScorer::score(std::string_view query, std::span<const Candidate> candidates,
                              Granularity granularity) const {
  require_candidates(candidates);
  const std::string q(query);
  if (table_.fail_queries.contains(q))
    throw Error(ErrorCode::kRemoteUnavailable, "mock scorer: injected failure for query '" + q + "'");
  ScoreVector out;
  out.scorer_id = table_.scorer_id;
  out.granularity = granularity;
  out.scores.reserve(candidates.size());
  for (const auto& c : candidates) {
    auto it = table_.scores.find({q, c.text});
    if (it == table_.scores.end()) it = table_.scores.find({"*", c.text});
    out.scores.push_back(it != table_.scores.end() ? it->second : table_.default_score);
  }
  return out;
}

// ---- remote ------------------------------------------------------------------

RemoteScorer::RemoteScorer(ScorerConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty()) throw Error(ErrorCode::kRemoteUnavailable, "remote scorer requires an endpoint");
}

std::string RemoteScorer::id() const { return "remote:" + config_.endpoint; }

ScoreVector RemoteScorer::score(std::string_view query, std::span<const Candidate> candidates,
                                Granularity granularity) const {
  require_candidates(candidates);
  nlohmann::json body;
  body["query"] = std::string(query);
  body["granularity"] = std::string(to_string(granularity));
  auto& list = body["candidates"] = nlohmann::json::array();
  for (const auto& c : candidates) list.push_back({{"title", c.title}, {"text", c.text}});

  const auto reply = post_json(config_.endpoint, "/score", body,
                               {config_.timeout_ms, config_.retries, config_.backoff_ms});
  ScoreVector out;
  out.granularity = granularity;
  try {
    const auto& scores = reply.at("scores");
    if (!scores.is_array()) throw Error(ErrorCode::kRemoteMalformed, "/score: 'scores' is not an array");
    for (const auto& s : scores) {
      if (!s.is_number()) throw Error(ErrorCode::kRemoteMalformed, "/score: non-numeric score");
      out.scores.push_back(s.get<double>());
    }
    out.scorer_id = reply.value("scorer_id", id());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kRemoteMalformed, std::string("/score: ") + e.what());
  }
  if (out.scores.size() != candidates.size())
    throw Error(ErrorCode::kRemoteMalformed, "/score returned " + std::to_string(out.scores.size()) +
                                                 " scores for " + std::to_string(candidates.size()) +
                                                 " candidates");
  require_finite(out);
  return out;
}

ScoreVector RemoteScorer::score_batched(std::string_view query, std::span<const Candidate> candidates,
                                        Granularity granularity, std::size_t max_batch) const {
  require_candidates(candidates);
  if (max_batch < 1) throw Error(ErrorCode::kInvalidArgument, "max_batch must be >= 1");
  std::vector<std::span<const Candidate>> chunks;
  for (std::size_t i = 0; i < candidates.size(); i += max_batch)
    chunks.push_back(candidates.subspan(i, std::min(max_batch, candidates.size() - i)));

  std::vector<ScoreVector> parts(chunks.size());
  const std::size_t wave = std::max<std::size_t>(1, config_.concurrency_limit);
  for (std::size_t first = 0; first < chunks.size(); first += wave) {
    const std::size_t last = std::min(chunks.size(), first + wave);
    std::vector<std::future<ScoreVector>> inflight;
    for (std::size_t c = first; c < last; ++c) {
      inflight.push_back(std::async(std::launch::async, [this, query, granularity, chunk = chunks[c]] {
        return score(query, chunk, granularity);
      }));
    }
    // get() in order so the first failing chunk's error is the one reported.
    for (std::size_t c = first; c < last; ++c) parts[c] = inflight[c - first].get();
  }

  ScoreVector out;
  out.granularity = granularity;
  out.scores.reserve(candidates.size());
  for (auto& p : parts) {
    out.scorer_id = p.scorer_id;
    out.scores.insert(out.scores.end(), p.scores.begin(), p.scores.end());
  }
  return out;
}

std::unique_ptr<Scorer> make_scorer(const ScorerConfig& config, const IndexOptions& lexical_options) {
  config.validate();
  switch (config.kind) {
    case ScorerKind::kLexical: return std::make_unique<LexicalScorer>(lexical_options);
    case ScorerKind::kMock: return std::make_unique<MockScorer>(MockScorer::from_file(config.table_path));
    case ScorerKind::kRemote: return std::make_unique<RemoteScorer>(config);
  }
  throw Error(ErrorCode::kConfig, "unknown scorer kind");
}

}  // namespace dslr
