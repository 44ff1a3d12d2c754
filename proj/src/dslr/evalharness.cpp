#include "dslr/evalharness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

#include "dslr/digest.hpp"
#include "dslr/error.hpp"
#include "dslr/text.hpp"

namespace dslr {

std::vector<QaExample> parse_dataset_jsonl(std::string_view content) {
  std::vector<QaExample> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    auto end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    auto line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (text::trim(line).empty()) continue;
    const auto where = "dataset line " + std::to_string(line_no) + ": ";
    QaExample ex;
    try {
      auto j = nlohmann::json::parse(line);
      ex.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
      ex.question = j.at("question").get<std::string>();
      ex.answers = j.at("answers").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParse, where + e.what());
    }
    if (ex.question.empty()) throw Error(ErrorCode::kParse, where + "empty question");
    if (ex.answers.empty()) throw Error(ErrorCode::kParse, where + "answers must be non-empty");
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<QaExample> load_dataset_jsonl(const std::filesystem::path& path) {
  return parse_dataset_jsonl(read_file(path));
}

std::string normalize(std::string_view s) {
  std::string spaced;
  spaced.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    const char32_t cp = text::decode(s, i);
    if (text::is_alnum(cp)) {
      text::append_utf8(spaced, text::to_lower(cp));
    } else {
      spaced.push_back(' ');
    }
  }
  return text::collapse_whitespace(spaced);
}

namespace {

bool contains_any(std::string_view haystack, std::span<const std::string> answers) {
  const auto norm = normalize(haystack);
  for (const auto& a : answers) {
    const auto na = normalize(a);
    if (!na.empty() && norm.find(na) != std::string::npos) return true;
  }
  return false;
}

double ms_between(std::chrono::steady_clock::time_point a, std::chrono::steady_clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

}  // namespace

bool accuracy_contains(std::string_view prediction, std::span<const std::string> answers) {
  return contains_any(prediction, answers);
}

bool hit_rate(const RefinedContext& context, std::span<const std::string> answers) {
  return contains_any(context.rendered, answers);
}

bool above_failure_ceiling(const RunReport& report, double max_failure_rate) noexcept {
  return report.failure_rate > max_failure_rate;
}

QueryOutcome evaluate_query(const Pipeline& pipeline, const QaExample& example, const RefineConfig& config,
                            const EvalOptions& options) {
  using Clock = std::chrono::steady_clock;
  QueryOutcome outcome;
  auto& rec = outcome.record;
  rec.query_id = example.id;
  rec.mode = config.mode;
  try {
    StageTimings stages;
    const RefineEnv env{pipeline.segmenter, pipeline.tokenizer, pipeline.max_batch, &stages};
    const std::size_t depth = std::max(options.retrieve_depth, config.top_n_docs);

    const auto t_start = Clock::now();
    auto retrieval = retrieve(pipeline.index, example.question, depth, example.id);
    const auto t_retrieved = Clock::now();
    auto context = refine(example.question, retrieval, pipeline.scorer, config, env);
    const auto t_refined = Clock::now();

    rec.threshold = context.threshold_used;
    rec.context_tokens = context.token_count;
    rec.hit = hit_rate(context, example.answers);

    double generate_ms = 0.0;
    if (pipeline.reader != nullptr) {
      const auto prompt = render_qa_prompt(context.rendered, example.question);
      const auto t_gen = Clock::now();
      auto answer = pipeline.reader->generate(prompt);
      generate_ms = ms_between(t_gen, Clock::now());
      rec.prediction = std::move(answer.text);
      rec.correct = accuracy_contains(rec.prediction, example.answers);
    }
    const auto t_end = Clock::now();

    if (options.timing == Timing::kWall) {
      const double refine_ms = ms_between(t_retrieved, t_refined);
      rec.breakdown[std::string(kStageRetrieve)] = ms_between(t_start, t_retrieved);
      rec.breakdown[std::string(kStageDecompose)] = stages.decompose_ms;
      rec.breakdown[std::string(kStageScore)] = stages.score_ms;
      rec.breakdown[std::string(kStageReconstruct)] =
          std::max(0.0, refine_ms - stages.decompose_ms - stages.score_ms);
      rec.breakdown[std::string(kStageGenerate)] = generate_ms;
      rec.e2e_latency_ms = ms_between(t_start, t_end);
    } else {
      for (auto stage : {kStageRetrieve, kStageDecompose, kStageScore, kStageReconstruct, kStageGenerate})
        rec.breakdown[std::string(stage)] = 0.0;
      rec.e2e_latency_ms = 0.0;
    }
    if (options.keep_contexts) outcome.context = std::move(context);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfig) throw;
    rec.error = e.what();
    rec.error_kind = error_code_name(e.code());
  } catch (const std::exception& e) {
    rec.error = e.what();
    rec.error_kind = error_code_name(ErrorCode::kInternal);
  }
  return outcome;
}

RunReport aggregate(std::span<const EvalRecord> records, std::string config_fingerprint) {
  RunReport r;
  r.config_fingerprint = std::move(config_fingerprint);
  double correct = 0, hits = 0, tokens = 0, e2e = 0;
  for (const auto& rec : records) {
    if (rec.error) {
      ++r.n_errors;
      continue;
    }
    ++r.n_queries;
    correct += rec.correct ? 1 : 0;
    hits += rec.hit ? 1 : 0;
    tokens += static_cast<double>(rec.context_tokens);
    e2e += rec.e2e_latency_ms;
  }
  if (r.n_queries > 0) {
    const double n = static_cast<double>(r.n_queries);
    r.accuracy = correct / n;
    r.hit_rate = hits / n;
    r.avg_tokens = tokens / n;
    r.avg_e2e_ms = e2e / n;
  }
  if (!records.empty()) r.failure_rate = static_cast<double>(r.n_errors) / static_cast<double>(records.size());
  return r;
}

RunOutput run_eval(const Pipeline& pipeline, std::span<const QaExample> dataset, const RefineConfig& config,
                   const EvalOptions& options, std::string config_fingerprint) {
  config.validate();
  if (options.workers < 1) throw Error(ErrorCode::kConfig, "workers must be >= 1");
  RunOutput out;
  std::vector<QueryOutcome> outcomes(dataset.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr fatal;
  std::mutex fatal_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < dataset.size(); i = next++) {
      try {
        outcomes[i] = evaluate_query(pipeline, dataset[i], config, options);
      } catch (...) {
        std::lock_guard lock(fatal_mutex);
        if (!fatal) fatal = std::current_exception();
        next = dataset.size();
      }
    }
  };
  const std::size_t n_workers = std::min(options.workers, std::max<std::size_t>(1, dataset.size()));
  if (n_workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(work);
  }
  if (fatal) std::rethrow_exception(fatal);

  out.records.reserve(outcomes.size());
  for (auto& o : outcomes) {
    out.records.push_back(std::move(o.record));
    out.contexts.push_back(std::move(o.context));
  }
  out.report = aggregate(out.records, std::move(config_fingerprint));
  return out;
}

nlohmann::json json_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return nullptr;
  return v;
}

double json_to_double(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  throw Error(ErrorCode::kParse, "expected a number or \"inf\"/\"-inf\", got " + j.dump());
}

nlohmann::json to_json(const EvalRecord& r) {
  nlohmann::json j;
  j["query_id"] = r.query_id;
  j["mode"] = std::string(to_string(r.mode));
  j["threshold"] = r.threshold ? json_number(*r.threshold) : nlohmann::json(nullptr);
  if (r.error) {
    j["error"] = *r.error;
    j["error_kind"] = r.error_kind.value_or("Internal");
    return j;
  }
  j["prediction"] = r.prediction;
  j["correct"] = r.correct;
  j["hit"] = r.hit;
  j["context_tokens"] = r.context_tokens;
  j["e2e_latency_ms"] = r.e2e_latency_ms;
  auto& b = j["breakdown"] = nlohmann::json::object();
  for (const auto& [stage, ms] : r.breakdown) b[stage] = ms;
  return j;
}

nlohmann::json to_json(const RunReport& r) {
  return {
      {"accuracy", r.accuracy},
      {"hit_rate", r.hit_rate},
      {"avg_tokens", r.avg_tokens},
      {"avg_e2e_ms", r.avg_e2e_ms},
      {"n_queries", r.n_queries},
      {"n_errors", r.n_errors},
      {"failure_rate", r.failure_rate},
      {"config_fingerprint", r.config_fingerprint},
      {"normalization", "lowercase; non-alphanumeric to space; whitespace collapsed (containment match). "
                        "Answer normalization is not standardized across QA papers; compare with care."},
  };
}

nlohmann::json refined_record_json(std::string_view query_id, const RefinedContext& ctx) {
  nlohmann::json j;
  j["query_id"] = std::string(query_id);
  j["mode"] = std::string(to_string(ctx.mode));
  j["threshold"] = ctx.threshold_used ? json_number(*ctx.threshold_used) : nlohmann::json(nullptr);
  j["rendered"] = ctx.rendered;
  j["token_count"] = ctx.token_count;
  j["kept"] = ctx.kept_count;
  j["dropped"] = ctx.dropped_count;
  auto& docs = j["per_doc"] = nlohmann::json::array();
  for (const auto& block : ctx.per_doc) {
    nlohmann::json d;
    d["rank"] = block.rank;
    d["doc_id"] = block.doc_id;
    d["title"] = block.title;
    auto& sentences = d["sentences"] = nlohmann::json::array();
    for (const auto& s : block.kept) {
      nlohmann::json sj{{"position", s.sentence.position}, {"text", s.sentence.text}};
      if (ctx.scored) {
        sj["score"] = s.score;
        sj["rank"] = s.rank;
      }
      sentences.push_back(std::move(sj));
    }
    docs.push_back(std::move(d));
  }
  return j;
}

}  // namespace dslr
