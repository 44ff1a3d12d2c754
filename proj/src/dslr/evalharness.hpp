#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dslr/corpus_index.hpp"
#include "dslr/reader.hpp"
#include "dslr/refine.hpp"
#include "dslr/scorers.hpp"
#include "dslr/segmenter.hpp"
#include "dslr/tokenizer.hpp"

namespace dslr {

struct QaExample {
  std::string id;
  std::string question;
  std::vector<std::string> answers;
};

/// JSON-lines {"id","question","answers":[...]}; Parse errors name the line.
std::vector<QaExample> parse_dataset_jsonl(std::string_view content);
std::vector<QaExample> load_dataset_jsonl(const std::filesystem::path& path);

/// Lowercase, punctuation to spaces, whitespace collapsed and trimmed.
std::string normalize(std::string_view text);

/// True iff some normalized answer is a substring of the normalized
/// prediction. Answers that normalize to "" never match.
bool accuracy_contains(std::string_view prediction, std::span<const std::string> answers);

/// Whether the rendered context itself contains a gold answer.
bool hit_rate(const RefinedContext& context, std::span<const std::string> answers);

inline constexpr std::string_view kStageRetrieve = "retrieve";
inline constexpr std::string_view kStageDecompose = "decompose";
inline constexpr std::string_view kStageScore = "score";
inline constexpr std::string_view kStageReconstruct = "reconstruct";
inline constexpr std::string_view kStageGenerate = "generate";

struct EvalRecord {
  std::string query_id;
  Mode mode = Mode::kDslr;
  std::optional<double> threshold;
  std::string prediction;
  bool correct = false;
  bool hit = false;
  std::size_t context_tokens = 0;
  double e2e_latency_ms = 0.0;
  std::map<std::string, double, std::less<>> breakdown;
  /// Set when the query failed; the metric fields are then meaningless.
  std::optional<std::string> error;
  std::optional<std::string> error_kind;
};

struct RunReport {
  double accuracy = 0.0;
  double hit_rate = 0.0;
  double avg_tokens = 0.0;
  double avg_e2e_ms = 0.0;
  std::size_t n_queries = 0;  // successful queries the averages run over
  std::size_t n_errors = 0;
  double failure_rate = 0.0;
  std::string config_fingerprint;
};

enum class Timing { kWall, kNone };

struct EvalOptions {
  std::size_t workers = 1;
  std::size_t retrieve_depth = 0;  // 0: use the refine config's top_n_docs
  Timing timing = Timing::kWall;
  double max_failure_rate = 0.05;
  bool keep_contexts = false;
};

/// Borrowed components of one evaluation pipeline.
struct Pipeline {
  const CorpusIndex& index;
  const Segmenter& segmenter;
  const Scorer& scorer;
  const Reader* reader = nullptr;  // null: refine only, no generation
  const Tokenizer& tokenizer;
  std::size_t max_batch = 64;
};

struct QueryOutcome {
  EvalRecord record;
  std::optional<RefinedContext> context;
};

struct RunOutput {
  RunReport report;
  std::vector<EvalRecord> records;              // dataset order
  std::vector<std::optional<RefinedContext>> contexts;  // filled when keep_contexts
};

bool above_failure_ceiling(const RunReport& report, double max_failure_rate) noexcept;

/// retrieve -> refine -> prompt -> generate -> metrics for one query. Errors
/// raised by any stage are captured in the record.
QueryOutcome evaluate_query(const Pipeline& pipeline, const QaExample& example, const RefineConfig& config,
                            const EvalOptions& options);

/// Runs the dataset on a bounded worker pool; records come back in dataset
/// order. Configuration errors throw before any query runs.
RunOutput run_eval(const Pipeline& pipeline, std::span<const QaExample> dataset, const RefineConfig& config,
                   const EvalOptions& options, std::string config_fingerprint = {});

/// Averages over the successful records only.
RunReport aggregate(std::span<const EvalRecord> records, std::string config_fingerprint = {});

nlohmann::json to_json(const EvalRecord& record);
nlohmann::json to_json(const RunReport& report);
nlohmann::json refined_record_json(std::string_view query_id, const RefinedContext& context);

/// Doubles as JSON numbers, with +-inf as the strings "inf"/"-inf".
nlohmann::json json_number(double v);
double json_to_double(const nlohmann::json& j);

}  // namespace dslr
