#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dslr/calibrate.hpp"
#include "dslr/corpus_index.hpp"
#include "dslr/evalharness.hpp"
#include "dslr/reader.hpp"
#include "dslr/refine.hpp"
#include "dslr/scorers.hpp"
#include "dslr/segmenter.hpp"
#include "dslr/tokenizer.hpp"

namespace dslr {

/// Fully resolved run configuration. Serializes to the "effective config"
/// emitted next to every output.
struct RunConfig {
  std::string corpus;   // JSON-lines corpus; used when `index` is empty
  std::string index;    // DSLRIDX1 file
  std::string dataset;  // JSON-lines QA dataset
  std::string out;

  IndexOptions index_options;
  std::string abbreviations;  // empty: built-in list

  ScorerConfig scorer;
  ReaderConfig reader;
  bool reader_enabled = false;
  TokenizerConfig tokenizer;

  RefineConfig refine;
  std::string threshold_file;
  std::size_t retrieve_depth = 0;

  std::vector<std::string> calibration_datasets;  // empty: [dataset]
  std::size_t sample_size = 1000;
  double percentile = 90.0;
  std::size_t histogram_bins = 20;
  std::vector<double> sweep_percentiles{10, 20, 30, 40, 50, 60, 70, 80, 90};

  EvalOptions eval;

  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Owns the components named by a RunConfig.
class Engine {
 public:
  explicit Engine(RunConfig config);
  ~Engine();

  const RunConfig& config() const noexcept { return config_; }
  const CorpusIndex& index() const noexcept { return *index_; }
  const Scorer& scorer() const noexcept { return *scorer_; }
  const Segmenter& segmenter() const noexcept { return segmenter_; }
  const Tokenizer& tokenizer() const noexcept { return *tokenizer_; }

  /// SHA-256 of the effective config with input paths replaced by content digests.
  std::string fingerprint() const;

  RetrievalResult retrieve(const std::string& query, std::size_t n, std::string query_id = {}) const;

  /// Refines every dataset query (no generation); contexts are kept.
  RunOutput refine_dataset() const;
  /// Full pipeline over the dataset; requires a reader.
  RunOutput evaluate() const;
  Calibration calibrate() const;
  SweepResult sweep() const;

 private:
  Pipeline pipeline(bool with_reader) const;
  std::vector<QaExample> load_dataset() const;

  RunConfig config_;
  std::unique_ptr<CorpusIndex> index_;
  Segmenter segmenter_;
  std::unique_ptr<Scorer> scorer_;
  std::unique_ptr<Tokenizer> tokenizer_;
  std::unique_ptr<Reader> reader_;
};

}  // namespace dslr
