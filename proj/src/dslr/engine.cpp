#include "dslr/engine.hpp"

#include <cmath>
#include <filesystem>

#include "dslr/digest.hpp"
#include "dslr/error.hpp"
#include "dslr/rng.hpp"

namespace dslr {

namespace {

using nlohmann::json;

const json& section(const json& j, const char* key) {
  static const json kEmpty = json::object();
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return kEmpty;
  if (!it->is_object()) throw Error(ErrorCode::kConfig, std::string("config section '") + key + "' must be an object");
  return *it;
}

template <typename T>
std::optional<T> optional_value(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

json optional_json(const auto& opt) { return opt ? json(*opt) : json(nullptr); }

std::string_view reader_kind_name(const RunConfig& c) {
  if (!c.reader_enabled) return "none";
  return c.reader.kind == ReaderConfig::Kind::kRemote ? "remote" : "mock";
}

json digest_of(const std::string& path) {
  if (path.empty()) return nullptr;
  if (!std::filesystem::exists(path)) return json{{"missing", path}};
  return json{{"sha256", sha256_file(path)}};
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  try {
    RunConfig c;
    c.corpus = j.value("corpus", std::string{});
    c.index = j.value("index", std::string{});
    c.dataset = j.value("dataset", std::string{});
    c.out = j.value("out", std::string{});
    c.retrieve_depth = j.value("retrieve_depth", std::size_t{0});

    const auto& an = section(j, "analyzer");
    c.index_options.analyzer.stem = an.value("stem", false);
    const auto& bm = section(j, "bm25");
    c.index_options.bm25.k1 = bm.value("k1", 0.9);
    c.index_options.bm25.b = bm.value("b", 0.4);
    c.abbreviations = section(j, "segmenter").value("abbreviations", std::string{});

    const auto& sc = section(j, "scorer");
    c.scorer.kind = parse_scorer_kind(sc.value("kind", std::string("lexical")));
    c.scorer.endpoint = sc.value("endpoint", std::string{});
    c.scorer.table_path = sc.value("table", std::string{});
    c.scorer.timeout_ms = sc.value("timeout_ms", 30000);
    c.scorer.max_batch = sc.value("max_batch", std::size_t{64});
    c.scorer.concurrency_limit = sc.value("concurrency_limit", std::size_t{4});
    c.scorer.retries = sc.value("retries", 2);
    c.scorer.backoff_ms = sc.value("backoff_ms", 50);

    const auto& rd = section(j, "reader");
    const auto reader_kind = rd.value("kind", std::string("none"));
    if (reader_kind == "none") {
      c.reader_enabled = false;
    } else if (reader_kind == "mock" || reader_kind == "remote") {
      c.reader_enabled = true;
      c.reader.kind = reader_kind == "mock" ? ReaderConfig::Kind::kMock : ReaderConfig::Kind::kRemote;
    } else {
      throw Error(ErrorCode::kConfig, "unknown reader kind '" + reader_kind + "'");
    }
    c.reader.endpoint = rd.value("endpoint", std::string{});
    c.reader.table_path = rd.value("table", std::string{});
    c.reader.max_tokens = rd.value("max_tokens", 100);
    c.reader.temperature = rd.value("temperature", 0.0);
    c.reader.timeout_ms = rd.value("timeout_ms", 60000);

    const auto& tk = section(j, "tokenizer");
    c.tokenizer.kind = parse_tokenizer_kind(tk.value("kind", std::string("whitespace")));
    c.tokenizer.endpoint = tk.value("endpoint", std::string{});
    c.tokenizer.timeout_ms = tk.value("timeout_ms", 10000);

    const auto& rf = section(j, "refine");
    c.refine.mode = parse_mode(rf.value("mode", std::string("dslr")));
    if (auto it = rf.find("threshold"); it != rf.end() && !it->is_null()) c.refine.threshold = json_to_double(*it);
    c.threshold_file = rf.value("threshold_file", std::string{});
    c.refine.strict = rf.value("strict", false);
    c.refine.top_n_docs = rf.value("top_n", std::size_t{1});
    c.refine.budget_tokens = optional_value<std::size_t>(rf, "budget");
    c.refine.seed = optional_value<std::uint64_t>(rf, "seed");
    c.refine.rerank_m = optional_value<std::size_t>(rf, "rerank_m");

    const auto& cal = section(j, "calibration");
    c.calibration_datasets = cal.value("datasets", std::vector<std::string>{});
    c.sample_size = cal.value("sample_size", std::size_t{1000});
    c.percentile = cal.value("percentile", 90.0);
    c.histogram_bins = cal.value("histogram_bins", std::size_t{20});

    const auto& sw = section(j, "sweep");
    if (sw.contains("percentiles")) c.sweep_percentiles = sw.at("percentiles").get<std::vector<double>>();

    const auto& ev = section(j, "eval");
    c.eval.workers = ev.value("workers", std::size_t{1});
    const auto timing = ev.value("timing", std::string("wall"));
    if (timing != "wall" && timing != "none") throw Error(ErrorCode::kConfig, "eval.timing must be wall or none");
    c.eval.timing = timing == "none" ? Timing::kNone : Timing::kWall;
    c.eval.max_failure_rate = ev.value("max_failure_rate", 0.05);
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("config: ") + e.what());
  }
}

json RunConfig::to_json() const {
  json j;
  j["corpus"] = corpus;
  j["index"] = index;
  j["dataset"] = dataset;
  j["out"] = out;
  j["retrieve_depth"] = retrieve_depth;
  j["analyzer"] = {{"stem", index_options.analyzer.stem}};
  j["bm25"] = {{"k1", index_options.bm25.k1}, {"b", index_options.bm25.b}};
  j["segmenter"] = {{"abbreviations", abbreviations}};
  j["scorer"] = {{"kind", std::string(to_string(scorer.kind))},
                 {"endpoint", scorer.endpoint},
                 {"table", scorer.table_path},
                 {"timeout_ms", scorer.timeout_ms},
                 {"max_batch", scorer.max_batch},
                 {"concurrency_limit", scorer.concurrency_limit},
                 {"retries", scorer.retries},
                 {"backoff_ms", scorer.backoff_ms}};
  j["reader"] = {{"kind", std::string(reader_kind_name(*this))},
                 {"endpoint", reader.endpoint},
                 {"table", reader.table_path},
                 {"max_tokens", reader.max_tokens},
                 {"temperature", reader.temperature},
                 {"timeout_ms", reader.timeout_ms}};
  j["tokenizer"] = {{"kind", std::string(to_string(tokenizer.kind))},
                    {"endpoint", tokenizer.endpoint},
                    {"timeout_ms", tokenizer.timeout_ms}};
  j["refine"] = {{"mode", std::string(to_string(refine.mode))},
                 {"threshold", json_number(refine.threshold)},
                 {"threshold_file", threshold_file},
                 {"strict", refine.strict},
                 {"top_n", refine.top_n_docs},
                 {"budget", optional_json(refine.budget_tokens)},
                 {"seed", optional_json(refine.seed)},
                 {"rerank_m", optional_json(refine.rerank_m)},
                 {"rng", std::string(kRngAlgorithm)}};
  j["calibration"] = {{"datasets", calibration_datasets},
                      {"sample_size", sample_size},
                      {"percentile", percentile},
                      {"histogram_bins", histogram_bins}};
  j["sweep"] = {{"percentiles", sweep_percentiles}};
  j["eval"] = {{"workers", eval.workers},
               {"timing", eval.timing == Timing::kNone ? "none" : "wall"},
               {"max_failure_rate", eval.max_failure_rate}};
  return j;
}

Engine::Engine(RunConfig config) : config_(std::move(config)) {
  if (!config_.threshold_file.empty()) {
    config_.refine.threshold = threshold_spec_from_json(json::parse(read_file(config_.threshold_file))).value;
  }
  config_.refine.validate();
  if (config_.eval.workers < 1) throw Error(ErrorCode::kConfig, "workers must be >= 1");

  if (!config_.index.empty() && std::filesystem::exists(config_.index)) {
    index_ = std::make_unique<CorpusIndex>(CorpusIndex::load(config_.index));
  } else if (!config_.corpus.empty()) {
    index_ = std::make_unique<CorpusIndex>(CorpusIndex::build(read_corpus_jsonl(config_.corpus), config_.index_options));
  } else if (!config_.index.empty()) {
    throw Error(ErrorCode::kIo, "index file not found: " + config_.index);
  } else {
    throw Error(ErrorCode::kConfig, "either an index or a corpus is required");
  }
  if (!config_.abbreviations.empty()) segmenter_ = Segmenter::from_file(config_.abbreviations);
  scorer_ = make_scorer(config_.scorer, index_->options());
  tokenizer_ = make_tokenizer(config_.tokenizer);
  if (config_.reader_enabled) reader_ = make_reader(config_.reader);
}

Engine::~Engine() = default;

std::string Engine::fingerprint() const {
  auto j = config_.to_json();
  j.erase("out");
  for (const char* key : {"corpus", "index", "dataset"}) j[key] = digest_of(j[key].get<std::string>());
  j["segmenter"]["abbreviations"] = digest_of(config_.abbreviations);
  j["scorer"]["table"] = digest_of(config_.scorer.table_path);
  j["reader"]["table"] = digest_of(config_.reader.table_path);
  j["refine"]["threshold_file"] = digest_of(config_.threshold_file);
  auto& cal = j["calibration"]["datasets"];
  for (auto& d : cal) d = digest_of(d.get<std::string>());
  return sha256_hex(j.dump());
}

RetrievalResult Engine::retrieve(const std::string& query, std::size_t n, std::string query_id) const {
  return dslr::retrieve(*index_, query, n, std::move(query_id));
}

Pipeline Engine::pipeline(bool with_reader) const {
  if (with_reader && !reader_) throw Error(ErrorCode::kConfig, "evaluation requires a reader (mock or remote)");
  return Pipeline{*index_, segmenter_, *scorer_, with_reader ? reader_.get() : nullptr, *tokenizer_,
                  config_.scorer.max_batch};
}

std::vector<QaExample> Engine::load_dataset() const {
  if (config_.dataset.empty()) throw Error(ErrorCode::kConfig, "a dataset is required");
  return load_dataset_jsonl(config_.dataset);
}

RunOutput Engine::refine_dataset() const {
  auto options = config_.eval;
  options.keep_contexts = true;
  options.retrieve_depth = std::max(config_.retrieve_depth, config_.refine.top_n_docs);
  const auto dataset = load_dataset();
  return run_eval(pipeline(false), dataset, config_.refine, options, fingerprint());
}

RunOutput Engine::evaluate() const {
  auto options = config_.eval;
  options.retrieve_depth = std::max(config_.retrieve_depth, config_.refine.top_n_docs);
  const auto dataset = load_dataset();
  return run_eval(pipeline(true), dataset, config_.refine, options, fingerprint());
}

Calibration Engine::calibrate() const {
  std::vector<NamedDataset> datasets;
  auto paths = config_.calibration_datasets;
  if (paths.empty() && !config_.dataset.empty()) paths.push_back(config_.dataset);
  if (paths.empty()) throw Error(ErrorCode::kConfig, "calibration requires at least one dataset");
  if (!config_.refine.seed) throw Error(ErrorCode::kConfig, "calibration requires a seed");
  for (const auto& p : paths)
    datasets.push_back({std::filesystem::path(p).filename().string(), load_dataset_jsonl(p)});
  return calibrate_threshold(datasets, *index_, *scorer_, segmenter_, config_.sample_size, config_.percentile,
                             *config_.refine.seed, config_.scorer.max_batch);
}

SweepResult Engine::sweep() const {
  const auto calibration = calibrate();
  auto options = config_.eval;
  options.retrieve_depth = std::max(config_.retrieve_depth, config_.refine.top_n_docs);
  const auto dataset = load_dataset();
  return dslr::sweep(pipeline(true), dataset, config_.refine, options, calibration.pool,
                     config_.sweep_percentiles);
}

}  // namespace dslr
