#include "dslr/dslr.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <string>
#include <utility>

#include <json.hpp>

#include "dslr/calibrate.hpp"
#include "dslr/corpus_index.hpp"
#include "dslr/engine.hpp"
#include "dslr/error.hpp"
#include "dslr/segmenter.hpp"
#include "dslr/tokenizer.hpp"

struct dslr_index {
  dslr::CorpusIndex index;
};

struct dslr_engine {
  std::unique_ptr<dslr::Engine> engine;
};

namespace {

using nlohmann::json;

thread_local std::string g_last_error;

dslr_status_t to_status(dslr::ErrorCode code) { return static_cast<dslr_status_t>(static_cast<int>(code)); }

template <typename F>
dslr_status_t guarded(F&& f) {
  g_last_error.clear();
  try {
    return f();
  } catch (const dslr::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const json::exception& e) {
    g_last_error = e.what();
    return DSLR_E_PARSE;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return DSLR_E_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DSLR_E_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size());
  out[s.size()] = '\0';
  return out;
}

void require(const void* p, const char* what) {
  if (!p) throw dslr::Error(dslr::ErrorCode::kInvalidArgument, std::string(what) + " must not be null");
}

json retrieval_json(const dslr::RetrievalResult& r) {
  json hits = json::array();
  for (const auto& h : r.hits) hits.push_back({{"doc_id", h.doc.id}, {"title", h.doc.title}, {"score", h.score}});
  return {{"query_id", r.query_id}, {"n_requested", r.n_requested}, {"hits", std::move(hits)}};
}

dslr::ErrorCode code_from_name(const std::string& name) {
  for (int c = static_cast<int>(dslr::ErrorCode::kInvalidArgument); c <= static_cast<int>(dslr::ErrorCode::kInternal);
       ++c) {
    if (name == dslr::error_code_name(static_cast<dslr::ErrorCode>(c))) return static_cast<dslr::ErrorCode>(c);
  }
  return dslr::ErrorCode::kInternal;
}

// Every query failed: surface the first failure. Above the ceiling: partial.
dslr_status_t run_status(const dslr::RunOutput& out, double ceiling) {
  if (out.report.n_queries == 0 && out.report.n_errors > 0) {
    for (const auto& r : out.records) {
      if (r.error) {
        g_last_error = *r.error;
        return to_status(code_from_name(r.error_kind.value_or("Internal")));
      }
    }
  }
  if (dslr::above_failure_ceiling(out.report, ceiling)) {
    g_last_error = "failure rate " + std::to_string(out.report.failure_rate) + " above ceiling " +
                   std::to_string(ceiling);
    return DSLR_E_PARTIAL_FAILURE;
  }
  return DSLR_OK;
}

}  // namespace

extern "C" {

const char* dslr_version(void) { return "1.0.0"; }

const char* dslr_status_string(dslr_status_t status) {
  if (status == DSLR_OK) return "Ok";
  if (status == DSLR_E_PARTIAL_FAILURE) return "PartialFailure";
  if (status >= DSLR_E_INVALID_ARGUMENT && status <= DSLR_E_INTERNAL)
    return dslr::error_code_name(static_cast<dslr::ErrorCode>(status));
  return "Unknown";
}

const char* dslr_last_error(void) { return g_last_error.c_str(); }

void dslr_string_free(char* s) { std::free(s); }

dslr_status_t dslr_index_build_jsonl(const char* corpus_path, const char* options_json, dslr_index_t** out) {
  return guarded([&] {
    require(corpus_path, "corpus_path");
    require(out, "out");
    dslr::IndexOptions options;
    if (options_json) {
      const auto j = json::parse(options_json);
      options.analyzer.stem = j.value("analyzer", json::object()).value("stem", false);
      const auto bm = j.value("bm25", json::object());
      options.bm25.k1 = bm.value("k1", options.bm25.k1);
      options.bm25.b = bm.value("b", options.bm25.b);
    }
    const auto docs = dslr::read_corpus_jsonl(corpus_path);
    *out = new dslr_index{dslr::CorpusIndex::build(docs, options)};
    return DSLR_OK;
  });
}

dslr_status_t dslr_index_load(const char* path, dslr_index_t** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new dslr_index{dslr::CorpusIndex::load(path)};
    return DSLR_OK;
  });
}

dslr_status_t dslr_index_save(const dslr_index_t* index, const char* path) {
  return guarded([&] {
    require(index, "index");
    require(path, "path");
    index->index.save(path);
    return DSLR_OK;
  });
}

dslr_status_t dslr_index_stats(const dslr_index_t* index, size_t* doc_count, double* avg_doc_len,
                               size_t* term_count) {
  return guarded([&] {
    require(index, "index");
    if (doc_count) *doc_count = index->index.doc_count();
    if (avg_doc_len) *avg_doc_len = index->index.avg_doc_len();
    if (term_count) *term_count = index->index.term_count();
    return DSLR_OK;
  });
}

void dslr_index_free(dslr_index_t* index) { delete index; }

dslr_status_t dslr_retrieve(const dslr_index_t* index, const char* query, size_t n, char** out_json) {
  return guarded([&] {
    require(index, "index");
    require(query, "query");
    require(out_json, "out_json");
    *out_json = dup_string(retrieval_json(dslr::retrieve(index->index, query, n)).dump());
    return DSLR_OK;
  });
}

dslr_status_t dslr_segment(const char* text, const char* abbreviations_path, char** out_json) {
  return guarded([&] {
    require(text, "text");
    require(out_json, "out_json");
    const auto segmenter = abbreviations_path ? dslr::Segmenter::from_file(abbreviations_path) : dslr::Segmenter();
    json arr = json::array();
    for (const auto& s : segmenter.decompose_text(text, ""))
      arr.push_back({{"position", s.position}, {"text", s.text}, {"begin", s.begin}, {"end", s.end}});
    *out_json = dup_string(arr.dump());
    return DSLR_OK;
  });
}

dslr_status_t dslr_percentile(const double* values, size_t n, double p, double* out) {
  return guarded([&] {
    require(out, "out");
    if (n > 0) require(values, "values");
    *out = dslr::percentile(std::span<const double>(values, n), p);
    return DSLR_OK;
  });
}

dslr_status_t dslr_count_tokens(const char* text, const char* tokenizer_json, size_t* out) {
  return guarded([&] {
    require(text, "text");
    require(out, "out");
    dslr::TokenizerConfig config;
    if (tokenizer_json) {
      const auto j = json::parse(tokenizer_json);
      config.kind = dslr::parse_tokenizer_kind(j.value("kind", std::string("whitespace")));
      config.endpoint = j.value("endpoint", std::string{});
      config.timeout_ms = j.value("timeout_ms", config.timeout_ms);
    }
    *out = dslr::count_tokens(text, config);
    return DSLR_OK;
  });
}

dslr_status_t dslr_engine_create(const char* config_json, dslr_engine_t** out) {
  return guarded([&] {
    require(config_json, "config_json");
    require(out, "out");
    json j;
    try {
      j = json::parse(config_json);
    } catch (const json::exception& e) {
      throw dslr::Error(dslr::ErrorCode::kConfig, std::string("config is not valid JSON: ") + e.what());
    }
    auto engine = std::make_unique<dslr::Engine>(dslr::RunConfig::from_json(j));
    *out = new dslr_engine{std::move(engine)};
    return DSLR_OK;
  });
}

void dslr_engine_free(dslr_engine_t* engine) { delete engine; }

dslr_status_t dslr_engine_effective_config(const dslr_engine_t* engine, char** out_json) {
  return guarded([&] {
    require(engine, "engine");
    require(out_json, "out_json");
    auto j = engine->engine->config().to_json();
    j["config_fingerprint"] = engine->engine->fingerprint();
    *out_json = dup_string(j.dump(2) + "\n");
    return DSLR_OK;
  });
}

dslr_status_t dslr_engine_fingerprint(const dslr_engine_t* engine, char** out_hex) {
  return guarded([&] {
    require(engine, "engine");
    require(out_hex, "out_hex");
    *out_hex = dup_string(engine->engine->fingerprint());
    return DSLR_OK;
  });
}

dslr_status_t dslr_engine_retrieve(const dslr_engine_t* engine, const char* query, size_t n, char** out_json) {
  return guarded([&] {
    require(engine, "engine");
    require(query, "query");
    require(out_json, "out_json");
    *out_json = dup_string(retrieval_json(engine->engine->retrieve(query, n)).dump());
    return DSLR_OK;
  });
}

dslr_status_t dslr_engine_refine(const dslr_engine_t* engine, char** out_jsonl, char** out_report) {
  return guarded([&] {
    require(engine, "engine");
    require(out_jsonl, "out_jsonl");
    require(out_report, "out_report");
    const auto out = engine->engine->refine_dataset();
    std::string lines;
    for (std::size_t i = 0; i < out.records.size(); ++i) {
      const auto& rec = out.records[i];
      json j;
      if (rec.error) {
        j = {{"query_id", rec.query_id}, {"error", *rec.error}, {"error_kind", rec.error_kind.value_or("Internal")}};
      } else {
        j = dslr::refined_record_json(rec.query_id, *out.contexts[i]);
      }
      lines += j.dump();
      lines += '\n';
    }
    auto report = dslr::to_json(out.report);
    report.erase("accuracy");
    report.erase("avg_e2e_ms");
    *out_jsonl = dup_string(lines);
    *out_report = dup_string(report.dump(2) + "\n");
    return run_status(out, engine->engine->config().eval.max_failure_rate);
  });
}

dslr_status_t dslr_engine_evaluate(const dslr_engine_t* engine, char** out_jsonl, char** out_report) {
  return guarded([&] {
    require(engine, "engine");
    require(out_jsonl, "out_jsonl");
    require(out_report, "out_report");
    const auto out = engine->engine->evaluate();
    std::string lines;
    for (const auto& rec : out.records) {
      lines += dslr::to_json(rec).dump();
      lines += '\n';
    }
    *out_jsonl = dup_string(lines);
    *out_report = dup_string(dslr::to_json(out.report).dump(2) + "\n");
    return run_status(out, engine->engine->config().eval.max_failure_rate);
  });
}

dslr_status_t dslr_engine_calibrate(const dslr_engine_t* engine, char** out_spec, char** out_histogram) {
  return guarded([&] {
    require(engine, "engine");
    require(out_spec, "out_spec");
    const auto cal = engine->engine->calibrate();
    *out_spec = dup_string(dslr::to_json(cal.spec).dump(2) + "\n");
    if (out_histogram) {
      json bins = json::array();
      for (const auto& b : dslr::score_histogram(cal.pool, engine->engine->config().histogram_bins))
        bins.push_back({{"lo", b.lo}, {"hi", b.hi}, {"count", b.count}});
      *out_histogram = dup_string(json{{"scorer_id", cal.spec.scorer_id}, {"bins", bins}}.dump(2) + "\n");
    }
    return DSLR_OK;
  });
}

dslr_status_t dslr_engine_sweep(const dslr_engine_t* engine, char** out_csv, char** out_json) {
  return guarded([&] {
    require(engine, "engine");
    require(out_csv, "out_csv");
    const auto result = engine->engine->sweep();
    *out_csv = dup_string(dslr::sweep_csv(result));
    if (out_json) {
      json points = json::array();
      for (const auto& p : result.points)
        points.push_back({{"percentile", p.percentile},
                          {"threshold", dslr::json_number(p.threshold)},
                          {"accuracy", p.accuracy},
                          {"avg_tokens", p.avg_tokens}});
      *out_json = dup_string(json{{"points", points},
                                  {"oracle_accuracy", result.oracle_accuracy},
                                  {"oracle_avg_tokens", result.oracle_avg_tokens},
                                  {"config_fingerprint", engine->engine->fingerprint()}}
                                 .dump(2) +
                             "\n");
    }
    return DSLR_OK;
  });
}

}  // extern "C"
