// dslr: batch command-line front end over the libdslr C API.
//
// Exit codes: 0 ok, 1 internal error, 2 bad input, 3 upstream service failure,
// 4 failure rate above the ceiling, 64 usage.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dslr/dslr.h"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitInput = 2;
constexpr int kExitUpstream = 3;
constexpr int kExitPartial = 4;
constexpr int kExitUsage = 64;

int exit_code(dslr_status_t s) {
  switch (s) {
    case DSLR_OK: return kExitOk;
    case DSLR_E_PARTIAL_FAILURE: return kExitPartial;
    case DSLR_E_REMOTE_UNAVAILABLE:
    case DSLR_E_REMOTE_MALFORMED:
    case DSLR_E_TIMEOUT: return kExitUpstream;
    case DSLR_E_CONFIG:
    case DSLR_E_INVALID_ARGUMENT: return kExitUsage;
    case DSLR_E_INTERNAL: return kExitInternal;
    default: return kExitInput;
  }
}

int fail(dslr_status_t s) {
  std::fprintf(stderr, "dslr: %s: %s\n", dslr_status_string(s), dslr_last_error());
  return exit_code(s);
}

// Owns a string handed out by the library.
struct Owned {
  char* p = nullptr;
  Owned() = default;
  Owned(const Owned&) = delete;
  Owned& operator=(const Owned&) = delete;
  ~Owned() { dslr_string_free(p); }
  std::string str() const { return p ? std::string(p) : std::string(); }
};

struct EngineHandle {
  dslr_engine_t* p = nullptr;
  ~EngineHandle() { dslr_engine_free(p); }
};

bool write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  out.flush();
  if (!out) {
    std::fprintf(stderr, "dslr: cannot write %s\n", path.c_str());
    return false;
  }
  return true;
}

// One setting reachable from the config file, DSLR_<ENV> and --<flag>.
enum class Kind { kString, kNumber, kUnsigned, kBool, kThreshold, kList };

struct Setting {
  const char* flag;
  const char* env;
  const char* pointer;
  Kind kind;
  const char* help;
};

const std::vector<Setting>& settings() {
  static const std::vector<Setting> s = {
      {"--corpus", "DSLR_CORPUS", "/corpus", Kind::kString, "corpus JSON-lines file"},
      {"--index", "DSLR_INDEX", "/index", Kind::kString, "index file"},
      {"--dataset", "DSLR_DATASET", "/dataset", Kind::kString, "QA dataset JSON-lines file"},
      {"--out", "DSLR_OUT", "/out", Kind::kString, "output path"},
      {"--abbreviations", "DSLR_ABBREVIATIONS", "/segmenter/abbreviations", Kind::kString,
       "abbreviation list for the segmenter"},
      {"--scorer", "DSLR_SCORER", "/scorer/kind", Kind::kString, "lexical|remote|mock"},
      {"--scorer-url", "DSLR_SCORER_URL", "/scorer/endpoint", Kind::kString, "scorer service base URL"},
      {"--scorer-table", "DSLR_SCORER_TABLE", "/scorer/table", Kind::kString, "mock scorer table"},
      {"--max-batch", "DSLR_MAX_BATCH", "/scorer/max_batch", Kind::kUnsigned, "candidates per scorer request"},
      {"--reader", "DSLR_READER", "/reader/kind", Kind::kString, "remote|mock|none"},
      {"--reader-url", "DSLR_READER_URL", "/reader/endpoint", Kind::kString, "reader service base URL"},
      {"--reader-table", "DSLR_READER_TABLE", "/reader/table", Kind::kString, "mock reader table"},
      {"--tokenizer", "DSLR_TOKENIZER", "/tokenizer/kind", Kind::kString, "whitespace|remote"},
      {"--tokenizer-url", "DSLR_TOKENIZER_URL", "/tokenizer/endpoint", Kind::kString, "tokenize service base URL"},
      {"--threshold", "DSLR_THRESHOLD", "/refine/threshold", Kind::kThreshold, "score threshold (inf/-inf allowed)"},
      {"--threshold-file", "DSLR_THRESHOLD_FILE", "/refine/threshold_file", Kind::kString, "ThresholdSpec file"},
      {"--strict", "DSLR_STRICT", "/refine/strict", Kind::kBool, "keep only scores strictly above the threshold"},
      {"--mode", "DSLR_MODE", "/refine/mode", Kind::kString, "refinement mode"},
      {"--top-n", "DSLR_TOP_N", "/refine/top_n", Kind::kUnsigned, "documents refined per query"},
      {"--budget", "DSLR_BUDGET", "/refine/budget", Kind::kUnsigned, "token budget for fixed_* modes"},
      {"--seed", "DSLR_SEED", "/refine/seed", Kind::kUnsigned, "seed for random paths"},
      {"--rerank-m", "DSLR_RERANK_M", "/refine/rerank_m", Kind::kUnsigned, "passages re-ranked in passage mode"},
      {"--retrieve-depth", "DSLR_RETRIEVE_DEPTH", "/retrieve_depth", Kind::kUnsigned, "passages retrieved"},
      {"--percentile", "DSLR_PERCENTILE", "/calibration/percentile", Kind::kNumber, "calibration percentile"},
      {"--sample-size", "DSLR_SAMPLE_SIZE", "/calibration/sample_size", Kind::kUnsigned,
       "queries sampled per calibration dataset"},
      {"--calibration-datasets", "DSLR_CALIBRATION_DATASETS", "/calibration/datasets", Kind::kList,
       "comma-separated calibration datasets"},
      {"--bins", "DSLR_BINS", "/calibration/histogram_bins", Kind::kUnsigned, "histogram bins"},
      {"--percentiles", "DSLR_PERCENTILES", "/sweep/percentiles", Kind::kList,
       "comma-separated sweep percentiles, or A..B for A,A+10,...,B"},
      {"--workers", "DSLR_WORKERS", "/eval/workers", Kind::kUnsigned, "evaluation worker threads"},
      {"--timing", "DSLR_TIMING", "/eval/timing", Kind::kString, "wall|none"},
      {"--max-failure-rate", "DSLR_MAX_FAILURE_RATE", "/eval/max_failure_rate", Kind::kNumber,
       "failure-rate ceiling"},
  };
  return s;
}

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : v) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

double parse_double(const std::string& flag, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw UsageError(flag + ": not a number: '" + v + "'");
  }
}

json convert(const Setting& s, const std::string& v) {
  const std::string flag = s.flag;
  switch (s.kind) {
    case Kind::kString: return v;
    case Kind::kNumber: return parse_double(flag, v);
    case Kind::kThreshold:
      if (v == "inf" || v == "+inf" || v == "-inf") return v == "-inf" ? "-inf" : "inf";
      return parse_double(flag, v);
    case Kind::kUnsigned: {
      if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
        throw UsageError(flag + ": expected a non-negative integer, got '" + v + "'");
      return std::stoull(v);
    }
    case Kind::kBool:
      if (v == "1" || v == "true") return true;
      if (v == "0" || v == "false") return false;
      throw UsageError(flag + ": expected true or false");
    case Kind::kList: {
      if (std::string(s.pointer) == "/sweep/percentiles") {
        json arr = json::array();
        if (auto dots = v.find(".."); dots != std::string::npos) {
          const double lo = parse_double(flag, v.substr(0, dots));
          const double hi = parse_double(flag, v.substr(dots + 2));
          for (double p = lo; p <= hi + 1e-9; p += 10) arr.push_back(p);
        } else {
          for (const auto& item : split_list(v)) arr.push_back(parse_double(flag, item));
        }
        return arr;
      }
      return split_list(v);
    }
  }
  return v;
}

struct Invocation {
  std::string config_file;
  bool emit_config = false;
  std::vector<std::optional<std::string>> values = std::vector<std::optional<std::string>>(settings().size());
  std::vector<bool> bool_flags = std::vector<bool>(settings().size(), false);
};

// file < environment < flags
json resolve(const Invocation& inv, const std::string& subcommand) {
  json config = json::object();
  if (!inv.config_file.empty()) {
    std::ifstream in(inv.config_file);
    if (!in) throw UsageError("cannot read config file " + inv.config_file);
    try {
      config = json::parse(in);
    } catch (const json::exception& e) {
      throw UsageError("config file " + inv.config_file + ": " + e.what());
    }
  }
  const auto& all = settings();
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (const char* env = std::getenv(all[i].env); env && *env)
      config[json::json_pointer(all[i].pointer)] = convert(all[i], env);
  }
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (inv.bool_flags[i]) config[json::json_pointer(all[i].pointer)] = true;
    if (inv.values[i]) config[json::json_pointer(all[i].pointer)] = convert(all[i], *inv.values[i]);
  }
  // A table implies the mock backend unless a kind was given.
  if (config.contains("reader") && config["reader"].contains("table") && !config["reader"].contains("kind"))
    config["reader"]["kind"] = "mock";
  if (config.contains("reader") && config["reader"].contains("endpoint") && !config["reader"].contains("kind"))
    config["reader"]["kind"] = "remote";
  if (config.contains("scorer") && config["scorer"].contains("table") && !config["scorer"].contains("kind"))
    config["scorer"]["kind"] = "mock";
  if ((subcommand == "eval" || subcommand == "sweep") &&
      (!config.contains("reader") || !config["reader"].contains("kind")))
    throw UsageError(subcommand + " needs a reader: pass --reader-url or --reader-table");
  return config;
}

int with_engine(const json& config, bool emit_config, const std::function<int(dslr_engine_t*)>& body) {
  EngineHandle engine;
  if (auto s = dslr_engine_create(config.dump().c_str(), &engine.p); s != DSLR_OK) return fail(s);
  Owned effective;
  if (auto s = dslr_engine_effective_config(engine.p, &effective.p); s != DSLR_OK) return fail(s);
  if (emit_config) {
    std::fputs(effective.p, stdout);
    return kExitOk;
  }
  const std::string out = config.value("out", std::string{});
  if (!out.empty() && !write_text(out + ".config.json", effective.str())) return kExitInput;
  return body(engine.p);
}

std::string require_out(const json& config) {
  auto out = config.value("out", std::string{});
  if (out.empty()) throw UsageError("--out is required");
  return out;
}

int cmd_index(const json& config) {
  const auto corpus = config.value("corpus", std::string{});
  if (corpus.empty()) throw UsageError("--corpus is required");
  const auto out = require_out(config);
  json options = {{"analyzer", config.value("analyzer", json::object())},
                  {"bm25", config.value("bm25", json::object())}};
  dslr_index_t* index = nullptr;
  if (auto s = dslr_index_build_jsonl(corpus.c_str(), options.dump().c_str(), &index); s != DSLR_OK) return fail(s);
  const auto status = dslr_index_save(index, out.c_str());
  std::size_t docs = 0, terms = 0;
  double avg = 0;
  dslr_index_stats(index, &docs, &avg, &terms);
  dslr_index_free(index);
  if (status != DSLR_OK) return fail(status);
  std::printf("%zu documents, avg length %.2f, %zu terms\n", docs, avg, terms);
  return kExitOk;
}

int cmd_retrieve(const json& config, bool emit, const std::string& query, std::size_t n) {
  return with_engine(config, emit, [&](dslr_engine_t* engine) {
    Owned result;
    if (auto s = dslr_engine_retrieve(engine, query.c_str(), n, &result.p); s != DSLR_OK) return fail(s);
    std::printf("%s\n", result.p);
    return kExitOk;
  });
}

int cmd_calibrate(const json& config, bool emit) {
  const auto out = emit ? std::string() : require_out(config);
  return with_engine(config, emit, [&](dslr_engine_t* engine) {
    Owned spec, histogram;
    if (auto s = dslr_engine_calibrate(engine, &spec.p, &histogram.p); s != DSLR_OK) return fail(s);
    if (!write_text(out, spec.str()) || !write_text(out + ".histogram.json", histogram.str())) return kExitInput;
    std::fputs(spec.p, stdout);
    return kExitOk;
  });
}

int cmd_run(const json& config, bool emit, bool generate) {
  const auto out = emit ? std::string() : require_out(config);
  return with_engine(config, emit, [&](dslr_engine_t* engine) {
    Owned lines, report;
    const auto s = generate ? dslr_engine_evaluate(engine, &lines.p, &report.p)
                            : dslr_engine_refine(engine, &lines.p, &report.p);
    if (lines.p && !write_text(out, lines.str())) return kExitInput;
    if (report.p && !write_text(out + ".report.json", report.str())) return kExitInput;
    if (s != DSLR_OK) return fail(s);
    std::fputs(report.p, stdout);
    return kExitOk;
  });
}

int cmd_sweep(const json& config, bool emit) {
  const auto out = emit ? std::string() : require_out(config);
  return with_engine(config, emit, [&](dslr_engine_t* engine) {
    Owned csv, result;
    if (auto s = dslr_engine_sweep(engine, &csv.p, &result.p); s != DSLR_OK) return fail(s);
    if (!write_text(out, csv.str()) || !write_text(out + ".json", result.str())) return kExitInput;
    std::fputs(csv.p, stdout);
    return kExitOk;
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dslr: sentence-level context refinement for retrieval-augmented QA"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(dslr_version()));

  Invocation inv;
  std::string query;
  std::size_t n = 10;

  struct Sub {
    const char* name;
    const char* help;
    std::vector<std::string> flags;
  };
  const std::vector<Sub> subs = {
      {"index", "build a BM25 index from a corpus", {"--corpus", "--out"}},
      {"retrieve", "top-n BM25 retrieval for one query", {"--corpus", "--index", "--abbreviations"}},
      {"calibrate", "percentile threshold from sampled sentence scores",
       {"--corpus", "--index", "--dataset", "--out", "--abbreviations", "--scorer", "--scorer-url", "--scorer-table",
        "--max-batch", "--percentile", "--sample-size", "--calibration-datasets", "--bins", "--seed"}},
      {"refine", "refine retrieved contexts for every dataset query",
       {"--corpus", "--index", "--dataset", "--out", "--abbreviations", "--scorer", "--scorer-url", "--scorer-table",
        "--max-batch", "--tokenizer", "--tokenizer-url", "--threshold", "--threshold-file", "--strict", "--mode",
        "--top-n", "--budget", "--seed", "--rerank-m", "--retrieve-depth", "--workers", "--timing",
        "--max-failure-rate"}},
      {"eval", "refine, generate and score every dataset query",
       {"--corpus", "--index", "--dataset", "--out", "--abbreviations", "--scorer", "--scorer-url", "--scorer-table",
        "--max-batch", "--reader", "--reader-url", "--reader-table", "--tokenizer", "--tokenizer-url", "--threshold",
        "--threshold-file", "--strict", "--mode", "--top-n", "--budget", "--seed", "--rerank-m", "--retrieve-depth",
        "--workers", "--timing", "--max-failure-rate"}},
      {"sweep", "evaluate a range of percentile thresholds plus the oracle union",
       {"--corpus", "--index", "--dataset", "--out", "--abbreviations", "--scorer", "--scorer-url", "--scorer-table",
        "--max-batch", "--reader", "--reader-url", "--reader-table", "--tokenizer", "--tokenizer-url", "--strict",
        "--top-n", "--retrieve-depth", "--percentiles", "--sample-size", "--calibration-datasets", "--seed",
        "--workers", "--timing", "--max-failure-rate"}},
  };

  const auto& all = settings();
  for (const auto& sub : subs) {
    auto* cmd = app.add_subcommand(sub.name, sub.help);
    cmd->add_option("--config", inv.config_file, "JSON config file (overridden by DSLR_* and flags)");
    cmd->add_flag("--emit-config", inv.emit_config, "print the effective config and exit");
    for (const auto& flag : sub.flags) {
      for (std::size_t i = 0; i < all.size(); ++i) {
        if (flag != all[i].flag) continue;
        if (all[i].kind == Kind::kBool) {
          cmd->add_flag_callback(all[i].flag, [&inv, i] { inv.bool_flags[i] = true; }, all[i].help);
        } else {
          cmd->add_option(all[i].flag, inv.values[i], all[i].help)->allow_extra_args(false);
        }
      }
    }
    if (std::string(sub.name) == "retrieve") {
      cmd->add_option("--query", query, "query text")->required();
      cmd->add_option("-n", n, "number of passages")->capture_default_str();
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    const json config = resolve(inv, name);
    if (name == "index") return cmd_index(config);
    if (name == "retrieve") return cmd_retrieve(config, inv.emit_config, query, n);
    if (name == "calibrate") return cmd_calibrate(config, inv.emit_config);
    if (name == "refine") return cmd_run(config, inv.emit_config, false);
    if (name == "eval") return cmd_run(config, inv.emit_config, true);
    if (name == "sweep") return cmd_sweep(config, inv.emit_config);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "dslr: usage: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "dslr: %s\n", e.what());
    return kExitInternal;
  }
  return kExitUsage;
}
