#include "dslr/calibrate.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "dslr/error.hpp"
#include "dslr/rng.hpp"

namespace dslr {

double percentile(std::span<const double> values, double p) {
  if (values.empty()) throw Error(ErrorCode::kEmptyInput, "percentile of an empty list");
  if (!(p > 0.0 && p <= 100.0)) throw Error(ErrorCode::kInvalidArgument, "percentile must be in (0, 100]");
  std::vector<double> sorted(values.begin(), values.end());
  const auto n = sorted.size();
  // Smallest rank r with 100 r >= p n, evaluated in extended precision.
  const long double target = static_cast<long double>(p) * static_cast<long double>(n);
  auto rank = static_cast<std::size_t>(std::ceil(target / 100.0L));
  rank = std::clamp<std::size_t>(rank, 1, n);
  // The division can round across an integer; settle on the exact comparison.
  while (rank > 1 && 100.0L * static_cast<long double>(rank - 1) >= target) --rank;
  while (rank < n && 100.0L * static_cast<long double>(rank) < target) ++rank;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1), sorted.end());
  return sorted[rank - 1];
}

nlohmann::json to_json(const ThresholdSpec& s) {
  return {{"scorer_id", s.scorer_id},   {"value", json_number(s.value)},   {"percentile", s.percentile},
          {"sample_size", s.sample_size}, {"seed", s.seed},                {"source_datasets", s.source_datasets},
          {"pool_size", s.pool_size}};
}

ThresholdSpec threshold_spec_from_json(const nlohmann::json& j) {
  try {
    ThresholdSpec s;
    s.scorer_id = j.value("scorer_id", std::string{});
    s.value = json_to_double(j.at("value"));
    s.percentile = j.value("percentile", 90.0);
    s.sample_size = j.value("sample_size", std::size_t{0});
    s.seed = j.value("seed", std::uint64_t{0});
    s.source_datasets = j.value("source_datasets", std::vector<std::string>{});
    s.pool_size = j.value("pool_size", std::size_t{0});
    if (!std::isfinite(s.value)) throw Error(ErrorCode::kParse, "threshold spec value must be finite");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("threshold spec: ") + e.what());
  }
}

Calibration calibrate_threshold(std::span<const NamedDataset> datasets, const CorpusIndex& index,
                                const Scorer& scorer, const Segmenter& segmenter, std::size_t sample_size,
                                double percentile_value, std::uint64_t seed, std::size_t max_batch) {
  if (sample_size < 1) throw Error(ErrorCode::kInvalidArgument, "sample_size must be >= 1");
  Calibration out;
  out.spec.scorer_id = scorer.id();
  out.spec.percentile = percentile_value;
  out.spec.sample_size = sample_size;
  out.spec.seed = seed;
  for (const auto& ds : datasets) {
    out.spec.source_datasets.push_back(ds.name);
    const auto order = random_permutation(ds.examples.size(), derive_seed(seed, ds.name));
    const std::size_t take = std::min(sample_size, order.size());
    for (std::size_t i = 0; i < take; ++i) {
      const auto& ex = ds.examples[order[i]];
      auto top = retrieve(index, ex.question, 1, ex.id);
      if (top.hits.empty()) continue;
      const auto& doc = top.hits.front().doc;
      auto sentences = segmenter.decompose(doc);
      if (sentences.empty()) continue;
      std::vector<Candidate> candidates;
      for (const auto& s : sentences) candidates.push_back({doc.title, s.text});
      auto scores = scorer.score_batched(ex.question, candidates, Granularity::kSentence, max_batch);
      for (double s : scores.scores) {
        if (!std::isfinite(s)) throw Error(ErrorCode::kRemoteMalformed, "non-finite calibration score");
        out.pool.push_back(s);
      }
    }
  }
  if (out.pool.empty()) throw Error(ErrorCode::kEmptyPool, "calibration produced no sentence scores");
  out.spec.pool_size = out.pool.size();
  out.spec.value = percentile(out.pool, percentile_value);
  return out;
}

double oracle_union(const std::vector<std::vector<bool>>& correct) {
  if (correct.empty()) throw Error(ErrorCode::kShapeMismatch, "oracle_union: no queries");
  const auto cols = correct.front().size();
  if (cols == 0) throw Error(ErrorCode::kShapeMismatch, "oracle_union: no thresholds");
  std::size_t any = 0;
  for (const auto& row : correct) {
    if (row.size() != cols) throw Error(ErrorCode::kShapeMismatch, "oracle_union: ragged matrix");
    if (std::find(row.begin(), row.end(), true) != row.end()) ++any;
  }
  return static_cast<double>(any) / static_cast<double>(correct.size());
}

std::vector<HistogramBin> score_histogram(std::span<const double> pool, std::size_t bins) {
  if (pool.empty()) throw Error(ErrorCode::kEmptyInput, "histogram of an empty pool");
  if (bins < 1) throw Error(ErrorCode::kInvalidArgument, "bins must be >= 1");
  const auto [mn, mx] = std::minmax_element(pool.begin(), pool.end());
  const double lo = *mn;
  const double hi = *mx;
  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<HistogramBin> out(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].lo = lo + width * static_cast<double>(b);
    out[b].hi = (b + 1 == bins) ? hi : lo + width * static_cast<double>(b + 1);
  }
  for (double v : pool) {
    std::size_t b = 0;
    if (width > 0.0) {
      b = static_cast<std::size_t>(std::floor((v - lo) / width));
      b = std::min(b, bins - 1);
    }
    ++out[b].count;
  }
  return out;
}

SweepResult sweep(const Pipeline& pipeline, std::span<const QaExample> dataset, const RefineConfig& base,
                  const EvalOptions& options, std::span<const double> pool, std::vector<double> percentiles) {
  if (percentiles.empty()) throw Error(ErrorCode::kInvalidArgument, "sweep needs at least one percentile");
  std::sort(percentiles.begin(), percentiles.end());
  SweepResult result;
  result.correctness.assign(dataset.size(), std::vector<bool>(percentiles.size(), false));
  std::vector<std::vector<std::size_t>> tokens(dataset.size(), std::vector<std::size_t>(percentiles.size(), 0));

  for (std::size_t c = 0; c < percentiles.size(); ++c) {
    RefineConfig cfg = base;
    cfg.threshold = percentile(pool, percentiles[c]);
    const auto run = run_eval(pipeline, dataset, cfg, options);
    SweepPoint point;
    point.percentile = percentiles[c];
    point.threshold = cfg.threshold;
    point.accuracy = run.report.accuracy;
    point.avg_tokens = run.report.avg_tokens;
    result.points.push_back(point);
    for (std::size_t q = 0; q < dataset.size(); ++q) {
      const auto& rec = run.records[q];
      result.correctness[q][c] = !rec.error && rec.correct;
      tokens[q][c] = rec.error ? 0 : rec.context_tokens;
    }
  }

  if (!dataset.empty()) {
    result.oracle_accuracy = oracle_union(result.correctness);
    double total = 0.0;
    for (std::size_t q = 0; q < dataset.size(); ++q) {
      std::size_t pick = percentiles.size() - 1;
      for (std::size_t c = percentiles.size(); c-- > 0;) {
        if (result.correctness[q][c]) {
          pick = c;
          break;
        }
      }
      total += static_cast<double>(tokens[q][pick]);
    }
    result.oracle_avg_tokens = total / static_cast<double>(dataset.size());
  }
  return result;
}

namespace {
// Shortest text that round-trips.
std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}
}  // namespace

std::string sweep_csv(const SweepResult& result) {
  std::string out = "percentile,threshold,accuracy,avg_tokens\n";
  for (const auto& p : result.points) {
    out += fmt_double(p.percentile) + "," + fmt_double(p.threshold) + "," + fmt_double(p.accuracy) + "," +
           fmt_double(p.avg_tokens) + "\n";
  }
  out += "oracle,," + fmt_double(result.oracle_accuracy) + "," + fmt_double(result.oracle_avg_tokens) + "\n";
  return out;
}

}  // namespace dslr
