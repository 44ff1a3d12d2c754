#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dslr/evalharness.hpp"

namespace dslr {

/// Nearest-rank percentile: sorted ascending, element ceil(p/100 * n) - 1.
/// p must lie in (0, 100]; throws EmptyInput on an empty list.
double percentile(std::span<const double> values, double p);

struct ThresholdSpec {
  std::string scorer_id;
  double value = 0.0;
  double percentile = 90.0;
  std::size_t sample_size = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> source_datasets;
  std::size_t pool_size = 0;
};

nlohmann::json to_json(const ThresholdSpec& spec);
ThresholdSpec threshold_spec_from_json(const nlohmann::json& j);

struct NamedDataset {
  std::string name;
  std::vector<QaExample> examples;
};

struct Calibration {
  ThresholdSpec spec;
  std::vector<double> pool;  // every sampled sentence score, in sampling order
};

/// Scores the sentences of the top-1 passage for up to `sample_size` seeded
/// random queries per dataset, pools all scores and takes the percentile.
Calibration calibrate_threshold(std::span<const NamedDataset> datasets, const CorpusIndex& index,
                                const Scorer& scorer, const Segmenter& segmenter, std::size_t sample_size,
                                double percentile_value, std::uint64_t seed, std::size_t max_batch = 64);

/// Fraction of rows (queries) with at least one true column (threshold).
/// Throws ShapeMismatch on an empty or ragged matrix.
double oracle_union(const std::vector<std::vector<bool>>& correct);

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
};

/// Equal-width bins over [min, max]; the last bin is right-closed.
std::vector<HistogramBin> score_histogram(std::span<const double> pool, std::size_t bins);

struct SweepPoint {
  double percentile = 0.0;
  double threshold = 0.0;
  double accuracy = 0.0;
  double avg_tokens = 0.0;
};

struct SweepResult {
  std::vector<SweepPoint> points;  // ascending percentile
  double oracle_accuracy = 0.0;
  double oracle_avg_tokens = 0.0;
  std::vector<std::vector<bool>> correctness;  // queries x points
};

/// Evaluates the dataset once per percentile, with the threshold induced
/// from `pool`. The oracle counts a query correct when any point got it right;
/// its token figure uses the highest-percentile correct point per query (the
/// highest swept point when none was correct).
SweepResult sweep(const Pipeline& pipeline, std::span<const QaExample> dataset, const RefineConfig& base,
                  const EvalOptions& options, std::span<const double> pool, std::vector<double> percentiles);

/// percentile,threshold,accuracy,avg_tokens rows plus an "oracle" summary row.
std::string sweep_csv(const SweepResult& result);

}  // namespace dslr
