#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ppimtt/embedder.hpp"
#include "ppimtt/metrics.hpp"
#include "ppimtt/model.hpp"
#include "ppimtt/seqio.hpp"

namespace ppimtt {

struct SamplingSpec {
  std::size_t rate = 1;  // negatives per positive
  std::size_t repeats = 1;
  std::uint64_t seed = 0;
  bool clamp = false;  // return the whole universe instead of failing when it is too small
};

/// Draws rate * |positives| distinct (pathogen, human) pairs uniformly
/// without replacement from pathogen_ids x human_ids, excluding the
/// positives and anything in `exclude`. Targets are 0; order is draw order.
std::vector<InteractionExample> sample_negatives(std::span<const InteractionExample> positives,
                                                 std::span<const std::string> pathogen_ids,
                                                 std::span<const std::string> human_ids,
                                                 const SamplingSpec& spec,
                                                 std::span<const InteractionExample> exclude = {});

struct Split {
  std::vector<InteractionExample> train;
  std::vector<InteractionExample> validation;
};

/// Stratified split: each class sends ceil(fraction * n_class) examples to
/// validation. Both parts keep input order. Throws TooFewExamples when a class
/// would be empty on either side.
Split make_validation_split(std::span<const InteractionExample> examples, double fraction,
                            std::uint64_t seed);

struct EpochScore {
  std::size_t epoch = 0;
  double validation_f1 = 0.0;
  double train_loss = 0.0;  // mean combined loss over the epoch's steps; 0 at epoch 0

  friend bool operator==(const EpochScore&, const EpochScore&) = default;
};

struct RunResult {
  ExperimentReport validation;
  std::optional<ExperimentReport> test;
  std::size_t best_epoch = 0;
  TrainConfig config;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
  std::string variant;
  std::vector<EpochScore> curve;

  // test metrics when a test split exists, validation metrics otherwise
  const ExperimentReport& metrics() const { return test ? *test : validation; }
};

struct TrainOutput {
  ModelState state;  // snapshot from the best validation epoch
  RunResult result;
};

/// Splits the bundle's embedding table by protein role into the pathogen
/// and human tables the model is initialized from.
std::pair<EmbeddingTable, EmbeddingTable> split_embeddings(const DatasetBundle& bundle,
                                                           const EmbeddingTable& embeddings);

/// Joint training: shuffled VH mini-batches, each paired with an equal-size
/// HH batch drawn cyclically from a shuffled hh_train. Validation F1 is
/// measured at epochs 0, stride, 2*stride, ... and the best snapshot is kept
/// (earliest epoch on ties).
TrainOutput train(const DatasetBundle& bundle, const TrainConfig& config,
                  const EmbeddingTable& embeddings);

struct GridSpec {
  std::vector<std::size_t> hid = {8, 16, 32, 64};
  std::vector<double> alpha = {1e-3, 1e-2, 1e-1, 1.0};
  std::vector<double> lr = {1e-3, 1e-2};
  std::size_t epoch_ceiling = 200;
  std::size_t epoch_stride = 2;
};

struct GridCell {
  std::size_t hid = 0;
  double alpha = 0.0;
  double lr = 0.0;
};

/// Cells in ascending (hid, alpha, lr) order, duplicates removed.
std::vector<GridCell> plan_grid(const GridSpec& grid);

/// 0, stride, 2*stride, ... up to and including ceiling when it is a multiple.
std::vector<std::size_t> epoch_schedule(std::size_t ceiling, std::size_t stride);

struct GridEntry {
  GridCell cell;
  std::size_t best_epoch = 0;
  double validation_f1 = 0.0;
  std::vector<EpochScore> curve;
};

struct GridResult {
  TrainOutput best;
  std::vector<GridEntry> table;
};

/// One training run per cell with the epoch count scanned inside the run.
/// Ties on validation F1 go to smaller hid, then alpha, then lr, then epoch.
GridResult grid_search(const DatasetBundle& bundle, const GridSpec& grid,
                       const EmbeddingTable& embeddings, const TrainConfig& base,
                       std::size_t parallelism = 1);

/// Keeps the positives of the bundle and draws fresh negatives for training
/// and test. Test negatives are disjoint from the training negatives.
DatasetBundle resample_bundle(const DatasetBundle& bundle, std::size_t train_rate,
                              std::size_t test_rate, std::uint64_t seed, bool clamp);

struct MetricSummary {
  SampleSummary auc;
  SampleSummary ap;
  SampleSummary precision;
  SampleSummary recall;
  SampleSummary f1;
};

MetricSummary summarize_runs(std::span<const RunResult> runs);

struct RepeatedRuns {
  std::vector<TrainOutput> runs;
  MetricSummary summary;
};

/// Run r uses sampling seed spec.seed + r and training seed config.seed + r.
/// A zero train rate keeps the bundle's own negatives.
RepeatedRuns repeated_runs(const DatasetBundle& bundle, const SamplingSpec& sampling,
                           std::size_t test_rate, const TrainConfig& config,
                           const EmbeddingTable& embeddings, std::size_t n_runs,
                           std::size_t parallelism = 1);

struct ProtocolSpec {
  std::vector<std::size_t> train_rates = {1, 2, 5, 10};
  std::vector<std::size_t> test_rates = {1, 2, 5, 10};
  std::size_t repeats = 10;
  std::uint64_t seed = 0;
  bool clamp = false;
};

struct ProtocolCell {
  std::size_t train_rate = 0;
  std::size_t test_rate = 0;
  std::size_t repeat = 0;

  friend bool operator==(const ProtocolCell&, const ProtocolCell&) = default;
};

/// Every (train rate, test rate, repeat) combination, train rate outermost.
std::vector<ProtocolCell> schedule_protocol(const ProtocolSpec& spec);

struct ProtocolEvaluation {
  ProtocolCell cell;
  ExperimentReport report;
  std::size_t best_epoch = 0;
};

/// Trains once per (train rate, repeat) and evaluates that model on each
/// test rate's negative draw; results follow schedule_protocol order.
std::vector<ProtocolEvaluation> run_protocol(const DatasetBundle& bundle, const ProtocolSpec& spec,
                                             const TrainConfig& config,
                                             const EmbeddingTable& embeddings,
                                             std::size_t parallelism = 1);

/// Scores a labelled VH list with a trained model.
ExperimentReport evaluate_vh(const ModelState& state, std::span<const InteractionExample> examples,
                             double threshold, ThresholdMode mode = ThresholdMode::Threshold);

}  // namespace ppimtt
