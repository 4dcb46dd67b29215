#pragma once

#include <nlohmann/json.hpp>

#include "ppimtt/metrics.hpp"
#include "ppimtt/model.hpp"
#include "ppimtt/pipeline.hpp"
#include "ppimtt/seqio.hpp"

namespace ppimtt {

nlohmann::json to_json(const TrainConfig& config);
// Keys absent from `j` keep the values in `defaults`. Throws Config.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig defaults = {});

/// {auc, ap, precision, recall, f1, threshold, tp, fp, tn, fn, topk, mode};
/// auc and ap are null when a class was missing.
nlohmann::json to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const nlohmann::json& j);

// wall_seconds is emitted only when `include_timing` is set, so default
// artifacts are byte-identical across repeated runs.
nlohmann::json to_json(const RunResult& result, bool include_timing = false);
RunResult run_result_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SampleSummary& summary);
nlohmann::json to_json(const MetricSummary& summary);
nlohmann::json to_json(const GridCell& cell);
nlohmann::json to_json(const GridEntry& entry);
nlohmann::json to_json(const SplitCounts& counts);
nlohmann::json to_json(const BundleReport& report);

GridSpec grid_spec_from_json(const nlohmann::json& j);
SamplingSpec sampling_spec_from_json(const nlohmann::json& j);

}  // namespace ppimtt
