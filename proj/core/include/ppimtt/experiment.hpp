#pragma once

#include <filesystem>
#include <optional>

#include <nlohmann/json.hpp>

#include "ppimtt/model.hpp"
#include "ppimtt/pipeline.hpp"

namespace ppimtt {

/// Experiment description read by the train and gridsearch commands.
///
///   {
///     "data": "manifest.json",          bundle manifest
///     "embeddings": "proteins.emb",     embedding table
///     "sampling": {"rate": 1, "test_rate": 1, "repeats": 1, "seed": 0, "clamp": false},
///     "grid": {"hid": [...], "alpha": [...], "lr": [...], "epochs": 200, "stride": 2},
///     "config": {"hid": 16, "alpha": 0.001, "lr": 0.001, "epochs": 200, "seed": 0, ...},
///     "n_runs": 1,
///     "output": "runs/",
///     "parallel": 0
///   }
///
/// Relative paths resolve against the config file's directory.
struct ExperimentConfig {
  std::filesystem::path manifest;
  std::filesystem::path embeddings;
  std::optional<SamplingSpec> sampling;
  std::size_t test_rate = 0;
  std::optional<GridSpec> grid;
  TrainConfig config;
  std::size_t n_runs = 1;
  std::optional<std::filesystem::path> output;
  std::size_t parallel = 0;  // 0: use the environment / machine default
};

// Throws Config.
ExperimentConfig parse_experiment_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
ExperimentConfig read_experiment_config(const std::filesystem::path& path);

}  // namespace ppimtt
