#pragma once

// Reproducible experiment description and the train/evaluate runners that
// write every artifact next to the manifest that produced it.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "tganet/attributes.hpp"
#include "tganet/data.hpp"
#include "tganet/network_config.hpp"
#include "tganet/training.hpp"

namespace tganet {

inline constexpr int kExperimentFormatVersion = 1;

struct ExperimentManifest {
  std::string dataset_root;
  std::string dataset_name;
  NetworkConfig network;
  training::TrainConfig train;
  std::string split_manifest;  // path of the SplitManifest JSON
  std::optional<SizeThresholds> thresholds;
  std::string embeddings_source = "seed:42";
  std::string output_dir;
  std::string variant = "full";
};

void to_json(nlohmann::json& j, const ExperimentManifest& e);
void from_json(const nlohmann::json& j, ExperimentManifest& e);

ExperimentManifest load_experiment(const std::filesystem::path& path);
void save_experiment(const ExperimentManifest& e, const std::filesystem::path& path);

/// Experiment over a prepared split; dataset and thresholds come from the split.
ExperimentManifest experiment_for_split(const std::filesystem::path& split_manifest);

/// `section.key=value`, e.g. `network.fem_width=8` or `train.lr=1e-3`. Values
/// parse as JSON when possible, otherwise as strings.
void apply_override(ExperimentManifest& e, std::string_view assignment);

inline constexpr const char* kExperimentFile = "experiment.json";
inline constexpr const char* kCheckpointFile = "best.ckpt";
inline constexpr const char* kHistoryFile = "history.csv";
inline constexpr const char* kStepLogFile = "steps.csv";
inline constexpr const char* kRunFile = "run.json";
inline constexpr const char* kMetricsFile = "metrics.csv";
inline constexpr const char* kStratifiedCsvFile = "stratified.csv";
inline constexpr const char* kStratifiedTextFile = "stratified.txt";
inline constexpr const char* kSummaryFile = "summary.json";

/// Hash of the library sources this binary was built from.
std::string_view source_hash();

/// Trains into e.output_dir: experiment.json, best.ckpt, history.csv, steps.csv, run.json.
training::TrainHistory run_training(const ExperimentManifest& e);

struct EvaluationRequest {
  std::filesystem::path run_dir;          // holds experiment.json and best.ckpt
  std::filesystem::path split_manifest;   // defaults to the run's own split
  std::string split = "test";  // train, valid, test or all
  std::filesystem::path output_dir;       // defaults to run_dir
};

/// Writes metrics.csv, stratified.csv/.txt and summary.json. Size buckets use
/// the training run's thresholds even when the split belongs to another dataset.
training::Evaluation run_evaluation(const EvaluationRequest& request);

}  // namespace tganet
