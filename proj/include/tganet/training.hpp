#pragma once

// Optimization loop with plateau LR reduction, early stopping, best-model
// checkpointing, and evaluation runs.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tganet/attributes.hpp"
#include "tganet/augment.hpp"
#include "tganet/data.hpp"
#include "tganet/losses.hpp"
#include "tganet/metrics.hpp"
#include "tganet/tganet.hpp"

namespace tganet::training {

struct TrainConfig {
  double lr = 1e-4;
  std::int64_t batch_size = 16;
  std::int64_t max_epochs = 200;
  double lr_reduce_factor = 0.1;
  std::int64_t lr_patience = 5;
  std::int64_t early_stop_patience = 20;
  /// "valid_total" (minimized) or "valid_mdsc" (maximized).
  std::string monitor = "valid_total";
  double min_delta = 1e-6;
  double min_lr = 1e-7;
  std::uint64_t seed = 0;
  bool augment = true;
  data::AugmentOptions augment_options;
  /// Stop after this many optimizer steps (0 = unlimited).
  std::int64_t max_steps = 0;

  void validate() const;
  bool minimize() const { return monitor == "valid_total"; }
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct ScheduleState {
  double lr = 1e-4;
  std::optional<double> best;
  std::int64_t epochs_since_improvement = 0;
  std::int64_t epochs_since_reduction = 0;
};

struct ScheduleDecision {
  double new_lr = 0.0;
  bool improved = false;
  bool reduced = false;
  bool stop = false;
};

/// Feeds one epoch's monitor value: reduce LR after lr_patience epochs without
/// an improvement of at least min_delta, stop after early_stop_patience.
ScheduleDecision update_schedule(double monitor_value, ScheduleState& state, const TrainConfig& config);

struct EpochRecord {
  std::int64_t epoch = 0;
  loss::LossBreakdown train;
  loss::LossBreakdown valid;
  metrics::MetricSet valid_metrics;
  double lr = 0.0;
  double monitor = 0.0;
  bool improved = false;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::string stop_reason;
  std::int64_t best_epoch = 0;
  double best_monitor = 0.0;
  std::int64_t steps = 0;
};

void write_history_csv(std::ostream& out, const TrainHistory& history);

struct EvalSummary {
  loss::LossBreakdown loss;  // sample-weighted mean
  metrics::MetricSet aggregate;
  std::vector<metrics::SampleRecord> records;
};

/// Evaluation-mode pass over `samples` in order, `batch_size` at a time.
EvalSummary evaluate_samples(TGANet& model, std::span<const data::Sample> samples, std::int64_t batch_size);

struct TrainOutputs {
  std::filesystem::path checkpoint;  // best-by-monitor model
  std::filesystem::path step_log;    // optional per-step CSV
};

struct TrainResult {
  TrainHistory history;
  TGANet model{nullptr};  // final in-memory state, not necessarily the best
};

TrainResult train(const NetworkConfig& net_config, const TrainConfig& train_config,
                  const AttributeEmbeddings& embeddings, std::span<const data::Sample> train_samples,
                  std::span<const data::Sample> valid_samples, const TrainOutputs& outputs);

struct Evaluation {
  EvalSummary summary;
  metrics::StratifiedReport stratified;
};

/// Loads the checkpoint and evaluates the given samples; the samples carry
/// labels derived with the caller's size thresholds.
Evaluation evaluate_model(const std::filesystem::path& checkpoint, std::span<const data::Sample> samples,
                          std::int64_t batch_size);

}  // namespace tganet::training
