#pragma once

// Per-sample overlap metrics, dataset means, and the size/count stratified
// mDSC table.

#include <array>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <torch/types.h>

#include "tganet/attributes.hpp"

namespace tganet::metrics {

inline constexpr double kDefaultThreshold = 0.5;

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;

  std::int64_t total() const noexcept { return tp + fp + fn + tn; }
  bool operator==(const ConfusionCounts&) const = default;
};

/// Foreground prediction is `pred > threshold`; ground truth is `gt != 0`.
ConfusionCounts confusion_counts(std::span<const float> pred_prob, std::span<const std::uint8_t> gt,
                                 double threshold = kDefaultThreshold);
/// Same on one sample's tensors of equal shape.
ConfusionCounts confusion_counts(const torch::Tensor& pred_prob, const torch::Tensor& gt,
                                 double threshold = kDefaultThreshold);

struct MetricSet {
  double miou = 0.0;
  double mdsc = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  double f2 = 0.0;
};

/// IoU, Dice, recall, precision and F2; every 0/0 ratio counts as 1.
MetricSet compute_metric_set(const ConfusionCounts& counts);

/// Field-wise arithmetic mean.
MetricSet aggregate(std::span<const MetricSet> per_sample);

struct LabeledMetrics {
  MetricSet metrics;
  AttributeLabel label;
};

/// Columns in table order: small, medium, large, one, many.
inline constexpr std::array<const char*, 5> kBucketNames = {"small", "medium", "large", "one", "many"};

struct StratifiedReport {
  std::array<std::optional<double>, 5> mdsc;  // empty bucket -> nullopt
  std::array<std::size_t, 5> members{};
};

StratifiedReport stratified_report(std::span<const LabeledMetrics> per_sample);

struct SampleRecord {
  std::string sample_id;
  MetricSet metrics;
  AttributeLabel label;
};

/// One row per sample then an "aggregate" row with the means.
void write_metrics_csv(std::ostream& out, std::span<const SampleRecord> samples);
void write_stratified_csv(std::ostream& out, const StratifiedReport& report, const std::string& method);
/// Fixed-width text table laid out like the size/count comparison table.
std::string format_stratified_table(const StratifiedReport& report, const std::string& method);

}  // namespace tganet::metrics
