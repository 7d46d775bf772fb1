#pragma once

// Joint objective: count CE + size CE + segmentation BCE + dice, equal weights.

#include <ostream>
#include <span>

#include <torch/torch.h>

#include "tganet/attributes.hpp"
#include "tganet/tganet.hpp"

namespace tganet::loss {

inline constexpr double kDiceSmoothing = 1.0;
inline constexpr double kProbabilityClamp = 1e-7;

/// Batch mean of 1 - (2 sum(p g) + eps) / (sum p + sum g + eps), per sample.
torch::Tensor dice_loss(const torch::Tensor& pred_prob, const torch::Tensor& gt,
                        double smoothing = kDiceSmoothing);

/// Mean pixel BCE on clamped probabilities.
torch::Tensor binary_cross_entropy(const torch::Tensor& pred_prob, const torch::Tensor& gt);

struct SegmentationTerms {
  torch::Tensor bce;
  torch::Tensor dice;
};
SegmentationTerms segmentation_loss(const torch::Tensor& pred_prob, const torch::Tensor& gt);

struct ClassificationTerms {
  torch::Tensor ce_count;
  torch::Tensor ce_size;
};
/// count_labels / size_labels: (B,) int64 class indices.
ClassificationTerms classification_loss(const AttributeLogits& logits, const torch::Tensor& count_labels,
                                        const torch::Tensor& size_labels);

/// Plain numbers for logging.
struct LossBreakdown {
  double ce_count = 0.0;
  double ce_size = 0.0;
  double bce_seg = 0.0;
  double dice_seg = 0.0;
  double total = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& o);
  LossBreakdown operator*(double s) const;
};

struct JointLoss {
  torch::Tensor ce_count;
  torch::Tensor ce_size;
  torch::Tensor bce_seg;
  torch::Tensor dice_seg;
  torch::Tensor total;  // differentiable

  LossBreakdown values() const;
};

/// Without attribute logits (classifier ablation) the CE terms are constant 0.
JointLoss joint_loss(const NetworkOutput& output, const torch::Tensor& gt_mask, const torch::Tensor& count_labels,
                     const torch::Tensor& size_labels);

/// (B,) count and size index tensors from labels.
std::pair<torch::Tensor, torch::Tensor> label_tensors(std::span<const AttributeLabel> labels);

inline constexpr const char* kStepCsvHeader = "step,ce_count,ce_size,bce_seg,dice_seg,total";
void write_csv_row(std::ostream& out, std::int64_t step, const LossBreakdown& b);

}  // namespace tganet::loss
