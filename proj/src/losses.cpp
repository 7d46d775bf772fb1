#include "tganet/losses.hpp"

#include <iomanip>

#include "tganet/errors.hpp"

namespace tganet::loss {

namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes()) throw Error(ErrorKind::ShapeMismatch, "prediction and ground truth shapes differ");
  if (a.dim() < 1) throw Error(ErrorKind::ShapeMismatch, "loss inputs need a batch dimension");
}

}  // namespace

torch::Tensor dice_loss(const torch::Tensor& pred_prob, const torch::Tensor& gt, double smoothing) {
  require_same_shape(pred_prob, gt);
  auto p = pred_prob.reshape({pred_prob.size(0), -1});
  auto g = gt.to(pred_prob.dtype()).reshape({gt.size(0), -1});
  auto intersection = (p * g).sum(1);
  auto dice = (2.0 * intersection + smoothing) / (p.sum(1) + g.sum(1) + smoothing);
  return (1.0 - dice).mean();
}

torch::Tensor binary_cross_entropy(const torch::Tensor& pred_prob, const torch::Tensor& gt) {
  require_same_shape(pred_prob, gt);
  auto p = pred_prob.clamp(kProbabilityClamp, 1.0 - kProbabilityClamp);
  auto g = gt.to(pred_prob.dtype());
  return -(g * torch::log(p) + (1.0 - g) * torch::log(1.0 - p)).mean();
}

SegmentationTerms segmentation_loss(const torch::Tensor& pred_prob, const torch::Tensor& gt) {
  return {loss::binary_cross_entropy(pred_prob, gt), dice_loss(pred_prob, gt)};
}

ClassificationTerms classification_loss(const AttributeLogits& logits, const torch::Tensor& count_labels,
                                        const torch::Tensor& size_labels) {
  if (logits.count.size(0) != count_labels.size(0) || logits.size.size(0) != size_labels.size(0)) {
    throw Error(ErrorKind::ShapeMismatch, "logit and label batch sizes differ");
  }
  return {torch::nn::functional::cross_entropy(logits.count, count_labels),
          torch::nn::functional::cross_entropy(logits.size, size_labels)};
}

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  ce_count += o.ce_count;
  ce_size += o.ce_size;
  bce_seg += o.bce_seg;
  dice_seg += o.dice_seg;
  total += o.total;
  return *this;
}

LossBreakdown LossBreakdown::operator*(double s) const {
  return {ce_count * s, ce_size * s, bce_seg * s, dice_seg * s, total * s};
}

LossBreakdown JointLoss::values() const {
  return {ce_count.item<double>(), ce_size.item<double>(), bce_seg.item<double>(), dice_seg.item<double>(),
          total.item<double>()};
}

JointLoss joint_loss(const NetworkOutput& output, const torch::Tensor& gt_mask, const torch::Tensor& count_labels,
                     const torch::Tensor& size_labels) {
  JointLoss j;
  auto seg = segmentation_loss(output.mask_prob, gt_mask);
  j.bce_seg = seg.bce;
  j.dice_seg = seg.dice;
  if (output.logits) {
    auto cls = classification_loss(*output.logits, count_labels, size_labels);
    j.ce_count = cls.ce_count;
    j.ce_size = cls.ce_size;
    j.total = j.ce_count + j.ce_size + j.bce_seg + j.dice_seg;
  } else {
    j.ce_count = torch::zeros({}, output.mask_prob.options());
    j.ce_size = torch::zeros({}, output.mask_prob.options());
    j.total = j.bce_seg + j.dice_seg;
  }
  return j;
}

std::pair<torch::Tensor, torch::Tensor> label_tensors(std::span<const AttributeLabel> labels) {
  auto count = torch::empty({static_cast<std::int64_t>(labels.size())}, torch::kInt64);
  auto size = torch::empty_like(count);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    count[i] = static_cast<std::int64_t>(labels[i].count_class);
    size[i] = static_cast<std::int64_t>(labels[i].size_class);
  }
  return {count, size};
}

void write_csv_row(std::ostream& out, std::int64_t step, const LossBreakdown& b) {
  out << step << std::setprecision(10) << ',' << b.ce_count << ',' << b.ce_size << ',' << b.bce_seg << ','
      << b.dice_seg << ',' << b.total << '\n';
}

}  // namespace tganet::loss
