#include "tganet/metrics.hpp"

#include <iomanip>
#include <sstream>

#include <torch/torch.h>

#include "tganet/errors.hpp"

namespace tganet::metrics {

namespace {

double ratio(double num, double den) { return den == 0.0 ? 1.0 : num / den; }

}  // namespace

ConfusionCounts confusion_counts(std::span<const float> pred_prob, std::span<const std::uint8_t> gt,
                                 double threshold) {
  if (pred_prob.size() != gt.size()) throw Error(ErrorKind::ShapeMismatch, "prediction and mask sizes differ");
  ConfusionCounts c;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const bool p = pred_prob[i] > threshold;
    const bool g = gt[i] != 0;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

ConfusionCounts confusion_counts(const torch::Tensor& pred_prob, const torch::Tensor& gt, double threshold) {
  if (pred_prob.sizes() != gt.sizes()) throw Error(ErrorKind::ShapeMismatch, "prediction and mask shapes differ");
  auto p = (pred_prob.detach() > threshold).flatten();
  auto g = (gt.detach() != 0).flatten();
  ConfusionCounts c;
  c.tp = (p & g).sum().item<std::int64_t>();
  c.fp = (p & ~g).sum().item<std::int64_t>();
  c.fn = (~p & g).sum().item<std::int64_t>();
  c.tn = (~p & ~g).sum().item<std::int64_t>();
  return c;
}

MetricSet compute_metric_set(const ConfusionCounts& counts) {
  const auto tp = static_cast<double>(counts.tp);
  const auto fp = static_cast<double>(counts.fp);
  const auto fn = static_cast<double>(counts.fn);
  MetricSet m;
  m.miou = ratio(tp, tp + fp + fn);
  m.mdsc = ratio(2.0 * tp, 2.0 * tp + fp + fn);
  m.recall = ratio(tp, tp + fn);
  m.precision = ratio(tp, tp + fp);
  // Count form of 5PR/(4P+R); stays 0 when tp = 0 and both fp, fn > 0.
  m.f2 = ratio(5.0 * tp, 5.0 * tp + 4.0 * fn + fp);
  return m;
}

MetricSet aggregate(std::span<const MetricSet> per_sample) {
  if (per_sample.empty()) throw Error(ErrorKind::EmptyList, "no samples to aggregate");
  MetricSet sum;
  for (const auto& m : per_sample) {
    sum.miou += m.miou;
    sum.mdsc += m.mdsc;
    sum.recall += m.recall;
    sum.precision += m.precision;
    sum.f2 += m.f2;
  }
  const auto n = static_cast<double>(per_sample.size());
  return {sum.miou / n, sum.mdsc / n, sum.recall / n, sum.precision / n, sum.f2 / n};
}

StratifiedReport stratified_report(std::span<const LabeledMetrics> per_sample) {
  if (per_sample.empty()) throw Error(ErrorKind::EmptyList, "no samples to stratify");
  std::array<double, 5> sums{};
  StratifiedReport report;
  for (const auto& s : per_sample) {
    const auto size_bucket = static_cast<std::size_t>(s.label.size_class);
    const auto count_bucket = 3 + static_cast<std::size_t>(s.label.count_class);
    for (auto b : {size_bucket, count_bucket}) {
      sums[b] += s.metrics.mdsc;
      ++report.members[b];
    }
  }
  for (std::size_t b = 0; b < sums.size(); ++b) {
    if (report.members[b] > 0) report.mdsc[b] = sums[b] / static_cast<double>(report.members[b]);
  }
  return report;
}

void write_metrics_csv(std::ostream& out, std::span<const SampleRecord> samples) {
  out << "sample_id,miou,mdsc,recall,precision,f2,size_class,count_class\n";
  out << std::setprecision(10);
  std::vector<MetricSet> all;
  for (const auto& s : samples) {
    const auto& m = s.metrics;
    out << s.sample_id << ',' << m.miou << ',' << m.mdsc << ',' << m.recall << ',' << m.precision << ','
        << m.f2 << ',' << to_string(s.label.size_class) << ',' << to_string(s.label.count_class) << '\n';
    all.push_back(m);
  }
  const auto mean = aggregate(all);
  out << "aggregate," << mean.miou << ',' << mean.mdsc << ',' << mean.recall << ',' << mean.precision << ','
      << mean.f2 << ",,\n";
}

void write_stratified_csv(std::ostream& out, const StratifiedReport& report, const std::string& method) {
  out << "method";
  for (auto name : kBucketNames) out << ',' << name;
  out << '\n' << method << std::setprecision(10);
  for (const auto& v : report.mdsc) {
    out << ',';
    if (v) out << *v;
  }
  out << "\nmembers";
  for (auto n : report.members) out << ',' << n;
  out << '\n';
}

std::string format_stratified_table(const StratifiedReport& report, const std::string& method) {
  std::ostringstream out;
  const int method_width = std::max<int>(8, static_cast<int>(method.size()) + 2);
  out << std::left << std::setw(method_width) << "Method";
  for (auto name : kBucketNames) out << "| " << std::setw(8) << name;
  out << '\n' << std::string(static_cast<std::size_t>(method_width) + 5 * 10, '-') << '\n';
  out << std::setw(method_width) << method;
  for (const auto& v : report.mdsc) {
    std::ostringstream cell;
    if (v) cell << std::fixed << std::setprecision(4) << *v;
    else cell << "-";
    out << "| " << std::setw(8) << cell.str();
  }
  out << '\n' << "mDSC per bucket; per-sample scores averaged, '-' marks an empty bucket.\n";
  return out.str();
}

}  // namespace tganet::metrics
