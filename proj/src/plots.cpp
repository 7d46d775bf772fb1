#include "tganet/plots.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "tganet/errors.hpp"

namespace tganet::plots {

namespace {

constexpr int kWidth = 800;
constexpr int kHeight = 500;
constexpr int kMargin = 60;

cv::Scalar palette(std::size_t i) {
  static const cv::Scalar colors[] = {{180, 119, 31}, {14, 127, 255}, {44, 160, 44},  {40, 39, 214},
                                      {189, 103, 148}, {75, 86, 140}, {194, 119, 227}, {127, 127, 127}};
  return colors[i % 8];
}

void frame(cv::Mat3b& canvas, const std::string& title, double lo, double hi) {
  canvas.setTo(cv::Scalar(255, 255, 255));
  cv::rectangle(canvas, {kMargin, kMargin}, {kWidth - kMargin, kHeight - kMargin}, {0, 0, 0}, 1);
  cv::putText(canvas, title, {kMargin, kMargin - 20}, cv::FONT_HERSHEY_SIMPLEX, 0.6, {0, 0, 0}, 1, cv::LINE_AA);
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    const int y = kHeight - kMargin - (kHeight - 2 * kMargin) * t / 4;
    char label[32];
    std::snprintf(label, sizeof(label), "%.3g", v);
    cv::putText(canvas, label, {5, y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4, {0, 0, 0}, 1, cv::LINE_AA);
    cv::line(canvas, {kMargin - 4, y}, {kMargin, y}, {0, 0, 0}, 1);
  }
}

void save(const std::filesystem::path& path, const cv::Mat3b& canvas) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), canvas)) throw Error(ErrorKind::Io, "cannot write plot " + path.string());
}

}  // namespace

void write_line_plot(const std::filesystem::path& path, const std::string& title, const std::vector<Series>& series) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::size_t longest = 0;
  for (const auto& s : series) {
    for (double v : s.values) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    longest = std::max(longest, s.values.size());
  }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-12) hi = lo + 1.0;

  cv::Mat3b canvas(kHeight, kWidth);
  frame(canvas, title, lo, hi);
  const double x_span = std::max<std::size_t>(1, longest - 1);
  auto to_point = [&](std::size_t i, double v) {
    const int x = kMargin + static_cast<int>((kWidth - 2 * kMargin) * (static_cast<double>(i) / x_span));
    const int y = kHeight - kMargin - static_cast<int>((kHeight - 2 * kMargin) * (v - lo) / (hi - lo));
    return cv::Point(x, y);
  };
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& values = series[k].values;
    for (std::size_t i = 1; i < values.size(); ++i) {
      cv::line(canvas, to_point(i - 1, values[i - 1]), to_point(i, values[i]), palette(k), 2, cv::LINE_AA);
    }
    cv::putText(canvas, series[k].name, {kWidth - kMargin - 200, kMargin + 20 + 18 * static_cast<int>(k)},
                cv::FONT_HERSHEY_SIMPLEX, 0.45, palette(k), 1, cv::LINE_AA);
  }
  save(path, canvas);
}

void write_bar_plot(const std::filesystem::path& path, const std::string& title,
                    const std::vector<std::string>& categories, const std::vector<Series>& series) {
  cv::Mat3b canvas(kHeight, kWidth);
  frame(canvas, title, 0.0, 1.0);
  if (categories.empty() || series.empty()) {
    save(path, canvas);
    return;
  }
  const int group_width = (kWidth - 2 * kMargin) / static_cast<int>(categories.size());
  const int bar_width = std::max(2, (group_width - 10) / static_cast<int>(series.size()));
  for (std::size_t c = 0; c < categories.size(); ++c) {
    const int x0 = kMargin + group_width * static_cast<int>(c) + 5;
    for (std::size_t k = 0; k < series.size(); ++k) {
      const double v = c < series[k].values.size() ? std::clamp(series[k].values[c], 0.0, 1.0) : 0.0;
      const int top = kHeight - kMargin - static_cast<int>((kHeight - 2 * kMargin) * v);
      const int x = x0 + bar_width * static_cast<int>(k);
      cv::rectangle(canvas, {x, top}, {x + bar_width - 2, kHeight - kMargin}, palette(k), cv::FILLED);
    }
    cv::putText(canvas, categories[c], {x0, kHeight - kMargin + 20}, cv::FONT_HERSHEY_SIMPLEX, 0.45, {0, 0, 0}, 1,
                cv::LINE_AA);
  }
  for (std::size_t k = 0; k < series.size(); ++k) {
    cv::putText(canvas, series[k].name, {kMargin + 10, kMargin + 20 + 18 * static_cast<int>(k)},
                cv::FONT_HERSHEY_SIMPLEX, 0.45, palette(k), 1, cv::LINE_AA);
  }
  save(path, canvas);
}

}  // namespace tganet::plots
