#include "tganet/synthetic.hpp"

#include <array>
#include <cmath>
#include <cstdio>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "tganet/augment.hpp"
#include "tganet/errors.hpp"

namespace tganet::data {

namespace fs = std::filesystem;

void write_synthetic_dataset(const fs::path& root, int count, int size, std::uint64_t seed) {
  if (count <= 0 || size < 16) throw Error(ErrorKind::InvalidConfig, "synthetic set needs count > 0 and size >= 16");
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");

  // Total foreground fraction per size class.
  constexpr std::array<double, 3> kAreaFraction = {0.04, 0.10, 0.22};

  for (int i = 0; i < count; ++i) {
    AugmentRng rng(augment_seed(seed, 0, i));
    const bool many = i % 2 == 1;
    const double area = kAreaFraction[static_cast<std::size_t>(i % 3)] * rng.uniform(0.9, 1.1);

    cv::Mat3b image(size, size);
    const double tone = rng.uniform(0.0, 1.0);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double shade = 0.5 + 0.3 * std::sin(0.15 * x + 3.0 * tone) * std::cos(0.11 * y);
        const auto noise = rng.uniform(-12.0, 12.0);
        image(y, x) = cv::Vec3b(cv::saturate_cast<uchar>(40 + 30 * shade + noise),
                                cv::saturate_cast<uchar>(50 + 40 * shade + noise),
                                cv::saturate_cast<uchar>(110 + 50 * shade + noise));
      }
    }
    cv::Mat1b mask = cv::Mat1b::zeros(size, size);

    const int blobs = many ? 2 : 1;
    const double blob_area = area * size * size / blobs;
    for (int b = 0; b < blobs; ++b) {
      const double aspect = rng.uniform(0.75, 1.33);
      const double ry = std::sqrt(blob_area / (M_PI * aspect));
      const double rx = ry * aspect;
      // Two blobs sit in opposite halves so they never touch.
      const double half = many ? size / 2.0 : size;
      const double lo_x = rx + 2, hi_x = half - rx - 2;
      const double cx = (hi_x > lo_x ? rng.uniform(lo_x, hi_x) : half / 2.0) + (b == 1 ? size / 2.0 : 0.0);
      const double cy = rng.uniform(ry + 2, std::max(ry + 2.0, size - ry - 2));
      const cv::Point center(static_cast<int>(std::lround(cx)), static_cast<int>(std::lround(cy)));
      const cv::Size axes(static_cast<int>(std::lround(rx)), static_cast<int>(std::lround(ry)));
      cv::ellipse(mask, center, axes, 0.0, 0.0, 360.0, cv::Scalar(255), cv::FILLED);
      cv::ellipse(image, center, axes, 0.0, 0.0, 360.0, cv::Scalar(120, 150, 230), cv::FILLED);
    }
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        if (mask(y, x) == 0) continue;
        const auto noise = rng.uniform(-15.0, 15.0);
        for (int c = 0; c < 3; ++c) image(y, x)[c] = cv::saturate_cast<uchar>(image(y, x)[c] + noise);
      }
    }

    char name[32];
    std::snprintf(name, sizeof(name), "synth_%04d.png", i);
    cv::imwrite((root / "images" / name).string(), image);
    cv::imwrite((root / "masks" / name).string(), mask);
  }
}

}  // namespace tganet::data
