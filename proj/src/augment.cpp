#include "tganet/augment.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgproc.hpp>

namespace tganet::data {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t augment_seed(std::uint64_t global_seed, std::int64_t epoch, std::int64_t sample_index) {
  auto h = splitmix64(global_seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(epoch));
  return splitmix64(h ^ static_cast<std::uint64_t>(sample_index));
}

double AugmentRng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

int AugmentRng::uniform_int(int lo, int hi) {
  const auto span = static_cast<double>(hi - lo + 1);
  return std::min(hi, lo + static_cast<int>(std::floor(uniform() * span)));
}

AugmentedPair augment_pair(const cv::Mat3f& image, const BinaryMask& mask, std::uint64_t rng_state,
                           const AugmentOptions& options) {
  AugmentRng rng(rng_state);
  // Every draw happens regardless of outcome so one decision never shifts another.
  const bool hflip = rng.uniform() < options.p_hflip;
  const bool vflip = rng.uniform() < options.p_vflip;
  const bool rotate = rng.uniform() < options.p_rotate;
  const double angle = rng.uniform(-options.rotate_limit_deg, options.rotate_limit_deg);
  const bool dropout = rng.uniform() < options.p_dropout;

  AugmentedPair out{image.clone(), mask.clone()};
  if (hflip) {
    cv::flip(out.image, out.image, 1);
    cv::flip(out.mask, out.mask, 1);
  }
  if (vflip) {
    cv::flip(out.image, out.image, 0);
    cv::flip(out.mask, out.mask, 0);
  }
  if (rotate) {
    const cv::Point2f center(static_cast<float>(image.cols - 1) / 2.0f, static_cast<float>(image.rows - 1) / 2.0f);
    const cv::Mat rotation = cv::getRotationMatrix2D(center, angle, 1.0);
    cv::Mat3f rotated_image;
    cv::Mat1b rotated_mask;
    cv::warpAffine(out.image, rotated_image, rotation, out.image.size(), cv::INTER_LINEAR, cv::BORDER_CONSTANT,
                   cv::Scalar::all(0));
    cv::warpAffine(out.mask, rotated_mask, rotation, out.mask.size(), cv::INTER_NEAREST, cv::BORDER_CONSTANT,
                   cv::Scalar::all(0));
    out.image = rotated_image;
    out.mask = rotated_mask;
  }
  if (dropout) {
    const int holes = rng.uniform_int(1, options.max_holes);
    const int max_h = std::max(1, static_cast<int>(std::lround(options.max_hole_fraction * image.rows)));
    const int max_w = std::max(1, static_cast<int>(std::lround(options.max_hole_fraction * image.cols)));
    for (int h = 0; h < holes; ++h) {
      const int height = rng.uniform_int(1, max_h);
      const int width = rng.uniform_int(1, max_w);
      const int y = rng.uniform_int(0, image.rows - height);
      const int x = rng.uniform_int(0, image.cols - width);
      out.image(cv::Rect(x, y, width, height)).setTo(cv::Scalar::all(0));
    }
  }
  out.mask = out.mask != 0;
  out.mask.setTo(1, out.mask);
  return out;
}

}  // namespace tganet::data
