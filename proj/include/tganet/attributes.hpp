#pragma once

// Text attributes of a polyp mask (count: one/many, size: small/medium/large),
// the word-embedding table for those five attributes, and the
// probability-weighted embedding fusion consumed by label attention.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <opencv2/core.hpp>
#include <torch/types.h>

namespace tganet {

/// Foreground is any nonzero pixel.
using BinaryMask = cv::Mat1b;

enum class CountClass : std::int64_t { One = 0, Many = 1 };
enum class SizeClass : std::int64_t { Small = 0, Medium = 1, Large = 2 };

struct AttributeLabel {
  CountClass count_class = CountClass::One;
  SizeClass size_class = SizeClass::Small;

  bool operator==(const AttributeLabel&) const = default;
};

std::string_view to_string(CountClass c);
std::string_view to_string(SizeClass s);
CountClass parse_count_class(std::string_view text);
SizeClass parse_size_class(std::string_view text);

/// Area-fraction bucket edges: small <= t_small_max < medium <= t_medium_max < large.
class SizeThresholds {
 public:
  SizeThresholds(double t_small_max, double t_medium_max);

  double small_max() const noexcept { return small_max_; }
  double medium_max() const noexcept { return medium_max_; }

 private:
  double small_max_;
  double medium_max_;
};

/// Separation added to the upper threshold when both terciles coincide.
inline constexpr double kThresholdTieEpsilon = 1e-9;

std::int64_t count_components(const BinaryMask& mask);
double foreground_fraction(const BinaryMask& mask);

/// One iff the mask has exactly one 8-connected foreground component.
CountClass derive_count_attribute(const BinaryMask& mask);
SizeClass derive_size_attribute(const BinaryMask& mask, const SizeThresholds& thresholds);
AttributeLabel derive_attributes(const BinaryMask& mask, const SizeThresholds& thresholds);

/// Linear-interpolation empirical quantile of unsorted samples, q in [0,1].
double empirical_quantile(std::vector<double> samples, double q);

/// Terciles of the foreground-fraction distribution over `train_masks`.
SizeThresholds fit_size_thresholds(std::span<const BinaryMask> train_masks);
SizeThresholds fit_size_thresholds_from_fractions(std::span<const double> fractions);

/// Attribute words in the fixed row order used everywhere downstream.
inline constexpr std::array<std::string_view, 5> kAttributeWords = {"one", "many", "small", "medium",
                                                                   "large"};

class AttributeEmbeddings {
 public:
  AttributeEmbeddings(std::int64_t k, std::array<std::vector<double>, 5> rows);

  /// Unit-variance Gaussian table, identical for identical (seed, k).
  static AttributeEmbeddings from_seed(std::uint64_t seed, std::int64_t k);

  /// Reads `word v1 ... vk` lines. A word missing from the file is assembled as
  /// the mean of its greedy longest-match sub-tokens (SentencePiece "▁" word
  /// markers are honored).
  static AttributeEmbeddings from_file(const std::filesystem::path& path, std::int64_t k);

  /// `source` is either "seed:<n>" or a file path.
  static AttributeEmbeddings load(const std::string& source, std::int64_t k);

  std::int64_t dim() const noexcept { return k_; }
  const std::vector<double>& row(std::size_t attribute) const { return rows_.at(attribute); }
  const std::vector<double>& row(std::string_view word) const;

  /// (5, k) tensor in kAttributeWords order.
  torch::Tensor to_tensor(torch::Dtype dtype = torch::kFloat32) const;

 private:
  std::int64_t k_;
  std::array<std::vector<double>, 5> rows_;
};

/// 5 x k matrix, row j = probs[j] * embedding_j.
struct EmbeddingFusion {
  std::int64_t k = 0;
  std::vector<double> values;  // row-major

  double at(std::size_t row, std::size_t col) const { return values.at(row * k + col); }
};

enum class ProbabilityCheck { Enforce, Skip };

/// Tolerance for the two softmax groups summing to one.
inline constexpr double kProbabilitySumTolerance = 1e-5;

void validate_attribute_probabilities(std::span<const double, 5> probs);

EmbeddingFusion fuse_embeddings(std::span<const double, 5> probs, const AttributeEmbeddings& embeddings,
                                ProbabilityCheck check = ProbabilityCheck::Enforce);

/// Batched form on tensors: probs (B, 5), table (5, k) -> (B, 5, k).
torch::Tensor fuse_embeddings(const torch::Tensor& probs, const torch::Tensor& table);

}  // namespace tganet
