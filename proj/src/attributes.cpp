#include "tganet/attributes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <opencv2/imgproc.hpp>
#include <torch/torch.h>

#include "tganet/errors.hpp"

namespace tganet {

namespace {

const std::string kWordMarker = "\xE2\x96\x81";  // U+2581, SentencePiece word boundary

void require_foreground(const BinaryMask& mask) {
  if (mask.empty() || cv::countNonZero(mask) == 0) {
    throw Error(ErrorKind::EmptyMask, "mask has no foreground pixel");
  }
}

}  // namespace

std::string_view to_string(CountClass c) { return c == CountClass::One ? "one" : "many"; }

std::string_view to_string(SizeClass s) {
  switch (s) {
    case SizeClass::Small: return "small";
    case SizeClass::Medium: return "medium";
    case SizeClass::Large: return "large";
  }
  return "small";
}

CountClass parse_count_class(std::string_view text) {
  if (text == "one") return CountClass::One;
  if (text == "many") return CountClass::Many;
  throw Error(ErrorKind::InvalidConfig, "unknown count class '" + std::string(text) + "'");
}

SizeClass parse_size_class(std::string_view text) {
  if (text == "small") return SizeClass::Small;
  if (text == "medium") return SizeClass::Medium;
  if (text == "large") return SizeClass::Large;
  throw Error(ErrorKind::InvalidConfig, "unknown size class '" + std::string(text) + "'");
}

SizeThresholds::SizeThresholds(double t_small_max, double t_medium_max)
    : small_max_(t_small_max), medium_max_(t_medium_max) {
  if (!(0.0 < small_max_ && small_max_ < medium_max_ && medium_max_ < 1.0)) {
    std::ostringstream msg;
    msg << "thresholds must satisfy 0 < small < medium < 1, got (" << small_max_ << ", "
        << medium_max_ << ")";
    throw Error(ErrorKind::InvalidThresholds, msg.str());
  }
}

std::int64_t count_components(const BinaryMask& mask) {
  if (mask.empty()) return 0;
  cv::Mat1b binary = mask != 0;
  cv::Mat labels;
  // Label 0 is the background.
  return cv::connectedComponents(binary, labels, 8, CV_32S) - 1;
}

double foreground_fraction(const BinaryMask& mask) {
  if (mask.empty()) return 0.0;
  return static_cast<double>(cv::countNonZero(mask)) / static_cast<double>(mask.total());
}

CountClass derive_count_attribute(const BinaryMask& mask) {
  require_foreground(mask);
  return count_components(mask) == 1 ? CountClass::One : CountClass::Many;
}

SizeClass derive_size_attribute(const BinaryMask& mask, const SizeThresholds& thresholds) {
  require_foreground(mask);
  const double fraction = foreground_fraction(mask);
  if (fraction <= thresholds.small_max()) return SizeClass::Small;
  if (fraction <= thresholds.medium_max()) return SizeClass::Medium;
  return SizeClass::Large;
}

AttributeLabel derive_attributes(const BinaryMask& mask, const SizeThresholds& thresholds) {
  return {derive_count_attribute(mask), derive_size_attribute(mask, thresholds)};
}

double empirical_quantile(std::vector<double> samples, double q) {
  if (samples.empty()) throw Error(ErrorKind::EmptyDataset, "quantile of an empty sample");
  std::sort(samples.begin(), samples.end());
  const double h = (static_cast<double>(samples.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, samples.size() - 1);
  return samples[lo] + (h - static_cast<double>(lo)) * (samples[hi] - samples[lo]);
}

SizeThresholds fit_size_thresholds_from_fractions(std::span<const double> fractions) {
  if (fractions.empty()) throw Error(ErrorKind::EmptyDataset, "no training masks to fit size thresholds");
  std::vector<double> values(fractions.begin(), fractions.end());
  const double lower = empirical_quantile(values, 1.0 / 3.0);
  double upper = empirical_quantile(values, 2.0 / 3.0);
  if (upper <= lower) upper = lower + kThresholdTieEpsilon;
  return SizeThresholds(lower, upper);
}

SizeThresholds fit_size_thresholds(std::span<const BinaryMask> train_masks) {
  if (train_masks.empty()) throw Error(ErrorKind::EmptyDataset, "no training masks to fit size thresholds");
  std::vector<double> fractions;
  fractions.reserve(train_masks.size());
  for (const auto& mask : train_masks) {
    require_foreground(mask);
    fractions.push_back(foreground_fraction(mask));
  }
  return fit_size_thresholds_from_fractions(fractions);
}

AttributeEmbeddings::AttributeEmbeddings(std::int64_t k, std::array<std::vector<double>, 5> rows)
    : k_(k), rows_(std::move(rows)) {
  if (k_ <= 0) throw Error(ErrorKind::DimensionMismatch, "embedding dimension must be positive");
  for (std::size_t j = 0; j < rows_.size(); ++j) {
    if (static_cast<std::int64_t>(rows_[j].size()) != k_) {
      throw Error(ErrorKind::DimensionMismatch, "embedding for '" + std::string(kAttributeWords[j]) +
                                                    "' has length " + std::to_string(rows_[j].size()) +
                                                    ", expected " + std::to_string(k_));
    }
    for (double v : rows_[j]) {
      if (!std::isfinite(v)) {
        throw Error(ErrorKind::DimensionMismatch,
                    "non-finite embedding entry for '" + std::string(kAttributeWords[j]) + "'");
      }
    }
  }
}

AttributeEmbeddings AttributeEmbeddings::from_seed(std::uint64_t seed, std::int64_t k) {
  if (k <= 0) throw Error(ErrorKind::DimensionMismatch, "embedding dimension must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::array<std::vector<double>, 5> rows;
  for (auto& row : rows) {
    row.resize(static_cast<std::size_t>(k));
    for (auto& v : row) v = normal(rng);
  }
  return AttributeEmbeddings(k, std::move(rows));
}

AttributeEmbeddings AttributeEmbeddings::from_file(const std::filesystem::path& path, std::int64_t k) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open embedding file " + path.string());

  // Only substrings of the attribute words can take part in a lookup.
  std::set<std::string> wanted;
  for (auto word : kAttributeWords) {
    const std::string w(word);
    for (std::size_t begin = 0; begin < w.size(); ++begin) {
      for (std::size_t len = 1; begin + len <= w.size(); ++len) {
        wanted.insert(w.substr(begin, len));
        if (begin == 0) wanted.insert(kWordMarker + w.substr(0, len));
      }
    }
  }

  std::map<std::string, std::vector<double>> vocab;
  std::string line;
  bool first_line = true;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    if (first_line) {
      first_line = false;
      // word2vec-style "<count> <dim>" header.
      std::string second, third;
      if ((fields >> second) && !(fields >> third) &&
          std::all_of(token.begin(), token.end(), ::isdigit)) {
        continue;
      }
      fields.clear();
      fields.str(line);
      fields >> token;
    }
    if (!wanted.contains(token)) continue;
    std::vector<double> vec;
    double v;
    while (fields >> v) vec.push_back(v);
    if (static_cast<std::int64_t>(vec.size()) != k) {
      throw Error(ErrorKind::DimensionMismatch, "embedding file row '" + token + "' has length " +
                                                    std::to_string(vec.size()) + ", requested k=" +
                                                    std::to_string(k));
    }
    vocab.emplace(token, std::move(vec));
  }

  auto find_piece = [&](const std::string& piece, bool word_start) -> const std::vector<double>* {
    if (word_start) {
      if (auto it = vocab.find(kWordMarker + piece); it != vocab.end()) return &it->second;
    }
    if (auto it = vocab.find(piece); it != vocab.end()) return &it->second;
    return nullptr;
  };

  std::array<std::vector<double>, 5> rows;
  for (std::size_t j = 0; j < kAttributeWords.size(); ++j) {
    const std::string word(kAttributeWords[j]);
    std::vector<const std::vector<double>*> pieces;
    std::size_t pos = 0;
    while (pos < word.size()) {
      const std::vector<double>* match = nullptr;
      std::size_t len = word.size() - pos;
      for (; len > 0; --len) {
        match = find_piece(word.substr(pos, len), pos == 0);
        if (match) break;
      }
      if (!match) {
        throw Error(ErrorKind::MissingWord,
                    "embedding file " + path.string() + " cannot encode attribute word '" + word + "'");
      }
      pieces.push_back(match);
      pos += len;
    }
    std::vector<double> mean(static_cast<std::size_t>(k), 0.0);
    for (const auto* piece : pieces) {
      for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += (*piece)[c];
    }
    for (auto& v : mean) v /= static_cast<double>(pieces.size());
    rows[j] = std::move(mean);
  }
  return AttributeEmbeddings(k, std::move(rows));
}

AttributeEmbeddings AttributeEmbeddings::load(const std::string& source, std::int64_t k) {
  constexpr std::string_view kSeedPrefix = "seed:";
  if (source.starts_with(kSeedPrefix)) {
    return from_seed(std::stoull(source.substr(kSeedPrefix.size())), k);
  }
  return from_file(source, k);
}

const std::vector<double>& AttributeEmbeddings::row(std::string_view word) const {
  for (std::size_t j = 0; j < kAttributeWords.size(); ++j) {
    if (kAttributeWords[j] == word) return rows_[j];
  }
  throw Error(ErrorKind::MissingWord, "not an attribute word: '" + std::string(word) + "'");
}

torch::Tensor AttributeEmbeddings::to_tensor(torch::Dtype dtype) const {
  auto table = torch::empty({5, k_}, torch::kFloat64);
  auto acc = table.accessor<double, 2>();
  for (std::int64_t j = 0; j < 5; ++j) {
    for (std::int64_t c = 0; c < k_; ++c) acc[j][c] = rows_[j][c];
  }
  return table.to(dtype);
}

void validate_attribute_probabilities(std::span<const double, 5> probs) {
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw Error(ErrorKind::InvalidProbabilities, "attribute probability outside [0,1]");
    }
  }
  const double count_sum = probs[0] + probs[1];
  const double size_sum = probs[2] + probs[3] + probs[4];
  if (std::abs(count_sum - 1.0) > kProbabilitySumTolerance ||
      std::abs(size_sum - 1.0) > kProbabilitySumTolerance) {
    std::ostringstream msg;
    msg << "count probabilities sum to " << count_sum << " and size probabilities to " << size_sum;
    throw Error(ErrorKind::InvalidProbabilities, msg.str());
  }
}

EmbeddingFusion fuse_embeddings(std::span<const double, 5> probs, const AttributeEmbeddings& embeddings,
                                ProbabilityCheck check) {
  if (check == ProbabilityCheck::Enforce) validate_attribute_probabilities(probs);
  EmbeddingFusion fusion;
  fusion.k = embeddings.dim();
  fusion.values.resize(static_cast<std::size_t>(5 * fusion.k));
  for (std::size_t j = 0; j < 5; ++j) {
    const auto& a = embeddings.row(j);
    for (std::size_t c = 0; c < a.size(); ++c) fusion.values[j * fusion.k + c] = probs[j] * a[c];
  }
  return fusion;
}

torch::Tensor fuse_embeddings(const torch::Tensor& probs, const torch::Tensor& table) {
  if (probs.dim() != 2 || probs.size(1) != 5) {
    throw Error(ErrorKind::ShapeMismatch, "attribute probabilities must have shape (B, 5)");
  }
  if (table.dim() != 2 || table.size(0) != 5) {
    throw Error(ErrorKind::ShapeMismatch, "embedding table must have shape (5, k)");
  }
  return probs.unsqueeze(2) * table.unsqueeze(0);
}

}  // namespace tganet
