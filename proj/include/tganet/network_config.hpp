#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace tganet {

/// Architecture hyperparameters. Defaults reproduce the full model.
struct NetworkConfig {
  std::int64_t input_size = 256;
  std::array<std::int64_t, 4> encoder_channels = {64, 256, 512, 1024};
  std::array<std::int64_t, 4> encoder_strides = {2, 4, 8, 16};
  std::int64_t fem_width = 104;
  std::array<std::int64_t, 3> decoder_widths = {256, 128, 64};
  std::int64_t embedding_k = 300;
  std::int64_t label_feature_dim = 64;
  std::vector<std::int64_t> dilation_rates = {1, 6, 12, 18};
  std::int64_t attention_reduction = 16;
  std::int64_t spatial_kernel = 7;

  bool use_label_attention = true;
  bool use_classifiers = true;
  bool use_msfa = true;
  bool use_fem = true;
  /// Label features refined stage by stage instead of one shared l_f.
  bool chain_label_attention = false;

  bool pretrained_backbone = false;
  /// Backbone weight file (see scripts/export_resnet50.py); used when pretrained_backbone is set.
  std::string backbone_weights;

  /// Small configuration for gradient checks and fast end-to-end runs.
  static NetworkConfig tiny();

  void validate() const;

  /// Per-channel standardization applied to [0,1] inputs.
  std::array<double, 3> input_mean() const;
  std::array<double, 3> input_std() const;

  bool operator==(const NetworkConfig&) const = default;
};

/// Table 3 ablation variants.
enum class AblationVariant {
  NoLabelClassifier,  // #1
  NoMsfa,             // #2
  NoFem,              // #3
  NoAll,              // #4
  Full,               // #5
};

inline constexpr std::array<AblationVariant, 5> kAblationOrder = {
    AblationVariant::NoLabelClassifier, AblationVariant::NoMsfa, AblationVariant::NoFem,
    AblationVariant::NoAll, AblationVariant::Full};

std::string_view to_string(AblationVariant v);
/// Row label in the ablation table, e.g. "TGANet w/o MSFA".
std::string_view ablation_title(AblationVariant v);
AblationVariant parse_ablation_variant(std::string_view name);
NetworkConfig apply_variant(NetworkConfig config, AblationVariant v);

void to_json(nlohmann::json& j, const NetworkConfig& c);
void from_json(const nlohmann::json& j, NetworkConfig& c);

}  // namespace tganet
