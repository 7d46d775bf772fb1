#include "tganet/network_config.hpp"

#include "tganet/errors.hpp"

namespace tganet {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::InvalidConfig, what);
}

}  // namespace

NetworkConfig NetworkConfig::tiny() {
  NetworkConfig c;
  c.input_size = 32;
  c.encoder_channels = {16, 32, 64, 128};
  c.fem_width = 8;
  c.decoder_widths = {16, 16, 8};
  c.embedding_k = 8;
  c.label_feature_dim = 8;
  return c;
}

void NetworkConfig::validate() const {
  require(encoder_strides[0] == 2, "encoder_strides[0] must be 2 (stem stride)");
  for (std::size_t i = 1; i < encoder_strides.size(); ++i) {
    require(encoder_strides[i] == 2 * encoder_strides[i - 1],
            "encoder_strides must double from stage to stage");
  }
  require(input_size > 0 && input_size % encoder_strides[3] == 0,
          "input_size must be a positive multiple of " + std::to_string(encoder_strides[3]));
  for (auto c : encoder_channels) require(c > 0, "encoder_channels must be positive");
  for (std::size_t i = 1; i < encoder_channels.size(); ++i) {
    require(encoder_channels[i] % 4 == 0, "bottleneck stage channels must be divisible by 4");
  }
  require(fem_width > 0, "fem_width must be positive");
  for (auto w : decoder_widths) require(w > 0, "decoder_widths must be positive");
  require(embedding_k > 0, "embedding_k must be positive");
  require(label_feature_dim > 0, "label_feature_dim must be positive");
  require(attention_reduction > 0, "attention_reduction must be positive");
  require(spatial_kernel > 0 && spatial_kernel % 2 == 1, "spatial_kernel must be odd");
  if (use_fem) {
    require(dilation_rates == std::vector<std::int64_t>{1, 6, 12, 18},
            "dilation_rates must be {1,6,12,18} when the feature enhancement module is on");
  }
  require(!use_label_attention || use_classifiers,
          "label attention needs the attribute classifiers for its probabilities");
  require(!pretrained_backbone || !backbone_weights.empty(),
          "pretrained_backbone requires backbone_weights");
}

std::array<double, 3> NetworkConfig::input_mean() const {
  if (pretrained_backbone) return {0.485, 0.456, 0.406};
  return {0.5, 0.5, 0.5};
}

std::array<double, 3> NetworkConfig::input_std() const {
  if (pretrained_backbone) return {0.229, 0.224, 0.225};
  return {0.5, 0.5, 0.5};
}

std::string_view to_string(AblationVariant v) {
  switch (v) {
    case AblationVariant::NoLabelClassifier: return "no-label-classifier";
    case AblationVariant::NoMsfa: return "no-msfa";
    case AblationVariant::NoFem: return "no-fem";
    case AblationVariant::NoAll: return "no-all";
    case AblationVariant::Full: return "full";
  }
  return "full";
}

std::string_view ablation_title(AblationVariant v) {
  switch (v) {
    case AblationVariant::NoLabelClassifier: return "TGANet w/o label and classifier";
    case AblationVariant::NoMsfa: return "TGANet w/o MSFA";
    case AblationVariant::NoFem: return "TGANet w/o FEM";
    case AblationVariant::NoAll: return "TGANet w/o (label+classifier+MSFA+FEM)";
    case AblationVariant::Full: return "TGANet";
  }
  return "TGANet";
}

AblationVariant parse_ablation_variant(std::string_view name) {
  for (auto v : kAblationOrder) {
    if (to_string(v) == name) return v;
  }
  throw Error(ErrorKind::InvalidConfig, "unknown ablation variant '" + std::string(name) +
                                            "' (expected no-label-classifier, no-msfa, no-fem, no-all, full)");
}

NetworkConfig apply_variant(NetworkConfig config, AblationVariant v) {
  switch (v) {
    case AblationVariant::NoLabelClassifier:
      config.use_label_attention = false;
      config.use_classifiers = false;
      break;
    case AblationVariant::NoMsfa:
      config.use_msfa = false;
      break;
    case AblationVariant::NoFem:
      config.use_fem = false;
      break;
    case AblationVariant::NoAll:
      config.use_label_attention = false;
      config.use_classifiers = false;
      config.use_msfa = false;
      config.use_fem = false;
      break;
    case AblationVariant::Full:
      config.use_label_attention = true;
      config.use_classifiers = true;
      config.use_msfa = true;
      config.use_fem = true;
      break;
  }
  return config;
}

void to_json(nlohmann::json& j, const NetworkConfig& c) {
  j = nlohmann::json{{"input_size", c.input_size},
                     {"encoder_channels", c.encoder_channels},
                     {"encoder_strides", c.encoder_strides},
                     {"fem_width", c.fem_width},
                     {"decoder_widths", c.decoder_widths},
                     {"embedding_k", c.embedding_k},
                     {"label_feature_dim", c.label_feature_dim},
                     {"dilation_rates", c.dilation_rates},
                     {"attention_reduction", c.attention_reduction},
                     {"spatial_kernel", c.spatial_kernel},
                     {"use_label_attention", c.use_label_attention},
                     {"use_classifiers", c.use_classifiers},
                     {"use_msfa", c.use_msfa},
                     {"use_fem", c.use_fem},
                     {"chain_label_attention", c.chain_label_attention},
                     {"pretrained_backbone", c.pretrained_backbone},
                     {"backbone_weights", c.backbone_weights}};
}

void from_json(const nlohmann::json& j, NetworkConfig& c) {
  // Missing keys keep their defaults so partial configs work.
  NetworkConfig d = c;
  c.input_size = j.value("input_size", d.input_size);
  c.encoder_channels = j.value("encoder_channels", d.encoder_channels);
  c.encoder_strides = j.value("encoder_strides", d.encoder_strides);
  c.fem_width = j.value("fem_width", d.fem_width);
  c.decoder_widths = j.value("decoder_widths", d.decoder_widths);
  c.embedding_k = j.value("embedding_k", d.embedding_k);
  c.label_feature_dim = j.value("label_feature_dim", d.label_feature_dim);
  c.dilation_rates = j.value("dilation_rates", d.dilation_rates);
  c.attention_reduction = j.value("attention_reduction", d.attention_reduction);
  c.spatial_kernel = j.value("spatial_kernel", d.spatial_kernel);
  c.use_label_attention = j.value("use_label_attention", d.use_label_attention);
  c.use_classifiers = j.value("use_classifiers", d.use_classifiers);
  c.use_msfa = j.value("use_msfa", d.use_msfa);
  c.use_fem = j.value("use_fem", d.use_fem);
  c.chain_label_attention = j.value("chain_label_attention", d.chain_label_attention);
  c.pretrained_backbone = j.value("pretrained_backbone", d.pretrained_backbone);
  c.backbone_weights = j.value("backbone_weights", d.backbone_weights);
}

}  // namespace tganet
