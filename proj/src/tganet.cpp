#include "tganet/tganet.hpp"

#include <string>

#include "tganet/errors.hpp"

namespace tganet {

torch::Tensor attribute_probabilities(const AttributeLogits& logits) {
  return torch::cat({torch::softmax(logits.count, 1), torch::softmax(logits.size, 1)}, 1);
}

namespace nn {

FeatureEnhancementImpl::FeatureEnhancementImpl(std::int64_t in, const NetworkConfig& config) {
  const auto width = config.fem_width;
  for (std::size_t b = 0; b < config.dilation_rates.size(); ++b) {
    const auto id = std::to_string(b);
    branches_.push_back(register_module("branch" + id, ConvBnAct(in, width, 3, config.dilation_rates[b])));
    branch_attention_.push_back(
        register_module("branch" + id + "_attention", ChannelAttention(width, config.attention_reduction)));
  }
  const auto concat = width * static_cast<std::int64_t>(branches_.size());
  fuse = register_module("fuse", ConvBnAct(concat, width, 3, 1, /*relu=*/false));
  residual = register_module("residual", ConvBnAct(in, width, 1, 1, /*relu=*/false));
  spatial = register_module("spatial", SpatialAttention(config.spatial_kernel));
}

FeatureEnhancementImpl::Trace FeatureEnhancementImpl::trace(const torch::Tensor& x) {
  Trace t;
  std::vector<torch::Tensor> parts;
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    auto y = branches_[b]->forward(x);
    auto g = branch_attention_[b]->gate(y);
    t.channel_gates.push_back(g);
    parts.push_back(y * g);
  }
  auto y = torch::relu(fuse->forward(torch::cat(parts, 1)) + residual->forward(x));
  t.spatial_gate = spatial->gate(y);
  t.output = y * t.spatial_gate;
  return t;
}

DecoderBlockImpl::DecoderBlockImpl(std::int64_t deep_channels, std::int64_t skip_channels,
                                   std::int64_t out_channels, const NetworkConfig& config) {
  reduce = register_module("reduce", ConvBnAct(deep_channels + skip_channels, out_channels, 1));
  conv_a = register_module("conv_a", ConvBnAct(out_channels, out_channels, 3, 1, false));
  conv_b = register_module("conv_b", ConvBnAct(out_channels, out_channels, 3, 1, false));
  conv_c = register_module("conv_c", ConvBnAct(out_channels, out_channels, 3, 1, false));
  cbam = register_module("cbam", Cbam(out_channels, config.attention_reduction, config.spatial_kernel));
  if (config.use_label_attention) {
    const auto dim = config.label_feature_dim;
    label_gate = register_module(
        "label_gate", torch::nn::Sequential(torch::nn::Conv2d(torch::nn::Conv2dOptions(dim, dim, 1)),
                                            torch::nn::ReLU(),
                                            torch::nn::Conv2d(torch::nn::Conv2dOptions(dim, out_channels, 1))));
  }
}

DecoderBlockImpl::Result DecoderBlockImpl::forward(const torch::Tensor& deep, const torch::Tensor& skip,
                                                   const torch::Tensor& label_features) {
  if (deep.dim() != 4 || skip.dim() != 4 || deep.size(0) != skip.size(0) ||
      skip.size(2) != 2 * deep.size(2) || skip.size(3) != 2 * deep.size(3)) {
    throw Error(ErrorKind::ShapeMismatch, "decoder skip features must be twice the deep resolution");
  }
  auto x = upsample_bilinear(deep, skip.size(2), skip.size(3));
  x = reduce->forward(torch::cat({x, skip}, 1));
  auto s1 = x;
  x = torch::relu(conv_a->forward(x) + s1);
  auto s2 = x;
  x = torch::relu(conv_b->forward(x) + s1 + s2);
  auto s3 = x;
  x = torch::relu(conv_c->forward(x) + s1 + s2 + s3);

  Result r;
  r.cbam = cbam->forward(x);
  if (label_gate && label_features.defined()) {
    auto lf = label_features.view({label_features.size(0), label_features.size(1), 1, 1});
    r.gate = torch::sigmoid(label_gate->forward(lf));
    r.out = r.cbam * r.gate;
  } else {
    r.out = r.cbam;
  }
  return r;
}

MultiScaleAggregationImpl::MultiScaleAggregationImpl(std::array<std::int64_t, 3> in_channels,
                                                     std::int64_t out_channels) {
  branch1 = register_module("branch1", ConvBnAct(in_channels[0], out_channels, 1));
  branch2 = register_module("branch2", ConvBnAct(in_channels[1], out_channels, 1));
  branch3 = register_module("branch3", ConvBnAct(in_channels[2], out_channels, 1));
  fuse = register_module("fuse", ConvBnAct(3 * out_channels, out_channels, 1));
  conv_a = register_module("conv_a", ConvBnAct(out_channels, out_channels, 3, 1, false));
  conv_b = register_module("conv_b", ConvBnAct(out_channels, out_channels, 3, 1, false));
}

torch::Tensor MultiScaleAggregationImpl::forward(const torch::Tensor& d1, const torch::Tensor& d2,
                                                 const torch::Tensor& d3) {
  if (!(d1.size(2) < d2.size(2) && d2.size(2) < d3.size(2) && d1.size(3) < d2.size(3) &&
        d2.size(3) < d3.size(3))) {
    throw Error(ErrorKind::ShapeMismatch, "multi-scale inputs must have strictly increasing resolution");
  }
  const auto h = d3.size(2), w = d3.size(3);
  auto x1 = branch1->forward(upsample_bilinear(d1, h, w));
  auto x2 = branch2->forward(upsample_bilinear(d2, h, w));
  auto x3 = branch3->forward(d3);
  auto x = fuse->forward(torch::cat({x1, x2, x3}, 1));
  auto s1 = x;
  x = torch::relu(conv_a->forward(x) + s1);
  auto s2 = x;
  return torch::relu(conv_b->forward(x) + s1 + s2);
}

}  // namespace nn

TGANetImpl::TGANetImpl(NetworkConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& ch = config_.encoder_channels;
  encoder = register_module("encoder", nn::ResNetEncoder(config_));

  if (config_.use_classifiers) {
    count_head = register_module("count_head", torch::nn::Linear(ch[3], 2));
    size_head = register_module("size_head", torch::nn::Linear(ch[3], 3));
  }
  if (config_.use_label_attention) {
    const auto dim = config_.label_feature_dim;
    label_fc1 = register_module("label_fc1", torch::nn::Linear(5 * config_.embedding_k, dim));
    label_fc2 = register_module("label_fc2", torch::nn::Linear(dim, dim));
    if (config_.chain_label_attention) {
      for (int s = 1; s < 3; ++s) {
        label_chain_.push_back(
            register_module("label_chain" + std::to_string(s), torch::nn::Linear(dim, dim)));
      }
    }
  }

  for (std::size_t i = 0; i < 4; ++i) {
    const auto id = std::to_string(i + 1);
    if (config_.use_fem) {
      fems_.push_back(register_module("fem" + id, nn::FeatureEnhancement(ch[i], config_)));
    } else {
      projections_.push_back(register_module("proj" + id, nn::ConvBnAct(ch[i], config_.fem_width, 1)));
    }
  }

  const auto& dw = config_.decoder_widths;
  const std::array<std::int64_t, 3> deep = {config_.fem_width, dw[0], dw[1]};
  for (std::size_t i = 0; i < 3; ++i) {
    decoders_.push_back(register_module("decoder" + std::to_string(i + 1),
                                        nn::DecoderBlock(deep[i], config_.fem_width, dw[i], config_)));
  }
  if (config_.use_msfa) msfa = register_module("msfa", nn::MultiScaleAggregation(dw, dw[2]));
  mask_head = register_module("mask_head", torch::nn::Conv2d(torch::nn::Conv2dOptions(dw[2], 1, 1)));

  nn::initialize_weights(*this);

  embeddings_ = register_buffer("attribute_embeddings", torch::zeros({5, config_.embedding_k}));
  const auto mean = config_.input_mean();
  const auto std = config_.input_std();
  mean_ = torch::tensor({mean[0], mean[1], mean[2]}, torch::kFloat32).view({1, 3, 1, 1});
  std_ = torch::tensor({std[0], std[1], std[2]}, torch::kFloat32).view({1, 3, 1, 1});

  if (config_.pretrained_backbone) encoder->load_pretrained(config_.backbone_weights);
}

TGANetImpl::TGANetImpl(NetworkConfig config, const AttributeEmbeddings& embeddings)
    : TGANetImpl(std::move(config)) {
  set_embeddings(embeddings);
}

void TGANetImpl::set_embeddings(const AttributeEmbeddings& embeddings) {
  if (embeddings.dim() != config_.embedding_k) {
    throw Error(ErrorKind::DimensionMismatch, "embedding dimension " + std::to_string(embeddings.dim()) +
                                                  " differs from embedding_k " +
                                                  std::to_string(config_.embedding_k));
  }
  torch::NoGradGuard no_grad;
  embeddings_.copy_(embeddings.to_tensor(torch::kFloat64));
}

torch::Tensor TGANetImpl::checked(torch::Tensor t, const char* what) const {
  if (check_finite_ && !torch::isfinite(t).all().item<bool>()) {
    throw Error(ErrorKind::NonFiniteFeature, std::string("non-finite values in ") + what);
  }
  return t;
}

torch::Tensor TGANetImpl::standardize(const torch::Tensor& image) const {
  return (image - mean_.to(image.dtype())) / std_.to(image.dtype());
}

void TGANetImpl::check_image(const torch::Tensor& image) const {
  const auto s = config_.input_size;
  if (image.dim() != 4 || image.size(1) != 3 || image.size(2) != s || image.size(3) != s) {
    throw Error(ErrorKind::ShapeMismatch, "expected image of shape (B, 3, " + std::to_string(s) + ", " +
                                              std::to_string(s) + ")");
  }
}

std::array<torch::Tensor, 4> TGANetImpl::encode(const torch::Tensor& image) {
  check_image(image);
  auto e = encoder->forward(image);
  for (std::size_t i = 0; i < e.size(); ++i) checked(e[i], "encoder features");
  return e;
}

AttributeLogits TGANetImpl::classify_attributes(const torch::Tensor& e4) {
  if (!config_.use_classifiers) {
    throw Error(ErrorKind::InvalidConfig, "attribute classifiers are disabled in this configuration");
  }
  auto pooled = e4.mean({2, 3});
  return {count_head->forward(pooled), size_head->forward(pooled)};
}

torch::Tensor TGANetImpl::enhance_features(std::size_t stage, const torch::Tensor& e) {
  auto f = config_.use_fem ? fems_.at(stage)->forward(e) : projections_.at(stage)->forward(e);
  return checked(f, "enhanced features");
}

torch::Tensor TGANetImpl::compute_label_features(const torch::Tensor& fusion) {
  if (!config_.use_label_attention) {
    throw Error(ErrorKind::InvalidConfig, "label attention is disabled in this configuration");
  }
  if (fusion.dim() != 3 || fusion.size(1) != 5 || fusion.size(2) != config_.embedding_k) {
    throw Error(ErrorKind::DimensionMismatch,
                "embedding fusion must be (B, 5, " + std::to_string(config_.embedding_k) + ")");
  }
  auto flat = fusion.reshape({fusion.size(0), 5 * config_.embedding_k});
  return checked(label_fc2->forward(torch::relu(label_fc1->forward(flat))), "label features");
}

torch::Tensor TGANetImpl::stage_label_features(std::size_t stage, const torch::Tensor& label_features) {
  if (!config_.chain_label_attention || !label_features.defined()) return label_features;
  auto lf = label_features;
  for (std::size_t s = 0; s < stage; ++s) lf = torch::relu(label_chain_.at(s)->forward(lf));
  return lf;
}

nn::DecoderBlockImpl::Result TGANetImpl::decode_block(std::size_t stage, const torch::Tensor& deep,
                                                      const torch::Tensor& skip,
                                                      const torch::Tensor& label_features) {
  auto r = decoders_.at(stage)->forward(deep, skip, label_features);
  checked(r.out, "decoder output");
  return r;
}

torch::Tensor TGANetImpl::aggregate_multiscale(const torch::Tensor& d1, const torch::Tensor& d2,
                                               const torch::Tensor& d3) {
  if (!config_.use_msfa) return d3;
  return checked(msfa->forward(d1, d2, d3), "aggregated features");
}

NetworkOutput TGANetImpl::forward(const torch::Tensor& image) {
  check_image(image);
  auto e = encode(standardize(image));

  NetworkOutput out;
  torch::Tensor label_features;
  if (config_.use_classifiers) {
    out.logits = classify_attributes(e[3]);
    if (config_.use_label_attention) {
      auto probs = attribute_probabilities(*out.logits);
      auto fusion = fuse_embeddings(probs, embeddings_.to(probs.dtype()));
      label_features = compute_label_features(fusion);
    }
  }

  std::array<torch::Tensor, 4> f;
  for (std::size_t i = 0; i < 4; ++i) f[i] = enhance_features(i, e[i]);

  auto d1 = decode_block(0, f[3], f[2], stage_label_features(0, label_features)).out;
  auto d2 = decode_block(1, d1, f[1], stage_label_features(1, label_features)).out;
  auto d3 = decode_block(2, d2, f[0], stage_label_features(2, label_features)).out;
  auto m = aggregate_multiscale(d1, d2, d3);

  out.mask_logits = nn::upsample_bilinear(mask_head->forward(m), image.size(2), image.size(3));
  out.mask_prob = torch::sigmoid(out.mask_logits);
  return out;
}

std::int64_t TGANetImpl::parameter_count() const {
  std::int64_t total = 0;
  for (const auto& p : parameters()) {
    if (p.requires_grad()) total += p.numel();
  }
  return total;
}

std::int64_t parameter_count(const NetworkConfig& config) {
  auto plain = config;
  plain.pretrained_backbone = false;  // weights do not change the count
  return TGANet(plain)->parameter_count();
}

}  // namespace tganet
