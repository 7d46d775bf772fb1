#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include <torch/torch.h>

#include "tganet/attributes.hpp"
#include "tganet/encoder.hpp"
#include "tganet/layers.hpp"
#include "tganet/network_config.hpp"

namespace tganet {

struct AttributeLogits {
  torch::Tensor count;  // (B, 2)
  torch::Tensor size;   // (B, 3)
};

struct NetworkOutput {
  torch::Tensor mask_prob;    // (B, 1, S, S) in [0, 1]
  torch::Tensor mask_logits;  // pre-sigmoid, same shape
  std::optional<AttributeLogits> logits;  // absent without classifiers
};

/// Softmax of both heads concatenated as (one, many, small, medium, large).
torch::Tensor attribute_probabilities(const AttributeLogits& logits);

namespace nn {

/// Parallel dilated CBR branches with channel attention, fused by a 3x3 conv,
/// residual 1x1 projection of the input, ReLU, then spatial attention.
class FeatureEnhancementImpl : public torch::nn::Module {
 public:
  FeatureEnhancementImpl(std::int64_t in, const NetworkConfig& config);

  struct Trace {
    torch::Tensor output;
    torch::Tensor spatial_gate;
    std::vector<torch::Tensor> channel_gates;
  };

  torch::Tensor forward(const torch::Tensor& x) { return trace(x).output; }
  Trace trace(const torch::Tensor& x);

 private:
  std::vector<ConvBnAct> branches_;
  std::vector<ChannelAttention> branch_attention_;
  ConvBnAct fuse{nullptr};
  ConvBnAct residual{nullptr};
  SpatialAttention spatial{nullptr};
};
TORCH_MODULE(FeatureEnhancement);

/// Upsample, concatenate skip, CBR, three residual 3x3 conv+BN, CBAM, then
/// channel-wise label gate sigmoid(Conv-ReLU-Conv(l_f)).
class DecoderBlockImpl : public torch::nn::Module {
 public:
  DecoderBlockImpl(std::int64_t deep_channels, std::int64_t skip_channels, std::int64_t out_channels,
                   const NetworkConfig& config);

  struct Result {
    torch::Tensor cbam;  // d_i^cbam
    torch::Tensor gate;  // (B, C, 1, 1), undefined without label attention
    torch::Tensor out;   // d_i^out
  };

  Result forward(const torch::Tensor& deep, const torch::Tensor& skip, const torch::Tensor& label_features);

  /// Gate projection; empty holder when label attention is disabled.
  torch::nn::Sequential label_gate{nullptr};

 private:
  ConvBnAct reduce{nullptr};
  ConvBnAct conv_a{nullptr}, conv_b{nullptr}, conv_c{nullptr};
  Cbam cbam{nullptr};
};
TORCH_MODULE(DecoderBlock);

/// Fuses the three decoder outputs at the finest decoder resolution.
class MultiScaleAggregationImpl : public torch::nn::Module {
 public:
  MultiScaleAggregationImpl(std::array<std::int64_t, 3> in_channels, std::int64_t out_channels);

  torch::Tensor forward(const torch::Tensor& d1, const torch::Tensor& d2, const torch::Tensor& d3);

 private:
  ConvBnAct branch1{nullptr}, branch2{nullptr}, branch3{nullptr};
  ConvBnAct fuse{nullptr};
  ConvBnAct conv_a{nullptr}, conv_b{nullptr};
};
TORCH_MODULE(MultiScaleAggregation);

}  // namespace nn

class TGANetImpl : public torch::nn::Module {
 public:
  explicit TGANetImpl(NetworkConfig config);
  TGANetImpl(NetworkConfig config, const AttributeEmbeddings& embeddings);

  const NetworkConfig& config() const noexcept { return config_; }

  void set_embeddings(const AttributeEmbeddings& embeddings);
  torch::Tensor embedding_table() const { return embeddings_; }

  /// Raise NonFiniteFeature as soon as any intermediate map holds NaN/Inf.
  void set_check_finite(bool enabled) noexcept { check_finite_ = enabled; }

  /// [0,1] image -> per-channel standardized image.
  torch::Tensor standardize(const torch::Tensor& image) const;

  /// Standardized (B, 3, S, S) image -> e1..e4.
  std::array<torch::Tensor, 4> encode(const torch::Tensor& image);
  AttributeLogits classify_attributes(const torch::Tensor& e4);
  /// stage in 0..3; FEM (or the 1x1 projection ablation) for e_{stage+1}.
  torch::Tensor enhance_features(std::size_t stage, const torch::Tensor& e);
  /// (B, 5, k) fusion -> (B, label_feature_dim).
  torch::Tensor compute_label_features(const torch::Tensor& fusion);
  /// Label features for decoder stage 0..2 (differs per stage only in chain mode).
  torch::Tensor stage_label_features(std::size_t stage, const torch::Tensor& label_features);
  nn::DecoderBlockImpl::Result decode_block(std::size_t stage, const torch::Tensor& deep,
                                            const torch::Tensor& skip, const torch::Tensor& label_features);
  torch::Tensor aggregate_multiscale(const torch::Tensor& d1, const torch::Tensor& d2, const torch::Tensor& d3);

  /// Full graph on a [0,1] image batch.
  NetworkOutput forward(const torch::Tensor& image);

  std::int64_t parameter_count() const;

  nn::ResNetEncoder encoder{nullptr};
  nn::FeatureEnhancement& fem(std::size_t stage) { return fems_.at(stage); }
  nn::DecoderBlock& decoder(std::size_t stage) { return decoders_.at(stage); }

 private:
  void check_image(const torch::Tensor& image) const;
  torch::Tensor checked(torch::Tensor t, const char* what) const;

  NetworkConfig config_;
  bool check_finite_ = false;
  torch::Tensor embeddings_;
  torch::Tensor mean_, std_;

  torch::nn::Linear count_head{nullptr}, size_head{nullptr};
  torch::nn::Linear label_fc1{nullptr}, label_fc2{nullptr};
  std::vector<torch::nn::Linear> label_chain_;
  std::vector<nn::FeatureEnhancement> fems_;
  std::vector<nn::ConvBnAct> projections_;
  std::vector<nn::DecoderBlock> decoders_;
  nn::MultiScaleAggregation msfa{nullptr};
  torch::nn::Conv2d mask_head{nullptr};
};
TORCH_MODULE(TGANet);

/// Trainable scalar parameters of the network built from `config`.
std::int64_t parameter_count(const NetworkConfig& config);

}  // namespace tganet
