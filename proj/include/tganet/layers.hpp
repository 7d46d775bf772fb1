#pragma once

// Convolution blocks and CBAM-style attention shared by the encoder,
// feature enhancement modules, decoder and multi-scale aggregation.

#include <torch/torch.h>

namespace tganet::nn {

torch::nn::Conv2dOptions conv_options(std::int64_t in, std::int64_t out, std::int64_t kernel,
                                      std::int64_t stride = 1, std::int64_t dilation = 1);

/// Conv -> BN -> optional ReLU. Padding keeps the spatial size at stride 1.
class ConvBnActImpl : public torch::nn::Module {
 public:
  ConvBnActImpl(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t dilation = 1,
                bool relu = true);

  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv{nullptr};
  torch::nn::BatchNorm2d bn{nullptr};
  bool relu_;
};
TORCH_MODULE(ConvBnAct);

/// Shared MLP over average- and max-pooled descriptors; gate is (B, C, 1, 1).
class ChannelAttentionImpl : public torch::nn::Module {
 public:
  ChannelAttentionImpl(std::int64_t channels, std::int64_t reduction);

  torch::Tensor gate(const torch::Tensor& x);
  torch::Tensor forward(const torch::Tensor& x) { return x * gate(x); }

 private:
  torch::nn::Conv2d fc1{nullptr};
  torch::nn::Conv2d fc2{nullptr};
};
TORCH_MODULE(ChannelAttention);

/// Convolution over channel-mean and channel-max maps; gate is (B, 1, H, W).
class SpatialAttentionImpl : public torch::nn::Module {
 public:
  explicit SpatialAttentionImpl(std::int64_t kernel);

  torch::Tensor gate(const torch::Tensor& x);
  torch::Tensor forward(const torch::Tensor& x) { return x * gate(x); }

 private:
  torch::nn::Conv2d conv{nullptr};
};
TORCH_MODULE(SpatialAttention);

/// Channel attention followed by spatial attention.
class CbamImpl : public torch::nn::Module {
 public:
  CbamImpl(std::int64_t channels, std::int64_t reduction, std::int64_t kernel);

  torch::Tensor forward(const torch::Tensor& x);

  ChannelAttention channel{nullptr};
  SpatialAttention spatial{nullptr};
};
TORCH_MODULE(Cbam);

/// Fan-in scaled Gaussian for conv/linear weights, zero biases, unit BN scale.
void initialize_weights(torch::nn::Module& module);

torch::Tensor upsample_bilinear(const torch::Tensor& x, std::int64_t height, std::int64_t width);

}  // namespace tganet::nn
