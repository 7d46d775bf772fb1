#pragma once

#include <array>
#include <filesystem>

#include <torch/torch.h>

#include "tganet/network_config.hpp"

namespace tganet::nn {

class BottleneckImpl : public torch::nn::Module {
 public:
  BottleneckImpl(std::int64_t in, std::int64_t width, std::int64_t out, std::int64_t stride);

  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr}, bn3{nullptr};
  torch::nn::Sequential downsample{nullptr};
};
TORCH_MODULE(Bottleneck);

/// ResNet-50 stem plus its first three bottleneck stages (3, 4, 6 blocks).
/// Parameter names follow the torchvision layout so exported ImageNet
/// weights load by name.
class ResNetEncoderImpl : public torch::nn::Module {
 public:
  explicit ResNetEncoderImpl(const NetworkConfig& config);

  /// e1..e4 at strides 2, 4, 8, 16.
  std::array<torch::Tensor, 4> forward(const torch::Tensor& x);

  /// Copies matching tensors from a `name -> tensor` dict written with torch.save.
  void load_pretrained(const std::filesystem::path& path);

 private:
  torch::nn::Conv2d conv1{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr};
  torch::nn::Sequential layer1{nullptr}, layer2{nullptr}, layer3{nullptr};
};
TORCH_MODULE(ResNetEncoder);

}  // namespace tganet::nn
