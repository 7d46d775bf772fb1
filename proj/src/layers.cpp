#include "tganet/layers.hpp"

#include <cmath>

namespace tganet::nn {

namespace F = torch::nn::functional;

torch::nn::Conv2dOptions conv_options(std::int64_t in, std::int64_t out, std::int64_t kernel,
                                      std::int64_t stride, std::int64_t dilation) {
  return torch::nn::Conv2dOptions(in, out, kernel)
      .stride(stride)
      .padding(dilation * (kernel - 1) / 2)
      .dilation(dilation)
      .bias(false);
}

ConvBnActImpl::ConvBnActImpl(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t dilation,
                             bool relu)
    : relu_(relu) {
  conv = register_module("conv", torch::nn::Conv2d(conv_options(in, out, kernel, 1, dilation)));
  bn = register_module("bn", torch::nn::BatchNorm2d(out));
}

torch::Tensor ConvBnActImpl::forward(const torch::Tensor& x) {
  auto y = bn->forward(conv->forward(x));
  return relu_ ? torch::relu(y) : y;
}

ChannelAttentionImpl::ChannelAttentionImpl(std::int64_t channels, std::int64_t reduction) {
  const auto hidden = std::max<std::int64_t>(1, channels / reduction);
  fc1 = register_module("fc1", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, hidden, 1).bias(false)));
  fc2 = register_module("fc2", torch::nn::Conv2d(torch::nn::Conv2dOptions(hidden, channels, 1).bias(false)));
}

torch::Tensor ChannelAttentionImpl::gate(const torch::Tensor& x) {
  auto avg = x.mean({2, 3}, /*keepdim=*/true);
  auto max = x.amax({2, 3}, /*keepdim=*/true);
  auto mlp = [this](const torch::Tensor& t) { return fc2->forward(torch::relu(fc1->forward(t))); };
  return torch::sigmoid(mlp(avg) + mlp(max));
}

SpatialAttentionImpl::SpatialAttentionImpl(std::int64_t kernel) {
  conv = register_module(
      "conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(2, 1, kernel).padding(kernel / 2).bias(false)));
}

torch::Tensor SpatialAttentionImpl::gate(const torch::Tensor& x) {
  auto avg = x.mean(1, /*keepdim=*/true);
  auto max = x.amax(1, /*keepdim=*/true);
  return torch::sigmoid(conv->forward(torch::cat({avg, max}, 1)));
}

CbamImpl::CbamImpl(std::int64_t channels, std::int64_t reduction, std::int64_t kernel) {
  channel = register_module("channel", ChannelAttention(channels, reduction));
  spatial = register_module("spatial", SpatialAttention(kernel));
}

torch::Tensor CbamImpl::forward(const torch::Tensor& x) { return spatial->forward(channel->forward(x)); }

void initialize_weights(torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  for (auto& m : module.modules(/*include_self=*/false)) {
    if (auto* conv = m->as<torch::nn::Conv2d>()) {
      const auto fan_in = conv->weight.size(1) * conv->weight.size(2) * conv->weight.size(3);
      conv->weight.normal_(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
      if (conv->bias.defined()) conv->bias.zero_();
    } else if (auto* linear = m->as<torch::nn::Linear>()) {
      linear->weight.normal_(0.0, std::sqrt(2.0 / static_cast<double>(linear->weight.size(1))));
      if (linear->bias.defined()) linear->bias.zero_();
    } else if (auto* bn = m->as<torch::nn::BatchNorm2d>()) {
      bn->weight.fill_(1.0);
      bn->bias.zero_();
    }
  }
}

torch::Tensor upsample_bilinear(const torch::Tensor& x, std::int64_t height, std::int64_t width) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<std::int64_t>{height, width})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

}  // namespace tganet::nn
