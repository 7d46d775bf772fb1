#include "tganet/encoder.hpp"

#include <fstream>
#include <iterator>

#include "tganet/errors.hpp"
#include "tganet/layers.hpp"

namespace tganet::nn {

namespace F = torch::nn::functional;

BottleneckImpl::BottleneckImpl(std::int64_t in, std::int64_t width, std::int64_t out, std::int64_t stride) {
  conv1 = register_module("conv1", torch::nn::Conv2d(conv_options(in, width, 1)));
  bn1 = register_module("bn1", torch::nn::BatchNorm2d(width));
  conv2 = register_module("conv2", torch::nn::Conv2d(conv_options(width, width, 3, stride)));
  bn2 = register_module("bn2", torch::nn::BatchNorm2d(width));
  conv3 = register_module("conv3", torch::nn::Conv2d(conv_options(width, out, 1)));
  bn3 = register_module("bn3", torch::nn::BatchNorm2d(out));
  if (stride != 1 || in != out) {
    downsample = register_module(
        "downsample", torch::nn::Sequential(torch::nn::Conv2d(conv_options(in, out, 1, stride)),
                                            torch::nn::BatchNorm2d(out)));
  }
}

torch::Tensor BottleneckImpl::forward(const torch::Tensor& x) {
  auto y = torch::relu(bn1->forward(conv1->forward(x)));
  y = torch::relu(bn2->forward(conv2->forward(y)));
  y = bn3->forward(conv3->forward(y));
  auto identity = downsample ? downsample->forward(x) : x;
  return torch::relu(y + identity);
}

namespace {

torch::nn::Sequential make_stage(std::int64_t in, std::int64_t out, std::int64_t blocks, std::int64_t stride) {
  torch::nn::Sequential stage;
  const auto width = out / 4;
  stage->push_back(Bottleneck(in, width, out, stride));
  for (std::int64_t b = 1; b < blocks; ++b) stage->push_back(Bottleneck(out, width, out, 1));
  return stage;
}

}  // namespace

ResNetEncoderImpl::ResNetEncoderImpl(const NetworkConfig& config) {
  const auto& ch = config.encoder_channels;
  conv1 = register_module(
      "conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, ch[0], 7).stride(2).padding(3).bias(false)));
  bn1 = register_module("bn1", torch::nn::BatchNorm2d(ch[0]));
  layer1 = register_module("layer1", make_stage(ch[0], ch[1], 3, 1));
  layer2 = register_module("layer2", make_stage(ch[1], ch[2], 4, 2));
  layer3 = register_module("layer3", make_stage(ch[2], ch[3], 6, 2));
}

std::array<torch::Tensor, 4> ResNetEncoderImpl::forward(const torch::Tensor& x) {
  auto e1 = torch::relu(bn1->forward(conv1->forward(x)));
  auto pooled = F::max_pool2d(e1, F::MaxPool2dFuncOptions(3).stride(2).padding(1));
  auto e2 = layer1->forward(pooled);
  auto e3 = layer2->forward(e2);
  auto e4 = layer3->forward(e3);
  return {e1, e2, e3, e4};
}

void ResNetEncoderImpl::load_pretrained(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open backbone weights " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto value = torch::pickle_load(bytes);
  if (!value.isGenericDict()) {
    throw Error(ErrorKind::Io, "backbone weights must be a dict of tensors: " + path.string());
  }
  auto dict = value.toGenericDict();

  torch::NoGradGuard no_grad;
  auto copy_into = [&](const std::string& name, torch::Tensor& target) {
    if (!dict.contains(name)) {
      throw Error(ErrorKind::Io, "backbone weights lack '" + name + "'");
    }
    auto source = dict.at(name).toTensor();
    if (source.sizes() != target.sizes()) {
      throw Error(ErrorKind::DimensionMismatch, "backbone tensor '" + name + "' has an unexpected shape");
    }
    target.copy_(source);
  };
  for (auto& item : named_parameters()) copy_into(item.key(), item.value());
  for (auto& item : named_buffers()) copy_into(item.key(), item.value());
}

}  // namespace tganet::nn
