#include "tganet/checkpoint.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tganet/errors.hpp"

namespace tganet {

namespace fs = std::filesystem;

namespace {

c10::Dict<std::string, at::Tensor> to_dict(const torch::OrderedDict<std::string, torch::Tensor>& items) {
  c10::Dict<std::string, at::Tensor> dict;
  for (const auto& item : items) dict.insert(item.key(), item.value().detach().clone());
  return dict;
}

void copy_from(const c10::impl::GenericDict& source, torch::OrderedDict<std::string, torch::Tensor> targets,
               const std::string& what) {
  torch::NoGradGuard no_grad;
  for (auto& item : targets) {
    auto it = source.find(item.key());
    if (it == source.end()) throw Error(ErrorKind::Io, "checkpoint lacks " + what + " '" + item.key() + "'");
    auto tensor = it->value().toTensor();
    if (tensor.sizes() != item.value().sizes()) {
      throw Error(ErrorKind::DimensionMismatch, "checkpoint " + what + " '" + item.key() + "' has a different shape");
    }
    item.value().copy_(tensor);
  }
}

}  // namespace

void save_checkpoint(const fs::path& path, TGANet& model, torch::optim::Optimizer* optimizer,
                     const CheckpointMeta& meta) {
  c10::impl::GenericDict root(c10::StringType::get(), c10::AnyType::get());
  root.insert("format_version", kCheckpointFormatVersion);
  root.insert("network_config", nlohmann::json(model->config()).dump());
  root.insert("parameters", to_dict(model->named_parameters()));
  root.insert("buffers", to_dict(model->named_buffers()));
  root.insert("epoch", meta.epoch);
  root.insert("best_metric", meta.best_metric);

  std::string optimizer_blob;
  if (optimizer) {
    torch::serialize::OutputArchive archive;
    optimizer->save(archive);
    std::ostringstream stream;
    archive.save_to(stream);
    optimizer_blob = stream.str();
  }
  auto blob = torch::empty({static_cast<std::int64_t>(optimizer_blob.size())}, torch::kUInt8);
  std::copy(optimizer_blob.begin(), optimizer_blob.end(), blob.data_ptr<std::uint8_t>());
  root.insert("optimizer", blob);

  const auto bytes = torch::pickle_save(c10::IValue(root));
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write checkpoint " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  fs::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open checkpoint " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  c10::IValue value;
  try {
    value = torch::pickle_load(bytes);
  } catch (const c10::Error& e) {
    throw Error(ErrorKind::Io, "unreadable checkpoint " + path.string());
  }
  if (!value.isGenericDict()) throw Error(ErrorKind::Io, "malformed checkpoint " + path.string());
  auto root = value.toGenericDict();
  if (!root.contains("format_version") || root.at("format_version").toInt() != kCheckpointFormatVersion) {
    throw Error(ErrorKind::CheckpointVersionMismatch,
                path.string() + " is not a version " + std::to_string(kCheckpointFormatVersion) + " checkpoint");
  }

  auto config = nlohmann::json::parse(root.at("network_config").toStringRef()).get<NetworkConfig>();
  // Weights come from the checkpoint, not from the backbone file.
  config.pretrained_backbone = false;
  LoadedCheckpoint loaded;
  loaded.model = TGANet(config);
  copy_from(root.at("parameters").toGenericDict(), loaded.model->named_parameters(), "parameter");
  copy_from(root.at("buffers").toGenericDict(), loaded.model->named_buffers(), "buffer");
  loaded.meta.epoch = root.at("epoch").toInt();
  loaded.meta.best_metric = root.at("best_metric").toDouble();
  auto blob = root.at("optimizer").toTensor();
  loaded.optimizer_state.assign(reinterpret_cast<const char*>(blob.data_ptr<std::uint8_t>()),
                                static_cast<std::size_t>(blob.numel()));
  return loaded;
}

void restore_optimizer(const LoadedCheckpoint& checkpoint, torch::optim::Optimizer& optimizer) {
  if (checkpoint.optimizer_state.empty()) throw Error(ErrorKind::Io, "checkpoint carries no optimizer state");
  std::istringstream stream(checkpoint.optimizer_state);
  torch::serialize::InputArchive archive;
  archive.load_from(stream);
  optimizer.load(archive);
}

}  // namespace tganet
