#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include <torch/torch.h>

#include "tganet/tganet.hpp"

namespace tganet {

inline constexpr std::int64_t kCheckpointFormatVersion = 1;

/// Contents: format_version, network config (JSON), flat name -> tensor maps
/// for parameters and buffers, serialized optimizer state, epoch, best metric.
/// Stored as a single torch pickle archive (readable with torch.load).
struct CheckpointMeta {
  std::int64_t epoch = 0;
  double best_metric = 0.0;
};

void save_checkpoint(const std::filesystem::path& path, TGANet& model, torch::optim::Optimizer* optimizer,
                     const CheckpointMeta& meta);

struct LoadedCheckpoint {
  TGANet model{nullptr};
  CheckpointMeta meta;
  /// Raw optimizer archive; feed to `restore_optimizer`.
  std::string optimizer_state;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);
void restore_optimizer(const LoadedCheckpoint& checkpoint, torch::optim::Optimizer& optimizer);

}  // namespace tganet
