#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <map>
#include <string>

namespace cridiff {

inline constexpr int kCheckpointFormatVersion = 1;

/// Metadata stored next to the weights.
struct CheckpointInfo {
  int format_version = kCheckpointFormatVersion;
  /// "pretrain" (bare denoiser) or "segmenter" (conditioners + denoiser).
  std::string kind;
  int schedule_steps = 0;
  double beta_start = 0.0;
  double beta_end = 0.0;
  /// Training step reached when the checkpoint was written.
  int64_t step = 0;
  /// Run configuration as JSON text.
  std::string config_json = "{}";
};

struct LoadedCheckpoint {
  CheckpointInfo info;
  std::map<std::string, torch::Tensor> tensors;
};

/// Writes every named parameter and buffer of `module` plus `info`.
void save_checkpoint(const std::filesystem::path& path, const torch::nn::Module& module, const CheckpointInfo& info);

/// Reads a checkpoint; throws when the format version differs.
LoadedCheckpoint read_checkpoint(const std::filesystem::path& path);

/// Copies tensors into the module's parameters/buffers whose names satisfy
/// `select`. Every selected name must exist in `tensors` with the same shape.
void load_tensors(torch::nn::Module& module, const std::map<std::string, torch::Tensor>& tensors,
                  const std::function<bool(const std::string&)>& select = {});

}  // namespace cridiff
