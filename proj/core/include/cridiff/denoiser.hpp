#pragma once

#include <torch/torch.h>

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cridiff/conditioners.hpp"

namespace cridiff::nn {

/// Backbone stage: encoder stages E1..E4 (finest first) and decoder stages
/// D1..D4 (coarsest first). E^i and D^{5-i} share level-i resolution.
struct Stage {
  enum class Kind { Encoder, Decoder };
  Kind kind = Kind::Encoder;
  int index = 1;  // 1..4

  /// Conditioner level whose resolution matches this stage.
  int level() const noexcept { return kind == Kind::Encoder ? index : 5 - index; }
  std::string name() const;
  bool operator==(const Stage&) const = default;
};

enum class SourceRole { Core, Boundary };

/// One routing entry: stage <- conditioner node of `role` at `level`.
struct Route {
  Stage stage;
  SourceRole role = SourceRole::Core;
  int level = 1;

  /// Node label, e.g. "C_1^1" or "B_2^3".
  std::string node_name() const;
  bool operator==(const Route&) const = default;
};

enum class InjectionStrategy { Crisscross, StageByStage };

/// Shallow:deep split of the four levels.
struct InjectionRatio {
  int shallow = 2;
  int deep = 2;
  bool operator==(const InjectionRatio&) const = default;
};

struct InjectionPlan {
  InjectionStrategy strategy = InjectionStrategy::Crisscross;
  InjectionRatio ratio;
  std::vector<Route> routes;

  /// Route for a stage, if any.
  const Route* find(const Stage& stage) const;
  /// "E1 <- C_1^1" lines, encoder stages first.
  std::string to_text() const;
  static InjectionPlan none();
};

/// Crisscross: the shallow `ratio.shallow` levels take core nodes and the
/// rest take boundary nodes, on E^i and on the matching D^{5-i}.
/// Stage-by-stage swaps the roles (boundary shallow, core deep).
InjectionPlan build_injection_plan(InjectionStrategy strategy, InjectionRatio ratio);
InjectionPlan build_injection_plan(const std::string& strategy, const std::string& ratio);

std::string to_string(InjectionStrategy s);
InjectionStrategy strategy_from_string(const std::string& name);
InjectionRatio ratio_from_string(const std::string& text);
std::string to_string(InjectionRatio r);

/// Sinusoidal embedding of integer timesteps, [B] -> [B, dim].
torch::Tensor timestep_embedding(const torch::Tensor& t, int64_t dim);

/// GroupNorm-SiLU-Conv twice with an additive time embedding and a residual
/// path (1x1 conv when the width changes).
class ResBlockImpl : public torch::nn::Module {
 public:
  ResBlockImpl(int64_t in_channels, int64_t out_channels, int64_t time_dim);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& temb);

 private:
  torch::nn::GroupNorm norm1{nullptr}, norm2{nullptr};
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::Linear time_proj{nullptr};
  torch::nn::Conv2d skip{nullptr};
};
TORCH_MODULE(ResBlock);

/// Fixed 2-D sinusoidal position code, [1, channels, height, width], with
/// frequencies spanning one step to the full axis length.
torch::Tensor position_encoding_2d(int64_t channels, int64_t height, int64_t width, const torch::TensorOptions& options);

/// Single-head cross-attention: queries from the diffusion feature, keys and
/// values from the conditioner node (resized to the feature's size and
/// projected to its width). Queries and keys both receive the same scaled
/// 2-D position code after projection. Output = feat + out_proj(attention); the output
/// projection starts at zero so a fresh block is the identity.
class CrossAttentionImpl : public torch::nn::Module {
 public:
  CrossAttentionImpl(int64_t cond_channels, int64_t channels);
  torch::Tensor forward(const torch::Tensor& cond, const torch::Tensor& feat);
  /// Softmax weights [B, Nq, Nk] for inspection.
  torch::Tensor attention_weights(const torch::Tensor& cond, const torch::Tensor& feat);
  void zero_output();

  torch::nn::Conv2d cond_proj{nullptr};
  torch::nn::GroupNorm norm{nullptr};
  torch::nn::Conv2d query{nullptr}, key{nullptr}, value{nullptr};
  torch::nn::Conv2d out_proj{nullptr};

 private:
  struct Projected {
    torch::Tensor q, k, v;  // [B, N, C]
  };
  Projected project(const torch::Tensor& cond, const torch::Tensor& feat);
  int64_t channels_;
};
TORCH_MODULE(CrossAttention);

struct DenoiserConfig {
  std::array<int64_t, kLevels> widths{64, 128, 256, 512};
  int64_t cond_channels = kNodeChannels;

  /// Halves every width (desk-scale runs).
  static DenoiserConfig small();
};

/// Stage outputs after injection, in the order E1..E4, D1..D4.
struct StageTrace {
  std::vector<torch::Tensor> encoder;
  std::vector<torch::Tensor> decoder;
};

/// ResUNet ε_θ. Input is x_t only; conditioning enters through
/// cross-attention blocks at the stages named by the plan.
///
/// Resolutions for an H x W input: stem at H, a pre-stage at H/2, E1..E4 at
/// H/4..H/32, bottleneck at H/32, D1..D4 at H/32..H/4, then two upsampling
/// blocks back to H.
class DenoiserImpl : public torch::nn::Module {
 public:
  explicit DenoiserImpl(DenoiserConfig config = {});

  torch::Tensor forward(const torch::Tensor& x_t, const torch::Tensor& t, const InjectionSources& sources,
                        const InjectionPlan& plan, StageTrace* trace = nullptr);
  /// Unconditional forward (generative pre-training).
  torch::Tensor forward(const torch::Tensor& x_t, const torch::Tensor& t);

  const DenoiserConfig& config() const noexcept { return config_; }
  CrossAttention injection(const Stage& stage) const;

  /// Parameters and buffers outside the injection blocks.
  std::vector<std::pair<std::string, torch::Tensor>> backbone_tensors() const;
  static bool is_injection_tensor(const std::string& name);

 private:
  DenoiserConfig config_;
  int64_t time_dim_;
  torch::nn::Sequential time_mlp{nullptr};
  torch::nn::Conv2d stem{nullptr};
  torch::nn::Conv2d pre_down{nullptr};
  ResBlock pre_block{nullptr};
  std::array<torch::nn::Conv2d, kLevels> down{nullptr, nullptr, nullptr, nullptr};
  std::array<ResBlock, kLevels> enc{nullptr, nullptr, nullptr, nullptr};
  ResBlock mid{nullptr};
  std::array<ResBlock, kLevels> dec{nullptr, nullptr, nullptr, nullptr};
  ResBlock post_block{nullptr};
  ResBlock out_block{nullptr};
  torch::nn::GroupNorm out_norm{nullptr};
  torch::nn::Conv2d out_conv{nullptr};
  std::array<CrossAttention, kLevels> inject_enc{nullptr, nullptr, nullptr, nullptr};
  std::array<CrossAttention, kLevels> inject_dec{nullptr, nullptr, nullptr, nullptr};
};
TORCH_MODULE(Denoiser);

enum class InitMode { Random, Kaiming, GenerativePretrain };

std::string to_string(InitMode mode);
InitMode init_mode_from_string(const std::string& name);

/// random: PyTorch default fan-in uniform init; kaiming: He-normal conv
/// kernels and zero conv biases; gp: backbone tensors loaded from a
/// pre-training checkpoint. Injection output projections are zeroed in every
/// mode.
void init_weights(Denoiser& model, InitMode mode, const std::optional<std::filesystem::path>& checkpoint = {});

}  // namespace cridiff::nn
