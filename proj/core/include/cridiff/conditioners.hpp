#pragma once

#include <torch/torch.h>

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace cridiff::nn {

/// Channel width of every conditioner node.
inline constexpr int64_t kNodeChannels = 64;
inline constexpr int kLevels = 4;

/// Encoder sideouts f^1..f^4, largest first, at strides 4/8/16/32.
struct FeaturePyramid {
  std::array<torch::Tensor, kLevels> levels;
  const torch::Tensor& level(int i) const { return levels.at(static_cast<std::size_t>(i - 1)); }
};

/// Bilinear (align_corners = false) upsampling by exactly 2.
torch::Tensor upsample2(const torch::Tensor& x);
/// Bilinear resize to a target spatial size; no-op when already matching.
torch::Tensor resize_to(const torch::Tensor& x, torch::IntArrayRef hw);

/// 3x3 Conv-BN-ReLU, spatial size preserved. Also serves as the Trans layer.
class BConvImpl : public torch::nn::Module {
 public:
  BConvImpl(int64_t in_channels, int64_t out_channels = kNodeChannels);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv{nullptr};
  torch::nn::BatchNorm2d bn{nullptr};
};
TORCH_MODULE(BConv);

/// Small CNN standing in for a pretrained backbone: four stages at strides
/// 4/8/16/32 with widths `widths`. Input height/width must divide by 32.
class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(int64_t in_channels = 1, std::array<int64_t, kLevels> widths = {32, 64, 128, 256});
  FeaturePyramid forward(const torch::Tensor& image);

  const std::array<int64_t, kLevels>& widths() const noexcept { return widths_; }

 private:
  std::array<int64_t, kLevels> widths_;
  torch::nn::Sequential stem{nullptr};
  std::array<torch::nn::Sequential, kLevels> stages{nullptr, nullptr, nullptr, nullptr};
};
TORCH_MODULE(Encoder);

/// Node array X[i][j], i = 1..4 (level), j = 0..row length. Column 0 holds the
/// Trans outputs; the remaining columns are computed nodes.
struct NodeGrid {
  std::array<std::vector<torch::Tensor>, kLevels> rows;

  const torch::Tensor& at(int i, int j) const {
    return rows.at(static_cast<std::size_t>(i - 1)).at(static_cast<std::size_t>(j));
  }
  int computed_nodes(int i) const {
    return static_cast<int>(rows.at(static_cast<std::size_t>(i - 1)).size()) - 1;
  }
  int total_computed() const {
    int n = 0;
    for (int i = 1; i <= kLevels; ++i) n += computed_nodes(i);
    return n;
  }
};

/// Triangular grid: row i has 5 - i computed nodes.
struct BecGrid : NodeGrid {
  /// Deepest node of row i, B_{5-i}^i.
  const torch::Tensor& output(int i) const { return at(i, 5 - i); }
};
/// Inverted triangle: row i has i computed nodes.
struct CecGrid : NodeGrid {
  /// Diagonal node C_i^i.
  const torch::Tensor& output(int i) const { return at(i, i); }
};

/// P^1..P^4 at the level resolutions.
struct FusedPyramid {
  std::array<torch::Tensor, kLevels> levels;
  const torch::Tensor& level(int i) const { return levels.at(static_cast<std::size_t>(i - 1)); }
};

/// Boundary enhance conditioner.
///   i + j <= 4:       B_j^i = BConv(B_{j-1}^i © Up(B_j^{i+1}))
///   i + j == 5, i<4:  B_j^i = BConv(B_{j-1}^i © Up(B_{j-1}^{i+1}))
///   i = 4, j = 1:     B_1^4 = BConv(B_0^4)
/// Rows are evaluated bottom-up, left to right.
class BecImpl : public torch::nn::Module {
 public:
  explicit BecImpl(int64_t channels = kNodeChannels);
  BecGrid forward(const std::array<torch::Tensor, kLevels>& trans);

  static constexpr int row_length(int i) noexcept { return 5 - i; }
  BConv node(int i, int j) const { return nodes_.at(static_cast<std::size_t>(i - 1)).at(static_cast<std::size_t>(j - 1)); }

 private:
  std::array<std::vector<BConv>, kLevels> nodes_;
};
TORCH_MODULE(Bec);

/// Core enhance conditioner.
///   i = 4:        C_j^4 = BConv(C_{j-1}^4)
///   i < 4, j = i: C_i^i = BConv(C_{i-1}^i © Up(C_i^{i+1}) © Up(C_{i+1}^{i+1}))
///   i < 4, j < i: C_j^i = BConv(C_{j-1}^i © Up(C_j^{i+1}))
class CecImpl : public torch::nn::Module {
 public:
  explicit CecImpl(int64_t channels = kNodeChannels);
  CecGrid forward(const std::array<torch::Tensor, kLevels>& trans);

  static constexpr int row_length(int i) noexcept { return i; }
  BConv node(int i, int j) const { return nodes_.at(static_cast<std::size_t>(i - 1)).at(static_cast<std::size_t>(j - 1)); }

 private:
  std::array<std::vector<BConv>, kLevels> nodes_;
};
TORCH_MODULE(Cec);

/// Top-down fusion P^i = BConv(Σ laterals_i ⊕ Up(P^{i+1})); the Up term is
/// absent at i = 4. With laterals {B_{5-i}^i, C_i^i} this is the streamlined
/// FPN over both conditioners.
class FpnImpl : public torch::nn::Module {
 public:
  explicit FpnImpl(int64_t channels = kNodeChannels);
  FusedPyramid forward(const std::array<std::vector<torch::Tensor>, kLevels>& laterals);
  FusedPyramid fuse(const BecGrid& bec, const CecGrid& cec);

  BConv level(int i) const { return levels_.at(static_cast<std::size_t>(i - 1)); }

 private:
  std::array<BConv, kLevels> levels_{nullptr, nullptr, nullptr, nullptr};
};
TORCH_MODULE(Fpn);

/// 1x1 conv -> sigmoid -> bilinear upsample to the label size.
class HeadImpl : public torch::nn::Module {
 public:
  explicit HeadImpl(int64_t in_channels = kNodeChannels, int64_t out_channels = 1);
  torch::Tensor forward(const torch::Tensor& feature, torch::IntArrayRef target_hw);

  torch::nn::Conv2d proj{nullptr};
};
TORCH_MODULE(Head);

/// Mean binary cross-entropy; targets may be soft. Predictions must lie in
/// [0, 1]; saturated values are clamped away from 0 and 1 inside the logs.
torch::Tensor bce_loss(const torch::Tensor& pred, const torch::Tensor& target);
/// 1 - (2Σpt + 1) / (Σp + Σt + 1), per sample, averaged over the batch.
torch::Tensor dice_loss(const torch::Tensor& pred, const torch::Tensor& target);
/// 1 - (Σpt + 1) / (Σp + Σt - Σpt + 1), per sample, averaged over the batch.
torch::Tensor iou_loss(const torch::Tensor& pred, const torch::Tensor& target);

/// Which conditioners feed the denoiser (ablation rows).
enum class ConditionerVariant {
  Prostate,          // P: a single FPN over the Trans features
  SimpleFpn,         // P*: one FPN predicting prostate/core/boundary channels
  ProstateCore,      // P + C
  ProstateBoundary,  // P + B
  Full,              // P + C + B
};

std::string to_string(ConditionerVariant v);
ConditionerVariant variant_from_string(const std::string& name);

/// Per-level features handed to the denoiser: `core[i-1]` is the node routed
/// to core-role stages at level i, `boundary[i-1]` the boundary-role node.
struct InjectionSources {
  std::array<torch::Tensor, kLevels> core;
  std::array<torch::Tensor, kLevels> boundary;

  bool empty() const noexcept { return !core[0].defined(); }
  InjectionSources repeat_interleave(int64_t times) const;
};

struct ConditionerOutput {
  FeaturePyramid pyramid;
  std::optional<BecGrid> bec;
  std::optional<CecGrid> cec;
  FusedPyramid fused;
  InjectionSources sources;
};

/// Full-resolution supervision targets, [B, 1, H, W] float.
struct LabelBatch {
  torch::Tensor prostate;
  torch::Tensor boundary;
  torch::Tensor core;
};

/// Heads for every supervised node, indexed by level - 1.
struct SupervisionHeads {
  std::array<Head, kLevels> boundary{nullptr, nullptr, nullptr, nullptr};
  std::array<Head, kLevels> core{nullptr, nullptr, nullptr, nullptr};
  std::array<Head, kLevels> prostate{nullptr, nullptr, nullptr, nullptr};
};

/// Sum over i = 1..4 of
///   bce(B_{5-i}^i, g_b) + bce(C_i^i, g_c) + bce(P^i, g_p) + iou(P^i, g_p) + dice(P^i, g_p),
/// each node first mapped through its head to label resolution. Terms whose
/// grid is absent are skipped.
torch::Tensor conditioner_loss(const BecGrid* bec, const CecGrid* cec, const FusedPyramid& fused,
                               const LabelBatch& labels, SupervisionHeads heads);

/// Encoder, Trans layers, conditioners, fusion and supervision heads.
class ConditionerNetImpl : public torch::nn::Module {
 public:
  explicit ConditionerNetImpl(ConditionerVariant variant = ConditionerVariant::Full, int64_t in_channels = 1,
                              std::array<int64_t, kLevels> encoder_widths = {32, 64, 128, 256});

  ConditionerOutput forward(const torch::Tensor& image);
  torch::Tensor loss(const ConditionerOutput& out, const LabelBatch& labels);

  ConditionerVariant variant() const noexcept { return variant_; }

  Encoder encoder{nullptr};
  std::array<BConv, kLevels> trans_b{nullptr, nullptr, nullptr, nullptr};
  std::array<BConv, kLevels> trans_c{nullptr, nullptr, nullptr, nullptr};
  std::array<BConv, kLevels> trans_p{nullptr, nullptr, nullptr, nullptr};
  Bec bec{nullptr};
  Cec cec{nullptr};
  Fpn fpn{nullptr};
  SupervisionHeads heads;
  /// P* only: three-channel head (prostate, core, boundary).
  std::array<Head, kLevels> tri_heads{nullptr, nullptr, nullptr, nullptr};

 private:
  ConditionerVariant variant_;
};
TORCH_MODULE(ConditionerNet);

}  // namespace cridiff::nn
