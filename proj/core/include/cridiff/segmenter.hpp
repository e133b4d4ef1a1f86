#pragma once

#include <torch/torch.h>

#include "cridiff/conditioners.hpp"
#include "cridiff/denoiser.hpp"
#include "cridiff/diffusion.hpp"

namespace cridiff {

struct SegmenterConfig {
  nn::ConditionerVariant variant = nn::ConditionerVariant::Full;
  nn::DenoiserConfig denoiser = nn::DenoiserConfig::small();
  nn::InjectionPlan plan = nn::build_injection_plan(nn::InjectionStrategy::Crisscross, {2, 2});
};

struct SegmenterLosses {
  torch::Tensor conditioner;
  torch::Tensor diffusion;
  torch::Tensor total;
};

/// Conditioners plus the diffusion denoiser. Images and masks enter the
/// diffusion in [-1, 1]; conditioner labels stay in [0, 1].
class SegmenterImpl : public torch::nn::Module {
 public:
  explicit SegmenterImpl(SegmenterConfig config = {});

  /// Unit-weighted sum of the conditioner loss and the noise-prediction loss
  /// for masks noised to step `t` with `eps`.
  SegmenterLosses losses(const torch::Tensor& images, const nn::LabelBatch& labels, const torch::Tensor& t,
                         const torch::Tensor& eps, const diffusion::NoiseSchedule& schedule);

  /// ε predictor with the given conditioner features bound.
  diffusion::EpsPredictor bind(const nn::InjectionSources& sources);

  /// Ensemble segmentation of a batch of images (eval mode is the caller's job).
  diffusion::EnsembleResult predict(const torch::Tensor& images, const diffusion::NoiseSchedule& schedule, int runs,
                                    std::uint64_t seed, double threshold, std::int64_t first_stream = 0);

  const SegmenterConfig& config() const noexcept { return config_; }

  nn::ConditionerNet conditioner{nullptr};
  nn::Denoiser denoiser{nullptr};

 private:
  SegmenterConfig config_;
};
TORCH_MODULE(Segmenter);

}  // namespace cridiff
