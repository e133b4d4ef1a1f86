#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cridiff/dataset.hpp"
#include "cridiff/denoiser.hpp"
#include "cridiff/diffusion.hpp"
#include "cridiff/metrics.hpp"
#include "cridiff/segmenter.hpp"

namespace cridiff {

/// In-memory tensors for a set of cases.
struct SegmentationData {
  std::vector<std::string> stems;
  torch::Tensor images;    // [N, 1, H, W] in [-1, 1]
  torch::Tensor masks;     // [N, 1, H, W] in {0, 1}
  torch::Tensor boundary;  // soft boundary label
  torch::Tensor core;      // soft core label

  int64_t size() const { return images.defined() ? images.size(0) : 0; }
  bool has_masks() const { return masks.defined(); }
  nn::LabelBatch labels(const torch::Tensor& index) const;
  SegmentationData subset(const std::vector<int64_t>& index) const;

  /// Decouples each mask into soft labels while packing.
  static SegmentationData from_cases(const std::vector<data::LoadedCase>& cases);
  /// Images only (prediction inputs); label tensors stay undefined.
  static SegmentationData from_images(const std::vector<std::pair<std::string, GrayImage>>& images);
};

torch::Tensor to_tensor(const GrayImage& image);
torch::Tensor to_tensor(const Mask& mask);
torch::Tensor to_tensor(const RealMap& map);
/// [H, W] or [1, H, W] or [1, 1, H, W] tensors back to rasters.
RealMap to_real_map(const torch::Tensor& t);
Mask to_mask(const torch::Tensor& t);

struct OptimizerOptions {
  double learning_rate = 1e-5;
  double weight_decay = 1e-2;
  int batch_size = 6;
  std::uint64_t seed = 0;
};

struct StepRecord {
  int step = 0;
  double conditioner_loss = 0.0;
  double diffusion_loss = 0.0;
  double total_loss = 0.0;
};

/// Draws of one optimizer step, a pure function of (seed, step): batch
/// indices, timesteps uniform in [1, T], and Gaussian noise.
struct StepDraws {
  torch::Tensor index;
  torch::Tensor t;
  torch::Tensor eps;
};
StepDraws draw_step(std::uint64_t seed, int step, int64_t dataset_size, int batch_size, int steps,
                    torch::IntArrayRef image_hw);

/// Unconditional DDPM training of the bare denoiser on images.
class GenerativePretrainer {
 public:
  GenerativePretrainer(nn::Denoiser model, torch::Tensor images, diffusion::NoiseSchedule schedule,
                       OptimizerOptions options);

  StepRecord step();
  int current_step() const noexcept { return step_; }
  /// Loss of the current weights on fixed draws, without updating.
  double probe_loss(const torch::Tensor& x0, const torch::Tensor& t, const torch::Tensor& eps);

  void save_state(const std::filesystem::path& path);
  void load_state(const std::filesystem::path& path);

 private:
  nn::Denoiser model_;
  torch::Tensor images_;
  diffusion::NoiseSchedule schedule_;
  OptimizerOptions options_;
  std::unique_ptr<torch::optim::AdamW> optimizer_;
  int step_ = 0;
};

/// Runs `steps` pre-training steps and returns the per-step losses.
std::vector<double> pretrain_generative(nn::Denoiser model, const torch::Tensor& images,
                                        const diffusion::NoiseSchedule& schedule, int steps,
                                        const OptimizerOptions& options,
                                        const std::function<void(const StepRecord&)>& on_step = {});

/// Joint optimization of the conditioner loss and the noise-prediction loss.
class SegmenterTrainer {
 public:
  SegmenterTrainer(Segmenter model, SegmentationData data, diffusion::NoiseSchedule schedule,
                   OptimizerOptions options);

  StepRecord step();
  int current_step() const noexcept { return step_; }

  /// Optimizer moments and step counter.
  void save_state(const std::filesystem::path& path);
  void load_state(const std::filesystem::path& path);

 private:
  Segmenter model_;
  SegmentationData data_;
  diffusion::NoiseSchedule schedule_;
  OptimizerOptions options_;
  std::unique_ptr<torch::optim::AdamW> optimizer_;
  int step_ = 0;
};

struct EvaluationOptions {
  int ensemble = 25;
  double threshold = 0.5;
  std::uint64_t seed = 0;
  double hausdorff_percentile = 100.0;
  /// Images per batched reverse chain.
  int chunk = 8;
};

struct CasePrediction {
  std::string stem;
  RealMap mean;
  Mask mask;
  RealMap variance;
  metrics::MetricReport report;
};

/// Ensemble prediction for every case (model put in eval mode); reports are
/// filled only when the data carries masks. Case n uses
/// the stream block starting at seed-derived index n * ensemble.
std::vector<CasePrediction> predict_cases(Segmenter model, const SegmentationData& data,
                                          const diffusion::NoiseSchedule& schedule, const EvaluationOptions& options);

}  // namespace cridiff
