#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace cridiff::diffusion {

/// Linear-beta DDPM schedule. Timesteps are 1-based: t ∈ [1, steps].
struct NoiseSchedule {
  int steps = 0;
  double beta_start = 0.0;
  double beta_end = 0.0;
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;

  double beta(int t) const { return betas.at(static_cast<std::size_t>(t - 1)); }
  double alpha(int t) const { return alphas.at(static_cast<std::size_t>(t - 1)); }
  double alpha_bar(int t) const { return alpha_bars.at(static_cast<std::size_t>(t - 1)); }
};

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end);

/// Noised sample I_t together with the draw that produced it.
struct DiffusionSample {
  torch::Tensor x_t;
  torch::Tensor t;  // int64 [B]
  torch::Tensor eps;
};

/// x_t = sqrt(ᾱ_t) x0 + sqrt(1 - ᾱ_t) eps, per batch element.
/// `t` is an int64 tensor of shape [B] (B = x0.size(0)).
DiffusionSample forward_noise(const torch::Tensor& x0, const torch::Tensor& t,
                              const torch::Tensor& eps, const NoiseSchedule& schedule);
DiffusionSample forward_noise(const torch::Tensor& x0, int t, const torch::Tensor& eps,
                              const NoiseSchedule& schedule);

/// Mean squared error over every element.
torch::Tensor simple_loss(const torch::Tensor& eps_pred, const torch::Tensor& eps_true);

/// ε_θ(x_t, t) with any conditioning already bound. `t` is int64 [B].
using EpsPredictor = std::function<torch::Tensor(const torch::Tensor& x_t, const torch::Tensor& t)>;

/// One RNG stream per batch element. Stream b feeds element b only, so a
/// batched run reproduces the corresponding single-element runs.
class NoiseStreams {
 public:
  explicit NoiseStreams(std::vector<torch::Generator> generators);

  /// Streams seeded with derive_stream_seed(root_seed, first + k), k < count.
  static NoiseStreams from_root(std::uint64_t root_seed, std::int64_t count, std::int64_t first = 0);

  std::int64_t size() const noexcept { return static_cast<std::int64_t>(generators_.size()); }

  /// Standard normal tensor shaped like `like`; element b from stream b.
  torch::Tensor normal_like(const torch::Tensor& like);

 private:
  std::vector<torch::Generator> generators_;
};

std::uint64_t derive_stream_seed(std::uint64_t root_seed, std::uint64_t index);

/// DDPM ancestral step from x_t to x_{t-1}:
///   mean = (x_t - β_t / sqrt(1 - ᾱ_t) · ε̂) / sqrt(α_t),  σ_t² = β_t,
/// with no noise added at t = 1.
torch::Tensor reverse_step(const EpsPredictor& model, const torch::Tensor& x_t, int t,
                           const NoiseSchedule& schedule, NoiseStreams& streams);

/// Runs reverse_step from t = T down to 1 starting at x_T ~ N(0, I).
/// `shape` is [B, C, H, W] with B == streams.size().
torch::Tensor sample(const EpsPredictor& model, torch::IntArrayRef shape,
                     const NoiseSchedule& schedule, NoiseStreams& streams,
                     torch::ScalarType dtype = torch::kFloat32);

/// Maps the diffusion range [-1, 1] to [0, 1] and clamps.
torch::Tensor decode_unit(const torch::Tensor& x);
/// Maps [0, 1] to [-1, 1].
torch::Tensor encode_unit(const torch::Tensor& x);

struct EnsembleResult {
  torch::Tensor mean;      // [N, 1, H, W] in [0, 1]
  torch::Tensor mask;      // [N, 1, H, W] uint8, mean >= threshold
  torch::Tensor variance;  // [N, 1, H, W] unbiased per-pixel variance (0 for K = 1)
};

/// Runs `runs` reverse chains per image and fuses them. The model is called
/// with batch N*runs laid out image-major (image n, run k at n*runs + k), and
/// chain (n, k) draws from stream derive_stream_seed(root_seed, first_stream + n*runs + k),
/// so a long case list can be split into chunks without changing any draw.
/// Each decoded run is clamped to [0, 1] before averaging.
EnsembleResult ensemble_predict(const EpsPredictor& model, std::int64_t images, std::int64_t height,
                                std::int64_t width, const NoiseSchedule& schedule, int runs,
                                std::uint64_t root_seed, double threshold, std::int64_t first_stream = 0);

/// Fuses decoded runs laid out as [N, K, H, W], clamping each to [0, 1].
EnsembleResult fuse_runs(const torch::Tensor& runs, double threshold);

}  // namespace cridiff::diffusion
