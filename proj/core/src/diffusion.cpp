#include "cridiff/diffusion.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "cridiff/phantom.hpp"

namespace cridiff::diffusion {

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw std::invalid_argument("make_schedule: T must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw std::invalid_argument("make_schedule: need 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.steps = steps;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  s.betas.resize(static_cast<std::size_t>(steps));
  s.alphas.resize(s.betas.size());
  s.alpha_bars.resize(s.betas.size());
  double running = 1.0;
  for (int i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
    s.betas[i] = beta_start + (beta_end - beta_start) * frac;
    s.alphas[i] = 1.0 - s.betas[i];
    running *= s.alphas[i];
    s.alpha_bars[i] = running;
  }
  return s;
}

namespace {

void check_t(int t, const NoiseSchedule& schedule) {
  if (t < 1 || t > schedule.steps) {
    throw std::out_of_range("timestep " + std::to_string(t) + " outside [1, " +
                            std::to_string(schedule.steps) + "]");
  }
}

// Per-element coefficient broadcast over [B, ...].
torch::Tensor per_element(const std::vector<double>& values, const torch::Tensor& like) {
  std::vector<int64_t> shape(static_cast<std::size_t>(like.dim()), 1);
  shape[0] = static_cast<int64_t>(values.size());
  return torch::tensor(values, torch::TensorOptions().dtype(torch::kFloat64))
      .to(like.options())
      .view(shape);
}

}  // namespace

DiffusionSample forward_noise(const torch::Tensor& x0, const torch::Tensor& t,
                              const torch::Tensor& eps, const NoiseSchedule& schedule) {
  if (!x0.sizes().equals(eps.sizes())) throw std::invalid_argument("forward_noise: eps shape differs from x0");
  if (t.dim() != 1 || t.size(0) != x0.size(0)) {
    throw std::invalid_argument("forward_noise: t must have one entry per batch element");
  }
  const auto ts = t.to(torch::kInt64).contiguous();
  std::vector<double> signal(static_cast<std::size_t>(ts.size(0)));
  std::vector<double> noise(signal.size());
  for (int64_t b = 0; b < ts.size(0); ++b) {
    const int tb = static_cast<int>(ts[b].item<int64_t>());
    check_t(tb, schedule);
    signal[b] = std::sqrt(schedule.alpha_bar(tb));
    noise[b] = std::sqrt(1.0 - schedule.alpha_bar(tb));
  }
  auto x_t = per_element(signal, x0) * x0 + per_element(noise, x0) * eps;
  return {x_t, ts, eps};
}

DiffusionSample forward_noise(const torch::Tensor& x0, int t, const torch::Tensor& eps,
                              const NoiseSchedule& schedule) {
  check_t(t, schedule);
  return forward_noise(x0, torch::full({x0.size(0)}, t, torch::kInt64), eps, schedule);
}

torch::Tensor simple_loss(const torch::Tensor& eps_pred, const torch::Tensor& eps_true) {
  if (!eps_pred.sizes().equals(eps_true.sizes())) {
    throw std::invalid_argument("simple_loss: shape mismatch");
  }
  return (eps_pred - eps_true).pow(2).mean();
}

std::uint64_t derive_stream_seed(std::uint64_t root_seed, std::uint64_t index) {
  return data::substream_seed(root_seed, index);
}

NoiseStreams::NoiseStreams(std::vector<torch::Generator> generators) : generators_(std::move(generators)) {
  if (generators_.empty()) throw std::invalid_argument("NoiseStreams: need at least one stream");
}

NoiseStreams NoiseStreams::from_root(std::uint64_t root_seed, std::int64_t count, std::int64_t first) {
  std::vector<torch::Generator> gens;
  gens.reserve(static_cast<std::size_t>(count));
  for (std::int64_t k = 0; k < count; ++k) {
    gens.push_back(at::make_generator<at::CPUGeneratorImpl>(
        derive_stream_seed(root_seed, static_cast<std::uint64_t>(first + k))));
  }
  return NoiseStreams(std::move(gens));
}

torch::Tensor NoiseStreams::normal_like(const torch::Tensor& like) {
  if (like.size(0) != size()) {
    throw std::invalid_argument("NoiseStreams: batch " + std::to_string(like.size(0)) +
                                " but " + std::to_string(size()) + " streams");
  }
  const auto element = like.sizes().slice(1);
  std::vector<torch::Tensor> parts;
  parts.reserve(generators_.size());
  for (auto& gen : generators_) {
    parts.push_back(torch::randn(element, gen, like.options()));
  }
  return torch::stack(parts);
}

torch::Tensor reverse_step(const EpsPredictor& model, const torch::Tensor& x_t, int t,
                           const NoiseSchedule& schedule, NoiseStreams& streams) {
  check_t(t, schedule);
  const auto ts = torch::full({x_t.size(0)}, t, torch::kInt64);
  const torch::Tensor eps_hat = model(x_t, ts);
  const double beta = schedule.beta(t);
  const double coef = beta / std::sqrt(1.0 - schedule.alpha_bar(t));
  auto mean = (x_t - coef * eps_hat) / std::sqrt(schedule.alpha(t));
  if (t == 1) return mean;
  return mean + std::sqrt(beta) * streams.normal_like(x_t);
}

torch::Tensor sample(const EpsPredictor& model, torch::IntArrayRef shape,
                     const NoiseSchedule& schedule, NoiseStreams& streams, torch::ScalarType dtype) {
  torch::NoGradGuard no_grad;
  auto x = streams.normal_like(torch::empty(shape, dtype));
  for (int t = schedule.steps; t >= 1; --t) {
    x = reverse_step(model, x, t, schedule, streams);
  }
  return x;
}

torch::Tensor decode_unit(const torch::Tensor& x) { return ((x + 1.0) * 0.5).clamp(0.0, 1.0); }

torch::Tensor encode_unit(const torch::Tensor& x) { return x * 2.0 - 1.0; }

EnsembleResult fuse_runs(const torch::Tensor& runs, double threshold) {
  if (runs.dim() != 4 || runs.size(1) < 1) throw std::invalid_argument("fuse_runs: expected [N, K, H, W]");
  const auto k = runs.size(1);
  auto r = runs.to(torch::kFloat64).clamp(0.0, 1.0);
  // Shifted sums: identical runs give exactly zero variance.
  auto shift = r.narrow(1, 0, 1);
  auto d = r - shift;
  auto sum_d = d.sum(1, true);
  auto mean = shift + sum_d / static_cast<double>(k);
  torch::Tensor variance;
  if (k == 1) {
    variance = torch::zeros_like(mean);
  } else {
    variance = ((d * d).sum(1, true) - sum_d * sum_d / static_cast<double>(k)) / static_cast<double>(k - 1);
    variance = variance.clamp_min(0.0);
  }
  auto out_mean = mean.to(runs.dtype());
  return {out_mean, (mean >= threshold).to(torch::kUInt8), variance.to(runs.dtype())};
}

EnsembleResult ensemble_predict(const EpsPredictor& model, std::int64_t images, std::int64_t height,
                                std::int64_t width, const NoiseSchedule& schedule, int runs,
                                std::uint64_t root_seed, double threshold, std::int64_t first_stream) {
  if (runs < 1) throw std::invalid_argument("ensemble_predict: K must be >= 1");
  if (images < 1) throw std::invalid_argument("ensemble_predict: need at least one image");
  auto streams = NoiseStreams::from_root(root_seed, images * runs, first_stream);
  auto x0 = sample(model, {images * runs, 1, height, width}, schedule, streams);
  auto decoded = decode_unit(x0).view({images, runs, height, width});
  return fuse_runs(decoded, threshold);
}

}  // namespace cridiff::diffusion
