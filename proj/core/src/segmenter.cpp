#include "cridiff/segmenter.hpp"

namespace cridiff {

SegmenterImpl::SegmenterImpl(SegmenterConfig config) : config_(std::move(config)) {
  conditioner = register_module("conditioner", nn::ConditionerNet(config_.variant));
  denoiser = register_module("denoiser", nn::Denoiser(config_.denoiser));
}

SegmenterLosses SegmenterImpl::losses(const torch::Tensor& images, const nn::LabelBatch& labels,
                                      const torch::Tensor& t, const torch::Tensor& eps,
                                      const diffusion::NoiseSchedule& schedule) {
  const auto cond = conditioner->forward(images);
  SegmenterLosses out;
  out.conditioner = conditioner->loss(cond, labels);
  const auto noised = diffusion::forward_noise(diffusion::encode_unit(labels.prostate), t, eps, schedule);
  const auto eps_pred = denoiser->forward(noised.x_t, noised.t, cond.sources, config_.plan);
  out.diffusion = diffusion::simple_loss(eps_pred, eps);
  out.total = out.conditioner + out.diffusion;
  return out;
}

diffusion::EpsPredictor SegmenterImpl::bind(const nn::InjectionSources& sources) {
  auto model = denoiser;
  auto plan = config_.plan;
  return [model, plan, sources](const torch::Tensor& x, const torch::Tensor& t) mutable {
    return model->forward(x, t, sources, plan);
  };
}

diffusion::EnsembleResult SegmenterImpl::predict(const torch::Tensor& images, const diffusion::NoiseSchedule& schedule,
                                                 int runs, std::uint64_t seed, double threshold,
                                                 std::int64_t first_stream) {
  torch::NoGradGuard no_grad;
  const auto cond = conditioner->forward(images);
  const auto sources = cond.sources.repeat_interleave(runs);
  return diffusion::ensemble_predict(bind(sources), images.size(0), images.size(2), images.size(3), schedule, runs,
                                     seed, threshold, first_stream);
}

}  // namespace cridiff
