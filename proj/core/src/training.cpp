#include "cridiff/training.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <stdexcept>

#include "cridiff/labels.hpp"

namespace cridiff {

namespace {

template <typename T>
torch::Tensor raster_to_tensor(const Image<T>& image) {
  auto out = torch::empty({image.height(), image.width()}, torch::kFloat32);
  auto acc = out.template accessor<float, 2>();
  for (int r = 0; r < image.height(); ++r) {
    for (int c = 0; c < image.width(); ++c) acc[r][c] = static_cast<float>(image(r, c));
  }
  return out;
}

torch::Tensor as_plane(const torch::Tensor& t) {
  auto plane = t;
  while (plane.dim() > 2) {
    if (plane.size(0) != 1) throw std::invalid_argument("expected a single plane, got " + std::to_string(t.dim()) + "-d batch");
    plane = plane.squeeze(0);
  }
  if (plane.dim() != 2) throw std::invalid_argument("expected a 2-d plane");
  return plane.to(torch::kFloat64).contiguous();
}

torch::Tensor pick(const torch::Tensor& t, const torch::Tensor& index) {
  return t.defined() ? t.index_select(0, index) : t;
}

void save_optimizer(const std::filesystem::path& path, torch::optim::Optimizer& optimizer, int step) {
  torch::serialize::OutputArchive archive;
  optimizer.save(archive);
  archive.write("trainer_step", c10::IValue(static_cast<int64_t>(step)));
  archive.save_to(path.string());
}

int load_optimizer(const std::filesystem::path& path, torch::optim::Optimizer& optimizer) {
  torch::serialize::InputArchive archive;
  archive.load_from(path.string());
  optimizer.load(archive);
  c10::IValue step;
  if (!archive.try_read("trainer_step", step)) throw std::runtime_error("trainer state has no step: " + path.string());
  return static_cast<int>(step.toInt());
}

std::unique_ptr<torch::optim::AdamW> make_adamw(std::vector<torch::Tensor> params, const OptimizerOptions& options) {
  if (options.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  return std::make_unique<torch::optim::AdamW>(
      std::move(params), torch::optim::AdamWOptions(options.learning_rate).weight_decay(options.weight_decay));
}

}  // namespace

torch::Tensor to_tensor(const GrayImage& image) { return raster_to_tensor(image); }
torch::Tensor to_tensor(const Mask& mask) { return raster_to_tensor(mask); }
torch::Tensor to_tensor(const RealMap& map) { return raster_to_tensor(map); }

RealMap to_real_map(const torch::Tensor& t) {
  const auto plane = as_plane(t);
  RealMap out(static_cast<int>(plane.size(0)), static_cast<int>(plane.size(1)));
  auto acc = plane.accessor<double, 2>();
  for (int r = 0; r < out.height(); ++r) {
    for (int c = 0; c < out.width(); ++c) out(r, c) = acc[r][c];
  }
  return out;
}

Mask to_mask(const torch::Tensor& t) {
  const auto plane = as_plane(t);
  Mask out(static_cast<int>(plane.size(0)), static_cast<int>(plane.size(1)));
  auto acc = plane.accessor<double, 2>();
  for (int r = 0; r < out.height(); ++r) {
    for (int c = 0; c < out.width(); ++c) out(r, c) = acc[r][c] != 0.0 ? 1 : 0;
  }
  return out;
}

SegmentationData SegmentationData::from_cases(const std::vector<data::LoadedCase>& cases) {
  if (cases.empty()) throw std::invalid_argument("no cases to pack");
  std::vector<torch::Tensor> images, masks, boundary, core;
  SegmentationData out;
  for (const auto& item : cases) {
    if (!item.image.same_shape(cases.front().image)) {
      throw std::invalid_argument("case " + item.stem + " differs in size from " + cases.front().stem);
    }
    const auto labels = labels::decouple_labels(item.mask);
    out.stems.push_back(item.stem);
    images.push_back(diffusion::encode_unit(to_tensor(item.image)).unsqueeze(0));
    masks.push_back(to_tensor(labels.prostate).unsqueeze(0));
    boundary.push_back(to_tensor(labels.boundary).unsqueeze(0));
    core.push_back(to_tensor(labels.core).unsqueeze(0));
  }
  out.images = torch::stack(images);
  out.masks = torch::stack(masks);
  out.boundary = torch::stack(boundary);
  out.core = torch::stack(core);
  return out;
}

SegmentationData SegmentationData::from_images(const std::vector<std::pair<std::string, GrayImage>>& images) {
  if (images.empty()) throw std::invalid_argument("no images to pack");
  SegmentationData out;
  std::vector<torch::Tensor> packed;
  for (const auto& [stem, image] : images) {
    if (!image.same_shape(images.front().second)) {
      throw std::invalid_argument("image " + stem + " differs in size from " + images.front().first);
    }
    out.stems.push_back(stem);
    packed.push_back(diffusion::encode_unit(to_tensor(image)).unsqueeze(0));
  }
  out.images = torch::stack(packed);
  return out;
}

nn::LabelBatch SegmentationData::labels(const torch::Tensor& index) const {
  return {pick(masks, index), pick(boundary, index), pick(core, index)};
}

SegmentationData SegmentationData::subset(const std::vector<int64_t>& index) const {
  SegmentationData out;
  for (const auto i : index) out.stems.push_back(stems.at(static_cast<std::size_t>(i)));
  const auto idx = torch::tensor(index, torch::kInt64);
  out.images = pick(images, idx);
  out.masks = pick(masks, idx);
  out.boundary = pick(boundary, idx);
  out.core = pick(core, idx);
  return out;
}

StepDraws draw_step(std::uint64_t seed, int step, int64_t dataset_size, int batch_size, int steps,
                    torch::IntArrayRef image_hw) {
  if (dataset_size < 1) throw std::invalid_argument("empty training set");
  auto gen = at::make_generator<at::CPUGeneratorImpl>(diffusion::derive_stream_seed(seed, static_cast<std::uint64_t>(step)));
  StepDraws draws;
  const auto opts = torch::TensorOptions().dtype(torch::kInt64);
  if (batch_size <= dataset_size) {
    draws.index = torch::randperm(dataset_size, gen, opts).slice(0, 0, batch_size);
  } else {
    draws.index = torch::randint(0, dataset_size, {batch_size}, gen, opts);
  }
  draws.t = torch::randint(1, steps + 1, {batch_size}, gen, opts);
  draws.eps = torch::randn({batch_size, 1, image_hw[0], image_hw[1]}, gen, torch::kFloat32);
  return draws;
}

GenerativePretrainer::GenerativePretrainer(nn::Denoiser model, torch::Tensor images, diffusion::NoiseSchedule schedule,
                                           OptimizerOptions options)
    : model_(std::move(model)), images_(std::move(images)), schedule_(std::move(schedule)), options_(options) {
  if (images_.dim() != 4) throw std::invalid_argument("pre-training images must be [N, 1, H, W]");
  std::vector<torch::Tensor> params;
  for (const auto& item : model_->named_parameters()) {
    if (!nn::DenoiserImpl::is_injection_tensor(item.key())) params.push_back(item.value());
  }
  optimizer_ = make_adamw(std::move(params), options_);
}

StepRecord GenerativePretrainer::step() {
  model_->train();
  const auto draws = draw_step(options_.seed, step_, images_.size(0), options_.batch_size, schedule_.steps,
                               {images_.size(2), images_.size(3)});
  const auto noised = diffusion::forward_noise(pick(images_, draws.index), draws.t, draws.eps, schedule_);
  optimizer_->zero_grad();
  auto loss = diffusion::simple_loss(model_->forward(noised.x_t, noised.t), draws.eps);
  loss.backward();
  optimizer_->step();
  StepRecord record;
  record.step = ++step_;
  record.diffusion_loss = loss.item<double>();
  record.total_loss = record.diffusion_loss;
  return record;
}

double GenerativePretrainer::probe_loss(const torch::Tensor& x0, const torch::Tensor& t, const torch::Tensor& eps) {
  torch::NoGradGuard no_grad;
  model_->eval();
  const auto noised = diffusion::forward_noise(x0, t, eps, schedule_);
  return diffusion::simple_loss(model_->forward(noised.x_t, noised.t), eps).item<double>();
}

void GenerativePretrainer::save_state(const std::filesystem::path& path) { save_optimizer(path, *optimizer_, step_); }
void GenerativePretrainer::load_state(const std::filesystem::path& path) { step_ = load_optimizer(path, *optimizer_); }

std::vector<double> pretrain_generative(nn::Denoiser model, const torch::Tensor& images,
                                        const diffusion::NoiseSchedule& schedule, int steps,
                                        const OptimizerOptions& options,
                                        const std::function<void(const StepRecord&)>& on_step) {
  GenerativePretrainer trainer(std::move(model), images, schedule, options);
  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(std::max(steps, 0)));
  for (int i = 0; i < steps; ++i) {
    const auto record = trainer.step();
    losses.push_back(record.total_loss);
    if (on_step) on_step(record);
  }
  return losses;
}

SegmenterTrainer::SegmenterTrainer(Segmenter model, SegmentationData data, diffusion::NoiseSchedule schedule,
                                   OptimizerOptions options)
    : model_(std::move(model)), data_(std::move(data)), schedule_(std::move(schedule)), options_(options) {
  optimizer_ = make_adamw(model_->parameters(), options_);
}

StepRecord SegmenterTrainer::step() {
  model_->train();
  const auto draws = draw_step(options_.seed, step_, data_.size(), options_.batch_size, schedule_.steps,
                               {data_.images.size(2), data_.images.size(3)});
  optimizer_->zero_grad();
  const auto losses = model_->losses(pick(data_.images, draws.index), data_.labels(draws.index), draws.t, draws.eps,
                                     schedule_);
  losses.total.backward();
  optimizer_->step();
  StepRecord record;
  record.step = ++step_;
  record.conditioner_loss = losses.conditioner.item<double>();
  record.diffusion_loss = losses.diffusion.item<double>();
  record.total_loss = losses.total.item<double>();
  return record;
}

void SegmenterTrainer::save_state(const std::filesystem::path& path) { save_optimizer(path, *optimizer_, step_); }
void SegmenterTrainer::load_state(const std::filesystem::path& path) { step_ = load_optimizer(path, *optimizer_); }

std::vector<CasePrediction> predict_cases(Segmenter model, const SegmentationData& data,
                                          const diffusion::NoiseSchedule& schedule, const EvaluationOptions& options) {
  if (options.chunk < 1) throw std::invalid_argument("chunk must be >= 1");
  model->eval();
  std::vector<CasePrediction> out;
  out.reserve(static_cast<std::size_t>(data.size()));
  for (int64_t begin = 0; begin < data.size(); begin += options.chunk) {
    const auto end = std::min<int64_t>(begin + options.chunk, data.size());
    const auto result = model->predict(data.images.slice(0, begin, end), schedule, options.ensemble, options.seed,
                                       options.threshold, begin * options.ensemble);
    for (int64_t n = begin; n < end; ++n) {
      const auto local = n - begin;
      CasePrediction item;
      item.stem = data.stems.at(static_cast<std::size_t>(n));
      item.mean = to_real_map(result.mean[local]);
      item.mask = to_mask(result.mask[local]);
      item.variance = to_real_map(result.variance[local]);
      if (data.has_masks()) item.report = metrics::evaluate(item.mask, to_mask(data.masks[n]), options.hausdorff_percentile);
      out.push_back(std::move(item));
    }
  }
  return out;
}

}  // namespace cridiff
