#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "cridiff/conditioners.hpp"
#include "cridiff/denoiser.hpp"
#include "cridiff/diffusion.hpp"
#include "cridiff/segmenter.hpp"

namespace nn = cridiff::nn;

namespace {

void BM_ConditionerForward(benchmark::State& state) {
  torch::NoGradGuard no_grad;
  nn::ConditionerNet net;
  net->eval();
  const auto image = torch::randn({state.range(0), 1, 64, 64});
  for (auto _ : state) benchmark::DoNotOptimize(net->forward(image).sources.core[0]);
}
BENCHMARK(BM_ConditionerForward)->Arg(1)->Arg(6)->Unit(benchmark::kMillisecond);

void BM_DenoiserForward(benchmark::State& state) {
  torch::NoGradGuard no_grad;
  cridiff::Segmenter seg;
  seg->eval();
  const auto batch = state.range(0);
  const auto cond = seg->conditioner->forward(torch::randn({batch, 1, 64, 64}));
  const auto x = torch::randn({batch, 1, 64, 64});
  const auto t = torch::full({batch}, 50, torch::kInt64);
  for (auto _ : state) benchmark::DoNotOptimize(seg->denoiser->forward(x, t, cond.sources, seg->config().plan));
}
BENCHMARK(BM_DenoiserForward)->Arg(1)->Arg(6)->Unit(benchmark::kMillisecond);

void BM_TrainingStep(benchmark::State& state) {
  cridiff::Segmenter seg;
  seg->train();
  const auto sched = cridiff::diffusion::make_schedule(100, 1e-4, 0.02);
  const auto image = torch::randn({6, 1, 64, 64});
  const auto mask = (torch::rand({6, 1, 64, 64}) > 0.5).to(torch::kFloat32);
  const nn::LabelBatch labels{mask, mask * 0.5, mask * 0.5};
  const auto t = torch::randint(1, 101, {6}, torch::kInt64);
  const auto eps = torch::randn({6, 1, 64, 64});
  torch::optim::AdamW opt(seg->parameters(), torch::optim::AdamWOptions(1e-4));
  for (auto _ : state) {
    opt.zero_grad();
    auto losses = seg->losses(image, labels, t, eps, sched);
    losses.total.backward();
    opt.step();
  }
}
BENCHMARK(BM_TrainingStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
