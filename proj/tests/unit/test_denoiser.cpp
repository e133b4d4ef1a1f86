#include <gtest/gtest.h>
#include <torch/torch.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <random>

#include "cridiff/checkpoint.hpp"
#include "cridiff/denoiser.hpp"
#include "cridiff/diffusion.hpp"
#include "cridiff/segmenter.hpp"
#include "probes.hpp"

namespace nn = cridiff::nn;
using nn::Stage;
namespace fs = std::filesystem;

namespace {

constexpr auto kF64 = torch::kFloat64;

Stage E(int i) { return {Stage::Kind::Encoder, i}; }
Stage D(int i) { return {Stage::Kind::Decoder, i}; }

std::map<std::string, std::string> table(const nn::InjectionPlan& plan) {
  std::map<std::string, std::string> out;
  for (const auto& r : plan.routes) out[r.stage.name()] = r.node_name();
  return out;
}

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("cridiff_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

nn::InjectionSources random_sources(int64_t batch, int64_t side, bool grad) {
  nn::InjectionSources s;
  for (int i = 0; i < nn::kLevels; ++i) {
    const auto hw = side >> (i + 2);
    s.core[i] = torch::randn({batch, nn::kNodeChannels, hw, hw}, kF64).requires_grad_(grad);
    s.boundary[i] = torch::randn({batch, nn::kNodeChannels, hw, hw}, kF64).requires_grad_(grad);
  }
  return s;
}

using probe::make_tracer;

}  // namespace

TEST(InjectionPlan, CrisscrossTwoTwo) {
  const auto plan = nn::build_injection_plan(nn::InjectionStrategy::Crisscross, {2, 2});
  const std::map<std::string, std::string> want{{"E1", "C_1^1"}, {"E2", "C_2^2"}, {"E3", "B_2^3"}, {"E4", "B_1^4"},
                                                {"D4", "C_1^1"}, {"D3", "C_2^2"}, {"D2", "B_2^3"}, {"D1", "B_1^4"}};
  EXPECT_EQ(table(plan), want);
}

TEST(InjectionPlan, StageByStageSwapsRoles) {
  const auto plan = nn::build_injection_plan("sbs", "2:2");
  const std::map<std::string, std::string> want{{"E1", "B_4^1"}, {"E2", "B_3^2"}, {"E3", "C_3^3"}, {"E4", "C_4^4"},
                                                {"D4", "B_4^1"}, {"D3", "B_3^2"}, {"D2", "C_3^3"}, {"D1", "C_4^4"}};
  EXPECT_EQ(table(plan), want);
}

TEST(InjectionPlan, RatiosMoveTheSplit) {
  const auto one_three = table(nn::build_injection_plan("crisscross", "1:3"));
  EXPECT_EQ(one_three.at("E1"), "C_1^1");
  EXPECT_EQ(one_three.at("E2"), "B_3^2");
  EXPECT_EQ(one_three.at("E3"), "B_2^3");
  EXPECT_EQ(one_three.at("E4"), "B_1^4");
  const auto three_one = table(nn::build_injection_plan("crisscross", "3:1"));
  EXPECT_EQ(three_one.at("E3"), "C_3^3");
  EXPECT_EQ(three_one.at("D1"), "B_1^4");
  EXPECT_EQ(three_one.at("D2"), "C_3^3");
}

TEST(InjectionPlan, ExclusiveStagesAndDoubleUse) {
  const auto plan = nn::build_injection_plan("crisscross", "2:2");
  std::map<std::string, int> stage_uses, node_uses;
  for (const auto& r : plan.routes) {
    ++stage_uses[r.stage.name()];
    ++node_uses[r.node_name()];
  }
  EXPECT_EQ(stage_uses.size(), 8u);
  for (const auto& [s, n] : stage_uses) EXPECT_EQ(n, 1) << s;
  EXPECT_EQ(node_uses, (std::map<std::string, int>{{"C_1^1", 2}, {"C_2^2", 2}, {"B_2^3", 2}, {"B_1^4", 2}}));
}

TEST(InjectionPlan, TextAndErrors) {
  const auto text = nn::build_injection_plan("crisscross", "2:2").to_text();
  EXPECT_NE(text.find("strategy=crisscross ratio=2:2"), std::string::npos);
  EXPECT_NE(text.find("E1 <- C_1^1"), std::string::npos);
  EXPECT_NE(text.find("D1 <- B_1^4"), std::string::npos);
  EXPECT_NE(nn::InjectionPlan::none().to_text().find("E3 <- none"), std::string::npos);
  EXPECT_THROW(nn::build_injection_plan("spiral", "2:2"), std::invalid_argument);
  EXPECT_THROW(nn::build_injection_plan("crisscross", "2:3"), std::invalid_argument);
  EXPECT_THROW(nn::build_injection_plan("crisscross", "two"), std::invalid_argument);
}

TEST(CrossAttention, IdentityAtInitAndShapes) {
  nn::CrossAttention attn(64, 32);
  attn->to(kF64);
  const auto feat = torch::randn({2, 32, 8, 8}, kF64);
  for (int64_t side : {2, 8, 16}) {
    const auto cond = torch::randn({2, 64, side, side}, kF64);
    const auto out = attn->forward(cond, feat);
    EXPECT_EQ(out.sizes(), feat.sizes());
    EXPECT_TRUE(torch::equal(out, feat));
  }
}

TEST(CrossAttention, WeightsAreDistributions) {
  torch::manual_seed(4);
  nn::CrossAttention attn(64, 32);
  const auto w = attn->attention_weights(torch::randn({2, 64, 4, 4}), torch::randn({2, 32, 8, 8}));
  EXPECT_EQ(w.sizes(), (std::vector<int64_t>{2, 64, 64}));
  EXPECT_LT((w.sum(-1) - 1).abs().max().item<double>(), 1e-6);
  EXPECT_GE(w.min().item<double>(), 0.0);
}

TEST(Denoiser, OutputShapeAndEmptyPlan) {
  torch::manual_seed(1);
  nn::Denoiser model(nn::DenoiserConfig::small());
  model->to(kF64);
  const auto x = torch::randn({2, 1, 64, 64}, kF64);
  const auto t = torch::tensor({3, 70}, torch::kInt64);
  const auto plain = model->forward(x, t);
  EXPECT_EQ(plain.sizes(), x.sizes());
  const auto sources = random_sources(2, 64, false);
  EXPECT_TRUE(torch::equal(model->forward(x, t, sources, nn::InjectionPlan::none()), plain));
  EXPECT_THROW(model->forward(torch::zeros({1, 1, 48, 48}), torch::ones({1}, torch::kInt64)), std::invalid_argument);
  EXPECT_THROW(model->forward(x, t, nn::InjectionSources{}, nn::build_injection_plan("crisscross", "2:2")),
               std::invalid_argument);
}

TEST(Denoiser, StageResolutionsMirrorConditionerLevels) {
  nn::Denoiser model(nn::DenoiserConfig::small());
  model->to(kF64);
  nn::StageTrace trace;
  model->forward(torch::randn({1, 1, 64, 64}, kF64), torch::ones({1}, torch::kInt64), random_sources(1, 64, false),
                 nn::build_injection_plan("crisscross", "2:2"), &trace);
  ASSERT_EQ(trace.encoder.size(), 4u);
  ASSERT_EQ(trace.decoder.size(), 4u);
  for (int i = 1; i <= 4; ++i) {
    EXPECT_EQ(trace.encoder[i - 1].size(2), 16 >> (i - 1)) << "E" << i;
    EXPECT_EQ(trace.decoder[(5 - i) - 1].size(2), 16 >> (i - 1)) << "D" << 5 - i;
  }
}

TEST(Denoiser, TracerConstantsRecoverRoutingTable) {
  nn::Denoiser model(nn::DenoiserConfig::small());
  model->to(kF64);
  make_tracer(model);
  EXPECT_EQ(probe::recover_routing(model, nn::build_injection_plan("crisscross", "2:2")), probe::crisscross_table());
  EXPECT_EQ(probe::recover_routing(model, nn::build_injection_plan("sbs", "2:2")), probe::stage_by_stage_table());
  const auto none = probe::recover_routing(model, nn::InjectionPlan::none());
  for (const auto& [stage, node] : none) EXPECT_EQ(node, "none") << stage;
}

TEST(Denoiser, GradientReachesEveryRoutedNode) {
  torch::manual_seed(6);
  nn::Denoiser model(nn::DenoiserConfig::small());
  model->to(kF64);
  {
    torch::NoGradGuard no_grad;
    for (const auto& p : model->named_parameters()) {
      if (p.key().find("out_proj") != std::string::npos) p.value().normal_(0.0, 0.05);
    }
  }
  for (const auto* strategy : {"crisscross", "sbs"}) {
    const auto plan = nn::build_injection_plan(strategy, "2:2");
    auto sources = random_sources(1, 64, true);
    model->forward(torch::randn({1, 1, 64, 64}, kF64), torch::tensor({30}, torch::kInt64), sources, plan)
        .square()
        .sum()
        .backward();
    for (int level = 1; level <= 4; ++level) {
      for (const auto role : {nn::SourceRole::Core, nn::SourceRole::Boundary}) {
        bool routed = false;
        for (const auto& r : plan.routes) routed |= r.role == role && r.level == level;
        const auto& node = (role == nn::SourceRole::Core ? sources.core : sources.boundary)[level - 1];
        const bool has_grad = node.grad().defined() && node.grad().abs().sum().item<double>() > 0;
        EXPECT_EQ(has_grad, routed) << strategy << " level " << level;
      }
    }
  }
}

TEST(Denoiser, SimpleLossGradientMatchesFiniteDifferences) {
  const auto probes = probe::simple_loss_probes(12);
  EXPECT_EQ(probes.size(), 6u);
  for (const auto& p : probes) EXPECT_LT(p.relative_error(), 1e-3) << p.name << "[" << p.index << "]";
}

TEST(InitWeights, KaimingStatistics) {
  torch::manual_seed(2);
  nn::Denoiser model;
  nn::init_weights(model, nn::InitMode::Kaiming);
  int checked = 0;
  for (const auto& m : model->modules(false)) {
    auto* conv = m->as<torch::nn::Conv2dImpl>();
    if (!conv) continue;
    const auto& w = conv->weight;
    const auto fan_in = w.size(1) * w.size(2) * w.size(3);
    if (fan_in < 256) continue;
    // Injection output projections are zeroed after initialization.
    if (w.abs().max().item<double>() == 0.0) continue;
    const double want = std::sqrt(2.0 / static_cast<double>(fan_in));
    EXPECT_NEAR(w.std().item<double>(), want, 0.2 * want);
    if (conv->bias.defined()) EXPECT_EQ(conv->bias.abs().max().item<double>(), 0.0);
    ++checked;
  }
  EXPECT_GT(checked, 10);
}

TEST(InitWeights, RandomIsFanInUniform) {
  nn::Denoiser model(nn::DenoiserConfig::small());
  nn::init_weights(model, nn::InitMode::Random);
  for (const auto& m : model->modules(false)) {
    auto* conv = m->as<torch::nn::Conv2dImpl>();
    if (!conv) continue;
    const auto& w = conv->weight;
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.size(1) * w.size(2) * w.size(3)));
    EXPECT_LE(w.abs().max().item<double>(), bound + 1e-7);
  }
  for (int i = 1; i <= 4; ++i) EXPECT_EQ(model->injection(E(i))->out_proj->weight.abs().max().item<double>(), 0.0);
}

TEST(InitWeights, GenerativePretrainRoundTrip) {
  const auto dir = temp_dir("gp_roundtrip");
  torch::manual_seed(21);
  nn::Denoiser source(nn::DenoiserConfig::small());
  cridiff::CheckpointInfo info;
  info.kind = "pretrain";
  info.schedule_steps = 100;
  cridiff::save_checkpoint(dir / "gp.pt", *source, info);

  torch::manual_seed(22);
  nn::Denoiser target(nn::DenoiserConfig::small());
  nn::init_weights(target, nn::InitMode::GenerativePretrain, dir / "gp.pt");
  const auto expected = source->backbone_tensors();
  const auto got = target->backbone_tensors();
  ASSERT_EQ(expected.size(), got.size());
  for (std::size_t k = 0; k < got.size(); ++k) {
    EXPECT_EQ(got[k].first, expected[k].first);
    EXPECT_TRUE(torch::equal(got[k].second, expected[k].second)) << got[k].first;
  }
  cridiff::save_checkpoint(dir / "again.pt", *target, info);
  const auto again = cridiff::read_checkpoint(dir / "again.pt");
  for (const auto& [name, tensor] : expected) EXPECT_TRUE(torch::equal(again.tensors.at(name), tensor)) << name;
}

TEST(InitWeights, GenerativePretrainRejectsMismatch) {
  const auto dir = temp_dir("gp_mismatch");
  nn::Denoiser wide;  // full widths
  cridiff::CheckpointInfo info;
  info.kind = "pretrain";
  cridiff::save_checkpoint(dir / "wide.pt", *wide, info);
  nn::Denoiser small(nn::DenoiserConfig::small());
  EXPECT_THROW(nn::init_weights(small, nn::InitMode::GenerativePretrain, dir / "wide.pt"), std::runtime_error);
  EXPECT_THROW(nn::init_weights(small, nn::InitMode::GenerativePretrain), std::invalid_argument);
  info.kind = "segmenter";
  cridiff::save_checkpoint(dir / "seg.pt", *small, info);
  EXPECT_THROW(nn::init_weights(small, nn::InitMode::GenerativePretrain, dir / "seg.pt"), std::runtime_error);
}

TEST(InitWeights, GenerativePretrainIdentityAtInjectionInit) {
  const auto bad = probe::gp_identity_mismatches(temp_dir("gp_identity"), 31);
  std::string names;
  for (const auto& n : bad) names += n + " ";
  EXPECT_TRUE(bad.empty()) << names;
}

TEST(InitWeights, ModeNames) {
  EXPECT_EQ(nn::init_mode_from_string("gp"), nn::InitMode::GenerativePretrain);
  EXPECT_EQ(nn::to_string(nn::InitMode::Kaiming), "kaiming");
  EXPECT_THROW(nn::init_mode_from_string("xavier"), std::invalid_argument);
}
