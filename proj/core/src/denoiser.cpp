#include "cridiff/denoiser.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "cridiff/checkpoint.hpp"

namespace cridiff::nn {

std::string Stage::name() const { return (kind == Kind::Encoder ? "E" : "D") + std::to_string(index); }

std::string Route::node_name() const {
  // Core nodes sit on the CEC diagonal C_i^i, boundary nodes at the end of
  // BEC row i, B_{5-i}^i.
  if (role == SourceRole::Core) return "C_" + std::to_string(level) + "^" + std::to_string(level);
  return "B_" + std::to_string(5 - level) + "^" + std::to_string(level);
}

const Route* InjectionPlan::find(const Stage& stage) const {
  for (const auto& r : routes) {
    if (r.stage == stage) return &r;
  }
  return nullptr;
}

std::string InjectionPlan::to_text() const {
  std::ostringstream out;
  out << "strategy=" << to_string(strategy) << " ratio=" << to_string(ratio) << "\n";
  for (const auto kind : {Stage::Kind::Encoder, Stage::Kind::Decoder}) {
    for (int idx = 1; idx <= kLevels; ++idx) {
      const Stage s{kind, idx};
      const Route* r = find(s);
      out << s.name() << " <- " << (r ? r->node_name() : std::string("none")) << "\n";
    }
  }
  return out.str();
}

InjectionPlan InjectionPlan::none() {
  InjectionPlan p;
  p.routes.clear();
  return p;
}

InjectionPlan build_injection_plan(InjectionStrategy strategy, InjectionRatio ratio) {
  if (ratio.shallow < 0 || ratio.deep < 0 || ratio.shallow + ratio.deep != kLevels) {
    throw std::invalid_argument("injection ratio must split the four levels, got " + to_string(ratio));
  }
  InjectionPlan plan;
  plan.strategy = strategy;
  plan.ratio = ratio;
  for (int level = 1; level <= kLevels; ++level) {
    const bool shallow = level <= ratio.shallow;
    SourceRole role = shallow ? SourceRole::Core : SourceRole::Boundary;
    if (strategy == InjectionStrategy::StageByStage) role = shallow ? SourceRole::Boundary : SourceRole::Core;
    plan.routes.push_back({Stage{Stage::Kind::Encoder, level}, role, level});
    plan.routes.push_back({Stage{Stage::Kind::Decoder, 5 - level}, role, level});
  }
  return plan;
}

InjectionPlan build_injection_plan(const std::string& strategy, const std::string& ratio) {
  return build_injection_plan(strategy_from_string(strategy), ratio_from_string(ratio));
}

std::string to_string(InjectionStrategy s) { return s == InjectionStrategy::Crisscross ? "crisscross" : "sbs"; }

InjectionStrategy strategy_from_string(const std::string& name) {
  if (name == "crisscross" || name == "cis") return InjectionStrategy::Crisscross;
  if (name == "sbs" || name == "stage-by-stage") return InjectionStrategy::StageByStage;
  throw std::invalid_argument("unknown injection strategy '" + name + "' (expected crisscross or sbs)");
}

InjectionRatio ratio_from_string(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("ratio must look like 2:2, got '" + text + "'");
  try {
    InjectionRatio r{std::stoi(text.substr(0, colon)), std::stoi(text.substr(colon + 1))};
    if (r.shallow < 0 || r.deep < 0 || r.shallow + r.deep != kLevels) throw std::invalid_argument("sum");
    return r;
  } catch (const std::exception&) {
    throw std::invalid_argument("ratio must be one of 1:3, 2:2, 3:1 (got '" + text + "')");
  }
}

std::string to_string(InjectionRatio r) { return std::to_string(r.shallow) + ":" + std::to_string(r.deep); }

torch::Tensor timestep_embedding(const torch::Tensor& t, int64_t dim) {
  const int64_t half = dim / 2;
  auto opts = torch::TensorOptions().dtype(torch::kFloat32);
  auto freqs = torch::exp(-std::log(10000.0) * torch::arange(half, opts) / static_cast<double>(half));
  auto args = t.to(torch::kFloat32).unsqueeze(1) * freqs.unsqueeze(0);
  auto emb = torch::cat({torch::sin(args), torch::cos(args)}, 1);
  if (dim % 2 == 1) emb = torch::cat({emb, torch::zeros({emb.size(0), 1}, opts)}, 1);
  return emb;
}

namespace {

constexpr int64_t kGroups = 8;
constexpr double kPi = 3.14159265358979323846;
// Weight of the position code on queries and keys.
constexpr double kPositionScale = 2.0;

torch::nn::Conv2d conv3(int64_t in, int64_t out, int64_t stride = 1) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}
torch::nn::Conv2d conv1(int64_t in, int64_t out) { return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1)); }
torch::nn::GroupNorm group_norm(int64_t channels) {
  return torch::nn::GroupNorm(torch::nn::GroupNormOptions(std::min(kGroups, channels), channels));
}

}  // namespace

torch::Tensor position_encoding_2d(int64_t channels, int64_t height, int64_t width, const torch::TensorOptions& options) {
  // Rows fill the first half of the channels, columns the second. Each half
  // holds sin/cos pairs whose frequencies fall geometrically from pi/2 (one
  // step) to pi/(2n) (the whole axis), so codes of nearby positions agree
  // most at every grid size.
  const auto opts64 = options.dtype(torch::kFloat64);
  auto pe = torch::zeros({channels, height, width}, opts64);
  const auto axis = [&](int64_t offset, int64_t count, int64_t length, const torch::Tensor& pos) {
    const double hi = kPi / 2.0, lo = kPi / (2.0 * static_cast<double>(length));
    const int64_t pairs = std::max<int64_t>(count / 2, 1);
    for (int64_t k = 0; k < count; ++k) {
      const double frac = pairs > 1 ? static_cast<double>(k / 2) / static_cast<double>(pairs - 1) : 0.0;
      const double freq = hi * std::pow(lo / hi, frac);
      pe[offset + k].copy_(k % 2 == 0 ? torch::sin(pos * freq) : torch::cos(pos * freq));
    }
  };
  const int64_t half = channels / 2;
  axis(0, half, height, torch::arange(height, opts64).view({height, 1}).expand({height, width}));
  axis(half, channels - half, width, torch::arange(width, opts64).view({1, width}).expand({height, width}));
  return pe.to(options.dtype()).unsqueeze(0);
}

ResBlockImpl::ResBlockImpl(int64_t in_channels, int64_t out_channels, int64_t time_dim) {
  norm1 = register_module("norm1", group_norm(in_channels));
  conv1 = register_module("conv1", conv3(in_channels, out_channels));
  time_proj = register_module("time_proj", torch::nn::Linear(time_dim, out_channels));
  norm2 = register_module("norm2", group_norm(out_channels));
  conv2 = register_module("conv2", conv3(out_channels, out_channels));
  if (in_channels != out_channels) skip = register_module("skip", nn::conv1(in_channels, out_channels));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& temb) {
  auto h = conv1->forward(torch::silu(norm1->forward(x)));
  h = h + time_proj->forward(torch::silu(temb)).unsqueeze(-1).unsqueeze(-1);
  h = conv2->forward(torch::silu(norm2->forward(h)));
  return (skip ? skip->forward(x) : x) + h;
}

CrossAttentionImpl::CrossAttentionImpl(int64_t cond_channels, int64_t channels) : channels_(channels) {
  cond_proj = register_module("cond_proj", conv1(cond_channels, channels));
  norm = register_module("norm", group_norm(channels));
  query = register_module("query", conv1(channels, channels));
  key = register_module("key", conv1(channels, channels));
  value = register_module("value", conv1(channels, channels));
  out_proj = register_module("out_proj", conv1(channels, channels));
  zero_output();
}

void CrossAttentionImpl::zero_output() {
  torch::NoGradGuard no_grad;
  out_proj->weight.zero_();
  out_proj->bias.zero_();
}

CrossAttentionImpl::Projected CrossAttentionImpl::project(const torch::Tensor& cond, const torch::Tensor& feat) {
  const auto c = cond_proj->forward(resize_to(cond, feat.sizes().slice(2)));
  const auto tokens = [](const torch::Tensor& x) { return x.flatten(2).transpose(1, 2); };  // [B, N, C]
  // The same position code added to queries and keys biases every location
  // towards its own neighbourhood of conditioner tokens from the first step;
  // values carry content only.
  const auto pe = kPositionScale * position_encoding_2d(channels_, feat.size(2), feat.size(3), feat.options());
  return {tokens(query->forward(norm->forward(feat)) + pe), tokens(key->forward(c) + pe), tokens(value->forward(c))};
}

torch::Tensor CrossAttentionImpl::attention_weights(const torch::Tensor& cond, const torch::Tensor& feat) {
  const auto p = project(cond, feat);
  return torch::softmax(torch::bmm(p.q, p.k.transpose(1, 2)) / std::sqrt(static_cast<double>(channels_)), -1);
}

torch::Tensor CrossAttentionImpl::forward(const torch::Tensor& cond, const torch::Tensor& feat) {
  if (cond.size(0) != feat.size(0)) throw std::invalid_argument("cross_attention: batch mismatch");
  const auto p = project(cond, feat);
  const auto w = torch::softmax(torch::bmm(p.q, p.k.transpose(1, 2)) / std::sqrt(static_cast<double>(channels_)), -1);
  const auto attended = torch::bmm(w, p.v).transpose(1, 2).reshape(feat.sizes());
  return feat + out_proj->forward(attended);
}

DenoiserConfig DenoiserConfig::small() {
  DenoiserConfig c;
  for (auto& w : c.widths) w /= 2;
  return c;
}

DenoiserImpl::DenoiserImpl(DenoiserConfig config) : config_(config) {
  const auto& w = config_.widths;
  time_dim_ = 4 * w[0];
  time_mlp = register_module("time_mlp", torch::nn::Sequential(torch::nn::Linear(w[0], time_dim_), torch::nn::SiLU(),
                                                               torch::nn::Linear(time_dim_, time_dim_)));
  stem = register_module("stem", conv3(1, w[0]));
  pre_down = register_module("pre_down", conv3(w[0], w[0], 2));
  pre_block = register_module("pre_block", ResBlock(w[0], w[0], time_dim_));

  int64_t prev = w[0];
  for (int i = 0; i < kLevels; ++i) {
    const auto idx = std::to_string(i + 1);
    down[i] = register_module("down" + idx, conv3(prev, prev, 2));
    enc[i] = register_module("enc" + idx, ResBlock(prev, w[i], time_dim_));
    prev = w[i];
  }
  mid = register_module("mid", ResBlock(w[3], w[3], time_dim_));
  // D^d sits at level 5 - d and concatenates the matching encoder output.
  int64_t below = w[3];
  for (int d = 1; d <= kLevels; ++d) {
    const int level = 5 - d;
    const int64_t skip_w = w[level - 1];
    dec[d - 1] = register_module("dec" + std::to_string(d), ResBlock(below + skip_w, skip_w, time_dim_));
    below = skip_w;
  }
  post_block = register_module("post_block", ResBlock(2 * w[0], w[0], time_dim_));
  out_block = register_module("out_block", ResBlock(2 * w[0], w[0], time_dim_));
  out_norm = register_module("out_norm", group_norm(w[0]));
  out_conv = register_module("out_conv", conv3(w[0], 1));

  for (int i = 1; i <= kLevels; ++i) {
    inject_enc[i - 1] = register_module("inject_e" + std::to_string(i), CrossAttention(config_.cond_channels, w[i - 1]));
    inject_dec[i - 1] =
        register_module("inject_d" + std::to_string(i), CrossAttention(config_.cond_channels, w[(5 - i) - 1]));
  }
}

CrossAttention DenoiserImpl::injection(const Stage& stage) const {
  const auto i = static_cast<std::size_t>(stage.index - 1);
  return stage.kind == Stage::Kind::Encoder ? inject_enc.at(i) : inject_dec.at(i);
}

bool DenoiserImpl::is_injection_tensor(const std::string& name) { return name.rfind("inject_", 0) == 0; }

std::vector<std::pair<std::string, torch::Tensor>> DenoiserImpl::backbone_tensors() const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& p : named_parameters(true)) {
    if (!is_injection_tensor(p.key())) out.emplace_back(p.key(), p.value());
  }
  for (const auto& b : named_buffers(true)) {
    if (!is_injection_tensor(b.key())) out.emplace_back(b.key(), b.value());
  }
  return out;
}

torch::Tensor DenoiserImpl::forward(const torch::Tensor& x_t, const torch::Tensor& t) {
  return forward(x_t, t, InjectionSources{}, InjectionPlan::none());
}

torch::Tensor DenoiserImpl::forward(const torch::Tensor& x_t, const torch::Tensor& t, const InjectionSources& sources,
                                    const InjectionPlan& plan, StageTrace* trace) {
  if (x_t.dim() != 4 || x_t.size(1) != 1) throw std::invalid_argument("denoiser: x_t must be [B, 1, H, W]");
  if (x_t.size(2) % 32 != 0 || x_t.size(3) % 32 != 0) {
    throw std::invalid_argument("denoiser: height and width must be divisible by 32");
  }
  if (!plan.routes.empty() && sources.empty()) throw std::invalid_argument("denoiser: plan routes need conditioner sources");

  const auto inject = [&](const Stage& stage, const torch::Tensor& feat) {
    const Route* r = plan.find(stage);
    if (!r) return feat;
    const auto& node = (r->role == SourceRole::Core ? sources.core : sources.boundary).at(static_cast<std::size_t>(r->level - 1));
    if (!node.defined()) throw std::invalid_argument("denoiser: missing conditioner node " + r->node_name());
    return injection(stage)->forward(node, feat);
  };

  const auto temb = time_mlp->forward(timestep_embedding(t, config_.widths[0]).to(x_t.dtype()));
  const auto s0 = stem->forward(x_t);
  const auto s1 = pre_block->forward(pre_down->forward(s0), temb);

  std::array<torch::Tensor, kLevels> e;
  torch::Tensor h = s1;
  for (int i = 0; i < kLevels; ++i) {
    h = enc[i]->forward(down[i]->forward(h), temb);
    h = inject(Stage{Stage::Kind::Encoder, i + 1}, h);
    e[i] = h;
    if (trace) trace->encoder.push_back(h);
  }
  h = mid->forward(h, temb);
  for (int d = 1; d <= kLevels; ++d) {
    const int level = 5 - d;
    if (d > 1) h = upsample2(h);
    h = dec[d - 1]->forward(torch::cat({h, e[level - 1]}, 1), temb);
    h = inject(Stage{Stage::Kind::Decoder, d}, h);
    if (trace) trace->decoder.push_back(h);
  }
  h = post_block->forward(torch::cat({upsample2(h), s1}, 1), temb);
  h = out_block->forward(torch::cat({upsample2(h), s0}, 1), temb);
  return out_conv->forward(torch::silu(out_norm->forward(h)));
}

std::string to_string(InitMode mode) {
  switch (mode) {
    case InitMode::Random: return "random";
    case InitMode::Kaiming: return "kaiming";
    case InitMode::GenerativePretrain: return "gp";
  }
  return "random";
}

InitMode init_mode_from_string(const std::string& name) {
  if (name == "random") return InitMode::Random;
  if (name == "kaiming") return InitMode::Kaiming;
  if (name == "gp") return InitMode::GenerativePretrain;
  throw std::invalid_argument("unknown init mode '" + name + "' (expected random, kaiming or gp)");
}

void init_weights(Denoiser& model, InitMode mode, const std::optional<std::filesystem::path>& checkpoint) {
  torch::NoGradGuard no_grad;
  switch (mode) {
    case InitMode::Random:
      for (const auto& m : model->modules(false)) {
        if (auto* conv = m->as<torch::nn::Conv2dImpl>()) conv->reset_parameters();
        if (auto* lin = m->as<torch::nn::LinearImpl>()) lin->reset_parameters();
        if (auto* gn = m->as<torch::nn::GroupNormImpl>()) gn->reset_parameters();
      }
      break;
    case InitMode::Kaiming:
      for (const auto& m : model->modules(false)) {
        if (auto* conv = m->as<torch::nn::Conv2dImpl>()) {
          torch::nn::init::kaiming_normal_(conv->weight, 0.0, torch::kFanIn, torch::kReLU);
          if (conv->bias.defined()) conv->bias.zero_();
        }
      }
      break;
    case InitMode::GenerativePretrain: {
      if (!checkpoint) throw std::invalid_argument("init_weights(gp) needs a pre-training checkpoint");
      const auto loaded = read_checkpoint(*checkpoint);
      if (loaded.info.kind != "pretrain") {
        throw std::runtime_error("checkpoint " + checkpoint->string() + " is a '" + loaded.info.kind +
                                 "' checkpoint, expected 'pretrain'");
      }
      load_tensors(*model, loaded.tensors, [](const std::string& n) { return !DenoiserImpl::is_injection_tensor(n); });
      break;
    }
  }
  for (int i = 1; i <= kLevels; ++i) {
    model->injection({Stage::Kind::Encoder, i})->zero_output();
    model->injection({Stage::Kind::Decoder, i})->zero_output();
  }
}

}  // namespace cridiff::nn
