#include "cridiff/conditioners.hpp"

#include <stdexcept>

namespace cridiff::nn {

namespace F = torch::nn::functional;

torch::Tensor upsample2(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{x.size(-2) * 2, x.size(-1) * 2})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

torch::Tensor resize_to(const torch::Tensor& x, torch::IntArrayRef hw) {
  if (x.size(-2) == hw[0] && x.size(-1) == hw[1]) return x;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{hw[0], hw[1]})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

BConvImpl::BConvImpl(int64_t in_channels, int64_t out_channels) {
  conv = register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, out_channels, 3)
                                                       .padding(1)
                                                       .bias(false)));
  bn = register_module("bn", torch::nn::BatchNorm2d(out_channels));
}

torch::Tensor BConvImpl::forward(const torch::Tensor& x) { return torch::relu(bn->forward(conv->forward(x))); }

namespace {

torch::nn::Sequential conv_bn_relu(int64_t in, int64_t out, int64_t stride) {
  return torch::nn::Sequential(
      torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(false)),
      torch::nn::BatchNorm2d(out), torch::nn::ReLU());
}

torch::Tensor cat(std::initializer_list<torch::Tensor> parts) { return torch::cat(std::vector<torch::Tensor>(parts), 1); }

void check_trans(const std::array<torch::Tensor, kLevels>& trans, const char* who) {
  for (int i = 0; i < kLevels; ++i) {
    if (!trans[i].defined()) throw std::invalid_argument(std::string(who) + ": missing level " + std::to_string(i + 1));
    if (i > 0 && (trans[i].size(-2) * 2 != trans[i - 1].size(-2) || trans[i].size(-1) * 2 != trans[i - 1].size(-1))) {
      throw std::invalid_argument(std::string(who) + ": level " + std::to_string(i + 1) +
                                  " is not half the size of level " + std::to_string(i));
    }
  }
}

}  // namespace

EncoderImpl::EncoderImpl(int64_t in_channels, std::array<int64_t, kLevels> widths) : widths_(widths) {
  stem = register_module("stem", conv_bn_relu(in_channels, widths[0], 2));
  int64_t prev = widths[0];
  for (int i = 0; i < kLevels; ++i) {
    // Each stage halves the resolution once; the stem supplies the first 2x.
    auto stage = conv_bn_relu(prev, widths[i], 2);
    stage->extend(*conv_bn_relu(widths[i], widths[i], 1));
    stages[i] = register_module("stage" + std::to_string(i + 1), stage);
    prev = widths[i];
  }
}

FeaturePyramid EncoderImpl::forward(const torch::Tensor& image) {
  if (image.dim() != 4) throw std::invalid_argument("encoder: expected [B, C, H, W]");
  if (image.size(2) % 32 != 0 || image.size(3) % 32 != 0) {
    throw std::invalid_argument("encoder: height and width must be divisible by 32");
  }
  FeaturePyramid out;
  auto x = stem->forward(image);
  for (int i = 0; i < kLevels; ++i) {
    x = stages[i]->forward(x);
    out.levels[i] = x;
  }
  return out;
}

BecImpl::BecImpl(int64_t channels) {
  for (int i = 1; i <= kLevels; ++i) {
    for (int j = 1; j <= row_length(i); ++j) {
      // Only the deepest node B_1^4 has a single operand.
      const int64_t in = (i == 4) ? channels : 2 * channels;
      nodes_[i - 1].push_back(
          register_module("b" + std::to_string(i) + "_" + std::to_string(j), BConv(in, channels)));
    }
  }
}

BecGrid BecImpl::forward(const std::array<torch::Tensor, kLevels>& trans) {
  check_trans(trans, "bec");
  BecGrid g;
  for (int i = 0; i < kLevels; ++i) g.rows[i].push_back(trans[i]);
  for (int i = kLevels; i >= 1; --i) {
    auto& row = g.rows[i - 1];
    for (int j = 1; j <= row_length(i); ++j) {
      const auto& left = row[j - 1];
      torch::Tensor x;
      if (i + j <= 4) {
        x = cat({left, upsample2(g.at(i + 1, j))});
      } else if (i == 4) {
        x = left;
      } else {
        x = cat({left, upsample2(g.at(i + 1, j - 1))});
      }
      row.push_back(node(i, j)->forward(x));
    }
  }
  return g;
}

CecImpl::CecImpl(int64_t channels) {
  for (int i = 1; i <= kLevels; ++i) {
    for (int j = 1; j <= row_length(i); ++j) {
      int64_t in = channels;
      if (i < 4) in = (i == j) ? 3 * channels : 2 * channels;
      nodes_[i - 1].push_back(
          register_module("c" + std::to_string(i) + "_" + std::to_string(j), BConv(in, channels)));
    }
  }
}

CecGrid CecImpl::forward(const std::array<torch::Tensor, kLevels>& trans) {
  check_trans(trans, "cec");
  CecGrid g;
  for (int i = 0; i < kLevels; ++i) g.rows[i].push_back(trans[i]);
  for (int i = kLevels; i >= 1; --i) {
    auto& row = g.rows[i - 1];
    for (int j = 1; j <= row_length(i); ++j) {
      const auto& left = row[j - 1];
      torch::Tensor x;
      if (i == 4) {
        x = left;
      } else if (i == j) {
        x = cat({left, upsample2(g.at(i + 1, j)), upsample2(g.at(i + 1, j + 1))});
      } else {
        x = cat({left, upsample2(g.at(i + 1, j))});
      }
      row.push_back(node(i, j)->forward(x));
    }
  }
  return g;
}

FpnImpl::FpnImpl(int64_t channels) {
  for (int i = 1; i <= kLevels; ++i) {
    levels_[i - 1] = register_module("p" + std::to_string(i), BConv(channels, channels));
  }
}

FusedPyramid FpnImpl::forward(const std::array<std::vector<torch::Tensor>, kLevels>& laterals) {
  FusedPyramid out;
  for (int i = kLevels; i >= 1; --i) {
    const auto& lat = laterals[i - 1];
    if (lat.empty()) throw std::invalid_argument("fpn: no lateral input at level " + std::to_string(i));
    torch::Tensor sum = lat[0];
    for (std::size_t k = 1; k < lat.size(); ++k) {
      if (!lat[k].sizes().equals(sum.sizes())) {
        throw std::invalid_argument("fpn: lateral resolution mismatch at level " + std::to_string(i));
      }
      sum = sum + lat[k];
    }
    if (i < kLevels) sum = sum + upsample2(out.levels[i]);
    out.levels[i - 1] = level(i)->forward(sum);
  }
  return out;
}

FusedPyramid FpnImpl::fuse(const BecGrid& bec, const CecGrid& cec) {
  std::array<std::vector<torch::Tensor>, kLevels> laterals;
  for (int i = 1; i <= kLevels; ++i) laterals[i - 1] = {bec.output(i), cec.output(i)};
  return forward(laterals);
}

HeadImpl::HeadImpl(int64_t in_channels, int64_t out_channels) {
  proj = register_module("proj", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, out_channels, 1)));
}

torch::Tensor HeadImpl::forward(const torch::Tensor& feature, torch::IntArrayRef target_hw) {
  return resize_to(torch::sigmoid(proj->forward(feature)), target_hw);
}

namespace {

void check_pair(const torch::Tensor& pred, const torch::Tensor& target, const char* who) {
  if (!pred.sizes().equals(target.sizes())) throw std::invalid_argument(std::string(who) + ": shape mismatch");
}

}  // namespace

torch::Tensor bce_loss(const torch::Tensor& pred, const torch::Tensor& target) {
  check_pair(pred, target, "bce_loss");
  {
    torch::NoGradGuard guard;
    const bool in_range = pred.ge(0).all().item<bool>() && pred.le(1).all().item<bool>();
    if (!in_range) throw std::domain_error("bce_loss: predictions outside [0, 1]");
  }
  const double eps = pred.scalar_type() == torch::kFloat64 ? 1e-12 : 1e-7;
  auto p = pred.clamp(eps, 1.0 - eps);
  return -(target * torch::log(p) + (1.0 - target) * torch::log(1.0 - p)).mean();
}

torch::Tensor dice_loss(const torch::Tensor& pred, const torch::Tensor& target) {
  check_pair(pred, target, "dice_loss");
  const auto p = pred.flatten(1);
  const auto t = target.flatten(1);
  const auto inter = (p * t).sum(1);
  return (1.0 - (2.0 * inter + 1.0) / (p.sum(1) + t.sum(1) + 1.0)).mean();
}

torch::Tensor iou_loss(const torch::Tensor& pred, const torch::Tensor& target) {
  check_pair(pred, target, "iou_loss");
  const auto p = pred.flatten(1);
  const auto t = target.flatten(1);
  const auto inter = (p * t).sum(1);
  return (1.0 - (inter + 1.0) / (p.sum(1) + t.sum(1) - inter + 1.0)).mean();
}

std::string to_string(ConditionerVariant v) {
  switch (v) {
    case ConditionerVariant::Prostate: return "P";
    case ConditionerVariant::SimpleFpn: return "P*";
    case ConditionerVariant::ProstateCore: return "P+C";
    case ConditionerVariant::ProstateBoundary: return "P+B";
    case ConditionerVariant::Full: return "P+C+B";
  }
  return "P+C+B";
}

ConditionerVariant variant_from_string(const std::string& name) {
  if (name == "P") return ConditionerVariant::Prostate;
  if (name == "P*") return ConditionerVariant::SimpleFpn;
  if (name == "P+C") return ConditionerVariant::ProstateCore;
  if (name == "P+B") return ConditionerVariant::ProstateBoundary;
  if (name == "P+C+B") return ConditionerVariant::Full;
  throw std::invalid_argument("unknown conditioner variant '" + name + "' (expected P, P*, P+C, P+B, P+C+B)");
}

InjectionSources InjectionSources::repeat_interleave(int64_t times) const {
  InjectionSources out;
  for (int i = 0; i < kLevels; ++i) {
    if (core[i].defined()) out.core[i] = core[i].repeat_interleave(times, 0);
    if (boundary[i].defined()) out.boundary[i] = boundary[i].repeat_interleave(times, 0);
  }
  return out;
}

torch::Tensor conditioner_loss(const BecGrid* bec, const CecGrid* cec, const FusedPyramid& fused,
                               const LabelBatch& labels, SupervisionHeads heads) {
  const auto hw = labels.prostate.sizes().slice(2);
  torch::Tensor total = torch::zeros({}, labels.prostate.options());
  for (int i = 1; i <= kLevels; ++i) {
    if (bec) total = total + bce_loss(heads.boundary[i - 1]->forward(bec->output(i), hw), labels.boundary);
    if (cec) total = total + bce_loss(heads.core[i - 1]->forward(cec->output(i), hw), labels.core);
    const auto p = heads.prostate[i - 1]->forward(fused.level(i), hw);
    total = total + bce_loss(p, labels.prostate) + iou_loss(p, labels.prostate) + dice_loss(p, labels.prostate);
  }
  return total;
}

ConditionerNetImpl::ConditionerNetImpl(ConditionerVariant variant, int64_t in_channels,
                                       std::array<int64_t, kLevels> encoder_widths)
    : variant_(variant) {
  encoder = register_module("encoder", Encoder(in_channels, encoder_widths));
  const bool use_b = variant == ConditionerVariant::Full || variant == ConditionerVariant::ProstateBoundary;
  const bool use_c = variant == ConditionerVariant::Full || variant == ConditionerVariant::ProstateCore;
  const bool use_p = variant == ConditionerVariant::Prostate || variant == ConditionerVariant::SimpleFpn;
  for (int i = 1; i <= kLevels; ++i) {
    const auto idx = std::to_string(i);
    const int64_t width = encoder_widths[i - 1];
    if (use_b) {
      trans_b[i - 1] = register_module("trans_b" + idx, BConv(width));
      heads.boundary[i - 1] = register_module("head_b" + idx, Head());
    }
    if (use_c) {
      trans_c[i - 1] = register_module("trans_c" + idx, BConv(width));
      heads.core[i - 1] = register_module("head_c" + idx, Head());
    }
    if (use_p) trans_p[i - 1] = register_module("trans_p" + idx, BConv(width));
    if (variant == ConditionerVariant::SimpleFpn) {
      tri_heads[i - 1] = register_module("head_tri" + idx, Head(kNodeChannels, 3));
    } else {
      heads.prostate[i - 1] = register_module("head_p" + idx, Head());
    }
  }
  if (use_b) bec = register_module("bec", Bec());
  if (use_c) cec = register_module("cec", Cec());
  fpn = register_module("fpn", Fpn());
}

ConditionerOutput ConditionerNetImpl::forward(const torch::Tensor& image) {
  ConditionerOutput out;
  out.pyramid = encoder->forward(image);
  const auto project = [&](std::array<BConv, kLevels>& trans) {
    std::array<torch::Tensor, kLevels> t;
    for (int i = 0; i < kLevels; ++i) t[i] = trans[i]->forward(out.pyramid.levels[i]);
    return t;
  };

  std::array<std::vector<torch::Tensor>, kLevels> laterals;
  if (bec) out.bec = bec->forward(project(trans_b));
  if (cec) out.cec = cec->forward(project(trans_c));
  if (trans_p[0]) {
    const auto t = project(trans_p);
    for (int i = 0; i < kLevels; ++i) laterals[i].push_back(t[i]);
  }
  for (int i = 1; i <= kLevels; ++i) {
    if (out.bec) laterals[i - 1].push_back(out.bec->output(i));
    if (out.cec) laterals[i - 1].push_back(out.cec->output(i));
  }
  out.fused = fpn->forward(laterals);

  for (int i = 1; i <= kLevels; ++i) {
    const auto& p = out.fused.level(i);
    out.sources.core[i - 1] = out.cec ? out.cec->output(i) : p;
    out.sources.boundary[i - 1] = out.bec ? out.bec->output(i) : p;
  }
  return out;
}

torch::Tensor ConditionerNetImpl::loss(const ConditionerOutput& out, const LabelBatch& labels) {
  if (variant_ != ConditionerVariant::SimpleFpn) {
    return conditioner_loss(out.bec ? &*out.bec : nullptr, out.cec ? &*out.cec : nullptr, out.fused, labels, heads);
  }
  const auto hw = labels.prostate.sizes().slice(2);
  torch::Tensor total = torch::zeros({}, labels.prostate.options());
  for (int i = 1; i <= kLevels; ++i) {
    const auto pred = tri_heads[i - 1]->forward(out.fused.level(i), hw);
    const auto p = pred.narrow(1, 0, 1);
    total = total + bce_loss(p, labels.prostate) + iou_loss(p, labels.prostate) +
            dice_loss(p, labels.prostate) + bce_loss(pred.narrow(1, 1, 1), labels.core) +
            bce_loss(pred.narrow(1, 2, 1), labels.boundary);
  }
  return total;
}

}  // namespace cridiff::nn
