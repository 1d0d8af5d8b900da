#include "yffn/attention.hpp"

#include <stdexcept>

#include "yffn/common.hpp"

namespace yffn {

void ChannelAttentionParams::validate() const {
  if (w1.rank() != 2 || w2.rank() != 2 || b1.rank() != 1 || b2.rank() != 1) {
    throw std::invalid_argument("channel attention parameters have wrong ranks");
  }
  const int c = w1.extent(0);
  if (reduction < 1 || c % reduction != 0) {
    throw std::invalid_argument(detail::cat("channel count ", c, " not divisible by reduction ",
                                            reduction));
  }
  const int hidden = c / reduction;
  if (w1.extent(1) != hidden || b1.extent(0) != hidden || w2.extent(0) != hidden ||
      w2.extent(1) != c || b2.extent(0) != c) {
    throw std::invalid_argument(detail::cat("channel attention shapes inconsistent for C=", c,
                                            ", r=", reduction));
  }
  if (!w1.all_finite() || !b1.all_finite() || !w2.all_finite() || !b2.all_finite()) {
    throw std::invalid_argument("channel attention parameters must be finite");
  }
}

ChannelAttentionParams ChannelAttentionParams::seeded(int channels, int reduction,
                                                      std::uint64_t seed) {
  const int hidden = channels / reduction;
  ChannelAttentionParams p;
  p.reduction = reduction;
  p.w1 = random_uniform({channels, hidden}, -0.5, 0.5, seed);
  p.b1 = random_uniform({hidden}, -0.5, 0.5, seed + 1);
  p.w2 = random_uniform({hidden, channels}, -0.5, 0.5, seed + 2);
  p.b2 = random_uniform({channels}, -0.5, 0.5, seed + 3);
  p.validate();
  return p;
}

ChannelAttentionParams ChannelAttentionParams::zeros(int channels, int reduction) {
  const int hidden = channels / reduction;
  ChannelAttentionParams p;
  p.reduction = reduction;
  p.w1 = Tensor::zeros({channels, hidden});
  p.b1 = Tensor::zeros({hidden});
  p.w2 = Tensor::zeros({hidden, channels});
  p.b2 = Tensor::zeros({channels});
  p.validate();
  return p;
}

void SpatialAttentionParams::validate() const {
  if (kernel.rank() != 4 || kernel.extent(2) != 2 || kernel.extent(3) != 1 ||
      kernel.extent(0) != kernel.extent(1)) {
    throw std::invalid_argument(detail::cat("spatial attention kernel must be (k, k, 2, 1), got ",
                                            kernel.shape_str()));
  }
  if (kernel.extent(0) % 2 == 0) {
    throw std::invalid_argument("spatial attention kernel extent must be odd");
  }
  if (bias.rank() != 1 || bias.extent(0) != 1) {
    throw std::invalid_argument("spatial attention bias must have shape (1)");
  }
}

SpatialAttentionParams SpatialAttentionParams::seeded(std::uint64_t seed, int k) {
  SpatialAttentionParams p;
  p.kernel = random_uniform({k, k, 2, 1}, -0.5, 0.5, seed);
  p.bias = random_uniform({1}, -0.5, 0.5, seed + 1);
  p.validate();
  return p;
}

SpatialAttentionParams SpatialAttentionParams::zeros(int k) {
  SpatialAttentionParams p;
  p.kernel = Tensor::zeros({k, k, 2, 1});
  p.bias = Tensor::zeros({1});
  p.validate();
  return p;
}

void CBAMParams::validate() const {
  channel.validate();
  spatial.validate();
}

CBAMParams CBAMParams::seeded(int channels, int reduction, std::uint64_t seed) {
  return {ChannelAttentionParams::seeded(channels, reduction, seed),
          SpatialAttentionParams::seeded(seed + 17)};
}

int pick_reduction(int channels, int preferred) {
  for (int r = preferred; r > 1; --r) {
    if (channels % r == 0) return r;
  }
  return 1;
}

ChannelAttentionVars watch(Tape& t, const ChannelAttentionParams& p) {
  p.validate();
  return {t.leaf(p.w1), t.leaf(p.b1), t.leaf(p.w2), t.leaf(p.b2), p.reduction};
}

SpatialAttentionVars watch(Tape& t, const SpatialAttentionParams& p) {
  p.validate();
  return {t.leaf(p.kernel), t.leaf(p.bias), p.kernel_extent()};
}

CBAMVars watch(Tape& t, const CBAMParams& p) {
  return {watch(t, p.channel), watch(t, p.spatial)};
}

namespace ad {

namespace {

VarId shared_mlp(Tape& t, VarId descriptor, const ChannelAttentionVars& p) {
  VarId hidden = relu(t, dense(t, descriptor, p.w1, p.b1));
  return dense(t, hidden, p.w2, p.b2);
}

}  // namespace

VarId channel_attention(Tape& t, VarId f, const ChannelAttentionVars& p) {
  const Tensor& fv = t.value(f);
  if (fv.rank() != 3 || fv.extent(2) != t.value(p.w1).extent(0)) {
    throw std::invalid_argument(detail::cat("channel_attention: feature ", fv.shape_str(),
                                            " does not match parameters for C=",
                                            t.value(p.w1).extent(0)));
  }
  VarId davg = global_pool(t, f, PoolKind::Avg);
  VarId dmax = global_pool(t, f, PoolKind::Max);
  VarId logits = add(t, shared_mlp(t, davg, p), shared_mlp(t, dmax, p));
  return sigmoid(t, logits);
}

VarId spatial_attention(Tape& t, VarId f, const SpatialAttentionVars& p) {
  VarId planes = concat_channels(t, channel_pool(t, f, PoolKind::Avg),
                                 channel_pool(t, f, PoolKind::Max));
  VarId logits = conv2d(t, planes, p.kernel, 1, (p.k - 1) / 2, p.bias);
  return sigmoid(t, logits);
}

VarId cbam_forward(Tape& t, VarId f, const CBAMVars& p) {
  VarId mc = channel_attention(t, f, p.channel);
  VarId refined = broadcast_mul(t, mc, f);
  VarId ms = spatial_attention(t, refined, p.spatial);
  return broadcast_mul(t, ms, refined);
}

VarId fused_concat_attention(Tape& t, VarId f, VarId seg, const ChannelAttentionVars& p) {
  const Tensor& sv = t.value(seg);
  if (sv.rank() != 3 || sv.extent(2) != 1) {
    throw std::invalid_argument(detail::cat("fused_concat_attention: segmentation map must be ",
                                            "(W, H, 1), got ", sv.shape_str()));
  }
  for (std::size_t i = 0; i < sv.size(); ++i) {
    if (sv[i] < 0.0 || sv[i] > 1.0) {
      throw std::invalid_argument("fused_concat_attention: segmentation values must be in [0, 1]");
    }
  }
  VarId cat = concat_channels(t, f, seg);
  VarId mc = channel_attention(t, cat, p);
  return broadcast_mul(t, mc, cat);
}

}  // namespace ad

namespace {

template <class Fn>
Tensor eval_pure(Fn&& record) {
  Tape t(false);
  ad::VarId out = record(t);
  return t.value(out);
}

}  // namespace

Tensor channel_attention(const Tensor& f, const ChannelAttentionParams& p) {
  return eval_pure([&](Tape& t) { return ad::channel_attention(t, t.leaf(f), watch(t, p)); });
}

Tensor spatial_attention(const Tensor& f, const SpatialAttentionParams& p) {
  return eval_pure([&](Tape& t) { return ad::spatial_attention(t, t.leaf(f), watch(t, p)); });
}

Tensor cbam_forward(const Tensor& f, const CBAMParams& p) {
  return eval_pure([&](Tape& t) { return ad::cbam_forward(t, t.leaf(f), watch(t, p)); });
}

Tensor fused_concat_attention(const Tensor& f, const Tensor& seg,
                              const ChannelAttentionParams& p) {
  return eval_pure(
      [&](Tape& t) { return ad::fused_concat_attention(t, t.leaf(f), t.leaf(seg), watch(t, p)); });
}

}  // namespace yffn
