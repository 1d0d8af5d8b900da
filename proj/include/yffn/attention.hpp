#pragma once

#include <cstdint>

#include "yffn/autograd.hpp"
#include "yffn/tensor.hpp"

namespace yffn {

/// Shared two-layer MLP applied to the pooled channel descriptors:
/// mlp(d) = w2 * relu(w1 * d + b1) + b2, with w1: (C, C/r), w2: (C/r, C).
struct ChannelAttentionParams {
  int reduction = 4;
  Tensor w1, b1, w2, b2;

  int channels() const { return w1.rank() == 2 ? w1.extent(0) : 0; }
  void validate() const;

  static ChannelAttentionParams seeded(int channels, int reduction, std::uint64_t seed);
  static ChannelAttentionParams zeros(int channels, int reduction);
};

/// Conv over the stacked channel-avg/channel-max planes. The kernel is
/// (k, k, 2, 1) with odd k so same-shape padding (k-1)/2 applies.
struct SpatialAttentionParams {
  Tensor kernel, bias;

  int kernel_extent() const { return kernel.rank() == 4 ? kernel.extent(0) : 0; }
  void validate() const;

  static SpatialAttentionParams seeded(std::uint64_t seed, int k = 7);
  static SpatialAttentionParams zeros(int k = 7);
};

struct CBAMParams {
  ChannelAttentionParams channel;
  SpatialAttentionParams spatial;

  void validate() const;
  static CBAMParams seeded(int channels, int reduction, std::uint64_t seed);
};

/// Largest divisor of `channels` that is <= preferred; the reduction used for
/// attention blocks whose channel count the preferred ratio does not divide
/// (e.g. the odd C+1 counts at segmentation fusion points).
int pick_reduction(int channels, int preferred = 4);

// Tape-side parameter handles.
struct ChannelAttentionVars {
  ad::VarId w1, b1, w2, b2;
  int reduction;
};
struct SpatialAttentionVars {
  ad::VarId kernel, bias;
  int k;
};
struct CBAMVars {
  ChannelAttentionVars channel;
  SpatialAttentionVars spatial;
};

ChannelAttentionVars watch(Tape& t, const ChannelAttentionParams& p);
SpatialAttentionVars watch(Tape& t, const SpatialAttentionParams& p);
CBAMVars watch(Tape& t, const CBAMParams& p);

namespace ad {

/// M_C(F) = sigmoid(mlp(global_avg F) + mlp(global_max F)), shape (1,1,C).
VarId channel_attention(Tape& t, VarId f, const ChannelAttentionVars& p);

/// M_S(F) = sigmoid(conv_kxk(concat(channel_avg F, channel_max F))), (W,H,1).
VarId spatial_attention(Tape& t, VarId f, const SpatialAttentionVars& p);

/// F' = M_S(M_C(F) * F) * (M_C(F) * F); the spatial map is computed on the
/// channel-refined tensor.
VarId cbam_forward(Tape& t, VarId f, const CBAMVars& p);

/// F' = M_C(concat(F, seg)) * concat(F, seg); channel attention only.
VarId fused_concat_attention(Tape& t, VarId f, VarId seg, const ChannelAttentionVars& p);

}  // namespace ad

Tensor channel_attention(const Tensor& f, const ChannelAttentionParams& p);
Tensor spatial_attention(const Tensor& f, const SpatialAttentionParams& p);
Tensor cbam_forward(const Tensor& f, const CBAMParams& p);
Tensor fused_concat_attention(const Tensor& f, const Tensor& seg,
                              const ChannelAttentionParams& p);

}  // namespace yffn
