#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>

#include "yffn/attention.hpp"
#include "yffn/autograd.hpp"
#include "yffn/tensor.hpp"

namespace yffn {

/// Toy-scale configuration. The pyramid strides are fixed at {8, 16, 32};
/// channel widths derive from base_channels.
struct NetworkConfig {
  int input_size = 64;
  int base_channels = 8;
  int anchors_per_scale = 3;
  int class_count = 1;

  static constexpr std::array<int, 3> strides{8, 16, 32};

  int c3() const { return base_channels * 4; }
  int c4() const { return base_channels * 8; }
  int c5() const { return base_channels * 16; }
  int head_channels() const { return anchors_per_scale * (5 + class_count); }
  int grid(int stride) const { return input_size / stride; }

  void validate() const;
};

struct FeaturePyramid {
  Tensor p3, p4, p5;  // strides 8, 16, 32
};

struct SegMap {
  Tensor map;  // (S, S, 1), values in [0, 1]
};

struct HeadOutput {
  Tensor s8, s16, s32;  // (S/s, S/s, A*(5+K)) raw predictions per scale
};

/// Convolution + batch norm + SiLU. Stride/padding are structural and set by
/// the model builder, not stored in checkpoints.
struct ConvBnParams {
  Tensor kernel, bias, bn_mean, bn_var, bn_gamma, bn_beta;
  int stride = 1;
  int padding = 0;
};

struct BottleneckParams {
  ConvBnParams cv1, cv2;  // 1x1 then 3x3, residual add around them
  CBAMParams cbam;        // applied to the conv stack output when enabled
};

struct C3Params {
  ConvBnParams cv1, cv2, cv3;  // split, bypass, merge
  BottleneckParams bottleneck;
};

struct SppfParams {
  ConvBnParams cv1, cv2;  // reduce, then merge the four pooled stages
};

struct BackboneParams {
  ConvBnParams stem, down2, down3, down4, down5;
  C3Params c3_p3, c3_p4, c3_p5;
  SppfParams sppf;
};

/// Small conv stack ending in a sigmoid; stands in for the camouflage
/// segmentation branch, honoring only its output contract.
struct SegBranchParams {
  Tensor conv1_kernel, conv1_bias;  // 3x3, 3 -> width
  Tensor conv2_kernel, conv2_bias;  // 3x3, width -> 1
};

struct FusePointParams {
  ChannelAttentionParams attn;  // over C+1 channels after seg concat
  C3Params out_c3;              // CBAM-carrying output block
};

struct NeckParams {
  ConvBnParams reduce5, reduce4;  // 1x1 lateral reductions (top-down)
  C3Params td4;                   // top-down merge at stride 16
  ConvBnParams down3, down4;      // 3x3 stride-2 (bottom-up)
  FusePointParams fuse3, fuse4, fuse5;
};

struct HeadParams {
  Tensor k8, b8, k16, b16, k32, b32;  // 1x1 conv + bias per scale
};

/// Complete parameter set; a loaded checkpoint materializes as this struct.
struct ModelParams {
  NetworkConfig config;
  BackboneParams backbone;
  SegBranchParams seg;
  NeckParams neck;
  HeadParams head;

  /// Zero-valued tensors with the correct shapes for `config` (bn_var = 1 so
  /// normalization stays well-defined).
  static ModelParams structure(const NetworkConfig& config);

  /// Deterministic random initialization; weights are fan-in scaled so
  /// activations stay O(1) through the toy depth.
  static ModelParams seeded(const NetworkConfig& config, std::uint64_t seed);
};

/// Visits every parameter tensor in a fixed declaration order with a stable
/// hierarchical name; the order defines the checkpoint layout.
void for_each_tensor(ModelParams& params,
                     const std::function<void(const std::string&, Tensor&)>& fn);
void for_each_tensor(const ModelParams& params,
                     const std::function<void(const std::string&, const Tensor&)>& fn);

// Tape-side parameter handles, mirroring the param structs.
struct ConvBnVars {
  ad::VarId kernel, bias, bn_mean, bn_var, bn_gamma, bn_beta;
  int stride, padding;
};
struct BottleneckVars {
  ConvBnVars cv1, cv2;
  CBAMVars cbam;
};
struct C3Vars {
  ConvBnVars cv1, cv2, cv3;
  BottleneckVars bottleneck;
};
struct SppfVars {
  ConvBnVars cv1, cv2;
};
struct BackboneVars {
  ConvBnVars stem, down2, down3, down4, down5;
  C3Vars c3_p3, c3_p4, c3_p5;
  SppfVars sppf;
};
struct SegBranchVars {
  ad::VarId conv1_kernel, conv1_bias, conv2_kernel, conv2_bias;
};
struct FusePointVars {
  ChannelAttentionVars attn;
  C3Vars out_c3;
};
struct NeckVars {
  ConvBnVars reduce5, reduce4;
  C3Vars td4;
  ConvBnVars down3, down4;
  FusePointVars fuse3, fuse4, fuse5;
};
struct HeadVars {
  ad::VarId k8, b8, k16, b16, k32, b32;
};
struct ModelVars {
  BackboneVars backbone;
  SegBranchVars seg;
  NeckVars neck;
  HeadVars head;
};

ConvBnVars watch(Tape& t, const ConvBnParams& p);
C3Vars watch(Tape& t, const C3Params& p);
SppfVars watch(Tape& t, const SppfParams& p);
ModelVars watch(Tape& t, const ModelParams& p);

namespace ad {

VarId cbs_forward(Tape& t, VarId x, const ConvBnVars& p);
VarId c3_forward(Tape& t, VarId x, const C3Vars& p, bool with_cbam);
VarId sppf_forward(Tape& t, VarId x, const SppfVars& p);

struct PyramidVars {
  VarId p3, p4, p5;
};

PyramidVars backbone_forward(Tape& t, VarId x, const BackboneVars& p, const NetworkConfig& cfg);
VarId seg_branch_forward(Tape& t, VarId x, const SegBranchVars& p);
std::array<VarId, 3> neck_forward(Tape& t, const PyramidVars& pyr, VarId seg, const NeckVars& p,
                                  const NetworkConfig& cfg);
std::array<VarId, 3> head_forward(Tape& t, const std::array<VarId, 3>& fused, const HeadVars& p);
std::array<VarId, 3> full_forward(Tape& t, VarId x, const ModelVars& vars,
                                  const NetworkConfig& cfg);

}  // namespace ad

Tensor cbs_forward(const Tensor& x, const ConvBnParams& p);
Tensor c3_forward(const Tensor& x, const C3Params& p, bool with_cbam);
Tensor sppf_forward(const Tensor& x, const SppfParams& p);
FeaturePyramid backbone_forward(const Tensor& x, const BackboneParams& p,
                                const NetworkConfig& cfg);
SegMap seg_branch_forward(const Tensor& x, const SegBranchParams& p);
std::array<Tensor, 3> neck_forward(const FeaturePyramid& pyr, const SegMap& seg,
                                   const NeckParams& p, const NetworkConfig& cfg);
HeadOutput head_forward(const std::array<Tensor, 3>& fused, const HeadParams& p);
HeadOutput full_forward(const Tensor& x, const ModelParams& params);

}  // namespace yffn
