#include "yffn/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "yffn/common.hpp"

namespace yffn {

namespace {

constexpr double kBnEps = 1e-5;

ConvBnParams cbs_structure(int k, int cin, int cout, int stride, int padding) {
  ConvBnParams p;
  p.kernel = Tensor::zeros({k, k, cin, cout});
  p.bias = Tensor::zeros({cout});
  p.bn_mean = Tensor::zeros({cout});
  p.bn_var = Tensor::full({cout}, 1.0);
  p.bn_gamma = Tensor::full({cout}, 1.0);
  p.bn_beta = Tensor::zeros({cout});
  p.stride = stride;
  p.padding = padding;
  return p;
}

CBAMParams cbam_structure(int channels) {
  CBAMParams p;
  const int r = pick_reduction(channels);
  p.channel.reduction = r;
  p.channel.w1 = Tensor::zeros({channels, channels / r});
  p.channel.b1 = Tensor::zeros({channels / r});
  p.channel.w2 = Tensor::zeros({channels / r, channels});
  p.channel.b2 = Tensor::zeros({channels});
  p.spatial.kernel = Tensor::zeros({7, 7, 2, 1});
  p.spatial.bias = Tensor::zeros({1});
  return p;
}

ChannelAttentionParams attn_structure(int channels) {
  ChannelAttentionParams p;
  const int r = pick_reduction(channels);
  p.reduction = r;
  p.w1 = Tensor::zeros({channels, channels / r});
  p.b1 = Tensor::zeros({channels / r});
  p.w2 = Tensor::zeros({channels / r, channels});
  p.b2 = Tensor::zeros({channels});
  return p;
}

C3Params c3_structure(int cin, int cout) {
  if (cout % 2 != 0) {
    throw std::invalid_argument(detail::cat("c3 output channels must be even, got ", cout));
  }
  const int ch = cout / 2;
  C3Params p;
  p.cv1 = cbs_structure(1, cin, ch, 1, 0);
  p.cv2 = cbs_structure(1, cin, ch, 1, 0);
  p.cv3 = cbs_structure(1, 2 * ch, cout, 1, 0);
  p.bottleneck.cv1 = cbs_structure(1, ch, ch, 1, 0);
  p.bottleneck.cv2 = cbs_structure(3, ch, ch, 1, 1);
  p.bottleneck.cbam = cbam_structure(ch);
  return p;
}

int seg_width(const NetworkConfig& cfg) { return std::max(2, cfg.base_channels / 2); }

template <class Params, class Fn>
void visit_cbs(Params& p, const std::string& prefix, Fn&& fn) {
  fn(prefix + ".kernel", p.kernel);
  fn(prefix + ".bias", p.bias);
  fn(prefix + ".bn_mean", p.bn_mean);
  fn(prefix + ".bn_var", p.bn_var);
  fn(prefix + ".bn_gamma", p.bn_gamma);
  fn(prefix + ".bn_beta", p.bn_beta);
}

template <class Params, class Fn>
void visit_attn(Params& p, const std::string& prefix, Fn&& fn) {
  fn(prefix + ".w1", p.w1);
  fn(prefix + ".b1", p.b1);
  fn(prefix + ".w2", p.w2);
  fn(prefix + ".b2", p.b2);
}

template <class Params, class Fn>
void visit_cbam(Params& p, const std::string& prefix, Fn&& fn) {
  visit_attn(p.channel, prefix + ".channel", fn);
  fn(prefix + ".spatial.kernel", p.spatial.kernel);
  fn(prefix + ".spatial.bias", p.spatial.bias);
}

template <class Params, class Fn>
void visit_c3(Params& p, const std::string& prefix, Fn&& fn) {
  visit_cbs(p.cv1, prefix + ".cv1", fn);
  visit_cbs(p.cv2, prefix + ".cv2", fn);
  visit_cbs(p.cv3, prefix + ".cv3", fn);
  visit_cbs(p.bottleneck.cv1, prefix + ".bottleneck.cv1", fn);
  visit_cbs(p.bottleneck.cv2, prefix + ".bottleneck.cv2", fn);
  visit_cbam(p.bottleneck.cbam, prefix + ".bottleneck.cbam", fn);
}

template <class Model, class Fn>
void visit_model(Model& m, Fn&& fn) {
  visit_cbs(m.backbone.stem, "backbone.stem", fn);
  visit_cbs(m.backbone.down2, "backbone.down2", fn);
  visit_cbs(m.backbone.down3, "backbone.down3", fn);
  visit_cbs(m.backbone.down4, "backbone.down4", fn);
  visit_cbs(m.backbone.down5, "backbone.down5", fn);
  visit_c3(m.backbone.c3_p3, "backbone.c3_p3", fn);
  visit_c3(m.backbone.c3_p4, "backbone.c3_p4", fn);
  visit_c3(m.backbone.c3_p5, "backbone.c3_p5", fn);
  visit_cbs(m.backbone.sppf.cv1, "backbone.sppf.cv1", fn);
  visit_cbs(m.backbone.sppf.cv2, "backbone.sppf.cv2", fn);
  fn("seg.conv1_kernel", m.seg.conv1_kernel);
  fn("seg.conv1_bias", m.seg.conv1_bias);
  fn("seg.conv2_kernel", m.seg.conv2_kernel);
  fn("seg.conv2_bias", m.seg.conv2_bias);
  visit_cbs(m.neck.reduce5, "neck.reduce5", fn);
  visit_cbs(m.neck.reduce4, "neck.reduce4", fn);
  visit_c3(m.neck.td4, "neck.td4", fn);
  visit_cbs(m.neck.down3, "neck.down3", fn);
  visit_cbs(m.neck.down4, "neck.down4", fn);
  visit_attn(m.neck.fuse3.attn, "neck.fuse3.attn", fn);
  visit_c3(m.neck.fuse3.out_c3, "neck.fuse3.out_c3", fn);
  visit_attn(m.neck.fuse4.attn, "neck.fuse4.attn", fn);
  visit_c3(m.neck.fuse4.out_c3, "neck.fuse4.out_c3", fn);
  visit_attn(m.neck.fuse5.attn, "neck.fuse5.attn", fn);
  visit_c3(m.neck.fuse5.out_c3, "neck.fuse5.out_c3", fn);
  fn("head.k8", m.head.k8);
  fn("head.b8", m.head.b8);
  fn("head.k16", m.head.k16);
  fn("head.b16", m.head.b16);
  fn("head.k32", m.head.k32);
  fn("head.b32", m.head.b32);
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

void NetworkConfig::validate() const {
  if (input_size < 32 || input_size % 32 != 0) {
    throw std::invalid_argument(detail::cat("input_size must be a positive multiple of 32, got ",
                                            input_size));
  }
  if (base_channels < 1) {
    throw std::invalid_argument(detail::cat("base_channels must be >= 1, got ", base_channels));
  }
  if (anchors_per_scale < 1) {
    throw std::invalid_argument("anchors_per_scale must be >= 1");
  }
  if (class_count < 1) {
    throw std::invalid_argument("class_count must be >= 1");
  }
}

ModelParams ModelParams::structure(const NetworkConfig& config) {
  config.validate();
  const int b = config.base_channels;
  ModelParams m;
  m.config = config;

  m.backbone.stem = cbs_structure(3, 3, b, 2, 1);
  m.backbone.down2 = cbs_structure(3, b, 2 * b, 2, 1);
  m.backbone.down3 = cbs_structure(3, 2 * b, 4 * b, 2, 1);
  m.backbone.down4 = cbs_structure(3, 4 * b, 8 * b, 2, 1);
  m.backbone.down5 = cbs_structure(3, 8 * b, 16 * b, 2, 1);
  m.backbone.c3_p3 = c3_structure(4 * b, 4 * b);
  m.backbone.c3_p4 = c3_structure(8 * b, 8 * b);
  m.backbone.c3_p5 = c3_structure(16 * b, 16 * b);
  m.backbone.sppf.cv1 = cbs_structure(1, 16 * b, 8 * b, 1, 0);
  m.backbone.sppf.cv2 = cbs_structure(1, 32 * b, 16 * b, 1, 0);

  const int sw = seg_width(config);
  m.seg.conv1_kernel = Tensor::zeros({3, 3, 3, sw});
  m.seg.conv1_bias = Tensor::zeros({sw});
  m.seg.conv2_kernel = Tensor::zeros({3, 3, sw, 1});
  m.seg.conv2_bias = Tensor::zeros({1});

  m.neck.reduce5 = cbs_structure(1, 16 * b, 8 * b, 1, 0);
  m.neck.td4 = c3_structure(16 * b, 8 * b);
  m.neck.reduce4 = cbs_structure(1, 8 * b, 4 * b, 1, 0);
  m.neck.down3 = cbs_structure(3, 4 * b, 4 * b, 2, 1);
  m.neck.down4 = cbs_structure(3, 8 * b, 8 * b, 2, 1);
  m.neck.fuse3.attn = attn_structure(8 * b + 1);
  m.neck.fuse3.out_c3 = c3_structure(8 * b + 1, 4 * b);
  m.neck.fuse4.attn = attn_structure(8 * b + 1);
  m.neck.fuse4.out_c3 = c3_structure(8 * b + 1, 8 * b);
  m.neck.fuse5.attn = attn_structure(16 * b + 1);
  m.neck.fuse5.out_c3 = c3_structure(16 * b + 1, 16 * b);

  const int hc = config.head_channels();
  m.head.k8 = Tensor::zeros({1, 1, 4 * b, hc});
  m.head.b8 = Tensor::zeros({hc});
  m.head.k16 = Tensor::zeros({1, 1, 8 * b, hc});
  m.head.b16 = Tensor::zeros({hc});
  m.head.k32 = Tensor::zeros({1, 1, 16 * b, hc});
  m.head.b32 = Tensor::zeros({hc});
  return m;
}

ModelParams ModelParams::seeded(const NetworkConfig& config, std::uint64_t seed) {
  ModelParams m = structure(config);
  for_each_tensor(m, [seed](const std::string& name, Tensor& t) {
    Rng rng(seed ^ fnv1a64(name));
    if (ends_with(name, "bn_var")) {
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(0.75, 1.25);
    } else if (ends_with(name, "bn_gamma")) {
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(0.75, 1.25);
    } else if (t.rank() >= 2) {
      // fan-in for (k, k, cin, cout) kernels and (cin, cout) dense weights
      double fan_in = 1.0;
      for (int a = 0; a < t.rank() - 1; ++a) fan_in *= t.extent(a);
      const double scale = 1.0 / std::sqrt(fan_in);
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-0.5, 0.5) * scale;
    } else {
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-0.1, 0.1);
    }
  });
  return m;
}

void for_each_tensor(ModelParams& params,
                     const std::function<void(const std::string&, Tensor&)>& fn) {
  visit_model(params, fn);
}

void for_each_tensor(const ModelParams& params,
                     const std::function<void(const std::string&, const Tensor&)>& fn) {
  visit_model(params, fn);
}

ConvBnVars watch(Tape& t, const ConvBnParams& p) {
  return {t.leaf(p.kernel),  t.leaf(p.bias),     t.leaf(p.bn_mean), t.leaf(p.bn_var),
          t.leaf(p.bn_gamma), t.leaf(p.bn_beta), p.stride,          p.padding};
}

C3Vars watch(Tape& t, const C3Params& p) {
  return {watch(t, p.cv1),
          watch(t, p.cv2),
          watch(t, p.cv3),
          {watch(t, p.bottleneck.cv1), watch(t, p.bottleneck.cv2), watch(t, p.bottleneck.cbam)}};
}

SppfVars watch(Tape& t, const SppfParams& p) { return {watch(t, p.cv1), watch(t, p.cv2)}; }

ModelVars watch(Tape& t, const ModelParams& p) {
  ModelVars v;
  v.backbone = {watch(t, p.backbone.stem),  watch(t, p.backbone.down2),
                watch(t, p.backbone.down3), watch(t, p.backbone.down4),
                watch(t, p.backbone.down5), watch(t, p.backbone.c3_p3),
                watch(t, p.backbone.c3_p4), watch(t, p.backbone.c3_p5),
                watch(t, p.backbone.sppf)};
  v.seg = {t.leaf(p.seg.conv1_kernel), t.leaf(p.seg.conv1_bias), t.leaf(p.seg.conv2_kernel),
           t.leaf(p.seg.conv2_bias)};
  v.neck = {watch(t, p.neck.reduce5),
            watch(t, p.neck.reduce4),
            watch(t, p.neck.td4),
            watch(t, p.neck.down3),
            watch(t, p.neck.down4),
            {watch(t, p.neck.fuse3.attn), watch(t, p.neck.fuse3.out_c3)},
            {watch(t, p.neck.fuse4.attn), watch(t, p.neck.fuse4.out_c3)},
            {watch(t, p.neck.fuse5.attn), watch(t, p.neck.fuse5.out_c3)}};
  v.head = {t.leaf(p.head.k8),  t.leaf(p.head.b8),  t.leaf(p.head.k16),
            t.leaf(p.head.b16), t.leaf(p.head.k32), t.leaf(p.head.b32)};
  return v;
}

namespace ad {

VarId cbs_forward(Tape& t, VarId x, const ConvBnVars& p) {
  VarId y = conv2d(t, x, p.kernel, p.stride, p.padding, p.bias);
  y = batch_norm_inference(t, y, p.bn_mean, p.bn_var, p.bn_gamma, p.bn_beta, kBnEps);
  return silu(t, y);
}

VarId c3_forward(Tape& t, VarId x, const C3Vars& p, bool with_cbam) {
  VarId split = cbs_forward(t, x, p.cv1);
  VarId bypass = cbs_forward(t, x, p.cv2);
  VarId m = cbs_forward(t, split, p.bottleneck.cv1);
  m = cbs_forward(t, m, p.bottleneck.cv2);
  if (with_cbam) m = cbam_forward(t, m, p.bottleneck.cbam);
  m = add(t, m, split);  // residual around the bottleneck convs
  return cbs_forward(t, concat_channels(t, m, bypass), p.cv3);
}

VarId sppf_forward(Tape& t, VarId x, const SppfVars& p) {
  VarId a = cbs_forward(t, x, p.cv1);
  VarId p1 = pool2d(t, a, PoolKind::Max, 5, 1, 2);
  VarId p2 = pool2d(t, p1, PoolKind::Max, 5, 1, 2);
  VarId p3 = pool2d(t, p2, PoolKind::Max, 5, 1, 2);
  VarId cat = concat_channels(t, concat_channels(t, a, p1), concat_channels(t, p2, p3));
  return cbs_forward(t, cat, p.cv2);
}

PyramidVars backbone_forward(Tape& t, VarId x, const BackboneVars& p, const NetworkConfig& cfg) {
  const Tensor& xv = t.value(x);
  if (xv.rank() != 3 || xv.extent(0) != cfg.input_size || xv.extent(1) != cfg.input_size ||
      xv.extent(2) != 3) {
    throw std::invalid_argument(detail::cat("backbone: input must be (", cfg.input_size, ", ",
                                            cfg.input_size, ", 3), got ", xv.shape_str()));
  }
  VarId d1 = cbs_forward(t, x, p.stem);
  VarId d2 = cbs_forward(t, d1, p.down2);
  VarId d3 = cbs_forward(t, d2, p.down3);
  VarId p3 = c3_forward(t, d3, p.c3_p3, false);
  VarId d4 = cbs_forward(t, p3, p.down4);
  VarId p4 = c3_forward(t, d4, p.c3_p4, false);
  VarId d5 = cbs_forward(t, p4, p.down5);
  VarId p5 = sppf_forward(t, c3_forward(t, d5, p.c3_p5, false), p.sppf);
  return {p3, p4, p5};
}

VarId seg_branch_forward(Tape& t, VarId x, const SegBranchVars& p) {
  const Tensor& xv = t.value(x);
  if (xv.rank() != 3 || xv.extent(0) != xv.extent(1) || xv.extent(2) != 3) {
    throw std::invalid_argument(detail::cat("seg branch: input must be square (S, S, 3), got ",
                                            xv.shape_str()));
  }
  VarId y = silu(t, conv2d(t, x, p.conv1_kernel, 1, 1, p.conv1_bias));
  return sigmoid(t, conv2d(t, y, p.conv2_kernel, 1, 1, p.conv2_bias));
}

std::array<VarId, 3> neck_forward(Tape& t, const PyramidVars& pyr, VarId seg, const NeckVars& p,
                                  const NetworkConfig& cfg) {
  const int s = cfg.input_size;
  const Tensor& segv = t.value(seg);
  if (segv.rank() != 3 || segv.extent(0) != s || segv.extent(1) != s || segv.extent(2) != 1) {
    throw std::invalid_argument(detail::cat("neck: segmentation map must be (", s, ", ", s,
                                            ", 1), got ", segv.shape_str()));
  }
  auto expect = [&](VarId v, int grid, int channels, const char* where) {
    const Tensor& tv = t.value(v);
    if (tv.extent(0) != grid || tv.extent(1) != grid || tv.extent(2) != channels) {
      throw std::invalid_argument(detail::cat("neck.", where, ": expected (", grid, ", ", grid,
                                              ", ", channels, "), got ", tv.shape_str()));
    }
  };
  const int b = cfg.base_channels;
  expect(pyr.p3, cfg.grid(8), 4 * b, "p3");
  expect(pyr.p4, cfg.grid(16), 8 * b, "p4");
  expect(pyr.p5, cfg.grid(32), 16 * b, "p5");

  // top-down
  VarId r5 = cbs_forward(t, pyr.p5, p.reduce5);
  VarId t4 = c3_forward(t, concat_channels(t, upsample_nearest(t, r5, 2), pyr.p4), p.td4, false);
  VarId r4 = cbs_forward(t, t4, p.reduce4);
  VarId cat3 = concat_channels(t, upsample_nearest(t, r4, 2), pyr.p3);

  // per-scale segmentation injection, then the CBAM-carrying output block
  auto fuse = [&](VarId features, int stride, const FusePointVars& fp, const char* where) {
    VarId seg_scaled = pool2d(t, seg, PoolKind::Avg, stride, stride, 0);
    try {
      VarId attended = fused_concat_attention(t, features, seg_scaled, fp.attn);
      return c3_forward(t, attended, fp.out_c3, true);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(detail::cat("neck.", where, ": ", e.what()));
    }
  };

  VarId out3 = fuse(cat3, 8, p.fuse3, "fuse3");

  // bottom-up
  VarId cat4 = concat_channels(t, cbs_forward(t, out3, p.down3), r4);
  VarId out4 = fuse(cat4, 16, p.fuse4, "fuse4");
  VarId cat5 = concat_channels(t, cbs_forward(t, out4, p.down4), r5);
  VarId out5 = fuse(cat5, 32, p.fuse5, "fuse5");

  return {out3, out4, out5};
}

std::array<VarId, 3> head_forward(Tape& t, const std::array<VarId, 3>& fused, const HeadVars& p) {
  return {conv2d(t, fused[0], p.k8, 1, 0, p.b8), conv2d(t, fused[1], p.k16, 1, 0, p.b16),
          conv2d(t, fused[2], p.k32, 1, 0, p.b32)};
}

std::array<VarId, 3> full_forward(Tape& t, VarId x, const ModelVars& vars,
                                  const NetworkConfig& cfg) {
  auto stage = [](const char* name, auto&& fn) {
    try {
      return fn();
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(detail::cat("full_forward[", name, "]: ", e.what()));
    }
  };
  PyramidVars pyr = stage("backbone", [&] { return backbone_forward(t, x, vars.backbone, cfg); });
  VarId seg = stage("seg", [&] { return seg_branch_forward(t, x, vars.seg); });
  std::array<VarId, 3> fused =
      stage("neck", [&] { return neck_forward(t, pyr, seg, vars.neck, cfg); });
  return stage("head", [&] { return head_forward(t, fused, vars.head); });
}

}  // namespace ad

Tensor cbs_forward(const Tensor& x, const ConvBnParams& p) {
  Tape t(false);
  return t.value(ad::cbs_forward(t, t.leaf(x), watch(t, p)));
}

Tensor c3_forward(const Tensor& x, const C3Params& p, bool with_cbam) {
  Tape t(false);
  return t.value(ad::c3_forward(t, t.leaf(x), watch(t, p), with_cbam));
}

Tensor sppf_forward(const Tensor& x, const SppfParams& p) {
  Tape t(false);
  return t.value(ad::sppf_forward(t, t.leaf(x), watch(t, p)));
}

FeaturePyramid backbone_forward(const Tensor& x, const BackboneParams& p,
                                const NetworkConfig& cfg) {
  Tape t(false);
  BackboneVars vars = {watch(t, p.stem),  watch(t, p.down2), watch(t, p.down3),
                       watch(t, p.down4), watch(t, p.down5), watch(t, p.c3_p3),
                       watch(t, p.c3_p4), watch(t, p.c3_p5), watch(t, p.sppf)};
  ad::PyramidVars out = ad::backbone_forward(t, t.leaf(x), vars, cfg);
  return {t.value(out.p3), t.value(out.p4), t.value(out.p5)};
}

SegMap seg_branch_forward(const Tensor& x, const SegBranchParams& p) {
  Tape t(false);
  SegBranchVars vars = {t.leaf(p.conv1_kernel), t.leaf(p.conv1_bias), t.leaf(p.conv2_kernel),
                        t.leaf(p.conv2_bias)};
  return {t.value(ad::seg_branch_forward(t, t.leaf(x), vars))};
}

std::array<Tensor, 3> neck_forward(const FeaturePyramid& pyr, const SegMap& seg,
                                   const NeckParams& p, const NetworkConfig& cfg) {
  Tape t(false);
  NeckVars vars = {watch(t, p.reduce5),
                   watch(t, p.reduce4),
                   watch(t, p.td4),
                   watch(t, p.down3),
                   watch(t, p.down4),
                   {watch(t, p.fuse3.attn), watch(t, p.fuse3.out_c3)},
                   {watch(t, p.fuse4.attn), watch(t, p.fuse4.out_c3)},
                   {watch(t, p.fuse5.attn), watch(t, p.fuse5.out_c3)}};
  ad::PyramidVars pv = {t.leaf(pyr.p3), t.leaf(pyr.p4), t.leaf(pyr.p5)};
  std::array<ad::VarId, 3> out = ad::neck_forward(t, pv, t.leaf(seg.map), vars, cfg);
  return {t.value(out[0]), t.value(out[1]), t.value(out[2])};
}

HeadOutput head_forward(const std::array<Tensor, 3>& fused, const HeadParams& p) {
  Tape t(false);
  HeadVars vars = {t.leaf(p.k8),  t.leaf(p.b8),  t.leaf(p.k16),
                   t.leaf(p.b16), t.leaf(p.k32), t.leaf(p.b32)};
  std::array<ad::VarId, 3> out =
      ad::head_forward(t, {t.leaf(fused[0]), t.leaf(fused[1]), t.leaf(fused[2])}, vars);
  return {t.value(out[0]), t.value(out[1]), t.value(out[2])};
}

HeadOutput full_forward(const Tensor& x, const ModelParams& params) {
  Tape t(false);
  ModelVars vars = watch(t, params);
  std::array<ad::VarId, 3> out = ad::full_forward(t, t.leaf(x), vars, params.config);
  return {t.value(out[0]), t.value(out[1]), t.value(out[2])};
}

}  // namespace yffn
