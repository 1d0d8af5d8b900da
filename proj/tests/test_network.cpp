#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "yffn/gradcheck.hpp"
#include "yffn/network.hpp"

using namespace yffn;

namespace {

NetworkConfig toy_config() {
  NetworkConfig cfg;
  cfg.input_size = 64;
  cfg.base_channels = 8;
  cfg.anchors_per_scale = 3;
  cfg.class_count = 1;
  return cfg;
}

NetworkConfig small_config() {
  NetworkConfig cfg;
  cfg.input_size = 32;
  cfg.base_channels = 4;
  return cfg;
}

double norm(const Tensor& t) {
  double acc = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) acc += t[i] * t[i];
  return std::sqrt(acc);
}

// Saturates every attention sigmoid input so both CBAM maps become 1.
void saturate_cbam(CBAMParams& p) {
  for (std::size_t i = 0; i < p.channel.w1.size(); ++i) p.channel.w1[i] = 0.0;
  for (std::size_t i = 0; i < p.channel.b1.size(); ++i) p.channel.b1[i] = 0.0;
  for (std::size_t i = 0; i < p.channel.w2.size(); ++i) p.channel.w2[i] = 0.0;
  for (std::size_t i = 0; i < p.channel.b2.size(); ++i) p.channel.b2[i] = 35.0;
  for (std::size_t i = 0; i < p.spatial.kernel.size(); ++i) p.spatial.kernel[i] = 0.0;
  p.spatial.bias[0] = 35.0;
}

}  // namespace

TEST_CASE("config validation") {
  NetworkConfig cfg = toy_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.input_size = 48;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = toy_config();
  cfg.base_channels = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("cbs_forward composes conv, norm and silu") {
  ModelParams m = ModelParams::seeded(small_config(), 900);
  const ConvBnParams& p = m.backbone.stem;
  Tensor x = random_uniform({8, 8, 3}, -1.0, 1.0, 901);

  Tensor got = cbs_forward(x, p);
  Tensor expect = silu(
      batch_norm_inference(conv2d(x, p.kernel, p.stride, p.padding, p.bias), p.bn_mean, p.bn_var,
                           p.bn_gamma, p.bn_beta, 1e-5));
  REQUIRE(got.same_shape(expect));
  CHECK(oracle::max_abs_diff(got, expect) == 0.0);

  SUBCASE("zero kernel and beta give zero output") {
    ConvBnParams z = p;
    for (std::size_t i = 0; i < z.kernel.size(); ++i) z.kernel[i] = 0.0;
    for (std::size_t i = 0; i < z.bias.size(); ++i) z.bias[i] = 0.0;
    for (std::size_t i = 0; i < z.bn_mean.size(); ++i) z.bn_mean[i] = 0.0;
    for (std::size_t i = 0; i < z.bn_beta.size(); ++i) z.bn_beta[i] = 0.0;
    Tensor y = cbs_forward(x, z);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == 0.0);
  }
}

TEST_CASE("c3_forward structure") {
  ModelParams m = ModelParams::seeded(small_config(), 910);
  const C3Params& p = m.backbone.c3_p3;
  Tensor x = random_uniform({4, 4, 16}, -1.0, 1.0, 911);

  SUBCASE("staged evaluation matches the hand-composed reference") {
    for (bool with_cbam : {false, true}) {
      Tensor got = c3_forward(x, p, with_cbam);
      Tensor split = cbs_forward(x, p.cv1);
      Tensor bypass = cbs_forward(x, p.cv2);
      Tensor mid = cbs_forward(cbs_forward(split, p.bottleneck.cv1), p.bottleneck.cv2);
      if (with_cbam) mid = cbam_forward(mid, p.bottleneck.cbam);
      Tensor expect = cbs_forward(concat_channels(add(mid, split), bypass), p.cv3);
      REQUIRE(got.same_shape(expect));
      CHECK(oracle::max_abs_diff(got, expect) == 0.0);
      CHECK(got.extent(0) == 4);  // spatial extents preserved
      CHECK(got.extent(1) == 4);
      CHECK(got.extent(2) == 16);
    }
  }

  SUBCASE("zero input with zero-bias params stays zero") {
    ModelParams z = ModelParams::structure(small_config());
    Tensor y = c3_forward(Tensor::zeros({4, 4, 16}), z.backbone.c3_p3, false);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == 0.0);
  }

  SUBCASE("saturated CBAM degenerates to the plain block") {
    C3Params sat = p;
    saturate_cbam(sat.bottleneck.cbam);
    Tensor with = c3_forward(x, sat, true);
    Tensor without = c3_forward(x, sat, false);
    CHECK(oracle::max_abs_diff(with, without) <= 1e-9);
  }
}

TEST_CASE("sppf_forward") {
  ModelParams m = ModelParams::seeded(small_config(), 920);
  const SppfParams& p = m.backbone.sppf;

  SUBCASE("matches the composed pipeline and keeps spatial extents") {
    Tensor x = random_uniform({4, 4, 64}, -1.0, 1.0, 921);
    Tensor got = sppf_forward(x, p);
    Tensor a = cbs_forward(x, p.cv1);
    Tensor p1 = pool2d(a, PoolKind::Max, 5, 1, 2);
    Tensor p2 = pool2d(p1, PoolKind::Max, 5, 1, 2);
    Tensor p3 = pool2d(p2, PoolKind::Max, 5, 1, 2);
    Tensor expect = cbs_forward(concat_channels(concat_channels(a, p1), concat_channels(p2, p3)),
                                p.cv2);
    REQUIRE(got.same_shape(expect));
    CHECK(oracle::max_abs_diff(got, expect) == 0.0);
    CHECK(got.extent(0) == 4);
    CHECK(got.extent(2) == 64);
  }

  SUBCASE("pooling a constant map preserves it up to the merge convs") {
    // constant input stays constant through chained max pools
    Tensor c = Tensor::full({4, 4, 64}, 0.3);
    Tensor a = cbs_forward(c, p.cv1);
    Tensor p1 = pool2d(a, PoolKind::Max, 5, 1, 2);
    CHECK(oracle::max_abs_diff(a, p1) == 0.0);
  }
}

TEST_CASE("backbone pyramid shapes and determinism") {
  NetworkConfig cfg = toy_config();
  ModelParams m = ModelParams::seeded(cfg, 930);
  Tensor x = random_uniform({64, 64, 3}, 0.0, 1.0, 931);

  FeaturePyramid pyr = backbone_forward(x, m.backbone, cfg);
  CHECK(pyr.p3.shape() == std::vector<int>{8, 8, 32});
  CHECK(pyr.p4.shape() == std::vector<int>{4, 4, 64});
  CHECK(pyr.p5.shape() == std::vector<int>{2, 2, 128});

  SUBCASE("zero input with zero-structure params gives a zero pyramid") {
    ModelParams z = ModelParams::structure(cfg);
    FeaturePyramid zp = backbone_forward(Tensor::zeros({64, 64, 3}), z.backbone, cfg);
    CHECK(norm(zp.p3) == 0.0);
    CHECK(norm(zp.p5) == 0.0);
  }

  SUBCASE("bitwise stable across runs") {
    FeaturePyramid again = backbone_forward(x, m.backbone, cfg);
    CHECK(oracle::max_abs_diff(pyr.p3, again.p3) == 0.0);
    CHECK(oracle::max_abs_diff(pyr.p4, again.p4) == 0.0);
    CHECK(oracle::max_abs_diff(pyr.p5, again.p5) == 0.0);
  }

  SUBCASE("wrong input size rejected before compute") {
    CHECK_THROWS_WITH_AS(backbone_forward(Tensor::zeros({32, 32, 3}), m.backbone, cfg),
                         doctest::Contains("backbone"), std::invalid_argument);
  }
}

TEST_CASE("segmentation branch contract") {
  NetworkConfig cfg = toy_config();
  ModelParams m = ModelParams::seeded(cfg, 940);

  SUBCASE("zero parameters give the constant 0.5 map") {
    ModelParams z = ModelParams::structure(cfg);
    SegMap s = seg_branch_forward(Tensor::zeros({64, 64, 3}), z.seg);
    REQUIRE(s.map.shape() == std::vector<int>{64, 64, 1});
    for (std::size_t i = 0; i < s.map.size(); ++i) CHECK(s.map[i] == 0.5);
  }

  SUBCASE("range stays inside [0,1] and output is reproducible") {
    Tensor x = random_uniform({64, 64, 3}, -2.0, 2.0, 941);
    SegMap a = seg_branch_forward(x, m.seg);
    SegMap b = seg_branch_forward(x, m.seg);
    CHECK(oracle::max_abs_diff(a.map, b.map) == 0.0);
    for (std::size_t i = 0; i < a.map.size(); ++i) {
      CHECK(a.map[i] > 0.0);
      CHECK(a.map[i] < 1.0);
    }
  }
}

TEST_CASE("seg map range survives average-pool downsampling to every scale") {
  NetworkConfig cfg = toy_config();
  ModelParams m = ModelParams::seeded(cfg, 945);
  Tensor x = random_uniform({64, 64, 3}, -3.0, 3.0, 946);
  SegMap seg = seg_branch_forward(x, m.seg);
  for (int stride : NetworkConfig::strides) {
    Tensor scaled = pool2d(seg.map, PoolKind::Avg, stride, stride, 0);
    CHECK(scaled.extent(0) == 64 / stride);
    for (std::size_t i = 0; i < scaled.size(); ++i) {
      CHECK(scaled[i] >= 0.0);
      CHECK(scaled[i] <= 1.0);
    }
  }
}

TEST_CASE("neck output shapes and segmentation liveness") {
  NetworkConfig cfg = toy_config();
  ModelParams m = ModelParams::seeded(cfg, 950);
  Tensor x = random_uniform({64, 64, 3}, 0.0, 1.0, 951);
  FeaturePyramid pyr = backbone_forward(x, m.backbone, cfg);

  SegMap zeros{Tensor::zeros({64, 64, 1})};
  SegMap ones{Tensor::full({64, 64, 1}, 1.0)};

  std::array<Tensor, 3> out0 = neck_forward(pyr, zeros, m.neck, cfg);
  CHECK(out0[0].shape() == std::vector<int>{8, 8, 32});
  CHECK(out0[1].shape() == std::vector<int>{4, 4, 64});
  CHECK(out0[2].shape() == std::vector<int>{2, 2, 128});

  std::array<Tensor, 3> out1 = neck_forward(pyr, ones, m.neck, cfg);
  const double delta = std::abs(norm(out0[0]) - norm(out1[0])) +
                       std::abs(norm(out0[1]) - norm(out1[1])) +
                       std::abs(norm(out0[2]) - norm(out1[2]));
  CHECK(delta > 0.0);  // flipping the seg map changes the outputs

  SUBCASE("fusion-point name appears in shape diagnostics") {
    SegMap bad{Tensor::full({32, 32, 1}, 0.5)};
    CHECK_THROWS_WITH_AS(neck_forward(pyr, bad, m.neck, cfg), doctest::Contains("neck"),
                         std::invalid_argument);

    // a parameter mismatch deeper in the pass names its fusion point
    ModelParams broken = m;
    broken.neck.fuse4.attn = ChannelAttentionParams::seeded(6, 2, 99);
    CHECK_THROWS_WITH_AS(neck_forward(pyr, ones, broken.neck, cfg),
                         doctest::Contains("neck.fuse4"), std::invalid_argument);
  }
}

TEST_CASE("head output channels follow A*(5+K)") {
  NetworkConfig cfg = toy_config();
  ModelParams m = ModelParams::seeded(cfg, 960);
  CHECK(cfg.head_channels() == 18);

  NetworkConfig one = cfg;
  one.anchors_per_scale = 1;
  one.class_count = 1;
  CHECK(one.head_channels() == 6);

  Tensor x = random_uniform({64, 64, 3}, 0.0, 1.0, 961);
  HeadOutput out = full_forward(x, m);
  CHECK(out.s8.shape() == std::vector<int>{8, 8, 18});
  CHECK(out.s16.shape() == std::vector<int>{4, 4, 18});
  CHECK(out.s32.shape() == std::vector<int>{2, 2, 18});

  SUBCASE("zero head params give zero raw predictions") {
    ModelParams zhead = m;
    for (Tensor* t : {&zhead.head.k8, &zhead.head.b8, &zhead.head.k16, &zhead.head.b16,
                      &zhead.head.k32, &zhead.head.b32}) {
      for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] = 0.0;
    }
    HeadOutput z = full_forward(x, zhead);
    CHECK(norm(z.s8) == 0.0);
    CHECK(norm(z.s16) == 0.0);
    CHECK(norm(z.s32) == 0.0);
  }

  SUBCASE("head is a per-scale 1x1 convolution") {
    FeaturePyramid pyr = backbone_forward(x, m.backbone, cfg);
    SegMap seg = seg_branch_forward(x, m.seg);
    std::array<Tensor, 3> fused = neck_forward(pyr, seg, m.neck, cfg);
    HeadOutput h = head_forward(fused, m.head);
    CHECK(oracle::max_abs_diff(h.s8, conv2d(fused[0], m.head.k8, 1, 0, m.head.b8)) == 0.0);
    CHECK(oracle::max_abs_diff(h.s32, conv2d(fused[2], m.head.k32, 1, 0, m.head.b32)) == 0.0);
  }
}

TEST_CASE("full_forward is deterministic and stage errors carry the stage name") {
  NetworkConfig cfg = toy_config();
  ModelParams m = ModelParams::seeded(cfg, 970);
  Tensor x = random_uniform({64, 64, 3}, 0.0, 1.0, 971);

  HeadOutput a = full_forward(x, m);
  HeadOutput b = full_forward(x, m);
  CHECK(oracle::max_abs_diff(a.s8, b.s8) == 0.0);
  CHECK(oracle::max_abs_diff(a.s16, b.s16) == 0.0);
  CHECK(oracle::max_abs_diff(a.s32, b.s32) == 0.0);

  CHECK_THROWS_WITH_AS(full_forward(Tensor::zeros({32, 32, 3}), m),
                       doctest::Contains("full_forward[backbone]"), std::invalid_argument);
}

TEST_CASE("gradient of the head sum with respect to the seg map is nonzero") {
  NetworkConfig cfg = small_config();
  ModelParams m = ModelParams::seeded(cfg, 980);
  Tensor x = random_uniform({32, 32, 3}, 0.0, 1.0, 981);

  Tape t;
  ModelVars vars = watch(t, m);
  ad::PyramidVars pyr = ad::backbone_forward(t, t.leaf(x), vars.backbone, cfg);
  ad::VarId seg = ad::seg_branch_forward(t, t.leaf(x), vars.seg);
  std::array<ad::VarId, 3> fused = ad::neck_forward(t, pyr, seg, vars.neck, cfg);
  std::array<ad::VarId, 3> head = ad::head_forward(t, fused, vars.head);
  ad::VarId loss = ad::add(t, ad::add(t, ad::sum(t, head[0]), ad::sum(t, head[1])),
                           ad::sum(t, head[2]));
  Tensor g = t.gradient(loss, seg);
  CHECK(norm(g) > 1e-8);
}

TEST_CASE("c3 and end-to-end gradients match finite differences") {
  SUBCASE("c3_forward with CBAM, wrt input") {
    ModelParams m = ModelParams::seeded(small_config(), 990);
    const C3Params& p = m.backbone.c3_p3;
    Tensor x = random_uniform({4, 4, 16}, -1.0, 1.0, 991);
    auto grads = block_gradients({{"x", x}}, [&](Tape& t, const std::vector<ad::VarId>& v) {
      return ad::c3_forward(t, v[0], watch(t, p), true);
    });
    for (const auto& g : grads) {
      const GradCheckReport r = compare_gradients(g.input_name, g.analytic, g.numeric, 1e-4, 1e-6);
      INFO(r.name, " max_rel_err=", r.max_rel_err);
      CHECK(r.pass);
    }
  }

  SUBCASE("full_forward wrt the input image at S=32") {
    NetworkConfig cfg = small_config();
    ModelParams m = ModelParams::seeded(cfg, 992);
    Tensor x = random_uniform({32, 32, 3}, 0.25, 0.75, 993);
    auto grads = block_gradients({{"x", x}}, [&](Tape& t, const std::vector<ad::VarId>& v) {
      ModelVars vars = watch(t, m);
      std::array<ad::VarId, 3> head = ad::full_forward(t, v[0], vars, cfg);
      return ad::add(t, ad::add(t, ad::sum(t, head[0]), ad::sum(t, head[1])),
                     ad::sum(t, head[2]));
    });
    for (const auto& g : grads) {
      const GradCheckReport r = compare_gradients(g.input_name, g.analytic, g.numeric, 1e-3, 1e-5);
      INFO(r.name, " max_rel_err=", r.max_rel_err);
      CHECK(r.pass);
    }
  }
}
