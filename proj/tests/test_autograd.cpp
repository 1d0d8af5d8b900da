#include <doctest.h>

#include <stdexcept>

#include "oracles.hpp"
#include "yffn/autograd.hpp"
#include "yffn/gradcheck.hpp"
#include "yffn/tensor.hpp"

using namespace yffn;

namespace {

// Convenience: gradcheck a single-input block at the default tolerances.
void check_block(const std::vector<std::pair<std::string, Tensor>>& inputs,
                 const std::function<ad::VarId(Tape&, const std::vector<ad::VarId>&)>& run,
                 double rel_tol = 1e-4, double abs_tol = 1e-6) {
  for (const auto& g : block_gradients(inputs, run)) {
    const GradCheckReport r = compare_gradients(g.input_name, g.analytic, g.numeric, rel_tol,
                                                abs_tol);
    INFO(r.name, ": max_abs_diff=", r.max_abs_diff, " max_rel_err=", r.max_rel_err);
    CHECK(r.pass);
  }
}

}  // namespace

TEST_CASE("gradient of sum is all ones") {
  Tape t;
  ad::VarId x = t.leaf(random_uniform({3, 2, 2}, -1.0, 1.0, 7));
  ad::VarId loss = ad::sum(t, x);
  Tensor g = t.gradient(loss, x);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == 1.0);
}

TEST_CASE("gradient of sum(x*x)/2 equals x") {
  Tensor xv = random_uniform({4, 4, 1}, -2.0, 2.0, 8);
  Tape t;
  ad::VarId x = t.leaf(xv);
  ad::VarId loss = ad::scale(t, ad::sum(t, ad::mul(t, x, x)), 0.5);
  Tensor g = t.gradient(loss, x);
  CHECK(oracle::max_abs_diff(g, xv) <= 1e-14);
}

TEST_CASE("tape rejects foreign and non-scalar handles") {
  Tape t;
  ad::VarId x = t.leaf(Tensor::full({2, 2, 1}, 1.0));
  CHECK_THROWS_AS(t.gradient(x, x), std::invalid_argument);  // non-scalar loss
  ad::VarId loss = ad::sum(t, x);
  CHECK_THROWS_AS(t.gradient(loss, loss + 50), std::invalid_argument);
  CHECK_THROWS_AS((void)t.value(1000), std::invalid_argument);
}

TEST_CASE("replaying identical ops gives identical values") {
  Tensor xv = random_uniform({4, 3, 2}, -1.0, 1.0, 9);
  Tensor kv = random_uniform({3, 3, 2, 2}, -1.0, 1.0, 10);
  Tensor bv = random_uniform({2}, -0.5, 0.5, 11);
  auto run = [&]() {
    Tape t;
    ad::VarId y = ad::conv2d(t, t.leaf(xv), t.leaf(kv), 1, 1, t.leaf(bv));
    return t.value(ad::silu(t, y));
  };
  Tensor a = run(), b = run();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("finite_difference_gradient basics") {
  SUBCASE("sum has unit gradient") {
    Tensor x = random_uniform({2, 2, 1}, -1.0, 1.0, 12);
    Tensor g = finite_difference_gradient([](const Tensor& v) { return sum(v); }, x, 1e-5);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == doctest::Approx(1.0).epsilon(1e-9));
  }

  SUBCASE("central differences are exact for quadratics") {
    Tensor x = random_uniform({3}, -1.0, 1.0, 13);
    auto f = [](const Tensor& v) {
      double acc = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) acc += v[i] * v[i];
      return acc;
    };
    Tensor g = finite_difference_gradient(f, x, 1e-3);
    for (std::size_t i = 0; i < g.size(); ++i)
      CHECK(g[i] == doctest::Approx(2.0 * x[i]).epsilon(1e-9));
  }

  SUBCASE("sigmoid derivative at zero is 0.25") {
    Tensor x = Tensor::scalar(0.0);
    Tensor g = finite_difference_gradient([](const Tensor& v) { return sigmoid(v[0]); }, x, 1e-5);
    CHECK(g[0] == doctest::Approx(0.25).epsilon(1e-8));
  }

  SUBCASE("step must be positive") {
    CHECK_THROWS_AS(
        finite_difference_gradient([](const Tensor&) { return 0.0; }, Tensor::scalar(0.0), 0.0),
        std::invalid_argument);
  }
}

TEST_CASE("per-op backward matches finite differences") {
  Tensor x = random_uniform({4, 4, 2}, -1.5, 1.5, 21);

  SUBCASE("conv2d") {
    Tensor k = random_uniform({3, 3, 2, 3}, -1.0, 1.0, 22);
    Tensor b = random_uniform({3}, -0.5, 0.5, 23);
    check_block({{"input", x}, {"kernels", k}, {"bias", b}},
                [](Tape& t, const std::vector<ad::VarId>& v) {
                  return ad::conv2d(t, v[0], v[1], 2, 1, v[2]);
                });
  }

  SUBCASE("batch_norm_inference") {
    Tensor mean = random_uniform({2}, -0.5, 0.5, 24);
    Tensor var = random_uniform({2}, 0.5, 1.5, 25);
    Tensor gamma = random_uniform({2}, -1.0, 1.0, 26);
    Tensor beta = random_uniform({2}, -1.0, 1.0, 27);
    check_block({{"input", x}, {"mean", mean}, {"var", var}, {"gamma", gamma}, {"beta", beta}},
                [](Tape& t, const std::vector<ad::VarId>& v) {
                  return ad::batch_norm_inference(t, v[0], v[1], v[2], v[3], v[4], 1e-5);
                });
  }

  SUBCASE("activations") {
    check_block({{"input", x}}, [](Tape& t, const std::vector<ad::VarId>& v) {
      return ad::silu(t, v[0]);
    });
    check_block({{"input", x}}, [](Tape& t, const std::vector<ad::VarId>& v) {
      return ad::sigmoid(t, v[0]);
    });
  }

  SUBCASE("pooling") {
    check_block({{"input", x}}, [](Tape& t, const std::vector<ad::VarId>& v) {
      return ad::pool2d(t, v[0], PoolKind::Max, 3, 1, 1);
    });
    check_block({{"input", x}}, [](Tape& t, const std::vector<ad::VarId>& v) {
      return ad::pool2d(t, v[0], PoolKind::Avg, 2, 2, 0);
    });
    check_block({{"input", x}}, [](Tape& t, const std::vector<ad::VarId>& v) {
      return ad::global_pool(t, v[0], PoolKind::Max);
    });
    check_block({{"input", x}}, [](Tape& t, const std::vector<ad::VarId>& v) {
      return ad::global_pool(t, v[0], PoolKind::Avg);
    });
    check_block({{"input", x}}, [](Tape& t, const std::vector<ad::VarId>& v) {
      return ad::channel_pool(t, v[0], PoolKind::Max);
    });
    check_block({{"input", x}}, [](Tape& t, const std::vector<ad::VarId>& v) {
      return ad::channel_pool(t, v[0], PoolKind::Avg);
    });
  }

  SUBCASE("upsample and concat") {
    check_block({{"input", x}}, [](Tape& t, const std::vector<ad::VarId>& v) {
      return ad::upsample_nearest(t, v[0], 2);
    });
    Tensor y = random_uniform({4, 4, 3}, -1.0, 1.0, 28);
    check_block({{"a", x}, {"b", y}}, [](Tape& t, const std::vector<ad::VarId>& v) {
      return ad::concat_channels(t, v[0], v[1]);
    });
  }

  SUBCASE("broadcast_mul both patterns") {
    Tensor cmap = random_uniform({1, 1, 2}, 0.1, 0.9, 29);
    check_block({{"map", cmap}, {"feature", x}}, [](Tape& t, const std::vector<ad::VarId>& v) {
      return ad::broadcast_mul(t, v[0], v[1]);
    });
    Tensor smap = random_uniform({4, 4, 1}, 0.1, 0.9, 30);
    check_block({{"map", smap}, {"feature", x}}, [](Tape& t, const std::vector<ad::VarId>& v) {
      return ad::broadcast_mul(t, v[0], v[1]);
    });
  }

  SUBCASE("dense") {
    Tensor d = random_uniform({1, 1, 6}, -1.0, 1.0, 31);
    Tensor w = random_uniform({6, 4}, -1.0, 1.0, 32);
    Tensor b = random_uniform({4}, -0.5, 0.5, 33);
    check_block({{"input", d}, {"weights", w}, {"bias", b}},
                [](Tape& t, const std::vector<ad::VarId>& v) {
                  return ad::dense(t, v[0], v[1], v[2]);
                });
  }
}

TEST_CASE("composed chain conv2d -> silu -> global_avg matches finite differences") {
  Tensor x = random_uniform({4, 4, 2}, -1.0, 1.0, 41);
  Tensor k = random_uniform({3, 3, 2, 2}, -0.7, 0.7, 42);
  Tensor b = random_uniform({2}, -0.3, 0.3, 43);
  check_block({{"input", x}, {"kernels", k}, {"bias", b}},
              [](Tape& t, const std::vector<ad::VarId>& v) {
                ad::VarId y = ad::conv2d(t, v[0], v[1], 1, 1, v[2]);
                return ad::global_pool(t, ad::silu(t, y), PoolKind::Avg);
              });
}
