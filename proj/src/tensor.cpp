#include "yffn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "yffn/common.hpp"

namespace yffn {

namespace {

std::size_t checked_volume(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int e : shape) {
    if (e < 0) {
      throw std::invalid_argument(detail::cat("tensor extent must be >= 0, got ", e));
    }
    n *= static_cast<std::size_t>(e);
  }
  return n;
}

void require_rank3(const Tensor& t, const char* what) {
  if (t.rank() != 3) {
    throw std::invalid_argument(
        detail::cat(what, " expects a rank-3 (W, H, C) tensor, got shape ", t.shape_str()));
  }
}

void require_channel_param(const Tensor& p, int channels, const char* name) {
  if (p.rank() != 1 || p.extent(0) != channels) {
    throw std::invalid_argument(detail::cat("parameter ", name, " must have shape (", channels,
                                            "), got ", p.shape_str()));
  }
}

}  // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  data_.assign(checked_volume(shape_), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (checked_volume(shape_) != data_.size()) {
    throw std::invalid_argument(detail::cat("tensor data length ", data_.size(),
                                            " does not match shape ", shape_str()));
  }
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

int Tensor::extent(int axis) const {
  if (axis < 0 || axis >= rank()) {
    throw std::invalid_argument(detail::cat("axis ", axis, " out of range for rank ", rank()));
  }
  return shape_[axis];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_str() const {
  std::string s = "(";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape_[i]);
  }
  return s + ")";
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, int stride, int padding,
              const Tensor& bias) {
  require_rank3(input, "conv2d");
  if (kernels.rank() != 4) {
    throw std::invalid_argument(
        detail::cat("conv2d kernels must be rank-4 (k, k, C_in, C_out), got ",
                    kernels.shape_str()));
  }
  const int w = input.extent(0), h = input.extent(1), cin = input.extent(2);
  const int k = kernels.extent(0);
  const int cout = kernels.extent(3);
  if (kernels.extent(1) != k) {
    throw std::invalid_argument(detail::cat("conv2d kernel window must be square, got ",
                                            kernels.shape_str()));
  }
  if (kernels.extent(2) != cin) {
    throw std::invalid_argument(detail::cat("conv2d channel mismatch: input has ", cin,
                                            " channels (shape ", input.shape_str(),
                                            ") but kernels expect ", kernels.extent(2),
                                            " (shape ", kernels.shape_str(), ")"));
  }
  if (k % 2 == 0) {
    throw std::invalid_argument(detail::cat("conv2d kernel extent must be odd, got ", k));
  }
  if (stride < 1) throw std::invalid_argument("conv2d stride must be >= 1");
  if (padding < 0) throw std::invalid_argument("conv2d padding must be >= 0");
  if (w + 2 * padding < k || h + 2 * padding < k) {
    throw std::invalid_argument(detail::cat("conv2d window ", k, " does not fit input ",
                                            input.shape_str(), " with padding ", padding));
  }
  require_channel_param(bias, cout, "bias");

  const int ow = (w + 2 * padding - k) / stride + 1;
  const int oh = (h + 2 * padding - k) / stride + 1;
  Tensor out({ow, oh, cout});
  for (int ox = 0; ox < ow; ++ox) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int co = 0; co < cout; ++co) {
        double acc = bias[co];
        for (int dx = 0; dx < k; ++dx) {
          const int ix = ox * stride - padding + dx;
          if (ix < 0 || ix >= w) continue;
          for (int dy = 0; dy < k; ++dy) {
            const int iy = oy * stride - padding + dy;
            if (iy < 0 || iy >= h) continue;
            for (int ci = 0; ci < cin; ++ci) {
              acc += input.at(ix, iy, ci) * kernels.at(dx, dy, ci, co);
            }
          }
        }
        out.at(ox, oy, co) = acc;
      }
    }
  }
  return out;
}

Tensor batch_norm_inference(const Tensor& input, const Tensor& mean, const Tensor& var,
                            const Tensor& gamma, const Tensor& beta, double eps) {
  require_rank3(input, "batch_norm_inference");
  const int c = input.extent(2);
  require_channel_param(mean, c, "mean");
  require_channel_param(var, c, "var");
  require_channel_param(gamma, c, "gamma");
  require_channel_param(beta, c, "beta");
  for (int i = 0; i < c; ++i) {
    if (var[i] < 0.0) {
      throw std::invalid_argument(detail::cat("batch_norm variance must be >= 0, channel ", i,
                                              " has ", var[i]));
    }
  }

  std::vector<double> inv_std(c);
  for (int i = 0; i < c; ++i) inv_std[i] = 1.0 / std::sqrt(var[i] + eps);

  Tensor out(input.shape());
  const std::size_t n = input.size();
  for (std::size_t i = 0; i < n; ++i) {
    const int ch = static_cast<int>(i % c);
    out[i] = (input[i] - mean[ch]) * inv_std[ch] * gamma[ch] + beta[ch];
  }
  return out;
}

double sigmoid(double x) {
  // Split on sign so exp never overflows; clamp saturated values to the
  // nearest representable double inside (0, 1) to keep the open-interval
  // contract even for large |x|.
  double v;
  if (x >= 0.0) {
    v = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    v = e / (1.0 + e);
  }
  if (v >= 1.0) return 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  if (v <= 0.0) return std::numeric_limits<double>::min();
  return v;
}

Tensor sigmoid(const Tensor& input) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = sigmoid(input[i]);
  return out;
}

Tensor silu(const Tensor& input) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] * sigmoid(input[i]);
  return out;
}

Tensor relu(const Tensor& input) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0 ? input[i] : 0.0;
  return out;
}

Tensor pool2d(const Tensor& input, PoolKind kind, int k, int stride, int padding) {
  require_rank3(input, "pool2d");
  if (k < 1) throw std::invalid_argument("pool2d window must be >= 1");
  if (stride < 1) throw std::invalid_argument("pool2d stride must be >= 1");
  if (padding < 0) throw std::invalid_argument("pool2d padding must be >= 0");
  const int w = input.extent(0), h = input.extent(1), c = input.extent(2);
  if (w + 2 * padding < k || h + 2 * padding < k) {
    throw std::invalid_argument(detail::cat("pool2d window ", k, " does not fit input ",
                                            input.shape_str(), " with padding ", padding));
  }

  const int ow = (w + 2 * padding - k) / stride + 1;
  const int oh = (h + 2 * padding - k) / stride + 1;
  Tensor out({ow, oh, c});
  for (int ox = 0; ox < ow; ++ox) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ch = 0; ch < c; ++ch) {
        if (kind == PoolKind::Max) {
          double best = -std::numeric_limits<double>::infinity();
          for (int dx = 0; dx < k; ++dx) {
            const int ix = ox * stride - padding + dx;
            if (ix < 0 || ix >= w) continue;
            for (int dy = 0; dy < k; ++dy) {
              const int iy = oy * stride - padding + dy;
              if (iy < 0 || iy >= h) continue;
              best = std::max(best, input.at(ix, iy, ch));
            }
          }
          out.at(ox, oy, ch) = best;
        } else {
          double acc = 0.0;
          for (int dx = 0; dx < k; ++dx) {
            const int ix = ox * stride - padding + dx;
            if (ix < 0 || ix >= w) continue;
            for (int dy = 0; dy < k; ++dy) {
              const int iy = oy * stride - padding + dy;
              if (iy < 0 || iy >= h) continue;
              acc += input.at(ix, iy, ch);
            }
          }
          out.at(ox, oy, ch) = acc / (static_cast<double>(k) * k);
        }
      }
    }
  }
  return out;
}

Tensor global_pool(const Tensor& input, PoolKind kind) {
  require_rank3(input, "global_pool");
  const int w = input.extent(0), h = input.extent(1), c = input.extent(2);
  Tensor out({1, 1, c});
  for (int ch = 0; ch < c; ++ch) {
    if (kind == PoolKind::Max) {
      double best = -std::numeric_limits<double>::infinity();
      for (int x = 0; x < w; ++x)
        for (int y = 0; y < h; ++y) best = std::max(best, input.at(x, y, ch));
      out.at(0, 0, ch) = best;
    } else {
      double acc = 0.0;
      for (int x = 0; x < w; ++x)
        for (int y = 0; y < h; ++y) acc += input.at(x, y, ch);
      out.at(0, 0, ch) = acc / (static_cast<double>(w) * h);
    }
  }
  return out;
}

Tensor channel_pool(const Tensor& input, PoolKind kind) {
  require_rank3(input, "channel_pool");
  const int w = input.extent(0), h = input.extent(1), c = input.extent(2);
  Tensor out({w, h, 1});
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) {
      if (kind == PoolKind::Max) {
        double best = -std::numeric_limits<double>::infinity();
        for (int ch = 0; ch < c; ++ch) best = std::max(best, input.at(x, y, ch));
        out.at(x, y, 0) = best;
      } else {
        double acc = 0.0;
        for (int ch = 0; ch < c; ++ch) acc += input.at(x, y, ch);
        out.at(x, y, 0) = acc / c;
      }
    }
  }
  return out;
}

Tensor upsample_nearest(const Tensor& input, int factor) {
  require_rank3(input, "upsample_nearest");
  if (factor < 1) throw std::invalid_argument("upsample factor must be >= 1");
  const int w = input.extent(0), h = input.extent(1), c = input.extent(2);
  Tensor out({w * factor, h * factor, c});
  for (int x = 0; x < w * factor; ++x) {
    for (int y = 0; y < h * factor; ++y) {
      for (int ch = 0; ch < c; ++ch) {
        out.at(x, y, ch) = input.at(x / factor, y / factor, ch);
      }
    }
  }
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank3(a, "concat_channels");
  require_rank3(b, "concat_channels");
  if (a.extent(0) != b.extent(0) || a.extent(1) != b.extent(1)) {
    throw std::invalid_argument(detail::cat("concat_channels spatial mismatch: ", a.shape_str(),
                                            " vs ", b.shape_str()));
  }
  const int w = a.extent(0), h = a.extent(1), ca = a.extent(2), cb = b.extent(2);
  Tensor out({w, h, ca + cb});
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) {
      for (int c = 0; c < ca; ++c) out.at(x, y, c) = a.at(x, y, c);
      for (int c = 0; c < cb; ++c) out.at(x, y, ca + c) = b.at(x, y, c);
    }
  }
  return out;
}

Tensor broadcast_mul(const Tensor& map, const Tensor& feature) {
  require_rank3(map, "broadcast_mul");
  require_rank3(feature, "broadcast_mul");
  const int w = feature.extent(0), h = feature.extent(1), c = feature.extent(2);
  Tensor out(feature.shape());
  if (map.extent(0) == 1 && map.extent(1) == 1 && map.extent(2) == c) {
    for (int x = 0; x < w; ++x)
      for (int y = 0; y < h; ++y)
        for (int ch = 0; ch < c; ++ch) out.at(x, y, ch) = map.at(0, 0, ch) * feature.at(x, y, ch);
    return out;
  }
  if (map.extent(0) == w && map.extent(1) == h && map.extent(2) == 1) {
    for (int x = 0; x < w; ++x)
      for (int y = 0; y < h; ++y)
        for (int ch = 0; ch < c; ++ch) out.at(x, y, ch) = map.at(x, y, 0) * feature.at(x, y, ch);
    return out;
  }
  throw std::invalid_argument(detail::cat("broadcast_mul: map ", map.shape_str(),
                                          " is neither a channel map nor a spatial map for feature ",
                                          feature.shape_str()));
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(detail::cat("add shape mismatch: ", a.shape_str(), " vs ",
                                            b.shape_str()));
  }
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(detail::cat("mul shape mismatch: ", a.shape_str(), " vs ",
                                            b.shape_str()));
  }
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  return out;
}

double sum(const Tensor& a) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i];
  return acc;
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  const bool rank3 = input.rank() == 3 && input.extent(0) == 1 && input.extent(1) == 1;
  if (!rank3 && input.rank() != 1) {
    throw std::invalid_argument(detail::cat("dense input must be rank-1 or (1,1,C), got ",
                                            input.shape_str()));
  }
  if (weights.rank() != 2) {
    throw std::invalid_argument(detail::cat("dense weights must be rank-2 (C_in, C_out), got ",
                                            weights.shape_str()));
  }
  const int cin = weights.extent(0), cout = weights.extent(1);
  if (static_cast<int>(input.size()) != cin) {
    throw std::invalid_argument(detail::cat("dense input length ", input.size(),
                                            " does not match weights ", weights.shape_str()));
  }
  require_channel_param(bias, cout, "bias");

  Tensor out(rank3 ? std::vector<int>{1, 1, cout} : std::vector<int>{cout});
  for (int j = 0; j < cout; ++j) {
    double acc = bias[j];
    for (int i = 0; i < cin; ++i) acc += input[i] * weights.at(i, j);
    out[j] = acc;
  }
  return out;
}

Tensor random_uniform(std::vector<int> shape, double lo, double hi, std::uint64_t seed) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace yffn
