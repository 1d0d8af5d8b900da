#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace yffn {

/// Dense tensor of doubles with channels-last layout.
///
/// Feature maps are rank-3 with shape (W, H, C), stored row-major, i.e. the
/// flat index of (x, y, c) is (x*H + y)*C + c. Convolution kernels are rank-4
/// with shape (k, k, C_in, C_out). A rank-3 tensor is implicitly a batch of
/// one; batching is handled by callers.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double value);
  static Tensor scalar(double value) { return Tensor({1}, {value}); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int extent(int axis) const;
  std::size_t size() const { return data_.size(); }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  // Rank-2 accessors, (i, j) over shape (E0, E1).
  double at(int i, int j) const { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }
  double& at(int i, int j) { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }

  // Rank-3 accessors, (x, y, c) over shape (W, H, C).
  double at(int x, int y, int c) const {
    return data_[flat3(x, y, c)];
  }
  double& at(int x, int y, int c) { return data_[flat3(x, y, c)]; }

  // Rank-4 accessors, (a, b, c, d) over shape (E0, E1, E2, E3).
  double at(int a, int b, int c, int d) const { return data_[flat4(a, b, c, d)]; }
  double& at(int a, int b, int c, int d) { return data_[flat4(a, b, c, d)]; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  std::string shape_str() const;  // "(4, 4, 3)" for diagnostics

 private:
  std::size_t flat3(int x, int y, int c) const {
    return (static_cast<std::size_t>(x) * shape_[1] + y) * shape_[2] + c;
  }
  std::size_t flat4(int a, int b, int c, int d) const {
    return ((static_cast<std::size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d;
  }

  std::vector<int> shape_;
  std::vector<double> data_;
};

enum class PoolKind { Max, Avg };

/// Cross-correlation over a (W, H, C_in) input with (k, k, C_in, C_out)
/// kernels and zero padding. k must be odd and fit within the padded input.
Tensor conv2d(const Tensor& input, const Tensor& kernels, int stride, int padding,
              const Tensor& bias);

/// Per-channel (x - mean)/sqrt(var + eps) * gamma + beta with stored stats.
Tensor batch_norm_inference(const Tensor& input, const Tensor& mean, const Tensor& var,
                            const Tensor& gamma, const Tensor& beta, double eps);

double sigmoid(double x);
Tensor sigmoid(const Tensor& input);
Tensor silu(const Tensor& input);
Tensor relu(const Tensor& input);

/// Window pooling with zero padding. Max considers only in-bounds cells;
/// Avg divides by the full k*k window area, counting padded zeros.
Tensor pool2d(const Tensor& input, PoolKind kind, int k, int stride, int padding);

/// (W, H, C) -> (1, 1, C), reducing over both spatial axes.
Tensor global_pool(const Tensor& input, PoolKind kind);

/// (W, H, C) -> (W, H, 1), reducing over the channel axis.
Tensor channel_pool(const Tensor& input, PoolKind kind);

/// Nearest-neighbour upsampling: each cell becomes a factor x factor block.
Tensor upsample_nearest(const Tensor& input, int factor);

/// Channel concatenation; a fills channels [0, C1), b fills [C1, C1+C2).
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// Elementwise product of a (1,1,C) channel map or (W,H,1) spatial map with a
/// (W,H,C) feature tensor, replicating the map along its deficient axes.
Tensor broadcast_mul(const Tensor& map, const Tensor& feature);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
double sum(const Tensor& a);

/// Fully connected layer on a flat C-vector (rank 1, or rank 3 of shape
/// (1,1,C)): out_j = sum_i in_i * weights(i,j) + bias_j. Weights are
/// (C_in, C_out); the output keeps the input's rank convention.
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);

/// Seeded uniform fill in [lo, hi), deterministic for a given seed.
Tensor random_uniform(std::vector<int> shape, double lo, double hi, std::uint64_t seed);

}  // namespace yffn
