#pragma once

#include <functional>
#include <vector>

#include "yffn/tensor.hpp"

namespace yffn {

/// Reverse-mode tape. Operations append nodes in topological order; a node's
/// parents always precede it, so one backward sweep in reverse creation order
/// yields exact gradients of a recorded scalar with respect to any recorded
/// tensor. Replaying the same ops on the same values gives identical results.
///
/// A tape constructed with recording=false keeps values but drops the graph;
/// the ad:: wrappers then skip saving anything for backward, which makes them
/// usable as plain forward evaluation.
class Tape {
 public:
  using VarId = std::size_t;
  /// Gradients for each parent of a node given the node's output gradient.
  using VjpFn = std::function<std::vector<Tensor>(const Tensor& grad_out)>;

  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }

  /// Registers an input tensor and returns its handle.
  VarId leaf(Tensor value);

  /// Registers an op result. parents/vjp are ignored on non-recording tapes.
  VarId node(Tensor value, std::vector<VarId> parents, VjpFn vjp);

  const Tensor& value(VarId id) const;
  std::size_t var_count() const { return nodes_.size(); }

  /// Gradient of the scalar `loss` with respect to `wrt`. Throws if either
  /// handle is not on this tape, if `loss` is not scalar, or if the tape was
  /// not recording.
  Tensor gradient(VarId loss, VarId wrt) const;

  /// Same reverse sweep, multiple targets.
  std::vector<Tensor> gradients(VarId loss, const std::vector<VarId>& wrt) const;

 private:
  struct Node {
    Tensor value;
    std::vector<VarId> parents;
    VjpFn vjp;
  };

  std::vector<Tensor> adjoints(VarId loss) const;
  void check_id(VarId id, const char* what) const;

  std::vector<Node> nodes_;
  bool recording_;
};

/// Differentiable wrappers around the forward ops in tensor.hpp. Each records
/// one node whose vjp mirrors the forward loops.
namespace ad {

using VarId = Tape::VarId;

VarId conv2d(Tape& t, VarId input, VarId kernels, int stride, int padding, VarId bias);
VarId batch_norm_inference(Tape& t, VarId input, VarId mean, VarId var, VarId gamma, VarId beta,
                           double eps);
VarId silu(Tape& t, VarId input);
VarId sigmoid(Tape& t, VarId input);
VarId relu(Tape& t, VarId input);
VarId pool2d(Tape& t, VarId input, PoolKind kind, int k, int stride, int padding);
VarId global_pool(Tape& t, VarId input, PoolKind kind);
VarId channel_pool(Tape& t, VarId input, PoolKind kind);
VarId upsample_nearest(Tape& t, VarId input, int factor);
VarId concat_channels(Tape& t, VarId a, VarId b);
VarId broadcast_mul(Tape& t, VarId map, VarId feature);
VarId add(Tape& t, VarId a, VarId b);
VarId mul(Tape& t, VarId a, VarId b);
VarId scale(Tape& t, VarId a, double s);
VarId dense(Tape& t, VarId input, VarId weights, VarId bias);

/// Reduces to a scalar of shape (1).
VarId sum(Tape& t, VarId a);

}  // namespace ad

/// Central finite differences (f(x+h e_i) - f(x-h e_i)) / (2h) per element.
/// The independent numerical oracle for Tape::gradient.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                  double step);

}  // namespace yffn
