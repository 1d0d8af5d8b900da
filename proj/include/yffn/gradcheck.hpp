#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "yffn/autograd.hpp"
#include "yffn/tensor.hpp"

namespace yffn {

struct BlockGradients {
  std::string input_name;
  Tensor analytic;
  Tensor numeric;
};

struct GradCheckReport {
  std::string name;
  double max_abs_diff = 0.0;
  double max_rel_err = 0.0;
  bool pass = false;
};

/// Records `run` on a tape over the named inputs, takes loss = sum(output),
/// and returns for every input both the reverse-mode gradient and the central
/// finite-difference gradient of the same scalar.
std::vector<BlockGradients> block_gradients(
    const std::vector<std::pair<std::string, Tensor>>& inputs,
    const std::function<ad::VarId(Tape&, const std::vector<ad::VarId>&)>& run,
    double step = 1e-5);

/// Elementwise comparison; passes iff every element satisfies
/// |a - b| <= max(abs_tol, rel_tol * max(|a|, |b|)).
GradCheckReport compare_gradients(std::string name, const Tensor& analytic, const Tensor& numeric,
                                  double rel_tol, double abs_tol);

}  // namespace yffn
