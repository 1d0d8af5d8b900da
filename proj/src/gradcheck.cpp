#include "yffn/gradcheck.hpp"

#include <cmath>

namespace yffn {

std::vector<BlockGradients> block_gradients(
    const std::vector<std::pair<std::string, Tensor>>& inputs,
    const std::function<ad::VarId(Tape&, const std::vector<ad::VarId>&)>& run, double step) {
  Tape tape;
  std::vector<ad::VarId> vars;
  vars.reserve(inputs.size());
  for (const auto& [name, value] : inputs) vars.push_back(tape.leaf(value));
  const ad::VarId loss = ad::sum(tape, run(tape, vars));
  std::vector<Tensor> analytic = tape.gradients(loss, vars);

  std::vector<BlockGradients> out;
  out.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto scalar_of = [&](const Tensor& probe) {
      Tape t(false);
      std::vector<ad::VarId> vs;
      vs.reserve(inputs.size());
      for (std::size_t j = 0; j < inputs.size(); ++j) {
        vs.push_back(t.leaf(j == i ? probe : inputs[j].second));
      }
      return t.value(ad::sum(t, run(t, vs)))[0];
    };
    Tensor numeric = finite_difference_gradient(scalar_of, inputs[i].second, step);
    out.push_back({inputs[i].first, std::move(analytic[i]), std::move(numeric)});
  }
  return out;
}

GradCheckReport compare_gradients(std::string name, const Tensor& analytic, const Tensor& numeric,
                                  double rel_tol, double abs_tol) {
  GradCheckReport r;
  r.name = std::move(name);
  bool ok = analytic.same_shape(numeric);
  if (ok) {
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      const double a = analytic[i], b = numeric[i];
      const double diff = std::abs(a - b);
      const double scale = std::max(std::abs(a), std::abs(b));
      r.max_abs_diff = std::max(r.max_abs_diff, diff);
      if (scale > 0.0) r.max_rel_err = std::max(r.max_rel_err, diff / scale);
      if (diff > std::max(abs_tol, rel_tol * scale)) ok = false;
    }
  }
  r.pass = ok;
  return r;
}

}  // namespace yffn
