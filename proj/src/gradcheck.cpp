// SPDX-License-Identifier: Apache-2.0
#include "hafx/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace hafx {

namespace {

double evaluate(const ScalarFn& f, const std::vector<Tensor>& xs) {
  Tape tape(false);
  std::vector<Var> vars;
  vars.reserve(xs.size());
  for (const auto& x : xs) vars.push_back(tape.constant_ref(x));
  const Var loss = f(tape, vars);
  if (loss.value().size() != 1) throw ContractError("finite_diff_check: loss is not scalar");
  return loss.value()[0];
}

}  // namespace

double finite_diff_check(const ScalarFn& f, std::span<const Tensor> inputs, double step) {
  if (!(step > 0.0)) throw ContractError("finite_diff_check: step must be positive");

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& x : inputs) vars.push_back(tape.leaf(x));
    const Var loss = f(tape, vars);
    tape.backward(loss);
    for (std::size_t k = 0; k < vars.size(); ++k) {
      const Tensor& g = vars[k].grad();
      analytic.push_back(g.empty() ? Tensor(inputs[k].shape()) : g);
    }
  }

  std::vector<Tensor> xs(inputs.begin(), inputs.end());
  double worst = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    for (std::size_t i = 0; i < xs[k].size(); ++i) {
      const double orig = xs[k][i];
      xs[k][i] = orig + step;
      const double up = evaluate(f, xs);
      xs[k][i] = orig - step;
      const double down = evaluate(f, xs);
      xs[k][i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double err = std::abs(analytic[k][i] - numeric) / (std::abs(numeric) + 1e-8);
      worst = std::max(worst, err);
    }
  }
  return worst;
}

double finite_diff_check(const std::function<Var(Tape&, const Var&)>& f, const Tensor& x,
                         double step) {
  const ScalarFn wrapped = [&f](Tape& t, std::span<const Var> in) { return f(t, in[0]); };
  return finite_diff_check(wrapped, std::span<const Tensor>(&x, 1), step);
}

}  // namespace hafx
