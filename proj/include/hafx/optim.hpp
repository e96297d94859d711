// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "hafx/autodiff.hpp"

namespace hafx {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  bool operator==(const AdamWConfig&) const = default;
};

/// Adam with decoupled weight decay. Only parameters marked trainable at
/// construction are updated; their grads are read but not cleared.
class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, AdamWConfig cfg);

  void step();
  double lr() const { return cfg_.lr; }
  void set_lr(double lr) { cfg_.lr = lr; }
  std::size_t steps() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor> m_, v_;
  AdamWConfig cfg_;
  std::size_t t_ = 0;
};

struct PlateauConfig {
  double factor = 0.5;
  std::size_t patience = 2;
  double min_delta = 1e-4;
  double min_lr = 1e-8;
  bool operator==(const PlateauConfig&) const = default;
};

/// Halves (by `factor`) the learning rate once `patience` consecutive evals
/// fail to beat the best loss by `min_delta`. A reduction that would go below
/// `min_lr` is skipped and the rate stays where it is.
class ReduceOnPlateau {
 public:
  explicit ReduceOnPlateau(PlateauConfig cfg = {}) : cfg_(cfg) {}

  /// Returns the learning rate to use next.
  double step(double eval_loss, double lr);
  std::size_t reductions() const { return reductions_; }

 private:
  PlateauConfig cfg_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t bad_ = 0;
  std::size_t reductions_ = 0;
};

}  // namespace hafx
