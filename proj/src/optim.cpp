// SPDX-License-Identifier: Apache-2.0
#include "hafx/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace hafx {

AdamW::AdamW(std::vector<Parameter*> params, AdamWConfig cfg) : cfg_(cfg) {
  if (!(cfg.lr >= 0.0)) throw std::invalid_argument("AdamW: lr must be >= 0");
  for (auto* p : params) {
    if (!p->trainable) continue;
    params_.push_back(p);
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void AdamW::step() {
  ++t_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    auto w = p.value.data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    const bool has_grad = !p.grad.empty();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double g = has_grad ? p.grad[k] : 0.0;
      m[k] = b1 * m[k] + (1.0 - b1) * g;
      v[k] = b2 * v[k] + (1.0 - b2) * g * g;
      const double update = (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.eps);
      w[k] -= cfg_.lr * cfg_.weight_decay * w[k];
      w[k] -= cfg_.lr * update;
    }
  }
}

double ReduceOnPlateau::step(double eval_loss, double lr) {
  if (eval_loss < best_ - cfg_.min_delta) {
    best_ = eval_loss;
    bad_ = 0;
    return lr;
  }
  if (++bad_ < cfg_.patience) return lr;
  bad_ = 0;
  const double next = lr * cfg_.factor;
  if (next < cfg_.min_lr) return lr;
  ++reductions_;
  return next;
}

}  // namespace hafx
