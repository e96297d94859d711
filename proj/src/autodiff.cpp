// SPDX-License-Identifier: Apache-2.0
#include "hafx/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace hafx {

void Parameter::zero_grad() {
  if (grad.shape() != value.shape()) {
    grad = Tensor(value.shape());
  } else {
    grad.fill(0.0);
  }
}

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.owned = std::move(value);
  return push(std::move(n));
}

Var Tape::constant_ref(const Tensor& value) {
  Node n;
  n.op = "constant";
  n.ref = &value;
  return push(std::move(n));
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.op = "leaf";
  n.owned = std::move(value);
  n.requires_grad = requires_grad && grad_enabled_;
  return push(std::move(n));
}

Var Tape::param(Parameter& p) {
  Node n;
  n.op = "param";
  n.ref = &p.value;
  n.requires_grad = p.trainable && grad_enabled_;
  if (n.requires_grad) n.param = &p;
  return push(std::move(n));
}

Var Tape::record(const char* op, Tensor value, std::initializer_list<Var> inputs, Backward fn) {
  return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(fn));
}

Var Tape::record(const char* op, Tensor value, std::span<const Var> inputs, Backward fn) {
  if (!value.all_finite()) {
    throw NumericalError(std::string("non-finite value produced by ") + op);
  }
  Node n;
  n.op = op;
  n.owned = std::move(value);
  for (const auto& in : inputs) {
    if (in.tape_ != this) throw ContractError(std::string(op) + ": input from another tape");
    if (nodes_[in.id_].requires_grad) n.requires_grad = true;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

const Tensor& Tape::value(std::size_t id) const { return nodes_.at(id).value(); }

const Tensor& Tape::grad(std::size_t id) const { return nodes_.at(id).grad; }

Tensor* Tape::grad_slot(std::size_t id) {
  auto& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty() && !n.value().empty()) n.grad = Tensor(n.value().shape());
  return &n.grad;
}

void Tape::backward(const Var& loss) {
  if (loss.tape_ != this) throw ContractError("backward: loss belongs to another tape");
  if (loss.value().size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        shape_string(loss.value().shape()));
  }
  if (backward_done_) throw ContractError("backward: tape already differentiated");
  backward_done_ = true;
  if (!nodes_[loss.id_].requires_grad) return;
  nodes_[loss.id_].grad = Tensor(loss.value().shape(), 1.0);
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.param) {
      if (n.param->grad.shape() != n.param->value.shape()) n.param->zero_grad();
      n.param->grad += n.grad;
    }
  }
}

namespace {

void check_same(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value())) {
    throw DimensionError(std::string(op) + ": " + shape_string(a.value().shape()) + " vs " +
                         shape_string(b.value().shape()));
  }
}

// Unary elementwise op whose derivative is a function of (x, y).
template <typename F, typename D>
Var unary(const char* op, const Var& a, F f, D df) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const auto aid = a.id();
  return a.tape().record(op, std::move(y), {a},
                         [aid, df](Tape& t, const Tensor& g) {
                           Tensor* ga = t.grad_slot(aid);
                           if (!ga) return;
                           const Tensor& x = t.value(aid);
                           for (std::size_t i = 0; i < x.size(); ++i) (*ga)[i] += g[i] * df(x[i]);
                         });
}

}  // namespace

Var detach(const Var& x) { return x.tape().constant(x.value()); }

Var add(const Var& a, const Var& b) {
  check_same(a, b, "add");
  Tensor y = a.value();
  y += b.value();
  const auto aid = a.id(), bid = b.id();
  return a.tape().record("add", std::move(y), {a, b}, [aid, bid](Tape& t, const Tensor& g) {
    if (auto* ga = t.grad_slot(aid)) *ga += g;
    if (auto* gb = t.grad_slot(bid)) *gb += g;
  });
}

Var sub(const Var& a, const Var& b) {
  check_same(a, b, "sub");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b.value()[i];
  const auto aid = a.id(), bid = b.id();
  return a.tape().record("sub", std::move(y), {a, b}, [aid, bid](Tape& t, const Tensor& g) {
    if (auto* ga = t.grad_slot(aid)) *ga += g;
    if (auto* gb = t.grad_slot(bid))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
  });
}

Var mul(const Var& a, const Var& b) {
  check_same(a, b, "mul");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b.value()[i];
  const auto aid = a.id(), bid = b.id();
  return a.tape().record("mul", std::move(y), {a, b}, [aid, bid](Tape& t, const Tensor& g) {
    if (auto* ga = t.grad_slot(aid)) {
      const Tensor& bv = t.value(bid);
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
    }
    if (auto* gb = t.grad_slot(bid)) {
      const Tensor& av = t.value(aid);
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor y = a.value();
  y *= s;
  const auto aid = a.id();
  return a.tape().record("scale", std::move(y), {a}, [aid, s](Tape& t, const Tensor& g) {
    if (auto* ga = t.grad_slot(aid))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += s * g[i];
  });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var square(const Var& a) {
  return unary("square", a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var exp(const Var& a) {
  return unary("exp", a, [](double x) { return std::exp(x); },
               [](double x) { return std::exp(x); });
}

Var relu(const Var& a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var one_plus_elu(const Var& a) {
  return unary("one_plus_elu", a, [](double x) { return x > 0.0 ? 1.0 + x : std::exp(x); },
               [](double x) { return x > 0.0 ? 1.0 : std::exp(x); });
}

Var gelu(const Var& a) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  return unary(
      "gelu", a,
      [](double x) { return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x))); },
      [](double x) {
        const double u = c * (x + 0.044715 * x * x * x);
        const double th = std::tanh(u);
        const double du = c * (1.0 + 3.0 * 0.044715 * x * x);
        return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
      });
}

Var log_eps(const Var& a, double eps) {
  return unary("log_eps", a, [eps](double x) { return std::log(x + eps); },
               [eps](double x) { return 1.0 / (x + eps); });
}

Var add_bias(const Var& x, const Var& bias) {
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (bv.size() != xv.cols()) {
    throw DimensionError("add_bias: bias " + shape_string(bv.shape()) + " for input " +
                         shape_string(xv.shape()));
  }
  Tensor y = xv;
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (std::size_t c = 0; c < y.cols(); ++c) y(r, c) += bv[c];
  const auto xid = x.id(), bid = bias.id();
  return x.tape().record("add_bias", std::move(y), {x, bias},
                         [xid, bid](Tape& t, const Tensor& g) {
                           if (auto* gx = t.grad_slot(xid)) *gx += g;
                           if (auto* gb = t.grad_slot(bid)) {
                             const std::size_t n = gb->size();
                             for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i % n] += g[i];
                           }
                         });
}

Var matmul(const Var& a, const Var& b) {
  Tensor y = hafx::matmul(a.value(), b.value());
  const auto aid = a.id(), bid = b.id();
  return a.tape().record("matmul", std::move(y), {a, b}, [aid, bid](Tape& t, const Tensor& g) {
    if (auto* ga = t.grad_slot(aid)) *ga += matmul_nt(g, t.value(bid));
    if (auto* gb = t.grad_slot(bid)) *gb += matmul_tn(t.value(aid), g);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  Tensor y = hafx::matmul_nt(a.value(), b.value());
  const auto aid = a.id(), bid = b.id();
  return a.tape().record("matmul_nt", std::move(y), {a, b},
                         [aid, bid](Tape& t, const Tensor& g) {
                           if (auto* ga = t.grad_slot(aid)) *ga += hafx::matmul(g, t.value(bid));
                           if (auto* gb = t.grad_slot(bid)) *gb += matmul_tn(g, t.value(aid));
                         });
}

Var transpose(const Var& a) {
  const auto aid = a.id();
  return a.tape().record("transpose", hafx::transpose(a.value()), {a},
                         [aid](Tape& t, const Tensor& g) {
                           if (auto* ga = t.grad_slot(aid)) *ga += hafx::transpose(g);
                         });
}

Var row_softmax(const Var& x) {
  Tensor y = hafx::row_softmax(x.value());
  const auto xid = x.id();
  const std::size_t self = x.tape().size();
  return x.tape().record("row_softmax", std::move(y), {x},
                         [xid, self](Tape& t, const Tensor& g) {
                           Tensor* gx = t.grad_slot(xid);
                           if (!gx) return;
                           const Tensor& y = t.value(self);
                           for (std::size_t r = 0; r < y.rows(); ++r) {
                             auto yr = y.row(r);
                             auto gr = g.row(r);
                             double dot = 0.0;
                             for (std::size_t c = 0; c < yr.size(); ++c) dot += yr[c] * gr[c];
                             auto out = gx->row(r);
                             for (std::size_t c = 0; c < yr.size(); ++c)
                               out[c] += yr[c] * (gr[c] - dot);
                           }
                         });
}

Var row_normalize(const Var& x, double eps) {
  const Tensor& xv = x.value();
  Tensor y(xv.shape());
  std::vector<double> denom(xv.rows());
  std::vector<bool> clamped(xv.rows());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double s = 0.0;
    for (double v : xv.row(r)) s += v;
    clamped[r] = s < eps;
    denom[r] = clamped[r] ? eps : s;
    for (std::size_t c = 0; c < xv.cols(); ++c) y(r, c) = xv(r, c) / denom[r];
  }
  const auto xid = x.id();
  return x.tape().record("row_normalize", std::move(y), {x},
                         [xid, denom, clamped](Tape& t, const Tensor& g) {
                           Tensor* gx = t.grad_slot(xid);
                           if (!gx) return;
                           const Tensor& xv = t.value(xid);
                           for (std::size_t r = 0; r < xv.rows(); ++r) {
                             const double s = denom[r];
                             double dot = 0.0;
                             if (!clamped[r])
                               for (std::size_t c = 0; c < xv.cols(); ++c) dot += g(r, c) * xv(r, c);
                             for (std::size_t c = 0; c < xv.cols(); ++c)
                               (*gx)(r, c) += g(r, c) / s - dot / (s * s);
                           }
                         });
}

Var causal_mask(const Var& x, std::size_t lag) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || xv.rows() != xv.cols()) {
    throw DimensionError("causal_mask: expected a square matrix, got " + shape_string(xv.shape()));
  }
  auto keep = [lag](std::size_t r, std::size_t c) { return c + lag <= r; };
  Tensor y(xv.shape());
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < xv.cols(); ++c)
      if (keep(r, c)) y(r, c) = xv(r, c);
  const auto xid = x.id();
  return x.tape().record("causal_mask", std::move(y), {x}, [xid, keep](Tape& t, const Tensor& g) {
    Tensor* gx = t.grad_slot(xid);
    if (!gx) return;
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c)
        if (keep(r, c)) (*gx)(r, c) += g(r, c);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = parts[0].value().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.value().rows() != rows) throw DimensionError("concat_cols: row counts disagree");
    cols += p.value().cols();
  }
  Tensor y({rows, cols});
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) y(r, off + c) = v(r, c);
    ids.push_back(p.id());
    offsets.push_back(off);
    off += v.cols();
  }
  return parts[0].tape().record("concat_cols", std::move(y), parts,
                                [ids, offsets](Tape& t, const Tensor& g) {
                                  for (std::size_t k = 0; k < ids.size(); ++k) {
                                    Tensor* gp = t.grad_slot(ids[k]);
                                    if (!gp) continue;
                                    for (std::size_t r = 0; r < gp->rows(); ++r)
                                      for (std::size_t c = 0; c < gp->cols(); ++c)
                                        (*gp)(r, c) += g(r, offsets[k] + c);
                                  }
                                });
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  if (begin + count > xv.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + shape_string(xv.shape()));
  }
  Tensor y({xv.rows(), count});
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) y(r, c) = xv(r, begin + c);
  const auto xid = x.id();
  return x.tape().record("slice_cols", std::move(y), {x},
                         [xid, begin, count](Tape& t, const Tensor& g) {
                           Tensor* gx = t.grad_slot(xid);
                           if (!gx) return;
                           for (std::size_t r = 0; r < g.rows(); ++r)
                             for (std::size_t c = 0; c < count; ++c) (*gx)(r, begin + c) += g(r, c);
                         });
}

Var sum(const Var& x) {
  const auto xid = x.id();
  return x.tape().record("sum", Tensor({1}, x.value().sum()), {x},
                         [xid](Tape& t, const Tensor& g) {
                           if (auto* gx = t.grad_slot(xid))
                             for (auto& v : gx->data()) v += g[0];
                         });
}

Var mean(const Var& x) {
  const double n = static_cast<double>(x.value().size());
  if (n == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(x), 1.0 / n);
}

Var mse(const Var& a, const Var& b) { return mean(square(sub(a, b))); }

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Tensor& xv = x.value();
  const std::size_t n = xv.cols();
  if (gain.value().size() != n || bias.value().size() != n) {
    throw DimensionError("layer_norm: gain/bias width does not match " + shape_string(xv.shape()));
  }
  Tensor xhat(xv.shape());
  std::vector<double> inv_std(xv.rows());
  Tensor y(xv.shape());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double mu = 0.0;
    for (double v : xv.row(r)) mu += v;
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (double v : xv.row(r)) var += (v - mu) * (v - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      xhat(r, c) = (xv(r, c) - mu) * inv_std[r];
      y(r, c) = xhat(r, c) * gain.value()[c] + bias.value()[c];
    }
  }
  const auto xid = x.id(), gid = gain.id(), bid = bias.id();
  return x.tape().record(
      "layer_norm", std::move(y), {x, gain, bias},
      [xid, gid, bid, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t,
                                                                            const Tensor& g) {
        const std::size_t n = xhat.cols();
        const Tensor& gv = t.value(gid);
        if (auto* gg = t.grad_slot(gid))
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < n; ++c) (*gg)[c] += g(r, c) * xhat(r, c);
        if (auto* gb = t.grad_slot(bid))
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < n; ++c) (*gb)[c] += g(r, c);
        Tensor* gx = t.grad_slot(xid);
        if (!gx) return;
        for (std::size_t r = 0; r < g.rows(); ++r) {
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t c = 0; c < n; ++c) {
            const double dxh = g(r, c) * gv[c];
            m1 += dxh;
            m2 += dxh * xhat(r, c);
          }
          m1 /= static_cast<double>(n);
          m2 /= static_cast<double>(n);
          for (std::size_t c = 0; c < n; ++c) {
            const double dxh = g(r, c) * gv[c];
            (*gx)(r, c) += inv_std[r] * (dxh - m1 - xhat(r, c) * m2);
          }
        }
      });
}

Var embedding(const Var& table, std::span<const int> tokens) {
  const Tensor& tv = table.value();
  const std::size_t d = tv.cols();
  Tensor y({tokens.size(), d});
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || static_cast<std::size_t>(tokens[i]) >= tv.rows()) {
      throw std::out_of_range("embedding: token " + std::to_string(tokens[i]) +
                              " outside vocabulary of " + std::to_string(tv.rows()));
    }
    auto src = tv.row(static_cast<std::size_t>(tokens[i]));
    std::copy(src.begin(), src.end(), y.row(i).begin());
  }
  const auto tid = table.id();
  std::vector<int> toks(tokens.begin(), tokens.end());
  return table.tape().record("embedding", std::move(y), {table},
                             [tid, toks = std::move(toks)](Tape& t, const Tensor& g) {
                               Tensor* gt = t.grad_slot(tid);
                               if (!gt) return;
                               for (std::size_t i = 0; i < toks.size(); ++i) {
                                 auto dst = gt->row(static_cast<std::size_t>(toks[i]));
                                 auto src = g.row(i);
                                 for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
                               }
                             });
}

Var cross_entropy(const Var& logits, std::span<const int> targets) {
  const Tensor& lv = logits.value();
  if (targets.size() != lv.rows()) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(lv.rows()) + " positions");
  }
  Tensor probs = hafx::row_softmax(lv);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < lv.rows(); ++r) {
    if (targets[r] < 0) continue;
    if (static_cast<std::size_t>(targets[r]) >= lv.cols()) {
      throw std::out_of_range("cross_entropy: target " + std::to_string(targets[r]) +
                              " outside vocabulary");
    }
    // log-sum-exp form keeps large margins finite.
    auto row = lv.row(r);
    const double m = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - m);
    total += m + std::log(z) - row[static_cast<std::size_t>(targets[r])];
    ++count;
  }
  const double loss = count ? total / static_cast<double>(count) : 0.0;
  const auto lid = logits.id();
  std::vector<int> tg(targets.begin(), targets.end());
  return logits.tape().record(
      "cross_entropy", Tensor({1}, loss), {logits},
      [lid, tg = std::move(tg), probs = std::move(probs), count](Tape& t, const Tensor& g) {
        Tensor* gl = t.grad_slot(lid);
        if (!gl || count == 0) return;
        const double s = g[0] / static_cast<double>(count);
        for (std::size_t r = 0; r < probs.rows(); ++r) {
          if (tg[r] < 0) continue;
          for (std::size_t c = 0; c < probs.cols(); ++c) (*gl)(r, c) += s * probs(r, c);
          (*gl)(r, static_cast<std::size_t>(tg[r])) -= s;
        }
      });
}

}  // namespace hafx
