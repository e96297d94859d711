// SPDX-License-Identifier: Apache-2.0
#include "hafx/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace hafx {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Softmax: return "softmax";
    case Activation::Exponential: return "exp";
    case Activation::ReLU: return "relu";
    case Activation::OnePlusELU: return "1+elu";
    case Activation::None: return "none";
  }
  return "?";
}

Activation parse_activation(std::string_view s) {
  for (auto a : {Activation::Softmax, Activation::Exponential, Activation::ReLU,
                 Activation::OnePlusELU, Activation::None}) {
    if (s == to_string(a)) return a;
  }
  throw std::invalid_argument("unknown activation '" + std::string(s) + "'");
}

bool produces_nonnegative(Activation a) { return a != Activation::None; }

void HybridSpec::validate() const {
  if (!(g >= 0.0 && g <= 1.0)) throw std::invalid_argument("g must lie in [0, 1]");
}

std::string_view to_string(AblationMode m) {
  switch (m) {
    case AblationMode::FullHybrid: return "full_hybrid";
    case AblationMode::SWAOnly: return "swa_only";
    case AblationMode::LAOnly: return "la_only";
    case AblationMode::SinksOnly: return "sinks_only";
    case AblationMode::NoAttention: return "no_attention";
    case AblationMode::HybridOverlap: return "hybrid_overlap";
  }
  return "?";
}

AblationMode parse_ablation_mode(std::string_view s) {
  for (auto m : kAllAblationModes)
    if (s == to_string(m)) return m;
  throw std::invalid_argument("unknown ablation mode '" + std::string(s) + "'");
}

void AttentionInputs::validate() const {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
    throw DimensionError("attention inputs must be matrices");
  }
  if (q.rows() == 0) throw DimensionError("attention inputs: empty sequence");
  if (q.cols() != k.cols()) {
    throw DimensionError("attention inputs: Q width " + std::to_string(q.cols()) +
                         " != K width " + std::to_string(k.cols()));
  }
  if (k.rows() != q.rows() || v.rows() != q.rows()) {
    throw DimensionError("attention inputs: Q, K, V lengths disagree");
  }
}

namespace {

void check_band(const Band& band) {
  if (band.kind != Band::Kind::Causal && band.size == 0) {
    throw std::invalid_argument("attention band of size 0");
  }
}

struct BandedResult {
  Tensor out;
  std::vector<double> probs;        // concatenated per-row probabilities
  std::vector<std::size_t> offset;  // start of row t inside probs
};

BandedResult banded_forward(const Tensor& q, const Tensor& k, const Tensor& v, const Band& band) {
  const std::size_t T = q.rows(), d = q.cols(), dv = v.cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  BandedResult r{Tensor({T, dv}), {}, {}};
  r.offset.reserve(T + 1);
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t lo = band.lo(t), hi = band.hi(t);
    r.offset.push_back(r.probs.size());
    const std::size_t base = r.probs.size();
    double m = -INFINITY;
    for (std::size_t i = lo; i <= hi; ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += q(t, c) * k(i, c);
      s *= scale;
      r.probs.push_back(s);
      m = std::max(m, s);
    }
    double z = 0.0;
    for (std::size_t j = base; j < r.probs.size(); ++j) {
      r.probs[j] = std::exp(r.probs[j] - m);
      z += r.probs[j];
    }
    auto o = r.out.row(t);
    for (std::size_t i = lo; i <= hi; ++i) {
      const double p = r.probs[base + i - lo] /= z;
      for (std::size_t c = 0; c < dv; ++c) o[c] += p * v(i, c);
    }
  }
  r.offset.push_back(r.probs.size());
  return r;
}

struct LinearForward {
  Tensor out;
  std::vector<double> denom;   // normaliser actually used per row (0 when empty)
  std::vector<char> clamped;
};

void check_linear_inputs(const Tensor& phi_q, const Tensor& phi_k, const Tensor& v) {
  if (phi_q.rank() != 2 || phi_k.rank() != 2 || v.rank() != 2) {
    throw DimensionError("linear attention: inputs must be matrices");
  }
  if (phi_q.cols() != phi_k.cols()) throw DimensionError("linear attention: feature widths differ");
  if (phi_q.rows() != phi_k.rows() || v.rows() != phi_q.rows()) {
    throw DimensionError("linear attention: sequence lengths differ");
  }
  if (phi_q.rows() == 0) throw DimensionError("linear attention: empty sequence");
}

LinearForward linear_forward(const Tensor& phi_q, const Tensor& phi_k, const Tensor& v,
                             std::size_t lag, AttentionStats* stats) {
  check_linear_inputs(phi_q, phi_k, v);
  const std::size_t T = phi_q.rows(), f = phi_q.cols(), dv = v.cols();
  LinearForward r{Tensor({T, dv}), std::vector<double>(T, 0.0), std::vector<char>(T, 0)};
  std::vector<double> S(f * dv, 0.0), z(f, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    if (t < lag) continue;
    const std::size_t i = t - lag;  // newest key visible from row t
    for (std::size_t a = 0; a < f; ++a) {
      const double ka = phi_k(i, a);
      z[a] += ka;
      for (std::size_t c = 0; c < dv; ++c) S[a * dv + c] += ka * v(i, c);
    }
    double den = 0.0;
    for (std::size_t a = 0; a < f; ++a) den += phi_q(t, a) * z[a];
    if (den < kLinearAttentionEps) {
      den = kLinearAttentionEps;
      r.clamped[t] = 1;
      if (stats) ++stats->la_guard_hits;
    }
    r.denom[t] = den;
    auto o = r.out.row(t);
    for (std::size_t a = 0; a < f; ++a) {
      const double qa = phi_q(t, a);
      if (qa == 0.0) continue;
      for (std::size_t c = 0; c < dv; ++c) o[c] += qa * S[a * dv + c];
    }
    for (auto& x : o) x /= den;
  }
  return r;
}

}  // namespace

Tensor apply_rope(const Tensor& x, const RoPEParams& params) {
  if (x.rank() != 2) throw DimensionError("apply_rope: expected T x head_dim");
  const std::size_t hd = x.cols();
  if (hd % 2 != 0) throw DimensionError("apply_rope: head dimension must be even, got " + std::to_string(hd));
  Tensor out(x.shape());
  for (std::size_t t = 0; t < x.rows(); ++t) {
    for (std::size_t i = 0; i < hd / 2; ++i) {
      const double freq = std::pow(params.base, -2.0 * static_cast<double>(i) / static_cast<double>(hd));
      const double angle = static_cast<double>(t) * freq;
      const double c = std::cos(angle), s = std::sin(angle);
      const double a = x(t, 2 * i), b = x(t, 2 * i + 1);
      out(t, 2 * i) = a * c - b * s;
      out(t, 2 * i + 1) = a * s + b * c;
    }
  }
  return out;
}

Tensor banded_softmax_attention(const AttentionInputs& in, const Band& band) {
  in.validate();
  check_band(band);
  return banded_forward(in.q, in.k, in.v, band).out;
}

Tensor softmax_attention_causal(const AttentionInputs& in) {
  return banded_softmax_attention(in, Band::causal());
}

Tensor sliding_window_attention(const AttentionInputs& in, const WindowSpec& spec) {
  return banded_softmax_attention(in, Band::window(spec.window));
}

Tensor sinks_attention(const AttentionInputs& in, std::size_t sink_count) {
  return banded_softmax_attention(in, Band::sinks(sink_count));
}

Tensor feature_map_apply(const FeatureMapParams& params, const Tensor& x, AttentionStats* stats) {
  Tape tape(false);
  const FeatureMapVars vars{tape.constant_ref(params.weight), tape.constant_ref(params.bias),
                            params.activation};
  return feature_map(tape.constant_ref(x), vars, stats).value();
}

Tensor linear_attention_streaming(const Tensor& phi_q, const Tensor& phi_k, const Tensor& v,
                                  std::size_t lag, AttentionStats* stats) {
  return linear_forward(phi_q, phi_k, v, lag, stats).out;
}

Tensor linear_attention_quadratic_oracle(const Tensor& phi_q, const Tensor& phi_k,
                                         const Tensor& v, std::size_t lag) {
  check_linear_inputs(phi_q, phi_k, v);
  const std::size_t T = phi_q.rows();
  Tensor kernel = matmul_nt(phi_q, phi_k);  // kernel(t, i) = phi(q_t) . phi(k_i)
  Tensor weights({T, T});
  for (std::size_t t = 0; t < T; ++t) {
    if (t < lag) continue;
    double den = 0.0;
    for (std::size_t i = 0; i + lag <= t; ++i) den += kernel(t, i);
    den = std::max(den, kLinearAttentionEps);
    for (std::size_t i = 0; i + lag <= t; ++i) weights(t, i) = kernel(t, i) / den;
  }
  return matmul(weights, v);
}

std::size_t linear_attention_state_size(std::size_t feature_width, std::size_t value_dim) {
  return feature_width * value_dim + feature_width;
}

Tensor hybrid_attention(const AttentionInputs& in, const FeatureMapParams& phi,
                        const WindowSpec& win, const HybridSpec& hy, AblationMode mode,
                        AttentionStats* stats) {
  in.validate();
  Tape tape(false);
  const FeatureMapVars vars{tape.constant_ref(phi.weight), tape.constant_ref(phi.bias),
                            phi.activation};
  return hybrid_attention(tape.constant_ref(in.q), tape.constant_ref(in.k),
                          tape.constant_ref(in.v), vars, win, hy, mode, stats)
      .value();
}

// ---------------------------------------------------------------------------

Var rope(const Var& x, const RoPEParams& params) {
  Tensor y = apply_rope(x.value(), params);
  const auto xid = x.id();
  return x.tape().record("rope", std::move(y), {x}, [xid, params](Tape& t, const Tensor& g) {
    Tensor* gx = t.grad_slot(xid);
    if (!gx) return;
    // The rotation is orthogonal, so its adjoint rotates by the negative angle.
    const std::size_t hd = g.cols();
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t i = 0; i < hd / 2; ++i) {
        const double freq = std::pow(params.base, -2.0 * static_cast<double>(i) / static_cast<double>(hd));
        const double angle = static_cast<double>(r) * freq;
        const double c = std::cos(angle), s = std::sin(angle);
        const double a = g(r, 2 * i), b = g(r, 2 * i + 1);
        (*gx)(r, 2 * i) += a * c + b * s;
        (*gx)(r, 2 * i + 1) += -a * s + b * c;
      }
    }
  });
}

Var softmax_attention(const Var& q, const Var& k, const Var& v, const Band& band,
                      AttentionStats* swa_monitor) {
  AttentionInputs{q.value(), k.value(), v.value()}.validate();
  check_band(band);
  BandedResult fwd = banded_forward(q.value(), k.value(), v.value(), band);
  const auto qid = q.id(), kid = k.id(), vid = v.id();
  return q.tape().record(
      "softmax_attention", std::move(fwd.out), {q, k, v},
      [qid, kid, vid, band, swa_monitor, probs = std::move(fwd.probs),
       offset = std::move(fwd.offset)](Tape& t, const Tensor& g) {
        const Tensor& qv = t.value(qid);
        const Tensor& kv = t.value(kid);
        const Tensor& vv = t.value(vid);
        const std::size_t T = qv.rows(), d = qv.cols(), dv = vv.cols();
        const double scale = 1.0 / std::sqrt(static_cast<double>(d));
        Tensor dq({T, d}), dk({T, d}), dvv({T, dv});
        std::vector<double> dp;
        for (std::size_t r = 0; r < T; ++r) {
          const std::size_t lo = band.lo(r), hi = band.hi(r);
          const double* p = probs.data() + offset[r];
          dp.assign(hi - lo + 1, 0.0);
          double dot = 0.0;
          for (std::size_t i = lo; i <= hi; ++i) {
            double s = 0.0;
            for (std::size_t c = 0; c < dv; ++c) {
              s += g(r, c) * vv(i, c);
              dvv(i, c) += p[i - lo] * g(r, c);
            }
            dp[i - lo] = s;
            dot += p[i - lo] * s;
          }
          for (std::size_t i = lo; i <= hi; ++i) {
            const double ds = p[i - lo] * (dp[i - lo] - dot) * scale;
            for (std::size_t c = 0; c < d; ++c) {
              dq(r, c) += ds * kv(i, c);
              dk(i, c) += ds * qv(r, c);
            }
          }
        }
        if (swa_monitor) {
          for (const Tensor* x : {&dq, &dk, &dvv})
            for (double val : x->data()) swa_monitor->swa_grad_sq += val * val;
        }
        if (auto* gq = t.grad_slot(qid)) *gq += dq;
        if (auto* gk = t.grad_slot(kid)) *gk += dk;
        if (auto* gv = t.grad_slot(vid)) *gv += dvv;
      });
}

namespace {

Var activate(const Var& z, Activation a) {
  switch (a) {
    case Activation::Softmax: return row_softmax(z);
    case Activation::Exponential: return exp(z);
    case Activation::ReLU: return relu(z);
    case Activation::OnePlusELU: return one_plus_elu(z);
    case Activation::None: return z;
  }
  return z;
}

}  // namespace

Var feature_map(const Var& x, const FeatureMapVars& phi, AttentionStats* stats) {
  if (x.value().cols() != phi.weight.value().rows()) {
    throw DimensionError("feature_map: input width " + std::to_string(x.value().cols()) +
                         " != map input dim " + std::to_string(phi.weight.value().rows()));
  }
  if (!produces_nonnegative(phi.activation) && stats) ++stats->feature_map_warnings;
  const Var z = add_bias(matmul(x, phi.weight), phi.bias);
  const Var halves[] = {activate(z, phi.activation), activate(neg(z), phi.activation)};
  return concat_cols(halves);
}

Var linear_attention(const Var& phi_q, const Var& phi_k, const Var& v, std::size_t lag,
                     AttentionStats* stats) {
  LinearForward fwd = linear_forward(phi_q.value(), phi_k.value(), v.value(), lag, stats);
  const auto qid = phi_q.id(), kid = phi_k.id(), vid = v.id();
  const std::size_t self = phi_q.tape().size();
  return phi_q.tape().record(
      "linear_attention", std::move(fwd.out), {phi_q, phi_k, v},
      [qid, kid, vid, self, lag, denom = std::move(fwd.denom),
       clamped = std::move(fwd.clamped)](Tape& t, const Tensor& g) {
        const Tensor& fq = t.value(qid);
        const Tensor& fk = t.value(kid);
        const Tensor& vv = t.value(vid);
        const Tensor& out = t.value(self);
        const std::size_t T = fq.rows(), f = fq.cols(), dv = vv.cols();

        // Per-row gradients with respect to numerator and denominator.
        Tensor dnum({T, dv});
        std::vector<double> dden(T, 0.0);
        for (std::size_t r = lag; r < T; ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < dv; ++c) {
            dnum(r, c) = g(r, c) / denom[r];
            dot += g(r, c) * out(r, c);
          }
          if (!clamped[r]) dden[r] = -dot / denom[r];
        }

        // d phi_q: replay the forward scan.
        if (Tensor* gq = t.grad_slot(qid)) {
          std::vector<double> S(f * dv, 0.0), z(f, 0.0);
          for (std::size_t r = lag; r < T; ++r) {
            const std::size_t i = r - lag;
            for (std::size_t a = 0; a < f; ++a) {
              z[a] += fk(i, a);
              for (std::size_t c = 0; c < dv; ++c) S[a * dv + c] += fk(i, a) * vv(i, c);
            }
            for (std::size_t a = 0; a < f; ++a) {
              double s = z[a] * dden[r];
              for (std::size_t c = 0; c < dv; ++c) s += S[a * dv + c] * dnum(r, c);
              (*gq)(r, a) += s;
            }
          }
        }

        // d phi_k, d v: reverse scan over suffix sums of phi_q dnum^T.
        Tensor* gk = t.grad_slot(kid);
        Tensor* gv = t.grad_slot(vid);
        if (!gk && !gv) return;
        std::vector<double> R(f * dv, 0.0), rz(f, 0.0);
        for (std::size_t r = T; r-- > lag;) {
          for (std::size_t a = 0; a < f; ++a) {
            const double qa = fq(r, a);
            rz[a] += qa * dden[r];
            for (std::size_t c = 0; c < dv; ++c) R[a * dv + c] += qa * dnum(r, c);
          }
          const std::size_t i = r - lag;  // key first seen by row r
          if (gk) {
            for (std::size_t a = 0; a < f; ++a) {
              double s = rz[a];
              for (std::size_t c = 0; c < dv; ++c) s += R[a * dv + c] * vv(i, c);
              (*gk)(i, a) += s;
            }
          }
          if (gv) {
            for (std::size_t c = 0; c < dv; ++c) {
              double s = 0.0;
              for (std::size_t a = 0; a < f; ++a) s += R[a * dv + c] * fk(i, a);
              (*gv)(i, c) += s;
            }
          }
        }
      });
}

Var hybrid_attention(const Var& q, const Var& k, const Var& v, const FeatureMapVars& phi,
                     const WindowSpec& win, const HybridSpec& hy, AblationMode mode,
                     AttentionStats* stats) {
  AttentionInputs{q.value(), k.value(), v.value()}.validate();
  hy.validate();
  Tape& tape = q.tape();
  const std::size_t T = q.value().rows();

  if (mode == AblationMode::NoAttention) return tape.constant(Tensor({T, v.value().cols()}));
  if (mode == AblationMode::SinksOnly) {
    if (win.sink_count == 0) throw std::invalid_argument("sinks ablation needs sink_count >= 1");
    return softmax_attention(q, k, v, Band::sinks(win.sink_count));
  }
  if (win.window == 0) throw std::invalid_argument("window must be >= 1");

  const bool overlap = hy.overlap || mode == AblationMode::HybridOverlap;
  const bool want_swa = mode != AblationMode::LAOnly;
  const bool want_la = mode != AblationMode::SWAOnly;

  Var swa, la;
  if (want_swa) {
    swa = scale(softmax_attention(q, k, v, Band::window(win.window), stats), hy.swa_weight());
  }
  if (want_la) {
    const Var fq = feature_map(q, phi, stats);
    const Var fk = feature_map(k, phi, stats);
    la = scale(linear_attention(fq, fk, v, overlap ? 0 : win.window, stats), hy.la_weight());
  }
  if (want_swa && want_la) return add(swa, la);
  return want_swa ? swa : la;
}

}  // namespace hafx
