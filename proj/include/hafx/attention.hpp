// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hafx/autodiff.hpp"
#include "hafx/tensor.hpp"

namespace hafx {

/// Denominator floor for linear attention normalisation.
inline constexpr double kLinearAttentionEps = 1e-6;

enum class Activation { Softmax, Exponential, ReLU, OnePlusELU, None };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view s);
/// False only for Activation::None.
bool produces_nonnegative(Activation a);

/// Learnable feature map phi(x) = [act(W^T x + b), act(-W^T x - b)].
/// weight is head_dim x feature_dim, bias has feature_dim entries; the
/// output is 2 * feature_dim wide.
struct FeatureMapParams {
  Tensor weight;
  Tensor bias;
  Activation activation = Activation::Softmax;

  std::size_t input_dim() const { return weight.rows(); }
  std::size_t feature_dim() const { return weight.cols(); }
  std::size_t output_dim() const { return 2 * weight.cols(); }
};

struct WindowSpec {
  std::size_t window = 64;
  std::size_t sink_count = 8;
  bool operator==(const WindowSpec&) const = default;
};

/// Fixed mixing: output = g * SWA + (1 - g) * LA. With overlap the LA branch
/// sees every past token; otherwise only keys older than the window.
struct HybridSpec {
  double g = 0.5;
  bool overlap = false;

  double swa_weight() const { return g; }
  double la_weight() const { return 1.0 - g; }
  void validate() const;
  bool operator==(const HybridSpec&) const = default;
};

enum class AblationMode { FullHybrid, SWAOnly, LAOnly, SinksOnly, NoAttention, HybridOverlap };

inline constexpr AblationMode kAllAblationModes[] = {
    AblationMode::FullHybrid,  AblationMode::SWAOnly,    AblationMode::LAOnly,
    AblationMode::SinksOnly,   AblationMode::NoAttention, AblationMode::HybridOverlap};

std::string_view to_string(AblationMode m);
AblationMode parse_ablation_mode(std::string_view s);

struct RoPEParams {
  double base = 10000.0;
  std::size_t head_dim = 0;
};

/// Per-head, post-projection attention operands.
struct AttentionInputs {
  Tensor q;  // T x d
  Tensor k;  // T x d
  Tensor v;  // T x d_v

  std::size_t length() const { return q.rows(); }
  void validate() const;
};

/// Which keys each query row may attend to, as an inclusive index range.
struct Band {
  enum class Kind { Causal, Window, Sinks };
  Kind kind = Kind::Causal;
  std::size_t size = 0;  // window width or sink count

  static Band causal() { return {Kind::Causal, 0}; }
  static Band window(std::size_t w) { return {Kind::Window, w}; }
  static Band sinks(std::size_t n) { return {Kind::Sinks, n}; }

  std::size_t lo(std::size_t t) const { return kind == Kind::Window && t + 1 > size ? t + 1 - size : 0; }
  std::size_t hi(std::size_t t) const {
    return kind == Kind::Sinks ? std::min(t, size - 1) : t;
  }
};

/// Counters filled in by the kernels; shared by a forward/backward pass.
struct AttentionStats {
  std::size_t la_guard_hits = 0;
  std::size_t feature_map_warnings = 0;
  /// Sum of squared gradient entries that reached the SWA branch inputs.
  double swa_grad_sq = 0.0;
};

// ---------------------------------------------------------------------------
// Plain tensor kernels.

/// Rotates consecutive feature pairs of row t by t * base^(-2i/head_dim).
Tensor apply_rope(const Tensor& x, const RoPEParams& params);

Tensor softmax_attention_causal(const AttentionInputs& in);
Tensor sliding_window_attention(const AttentionInputs& in, const WindowSpec& spec);
/// Softmax over the first `sink_count` positions only (clipped to causality).
Tensor sinks_attention(const AttentionInputs& in, std::size_t sink_count);
/// Softmax attention restricted to `band`; the score matrix is never formed.
Tensor banded_softmax_attention(const AttentionInputs& in, const Band& band);

Tensor feature_map_apply(const FeatureMapParams& params, const Tensor& x,
                         AttentionStats* stats = nullptr);

/// Causal linear attention accumulated in one pass over the sequence. Row t
/// uses keys i <= t - lag; rows without any key return zeros. Only the
/// running state S (2d' x d_v) and z (2d') are kept.
Tensor linear_attention_streaming(const Tensor& phi_q, const Tensor& phi_k, const Tensor& v,
                                  std::size_t lag = 0, AttentionStats* stats = nullptr);

/// Same result computed from the explicit T x T kernel matrix.
Tensor linear_attention_quadratic_oracle(const Tensor& phi_q, const Tensor& phi_k,
                                         const Tensor& v, std::size_t lag = 0);

/// Number of doubles held by the streaming state: 2d' * d_v + 2d'.
std::size_t linear_attention_state_size(std::size_t feature_width, std::size_t value_dim);

Tensor hybrid_attention(const AttentionInputs& in, const FeatureMapParams& phi,
                        const WindowSpec& win, const HybridSpec& hy, AblationMode mode,
                        AttentionStats* stats = nullptr);

// ---------------------------------------------------------------------------
// Differentiable versions.

struct FeatureMapVars {
  Var weight;
  Var bias;
  Activation activation = Activation::Softmax;
};

Var rope(const Var& x, const RoPEParams& params);
Var softmax_attention(const Var& q, const Var& k, const Var& v, const Band& band,
                      AttentionStats* swa_monitor = nullptr);
Var feature_map(const Var& x, const FeatureMapVars& phi, AttentionStats* stats = nullptr);
Var linear_attention(const Var& phi_q, const Var& phi_k, const Var& v, std::size_t lag,
                     AttentionStats* stats = nullptr);
/// q and k are expected post-RoPE; phi is applied to both inside.
Var hybrid_attention(const Var& q, const Var& k, const Var& v, const FeatureMapVars& phi,
                     const WindowSpec& win, const HybridSpec& hy, AblationMode mode,
                     AttentionStats* stats = nullptr);

}  // namespace hafx
