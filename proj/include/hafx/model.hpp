// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hafx/attention.hpp"
#include "hafx/autodiff.hpp"
#include "hafx/rng.hpp"

namespace hafx {

struct ModelConfig {
  std::size_t vocab_size = 64;
  std::size_t d_model = 128;
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  std::size_t mlp_width = 512;
  std::size_t max_T = 256;
  std::uint64_t seed = 0;
  // feature map; feature_dim 0 means head_dim / 2
  std::size_t feature_dim = 0;
  Activation activation = Activation::Softmax;
  double phi_init_noise = 0.1;
  double rope_base = 10000.0;

  std::size_t head_dim() const { return d_model / n_heads; }
  std::size_t phi_dim() const { return feature_dim == 0 ? head_dim() / 2 : feature_dim; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

enum class Proj { Q = 0, K = 1, V = 2, O = 3 };
inline constexpr Proj kAllProjs[] = {Proj::Q, Proj::K, Proj::V, Proj::O};
std::string_view to_string(Proj p);

struct LoRAConfig {
  std::size_t rank = 8;
  double alpha = 16.0;
  bool operator==(const LoRAConfig&) const = default;
};

/// Low-rank update W + (alpha/r) A B on one projection. B starts at zero.
struct LoRAAdapter {
  Proj target = Proj::Q;
  Parameter A;  // d x r
  Parameter B;  // r x d
  std::size_t rank = 8;
  double alpha = 16.0;

  double scale() const { return alpha / static_cast<double>(rank); }
  std::size_t parameter_count() const { return A.value.size() + B.value.size(); }
};

struct Layer {
  Parameter ln1_g, ln1_b;
  std::array<Parameter, 4> proj;  // indexed by Proj, each d_model x d_model
  Parameter ln2_g, ln2_b;
  Parameter w1, b1, w2, b2;
  std::vector<Parameter> phi_w;  // per head, h_d x d'
  std::vector<Parameter> phi_b;  // per head, d'
  std::array<std::optional<LoRAAdapter>, 4> lora;
};

/// Which parameters receive gradients in the next training stage.
enum class TrainGroup { Base, Phi, Lora, LoraAndPhi };

class Model {
 public:
  ModelConfig cfg;
  Parameter embed;  // vocab x d_model
  std::vector<Layer> layers;
  Parameter lnf_g, lnf_b;
  Parameter head_w, head_b;  // untied output head
  std::string stage = "base";

  /// All parameters in a fixed order (adapters last when attached).
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  Parameter* find(const std::string& name);

  void set_trainable(TrainGroup group);
  void zero_grad();
  bool has_lora() const;
};

/// Deterministic given (cfg, seed). phi weights start as the first d' columns
/// of the identity plus N(0, phi_init_noise) noise.
Model init_model(const ModelConfig& cfg);

struct AttentionSetup {
  enum class Kind { Softmax, Hybrid };
  Kind kind = Kind::Softmax;
  AblationMode mode = AblationMode::FullHybrid;
  HybridSpec hybrid{};
  WindowSpec window{};
  bool use_lora = true;
  AttentionStats* stats = nullptr;

  static AttentionSetup softmax() { return {}; }
  static AttentionSetup hybrid_mode(AblationMode m, HybridSpec hy, WindowSpec win) {
    return {Kind::Hybrid, m, hy, win, true, nullptr};
  }
};

/// Replaces the per-head attention computation. Receives post-RoPE q, k.
using HeadAttentionFn = std::function<Var(std::size_t layer, std::size_t head, const Var& q,
                                          const Var& k, const Var& v, const FeatureMapVars& phi)>;

/// Returns T x vocab logits on `tape`. Throws std::out_of_range on an OOV
/// token and DimensionError when T exceeds max_T.
Var forward(Model& model, Tape& tape, std::span<const int> tokens, const AttentionSetup& setup,
            const HeadAttentionFn* override_fn = nullptr);

Tensor forward_logits(Model& model, std::span<const int> tokens, const AttentionSetup& setup);

/// Mean cross-entropy over targets >= 0.
double lm_loss(const Tensor& logits, std::span<const int> targets);

void lora_attach(Model& model, std::span<const Proj> targets, const LoRAConfig& cfg,
                 std::uint64_t seed);
/// Folds every adapter into its base projection and removes it.
void lora_merge(Model& model);

}  // namespace hafx
