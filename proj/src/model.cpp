// SPDX-License-Identifier: Apache-2.0
#include "hafx/model.hpp"

#include <cmath>
#include <stdexcept>

namespace hafx {

void ModelConfig::validate() const {
  if (vocab_size == 0 || d_model == 0 || n_layers == 0 || n_heads == 0 || mlp_width == 0 || max_T == 0)
    throw std::invalid_argument("model config: sizes must be positive");
  if (d_model % n_heads != 0) throw std::invalid_argument("model config: d_model must be divisible by n_heads");
  if (head_dim() % 2 != 0) throw std::invalid_argument("model config: head_dim must be even for RoPE");
  if (phi_dim() == 0) throw std::invalid_argument("model config: feature_dim resolves to 0");
  if (phi_init_noise < 0.0) throw std::invalid_argument("model config: phi_init_noise must be >= 0");
}

std::string_view to_string(Proj p) {
  switch (p) {
    case Proj::Q: return "q";
    case Proj::K: return "k";
    case Proj::V: return "v";
    case Proj::O: return "o";
  }
  return "?";
}

namespace {

template <typename Fn>
void for_each_param(auto& model, Fn&& fn) {
  fn(model.embed);
  for (auto& l : model.layers) {
    fn(l.ln1_g);
    fn(l.ln1_b);
    for (auto& p : l.proj) fn(p);
    fn(l.ln2_g);
    fn(l.ln2_b);
    fn(l.w1);
    fn(l.b1);
    fn(l.w2);
    fn(l.b2);
    for (auto& p : l.phi_w) fn(p);
    for (auto& p : l.phi_b) fn(p);
  }
  fn(model.lnf_g);
  fn(model.lnf_b);
  fn(model.head_w);
  fn(model.head_b);
  for (auto& l : model.layers)
    for (auto& a : l.lora)
      if (a) {
        fn(a->A);
        fn(a->B);
      }
}

bool is_phi(const std::string& name) { return name.find(".phi") != std::string::npos; }
bool is_lora(const std::string& name) { return name.find(".lora_") != std::string::npos; }

}  // namespace

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out;
  for_each_param(*this, [&](Parameter& p) { out.push_back(&p); });
  return out;
}

std::vector<const Parameter*> Model::parameters() const {
  std::vector<const Parameter*> out;
  for_each_param(*this, [&](const Parameter& p) { out.push_back(&p); });
  return out;
}

Parameter* Model::find(const std::string& name) {
  for (auto* p : parameters())
    if (p->name == name) return p;
  return nullptr;
}

void Model::set_trainable(TrainGroup group) {
  for (auto* p : parameters()) {
    const bool phi = is_phi(p->name), lora = is_lora(p->name);
    switch (group) {
      case TrainGroup::Base: p->trainable = !phi && !lora; break;
      case TrainGroup::Phi: p->trainable = phi; break;
      case TrainGroup::Lora: p->trainable = lora; break;
      case TrainGroup::LoraAndPhi: p->trainable = lora || phi; break;
    }
  }
}

void Model::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

bool Model::has_lora() const {
  for (const auto& l : layers)
    for (const auto& a : l.lora)
      if (a) return true;
  return false;
}

Model init_model(const ModelConfig& cfg) {
  cfg.validate();
  SeededRng rng(cfg.seed, "init");
  SeededRng phi_rng(cfg.seed, "phi-init");
  const std::size_t d = cfg.d_model, hd = cfg.head_dim(), dp = cfg.phi_dim();
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  const double resid = 1.0 / std::sqrt(2.0 * static_cast<double>(cfg.n_layers));

  Model m;
  m.cfg = cfg;
  m.embed = {"embed", rng.normal_tensor({cfg.vocab_size, d}, 1.0), {}, false};
  for (std::size_t li = 0; li < cfg.n_layers; ++li) {
    const std::string pre = "layer" + std::to_string(li) + ".";
    Layer l;
    l.ln1_g = {pre + "ln1.g", Tensor({d}, 1.0), {}, false};
    l.ln1_b = {pre + "ln1.b", Tensor({d}), {}, false};
    for (Proj p : kAllProjs) {
      const double s = p == Proj::O ? sd * resid : sd;
      l.proj[static_cast<int>(p)] = {pre + "w" + std::string(to_string(p)), rng.normal_tensor({d, d}, s), {}, false};
    }
    l.ln2_g = {pre + "ln2.g", Tensor({d}, 1.0), {}, false};
    l.ln2_b = {pre + "ln2.b", Tensor({d}), {}, false};
    l.w1 = {pre + "mlp.w1", rng.normal_tensor({d, cfg.mlp_width}, sd), {}, false};
    l.b1 = {pre + "mlp.b1", Tensor({cfg.mlp_width}), {}, false};
    l.w2 = {pre + "mlp.w2",
            rng.normal_tensor({cfg.mlp_width, d}, resid / std::sqrt(static_cast<double>(cfg.mlp_width))), {}, false};
    l.b2 = {pre + "mlp.b2", Tensor({d}), {}, false};
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
      Tensor w = cfg.phi_init_noise > 0.0 ? phi_rng.normal_tensor({hd, dp}, cfg.phi_init_noise) : Tensor({hd, dp});
      for (std::size_t i = 0; i < std::min(hd, dp); ++i) w(i, i) += 1.0;
      const std::string ph = pre + "phi" + std::to_string(h);
      l.phi_w.push_back({ph + ".w", std::move(w), {}, false});
      l.phi_b.push_back({ph + ".b", Tensor({dp}), {}, false});
    }
    m.layers.push_back(std::move(l));
  }
  m.lnf_g = {"lnf.g", Tensor({d}, 1.0), {}, false};
  m.lnf_b = {"lnf.b", Tensor({d}), {}, false};
  m.head_w = {"head.w", rng.normal_tensor({d, cfg.vocab_size}, sd), {}, false};
  m.head_b = {"head.b", Tensor({cfg.vocab_size}), {}, false};
  return m;
}

namespace {

Var project(Tape& tape, Layer& l, Proj p, const Var& x, bool use_lora) {
  Var y = matmul(x, tape.param(l.proj[static_cast<int>(p)]));
  auto& a = l.lora[static_cast<int>(p)];
  if (use_lora && a) {
    const Var low = matmul(matmul(x, tape.param(a->A)), tape.param(a->B));
    y = add(y, scale(low, a->scale()));
  }
  return y;
}

}  // namespace

Var forward(Model& model, Tape& tape, std::span<const int> tokens, const AttentionSetup& setup,
            const HeadAttentionFn* override_fn) {
  const auto& cfg = model.cfg;
  const std::size_t T = tokens.size(), hd = cfg.head_dim();
  if (T == 0) throw DimensionError("forward: empty token sequence");
  if (T > cfg.max_T) throw DimensionError("forward: sequence length exceeds max_T");
  const RoPEParams rope_p{cfg.rope_base, hd};

  Var x = embedding(tape.param(model.embed), tokens);
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    Layer& l = model.layers[li];
    const Var h = layer_norm(x, tape.param(l.ln1_g), tape.param(l.ln1_b));
    const Var Q = project(tape, l, Proj::Q, h, setup.use_lora);
    const Var K = project(tape, l, Proj::K, h, setup.use_lora);
    const Var V = project(tape, l, Proj::V, h, setup.use_lora);
    std::vector<Var> heads;
    heads.reserve(cfg.n_heads);
    for (std::size_t hi = 0; hi < cfg.n_heads; ++hi) {
      const Var q = rope(slice_cols(Q, hi * hd, hd), rope_p);
      const Var k = rope(slice_cols(K, hi * hd, hd), rope_p);
      const Var v = slice_cols(V, hi * hd, hd);
      const FeatureMapVars phi{tape.param(l.phi_w[hi]), tape.param(l.phi_b[hi]), cfg.activation};
      if (override_fn) {
        heads.push_back((*override_fn)(li, hi, q, k, v, phi));
      } else if (setup.kind == AttentionSetup::Kind::Softmax) {
        heads.push_back(softmax_attention(q, k, v, Band::causal()));
      } else {
        heads.push_back(hybrid_attention(q, k, v, phi, setup.window, setup.hybrid, setup.mode, setup.stats));
      }
    }
    const Var attn = project(tape, l, Proj::O, concat_cols(heads), setup.use_lora);
    x = add(x, attn);
    const Var h2 = layer_norm(x, tape.param(l.ln2_g), tape.param(l.ln2_b));
    const Var mlp = add_bias(matmul(gelu(add_bias(matmul(h2, tape.param(l.w1)), tape.param(l.b1))),
                                    tape.param(l.w2)),
                             tape.param(l.b2));
    x = add(x, mlp);
  }
  const Var hf = layer_norm(x, tape.param(model.lnf_g), tape.param(model.lnf_b));
  return add_bias(matmul(hf, tape.param(model.head_w)), tape.param(model.head_b));
}

Tensor forward_logits(Model& model, std::span<const int> tokens, const AttentionSetup& setup) {
  Tape tape(false);
  return forward(model, tape, tokens, setup).value();
}

double lm_loss(const Tensor& logits, std::span<const int> targets) {
  if (logits.rows() != targets.size()) throw DimensionError("lm_loss: logits/targets length mismatch");
  Tape tape(false);
  return cross_entropy(tape.constant_ref(logits), targets).value()[0];
}

void lora_attach(Model& model, std::span<const Proj> targets, const LoRAConfig& cfg, std::uint64_t seed) {
  if (cfg.rank == 0) throw std::invalid_argument("lora: rank must be >= 1");
  const std::size_t d = model.cfg.d_model;
  for (auto& l : model.layers)
    for (Proj p : targets)
      if (l.lora[static_cast<int>(p)]) throw ContractError("lora_attach: adapter already attached");
  SeededRng rng(seed, "lora-init");
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    auto& l = model.layers[li];
    for (Proj p : targets) {
      const std::string pre = "layer" + std::to_string(li) + ".lora_" + std::string(to_string(p));
      LoRAAdapter a;
      a.target = p;
      a.rank = cfg.rank;
      a.alpha = cfg.alpha;
      a.A = {pre + ".A", rng.normal_tensor({d, cfg.rank}, 1.0 / std::sqrt(static_cast<double>(d))), {}, false};
      a.B = {pre + ".B", Tensor({cfg.rank, d}), {}, false};
      l.lora[static_cast<int>(p)] = std::move(a);
    }
  }
}

void lora_merge(Model& model) {
  for (auto& l : model.layers)
    for (Proj p : kAllProjs) {
      auto& a = l.lora[static_cast<int>(p)];
      if (!a) continue;
      Tensor delta = matmul(a->A.value, a->B.value);
      delta *= a->scale();
      l.proj[static_cast<int>(p)].value += delta;
      a.reset();
    }
}

}  // namespace hafx
