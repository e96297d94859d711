// SPDX-License-Identifier: Apache-2.0
#include "hafx/conversion.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "hafx/checkpoint.hpp"

namespace hafx {

std::string_view to_string(TransferObjective o) {
  switch (o) {
    case TransferObjective::WeightsCE: return "weights_ce";
    case TransferObjective::OutputsMSE: return "outputs_mse";
    case TransferObjective::HybridOutputsMSE: return "hybrid_outputs_mse";
  }
  return "?";
}

TransferObjective parse_transfer_objective(std::string_view s) {
  for (auto o : {TransferObjective::WeightsCE, TransferObjective::OutputsMSE, TransferObjective::HybridOutputsMSE})
    if (to_string(o) == s) return o;
  throw std::invalid_argument("unknown transfer objective '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// SSD

void SSDSchedule::validate() const {
  if (dropout_per_epoch.empty() || window_per_epoch.empty())
    throw std::invalid_argument("ssd: dropout and window schedules must be non-empty");
  for (double r : dropout_per_epoch)
    if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("ssd: dropout rates must lie in [0, 1]");
  for (auto w : window_per_epoch)
    if (w == 0) throw std::invalid_argument("ssd: windows must be >= 1");
}

double SSDSchedule::rate(std::size_t epoch) const {
  validate();
  if (epoch == 0) throw std::invalid_argument("ssd: epochs are 1-based");
  return dropout_per_epoch[std::min(epoch, dropout_per_epoch.size()) - 1];
}

std::size_t SSDSchedule::window(std::size_t epoch) const {
  validate();
  if (epoch == 0) throw std::invalid_argument("ssd: epochs are 1-based");
  return window_per_epoch[std::min(epoch, window_per_epoch.size()) - 1];
}

SSDDecision ssd_sample(const SSDSchedule& s, std::size_t epoch, SeededRng& rng) {
  SSDDecision d;
  d.rate = s.rate(epoch);
  d.window = s.window(epoch);
  d.drop_swa = rng.uniform() < d.rate;
  return d;
}

void TrainConfig::validate() const {
  for (double lr : {lr_pretrain, lr_transfer, lr_finetune})
    if (!(lr >= 0.0)) throw std::invalid_argument("train: learning rates must be >= 0");
  if (batch_size == 0) throw std::invalid_argument("train: batch_size must be >= 1");
  if (grad_accum == 0) throw std::invalid_argument("train: grad_accum must be >= 1");
}

// ---------------------------------------------------------------------------
// Reports

bool EpochRecord::same_result(const EpochRecord& o) const {
  return epoch == o.epoch && train_loss == o.train_loss && heldout_loss == o.heldout_loss && lr == o.lr &&
         steps == o.steps && swa_drops == o.swa_drops && la_guard_hits == o.la_guard_hits &&
         feature_map_warnings == o.feature_map_warnings && step_swa_grad_sq == o.step_swa_grad_sq &&
         metrics == o.metrics && checkpoint == o.checkpoint;
}

bool StageReport::same_result(const StageReport& o) const {
  if (stage != o.stage || selected_epoch != o.selected_epoch || epochs.size() != o.epochs.size()) return false;
  for (std::size_t i = 0; i < epochs.size(); ++i)
    if (!epochs[i].same_result(o.epochs[i])) return false;
  return true;
}

std::string StageReport::to_jsonl() const {
  std::string out;
  for (const auto& e : epochs) {
    nlohmann::json j;
    j["stage"] = stage;
    j["epoch"] = e.epoch;
    j["train_loss"] = e.train_loss;
    j["heldout_loss"] = e.heldout_loss;
    j["lr"] = e.lr;
    j["steps"] = e.steps;
    j["swa_drops"] = e.swa_drops;
    j["la_guard_hits"] = e.la_guard_hits;
    j["feature_map_warnings"] = e.feature_map_warnings;
    j["metrics"] = e.metrics;
    j["checkpoint"] = e.checkpoint;
    j["selected"] = e.epoch == selected_epoch;
    j["wall_ms"] = e.wall_ms;
    out += j.dump() + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Transfer losses

Tensor causal_attention_weights(const Tensor& q, const Tensor& k) {
  Tensor s = matmul_nt(q, k);
  const std::size_t T = s.rows();
  const double inv = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  for (std::size_t t = 0; t < T; ++t) {
    double m = -INFINITY;
    for (std::size_t i = 0; i <= t; ++i) m = std::max(m, s(t, i) * inv);
    double z = 0.0;
    for (std::size_t i = 0; i <= t; ++i) z += (s(t, i) = std::exp(s(t, i) * inv - m));
    for (std::size_t i = 0; i <= t; ++i) s(t, i) /= z;
    for (std::size_t i = t + 1; i < T; ++i) s(t, i) = 0.0;
  }
  return s;
}

Var weights_cross_entropy(const Tensor& teacher, const Var& linear_weights) {
  if (!teacher.same_shape(linear_weights.value())) throw DimensionError("weights_cross_entropy: shape mismatch");
  Tape& tape = linear_weights.tape();
  const Var logl = log_eps(linear_weights, kCrossEntropyLogEps);
  const double T = static_cast<double>(teacher.rows());
  return scale(sum(mul(tape.constant(teacher), logl)), -1.0 / T);
}

Var transfer_loss(TransferObjective objective, const Var& q, const Var& k, const Var& v, const FeatureMapVars& phi,
                  const WindowSpec& win, const HybridSpec& hy, Var* student_out, AttentionStats* stats) {
  const Var teacher = detach(softmax_attention(detach(q), detach(k), detach(v), Band::causal()));
  switch (objective) {
    case TransferObjective::WeightsCE: {
      const Tensor P = causal_attention_weights(q.value(), k.value());
      const Var fq = feature_map(q, phi, stats), fk = feature_map(k, phi, stats);
      const Var lin = row_normalize(causal_mask(matmul_nt(fq, fk), 0), kLinearAttentionEps);
      if (student_out) *student_out = linear_attention(fq, fk, v, 0, stats);
      return weights_cross_entropy(P, lin);
    }
    case TransferObjective::OutputsMSE: {
      const Var out = linear_attention(feature_map(q, phi, stats), feature_map(k, phi, stats), v, 0, stats);
      if (student_out) *student_out = out;
      return mse(out, teacher);
    }
    case TransferObjective::HybridOutputsMSE: {
      const Var out = hybrid_attention(q, k, v, phi, win, hy, AblationMode::FullHybrid, stats);
      if (student_out) *student_out = out;
      return mse(out, teacher);
    }
  }
  throw std::logic_error("transfer_loss: unhandled objective");
}

Var sequence_transfer_loss(Model& model, Tape& tape, std::span<const int> tokens, const TransferSetup& setup,
                           AttentionStats* stats) {
  const std::size_t L = model.cfg.n_layers, H = model.cfg.n_heads;
  std::vector<std::vector<Var>> per_layer(L);
  const HeadAttentionFn fn = [&](std::size_t layer, std::size_t, const Var& q, const Var& k, const Var& v,
                                 const FeatureMapVars& phi) {
    Var student;
    per_layer[layer].push_back(
        transfer_loss(setup.objective, q, k, v, phi, setup.window, setup.hybrid, &student, stats));
    return detach(student);
  };
  AttentionSetup a;
  a.use_lora = false;
  forward(model, tape, tokens, a, &fn);
  Var total;
  for (std::size_t l = 0; l < L; ++l) {
    Var layer_sum = per_layer[l][0];
    for (std::size_t h = 1; h < H; ++h) layer_sum = add(layer_sum, per_layer[l][h]);
    const Var layer_mean = scale(layer_sum, 1.0 / static_cast<double>(H));
    total = total.valid() ? add(total, layer_mean) : layer_mean;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Shared training loop

namespace {

using Clock = std::chrono::steady_clock;

std::vector<std::size_t> shuffled(std::size_t n, SeededRng rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i)
    std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(i) - 1))]);
  return idx;
}

/// Builds the per-sequence loss on a tape for the current step.
using SequenceLoss = std::function<Var(Tape&, const Example&, AttentionStats*)>;
/// Called before each optimiser step; returns the loss to use for that step.
using StepPlanner = std::function<SequenceLoss(std::size_t step)>;

void train_epoch(Model& model, AdamW& opt, const std::vector<Example>& train, std::size_t step_examples,
                 const SeededRng& order_rng, const StepPlanner& planner, EpochRecord& rec) {
  const auto order = shuffled(train.size(), order_rng);
  double loss_sum = 0.0;
  std::size_t seen = 0;
  model.zero_grad();
  for (std::size_t begin = 0, step = 0; begin < order.size(); begin += step_examples, ++step) {
    const std::size_t end = std::min(order.size(), begin + step_examples);
    const SequenceLoss loss_fn = planner(step);
    AttentionStats stats;
    const double inv = 1.0 / static_cast<double>(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      Tape tape;
      const Var loss = loss_fn(tape, train[order[i]], &stats);
      loss_sum += loss.value()[0];
      ++seen;
      tape.backward(scale(loss, inv));
    }
    opt.step();
    model.zero_grad();
    ++rec.steps;
    rec.la_guard_hits += stats.la_guard_hits;
    rec.feature_map_warnings += stats.feature_map_warnings;
    rec.step_swa_grad_sq.push_back(stats.swa_grad_sq);
  }
  rec.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
}

double heldout_loss(const std::vector<Example>& heldout, const SequenceLoss& loss_fn) {
  if (heldout.empty()) return 0.0;
  double s = 0.0;
  for (const auto& ex : heldout) {
    Tape tape(false);
    s += loss_fn(tape, ex, nullptr).value()[0];
  }
  return s / static_cast<double>(heldout.size());
}

SeededRng stream(std::uint64_t seed, const std::string& stage, const char* what, std::size_t epoch) {
  return SeededRng(seed, stage + "/" + what + "/" + std::to_string(epoch));
}

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

SequenceLoss lm_sequence_loss(Model& model, AttentionSetup setup) {
  return [&model, setup](Tape& tape, const Example& ex, AttentionStats* stats) {
    AttentionSetup s = setup;
    s.stats = stats;
    return cross_entropy(forward(model, tape, ex.tokens, s), ex.targets);
  };
}

}  // namespace

StageReport run_attention_transfer(Model& model, const TransferSetup& setup, const TrainConfig& cfg,
                                   const std::vector<Example>& train, const std::vector<Example>& heldout,
                                   const EpochHook& hook) {
  cfg.validate();
  model.set_trainable(TrainGroup::Phi);
  AdamWConfig ac = cfg.adamw;
  ac.lr = cfg.lr_transfer;
  AdamW opt(model.parameters(), ac);
  ReduceOnPlateau plateau(cfg.plateau);
  const SequenceLoss loss_fn = [&](Tape& tape, const Example& ex, AttentionStats* stats) {
    return sequence_transfer_loss(model, tape, ex.tokens, setup, stats);
  };
  StageReport report;
  report.stage = "post-transfer";
  model.stage = "post-transfer";
  for (std::size_t epoch = 1; epoch <= cfg.transfer_epochs; ++epoch) {
    const auto t0 = Clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = opt.lr();
    train_epoch(model, opt, train, cfg.step_examples(), stream(cfg.seed, "transfer", "data", epoch),
                [&](std::size_t) { return loss_fn; }, rec);
    rec.heldout_loss = heldout_loss(heldout, loss_fn);
    opt.set_lr(plateau.step(rec.heldout_loss, opt.lr()));
    rec.wall_ms = ms_since(t0);
    if (hook) hook(model, rec);
    report.epochs.push_back(std::move(rec));
  }
  report.selected_epoch = cfg.transfer_epochs;
  for (auto* p : model.parameters()) p->trainable = false;
  return report;
}

StageReport pretrain(Model& model, const TrainConfig& cfg, const std::vector<Example>& train,
                     const std::vector<Example>& heldout, const EpochHook& hook) {
  cfg.validate();
  model.set_trainable(TrainGroup::Base);
  AdamWConfig ac = cfg.adamw;
  ac.lr = cfg.lr_pretrain;
  AdamW opt(model.parameters(), ac);
  ReduceOnPlateau plateau(cfg.plateau);
  AttentionSetup sm = AttentionSetup::softmax();
  sm.use_lora = false;
  const SequenceLoss loss_fn = lm_sequence_loss(model, sm);
  StageReport report;
  report.stage = "base";
  model.stage = "base";
  for (std::size_t epoch = 1; epoch <= cfg.pretrain_epochs; ++epoch) {
    const auto t0 = Clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = opt.lr();
    train_epoch(model, opt, train, cfg.step_examples(), stream(cfg.seed, "pretrain", "data", epoch),
                [&](std::size_t) { return loss_fn; }, rec);
    rec.heldout_loss = heldout_loss(heldout, loss_fn);
    opt.set_lr(plateau.step(rec.heldout_loss, opt.lr()));
    rec.wall_ms = ms_since(t0);
    if (hook) hook(model, rec);
    report.epochs.push_back(std::move(rec));
  }
  report.selected_epoch = cfg.pretrain_epochs;
  for (auto* p : model.parameters()) p->trainable = false;
  return report;
}

// ---------------------------------------------------------------------------
// Fine-tuning

namespace {

AdamW finetune_optimizer(Model& model, const TrainConfig& cfg, const FinetuneSpec& spec) {
  if (!model.has_lora()) throw ContractError("finetune: attach LoRA adapters first");
  model.set_trainable(spec.train_phi ? TrainGroup::LoraAndPhi : TrainGroup::Lora);
  AdamWConfig ac = cfg.adamw;
  ac.lr = cfg.lr_finetune;
  return AdamW(model.parameters(), ac);
}

}  // namespace

Finetuner::Finetuner(Model& model, const TrainConfig& cfg, FinetuneSpec spec)
    : model_(model), cfg_(cfg), spec_(std::move(spec)), opt_(finetune_optimizer(model, cfg, spec_)),
      plateau_(cfg.plateau) {
  cfg_.validate();
  spec_.hybrid.validate();
  if (spec_.ssd) spec_.ssd->validate();
}

EpochRecord Finetuner::run_epoch(const std::vector<Example>& train, const std::vector<Example>& heldout) {
  const auto t0 = Clock::now();
  const std::size_t epoch = ++epoch_;
  EpochRecord rec;
  rec.epoch = epoch;
  rec.lr = opt_.lr();
  WindowSpec win = spec_.window;
  if (spec_.ssd) win.window = spec_.ssd->window(epoch);
  SeededRng ssd_rng = stream(cfg_.seed, "finetune", "ssd", epoch);

  const StepPlanner planner = [&](std::size_t) -> SequenceLoss {
    AblationMode mode = spec_.train_mode;
    if (spec_.ssd) {
      const SSDDecision d = ssd_sample(*spec_.ssd, epoch, ssd_rng);
      if (d.drop_swa) {
        mode = AblationMode::LAOnly;
        ++rec.swa_drops;
      }
    }
    return lm_sequence_loss(model_, AttentionSetup::hybrid_mode(mode, spec_.hybrid, win));
  };
  train_epoch(model_, opt_, train, cfg_.step_examples(), stream(cfg_.seed, "finetune", "data", epoch), planner, rec);
  rec.heldout_loss =
      heldout_loss(heldout, lm_sequence_loss(model_, AttentionSetup::hybrid_mode(spec_.train_mode, spec_.hybrid, win)));
  opt_.set_lr(plateau_.step(rec.heldout_loss, opt_.lr()));
  model_.stage = "post-finetune";
  rec.wall_ms = ms_since(t0);
  return rec;
}

StageReport run_finetune(Model& model, const TrainConfig& cfg, const FinetuneSpec& spec,
                         const std::vector<Example>& train, const std::vector<Example>& heldout,
                         const EpochHook& hook) {
  Finetuner ft(model, cfg, spec);
  StageReport report;
  report.stage = "post-finetune";
  for (std::size_t e = 0; e < cfg.finetune_epochs; ++e) {
    EpochRecord rec = ft.run_epoch(train, heldout);
    if (hook) hook(model, rec);
    report.epochs.push_back(std::move(rec));
  }
  report.selected_epoch = cfg.finetune_epochs;
  for (auto* p : model.parameters()) p->trainable = false;
  return report;
}

// ---------------------------------------------------------------------------
// HedgeCATs

HedgeCATs::HedgeCATs(Model& model, TrainConfig cfg, HedgeCATsConfig hc, WindowSpec win, HybridSpec hy)
    : model_(model), cfg_(cfg), hc_(std::move(hc)), win_(win), hy_(hy) {}

StageReport HedgeCATs::stage1(const std::vector<Example>& train, const std::vector<Example>& heldout,
                              const EpochHook& hook) {
  TransferSetup ts{TransferObjective::WeightsCE, win_, hy_};
  StageReport r = run_attention_transfer(model_, ts, cfg_, train, heldout, hook);
  r.stage = "hedgecats-stage1";
  stage1_done_ = true;
  return r;
}

StageReport HedgeCATs::stage2(const std::vector<Example>& train, const std::vector<Example>& heldout,
                              const std::vector<Example>& early_stop, const EpochHook& hook) {
  if (!stage1_done_) throw ContractError("hedgecats: stage 2 requires stage 1 first");
  StageReport report;
  report.stage = "hedgecats-stage2";
  if (hc_.stage2_epochs == 0) return report;

  const Checkpoint stage1_snapshot = snapshot(model_);
  lora_attach(model_, hc_.targets, hc_.lora, cfg_.seed);
  FinetuneSpec spec;
  spec.hybrid = hy_;
  spec.window = win_;
  spec.train_phi = hc_.train_phi;
  Finetuner ft(model_, cfg_, spec);

  std::optional<Checkpoint> best;
  for (std::size_t e = 1; e <= hc_.stage2_epochs; ++e) {
    EpochRecord rec = ft.run_epoch(train, heldout);
    const double hybrid = evaluate(model_, early_stop, AttentionSetup::hybrid_mode(AblationMode::FullHybrid, hy_, win_)).accuracy;
    const double swa = evaluate(model_, early_stop, AttentionSetup::hybrid_mode(AblationMode::SWAOnly, hy_, win_)).accuracy;
    rec.metrics["hybrid_acc"] = hybrid;
    rec.metrics["swa_only_acc"] = swa;
    rec.metrics["gap"] = hybrid - swa;
    if (hook) hook(model_, rec);
    const bool positive = hybrid - swa > 0.0;
    if (positive) {
      best = snapshot(model_);
      report.selected_epoch = e;
    }
    report.epochs.push_back(std::move(rec));
    if (!positive) break;
  }
  model_ = restore(best ? *best : stage1_snapshot);
  for (auto* p : model_.parameters()) p->trainable = false;
  return report;
}

AttentionSetup inference_time_hybrid(const Model& model, const HybridSpec& hy, const WindowSpec& win) {
  if (model.stage == "base") throw ContractError("inference_time_hybrid: model has no converted LA path");
  hy.validate();
  return AttentionSetup::hybrid_mode(AblationMode::FullHybrid, hy, win);
}

}  // namespace hafx
