// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hafx/eval.hpp"
#include "hafx/model.hpp"
#include "hafx/optim.hpp"
#include "hafx/tasks.hpp"

namespace hafx {

enum class TransferObjective { WeightsCE, OutputsMSE, HybridOutputsMSE };

std::string_view to_string(TransferObjective o);
TransferObjective parse_transfer_objective(std::string_view s);

inline constexpr double kCrossEntropyLogEps = 1e-12;

/// Per-epoch dropout rates and window sizes; the last entry is held past the end.
struct SSDSchedule {
  std::vector<double> dropout_per_epoch{0.9, 0.75, 0.5};
  std::vector<std::size_t> window_per_epoch{32};

  double rate(std::size_t epoch) const;
  std::size_t window(std::size_t epoch) const;
  void validate() const;
  bool operator==(const SSDSchedule&) const = default;
};

struct SSDDecision {
  bool drop_swa = false;
  std::size_t window = 0;
  double rate = 0.0;
};

/// One draw per optimiser step. epoch is 1-based.
SSDDecision ssd_sample(const SSDSchedule& s, std::size_t epoch, SeededRng& rng);

struct TrainConfig {
  double lr_pretrain = 3e-3;
  double lr_transfer = 1e-2;
  double lr_finetune = 1e-4;
  AdamWConfig adamw{};  // lr field is overwritten per stage
  PlateauConfig plateau{};
  std::size_t pretrain_epochs = 8;
  std::size_t transfer_epochs = 1;
  std::size_t finetune_epochs = 3;
  std::size_t batch_size = 16;
  std::size_t grad_accum = 4;
  std::uint64_t seed = 0;

  std::size_t step_examples() const { return batch_size * grad_accum; }
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double heldout_loss = 0.0;
  double lr = 0.0;
  std::size_t steps = 0;
  std::size_t swa_drops = 0;
  std::size_t la_guard_hits = 0;
  std::size_t feature_map_warnings = 0;
  /// Squared norm of the gradient reaching the SWA branch, per step.
  std::vector<double> step_swa_grad_sq;
  std::map<std::string, double> metrics;
  std::string checkpoint;
  double wall_ms = 0.0;  // not part of equality

  bool same_result(const EpochRecord& o) const;
};

struct StageReport {
  std::string stage;
  std::vector<EpochRecord> epochs;
  std::size_t selected_epoch = 0;

  bool same_result(const StageReport& o) const;
  std::string to_jsonl() const;
};

/// Called after each epoch; may save a checkpoint and fill record.checkpoint.
using EpochHook = std::function<void(Model&, EpochRecord&)>;

/// Causal softmax attention probabilities (T x T, zeros above the diagonal).
Tensor causal_attention_weights(const Tensor& q, const Tensor& k);

/// mean_t -sum_i P(t,i) log(L(t,i) + 1e-12)
Var weights_cross_entropy(const Tensor& teacher, const Var& linear_weights);

/// Per-head transfer loss. The teacher is causal softmax over the same q, k, v.
/// When student_out is given it receives the student attention output.
Var transfer_loss(TransferObjective objective, const Var& q, const Var& k, const Var& v,
                  const FeatureMapVars& phi, const WindowSpec& win, const HybridSpec& hy,
                  Var* student_out = nullptr, AttentionStats* stats = nullptr);

struct TransferSetup {
  TransferObjective objective = TransferObjective::WeightsCE;
  WindowSpec window{};
  HybridSpec hybrid{};
};

/// Loss of one sequence: per-layer mean over heads, summed over layers. Each
/// layer's student output is detached and fed to the next layer.
Var sequence_transfer_loss(Model& model, Tape& tape, std::span<const int> tokens, const TransferSetup& setup,
                           AttentionStats* stats = nullptr);

/// Trains only the feature maps. Sets model.stage to "post-transfer".
StageReport run_attention_transfer(Model& model, const TransferSetup& setup, const TrainConfig& cfg,
                                   const std::vector<Example>& train, const std::vector<Example>& heldout,
                                   const EpochHook& hook = {});

/// Trains the base weights with causal softmax attention on next-token loss.
StageReport pretrain(Model& model, const TrainConfig& cfg, const std::vector<Example>& train,
                     const std::vector<Example>& heldout, const EpochHook& hook = {});

struct FinetuneSpec {
  AblationMode train_mode = AblationMode::FullHybrid;
  HybridSpec hybrid{};
  WindowSpec window{};
  std::optional<SSDSchedule> ssd;
  bool train_phi = false;
};

/// LoRA fine-tuning with optional scheduled SWA dropout. Expects adapters attached.
class Finetuner {
 public:
  Finetuner(Model& model, const TrainConfig& cfg, FinetuneSpec spec);

  /// Runs the next epoch (1-based) and steps the plateau scheduler.
  EpochRecord run_epoch(const std::vector<Example>& train, const std::vector<Example>& heldout);
  std::size_t epochs_done() const { return epoch_; }
  double lr() const { return opt_.lr(); }

 private:
  Model& model_;
  TrainConfig cfg_;
  FinetuneSpec spec_;
  AdamW opt_;
  ReduceOnPlateau plateau_;
  std::size_t epoch_ = 0;
};

StageReport run_finetune(Model& model, const TrainConfig& cfg, const FinetuneSpec& spec,
                         const std::vector<Example>& train, const std::vector<Example>& heldout,
                         const EpochHook& hook = {});

struct HedgeCATsConfig {
  std::size_t stage2_epochs = 2;
  LoRAConfig lora{};
  std::vector<Proj> targets{Proj::Q, Proj::K, Proj::V, Proj::O};
  bool train_phi = false;
};

/// Stage 1: LA-only attention-weights transfer. Stage 2: hybrid LoRA
/// fine-tuning, stopped once FullHybrid accuracy no longer beats SWAOnly on
/// the early-stop set; the last epoch with a positive gap is kept.
class HedgeCATs {
 public:
  HedgeCATs(Model& model, TrainConfig cfg, HedgeCATsConfig hc, WindowSpec win, HybridSpec hy);

  StageReport stage1(const std::vector<Example>& train, const std::vector<Example>& heldout,
                     const EpochHook& hook = {});
  StageReport stage2(const std::vector<Example>& train, const std::vector<Example>& heldout,
                     const std::vector<Example>& early_stop, const EpochHook& hook = {});

 private:
  Model& model_;
  TrainConfig cfg_;
  HedgeCATsConfig hc_;
  WindowSpec win_;
  HybridSpec hy_;
  bool stage1_done_ = false;
};

/// Evaluation setup adding SWA at inference to an LA-converted model.
/// Throws ContractError for a model still at the base stage.
AttentionSetup inference_time_hybrid(const Model& model, const HybridSpec& hy, const WindowSpec& win);

}  // namespace hafx
