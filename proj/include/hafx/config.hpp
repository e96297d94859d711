// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hafx/conversion.hpp"

namespace hafx {

/// Names the offending key; line is 1-based, 0 for command-line overrides.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string key, std::size_t line, const std::string& msg);
  const std::string& key() const { return key_; }
  std::size_t line() const { return line_; }

 private:
  std::string key_;
  std::size_t line_;
};

struct TaskSizes {
  std::size_t length = 48;
  std::size_t n_train = 512;
  std::size_t n_eval = 256;
  std::size_t n_pairs = 12;  // assoc_recall only
  bool operator==(const TaskSizes&) const = default;
};

struct RunConfig {
  ModelConfig model{};  // activation and feature_dim come from the attention section
  WindowSpec window{};
  HybridSpec hybrid{};
  TransferObjective objective = TransferObjective::WeightsCE;
  LoRAConfig lora{};
  std::vector<Proj> lora_targets{Proj::Q, Proj::K, Proj::V, Proj::O};
  TrainConfig train{};
  AblationMode finetune_mode = AblationMode::FullHybrid;
  bool finetune_phi = false;
  bool ssd_enabled = false;
  SSDSchedule ssd{};
  std::size_t hedgecats_stage2_epochs = 2;
  bool hedgecats_train_phi = false;
  std::size_t hedgecats_early_stop = 64;  // carved from the end of each training set
  std::vector<TaskKind> tasks{TaskKind::AssocRecall, TaskKind::Copy, TaskKind::CharLM};
  std::uint64_t task_seed = 0;
  TaskSizes assoc_recall{};
  TaskSizes copy{};
  TaskSizes char_lm{};
  std::vector<AblationMode> eval_modes{std::begin(kAllAblationModes), std::end(kAllAblationModes)};
  std::size_t eval_window = 0;  // 0 means attention.window
  std::string out_dir = "out";
  std::string run_id = "run";

  TaskSpec task_spec(TaskKind k) const;
  WindowSpec eval_window_spec() const;
  FinetuneSpec finetune_spec() const;
  HedgeCATsConfig hedgecats() const;
  bool operator==(const RunConfig&) const = default;
};

/// Parses a YAML document of sections. Empty text gives the defaults.
/// overrides are "section.key=value" strings applied on top of the text.
RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {});
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

/// Writes every key; parse_config(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& c);

/// HAFX_OUT_DIR when set, otherwise c.out_dir.
std::string resolve_out_dir(const RunConfig& c);

}  // namespace hafx
