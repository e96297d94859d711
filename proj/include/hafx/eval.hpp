// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "hafx/model.hpp"
#include "hafx/tasks.hpp"

namespace hafx {

struct TaskScore {
  double accuracy = 0.0;
  double loss = 0.0;
  std::size_t n_scored = 0;
  std::size_t n_correct = 0;
};

/// Full-vocabulary argmax accuracy and mean cross-entropy over scored positions.
TaskScore evaluate(Model& model, const std::vector<Example>& examples, const AttentionSetup& setup);

/// 100 * mode_avg / base_avg. Throws ContractError when base_avg <= 0.
double recovered_performance(double mode_avg, double base_avg);

/// Standard error of a binomial proportion.
double binomial_sigma(double p, std::size_t n);

struct EvalRow {
  std::string stage;
  std::string mode;
  std::string task;
  std::string metric;
  double value = 0.0;
  std::optional<double> recovered_pct;
};

inline constexpr const char* kEvalCsvHeader = "stage,mode,task,metric,value,recovered_pct";

struct EvalReport {
  std::vector<EvalRow> rows;

  const EvalRow* find(const std::string& mode, const std::string& task, const std::string& metric) const;
  std::string to_csv(bool header = true) const;
};

struct AblationSpec {
  std::vector<AblationMode> modes{std::begin(kAllAblationModes), std::end(kAllAblationModes)};
  HybridSpec hybrid{};
  WindowSpec window{};
};

/// One accuracy and one loss row per (task, mode), a "base" row per task from
/// the same weights with causal softmax and adapters off, and an "avg" task.
EvalReport evaluate_ablations(Model& model, const std::vector<Dataset>& tasks, const AblationSpec& spec);

}  // namespace hafx
