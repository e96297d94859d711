// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace hafx {

enum class TaskKind { AssocRecall, Copy, CharLM };

std::string_view to_string(TaskKind k);
TaskKind parse_task_kind(std::string_view s);

struct TaskSpec {
  TaskKind kind = TaskKind::AssocRecall;
  std::size_t length = 48;
  std::size_t vocab = 64;
  std::size_t n_train = 512;
  std::size_t n_eval = 256;
  std::uint64_t seed = 0;
  std::size_t n_pairs = 12;  // AssocRecall only

  void validate() const;
  bool operator==(const TaskSpec&) const = default;
};

/// targets[t] is the token expected after position t, or -1 when unscored.
struct Example {
  std::vector<int> tokens;
  std::vector<int> targets;
  bool operator==(const Example&) const = default;
};

struct Dataset {
  TaskSpec spec;
  std::vector<Example> train;
  std::vector<Example> eval;
};

/// Deterministic given spec. Eval examples never repeat a training sequence.
/// Throws std::invalid_argument when the pattern does not fit in `length`.
Dataset gen_task(const TaskSpec& spec);

/// AssocRecall layout: k1 v1 ... kn vn MARK q a q a ...; token 0 is the marker,
/// keys and values split the remaining vocabulary.
struct AssocRecallVocab {
  int marker = 0;
  int key_begin = 1, key_end = 1;      // [begin, end)
  int value_begin = 1, value_end = 1;  // [begin, end)
  std::size_t n_values() const { return static_cast<std::size_t>(value_end - value_begin); }
};
AssocRecallVocab assoc_recall_vocab(std::size_t vocab);

/// Accuracy of a uniform random guess over the answer alphabet.
double chance_accuracy(const TaskSpec& spec);

/// Bundled public-domain text used by CharLM.
std::string_view charlm_corpus();

}  // namespace hafx
