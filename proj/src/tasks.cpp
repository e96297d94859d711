// SPDX-License-Identifier: Apache-2.0
#include "hafx/tasks.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>
#include <stdexcept>

#include "hafx/rng.hpp"

namespace hafx {

std::string_view to_string(TaskKind k) {
  switch (k) {
    case TaskKind::AssocRecall: return "assoc_recall";
    case TaskKind::Copy: return "copy";
    case TaskKind::CharLM: return "char_lm";
  }
  return "?";
}

TaskKind parse_task_kind(std::string_view s) {
  for (TaskKind k : {TaskKind::AssocRecall, TaskKind::Copy, TaskKind::CharLM})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown task '" + std::string(s) + "'");
}

std::string_view charlm_corpus() {
  // Gettysburg Address (public domain).
  return "Four score and seven years ago our fathers brought forth on this continent, a new nation, "
         "conceived in Liberty, and dedicated to the proposition that all men are created equal. "
         "Now we are engaged in a great civil war, testing whether that nation, or any nation so "
         "conceived and so dedicated, can long endure. We are met on a great battle-field of that war. "
         "We have come to dedicate a portion of that field, as a final resting place for those who here "
         "gave their lives that that nation might live. It is altogether fitting and proper that we "
         "should do this. But, in a larger sense, we can not dedicate -- we can not consecrate -- we can "
         "not hallow -- this ground. The brave men, living and dead, who struggled here, have consecrated "
         "it, far above our poor power to add or detract. The world will little note, nor long remember "
         "what we say here, but it can never forget what they did here. It is for us the living, rather, "
         "to be dedicated here to the unfinished work which they who fought here have thus far so nobly "
         "advanced. It is rather for us to be here dedicated to the great task remaining before us -- that "
         "from these honored dead we take increased devotion to that cause for which they gave the last "
         "full measure of devotion -- that we here highly resolve that these dead shall not have died in "
         "vain -- that this nation, under God, shall have a new birth of freedom -- and that government "
         "of the people, by the people, for the people, shall not perish from the earth.";
}

namespace {

struct CharText {
  std::vector<int> ids;
  std::size_t alphabet = 0;
};

CharText char_text() {
  std::string text;
  for (char c : charlm_corpus()) text += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  std::array<int, 256> map{};
  map.fill(-1);
  std::set<unsigned char> chars(text.begin(), text.end());
  int next = 0;
  for (unsigned char c : chars) map[c] = next++;
  CharText out;
  out.alphabet = chars.size();
  for (char c : text) out.ids.push_back(map[static_cast<unsigned char>(c)]);
  return out;
}

}  // namespace

AssocRecallVocab assoc_recall_vocab(std::size_t vocab) {
  if (vocab < 3) throw std::invalid_argument("assoc_recall: vocab must be >= 3");
  AssocRecallVocab v;
  const int n_keys = static_cast<int>((vocab - 1) / 2);
  v.key_begin = 1;
  v.key_end = 1 + n_keys;
  v.value_begin = v.key_end;
  v.value_end = static_cast<int>(vocab);
  return v;
}

void TaskSpec::validate() const {
  const std::string name(to_string(kind));
  if (n_train == 0 || n_eval == 0) throw std::invalid_argument(name + ": n_train and n_eval must be >= 1");
  switch (kind) {
    case TaskKind::AssocRecall: {
      const auto v = assoc_recall_vocab(vocab);
      if (n_pairs == 0) throw std::invalid_argument(name + ": n_pairs must be >= 1");
      if (n_pairs > static_cast<std::size_t>(v.key_end - v.key_begin))
        throw std::invalid_argument(name + ": n_pairs exceeds the number of distinct keys");
      if (length < 2 * n_pairs + 3) throw std::invalid_argument(name + ": length too small for n_pairs plus one query");
      break;
    }
    case TaskKind::Copy:
      if (vocab < 2) throw std::invalid_argument(name + ": vocab must be >= 2");
      if (length < 3) throw std::invalid_argument(name + ": length must be >= 3");
      break;
    case TaskKind::CharLM: {
      const auto ct = char_text();
      if (ct.alphabet > vocab) throw std::invalid_argument(name + ": corpus alphabet exceeds vocab");
      const std::size_t eval_len = ct.ids.size() / 10;
      if (length < 1 || length + 1 > eval_len) throw std::invalid_argument(name + ": length does not fit the corpus split");
      break;
    }
  }
}

double chance_accuracy(const TaskSpec& spec) {
  switch (spec.kind) {
    case TaskKind::AssocRecall: return 1.0 / static_cast<double>(assoc_recall_vocab(spec.vocab).n_values());
    case TaskKind::Copy: return 1.0 / static_cast<double>(spec.vocab - 1);
    case TaskKind::CharLM: return 1.0 / static_cast<double>(char_text().alphabet);
  }
  return 0.0;
}

namespace {

int pick(SeededRng& rng, int begin, int end) { return static_cast<int>(rng.integer(begin, end - 1)); }

Example assoc_recall_example(const TaskSpec& s, SeededRng& rng) {
  const auto v = assoc_recall_vocab(s.vocab);
  std::vector<int> keys;
  for (int k = v.key_begin; k < v.key_end; ++k) keys.push_back(k);
  // partial Fisher-Yates for distinct keys
  for (std::size_t i = 0; i < s.n_pairs; ++i)
    std::swap(keys[i], keys[static_cast<std::size_t>(rng.integer(static_cast<std::int64_t>(i),
                                                                 static_cast<std::int64_t>(keys.size()) - 1))]);
  std::vector<int> values(s.n_pairs);
  for (auto& x : values) x = pick(rng, v.value_begin, v.value_end);

  Example ex;
  for (std::size_t i = 0; i < s.n_pairs; ++i) {
    ex.tokens.push_back(keys[i]);
    ex.tokens.push_back(values[i]);
  }
  ex.tokens.push_back(v.marker);
  ex.targets.assign(ex.tokens.size(), -1);
  while (ex.tokens.size() + 2 <= s.length) {
    const auto j = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(s.n_pairs) - 1));
    ex.tokens.push_back(keys[j]);
    ex.targets.push_back(values[j]);
    ex.tokens.push_back(values[j]);
    ex.targets.push_back(-1);
  }
  while (ex.tokens.size() < s.length) {
    ex.tokens.push_back(v.marker);
    ex.targets.push_back(-1);
  }
  return ex;
}

Example copy_example(const TaskSpec& s, SeededRng& rng) {
  const std::size_t L = (s.length - 1) / 2;
  std::vector<int> seq(L);
  for (auto& x : seq) x = pick(rng, 1, static_cast<int>(s.vocab));
  Example ex;
  ex.tokens = seq;
  ex.tokens.push_back(0);
  ex.tokens.insert(ex.tokens.end(), seq.begin(), seq.end());
  ex.targets.assign(ex.tokens.size(), -1);
  for (std::size_t i = 0; i < L; ++i) ex.targets[L + i] = seq[i];
  while (ex.tokens.size() < s.length) {
    ex.tokens.push_back(0);
    ex.targets.push_back(-1);
  }
  return ex;
}

Example char_window(const std::vector<int>& ids, std::size_t offset, std::size_t T) {
  Example ex;
  ex.tokens.assign(ids.begin() + static_cast<std::ptrdiff_t>(offset),
                   ids.begin() + static_cast<std::ptrdiff_t>(offset + T));
  ex.targets.assign(ids.begin() + static_cast<std::ptrdiff_t>(offset + 1),
                    ids.begin() + static_cast<std::ptrdiff_t>(offset + T + 1));
  return ex;
}

}  // namespace

Dataset gen_task(const TaskSpec& spec) {
  spec.validate();
  Dataset d;
  d.spec = spec;
  SeededRng rng(spec.seed, "task/" + std::string(to_string(spec.kind)));

  if (spec.kind == TaskKind::CharLM) {
    const auto ct = char_text();
    const std::size_t split = ct.ids.size() - ct.ids.size() / 10;
    const std::vector<int> train_ids(ct.ids.begin(), ct.ids.begin() + static_cast<std::ptrdiff_t>(split));
    const std::vector<int> eval_ids(ct.ids.begin() + static_cast<std::ptrdiff_t>(split), ct.ids.end());
    const auto max_train = static_cast<std::int64_t>(train_ids.size() - spec.length - 1);
    for (std::size_t i = 0; i < spec.n_train; ++i)
      d.train.push_back(char_window(train_ids, static_cast<std::size_t>(rng.integer(0, max_train)), spec.length));
    const std::set<std::vector<int>> seen = [&] {
      std::set<std::vector<int>> s;
      for (const auto& e : d.train) s.insert(e.tokens);
      return s;
    }();
    // eval covers the held-out tail with evenly spaced windows
    const std::size_t n_off = eval_ids.size() - spec.length;
    const std::size_t n = std::min(spec.n_eval, n_off);
    for (std::size_t i = 0; i < n; ++i) {
      auto ex = char_window(eval_ids, i * n_off / n, spec.length);
      if (!seen.count(ex.tokens)) d.eval.push_back(std::move(ex));
    }
    return d;
  }

  auto make = [&] { return spec.kind == TaskKind::AssocRecall ? assoc_recall_example(spec, rng) : copy_example(spec, rng); };
  std::set<std::vector<int>> seen;
  for (std::size_t i = 0; i < spec.n_train; ++i) {
    d.train.push_back(make());
    seen.insert(d.train.back().tokens);
  }
  std::size_t attempts = 0;
  while (d.eval.size() < spec.n_eval) {
    if (++attempts > 100 * spec.n_eval) throw std::invalid_argument("gen_task: cannot draw enough unseen eval examples");
    auto ex = make();
    if (seen.insert(ex.tokens).second) d.eval.push_back(std::move(ex));
  }
  return d;
}

}  // namespace hafx
