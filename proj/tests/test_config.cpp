// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdlib>

#include "hafx/config.hpp"

using namespace hafx;

namespace {

// Returns the error raised by parse_config, or fails the test.
ConfigError parse_error(const std::string& text, const std::vector<std::string>& ov = {}) {
  try {
    parse_config(text, ov);
  } catch (const ConfigError& e) {
    return e;
  }
  FAIL("expected a ConfigError");
  return ConfigError("", 0, "");
}

}  // namespace

TEST_CASE("empty document gives the defaults") {
  const RunConfig c = parse_config("");
  CHECK(c == RunConfig{});
  CHECK(c.hybrid.g == 0.5);
  CHECK(c.window.window == 64);
  CHECK(c.window.sink_count == 8);
  CHECK(c.lora.rank == 8);
  CHECK(c.lora.alpha == 16.0);
  CHECK(c.train.lr_transfer == 1e-2);
  CHECK(c.train.lr_finetune == 1e-4);
  CHECK(c.train.step_examples() == 64);
  CHECK(c.lora_targets.size() == 4);
  CHECK(c.eval_modes.size() == 6);
  CHECK(parse_config("# only a comment\n") == c);
}

TEST_CASE("values are read from sections") {
  const RunConfig c = parse_config(R"(
model:
  d_model: 32
  n_heads: 2
attention:
  g: 0.25
  overlap: true
  activation: relu
lora:
  targets: [q, v]
ssd:
  enabled: true
  window: [4, 8, 16, 32, 64]
tasks:
  enabled: [assoc_recall]
eval:
  modes: [la_only, swa_only]
  window: 8
)");
  CHECK(c.model.d_model == 32);
  CHECK(c.hybrid.g == 0.25);
  CHECK(c.hybrid.overlap);
  CHECK(c.model.activation == Activation::ReLU);
  CHECK(c.lora_targets == std::vector<Proj>{Proj::Q, Proj::V});
  CHECK(c.ssd_enabled);
  CHECK(c.ssd.window(3) == 16);
  CHECK(c.tasks == std::vector<TaskKind>{TaskKind::AssocRecall});
  CHECK(c.eval_modes == std::vector<AblationMode>{AblationMode::LAOnly, AblationMode::SWAOnly});
  CHECK(c.eval_window_spec().window == 8);
  CHECK(c.finetune_spec().ssd.has_value());
}

TEST_CASE("range error names the key") {
  const auto e = parse_error("attention:\n  g: 1.5\n");
  CHECK(e.key() == "attention.g");
  CHECK(e.line() == 2);
  CHECK(std::string(e.what()).find("g") != std::string::npos);
  CHECK(std::string(e.what()).find("line 2") != std::string::npos);
}

TEST_CASE("unknown keys and sections are rejected with line info") {
  auto e = parse_error("model:\n  d_model: 32\n  depth: 3\n");
  CHECK(e.key() == "model.depth");
  CHECK(e.line() == 3);
  e = parse_error("\nmodels:\n  d_model: 32\n");
  CHECK(e.key() == "models");
  CHECK(e.line() == 2);
}

TEST_CASE("type mismatches are named") {
  CHECK(parse_error("model:\n  d_model: big\n").key() == "model.d_model");
  CHECK(parse_error("model:\n  d_model: -4\n").key() == "model.d_model");
  CHECK(parse_error("attention:\n  overlap: maybe\n").key() == "attention.overlap");
  CHECK(parse_error("attention:\n  g: [1]\n").key() == "attention.g");
  CHECK(parse_error("attention:\n  activation: tanh\n").key() == "attention.activation");
  CHECK(parse_error("lora:\n  targets: q\n").key() == "lora.targets");
  CHECK(parse_error("lora:\n  targets: [q, x]\n").key() == "lora.targets");
  CHECK(parse_error("ssd:\n  dropout: [0.5, 2]\n").key() == "ssd.dropout");
  CHECK(parse_error("model: 3\n").key() == "model");
  CHECK(parse_error("- a\n- b\n").key() == "<document>");
  CHECK(parse_error("model: [\n").key() == "<document>");
}

TEST_CASE("cross-field checks") {
  CHECK(parse_error("model:\n  d_model: 30\n  n_heads: 4\n").key() == "model");
  CHECK(parse_error("assoc_recall:\n  length: 10\n").key() == "assoc_recall");
  CHECK(parse_error("copy:\n  length: 300\n").key() == "copy.length");
  // disabled tasks are not checked
  CHECK_NOTHROW(parse_config("tasks:\n  enabled: [copy]\nassoc_recall:\n  length: 10\n"));
}

TEST_CASE("serialise then parse round trip") {
  RunConfig c;
  c.model.d_model = 64;
  c.model.n_heads = 4;
  c.model.phi_init_noise = 0.1234567890123;
  c.hybrid.g = 1.0 / 3.0;
  c.objective = TransferObjective::HybridOutputsMSE;
  c.lora_targets = {Proj::K, Proj::O};
  c.train.lr_pretrain = 2.5e-3;
  c.ssd_enabled = true;
  c.ssd.dropout_per_epoch = {0.9, 0.75, 0.5};
  c.tasks = {TaskKind::CharLM, TaskKind::AssocRecall};
  c.eval_modes = {AblationMode::HybridOverlap};
  c.out_dir = "runs/a b";
  c.run_id = "x1";
  const std::string text = serialize_config(c);
  const RunConfig back = parse_config(text);
  CHECK(back == c);
  CHECK(serialize_config(back) == text);
  CHECK(parse_config(serialize_config(RunConfig{})) == RunConfig{});
}

TEST_CASE("overrides") {
  const RunConfig c = parse_config("attention:\n  g: 0.25\n", {"attention.g=0.75", "eval.modes=[la_only]", "train.seed=9"});
  CHECK(c.hybrid.g == 0.75);
  CHECK(c.eval_modes == std::vector<AblationMode>{AblationMode::LAOnly});
  CHECK(c.train.seed == 9);
  auto e = parse_error("", {"attention.g=2"});
  CHECK(e.key() == "attention.g");
  CHECK(e.line() == 0);
  CHECK(parse_error("", {"attention.gg=0.1"}).key() == "attention.gg");
  CHECK(parse_error("", {"nonsense"}).line() == 0);
}

TEST_CASE("output dir environment override") {
  RunConfig c;
  c.out_dir = "from_config";
  ::unsetenv("HAFX_OUT_DIR");
  CHECK(resolve_out_dir(c) == "from_config");
  ::setenv("HAFX_OUT_DIR", "/tmp/elsewhere", 1);
  CHECK(resolve_out_dir(c) == "/tmp/elsewhere");
  ::unsetenv("HAFX_OUT_DIR");
}

TEST_CASE("load_config reports a missing file") {
  CHECK_THROWS_AS(load_config("/nonexistent/run.cfg"), ConfigError);
}
