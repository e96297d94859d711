// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hafx/checkpoint.hpp"
#include "hafx/cli.hpp"
#include "hafx/report.hpp"

namespace fs = std::filesystem;
using namespace hafx;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hafx_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small enough to run a whole pipeline in well under a second.
const char* kTinyConfig = R"(
model:
  vocab_size: 16
  d_model: 16
  n_layers: 1
  n_heads: 2
  mlp_width: 32
  max_T: 16
  seed: 2
attention:
  window: 4
  sinks: 2
pretrain:
  epochs: 1
train:
  batch_size: 8
  grad_accum: 1
  seed: 2
finetune:
  epochs: 1
hedgecats:
  stage2_epochs: 1
  early_stop_examples: 8
tasks:
  enabled: [assoc_recall, copy]
assoc_recall:
  length: 12
  n_pairs: 3
  n_train: 24
  n_eval: 8
copy:
  length: 9
  n_train: 24
  n_eval: 8
)";

fs::path tiny_config(const fs::path& dir) {
  const fs::path p = dir / "tiny.cfg";
  std::ofstream(p) << kTinyConfig;
  return p;
}

// The first four columns of each CSV row.
std::string key_columns(const std::string& csv) {
  std::stringstream in(csv);
  std::string out;
  for (std::string line; std::getline(in, line);) {
    std::size_t pos = 0;
    for (int i = 0; i < 4; ++i) pos = line.find(',', pos) + 1;
    out += line.substr(0, pos - 1) + "\n";
  }
  return out;
}

}  // namespace

TEST_CASE("usage errors exit 2") {
  auto r = cli({});
  CHECK(r.code == 2);
  CHECK(r.err.find("Usage") != std::string::npos);
  r = cli({"frobnicate"});
  CHECK(r.code == 2);
  CHECK(r.err.find("Usage") != std::string::npos);
  r = cli({"bench", "--nope"});
  CHECK(r.code == 2);
  CHECK(r.err.find("Usage") != std::string::npos);
  r = cli({"ablate"});
  CHECK(r.code == 2);
  CHECK(cli({"transfer", "--config", "/nonexistent.cfg"}).code == 2);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("pipeline failures exit 1 with a diagnostic") {
  const auto dir = scratch("fail");
  std::ofstream(dir / "bad.cfg") << "attention:\n  g: 1.5\n";
  auto r = cli({"transfer", "--config", (dir / "bad.cfg").string(), "--out", dir.string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("attention.g") != std::string::npos);
  std::ofstream(dir / "junk.hafx") << "nope";
  r = cli({"ablate", "--ckpt", (dir / "junk.hafx").string(), "--out", dir.string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("error") != std::string::npos);
  CHECK(cli({"bench", "--T", "512,256"}).code == 1);
  CHECK(cli({"report", "--out", (dir / "empty").string()}).code == 1);
}

TEST_CASE("transfer then ablate") {
  const auto dir = scratch("ablate");
  const auto cfg = tiny_config(dir);
  auto r = cli({"transfer", "--config", cfg.string(), "--out", (dir / "t").string()});
  REQUIRE(r.code == 0);
  for (const char* f : {"base.hafx", "transfer.hafx", "ckpt/base-e1.hafx", "ckpt/post-transfer-e1.hafx",
                        "config.yaml", "stages.jsonl", "transfer_eval.csv", "report.csv"})
    CHECK(fs::exists(dir / "t" / f));
  CHECK(load_checkpoint(dir / "t" / "transfer.hafx").stage == "post-transfer");

  r = cli({"ablate", "--ckpt", (dir / "t" / "transfer.hafx").string(), "--modes", "all", "--out", (dir / "a").string()});
  CHECK(r.code == 1);  // default tasks are longer than the tiny model's max_T
  CHECK(r.err.find("max_T") != std::string::npos);
  r = cli({"ablate", "--config", cfg.string(), "--ckpt", (dir / "t" / "transfer.hafx").string(), "--modes", "all",
           "--out", (dir / "a").string()});
  REQUIRE(r.code == 0);
  // 2 tasks x (base + 6 modes) x 2 metrics + 7 averages + header
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 2 * 7 * 2 + 7 + 1);
  CHECK(slurp(dir / "a" / "ablate.csv") == r.out);
  const std::string golden = slurp(fs::path(HAFX_GOLDEN_DIR) / "ablate_keys.csv");
  CHECK(key_columns(r.out) == golden);

  r = cli({"eval", "--config", cfg.string(), "--ckpt", (dir / "t" / "transfer.hafx").string(), "--modes", "la_only",
           "--out", (dir / "a").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("swa_only") == std::string::npos);
  CHECK(r.out.find("la_only") != std::string::npos);

  r = cli({"report", "--out", (dir / "a").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("stage post-transfer") != std::string::npos);
  CHECK(r.out.find("hybrid_overlap") != std::string::npos);
  CHECK(read_report((dir / "a" / "report.csv").string()).size() == 2 * 7 * 2 + 7 + 2 * 2 * 2 + 2);
}

TEST_CASE("finetune, ssd-run and hedgecats pipelines") {
  const auto dir = scratch("pipes");
  const auto cfg = tiny_config(dir);
  auto r = cli({"transfer", "--config", cfg.string(), "--out", (dir / "t").string()});
  REQUIRE(r.code == 0);
  const std::string ckpt = (dir / "t" / "transfer.hafx").string();
  r = cli({"finetune", "--config", cfg.string(), "--ckpt", ckpt, "--out", (dir / "f").string()});
  REQUIRE(r.code == 0);
  CHECK(load_checkpoint(dir / "f" / "finetune.hafx").stage == "post-finetune");
  CHECK(!fs::exists(dir / "f" / "base.hafx"));
  r = cli({"ssd-run", "--config", cfg.string(), "--ckpt", ckpt, "--out", (dir / "s").string(), "--set",
           "ssd.dropout=[1.0]"});
  REQUIRE(r.code == 0);
  // every step drops the SWA branch
  const std::string jl = slurp(dir / "s" / "stages.jsonl");
  CHECK(jl.find("\"swa_drops\":6,") != std::string::npos);
  CHECK(jl.find("\"steps\":6,") != std::string::npos);
  r = cli({"hedgecats", "--config", cfg.string(), "--out", (dir / "h").string()});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "h" / "hedgecats-stage1.hafx"));
  CHECK(fs::exists(dir / "h" / "hedgecats.hafx"));
  CHECK(slurp(dir / "h" / "stages.jsonl").find("hedgecats-stage2") != std::string::npos);
}

TEST_CASE("pipelines are byte-identical on rerun") {
  const auto dir = scratch("det");
  const auto cfg = tiny_config(dir);
  for (const char* sub : {"a", "b"})
    REQUIRE(cli({"hedgecats", "--config", cfg.string(), "--out", (dir / sub).string()}).code == 0);
  for (const char* f : {"base.hafx", "hedgecats-stage1.hafx", "hedgecats.hafx", "hedgecats_eval.csv", "report.csv",
                        "config.yaml"})
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
}

TEST_CASE("resuming from an emitted checkpoint reproduces downstream results") {
  const auto dir = scratch("resume");
  const auto cfg = tiny_config(dir);
  REQUIRE(cli({"finetune", "--config", cfg.string(), "--out", (dir / "full").string()}).code == 0);
  REQUIRE(cli({"finetune", "--config", cfg.string(), "--ckpt", (dir / "full" / "transfer.hafx").string(), "--out",
               (dir / "resumed").string()})
              .code == 0);
  CHECK(slurp(dir / "full" / "finetune.hafx") == slurp(dir / "resumed" / "finetune.hafx"));
  CHECK(slurp(dir / "full" / "finetune_eval.csv") == slurp(dir / "resumed" / "finetune_eval.csv"));
}

TEST_CASE("bench contract") {
  const auto dir = scratch("bench");
  const auto r = cli({"bench", "--T", "16,32", "--reps", "3", "--out", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("path,T,median_ms,aux_bytes\n", 0) == 0);
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 5);
  CHECK(slurp(dir / "bench.csv") == r.out);
}

TEST_CASE("output dir from the environment") {
  const auto dir = scratch("env");
  const auto cfg = tiny_config(dir);
  ::setenv("HAFX_OUT_DIR", (dir / "envout").string().c_str(), 1);
  const auto r = cli({"transfer", "--config", cfg.string(), "--set", "pretrain.epochs=0"});
  ::unsetenv("HAFX_OUT_DIR");
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "envout" / "transfer.hafx"));
}

TEST_CASE("report csv round trip") {
  const auto dir = scratch("report");
  const std::vector<ReportRow> rows{{"r1", "post-transfer", "base", "avg", "accuracy", 0.5},
                                    {"r1", "post-transfer", "la_only", "avg", "accuracy", 0.25}};
  append_report((dir / "report.csv").string(), rows);
  append_report((dir / "report.csv").string(), {rows[1]});
  CHECK(slurp(dir / "report.csv") ==
        "run_id,stage,mode,task,metric,value\n"
        "r1,post-transfer,base,avg,accuracy,0.500000\n"
        "r1,post-transfer,la_only,avg,accuracy,0.250000\n"
        "r1,post-transfer,la_only,avg,accuracy,0.250000\n");
  const auto back = read_report((dir / "report.csv").string());
  CHECK(back.size() == 3);
  CHECK(back[0] == rows[0]);
  const auto summary = summarize_report(back);
  CHECK(summary.find("la_only\t25.00\t50.00") != std::string::npos);
  std::ofstream(dir / "bad.csv") << "a,b\n";
  CHECK_THROWS_AS(read_report((dir / "bad.csv").string()), std::runtime_error);
}
