// SPDX-License-Identifier: Apache-2.0
#include "hafx/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <optional>

#include "hafx/bench.hpp"
#include "hafx/checkpoint.hpp"
#include "hafx/config.hpp"
#include "hafx/report.hpp"

namespace fs = std::filesystem;

namespace hafx {

namespace {

struct Options {
  std::string config;
  std::string ckpt;
  std::string out;
  std::vector<std::string> sets;
  std::string modes;
  std::string T = "512,1024,2048";
  std::size_t reps = 5;
};

struct Data {
  std::vector<Dataset> tasks;
  std::vector<Example> train, heldout;
};

// Shared state of one pipeline run.
class Run {
 public:
  Run(const Options& o, std::ostream& out, std::ostream& log) : out_(out), log_(log) {
    cfg_ = o.config.empty() ? parse_config("", o.sets) : load_config(o.config, o.sets);
    dir_ = o.out.empty() ? fs::path(resolve_out_dir(cfg_)) : fs::path(o.out);
    fs::create_directories(dir_ / "ckpt");
    std::ofstream(dir_ / "config.yaml", std::ios::binary) << serialize_config(cfg_);
  }

  const RunConfig& cfg() const { return cfg_; }

  // Tasks are generated for the loaded model's vocabulary.
  void adopt(const Model& m) {
    cfg_.model = m.cfg;
    data_.reset();
    for (TaskKind k : cfg_.tasks) {
      if (cfg_.task_spec(k).length > m.cfg.max_T)
        throw ConfigError(std::string(to_string(k)) + ".length", 0, "exceeds the checkpoint's max_T");
    }
  }

  const Data& data() {
    if (data_) return *data_;
    Data d;
    for (TaskKind k : cfg_.tasks) {
      d.tasks.push_back(gen_task(cfg_.task_spec(k)));
      const auto& t = d.tasks.back();
      d.train.insert(d.train.end(), t.train.begin(), t.train.end());
      d.heldout.insert(d.heldout.end(), t.eval.begin(), t.eval.end());
    }
    data_ = std::move(d);
    return *data_;
  }

  // Rounds to storage precision and saves one checkpoint per epoch.
  EpochHook hook(const std::string& label) {
    return [this, label](Model& m, EpochRecord& rec) {
      round_to_storage(m);
      const std::string rel = "ckpt/" + label + "-e" + std::to_string(rec.epoch) + ".hafx";
      save_checkpoint(snapshot(m), dir_ / rel);
      rec.checkpoint = rel;
      char buf[160];
      std::snprintf(buf, sizeof buf, "[%s] epoch %zu train %.4f heldout %.4f lr %g", label.c_str(), rec.epoch,
                    rec.train_loss, rec.heldout_loss, rec.lr);
      log_ << buf;
      for (const auto& [k, v] : rec.metrics) log_ << " " << k << " " << v;
      log_ << "\n";
    };
  }

  void log_stage(const StageReport& r) {
    std::ofstream(dir_ / "stages.jsonl", std::ios::app | std::ios::binary) << r.to_jsonl();
  }

  void save(const Model& m, const std::string& name) { save_checkpoint(snapshot(m), dir_ / (name + ".hafx")); }

  Model base_model(const std::string& ckpt) {
    if (!ckpt.empty()) return restore(load_checkpoint(ckpt));
    log_ << "no --ckpt given, pretraining a base model\n";
    Model m = init_model(cfg_.model);
    log_stage(pretrain(m, cfg_.train, data().train, data().heldout, hook("base")));
    save(m, "base");
    return m;
  }

  // Runs the transfer stage when the model has not been converted yet.
  void ensure_converted(Model& m) {
    if (m.stage != "base") return;
    const TransferSetup ts{cfg_.objective, cfg_.window, cfg_.hybrid};
    log_stage(run_attention_transfer(m, ts, cfg_.train, data().train, data().heldout, hook("post-transfer")));
    save(m, "transfer");
  }

  void emit_eval(Model& m, const std::string& name, const std::vector<AblationMode>& modes) {
    AblationSpec spec;
    spec.modes = modes;
    spec.hybrid = cfg_.hybrid;
    spec.window = cfg_.eval_window_spec();
    const EvalReport r = evaluate_ablations(m, data().tasks, spec);
    const std::string csv = r.to_csv();
    std::ofstream(dir_ / (name + ".csv"), std::ios::binary) << csv;
    append_report((dir_ / "report.csv").string(), report_rows(cfg_.run_id, r));
    out_ << csv;
  }

 private:
  RunConfig cfg_;
  fs::path dir_;
  std::optional<Data> data_;
  std::ostream& out_;
  std::ostream& log_;
};

std::vector<AblationMode> parse_modes(const std::string& s, const std::vector<AblationMode>& fallback) {
  if (s.empty()) return fallback;
  if (s == "all") return {std::begin(kAllAblationModes), std::end(kAllAblationModes)};
  std::vector<AblationMode> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(parse_ablation_mode(item));
  return out;
}

int cmd_transfer(const Options& o, std::ostream& out, std::ostream& err) {
  Run run(o, out, err);
  Model m = run.base_model(o.ckpt);
  const TransferSetup ts{run.cfg().objective, run.cfg().window, run.cfg().hybrid};
  run.log_stage(run_attention_transfer(m, ts, run.cfg().train, run.data().train, run.data().heldout,
                                       run.hook("post-transfer")));
  run.save(m, "transfer");
  run.emit_eval(m, "transfer_eval", run.cfg().eval_modes);
  return 0;
}

int cmd_finetune(const Options& o, std::ostream& out, std::ostream& err, bool force_ssd) {
  Run run(o, out, err);
  Model m = run.base_model(o.ckpt);
  run.ensure_converted(m);
  if (!m.has_lora()) lora_attach(m, run.cfg().lora_targets, run.cfg().lora, run.cfg().train.seed);
  FinetuneSpec spec = run.cfg().finetune_spec();
  if (force_ssd) spec.ssd = run.cfg().ssd;
  const std::string name = force_ssd ? "ssd" : "finetune";
  run.log_stage(run_finetune(m, run.cfg().train, spec, run.data().train, run.data().heldout, run.hook(name)));
  run.save(m, name);
  run.emit_eval(m, name + "_eval", run.cfg().eval_modes);
  return 0;
}

int cmd_hedgecats(const Options& o, std::ostream& out, std::ostream& err) {
  Run run(o, out, err);
  Model m = run.base_model(o.ckpt);
  // the early-stop set is carved from the end of each task's training split
  const std::size_t k = run.cfg().hedgecats_early_stop;
  std::vector<Example> train, early_stop;
  for (const auto& t : run.data().tasks) {
    if (t.train.size() <= k)
      throw ConfigError("hedgecats.early_stop_examples", 0, "must be smaller than every task's n_train");
    train.insert(train.end(), t.train.begin(), t.train.end() - static_cast<std::ptrdiff_t>(k));
    early_stop.insert(early_stop.end(), t.train.end() - static_cast<std::ptrdiff_t>(k), t.train.end());
  }
  HedgeCATs hc(m, run.cfg().train, run.cfg().hedgecats(), run.cfg().window, run.cfg().hybrid);
  run.log_stage(hc.stage1(train, run.data().heldout, run.hook("hedgecats-stage1")));
  run.save(m, "hedgecats-stage1");
  run.log_stage(hc.stage2(train, run.data().heldout, early_stop, run.hook("hedgecats-stage2")));
  run.save(m, "hedgecats");
  run.emit_eval(m, "hedgecats_eval", run.cfg().eval_modes);
  return 0;
}

int cmd_eval(const Options& o, std::ostream& out, std::ostream& err, bool ablate) {
  if (o.ckpt.empty()) {
    err << "error: --ckpt is required\n";
    return 2;
  }
  Run run(o, out, err);
  Model m = restore(load_checkpoint(o.ckpt));
  run.adopt(m);
  const auto fallback = ablate ? std::vector<AblationMode>(std::begin(kAllAblationModes), std::end(kAllAblationModes))
                               : run.cfg().eval_modes;
  run.emit_eval(m, ablate ? "ablate" : "eval", parse_modes(o.modes, fallback));
  return 0;
}

int cmd_bench(const Options& o, std::ostream& out, std::ostream& err) {
  BenchConfig bc;
  bc.T_list = parse_T_list(o.T);
  bc.reps = o.reps;
  const BenchReport r = benchmark_scaling(bc);
  const std::string csv = r.to_csv();
  out << csv;
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    std::ofstream(fs::path(o.out) / "bench.csv", std::ios::binary) << csv;
  }
  for (const char* path : {kPathStreamingLA, kPathQuadraticSoftmax}) {
    err << path << " growth:";
    for (double x : r.growth_ratios(path)) err << " " << x;
    err << "\n";
  }
  return 0;
}

int cmd_report(const Options& o, std::ostream& out) {
  RunConfig cfg = o.config.empty() ? parse_config("", o.sets) : load_config(o.config, o.sets);
  const fs::path dir = o.out.empty() ? fs::path(resolve_out_dir(cfg)) : fs::path(o.out);
  out << summarize_report(read_report((dir / "report.csv").string()));
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"hafx: hybrid attention conversion experiments", "hafx"};
  app.require_subcommand(1, 1);
  Options o;

  auto common = [&](CLI::App* s, bool ckpt) {
    s->add_option("--config", o.config, "run config file")->check(CLI::ExistingFile);
    s->add_option("--out", o.out, "output directory (overrides config and HAFX_OUT_DIR)");
    s->add_option("--set", o.sets, "override, section.key=value (repeatable)");
    if (ckpt) s->add_option("--ckpt", o.ckpt, "input checkpoint");
  };
  auto* transfer = app.add_subcommand("transfer", "attention transfer, then ablation eval");
  auto* finetune = app.add_subcommand("finetune", "LoRA fine-tuning, then ablation eval");
  auto* hedgecats = app.add_subcommand("hedgecats", "two-stage HedgeCATs conversion");
  auto* ssd = app.add_subcommand("ssd-run", "fine-tuning with scheduled sliding-window dropout");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  auto* ablate = app.add_subcommand("ablate", "evaluate a checkpoint under every ablation mode");
  auto* bench = app.add_subcommand("bench", "streaming LA vs quadratic softmax timing");
  auto* report = app.add_subcommand("report", "summarise report.csv");
  for (auto* s : {transfer, finetune, hedgecats, ssd, eval, ablate}) common(s, true);
  common(report, false);
  for (auto* s : {eval, ablate}) s->add_option("--modes", o.modes, "all or a comma list of modes");
  bench->add_option("--T", o.T, "comma list of increasing sequence lengths");
  bench->add_option("--reps", o.reps, "timed repetitions (>= 3)");
  bench->add_option("--out", o.out, "directory for bench.csv");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  }

  try {
    if (*transfer) return cmd_transfer(o, out, err);
    if (*finetune) return cmd_finetune(o, out, err, false);
    if (*ssd) return cmd_finetune(o, out, err, true);
    if (*hedgecats) return cmd_hedgecats(o, out, err);
    if (*eval) return cmd_eval(o, out, err, false);
    if (*ablate) return cmd_eval(o, out, err, true);
    if (*bench) return cmd_bench(o, out, err);
    if (*report) return cmd_report(o, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace hafx
