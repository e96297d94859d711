// SPDX-License-Identifier: Apache-2.0
// Acceptance run: one PASS/FAIL line per criterion. Criterion 8 is a soft
// gate and never changes the exit code.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "../oracles.hpp"
#include "hafx/bench.hpp"
#include "hafx/checkpoint.hpp"
#include "hafx/cli.hpp"
#include "hafx/config.hpp"
#include "hafx/gradcheck.hpp"

namespace fs = std::filesystem;
using namespace hafx;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome c1_streaming_equivalence() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SeededRng rng(seed, "acceptance/c1");
    const auto T = static_cast<std::size_t>(rng.integer(1, 64));
    const std::size_t dp = seed % 2 ? 8 : 4;
    const std::size_t dv = static_cast<std::size_t>(rng.integer(1, 8));
    const std::size_t lag = static_cast<std::size_t>(rng.integer(0, 3));
    Tensor fq = rng.normal_tensor({T, 2 * dp}, 1.0), fk = rng.normal_tensor({T, 2 * dp}, 1.0);
    for (auto* x : {&fq, &fk})
      for (double& e : x->data()) e = std::exp(e);
    const Tensor v = rng.normal_tensor({T, dv}, 1.0);
    const Tensor got = linear_attention_streaming(fq, fk, v, lag);
    worst = std::max(worst, max_abs_diff(got, oracle::linear_attention(fq, fk, v, lag)));
    worst = std::max(worst, max_abs_diff(got, linear_attention_quadratic_oracle(fq, fk, v, lag)));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-10 && secs < 10.0, fmt("100 cases, max |diff| %.2e, %.2f s", worst, secs)};
}

constexpr std::size_t kNoRow = static_cast<std::size_t>(-1);

// Weighted sum with fixed random weights so every gradient entry is generic.
// skip_row gets weight zero; used where that output row is invariant to the
// inputs and its true gradient is exactly zero.
double check_op(const std::function<Var(std::span<const Var>)>& op, std::vector<Tensor> inputs, std::uint64_t seed,
                std::size_t skip_row = kNoRow) {
  Tape probe(false);
  std::vector<Var> vars;
  for (const auto& x : inputs) vars.push_back(probe.constant_ref(x));
  const auto shape = op(vars).value().shape();
  SeededRng rng(seed, "acceptance/c2-weights");
  Tensor w = rng.normal_tensor(shape, 1.0);
  if (skip_row != kNoRow)
    for (double& x : w.row(skip_row)) x = 0.0;
  const ScalarFn f = [&](Tape& t, std::span<const Var> in) { return sum(mul(op(in), t.constant(w))); };
  return finite_diff_check(f, inputs, 1e-5);
}

Outcome c2_gradients() {
  SeededRng rng(2, "acceptance/c2");
  auto r = [&](std::size_t a, std::size_t b, double sd = 1.0) { return rng.normal_tensor({a, b}, sd); };
  auto positive = [&](std::size_t a, std::size_t b) {
    Tensor t = r(a, b);
    for (auto& v : t.data()) v = 0.5 + std::abs(v);
    return t;
  };
  auto off_kink = [&](std::size_t a, std::size_t b) {
    Tensor t = r(a, b);
    for (auto& v : t.data()) v += v >= 0 ? 0.1 : -0.1;
    return t;
  };
  using Op = std::function<Var(std::span<const Var>)>;
  const std::vector<int> tokens{2, 0, 2, 1}, targets{1, -1, 4, 0};
  std::vector<std::tuple<std::string, Op, std::vector<Tensor>, std::size_t>> cases{
      {"add", [](auto in) { return add(in[0], in[1]); }, {r(3, 4), r(3, 4)}, kNoRow},
      {"sub", [](auto in) { return sub(in[0], in[1]); }, {r(3, 4), r(3, 4)}, kNoRow},
      {"mul", [](auto in) { return mul(in[0], in[1]); }, {r(3, 4), r(3, 4)}, kNoRow},
      {"scale", [](auto in) { return scale(in[0], -1.7); }, {r(3, 4)}, kNoRow},
      {"neg", [](auto in) { return neg(in[0]); }, {r(3, 4)}, kNoRow},
      {"square", [](auto in) { return square(in[0]); }, {r(3, 4)}, kNoRow},
      {"exp", [](auto in) { return exp(in[0]); }, {r(3, 4)}, kNoRow},
      {"relu", [](auto in) { return relu(in[0]); }, {off_kink(3, 4)}, kNoRow},
      {"one_plus_elu", [](auto in) { return one_plus_elu(in[0]); }, {off_kink(3, 4)}, kNoRow},
      {"gelu", [](auto in) { return gelu(in[0]); }, {r(3, 4)}, kNoRow},
      {"log_eps", [](auto in) { return log_eps(in[0], 1e-12); }, {positive(3, 4)}, kNoRow},
      {"add_bias", [](auto in) { return add_bias(in[0], in[1]); }, {r(3, 4), r(1, 4)}, kNoRow},
      {"matmul", [](auto in) { return matmul(in[0], in[1]); }, {r(3, 4), r(4, 5)}, kNoRow},
      {"matmul_nt", [](auto in) { return matmul_nt(in[0], in[1]); }, {r(3, 4), r(5, 4)}, kNoRow},
      {"transpose", [](auto in) { return transpose(in[0]); }, {r(3, 4)}, kNoRow},
      {"row_softmax", [](auto in) { return row_softmax(in[0]); }, {r(3, 5)}, kNoRow},
      {"row_normalize", [](auto in) { return row_normalize(in[0], 1e-6); }, {positive(3, 5)}, kNoRow},
      {"causal_mask", [](auto in) { return causal_mask(in[0], 1); }, {r(5, 5)}, kNoRow},
      {"concat_cols", [](auto in) { return concat_cols(in); }, {r(3, 2), r(3, 4)}, kNoRow},
      {"slice_cols", [](auto in) { return slice_cols(in[0], 1, 3); }, {r(3, 5)}, kNoRow},
      {"sum", [](auto in) { return sum(in[0]); }, {r(3, 5)}, kNoRow},
      {"mean", [](auto in) { return mean(in[0]); }, {r(3, 5)}, kNoRow},
      {"mse", [](auto in) { return mse(in[0], in[1]); }, {r(3, 5), r(3, 5)}, kNoRow},
      {"layer_norm", [](auto in) { return layer_norm(in[0], in[1], in[2]); }, {r(4, 6), r(1, 6), r(1, 6)}, kNoRow},
      {"embedding", [&](auto in) { return embedding(in[0], tokens); }, {r(3, 4)}, kNoRow},
      {"cross_entropy", [&](auto in) { return cross_entropy(in[0], targets); }, {r(4, 5)}, kNoRow},
  };
  const std::size_t T = 6, d = 4, dv = 3;
  for (const Band band : {Band::causal(), Band::window(2), Band::sinks(3)})
    cases.push_back({"softmax_attention", [band](auto in) { return softmax_attention(in[0], in[1], in[2], band); },
                     {r(T, d), r(T, d), r(T, dv)}, kNoRow});
  // Row `lag` sees a single key, so its output is v_0 whatever phi is.
  // That row is checked for a zero gradient below instead.
  double invariant_grad = 0.0;
  for (std::size_t lag : {0u, 2u}) {
    std::vector<Tensor> la{positive(T, d), positive(T, d), r(T, dv)};
    cases.push_back({"linear_attention", [lag](auto in) { return linear_attention(in[0], in[1], in[2], lag); }, la,
                     lag});
    Tape tape;
    const Var fq = tape.leaf(la[0]), fk = tape.leaf(la[1]), v = tape.leaf(la[2]);
    Tensor w({T, dv}, 0.0);
    for (double& x : w.row(lag)) x = 1.0;
    tape.backward(sum(mul(linear_attention(fq, fk, v, lag), tape.constant(w))));
    for (double g : fq.grad().row(lag)) invariant_grad = std::max(invariant_grad, std::abs(g));
  }
  cases.push_back({"rope", [d](auto in) { return rope(in[0], {10000.0, d}); }, {r(T, d)}, kNoRow});
  for (auto act : {Activation::Softmax, Activation::Exponential, Activation::OnePlusELU})
    cases.push_back({"feature_map", [act](auto in) { return feature_map(in[0], {in[1], in[2], act}); },
                     {r(T, d), r(d, 3, 0.5), rng.normal_tensor({3}, 0.1)}, kNoRow});
  for (bool overlap : {false, true})
    cases.push_back({"hybrid_attention",
                     [overlap](auto in) {
                       return hybrid_attention(in[0], in[1], in[2], {in[3], in[4], Activation::Softmax}, {2, 8},
                                               {0.5, overlap}, AblationMode::FullHybrid);
                     },
                     {r(T, d), r(T, d), r(T, dv), r(d, 2, 0.5), rng.normal_tensor({2}, 0.1)}, kNoRow});

  double worst = 0.0;
  std::string worst_name;
  std::uint64_t seed = 0;
  bool small = true;
  for (const auto& [name, op, inputs, skip] : cases) {
    for (const auto& x : inputs) small = small && x.size() <= 32;
    const double e = check_op(op, inputs, ++seed, skip);
    if (e > worst) worst = e, worst_name = name;
  }

  // Transfer losses, differentiated with respect to the feature map (the
  // teacher is a constant).
  const std::size_t Tl = 8;
  const Tensor q = r(Tl, d), k = r(Tl, d), v = r(Tl, d);
  const std::vector<Tensor> phi{r(d, 2, 0.5), rng.normal_tensor({2}, 0.1)};
  for (auto o : {TransferObjective::WeightsCE, TransferObjective::OutputsMSE, TransferObjective::HybridOutputsMSE}) {
    const ScalarFn f = [&, o](Tape& t, std::span<const Var> x) {
      return transfer_loss(o, t.constant(q), t.constant(k), t.constant(v), {x[0], x[1], Activation::Softmax},
                           {3, 8}, {0.5, false});
    };
    const double e = finite_diff_check(f, phi, 1e-5);
    if (e > worst) worst = e, worst_name = std::string(to_string(o));
  }
  const std::size_t n = cases.size() + 3;
  return {worst < 1e-4 && small && invariant_grad < 1e-12,
          fmt("%.0f checks incl. 3 transfer losses, step 1e-5, max rel err %.2e", static_cast<double>(n), worst) +
              " (" + worst_name + ")" + fmt(", single-key LA row grad %.1e", invariant_grad) +
              (small ? "" : ", input larger than 32")};
}

Outcome c3_branch_algebra() {
  SeededRng rng(3, "acceptance/c3");
  AttentionInputs in{rng.normal_tensor({32, 8}, 1.0), rng.normal_tensor({32, 8}, 1.0), rng.normal_tensor({32, 4}, 1.0)};
  const FeatureMapParams phi{rng.normal_tensor({8, 4}, 0.5), rng.normal_tensor({4}, 0.1), Activation::Softmax};
  double additivity = 0.0;
  for (bool overlap : {false, true}) {
    const HybridSpec hy{0.5, overlap};
    Tensor parts = hybrid_attention(in, phi, {8, 8}, hy, AblationMode::SWAOnly);
    parts += hybrid_attention(in, phi, {8, 8}, hy, AblationMode::LAOnly);
    additivity = std::max(additivity, max_abs_diff(parts, hybrid_attention(in, phi, {8, 8}, hy, AblationMode::FullHybrid)));
  }
  const Tensor none = hybrid_attention(in, phi, {8, 8}, {}, AblationMode::NoAttention);
  bool zero = true;
  for (double x : none.data()) zero = zero && x == 0.0;
  const double sinks = max_abs_diff(hybrid_attention(in, phi, {8, 32}, {}, AblationMode::SinksOnly),
                                    oracle::causal_attention(in.q, in.k, in.v));
  return {additivity < 1e-10 && zero && sinks < 1e-12,
          fmt("swa_only + la_only vs full_hybrid %.2e, ", additivity) +
              (zero ? "no_attention exactly zero" : "no_attention NONZERO") +
              fmt(", sinks_only with sinks >= T vs causal %.2e", sinks)};
}

Outcome c4_schedules() {
  SeededRng rng(4, "acceptance/c4");
  const SSDSchedule a{{0.9, 0.75, 0.5}, {32}};
  const SSDSchedule b{{0.5}, {4, 8, 16, 32, 64}};
  bool ok = ssd_sample(a, 1, rng).rate == 0.9 && ssd_sample(b, 3, rng).window == 16 &&
            ssd_sample(a, 7, rng).rate == 0.5 && ssd_sample(b, 9, rng).window == 64 &&
            ssd_sample(a, 2, rng).window == 32;

  ModelConfig c;
  c.vocab_size = 16;
  c.d_model = 16;
  c.n_layers = 2;
  c.n_heads = 2;
  c.mlp_width = 32;
  c.max_T = 16;
  c.seed = 4;
  TaskSpec s;
  s.vocab = 16;
  s.length = 14;
  s.n_pairs = 4;
  s.n_train = 32;
  s.n_eval = 8;
  const Dataset data = gen_task(s);
  Model m = init_model(c);
  lora_attach(m, kAllProjs, {}, 4);
  TrainConfig tc;
  tc.finetune_epochs = 1;
  tc.batch_size = 4;
  tc.grad_accum = 1;
  tc.lr_finetune = 1e-3;
  FinetuneSpec spec;
  spec.window = {4, 2};
  spec.ssd = SSDSchedule{{1.0}, {4}};
  const StageReport r = run_finetune(m, tc, spec, data.train, data.eval);
  const auto& e = r.epochs.at(0);
  bool starved = e.swa_drops == e.steps && e.step_swa_grad_sq.size() == e.steps;
  for (double g : e.step_swa_grad_sq) starved = starved && g == 0.0;
  return {ok && starved, std::string("epoch-1 rate 0.9, epoch-3 window 16, hold-last: ") + (ok ? "ok" : "wrong") +
                             "; dropout 1.0: " + std::to_string(e.swa_drops) + "/" + std::to_string(e.steps) +
                             " steps dropped, SWA grad " + (starved ? "zero every step" : "NONZERO")};
}

Outcome c5_lora() {
  ModelConfig c;
  c.vocab_size = 32;
  c.d_model = 32;
  c.n_layers = 2;
  c.n_heads = 4;
  c.mlp_width = 64;
  c.max_T = 24;
  c.seed = 5;
  Model m = init_model(c);
  const std::vector<int> tokens{1, 5, 9, 3, 3, 7, 0, 2, 8, 31, 4, 6, 1, 5};
  const auto setup = AttentionSetup::hybrid_mode(AblationMode::FullHybrid, {}, {4, 2});
  const Tensor before = forward_logits(m, tokens, setup);
  lora_attach(m, kAllProjs, {}, 5);
  const bool noop = bitwise_equal(forward_logits(m, tokens, setup), before);
  SeededRng rng(5, "acceptance/c5");
  for (auto& l : m.layers)
    for (auto& a : l.lora) a->B.value = rng.normal_tensor(a->B.value.shape(), 0.05);
  const Tensor adapted = forward_logits(m, tokens, setup);
  lora_merge(m);
  const double merge = max_abs_diff(forward_logits(m, tokens, setup), adapted);

  Model t = init_model(c);
  std::vector<Tensor> ref;
  for (const Parameter* p : t.parameters()) ref.push_back(p->value);
  TaskSpec s;
  s.vocab = 32;
  s.length = 20;
  s.n_pairs = 6;
  s.n_train = 32;
  s.n_eval = 8;
  const Dataset data = gen_task(s);
  TrainConfig tc;
  tc.batch_size = 8;
  tc.grad_accum = 1;
  run_attention_transfer(t, {}, tc, data.train, data.eval);
  const auto params = t.parameters();
  std::size_t phi_moved = 0, other_moved = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const bool same = bitwise_equal(params[i]->value, ref[i]);
    if (params[i]->name.find("phi") != std::string::npos)
      phi_moved += !same;
    else
      other_moved += !same;
  }
  const bool ok = noop && merge < 1e-12 && phi_moved > 0 && other_moved == 0;
  return {ok, std::string("zero-init no-op: ") + (noop ? "bit-equal" : "DIFFERS") + fmt(", merge diff %.2e", merge) +
                  ", transfer moved " + std::to_string(phi_moved) + " phi tensors and " +
                  std::to_string(other_moved) + " others"};
}

Outcome c6_recovered() {
  const double a = recovered_performance(65.56, 68.26), b = recovered_performance(34.40, 68.26);
  return {std::abs(a - 96.04) <= 0.01 && std::abs(b - 50.39) <= 0.01, fmt("%.4f and %.4f", a, b)};
}

Outcome c7_scaling() {
  const auto t0 = Clock::now();
  const BenchReport r = benchmark_scaling(BenchConfig{});
  const double secs = seconds_since(t0);
  const auto la = r.growth_ratios(kPathStreamingLA), sm = r.growth_ratios(kPathQuadraticSoftmax);
  bool ok = secs < 120.0;
  for (double x : la) ok = ok && x >= 1.6 && x <= 2.6;
  for (double x : sm) ok = ok && x >= 3.2 && x <= 5.2;
  const std::size_t aux = r.rows.front().aux_bytes;
  for (const auto& row : r.rows)
    if (row.path == kPathStreamingLA) ok = ok && row.aux_bytes == aux;
  std::string detail = "T 512/1024/2048, streaming ratios";
  for (double x : la) detail += fmt(" %.2f", x);
  detail += ", quadratic ratios";
  for (double x : sm) detail += fmt(" %.2f", x);
  detail += ", streaming state " + std::to_string(aux) + " bytes at every T" + fmt(", %.1f s", secs);
  return {ok, detail};
}

// Two accuracies on n scored positions agree when within 3 sigma of a
// binomial with their pooled mean.
bool close_3sigma(double a, double b, std::size_t n) {
  const double p = 0.5 * (a + b);
  return std::abs(a - b) <= 3.0 * std::sqrt(2.0 * p * (1.0 - p) / static_cast<double>(n));
}

Outcome c8_collapse(const fs::path& recipes) {
  const auto t0 = Clock::now();
  const RunConfig cc = load_config((recipes / "collapse.cfg").string());
  const RunConfig hc = load_config((recipes / "hedgecats.cfg").string());
  const Dataset data = gen_task(cc.task_spec(TaskKind::AssocRecall));
  const double chance = chance_accuracy(data.spec);
  const WindowSpec eval_win = cc.eval_window_spec();

  Model base = init_model(cc.model);
  pretrain(base, cc.train, data.train, data.eval);
  round_to_storage(base);
  const Checkpoint base_ckpt = snapshot(base);
  const double base_acc = evaluate(base, data.eval, AttentionSetup::softmax()).accuracy;

  // hybrid-objective leg
  Model hyb = restore(base_ckpt);
  run_attention_transfer(hyb, {TransferObjective::HybridOutputsMSE, cc.window, cc.hybrid}, cc.train, data.train,
                         data.eval);
  auto acc = [&](Model& m, AblationMode mode, const HybridSpec& hy) {
    return evaluate(m, data.eval, AttentionSetup::hybrid_mode(mode, hy, eval_win));
  };
  const TaskScore full = acc(hyb, AblationMode::FullHybrid, cc.hybrid);
  const TaskScore swa = acc(hyb, AblationMode::SWAOnly, cc.hybrid);
  const TaskScore la = acc(hyb, AblationMode::LAOnly, cc.hybrid);
  const std::size_t n = la.n_scored;
  const double sigma0 = binomial_sigma(chance, n);
  const bool la_at_chance = std::abs(la.accuracy - chance) <= 3.0 * sigma0;
  const bool swa_matches = close_3sigma(swa.accuracy, full.accuracy, n);

  // weights-transfer leg (HedgeCATs stage 1)
  Model wce = restore(base_ckpt);
  HedgeCATs h(wce, hc.train, hc.hedgecats(), hc.window, hc.hybrid);
  h.stage1(data.train, data.eval);
  const TaskScore la_w = acc(wce, AblationMode::LAOnly, hc.hybrid);
  const bool la_w_above = la_w.accuracy - chance > 3.0 * sigma0;

  const double secs = seconds_since(t0);
  const bool ok = la_at_chance && swa_matches && la_w_above && secs < 1800.0;
  std::string d = fmt("base %.3f, chance %.4f, 3sigma %.4f; ", base_acc, chance, 3.0 * sigma0);
  d += fmt("hybrid-MSE: full %.3f swa_only %.3f la_only %.3f", full.accuracy, swa.accuracy, la.accuracy);
  d += std::string(" [la~chance ") + (la_at_chance ? "yes" : "no") + ", swa~full " + (swa_matches ? "yes" : "no") + "]";
  d += fmt("; weights-CE la_only %.3f", la_w.accuracy) + " [>chance+3sigma " + (la_w_above ? "yes" : "no") + "]";
  d += fmt(", %.0f s", secs);
  return {ok, d};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome c9_determinism(const fs::path& recipes) {
  const fs::path root = fs::temp_directory_path() / "hafx_acceptance_c9";
  fs::remove_all(root);
  // recipes are shrunk so two runs of each fit in the test budget
  const std::vector<std::string> shrink{"--set", "assoc_recall.n_train=160", "--set", "assoc_recall.n_eval=32",
                                        "--set", "pretrain.epochs=1",        "--set", "hedgecats.early_stop_examples=32"};
  const std::vector<std::pair<std::string, std::string>> runs{
      {"transfer", "collapse.cfg"}, {"hedgecats", "hedgecats.cfg"}, {"ssd-run", "ssd_schedule.cfg"}};
  std::size_t compared = 0;
  std::string bad;
  for (const auto& [cmd, cfg] : runs) {
    for (const char* rep : {"a", "b"}) {
      std::vector<std::string> args{cmd, "--config", (recipes / cfg).string(), "--out", (root / cfg / rep).string()};
      args.insert(args.end(), shrink.begin(), shrink.end());
      std::ostringstream out, err;
      if (run_cli(args, out, err) != 0) return {false, cfg + " failed: " + err.str()};
    }
    for (const auto& entry : fs::recursive_directory_iterator(root / cfg / "a")) {
      const auto ext = entry.path().extension();
      if (ext != ".hafx" && ext != ".csv") continue;
      const fs::path other = root / cfg / "b" / fs::relative(entry.path(), root / cfg / "a");
      ++compared;
      if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) bad += " " + entry.path().filename().string();
    }
  }
  fs::remove_all(root);
  return {bad.empty() && compared > 0,
          std::to_string(compared) + " checkpoint/CSV files compared across reruns of 3 recipes" +
              (bad.empty() ? ", all byte-identical" : ", differing:" + bad)};
}

}  // namespace

int main() {
  const fs::path recipes(HAFX_RECIPE_DIR);
  struct Criterion {
    int id;
    const char* name;
    bool soft;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all{
      {1, "streaming LA equals the quadratic oracle", false, c1_streaming_equivalence},
      {2, "finite-difference gradient checks", false, c2_gradients},
      {3, "branch algebra", false, c3_branch_algebra},
      {4, "SSD schedule semantics", false, c4_schedules},
      {5, "LoRA contracts and transfer isolation", false, c5_lora},
      {6, "recovered performance arithmetic", false, c6_recovered},
      {7, "scaling benchmark", false, c7_scaling},
      {8, "collapse reproduction (soft gate)", true, [&] { return c8_collapse(recipes); }},
      {9, "recipe determinism", false, [&] { return c9_determinism(recipes); }},
  };
  int hard_failures = 0;
  for (const auto& c : all) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass && !c.soft) ++hard_failures;
    std::cout << "criterion " << c.id << " " << (o.pass ? "PASS" : c.soft ? "FAIL (soft, not gating)" : "FAIL") << ": "
              << c.name << ": " << o.detail << std::endl;
  }
  return hard_failures == 0 ? 0 : 1;
}
