// SPDX-License-Identifier: Apache-2.0
#include "hafx/eval.hpp"

#include <cmath>
#include <cstdio>

namespace hafx {

TaskScore evaluate(Model& model, const std::vector<Example>& examples, const AttentionSetup& setup) {
  TaskScore s;
  double loss_sum = 0.0;
  for (const auto& ex : examples) {
    const Tensor logits = forward_logits(model, ex.tokens, setup);
    for (std::size_t t = 0; t < ex.targets.size(); ++t) {
      const int target = ex.targets[t];
      if (target < 0) continue;
      const auto row = logits.row(t);
      std::size_t best = 0;
      double m = row[0];
      for (std::size_t c = 1; c < row.size(); ++c)
        if (row[c] > m) {
          m = row[c];
          best = c;
        }
      double z = 0.0;
      for (double x : row) z += std::exp(x - m);
      loss_sum += std::log(z) + m - row[static_cast<std::size_t>(target)];
      s.n_correct += best == static_cast<std::size_t>(target);
      ++s.n_scored;
    }
  }
  if (s.n_scored > 0) {
    s.accuracy = static_cast<double>(s.n_correct) / static_cast<double>(s.n_scored);
    s.loss = loss_sum / static_cast<double>(s.n_scored);
  }
  return s;
}

double recovered_performance(double mode_avg, double base_avg) {
  if (!(base_avg > 0.0)) throw ContractError("recovered_performance: base average must be > 0");
  return 100.0 * mode_avg / base_avg;
}

double binomial_sigma(double p, std::size_t n) {
  if (n == 0) return 0.0;
  return std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

const EvalRow* EvalReport::find(const std::string& mode, const std::string& task, const std::string& metric) const {
  for (const auto& r : rows)
    if (r.mode == mode && r.task == task && r.metric == metric) return &r;
  return nullptr;
}

std::string EvalReport::to_csv(bool header) const {
  std::string out;
  if (header) out += std::string(kEvalCsvHeader) + "\n";
  char buf[64];
  for (const auto& r : rows) {
    out += r.stage + "," + r.mode + "," + r.task + "," + r.metric + ",";
    std::snprintf(buf, sizeof buf, "%.6f", r.value);
    out += buf;
    out += ",";
    if (r.recovered_pct) {
      std::snprintf(buf, sizeof buf, "%.2f", *r.recovered_pct);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

EvalReport evaluate_ablations(Model& model, const std::vector<Dataset>& tasks, const AblationSpec& spec) {
  EvalReport report;
  const std::size_t n_modes = spec.modes.size();
  std::vector<double> base_acc;
  std::vector<std::vector<double>> acc(n_modes);
  auto recovered = [](double v, double base) -> std::optional<double> {
    if (!(base > 0.0)) return std::nullopt;
    return recovered_performance(v, base);
  };

  for (const auto& task : tasks) {
    const std::string name(to_string(task.spec.kind));
    AttentionSetup base = AttentionSetup::softmax();
    base.use_lora = false;
    const TaskScore b = evaluate(model, task.eval, base);
    base_acc.push_back(b.accuracy);
    report.rows.push_back({model.stage, "base", name, "accuracy", b.accuracy, recovered(b.accuracy, b.accuracy)});
    report.rows.push_back({model.stage, "base", name, "loss", b.loss, std::nullopt});
    for (std::size_t i = 0; i < n_modes; ++i) {
      const auto setup = AttentionSetup::hybrid_mode(spec.modes[i], spec.hybrid, spec.window);
      const TaskScore s = evaluate(model, task.eval, setup);
      acc[i].push_back(s.accuracy);
      const std::string mode(to_string(spec.modes[i]));
      report.rows.push_back({model.stage, mode, name, "accuracy", s.accuracy, recovered(s.accuracy, b.accuracy)});
      report.rows.push_back({model.stage, mode, name, "loss", s.loss, std::nullopt});
    }
  }
  if (tasks.empty()) return report;
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  const double base_avg = mean(base_acc);
  report.rows.push_back({model.stage, "base", "avg", "accuracy", base_avg, recovered(base_avg, base_avg)});
  for (std::size_t i = 0; i < n_modes; ++i) {
    const double a = mean(acc[i]);
    report.rows.push_back({model.stage, std::string(to_string(spec.modes[i])), "avg", "accuracy", a, recovered(a, base_avg)});
  }
  return report;
}

}  // namespace hafx
