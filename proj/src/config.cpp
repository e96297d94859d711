// SPDX-License-Identifier: Apache-2.0
#include "hafx/config.hpp"

#include <yaml-cpp/yaml.h>

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace hafx {

ConfigError::ConfigError(std::string key, std::size_t line, const std::string& msg)
    : std::invalid_argument("config: " + (line ? "line " + std::to_string(line) : std::string("override")) + ": '" +
                            key + "': " + msg),
      key_(std::move(key)),
      line_(line) {}

TaskSpec RunConfig::task_spec(TaskKind k) const {
  const TaskSizes& s = k == TaskKind::AssocRecall ? assoc_recall : k == TaskKind::Copy ? copy : char_lm;
  TaskSpec t;
  t.kind = k;
  t.length = s.length;
  t.vocab = model.vocab_size;
  t.n_train = s.n_train;
  t.n_eval = s.n_eval;
  t.n_pairs = s.n_pairs;
  t.seed = task_seed;
  return t;
}

WindowSpec RunConfig::eval_window_spec() const {
  WindowSpec w = window;
  if (eval_window) w.window = eval_window;
  return w;
}

FinetuneSpec RunConfig::finetune_spec() const {
  FinetuneSpec f;
  f.train_mode = finetune_mode;
  f.hybrid = hybrid;
  f.window = window;
  if (ssd_enabled) f.ssd = ssd;
  f.train_phi = finetune_phi;
  return f;
}

HedgeCATsConfig RunConfig::hedgecats() const {
  HedgeCATsConfig h;
  h.stage2_epochs = hedgecats_stage2_epochs;
  h.lora = lora;
  h.targets = lora_targets;
  h.train_phi = hedgecats_train_phi;
  return h;
}

namespace {

Proj parse_proj(std::string_view s) {
  for (Proj p : kAllProjs)
    if (to_string(p) == s) return p;
  throw std::invalid_argument("unknown projection '" + std::string(s) + "'");
}

std::size_t line_of(const YAML::Node& n) { return n.Mark().is_null() ? 0 : static_cast<std::size_t>(n.Mark().line) + 1; }

// One section of the document. Each get() marks its key as known.
class Section {
 public:
  Section(std::string name, YAML::Node node, const std::set<std::string>& overridden)
      : name_(std::move(name)), node_(std::move(node)), overridden_(overridden) {}

  template <class T, class Check = std::nullptr_t>
  void get(const char* key, T& out, Check check = nullptr) {
    known_.insert(key);
    if (!node_) return;
    const YAML::Node v = node_[key];
    if (!v) return;
    const std::string full = name_ + "." + key;
    const std::size_t line = overridden_.count(full) ? 0 : line_of(v);
    try {
      out = convert<T>(v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(full, line, e.what());
    } catch (const YAML::Exception&) {
      throw ConfigError(full, line, std::string("type mismatch, expected ") + type_name<T>());
    }
    if constexpr (!std::is_same_v<Check, std::nullptr_t>) {
      if (const std::string why = check(out); !why.empty()) throw ConfigError(full, line, why);
    }
  }

  void reject_unknown() const {
    if (!node_) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      const std::string full = name_ + "." + key;
      if (!known_.count(key)) throw ConfigError(full, overridden_.count(full) ? 0 : line_of(kv.first), "unknown key");
    }
  }

 private:
  template <class T>
  static const char* type_name() {
    if constexpr (std::is_same_v<T, bool>) return "bool";
    else if constexpr (std::is_integral_v<T>) return "non-negative integer";
    else if constexpr (std::is_floating_point_v<T>) return "number";
    else if constexpr (std::is_same_v<T, std::string>) return "string";
    else return "list";
  }

  static std::string scalar(const YAML::Node& v) {
    if (!v.IsScalar()) throw YAML::Exception(v.Mark(), "not a scalar");
    return v.Scalar();
  }

  template <class T>
  static T convert(const YAML::Node& v) {
    if constexpr (std::is_same_v<T, bool> || std::is_floating_point_v<T>) {
      scalar(v);
      return v.as<T>();
    } else if constexpr (std::is_integral_v<T>) {
      const std::string s = scalar(v);
      if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) throw YAML::Exception(v.Mark(), s);
      return static_cast<T>(std::stoull(s));
    } else if constexpr (std::is_same_v<T, std::string>) {
      return scalar(v);
    } else if constexpr (std::is_same_v<T, Activation>) {
      return parse_activation(scalar(v));
    } else if constexpr (std::is_same_v<T, TransferObjective>) {
      return parse_transfer_objective(scalar(v));
    } else if constexpr (std::is_same_v<T, AblationMode>) {
      return parse_ablation_mode(scalar(v));
    } else {
      if (!v.IsSequence()) throw YAML::Exception(v.Mark(), "not a list");
      T out;
      for (const auto& item : v) out.push_back(convert<typename T::value_type>(item));
      return out;
    }
  }

  template <class T>
    requires std::is_same_v<T, Proj> || std::is_same_v<T, TaskKind>
  static T convert(const YAML::Node& v) {
    if constexpr (std::is_same_v<T, Proj>) return parse_proj(scalar(v));
    else return parse_task_kind(scalar(v));
  }

  std::string name_;
  YAML::Node node_;
  const std::set<std::string>& overridden_;
  std::set<std::string> known_;
};

std::string positive(std::size_t x) { return x >= 1 ? "" : "must be >= 1"; }
std::string nonneg(double x) { return x >= 0.0 ? "" : "must be >= 0"; }
std::string gt0(double x) { return x > 0.0 ? "" : "must be > 0"; }
std::string unit(double x) { return x >= 0.0 && x <= 1.0 ? "" : "out of range [0, 1]"; }
std::string unit_open(double x) { return x >= 0.0 && x < 1.0 ? "" : "out of range [0, 1)"; }
template <class V>
std::string nonempty(const V& v) {
  return v.empty() ? "must not be empty" : "";
}

const char* const kSections[] = {"model",  "attention", "lora",      "pretrain", "transfer",
                                 "finetune", "train",   "ssd",       "hedgecats", "tasks",
                                 "assoc_recall", "copy", "char_lm",  "eval",     "output"};

// Returns the "section.key" it set.
std::string apply_override(YAML::Node& root, const std::string& ov) {
  const auto eq = ov.find('=');
  const auto dot = ov.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq)
    throw ConfigError(ov, 0, "override must look like section.key=value");
  const std::string section = ov.substr(0, dot), key = ov.substr(dot + 1, eq - dot - 1);
  YAML::Node value;
  try {
    value = YAML::Load(ov.substr(eq + 1));
  } catch (const YAML::Exception& e) {
    throw ConfigError(section + "." + key, 0, e.msg);
  }
  if (!root[section]) root[section] = YAML::Node(YAML::NodeType::Map);
  YAML::Node s = root[section];
  if (!s.IsMap()) throw ConfigError(section, 0, "section is not a mapping");
  s[key] = value;
  return section + "." + key;
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("<document>", static_cast<std::size_t>(e.mark.line) + 1, e.msg);
  }
  if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  if (!root.IsMap()) throw ConfigError("<document>", line_of(root), "top level must be a mapping of sections");
  std::set<std::string> overridden;
  for (const auto& ov : overrides) overridden.insert(apply_override(root, ov));

  const std::set<std::string> sections(std::begin(kSections), std::end(kSections));
  for (const auto& kv : root) {
    const auto name = kv.first.as<std::string>();
    if (!sections.count(name)) throw ConfigError(name, line_of(kv.first), "unknown section");
    if (!kv.second.IsMap() && !kv.second.IsNull())
      throw ConfigError(name, line_of(kv.second), "section must be a mapping");
  }

  RunConfig c;
  auto sec = [&](const char* name) { return Section(name, root[name] ? root[name] : YAML::Node(), overridden); };

  {
    auto s = sec("model");
    s.get("vocab_size", c.model.vocab_size, positive);
    s.get("d_model", c.model.d_model, positive);
    s.get("n_layers", c.model.n_layers, positive);
    s.get("n_heads", c.model.n_heads, positive);
    s.get("mlp_width", c.model.mlp_width, positive);
    s.get("max_T", c.model.max_T, positive);
    s.get("seed", c.model.seed);
    s.get("phi_init_noise", c.model.phi_init_noise, nonneg);
    s.get("rope_base", c.model.rope_base, gt0);
    s.reject_unknown();
  }
  {
    auto s = sec("attention");
    s.get("activation", c.model.activation);
    s.get("feature_dim", c.model.feature_dim);
    s.get("window", c.window.window, positive);
    s.get("sinks", c.window.sink_count, positive);
    s.get("g", c.hybrid.g, unit);
    s.get("overlap", c.hybrid.overlap);
    s.reject_unknown();
  }
  {
    auto s = sec("lora");
    s.get("rank", c.lora.rank, positive);
    s.get("alpha", c.lora.alpha, gt0);
    s.get("targets", c.lora_targets, nonempty<std::vector<Proj>>);
    s.reject_unknown();
  }
  {
    auto s = sec("pretrain");
    s.get("epochs", c.train.pretrain_epochs);
    s.get("lr", c.train.lr_pretrain, nonneg);
    s.reject_unknown();
  }
  {
    auto s = sec("transfer");
    s.get("objective", c.objective);
    s.get("epochs", c.train.transfer_epochs);
    s.get("lr", c.train.lr_transfer, nonneg);
    s.reject_unknown();
  }
  {
    auto s = sec("finetune");
    s.get("epochs", c.train.finetune_epochs);
    s.get("lr", c.train.lr_finetune, nonneg);
    s.get("mode", c.finetune_mode);
    s.get("train_phi", c.finetune_phi);
    s.reject_unknown();
  }
  {
    auto s = sec("train");
    s.get("batch_size", c.train.batch_size, positive);
    s.get("grad_accum", c.train.grad_accum, positive);
    s.get("seed", c.train.seed);
    s.get("beta1", c.train.adamw.beta1, unit_open);
    s.get("beta2", c.train.adamw.beta2, unit_open);
    s.get("eps", c.train.adamw.eps, gt0);
    s.get("weight_decay", c.train.adamw.weight_decay, nonneg);
    s.get("plateau_factor", c.train.plateau.factor, [](double x) {
      return x > 0.0 && x < 1.0 ? "" : "out of range (0, 1)";
    });
    s.get("plateau_patience", c.train.plateau.patience);
    s.get("plateau_min_delta", c.train.plateau.min_delta, nonneg);
    s.get("plateau_min_lr", c.train.plateau.min_lr, nonneg);
    s.reject_unknown();
  }
  {
    auto s = sec("ssd");
    s.get("enabled", c.ssd_enabled);
    s.get("dropout", c.ssd.dropout_per_epoch, [](const std::vector<double>& v) {
      if (v.empty()) return std::string("must not be empty");
      for (double x : v)
        if (!(x >= 0.0 && x <= 1.0)) return std::string("rates out of range [0, 1]");
      return std::string();
    });
    s.get("window", c.ssd.window_per_epoch, [](const std::vector<std::size_t>& v) {
      if (v.empty()) return std::string("must not be empty");
      for (auto x : v)
        if (x == 0) return std::string("windows must be >= 1");
      return std::string();
    });
    s.reject_unknown();
  }
  {
    auto s = sec("hedgecats");
    s.get("stage2_epochs", c.hedgecats_stage2_epochs);
    s.get("train_phi", c.hedgecats_train_phi);
    s.get("early_stop_examples", c.hedgecats_early_stop, positive);
    s.reject_unknown();
  }
  {
    auto s = sec("tasks");
    s.get("enabled", c.tasks, nonempty<std::vector<TaskKind>>);
    s.get("seed", c.task_seed);
    s.reject_unknown();
  }
  for (auto [name, sizes] : {std::pair<const char*, TaskSizes*>{"assoc_recall", &c.assoc_recall},
                             {"copy", &c.copy},
                             {"char_lm", &c.char_lm}}) {
    auto s = sec(name);
    s.get("length", sizes->length, positive);
    s.get("n_train", sizes->n_train, positive);
    s.get("n_eval", sizes->n_eval, positive);
    if (std::string(name) == "assoc_recall") s.get("n_pairs", sizes->n_pairs, positive);
    s.reject_unknown();
  }
  {
    auto s = sec("eval");
    s.get("modes", c.eval_modes, nonempty<std::vector<AblationMode>>);
    s.get("window", c.eval_window);
    s.reject_unknown();
  }
  {
    auto s = sec("output");
    s.get("dir", c.out_dir, nonempty<std::string>);
    s.get("run_id", c.run_id, nonempty<std::string>);
    s.reject_unknown();
  }

  // cross-field checks
  try {
    c.model.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("model", line_of(root["model"]), e.what());
  }
  for (TaskKind k : c.tasks) {
    const TaskSpec t = c.task_spec(k);
    const std::string name(to_string(k));
    try {
      t.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(name, line_of(root[name]), e.what());
    }
    if (t.length > c.model.max_T) throw ConfigError(name + ".length", line_of(root[name]), "exceeds model.max_T");
  }
  return c;
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, 0, "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides);
}

namespace {

template <class T, class F>
YAML::Node seq(const std::vector<T>& v, F f) {
  YAML::Node n(YAML::NodeType::Sequence);
  n.SetStyle(YAML::EmitterStyle::Flow);
  for (const auto& x : v) n.push_back(f(x));
  return n;
}

}  // namespace

std::string serialize_config(const RunConfig& c) {
  YAML::Emitter e;
  e.SetDoublePrecision(17);
  auto str = [](auto x) { return std::string(to_string(x)); };
  auto id = [](auto x) { return x; };
  auto section = [&e](const char* name, std::initializer_list<std::pair<const char*, YAML::Node>> kvs) {
    e << YAML::Key << name << YAML::Value << YAML::BeginMap;
    for (const auto& [k, v] : kvs) e << YAML::Key << k << YAML::Value << v;
    e << YAML::EndMap;
  };
  auto node = [](auto x) { return YAML::Node(x); };
  e << YAML::BeginMap;
  section("model", {{"vocab_size", node(c.model.vocab_size)},
                    {"d_model", node(c.model.d_model)},
                    {"n_layers", node(c.model.n_layers)},
                    {"n_heads", node(c.model.n_heads)},
                    {"mlp_width", node(c.model.mlp_width)},
                    {"max_T", node(c.model.max_T)},
                    {"seed", node(c.model.seed)},
                    {"phi_init_noise", node(c.model.phi_init_noise)},
                    {"rope_base", node(c.model.rope_base)}});
  section("attention", {{"activation", node(str(c.model.activation))},
                        {"feature_dim", node(c.model.feature_dim)},
                        {"window", node(c.window.window)},
                        {"sinks", node(c.window.sink_count)},
                        {"g", node(c.hybrid.g)},
                        {"overlap", node(c.hybrid.overlap)}});
  section("lora", {{"rank", node(c.lora.rank)}, {"alpha", node(c.lora.alpha)}, {"targets", seq(c.lora_targets, str)}});
  section("pretrain", {{"epochs", node(c.train.pretrain_epochs)}, {"lr", node(c.train.lr_pretrain)}});
  section("transfer", {{"objective", node(str(c.objective))},
                       {"epochs", node(c.train.transfer_epochs)},
                       {"lr", node(c.train.lr_transfer)}});
  section("finetune", {{"epochs", node(c.train.finetune_epochs)},
                       {"lr", node(c.train.lr_finetune)},
                       {"mode", node(str(c.finetune_mode))},
                       {"train_phi", node(c.finetune_phi)}});
  section("train", {{"batch_size", node(c.train.batch_size)},
                    {"grad_accum", node(c.train.grad_accum)},
                    {"seed", node(c.train.seed)},
                    {"beta1", node(c.train.adamw.beta1)},
                    {"beta2", node(c.train.adamw.beta2)},
                    {"eps", node(c.train.adamw.eps)},
                    {"weight_decay", node(c.train.adamw.weight_decay)},
                    {"plateau_factor", node(c.train.plateau.factor)},
                    {"plateau_patience", node(c.train.plateau.patience)},
                    {"plateau_min_delta", node(c.train.plateau.min_delta)},
                    {"plateau_min_lr", node(c.train.plateau.min_lr)}});
  section("ssd", {{"enabled", node(c.ssd_enabled)},
                  {"dropout", seq(c.ssd.dropout_per_epoch, id)},
                  {"window", seq(c.ssd.window_per_epoch, id)}});
  section("hedgecats", {{"stage2_epochs", node(c.hedgecats_stage2_epochs)},
                        {"train_phi", node(c.hedgecats_train_phi)},
                        {"early_stop_examples", node(c.hedgecats_early_stop)}});
  section("tasks", {{"enabled", seq(c.tasks, str)}, {"seed", node(c.task_seed)}});
  for (auto [name, s] : {std::pair<const char*, const TaskSizes*>{"assoc_recall", &c.assoc_recall},
                         {"copy", &c.copy},
                         {"char_lm", &c.char_lm}}) {
    if (std::string(name) == "assoc_recall")
      section(name, {{"length", node(s->length)}, {"n_train", node(s->n_train)}, {"n_eval", node(s->n_eval)},
                     {"n_pairs", node(s->n_pairs)}});
    else
      section(name, {{"length", node(s->length)}, {"n_train", node(s->n_train)}, {"n_eval", node(s->n_eval)}});
  }
  section("eval", {{"modes", seq(c.eval_modes, str)}, {"window", node(c.eval_window)}});
  section("output", {{"dir", node(c.out_dir)}, {"run_id", node(c.run_id)}});
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

std::string resolve_out_dir(const RunConfig& c) {
  if (const char* env = std::getenv("HAFX_OUT_DIR"); env && *env) return env;
  return c.out_dir;
}

}  // namespace hafx
