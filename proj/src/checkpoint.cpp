// SPDX-License-Identifier: Apache-2.0
#include "hafx/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace hafx {

static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes a little-endian host");

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  const char* take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw CheckpointError(CheckpointError::Kind::Truncated, "checkpoint: truncated file");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    std::memcpy(&v, take(4), 4);
    return v;
  }
  std::string str(std::size_t n) { return {take(n), n}; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  nlohmann::json cfg = ckpt.config_json.empty() ? nlohmann::json::object() : nlohmann::json::parse(ckpt.config_json);
  cfg["stage"] = ckpt.stage;
  const std::string block = cfg.dump();
  put_u32(out, static_cast<std::uint32_t>(block.size()));
  out += block;
  put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.data()) {
      const auto f = static_cast<float>(v);
      char b[4];
      std::memcpy(b, &f, 4);
      out.append(b, 4);
    }
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    throw CheckpointError(CheckpointError::Kind::BadMagic, "checkpoint: bad magic");
  r.take(4);
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError(CheckpointError::Kind::VersionMismatch,
                          "checkpoint: version mismatch (file " + std::to_string(version) + ", expected " +
                              std::to_string(kCheckpointVersion) + ")");
  Checkpoint ck;
  nlohmann::json cfg;
  try {
    cfg = nlohmann::json::parse(r.str(r.u32()));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointError::Kind::Malformed, std::string("checkpoint: config block: ") + e.what());
  }
  if (cfg.contains("stage")) {
    ck.stage = cfg["stage"].get<std::string>();
    cfg.erase("stage");
  }
  ck.config_json = cfg.dump();
  const auto n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = r.str(r.u32());
    const auto rank = r.u32();
    if (rank > 8) throw CheckpointError(CheckpointError::Kind::Malformed, "checkpoint: implausible rank for " + name);
    std::vector<std::size_t> shape(rank);
    std::size_t count = 1;
    for (auto& d : shape) count *= (d = r.u32());
    std::vector<double> data(count);
    const char* p = r.take(count * 4);
    for (std::size_t k = 0; k < count; ++k) {
      float f;
      std::memcpy(&f, p + 4 * k, 4);
      data[k] = f;
    }
    ck.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (!r.done()) throw CheckpointError(CheckpointError::Kind::Malformed, "checkpoint: trailing bytes");
  return ck;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError(CheckpointError::Kind::Io, "checkpoint: cannot write " + path.string());
  const std::string bytes = encode_checkpoint(ckpt);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError(CheckpointError::Kind::Io, "checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError(CheckpointError::Kind::Io, "checkpoint: cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_checkpoint(ss.str());
}

void round_to_storage(Model& model) {
  for (auto* p : model.parameters())
    for (auto& v : p->value.data()) v = static_cast<float>(v);
}

namespace {

nlohmann::json config_to_json(const Model& m) {
  const auto& c = m.cfg;
  nlohmann::json j;
  j["vocab_size"] = c.vocab_size;
  j["d_model"] = c.d_model;
  j["n_layers"] = c.n_layers;
  j["n_heads"] = c.n_heads;
  j["mlp_width"] = c.mlp_width;
  j["max_T"] = c.max_T;
  j["seed"] = c.seed;
  j["feature_dim"] = c.feature_dim;
  j["activation"] = std::string(to_string(c.activation));
  j["phi_init_noise"] = c.phi_init_noise;
  j["rope_base"] = c.rope_base;
  nlohmann::json lora = nlohmann::json::array();
  if (!m.layers.empty())
    for (const auto& a : m.layers.front().lora)
      if (a) lora.push_back({{"target", std::string(to_string(a->target))}, {"rank", a->rank}, {"alpha", a->alpha}});
  j["lora"] = lora;
  return j;
}

}  // namespace

Checkpoint snapshot(const Model& model) {
  Checkpoint ck;
  ck.stage = model.stage;
  ck.config_json = config_to_json(model).dump();
  for (const auto* p : model.parameters()) ck.tensors.emplace_back(p->name, p->value);
  return ck;
}

Model restore(const Checkpoint& ckpt) {
  nlohmann::json j;
  ModelConfig c;
  try {
    j = nlohmann::json::parse(ckpt.config_json);
    c.vocab_size = j.at("vocab_size");
    c.d_model = j.at("d_model");
    c.n_layers = j.at("n_layers");
    c.n_heads = j.at("n_heads");
    c.mlp_width = j.at("mlp_width");
    c.max_T = j.at("max_T");
    c.seed = j.at("seed");
    c.feature_dim = j.at("feature_dim");
    c.activation = parse_activation(j.at("activation").get<std::string>());
    c.phi_init_noise = j.at("phi_init_noise");
    c.rope_base = j.at("rope_base");
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointError::Kind::Malformed, std::string("checkpoint: config echo: ") + e.what());
  }
  Model m = init_model(c);
  m.stage = ckpt.stage;
  for (const auto& a : j.value("lora", nlohmann::json::array())) {
    const auto t = a.at("target").get<std::string>();
    Proj p = t == "q" ? Proj::Q : t == "k" ? Proj::K : t == "v" ? Proj::V : Proj::O;
    const Proj one[] = {p};
    lora_attach(m, one, {a.at("rank").get<std::size_t>(), a.at("alpha").get<double>()}, 0);
  }
  for (auto* p : m.parameters()) {
    const Tensor* t = ckpt.find(p->name);
    if (!t) throw CheckpointError(CheckpointError::Kind::Malformed, "checkpoint: missing tensor " + p->name);
    if (!t->same_shape(p->value))
      throw CheckpointError(CheckpointError::Kind::Malformed, "checkpoint: shape mismatch for " + p->name);
    p->value = *t;
  }
  return m;
}

}  // namespace hafx
