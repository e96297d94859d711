// SPDX-License-Identifier: Apache-2.0
#include "hafx/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "hafx/attention.hpp"
#include "hafx/rng.hpp"

namespace hafx {

void BenchConfig::validate() const {
  if (T_list.empty()) throw std::invalid_argument("bench: empty T list");
  for (std::size_t i = 0; i < T_list.size(); ++i) {
    if (T_list[i] == 0) throw std::invalid_argument("bench: T must be >= 1");
    if (i > 0 && T_list[i] <= T_list[i - 1]) throw std::invalid_argument("bench: T list must be increasing");
  }
  if (reps < 3) throw std::invalid_argument("bench: reps must be >= 3");
  if (head_dim == 0 || feature_dim == 0) throw std::invalid_argument("bench: dimensions must be >= 1");
  if (!(min_sample_ms > 0.0)) throw std::invalid_argument("bench: min_sample_ms must be > 0");
}

const BenchRow* BenchReport::find(const std::string& path, std::size_t T) const {
  for (const auto& r : rows)
    if (r.path == path && r.T == T) return &r;
  return nullptr;
}

std::vector<double> BenchReport::growth_ratios(const std::string& path) const {
  std::vector<double> out;
  const BenchRow* prev = nullptr;
  for (const auto& r : rows) {
    if (r.path != path) continue;
    if (prev) out.push_back(r.median_ms / prev->median_ms);
    prev = &r;
  }
  return out;
}

std::string BenchReport::to_csv(bool header) const {
  std::string out;
  if (header) out += std::string(kBenchCsvHeader) + "\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6f", r.median_ms);
    out += r.path + "," + std::to_string(r.T) + "," + buf + "," + std::to_string(r.aux_bytes) + "\n";
  }
  return out;
}

std::vector<double> quadratic_softmax_attention(std::span<const double> q, std::span<const double> k,
                                                std::span<const double> v, std::size_t T, std::size_t d,
                                                std::size_t dv, std::vector<double>& scores) {
  if (q.size() != T * d || k.size() != T * d || v.size() != T * dv)
    throw std::invalid_argument("quadratic_softmax_attention: operand sizes do not match T, d, dv");
  scores.assign(T * T, 0.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t t = 0; t < T; ++t) {
    const double* qt = q.data() + t * d;
    double* st = scores.data() + t * T;
    for (std::size_t i = 0; i < T; ++i) {
      if (i > t) {
        st[i] = -INFINITY;
        continue;
      }
      const double* ki = k.data() + i * d;
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += qt[j] * ki[j];
      st[i] = s * scale;
    }
  }
  for (std::size_t t = 0; t < T; ++t) {
    double* st = scores.data() + t * T;
    const double m = *std::max_element(st, st + T);
    double z = 0.0;
    for (std::size_t i = 0; i < T; ++i) z += st[i] = std::exp(st[i] - m);
    for (std::size_t i = 0; i < T; ++i) st[i] /= z;
  }
  std::vector<double> out(T * dv, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const double* st = scores.data() + t * T;
    double* ot = out.data() + t * dv;
    for (std::size_t i = 0; i < T; ++i) {
      const double p = st[i];
      const double* vi = v.data() + i * dv;
      for (std::size_t j = 0; j < dv; ++j) ot[j] += p * vi[j];
    }
  }
  return out;
}

std::size_t streaming_aux_bytes(std::size_t feature_dim, std::size_t value_dim) {
  return linear_attention_state_size(2 * feature_dim, value_dim) * sizeof(double);
}

std::size_t quadratic_aux_bytes(std::size_t T) { return T * T * sizeof(double); }

namespace {

using Clock = std::chrono::steady_clock;

volatile double g_sink = 0.0;

// Repeats fn until one sample lasts min_ms, then reports time per call.
template <class Fn>
BenchRow measure(const char* path, std::size_t T, std::size_t aux, const BenchConfig& cfg, Fn fn) {
  std::size_t inner = 1;
  for (;;) {
    const auto t0 = Clock::now();
    for (std::size_t i = 0; i < inner; ++i) fn();
    const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    if (ms >= cfg.min_sample_ms) break;
    inner *= 2;
  }
  std::vector<double> samples;
  for (std::size_t r = 0; r < cfg.reps; ++r) {
    const auto t0 = Clock::now();
    for (std::size_t i = 0; i < inner; ++i) fn();
    samples.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count() /
                      static_cast<double>(inner));
  }
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  const double median = n % 2 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
  return {path, T, median, aux, inner};
}

}  // namespace

BenchReport benchmark_scaling(const BenchConfig& cfg) {
  cfg.validate();
  BenchReport report;
  const std::size_t d = cfg.head_dim, f = 2 * cfg.feature_dim;
  SeededRng rng(cfg.seed, "bench");
  for (std::size_t T : cfg.T_list) {
    Tensor phi_q = rng.normal_tensor({T, f}, 1.0), phi_k = rng.normal_tensor({T, f}, 1.0);
    for (auto* x : {&phi_q, &phi_k})
      for (double& e : x->data()) e = std::abs(e);
    const Tensor v = rng.normal_tensor({T, d}, 1.0);
    report.rows.push_back(measure(kPathStreamingLA, T, streaming_aux_bytes(cfg.feature_dim, d), cfg, [&] {
      g_sink = g_sink + linear_attention_streaming(phi_q, phi_k, v)(T - 1, 0);
    }));
  }
  for (std::size_t T : cfg.T_list) {
    const Tensor q = rng.normal_tensor({T, d}, 1.0), k = rng.normal_tensor({T, d}, 1.0),
                 v = rng.normal_tensor({T, d}, 1.0);
    std::vector<double> scores;
    report.rows.push_back(measure(kPathQuadraticSoftmax, T, quadratic_aux_bytes(T), cfg, [&] {
      g_sink = g_sink + quadratic_softmax_attention(q.data(), k.data(), v.data(), T, d, d, scores)[0];
    }));
  }
  return report;
}

std::vector<std::size_t> parse_T_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t comma = std::min(s.find(',', pos), s.size());
    const std::string item = s.substr(pos, comma - pos);
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos)
      throw std::invalid_argument("bad T list '" + s + "'");
    out.push_back(std::stoul(item));
    pos = comma + 1;
  }
  BenchConfig c;
  c.T_list = out;
  c.validate();
  return out;
}

}  // namespace hafx
