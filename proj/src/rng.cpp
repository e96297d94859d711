// SPDX-License-Identifier: Apache-2.0
#include "hafx/rng.hpp"

#include <cmath>
#include <numbers>

namespace hafx {

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

SeededRng::SeededRng(std::uint64_t seed, std::string_view label)
    : seed_(seed), label_(label) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(fnv1a64(label)),
                    static_cast<std::uint32_t>(fnv1a64(label) >> 32)};
  engine_.seed(seq);
}

// The draws below are written out rather than taken from <random>'s
// distributions, whose algorithms are implementation-defined.
double SeededRng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double SeededRng::normal(double mean, double stddev) {
  // Box-Muller, one value per call.
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::int64_t SeededRng::integer(std::int64_t lo, std::int64_t hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  // Rejection sampling avoids modulo bias.
  const std::uint64_t limit = span == 0 ? 0 : (~std::uint64_t{0} / span) * span;
  std::uint64_t x = engine_();
  while (limit != 0 && x >= limit) x = engine_();
  return lo + static_cast<std::int64_t>(span == 0 ? x : x % span);
}

Tensor SeededRng::normal_tensor(std::vector<std::size_t> shape, double stddev) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = normal(0.0, stddev);
  return t;
}

}  // namespace hafx
