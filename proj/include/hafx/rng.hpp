// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "hafx/tensor.hpp"

namespace hafx {

/// Deterministic random stream keyed by (seed, label). Two instances built
/// from the same pair produce the same draws; different labels give
/// independent streams, so adding a consumer never perturbs another one.
class SeededRng {
 public:
  SeededRng(std::uint64_t seed, std::string_view label);

  std::uint64_t seed() const { return seed_; }
  const std::string& label() const { return label_; }

  /// Uniform in [0, 1).
  double uniform();
  double normal(double mean = 0.0, double stddev = 1.0);
  /// Uniform integer in [lo, hi].
  std::int64_t integer(std::int64_t lo, std::int64_t hi);

  Tensor normal_tensor(std::vector<std::size_t> shape, double stddev);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::string label_;
  std::mt19937_64 engine_;
};

std::uint64_t fnv1a64(std::string_view text);

}  // namespace hafx
