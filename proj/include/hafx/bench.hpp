// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace hafx {

struct BenchConfig {
  std::vector<std::size_t> T_list{512, 1024, 2048};
  std::size_t head_dim = 64;
  std::size_t feature_dim = 32;  // d'; features are 2d' wide
  std::size_t reps = 5;
  double min_sample_ms = 2.0;  // a sample repeats the kernel until it takes this long
  std::uint64_t seed = 0;

  void validate() const;
};

inline constexpr const char* kPathStreamingLA = "streaming_la";
inline constexpr const char* kPathQuadraticSoftmax = "quadratic_softmax";
inline constexpr const char* kBenchCsvHeader = "path,T,median_ms,aux_bytes";

struct BenchRow {
  std::string path;
  std::size_t T = 0;
  double median_ms = 0.0;
  std::size_t aux_bytes = 0;
  std::size_t inner_repeats = 1;
};

struct BenchReport {
  std::vector<BenchRow> rows;

  const BenchRow* find(const std::string& path, std::size_t T) const;
  /// median(T_next) / median(T) for consecutive entries of the T list.
  std::vector<double> growth_ratios(const std::string& path) const;
  std::string to_csv(bool header = true) const;
};

/// Causal softmax that materialises the full T x T score matrix.
/// q, k are T x d, v is T x d_v, all row-major.
std::vector<double> quadratic_softmax_attention(std::span<const double> q, std::span<const double> k,
                                                std::span<const double> v, std::size_t T, std::size_t d,
                                                std::size_t dv, std::vector<double>& scores);

std::size_t streaming_aux_bytes(std::size_t feature_dim, std::size_t value_dim);
std::size_t quadratic_aux_bytes(std::size_t T);

/// Median wall time of both paths for every T. Single threaded.
BenchReport benchmark_scaling(const BenchConfig& cfg);

/// Parses "256,512,1024". Throws std::invalid_argument on bad or non-increasing input.
std::vector<std::size_t> parse_T_list(const std::string& s);

}  // namespace hafx
