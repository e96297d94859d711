// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hafx/model.hpp"

namespace hafx {

inline constexpr char kCheckpointMagic[4] = {'H', 'A', 'F', 'X'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { Io, Truncated, BadMagic, VersionMismatch, Malformed };
  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Named tensors plus a JSON config echo. Values are stored as float32.
struct Checkpoint {
  std::string stage = "base";
  std::string config_json;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
  bool operator==(const Checkpoint&) const = default;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rounds every parameter to float32 so the in-memory model equals what a
/// checkpoint of it would reload as.
void round_to_storage(Model& model);

Checkpoint snapshot(const Model& model);
/// Rebuilds a model (including attached adapters) from a snapshot.
Model restore(const Checkpoint& ckpt);

}  // namespace hafx
