#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "admp/trainer.hpp"

namespace admp {

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { io, format, version, corrupt };
  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct CheckpointMeta {
  std::string variant;
  std::string spec_hash;
  bool operator==(const CheckpointMeta&) const = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const TrainState& state, const CheckpointMeta& meta);
/// Either returns a complete state or throws; nothing is returned half-read.
TrainState load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

/// Names whose shapes differ between two parameter sets, plus names present in only one.
std::vector<std::string> shape_mismatches(const ParamSet& expected, const ParamSet& actual);

}  // namespace admp
