#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "admp/tensor.hpp"

namespace admp {

/// Seeded random source. Every draw goes through the engine directly so the
/// complete stream position is captured by state().
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  std::size_t index(std::size_t n);

  Tensor normal(std::size_t rows, std::size_t cols);
  Tensor uniform(std::size_t rows, std::size_t cols);

  /// Independent child stream derived from the next engine output.
  Rng split() { return Rng(next_u64()); }

  std::string state() const;
  void set_state(const std::string& state);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace admp
