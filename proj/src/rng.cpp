#include "admp/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace admp {

double Rng::uniform() {
  // 53 random mantissa bits, shifted off zero.
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() {
  // Box-Muller without caching the second variate, so no hidden state.
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Rng::index: empty range");
  return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
}

Tensor Rng::normal(std::size_t rows, std::size_t cols) {
  Tensor out({rows, cols});
  for (double& v : out.values()) v = normal();
  return out;
}

Tensor Rng::uniform(std::size_t rows, std::size_t cols) {
  Tensor out({rows, cols});
  for (double& v : out.values()) v = uniform();
  return out;
}

std::string Rng::state() const {
  std::ostringstream out;
  out << engine_;
  return out.str();
}

void Rng::set_state(const std::string& state) {
  std::istringstream in(state);
  std::mt19937_64 engine;
  in >> engine;
  if (in.fail()) throw std::invalid_argument("Rng::set_state: malformed engine state");
  engine_ = engine;
}

}  // namespace admp
