#include "admp/params.hpp"

#include <bit>
#include <cstdint>
#include <stdexcept>

namespace admp {

Var Bindings::operator()(const std::string& name) {
  if (auto it = bound_.find(name); it != bound_.end()) return it->second;
  auto p = params_->find(name);
  if (p == params_->end()) throw std::out_of_range("Bindings: unknown parameter '" + name + "'");
  Var v = trainable_(name) ? tape_->leaf(p->second) : tape_->constant(p->second);
  bound_.emplace(name, v);
  return v;
}

GradSet Bindings::gradients(const GradientMap& grads) const {
  GradSet out;
  for (const auto& [name, value] : *params_) {
    if (!trainable_(name)) continue;
    auto b = bound_.find(name);
    if (b != bound_.end()) {
      if (auto g = grads.find(b->second.id()); g != grads.end()) {
        out.emplace(name, g->second);
        continue;
      }
    }
    out.emplace(name, Tensor::zeros_like(value));
  }
  return out;
}

std::uint64_t param_hash(const ParamSet& params) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xffU;
      h *= 1099511628211ULL;
    }
  };
  for (const auto& [name, t] : params) {
    for (char c : name) mix(static_cast<unsigned char>(c));
    for (std::size_t e : t.shape()) mix(e);
    for (double v : t.values()) mix(std::bit_cast<std::uint64_t>(v));
  }
  return h;
}

GradSet subset(const GradSet& grads, const std::string& prefix) {
  GradSet out;
  for (auto it = grads.lower_bound(prefix); it != grads.end() && it->first.compare(0, prefix.size(), prefix) == 0;
       ++it) {
    out.emplace(it->first, it->second);
  }
  return out;
}

}  // namespace admp
