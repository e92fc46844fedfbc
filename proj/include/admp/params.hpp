#pragma once

#include <functional>
#include <map>
#include <string>

#include "admp/autodiff.hpp"

namespace admp {

/// Named parameter tensors. Ordered, so every iteration over a set (updates,
/// checkpoints, hashes) happens in the same sequence.
using ParamSet = std::map<std::string, Tensor>;
using GradSet = std::map<std::string, Tensor>;

/// Binds a ParamSet onto a tape on first use. Trainable parameters become
/// tracked leaves; the rest are recorded as constants.
class Bindings {
 public:
  using Predicate = std::function<bool(const std::string&)>;

  Bindings(Tape& tape, const ParamSet& params, bool trainable = true)
      : tape_(&tape), params_(&params), trainable_([trainable](const std::string&) { return trainable; }) {}
  Bindings(Tape& tape, const ParamSet& params, Predicate trainable)
      : tape_(&tape), params_(&params), trainable_(std::move(trainable)) {}

  Var operator()(const std::string& name);
  bool contains(const std::string& name) const { return params_->count(name) > 0; }
  Tape& tape() const { return *tape_; }
  const ParamSet& params() const { return *params_; }

  /// Gradients for every trainable parameter, zero-filled when the output did
  /// not depend on it.
  GradSet gradients(const GradientMap& grads) const;

 private:
  Tape* tape_;
  const ParamSet* params_;
  Predicate trainable_;
  std::map<std::string, Var> bound_;
};

/// Order-sensitive FNV-1a hash over names, shapes and value bits.
std::uint64_t param_hash(const ParamSet& params);

/// Parameters whose names start with `prefix`.
GradSet subset(const GradSet& grads, const std::string& prefix);

}  // namespace admp
