#pragma once

#include <string>
#include <vector>

#include "admp/graph.hpp"
#include "admp/mlp.hpp"

namespace admp {

enum class FamilyKind { gaussian, bernoulli, categorical, implicit };
enum class ScaleMode { network, learned, fixed };
enum class NoiseKind { normal, uniform };

std::string to_string(FamilyKind kind);
std::string to_string(ScaleMode mode);
std::string to_string(NoiseKind kind);

/// Declarative description of one conditional family. Explicit families map
/// their conditioning values through an MLP to natural parameters; implicit
/// samplers push (conditioning values, noise) through an MLP.
struct FamilySpec {
  FamilyKind kind = FamilyKind::gaussian;
  std::vector<std::size_t> hidden;  // empty = affine
  Activation activation = Activation::tanh;
  ScaleMode scale_mode = ScaleMode::learned;
  std::vector<double> mean;    // root Gaussian mean
  std::vector<double> scale;   // initial standard deviation (learned/fixed modes)
  std::vector<double> logits;  // root Bernoulli/categorical logits
  std::vector<double> weight;  // affine head init, row-major [input, output]
  std::vector<double> bias;    // affine head init
  bool fixed = false;          // every parameter of the factor is a constant
  std::size_t noise_dim = 0;   // implicit: 0 = target width
  NoiseKind noise = NoiseKind::normal;

  bool explicit_density() const { return kind != FamilyKind::implicit; }
  bool operator==(const FamilySpec&) const = default;
};

// Density primitives on tape values. All return per-row log densities [N, 1].
Var gaussian_log_prob(Var x, Var mean, Var log_std);
Var bernoulli_log_prob(Var x, Var logits);
Var categorical_log_prob(Var onehot, Var logits);

/// mean + std * eps; gradients reach mean and std.
Var gaussian_sample(Var mean, Var std, const Tensor& eps);
/// Inversion sampling: x = 1 when u < sigmoid(logit).
Tensor bernoulli_sample(const Tensor& logits, const Tensor& uniforms);
/// Inversion on the cumulative softmax; one uniform per row, returns one-hot rows.
Tensor categorical_sample(const Tensor& logits, const Tensor& uniforms);

/// Natural parameters produced by an explicit family for a batch.
struct Head {
  FamilyKind kind = FamilyKind::gaussian;
  Var mean;
  Var log_std;
  Var logits;
};

struct Draw {
  Var value;
  bool discrete = false;
};

/// A family instance bound to a parameter prefix, a conditioning width and a
/// target variable.
class Conditional {
 public:
  Conditional(std::string prefix, FamilySpec spec, std::size_t input_width, VariableDecl target);

  const std::string& prefix() const { return prefix_; }
  const FamilySpec& spec() const { return spec_; }
  std::size_t input_width() const { return input_width_; }
  const VariableDecl& target() const { return target_; }
  std::size_t noise_width() const;

  void init(ParamSet& params, Rng& rng) const;
  /// Names this conditional owns whose values must stay constant.
  bool is_frozen(const std::string& name) const;
  MlpShape network_shape() const;

  /// `input` may be unbound when input_width() == 0; `rows` sets the batch size then.
  Head head(Bindings& params, Var input, std::size_t rows) const;
  Var log_prob(Bindings& params, Var input, Var value) const;
  Draw sample(Bindings& params, Var input, std::size_t rows, Rng& rng) const;
  /// Sampling with caller-provided noise (Gaussian eps, uniforms, or implicit noise).
  Draw sample_with_noise(Bindings& params, Var input, const Tensor& noise) const;
  Tensor draw_noise(std::size_t rows, Rng& rng) const;

 private:
  std::string prefix_;
  FamilySpec spec_;
  std::size_t input_width_;
  VariableDecl target_;
};

/// Checks that `value` is in the support of `var` (binary entries in {0,1},
/// categorical rows one-hot). Throws DomainError otherwise.
void check_support(const VariableDecl& var, const Tensor& value);

}  // namespace admp
