#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "admp/densities.hpp"
#include "admp/graph.hpp"

namespace admp {

/// Ground truth available for a model, used for metrics and reports.
struct OracleSpec {
  std::string kind;  // "linear_gaussian"
  std::string latent;
  std::string observed;
  double grid_lo = -2.0;
  double grid_hi = 2.0;
  std::size_t grid_points = 9;
  bool operator==(const OracleSpec&) const = default;
};

/// Where training data comes from.
struct DataSpec {
  std::string source = "self";  // self | mixture2d | minidigits | csv
  std::size_t count = 1000;
  std::uint64_t seed = 1;
  std::string path;  // csv only
  bool operator==(const DataSpec&) const = default;
};

struct ModelSpec {
  std::string name = "model";
  GraphDecl graph;
  std::map<std::string, FamilySpec> generative;  // keyed by child name
  std::map<std::string, FamilySpec> inference;   // keyed by inferred variable
  std::map<std::string, std::vector<std::string>> inverse_overrides;
  std::optional<OracleSpec> oracle;
  DataSpec data;
  bool operator==(const ModelSpec&) const = default;
};

/// Values of (some of) the variables for a batch of rows. Unset variables
/// hold an unbound Var.
struct JointSample {
  std::vector<Var> values;
  std::size_t rows = 0;
  std::vector<std::size_t> discrete_draws;  // variables sampled from discrete families

  bool has(std::size_t var) const { return var < values.size() && values[var].valid(); }
  Var at(std::size_t var) const;
};

/// Observation values for each variable (empty Tensor when not provided).
using Evidence = std::vector<Tensor>;

/// Runtime view of a ModelSpec: the graph plus a conditional per factor and
/// per inverse factor.
class Model {
 public:
  explicit Model(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }
  const ModelGraph& graph() const { return graph_; }
  const InverseFactorization& inverse() const { return inverse_; }

  /// Observation pattern -> inverse factorization with overrides applied when
  /// the pattern is the full observed set. Pattern `observed` must be sorted.
  InverseFactorization inverse_for(const std::vector<std::size_t>& observed) const;
  /// Suffix distinguishing networks of non-default observation patterns.
  std::string pattern_tag(const std::vector<std::size_t>& observed) const;

  const Conditional& generative(std::size_t var) const { return generative_[var]; }
  Conditional inference(const InverseFactor& factor, const std::string& tag = "") const;
  FamilySpec inference_family(std::size_t var) const;

  ParamSet init_generative(Rng& rng) const;
  ParamSet init_inference(const std::vector<InverseFactorization>& patterns, Rng& rng) const;
  /// False for parameters declared constant in the spec.
  bool trainable(const std::string& name) const;

  /// Concatenates the values of `vars` (unbound Var when `vars` is empty).
  Var gather(const JointSample& joint, const std::vector<std::size_t>& vars) const;

  /// Root-to-leaf sampling of every variable, `rows` samples.
  JointSample ancestral_sample(Bindings& theta, std::size_t rows, Rng& rng) const;
  /// Latents (and anything unobserved in `inv`) sampled from the inference
  /// networks in processing order; evidence rows are repeated `particles` times.
  JointSample inference_sample(Bindings& phi, const InverseFactorization& inv, const Evidence& evidence,
                               std::size_t particles, Rng& rng, const std::string& tag = "") const;

  /// log p(x_var | pa(x_var)) per row.
  Var factor_log_prob(Bindings& theta, std::size_t var, const JointSample& joint) const;
  /// Draws x_var ~ p(x_var | pa) using parent values from `joint`.
  Draw sample_factor(Bindings& theta, std::size_t var, const JointSample& joint, Rng& rng) const;
  Var inference_log_prob(Bindings& phi, const InverseFactor& factor, const JointSample& joint,
                         const std::string& tag = "") const;

  std::size_t width(std::size_t var) const { return graph_.variable(var).width(); }
  std::size_t width(const std::vector<std::size_t>& vars) const;

 private:
  ModelSpec spec_;
  ModelGraph graph_;
  InverseFactorization inverse_;
  std::vector<Conditional> generative_;
};

}  // namespace admp
