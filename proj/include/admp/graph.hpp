#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace admp {

class GraphError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Role { observed, latent };

struct Support {
  enum class Kind { real, binary, categorical };
  Kind kind = Kind::real;
  std::size_t categories = 0;  // categorical only

  static Support real() { return {Kind::real, 0}; }
  static Support binary() { return {Kind::binary, 0}; }
  static Support categorical(std::size_t k) { return {Kind::categorical, k}; }
  bool discrete() const { return kind != Kind::real; }
  bool operator==(const Support&) const = default;
};

struct VariableDecl {
  std::string name;
  std::size_t dim = 1;
  Role role = Role::latent;
  Support support;

  /// Columns the variable occupies in a joint sample (one-hot for categorical).
  std::size_t width() const { return support.kind == Support::Kind::categorical ? support.categories : dim; }
  bool operator==(const VariableDecl&) const = default;
};

enum class FactorKind { explicit_family, implicit_sampler };

struct FactorDecl {
  std::string child;
  std::vector<std::string> parents;
  FactorKind kind = FactorKind::explicit_family;
  bool operator==(const FactorDecl&) const = default;
};

struct GraphDecl {
  std::vector<VariableDecl> variables;
  std::vector<FactorDecl> factors;
  bool operator==(const GraphDecl&) const = default;
};

struct ValidationReport {
  bool ok = true;
  std::vector<std::string> errors;
  std::vector<std::string> cycle;  // variable names along a detected cycle
};

/// Acyclicity, name uniqueness and factor completeness.
ValidationReport validate(const GraphDecl& decl);

/// Immutable DAG with variables addressed by index (declaration order).
class ModelGraph {
 public:
  /// Throws GraphError carrying the validation messages when invalid.
  static ModelGraph from(GraphDecl decl);

  const GraphDecl& decl() const { return decl_; }
  std::size_t size() const { return decl_.variables.size(); }
  const VariableDecl& variable(std::size_t i) const { return decl_.variables[i]; }
  const std::string& name(std::size_t i) const { return decl_.variables[i].name; }
  std::size_t index_of(const std::string& name) const;
  std::optional<std::size_t> find(const std::string& name) const;

  const std::vector<std::size_t>& parents(std::size_t i) const { return parents_[i]; }
  const std::vector<std::size_t>& children(std::size_t i) const { return children_[i]; }
  const FactorDecl& factor(std::size_t i) const { return decl_.factors[factor_of_[i]]; }

  /// Kahn order with ties broken by declaration index.
  const std::vector<std::size_t>& topological_order() const { return topo_; }
  std::size_t topological_rank(std::size_t i) const { return topo_rank_[i]; }

  std::vector<std::size_t> observed() const;
  std::vector<std::size_t> latents() const;
  bool is_ancestor(std::size_t a, std::size_t b) const;

  std::vector<std::string> names(const std::vector<std::size_t>& ids) const;
  std::vector<std::size_t> indices(const std::vector<std::string>& names) const;

  bool operator==(const ModelGraph& other) const { return decl_ == other.decl_; }

 private:
  GraphDecl decl_;
  std::map<std::string, std::size_t> index_;
  std::vector<std::vector<std::size_t>> parents_;
  std::vector<std::vector<std::size_t>> children_;
  std::vector<std::size_t> factor_of_;
  std::vector<std::size_t> topo_;
  std::vector<std::size_t> topo_rank_;
};

/// Parents, children and co-parents, sorted by index.
std::vector<std::size_t> markov_blanket(const ModelGraph& graph, std::size_t var);

/// Bayes-ball reachability: true when every a in `a_set` is d-separated from
/// every b in `b_set` given `given`.
bool d_separated(const ModelGraph& graph, const std::vector<std::size_t>& a_set,
                 const std::vector<std::size_t>& b_set, const std::vector<std::size_t>& given);
bool d_separated(const ModelGraph& graph, std::size_t a, std::size_t b, const std::vector<std::size_t>& given);
bool d_separated(const ModelGraph& graph, const std::string& a, const std::string& b,
                 const std::vector<std::string>& given);

struct InverseFactor {
  std::size_t var = 0;
  std::vector<std::size_t> given;  // p̃a, sorted by topological rank
  std::string network;             // inference-network identifier
  bool operator==(const InverseFactor&) const = default;
};

/// q(X_u | X_o) = prod_i q(x_i | p̃a(x_i)) in processing order.
struct InverseFactorization {
  std::vector<std::size_t> observed;    // sorted
  std::vector<InverseFactor> factors;   // processing order
  std::vector<std::string> warnings;

  const InverseFactor* find(std::size_t var) const;
  bool operator==(const InverseFactorization& o) const { return observed == o.observed && factors == o.factors; }
};

/// Variables available to condition on when `factor_pos` is processed:
/// the evidence plus every latent inverted before it.
std::vector<std::size_t> inverse_context(const InverseFactorization& inv, std::size_t factor_pos);

/// Latents in reverse topological order; for each, the smallest conditioning
/// subset of the available context found by greedy pruning (Markov blanket
/// seed first, full context as fallback) that d-separates it from the rest
/// of the context.
InverseFactorization derive_inverse_factorization(const ModelGraph& graph, const std::vector<std::size_t>& observed);

/// Same processing order, with user-supplied conditioning sets for the named
/// latents. Sets that fail the d-separation condition produce warnings.
InverseFactorization apply_inverse_overrides(const ModelGraph& graph, InverseFactorization base,
                                             const std::map<std::string, std::vector<std::string>>& overrides);

/// Names of latents whose conditioning set leaves part of the context
/// d-connected (empty when the factorization is exact).
std::vector<std::string> verify_inverse(const ModelGraph& graph, const InverseFactorization& inv);

/// "q(z1|x), q(z2|z1)"
std::string describe(const ModelGraph& graph, const InverseFactorization& inv);

/// Graphviz export of the generative edges and the inverse conditioning edges.
std::string to_dot(const ModelGraph& graph, const InverseFactorization& inv);

}  // namespace admp
