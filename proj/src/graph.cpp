#include "admp/graph.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <set>
#include <sstream>

namespace admp {

ValidationReport validate(const GraphDecl& decl) {
  ValidationReport report;
  auto fail = [&report](std::string msg) {
    report.ok = false;
    report.errors.push_back(std::move(msg));
  };

  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < decl.variables.size(); ++i) {
    const VariableDecl& v = decl.variables[i];
    if (v.name.empty()) fail("variable " + std::to_string(i) + " has an empty name");
    if (!index.emplace(v.name, i).second) fail("duplicate variable name '" + v.name + "'");
    if (v.dim == 0) fail("variable '" + v.name + "' has zero dimension");
    if (v.support.kind == Support::Kind::categorical) {
      if (v.support.categories < 2) fail("categorical variable '" + v.name + "' needs at least 2 categories");
      if (v.dim != 1) fail("categorical variable '" + v.name + "' must have dim 1");
    }
  }

  std::vector<int> factor_count(decl.variables.size(), 0);
  std::vector<std::vector<std::size_t>> parents(decl.variables.size());
  for (const FactorDecl& f : decl.factors) {
    auto c = index.find(f.child);
    if (c == index.end()) {
      fail("factor for undeclared variable '" + f.child + "'");
      continue;
    }
    if (++factor_count[c->second] > 1) fail("variable '" + f.child + "' has more than one factor");
    std::set<std::string> seen;
    for (const std::string& p : f.parents) {
      auto pi = index.find(p);
      if (pi == index.end()) {
        fail("factor '" + f.child + "' names undeclared parent '" + p + "'");
        continue;
      }
      if (!seen.insert(p).second) fail("factor '" + f.child + "' lists parent '" + p + "' twice");
      parents[c->second].push_back(pi->second);
    }
  }
  for (std::size_t i = 0; i < decl.variables.size(); ++i) {
    if (factor_count[i] == 0) fail("variable '" + decl.variables[i].name + "' has no factor");
  }

  // Cycle search: DFS with colors, recording the first back edge's cycle.
  const std::size_t n = decl.variables.size();
  std::vector<int> color(n, 0);
  std::vector<std::size_t> stack;
  std::vector<std::size_t> cycle;
  std::function<bool(std::size_t)> dfs = [&](std::size_t u) {
    color[u] = 1;
    stack.push_back(u);
    for (std::size_t p : parents[u]) {
      if (color[p] == 1) {
        auto it = std::find(stack.begin(), stack.end(), p);
        cycle.assign(it, stack.end());
        return true;
      }
      if (color[p] == 0 && dfs(p)) return true;
    }
    stack.pop_back();
    color[u] = 2;
    return false;
  };
  for (std::size_t i = 0; i < n && cycle.empty(); ++i) {
    if (color[i] == 0) dfs(i);
  }
  if (!cycle.empty()) {
    // Stack runs child -> parent; report in edge direction parent -> child.
    std::reverse(cycle.begin(), cycle.end());
    std::string path;
    for (std::size_t v : cycle) {
      report.cycle.push_back(decl.variables[v].name);
      path += decl.variables[v].name + " -> ";
    }
    path += decl.variables[cycle.front()].name;
    fail("cycle detected: " + path);
  }
  return report;
}

ModelGraph ModelGraph::from(GraphDecl decl) {
  ValidationReport report = validate(decl);
  if (!report.ok) {
    std::string msg = "invalid model graph:";
    for (const auto& e : report.errors) msg += "\n  " + e;
    throw GraphError(msg);
  }
  ModelGraph g;
  g.decl_ = std::move(decl);
  const std::size_t n = g.decl_.variables.size();
  for (std::size_t i = 0; i < n; ++i) g.index_.emplace(g.decl_.variables[i].name, i);
  g.parents_.assign(n, {});
  g.children_.assign(n, {});
  g.factor_of_.assign(n, 0);
  for (std::size_t f = 0; f < g.decl_.factors.size(); ++f) {
    const FactorDecl& fd = g.decl_.factors[f];
    const std::size_t c = g.index_.at(fd.child);
    g.factor_of_[c] = f;
    for (const std::string& p : fd.parents) {
      const std::size_t pi = g.index_.at(p);
      g.parents_[c].push_back(pi);
      g.children_[pi].push_back(c);
    }
  }
  for (auto& ch : g.children_) std::sort(ch.begin(), ch.end());

  std::vector<std::size_t> indegree(n);
  for (std::size_t i = 0; i < n; ++i) indegree[i] = g.parents_[i].size();
  std::set<std::size_t> ready;
  for (std::size_t i = 0; i < n; ++i)
    if (indegree[i] == 0) ready.insert(i);
  while (!ready.empty()) {
    const std::size_t u = *ready.begin();
    ready.erase(ready.begin());
    g.topo_.push_back(u);
    for (std::size_t c : g.children_[u])
      if (--indegree[c] == 0) ready.insert(c);
  }
  g.topo_rank_.assign(n, 0);
  for (std::size_t r = 0; r < n; ++r) g.topo_rank_[g.topo_[r]] = r;
  return g;
}

std::size_t ModelGraph::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw GraphError("unknown variable '" + name + "'");
  return it->second;
}

std::optional<std::size_t> ModelGraph::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::size_t> ModelGraph::observed() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < size(); ++i)
    if (decl_.variables[i].role == Role::observed) out.push_back(i);
  return out;
}

std::vector<std::size_t> ModelGraph::latents() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < size(); ++i)
    if (decl_.variables[i].role == Role::latent) out.push_back(i);
  return out;
}

bool ModelGraph::is_ancestor(std::size_t a, std::size_t b) const {
  std::vector<bool> seen(size(), false);
  std::vector<std::size_t> work{b};
  while (!work.empty()) {
    const std::size_t u = work.back();
    work.pop_back();
    for (std::size_t p : parents_[u]) {
      if (p == a) return true;
      if (!seen[p]) {
        seen[p] = true;
        work.push_back(p);
      }
    }
  }
  return false;
}

std::vector<std::string> ModelGraph::names(const std::vector<std::size_t>& ids) const {
  std::vector<std::string> out;
  for (std::size_t i : ids) out.push_back(name(i));
  return out;
}

std::vector<std::size_t> ModelGraph::indices(const std::vector<std::string>& names) const {
  std::vector<std::size_t> out;
  for (const auto& n : names) out.push_back(index_of(n));
  return out;
}

std::vector<std::size_t> markov_blanket(const ModelGraph& graph, std::size_t var) {
  if (var >= graph.size()) throw GraphError("markov_blanket: variable index out of range");
  std::set<std::size_t> mb(graph.parents(var).begin(), graph.parents(var).end());
  for (std::size_t c : graph.children(var)) {
    mb.insert(c);
    for (std::size_t p : graph.parents(c)) mb.insert(p);
  }
  mb.erase(var);
  return {mb.begin(), mb.end()};
}

namespace {

// Nodes reachable from `sources` along active trails given `given`.
std::vector<bool> reachable(const ModelGraph& graph, const std::vector<std::size_t>& sources,
                            const std::vector<bool>& in_given) {
  const std::size_t n = graph.size();
  // Ancestors of the conditioning set (including itself) open colliders.
  std::vector<bool> opens(n, false);
  std::vector<std::size_t> work;
  for (std::size_t i = 0; i < n; ++i)
    if (in_given[i]) work.push_back(i);
  while (!work.empty()) {
    const std::size_t u = work.back();
    work.pop_back();
    if (opens[u]) continue;
    opens[u] = true;
    for (std::size_t p : graph.parents(u)) work.push_back(p);
  }

  // Direction flag: true = arrived from a child (moving up).
  std::vector<bool> visited_up(n, false), visited_down(n, false), reach(n, false);
  std::deque<std::pair<std::size_t, bool>> queue;
  for (std::size_t s : sources) queue.emplace_back(s, true);
  while (!queue.empty()) {
    auto [y, up] = queue.front();
    queue.pop_front();
    if (up ? visited_up[y] : visited_down[y]) continue;
    (up ? visited_up : visited_down)[y] = true;
    if (!in_given[y]) reach[y] = true;
    if (up && !in_given[y]) {
      for (std::size_t p : graph.parents(y)) queue.emplace_back(p, true);
      for (std::size_t c : graph.children(y)) queue.emplace_back(c, false);
    } else if (!up) {
      if (!in_given[y])
        for (std::size_t c : graph.children(y)) queue.emplace_back(c, false);
      if (opens[y])
        for (std::size_t p : graph.parents(y)) queue.emplace_back(p, true);
    }
  }
  return reach;
}

}  // namespace

bool d_separated(const ModelGraph& graph, const std::vector<std::size_t>& a_set,
                 const std::vector<std::size_t>& b_set, const std::vector<std::size_t>& given) {
  std::vector<bool> in_given(graph.size(), false);
  for (std::size_t z : given) {
    if (z >= graph.size()) throw GraphError("d_separated: variable index out of range");
    in_given[z] = true;
  }
  std::vector<std::size_t> sources;
  for (std::size_t a : a_set) {
    if (a >= graph.size()) throw GraphError("d_separated: variable index out of range");
    if (!in_given[a]) sources.push_back(a);
  }
  const std::vector<bool> reach = reachable(graph, sources, in_given);
  for (std::size_t b : b_set) {
    if (b >= graph.size()) throw GraphError("d_separated: variable index out of range");
    if (in_given[b]) continue;
    if (std::find(a_set.begin(), a_set.end(), b) != a_set.end()) return false;
    if (reach[b]) return false;
  }
  return true;
}

bool d_separated(const ModelGraph& graph, std::size_t a, std::size_t b, const std::vector<std::size_t>& given) {
  if (a == b) throw GraphError("d_separated: the two variables must differ");
  return d_separated(graph, std::vector<std::size_t>{a}, std::vector<std::size_t>{b}, given);
}

bool d_separated(const ModelGraph& graph, const std::string& a, const std::string& b,
                 const std::vector<std::string>& given) {
  return d_separated(graph, graph.index_of(a), graph.index_of(b), graph.indices(given));
}

const InverseFactor* InverseFactorization::find(std::size_t var) const {
  for (const auto& f : factors)
    if (f.var == var) return &f;
  return nullptr;
}

std::vector<std::size_t> inverse_context(const InverseFactorization& inv, std::size_t factor_pos) {
  std::vector<std::size_t> ctx = inv.observed;
  for (std::size_t k = 0; k < factor_pos; ++k) ctx.push_back(inv.factors[k].var);
  std::sort(ctx.begin(), ctx.end());
  return ctx;
}

namespace {

bool separates(const ModelGraph& graph, std::size_t var, const std::vector<std::size_t>& context,
               const std::vector<std::size_t>& given) {
  std::vector<std::size_t> rest;
  for (std::size_t c : context)
    if (std::find(given.begin(), given.end(), c) == given.end()) rest.push_back(c);
  if (rest.empty()) return true;
  return d_separated(graph, std::vector<std::size_t>{var}, rest, given);
}

void sort_by_rank(const ModelGraph& graph, std::vector<std::size_t>& ids) {
  std::sort(ids.begin(), ids.end(),
            [&graph](std::size_t a, std::size_t b) { return graph.topological_rank(a) < graph.topological_rank(b); });
}

std::vector<std::size_t> prune(const ModelGraph& graph, std::size_t var, const std::vector<std::size_t>& context,
                               std::vector<std::size_t> given) {
  sort_by_rank(graph, given);
  for (std::size_t k = 0; k < given.size();) {
    std::vector<std::size_t> trial = given;
    trial.erase(trial.begin() + static_cast<std::ptrdiff_t>(k));
    if (separates(graph, var, context, trial)) {
      given = std::move(trial);
    } else {
      ++k;
    }
  }
  return given;
}

}  // namespace

InverseFactorization derive_inverse_factorization(const ModelGraph& graph, const std::vector<std::size_t>& observed) {
  InverseFactorization inv;
  std::vector<bool> is_obs(graph.size(), false);
  for (std::size_t o : observed) {
    if (o >= graph.size()) throw GraphError("derive_inverse_factorization: observed index out of range");
    is_obs[o] = true;
  }
  for (std::size_t i = 0; i < graph.size(); ++i)
    if (is_obs[i]) inv.observed.push_back(i);
  if (inv.observed.empty()) inv.warnings.push_back("no observed variables: all-latent, top-down-only factorization");

  const auto& topo = graph.topological_order();
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    const std::size_t v = *it;
    if (is_obs[v]) continue;
    const std::vector<std::size_t> context = inverse_context(inv, inv.factors.size());

    std::vector<std::size_t> seed;
    for (std::size_t m : markov_blanket(graph, v))
      if (std::binary_search(context.begin(), context.end(), m)) seed.push_back(m);
    std::vector<std::size_t> given =
        separates(graph, v, context, seed) ? prune(graph, v, context, seed) : prune(graph, v, context, context);
    sort_by_rank(graph, given);

    bool reaches_evidence = false;
    for (std::size_t o : inv.observed) reaches_evidence = reaches_evidence || graph.is_ancestor(v, o);
    if (!inv.observed.empty() && !reaches_evidence) {
      inv.warnings.push_back("latent '" + graph.name(v) + "' has no directed path to an observed variable");
    }
    inv.factors.push_back(InverseFactor{v, std::move(given), "q_" + graph.name(v)});
  }
  return inv;
}

InverseFactorization apply_inverse_overrides(const ModelGraph& graph, InverseFactorization base,
                                             const std::map<std::string, std::vector<std::string>>& overrides) {
  for (const auto& [name, given_names] : overrides) {
    const std::size_t v = graph.index_of(name);
    auto pos = std::find_if(base.factors.begin(), base.factors.end(), [v](const auto& f) { return f.var == v; });
    if (pos == base.factors.end()) {
      throw GraphError("inverse override for '" + name + "', which is not inferred under this observation set");
    }
    const std::size_t k = static_cast<std::size_t>(pos - base.factors.begin());
    const std::vector<std::size_t> context = inverse_context(base, k);
    std::vector<std::size_t> given = graph.indices(given_names);
    for (std::size_t g : given) {
      if (!std::binary_search(context.begin(), context.end(), g)) {
        throw GraphError("inverse override q(" + name + "|...) conditions on '" + graph.name(g) +
                         "', which is not available when '" + name + "' is inferred");
      }
    }
    sort_by_rank(graph, given);
    if (!separates(graph, v, context, given)) {
      base.warnings.push_back("inverse override for '" + name + "' does not d-separate it from the remaining context");
    }
    pos->given = std::move(given);
  }
  return base;
}

std::vector<std::string> verify_inverse(const ModelGraph& graph, const InverseFactorization& inv) {
  std::vector<std::string> failures;
  for (std::size_t k = 0; k < inv.factors.size(); ++k) {
    const auto& f = inv.factors[k];
    if (!separates(graph, f.var, inverse_context(inv, k), f.given)) failures.push_back(graph.name(f.var));
  }
  return failures;
}

std::string describe(const ModelGraph& graph, const InverseFactorization& inv) {
  std::ostringstream out;
  for (std::size_t k = 0; k < inv.factors.size(); ++k) {
    const auto& f = inv.factors[k];
    if (k) out << ", ";
    out << "q(" << graph.name(f.var);
    for (std::size_t j = 0; j < f.given.size(); ++j) out << (j ? "," : "|") << graph.name(f.given[j]);
    out << ")";
  }
  return out.str();
}

std::string to_dot(const ModelGraph& graph, const InverseFactorization& inv) {
  std::ostringstream out;
  out << "digraph model {\n";
  for (std::size_t i = 0; i < graph.size(); ++i) {
    out << "  \"" << graph.name(i) << "\" [shape=" << (graph.variable(i).role == Role::observed ? "box" : "ellipse")
        << "];\n";
  }
  for (std::size_t i = 0; i < graph.size(); ++i)
    for (std::size_t p : graph.parents(i)) out << "  \"" << graph.name(p) << "\" -> \"" << graph.name(i) << "\";\n";
  for (const auto& f : inv.factors)
    for (std::size_t g : f.given)
      out << "  \"" << graph.name(g) << "\" -> \"" << graph.name(f.var) << "\" [style=dashed, color=blue];\n";
  out << "}\n";
  return out.str();
}

}  // namespace admp
