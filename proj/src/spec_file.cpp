#include "admp/spec_file.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace admp {

namespace {

struct Token {
  std::string text;
  std::size_t column = 0;
};

struct Line {
  std::size_t number = 0;
  bool indented = false;
  std::vector<Token> tokens;
};

std::vector<Line> tokenize(const std::string& text) {
  std::vector<Line> lines;
  std::istringstream in(text);
  std::string raw;
  std::size_t number = 0;
  while (std::getline(in, raw)) {
    ++number;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    Line line;
    line.number = number;
    std::size_t i = 0;
    while (i < raw.size()) {
      if (raw[i] == ' ' || raw[i] == '\t' || raw[i] == '\r') {
        ++i;
        continue;
      }
      const std::size_t start = i;
      while (i < raw.size() && raw[i] != ' ' && raw[i] != '\t' && raw[i] != '\r') ++i;
      line.tokens.push_back({raw.substr(start, i - start), start + 1});
    }
    if (line.tokens.empty()) continue;
    line.indented = line.tokens.front().column > 1;
    lines.push_back(std::move(line));
  }
  return lines;
}

class Parser {
 public:
  Parser(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(std::size_t line, std::size_t column, const std::string& msg) const {
    throw SpecError(source_, line, column, msg);
  }
  [[noreturn]] void fail(const Line& l, const Token& t, const std::string& msg) const { fail(l.number, t.column, msg); }

  double number(const Line& l, const Token& t) const {
    double v = 0;
    const char* b = t.text.data();
    const char* e = b + t.text.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) fail(l, t, "expected a number, got '" + t.text + "'");
    return v;
  }
  std::size_t count(const Line& l, const Token& t) const {
    std::size_t v = 0;
    const char* b = t.text.data();
    const char* e = b + t.text.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) fail(l, t, "expected a nonnegative integer, got '" + t.text + "'");
    return v;
  }
  void arity(const Line& l, std::size_t n) const {
    if (l.tokens.size() != n + 1) {
      const Token& at = l.tokens.size() > n + 1 ? l.tokens[n + 1] : l.tokens.back();
      fail(l, at, "'" + l.tokens[0].text + "' takes " + std::to_string(n) + " value" + (n == 1 ? "" : "s"));
    }
  }
  std::vector<double> numbers(const Line& l) const {
    std::vector<double> out;
    for (std::size_t k = 1; k < l.tokens.size(); ++k) out.push_back(number(l, l.tokens[k]));
    return out;
  }

  bool family_key(const Line& l, FamilySpec& f) const {
    const std::string& key = l.tokens[0].text;
    if (key == "family") {
      arity(l, 1);
      const std::string& v = l.tokens[1].text;
      if (v == "gaussian") f.kind = FamilyKind::gaussian;
      else if (v == "bernoulli") f.kind = FamilyKind::bernoulli;
      else if (v == "categorical") f.kind = FamilyKind::categorical;
      else if (v == "implicit") f.kind = FamilyKind::implicit;
      else fail(l, l.tokens[1], "unknown family '" + v + "'");
    } else if (key == "hidden") {
      f.hidden.clear();
      for (std::size_t k = 1; k < l.tokens.size(); ++k) {
        const std::size_t n = count(l, l.tokens[k]);
        if (n == 0) fail(l, l.tokens[k], "hidden layer width must be positive");
        f.hidden.push_back(n);
      }
    } else if (key == "activation") {
      arity(l, 1);
      try {
        f.activation = parse_activation(l.tokens[1].text);
      } catch (const std::exception& e) {
        fail(l, l.tokens[1], e.what());
      }
    } else if (key == "scale_mode") {
      arity(l, 1);
      const std::string& v = l.tokens[1].text;
      if (v == "network") f.scale_mode = ScaleMode::network;
      else if (v == "learned") f.scale_mode = ScaleMode::learned;
      else if (v == "fixed") f.scale_mode = ScaleMode::fixed;
      else fail(l, l.tokens[1], "unknown scale mode '" + v + "'");
    } else if (key == "scale") {
      f.scale = numbers(l);
    } else if (key == "mean") {
      f.mean = numbers(l);
    } else if (key == "logits") {
      f.logits = numbers(l);
    } else if (key == "weight") {
      f.weight = numbers(l);
    } else if (key == "bias") {
      f.bias = numbers(l);
    } else if (key == "fixed") {
      if (l.tokens.size() == 1) {
        f.fixed = true;
      } else {
        arity(l, 1);
        if (l.tokens[1].text == "true") f.fixed = true;
        else if (l.tokens[1].text == "false") f.fixed = false;
        else fail(l, l.tokens[1], "expected true or false");
      }
    } else if (key == "noise") {
      if (l.tokens.size() < 2 || l.tokens.size() > 3) fail(l, l.tokens[0], "'noise' takes a width and an optional kind");
      f.noise_dim = count(l, l.tokens[1]);
      if (l.tokens.size() == 3) {
        const std::string& v = l.tokens[2].text;
        if (v == "normal") f.noise = NoiseKind::normal;
        else if (v == "uniform") f.noise = NoiseKind::uniform;
        else fail(l, l.tokens[2], "unknown noise kind '" + v + "'");
      }
    } else {
      return false;
    }
    return true;
  }

  ModelSpec parse(const std::string& text) {
    const std::vector<Line> lines = tokenize(text);
    ModelSpec spec;
    spec.generative.clear();
    std::map<std::string, std::size_t> var_line, factor_line;
    std::vector<std::pair<const Line*, const Token*>> parent_refs;
    bool have_model = false, have_data = false;

    for (std::size_t i = 0; i < lines.size();) {
      const Line& head = lines[i];
      if (head.indented) fail(head, head.tokens[0], "expected a block header at the start of the line");
      std::vector<const Line*> body;
      for (++i; i < lines.size() && lines[i].indented; ++i) body.push_back(&lines[i]);
      const std::string& kind = head.tokens[0].text;

      auto name_arg = [&]() -> std::string {
        arity(head, 1);
        return head.tokens[1].text;
      };

      if (kind == "model") {
        if (have_model) fail(head, head.tokens[0], "duplicate model block");
        have_model = true;
        spec.name = name_arg();
        for (const Line* l : body) fail(*l, l->tokens[0], "model block takes no keys");
      } else if (kind == "variable") {
        VariableDecl v;
        v.name = name_arg();
        if (var_line.count(v.name)) fail(head, head.tokens[1], "variable '" + v.name + "' is declared twice");
        var_line[v.name] = head.number;
        for (const Line* l : body) {
          const std::string& key = l->tokens[0].text;
          if (key == "dim") {
            arity(*l, 1);
            v.dim = count(*l, l->tokens[1]);
            if (v.dim == 0) fail(*l, l->tokens[1], "dim must be positive");
          } else if (key == "role") {
            arity(*l, 1);
            if (l->tokens[1].text == "observed") v.role = Role::observed;
            else if (l->tokens[1].text == "latent") v.role = Role::latent;
            else fail(*l, l->tokens[1], "role must be observed or latent");
          } else if (key == "support") {
            if (l->tokens.size() < 2) fail(*l, l->tokens[0], "'support' needs a kind");
            const std::string& s = l->tokens[1].text;
            if (s == "real" || s == "binary") {
              arity(*l, 1);
              v.support = s == "real" ? Support::real() : Support::binary();
            } else if (s == "categorical") {
              arity(*l, 2);
              const std::size_t k = count(*l, l->tokens[2]);
              if (k < 2) fail(*l, l->tokens[2], "categorical support needs at least 2 categories");
              v.support = Support::categorical(k);
            } else {
              fail(*l, l->tokens[1], "unknown support '" + s + "'");
            }
          } else {
            fail(*l, l->tokens[0], "unknown variable key '" + key + "'");
          }
        }
        if (v.support.kind == Support::Kind::categorical && v.dim != 1) {
          fail(head, head.tokens[0], "categorical variable '" + v.name + "' must have dim 1");
        }
        spec.graph.variables.push_back(std::move(v));
      } else if (kind == "factor") {
        FactorDecl f;
        f.child = name_arg();
        if (factor_line.count(f.child)) fail(head, head.tokens[1], "second factor for '" + f.child + "'");
        factor_line[f.child] = head.number;
        FamilySpec fam;
        bool explicit_family = false;
        for (const Line* l : body) {
          if (l->tokens[0].text == "parents") {
            for (std::size_t k = 1; k < l->tokens.size(); ++k) {
              f.parents.push_back(l->tokens[k].text);
              parent_refs.emplace_back(l, &l->tokens[k]);
            }
          } else if (family_key(*l, fam)) {
            explicit_family = explicit_family || l->tokens[0].text == "family";
          } else {
            fail(*l, l->tokens[0], "unknown factor key '" + l->tokens[0].text + "'");
          }
        }
        if (!explicit_family) fail(head, head.tokens[0], "factor '" + f.child + "' needs a family line");
        f.kind = fam.kind == FamilyKind::implicit ? FactorKind::implicit_sampler : FactorKind::explicit_family;
        spec.generative[f.child] = fam;
        spec.graph.factors.push_back(std::move(f));
      } else if (kind == "infer") {
        const std::string name = name_arg();
        if (spec.inference.count(name)) fail(head, head.tokens[1], "second infer block for '" + name + "'");
        FamilySpec fam;
        fam.hidden = {32};
        fam.scale_mode = ScaleMode::network;
        for (const Line* l : body)
          if (!family_key(*l, fam)) fail(*l, l->tokens[0], "unknown infer key '" + l->tokens[0].text + "'");
        spec.inference[name] = fam;
        parent_refs.emplace_back(&head, &head.tokens[1]);
      } else if (kind == "inverse") {
        const std::string name = name_arg();
        std::vector<std::string> given;
        for (const Line* l : body) {
          if (l->tokens[0].text != "given") fail(*l, l->tokens[0], "unknown inverse key '" + l->tokens[0].text + "'");
          for (std::size_t k = 1; k < l->tokens.size(); ++k) {
            given.push_back(l->tokens[k].text);
            parent_refs.emplace_back(l, &l->tokens[k]);
          }
        }
        spec.inverse_overrides[name] = given;
        parent_refs.emplace_back(&head, &head.tokens[1]);
      } else if (kind == "oracle") {
        OracleSpec o;
        o.kind = name_arg();
        if (o.kind != "linear_gaussian") fail(head, head.tokens[1], "unknown oracle kind '" + o.kind + "'");
        for (const Line* l : body) {
          const std::string& key = l->tokens[0].text;
          if (key == "latent" || key == "observed") {
            arity(*l, 1);
            (key == "latent" ? o.latent : o.observed) = l->tokens[1].text;
            parent_refs.emplace_back(l, &l->tokens[1]);
          } else if (key == "grid") {
            arity(*l, 3);
            o.grid_lo = number(*l, l->tokens[1]);
            o.grid_hi = number(*l, l->tokens[2]);
            o.grid_points = count(*l, l->tokens[3]);
            if (o.grid_points == 0) fail(*l, l->tokens[3], "grid needs at least one point");
          } else {
            fail(*l, l->tokens[0], "unknown oracle key '" + key + "'");
          }
        }
        if (o.latent.empty() || o.observed.empty()) fail(head, head.tokens[0], "oracle block needs latent and observed");
        spec.oracle = o;
      } else if (kind == "data") {
        if (have_data) fail(head, head.tokens[0], "duplicate data block");
        have_data = true;
        arity(head, 0);
        for (const Line* l : body) {
          const std::string& key = l->tokens[0].text;
          if (key == "source") {
            arity(*l, 1);
            spec.data.source = l->tokens[1].text;
            static const std::set<std::string> known{"self", "mixture2d", "minidigits", "csv"};
            if (!known.count(spec.data.source)) fail(*l, l->tokens[1], "unknown data source '" + spec.data.source + "'");
          } else if (key == "count") {
            arity(*l, 1);
            spec.data.count = count(*l, l->tokens[1]);
          } else if (key == "seed") {
            arity(*l, 1);
            spec.data.seed = count(*l, l->tokens[1]);
          } else if (key == "path") {
            arity(*l, 1);
            spec.data.path = l->tokens[1].text;
          } else {
            fail(*l, l->tokens[0], "unknown data key '" + key + "'");
          }
        }
      } else {
        fail(head, head.tokens[0], "unknown block '" + kind + "'");
      }
    }

    for (const auto& [line, tok] : parent_refs) {
      if (!var_line.count(tok->text)) fail(*line, *tok, "unknown variable '" + tok->text + "'");
    }
    for (const auto& [name, ln] : factor_line) {
      if (!var_line.count(name)) fail(ln, 8, "factor for undeclared variable '" + name + "'");
    }
    for (const auto& v : spec.graph.variables) {
      if (!factor_line.count(v.name)) fail(var_line[v.name], 1, "variable '" + v.name + "' has no factor block");
    }
    // keep factors in variable order so serialization is canonical
    std::vector<FactorDecl> ordered;
    for (const auto& v : spec.graph.variables)
      for (const auto& f : spec.graph.factors)
        if (f.child == v.name) ordered.push_back(f);
    spec.graph.factors = std::move(ordered);

    const ValidationReport report = validate(spec.graph);
    if (!report.ok) {
      std::size_t ln = 1;
      if (!report.cycle.empty() && factor_line.count(report.cycle.front())) ln = factor_line[report.cycle.front()];
      std::string msg = report.errors.empty() ? "invalid graph" : report.errors.front();
      fail(ln, 1, msg);
    }
    try {
      Model check(spec);
    } catch (const std::exception& e) {
      const std::string msg = e.what();
      std::size_t ln = 1;
      for (const auto& [name, l] : factor_line)
        if (msg.find("'" + name + "'") != std::string::npos) ln = l;
      fail(ln, 1, msg);
    }
    return spec;
  }

 private:
  std::string source_;
};

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

void write_list(std::ostringstream& out, const char* key, const std::vector<double>& values) {
  if (values.empty()) return;
  out << "  " << key;
  for (double v : values) out << ' ' << fmt(v);
  out << '\n';
}

void write_family(std::ostringstream& out, const FamilySpec& f) {
  out << "  family " << to_string(f.kind) << '\n';
  out << "  hidden";
  for (std::size_t h : f.hidden) out << ' ' << h;
  out << '\n';
  out << "  activation " << to_string(f.activation) << '\n';
  out << "  scale_mode " << to_string(f.scale_mode) << '\n';
  write_list(out, "scale", f.scale);
  write_list(out, "mean", f.mean);
  write_list(out, "logits", f.logits);
  write_list(out, "weight", f.weight);
  write_list(out, "bias", f.bias);
  if (f.fixed) out << "  fixed true\n";
  out << "  noise " << f.noise_dim << ' ' << to_string(f.noise) << '\n';
}

}  // namespace

ModelSpec parse_model_spec(const std::string& text, const std::string& source) { return Parser(source).parse(text); }

ModelSpec load_model_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open spec file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model_spec(ss.str(), path);
}

std::string serialize_model_spec(const ModelSpec& spec) {
  std::ostringstream out;
  out << "model " << spec.name << "\n\n";
  for (const VariableDecl& v : spec.graph.variables) {
    out << "variable " << v.name << '\n';
    out << "  dim " << v.dim << '\n';
    out << "  role " << (v.role == Role::observed ? "observed" : "latent") << '\n';
    switch (v.support.kind) {
      case Support::Kind::real: out << "  support real\n"; break;
      case Support::Kind::binary: out << "  support binary\n"; break;
      case Support::Kind::categorical: out << "  support categorical " << v.support.categories << '\n'; break;
    }
    out << '\n';
  }
  for (const FactorDecl& f : spec.graph.factors) {
    out << "factor " << f.child << '\n';
    if (!f.parents.empty()) {
      out << "  parents";
      for (const auto& p : f.parents) out << ' ' << p;
      out << '\n';
    }
    write_family(out, spec.generative.at(f.child));
    out << '\n';
  }
  for (const auto& [name, fam] : spec.inference) {
    out << "infer " << name << '\n';
    write_family(out, fam);
    out << '\n';
  }
  for (const auto& [name, given] : spec.inverse_overrides) {
    out << "inverse " << name << '\n';
    out << "  given";
    for (const auto& g : given) out << ' ' << g;
    out << "\n\n";
  }
  if (spec.oracle) {
    const OracleSpec& o = *spec.oracle;
    out << "oracle " << o.kind << '\n';
    out << "  latent " << o.latent << '\n';
    out << "  observed " << o.observed << '\n';
    out << "  grid " << fmt(o.grid_lo) << ' ' << fmt(o.grid_hi) << ' ' << o.grid_points << "\n\n";
  }
  out << "data\n";
  out << "  source " << spec.data.source << '\n';
  out << "  count " << spec.data.count << '\n';
  out << "  seed " << spec.data.seed << '\n';
  if (!spec.data.path.empty()) out << "  path " << spec.data.path << '\n';
  return out.str();
}

std::string spec_hash(const ModelSpec& spec) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : serialize_model_spec(spec)) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace admp
