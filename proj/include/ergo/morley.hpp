#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <tuple>
#include <string>
#include <vector>

#include <json.hpp>

#include "fragment.hpp"
#include "logic.hpp"

namespace ergo {

struct ClosureNode {
  Fragment formula;
  std::string key;                // canonical s-expression
  std::vector<std::string> vars;  // free variables sorted by name
  std::size_t symbol{0};          // index of R_phi in L'
  std::vector<std::size_t> kids;  // closure indices; schemes list their materialized members
};

struct Quantifier {
  bool exists{false};
  std::string var;
  friend bool operator==(const Quantifier&, const Quantifier&) = default;
};

// Prenex axiom: quantifier prefix over variables numbered by position, and a
// quantifier-free matrix over L'.
struct Axiom {
  std::string node;
  int schema{0};  // 1..8 defining schemas, 0 for sentence assertions
  int index{-1};  // member index for schemas 5 and 6
  std::string part;
  std::vector<Quantifier> prefix;
  QfFormula matrix;

  bool universal() const {
    return std::none_of(prefix.begin(), prefix.end(), [](const Quantifier& q) { return q.exists; });
  }
  bool pithy() const {
    if (prefix.empty() || !prefix.back().exists) return false;
    return std::none_of(prefix.begin(), prefix.end() - 1, [](const Quantifier& q) { return q.exists; });
  }
};

struct Literal {
  std::size_t symbol{0};
  bool positive{true};
  std::vector<int> args;  // variable positions
};

// Partial quantifier-free type from a scheme node: pattern 1 is
// {R_psi_i} + {not R_phi} for conjunction schemes, pattern 2 is
// {not R_psi_i} + {R_phi} for disjunction schemes.
struct OmittedType {
  std::size_t node{0};
  std::string key;
  int pattern{1};
  std::vector<std::string> vars;
  Literal head;
  std::vector<Literal> members;  // materialized prefix
  Fragment scheme;               // regenerates the tail

  Fragment member(long i) const { return scheme_member(scheme, i); }
  bool member_positive() const { return pattern == 1; }
};

inline std::string closure_symbol_name(const std::string& key) { return "R[" + key + "]"; }

struct MorleyTheory {
  Signature base;
  Signature language;
  std::vector<ClosureNode> closure;
  std::map<std::string, std::size_t> node_index;
  std::vector<Fragment> sentences;
  std::vector<Axiom> axioms;
  std::vector<OmittedType> omitted;

  const ClosureNode& node(const std::string& key) const { return closure.at(node_index.at(key)); }
  std::size_t symbol_of(const Fragment& f) const { return node(to_sexpr(f)).symbol; }

  std::vector<std::size_t> pithy_axioms() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < axioms.size(); ++i)
      if (axioms[i].pithy()) out.push_back(i);
    return out;
  }

  // Schema instances: the universal and pithy halves of one (7)/(8)
  // biconditional count once.
  std::size_t schema_instance_count() const {
    std::set<std::tuple<std::string, int, int>> seen;
    std::size_t asserts = 0;
    for (auto& a : axioms) {
      if (a.schema == 0)
        ++asserts;
      else
        seen.insert({a.node, a.schema, a.index});
    }
    return seen.size() + asserts;
  }
};

struct MorleyOptions {
  std::size_t max_vars{16};
};

namespace detail {

inline std::vector<int> positions(const std::vector<std::string>& sub, const std::vector<std::string>& all) {
  std::vector<int> out;
  for (auto& v : sub) {
    auto it = std::find(all.begin(), all.end(), v);
    if (it == all.end()) throw std::logic_error("variable " + v + " outside prefix");
    out.push_back(static_cast<int>(it - all.begin()));
  }
  return out;
}

inline std::vector<Quantifier> foralls(const std::vector<std::string>& vars) {
  std::vector<Quantifier> q;
  for (auto& v : vars) q.push_back({false, v});
  return q;
}

}  // namespace detail

// Morleyization: one symbol R_phi per closure formula, defining axioms by node
// kind, omitted types per scheme node, and an assertion per input sentence.
inline MorleyTheory morleyize(const std::vector<Fragment>& theory, const Signature& base_in = {},
                              MorleyOptions opt = {}) {
  using K = Fragment::Kind;
  MorleyTheory th;
  th.sentences = theory;
  th.base = base_in;

  // Subformula closure in post-order.
  std::function<std::size_t(const Fragment&)> visit = [&](const Fragment& f) -> std::size_t {
    std::string key = to_sexpr(f);
    if (auto it = th.node_index.find(key); it != th.node_index.end()) return it->second;
    ClosureNode n;
    n.formula = f;
    n.key = key;
    n.vars = free_vars(f);
    if (n.vars.size() + 1 > opt.max_vars) throw std::length_error("free-variable supply exhausted at " + key);
    if (f.kind == K::Rel) {
      auto name = symbol_name(f);
      auto idx = th.base.find(name);
      if (!idx) th.base.add({name, static_cast<int>(f.vars.size())});
      else if (th.base[*idx].arity != static_cast<int>(f.vars.size()))
        throw std::invalid_argument("arity mismatch for " + name);
    } else if (f.is_scheme()) {
      for (int i = 0; i < f.prefix; ++i) n.kids.push_back(visit(scheme_member(f, i)));
    } else {
      for (auto& k : f.kids) n.kids.push_back(visit(k));
    }
    th.node_index[key] = th.closure.size();
    th.closure.push_back(std::move(n));
    return th.closure.size() - 1;
  };
  for (auto& s : theory) {
    if (!free_vars(s).empty()) throw std::invalid_argument("theory member has free variables: " + to_sexpr(s));
    visit(s);
  }

  th.language = Signature(th.base.symbols());
  for (auto& n : th.closure)
    n.symbol = th.language.add({closure_symbol_name(n.key), static_cast<int>(n.vars.size())});

  auto R = [&](std::size_t node, const std::vector<std::string>& prefix_vars) {
    const auto& n = th.closure[node];
    return QfFormula::rel(n.symbol, detail::positions(n.vars, prefix_vars));
  };

  for (std::size_t i = 0; i < th.closure.size(); ++i) {
    const auto& n = th.closure[i];
    const auto& f = n.formula;
    const auto& x = n.vars;
    auto add = [&](int schema, int index, std::string part, std::vector<Quantifier> prefix, QfFormula m) {
      th.axioms.push_back({n.key, schema, index, std::move(part), std::move(prefix), std::move(m)});
    };
    auto self = R(i, x);
    switch (f.kind) {
      case K::Rel: {
        auto atom = QfFormula::rel(th.language.at(symbol_name(f)), detail::positions(f.vars, x));
        add(1, -1, "def", detail::foralls(x), QfFormula::iff(self, atom));
        break;
      }
      case K::Eq: {
        auto p = detail::positions(f.vars, x);
        add(1, -1, "def", detail::foralls(x), QfFormula::iff(self, QfFormula::eq(p[0], p[1])));
        break;
      }
      case K::Not:
        add(2, -1, "def", detail::foralls(x), QfFormula::iff(self, QfFormula::neg(R(n.kids[0], x))));
        break;
      case K::And:
      case K::Or: {
        std::vector<QfFormula> ks;
        for (auto k : n.kids) ks.push_back(R(k, x));
        auto body = f.kind == K::And ? QfFormula::conj(ks) : QfFormula::disj(ks);
        add(f.kind == K::And ? 3 : 4, -1, "def", detail::foralls(x), QfFormula::iff(self, body));
        break;
      }
      case K::SchemeAnd:
      case K::SchemeOr: {
        bool conj = f.kind == K::SchemeAnd;
        for (std::size_t j = 0; j < n.kids.size(); ++j) {
          auto member = R(n.kids[j], x);
          add(conj ? 5 : 6, static_cast<int>(j), "def", detail::foralls(x),
              conj ? QfFormula::implies(self, member) : QfFormula::implies(member, self));
        }
        OmittedType q;
        q.node = i;
        q.key = n.key;
        q.pattern = conj ? 1 : 2;
        q.vars = x;
        q.head = {n.symbol, !conj, detail::positions(n.vars, x)};
        for (auto k : n.kids)
          q.members.push_back({th.closure[k].symbol, conj, detail::positions(th.closure[k].vars, x)});
        q.scheme = f;
        th.omitted.push_back(std::move(q));
        break;
      }
      case K::Forall:
      case K::Exists: {
        auto xy = x;
        xy.push_back(f.vars[0]);
        auto body = R(n.kids[0], xy);
        auto head = R(i, xy);
        auto ex = detail::foralls(x);
        ex.push_back({true, f.vars[0]});
        if (f.kind == K::Forall) {
          add(7, -1, "universal", detail::foralls(xy), QfFormula::implies(head, body));
          add(7, -1, "pithy", ex, QfFormula::disj({QfFormula::neg(body), head}));
        } else {
          add(8, -1, "universal", detail::foralls(xy), QfFormula::implies(body, head));
          add(8, -1, "pithy", ex, QfFormula::disj({QfFormula::neg(head), body}));
        }
        break;
      }
    }
  }
  for (auto& s : theory) {
    Axiom a;
    a.node = to_sexpr(s);
    a.schema = 0;
    a.part = "assert";
    a.matrix = QfFormula::rel(th.node(a.node).symbol, {});
    th.axioms.push_back(std::move(a));
  }
  return th;
}

inline MorleyTheory morleyize(const std::vector<std::string>& sentences, const Signature& base = {},
                              MorleyOptions opt = {}) {
  std::vector<Fragment> fs;
  for (auto& s : sentences) fs.push_back(parse_fragment(s));
  return morleyize(fs, base, opt);
}

// Every axiom universal, or universal followed by a single existential.
inline bool check_pi2minus(const std::vector<Axiom>& axioms) {
  return std::all_of(axioms.begin(), axioms.end(), [](const Axiom& a) { return a.universal() || a.pithy(); });
}

inline bool check_pi2minus(const MorleyTheory& th) { return check_pi2minus(th.axioms); }

// Expansion of M to L' by evaluating every closure formula on M: quantifiers
// range over the finite domain, schemes over their materialized prefix.
inline FiniteStructure canonical_expand(const FiniteStructure& m, const MorleyTheory& th) {
  using K = Fragment::Kind;
  Signature sig(m.signature().symbols());
  std::vector<std::size_t> sym(th.closure.size());
  for (std::size_t i = 0; i < th.closure.size(); ++i)
    sym[i] = sig.add({closure_symbol_name(th.closure[i].key), static_cast<int>(th.closure[i].vars.size())});
  FiniteStructure out(m.domain_size(), sig);
  m.for_each_fact([&](std::size_t s, const std::vector<int>& t) { out.set(s, t); });
  const int n = static_cast<int>(m.domain_size());

  auto lookup = [&](std::size_t kid, const std::vector<std::string>& names, const std::vector<int>& vals) {
    const auto& kn = th.closure[kid];
    std::vector<int> args;
    for (auto& v : kn.vars) args.push_back(vals[detail::positions({v}, names)[0]]);
    return out.holds(sym[kid], args);
  };

  for (std::size_t i = 0; i < th.closure.size(); ++i) {
    const auto& node = th.closure[i];
    const auto& f = node.formula;
    for_each_tuple(n, static_cast<int>(node.vars.size()), [&](const std::vector<int>& t) {
      bool v = false;
      switch (f.kind) {
        case K::Rel: {
          std::vector<int> args;
          for (auto& a : f.vars) args.push_back(t[detail::positions({a}, node.vars)[0]]);
          v = m.holds(m.signature().at(symbol_name(f)), args);
          break;
        }
        case K::Eq: {
          auto p = detail::positions(f.vars, node.vars);
          v = t[p[0]] == t[p[1]];
          break;
        }
        case K::Not:
          v = !lookup(node.kids[0], node.vars, t);
          break;
        case K::And:
        case K::SchemeAnd:
          v = std::all_of(node.kids.begin(), node.kids.end(),
                          [&](std::size_t k) { return lookup(k, node.vars, t); });
          break;
        case K::Or:
        case K::SchemeOr:
          v = std::any_of(node.kids.begin(), node.kids.end(),
                          [&](std::size_t k) { return lookup(k, node.vars, t); });
          break;
        case K::Forall:
        case K::Exists: {
          auto names = node.vars;
          names.push_back(f.vars[0]);
          auto ext = t;
          ext.push_back(0);
          bool all = true, any = false;
          for (int d = 0; d < n; ++d) {
            ext.back() = d;
            bool b = lookup(node.kids[0], names, ext);
            all = all && b;
            any = any || b;
          }
          v = f.kind == K::Forall ? all : any;
          break;
        }
      }
      if (v) out.set(sym[i], t);
    });
  }
  return out;
}

inline bool verify_reduct_roundtrip(const FiniteStructure& m, const MorleyTheory& th) {
  std::vector<std::string> names;
  for (auto& s : m.signature().symbols()) names.push_back(s.name);
  return reduct(canonical_expand(m, th), names) == m;
}

// Remap a matrix from L' indices to the symbols of `sig` by name; nullopt if
// some symbol is missing.
inline std::optional<QfFormula> remap_symbols(const QfFormula& f, const Signature& from, const Signature& to) {
  QfFormula g = f;
  if (g.op == QfFormula::Op::Rel) {
    auto idx = to.find(from[g.sym].name);
    if (!idx || to[*idx].arity != from[g.sym].arity) return std::nullopt;
    g.sym = *idx;
  }
  for (auto& k : g.kids) {
    auto r = remap_symbols(k, from, to);
    if (!r) return std::nullopt;
    k = *r;
  }
  return g;
}

// Finite-domain truth of an axiom on a structure whose signature names the
// axiom's symbols.
inline bool satisfies(const FiniteStructure& m, const Axiom& a, const Signature& language) {
  auto mat = remap_symbols(a.matrix, language, m.signature());
  if (!mat) throw std::invalid_argument("axiom symbol missing from structure");
  const int n = static_cast<int>(m.domain_size());
  std::vector<int> env(a.prefix.size(), 0);
  std::function<bool(std::size_t)> rec = [&](std::size_t i) -> bool {
    if (i == a.prefix.size()) return eval_qf(m, *mat, env);
    bool ex = a.prefix[i].exists;
    for (int d = 0; d < n; ++d) {
      env[i] = d;
      bool b = rec(i + 1);
      if (ex && b) return true;
      if (!ex && !b) return false;
    }
    return !ex;
  };
  return rec(0);
}

struct AxiomAudit {
  std::size_t checked{0};
  std::size_t skipped{0};
  std::vector<std::size_t> violated;
  bool passed() const { return violated.empty(); }
};

// Check the universal axioms whose symbols all occur in m. Sentence
// assertions hold only in models of the input theory; they are optional.
inline AxiomAudit audit_universal(const FiniteStructure& m, const MorleyTheory& th, bool assertions = true) {
  AxiomAudit r;
  for (std::size_t i = 0; i < th.axioms.size(); ++i) {
    const auto& a = th.axioms[i];
    if (!a.universal() || (!assertions && a.schema == 0)) continue;
    if (!remap_symbols(a.matrix, th.language, m.signature())) {
      ++r.skipped;
      continue;
    }
    ++r.checked;
    if (!satisfies(m, a, th.language)) r.violated.push_back(i);
  }
  return r;
}

// Does the tuple realize every materialized literal of q (head included)?
inline bool realizes_prefix(const FiniteStructure& m, const OmittedType& q, const Signature& language,
                            const std::vector<int>& tuple) {
  auto lit = [&](const Literal& l) {
    std::vector<int> args;
    for (int p : l.args) args.push_back(tuple.at(p));
    return m.holds(m.signature().at(language[l.symbol].name), args) == l.positive;
  };
  if (!lit(q.head)) return false;
  return std::all_of(q.members.begin(), q.members.end(), lit);
}

inline std::string qf_to_string(const QfFormula& f, const Signature& sig, const std::vector<std::string>& names) {
  auto var = [&](int v) { return v < static_cast<int>(names.size()) ? names[v] : "x" + std::to_string(v); };
  switch (f.op) {
    case QfFormula::Op::Rel: {
      std::string s = "(rel " + sig[f.sym].name;
      for (int v : f.vars) s += " " + var(v);
      return s + ")";
    }
    case QfFormula::Op::Eq:
      return "(eq " + var(f.vars[0]) + " " + var(f.vars[1]) + ")";
    default: {
      std::string s = f.op == QfFormula::Op::Not ? "(not" : f.op == QfFormula::Op::And ? "(and" : "(or";
      for (auto& k : f.kids) s += " " + qf_to_string(k, sig, names);
      return s + ")";
    }
  }
}

inline nlohmann::ordered_json theory_json(const MorleyTheory& th) {
  using J = nlohmann::ordered_json;
  J j;
  j["sentences"] = J::array();
  for (auto& s : th.sentences) j["sentences"].push_back(to_sexpr(s));
  j["language"] = J::array();
  for (std::size_t i = 0; i < th.language.size(); ++i) {
    J e{{"name", th.language[i].name}, {"arity", th.language[i].arity}};
    e["formula"] = i < th.base.size() ? J(nullptr) : J(th.closure[i - th.base.size()].key);
    j["language"].push_back(e);
  }
  j["axioms"] = J::array();
  for (auto& a : th.axioms) {
    std::vector<std::string> names;
    J pre = J::array();
    for (auto& q : a.prefix) {
      names.push_back(q.var);
      pre.push_back(J::array({q.exists ? "exists" : "forall", q.var}));
    }
    j["axioms"].push_back({{"node", a.node},
                           {"schema", a.schema},
                           {"index", a.index},
                           {"part", a.part},
                           {"prefix", pre},
                           {"matrix", qf_to_string(a.matrix, th.language, names)}});
  }
  j["omitted"] = J::array();
  for (auto& q : th.omitted) {
    auto lit = [&](const Literal& l) {
      std::string s = (l.positive ? "" : "not ") + th.language[l.symbol].name;
      for (int p : l.args) s += " " + q.vars[p];
      return s;
    };
    J m = J::array();
    for (auto& l : q.members) m.push_back(lit(l));
    j["omitted"].push_back({{"node", q.key},
                            {"pattern", q.pattern},
                            {"vars", q.vars},
                            {"head", lit(q.head)},
                            {"members", m},
                            {"tail", to_sexpr(q.scheme.kids[0])},
                            {"index_var", q.scheme.vars[0]}});
  }
  return j;
}

}  // namespace ergo
