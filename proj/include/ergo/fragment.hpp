#pragma once

#include <algorithm>
#include <cctype>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace ergo {

// Formula of a countable fragment, with countable connectives represented as
// schemes: an index variable, a materialized prefix length and a body
// template whose instances substitute the index.
struct Fragment {
  enum class Kind { Rel, Eq, Not, And, Or, Forall, Exists, SchemeAnd, SchemeOr };
  Kind kind{Kind::And};
  std::string stem;               // Rel: symbol stem
  std::string index;              // Rel: index term (empty, digits, or an index variable)
  std::vector<std::string> vars;  // Rel/Eq: arguments; quantifier: bound variable; scheme: index variable
  int prefix{0};                  // scheme: materialized prefix length
  std::vector<Fragment> kids;

  static Fragment rel(std::string name, std::vector<std::string> args, std::string idx = "") {
    Fragment f;
    f.kind = Kind::Rel;
    f.stem = std::move(name);
    f.index = std::move(idx);
    f.vars = std::move(args);
    return f;
  }
  static Fragment eq(std::string a, std::string b) {
    Fragment f;
    f.kind = Kind::Eq;
    f.vars = {std::move(a), std::move(b)};
    return f;
  }
  static Fragment unary(Kind k, Fragment body) {
    Fragment f;
    f.kind = k;
    f.kids = {std::move(body)};
    return f;
  }
  static Fragment nary(Kind k, std::vector<Fragment> kids) {
    Fragment f;
    f.kind = k;
    f.kids = std::move(kids);
    return f;
  }
  static Fragment quant(Kind k, std::string var, Fragment body) {
    Fragment f;
    f.kind = k;
    f.vars = {std::move(var)};
    f.kids = {std::move(body)};
    return f;
  }
  static Fragment scheme(Kind k, std::string idx, int prefix, Fragment body) {
    if (prefix < 1) throw std::invalid_argument("scheme prefix must be at least 1");
    Fragment f;
    f.kind = k;
    f.vars = {std::move(idx)};
    f.prefix = prefix;
    f.kids = {std::move(body)};
    return f;
  }

  bool is_scheme() const { return kind == Kind::SchemeAnd || kind == Kind::SchemeOr; }
  bool is_quantifier() const { return kind == Kind::Forall || kind == Kind::Exists; }

  friend bool operator==(const Fragment&, const Fragment&) = default;
};

inline bool is_number(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

// Concrete relation name: stem followed by a numeric index, if any.
inline std::string symbol_name(const Fragment& f) {
  if (f.kind != Fragment::Kind::Rel) throw std::logic_error("not a relation atom");
  if (f.index.empty()) return f.stem;
  if (!is_number(f.index)) throw std::invalid_argument("unbound index variable " + f.index);
  return f.stem + f.index;
}

inline std::string to_sexpr(const Fragment& f) {
  using K = Fragment::Kind;
  std::string s = "(";
  switch (f.kind) {
    case K::Rel:
      s += "rel ";
      s += f.index.empty() ? f.stem : "(" + f.stem + " " + f.index + ")";
      for (auto& v : f.vars) s += " " + v;
      break;
    case K::Eq:
      s += "eq " + f.vars[0] + " " + f.vars[1];
      break;
    case K::Not:
    case K::And:
    case K::Or:
      s += f.kind == K::Not ? "not" : f.kind == K::And ? "and" : "or";
      for (auto& k : f.kids) s += " " + to_sexpr(k);
      break;
    case K::Forall:
    case K::Exists:
      s += (f.kind == K::Forall ? "forall " : "exists ") + f.vars[0] + " " + to_sexpr(f.kids[0]);
      break;
    case K::SchemeAnd:
    case K::SchemeOr:
      s += (f.kind == K::SchemeAnd ? "schemeAnd " : "schemeOr ") + f.vars[0] + " " + std::to_string(f.prefix) + " " +
           to_sexpr(f.kids[0]);
      break;
  }
  return s + ")";
}

namespace detail {

struct SexprParser {
  std::vector<std::string> toks;
  std::size_t pos{0};

  explicit SexprParser(const std::string& text) {
    std::string cur;
    auto flush = [&] {
      if (!cur.empty()) toks.push_back(cur), cur.clear();
    };
    for (char c : text) {
      if (c == '(' || c == ')') {
        flush();
        toks.emplace_back(1, c);
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        flush();
      } else {
        cur.push_back(c);
      }
    }
    flush();
  }

  const std::string& peek() const {
    if (pos >= toks.size()) throw std::invalid_argument("unexpected end of formula");
    return toks[pos];
  }
  std::string next() {
    auto t = peek();
    ++pos;
    return t;
  }
  void expect(const std::string& t) {
    if (next() != t) throw std::invalid_argument("expected '" + t + "'");
  }
  std::string atom() {
    auto t = next();
    if (t == "(" || t == ")") throw std::invalid_argument("expected a name");
    return t;
  }

  Fragment formula() {
    using K = Fragment::Kind;
    expect("(");
    std::string head = atom();
    Fragment f;
    if (head == "rel") {
      std::string stem, idx;
      if (peek() == "(") {
        next();
        stem = atom();
        idx = atom();
        expect(")");
      } else {
        stem = atom();
      }
      std::vector<std::string> args;
      while (peek() != ")") args.push_back(atom());
      f = Fragment::rel(stem, args, idx);
    } else if (head == "eq") {
      auto a = atom();
      auto b = atom();
      f = Fragment::eq(a, b);
    } else if (head == "not") {
      f = Fragment::unary(K::Not, formula());
    } else if (head == "and" || head == "or") {
      std::vector<Fragment> kids;
      while (peek() != ")") kids.push_back(formula());
      f = Fragment::nary(head == "and" ? K::And : K::Or, kids);
    } else if (head == "forall" || head == "exists") {
      auto v = atom();
      f = Fragment::quant(head == "forall" ? K::Forall : K::Exists, v, formula());
    } else if (head == "schemeAnd" || head == "schemeOr") {
      auto idx = atom();
      auto n = atom();
      if (!is_number(n)) throw std::invalid_argument("scheme prefix must be a number");
      f = Fragment::scheme(head == "schemeAnd" ? K::SchemeAnd : K::SchemeOr, idx, std::stoi(n), formula());
    } else {
      throw std::invalid_argument("unknown connective " + head);
    }
    expect(")");
    return f;
  }
};

}  // namespace detail

inline Fragment parse_fragment(const std::string& text) {
  detail::SexprParser p(text);
  auto f = p.formula();
  if (p.pos != p.toks.size()) throw std::invalid_argument("trailing input after formula");
  return f;
}

inline void free_vars(const Fragment& f, std::set<std::string>& out) {
  using K = Fragment::Kind;
  switch (f.kind) {
    case K::Rel:
    case K::Eq:
      out.insert(f.vars.begin(), f.vars.end());
      return;
    case K::Forall:
    case K::Exists: {
      std::set<std::string> inner;
      free_vars(f.kids[0], inner);
      inner.erase(f.vars[0]);
      out.insert(inner.begin(), inner.end());
      return;
    }
    default:
      for (auto& k : f.kids) free_vars(k, out);
  }
}

// Free variables sorted by name: the argument order of the formula's symbol.
inline std::vector<std::string> free_vars(const Fragment& f) {
  std::set<std::string> s;
  free_vars(f, s);
  return {s.begin(), s.end()};
}

// Substitute a number for an index variable.
inline Fragment instantiate(const Fragment& f, const std::string& idx, long value) {
  Fragment g = f;
  if (g.kind == Fragment::Kind::Rel && g.index == idx) g.index = std::to_string(value);
  if (g.is_scheme() && g.vars[0] == idx) return g;  // rebinds the index
  for (auto& k : g.kids) k = instantiate(k, idx, value);
  return g;
}

// The i-th member of a scheme (materialized or not).
inline Fragment scheme_member(const Fragment& f, long i) {
  if (!f.is_scheme()) throw std::logic_error("not a scheme");
  return instantiate(f.kids[0], f.vars[0], i);
}

// Indices of a stemmed relation mentioned outside schemes.
inline void mentioned_indices(const Fragment& f, const std::string& stem, std::set<long>& out) {
  if (f.kind == Fragment::Kind::Rel && f.stem == stem && is_number(f.index)) out.insert(std::stol(f.index));
  if (f.is_scheme()) return;
  for (auto& k : f.kids) mentioned_indices(k, stem, out);
}

inline bool contains_scheme(const Fragment& f) {
  if (f.is_scheme()) return true;
  for (auto& k : f.kids)
    if (contains_scheme(k)) return true;
  return false;
}

}  // namespace ergo
