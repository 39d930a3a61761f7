#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace ergo {

struct Symbol {
  std::string name;
  int arity{1};
  friend bool operator==(const Symbol&, const Symbol&) = default;
};

// Signature: ordered relation symbols. A generator describes a countably
// infinite vocabulary; materialize it with truncate().
class Signature {
 public:
  using Generator = std::function<Symbol(std::size_t)>;

  Signature() = default;
  explicit Signature(std::vector<Symbol> syms) {
    for (auto& s : syms) add(std::move(s));
  }

  static Signature generated(Generator gen, std::size_t depth) {
    Signature s;
    s.gen_ = std::move(gen);
    s.truncate(depth);
    return s;
  }

  std::size_t add(Symbol s) {
    if (s.arity < 0) throw std::invalid_argument("negative arity for " + s.name);
    if (index_.count(s.name)) throw std::invalid_argument("duplicate symbol " + s.name);
    index_[s.name] = syms_.size();
    syms_.push_back(std::move(s));
    return syms_.size() - 1;
  }

  // Materialize the first `depth` generated symbols.
  void truncate(std::size_t depth) {
    if (!gen_) throw std::logic_error("signature has no generator");
    while (syms_.size() < depth) add(gen_(syms_.size()));
  }

  bool has_generator() const { return static_cast<bool>(gen_); }
  std::size_t size() const { return syms_.size(); }
  const Symbol& operator[](std::size_t i) const { return syms_.at(i); }
  const std::vector<Symbol>& symbols() const { return syms_; }

  std::optional<std::size_t> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  std::size_t at(const std::string& name) const {
    auto i = find(name);
    if (!i) throw std::out_of_range("unknown symbol " + name);
    return *i;
  }
  int max_arity() const {
    int m = 0;
    for (auto& s : syms_) m = std::max(m, s.arity);
    return m;
  }

  friend bool operator==(const Signature& a, const Signature& b) { return a.syms_ == b.syms_; }

 private:
  std::vector<Symbol> syms_;
  std::map<std::string, std::size_t> index_;
  Generator gen_;
};

inline std::size_t ipow(std::size_t b, int e) {
  std::size_t r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

// FiniteStructure: domain {0..n-1}, closed-world facts stored densely per symbol.
class FiniteStructure {
 public:
  FiniteStructure() = default;
  FiniteStructure(std::size_t n, Signature sig) : n_(n), sig_(std::move(sig)) {
    tables_.resize(sig_.size());
    for (std::size_t s = 0; s < sig_.size(); ++s) {
      double est = 1.0;
      for (int i = 0; i < sig_[s].arity; ++i) est *= static_cast<double>(n_);
      if (est > static_cast<double>(std::size_t{1} << 30)) throw std::length_error("fact table too large");
      std::size_t cells = ipow(n_, sig_[s].arity);
      tables_[s].assign(cells, false);
    }
  }

  std::size_t domain_size() const { return n_; }
  const Signature& signature() const { return sig_; }

  std::size_t offset(std::size_t sym, const std::vector<int>& args) const {
    if (static_cast<int>(args.size()) != sig_[sym].arity)
      throw std::invalid_argument("arity mismatch for " + sig_[sym].name);
    std::size_t off = 0;
    for (int a : args) {
      if (a < 0 || static_cast<std::size_t>(a) >= n_) throw std::out_of_range("argument outside domain");
      off = off * n_ + static_cast<std::size_t>(a);
    }
    return off;
  }

  bool holds(std::size_t sym, const std::vector<int>& args) const { return tables_[sym][offset(sym, args)]; }
  void set(std::size_t sym, const std::vector<int>& args, bool v = true) { tables_[sym][offset(sym, args)] = v; }

  // Raw fact table of a symbol, indexed by the base-n encoding of the tuple.
  const std::vector<bool>& table(std::size_t sym) const { return tables_.at(sym); }
  std::vector<bool>& table(std::size_t sym) { return tables_.at(sym); }

  // Visit every positive fact in canonical order: symbol index, then tuple lexicographic.
  void for_each_fact(const std::function<void(std::size_t, const std::vector<int>&)>& f) const {
    for (std::size_t s = 0; s < sig_.size(); ++s) {
      int r = sig_[s].arity;
      std::vector<int> t(r, 0);
      for (std::size_t off = 0; off < tables_[s].size(); ++off) {
        if (tables_[s][off]) {
          std::size_t x = off;
          for (int i = r - 1; i >= 0; --i) {
            t[i] = static_cast<int>(x % n_);
            x /= n_;
          }
          f(s, t);
        }
      }
    }
  }

  std::size_t fact_count() const {
    std::size_t c = 0;
    for (auto& t : tables_) c += static_cast<std::size_t>(std::count(t.begin(), t.end(), true));
    return c;
  }

  friend bool operator==(const FiniteStructure& a, const FiniteStructure& b) {
    return a.n_ == b.n_ && a.sig_ == b.sig_ && a.tables_ == b.tables_;
  }

 private:
  std::size_t n_{0};
  Signature sig_;
  std::vector<std::vector<bool>> tables_;
};

// Permutation of {0..n-1}.
class Permutation {
 public:
  Permutation() = default;
  explicit Permutation(std::vector<int> map) : map_(std::move(map)) {
    std::vector<bool> seen(map_.size(), false);
    for (int v : map_) {
      if (v < 0 || static_cast<std::size_t>(v) >= map_.size() || seen[v])
        throw std::invalid_argument("not a bijection");
      seen[v] = true;
    }
  }
  static Permutation identity(std::size_t n) {
    std::vector<int> m(n);
    std::iota(m.begin(), m.end(), 0);
    return Permutation(std::move(m));
  }
  static Permutation swap(std::size_t n, int a, int b) {
    auto p = identity(n);
    std::swap(p.map_[a], p.map_[b]);
    return p;
  }

  std::size_t size() const { return map_.size(); }
  int operator()(int i) const { return map_.at(i); }
  const std::vector<int>& mapping() const { return map_; }

  Permutation inverse() const {
    std::vector<int> inv(map_.size());
    for (std::size_t i = 0; i < map_.size(); ++i) inv[map_[i]] = static_cast<int>(i);
    return Permutation(std::move(inv));
  }
  // (a * b)(i) = a(b(i))
  friend Permutation operator*(const Permutation& a, const Permutation& b) {
    if (a.size() != b.size()) throw std::invalid_argument("size mismatch");
    std::vector<int> m(a.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = a(b(static_cast<int>(i)));
    return Permutation(std::move(m));
  }
  bool is_identity() const {
    for (std::size_t i = 0; i < map_.size(); ++i)
      if (map_[i] != static_cast<int>(i)) return false;
    return true;
  }
  friend bool operator==(const Permutation&, const Permutation&) = default;
  friend bool operator<(const Permutation& a, const Permutation& b) { return a.map_ < b.map_; }

 private:
  std::vector<int> map_;
};

// sigma(M) |= R(a) iff M |= R(sigma^-1 a)
inline FiniteStructure apply_permutation(const FiniteStructure& m, const Permutation& sigma) {
  if (sigma.size() != m.domain_size()) throw std::invalid_argument("permutation size mismatch");
  FiniteStructure out(m.domain_size(), m.signature());
  m.for_each_fact([&](std::size_t s, const std::vector<int>& t) {
    std::vector<int> img(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) img[i] = sigma(t[i]);
    out.set(s, img);
  });
  return out;
}

// Quantifier-free formula over variables x0, x1, ...
struct QfFormula {
  enum class Op { Rel, Eq, Not, And, Or };
  Op op{Op::And};
  std::size_t sym{0};
  std::vector<int> vars;
  std::vector<QfFormula> kids;

  static QfFormula rel(std::size_t s, std::vector<int> v) { return {Op::Rel, s, std::move(v), {}}; }
  static QfFormula eq(int a, int b) { return {Op::Eq, 0, {a, b}, {}}; }
  static QfFormula neg(QfFormula f) { return {Op::Not, 0, {}, {std::move(f)}}; }
  static QfFormula conj(std::vector<QfFormula> k) { return {Op::And, 0, {}, std::move(k)}; }
  static QfFormula disj(std::vector<QfFormula> k) { return {Op::Or, 0, {}, std::move(k)}; }
  static QfFormula top() { return conj({}); }
  static QfFormula bottom() { return disj({}); }
  static QfFormula implies(QfFormula a, QfFormula b) { return disj({neg(std::move(a)), std::move(b)}); }
  static QfFormula iff(const QfFormula& a, const QfFormula& b) {
    return conj({implies(a, b), implies(b, a)});
  }

  // One more than the largest variable index used.
  int var_count() const {
    int m = 0;
    for (int v : vars) m = std::max(m, v + 1);
    for (auto& k : kids) m = std::max(m, k.var_count());
    return m;
  }
  void symbols(std::set<std::size_t>& out) const {
    if (op == Op::Rel) out.insert(sym);
    for (auto& k : kids) k.symbols(out);
  }
  friend bool operator==(const QfFormula&, const QfFormula&) = default;
};

template <class Fact>
bool eval_qf_with(const QfFormula& f, const std::vector<int>& a, const Fact& fact) {
  switch (f.op) {
    case QfFormula::Op::Rel: {
      std::vector<int> t(f.vars.size());
      for (std::size_t i = 0; i < t.size(); ++i) {
        if (f.vars[i] < 0 || static_cast<std::size_t>(f.vars[i]) >= a.size())
          throw std::invalid_argument("free variable unbound");
        t[i] = a[f.vars[i]];
      }
      return fact(f.sym, t);
    }
    case QfFormula::Op::Eq:
      if (static_cast<std::size_t>(std::max(f.vars[0], f.vars[1])) >= a.size())
        throw std::invalid_argument("free variable unbound");
      return a[f.vars[0]] == a[f.vars[1]];
    case QfFormula::Op::Not:
      return !eval_qf_with(f.kids.at(0), a, fact);
    case QfFormula::Op::And:
      for (auto& k : f.kids)
        if (!eval_qf_with(k, a, fact)) return false;
      return true;
    case QfFormula::Op::Or:
      for (auto& k : f.kids)
        if (eval_qf_with(k, a, fact)) return true;
      return false;
  }
  return false;
}

inline bool eval_qf(const FiniteStructure& m, const QfFormula& f, const std::vector<int>& a) {
  return eval_qf_with(f, a, [&](std::size_t s, const std::vector<int>& t) {
    if (s >= m.signature().size()) throw std::invalid_argument("symbol outside signature");
    return m.holds(s, t);
  });
}

// Quantifier-free type of a tuple over a sublanguage.
// Bit order: for each symbol in sublanguage order, every argument tuple over
// the variable indices [n]^arity in lexicographic order; then the equality
// bits x_i = x_j for i < j in lexicographic order.
struct TypeFingerprint {
  int arity{0};
  std::vector<std::size_t> sublanguage;
  std::vector<bool> bits;

  friend bool operator==(const TypeFingerprint&, const TypeFingerprint&) = default;
  friend bool operator<(const TypeFingerprint& a, const TypeFingerprint& b) {
    if (a.arity != b.arity) return a.arity < b.arity;
    if (a.sublanguage != b.sublanguage) return a.sublanguage < b.sublanguage;
    return a.bits < b.bits;
  }
  bool redundant() const {
    std::size_t eqs = static_cast<std::size_t>(arity) * (arity - 1) / 2;
    for (std::size_t i = bits.size() - eqs; i < bits.size(); ++i)
      if (bits[i]) return true;
    return false;
  }
  std::string to_string() const {
    std::string s;
    s.reserve(bits.size());
    for (bool b : bits) s.push_back(b ? '1' : '0');
    return s;
  }
};

inline std::size_t fingerprint_length(int n, const std::vector<std::size_t>& sub, const Signature& sig) {
  std::size_t len = static_cast<std::size_t>(n) * (n - 1) / 2;
  if (n == 0) len = 0;
  for (auto s : sub) len += ipow(static_cast<std::size_t>(n), sig[s].arity);
  return len;
}

// Enumerate [n]^r in lexicographic order.
template <class F>
void for_each_tuple(int n, int r, F&& f) {
  std::vector<int> t(r, 0);
  if (r > 0 && n == 0) return;
  for (;;) {
    f(static_cast<const std::vector<int>&>(t));
    int i = r - 1;
    while (i >= 0 && ++t[i] == n) t[i--] = 0;
    if (i < 0) return;
  }
}

// Fingerprint from an atomic-truth oracle over argument positions.
template <class Atom>
TypeFingerprint fingerprint_from(int n, const std::vector<std::size_t>& sub, const Signature& sig,
                                 const std::vector<int>& tuple, Atom&& atom) {
  TypeFingerprint fp;
  fp.arity = n;
  fp.sublanguage = sub;
  fp.bits.reserve(fingerprint_length(n, sub, sig));
  for (auto s : sub) {
    for_each_tuple(n, sig[s].arity, [&](const std::vector<int>& vars) {
      std::vector<int> args(vars.size());
      for (std::size_t i = 0; i < vars.size(); ++i) args[i] = tuple[vars[i]];
      fp.bits.push_back(atom(s, args));
    });
  }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) fp.bits.push_back(tuple[i] == tuple[j]);
  return fp;
}

inline std::vector<std::size_t> full_sublanguage(const Signature& sig) {
  std::vector<std::size_t> v(sig.size());
  std::iota(v.begin(), v.end(), 0);
  return v;
}

inline TypeFingerprint qf_fingerprint(const FiniteStructure& m, const std::vector<int>& a,
                                      const std::vector<std::size_t>& sub) {
  for (int x : a)
    if (x < 0 || static_cast<std::size_t>(x) >= m.domain_size()) throw std::out_of_range("tuple outside domain");
  return fingerprint_from(static_cast<int>(a.size()), sub, m.signature(), a,
                          [&](std::size_t s, const std::vector<int>& args) { return m.holds(s, args); });
}

inline TypeFingerprint qf_fingerprint(const FiniteStructure& m, const std::vector<int>& a) {
  return qf_fingerprint(m, a, full_sublanguage(m.signature()));
}

// Does sigma preserve every fact of m (in both directions)?
inline bool is_automorphism(const FiniteStructure& m, const Permutation& sigma) {
  bool ok = true;
  m.for_each_fact([&](std::size_t s, const std::vector<int>& t) {
    if (!ok) return;
    std::vector<int> img(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) img[i] = sigma(t[i]);
    if (!m.holds(s, img)) ok = false;
  });
  return ok;  // finite: injective image of the fact set into itself is onto
}

inline constexpr std::size_t kAutomorphismBound = 10;
inline constexpr std::size_t kBruteForceBound = 6;

// Pruned backtracking: extend a partial injection x -> image, checking every
// fact whose arguments are already assigned.
inline std::vector<Permutation> automorphisms(const FiniteStructure& m, std::size_t bound = kAutomorphismBound) {
  const std::size_t n = m.domain_size();
  if (n > bound) throw std::length_error("domain exceeds automorphism bound");
  const auto& sig = m.signature();
  std::vector<int> img(n, -1);
  std::vector<bool> used(n, false);
  std::vector<Permutation> out;

  // Facts involving only elements < k must be preserved once 0..k-1 are mapped.
  auto consistent = [&](std::size_t k) {
    int newest = static_cast<int>(k) - 1;
    for (std::size_t s = 0; s < sig.size(); ++s) {
      int r = sig[s].arity;
      if (r == 0) continue;
      bool bad = false;
      for_each_tuple(static_cast<int>(k), r, [&](const std::vector<int>& t) {
        if (bad) return;
        if (std::find(t.begin(), t.end(), newest) == t.end()) return;
        std::vector<int> u(r);
        for (int i = 0; i < r; ++i) u[i] = img[t[i]];
        if (m.holds(s, t) != m.holds(s, u)) bad = true;
      });
      if (bad) return false;
    }
    return true;
  };

  std::function<void(std::size_t)> rec = [&](std::size_t k) {
    if (k == n) {
      out.emplace_back(img);
      return;
    }
    for (std::size_t v = 0; v < n; ++v) {
      if (used[v]) continue;
      img[k] = static_cast<int>(v);
      used[v] = true;
      if (consistent(k + 1)) rec(k + 1);
      used[v] = false;
    }
    img[k] = -1;
  };
  rec(0);
  return out;
}

inline bool group_dcl_trivial(const FiniteStructure& m, const std::vector<int>& a, int b,
                              std::size_t bound = kAutomorphismBound) {
  if (std::find(a.begin(), a.end(), b) != a.end()) throw std::invalid_argument("b must lie outside A");
  for (int x : a)
    if (x < 0 || static_cast<std::size_t>(x) >= m.domain_size()) throw std::out_of_range("A outside domain");
  if (b < 0 || static_cast<std::size_t>(b) >= m.domain_size()) throw std::out_of_range("b outside domain");
  for (const auto& s : automorphisms(m, bound)) {
    bool fixes = std::all_of(a.begin(), a.end(), [&](int x) { return s(x) == x; });
    if (fixes && s(b) != b) return true;
  }
  return false;
}

// Reduct to the named symbols (in the order given).
inline FiniteStructure reduct(const FiniteStructure& m, const std::vector<std::string>& names) {
  Signature sig;
  std::vector<std::size_t> src;
  for (auto& n : names) {
    auto i = m.signature().at(n);
    sig.add(m.signature()[i]);
    src.push_back(i);
  }
  FiniteStructure out(m.domain_size(), sig);
  for (std::size_t j = 0; j < src.size(); ++j)
    for_each_tuple(static_cast<int>(m.domain_size()), sig[j].arity, [&](const std::vector<int>& t) {
      if (m.holds(src[j], t)) out.set(j, t);
    });
  return out;
}

}  // namespace ergo
