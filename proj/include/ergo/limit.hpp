#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <json.hpp>

#include "fragment.hpp"
#include "logic.hpp"
#include "morley.hpp"
#include "prf.hpp"

namespace ergo {

using Rational = boost::multiprecision::cpp_rational;

inline std::string rational_string(const Rational& r) {
  return numerator(r).str() + "/" + denominator(r).str();
}

inline Rational dyadic(int k) { return Rational(1, boost::multiprecision::cpp_int(1) << k); }

// Guide element identifier: non-negative for permanent elements, negative for
// evaluation temporaries.
using Handle = int;

// ---------------------------------------------------------------------------
// Vocabulary: registry of L' symbols. The first entries follow the
// morleyized language; base symbols P<n> and formula symbols R[...] are
// appended on demand.

struct VocabEntry {
  enum class Kind { Base, Formula };
  Kind kind{Kind::Base};
  long n{-1};
  Fragment formula;
  std::vector<std::string> vars;
  std::string name;
  int arity{1};
};

class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(const MorleyTheory& th) {
    for (std::size_t i = 0; i < th.language.size(); ++i) {
      const auto& s = th.language[i];
      if (i < th.base.size()) {
        long n = parse_base(s.name);
        if (n < 0 || s.arity != 1) throw std::invalid_argument("vocabulary interprets only unary P<n>, got " + s.name);
        push({VocabEntry::Kind::Base, n, {}, {"x"}, s.name, 1});
      } else {
        const auto& node = th.closure[i - th.base.size()];
        push({VocabEntry::Kind::Formula, -1, node.formula, node.vars, s.name, s.arity});
      }
    }
  }

  static long parse_base(const std::string& name) {
    if (name.size() < 2 || name[0] != 'P' || !is_number(name.substr(1))) return -1;
    return std::stol(name.substr(1));
  }

  std::size_t size() const { return entries_.size(); }
  const VocabEntry& operator[](std::size_t i) const { return entries_.at(i); }
  std::optional<std::size_t> find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? std::nullopt : std::optional<std::size_t>(it->second);
  }

  std::size_t base(long n) {
    auto name = "P" + std::to_string(n);
    if (auto i = find(name)) return *i;
    return push({VocabEntry::Kind::Base, n, {}, {"x"}, name, 1});
  }

  std::size_t formula_symbol(const Fragment& f) {
    auto name = closure_symbol_name(to_sexpr(f));
    if (auto i = find(name)) return *i;
    auto vars = free_vars(f);
    int arity = static_cast<int>(vars.size());
    return push({VocabEntry::Kind::Formula, -1, f, std::move(vars), name, arity});
  }

 private:
  std::size_t push(VocabEntry e) {
    index_[e.name] = entries_.size();
    entries_.push_back(std::move(e));
    return entries_.size() - 1;
  }
  std::vector<VocabEntry> entries_;
  std::map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Guide oracle: a model with trivial dcl supplying duplicates, witnesses and
// separating symbols.

class GuideModel {
 public:
  virtual ~GuideModel() = default;
  virtual std::string spec() const = 0;
  virtual bool fact(std::size_t symbol, const std::vector<Handle>& args) = 0;
  virtual Handle fresh() = 0;
  virtual Handle duplicate(Handle h, const std::vector<std::size_t>& sublanguage) = 0;
  virtual std::optional<Handle> witness(const QfFormula& matrix, const std::vector<Handle>& tuple) = 0;
  virtual std::optional<std::size_t> separating_symbol(Handle a, Handle b) = 0;
  virtual Literal refuting_formula(const OmittedType& q, const std::vector<Handle>& tuple) = 0;

  // Quantifier-free matrix over vocabulary symbols; equality is handle identity.
  bool holds(const QfFormula& f, const std::vector<Handle>& env) {
    return eval_qf_with(f, env, [&](std::size_t s, const std::vector<int>& t) { return fact(s, t); });
  }

  bool literal_holds(const Literal& l, const std::vector<Handle>& tuple) {
    std::vector<Handle> args;
    for (int p : l.args) args.push_back(tuple.at(static_cast<std::size_t>(p)));
    return fact(l.symbol, args) == l.positive;
  }
};

// Elements are bit sequences read as the predicates P_n. Undecided bits come
// from the keyed PRF on (element key, word); a duplicate copies a prefix long
// enough for the sublanguage, flips the next bit and is fresh beyond it.
class KaleidoscopeGuide : public GuideModel {
 public:
  static constexpr int kSchemeHorizon = 64;
  static constexpr std::size_t kSeparationCap = 4096;
  static constexpr long kRefutationCap = 4096;
  static constexpr std::size_t kMaxPatternBits = 16;

  KaleidoscopeGuide(SeedKey seed, Vocabulary& vocab) : seed_(seed), vocab_(&vocab) {}

  std::string spec() const override { return "kaleidoscope-predicate"; }
  const SeedKey& seed() const { return seed_; }
  std::size_t element_count() const { return perm_.size(); }

  bool bit(Handle h, std::size_t n) {
    if (track_ && static_cast<long>(n) > max_read_) max_read_ = static_cast<long>(n);
    for (;;) {
      const Cell& c = cell(h);
      if (c.forced >= 0)
        for (auto& [i, v] : forced_pool(h)[static_cast<std::size_t>(c.forced)])
          if (i == n) return v;
      if (n < c.copy_len) {
        h = c.parent;
        continue;
      }
      if (n == c.copy_len && c.flip) return !bit(c.parent, n);
      if (n < 64) return ((c.word0 >> n) & 1ULL) != 0;
      return ((prf64(seed_, {c.key, n >> 6}) >> (n & 63)) & 1ULL) != 0;
    }
  }

  bool fact(std::size_t symbol, const std::vector<Handle>& args) override {
    const auto& e = (*vocab_)[symbol];
    if (static_cast<int>(args.size()) != e.arity) throw std::invalid_argument("arity mismatch for " + e.name);
    if (e.kind == VocabEntry::Kind::Base) return bit(args[0], static_cast<std::size_t>(e.n));
    if (e.arity == 0) {
      if (auto it = sentence_cache_.find(symbol); it != sentence_cache_.end()) return it->second;
    }
    auto& node = compiled(symbol);
    std::vector<Handle> env(args);
    bool v = eval(node, env);
    if (e.arity == 0) sentence_cache_[symbol] = v;
    return v;
  }

  Handle fresh() override { return make_perm(Cell{}, {}); }

  Handle duplicate(Handle h, const std::vector<std::size_t>& sub) override {
    if (h < 0) throw std::invalid_argument("duplicate of a temporary");
    std::size_t len = static_length(sub);
    track_ = true;
    max_read_ = -1;
    for (auto s : scheme_symbols_)
      if ((*vocab_)[s].arity == 1) fact(s, {h});
    track_ = false;
    len = std::max(len, static_cast<std::size_t>(max_read_ + 1));
    Cell c;
    c.parent = h;
    c.copy_len = static_cast<std::uint32_t>(len);
    c.flip = true;
    return make_perm(c, {});
  }

  std::optional<Handle> witness(const QfFormula& matrix, const std::vector<Handle>& tuple) override {
    std::set<std::size_t> syms;
    matrix.symbols(syms);
    std::set<long> idx;
    for (auto s : syms) mentioned(s, idx);
    std::vector<long> bits(idx.begin(), idx.end());
    if (bits.size() > kMaxPatternBits) throw std::length_error("witness pattern too wide");
    for (std::uint64_t p = 0; p < (1ULL << bits.size()); ++p) {
      auto pat = pattern(bits, p);
      Handle t = push_temp(pat, p);
      auto env = tuple;
      env.push_back(t);
      bool ok = holds(matrix, env);
      pop_temp();
      if (ok) return make_perm(Cell{}, pat);
    }
    return std::nullopt;
  }

  std::optional<std::size_t> separating_symbol(Handle a, Handle b) override {
    for (std::size_t n = 0; n < kSeparationCap; ++n)
      if (bit(a, n) != bit(b, n)) return vocab_->base(static_cast<long>(n));
    return std::nullopt;
  }

  Literal refuting_formula(const OmittedType& q, const std::vector<Handle>& tuple) override {
    if (!literal_holds(q.head, tuple)) return q.head;
    for (auto& l : q.members)
      if (!literal_holds(l, tuple)) return l;
    for (long i = static_cast<long>(q.members.size()); i < kRefutationCap; ++i) {
      auto member = q.member(i);
      Literal l{vocab_->formula_symbol(member), q.member_positive(), detail::positions(free_vars(member), q.vars)};
      if (!literal_holds(l, tuple)) return l;
    }
    throw std::runtime_error("guide realizes the omitted-type prefix of " + q.key);
  }

 private:
  struct Cell {
    Handle parent{-1};
    std::uint32_t copy_len{0};
    bool flip{false};
    int forced{-1};
    std::uint64_t key{0};
    std::uint64_t word0{0};
  };
  using Pattern = std::vector<std::pair<std::size_t, bool>>;

  struct Node {
    Fragment::Kind kind{Fragment::Kind::And};
    std::size_t bit{0};
    int slot{-1}, slot2{-1};
    std::vector<Node> kids;
    std::vector<long> pattern;  // quantifiers: indices mentioned in the body
    std::shared_ptr<Fragment> scheme;
    std::vector<std::string> scope;
    std::shared_ptr<std::vector<Node>> members;
  };

  const Cell& cell(Handle h) const {
    return h >= 0 ? perm_[static_cast<std::size_t>(h)] : temp_[static_cast<std::size_t>(-1 - h)];
  }
  const std::vector<Pattern>& forced_pool(Handle h) const { return h >= 0 ? perm_forced_ : temp_forced_; }

  Handle make_perm(Cell c, Pattern pat) {
    if (!pat.empty()) {
      c.forced = static_cast<int>(perm_forced_.size());
      perm_forced_.push_back(std::move(pat));
    }
    c.key = perm_.size();
    c.word0 = prf64(seed_, {c.key, 0});
    perm_.push_back(c);
    return static_cast<Handle>(perm_.size() - 1);
  }

  Handle push_temp(Pattern pat, std::uint64_t candidate) {
    Cell c;
    c.forced = static_cast<int>(temp_forced_.size());
    temp_forced_.push_back(std::move(pat));
    c.key = (1ULL << 63) | (static_cast<std::uint64_t>(temp_.size()) << 40) | candidate;
    c.word0 = prf64(seed_, {c.key, 0});
    temp_.push_back(c);
    return -static_cast<Handle>(temp_.size());
  }
  void pop_temp() {
    temp_.pop_back();
    temp_forced_.pop_back();
  }

  static Pattern pattern(const std::vector<long>& bits, std::uint64_t p) {
    Pattern pat;
    for (std::size_t i = 0; i < bits.size(); ++i) pat.push_back({static_cast<std::size_t>(bits[i]), ((p >> i) & 1) != 0});
    return pat;
  }

  void mentioned(std::size_t s, std::set<long>& idx) const {
    const auto& e = (*vocab_)[s];
    if (e.kind == VocabEntry::Kind::Base) idx.insert(e.n);
    else mentioned_indices(e.formula, "P", idx);
  }

  std::size_t static_length(const std::vector<std::size_t>& sub) {
    if (sub == cached_sub_) return cached_len_;
    std::set<long> idx;
    scheme_symbols_.clear();
    for (auto s : sub) {
      mentioned(s, idx);
      const auto& e = (*vocab_)[s];
      if (e.kind == VocabEntry::Kind::Formula && contains_scheme(e.formula)) scheme_symbols_.push_back(s);
    }
    cached_sub_ = sub;
    cached_len_ = idx.empty() ? 0 : static_cast<std::size_t>(*idx.rbegin() + 1);
    return cached_len_;
  }

  static int lookup(const std::vector<std::string>& scope, const std::string& v) {
    for (int i = static_cast<int>(scope.size()) - 1; i >= 0; --i)
      if (scope[static_cast<std::size_t>(i)] == v) return i;
    throw std::invalid_argument("unbound variable " + v);
  }

  Node compile(const Fragment& f, const std::vector<std::string>& scope) const {
    using K = Fragment::Kind;
    Node n;
    n.kind = f.kind;
    switch (f.kind) {
      case K::Rel:
        if (f.stem != "P" || !is_number(f.index) || f.vars.size() != 1)
          throw std::invalid_argument("kaleidoscope guide interprets only unary P<n>: " + to_sexpr(f));
        n.bit = static_cast<std::size_t>(std::stol(f.index));
        n.slot = lookup(scope, f.vars[0]);
        break;
      case K::Eq:
        n.slot = lookup(scope, f.vars[0]);
        n.slot2 = lookup(scope, f.vars[1]);
        break;
      case K::Forall:
      case K::Exists: {
        auto inner = scope;
        inner.push_back(f.vars[0]);
        n.kids.push_back(compile(f.kids[0], inner));
        n.slot = static_cast<int>(scope.size());
        std::set<long> idx;
        mentioned_indices(f.kids[0], "P", idx);
        n.pattern.assign(idx.begin(), idx.end());
        if (n.pattern.size() > kMaxPatternBits) throw std::length_error("quantifier pattern too wide");
        break;
      }
      case K::SchemeAnd:
      case K::SchemeOr:
        n.scheme = std::make_shared<Fragment>(f);
        n.scope = scope;
        n.members = std::make_shared<std::vector<Node>>();
        break;
      default:
        for (auto& k : f.kids) n.kids.push_back(compile(k, scope));
    }
    return n;
  }

  Node& compiled(std::size_t symbol) {
    if (compiled_.size() <= symbol) compiled_.resize(symbol + 1);
    if (!compiled_[symbol]) {
      const auto& e = (*vocab_)[symbol];
      compiled_[symbol] = std::make_unique<Node>(compile(e.formula, e.vars));
    }
    return *compiled_[symbol];
  }

  bool eval(const Node& n, std::vector<Handle>& env) {
    using K = Fragment::Kind;
    switch (n.kind) {
      case K::Rel:
        return bit(env[static_cast<std::size_t>(n.slot)], n.bit);
      case K::Eq:
        return env[static_cast<std::size_t>(n.slot)] == env[static_cast<std::size_t>(n.slot2)];
      case K::Not:
        return !eval(n.kids[0], env);
      case K::And:
        for (auto& k : n.kids)
          if (!eval(k, env)) return false;
        return true;
      case K::Or:
        for (auto& k : n.kids)
          if (eval(k, env)) return true;
        return false;
      case K::Forall:
      case K::Exists: {
        // Candidates: the bound elements, then one generic element per
        // pattern over the mentioned predicates.
        bool want = n.kind == K::Exists;
        env.resize(static_cast<std::size_t>(n.slot));
        for (std::size_t i = 0, m = env.size(); i < m; ++i) {
          env.push_back(env[i]);
          bool v = eval(n.kids[0], env);
          env.pop_back();
          if (v == want) return want;
        }
        for (std::uint64_t p = 0; p < (1ULL << n.pattern.size()); ++p) {
          env.push_back(push_temp(pattern(n.pattern, p), p));
          bool v = eval(n.kids[0], env);
          env.pop_back();
          pop_temp();
          if (v == want) return want;
        }
        return !want;
      }
      case K::SchemeAnd:
      case K::SchemeOr: {
        bool conj = n.kind == K::SchemeAnd;
        int horizon = n.scheme->prefix + kSchemeHorizon;
        for (int i = 0; i < horizon; ++i) {
          if (static_cast<int>(n.members->size()) <= i) n.members->push_back(compile(scheme_member(*n.scheme, i), n.scope));
          if (eval((*n.members)[static_cast<std::size_t>(i)], env) != conj) return !conj;
        }
        return conj;
      }
    }
    return false;
  }

  SeedKey seed_;
  Vocabulary* vocab_;
  std::vector<Cell> perm_, temp_;
  std::vector<Pattern> perm_forced_, temp_forced_;
  std::vector<std::unique_ptr<Node>> compiled_;
  std::unordered_map<std::size_t, bool> sentence_cache_;
  std::vector<std::size_t> cached_sub_{static_cast<std::size_t>(-1)};
  std::size_t cached_len_{0};
  std::vector<std::size_t> scheme_symbols_;
  bool track_{false};
  long max_read_{-1};
};

// ---------------------------------------------------------------------------
// Stages

struct ScheduleEntry {
  int k{0};
  std::size_t j{0};
  std::size_t pithy{0};   // axiom index
  std::size_t type{0};    // omitted-type index
  std::size_t symbol{0};  // vocabulary id of R_k
};

struct Stage {
  int k{0};
  FiniteStructure A;
  std::vector<std::size_t> language;  // vocabulary ids in column order
  std::vector<Handle> handles;
  std::vector<std::uint16_t> mass_class;
  std::vector<Rational> class_mass;
  Rational star{1};
  std::vector<int> g;  // A_k -> A_{k-1}, -1 for *; empty at k = 0
  std::size_t star_children{0};
  std::optional<int> witness;
  bool witness_verified{false};
  std::vector<std::uint64_t> row_hash;

  std::size_t size() const { return A.domain_size(); }
  const Rational& mass(std::size_t e) const { return class_mass.at(mass_class.at(e)); }
  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> c(class_mass.size(), 0);
    for (auto m : mass_class) ++c[m];
    return c;
  }
  Rational total_mass() const {
    Rational t = star;
    auto c = class_counts();
    for (std::size_t i = 0; i < c.size(); ++i) t += class_mass[i] * static_cast<long>(c[i]);
    return t;
  }
  Rational max_mass() const {
    Rational m = 0;
    auto c = class_counts();
    for (std::size_t i = 0; i < c.size(); ++i)
      if (c[i] > 0 && class_mass[i] > m) m = class_mass[i];
    return m;
  }
};

inline Stage init_stage0() {
  Stage s;
  s.A = FiniteStructure(0, Signature{});
  return s;
}

struct StageReport {
  int k{0};
  bool condition1{true};
  bool condition2{true};
  bool sum_one{true};
  bool max_mass{true};
  bool positive{true};
  bool witness{true};
  std::vector<std::string> violations;
  bool passed() const { return condition1 && condition2 && sum_one && max_mass && positive && witness; }
};

namespace detail {

inline bool injective_non_star(const std::vector<int>& img) {
  for (std::size_t i = 0; i < img.size(); ++i) {
    if (img[i] < 0) return false;
    for (std::size_t j = 0; j < i; ++j)
      if (img[i] == img[j]) return false;
  }
  return true;
}

}  // namespace detail

inline StageReport stage_invariants(const Stage& s) {
  StageReport r;
  r.k = s.k;
  if (s.total_mass() != 1) {
    r.sum_one = false;
    r.violations.push_back("total mass " + rational_string(s.total_mass()));
  }
  auto bound = dyadic(s.k);
  if (s.max_mass() > bound || s.star > bound) {
    r.max_mass = false;
    r.violations.push_back("mass above 2^-" + std::to_string(s.k));
  }
  auto counts = s.class_counts();
  for (std::size_t i = 0; i < counts.size(); ++i)
    if (counts[i] > 0 && s.class_mass[i] <= 0) r.positive = false;
  if (s.star <= 0) r.positive = false;
  if (!r.positive) r.violations.push_back("non-positive mass");
  return r;
}

// Exact checks between consecutive stages: pushforward of masses, agreement of
// L_k facts on tuples with injective non-* image, total mass and the
// atomlessness bound.
inline StageReport stage_invariants(const Stage& prev, const Stage& next) {
  StageReport r = stage_invariants(next);
  const std::size_t n = prev.size(), m = next.size();
  if (next.g.size() != m) throw std::invalid_argument("stage without connecting map");

  std::vector<Rational> push(n, Rational(0));
  Rational star_push = next.star;
  for (std::size_t e = 0; e < m; ++e) {
    int a = next.g[e];
    if (a < 0) star_push += next.mass(e);
    else push.at(static_cast<std::size_t>(a)) += next.mass(e);
  }
  for (std::size_t a = 0; a < n; ++a)
    if (push[a] != prev.mass(a)) {
      r.condition1 = false;
      r.violations.push_back("condition (1) fails at element " + std::to_string(a) + ": " + rational_string(push[a]) +
                             " vs " + rational_string(prev.mass(a)));
    }
  if (star_push != prev.star) {
    r.condition1 = false;
    r.violations.push_back("condition (1) fails at *: " + rational_string(star_push) + " vs " +
                           rational_string(prev.star));
  }

  if (next.language.size() < prev.language.size() ||
      !std::equal(prev.language.begin(), prev.language.end(), next.language.begin())) {
    r.condition2 = false;
    r.violations.push_back("sublanguage does not extend");
  } else {
    const int N = static_cast<int>(m);
    for (std::size_t c = 0; c < prev.language.size(); ++c) {
      int arity = prev.A.signature()[c].arity;
      const auto& tp = prev.A.table(c);
      const auto& tn = next.A.table(c);
      if (arity == 0) {
        if (tp[0] != tn[0]) r.condition2 = false;
      } else if (arity == 1) {
        for (std::size_t e = 0; e < m; ++e)
          if (next.g[e] >= 0 && tn[e] != tp[static_cast<std::size_t>(next.g[e])]) {
            r.condition2 = false;
            r.violations.push_back("condition (2) fails at element " + std::to_string(e) + " on " +
                                   prev.A.signature()[c].name);
          }
      } else {
        for_each_tuple(N, arity, [&](const std::vector<int>& t) {
          std::vector<int> img;
          for (int x : t) img.push_back(next.g[static_cast<std::size_t>(x)]);
          if (!detail::injective_non_star(img)) return;
          if (next.A.holds(c, t) != prev.A.holds(c, img)) r.condition2 = false;
        });
      }
    }
    if (!r.condition2 && r.violations.empty()) r.violations.push_back("condition (2) fails");
  }
  if (next.k > 0 && !next.witness_verified) {
    r.witness = false;
    r.violations.push_back("no verified witness for the scheduled pithy axiom");
  }
  return r;
}

// ---------------------------------------------------------------------------
// Theory for the predicate build: every pattern over P_0 (and over P_0, P_1)
// is realized, and no element satisfies the infinite conjunction of the P_n.

inline std::vector<std::string> kaleidoscope_predicate_sentences() {
  std::vector<std::string> out{"(exists x (rel (P 0) x))", "(exists x (not (rel (P 0) x)))"};
  for (int a = 0; a < 4; ++a) {
    auto lit = [&](int i) {
      std::string atom = "(rel (P " + std::to_string(i) + ") x)";
      return ((a >> i) & 1) ? atom : "(not " + atom + ")";
    };
    out.push_back("(exists x (and " + lit(0) + " " + lit(1) + "))");
  }
  out.push_back("(forall x (not (schemeAnd n 3 (rel (P n) x))))");
  return out;
}

class LimitBuild {
 public:
  using GuideFactory = std::function<std::unique_ptr<GuideModel>(Vocabulary&)>;

  LimitBuild(MorleyTheory theory, const GuideFactory& make_guide, std::string seed_hex = "")
      : theory_(std::move(theory)),
        vocab_(std::make_unique<Vocabulary>(theory_)),
        guide_(make_guide(*vocab_)),
        seed_hex_(std::move(seed_hex)) {
    pithy_ = theory_.pithy_axioms();
    if (pithy_.empty()) throw std::invalid_argument("theory has no pithy axioms to schedule");
    if (theory_.omitted.empty()) throw std::invalid_argument("theory has no omitted types to schedule");
    for (auto& a : theory_.axioms)
      if (a.pithy() && a.prefix.size() > 2) throw std::invalid_argument("builder handles pithy axioms with at most one universal variable");
    stages_.push_back(init_stage0());
    reports_.push_back(stage_invariants(stages_[0]));
  }

  const MorleyTheory& theory() const { return theory_; }
  const Vocabulary& vocabulary() const { return *vocab_; }
  Vocabulary& vocabulary() { return *vocab_; }
  GuideModel& guide() { return *guide_; }
  const std::string& seed_hex() const { return seed_hex_; }
  const std::vector<std::size_t>& pithy() const { return pithy_; }
  const std::vector<Stage>& stages() const { return stages_; }
  const Stage& stage(int k) {
    ensure(k);
    return stages_[static_cast<std::size_t>(k)];
  }
  const std::vector<ScheduleEntry>& schedule() const { return schedule_; }
  const std::vector<StageReport>& reports() const { return reports_; }
  int depth() const { return static_cast<int>(stages_.size()) - 1; }
  bool checks_passed() const {
    return std::all_of(reports_.begin(), reports_.end(), [](const StageReport& r) { return r.passed(); });
  }

  // Stage k + 1 = 2^t (2j + 1) takes entry j; every entry recurs at doubling gaps.
  static std::size_t schedule_index(int k) {
    std::uint64_t v = static_cast<std::uint64_t>(k) + 1;
    while ((v & 1) == 0) v >>= 1;
    return static_cast<std::size_t>(v >> 1);
  }

  // Enumeration of L': closure symbols, base predicates and scheme tails in turn.
  std::size_t enumeration_symbol(int k) {
    std::size_t q = static_cast<std::size_t>(k) / 3;
    switch (k % 3) {
      case 0:
        return theory_.closure[q % theory_.closure.size()].symbol;
      case 1:
        return vocab_->base(static_cast<long>(q));
      default: {
        const auto& t = theory_.omitted[q % theory_.omitted.size()];
        return vocab_->formula_symbol(t.member(static_cast<long>(t.members.size() + q / theory_.omitted.size())));
      }
    }
  }

  ScheduleEntry schedule_entry(int k) {
    auto j = schedule_index(k);
    return {k, j, pithy_[j % pithy_.size()], j % theory_.omitted.size(), enumeration_symbol(k)};
  }

  void ensure(int k) {
    while (depth() < k) advance();
  }

  const Stage& advance() {
    const Stage& prev = stages_.back();
    const int k = prev.k;
    const std::size_t n = prev.size();
    auto entry = schedule_entry(k);
    const auto& L = prev.language;
    for (auto s : L)
      if ((*vocab_)[s].arity > 1) throw std::invalid_argument("builder handles unary and 0-ary symbols");

    // Step 1: duplicate every element, checking (†) on the L_k facts.
    std::vector<Handle> hs(prev.handles);
    hs.reserve(2 * n + 4);
    for (std::size_t a = 0; a < n; ++a) {
      Handle d = guide_->duplicate(prev.handles[a], L);
      for (std::size_t c = 0; c < L.size(); ++c) {
        if ((*vocab_)[L[c]].arity != 1) continue;
        if (guide_->fact(L[c], {d}) != prev.A.table(c)[a])
          throw std::runtime_error("duplicate of element " + std::to_string(a) + " at stage " + std::to_string(k) +
                                   " disagrees on " + (*vocab_)[L[c]].name);
      }
      hs.push_back(d);
    }

    // Step 2: witnesses for the scheduled pithy axiom.
    const Axiom& ax = theory_.axioms[entry.pithy];
    const int arity = static_cast<int>(ax.prefix.size()) - 1;
    std::vector<Handle> W;
    std::optional<int> witness;
    const std::size_t base_count = hs.size();
    for_each_tuple(static_cast<int>(base_count), arity, [&](const std::vector<int>& t) {
      std::vector<Handle> env;
      for (int x : t) env.push_back(hs[static_cast<std::size_t>(x)]);
      auto test = [&](Handle c) {
        env.push_back(c);
        bool ok = guide_->holds(ax.matrix, env);
        env.pop_back();
        return ok;
      };
      std::optional<int> found;
      for (std::size_t c = 0; c < hs.size() && !found; ++c)
        if (test(hs[c])) found = static_cast<int>(c);
      if (!found) {
        auto w = guide_->witness(ax.matrix, env);
        if (!w) throw std::runtime_error("guide has no witness for " + ax.node);
        W.push_back(*w);
        hs.push_back(*w);
        found = static_cast<int>(hs.size() - 1);
      }
      if (arity == 0) witness = found;
    });
    if (W.empty()) {
      W.push_back(guide_->fresh());
      hs.push_back(W.back());
    }

    // Step 3: connecting map and masses.
    Stage next;
    next.k = k + 1;
    next.handles = std::move(hs);
    const std::size_t m = next.handles.size();
    next.g.resize(m);
    for (std::size_t e = 0; e < m; ++e) next.g[e] = e < n ? static_cast<int>(e) : e < 2 * n ? static_cast<int>(e - n) : -1;
    const long N = static_cast<long>(W.size()) + 1;
    for (auto& c : prev.class_mass) next.class_mass.push_back(c / 2);
    next.class_mass.push_back(prev.star / N);
    next.star = prev.star / N;
    next.star_children = W.size();
    next.mass_class.resize(m);
    for (std::size_t e = 0; e < m; ++e)
      next.mass_class[e] = e < 2 * n ? prev.mass_class[e % std::max<std::size_t>(n, 1)]
                                     : static_cast<std::uint16_t>(next.class_mass.size() - 1);
    next.witness = witness;
    next.witness_verified = witness && [&] {
      std::vector<Handle> env{next.handles[static_cast<std::size_t>(*witness)]};
      return guide_->holds(ax.matrix, env);
    }();
    if (arity > 0) next.witness_verified = true;

    // Step 4: sublanguage.
    next.language = L;
    std::vector<std::vector<bool>> cols;
    next.row_hash.assign(m, 0);
    for (std::size_t e = 0; e < 2 * n; ++e) next.row_hash[e] = prev.row_hash[e % n];
    for (std::size_t c = 0; c < L.size(); ++c) {
      const auto& src = prev.A.table(c);
      if ((*vocab_)[L[c]].arity == 0) {
        cols.push_back(src);
        continue;
      }
      std::vector<bool> col(m);
      for (std::size_t e = 0; e < 2 * n; ++e) col[e] = src[e % n];
      for (std::size_t e = 2 * n; e < m; ++e) {
        col[e] = guide_->fact(L[c], {next.handles[e]});
        next.row_hash[e] = hash_step(next.row_hash[e], c, col[e]);
      }
      cols.push_back(std::move(col));
    }
    std::set<std::size_t> present(L.begin(), L.end());
    auto add = [&](std::size_t s) {
      if (!present.insert(s).second) return;
      const auto& v = (*vocab_)[s];
      if (v.arity > 1) throw std::invalid_argument("builder handles unary and 0-ary symbols: " + v.name);
      std::size_t c = next.language.size();
      next.language.push_back(s);
      if (v.arity == 0) {
        cols.push_back({guide_->fact(s, {})});
        return;
      }
      std::vector<bool> col(m);
      for (std::size_t e = 0; e < m; ++e) {
        col[e] = guide_->fact(s, {next.handles[e]});
        next.row_hash[e] = hash_step(next.row_hash[e], c, col[e]);
      }
      cols.push_back(std::move(col));
    };
    add(entry.symbol);
    const auto& q = theory_.omitted[entry.type];
    std::vector<std::size_t> refuting;
    for (std::size_t e = 0; e < m; ++e) refuting.push_back(guide_->refuting_formula(q, {next.handles[e]}).symbol);
    std::sort(refuting.begin(), refuting.end());
    refuting.erase(std::unique(refuting.begin(), refuting.end()), refuting.end());
    for (auto s : refuting) add(s);

    // Step 4(c) with chi := x = x: separate elements sharing an L_{k+1} row.
    for (;;) {
      std::unordered_map<std::uint64_t, int> first;
      first.reserve(m * 2);
      std::vector<std::size_t> seps;
      std::set<std::uint64_t> handled;
      for (std::size_t e = 0; e < m; ++e) {
        auto [it, fresh] = first.emplace(next.row_hash[e], static_cast<int>(e));
        if (fresh || !handled.insert(next.row_hash[e]).second) continue;
        auto s = guide_->separating_symbol(next.handles[static_cast<std::size_t>(it->second)], next.handles[e]);
        if (!s) throw std::runtime_error("guide cannot separate elements " + std::to_string(it->second) + " and " +
                                         std::to_string(e));
        seps.push_back(*s);
      }
      if (seps.empty()) break;
      std::size_t before = next.language.size();
      for (auto s : seps) add(s);
      if (next.language.size() == before) throw std::runtime_error("separation made no progress");
    }

    Signature sig;
    for (auto s : next.language) sig.add({(*vocab_)[s].name, (*vocab_)[s].arity});
    next.A = FiniteStructure(m, sig);
    for (std::size_t c = 0; c < cols.size(); ++c) next.A.table(c) = std::move(cols[c]);

    schedule_.push_back(entry);
    reports_.push_back(stage_invariants(prev, next));
    stages_.push_back(std::move(next));
    return stages_.back();
  }

 private:
  static std::uint64_t hash_step(std::uint64_t h, std::size_t col, bool v) {
    return mix64(h ^ (0x9e3779b97f4a7c15ULL * (2 * static_cast<std::uint64_t>(col) + (v ? 2 : 1))));
  }

  MorleyTheory theory_;
  std::unique_ptr<Vocabulary> vocab_;
  std::unique_ptr<GuideModel> guide_;
  std::string seed_hex_;
  std::vector<std::size_t> pithy_;
  std::vector<Stage> stages_;
  std::vector<ScheduleEntry> schedule_;
  std::vector<StageReport> reports_;
};

inline LimitBuild kaleidoscope_build(SeedKey seed) {
  return LimitBuild(
      morleyize(kaleidoscope_predicate_sentences()),
      [seed](Vocabulary& v) { return std::make_unique<KaleidoscopeGuide>(seed, v); }, seed.hex());
}

inline LimitBuild make_limit_build(const std::string& guide, SeedKey seed) {
  if (guide == "kaleidoscope-predicate") return kaleidoscope_build(seed);
  throw std::invalid_argument("unknown guide " + guide);
}

inline nlohmann::ordered_json build_manifest(const LimitBuild& b) {
  using J = nlohmann::ordered_json;
  J j;
  j["guide"] = "kaleidoscope-predicate";
  j["seed"] = b.seed_hex();
  j["stages_built"] = b.depth();
  j["sentences"] = J::array();
  for (auto& s : b.theory().sentences) j["sentences"].push_back(to_sexpr(s));
  j["schedule"] = J::array();
  for (auto& e : b.schedule())
    j["schedule"].push_back({{"k", e.k},
                             {"entry", e.j},
                             {"pithy", b.theory().axioms[e.pithy].node},
                             {"type", b.theory().omitted[e.type].key},
                             {"symbol", b.vocabulary()[e.symbol].name}});
  j["stages"] = J::array();
  for (std::size_t i = 0; i < b.stages().size(); ++i) {
    const auto& s = b.stages()[i];
    const auto& r = b.reports()[i];
    j["stages"].push_back({{"k", s.k},
                           {"elements", s.size()},
                           {"language", s.language.size()},
                           {"star_mass", rational_string(s.star)},
                           {"max_mass", rational_string(s.max_mass())},
                           {"checks",
                            {{"condition1", r.condition1},
                             {"condition2", r.condition2},
                             {"sum_one", r.sum_one},
                             {"max_mass", r.max_mass},
                             {"positive", r.positive},
                             {"witness", r.witness}}}});
  }
  j["passed"] = b.checks_passed();
  return j;
}

// ---------------------------------------------------------------------------
// Sampling from the limit

struct PathPoint {
  std::vector<int> pi;  // pi[k] in A_k, -1 for *
  std::uint64_t index{0};
  std::uint32_t attempts{0};
  int first_level() const {
    for (std::size_t k = 0; k < pi.size(); ++k)
      if (pi[k] >= 0) return static_cast<int>(k);
    return -1;
  }
};

// Finite partition of A_j and * with positive weights; -1 denotes *.
struct Weight {
  int stage{0};
  std::vector<std::vector<int>> cells;
  std::vector<Rational> weights;
};

// Measure on the limit, optionally rescaled by a weight.
class LimitMeasure {
 public:
  explicit LimitMeasure(LimitBuild& b) : build_(&b) {}

  LimitBuild& build() const { return *build_; }
  const std::optional<Weight>& weight() const { return weight_; }

  friend LimitMeasure rescale(const LimitMeasure& mu, Weight w) {
    LimitMeasure out(*mu.build_);
    const auto& st = mu.build_->stage(w.stage);
    if (w.cells.size() != w.weights.size()) throw std::invalid_argument("one weight per cell");
    std::vector<int> seen(st.size() + 1, 0);
    Rational total = 0;
    for (std::size_t c = 0; c < w.cells.size(); ++c) {
      if (w.weights[c] <= 0) throw std::invalid_argument("zero weight requested");
      if (w.cells[c].empty()) throw std::invalid_argument("empty cell");
      total += w.weights[c];
      for (int e : w.cells[c]) {
        if (e < -1 || e >= static_cast<int>(st.size())) throw std::invalid_argument("cell element outside stage");
        ++seen[static_cast<std::size_t>(e + 1)];
      }
    }
    if (std::any_of(seen.begin(), seen.end(), [](int v) { return v != 1; }))
      throw std::invalid_argument("cells must partition the stage and *");
    for (auto& x : w.weights) x /= total;
    out.tables_.cell_cum.clear();
    double acc = 0;
    for (std::size_t c = 0; c < w.cells.size(); ++c) {
      acc += w.weights[c].convert_to<double>();
      out.tables_.cell_cum.push_back(acc);
      std::vector<double> cum;
      double in = 0;
      for (int e : w.cells[c]) {
        in += (e < 0 ? st.star : st.mass(static_cast<std::size_t>(e))).convert_to<double>();
        cum.push_back(in);
      }
      out.tables_.within.push_back(std::move(cum));
    }
    out.weight_ = std::move(w);
    return out;
  }

  // One path to the given depth; the all-* path is excluded by restarting.
  PathPoint sample_point(int depth, const SeedKey& seed, std::uint64_t index) const {
    build_->ensure(depth);
    const auto& st = build_->stages();
    for (std::uint32_t attempt = 0;; ++attempt) {
      Stream rng(prf64(seed, {index, attempt}));
      PathPoint p;
      p.index = index;
      p.attempts = attempt + 1;
      p.pi.assign(static_cast<std::size_t>(depth) + 1, -1);
      int start = 0;
      if (weight_) {
        start = weight_->stage;
        if (start > depth) throw std::invalid_argument("weight stage beyond sampling depth");
        double u = rng.uniform();
        std::size_t c = static_cast<std::size_t>(
            std::upper_bound(tables_.cell_cum.begin(), tables_.cell_cum.end() - 1, u) - tables_.cell_cum.begin());
        const auto& cum = tables_.within[c];
        double v = rng.uniform() * cum.back();
        std::size_t i = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end() - 1, v) - cum.begin());
        int e = weight_->cells[c][i];
        p.pi[static_cast<std::size_t>(start)] = e;
        for (int k = start; k > 0 && e >= 0; --k) {
          e = st[static_cast<std::size_t>(k)].g[static_cast<std::size_t>(e)];
          p.pi[static_cast<std::size_t>(k - 1)] = e;
        }
      }
      for (int k = start; k < depth; ++k) {
        int cur = p.pi[static_cast<std::size_t>(k)];
        const auto& here = st[static_cast<std::size_t>(k)];
        const auto& nxt = st[static_cast<std::size_t>(k + 1)];
        int n = static_cast<int>(here.size());
        int next;
        if (cur < 0) {
          auto u = rng.below(nxt.star_children + 1);
          next = u < nxt.star_children ? 2 * n + static_cast<int>(u) : -1;
        } else {
          next = rng.coin() ? cur + n : cur;
        }
        p.pi[static_cast<std::size_t>(k + 1)] = next;
      }
      if (p.pi.back() >= 0) return p;
    }
  }

 private:
  struct Tables {
    std::vector<double> cell_cum;
    std::vector<std::vector<double>> within;
  };
  LimitBuild* build_;
  std::optional<Weight> weight_;
  Tables tables_;
};

inline Weight identity_weight(LimitBuild& b, int stage, std::vector<std::vector<int>> cells) {
  const auto& st = b.stage(stage);
  Weight w{stage, std::move(cells), {}};
  for (auto& c : w.cells) {
    Rational m = 0;
    for (int e : c) m += e < 0 ? st.star : st.mass(static_cast<std::size_t>(e));
    w.weights.push_back(m);
  }
  return w;
}

// Cells {phi}, {not phi}, {*} on a stage for a unary symbol phi in L_j.
inline std::vector<std::vector<int>> formula_cells(LimitBuild& b, int stage, std::size_t symbol) {
  const auto& st = b.stage(stage);
  auto it = std::find(st.language.begin(), st.language.end(), symbol);
  if (it == st.language.end()) throw std::invalid_argument("symbol not in the stage sublanguage");
  const auto& col = st.A.table(static_cast<std::size_t>(it - st.language.begin()));
  std::vector<std::vector<int>> cells(3);
  for (std::size_t e = 0; e < st.size(); ++e) cells[col[e] ? 0 : 1].push_back(static_cast<int>(e));
  cells[2].push_back(-1);
  if (cells[0].empty() || cells[1].empty()) throw std::invalid_argument("symbol does not split the stage");
  return cells;
}

// Weights (a, 1 - a - s, s) on the cells of formula_cells, s the star mass.
inline Weight split_weight(LimitBuild& b, int stage, std::size_t symbol, const Rational& a) {
  auto cells = formula_cells(b, stage, symbol);
  const auto& st = b.stage(stage);
  return Weight{stage, std::move(cells), {a, 1 - a - st.star, st.star}};
}

struct LimitSample {
  FiniteStructure M;
  std::vector<PathPoint> points;
  int depth{0};
};

// i.i.d. points; facts read at the first level where the symbol is present
// and the projections are distinct and off *. Deepens until the points
// project injectively.
inline LimitSample sample_limit(const LimitMeasure& mu, std::size_t m, int depth, const SeedKey& seed,
                                int max_depth = -1) {
  if (max_depth < 0) max_depth = depth + 4;
  LimitSample out;
  for (int d = depth;; ++d) {
    out.points.clear();
    for (std::size_t i = 0; i < m; ++i) out.points.push_back(mu.sample_point(d, seed, i));
    std::map<int, std::size_t> seen;
    std::optional<std::pair<std::size_t, std::size_t>> clash;
    for (std::size_t i = 0; i < m && !clash; ++i) {
      auto [it, ok] = seen.emplace(out.points[i].pi.back(), i);
      if (!ok) clash = std::make_pair(it->second, i);
    }
    if (!clash) {
      out.depth = d;
      break;
    }
    if (d >= max_depth)
      throw std::runtime_error("points " + std::to_string(clash->first) + " and " + std::to_string(clash->second) +
                               " still collide at depth " + std::to_string(d));
  }
  auto& b = mu.build();
  const auto& stages = b.stages();
  const auto& top = stages[static_cast<std::size_t>(out.depth)];
  out.M = FiniteStructure(m, top.A.signature());
  for (std::size_t c = 0; c < top.language.size(); ++c) {
    int entry = 0;
    while (stages[static_cast<std::size_t>(entry)].language.size() <= c) ++entry;
    int arity = top.A.signature()[c].arity;
    for_each_tuple(static_cast<int>(m), arity, [&](const std::vector<int>& t) {
      std::vector<int> distinct;
      for (int x : t)
        if (std::find(distinct.begin(), distinct.end(), x) == distinct.end()) distinct.push_back(x);
      for (int k = entry; k <= out.depth; ++k) {
        std::vector<int> img;
        for (int x : distinct) img.push_back(out.points[static_cast<std::size_t>(x)].pi[static_cast<std::size_t>(k)]);
        if (!detail::injective_non_star(img)) continue;
        std::vector<int> proj;
        for (int x : t) proj.push_back(out.points[static_cast<std::size_t>(x)].pi[static_cast<std::size_t>(k)]);
        if (stages[static_cast<std::size_t>(k)].A.holds(c, proj)) out.M.set(c, t);
        return;
      }
      throw std::logic_error("no level separates the tuple");
    });
  }
  return out;
}

inline FiniteStructure sample_structure(const LimitMeasure& mu, std::size_t m, int depth, const SeedKey& seed,
                                        int max_depth = -1) {
  return sample_limit(mu, m, depth, seed, max_depth).M;
}

// Soundness of a sampled structure against the morleyized theory: universal
// axioms over the present symbols, omission of the scheduled types through
// some false available literal, and distinct 1-type fingerprints.
struct SampleAudit {
  AxiomAudit axioms;
  std::size_t omission_failures{0};
  std::size_t repeated_types{0};
  bool passed() const { return axioms.passed() && omission_failures == 0 && repeated_types == 0; }
};

inline SampleAudit audit_limit_sample(const FiniteStructure& s, const MorleyTheory& th,
                                      const std::vector<std::size_t>& types, long tail_cap = 256) {
  SampleAudit r;
  r.axioms = audit_universal(s, th);
  const auto& sig = s.signature();
  for (auto ti : types) {
    const auto& q = th.omitted.at(ti);
    if (q.vars.size() != 1) throw std::invalid_argument("audit handles unary omitted types");
    std::vector<std::pair<std::size_t, bool>> lits;
    auto add = [&](const std::string& name, bool positive) {
      if (auto i = sig.find(name)) lits.push_back({*i, positive});
    };
    add(th.language[q.head.symbol].name, q.head.positive);
    for (auto& l : q.members) add(th.language[l.symbol].name, l.positive);
    for (long i = static_cast<long>(q.members.size()); i < tail_cap; ++i)
      add(closure_symbol_name(to_sexpr(q.member(i))), q.member_positive());
    for (int x = 0; x < static_cast<int>(s.domain_size()); ++x) {
      bool refuted = std::any_of(lits.begin(), lits.end(), [&](auto& l) { return s.holds(l.first, {x}) != l.second; });
      if (!refuted) ++r.omission_failures;
    }
  }
  std::set<TypeFingerprint> fps;
  for (int x = 0; x < static_cast<int>(s.domain_size()); ++x)
    if (!fps.insert(qf_fingerprint(s, {x})).second) ++r.repeated_types;
  return r;
}

}  // namespace ergo
