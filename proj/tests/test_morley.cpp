#include <catch_amalgamated.hpp>

#include <map>

#include <ergo/gallery.hpp>
#include <ergo/morley.hpp>

using namespace ergo;

namespace {

Signature base_signature() {
  return Signature({{"E", 2}, {"U", 1}, {"Q", 0}, {"P0", 1}, {"P1", 1}, {"P2", 1}, {"P3", 1}});
}

// Independent Tarskian evaluator over named environments; schemes range over
// their materialized prefix.
bool tarski(const FiniteStructure& m, const Fragment& f, std::map<std::string, int>& env) {
  using K = Fragment::Kind;
  switch (f.kind) {
    case K::Rel: {
      std::vector<int> args;
      for (auto& v : f.vars) args.push_back(env.at(v));
      return m.holds(m.signature().at(symbol_name(f)), args);
    }
    case K::Eq:
      return env.at(f.vars[0]) == env.at(f.vars[1]);
    case K::Not:
      return !tarski(m, f.kids[0], env);
    case K::And:
      for (auto& k : f.kids)
        if (!tarski(m, k, env)) return false;
      return true;
    case K::Or:
      for (auto& k : f.kids)
        if (tarski(m, k, env)) return true;
      return false;
    case K::SchemeAnd:
    case K::SchemeOr: {
      bool conj = f.kind == K::SchemeAnd;
      for (int i = 0; i < f.prefix; ++i)
        if (tarski(m, scheme_member(f, i), env) != conj) return !conj;
      return conj;
    }
    case K::Forall:
    case K::Exists: {
      const auto& v = f.vars[0];
      auto saved = env.find(v) == env.end() ? std::optional<int>{} : std::optional<int>{env[v]};
      bool all = true, any = false;
      for (int d = 0; d < static_cast<int>(m.domain_size()); ++d) {
        env[v] = d;
        bool b = tarski(m, f.kids[0], env);
        all = all && b;
        any = any || b;
      }
      if (saved) env[v] = *saved;
      else env.erase(v);
      return f.kind == K::Forall ? all : any;
    }
  }
  return false;
}

Fragment random_formula(Stream& rng, int depth) {
  using K = Fragment::Kind;
  static const std::vector<std::string> vars{"x", "y", "z"};
  auto var = [&] { return vars[rng.below(vars.size())]; };
  auto r = depth <= 0 ? rng.below(4) : rng.below(11);
  switch (r) {
    case 0:
      return Fragment::rel("E", {var(), var()});
    case 1:
      return Fragment::rel("U", {var()});
    case 2:
      return rng.coin() ? Fragment::eq(var(), var()) : Fragment::rel("Q", {});
    case 3:
      return Fragment::rel("P", {var()}, std::to_string(rng.below(4)));
    case 4:
    case 5:
      return Fragment::unary(K::Not, random_formula(rng, depth - 1));
    case 6:
    case 7: {
      std::vector<Fragment> kids;
      for (std::uint64_t i = 0, n = 1 + rng.below(3); i < n; ++i) kids.push_back(random_formula(rng, depth - 1));
      return Fragment::nary(r == 6 ? K::And : K::Or, kids);
    }
    case 8:
    case 9:
      return Fragment::quant(r == 8 ? K::Forall : K::Exists, var(), random_formula(rng, depth - 1));
    default: {
      auto body = rng.coin() ? Fragment::rel("P", {var()}, "n")
                             : Fragment::nary(K::Or, {Fragment::rel("P", {var()}, "n"), random_formula(rng, 0)});
      return Fragment::scheme(rng.coin() ? K::SchemeAnd : K::SchemeOr, "n", 1 + static_cast<int>(rng.below(3)), body);
    }
  }
}

Fragment close_universally(Stream& rng, Fragment f) {
  for (auto& v : free_vars(f))
    f = Fragment::quant(rng.coin() ? Fragment::Kind::Forall : Fragment::Kind::Exists, v, f);
  return f;
}

std::vector<Fragment> random_theory(Stream& rng) {
  std::vector<Fragment> t;
  for (std::uint64_t i = 0, n = 1 + rng.below(3); i < n; ++i) t.push_back(close_universally(rng, random_formula(rng, 3)));
  return t;
}

FiniteStructure random_structure(Stream& rng, std::size_t n, const Signature& sig) {
  FiniteStructure m(n, sig);
  double density = 0.2 + 0.6 * rng.uniform();
  for (std::size_t s = 0; s < sig.size(); ++s)
    for_each_tuple(static_cast<int>(n), sig[s].arity, [&](const std::vector<int>& t) {
      if (rng.uniform() < density) m.set(s, t);
    });
  return m;
}

// Every closure symbol's extension agrees with the independent evaluator.
void require_expansion_matches_oracle(const FiniteStructure& m, const MorleyTheory& th) {
  auto ex = canonical_expand(m, th);
  for (auto& node : th.closure) {
    auto sym = ex.signature().at(closure_symbol_name(node.key));
    for_each_tuple(static_cast<int>(m.domain_size()), static_cast<int>(node.vars.size()),
                   [&](const std::vector<int>& t) {
                     std::map<std::string, int> env;
                     for (std::size_t i = 0; i < t.size(); ++i) env[node.vars[i]] = t[i];
                     INFO(node.key);
                     REQUIRE(ex.holds(sym, t) == tarski(m, node.formula, env));
                   });
  }
}

}  // namespace

TEST_CASE("fragment s-expressions roundtrip", "[morley]") {
  for (std::string s : {"(forall x (exists y (rel R x y)))", "(schemeAnd n 3 (rel (P n) x))",
                        "(or (not (eq x y)) (and (rel Q) (rel (P 2) z)))", "(schemeOr k 1 (forall x (rel (P k) x)))"})
    REQUIRE(to_sexpr(parse_fragment(s)) == s);
  REQUIRE(to_sexpr(parse_fragment("  ( forall   x\n(rel R x x) ) ")) == "(forall x (rel R x x))");
  REQUIRE_THROWS(parse_fragment("(rel R x) extra"));
  REQUIRE_THROWS(parse_fragment("(xor (rel R x))"));
  REQUIRE_THROWS(parse_fragment("(schemeAnd n 0 (rel (P n) x))"));
  REQUIRE_THROWS(parse_fragment("(forall x"));
  Stream rng(7);
  for (int i = 0; i < 200; ++i) {
    auto f = random_formula(rng, 4);
    REQUIRE(parse_fragment(to_sexpr(f)) == f);
  }
}

TEST_CASE("scheme members substitute the index", "[morley]") {
  auto f = parse_fragment("(schemeAnd n 3 (and (rel (P n) x) (schemeOr n 2 (rel (P n) y))))");
  REQUIRE(to_sexpr(scheme_member(f, 5)) == "(and (rel (P 5) x) (schemeOr n 2 (rel (P n) y)))");
  REQUIRE_THROWS(symbol_name(parse_fragment("(rel (P n) x)")));
  REQUIRE(free_vars(f) == std::vector<std::string>{"x", "y"});
}

TEST_CASE("axiom counts on the worked examples", "[morley]") {
  auto th = morleyize(std::vector<std::string>{"(forall x (exists y (rel R x y)))"});
  REQUIRE(th.closure.size() == 3);
  REQUIRE(th.schema_instance_count() == 3 + 1);
  REQUIRE(th.axioms.size() == 6);
  REQUIRE(th.language.size() == 1 + 3);
  REQUIRE(th.language[th.node("(forall x (exists y (rel R x y)))").symbol].arity == 0);
  int universal = 0, pithy = 0;
  for (auto& a : th.axioms) (a.universal() ? universal : pithy) += 1;
  REQUIRE(universal == 4);
  REQUIRE(pithy == 2);
  REQUIRE(th.axioms.back().schema == 0);
  REQUIRE(th.omitted.empty());

  auto atomic = morleyize(std::vector<std::string>{"(rel Q)"});
  REQUIRE(atomic.schema_instance_count() == 2);
  REQUIRE(atomic.axioms.size() == 2);
  REQUIRE(atomic.axioms[0].schema == 1);
  REQUIRE(atomic.axioms[1].schema == 0);

  auto sch = morleyize(std::vector<std::string>{"(forall x (schemeAnd n 3 (rel (P n) x)))"});
  int fives = 0;
  for (auto& a : sch.axioms) fives += a.schema == 5;
  REQUIRE(fives == 3);
  REQUIRE(sch.omitted.size() == 1);
  auto& q = sch.omitted[0];
  REQUIRE(q.pattern == 1);
  REQUIRE(q.members.size() == 3);
  REQUIRE_FALSE(q.head.positive);
  REQUIRE(to_sexpr(q.member(7)) == "(rel (P 7) x)");
  REQUIRE(q.key == "(schemeAnd n 3 (rel (P n) x))");
}

TEST_CASE("morleyize errors", "[morley]") {
  REQUIRE_THROWS_WITH(morleyize(std::vector<std::string>{"(rel R x)"}), Catch::Matchers::ContainsSubstring("free"));
  MorleyOptions tight;
  tight.max_vars = 2;
  REQUIRE_THROWS_WITH(morleyize(std::vector<std::string>{"(forall x (forall y (rel R x y)))"}, {}, tight),
                      Catch::Matchers::ContainsSubstring("free-variable supply exhausted"));
  REQUIRE_THROWS(morleyize(std::vector<std::string>{"(forall x (and (rel R x) (rel R x x)))"}));
}

TEST_CASE("pithy shape audit", "[morley]") {
  REQUIRE(check_pi2minus(std::vector<Axiom>{}));
  Axiom bad;
  bad.prefix = {{false, "x"}, {true, "y"}, {true, "z"}};
  bad.matrix = QfFormula::eq(1, 2);
  REQUIRE_FALSE(check_pi2minus(std::vector<Axiom>{bad}));
  Axiom middle;
  middle.prefix = {{true, "y"}, {false, "x"}};
  REQUIRE_FALSE(check_pi2minus(std::vector<Axiom>{middle}));
  Stream rng(11);
  for (int i = 0; i < 100; ++i) REQUIRE(check_pi2minus(morleyize(random_theory(rng), base_signature())));
}

TEST_CASE("symbol table is a bijection onto the closure", "[morley][property]") {
  Stream rng(13);
  for (int i = 0; i < 50; ++i) {
    auto th = morleyize(random_theory(rng), base_signature());
    std::set<std::string> keys;
    std::set<std::size_t> syms;
    for (auto& n : th.closure) {
      keys.insert(n.key);
      syms.insert(n.symbol);
      REQUIRE(th.language[n.symbol].name == closure_symbol_name(n.key));
      REQUIRE(th.language[n.symbol].arity == static_cast<int>(n.vars.size()));
      for (auto k : n.kids) REQUIRE(k < th.node_index.at(n.key));
    }
    REQUIRE(keys.size() == th.closure.size());
    REQUIRE(syms.size() == th.closure.size());
    REQUIRE(th.language.size() == th.base.size() + th.closure.size());
    auto j = theory_json(th);
    REQUIRE(j["language"].size() == th.language.size());
    REQUIRE(j["axioms"].size() == th.axioms.size());
  }
}

TEST_CASE("canonical expansion agrees with Tarskian evaluation", "[morley][oracle]") {
  Stream rng(17);
  auto sig = base_signature();
  for (int i = 0; i < 60; ++i) {
    auto th = morleyize(random_theory(rng), sig);
    auto m = random_structure(rng, rng.below(6), sig);
    require_expansion_matches_oracle(m, th);
  }
  auto th = morleyize(std::vector<std::string>{"(forall x (not (rel U x)))"}, sig);
  auto m = random_structure(rng, 4, sig);
  auto ex = canonical_expand(m, th);
  auto u = ex.signature().at(closure_symbol_name("(rel U x)"));
  auto nu = ex.signature().at(closure_symbol_name("(not (rel U x))"));
  for (int x = 0; x < 4; ++x) {
    REQUIRE(ex.holds(u, {x}) == m.holds(m.signature().at("U"), {x}));
    REQUIRE(ex.holds(nu, {x}) == !ex.holds(u, {x}));
  }
}

TEST_CASE("canonical expansions satisfy every universal axiom for |M| <= 5", "[morley][property]") {
  Stream rng(19);
  auto sig = base_signature();
  for (int i = 0; i < 40; ++i) {
    auto th = morleyize(random_theory(rng), sig);
    for (std::size_t n = 0; n <= 5; ++n) {
      auto m = random_structure(rng, n, sig);
      auto ex = canonical_expand(m, th);
      auto audit = audit_universal(ex, th, false);
      REQUIRE(audit.passed());
      REQUIRE(audit.skipped == 0);
      for (auto& a : th.axioms) {
        if (a.schema != 0) continue;
        std::map<std::string, int> env;
        REQUIRE(satisfies(ex, a, th.language) == tarski(m, th.node(a.node).formula, env));
      }
      if (n == 0) continue;
      for (auto idx : th.pithy_axioms()) REQUIRE(satisfies(ex, th.axioms[idx], th.language));
    }
  }
}

TEST_CASE("reduct of the canonical expansion is the original", "[morley][property]") {
  Stream rng(23);
  auto sig = base_signature();
  for (int i = 0; i < 100; ++i) {
    auto th = morleyize(random_theory(rng), sig);
    REQUIRE(verify_reduct_roundtrip(random_structure(rng, rng.below(8), sig), th));
  }
  REQUIRE(verify_reduct_roundtrip(FiniteStructure(0, sig), morleyize(std::vector<std::string>{"(rel Q)"}, sig)));

  auto smp = kaleidoscope_hypergraph(2, 3);
  std::vector<std::string> sentences{"(forall x (forall y (or (eq x y) (not (rel R0 x y)))))"};
  auto gth = morleyize(sentences, smp.sig);
  for (std::uint64_t s = 0; s < 5; ++s) REQUIRE(verify_reduct_roundtrip(sample(smp, 20, derive(kDefaultSeed, {s})), gth));
}

TEST_CASE("expansions omit the materialized scheme types", "[morley][property]") {
  Stream rng(29);
  auto sig = base_signature();
  auto th = morleyize(std::vector<std::string>{"(forall x (schemeAnd n 3 (rel (P n) x)))",
                                               "(exists x (schemeOr n 2 (and (rel (P n) x) (rel U x))))"},
                      sig);
  REQUIRE(th.omitted.size() == 2);
  REQUIRE(th.omitted[1].pattern == 2);
  for (int i = 0; i < 50; ++i) {
    auto m = random_structure(rng, 1 + rng.below(5), sig);
    auto ex = canonical_expand(m, th);
    for (auto& q : th.omitted)
      for_each_tuple(static_cast<int>(m.domain_size()), static_cast<int>(q.vars.size()),
                     [&](const std::vector<int>& t) { REQUIRE_FALSE(realizes_prefix(ex, q, th.language, t)); });
  }
}
