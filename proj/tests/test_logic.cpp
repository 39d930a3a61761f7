#include <catch_amalgamated.hpp>

#include <ergo/io.hpp>
#include <ergo/logic.hpp>
#include <ergo/prf.hpp>

using namespace ergo;

namespace {

FiniteStructure graph(std::size_t n, const std::vector<std::pair<int, int>>& edges, bool symmetric) {
  FiniteStructure m(n, Signature({{"R", 2}}));
  for (auto [a, b] : edges) {
    m.set(0, {a, b});
    if (symmetric) m.set(0, {b, a});
  }
  return m;
}

FiniteStructure random_structure(std::size_t n, std::uint64_t seed) {
  Signature sig({{"P", 1}, {"R", 2}, {"T", 3}});
  FiniteStructure m(n, sig);
  Stream st(seed);
  for (std::size_t s = 0; s < sig.size(); ++s)
    for_each_tuple(static_cast<int>(n), sig[s].arity, [&](const std::vector<int>& t) {
      if (st.coin()) m.set(s, t);
    });
  return m;
}

Permutation random_perm(std::size_t n, Stream& st) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[st.below(i)]);
  return Permutation(p);
}

// Independent oracle: every permutation of {0..n-1} via std::next_permutation.
std::vector<Permutation> brute_force_automorphisms(const FiniteStructure& m) {
  std::vector<int> p(m.domain_size());
  std::iota(p.begin(), p.end(), 0);
  std::vector<Permutation> out;
  do {
    bool ok = true;
    for (std::size_t s = 0; s < m.signature().size() && ok; ++s)
      for_each_tuple(static_cast<int>(m.domain_size()), m.signature()[s].arity, [&](const std::vector<int>& t) {
        std::vector<int> u(t.size());
        for (std::size_t i = 0; i < t.size(); ++i) u[i] = p[t[i]];
        if (m.holds(s, t) != m.holds(s, u)) ok = false;
      });
    if (ok) out.emplace_back(p);
  } while (std::next_permutation(p.begin(), p.end()));
  return out;
}

}  // namespace

TEST_CASE("apply_permutation unfolds the definition", "[logic]") {
  auto m = graph(2, {{0, 1}}, false);
  auto s = apply_permutation(m, Permutation::swap(2, 0, 1));
  REQUIRE(s.holds(0, {1, 0}));
  REQUIRE_FALSE(s.holds(0, {0, 1}));
  REQUIRE(apply_permutation(m, Permutation::identity(2)) == m);
  REQUIRE_THROWS(apply_permutation(m, Permutation::identity(3)));
}

TEST_CASE("apply_permutation is a group action", "[logic][property]") {
  Stream st(7);
  for (int rep = 0; rep < 50; ++rep) {
    std::size_t n = 2 + rep % 5;
    auto m = random_structure(n, 100 + rep);
    auto sigma = random_perm(n, st), tau = random_perm(n, st);
    REQUIRE(apply_permutation(m, sigma * tau) == apply_permutation(apply_permutation(m, tau), sigma));
    REQUIRE(apply_permutation(m, Permutation::identity(n)) == m);
  }
}

TEST_CASE("eval_qf follows closed-world Tarskian semantics", "[logic]") {
  auto m = graph(2, {{0, 1}}, false);
  auto r = QfFormula::rel(0, {0, 1});
  REQUIRE(eval_qf(m, r, {0, 1}));
  REQUIRE_FALSE(eval_qf(m, r, {1, 0}));
  auto f = QfFormula::conj({QfFormula::eq(0, 0), QfFormula::neg(QfFormula::eq(0, 1))});
  REQUIRE(eval_qf(m, f, {0, 1}));
  REQUIRE_THROWS(eval_qf(m, r, {0}));
  REQUIRE_THROWS(eval_qf(m, QfFormula::rel(0, {0}), {0, 1}));
}

TEST_CASE("satisfaction is invariant under the logic action", "[logic][property]") {
  Stream st(11);
  auto phi = QfFormula::disj({QfFormula::conj({QfFormula::rel(1, {0, 1}), QfFormula::neg(QfFormula::rel(0, {2}))}),
                              QfFormula::rel(2, {2, 1, 0}), QfFormula::eq(0, 2)});
  for (int rep = 0; rep < 40; ++rep) {
    std::size_t n = 3 + rep % 3;
    auto m = random_structure(n, 500 + rep);
    auto sigma = random_perm(n, st);
    auto sm = apply_permutation(m, sigma);
    for_each_tuple(static_cast<int>(n), 3, [&](const std::vector<int>& a) {
      std::vector<int> sa{sigma(a[0]), sigma(a[1]), sigma(a[2])};
      REQUIRE(eval_qf(sm, phi, sa) == eval_qf(m, phi, a));
    });
  }
}

TEST_CASE("fingerprints follow the documented bit order", "[logic]") {
  auto m = graph(3, {{0, 1}}, false);
  auto fp = qf_fingerprint(m, {0, 1});
  // R(x0,x0) R(x0,x1) R(x1,x0) R(x1,x1) then x0=x1
  REQUIRE(fp.to_string() == "01000");
  REQUIRE(qf_fingerprint(m, {0, 1}) == fp);
  auto rep = qf_fingerprint(m, {2, 2});
  REQUIRE(rep.redundant());
  REQUIRE(rep.bits.back());
  REQUIRE(fingerprint_length(2, {0}, m.signature()) == fp.bits.size());
}

TEST_CASE("fingerprint equality is atomic-diagram equality", "[logic][property]") {
  for (int rep = 0; rep < 30; ++rep) {
    auto m = random_structure(4, 900 + rep);
    for_each_tuple(4, 2, [&](const std::vector<int>& a) {
      for_each_tuple(4, 2, [&](const std::vector<int>& b) {
        bool same = true;
        for (std::size_t s = 0; s < 3; ++s)
          for_each_tuple(2, m.signature()[s].arity, [&](const std::vector<int>& v) {
            auto at = QfFormula::rel(s, v);
            if (eval_qf(m, at, a) != eval_qf(m, at, b)) same = false;
          });
        if (eval_qf(m, QfFormula::eq(0, 1), a) != eval_qf(m, QfFormula::eq(0, 1), b)) same = false;
        REQUIRE((qf_fingerprint(m, a) == qf_fingerprint(m, b)) == same);
      });
    });
  }
}

TEST_CASE("automorphisms of small graphs", "[logic]") {
  FiniteStructure empty(3, Signature({{"R", 2}}));
  REQUIRE(automorphisms(empty).size() == 6);

  auto path = graph(3, {{0, 1}, {1, 2}}, true);
  auto ap = automorphisms(path);
  REQUIRE(ap.size() == 2);
  REQUIRE(std::find(ap.begin(), ap.end(), Permutation::swap(3, 0, 2)) != ap.end());

  auto cycle = graph(3, {{0, 1}, {1, 2}, {2, 0}}, false);
  auto ac = automorphisms(cycle);
  REQUIRE(ac.size() == 3);
  REQUIRE(std::find(ac.begin(), ac.end(), Permutation({1, 2, 0})) != ac.end());
  REQUIRE(std::find(ac.begin(), ac.end(), Permutation({2, 0, 1})) != ac.end());

  REQUIRE_THROWS(automorphisms(FiniteStructure(11, Signature({{"R", 2}}))));
}

TEST_CASE("automorphism search agrees with exhaustive enumeration", "[logic][property]") {
  for (int rep = 0; rep < 40; ++rep) {
    std::size_t n = 1 + rep % kBruteForceBound;
    Signature sig({{"R", 2}});
    FiniteStructure m(n, sig);
    Stream st(3000 + rep);
    // Sparse symmetric graphs keep nontrivial symmetry.
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b)
        if (st.below(3) == 0) {
          m.set(0, {static_cast<int>(a), static_cast<int>(b)});
          m.set(0, {static_cast<int>(b), static_cast<int>(a)});
        }
    auto fast = automorphisms(m);
    auto slow = brute_force_automorphisms(m);
    std::sort(fast.begin(), fast.end());
    std::sort(slow.begin(), slow.end());
    REQUIRE(fast == slow);
    std::set<Permutation> group(fast.begin(), fast.end());
    for (auto& a : fast) {
      REQUIRE(group.count(a.inverse()));
      for (auto& b : fast) REQUIRE(group.count(a * b));
    }
  }
}

TEST_CASE("group-theoretic dcl on small structures", "[logic]") {
  FiniteStructure empty(3, Signature({{"R", 2}}));
  REQUIRE(group_dcl_trivial(empty, {}, 0));
  auto path = graph(3, {{0, 1}, {1, 2}}, true);
  REQUIRE_FALSE(group_dcl_trivial(path, {}, 1));
  REQUIRE_FALSE(group_dcl_trivial(path, {0}, 2));
  REQUIRE(group_dcl_trivial(path, {}, 0));
  REQUIRE_THROWS(group_dcl_trivial(path, {1}, 1));
}

TEST_CASE("structures roundtrip through JSON Lines", "[logic][io]") {
  auto m = random_structure(4, 42);
  auto text = to_jsonl(m);
  REQUIRE(text.rfind("{\"domain_size\":4,", 0) == 0);
  auto back = from_jsonl(text);
  REQUIRE(back == m);
  REQUIRE(to_jsonl(back) == text);
}

TEST_CASE("signatures materialize generated vocabularies", "[logic]") {
  auto sig = Signature::generated([](std::size_t i) { return Symbol{"R" + std::to_string(i), 2}; }, 3);
  REQUIRE(sig.size() == 3);
  sig.truncate(5);
  REQUIRE(sig[4].name == "R4");
  REQUIRE(sig.at("R2") == 2);
  REQUIRE_THROWS(sig.add({"R0", 2}));
  REQUIRE_THROWS(Signature({{"Q", -1}}));
}
