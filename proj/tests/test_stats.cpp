#include <catch_amalgamated.hpp>

#include <ergo/gallery.hpp>
#include <ergo/stats.hpp>

using namespace ergo;

namespace {

QfFormula distinct01() { return QfFormula::neg(QfFormula::eq(0, 1)); }

// Independent naive root finder: scan [n]^r, keep tuples without repeats whose
// every atomic formula agrees with the target's bits.
std::vector<std::vector<int>> naive_realizations(const FiniteStructure& m, const TypeFingerprint& fp) {
  std::vector<std::vector<int>> out;
  int n = static_cast<int>(m.domain_size());
  for_each_tuple(n, fp.arity, [&](const std::vector<int>& t) {
    std::set<int> s(t.begin(), t.end());
    if (static_cast<int>(s.size()) != fp.arity) return;
    std::size_t bit = 0;
    bool ok = true;
    for (auto sym : fp.sublanguage)
      for_each_tuple(fp.arity, m.signature()[sym].arity, [&](const std::vector<int>& v) {
        if (eval_qf(m, QfFormula::rel(sym, v), t) != fp.bits[bit++]) ok = false;
      });
    if (ok) out.push_back(t);
  });
  return out;
}

FiniteStructure two_edges() {
  FiniteStructure m(4, Signature({{"R", 2}}));
  m.set(0, {0, 1});
  m.set(0, {2, 3});
  return m;
}

}  // namespace

TEST_CASE("find_roots on hand-built structures", "[stats]") {
  auto m = two_edges();
  auto shared = find_roots(m, qf_fingerprint(m, {0, 1}));
  REQUIRE(shared.tuples.size() == 2);
  REQUIRE_FALSE(shared.rooted);
  REQUIRE(shared.roots.empty());

  m.set(0, {1, 0});
  auto unique = find_roots(m, qf_fingerprint(m, {1, 0}));
  REQUIRE(unique.tuples == std::vector<std::vector<int>>{{0, 1}, {1, 0}});
  REQUIRE(unique.rooted);
  REQUIRE(unique.roots == std::vector<int>{0, 1});

  auto ghost = qf_fingerprint(m, {0, 1});
  ghost.bits[0] = true;  // a loop at x0 never occurs
  auto none = find_roots(m, ghost);
  REQUIRE(none.unrealized);
  REQUIRE(none.rooted);
  REQUIRE(none.tuples.empty());

  REQUIRE_THROWS(find_roots(FiniteStructure(1, m.signature()), qf_fingerprint(m, {0, 1})));
}

TEST_CASE("find_roots agrees with a naive scan", "[stats][property]") {
  for (std::uint64_t rep = 0; rep < 30; ++rep) {
    std::size_t n = 3 + rep % 10;
    auto M = sample(kaleidoscope_hypergraph(2, 2), n, derive(kDefaultSeed, {rep}));
    int arity = 1 + static_cast<int>(rep % 2);
    for_each_injective(static_cast<int>(n), arity, [&](const std::vector<int>& t) {
      auto fp = qf_fingerprint(M, t);
      REQUIRE(find_roots(M, fp).tuples == naive_realizations(M, fp));
    });
  }
}

TEST_CASE("max graph samples are rooted", "[stats]") {
  auto smp = max_graph(16);
  for (std::uint64_t s = 0; s < 5; ++s) {
    auto M = sample(smp, 30, derive(kDefaultSeed, {s}));
    auto r = rootedness_check(M, distinct01(), 2);
    REQUIRE(r.passed);
    REQUIRE(r.repeated > 0);
    REQUIRE(r.repeated_single_root);
  }
}

TEST_CASE("shallow kaleidoscope types are scattered", "[stats]") {
  auto M = sample(kaleidoscope_hypergraph(2, 2), 30, kDefaultSeed);
  auto r = rootedness_check(M, distinct01(), 2);
  REQUIRE_FALSE(r.passed);
  REQUIRE(r.failures.size() == 4);

  FiniteStructure empty(0, Signature({{"R", 2}}));
  REQUIRE(rootedness_check(empty, distinct01(), 2).passed);
}

TEST_CASE("collision statistics", "[stats]") {
  auto c = collision_stat(constant_empty(), 2, 500, kDefaultSeed);
  REQUIRE(c.estimate == 1.0);
  for (int d : {2, 4}) {
    auto k = collision_stat(kaleidoscope_hypergraph(2, d), 2, 20000, kDefaultSeed);
    double p = std::ldexp(1.0, -d);
    REQUIRE(std::abs(k.estimate - p) <= 3 * std::sqrt(p * (1 - p) / 20000));
    auto b = collision_stat(blowup_control(d), 1, 20000, kDefaultSeed);
    double q = blowup_collision(d);
    REQUIRE(std::abs(b.estimate - q) <= 3 * std::sqrt(q * (1 - q) / 20000));
  }
  REQUIRE_THROWS(collision_stat(constant_empty(), 2, 0, kDefaultSeed));
}
