#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "ahk.hpp"
#include "logic.hpp"

namespace ergo {

struct RootReport {
  TypeFingerprint fingerprint;
  std::vector<std::vector<int>> tuples;
  std::vector<int> roots;  // intersection of the realizing tuples' supports
  bool rooted{true};
  bool unrealized{false};
};

// Enumerate injective tuples of length r over {0..n-1} in lexicographic order.
template <class F>
void for_each_injective(int n, int r, F&& f) {
  std::vector<int> t(r);
  std::vector<bool> used(n, false);
  std::function<void(int)> rec = [&](int i) {
    if (i == r) {
      f(static_cast<const std::vector<int>&>(t));
      return;
    }
    for (int v = 0; v < n; ++v) {
      if (used[v]) continue;
      used[v] = true;
      t[i] = v;
      rec(i + 1);
      used[v] = false;
    }
  };
  rec(0);
}

inline std::vector<int> intersect_supports(const std::vector<std::vector<int>>& tuples) {
  if (tuples.empty()) return {};
  std::set<int> acc(tuples[0].begin(), tuples[0].end());
  for (std::size_t i = 1; i < tuples.size(); ++i) {
    std::set<int> s(tuples[i].begin(), tuples[i].end()), keep;
    for (int v : acc)
      if (s.count(v)) keep.insert(v);
    acc.swap(keep);
  }
  return {acc.begin(), acc.end()};
}

// Every non-redundant tuple realizing fp, and the elements common to all of them.
inline RootReport find_roots(const FiniteStructure& m, const TypeFingerprint& fp) {
  if (static_cast<std::size_t>(fp.arity) > m.domain_size()) throw std::invalid_argument("arity exceeds domain size");
  for (auto s : fp.sublanguage)
    if (s >= m.signature().size()) throw std::invalid_argument("fingerprint symbol not materialized");
  RootReport r;
  r.fingerprint = fp;
  for_each_injective(static_cast<int>(m.domain_size()), fp.arity, [&](const std::vector<int>& t) {
    if (qf_fingerprint(m, t, fp.sublanguage) == fp) r.tuples.push_back(t);
  });
  if (r.tuples.empty()) {
    r.unrealized = true;
    r.rooted = true;
    return r;
  }
  r.roots = intersect_supports(r.tuples);
  r.rooted = !r.roots.empty();
  return r;
}

struct RootednessReport {
  bool passed{true};
  std::size_t types{0};
  std::size_t tuples{0};
  std::vector<RootReport> failures;
  // Types realized on at least two distinct vertex sets.
  std::size_t repeated{0};
  bool repeated_single_root{true};
};

// Group the chi-satisfying non-redundant tuples by fingerprint over `sub` and
// check that each realized type has a root.
inline RootednessReport rootedness_check(const FiniteStructure& m, const QfFormula& chi, int arity,
                                         const std::vector<std::size_t>& sub) {
  RootednessReport rep;
  if (static_cast<std::size_t>(arity) > m.domain_size()) return rep;
  std::map<TypeFingerprint, std::vector<std::vector<int>>> groups;
  for_each_injective(static_cast<int>(m.domain_size()), arity, [&](const std::vector<int>& t) {
    if (!eval_qf(m, chi, t)) return;
    groups[qf_fingerprint(m, t, sub)].push_back(t);
    ++rep.tuples;
  });
  rep.types = groups.size();
  for (auto& [fp, ts] : groups) {
    RootReport r;
    r.fingerprint = fp;
    r.tuples = ts;
    r.roots = intersect_supports(ts);
    r.rooted = !r.roots.empty();
    std::set<std::set<int>> supports;
    for (auto& t : ts) supports.insert(std::set<int>(t.begin(), t.end()));
    if (supports.size() >= 2) {
      ++rep.repeated;
      if (r.roots.size() != 1) rep.repeated_single_root = false;
    }
    if (!r.rooted) {
      rep.passed = false;
      rep.failures.push_back(std::move(r));
    }
  }
  return rep;
}

inline RootednessReport rootedness_check(const FiniteStructure& m, const QfFormula& chi, int arity) {
  return rootedness_check(m, chi, arity, full_sublanguage(m.signature()));
}

// Probability that two disjoint n-tuples of one sample share a fingerprint.
inline StatReport collision_stat(const AhkSampler& smp, int n, std::uint64_t trials, const SeedKey& seed) {
  if (trials < 1) throw std::invalid_argument("trials must be positive");
  std::uint64_t hits = 0;
  auto a = identity_tuple(n), b = identity_tuple(n, n);
  for (std::uint64_t t = 0; t < trials; ++t) {
    auto M = sample(smp, static_cast<std::size_t>(2 * n), derive(seed, {t}));
    if (qf_fingerprint(M, a) == qf_fingerprint(M, b)) ++hits;
  }
  return StatReport::bernoulli("collision", hits, trials, seed);
}

}  // namespace ergo
