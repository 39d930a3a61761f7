#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "logic.hpp"
#include "prf.hpp"

namespace ergo {

// Family of uniform values indexed by subsets of tuple positions. Position i
// stands for the domain element index_[i]; a mask selects positions. Values
// are computed on demand and cached; every access is logged.
class XiFamily {
 public:
  XiFamily(SeedKey key, std::vector<std::uint64_t> index)
      : key_(key), index_(std::move(index)), cache_(std::size_t{1} << index_.size(), -1.0),
        seen_(cache_.size(), false) {
    if (index_.size() > 20) throw std::length_error("xi family too wide");
  }

  std::size_t width() const { return index_.size(); }

  double operator()(std::uint32_t mask) const {
    if (mask >= cache_.size()) throw std::out_of_range("mask outside family");
    seen_[mask] = true;
    double& v = cache_[mask];
    if (v < 0) {
      std::vector<std::uint64_t> set;
      for (std::size_t i = 0; i < index_.size(); ++i)
        if (mask & (1u << i)) set.push_back(index_[i]);
      v = xi(key_, set);
    }
    return v;
  }

  bool accessed(std::uint32_t mask) const { return seen_.at(mask); }
  const std::vector<bool>& access_log() const { return seen_; }

 private:
  SeedKey key_;
  std::vector<std::uint64_t> index_;
  mutable std::vector<double> cache_;
  mutable std::vector<bool> seen_;
};

inline std::uint32_t support_mask(const std::vector<int>& args) {
  std::uint32_t m = 0;
  for (int a : args) m |= (1u << a);
  return m;
}

inline bool all_distinct(const std::vector<int>& args) {
  for (std::size_t i = 0; i < args.size(); ++i)
    for (std::size_t j = i + 1; j < args.size(); ++j)
      if (args[i] == args[j]) return false;
  return true;
}

// Executable AHK system. `atom(sym, args, xi)` decides R_sym on argument
// positions `args` (repeats allowed) of a tuple of distinct points whose
// randomness is `xi`. The n-ary type function f_n is the fingerprint of
// positions 0..n-1 assembled from atoms.
struct AhkSampler {
  using Atom = std::function<bool(std::size_t, const std::vector<int>&, const XiFamily&)>;

  std::string spec;
  Signature sig;
  Atom atom;
  bool reads_empty_set{false};

  TypeFingerprint type(int n, const XiFamily& xi) const {
    std::vector<int> pos(n);
    std::iota(pos.begin(), pos.end(), 0);
    return fingerprint_from(n, full_sublanguage(sig), sig, pos,
                            [&](std::size_t s, const std::vector<int>& args) { return atom(s, args, xi); });
  }
};

// Sample the structure on {0..n-1}: each fact on a tuple with support S is
// read from the atom over the positions of S (sorted), using xi_X for X within S.
inline FiniteStructure sample(const AhkSampler& smp, std::size_t n, const SeedKey& seed) {
  FiniteStructure m(n, smp.sig);
  const int r = smp.sig.max_arity();
  const auto& sig = smp.sig;
  for (std::size_t s = 0; s < sig.size(); ++s) {
    if (sig[s].arity == 0) {
      XiFamily fam(seed, {});
      if (smp.atom(s, {}, fam)) m.set(s, {});
    }
  }
  if (n == 0 || r == 0) return m;
  // Enumerate subsets S of the domain with |S| <= r in lexicographic order.
  std::vector<int> subset;
  std::function<void(int)> rec = [&](int start) {
    if (!subset.empty()) {
      std::vector<std::uint64_t> idx(subset.begin(), subset.end());
      XiFamily fam(seed, idx);
      const int k = static_cast<int>(subset.size());
      for (std::size_t s = 0; s < sig.size(); ++s) {
        int a = sig[s].arity;
        if (a < k) continue;
        for_each_tuple(k, a, [&](const std::vector<int>& pos) {
          if (support_mask(pos) != (1u << k) - 1) return;
          if (smp.atom(s, pos, fam)) {
            std::vector<int> args(a);
            for (int i = 0; i < a; ++i) args[i] = subset[pos[i]];
            m.set(s, args);
          }
        });
      }
    }
    if (static_cast<int>(subset.size()) == r) return;
    for (int v = start; v < static_cast<int>(n); ++v) {
      subset.push_back(v);
      rec(v + 1);
      subset.pop_back();
    }
  };
  rec(0);
  return m;
}

// Monte Carlo estimate with the key that reproduces it.
struct StatReport {
  std::string statistic;
  double estimate{0};
  double stderr_{0};
  std::uint64_t trials{0};
  SeedKey seed;

  static StatReport bernoulli(std::string name, std::uint64_t hits, std::uint64_t trials, SeedKey seed) {
    StatReport r;
    r.statistic = std::move(name);
    r.trials = trials;
    r.seed = seed;
    r.estimate = trials ? static_cast<double>(hits) / static_cast<double>(trials) : 0.0;
    r.stderr_ = trials ? std::sqrt(r.estimate * (1 - r.estimate) / static_cast<double>(trials)) : 0.0;
    return r;
  }

  static std::string csv_header() { return "statistic,estimate,stderr,trials,seed_hex"; }
  std::string csv_row() const {
    std::ostringstream o;
    o.precision(17);
    o << statistic << ',' << estimate << ',' << stderr_ << ',' << trials << ',' << seed.hex();
    return o.str();
  }
};

inline double z_score(double gap, double se) {
  if (se == 0) return gap == 0 ? 0.0 : (gap > 0 ? INFINITY : -INFINITY);
  return gap / se;
}

inline constexpr double kSigma = 3.0;

inline std::vector<int> identity_tuple(int m, int offset = 0) {
  std::vector<int> t(m);
  std::iota(t.begin(), t.end(), offset);
  return t;
}

// Measure of a formula on m distinct points; a fresh xi family per trial.
inline StatReport estimate_measure(const AhkSampler& smp, const QfFormula& phi, int m, std::uint64_t trials,
                                   const SeedKey& seed) {
  if (trials < 1) throw std::invalid_argument("trials must be positive");
  if (m < phi.var_count()) throw std::invalid_argument("formula has more variables than the tuple");
  std::set<std::size_t> syms;
  phi.symbols(syms);
  for (auto s : syms)
    if (s >= smp.sig.size()) throw std::invalid_argument("formula symbol outside the truncated signature");
  std::uint64_t hits = 0;
  auto tuple = identity_tuple(m);
  for (std::uint64_t t = 0; t < trials; ++t) {
    auto M = sample(smp, static_cast<std::size_t>(m), derive(seed, {t}));
    if (eval_qf(M, phi, tuple)) ++hits;
  }
  return StatReport::bernoulli("measure", hits, trials, seed);
}

struct DissociationReport {
  StatReport joint;
  StatReport product;
  StatReport phi;
  StatReport psi;
  double gap{0};
  double gap_stderr{0};
  double z{0};
};

// Joint versus product of phi on points 0..m1-1 and psi on the disjoint
// points m1..m1+m2-1. The gap is the sample covariance; its standard error is
// estimated from the per-trial centred products.
inline DissociationReport dissociation_test(const AhkSampler& smp, const QfFormula& phi, int m1, const QfFormula& psi,
                                            int m2, std::uint64_t trials, const SeedKey& seed) {
  if (trials < 2) throw std::invalid_argument("need at least two trials");
  if (phi.var_count() > m1 || psi.var_count() > m2) throw std::invalid_argument("overlapping variable assignment");
  std::vector<unsigned char> X(trials), Y(trials);
  auto a = identity_tuple(m1), b = identity_tuple(m2, m1);
  for (std::uint64_t t = 0; t < trials; ++t) {
    auto M = sample(smp, static_cast<std::size_t>(m1 + m2), derive(seed, {t}));
    X[t] = eval_qf(M, phi, a);
    Y[t] = eval_qf(M, psi, b);
  }
  double T = static_cast<double>(trials);
  std::uint64_t sx = 0, sy = 0, sxy = 0;
  for (std::uint64_t t = 0; t < trials; ++t) {
    sx += X[t];
    sy += Y[t];
    sxy += X[t] & Y[t];
  }
  double px = sx / T, py = sy / T, pxy = sxy / T;
  DissociationReport r;
  r.phi = StatReport::bernoulli("phi", sx, trials, seed);
  r.psi = StatReport::bernoulli("psi", sy, trials, seed);
  r.joint = StatReport::bernoulli("joint", sxy, trials, seed);
  r.product.statistic = "product";
  r.product.estimate = px * py;
  r.product.trials = trials;
  r.product.seed = seed;
  r.product.stderr_ = std::sqrt(py * py * px * (1 - px) / T + px * px * py * (1 - py) / T);
  r.gap = pxy - px * py;
  double acc = 0;
  for (std::uint64_t t = 0; t < trials; ++t) {
    double c = (X[t] - px) * (Y[t] - py) - r.gap;
    acc += c * c;
  }
  r.gap_stderr = std::sqrt(acc / (T - 1) / T);
  r.z = z_score(r.gap, r.gap_stderr);
  return r;
}

struct InvarianceReport {
  StatReport at_tuple;
  StatReport at_permuted;
  double gap{0};
  double gap_stderr{0};
  double z{0};
};

// phi at (0..m-1) versus phi at sigma(0..m-1) on the same sampled structures;
// the gap is studentized from the paired differences.
inline InvarianceReport invariance_test(const AhkSampler& smp, const QfFormula& phi, const Permutation& sigma,
                                        std::uint64_t trials, const SeedKey& seed) {
  if (trials < 2) throw std::invalid_argument("need at least two trials");
  int m = static_cast<int>(sigma.size());
  if (phi.var_count() > m) throw std::invalid_argument("permutation shorter than the formula's variables");
  auto a = identity_tuple(m);
  std::vector<int> sa(m);
  for (int i = 0; i < m; ++i) sa[i] = sigma(i);
  std::uint64_t hx = 0, hy = 0;
  std::vector<int> d(trials);
  for (std::uint64_t t = 0; t < trials; ++t) {
    auto M = sample(smp, static_cast<std::size_t>(m), derive(seed, {t}));
    bool x = eval_qf(M, phi, a), y = eval_qf(M, phi, sa);
    hx += x;
    hy += y;
    d[t] = static_cast<int>(x) - static_cast<int>(y);
  }
  InvarianceReport r;
  r.at_tuple = StatReport::bernoulli("at_tuple", hx, trials, seed);
  r.at_permuted = StatReport::bernoulli("at_permuted", hy, trials, seed);
  double T = static_cast<double>(trials);
  double mean = 0;
  for (int v : d) mean += v;
  mean /= T;
  double var = 0;
  for (int v : d) var += (v - mean) * (v - mean);
  var /= (T - 1);
  r.gap = mean;
  r.gap_stderr = std::sqrt(var / T);
  r.z = z_score(r.gap, r.gap_stderr);
  return r;
}

struct CoherenceReport {
  bool passed{true};
  std::uint64_t checks{0};
  std::optional<SeedKey> counterexample;
  std::string condition;  // "restriction" or "equivariance"
  int n{0}, m{0};
  std::vector<int> permutation;
};

inline std::vector<int> random_permutation(int n, Stream& rng) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (int i = n - 1; i > 0; --i) std::swap(p[i], p[rng.below(static_cast<std::uint64_t>(i + 1))]);
  return p;
}

// Exact check of the two coherence conditions on `trials` derived keys:
// (a) f_n restricted to the first m coordinates equals f_m;
// (b) f_n on the permuted family equals the permuted f_n.
inline CoherenceReport coherence_check(const AhkSampler& smp, int n, int m, std::uint64_t trials, const SeedKey& seed) {
  if (m > n || m < 0) throw std::invalid_argument("need 0 <= m <= n");
  CoherenceReport rep;
  rep.n = n;
  rep.m = m;
  const auto sub = full_sublanguage(smp.sig);
  for (std::uint64_t t = 0; t < trials; ++t) {
    SeedKey key = derive(seed, {t});
    Stream rng(prf64(key, {detail::kTagWords, 0x9e7}));
    std::vector<std::uint64_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    XiFamily fam(key, idx);
    TypeFingerprint fn = smp.type(n, fam);
    ++rep.checks;

    // (a) restriction: bits of fn whose variables all lie below m.
    std::vector<std::uint64_t> idx_m(idx.begin(), idx.begin() + m);
    XiFamily fam_m(key, idx_m);
    TypeFingerprint fm = smp.type(m, fam_m);
    std::vector<int> first(m);
    std::iota(first.begin(), first.end(), 0);
    TypeFingerprint restricted =
        fingerprint_from(m, sub, smp.sig, first, [&](std::size_t s, const std::vector<int>& args) {
          return smp.atom(s, args, fam);
        });
    if (restricted.bits != fm.bits) {
      rep.passed = false;
      rep.counterexample = key;
      rep.condition = "restriction";
      return rep;
    }

    // (b) equivariance under a random permutation.
    auto p = random_permutation(n, rng);
    std::vector<std::uint64_t> idx_p(n);
    for (int i = 0; i < n; ++i) idx_p[i] = idx[p[i]];
    XiFamily fam_p(key, idx_p);
    TypeFingerprint fp = smp.type(n, fam_p);
    TypeFingerprint permuted =
        fingerprint_from(n, sub, smp.sig, p, [&](std::size_t s, const std::vector<int>& args) {
          return smp.atom(s, args, fam);
        });
    if (fp.bits != permuted.bits) {
      rep.passed = false;
      rep.counterexample = key;
      rep.condition = "equivariance";
      rep.permutation = p;
      return rep;
    }
  }
  return rep;
}

// Structural audit: does f_n ever read the value indexed by the empty set?
inline bool reads_empty_value(const AhkSampler& smp, int n, std::uint64_t trials, const SeedKey& seed) {
  for (std::uint64_t t = 0; t < trials; ++t) {
    std::vector<std::uint64_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    XiFamily fam(derive(seed, {t}), idx);
    smp.type(n, fam);
    if (fam.accessed(0)) return true;
  }
  return false;
}

// Does every atom read only values indexed by subsets of its own support?
inline bool reads_within_support(const AhkSampler& smp, int n, std::uint64_t trials, const SeedKey& seed) {
  for (std::uint64_t t = 0; t < trials; ++t) {
    std::vector<std::uint64_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t s = 0; s < smp.sig.size(); ++s) {
      bool ok = true;
      for_each_tuple(n, smp.sig[s].arity, [&](const std::vector<int>& args) {
        XiFamily fam(derive(seed, {t}), idx);
        smp.atom(s, args, fam);
        std::uint32_t sup = support_mask(args);
        for (std::uint32_t mask = 1; mask < fam.access_log().size(); ++mask)
          if (fam.accessed(mask) && (mask & ~sup)) ok = false;
      });
      if (!ok) return false;
    }
  }
  return true;
}

struct TypeFrequency {
  TypeFingerprint type;
  double frequency{0};
  std::uint64_t count{0};
};

// Empirical n-types with frequency at least eps, sorted by decreasing frequency.
inline std::vector<TypeFrequency> estimate_positive_types(const AhkSampler& smp, int n, double eps,
                                                          std::uint64_t trials, const SeedKey& seed) {
  if (!(eps > 0)) throw std::invalid_argument("eps must be positive");
  std::map<TypeFingerprint, std::uint64_t> counts;
  for (std::uint64_t t = 0; t < trials; ++t) {
    std::vector<std::uint64_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    XiFamily fam(derive(seed, {t}), idx);
    ++counts[smp.type(n, fam)];
  }
  std::vector<TypeFrequency> out;
  for (auto& [fp, c] : counts) {
    double f = static_cast<double>(c) / static_cast<double>(trials);
    if (f >= eps) out.push_back({fp, f, c});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const TypeFrequency& a, const TypeFrequency& b) { return a.count > b.count; });
  return out;
}

}  // namespace ergo
