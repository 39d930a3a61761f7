#pragma once

#include <array>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ahk.hpp"

namespace ergo {

namespace detail {

inline std::uint32_t singleton(int pos) { return 1u << pos; }

inline std::uint32_t pair_mask(int a, int b) { return (1u << a) | (1u << b); }

inline std::uint64_t bits53(double u) { return static_cast<std::uint64_t>(u * 0x1.0p53); }

inline Signature indexed(const std::string& stem, std::size_t d, int arity) {
  return Signature::generated([stem, arity](std::size_t i) { return Symbol{stem + std::to_string(i), arity}; }, d);
}

}  // namespace detail

// Kaleidoscope random k-uniform hypergraph truncated to d relations: R_n holds
// on a k-set iff bit n of the value attached to that set is 1.
inline AhkSampler kaleidoscope_hypergraph(int k, int d) {
  if (k < 1 || d < 1) throw std::invalid_argument("kaleidoscope needs k >= 1 and d >= 1");
  AhkSampler s;
  s.spec = "kaleidoscope:k=" + std::to_string(k) + ",d=" + std::to_string(d);
  s.sig = detail::indexed(k == 1 ? "P" : "R", static_cast<std::size_t>(d), k);
  s.atom = [](std::size_t sym, const std::vector<int>& args, const XiFamily& xi) {
    if (!all_distinct(args)) return false;
    UniformBits bits(xi(support_mask(args)));
    return bits.bit(sym);
  };
  return s;
}

// d-bit prefix of a vertex value, most significant bit first.
inline std::uint64_t max_graph_prefix(double u, int d) { return detail::bits53(u) >> (53 - d); }

// Colour n of an edge whose endpoints carry prefixes a and b.
inline bool max_graph_colour(std::uint64_t a, std::uint64_t b, int d, int n) {
  return ((std::max(a, b) >> (d - 1 - n)) & 1ULL) != 0;
}

// Max random graph: vertex i carries the d-bit prefix of its value; the edge
// colours of {i,j} are the lexicographic max of the two prefixes.
inline AhkSampler max_graph(int d) {
  if (d < 1 || d > 53) throw std::invalid_argument("max graph depth must lie in 1..53");
  AhkSampler s;
  s.spec = "maxgraph:d=" + std::to_string(d);
  s.sig = detail::indexed("R", static_cast<std::size_t>(d), 2);
  s.atom = [d](std::size_t sym, const std::vector<int>& args, const XiFamily& xi) {
    if (args[0] == args[1]) return false;
    auto prefix = [&](int p) { return max_graph_prefix(xi(detail::singleton(p)), d); };
    return max_graph_colour(prefix(args[0]), prefix(args[1]), d, static_cast<int>(sym));
  };
  return s;
}

enum class Norm { Euclidean, Sup };

struct GeometricConfig {
  int dim{2};
  Norm norm{Norm::Euclidean};
  double p{0.5};
  // Test hook: overrides the point drawn from a vertex value.
  std::function<std::vector<double>(double)> point_of;
};

inline std::vector<double> geometric_point(double u, int dim) {
  Stream st(detail::bits53(u) ^ 0x5851f42d4c957f2dULL);
  std::vector<double> x(dim);
  for (auto& c : x) c = 2.0 * st.uniform();
  return x;
}

inline double distance(const std::vector<double>& a, const std::vector<double>& b, Norm norm) {
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double t = std::abs(a[i] - b[i]);
    acc = norm == Norm::Sup ? std::max(acc, t) : acc + t * t;
  }
  return norm == Norm::Sup ? acc : std::sqrt(acc);
}

// Random geometric graph on [0,2]^dim: edge iff distance < 1 and the pair's coin is below p.
inline AhkSampler geometric_graph(GeometricConfig cfg) {
  if (!(cfg.p > 0 && cfg.p < 1)) throw std::invalid_argument("edge probability must lie in (0,1)");
  if (cfg.dim < 1) throw std::invalid_argument("dimension must be positive");
  AhkSampler s;
  std::ostringstream o;
  o << "geometric:dim=" << cfg.dim << ",norm=" << (cfg.norm == Norm::Sup ? "sup" : "euclidean") << ",p=" << cfg.p;
  s.spec = o.str();
  s.sig = Signature({{"R", 2}});
  s.atom = [cfg](std::size_t, const std::vector<int>& args, const XiFamily& xi) {
    if (args[0] == args[1]) return false;
    auto pt = [&](int p) {
      double u = xi(detail::singleton(p));
      return cfg.point_of ? cfg.point_of(u) : geometric_point(u, cfg.dim);
    };
    if (!(distance(pt(args[0]), pt(args[1]), cfg.norm) < 1.0)) return false;
    return xi(detail::pair_mask(args[0], args[1])) < cfg.p;
  };
  return s;
}

inline AhkSampler geometric_graph(int dim, Norm norm, double p) {
  GeometricConfig cfg;
  cfg.dim = dim;
  cfg.norm = norm;
  cfg.p = p;
  return geometric_graph(cfg);
}

// Number of classes in the truncated blow-up: enough distinct nonzero d-bit
// labels, capped at 64. The last class absorbs the geometric tail.
inline int blowup_classes(int d) { return d >= 7 ? 64 : (1 << d) - 1; }

inline int geometric_class(double u, int classes) {
  UniformBits b(u);
  return static_cast<int>(b.run_of_ones(0, static_cast<std::size_t>(classes - 1)));
}

// Exact probability of class c among `classes`.
inline double class_probability(int c, int classes) {
  if (c < classes - 1) return std::ldexp(1.0, -(c + 1));
  return std::ldexp(1.0, -(classes - 1));
}

// Collision constant sum_c q_c^2 of the truncated class law.
inline double blowup_collision(int d) {
  int K = blowup_classes(d);
  double s = 0;
  for (int c = 0; c < K; ++c) s += class_probability(c, K) * class_probability(c, K);
  return s;
}

// Blow-up control: an equivalence relation E with geometric class sizes and
// unary predicates P_n coding the class label c+1 in binary.
inline AhkSampler blowup_control(int d) {
  if (d < 1) throw std::invalid_argument("blow-up depth must be positive");
  AhkSampler s;
  s.spec = "blowup:d=" + std::to_string(d);
  s.sig.add({"E", 2});
  for (int n = 0; n < d; ++n) s.sig.add({"P" + std::to_string(n), 1});
  const int K = blowup_classes(d);
  s.atom = [K](std::size_t sym, const std::vector<int>& args, const XiFamily& xi) {
    auto cls = [&](int p) { return geometric_class(xi(detail::singleton(p)), K); };
    if (sym == 0) return args[0] == args[1] || cls(args[0]) == cls(args[1]);
    std::uint64_t label = static_cast<std::uint64_t>(cls(args[0])) + 1;
    return ((label >> (sym - 1)) & 1ULL) != 0;
  };
  return s;
}

// Directed graph coding the kaleidoscope predicate: the loop coin splits O
// from P; O elements take a ladder class (d classes, tail folded into the
// last) preordered by index; P elements point at the classes in a d-bit set.
inline AhkSampler kaleidoscope_digraph(int d) {
  if (d < 1 || d > 52) throw std::invalid_argument("digraph depth must lie in 1..52");
  AhkSampler s;
  s.spec = "digraph:d=" + std::to_string(d);
  s.sig = Signature({{"R", 2}});
  s.atom = [d](std::size_t, const std::vector<int>& args, const XiFamily& xi) {
    UniformBits x(xi(detail::singleton(args[0])));
    bool x_in_o = x.bit(0);
    if (args[0] == args[1]) return x_in_o;
    UniformBits y(xi(detail::singleton(args[1])));
    if (!y.bit(0)) return false;
    int cy = static_cast<int>(y.run_of_ones(1, static_cast<std::size_t>(d - 1)));
    if (x_in_o) return static_cast<int>(x.run_of_ones(1, static_cast<std::size_t>(d - 1))) <= cy;
    return x.bit(1 + static_cast<std::size_t>(cy));
  };
  return s;
}

// Ladder class of an O element in the digraph (for tests).
inline int digraph_class(double u, int d) {
  UniformBits b(u);
  return static_cast<int>(b.run_of_ones(1, static_cast<std::size_t>(d - 1)));
}

inline std::string bipartite_name(int i, int j) { return "R" + std::to_string(i) + "_" + std::to_string(j); }

// Per-pair label and run length of the bipartite construction; k < 0 means infinite.
struct BipartiteDraw {
  int label{0};
  long k{0};
};

inline BipartiteDraw bipartite_draw(double pair_value, bool label_in_set, int i_depth, int j_depth) {
  UniformBits b(pair_value);
  BipartiteDraw out;
  std::size_t cap = static_cast<std::size_t>(i_depth);
  std::size_t i = b.run_of_ones(0, cap);
  out.label = static_cast<int>(i);
  if (i >= cap) return out;
  std::size_t pos = i + 1;
  std::size_t run_cap = static_cast<std::size_t>(j_depth);
  if (label_in_set) {
    if (b.bit(pos)) {
      out.k = -1;
      return out;
    }
    ++pos;
  }
  out.k = 1 + static_cast<long>(b.run_of_ones(pos, run_cap));
  return out;
}

// Kaleidoscope-like bipartite graph: P splits the vertices; each P-to-nonP
// pair takes a geometric label i and a run length k, with the infinite run
// available only when i lies in the source's set A_x.
inline AhkSampler bipartite_labels(int i_depth, int j_depth) {
  if (i_depth < 1 || j_depth < 1 || i_depth > 52) throw std::invalid_argument("bipartite depths out of range");
  AhkSampler s;
  s.spec = "bipartite:i=" + std::to_string(i_depth) + ",j=" + std::to_string(j_depth);
  s.sig.add({"P", 1});
  for (int i = 0; i < i_depth; ++i)
    for (int j = 0; j < j_depth; ++j) s.sig.add({bipartite_name(i, j), 2});
  s.atom = [i_depth, j_depth](std::size_t sym, const std::vector<int>& args, const XiFamily& xi) {
    if (sym == 0) return UniformBits(xi(detail::singleton(args[0]))).bit(0);
    if (args[0] == args[1]) return false;
    UniformBits x(xi(detail::singleton(args[0])));
    UniformBits y(xi(detail::singleton(args[1])));
    if (!x.bit(0) || y.bit(0)) return false;
    int want_i = static_cast<int>((sym - 1) / static_cast<std::size_t>(j_depth));
    int want_j = static_cast<int>((sym - 1) % static_cast<std::size_t>(j_depth));
    double pv = xi(detail::pair_mask(args[0], args[1]));
    int label = static_cast<int>(UniformBits(pv).run_of_ones(0, static_cast<std::size_t>(i_depth)));
    if (label != want_i) return false;
    auto dr = bipartite_draw(pv, x.bit(1 + static_cast<std::size_t>(label)), i_depth, j_depth);
    return dr.k < 0 || want_j < dr.k;
  };
  return s;
}

// Probability that the whole column R^i_j, j < J, holds given i in A_x.
inline double bipartite_full_column(int j_depth) { return 0.5 + std::ldexp(1.0, -j_depth); }

// Negative fixture: reads the value indexed by the empty set to choose between
// two Erdos-Renyi rates.
inline AhkSampler mixture_control(double p1, double p2, bool allow_equal = false) {
  if (!(p1 > 0 && p1 < 1 && p2 > 0 && p2 < 1)) throw std::invalid_argument("mixture rates must lie in (0,1)");
  if (p1 == p2 && !allow_equal) throw std::invalid_argument("mixture rates must differ");
  AhkSampler s;
  std::ostringstream o;
  o << "mixture:p1=" << p1 << ",p2=" << p2;
  s.spec = o.str();
  s.sig = Signature({{"R", 2}});
  s.reads_empty_set = true;
  s.atom = [p1, p2](std::size_t, const std::vector<int>& args, const XiFamily& xi) {
    if (args[0] == args[1]) return false;
    double p = xi(0) < 0.5 ? p1 : p2;
    return xi(detail::pair_mask(args[0], args[1])) < p;
  };
  return s;
}

// Negative fixture: edge rate depends on the raw order of the two positions.
inline AhkSampler broken_raw_index() {
  AhkSampler s;
  s.spec = "broken-raw";
  s.sig = Signature({{"R", 2}});
  s.atom = [](std::size_t, const std::vector<int>& args, const XiFamily& xi) {
    if (args[0] == args[1]) return false;
    return xi(detail::pair_mask(args[0], args[1])) < (args[0] < args[1] ? 0.8 : 0.2);
  };
  return s;
}

// Negative fixture: a unary fact reads the value of the whole tuple.
inline AhkSampler broken_superset() {
  AhkSampler s;
  s.spec = "broken-superset";
  s.sig = Signature({{"P", 1}});
  s.atom = [](std::size_t, const std::vector<int>&, const XiFamily& xi) {
    return xi(static_cast<std::uint32_t>((1u << xi.width()) - 1)) < 0.5;
  };
  return s;
}

// Fixture: every relation empty.
inline AhkSampler constant_empty() {
  AhkSampler s;
  s.spec = "constant";
  s.sig = Signature({{"R", 2}});
  s.atom = [](std::size_t, const std::vector<int>&, const XiFamily&) { return false; };
  return s;
}

// Parse `name:key=value,...`.
inline std::pair<std::string, std::map<std::string, std::string>> parse_spec(const std::string& spec) {
  auto colon = spec.find(':');
  std::string name = spec.substr(0, colon);
  std::map<std::string, std::string> kv;
  if (colon != std::string::npos) {
    std::stringstream ss(spec.substr(colon + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      auto eq = item.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("malformed sampler parameter: " + item);
      kv[item.substr(0, eq)] = item.substr(eq + 1);
    }
  }
  return {name, kv};
}

inline AhkSampler make_sampler(const std::string& spec) {
  auto [name, kv] = parse_spec(spec);
  auto num = [&](const std::string& key, double dflt) {
    auto it = kv.find(key);
    return it == kv.end() ? dflt : std::stod(it->second);
  };
  auto integer = [&](const std::string& key, int dflt) {
    auto it = kv.find(key);
    return it == kv.end() ? dflt : std::stoi(it->second);
  };
  if (name == "kaleidoscope") return kaleidoscope_hypergraph(integer("k", 2), integer("d", 8));
  if (name == "maxgraph") return max_graph(integer("d", 16));
  if (name == "geometric") {
    std::string norm = kv.count("norm") ? kv["norm"] : "euclidean";
    if (norm != "euclidean" && norm != "sup") throw std::invalid_argument("unknown norm " + norm);
    return geometric_graph(integer("dim", 2), norm == "sup" ? Norm::Sup : Norm::Euclidean, num("p", 0.5));
  }
  if (name == "blowup") return blowup_control(integer("d", 4));
  if (name == "digraph") return kaleidoscope_digraph(integer("d", 4));
  if (name == "bipartite") return bipartite_labels(integer("i", 4), integer("j", 4));
  if (name == "mixture") return mixture_control(num("p1", 0.1), num("p2", 0.9), integer("equal", 0) != 0);
  if (name == "broken-raw") return broken_raw_index();
  if (name == "broken-superset") return broken_superset();
  if (name == "constant") return constant_empty();
  throw std::invalid_argument("unknown sampler " + name);
}

// Shipped samplers expected to be coherent and dissociated.
inline std::vector<AhkSampler> gallery_samplers() {
  return {kaleidoscope_hypergraph(1, 3), kaleidoscope_hypergraph(2, 8), kaleidoscope_hypergraph(3, 4),
          max_graph(16),                 geometric_graph(2, Norm::Euclidean, 0.5),
          geometric_graph(3, Norm::Sup, 0.7),
          blowup_control(4),             kaleidoscope_digraph(6),
          bipartite_labels(4, 4)};
}

}  // namespace ergo
