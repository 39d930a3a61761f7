#pragma once

#include <istream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "ahk.hpp"
#include "fragment.hpp"
#include "logic.hpp"

namespace ergo {

// JSON Lines: a header record with the domain size and signature, then one
// record per positive fact in canonical order.
inline std::string to_jsonl(const FiniteStructure& m) {
  nlohmann::ordered_json head;
  head["domain_size"] = m.domain_size();
  head["signature"] = nlohmann::ordered_json::array();
  for (auto& s : m.signature().symbols()) head["signature"].push_back({{"name", s.name}, {"arity", s.arity}});
  std::string out = head.dump() + "\n";
  m.for_each_fact([&](std::size_t s, const std::vector<int>& t) {
    nlohmann::ordered_json f;
    f["rel"] = m.signature()[s].name;
    f["args"] = t;
    out += f.dump() + "\n";
  });
  return out;
}

inline FiniteStructure from_jsonl(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("missing header record");
  auto head = nlohmann::json::parse(line);
  Signature sig;
  for (auto& s : head.at("signature")) sig.add({s.at("name").get<std::string>(), s.at("arity").get<int>()});
  FiniteStructure m(head.at("domain_size").get<std::size_t>(), sig);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = nlohmann::json::parse(line);
    m.set(sig.at(f.at("rel").get<std::string>()), f.at("args").get<std::vector<int>>());
  }
  return m;
}

inline FiniteStructure from_jsonl(const std::string& text) {
  std::istringstream in(text);
  return from_jsonl(in);
}

inline std::string to_jsonl(const StatReport& r) {
  nlohmann::ordered_json j;
  j["statistic"] = r.statistic;
  j["estimate"] = r.estimate;
  j["stderr"] = r.stderr_;
  j["trials"] = r.trials;
  j["seed_hex"] = r.seed.hex();
  return j.dump() + "\n";
}

// Quantifier-free formula over a signature from an s-expression whose
// variables are named x0, x1, ... by argument position.
inline QfFormula qf_from_fragment(const Fragment& f, const Signature& sig) {
  using K = Fragment::Kind;
  auto pos = [](const std::string& v) {
    if (v.size() < 2 || v[0] != 'x' || !is_number(v.substr(1)))
      throw std::invalid_argument("variables must be named x0, x1, ...: " + v);
    return std::stoi(v.substr(1));
  };
  std::vector<int> args;
  std::vector<QfFormula> kids;
  switch (f.kind) {
    case K::Rel: {
      auto idx = sig.find(symbol_name(f));
      if (!idx) throw std::invalid_argument("unknown symbol " + symbol_name(f));
      if (sig[*idx].arity != static_cast<int>(f.vars.size())) throw std::invalid_argument("arity mismatch for " + symbol_name(f));
      for (auto& v : f.vars) args.push_back(pos(v));
      return QfFormula::rel(*idx, args);
    }
    case K::Eq:
      return QfFormula::eq(pos(f.vars[0]), pos(f.vars[1]));
    case K::Not:
      return QfFormula::neg(qf_from_fragment(f.kids[0], sig));
    case K::And:
    case K::Or:
      for (auto& k : f.kids) kids.push_back(qf_from_fragment(k, sig));
      return f.kind == K::And ? QfFormula::conj(kids) : QfFormula::disj(kids);
    default:
      throw std::invalid_argument("formula must be quantifier-free: " + to_sexpr(f));
  }
}

inline QfFormula parse_qf(const std::string& text, const Signature& sig) { return qf_from_fragment(parse_fragment(text), sig); }

}  // namespace ergo
