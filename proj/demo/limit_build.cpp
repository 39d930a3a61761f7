// Builds the kaleidoscope-predicate inverse limit, prints the exact stage
// table, then samples a small structure and reports its audit.
#include <cstdlib>
#include <iostream>
#include <numeric>

#include <ergo/limit.hpp>

using namespace ergo;

int main(int argc, char** argv) {
  int stages = argc > 1 ? std::atoi(argv[1]) : 10;
  auto b = kaleidoscope_build(kDefaultSeed);
  b.ensure(stages);
  std::cout << "k  elements  language  star          max mass      checks\n";
  for (std::size_t k = 0; k < b.stages().size(); ++k) {
    const auto& s = b.stages()[k];
    std::cout << k << "  " << s.size() << "  " << s.language.size() << "  " << rational_string(s.star) << "  "
              << rational_string(s.max_mass()) << "  " << (b.reports()[k].passed() ? "ok" : "FAIL") << "\n";
  }
  LimitMeasure mu(b);
  auto sample = sample_limit(mu, 8, stages + 2, kDefaultSeed);
  std::vector<std::size_t> types(b.theory().omitted.size());
  std::iota(types.begin(), types.end(), 0);
  auto audit = audit_limit_sample(sample.M, b.theory(), types);
  std::cout << "sampled 8 points at depth " << sample.depth << " over " << sample.M.signature().size()
            << " symbols; audit " << (audit.passed() ? "passed" : "failed") << " (" << audit.axioms.checked
            << " axioms checked)\n";
  return b.checks_passed() && audit.passed() ? 0 : 2;
}
