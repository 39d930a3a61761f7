// Walks the sampler gallery: coherence, an atom's measure, a dissociation
// gap, the 2-tuple collision rate and the rootedness verdict of one sample.
#include <iomanip>
#include <iostream>
#include <numeric>

#include <ergo/ahk.hpp>
#include <ergo/gallery.hpp>
#include <ergo/stats.hpp>

using namespace ergo;

int main() {
  const std::uint64_t trials = 4000;
  std::cout << std::left << std::setw(40) << "sampler" << std::setw(10) << "coherent" << std::setw(10) << "atom"
            << std::setw(10) << "dissoc z" << std::setw(11) << "collision" << "rooted\n";
  auto samplers = gallery_samplers();
  samplers.push_back(mixture_control(0.1, 0.9));
  for (auto& smp : samplers) {
    const auto& sym = smp.sig[0];
    std::vector<int> vars(static_cast<std::size_t>(sym.arity));
    std::iota(vars.begin(), vars.end(), 0);
    auto atom = QfFormula::rel(0, vars);
    int m = std::max(1, sym.arity);
    auto coh = coherence_check(smp, 4, 2, 200, kDefaultSeed);
    auto est = estimate_measure(smp, atom, m, trials, kDefaultSeed);
    auto dis = dissociation_test(smp, atom, m, atom, m, trials, kDefaultSeed);
    auto col = collision_stat(smp, 2, trials, kDefaultSeed);
    auto root = rootedness_check(sample(smp, 20, kDefaultSeed), QfFormula::neg(QfFormula::eq(0, 1)), 2);
    std::cout << std::setw(40) << smp.spec << std::setw(10) << (coh.passed ? "yes" : "no") << std::setw(10)
              << std::setprecision(3) << est.estimate << std::setw(10) << dis.z << std::setw(11) << col.estimate
              << (root.passed ? "yes" : "no") << "\n";
  }
}
