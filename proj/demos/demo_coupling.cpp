// Graphs of the stable and unstable manifolds of u' = diag(1, -1) u + eps S u
// (S swaps the two coordinates) against the eigenvector slopes.

#include "stoman/perron.hpp"

#include <cmath>
#include <cstdio>

using namespace stoman;

int main() {
  const SpectralModel m({1.0, -1.0}, {0});
  const double T = 25.0, h = 1e-3;
  PerronConfig c;
  c.eta = 0.0;
  c.T_max = T;
  c.step = h;
  c.tail_tol = std::exp(-T);
  std::printf("%6s %14s %14s %14s %10s\n", "eps", "h^s slope", "h^u slope", "exact", "iters");
  for (double eps : {0.05, 0.1, 0.2, 0.3, 0.4}) {
    const auto sys = ConjugatedSystem::deterministic(m, make_linear(swap_matrix(2), eps), TimeGrid(-T, T, h));
    const PerronSolution s = solve_stable(Vector::Unit(2, 1), sys, c);
    const Vector hu = graph_unstable(Vector::Unit(2, 0), sys, c);
    const double exact = eps / (1.0 + std::sqrt(1.0 + eps * eps));
    std::printf("%6.2f %14.10f %14.10f %14.10f %10d\n", eps, s.graph_value(0), hu(1), exact, s.iterations);
  }
  return 0;
}
