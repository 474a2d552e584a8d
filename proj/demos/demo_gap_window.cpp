// Gap values g_i along eta for A = diag(2, -1) and the admissible eta window
// at each smoothness order.

#include "stoman/model.hpp"

#include <cstdio>

using namespace stoman;

int main() {
  const SpectralModel m({2.0, -1.0}, {0});
  const double lip = 0.25;
  std::printf("%6s %10s %10s\n", "eta", "g_1", "g_2");
  for (double eta = -0.75; eta <= 1.76; eta += 0.25) {
    const GapReport r = check_gap(m, lip, eta, 2);
    std::printf("%6.2f %10.4f %10.4f%s\n", eta, r.per_order_values[0], r.per_order_values[1],
                r.admissible ? "" : "  (not admissible)");
  }
  for (int k = 1; k <= 3; ++k) {
    const GapReport r = check_gap(m, lip, 0.0, k);
    if (r.eta_window_lo) {
      std::printf("order %d: eta in [%.4f, %.4f], optimum %.4f\n", k, *r.eta_window_lo, *r.eta_window_hi,
                  r.optimal_eta);
    } else {
      std::printf("order %d: no admissible eta (%s)\n", k, r.failure.c_str());
    }
  }
  return 0;
}
