#include "migepi/checks.hpp"

namespace migepi {

const std::vector<CheckInfo>& check_catalog() {
  static const std::vector<CheckInfo> catalog = {
      {"conservation_2_5", "total population mass is constant along the trajectory (relative drift)",
       1e-10, "Eq. 2.5"},
      {"convergence_2_23",
       "fitted sup-norm decay rate of N e^{-st} - M0 N* is at least the spectral gap (relative slack)",
       0.05, "Eqs. 2.23-2.24, Theorem 2.5"},
      {"mass_law_2_32", "mu-weighted mass follows M0 e^{st} (relative error)", 1e-6,
       "Eq. 2.32"},
      {"bracket_2_27", "max(r - v_e) <= s(H) <= max(r) (absolute slack)", 1e-9,
       "Eq. 2.27, Theorem 2.7(1)"},
      {"theorem_3_1", "SI: S vanishes and I tends to M0 N* (sup S / M0)", 1e-4,
       "Theorem 3.1, Eq. 3.8"},
      {"theorem_3_2", "SIR: monotone M_S and M_R, M_I(T) / M0 vanishes", 1e-4,
       "Theorem 3.2, Eq. 3.14"},
      {"theorem_3_5", "SIRE below threshold: sup I and sup R decay (final / initial)", 1e-4,
       "Theorem 3.5, Eq. 3.22, Corollary 3.6"},
      {"theorem_3_7_limits",
       "SIRE endemic state at 1e4 r* approaches (b, a) M0 N* / (a + b) (sup error / M0)", 1e-2,
       "Theorem 3.7, Eq. 3.23, Corollary 3.8"},
      {"block_reduce_2_10", "block masses of the reduced ODE match the full evolution (/ M0)",
       1e-8, "Theorem 2.3, Eq. 2.10"},
      {"nonergodic_2_6", "separable or one-way kernels reach the predicted limit (sup / M0)",
       1e-6, "Section 2.6"},
  };
  return catalog;
}

const CheckInfo* find_check(std::string_view name) {
  for (const CheckInfo& c : check_catalog()) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

}  // namespace migepi
