#pragma once

#include "slv/constitutive.hpp"
#include "slv/spectral.hpp"

namespace slv {

/// Running time integrals carried with the state so that a restart from a
/// checkpoint continues them exactly.
struct Accumulators {
  double dissipation = 0.0;    // int_0^t int T : F_n(T)
  double power = 0.0;          // int_0^t (alpha ||v||^2 + <f, v + alpha u>)
  double T_L1 = 0.0;           // int_0^t ||T||_1
  double strain_rate_pow = 0.0;  // int_0^t int |eps(v + alpha u)|^(n+1)
  double reg_L2sq = 0.0;       // int_0^t ||T / (n (1 + |T|^(1-1/n)))||_2^2
  double grad_dissipation = 0.0;  // int_0^t int |grad T|^2 / (1 + |T|)^(1+a)
  double last_grad_density = 0.0;  // integrand of grad_dissipation at step last_grad_step
  long last_grad_step = -1;        // -1 before the first evaluation

  friend bool operator==(const Accumulators&, const Accumulators&) = default;
};

/// Coefficients of u and v = du/dt at time t.
template <int Dim>
struct SolverState {
  double t = 0.0;
  SpectralField<Dim> u;
  SpectralField<Dim> v;
  long step_index = 0;
  ConstitutiveParams params;
  Accumulators acc;

  const SpectralBasis<Dim>& basis() const { return u.basis(); }
  const BasisPtr<Dim>& basis_ptr() const { return u.basis_ptr(); }

  static SolverState zero(const BasisPtr<Dim>& basis, const ConstitutiveParams& params) {
    SolverState s;
    s.u = SpectralField<Dim>(basis);
    s.v = SpectralField<Dim>(basis);
    s.params = params;
    return s;
  }
};

}  // namespace slv
