#pragma once

#include "slv/constitutive.hpp"
#include "slv/spectral.hpp"
#include "slv/state.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace slv {

/// One time-stamped row of monitored quantities.
struct DiagnosticsRecord {
  double t = 0.0;
  double kinetic = 0.0;
  double stored = 0.0;
  double total = 0.0;
  double dissip_cum = 0.0;
  double max_strain = 0.0;
  double strain_rate_max = 0.0;
  double T_L1 = 0.0;
  double T_L1me = 0.0;
  double T_L1pd = 0.0;
  double grad_diss_cum = 0.0;
  double accel_L2 = 0.0;

  // Not written to the CSV; used by the a priori report and the energy balance.
  long step_index = 0;
  double u_L2 = 0.0;
  double grad_u_sq = 0.0;
  double grad_v_sq = 0.0;
  double balance = 0.0;  // 1/2 ||v||^2 + alpha <v, u>
  double power_cum = 0.0;
  double T_L1_cum = 0.0;
  double strain_rate_pow_cum = 0.0;
  double reg_L2sq_cum = 0.0;
};

inline const char* csv_header() {
  return "t,kinetic,stored,total,dissip_cum,max_strain,strain_rate_max,T_L1,T_L1me,T_L1pd,"
         "grad_diss_cum,accel_L2";
}

inline std::vector<double> csv_values(const DiagnosticsRecord& r) {
  return {r.t,          r.kinetic, r.stored, r.total,  r.dissip_cum,    r.max_strain,
          r.strain_rate_max, r.T_L1, r.T_L1me, r.T_L1pd, r.grad_diss_cum, r.accel_L2};
}

struct Energy {
  double kinetic = 0.0;
  double stored = 0.0;
  double total = 0.0;
};

/// Grid quadrature of f_alpha^* over a strain field; +infinity once any node
/// reaches |E| >= 1/alpha.
template <int Dim>
double stored_energy(const SymTensorField<Dim>& eps, const ConstitutiveParams& p) {
  if (eps.size() == 0) return 0.0;
  double acc = 0.0;
  for (Eigen::Index r = 0; r < eps.size(); ++r)
    acc += stored_energy_density_radial(frobenius(eps[r]), p);
  return acc / static_cast<double>(eps.size());
}

/// Largest nodal Frobenius norm.
template <int Dim>
double max_frobenius(const SymTensorField<Dim>& t) {
  double m = 0.0;
  for (Eigen::Index r = 0; r < t.size(); ++r) m = std::max(m, frobenius(t[r]));
  return m;
}

/// Kinetic energy from Parseval and stored energy by grid quadrature of
/// f_alpha^* over eps(u).
template <int Dim>
Energy energy(const SolverState<Dim>& s) {
  Energy e;
  e.kinetic = 0.5 * s.v.coeffs().squaredNorm();
  e.stored = stored_energy(sym_gradient(s.u), s.params);
  e.total = e.kinetic + e.stored;
  return e;
}

/// Grid quadrature of T : F_n(T) over the unit box.
template <int Dim>
double dissipation_increment(const SymTensorField<Dim>& t, const ConstitutiveParams& p) {
  if (t.size() == 0) return 0.0;
  double acc = 0.0;
  for (Eigen::Index r = 0; r < t.size(); ++r) {
    const auto T = t[r];
    acc += contract(T, apply_Fn(T, p));
  }
  return acc / static_cast<double>(t.size());
}

/// (int |T|^r)^(1/r) by grid quadrature.
template <int Dim>
double lebesgue_norm(const SymTensorField<Dim>& t, double r) {
  if (!(r >= 1.0)) throw std::domain_error("lebesgue_norm: r must be >= 1");
  if (t.size() == 0) return 0.0;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < t.size(); ++i) acc += std::pow(frobenius(t[i]), r);
  return std::pow(acc / static_cast<double>(t.size()), 1.0 / r);
}

/// Integrability exponents for the stress in three dimensions: q = 3,
/// p = 2q, delta = a / q'.
struct ExponentReport {
  double a = 0.0;
  int dim = 0;
  bool valid = false;
  double q = 3.0;
  double q_prime = 1.5;
  double p = 6.0;
  double delta = 0.0;
  double growth_lhs = 0.0;  // 1 + 2a(q - 1)
  double growth_rhs = 0.0;  // p(1 - a)/2
  double sobolev_lhs = 0.0;  // 1/q
  double sobolev_rhs = 0.0;  // 2/p
};

inline ExponentReport theorem3_exponent(double a, int dim) {
  if (!(a > 0.0)) throw std::domain_error("theorem3_exponent: a must be positive");
  ExponentReport r;
  r.a = a;
  r.dim = dim;
  r.valid = dim == 3 && a < 2.0 / 7.0;
  r.q = 3.0;
  r.q_prime = r.q / (r.q - 1.0);
  r.p = 2.0 * r.q;
  r.delta = a / r.q_prime;
  r.growth_lhs = 1.0 + 2.0 * a * (r.q - 1.0);
  r.growth_rhs = r.p * (1.0 - a) / 2.0;
  r.sobolev_lhs = 1.0 / r.q;
  r.sobolev_rhs = 2.0 / r.p;
  if (r.valid) {
    const double eps = 8.0 * std::numeric_limits<double>::epsilon();
    if (!(r.growth_lhs <= r.growth_rhs * (1.0 + eps)) || !(r.sobolev_lhs <= r.sobolev_rhs * (1.0 + eps)))
      throw std::logic_error("theorem3_exponent: constraints fail for a valid exponent");
  }
  return r;
}

/// Pointwise stress statistics over the grid.
struct StressStats {
  double L1 = 0.0;
  double L1me = 0.0;  // int |T|^(1-a) [|T| >= 1]
  double L1pd = 0.0;  // ||T||_{1+delta}, delta = 2a/3
};

/// `radial` holds |T| per node.
inline StressStats stress_stats(const Eigen::VectorXd& radial, double a) {
  StressStats s;
  const double n = static_cast<double>(radial.size());
  if (radial.size() == 0) return s;
  const double r = 1.0 + 2.0 * a / 3.0;
  double l1 = 0.0;
  double me = 0.0;
  double pd = 0.0;
  for (Eigen::Index i = 0; i < radial.size(); ++i) {
    const double t = radial(i);
    l1 += t;
    if (t >= 1.0) me += std::pow(t, 1.0 - a);
    pd += std::pow(t, r);
  }
  s.L1 = l1 / n;
  s.L1me = me / n;
  s.L1pd = std::pow(pd / n, 1.0 / r);
  return s;
}

/// Quantities of the a priori bounds, assembled from a diagnostics table.
/// Sup entries are maxima over the rows; integral entries are the values at
/// the last row.
struct AprioriReport {
  double sup_u_L2 = 0.0;
  double sup_v_L2 = 0.0;
  double strain_rate_Lnp1 = 0.0;  // ||eps(v + alpha u)||_{L^{n+1}(Q)}
  double T_L1_Q = 0.0;
  double sup_T_L1me = 0.0;
  double sup_grad_u_sq = 0.0;
  double sup_grad_v_sq = 0.0;
  double grad_diss = 0.0;
  double sup_accel_sq = 0.0;
  double dissip = 0.0;

  static std::vector<std::string> names() {
    return {"sup_u_L2",      "sup_v_L2",      "strain_rate_Lnp1", "T_L1_Q",       "sup_T_L1me",
            "sup_grad_u_sq", "sup_grad_v_sq", "grad_diss",        "sup_accel_sq", "dissip"};
  }
  std::vector<double> values() const {
    return {sup_u_L2,      sup_v_L2,      strain_rate_Lnp1, T_L1_Q,       sup_T_L1me,
            sup_grad_u_sq, sup_grad_v_sq, grad_diss,        sup_accel_sq, dissip};
  }
};

inline AprioriReport apriori_report(const std::vector<DiagnosticsRecord>& rows,
                                    const ConstitutiveParams& p) {
  if (rows.empty()) throw std::invalid_argument("apriori_report: empty diagnostics table");
  if (!p.n) throw std::invalid_argument("apriori_report: needs a finite regularisation index");
  AprioriReport r;
  for (const auto& row : rows) {
    r.sup_u_L2 = std::max(r.sup_u_L2, row.u_L2);
    r.sup_v_L2 = std::max(r.sup_v_L2, std::sqrt(2.0 * row.kinetic));
    r.sup_T_L1me = std::max(r.sup_T_L1me, row.T_L1me);
    r.sup_grad_u_sq = std::max(r.sup_grad_u_sq, row.grad_u_sq);
    r.sup_grad_v_sq = std::max(r.sup_grad_v_sq, row.grad_v_sq);
    r.sup_accel_sq = std::max(r.sup_accel_sq, row.accel_L2 * row.accel_L2);
  }
  const auto& last = rows.back();
  r.strain_rate_Lnp1 = std::pow(last.strain_rate_pow_cum, 1.0 / (static_cast<double>(*p.n) + 1.0));
  r.T_L1_Q = last.T_L1_cum;
  r.grad_diss = last.grad_diss_cum;
  r.dissip = last.dissip_cum;
  return r;
}

/// max/min over a set of nonnegative values; 1 when all vanish, infinity when
/// only some do.
inline double spread(const std::vector<double>& xs) {
  if (xs.empty()) return 1.0;
  const double lo = *std::min_element(xs.begin(), xs.end());
  const double hi = *std::max_element(xs.begin(), xs.end());
  if (hi == 0.0) return 1.0;
  if (lo <= 0.0) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

}  // namespace slv
