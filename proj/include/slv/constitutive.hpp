#pragma once

#include "slv/quadrature.hpp"
#include "slv/roots.hpp"
#include "slv/tensors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

namespace slv {

/// Model constants of the constitutive law.
///
/// `n` is the regularisation index; std::nullopt stands for n = infinity,
/// i.e. the unregularised map F.
struct ConstitutiveParams {
  double a = 1.0;
  double alpha = 1.0;
  std::optional<long> n;

  bool regularised() const { return n.has_value(); }

  void validate() const {
    if (!(a > 0.0) || !std::isfinite(a)) throw std::invalid_argument("a must be positive and finite");
    if (!(alpha > 0.0) || !std::isfinite(alpha))
      throw std::invalid_argument("alpha must be positive and finite");
    if (n && *n < 1) throw std::invalid_argument("n must be >= 1 (or infinite)");
  }

  friend bool operator==(const ConstitutiveParams&, const ConstitutiveParams&) = default;
};

/// Raised when an unregularised inverse is evaluated at or beyond the strain
/// limit |E| >= 1/alpha.
class SaturationError : public std::domain_error {
 public:
  explicit SaturationError(const std::string& what) : std::domain_error(what) {}
};

/// Radial profile g(s) = s * phi(s) of an isotropic map T -> phi(|T|) T.
///
/// With a finite regularisation index this is the profile of F_n,
///   phi(s) = (1 + s^a)^(-1/a) + 1 / (n (1 + s^(1-1/n))),
/// and without one it is the profile f of F. phi is decreasing, g is
/// increasing and concave.
template <typename Scalar = double>
class RadialProfile {
 public:
  RadialProfile(Scalar a, std::optional<long> n) : a_(a), n_(n) {
    if (n_) {
      inv_n_ = Scalar(1) / Scalar(*n_);
      b_ = Scalar(1) - inv_n_;
    }
  }
  explicit RadialProfile(const ConstitutiveParams& p) : RadialProfile(Scalar(p.a), p.n) {}

  bool regularised() const { return n_.has_value(); }

  /// (1 + s^a)^(-1/a)
  Scalar bounded_scale(Scalar s) const {
    using std::exp;
    using std::hypot;
    using std::log;
    using std::log1p;
    if (s == Scalar(0)) return Scalar(1);
    if (a_ == Scalar(1)) return Scalar(1) / (Scalar(1) + s);
    if (a_ == Scalar(2)) return Scalar(1) / hypot(Scalar(1), s);
    const Scalar ls = log(s);
    // Above s = 1 factor out s so the log1p argument stays small.
    if (s > Scalar(1)) return exp(-log1p(exp(-a_ * ls)) / a_) / s;
    return exp(-log1p(exp(a_ * ls)) / a_);
  }
  /// d/ds [s (1 + s^a)^(-1/a)] = (1 + s^a)^(-1 - 1/a)
  Scalar bounded_slope(Scalar s) const {
    using std::exp;
    using std::hypot;
    using std::log;
    using std::log1p;
    if (s == Scalar(0)) return Scalar(1);
    if (a_ == Scalar(1)) return Scalar(1) / ((Scalar(1) + s) * (Scalar(1) + s));
    if (a_ == Scalar(2)) {
      const Scalar r = Scalar(1) / hypot(Scalar(1), s);
      return r * r * r;
    }
    const Scalar ls = log(s);
    const Scalar e = Scalar(1) + Scalar(1) / a_;
    if (s > Scalar(1)) return exp(-e * log1p(exp(-a_ * ls))) * exp(-(a_ + Scalar(1)) * ls);
    return exp(-e * log1p(exp(a_ * ls)));
  }

  /// s^(1-1/n), with 0^0 = 1 (n = 1) and the s = 0 branch short-circuited.
  Scalar reg_power(Scalar s) const {
    using std::exp;
    using std::log;
    if (b_ == Scalar(0)) return Scalar(1);
    if (s == Scalar(0)) return Scalar(0);
    return exp(b_ * log(s));
  }
  Scalar reg_scale(Scalar s) const {
    if (!n_) return Scalar(0);
    return inv_n_ / (Scalar(1) + reg_power(s));
  }
  /// d/ds [s / (n (1 + s^b))] = (1 + s^b / n) / (n (1 + s^b)^2)
  Scalar reg_slope(Scalar s) const {
    if (!n_) return Scalar(0);
    const Scalar p = reg_power(s);
    return inv_n_ * (Scalar(1) + p * inv_n_) / ((Scalar(1) + p) * (Scalar(1) + p));
  }

  Scalar phi(Scalar s) const { return bounded_scale(s) + reg_scale(s); }
  Scalar value(Scalar s) const { return s * phi(s); }
  Scalar slope(Scalar s) const { return bounded_slope(s) + reg_slope(s); }

  /// value(s) and slope(s) in one pass, sharing s^(1-1/n).
  void value_and_slope(Scalar s, Scalar& v, Scalar& d) const {
    Scalar rs = Scalar(0);
    Scalar rd = Scalar(0);
    if (n_) {
      const Scalar p = reg_power(s);
      const Scalar q = Scalar(1) / (Scalar(1) + p);
      rs = inv_n_ * q;
      rd = inv_n_ * (Scalar(1) + p * inv_n_) * q * q;
    }
    v = s * (bounded_scale(s) + rs);
    d = bounded_slope(s) + rd;
  }

  /// Solves value(s) = y for s >= 0. Requires a regularised profile or y < 1.
  Scalar invert(Scalar y) const {
    using std::abs;
    if (!(y >= Scalar(0)) || !std::isfinite(double(y)))
      throw std::domain_error("radial inverse needs a finite nonnegative target");
    if (y == Scalar(0)) return Scalar(0);
    if (!n_) {
      if (y >= Scalar(1)) throw SaturationError("|E| >= 1: outside the range of F");
      return unregularised_inverse(y);
    }
    // phi is decreasing, so value(y / phi(0)) <= y.
    const Scalar lo = y / phi(Scalar(0));
    Scalar hi = lo > Scalar(0) ? Scalar(2) * lo : y;
    while (value(hi) < y) {
      hi *= Scalar(4);
      if (!std::isfinite(double(hi)))
        throw std::domain_error("radial inverse: no finite bracket (target too large for n)");
    }
    const double tol = 1e-13;
    auto fdf = [&](double s, double& f, double& df) {
      Scalar v;
      Scalar d;
      value_and_slope(Scalar(s), v, d);
      f = double(v - y);
      df = double(d);
    };
    const auto r = roots::safeguarded_newton(fdf, {double(lo), double(hi)}, double(lo),
                                             tol * double(y) * 1e-3, tol);
    if (!r.converged) throw std::runtime_error("radial inverse did not converge");
    return Scalar(r.x);
  }

  /// Inverse of the bounded profile f: y (1 - y^a)^(-1/a), for 0 <= y < 1.
  Scalar unregularised_inverse(Scalar y) const {
    using std::exp;
    using std::expm1;
    using std::log;
    if (y == Scalar(0)) return Scalar(0);
    const Scalar one_minus = -expm1(a_ * log(y));
    return y * exp(-log(one_minus) / a_);
  }

  Scalar a() const { return a_; }
  std::optional<long> n() const { return n_; }

 private:
  Scalar a_;
  std::optional<long> n_;
  Scalar inv_n_ = Scalar(0);
  Scalar b_ = Scalar(1);
};

/// f(s) = s (1 + s^a)^(-1/a), the radial profile of F. Maps [0, inf) onto [0, 1).
inline double profile_f(double s, const ConstitutiveParams& p) {
  if (!(s >= 0.0)) throw std::domain_error("profile_f: s must be nonnegative");
  return RadialProfile<double>(p.a, std::nullopt).value(s);
}

namespace detail {
template <typename Scalar, int Dim>
SymTensor<Scalar, Dim> rescale_direction(const SymTensor<Scalar, Dim>& e, Scalar from_norm,
                                         Scalar to_norm) {
  if (from_norm == Scalar(0)) return SymTensor<Scalar, Dim>::Zero();
  return e * (to_norm / from_norm);
}
}  // namespace detail

/// F(T) = (1 + |T|^a)^(-1/a) T. Always |F(T)| < 1.
template <typename Scalar, int Dim>
SymTensor<Scalar, Dim> apply_F(const SymTensor<Scalar, Dim>& t, const ConstitutiveParams& p) {
  const RadialProfile<Scalar> prof(Scalar(p.a), std::nullopt);
  return t * prof.bounded_scale(frobenius(t));
}

/// F_n(T) = F(T) + T / (n (1 + |T|^(1 - 1/n))). Needs a finite n.
template <typename Scalar, int Dim>
SymTensor<Scalar, Dim> apply_Fn(const SymTensor<Scalar, Dim>& t, const ConstitutiveParams& p) {
  if (!p.n) throw std::invalid_argument("apply_Fn needs a finite regularisation index");
  const RadialProfile<Scalar> prof(p);
  return t * prof.phi(frobenius(t));
}

/// Unique T with F_n(T) = E, by radial reduction: |T| solves the scalar
/// equation f_n(s) = |E| and T is parallel to E.
template <typename Scalar, int Dim>
SymTensor<Scalar, Dim> invert_Fn(const SymTensor<Scalar, Dim>& e, const ConstitutiveParams& p) {
  if (!p.n) throw std::invalid_argument("invert_Fn needs a finite regularisation index");
  if (!e.allFinite()) throw std::domain_error("invert_Fn: non-finite input");
  const RadialProfile<Scalar> prof(p);
  const Scalar y = frobenius(e);
  return detail::rescale_direction(e, y, prof.invert(y));
}

/// F^{-1}(E) = E (1 - |E|^a)^(-1/a); throws SaturationError when |E| >= 1.
template <typename Scalar, int Dim>
SymTensor<Scalar, Dim> invert_F(const SymTensor<Scalar, Dim>& e, const ConstitutiveParams& p) {
  const Scalar y = frobenius(e);
  if (!(y < Scalar(1)))
    throw SaturationError("invert_F: |E| = " + std::to_string(double(y)) + " is not below 1");
  const RadialProfile<Scalar> prof(Scalar(p.a), std::nullopt);
  return detail::rescale_direction(e, y, prof.unregularised_inverse(y));
}

/// F_alpha^{-1}(E) = alpha E (1 - alpha^a |E|^a)^(-1/a), where F_alpha = F / alpha.
/// Throws SaturationError when |E| >= 1/alpha.
template <typename Scalar, int Dim>
SymTensor<Scalar, Dim> invert_F_alpha(const SymTensor<Scalar, Dim>& e,
                                      const ConstitutiveParams& p) {
  const Scalar y = frobenius(e) * Scalar(p.alpha);
  if (!(y < Scalar(1)))
    throw SaturationError("invert_F_alpha: alpha |E| = " + std::to_string(double(y)) +
                          " is not below 1");
  const RadialProfile<Scalar> prof(Scalar(p.a), std::nullopt);
  return detail::rescale_direction(e, frobenius(e), prof.unregularised_inverse(y));
}

/// Matrix of a linear map on symmetric tensors in Mandel coordinates.
template <typename Scalar, int Dim>
using SymOperator = Eigen::Matrix<Scalar, kSymSize<Dim>, kSymSize<Dim>>;

namespace detail {
// phi I + (radial - phi) nn^T in Mandel coordinates, n = T/|T|.
template <typename Scalar, int Dim>
SymOperator<Scalar, Dim> isotropic_operator(const SymTensor<Scalar, Dim>& dir, Scalar norm,
                                            Scalar tangential, Scalar radial) {
  SymOperator<Scalar, Dim> j = SymOperator<Scalar, Dim>::Identity() * tangential;
  if (norm > Scalar(0)) {
    const auto nvec = (dir.mandel() / norm).eval();
    j += (radial - tangential) * (nvec * nvec.transpose());
  }
  return j;
}
}  // namespace detail

/// Jacobian DF_n(T) (DF(T) without a regularisation index) as a symmetric
/// operator in Mandel coordinates. Eigenvalues: phi(|T|) on the tangential
/// subspace and g'(|T|) along T, both positive.
template <typename Scalar, int Dim>
SymOperator<Scalar, Dim> jacobian_Fn(const SymTensor<Scalar, Dim>& t, const ConstitutiveParams& p) {
  const RadialProfile<Scalar> prof(p);
  const Scalar s = frobenius(t);
  return detail::isotropic_operator(t, s, prof.phi(s), prof.slope(s));
}

/// Jacobian of F_n^{-1} at S, i.e. the inverse of DF_n(F_n^{-1}(S)).
template <typename Scalar, int Dim>
SymOperator<Scalar, Dim> jacobian_inverse_Fn(const SymTensor<Scalar, Dim>& e,
                                             const ConstitutiveParams& p) {
  const RadialProfile<Scalar> prof(p);
  const Scalar y = frobenius(e);
  const Scalar s = prof.invert(y);
  return detail::isotropic_operator(e, y, Scalar(1) / prof.phi(s), Scalar(1) / prof.slope(s));
}

/// Derivative of h_n, written in the radial variable r = sqrt(t):
/// h_n'(r^2) = g_n'(r), the radial slope of F_n.
inline double h_n_integrand(double t, const ConstitutiveParams& p) {
  const RadialProfile<double> prof(p);
  return prof.slope(std::sqrt(t));
}

/// h_n(s) = int_0^s h_n'(t) dt with h_n'(|T|^2) |T| d|T| = T : dF_n(T).
/// Evaluated in the radial variable, h_n(s) = int_0^sqrt(s) 2 r g_n'(r) dr,
/// by adaptive Gauss-Kronrod quadrature to 1e-10 absolute.
inline double h_n(double s, const ConstitutiveParams& p) {
  if (!(s >= 0.0)) throw std::domain_error("h_n: s must be nonnegative");
  const RadialProfile<double> prof(p);
  return quad::integrate_geometric([&](double r) { return 2.0 * r * prof.slope(r); },
                                   std::sqrt(s), 1e-10);
}

/// int_0^s f(t) dt for the bounded profile f; closed forms for a = 1 and a = 2.
inline double bounded_profile_integral(double s, double a) {
  if (s <= 0.0) return 0.0;
  if (a == 1.0) return s - std::log1p(s);
  if (a == 2.0) return s * s / (std::sqrt(1.0 + s * s) + 1.0);
  const RadialProfile<double> prof(a, std::nullopt);
  return quad::integrate_geometric([&](double t) { return prof.value(t); }, s, 1e-12);
}

/// f_alpha(T) = (1/alpha) int_0^|T| f(t) dt, the potential of F_alpha = F / alpha.
template <int Dim>
double potential_f_alpha(const SymTensor<double, Dim>& t, const ConstitutiveParams& p) {
  return bounded_profile_integral(frobenius(t), p.a) / p.alpha;
}

/// Stored-energy density f_alpha^*(E), the convex conjugate of f_alpha.
///
/// Evaluated through the Fenchel identity
///   f_alpha^*(E) = E : F_alpha^{-1}(E) - f_alpha(F_alpha^{-1}(E)).
/// Returns +infinity when |E| >= 1/alpha.
inline double stored_energy_density_radial(double y, const ConstitutiveParams& p) {
  if (y == 0.0) return 0.0;
  if (!(y * p.alpha < 1.0)) return std::numeric_limits<double>::infinity();
  const RadialProfile<double> prof(p.a, std::nullopt);
  const double s = prof.unregularised_inverse(p.alpha * y);
  return y * s - bounded_profile_integral(s, p.a) / p.alpha;
}

template <int Dim>
double stored_energy_density(const SymTensor<double, Dim>& e, const ConstitutiveParams& p) {
  return stored_energy_density_radial(frobenius(e), p);
}

/// Slacks of min{1, 2^(1/a-1)} (1+y) <= (1+y^a)^(1/a) <= max{1, 2^(1/a-1)} (1+y).
/// Both components are nonnegative when the inequality holds.
inline std::pair<double, double> lemma1_gap(double y, double a) {
  if (!(y >= 0.0) || !(a > 0.0)) throw std::domain_error("lemma1_gap: need y >= 0 and a > 0");
  const double c = std::exp2(-1.0 + 1.0 / a);
  const double mid = std::exp(std::log1p(std::pow(y, a)) / a);
  return {mid - std::min(1.0, c) * (1.0 + y), std::max(1.0, c) * (1.0 + y) - mid};
}

/// 1 / max{1, 2^(1/a - a)} = min{1, 2^(a - 1/a)}: the monotonicity constant
/// that follows from the bound of lemma1_gap applied to f'(r) = (1 + r^a)^(-1-1/a).
inline double lemma2_constant(double a) { return std::min(1.0, std::exp2(a - 1.0 / a)); }
/// min{1, 2^(1/a - a)}: valid for a >= 1 (where it is below lemma2_constant)
/// and too large for a < 1, e.g. a = 1/2 violates it near |T| = |S| = 1.
inline double lemma2_constant_min_form(double a) { return std::min(1.0, std::exp2(1.0 / a - a)); }
/// max{1, 2^(1/a - a)}: equals 1 for a >= 1 and exceeds the best constant for a < 1.
inline double lemma2_constant_max_form(double a) { return std::max(1.0, std::exp2(1.0 / a - a)); }

/// (T - S):(F(T) - F(S)) - kappa |T - S|^2 / (1 + |T| + |S|)^(1+a).
template <int Dim>
double lemma2_gap(const SymTensor<double, Dim>& t, const SymTensor<double, Dim>& s,
                  const ConstitutiveParams& p, std::optional<double> kappa = std::nullopt) {
  const double k = kappa.value_or(lemma2_constant(p.a));
  const auto d = t - s;
  const double lhs = contract(d, apply_F(t, p) - apply_F(s, p));
  const double denom = std::pow(1.0 + frobenius(t) + frobenius(s), 1.0 + p.a);
  return lhs - k * contract(d, d) / denom;
}

}  // namespace slv
