#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

namespace slv::quad {

namespace detail {
// 15-point Kronrod nodes on [0,1] (symmetric half) and weights; the 7-point
// Gauss rule uses the odd-indexed nodes.
inline constexpr std::array<double, 8> kXk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kWk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <typename F>
std::pair<double, double> gk15(F& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  const double fc = f(c);
  double kron = fc * kWk[7];
  double gauss = fc * kWg[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = h * kXk[j];
    const double f1 = f(c - dx);
    const double f2 = f(c + dx);
    kron += kWk[j] * (f1 + f2);
    if (j % 2 == 1) gauss += kWg[j / 2] * (f1 + f2);
  }
  return {kron * h, std::abs((kron - gauss) * h)};
}

// Accepts a panel when its error estimate is below the absolute budget or
// below the relative floor; the floor keeps huge-magnitude panels from
// recursing on roundoff.
template <typename F>
double adaptive(F& f, double a, double b, double whole, double err, double tol, double rel,
                int depth) {
  if (err <= tol || err <= rel * std::abs(whole) || depth <= 0 ||
      b - a <= 1e-15 * (std::abs(a) + std::abs(b)))
    return whole;
  const double m = 0.5 * (a + b);
  const auto [l, el] = gk15(f, a, m);
  const auto [r, er] = gk15(f, m, b);
  return adaptive(f, a, m, l, el, 0.5 * tol, rel, depth - 1) +
         adaptive(f, m, b, r, er, 0.5 * tol, rel, depth - 1);
}
}  // namespace detail

/// Adaptive Gauss-Kronrod (7/15) quadrature of f over [a, b] to absolute
/// tolerance `tol` (bisection refinement, error split evenly between halves).
/// Panels whose estimate is within `rel` of their own value are also accepted.
template <typename F>
double integrate(F&& f, double a, double b, double tol = 1e-10, double rel = 1e-14,
                 int max_depth = 30) {
  if (a == b) return 0.0;
  const auto [whole, err] = detail::gk15(f, a, b);
  return detail::adaptive(f, a, b, whole, err, tol, rel, max_depth);
}

/// Integral over [0, b] split into geometric panels [0,1], [1,2], [2,4], ...
/// so integrands varying on a logarithmic scale are resolved evenly.
template <typename F>
double integrate_geometric(F&& f, double b, double tol = 1e-10) {
  if (b <= 0.0) return 0.0;
  if (b <= 1.0) return integrate(f, 0.0, b, tol);
  int panels = 1;
  for (double edge = 1.0; edge < b; edge *= 2.0) ++panels;
  const double per_panel = tol / panels;
  double acc = integrate(f, 0.0, 1.0, per_panel);
  for (double lo = 1.0; lo < b; lo *= 2.0) {
    const double hi = std::min(2.0 * lo, b);
    acc += integrate(f, lo, hi, per_panel);
  }
  return acc;
}

}  // namespace slv::quad
