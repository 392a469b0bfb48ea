#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

namespace slv::roots {

struct Bracket {
  double lo;
  double hi;
};

struct RootResult {
  double x;
  int iterations;
  bool converged;
};

/// Safeguarded Newton iteration for an increasing function on [lo, hi].
///
/// `fdf(x, f, df)` evaluates g(x) and g'(x). Requires g(lo) <= 0 <= g(hi).
/// A Newton step that leaves the current bracket, or fails to halve the
/// residual interval fast enough, is replaced by bisection (geometric on
/// positive brackets wider than a factor 4). Converges when the step is
/// below abs_tol + rel_tol * |x|.
template <typename FdF>
RootResult safeguarded_newton(FdF&& fdf, Bracket br, double x0, double abs_tol, double rel_tol,
                              int max_iter = 200) {
  double lo = br.lo;
  double hi = br.hi;
  if (!(lo <= hi)) throw std::invalid_argument("safeguarded_newton: empty bracket");
  double x = (x0 >= lo && x0 <= hi) ? x0 : 0.5 * (lo + hi);
  double dx_old = hi - lo;
  double dx = dx_old;
  double f = 0.0;
  double df = 0.0;
  fdf(x, f, df);
  for (int it = 1; it <= max_iter; ++it) {
    if (f == 0.0) return {x, it, true};
    if (f < 0.0)
      lo = x;
    else
      hi = x;
    const double newton = (df > 0.0) ? x - f / df : std::numeric_limits<double>::quiet_NaN();
    const bool inside = std::isfinite(newton) && newton > lo && newton < hi;
    double x_new;
    if (!inside || std::abs(2.0 * f) > std::abs(dx_old * df)) {
      dx_old = dx;
      // Geometric midpoint when the bracket spans decades.
      x_new = (lo > 0.0 && hi > 4.0 * lo) ? std::sqrt(lo) * std::sqrt(hi) : 0.5 * (lo + hi);
      dx = x_new - x;
    } else {
      dx_old = dx;
      x_new = newton;
      dx = x_new - x;
    }
    const double tol = abs_tol + rel_tol * std::abs(x_new);
    if (std::abs(dx) <= tol || x_new == x) {
      x = x_new;
      return {x, it, true};
    }
    x = x_new;
    fdf(x, f, df);
    if (hi - lo <= abs_tol + rel_tol * std::abs(x)) return {x, it, true};
  }
  return {x, max_iter, false};
}

/// Plain bisection for an increasing function; used as an independent oracle.
template <typename F>
double bisect(F&& g, double lo, double hi, int iterations = 200) {
  for (int i = 0; i < iterations; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (g(mid) < 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace slv::roots
