#pragma once

#include "slv/constitutive.hpp"
#include "slv/diagnostics.hpp"
#include "slv/spectral.hpp"
#include "slv/state.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace slv {

/// A step that could not be completed at the requested size.
class StepFailure : public std::runtime_error {
 public:
  StepFailure(const std::string& what, double suggested_dt)
      : std::runtime_error(what), suggested_dt_(suggested_dt) {}
  double suggested_dt() const { return suggested_dt_; }

 private:
  double suggested_dt_;
};

enum class Method { rk4, midpoint };

inline std::string to_string(Method m) { return m == Method::rk4 ? "rk4" : "midpoint"; }

inline Method parse_method(const std::string& s) {
  if (s == "rk4") return Method::rk4;
  if (s == "midpoint") return Method::midpoint;
  throw std::invalid_argument("unknown method '" + s + "' (expected rk4 or midpoint)");
}

/// Body force f(t, x). Every kind is zero-mean because V_m has no k = 0 mode.
template <int Dim>
struct ForceSpec {
  enum class Kind { zero, single_mode, manufactured, tabulated };
  using Mode = std::array<int, Dim>;
  using Vec = Eigen::Matrix<double, Dim, 1>;
  using Generator = std::function<SpectralField<Dim>(double, const BasisPtr<Dim>&)>;

  Kind kind = Kind::zero;
  Mode mode{};
  Vec amplitude = Vec::Zero();
  Generator generator;
  std::vector<double> times;
  std::vector<SpectralField<Dim>> table;

  static ForceSpec zero() { return {}; }

  /// f = amplitude sin(2 pi k.x), constant in time.
  static ForceSpec single_mode(const Mode& k, const Vec& amplitude) {
    ForceSpec f;
    f.kind = Kind::single_mode;
    f.mode = k;
    f.amplitude = amplitude;
    return f;
  }

  static ForceSpec manufactured(Generator g) {
    if (!g) throw std::invalid_argument("manufactured force needs a generator");
    ForceSpec f;
    f.kind = Kind::manufactured;
    f.generator = std::move(g);
    return f;
  }

  /// Piecewise-linear in t between table entries, constant outside.
  static ForceSpec tabulated(std::vector<double> times, std::vector<SpectralField<Dim>> table) {
    if (times.empty() || times.size() != table.size())
      throw std::invalid_argument("tabulated force needs matching nonempty times and fields");
    for (std::size_t i = 1; i < times.size(); ++i)
      if (!(times[i] > times[i - 1])) throw std::invalid_argument("tabulated force times must increase");
    ForceSpec f;
    f.kind = Kind::tabulated;
    f.times = std::move(times);
    f.table = std::move(table);
    return f;
  }

  bool vanishes() const { return kind == Kind::zero; }

  /// P^m f(t) on `basis`.
  SpectralField<Dim> at(double t, const BasisPtr<Dim>& basis) const {
    switch (kind) {
      case Kind::zero:
        return SpectralField<Dim>(basis);
      case Kind::single_mode: {
        SpectralField<Dim> out(basis);
        Mode k = mode;
        double sign = 1.0;
        if (!SpectralBasis<Dim>::in_half_space(k)) {
          for (int& c : k) c = -c;
          sign = -1.0;
        }
        const int i = basis->mode_index(k);
        if (i >= 0) out.coeffs().row(2 * i + 1) = (sign * M_SQRT1_2) * amplitude.transpose();
        return out;
      }
      case Kind::manufactured:
        return generator(t, basis);
      case Kind::tabulated: {
        auto on_basis = [&](std::size_t i) {
          return table[i].basis_ptr() == basis ? table[i] : restrict_to(table[i], basis);
        };
        if (t <= times.front()) return on_basis(0);
        if (t >= times.back()) return on_basis(times.size() - 1);
        const auto hi = static_cast<std::size_t>(std::upper_bound(times.begin(), times.end(), t) - times.begin());
        const std::size_t lo = hi - 1;
        const double w = (t - times[lo]) / (times[hi] - times[lo]);
        return (1.0 - w) * on_basis(lo) + w * on_basis(hi);
      }
    }
    throw std::logic_error("unreachable force kind");
  }
};

/// Largest nodal |eps(f)| on the basis grid.
template <int Dim>
double max_strain_norm(const SpectralField<Dim>& f) {
  return max_frobenius(sym_gradient(f));
}

/// Projected initial data with the measured C_* = max |eps(v0 + alpha u0)|.
template <int Dim>
struct InitialData {
  SpectralField<Dim> u0;
  SpectralField<Dim> v0;
  double C_star = 0.0;
  double measured = 0.0;  // C_* before any rescaling
  double scale = 1.0;
  bool rescaled = false;
};

/// Projects (u0, v0) onto `basis`; when C_* >= 1 both fields are scaled by
/// 0.95 / C_*.
template <int Dim>
InitialData<Dim> prepare_initial_data(const SpectralField<Dim>& u0, const SpectralField<Dim>& v0,
                                      const ConstitutiveParams& params, const BasisPtr<Dim>& basis) {
  params.validate();
  InitialData<Dim> d;
  d.u0 = restrict_to(u0, basis);
  d.v0 = restrict_to(v0, basis);
  d.measured = max_strain_norm(d.v0 + params.alpha * d.u0);
  d.C_star = d.measured;
  if (d.measured >= 1.0) {
    d.scale = 0.95 / d.measured;
    d.rescaled = true;
    d.u0 *= d.scale;
    d.v0 *= d.scale;
    d.C_star = max_strain_norm(d.v0 + params.alpha * d.u0);
  }
  return d;
}

/// Seeded band-limited data: Gaussian coefficients weighted by |k|^(-decay)
/// for |k|_inf <= deg, split between u0 and v0 by `ufrac`, and scaled so that
/// max |eps(v0 + alpha u0)| = amp.
struct RandomIcSpec {
  double amp = 0.5;
  double decay = 3.0;
  int deg = 2;
  double ufrac = 0.5;

  void validate() const {
    if (!(amp >= 0.0) || !std::isfinite(amp)) throw std::invalid_argument("random ic: amp must be >= 0");
    if (!std::isfinite(decay)) throw std::invalid_argument("random ic: decay must be finite");
    if (deg < 1) throw std::invalid_argument("random ic: deg must be >= 1");
    if (!(ufrac >= 0.0 && ufrac <= 1.0)) throw std::invalid_argument("random ic: ufrac must lie in [0, 1]");
  }
  friend bool operator==(const RandomIcSpec&, const RandomIcSpec&) = default;
};

template <int Dim>
std::pair<SpectralField<Dim>, SpectralField<Dim>> random_initial_fields(const RandomIcSpec& spec,
                                                                        const BasisPtr<Dim>& basis,
                                                                        const ConstitutiveParams& params,
                                                                        std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  SpectralField<Dim> U(basis);
  SpectralField<Dim> V(basis);
  for (int i = 0; i < basis->mode_count(); ++i) {
    const auto& k = basis->mode(i);
    double k2 = 0.0;
    int kmax = 0;
    for (int a = 0; a < Dim; ++a) {
      k2 += double(k[a]) * k[a];
      kmax = std::max(kmax, std::abs(k[a]));
    }
    if (kmax > spec.deg) continue;
    const double w = std::pow(std::sqrt(k2), -spec.decay);
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < Dim; ++c) {
        U.coeffs()(2 * i + r, c) = w * normal(rng);
        V.coeffs()(2 * i + r, c) = w * normal(rng);
      }
  }
  SpectralField<Dim> u0 = spec.ufrac * U;
  SpectralField<Dim> v0 = (1.0 - spec.ufrac) * V;
  const double c1 = max_strain_norm(v0 + params.alpha * u0);
  const double s = c1 > 0.0 ? spec.amp / c1 : 0.0;
  return {s * u0, s * v0};
}

/// Right-hand side of the Galerkin system at (t, u, v) together with the
/// pointwise quantities every consumer needs.
template <int Dim>
struct RhsEval {
  SpectralField<Dim> accel;   // P^m (div T + f)
  SymTensorField<Dim> stress;  // T = F_n^{-1}(eps(v + alpha u)) on the grid
  Eigen::VectorXd stress_norm;  // |T| per node
  double dissipation = 0.0;      // int T : F_n(T)
  double power = 0.0;            // alpha ||v||^2 + <f, v + alpha u>
  double T_L1 = 0.0;
  double strain_rate_pow = 0.0;  // int |eps(v + alpha u)|^(n+1)
  double reg_L2sq = 0.0;         // ||T / (n (1 + |T|^(1-1/n)))||_2^2
  double kappa_max = 0.0;        // max nodal 1 / g_n'(|T|), the top eigenvalue of DF_n^{-1}
  double kappa_min = 0.0;        // min nodal 1 / phi_n(|T|), the bottom eigenvalue
  double strain_rate_max = 0.0;
  // DF_n^{-1} at node r is inv_phi(r) I + (inv_slope(r) - inv_phi(r)) N N with N = T / |T|.
  Eigen::VectorXd inv_phi;
  Eigen::VectorXd inv_slope;
};

template <int Dim>
RhsEval<Dim> evaluate_rhs(double t, const SpectralField<Dim>& u, const SpectralField<Dim>& v,
                          const ConstitutiveParams& params, const ForceSpec<Dim>& force) {
  if (!params.n) throw std::invalid_argument("the Galerkin system needs a finite regularisation index n");
  const RadialProfile<double> prof(params);
  const auto& basis = u.basis_ptr();
  const SpectralField<Dim> w = v + params.alpha * u;
  const auto E = sym_gradient(w);
  const Eigen::Index N = E.size();
  const double np1 = static_cast<double>(*params.n) + 1.0;

  RhsEval<Dim> ev;
  ev.stress = SymTensorField<Dim>(E.shape());
  ev.stress_norm.resize(N);
  ev.inv_phi.resize(N);
  ev.inv_slope.resize(N);
  ev.kappa_min = std::numeric_limits<double>::infinity();
  const double inv_n = 1.0 / static_cast<double>(*params.n);
  const double phi0 = prof.phi(0.0);
  for (Eigen::Index r = 0; r < N; ++r) {
    const double y = frobenius(E[r]);
    if (!std::isfinite(y)) throw StepFailure("non-finite strain rate on the grid", 0.0);
    double s = 0.0;
    double inv_phi = 1.0 / phi0;
    double inv_slope = inv_phi;
    double reg = 0.0;
    if (y > 0.0) {
      try {
        s = prof.invert(y);
      } catch (const std::domain_error& e) {
        throw StepFailure(std::string("constitutive inversion failed: ") + e.what(), 0.0);
      }
      ev.stress.values().row(r) = E.values().row(r) * (s / y);
      // value(s) = s phi(s) = y at the root.
      inv_phi = s / y;
      const double q = 1.0 / (1.0 + prof.reg_power(s));
      reg = s * inv_n * q;
      inv_slope = 1.0 / (prof.bounded_slope(s) + inv_n * (1.0 + (1.0 / q - 1.0) * inv_n) * q * q);
    }
    ev.stress_norm(r) = s;
    ev.inv_phi(r) = inv_phi;
    ev.inv_slope(r) = inv_slope;
    ev.dissipation += s * y;
    ev.T_L1 += s;
    ev.reg_L2sq += reg * reg;
    ev.strain_rate_pow += y > 0.0 ? std::exp(np1 * std::log(y)) : 0.0;
    ev.kappa_max = std::max(ev.kappa_max, inv_slope);
    ev.kappa_min = std::min(ev.kappa_min, inv_phi);
    ev.strain_rate_max = std::max(ev.strain_rate_max, y);
  }
  const double inv = 1.0 / static_cast<double>(N);
  ev.dissipation *= inv;
  ev.T_L1 *= inv;
  ev.reg_L2sq *= inv;
  ev.strain_rate_pow *= inv;

  ev.accel = divergence_sym(ev.stress, basis);
  ev.power = params.alpha * v.coeffs().squaredNorm();
  if (!force.vanishes()) {
    const auto f = force.at(t, basis);
    ev.accel += f;
    ev.power += inner(f, w);
  }
  return ev;
}

/// Acceleration of the Galerkin system at the state.
template <int Dim>
SpectralField<Dim> galerkin_rhs(const SolverState<Dim>& s, const ForceSpec<Dim>& force) {
  return evaluate_rhs(s.t, s.u, s.v, s.params, force).accel;
}

namespace detail {

template <int Dim>
void accumulate(Accumulators& acc, double w, const RhsEval<Dim>& ev) {
  acc.dissipation += w * ev.dissipation;
  acc.power += w * ev.power;
  acc.T_L1 += w * ev.T_L1;
  acc.strain_rate_pow += w * ev.strain_rate_pow;
  acc.reg_L2sq += w * ev.reg_L2sq;
}

template <int Dim>
void check_finite(const SolverState<Dim>& s, double dt) {
  if (!s.u.coeffs().allFinite() || !s.v.coeffs().allFinite())
    throw StepFailure("state became non-finite", 0.5 * dt);
}

/// Largest rk4 step allowed by the guard dt <= 0.5 / (kappa_max (2 pi m)^2).
inline double rk4_guard(double kappa_max, int m) {
  const double w = 2.0 * M_PI * m;
  return 0.5 / (kappa_max * w * w);
}

template <int Dim>
void rk4(SolverState<Dim>& s, double dt, const ForceSpec<Dim>& f, const RhsEval<Dim>* first) {
  const double t0 = s.t;
  const RhsEval<Dim> k1 = first ? *first : evaluate_rhs(t0, s.u, s.v, s.params, f);
  const double limit = rk4_guard(k1.kappa_max, s.basis().m());
  if (dt > limit * (1.0 + 1e-12))
    throw StepFailure("dt = " + std::to_string(dt) + " exceeds the rk4 stability guard " +
                          std::to_string(limit),
                      limit);
  const double h2 = 0.5 * dt;
  const SpectralField<Dim> u2 = s.u + h2 * s.v;
  const SpectralField<Dim> v2 = s.v + h2 * k1.accel;
  const RhsEval<Dim> k2 = evaluate_rhs(t0 + h2, u2, v2, s.params, f);
  const SpectralField<Dim> u3 = s.u + h2 * v2;
  const SpectralField<Dim> v3 = s.v + h2 * k2.accel;
  const RhsEval<Dim> k3 = evaluate_rhs(t0 + h2, u3, v3, s.params, f);
  const SpectralField<Dim> u4 = s.u + dt * v3;
  const SpectralField<Dim> v4 = s.v + dt * k3.accel;
  const RhsEval<Dim> k4 = evaluate_rhs(t0 + dt, u4, v4, s.params, f);

  const double w = dt / 6.0;
  s.u.coeffs() += w * (s.v.coeffs() + 2.0 * v2.coeffs() + 2.0 * v3.coeffs() + v4.coeffs());
  s.v.coeffs() +=
      w * (k1.accel.coeffs() + 2.0 * k2.accel.coeffs() + 2.0 * k3.accel.coeffs() + k4.accel.coeffs());
  accumulate(s.acc, w, k1);
  accumulate(s.acc, 2.0 * w, k2);
  accumulate(s.acc, 2.0 * w, k3);
  accumulate(s.acc, w, k4);
  s.t = t0 + dt;
  check_finite(s, dt);
}

/// Applies (I + c (2 pi)^2 (|k|^2 I + k k^T) / 2)^{-1} mode by mode.
template <int Dim>
void apply_preconditioner(SpectralField<Dim>& r, double c) {
  const auto& b = r.basis();
  const double cw = c * 4.0 * M_PI * M_PI;
  for (int i = 0; i < b.mode_count(); ++i) {
    Eigen::Matrix<double, Dim, 1> k;
    for (int a = 0; a < Dim; ++a) k(a) = b.mode(i)[a];
    const double k2 = k.squaredNorm();
    const double beta = 1.0 + 0.5 * cw * k2;
    const double gamma = 0.5 * cw;
    for (int row = 2 * i; row <= 2 * i + 1; ++row) {
      const Eigen::Matrix<double, Dim, 1> x = r.coeffs().row(row).transpose();
      const Eigen::Matrix<double, Dim, 1> y = (x - (gamma * k.dot(x) / (beta + gamma * k2)) * k) / beta;
      r.coeffs().row(row) = y.transpose();
    }
  }
}

/// Applies the linearised acceleration operator w -> P^m div(DF_n^{-1} eps(w))
/// at the evaluation point.
template <int Dim>
SpectralField<Dim> linearised_accel(const RhsEval<Dim>& ev, const SpectralField<Dim>& w) {
  using Tensor = SymTensor<double, Dim>;
  auto X = sym_gradient(w);
  for (Eigen::Index r = 0; r < X.size(); ++r) {
    const Tensor x = X[r];
    Tensor y = ev.inv_phi(r) * x;
    const double s = ev.stress_norm(r);
    if (s > 0.0) {
      const Tensor nhat = ev.stress[r] / s;
      y += ((ev.inv_slope(r) - ev.inv_phi(r)) * contract(nhat, x)) * nhat;
    }
    X.set(r, y);
  }
  return divergence_sym(X, w.basis_ptr());
}

constexpr double kMidpointTolerance = 1e-12;
constexpr int kMidpointSweeps = 50;

/// Implicit midpoint in the midpoint velocity V = (v0 + v1) / 2:
///   V = v0 + dt/2 a(t + dt/2, u0 + dt/2 V, V),  u1 = u0 + dt V,  v1 = 2V - v0.
/// Solved by Newton; the Newton matrix I - dt/2 (1 + alpha dt/2) da/dw is
/// symmetric positive definite, so each correction comes from preconditioned
/// conjugate gradients with the Fourier-diagonal preconditioner.
template <int Dim>
void midpoint(SolverState<Dim>& s, double dt, const ForceSpec<Dim>& f, const RhsEval<Dim>* first) {
  const double t0 = s.t;
  const double h2 = 0.5 * dt;
  const double c = h2 * (1.0 + s.params.alpha * h2);
  const RhsEval<Dim> e0 = first ? *first : evaluate_rhs(t0, s.u, s.v, s.params, f);
  SpectralField<Dim> V = s.v + h2 * e0.accel;
  for (int sweep = 0; sweep < kMidpointSweeps; ++sweep) {
    const SpectralField<Dim> U = s.u + h2 * V;
    const RhsEval<Dim> ev = evaluate_rhs(t0 + h2, U, V, s.params, f);
    const SpectralField<Dim> r = V - s.v - h2 * ev.accel;
    const double scale = std::max(1.0, l2_norm(V));
    if (l2_norm(r) <= kMidpointTolerance * scale) {
      s.u.coeffs() += dt * V.coeffs();
      s.v.coeffs() = 2.0 * V.coeffs() - s.v.coeffs();
      accumulate(s.acc, dt, ev);
      s.t = t0 + dt;
      check_finite(s, dt);
      return;
    }
    // Solve J d = r with J x = x - c P^m div(DF^{-1} eps(x)).
    const double pc = c * std::sqrt(ev.kappa_min * ev.kappa_max);
    auto J = [&](const SpectralField<Dim>& x) { return x - c * linearised_accel(ev, x); };
    SpectralField<Dim> d(V.basis_ptr());
    SpectralField<Dim> res = r;
    SpectralField<Dim> z = res;
    apply_preconditioner(z, pc);
    SpectralField<Dim> dir = z;
    double rz = inner(res, z);
    const double stop = 1e-3 * std::min(1.0, l2_norm(r) / scale) * l2_norm(r);
    for (int it = 0; it < 500 && l2_norm(res) > stop; ++it) {
      const SpectralField<Dim> q = J(dir);
      const double dq = inner(dir, q);
      if (!(dq > 0.0)) break;
      const double step = rz / dq;
      d += step * dir;
      res -= step * q;
      z = res;
      apply_preconditioner(z, pc);
      const double rz_next = inner(res, z);
      dir = z + (rz_next / rz) * dir;
      rz = rz_next;
    }
    V -= d;
    if (!V.coeffs().allFinite()) break;
    if (l2_norm(d) <= 1e-3 * kMidpointTolerance * scale) break;  // stagnated above tolerance
  }
  throw StepFailure("implicit midpoint did not converge in " + std::to_string(kMidpointSweeps) +
                        " Newton sweeps; reduce dt",
                    0.5 * dt);
}

}  // namespace detail

/// Advances u, v, t and the accumulators by dt. `first`, when given, must be
/// the right-hand side at the current state and is reused as the first stage.
/// step_index is left to the caller.
template <int Dim>
void advance(SolverState<Dim>& s, double dt, const ForceSpec<Dim>& f, Method method,
             const RhsEval<Dim>* first = nullptr) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("dt must be positive and finite");
  if (method == Method::rk4)
    detail::rk4(s, dt, f, first);
  else
    detail::midpoint(s, dt, f, first);
}

/// One step of the selected method.
template <int Dim>
SolverState<Dim> step(const SolverState<Dim>& s, double dt, const ForceSpec<Dim>& f,
                      Method method = Method::rk4) {
  SolverState<Dim> out = s;
  advance(out, dt, f, method);
  ++out.step_index;
  return out;
}

/// Mean of |grad T|^2 / (1 + |T|)^(1 + a) over the grid.
template <int Dim>
double gradient_dissipation_density(const RhsEval<Dim>& ev, const SpectralBasis<Dim>& basis, double a) {
  const Eigen::VectorXd g = tensor_gradient_sq(ev.stress, basis);
  double acc = 0.0;
  for (Eigen::Index r = 0; r < g.size(); ++r) acc += g(r) * std::pow(1.0 + ev.stress_norm(r), -(1.0 + a));
  return acc / static_cast<double>(g.size());
}

/// Diagnostics row for the state, given the right-hand side evaluated there.
template <int Dim>
DiagnosticsRecord make_record(const SolverState<Dim>& s, const RhsEval<Dim>& ev) {
  DiagnosticsRecord r;
  const auto eps = sym_gradient(s.u);
  r.t = s.t;
  r.kinetic = 0.5 * s.v.coeffs().squaredNorm();
  r.stored = stored_energy(eps, s.params);
  r.total = r.kinetic + r.stored;
  r.dissip_cum = s.acc.dissipation;
  r.max_strain = max_frobenius(eps);
  r.strain_rate_max = ev.strain_rate_max;
  const auto st = stress_stats(ev.stress_norm, s.params.a);
  r.T_L1 = st.L1;
  r.T_L1me = st.L1me;
  r.T_L1pd = st.L1pd;
  r.grad_diss_cum = s.acc.grad_dissipation;
  r.accel_L2 = l2_norm(ev.accel);
  r.step_index = s.step_index;
  r.u_L2 = l2_norm(s.u);
  r.grad_u_sq = gradient_and_strain_sq(s.u).first;
  r.grad_v_sq = gradient_and_strain_sq(s.v).first;
  r.balance = 0.5 * s.v.coeffs().squaredNorm() + s.params.alpha * inner(s.v, s.u);
  r.power_cum = s.acc.power;
  r.T_L1_cum = s.acc.T_L1;
  r.strain_rate_pow_cum = s.acc.strain_rate_pow;
  r.reg_L2sq_cum = s.acc.reg_L2sq;
  return r;
}

struct RunOptions {
  double T_final = 0.0;
  double dt = 0.0;
  Method method = Method::rk4;
  double cadence = 0.0;       // 0 means 10 dt
  long checkpoint_every = 0;  // macro steps; 0 disables
  int max_halvings = 10;
};

template <int Dim>
struct RunSinks {
  std::function<void(const DiagnosticsRecord&)> on_record;
  std::function<void(const SolverState<Dim>&)> on_checkpoint;
  /// Called with every recorded state and its right-hand side evaluation.
  std::function<void(const SolverState<Dim>&, const RhsEval<Dim>&)> on_sample;
};

template <int Dim>
struct RunResult {
  SolverState<Dim> final_state;
  std::vector<DiagnosticsRecord> records;
  long retried_steps = 0;
  int max_substeps = 1;
};

namespace detail {
inline long exact_ratio(double num, double den, const char* what) {
  const double q = num / den;
  const long k = std::lround(q);
  if (std::abs(q - static_cast<double>(k)) > 1e-9 * std::max(1.0, q))
    throw std::invalid_argument(std::string(what) + " is not an integer multiple of dt");
  return k;
}
}  // namespace detail

/// Steps from the state's time to T_final in macro steps of dt. Macro step i
/// ends at exactly (i + 1) dt. A failed macro step is retried with 2, 4, ...
/// substeps, up to 2^max_halvings. Records are emitted at every multiple of
/// the cadence and at T_final. Starting from a restored checkpoint continues
/// the run bitwise.
template <int Dim>
RunResult<Dim> run(SolverState<Dim> state, const ForceSpec<Dim>& force, const RunOptions& opt,
                   const RunSinks<Dim>& sinks = {}) {
  if (!(opt.dt > 0.0) || !std::isfinite(opt.dt)) throw std::invalid_argument("dt must be positive");
  if (!(opt.T_final >= 0.0) || !std::isfinite(opt.T_final))
    throw std::invalid_argument("T_final must be nonnegative");
  const double dt = opt.dt;
  const long n_steps = detail::exact_ratio(opt.T_final, dt, "T_final");
  const long cadence = opt.cadence > 0.0 ? detail::exact_ratio(opt.cadence, dt, "cadence") : 10;
  if (cadence < 1) throw std::invalid_argument("cadence must be at least one step");
  if (state.step_index > n_steps) throw std::invalid_argument("state is already past T_final");
  if (std::abs(state.t - static_cast<double>(state.step_index) * dt) > 1e-9 * std::max(1.0, state.t))
    throw std::invalid_argument("state time does not match step_index * dt");

  RunResult<Dim> res;
  for (long i = state.step_index;; ++i) {
    const RhsEval<Dim> ev = evaluate_rhs(state.t, state.u, state.v, state.params, force);
    auto& acc = state.acc;
    if (acc.last_grad_step != i) {
      const double g = gradient_dissipation_density(ev, state.basis(), state.params.a);
      if (acc.last_grad_step == i - 1) acc.grad_dissipation += 0.5 * dt * (acc.last_grad_density + g);
      acc.last_grad_density = g;
      acc.last_grad_step = i;
    }
    if (i % cadence == 0 || i == n_steps) {
      res.records.push_back(make_record(state, ev));
      if (sinks.on_record) sinks.on_record(res.records.back());
      if (sinks.on_sample) sinks.on_sample(state, ev);
    }
    if (i == n_steps) break;

    for (int j = 0;; ++j) {
      const int sub = 1 << j;
      try {
        SolverState<Dim> trial = state;
        const double h = dt / sub;
        for (int q = 0; q < sub; ++q) advance(trial, h, force, opt.method, q == 0 ? &ev : nullptr);
        state = std::move(trial);
        res.max_substeps = std::max(res.max_substeps, sub);
        break;
      } catch (const StepFailure& e) {
        if (j >= opt.max_halvings)
          throw StepFailure("step " + std::to_string(i) + " failed after " + std::to_string(j) +
                                " halvings: " + e.what(),
                            e.suggested_dt());
        ++res.retried_steps;
      }
    }
    state.step_index = i + 1;
    state.t = static_cast<double>(i + 1) * dt;
    if (opt.checkpoint_every > 0 && state.step_index % opt.checkpoint_every == 0 && sinks.on_checkpoint)
      sinks.on_checkpoint(state);
  }
  res.final_state = std::move(state);
  return res;
}

}  // namespace slv
