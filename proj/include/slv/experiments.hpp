#pragma once

#include "slv/config.hpp"
#include "slv/diagnostics.hpp"
#include "slv/solver.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace slv {

/// Progress output of the experiment drivers.
struct Log {
  bool quiet = false;
  std::ostream* out = nullptr;  // std::cerr when null

  void operator()(const std::string& line) const;
};

/// Manufactured solution u*(t, x) = A sin(2 pi x_1) cos(omega t) e_2.
struct Manufactured {
  double A = 0.0;
  double omega = 0.0;

  /// Coefficient of sqrt(2) sin(2 pi x_1) e_2 in u*, u*_t and u*_tt.
  double q(double t) const { return A * M_SQRT1_2 * std::cos(omega * t); }
  double qdot(double t) const { return -A * M_SQRT1_2 * omega * std::sin(omega * t); }
  double qddot(double t) const { return -omega * omega * q(t); }

  /// max over Q of |eps(u*_t + alpha u*)|.
  double max_strain_rate(double alpha) const { return M_SQRT2 * M_PI * std::abs(A) * std::hypot(alpha, omega); }

  /// Throws ConfigError unless the manufactured strain rate stays below 1.
  void check_admissible(double alpha) const;

  template <int Dim>
  SpectralField<Dim> mode_field(double coeff, const BasisPtr<Dim>& basis) const {
    static_assert(Dim >= 2, "the manufactured solution needs a second component");
    SpectralField<Dim> f(basis);
    typename SpectralBasis<Dim>::Mode k{};
    k[0] = 1;
    f.sin_coeff(basis->mode_index(k), 1) = coeff;
    return f;
  }
  template <int Dim>
  SpectralField<Dim> u(double t, const BasisPtr<Dim>& b) const {
    return mode_field<Dim>(q(t), b);
  }
  template <int Dim>
  SpectralField<Dim> v(double t, const BasisPtr<Dim>& b) const {
    return mode_field<Dim>(qdot(t), b);
  }
  template <int Dim>
  SpectralField<Dim> accel(double t, const BasisPtr<Dim>& b) const {
    return mode_field<Dim>(qddot(t), b);
  }
};

/// f* = u*_tt - P^m div T* with T* sampled on the solver grid, so that P^m u*
/// solves the Galerkin system exactly and only time-stepping error remains.
template <int Dim>
ForceSpec<Dim> manufactured_force(const Manufactured& ms, const ConstitutiveParams& params) {
  struct Cache {
    double t = std::numeric_limits<double>::quiet_NaN();
    const SpectralBasis<Dim>* basis = nullptr;
    SpectralField<Dim> f;
  };
  auto cache = std::make_shared<Cache>();
  return ForceSpec<Dim>::manufactured([ms, params, cache](double t, const BasisPtr<Dim>& basis) {
    if (cache->basis != basis.get() || cache->t != t) {
      const auto ev = evaluate_rhs(t, ms.u<Dim>(t, basis), ms.v<Dim>(t, basis), params, ForceSpec<Dim>::zero());
      cache->f = ms.accel<Dim>(t, basis) - ev.accel;
      cache->t = t;
      cache->basis = basis.get();
    }
    return cache->f;
  });
}

/// f* = u*_tt - P^m div T* with div T* resolved on `samples` points along
/// x_1, independent of the solver grid. The Galerkin solution then differs
/// from u* by the truncation error of V_m.
template <int Dim>
ForceSpec<Dim> manufactured_force_reference(const Manufactured& ms, const ConstitutiveParams& params,
                                            int samples = 256) {
  const RadialProfile<double> prof(params);
  return ForceSpec<Dim>::manufactured([ms, params, prof, samples](double t, const BasisPtr<Dim>& basis) {
    // eps_12 = pi B cos(2 pi x_1) with B the amplitude of u*_t + alpha u*.
    const double B = M_SQRT2 * (ms.qdot(t) + params.alpha * ms.q(t));
    std::vector<double> tau(static_cast<std::size_t>(samples));
    for (int j = 0; j < samples; ++j) {
      const double e12 = M_PI * B * std::cos(2.0 * M_PI * j / samples);
      const double y = M_SQRT2 * std::abs(e12);
      tau[static_cast<std::size_t>(j)] = y > 0.0 ? e12 * prof.invert(y) / y : 0.0;
    }
    SpectralField<Dim> f = ms.accel<Dim>(t, basis);
    typename SpectralBasis<Dim>::Mode k{};
    for (int h = 1; h <= basis->m(); ++h) {
      // T*_12 = sum_h c_h cos(2 pi h x_1); (div T*)_2 = -sum_h 2 pi h c_h sin(2 pi h x_1).
      double c = 0.0;
      for (int j = 0; j < samples; ++j)
        c += tau[static_cast<std::size_t>(j)] * std::cos(2.0 * M_PI * h * j / samples);
      c *= 2.0 / samples;
      k[0] = h;
      f.sin_coeff(basis->mode_index(k), 1) += 2.0 * M_PI * h * c * M_SQRT1_2;
    }
    return f;
  });
}

/// Outcome of a single configured run.
struct RunReport {
  std::vector<DiagnosticsRecord> records;
  double C_star = 0.0;
  double measured_C_star = 0.0;
  bool rescaled = false;
  double u0_max_strain = 0.0;  // max |eps(u0)| after any rescaling
  double kappa_max = 0.0;      // max over recorded states of the stiffness estimate
  long retried_steps = 0;
  int max_substeps = 1;
};

/// Runs `config`. With an output directory, writes diagnostics.csv,
/// checkpoint_<step>.slv files and final.slv there. `resume` restarts from a
/// checkpoint written by an earlier run of the same configuration.
RunReport run_config(const RunConfig& config, const std::optional<std::filesystem::path>& out_dir,
                     const Log& log = {}, const std::optional<std::filesystem::path>& resume = std::nullopt);

struct SweepNEntry {
  long n = 0;
  RunReport run;
  AprioriReport apriori;
  double reg_L2_Q = 0.0;    // ||T / (n (1 + |T|^(1-1/n)))||_{L2(Q)}
  double T_L1pd_sup = 0.0;  // sup_t ||T||_{1+delta}
  double T_L1_diff = 0.0;   // ||T^n - T^(previous n)||_{L1(Q)}; 0 for the first entry
  double v_L2_diff = 0.0;   // ||v^n - v^(previous n)||_2 at T_final; 0 for the first entry
};

struct SweepNResult {
  std::vector<SweepNEntry> entries;
  std::vector<double> apriori_spread;  // per AprioriReport::names()
  double T_L1pd_spread = 1.0;
  double reg_fit_C = 0.0;      // reg_L2_Q(n_0) sqrt(n_0)
  double reg_fit_slope = 0.0;  // least-squares slope of log reg_L2_Q against log n
  bool T_L1_diff_decreasing = true;
  bool reg_within_fit = true;  // reg_L2_Q(n) <= reg_fit_C / sqrt(n) for every n
};

/// Runs the configuration once per n (ascending, at least two entries) from
/// identical initial data. Writes n_<n>/ run directories, sweep_n.csv and
/// sweep_n_spread.csv under `out_dir`.
SweepNResult sweep_n(const RunConfig& config, const std::vector<long>& n_list,
                     const std::optional<std::filesystem::path>& out_dir, const Log& log = {});

struct SweepMEntry {
  int m = 0;
  RunReport run;
  double u_L2_diff = 0.0;  // ||u^m - u^(previous m)||_2 at T_final
  double v_L2_diff = 0.0;
};

struct SweepMResult {
  std::vector<SweepMEntry> entries;
  std::vector<std::string> columns;    // diagnostics columns compared across m
  std::vector<double> final_spread;    // spread of each column's final value
};

/// Runs the configuration once per m (ascending). Initial data are generated
/// on the smallest space and embedded into the larger ones. Writes
/// m_<m>/ run directories, sweep_m.csv and sweep_m_spread.csv.
SweepMResult sweep_m(const RunConfig& config, const std::vector<int>& m_list,
                     const std::optional<std::filesystem::path>& out_dir, const Log& log = {});

struct MmsOptions {
  std::vector<double> dt_list;        // empty: config dt halved three times
  int temporal_m = 1;
  std::vector<int> spatial_m;         // empty: {config m, 2 config m}
  double spatial_dt = 1e-4;
  int reference_samples = 256;
};

struct MmsRow {
  int m = 0;
  double dt = 0.0;
  double u_err = 0.0;  // ||u - u*||_{L2(Q)}
  double v_err = 0.0;  // ||u_t - u*_t||_{L2(Q)}
  long retried_steps = 0;
};

struct MmsResult {
  std::vector<MmsRow> temporal;
  std::vector<MmsRow> spatial;
  double u_order = 0.0;  // least-squares slope of log u_err against log dt
  double v_order = 0.0;
  double u_drop = 0.0;   // u_err ratio between the first and last spatial rows
  double v_drop = 0.0;
};

/// Manufactured-solution study: a dt ladder with the grid-consistent forcing
/// and an m ladder with the grid-independent forcing. The configuration must
/// use `force = manufactured A=... omega=...`. Writes mms_temporal.csv and
/// mms_spatial.csv.
MmsResult mms_study(const RunConfig& config, const MmsOptions& opt,
                    const std::optional<std::filesystem::path>& out_dir, const Log& log = {});

struct PropsOptions {
  std::vector<double> a_list = {0.1, 0.5, 1.0, 2.0};
  std::vector<long> n_list = {1, 4, 16};
  std::uint64_t seed = 0;
  long samples = 100000;
};

struct PropertyResult {
  std::string name;
  bool passed = false;
  double worst = 0.0;      // worst observed value of the checked quantity
  double threshold = 0.0;  // the bound it is compared against
  bool informational = false;  // reported but never a failure
  std::string detail;
};

/// Seeded constitutive and Korn property suite.
std::vector<PropertyResult> check_props(const PropsOptions& opt);

/// Least-squares slope of log y against log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Command entry points: exit status 0 on success, 1 on failure, with the
/// diagnostic on `log`.
int cmd_run(const RunConfig& config, const Log& log, const std::optional<std::filesystem::path>& resume = std::nullopt);
int cmd_sweep_n(const RunConfig& config, const std::vector<long>& n_list, const Log& log);
int cmd_sweep_m(const RunConfig& config, const std::vector<int>& m_list, const Log& log);
int cmd_mms(const RunConfig& config, const MmsOptions& opt, const Log& log);
int cmd_check_props(const PropsOptions& opt, std::ostream& report);

}  // namespace slv
