#include "slv/experiments.hpp"

#include "slv/io.hpp"

#include <Eigen/Eigenvalues>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <type_traits>

namespace slv {

namespace fs = std::filesystem;

void Log::operator()(const std::string& line) const {
  if (quiet) return;
  (out ? *out : std::cerr) << line << '\n';
}

void Manufactured::check_admissible(double alpha) const {
  const double c = max_strain_rate(alpha);
  if (!(c < 1.0) || !std::isfinite(c))
    throw ConfigError("manufactured strain rate max |eps(u*_t + alpha u*)| = " + io::format_double(c) +
                      " is not below 1; reduce A or omega");
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope: need two or more points");
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

namespace {

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

template <typename F>
auto dispatch(int dim, F&& f) {
  if (dim == 2) return f(std::integral_constant<int, 2>{});
  if (dim == 3) return f(std::integral_constant<int, 3>{});
  throw ConfigError("dim must be 2 or 3");
}

/// Basis for truncation degree m; configured extents are raised to the
/// default extent of m where they are too small.
template <int Dim>
BasisPtr<Dim> basis_for(const RunConfig& c, int m) {
  typename SpectralConfig<Dim>::Shape shape;
  const int def = SpectralConfig<Dim>::default_extent(m);
  for (int a = 0; a < Dim; ++a)
    shape[static_cast<std::size_t>(a)] =
        c.grid_shape.empty() ? def : std::max(def, c.grid_shape[static_cast<std::size_t>(a)]);
  return make_basis(SpectralConfig<Dim>::make(m, shape));
}

template <int Dim>
typename SpectralBasis<Dim>::Mode to_mode(const std::vector<int>& k) {
  if (static_cast<int>(k.size()) != Dim) throw ConfigError("wavevector needs " + std::to_string(Dim) + " entries");
  typename SpectralBasis<Dim>::Mode out;
  std::copy(k.begin(), k.end(), out.begin());
  return out;
}

/// u0, v0 before projection and admissibility rescaling.
template <int Dim>
std::pair<SpectralField<Dim>, SpectralField<Dim>> raw_initial_fields(const RunConfig& c,
                                                                     const BasisPtr<Dim>& basis) {
  SpectralField<Dim> u(basis);
  SpectralField<Dim> v(basis);
  switch (c.ic.kind) {
    case IcConfig::Kind::zero:
      break;
    case IcConfig::Kind::random:
      return random_initial_fields(c.ic.random, basis, c.params(), c.seed);
    case IcConfig::Kind::mode: {
      auto k = to_mode<Dim>(c.ic.k);
      double sign = 1.0;
      if (!SpectralBasis<Dim>::in_half_space(k)) {
        for (int& x : k) x = -x;
        sign = -1.0;
      }
      const int i = basis->mode_index(k);
      if (i < 0) throw ConfigError("ic mode lies outside V_m");
      u.sin_coeff(i, c.ic.comp) = sign * c.ic.u * M_SQRT1_2;
      v.sin_coeff(i, c.ic.comp) = sign * c.ic.v * M_SQRT1_2;
      break;
    }
  }
  return {u, v};
}

/// Reads `t k_1 .. k_d comp cos sin` lines; rows sharing t form one field.
/// cos and sin are coefficients of sqrt(2) cos(2 pi k.x) and sqrt(2) sin(2 pi k.x).
template <int Dim>
ForceSpec<Dim> load_force_table(const fs::path& path, const BasisPtr<Dim>& basis) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open force table " + path.string());
  std::vector<double> times;
  std::vector<SpectralField<Dim>> fields;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::vector<std::string> tok;
    for (std::string w; ss >> w;) tok.push_back(w);
    if (tok.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    if (static_cast<int>(tok.size()) != Dim + 4)
      throw ConfigError(where + "expected t, " + std::to_string(Dim) + " wavevector entries, comp, cos, sin");
    double t = 0.0;
    double cs = 0.0;
    double sn = 0.0;
    typename SpectralBasis<Dim>::Mode k;
    int comp = 0;
    try {
      t = io::parse_double(tok[0]);
      for (int a = 0; a < Dim; ++a) k[static_cast<std::size_t>(a)] = std::stoi(tok[static_cast<std::size_t>(1 + a)]);
      comp = std::stoi(tok[static_cast<std::size_t>(1 + Dim)]);
      cs = io::parse_double(tok[static_cast<std::size_t>(2 + Dim)]);
      sn = io::parse_double(tok[static_cast<std::size_t>(3 + Dim)]);
    } catch (const std::exception&) {
      throw ConfigError(where + "unparsable value");
    }
    if (!std::isfinite(t) || !std::isfinite(cs) || !std::isfinite(sn)) throw ConfigError(where + "non-finite value");
    if (comp < 0 || comp >= Dim) throw ConfigError(where + "comp must lie in [0, dim)");
    if (times.empty() || t != times.back()) {
      if (!times.empty() && !(t > times.back())) throw ConfigError(where + "times must increase");
      times.push_back(t);
      fields.emplace_back(basis);
    }
    if (!SpectralBasis<Dim>::in_half_space(k)) {
      for (int& x : k) x = -x;
      sn = -sn;
    }
    const int i = basis->mode_index(k);
    if (i < 0) continue;  // zero mode or outside V_m: removed by the projection
    fields.back().cos_coeff(i, comp) += cs;
    fields.back().sin_coeff(i, comp) += sn;
  }
  if (times.empty()) throw ConfigError("force table " + path.string() + " has no rows");
  return ForceSpec<Dim>::tabulated(std::move(times), std::move(fields));
}

template <int Dim>
ForceSpec<Dim> build_force(const RunConfig& c, const BasisPtr<Dim>& basis) {
  switch (c.force.kind) {
    case ForceConfig::Kind::zero:
      return ForceSpec<Dim>::zero();
    case ForceConfig::Kind::mode: {
      typename ForceSpec<Dim>::Vec amp;
      for (int a = 0; a < Dim; ++a) amp(a) = c.force.amp.at(static_cast<std::size_t>(a));
      return ForceSpec<Dim>::single_mode(to_mode<Dim>(c.force.k), amp);
    }
    case ForceConfig::Kind::manufactured: {
      const Manufactured ms{c.force.A, c.force.omega};
      ms.check_admissible(c.alpha);
      return manufactured_force<Dim>(ms, c.params());
    }
    case ForceConfig::Kind::tabulated:
      return load_force_table<Dim>(c.force.file, basis);
  }
  throw std::logic_error("unreachable force kind");
}

RunOptions run_options(const RunConfig& c) {
  RunOptions o;
  o.T_final = c.T_final;
  o.dt = c.dt;
  o.method = c.method;
  o.cadence = c.effective_cadence();
  o.checkpoint_every = c.checkpoint_every;
  return o;
}

std::string checkpoint_name(long step) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "checkpoint_%08ld.slv", step);
  return buf;
}

template <int Dim>
struct Job {
  RunConfig config;
  BasisPtr<Dim> basis;
  SolverState<Dim> state;
  ForceSpec<Dim> force;
  InitialData<Dim> init;
};

template <int Dim>
Job<Dim> make_job(const RunConfig& c, const BasisPtr<Dim>& basis, const SpectralField<Dim>& u0,
                  const SpectralField<Dim>& v0) {
  Job<Dim> job;
  job.config = c;
  job.basis = basis;
  job.init = prepare_initial_data(u0, v0, c.params(), basis);
  job.state = SolverState<Dim>::zero(basis, c.params());
  job.state.u = job.init.u0;
  job.state.v = job.init.v0;
  job.force = build_force<Dim>(c, basis);
  return job;
}

template <int Dim>
using SampleHook = std::function<void(const SolverState<Dim>&, const RhsEval<Dim>&)>;

template <int Dim>
std::pair<RunReport, SolverState<Dim>> execute(const Job<Dim>& job, const std::optional<fs::path>& out,
                                               const Log& log, const SampleHook<Dim>& hook = {}) {
  const RunConfig& c = job.config;
  RunReport rep;
  rep.C_star = job.init.C_star;
  rep.measured_C_star = job.init.measured;
  rep.rescaled = job.init.rescaled;
  rep.u0_max_strain = max_strain_norm(job.state.u);
  if (job.init.rescaled)
    log("initial data rescaled by " + fmt(job.init.scale) + ": C_* " + fmt(job.init.measured) + " -> " +
        fmt(job.init.C_star));

  io::CsvWriter csv;
  if (out) {
    fs::create_directories(*out);
    csv = io::CsvWriter(*out / "diagnostics.csv", csv_header());
  }
  RunSinks<Dim> sinks;
  sinks.on_record = [&](const DiagnosticsRecord& r) {
    if (csv.is_open()) csv.row(csv_values(r));
  };
  if (out)
    sinks.on_checkpoint = [&](const SolverState<Dim>& s) {
      io::write_state(*out / checkpoint_name(s.step_index), s, io::SnapshotKind::checkpoint);
    };
  sinks.on_sample = [&](const SolverState<Dim>& s, const RhsEval<Dim>& ev) {
    rep.kappa_max = std::max(rep.kappa_max, ev.kappa_max);
    if (hook) hook(s, ev);
  };
  const auto& b = *job.basis;
  std::string grid;
  for (int a = 0; a < Dim; ++a) grid += (a ? "x" : "") + std::to_string(b.grid()[static_cast<std::size_t>(a)]);
  log("run: dim=" + std::to_string(Dim) + " m=" + std::to_string(b.m()) + " grid=" + grid +
      " n=" + (c.n ? std::to_string(*c.n) : "inf") + " a=" + fmt(c.a) + " alpha=" + fmt(c.alpha) +
      " dt=" + fmt(c.dt) + " T_final=" + fmt(c.T_final) + " method=" + to_string(c.method));
  auto res = run(job.state, job.force, run_options(c), sinks);
  rep.records = std::move(res.records);
  rep.retried_steps = res.retried_steps;
  rep.max_substeps = res.max_substeps;
  if (out) io::write_state(*out / "final.slv", res.final_state, io::SnapshotKind::final_state);
  log("done: t=" + fmt(res.final_state.t) + " retried_steps=" + std::to_string(rep.retried_steps) +
      " max_substeps=" + std::to_string(rep.max_substeps));
  return {std::move(rep), std::move(res.final_state)};
}

template <int Dim>
RunReport run_impl(const RunConfig& c, const std::optional<fs::path>& out, const Log& log,
                   const std::optional<fs::path>& resume) {
  const auto basis = basis_for<Dim>(c, c.m);
  const auto [u0, v0] = raw_initial_fields(c, basis);
  auto job = make_job(c, basis, u0, v0);
  if (resume) {
    const auto header = io::read_header(*resume);
    if (header.kind != io::SnapshotKind::checkpoint) throw ConfigError(resume->string() + " is not a checkpoint");
    if (header.dim() != Dim) throw ConfigError(resume->string() + " has a different dimension");
    auto s = io::read_state<Dim>(*resume);
    if (!(s.params == c.params())) throw ConfigError(resume->string() + " was written with different parameters");
    if (!(s.basis().config() == basis->config()))
      throw ConfigError(resume->string() + " was written on a different space");
    // Share the job's basis so that forcing caches keyed on it stay valid.
    s.u = SpectralField<Dim>(basis, s.u.coeffs());
    s.v = SpectralField<Dim>(basis, s.v.coeffs());
    job.state = std::move(s);
    log("resuming from step " + std::to_string(job.state.step_index));
  }
  return execute(job, out, log).first;
}

template <int Dim>
double mean_frobenius_diff(const SymTensorField<Dim>& x, const SymTensorField<Dim>& y) {
  double acc = 0.0;
  for (Eigen::Index r = 0; r < x.size(); ++r) acc += frobenius(x[r] - y[r]);
  return acc / static_cast<double>(x.size());
}

template <int Dim>
using StressSamples = std::vector<std::pair<double, SymTensorField<Dim>>>;

template <int Dim>
double l1q_difference(const StressSamples<Dim>& a, const StressSamples<Dim>& b) {
  if (a.size() != b.size()) throw std::logic_error("sweep runs recorded different sample times");
  double acc = 0.0;
  double prev = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].first != b[i].first) throw std::logic_error("sweep runs recorded different sample times");
    const double d = mean_frobenius_diff(a[i].second, b[i].second);
    if (i > 0) acc += 0.5 * (a[i].first - a[i - 1].first) * (prev + d);
    prev = d;
  }
  return acc;
}

std::optional<fs::path> subdir(const std::optional<fs::path>& out, const std::string& name) {
  if (!out) return std::nullopt;
  return *out / name;
}

template <int Dim>
SweepNResult sweep_n_impl(const RunConfig& c, const std::vector<long>& n_list, const std::optional<fs::path>& out,
                          const Log& log) {
  const auto basis = basis_for<Dim>(c, c.m);
  const auto [u0, v0] = raw_initial_fields(c, basis);
  SweepNResult res;
  StressSamples<Dim> prev_samples;
  SpectralField<Dim> prev_v;
  for (std::size_t j = 0; j < n_list.size(); ++j) {
    RunConfig cj = c;
    cj.n = n_list[j];
    const auto job = make_job(cj, basis, u0, v0);
    StressSamples<Dim> samples;
    auto [rep, final_state] = execute<Dim>(job, subdir(out, "n_" + std::to_string(n_list[j])), log,
                                           [&](const SolverState<Dim>& s, const RhsEval<Dim>& ev) {
                                             samples.emplace_back(s.t, ev.stress);
                                           });
    SweepNEntry e;
    e.n = n_list[j];
    e.apriori = apriori_report(rep.records, cj.params());
    e.reg_L2_Q = std::sqrt(rep.records.back().reg_L2sq_cum);
    for (const auto& r : rep.records) e.T_L1pd_sup = std::max(e.T_L1pd_sup, r.T_L1pd);
    if (j > 0) {
      e.T_L1_diff = l1q_difference(samples, prev_samples);
      e.v_L2_diff = l2_norm(final_state.v - prev_v);
    }
    e.run = std::move(rep);
    res.entries.push_back(std::move(e));
    prev_samples = std::move(samples);
    prev_v = final_state.v;
  }

  const auto names = AprioriReport::names();
  res.apriori_spread.assign(names.size(), 1.0);
  for (std::size_t q = 0; q < names.size(); ++q) {
    std::vector<double> xs;
    for (const auto& e : res.entries) xs.push_back(e.apriori.values()[q]);
    res.apriori_spread[q] = spread(xs);
  }
  std::vector<double> pd;
  std::vector<double> ns;
  std::vector<double> regs;
  for (const auto& e : res.entries) {
    pd.push_back(e.T_L1pd_sup);
    ns.push_back(static_cast<double>(e.n));
    regs.push_back(e.reg_L2_Q);
  }
  res.T_L1pd_spread = spread(pd);
  res.reg_fit_C = regs.front() * std::sqrt(ns.front());
  bool positive = true;
  for (double r : regs) positive = positive && r > 0.0;
  res.reg_fit_slope = positive ? loglog_slope(ns, regs) : 0.0;
  for (std::size_t j = 0; j < res.entries.size(); ++j) {
    if (regs[j] > res.reg_fit_C / std::sqrt(ns[j]) * (1.0 + 1e-12)) res.reg_within_fit = false;
    if (j >= 2 && !(res.entries[j].T_L1_diff < res.entries[j - 1].T_L1_diff)) res.T_L1_diff_decreasing = false;
  }

  if (out) {
    std::string header = "n,T_L1_diff,v_L2_diff,reg_L2_Q,reg_fit_bound,T_L1pd_sup";
    for (const auto& nm : names) header += "," + nm;
    io::CsvWriter table(*out / "sweep_n.csv", header);
    for (std::size_t j = 0; j < res.entries.size(); ++j) {
      const auto& e = res.entries[j];
      std::vector<double> row = {ns[j], e.T_L1_diff, e.v_L2_diff, e.reg_L2_Q, res.reg_fit_C / std::sqrt(ns[j]),
                                 e.T_L1pd_sup};
      for (double x : e.apriori.values()) row.push_back(x);
      table.row(row);
    }
    io::CsvWriter sp(*out / "sweep_n_spread.csv", "quantity,spread");
    for (std::size_t q = 0; q < names.size(); ++q)
      sp.row(std::vector<std::string>{names[q], io::format_csv_double(res.apriori_spread[q])});
    sp.row(std::vector<std::string>{"T_L1pd_sup", io::format_csv_double(res.T_L1pd_spread)});
    sp.row(std::vector<std::string>{"reg_L2_Q_slope", io::format_csv_double(res.reg_fit_slope)});
  }
  return res;
}

template <int Dim>
SweepMResult sweep_m_impl(const RunConfig& c, const std::vector<int>& m_list, const std::optional<fs::path>& out,
                          const Log& log) {
  const auto base = basis_for<Dim>(c, m_list.front());
  const auto [u0, v0] = raw_initial_fields(c, base);
  SweepMResult res;
  res.columns = {"kinetic", "stored", "total", "dissip_cum", "max_strain", "T_L1"};
  std::optional<SolverState<Dim>> prev;
  for (int m : m_list) {
    RunConfig cm = c;
    cm.m = m;
    if (!cm.grid_shape.empty())
      for (auto& g : cm.grid_shape) g = std::max(g, SpectralConfig<Dim>::default_extent(m));
    const auto basis = basis_for<Dim>(cm, m);
    const auto job = make_job(cm, basis, restrict_to(u0, basis), restrict_to(v0, basis));
    auto [rep, final_state] = execute<Dim>(job, subdir(out, "m_" + std::to_string(m)), log);
    SweepMEntry e;
    e.m = m;
    if (prev) {
      e.u_L2_diff = l2_norm(final_state.u - restrict_to(prev->u, basis));
      e.v_L2_diff = l2_norm(final_state.v - restrict_to(prev->v, basis));
    }
    e.run = std::move(rep);
    res.entries.push_back(std::move(e));
    prev = std::move(final_state);
  }
  auto pick = [](const DiagnosticsRecord& r, std::size_t q) {
    const double v[] = {r.kinetic, r.stored, r.total, r.dissip_cum, r.max_strain, r.T_L1};
    return v[q];
  };
  for (std::size_t q = 0; q < res.columns.size(); ++q) {
    std::vector<double> xs;
    for (const auto& e : res.entries) xs.push_back(pick(e.run.records.back(), q));
    res.final_spread.push_back(spread(xs));
  }
  if (out) {
    std::string header = "m,u_L2_diff,v_L2_diff";
    for (const auto& col : res.columns) header += "," + col;
    io::CsvWriter table(*out / "sweep_m.csv", header);
    for (const auto& e : res.entries) {
      std::vector<double> row = {static_cast<double>(e.m), e.u_L2_diff, e.v_L2_diff};
      for (std::size_t q = 0; q < res.columns.size(); ++q) row.push_back(pick(e.run.records.back(), q));
      table.row(row);
    }
    io::CsvWriter sp(*out / "sweep_m_spread.csv", "quantity,spread");
    for (std::size_t q = 0; q < res.columns.size(); ++q)
      sp.row(std::vector<std::string>{res.columns[q], io::format_csv_double(res.final_spread[q])});
  }
  return res;
}

template <int Dim>
MmsRow mms_run(const RunConfig& c, const Manufactured& ms, int m, double dt, bool reference, int samples,
               const Log& log) {
  RunConfig cm = c;
  cm.m = m;
  cm.grid_shape.clear();
  cm.dt = dt;
  const auto basis = basis_for<Dim>(cm, m);
  const auto p = cm.params();
  auto s = SolverState<Dim>::zero(basis, p);
  s.u = ms.u<Dim>(0.0, basis);
  s.v = ms.v<Dim>(0.0, basis);
  const auto force = reference ? manufactured_force_reference<Dim>(ms, p, samples) : manufactured_force<Dim>(ms, p);
  RunOptions opt = run_options(cm);
  opt.cadence = dt;
  opt.checkpoint_every = 0;
  double eu = 0.0;
  double ev2 = 0.0;
  double prev_t = 0.0;
  double prev_u = 0.0;
  double prev_v = 0.0;
  bool first = true;
  RunSinks<Dim> sinks;
  sinks.on_sample = [&](const SolverState<Dim>& st, const RhsEval<Dim>&) {
    const double du = (st.u - ms.u<Dim>(st.t, basis)).coeffs().squaredNorm();
    const double dv = (st.v - ms.v<Dim>(st.t, basis)).coeffs().squaredNorm();
    if (!first) {
      eu += 0.5 * (st.t - prev_t) * (prev_u + du);
      ev2 += 0.5 * (st.t - prev_t) * (prev_v + dv);
    }
    first = false;
    prev_t = st.t;
    prev_u = du;
    prev_v = dv;
  };
  const auto res = run(s, force, opt, sinks);
  MmsRow row;
  row.m = m;
  row.dt = dt;
  row.u_err = std::sqrt(eu);
  row.v_err = std::sqrt(ev2);
  row.retried_steps = res.retried_steps;
  log("mms: m=" + std::to_string(m) + " dt=" + fmt(dt) + (reference ? " reference" : " consistent") +
      " forcing: u_err=" + fmt(row.u_err) + " v_err=" + fmt(row.v_err) +
      " retried_steps=" + std::to_string(row.retried_steps));
  return row;
}

template <int Dim>
MmsResult mms_impl(const RunConfig& c, const MmsOptions& opt, const std::optional<fs::path>& out, const Log& log) {
  if (c.force.kind != ForceConfig::Kind::manufactured)
    throw ConfigError("mms needs force = manufactured A=... omega=...");
  const Manufactured ms{c.force.A, c.force.omega};
  ms.check_admissible(c.alpha);
  std::vector<double> dts = opt.dt_list;
  if (dts.empty()) dts = {c.dt, c.dt / 2, c.dt / 4, c.dt / 8};
  std::vector<int> ms_list = opt.spatial_m;
  if (ms_list.empty()) ms_list = {c.m, 2 * c.m};

  MmsResult res;
  for (double dt : dts) res.temporal.push_back(mms_run<Dim>(c, ms, opt.temporal_m, dt, false, 0, log));
  for (int m : ms_list)
    res.spatial.push_back(mms_run<Dim>(c, ms, m, opt.spatial_dt, true, opt.reference_samples, log));

  if (res.temporal.size() >= 2) {
    std::vector<double> x;
    std::vector<double> yu;
    std::vector<double> yv;
    for (const auto& r : res.temporal) {
      x.push_back(r.dt);
      yu.push_back(r.u_err);
      yv.push_back(r.v_err);
    }
    bool positive = true;
    for (std::size_t i = 0; i < x.size(); ++i) positive = positive && yu[i] > 0.0 && yv[i] > 0.0;
    if (positive) {
      res.u_order = loglog_slope(x, yu);
      res.v_order = loglog_slope(x, yv);
    }
  }
  if (res.spatial.size() >= 2) {
    const auto& a = res.spatial.front();
    const auto& b = res.spatial.back();
    res.u_drop = b.u_err > 0.0 ? a.u_err / b.u_err : std::numeric_limits<double>::infinity();
    res.v_drop = b.v_err > 0.0 ? a.v_err / b.v_err : std::numeric_limits<double>::infinity();
  }
  if (out) {
    fs::create_directories(*out);
    for (const auto& [name, rows] : {std::pair{"mms_temporal.csv", &res.temporal}, std::pair{"mms_spatial.csv", &res.spatial}}) {
      io::CsvWriter t(*out / name, "m,dt,u_err,v_err,retried_steps");
      for (const auto& r : *rows)
        t.row(std::vector<double>{double(r.m), r.dt, r.u_err, r.v_err, double(r.retried_steps)});
    }
    io::CsvWriter s(*out / "mms_summary.csv", "quantity,value");
    s.row(std::vector<std::string>{"u_order", io::format_csv_double(res.u_order)});
    s.row(std::vector<std::string>{"v_order", io::format_csv_double(res.v_order)});
    s.row(std::vector<std::string>{"u_drop", io::format_csv_double(res.u_drop)});
    s.row(std::vector<std::string>{"v_drop", io::format_csv_double(res.v_drop)});
  }
  log("mms: temporal order u=" + fmt(res.u_order) + " v=" + fmt(res.v_order) + "; spatial drop u=" +
      fmt(res.u_drop) + " v=" + fmt(res.v_drop));
  return res;
}

// ---- property suite

using Tensor3 = SymTensor<double, 3>;

Tensor3 random_direction(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Tensor3 t;
  for (int k = 0; k < kSymSize<3>; ++k) t.storage()(k) = g(rng);
  return t / frobenius(t);
}

Tensor3 random_tensor(std::mt19937_64& rng, double lo_log10, double hi_log10) {
  std::uniform_real_distribution<double> e(lo_log10, hi_log10);
  return random_direction(rng) * std::pow(10.0, e(rng));
}

ConstitutiveParams make_params(double a, std::optional<long> n) {
  ConstitutiveParams p;
  p.a = a;
  p.n = n;
  return p;
}

PropertyResult lower_bound_property(std::string name, double worst, double threshold, bool informational = false) {
  PropertyResult r;
  r.name = std::move(name);
  r.worst = worst;
  r.threshold = threshold;
  r.passed = worst >= threshold;
  r.informational = informational;
  return r;
}

PropertyResult upper_bound_property(std::string name, double worst, double threshold) {
  PropertyResult r;
  r.name = std::move(name);
  r.worst = worst;
  r.threshold = threshold;
  r.passed = worst <= threshold;
  return r;
}

double lemma2_worst(const PropsOptions& opt, long pairs, std::uint64_t salt,
                    const std::function<double(double)>& kappa) {
  std::mt19937_64 rng(opt.seed ^ salt);
  std::uniform_real_distribution<double> lr(-4.0, 3.0);
  std::uniform_real_distribution<double> lh(-6.0, -1.0);
  double worst = std::numeric_limits<double>::infinity();
  const long per_a = std::max(1L, pairs / static_cast<long>(opt.a_list.size()));
  for (double a : opt.a_list) {
    const auto p = make_params(a, std::nullopt);
    const double k = kappa(a);
    for (long i = 0; i < per_a; ++i) {
      const auto s = random_tensor(rng, -4.0, 3.0);
      // Half the pairs are close, where the constant is sharpest.
      const auto t = (i % 2 == 0) ? random_tensor(rng, -4.0, 3.0)
                                  : s + random_direction(rng) * (frobenius(s) * std::pow(10.0, lh(rng)));
      worst = std::min(worst, lemma2_gap(t, s, p, k));
    }
  }
  return worst;
}

std::vector<PropertyResult> props_impl(const PropsOptions& opt) {
  if (opt.samples < 1) throw std::invalid_argument("check-props: sample count must be >= 1");
  if (opt.a_list.empty() || opt.n_list.empty()) throw std::invalid_argument("check-props: empty parameter list");
  for (double a : opt.a_list)
    if (!(a > 0.0)) throw std::invalid_argument("check-props: a must be positive");
  for (long n : opt.n_list)
    if (n < 1) throw std::invalid_argument("check-props: n must be >= 1");
  const long N = opt.samples;
  std::vector<PropertyResult> out;

  {
    std::mt19937_64 rng(opt.seed ^ 0x1);
    std::uniform_real_distribution<double> ly(-8.0, 8.0);
    double worst = std::numeric_limits<double>::infinity();
    for (long i = 0; i < N; ++i) {
      const double y = i == 0 ? 0.0 : std::pow(10.0, ly(rng));
      const double a = opt.a_list[static_cast<std::size_t>(i) % opt.a_list.size()];
      const auto [lo, hi] = lemma1_gap(y, a);
      worst = std::min({worst, lo / (1.0 + y), hi / (1.0 + y)});
    }
    out.push_back(lower_bound_property("lemma1_gap", worst, -1e-12));
    out.back().detail = "min slack / (1 + y)";
  }
  out.push_back(lower_bound_property("lemma2_gap", lemma2_worst(opt, N, 0x2, lemma2_constant), -1e-12));
  out.back().detail = "kappa = min{1, 2^(a - 1/a)}";
  out.push_back(
      lower_bound_property("lemma2_min_form", lemma2_worst(opt, N, 0x3, lemma2_constant_min_form), -1e-12, true));
  out.back().detail = "kappa = min{1, 2^(1/a - a)}";
  out.push_back(
      lower_bound_property("lemma2_max_form", lemma2_worst(opt, N, 0x4, lemma2_constant_max_form), -1e-12, true));
  out.back().detail = "kappa = max{1, 2^(1/a - a)}";

  {
    std::mt19937_64 rng(opt.seed ^ 0x5);
    double worst = 0.0;
    const long per = std::max(1L, N / static_cast<long>(opt.a_list.size() * opt.n_list.size()));
    for (double a : opt.a_list)
      for (long n : opt.n_list) {
        const auto p = make_params(a, n);
        for (long i = 0; i < per; ++i) {
          const auto t = random_tensor(rng, -6.0, 6.0);
          worst = std::max(worst, frobenius(invert_Fn(apply_Fn(t, p), p) - t) / frobenius(t));
        }
      }
    out.push_back(upper_bound_property("inverse_roundtrip", worst, 1e-10));
    out.back().detail = "relative, |T| in [1e-6, 1e6]";
  }

  const long jac = std::max(1L, N / 10);
  {
    std::mt19937_64 rng(opt.seed ^ 0x6);
    double worst = 0.0;
    long not_first_order = 0;
    for (long i = 0; i < jac; ++i) {
      const double a = opt.a_list[static_cast<std::size_t>(i) % opt.a_list.size()];
      const long n = opt.n_list[static_cast<std::size_t>(i / static_cast<long>(opt.a_list.size())) % opt.n_list.size()];
      const auto p = make_params(a, n);
      const auto t = random_tensor(rng, -3.0, 3.0);
      const auto u = random_direction(rng);
      const auto lin = (jacobian_Fn(t, p) * u.mandel()).eval();
      auto err = [&](double h) {
        const double step = h * frobenius(t);
        const auto fd = ((apply_Fn(t + u * step, p) - apply_Fn(t, p)) / step).mandel();
        return (fd - lin).norm() / lin.norm();
      };
      const double e1 = err(1e-4);
      const double e2 = err(5e-5);
      worst = std::max(worst, e1);
      if (e1 > 1e-8 && !(e2 <= 0.75 * e1)) ++not_first_order;
    }
    auto r = upper_bound_property("jacobian_fd", worst, 1e-3);
    r.passed = r.passed && not_first_order == 0;
    r.detail = "relative error at h = 1e-4 |T|; " + std::to_string(not_first_order) + " samples not O(h)";
    out.push_back(r);
  }
  {
    std::mt19937_64 rng(opt.seed ^ 0x7);
    double min_eig = std::numeric_limits<double>::infinity();
    double asym = 0.0;
    for (long i = 0; i < jac; ++i) {
      const double a = opt.a_list[static_cast<std::size_t>(i) % opt.a_list.size()];
      const long n = opt.n_list[static_cast<std::size_t>(i / static_cast<long>(opt.a_list.size())) % opt.n_list.size()];
      const auto j = jacobian_Fn(random_tensor(rng, -6.0, 6.0), make_params(a, n));
      asym = std::max(asym, (j - j.transpose()).norm() / j.norm());
      Eigen::SelfAdjointEigenSolver<SymOperator<double, 3>> es(j);
      min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
    }
    PropertyResult r;
    r.name = "jacobian_spd";
    r.worst = min_eig;
    r.threshold = 0.0;
    r.passed = min_eig > 0.0 && asym <= 1e-15;
    r.detail = "smallest eigenvalue; asymmetry " + fmt(asym);
    out.push_back(r);
  }
  {
    std::mt19937_64 rng(opt.seed ^ 0x8);
    double worst_excess = -std::numeric_limits<double>::infinity();
    double C = 0.0;
    for (double a : opt.a_list)
      for (long n : opt.n_list) {
        const auto p = make_params(a, n);
        const double y_max = std::min(1e8, RadialProfile<double>(p).value(1e300));
        std::vector<double> ts;
        std::vector<double> norms;
        for (double y = 1e-4; y < y_max; y *= 2.0) {
          const auto e = random_direction(rng) * y;
          const double t = frobenius(invert_Fn(e, p));
          const double nrm = jacobian_inverse_Fn(e, p).norm();
          C = std::max(C, nrm / (1.0 + std::pow(t, a + 1.0)));
          if (t >= 1e2) {
            ts.push_back(t);
            norms.push_back(nrm);
          }
        }
        if (ts.size() >= 2) worst_excess = std::max(worst_excess, loglog_slope(ts, norms) - (a + 1.0));
      }
    auto r = upper_bound_property("inverse_jacobian_growth", worst_excess, 0.01);
    r.passed = r.passed && std::isfinite(C);
    r.detail = "growth exponent minus (a + 1) for |T| >= 100; fitted C_a = " + fmt(C);
    out.push_back(r);
  }
  {
    std::mt19937_64 rng(opt.seed ^ 0x9);
    double worst = 0.0;
    const long per = std::min(N, 20L);
    for (double a : opt.a_list)
      for (long n : opt.n_list) {
        const auto p = make_params(a, n);
        for (long i = 0; i < per; ++i) {
          const auto A = random_tensor(rng, -6.0, 1.5);
          const auto B = random_direction(rng) * std::max(1.0, frobenius(A));
          const double h = 1e-4;
          const auto dF = (apply_Fn(A + B * h, p) - apply_Fn(A - B * h, p)) / (2.0 * h);
          const double lhs = contract(A, dF);
          auto half_h = [&](double t) {
            const double r = frobenius(A + B * t);
            return 0.5 * h_n(r * r, p);
          };
          const double rhs = (half_h(h) - half_h(-h)) / (2.0 * h);
          worst = std::max(worst, std::abs(lhs - rhs) / (1.0 + std::abs(lhs)));
        }
      }
    out.push_back(upper_bound_property("h_n_identity", worst, 1e-5));
    out.back().detail = "T : dF_n(T)/dt against d/dt h_n(|T|^2) / 2, central differences";
  }
  {
    std::mt19937_64 rng(opt.seed ^ 0xa);
    std::normal_distribution<double> g;
    const auto b2 = make_basis(SpectralConfig<2>::make(3));
    const auto b3 = make_basis(SpectralConfig<3>::make(2));
    double worst = 0.0;
    const long fields = std::max(1L, N / 100);
    for (long i = 0; i < fields; ++i) {
      if (i % 2 == 0) {
        SpectralField<2> f(b2);
        f.coeffs() = f.coeffs().unaryExpr([&](double) { return g(rng); });
        worst = std::max(worst, korn_ratio(f));
      } else {
        SpectralField<3> f(b3);
        f.coeffs() = f.coeffs().unaryExpr([&](double) { return g(rng); });
        worst = std::max(worst, korn_ratio(f));
      }
    }
    out.push_back(upper_bound_property("korn_ratio", worst, M_SQRT2 + 1e-12));
    out.back().detail = std::to_string(fields) + " random zero-mean fields";
    SpectralField<2> shear(b2);
    shear.sin_coeff(b2->mode_index({0, 1}), 0) = 1.0;
    const double r = korn_ratio(shear);
    auto s = upper_bound_property("korn_shear_attains", std::abs(r - M_SQRT2), 1e-12);
    s.detail = "u = sin(2 pi x_2) e_1 has ratio " + io::format_double(r);
    out.push_back(s);
  }
  return out;
}

template <typename F>
int guarded(const Log& log, F&& body) {
  try {
    body();
    return 0;
  } catch (const std::exception& e) {
    Log loud = log;
    loud.quiet = false;
    loud(std::string("error: ") + e.what());
    return 1;
  }
}

}  // namespace

RunReport run_config(const RunConfig& config, const std::optional<fs::path>& out_dir, const Log& log,
                     const std::optional<fs::path>& resume) {
  config.validate();
  return dispatch(config.dim, [&](auto d) { return run_impl<decltype(d)::value>(config, out_dir, log, resume); });
}

SweepNResult sweep_n(const RunConfig& config, const std::vector<long>& n_list, const std::optional<fs::path>& out_dir,
                     const Log& log) {
  config.validate();
  if (n_list.size() < 2) throw ConfigError("sweep-n needs at least two n values");
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    if (n_list[i] < 1) throw ConfigError("sweep-n values must be >= 1");
    if (i > 0 && n_list[i] < n_list[i - 1]) throw ConfigError("sweep-n values must be ascending");
  }
  return dispatch(config.dim, [&](auto d) { return sweep_n_impl<decltype(d)::value>(config, n_list, out_dir, log); });
}

SweepMResult sweep_m(const RunConfig& config, const std::vector<int>& m_list, const std::optional<fs::path>& out_dir,
                     const Log& log) {
  config.validate();
  if (m_list.empty()) throw ConfigError("sweep-m needs at least one m value");
  for (std::size_t i = 0; i < m_list.size(); ++i) {
    if (m_list[i] < 1) throw ConfigError("sweep-m values must be >= 1");
    if (i > 0 && !(m_list[i] > m_list[i - 1])) throw ConfigError("sweep-m values must be strictly ascending");
  }
  return dispatch(config.dim, [&](auto d) { return sweep_m_impl<decltype(d)::value>(config, m_list, out_dir, log); });
}

MmsResult mms_study(const RunConfig& config, const MmsOptions& opt, const std::optional<fs::path>& out_dir,
                    const Log& log) {
  config.validate();
  if (opt.temporal_m < 1) throw ConfigError("mms temporal m must be >= 1");
  if (!(opt.spatial_dt > 0.0)) throw ConfigError("mms spatial dt must be positive");
  return dispatch(config.dim, [&](auto d) { return mms_impl<decltype(d)::value>(config, opt, out_dir, log); });
}

std::vector<PropertyResult> check_props(const PropsOptions& opt) { return props_impl(opt); }

int cmd_run(const RunConfig& config, const Log& log, const std::optional<fs::path>& resume) {
  return guarded(log, [&] { run_config(config, fs::path(config.out_dir), log, resume); });
}

int cmd_sweep_n(const RunConfig& config, const std::vector<long>& n_list, const Log& log) {
  return guarded(log, [&] {
    const auto r = sweep_n(config, n_list, fs::path(config.out_dir), log);
    for (const auto& e : r.entries)
      log("n=" + std::to_string(e.n) + " T_L1_diff=" + fmt(e.T_L1_diff) + " v_L2_diff=" + fmt(e.v_L2_diff) +
          " reg_L2_Q=" + fmt(e.reg_L2_Q) + " T_L1pd_sup=" + fmt(e.T_L1pd_sup));
  });
}

int cmd_sweep_m(const RunConfig& config, const std::vector<int>& m_list, const Log& log) {
  return guarded(log, [&] {
    const auto r = sweep_m(config, m_list, fs::path(config.out_dir), log);
    for (const auto& e : r.entries)
      log("m=" + std::to_string(e.m) + " u_L2_diff=" + fmt(e.u_L2_diff) + " v_L2_diff=" + fmt(e.v_L2_diff));
  });
}

int cmd_mms(const RunConfig& config, const MmsOptions& opt, const Log& log) {
  return guarded(log, [&] { mms_study(config, opt, fs::path(config.out_dir), log); });
}

int cmd_check_props(const PropsOptions& opt, std::ostream& report) {
  std::vector<PropertyResult> results;
  try {
    results = check_props(opt);
  } catch (const std::exception& e) {
    report << "error: " << e.what() << '\n';
    return 1;
  }
  bool ok = true;
  for (const auto& r : results) {
    const char* tag = r.informational ? (r.passed ? "INFO-PASS" : "INFO-FAIL") : (r.passed ? "PASS" : "FAIL");
    report << tag << ' ' << r.name << " worst=" << io::format_double(r.worst)
           << " threshold=" << io::format_double(r.threshold);
    if (!r.detail.empty()) report << " (" << r.detail << ')';
    report << '\n';
    ok = ok && (r.passed || r.informational);
  }
  return ok ? 0 : 1;
}

}  // namespace slv
