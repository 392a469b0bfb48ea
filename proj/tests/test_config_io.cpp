#include "slv/config.hpp"
#include "slv/experiments.hpp"
#include "slv/io.hpp"

#include <doctest.h>

#include <bit>
#include <fstream>
#include <random>
#include <sstream>

namespace fs = std::filesystem;

namespace {
const char* kMinimal =
    "dim = 2\n"
    "m = 3\n"
    "a = 1.5\n"
    "alpha = 2\n"
    "n = 8\n"
    "T_final = 0.1\n"
    "dt = 0.01\n";

std::string error_of(const std::string& text) {
  try {
    slv::parse_config(text);
  } catch (const slv::ConfigError& e) {
    return e.what();
  }
  return {};
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("slv_test_" + name);
  fs::remove_all(p);
  return p;
}

slv::RunConfig small_run(const fs::path& out) {
  auto c = slv::parse_config(
      "dim = 2\nm = 2\na = 1\nalpha = 1\nn = 4\nT_final = 0.04\ndt = 0.004\n"
      "ic = random amp=0.4\ncheckpoint_every = 5\n");
  c.out_dir = out.string();
  return c;
}

const slv::Log kQuiet{true, nullptr};
}  // namespace

TEST_CASE("minimal config takes defaults") {
  const auto c = slv::parse_config(kMinimal);
  CHECK(c.dim == 2);
  CHECK(c.m == 3);
  CHECK(c.a == 1.5);
  CHECK(c.alpha == 2.0);
  CHECK(c.n == 8);
  CHECK(c.method == slv::Method::rk4);
  CHECK_FALSE(c.cadence.has_value());
  CHECK(c.effective_cadence() == doctest::Approx(0.1));
  CHECK(c.seed == 0);
  CHECK(c.ic.kind == slv::IcConfig::Kind::zero);
  CHECK(c.force.kind == slv::ForceConfig::Kind::zero);
  CHECK(c.checkpoint_every == 0);
  CHECK(c.effective_grid() == std::vector<int>{8, 8});
}

TEST_CASE("comments, whitespace and n = inf") {
  const auto c = slv::parse_config(std::string("# header\n\n") + kMinimal + "  method=midpoint   # implicit\n" +
                                   "cadence = 0.02\n");
  CHECK(c.method == slv::Method::midpoint);
  CHECK(*c.cadence == 0.02);
  std::string inf = kMinimal;
  inf.replace(inf.find("n = 8"), 5, "n = inf");
  CHECK_FALSE(slv::parse_config(inf).n.has_value());
}

TEST_CASE("config errors name the line and the constraint") {
  std::string bad = kMinimal;
  bad.replace(bad.find("a = 1.5"), 7, "a = -1");
  const auto e = error_of(bad);
  CHECK(contains(e, "line 3"));
  CHECK(contains(e, "positive"));

  CHECK(contains(error_of(std::string(kMinimal) + "colour = red\n"), "line 8: unknown key 'colour'"));
  CHECK(contains(error_of(std::string(kMinimal) + "m = 4\n"), "repeats line 2"));
  CHECK(contains(error_of(std::string(kMinimal) + "just words\n"), "line 8"));
  CHECK(contains(error_of("dim = 2\n"), "missing required key"));
  CHECK(contains(error_of(std::string(kMinimal) + "cadence = 0.015\n"), "multiple of dt"));
  CHECK(contains(error_of(std::string(kMinimal) + "grid_shape = 12x16\n"), "power of two"));
  CHECK(contains(error_of(std::string(kMinimal) + "grid_shape = 4x16\n"), "below 2(m+1)"));
  CHECK(contains(error_of(std::string(kMinimal) + "grid_shape = 16\n"), "needs 2 extents"));
  CHECK(contains(error_of(std::string(kMinimal) + "method = euler\n"), "line 8: method"));
  CHECK(contains(error_of(std::string(kMinimal) + "seed = -3\n"), "integer"));
  CHECK(contains(error_of(std::string(kMinimal) + "ic = mode k=1 comp=0\n"), "k needs 2 entries"));
  CHECK(contains(error_of(std::string(kMinimal) + "ic = mode k=0,0\n"), "nonzero"));
  CHECK(contains(error_of(std::string(kMinimal) + "ic = mode k=1,0 comp=2\n"), "comp"));
  CHECK(contains(error_of(std::string(kMinimal) + "ic = swirl\n"), "unknown ic kind"));
  CHECK(contains(error_of(std::string(kMinimal) + "ic = random spin=3\n"), "unknown parameter 'spin'"));
  CHECK(contains(error_of(std::string(kMinimal) + "force = mode k=1,0\n"), "needs amp="));
  CHECK(contains(error_of(std::string(kMinimal) + "force = manufactured A=-1 omega=1\n"), "nonnegative"));
  CHECK(contains(error_of(std::string("dim = 4\n") + std::string(kMinimal).substr(8)), "dim must be 2 or 3"));
  std::string n0 = kMinimal;
  n0.replace(n0.find("n = 8"), 5, "n = 0");
  CHECK(contains(error_of(n0), "n must be >= 1"));
}

TEST_CASE("serialize round-trips") {
  auto full = slv::parse_config(
      "dim = 3\nm = 2\ngrid_shape = 8x16x8\na = 0.2\nalpha = 0.7\nn = inf\nT_final = 1\ndt = 0.001\n"
      "method = midpoint\nic = mode k=1,-1,0 comp=2 u=0.01 v=-0.02\n"
      "force = mode k=0,1,1 amp=0.1,0,-0.3\nout_dir = results/x\nseed = 18446744073709551615\n"
      "cadence = 0.005\ncheckpoint_every = 100\n");
  CHECK(slv::parse_config(slv::serialize(full)) == full);
  CHECK(full.seed == 18446744073709551615ULL);

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    slv::RunConfig c;
    c.dim = 2 + static_cast<int>(rng() % 2);
    c.m = 1 + static_cast<int>(rng() % 6);
    c.a = 0.05 + 3.0 * u(rng);
    c.alpha = 0.1 + u(rng);
    if (rng() % 3) c.n = 1 + static_cast<long>(rng() % 100);
    c.dt = std::ldexp(1.0, -static_cast<int>(rng() % 20));
    c.T_final = c.dt * static_cast<double>(rng() % 1000);
    c.method = rng() % 2 ? slv::Method::rk4 : slv::Method::midpoint;
    if (rng() % 2) c.cadence = c.dt * static_cast<double>(1 + rng() % 50);
    c.seed = rng();
    c.checkpoint_every = static_cast<long>(rng() % 10);
    switch (rng() % 3) {
      case 0:
        c.ic.kind = slv::IcConfig::Kind::random;
        c.ic.random.amp = u(rng);
        c.ic.random.decay = 4.0 * u(rng);
        c.ic.random.deg = 1 + static_cast<int>(rng() % 4);
        c.ic.random.ufrac = u(rng);
        break;
      case 1:
        c.ic.kind = slv::IcConfig::Kind::mode;
        c.ic.k.assign(static_cast<std::size_t>(c.dim), 0);
        c.ic.k[0] = 1 + static_cast<int>(rng() % 3);
        c.ic.comp = static_cast<int>(rng() % static_cast<unsigned>(c.dim));
        c.ic.u = u(rng) - 0.5;
        c.ic.v = u(rng) - 0.5;
        break;
      default:
        break;
    }
    if (rng() % 2) {
      c.force.kind = slv::ForceConfig::Kind::manufactured;
      c.force.A = u(rng);
      c.force.omega = 10.0 * u(rng);
    }
    c.validate();
    CHECK(slv::parse_config(slv::serialize(c)) == c);
  }
}

TEST_CASE("number formatting") {
  CHECK(slv::io::format_csv_double(0.1) == "0.10000000000000001");
  CHECK(slv::io::format_csv_double(4.0) == "4");
  CHECK(slv::io::format_csv_double(-1.5e-300) == "-1.5000000000000001e-300");
  CHECK(slv::io::format_double(0.1) == "0.1");
  CHECK(std::isinf(slv::io::parse_double("inf")));
  CHECK(std::isnan(slv::io::parse_double("nan")));
  CHECK_THROWS(slv::io::parse_double("1,5"));
  CHECK_THROWS(slv::io::parse_double("2x"));
  std::mt19937_64 rng(8);
  for (int i = 0; i < 10000; ++i) {
    const double x = std::bit_cast<double>(rng());
    if (!std::isfinite(x)) continue;
    CHECK(slv::io::parse_double(slv::io::format_double(x)) == x);
    CHECK(slv::io::parse_double(slv::io::format_csv_double(x)) == x);
  }
}

TEST_CASE("snapshot round-trip is bitwise") {
  const auto b = slv::make_basis(slv::SpectralConfig<3>::make(2, {8, 8, 16}));
  slv::ConstitutiveParams p;
  p.a = 0.3;
  p.alpha = 1.7;
  p.n = 12;
  auto s = slv::SolverState<3>::zero(b, p);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  s.u.coeffs() = s.u.coeffs().unaryExpr([&](double) { return g(rng); });
  s.v.coeffs() = s.v.coeffs().unaryExpr([&](double) { return g(rng); });
  s.t = 0.1 + 0.2;
  s.step_index = 300;
  s.acc.dissipation = 1.0 / 3.0;
  s.acc.power = -std::nextafter(0.0, 1.0);
  s.acc.grad_dissipation = 2.5;
  s.acc.last_grad_density = 1e300;
  s.acc.last_grad_step = 300;

  std::stringstream buf;
  slv::io::write_state(buf, s, slv::io::SnapshotKind::checkpoint);
  const std::string bytes = buf.str();
  CHECK(bytes.rfind("SLVC1\n", 0) == 0);
  slv::io::SnapshotKind kind = slv::io::SnapshotKind::final_state;
  std::stringstream in(bytes);
  const auto r = slv::io::read_state<3>(in, &kind);
  CHECK(kind == slv::io::SnapshotKind::checkpoint);
  CHECK(r.t == s.t);
  CHECK(r.step_index == s.step_index);
  CHECK(r.params == s.params);
  CHECK(r.acc == s.acc);
  CHECK(r.basis().config() == b->config());
  CHECK(r.u.coeffs() == s.u.coeffs());
  CHECK(r.v.coeffs() == s.v.coeffs());
  std::stringstream again;
  slv::io::write_state(again, r, slv::io::SnapshotKind::checkpoint);
  CHECK(again.str() == bytes);

  std::stringstream fin;
  slv::io::write_state(fin, s, slv::io::SnapshotKind::final_state);
  CHECK(fin.str().rfind("SLVF1\n", 0) == 0);

  std::stringstream wrong_dim(bytes);
  CHECK_THROWS(slv::io::read_state<2>(wrong_dim));
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS(slv::io::read_state<3>(truncated));
  std::stringstream trailing(bytes + "x");
  CHECK_THROWS(slv::io::read_state<3>(trailing));
  std::stringstream magic("SLVX1\n" + bytes.substr(6));
  CHECK_THROWS(slv::io::read_state<3>(magic));
}

TEST_CASE("csv writer") {
  const auto dir = scratch("csv");
  fs::create_directories(dir);
  {
    slv::io::CsvWriter w(dir / "x.csv", "a,b");
    w.row(std::vector<double>{0.5, 1e-20});
    w.row(std::vector<std::string>{"k", "v"});
  }
  CHECK(slurp(dir / "x.csv") == "a,b\n0.5,9.9999999999999995e-21\nk,v\n");
  slv::io::CsvWriter closed;
  CHECK_FALSE(closed.is_open());
  CHECK_THROWS(closed.row(std::vector<double>{1.0}));
  fs::remove_all(dir);
}

TEST_CASE("run writes deterministic output and resumes bitwise") {
  const auto a = scratch("run_a");
  const auto b = scratch("run_b");
  REQUIRE(slv::cmd_run(small_run(a), kQuiet) == 0);
  REQUIRE(slv::cmd_run(small_run(b), kQuiet) == 0);
  const std::string csv = slurp(a / "diagnostics.csv");
  CHECK(csv == slurp(b / "diagnostics.csv"));
  CHECK(slurp(a / "final.slv") == slurp(b / "final.slv"));
  CHECK(slurp(a / "final.slv").rfind("SLVF1\n", 0) == 0);
  CHECK(csv.rfind(slv::csv_header(), 0) == 0);
  // Rows at t = 0, 0.04 (cadence 10 dt) and nothing else.
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  REQUIRE(fs::exists(a / "checkpoint_00000005.slv"));
  REQUIRE(fs::exists(a / "checkpoint_00000010.slv"));

  const auto c = scratch("run_c");
  REQUIRE(slv::cmd_run(small_run(c), kQuiet, a / "checkpoint_00000005.slv") == 0);
  CHECK(slurp(c / "final.slv") == slurp(a / "final.slv"));

  auto other = small_run(c);
  other.a = 2.0;
  CHECK(slv::cmd_run(other, kQuiet, a / "checkpoint_00000005.slv") == 1);
  for (const auto& d : {a, b, c}) fs::remove_all(d);
}

TEST_CASE("zero data give zero physical columns") {
  const auto dir = scratch("zero");
  auto c = slv::parse_config("dim = 3\nm = 1\na = 0.5\nalpha = 1\nn = 2\nT_final = 0.02\ndt = 0.01\ncadence = 0.01\n");
  c.out_dir = dir.string();
  const auto rep = slv::run_config(c, dir, kQuiet);
  REQUIRE(rep.records.size() == 3);
  for (const auto& r : rep.records) {
    auto v = slv::csv_values(r);
    for (std::size_t i = 1; i < v.size(); ++i) CHECK(v[i] == 0.0);
  }
  fs::remove_all(dir);
}

TEST_CASE("mode initial data and forcing from the config") {
  auto c = slv::parse_config(
      "dim = 2\nm = 2\na = 2\nalpha = 1\nn = 1\nT_final = 0.01\ndt = 0.01\n"
      "ic = mode k=-1,0 comp=1 v=0.01\nforce = mode k=0,1 amp=0.5,0\n");
  const auto rep = slv::run_config(c, std::nullopt, kQuiet);
  // v0 = 0.01 sin(-2 pi x_1) e_2 has kinetic energy 0.01^2 / 4.
  CHECK(rep.records.front().kinetic == doctest::Approx(0.25e-4).epsilon(1e-14));
  CHECK(rep.C_star == doctest::Approx(M_SQRT2 * M_PI * 0.01).epsilon(1e-12));
  CHECK(rep.records.back().power_cum > 0.0);
  c.ic.k = {3, 0};
  CHECK_THROWS_AS(slv::run_config(c, std::nullopt, kQuiet), slv::ConfigError);
}

TEST_CASE("tabulated forcing matches the equivalent single-mode forcing") {
  const auto dir = scratch("table");
  fs::create_directories(dir);
  {
    std::ofstream t(dir / "force.txt");
    t << "# t k1 k2 comp cos sin\n";
    t << "0 0 -1 0 0 " << slv::io::format_double(-0.5 * M_SQRT1_2) << "\n";
    t << "0 5 0 1 0 1\n";  // outside V_2
  }
  auto c = slv::parse_config(
      "dim = 2\nm = 2\na = 1\nalpha = 1\nn = 3\nT_final = 0.05\ndt = 0.005\nic = random amp=0.2\n");
  c.force = slv::parse_force("tabulated file=" + (dir / "force.txt").string(), 2);
  const auto tab = slv::run_config(c, std::nullopt, kQuiet);
  c.force = slv::parse_force("mode k=0,1 amp=0.5,0", 2);
  const auto mode = slv::run_config(c, std::nullopt, kQuiet);
  REQUIRE(tab.records.size() == mode.records.size());
  for (std::size_t i = 0; i < tab.records.size(); ++i) {
    CHECK(tab.records[i].total == doctest::Approx(mode.records[i].total).epsilon(1e-14));
    CHECK(tab.records[i].power_cum == doctest::Approx(mode.records[i].power_cum).epsilon(1e-14));
  }
  {
    std::ofstream t(dir / "bad.txt");
    t << "0.1 1 0 0 0 1\n0.0 1 0 0 0 1\n";
  }
  c.force = slv::parse_force("tabulated file=" + (dir / "bad.txt").string(), 2);
  CHECK_THROWS_AS(slv::run_config(c, std::nullopt, kQuiet), slv::ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("sweeps") {
  auto c = slv::parse_config(
      "dim = 2\nm = 2\na = 1\nalpha = 1\nn = 4\nT_final = 0.02\ndt = 0.004\nic = random amp=0.3 deg=1\n");
  const auto same = slv::sweep_n(c, {4, 4}, std::nullopt, kQuiet);
  REQUIRE(same.entries.size() == 2);
  CHECK(same.entries[1].T_L1_diff == 0.0);
  CHECK(same.entries[1].v_L2_diff == 0.0);
  for (double s : same.apriori_spread) CHECK(s == 1.0);
  CHECK_THROWS(slv::sweep_n(c, {4}, std::nullopt, kQuiet));
  CHECK_THROWS(slv::sweep_n(c, {8, 4}, std::nullopt, kQuiet));

  const auto dir = scratch("sweep");
  c.out_dir = dir.string();
  REQUIRE(slv::cmd_sweep_n(c, {2, 4, 8}, kQuiet) == 0);
  CHECK(fs::exists(dir / "n_8" / "diagnostics.csv"));
  const std::string table = slurp(dir / "sweep_n.csv");
  CHECK(std::count(table.begin(), table.end(), '\n') == 4);

  const auto one = slv::sweep_m(c, {2}, std::nullopt, kQuiet);
  REQUIRE(one.entries.size() == 1);
  CHECK(one.entries[0].u_L2_diff == 0.0);
  for (double s : one.final_spread) CHECK(s == 1.0);
  REQUIRE(slv::cmd_sweep_m(c, {1, 2}, kQuiet) == 0);
  CHECK(fs::exists(dir / "m_2" / "final.slv"));
  const std::string mt = slurp(dir / "sweep_m.csv");
  CHECK(std::count(mt.begin(), mt.end(), '\n') == 3);
  fs::remove_all(dir);
}

TEST_CASE("manufactured solution study edge cases") {
  auto c = slv::parse_config(
      "dim = 2\nm = 1\na = 2\nalpha = 1\nn = 1\nT_final = 0.1\ndt = 0.01\nforce = manufactured A=0 omega=6\n");
  slv::MmsOptions opt;
  opt.spatial_m = {1, 2};
  opt.spatial_dt = 0.01;
  const auto zero = slv::mms_study(c, opt, std::nullopt, kQuiet);
  for (const auto& r : zero.temporal) {
    CHECK(r.u_err == 0.0);
    CHECK(r.v_err == 0.0);
  }
  c.force.A = 1.0;
  CHECK_THROWS_AS(slv::mms_study(c, opt, std::nullopt, kQuiet), slv::ConfigError);
  c.force = slv::ForceConfig{};
  CHECK_THROWS_AS(slv::mms_study(c, opt, std::nullopt, kQuiet), slv::ConfigError);
}

TEST_CASE("property suite is deterministic") {
  slv::PropsOptions opt;
  opt.samples = 1;
  opt.seed = 42;
  std::ostringstream a;
  std::ostringstream b;
  slv::cmd_check_props(opt, a);
  slv::cmd_check_props(opt, b);
  CHECK(a.str() == b.str());
  CHECK_FALSE(a.str().empty());
  opt.samples = 0;
  std::ostringstream c;
  CHECK(slv::cmd_check_props(opt, c) == 1);
}

TEST_CASE("log-log slope") {
  CHECK(slv::loglog_slope({1.0, 2.0, 4.0}, {3.0, 12.0, 48.0}) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK_THROWS(slv::loglog_slope({1.0}, {1.0}));
}
