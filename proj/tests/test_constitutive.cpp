#include "slv/constitutive.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <limits>
#include <random>

using slv::ConstitutiveParams;
using T2 = slv::SymTensor<double, 2>;
using T3 = slv::SymTensor<double, 3>;

namespace {
ConstitutiveParams params(double a, std::optional<long> n, double alpha = 1.0) {
  ConstitutiveParams p;
  p.a = a;
  p.alpha = alpha;
  p.n = n;
  return p;
}

template <int Dim>
slv::SymTensor<double, Dim> random_direction(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  slv::SymTensor<double, Dim> t;
  for (int k = 0; k < slv::kSymSize<Dim>; ++k) t.storage()(k) = g(rng);
  return t / slv::frobenius(t);
}

template <int Dim>
slv::SymTensor<double, Dim> random_tensor(std::mt19937_64& rng, double max_log10 = 6.0) {
  std::uniform_real_distribution<double> e(-6.0, max_log10);
  return random_direction<Dim>(rng) * std::pow(10.0, e(rng));
}

T2 diag(double x, double y) {
  T2 t;
  t(0, 0) = x;
  t(1, 1) = y;
  return t;
}

double rel_err(const T3& x, const T3& y) {
  const double scale = std::max(slv::frobenius(y), std::numeric_limits<double>::min());
  return slv::frobenius(x - y) / scale;
}
}  // namespace

TEST_CASE("params validation") {
  CHECK_THROWS(params(-1.0, 2).validate());
  CHECK_THROWS(params(1.0, 2, 0.0).validate());
  CHECK_THROWS(params(1.0, 0).validate());
  CHECK_NOTHROW(params(0.5, std::nullopt).validate());
}

TEST_CASE("profile_f") {
  const auto p = params(1.0, std::nullopt);
  CHECK(slv::profile_f(0.0, p) == 0.0);
  CHECK(slv::profile_f(1.0, p) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(std::abs(slv::profile_f(1e6, params(2.0, std::nullopt)) - 1.0) < 1e-6);
  CHECK_THROWS(slv::profile_f(-1.0, p));
  double prev = 0.0;
  for (double s = 1e-3; s < 1e8; s *= 1.7) {
    const double v = slv::profile_f(s, params(0.3, std::nullopt));
    CHECK(v > prev);
    CHECK(v < 1.0);
    prev = v;
  }
}

TEST_CASE("apply_F and apply_Fn examples") {
  const auto p1 = params(1.0, 1);
  CHECK(slv::apply_F(T2::Zero(), p1) == T2::Zero());
  CHECK(slv::apply_Fn(T2::Zero(), p1) == T2::Zero());
  const auto f = slv::apply_F(diag(1.0, 0.0), p1);
  CHECK(f(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(f(1, 1) == 0.0);
  // n = 1, |T| = 1: T/2 + T/2.
  T2 t;
  t(0, 1) = M_SQRT1_2;
  const auto fn = slv::apply_Fn(t, p1);
  CHECK(slv::frobenius(fn - t) <= 1e-15);
  CHECK_THROWS(slv::apply_Fn(t, params(1.0, std::nullopt)));
}

TEST_CASE("F is strain limited and F_n approaches F at rate |T|/n") {
  std::mt19937_64 rng(11);
  for (double a : {0.2, 1.0, 3.0}) {
    double sup = 0.0;
    for (int i = 0; i < 2000; ++i) {
      const auto t = random_tensor<3>(rng, 8.0);
      const double r = slv::frobenius(slv::apply_F(t, params(a, std::nullopt)));
      // 1 - f(s) ~ s^(-a) / a rounds to zero once s^(-a) drops below the unit roundoff.
      if (std::pow(slv::frobenius(t), -a) > 1e-14)
        CHECK(r < 1.0);
      else
        CHECK(r <= 1.0 + 4 * std::numeric_limits<double>::epsilon());
      sup = std::max(sup, r);
      for (long n : {1L, 10L, 1000L}) {
        const auto p = params(a, n);
        const double gap = slv::frobenius(slv::apply_Fn(t, p) - slv::apply_F(t, p));
        CHECK(gap <= slv::frobenius(t) / n * (1.0 + 1e-14));
      }
    }
    const auto far = random_direction<3>(rng) * std::pow(10.0, 7.0 / a);
    CHECK(slv::frobenius(slv::apply_F(far, params(a, std::nullopt))) > 1.0 - 1e-6);
    CHECK(sup > (a < 1.0 ? 0.8 : 0.99));
  }
}

TEST_CASE("radiality: F commutes with rotations") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g;
  for (int i = 0; i < 200; ++i) {
    Eigen::Matrix3d m = Eigen::Matrix3d::NullaryExpr([&](Eigen::Index, Eigen::Index) { return g(rng); });
    const Eigen::Matrix3d q = Eigen::HouseholderQR<Eigen::Matrix3d>(m).householderQ();
    const auto t = random_tensor<3>(rng, 3.0);
    const auto p = params(0.7, 5);
    const auto lhs = slv::apply_F(T3::FromMatrix(q * t.matrix() * q.transpose()), p);
    const auto rhs = T3::FromMatrix(q * slv::apply_F(t, p).matrix() * q.transpose());
    CHECK(slv::frobenius(lhs - rhs) <= 1e-13 * (1.0 + slv::frobenius(rhs)));
    const auto lhs_n = slv::apply_Fn(T3::FromMatrix(q * t.matrix() * q.transpose()), p);
    const auto rhs_n = T3::FromMatrix(q * slv::apply_Fn(t, p).matrix() * q.transpose());
    CHECK(slv::frobenius(lhs_n - rhs_n) <= 1e-13 * (1.0 + slv::frobenius(rhs_n)));
  }
}

TEST_CASE("monotonicity of F and F_n") {
  std::mt19937_64 rng(13);
  for (double a : {0.1, 0.5, 1.0, 2.0})
    for (std::optional<long> n : {std::optional<long>{}, std::optional<long>{1}, std::optional<long>{64}}) {
      const auto p = params(a, n);
      for (int i = 0; i < 2000; ++i) {
        const auto t = random_tensor<3>(rng, 3.0);
        const auto s = random_tensor<3>(rng, 3.0);
        const auto ft = n ? slv::apply_Fn(t, p) : slv::apply_F(t, p);
        const auto fs = n ? slv::apply_Fn(s, p) : slv::apply_F(s, p);
        CHECK(slv::contract(t - s, ft - fs) > 0.0);
      }
    }
}

TEST_CASE("invert_Fn roundtrips") {
  std::mt19937_64 rng(14);
  double worst = 0.0;
  for (double a : {0.1, 0.5, 1.0, 2.0, 4.0})
    for (long n : {1L, 2L, 16L, 256L}) {
      const auto p = params(a, n);
      for (int i = 0; i < 1000; ++i) {
        const auto t = random_tensor<3>(rng);
        worst = std::max(worst, rel_err(slv::invert_Fn(slv::apply_Fn(t, p), p), t));
        const auto e = random_tensor<3>(rng, 0.0);
        worst = std::max(worst, rel_err(slv::apply_Fn(slv::invert_Fn(e, p), p), e));
      }
    }
  CHECK(worst <= 1e-10);
  CHECK(slv::invert_Fn(T3::Zero(), params(1.0, 3)) == T3::Zero());
  T3 bad;
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS(slv::invert_Fn(bad, params(1.0, 3)));
}

TEST_CASE("invert_Fn against a bisection oracle") {
  const auto p = params(1.0, 1);
  T2 e;
  e(0, 0) = 0.6;
  e(1, 1) = 0.8;
  const auto t = slv::invert_Fn(e, p);
  CHECK(slv::frobenius(t - e) <= 1e-12);
  std::mt19937_64 rng(15);
  for (double a : {0.3, 1.5})
    for (long n : {3L, 40L}) {
      const auto q = params(a, n);
      const slv::RadialProfile<double> prof(q);
      for (double y : {1e-8, 0.3, 0.999, 5.0, 1e3}) {
        double hi = 1.0;
        while (prof.value(hi) < y) hi *= 2.0;
        const double oracle = slv::roots::bisect([&](double s) { return prof.value(s) - y; }, 0.0, hi);
        const auto dir = random_direction<2>(rng);
        // Relative accuracy in s is limited by the conditioning g / (s g').
        const double cond = std::max(1.0, prof.value(oracle) / (oracle * prof.slope(oracle)));
        CHECK(slv::frobenius(slv::invert_Fn(dir * y, q)) ==
              doctest::Approx(oracle).epsilon(1e-12 * cond));
      }
    }
}

TEST_CASE("invert_F and invert_F_alpha") {
  const auto p = params(1.0, std::nullopt);
  CHECK(slv::invert_F(T2::Zero(), p) == T2::Zero());
  CHECK(slv::frobenius(slv::invert_F(diag(0.5, 0.0), p)) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(slv::invert_F(diag(1.0, 0.0), p), slv::SaturationError);
  CHECK_THROWS_AS(slv::invert_F(diag(0.0, 2.0), p), slv::SaturationError);
  // Blow-up next to the boundary: |E| = 1 - 1e-15 gives |T| ~ 1e15.
  const double near = 1.0 - 1e-15;
  CHECK(slv::frobenius(slv::invert_F(diag(near, 0.0), p)) > 1e14);

  const auto p2 = params(1.0, std::nullopt, 2.0);
  CHECK(slv::frobenius(slv::invert_F_alpha(diag(0.25, 0.0), p2)) ==
        doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(slv::invert_F_alpha(diag(0.5, 0.0), p2), slv::SaturationError);

  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> u(0.0, 0.999);
  for (double a : {0.2, 1.0, 3.0}) {
    const auto q = params(a, std::nullopt);
    for (int i = 0; i < 500; ++i) {
      const auto e = random_direction<3>(rng) * u(rng);
      CHECK(slv::frobenius(slv::invert_F_alpha(e, q) - slv::invert_F(e, q)) == 0.0);
      const auto back = slv::apply_F(slv::invert_F(e, q), q);
      CHECK(rel_err(back, e) <= 1e-12);
    }
  }
}

TEST_CASE("Jacobian at zero, by finite differences") {
  std::mt19937_64 rng(17);
  for (long n : {1L, 2L, 16L}) {
    const auto p = params(2.0, n);
    const double slope0 = slv::RadialProfile<double>(p).phi(0.0);
    CHECK(slope0 == doctest::Approx(n == 1 ? 1.5 : 1.0 + 1.0 / n).epsilon(1e-15));
    const auto j = slv::jacobian_Fn(T3::Zero(), p);
    CHECK((j - slope0 * slv::SymOperator<double, 3>::Identity()).norm() == 0.0);
    const auto u = random_direction<3>(rng);
    // The regulariser has a |T|^(1-1/n) cusp at 0, so the difference
    // quotient converges at that rate.
    for (double h : {1e-6, 1e-9, 1e-12}) {
      const auto fd = (slv::apply_Fn(u * h, p) / h).mandel();
      CHECK((fd - j * u.mandel()).norm() <= 1e-8 + 1.01 * std::pow(h, 1.0 - 1.0 / n) / n);
    }
  }
}

TEST_CASE("Jacobian matches finite differences with O(h) error") {
  std::mt19937_64 rng(18);
  for (double a : {0.3, 1.0, 2.5})
    for (long n : {1L, 8L}) {
      const auto p = params(a, n);
      for (int i = 0; i < 200; ++i) {
        const auto t = random_tensor<3>(rng, 2.0);
        const auto u = random_direction<3>(rng);
        const auto j = slv::jacobian_Fn(t, p);
        const auto lin = (j * u.mandel()).eval();
        // Steps relative to |T|; the second derivative scales like 1/|T|.
        auto err = [&](double h) {
          const double step = h * slv::frobenius(t);
          const auto fd = ((slv::apply_Fn(t + u * step, p) - slv::apply_Fn(t, p)) / step).mandel();
          return (fd - lin).norm() / lin.norm();
        };
        const double e1 = err(1e-4);
        const double e2 = err(5e-5);
        CHECK(e1 <= 1e-3);
        // Halving h roughly halves the error once it is above roundoff.
        if (e1 > 1e-8) CHECK(e2 <= 0.75 * e1);
      }
    }
}

TEST_CASE("Jacobian is symmetric positive definite") {
  std::mt19937_64 rng(19);
  double min_eig = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 10000; ++i) {
    const double a = (i % 4 == 0) ? 0.1 : (i % 4 == 1) ? 0.5 : (i % 4 == 2) ? 1.0 : 2.0;
    const auto p = params(a, 1 + i % 50);
    const auto j = slv::jacobian_Fn(random_tensor<3>(rng), p);
    CHECK((j - j.transpose()).norm() <= 1e-15 * j.norm());
    Eigen::SelfAdjointEigenSolver<slv::SymOperator<double, 3>> es(j);
    min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
  }
  CHECK(min_eig > 0.0);
}

TEST_CASE("inverse Jacobian inverts the Jacobian and grows at most like 1 + |T|^(a+1)") {
  std::mt19937_64 rng(20);
  for (double a : {0.2, 1.0, 2.0})
    for (long n : {1L, 16L, 1024L}) {
      const auto p = params(a, n);
      double worst_ratio = 0.0;
      double last_ratio = 0.0;
      // Large n compresses the reachable range: F_n^{-1}(E) overflows once
      // |E| exceeds f_n(1e300).
      const double y_max = std::min(1e8, slv::RadialProfile<double>(p).value(1e300));
      for (double y = 1e-4; y < y_max; y *= 2.0) {
        const auto e = random_direction<3>(rng) * y;
        const auto ji = slv::jacobian_inverse_Fn(e, p);
        const auto t = slv::invert_Fn(e, p);
        const auto j = slv::jacobian_Fn(t, p);
        CHECK((ji * j - slv::SymOperator<double, 3>::Identity()).norm() <= 1e-10);
        const double ratio = ji.norm() / (1.0 + std::pow(slv::frobenius(t), a + 1.0));
        worst_ratio = std::max(worst_ratio, ratio);
        last_ratio = ratio;
      }
      // One constant covers the whole sweep; the ratio does not creep up at the far end.
      CHECK(worst_ratio < 100.0);
      CHECK(last_ratio <= worst_ratio);
    }
}

TEST_CASE("h_n basics and derivative identity") {
  const auto p = params(0.5, 4);
  CHECK(slv::h_n(0.0, p) == 0.0);
  CHECK_THROWS(slv::h_n(-1.0, p));
  double prev = 0.0;
  for (double s = 1e-6; s < 1e10; s *= 3.0) {
    const double v = slv::h_n(s, p);
    CHECK(v > prev);
    prev = v;
  }
  // Along T(t) = A + tB: T : dF_n(T)/dt = d/dt h_n(|T|^2) / 2.
  std::mt19937_64 rng(21);
  for (double a : {0.3, 1.0, 2.0})
    for (long n : {1L, 7L}) {
      const auto q = params(a, n);
      for (int i = 0; i < 20; ++i) {
        const auto A = random_tensor<3>(rng, 1.5);
        const auto B = random_direction<3>(rng) * std::max(1.0, slv::frobenius(A));
        const double h = 1e-4;
        auto path = [&](double t) { return A + B * t; };
        const auto dF = (slv::apply_Fn(path(h), q) - slv::apply_Fn(path(-h), q)) / (2 * h);
        const double lhs = slv::contract(A, dF);
        auto hh = [&](double t) {
          const double r = slv::frobenius(path(t));
          return 0.5 * slv::h_n(r * r, q);
        };
        const double rhs = (hh(h) - hh(-h)) / (2 * h);
        CHECK(std::abs(lhs - rhs) <= 1e-5 * (1.0 + std::abs(lhs)));
      }
    }
}

TEST_CASE("h_n sandwich bounds") {
  // Lower bound with the explicit constant 2^(-1/a)/(1-a) (a < 1).
  for (double a : {0.2, 0.5, 0.8})
    for (long n : {1L, 4L, 32L}) {
      const auto p = params(a, n);
      const double c = std::exp2(-1.0 / a) / (1.0 - a);
      for (double s = 1e-6; s < 1e12; s *= 5.0) {
        const double lower = c * ((s >= 1.0 ? std::pow(s, 0.5 - 0.5 * a) : 0.0) - 1.0);
        CHECK(slv::h_n(s, p) >= lower);
      }
    }
  // Upper growth: the regulariser contributes s^((n+1)/(2n)) asymptotically,
  // so one constant C covers h_n(s) <= C (max(s^(1/n), s^((n+1)/(2n))) + s^((1-a)/2)[s>=1] + 1).
  for (double a : {0.3, 1.0})
    for (long n : {1L, 4L, 32L}) {
      const auto p = params(a, n);
      double worst = 0.0;
      double literal_last = 0.0;
      double literal_first_big = -1.0;
      for (double s = 1e-6; s < 1e14; s *= 5.0) {
        const double h = slv::h_n(s, p);
        const double bulk = (s >= 1.0 ? std::pow(s, 0.5 - 0.5 * a) : 0.0) + 1.0;
        const double growth = std::max(std::pow(s, 1.0 / n), std::pow(s, (n + 1.0) / (2.0 * n)));
        worst = std::max(worst, h / (growth + bulk));
        const double literal = h / (std::pow(s, 1.0 / n) + bulk);
        if (s > 1e6 && literal_first_big < 0) literal_first_big = literal;
        literal_last = literal;
      }
      CHECK(worst < 4.0);
      // The literal s^(1/n) growth only covers n = 1.
      if (n == 4) CHECK(literal_last > 10.0 * literal_first_big);
    }
}

TEST_CASE("stored energy density") {
  const auto p = params(1.0, std::nullopt, 1.0);
  CHECK(slv::stored_energy_density(T2::Zero(), p) == 0.0);
  CHECK(std::isinf(slv::stored_energy_density(diag(2.0, 0.0), p)));
  CHECK(std::isinf(slv::stored_energy_density(diag(1.0, 0.0), p)));
  const auto p2 = params(1.0, std::nullopt, 2.0);
  CHECK(std::isinf(slv::stored_energy_density(diag(1.0, 0.0), p2)));

  // Legendre oracle: f_alpha^*(E) = (1/alpha) int_0^{alpha|E|} f^{-1}(z) dz.
  for (double a : {0.3, 1.0, 2.0, 3.5})
    for (double alpha : {0.5, 1.0, 3.0}) {
      const auto q = params(a, std::nullopt, alpha);
      const slv::RadialProfile<double> prof(a, std::nullopt);
      for (double frac : {1e-4, 0.1, 0.5, 0.9, 0.99}) {
        const double y = frac / alpha;
        const double oracle =
            slv::quad::integrate([&](double z) { return prof.unregularised_inverse(z); }, 0.0, frac,
                                 1e-13) / alpha;
        CHECK(slv::stored_energy_density_radial(y, q) == doctest::Approx(oracle).epsilon(1e-8));
      }
    }

  // Fenchel-Young equality at E = F_alpha(T).
  std::mt19937_64 rng(22);
  for (double a : {0.4, 1.0, 2.0}) {
    const auto q = params(a, std::nullopt, 1.7);
    for (int i = 0; i < 200; ++i) {
      const auto t = random_tensor<2>(rng, 3.0);
      const auto e = slv::apply_F(t, q) / q.alpha;
      const double lhs = slv::potential_f_alpha(t, q) + slv::stored_energy_density(e, q);
      const double rhs = slv::contract(e, t);
      CHECK(std::abs(lhs - rhs) <= 1e-8 * (1.0 + std::abs(rhs)));
    }
  }

  // Quadratic behaviour at the origin: f_alpha^*(E) ~ (alpha/2)|E|^2.
  for (double y : {1e-3, 1e-4}) {
    const auto q = params(1.0, std::nullopt, 2.0);
    CHECK(slv::stored_energy_density_radial(y, q) == doctest::Approx(q.alpha * y * y / 2).epsilon(4 * y));
  }
}

TEST_CASE("radial profile sandwich gaps") {
  for (double y : {0.0, 0.3, 1.0, 7.0, 1e5}) {
    const auto [lo, hi] = slv::lemma1_gap(y, 1.0);
    CHECK(std::abs(lo) <= 1e-12 * (1 + y));
    CHECK(std::abs(hi) <= 1e-12 * (1 + y));
  }
  const auto [lo, hi] = slv::lemma1_gap(1.0, 2.0);
  CHECK(std::abs(lo) <= 1e-15);
  CHECK(hi >= 0.0);
  CHECK_THROWS(slv::lemma1_gap(-1.0, 1.0));
  CHECK_THROWS(slv::lemma1_gap(1.0, 0.0));
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> ly(-6.0, 6.0);
  std::uniform_real_distribution<double> ua(1e-3, 5.0);
  double worst = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double y = std::pow(10.0, ly(rng));
    const auto [l, u] = slv::lemma1_gap(y, ua(rng));
    worst = std::min({worst, l / (1 + y), u / (1 + y)});
  }
  CHECK(worst >= -1e-12);
}

TEST_CASE("strong monotonicity gap") {
  const auto p = params(1.0, std::nullopt);
  CHECK(slv::lemma2_gap(diag(0.3, 0.1), diag(0.3, 0.1), p) == 0.0);
  CHECK(slv::lemma2_gap(diag(1.0, 0.0), T2::Zero(), p) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(slv::lemma2_constant(2.0) == 1.0);
  CHECK(slv::lemma2_constant(0.5) == doctest::Approx(std::exp2(-1.5)));
  CHECK(slv::lemma2_constant_min_form(2.0) == doctest::Approx(std::exp2(-1.5)));
  CHECK(slv::lemma2_constant_min_form(0.5) == 1.0);
  std::mt19937_64 rng(24);
  std::uniform_real_distribution<double> lr(-4.0, 3.0);
  for (double a : {0.1, 0.5, 1.0, 2.0}) {
    const auto q = params(a, std::nullopt);
    double worst = 0.0;
    for (int i = 0; i < 20000; ++i) {
      const auto t = random_direction<3>(rng) * std::pow(10.0, lr(rng));
      const auto s = random_direction<3>(rng) * std::pow(10.0, lr(rng));
      worst = std::min(worst, slv::lemma2_gap(t, s, q));
    }
    CHECK(worst >= -1e-12);
  }
  // Both literal forms exceed the best constant for a < 1. Along T = S + h U
  // with |S| = 1 the gap tends to h^2 (f'(1) - kappa / 3^(1+a)) < 0.
  const auto q = params(0.5, std::nullopt);
  const T2 s1 = diag(1.0, 0.0);
  const T2 t1 = diag(1.0 + 1e-3, 0.0);
  CHECK(slv::lemma2_gap(t1, s1, q, slv::lemma2_constant_min_form(0.5)) < 0.0);
  CHECK(slv::lemma2_gap(t1, s1, q, slv::lemma2_constant_max_form(0.5)) < 0.0);
  CHECK(slv::lemma2_gap(t1, s1, q) > 0.0);
  // For a >= 1 both literal forms are at most 1 and hold.
  CHECK(slv::lemma2_constant_max_form(2.0) == 1.0);
}
