#include "slv/tensors.hpp"

#include <doctest.h>

#include <random>

using slv::SymTensor;
using T2 = SymTensor<double, 2>;
using T3 = SymTensor<double, 3>;

namespace {
template <int Dim>
SymTensor<double, Dim> random_tensor(std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  SymTensor<double, Dim> t;
  for (int k = 0; k < SymTensor<double, Dim>::kSize; ++k) t.storage()(k) = g(rng);
  return t;
}
}  // namespace

TEST_CASE("frobenius norm") {
  CHECK(slv::frobenius(T2::Zero()) == 0.0);
  T2 d;
  d(0, 0) = 3.0;
  d(1, 1) = 4.0;
  CHECK(slv::frobenius(d) == doctest::Approx(5.0).epsilon(1e-15));
  T2 off;
  off(0, 1) = 1.0;
  CHECK(off(1, 0) == 1.0);
  CHECK(slv::frobenius(off) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("contract") {
  std::mt19937_64 rng(1);
  const auto t = random_tensor<3>(rng);
  CHECK(slv::contract(t, T3::Zero()) == 0.0);
  CHECK(slv::contract(T3::Identity(), T3::Identity()) == 3.0);
  for (int i = 0; i < 100; ++i) {
    const auto s = random_tensor<3>(rng);
    const double f = slv::frobenius(s);
    CHECK(std::abs(slv::contract(s, s) - f * f) <= 1e-14 * f * f);
  }
}

TEST_CASE("contract matches the full matrix double-dot") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    const auto t = random_tensor<3>(rng);
    const auto s = random_tensor<3>(rng);
    const double full = t.matrix().cwiseProduct(s.matrix()).sum();
    CHECK(slv::contract(t, s) == doctest::Approx(full).epsilon(1e-14));
    CHECK(t.mandel().dot(s.mandel()) == doctest::Approx(full).epsilon(1e-14));
  }
}

TEST_CASE("contract is bilinear and symmetric") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 1000; ++i) {
    const auto t = random_tensor<2>(rng);
    const auto s = random_tensor<2>(rng);
    const auto r = random_tensor<2>(rng);
    const double a = u(rng);
    CHECK(slv::contract(t, s) == slv::contract(s, t));
    const double lhs = slv::contract(t * a + r, s);
    const double rhs = a * slv::contract(t, s) + slv::contract(r, s);
    CHECK(std::abs(lhs - rhs) <= 1e-13 * (1.0 + std::abs(lhs)));
  }
}

TEST_CASE("Cauchy-Schwarz on random pairs") {
  std::mt19937_64 rng(4);
  double worst = -1.0;
  for (int i = 0; i < 100000; ++i) {
    const auto t = random_tensor<3>(rng);
    const auto s = random_tensor<3>(rng);
    const double bound = slv::frobenius(t) * slv::frobenius(s);
    worst = std::max(worst, std::abs(slv::contract(t, s)) - bound * (1.0 + 1e-14));
  }
  CHECK(worst <= 0.0);
}

TEST_CASE("storage layout and symmetric part") {
  CHECK(T3::index(0, 0) == 0);
  CHECK(T3::index(0, 2) == 2);
  CHECK(T3::index(2, 1) == 4);
  CHECK(T3::index(2, 2) == 5);
  Eigen::Matrix3d m;
  m << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  const auto t = T3::FromMatrix(m);
  CHECK(t(0, 1) == 3.0);
  CHECK(t(2, 0) == 5.0);
  CHECK(slv::frobenius(T3::FromMandel(t.mandel()) - t) <= 1e-15 * slv::frobenius(t));
}

TEST_CASE("tensor field rejects non power-of-two grids") {
  CHECK_THROWS_AS(slv::SymTensorField<2>({6, 8}), std::invalid_argument);
  slv::SymTensorField<2> f({4, 8});
  CHECK(f.size() == 32);
  T2 t;
  t(0, 1) = 2.0;
  f.set(5, t);
  CHECK(f[5] == t);
}
