#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace slv {

/// Number of independent entries of a symmetric Dim x Dim tensor.
template <int Dim>
inline constexpr int kSymSize = Dim * (Dim + 1) / 2;

/// Symmetric Dim x Dim tensor with upper-triangular storage.
///
/// Entries are stored row by row over the upper triangle, so for Dim = 3 the
/// order is (0,0) (0,1) (0,2) (1,1) (1,2) (2,2). Symmetry holds by
/// construction: (i,j) and (j,i) address the same slot.
template <typename Scalar, int Dim>
class SymTensor {
  static_assert(Dim >= 1 && Dim <= 3, "SymTensor supports Dim in {1,2,3}");

 public:
  static constexpr int kSize = kSymSize<Dim>;
  using Storage = Eigen::Matrix<Scalar, kSize, 1>;
  using Matrix = Eigen::Matrix<Scalar, Dim, Dim>;

  SymTensor() : v_(Storage::Zero()) {}
  explicit SymTensor(const Storage& v) : v_(v) {}

  static SymTensor Zero() { return SymTensor(); }
  static SymTensor Identity() {
    SymTensor t;
    for (int i = 0; i < Dim; ++i) t(i, i) = Scalar(1);
    return t;
  }

  /// Symmetric part of a full matrix.
  static SymTensor FromMatrix(const Matrix& m) {
    SymTensor t;
    for (int i = 0; i < Dim; ++i)
      for (int j = i; j < Dim; ++j) t(i, j) = Scalar(0.5) * (m(i, j) + m(j, i));
    return t;
  }

  static constexpr int index(int i, int j) {
    if (i > j) {
      const int tmp = i;
      i = j;
      j = tmp;
    }
    return i * Dim - i * (i - 1) / 2 + (j - i);
  }

  static constexpr bool is_diagonal_slot(int k) {
    for (int i = 0; i < Dim; ++i)
      if (index(i, i) == k) return true;
    return false;
  }

  Scalar& operator()(int i, int j) { return v_(index(i, j)); }
  Scalar operator()(int i, int j) const { return v_(index(i, j)); }

  const Storage& storage() const { return v_; }
  Storage& storage() { return v_; }

  Matrix matrix() const {
    Matrix m;
    for (int i = 0; i < Dim; ++i)
      for (int j = 0; j < Dim; ++j) m(i, j) = (*this)(i, j);
    return m;
  }

  /// Orthonormal (Mandel) coordinates: off-diagonal slots scaled by sqrt(2),
  /// so the Euclidean inner product of the coordinates equals T:S.
  Storage mandel() const {
    Storage out = v_;
    for (int k = 0; k < kSize; ++k)
      if (!is_diagonal_slot(k)) out(k) *= Scalar(M_SQRT2);
    return out;
  }
  static SymTensor FromMandel(const Storage& m) {
    Storage v = m;
    for (int k = 0; k < kSize; ++k)
      if (!is_diagonal_slot(k)) v(k) /= Scalar(M_SQRT2);
    return SymTensor(v);
  }

  SymTensor& operator+=(const SymTensor& o) {
    v_ += o.v_;
    return *this;
  }
  SymTensor& operator-=(const SymTensor& o) {
    v_ -= o.v_;
    return *this;
  }
  SymTensor& operator*=(Scalar s) {
    v_ *= s;
    return *this;
  }

  friend SymTensor operator+(SymTensor a, const SymTensor& b) { return a += b; }
  friend SymTensor operator-(SymTensor a, const SymTensor& b) { return a -= b; }
  friend SymTensor operator-(SymTensor a) {
    a.v_ = -a.v_;
    return a;
  }
  friend SymTensor operator*(SymTensor a, Scalar s) { return a *= s; }
  friend SymTensor operator*(Scalar s, SymTensor a) { return a *= s; }
  friend SymTensor operator/(SymTensor a, Scalar s) {
    a.v_ /= s;
    return a;
  }
  friend bool operator==(const SymTensor& a, const SymTensor& b) { return a.v_ == b.v_; }

  bool allFinite() const { return v_.allFinite(); }

 private:
  Storage v_;
};

/// Double contraction T:S = sum_ij T_ij S_ij (off-diagonal slots count twice).
template <typename Scalar, int Dim>
Scalar contract(const SymTensor<Scalar, Dim>& t, const SymTensor<Scalar, Dim>& s) {
  Scalar acc(0);
  for (int i = 0; i < Dim; ++i) {
    acc += t(i, i) * s(i, i);
    for (int j = i + 1; j < Dim; ++j) acc += Scalar(2) * t(i, j) * s(i, j);
  }
  return acc;
}

template <typename Scalar, int Dim>
Scalar frobenius(const SymTensor<Scalar, Dim>& t) {
  using std::abs;
  using std::isfinite;
  using std::sqrt;
  const Scalar sq = contract(t, t);
  if (isfinite(sq) && sq > Scalar(1e-290)) return sqrt(sq);
  // Rescale when the squares overflow or underflow.
  const Scalar big = t.storage().cwiseAbs().maxCoeff();
  if (big == Scalar(0) || !isfinite(big)) return big;
  const SymTensor<Scalar, Dim> u = t / big;
  return big * sqrt(contract(u, u));
}

/// Symmetric tensor values on a uniform periodic grid of (0,1)^Dim.
///
/// Nodes are flattened row-major (last axis fastest); column k of values()
/// holds storage slot k of every node.
template <int Dim>
class SymTensorField {
 public:
  static constexpr int kSize = kSymSize<Dim>;
  using Tensor = SymTensor<double, Dim>;
  using Values = Eigen::Matrix<double, Eigen::Dynamic, kSize>;
  using Shape = std::array<int, Dim>;

  SymTensorField() = default;
  explicit SymTensorField(const Shape& shape) : shape_(shape) {
    for (int n : shape) {
      if (n < 1 || (n & (n - 1)) != 0)
        throw std::invalid_argument("grid extent " + std::to_string(n) + " is not a power of two");
    }
    values_ = Values::Zero(node_count(shape), kSize);
  }

  static Eigen::Index node_count(const Shape& shape) {
    Eigen::Index c = 1;
    for (int n : shape) c *= n;
    return c;
  }

  const Shape& shape() const { return shape_; }
  Eigen::Index size() const { return values_.rows(); }

  Tensor operator[](Eigen::Index node) const {
    return Tensor(values_.row(node).transpose());
  }
  void set(Eigen::Index node, const Tensor& t) { values_.row(node) = t.storage().transpose(); }

  const Values& values() const { return values_; }
  Values& values() { return values_; }

 private:
  Shape shape_{};
  Values values_;
};

}  // namespace slv
