#pragma once

#include "slv/tensors.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <array>
#include <cmath>
#include <complex>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace slv {

/// Truncation degree and collocation grid of a Fourier-Galerkin space.
template <int Dim>
struct SpectralConfig {
  using Shape = std::array<int, Dim>;

  int m = 1;
  Shape grid{};

  /// Smallest power of two that is at least 2(m+1).
  static int default_extent(int m) {
    int n = 1;
    while (n < 2 * (m + 1)) n *= 2;
    return n;
  }
  static SpectralConfig make(int m) {
    SpectralConfig c;
    c.m = m;
    c.grid.fill(default_extent(m));
    c.validate();
    return c;
  }
  static SpectralConfig make(int m, const Shape& grid) {
    SpectralConfig c{m, grid};
    c.validate();
    return c;
  }

  void validate() const {
    if (m < 1) throw std::invalid_argument("m must be >= 1");
    for (int n : grid) {
      if (n < 1 || (n & (n - 1)) != 0)
        throw std::invalid_argument("grid extent " + std::to_string(n) + " is not a power of two");
      if (n < 2 * (m + 1))
        throw std::invalid_argument("grid extent " + std::to_string(n) + " is below 2(m+1) = " +
                                    std::to_string(2 * (m + 1)));
    }
  }

  friend bool operator==(const SpectralConfig&, const SpectralConfig&) = default;
};

/// Real orthonormal trigonometric basis of V_m on the periodic unit box.
///
/// Modes are the wavevectors k with 0 < |k|_inf <= m whose first nonzero
/// component is positive, in lexicographic order of (k_1, ..., k_d) over
/// [-m, m]^d. Each mode carries sqrt(2) cos(2 pi k.x) and sqrt(2) sin(2 pi k.x);
/// coefficient row 2i is the cosine and row 2i+1 the sine of mode i.
///
/// Grid nodes are x_j = j / N per axis, flattened row-major (last axis fastest).
template <int Dim>
class SpectralBasis {
  static_assert(Dim >= 1 && Dim <= 3, "SpectralBasis supports Dim in {1,2,3}");

 public:
  using Config = SpectralConfig<Dim>;
  using Shape = typename Config::Shape;
  using Mode = std::array<int, Dim>;
  using Spectrum = Eigen::MatrixXcd;  // rows: grid-ordered wavevectors, cols: fields
  using Real = Eigen::MatrixXd;       // rows: grid nodes, cols: fields

  explicit SpectralBasis(const Config& config) : config_(config) {
    config_.validate();
    nodes_ = 1;
    for (int n : config_.grid) nodes_ *= n;
    const int m = config_.m;
    const int side = 2 * m + 1;
    int total = 1;
    for (int i = 0; i < Dim; ++i) total *= side;
    lookup_.assign(static_cast<std::size_t>(total), -1);
    for (int flat = 0; flat < total; ++flat) {
      Mode k;
      int rest = flat;
      for (int a = Dim - 1; a >= 0; --a) {
        k[a] = rest % side - m;
        rest /= side;
      }
      if (!in_half_space(k)) continue;
      lookup_[static_cast<std::size_t>(flat)] = static_cast<int>(modes_.size());
      modes_.push_back(k);
      plus_.push_back(grid_index(k));
      Mode neg;
      for (int a = 0; a < Dim; ++a) neg[a] = -k[a];
      minus_.push_back(grid_index(neg));
    }
    conj_.resize(static_cast<std::size_t>(nodes_));
    for (Eigen::Index r = 0; r < nodes_; ++r) conj_[static_cast<std::size_t>(r)] = conjugate_index(r);
  }

  static bool in_half_space(const Mode& k) {
    for (int a = 0; a < Dim; ++a) {
      if (k[a] > 0) return true;
      if (k[a] < 0) return false;
    }
    return false;
  }

  const Config& config() const { return config_; }
  int m() const { return config_.m; }
  const Shape& grid() const { return config_.grid; }
  Eigen::Index node_count() const { return nodes_; }
  int mode_count() const { return static_cast<int>(modes_.size()); }
  int coeff_rows() const { return 2 * mode_count(); }
  const Mode& mode(int i) const { return modes_[static_cast<std::size_t>(i)]; }
  const std::vector<Mode>& modes() const { return modes_; }

  /// Index of mode k, or -1 when k is outside the half-space table.
  int mode_index(const Mode& k) const {
    const int m = config_.m;
    const int side = 2 * m + 1;
    int flat = 0;
    for (int a = 0; a < Dim; ++a) {
      if (k[a] < -m || k[a] > m) return -1;
      flat = flat * side + (k[a] + m);
    }
    return lookup_[static_cast<std::size_t>(flat)];
  }

  /// Flat grid position of the wavevector k (taken modulo the grid).
  Eigen::Index grid_index(const Mode& k) const {
    Eigen::Index flat = 0;
    for (int a = 0; a < Dim; ++a) {
      const int n = config_.grid[a];
      flat = flat * n + ((k[a] % n) + n) % n;
    }
    return flat;
  }
  Eigen::Index plus_index(int i) const { return plus_[static_cast<std::size_t>(i)]; }
  Eigen::Index minus_index(int i) const { return minus_[static_cast<std::size_t>(i)]; }

  /// Signed wavevector component along `axis` at flat grid position `flat`;
  /// the Nyquist index maps to 0 so derivatives of real fields stay real.
  int wavenumber(Eigen::Index flat, int axis) const {
    Eigen::Index rest = flat;
    int j = 0;
    for (int a = Dim - 1; a >= 0; --a) {
      const int n = config_.grid[a];
      if (a == axis) j = static_cast<int>(rest % n);
      rest /= n;
    }
    const int n = config_.grid[axis];
    if (2 * j == n) return 0;
    return 2 * j < n ? j : j - n;
  }

  /// Coordinates of node `flat`.
  std::array<double, Dim> point(Eigen::Index flat) const {
    std::array<double, Dim> x;
    Eigen::Index rest = flat;
    for (int a = Dim - 1; a >= 0; --a) {
      const int n = config_.grid[a];
      x[a] = static_cast<double>(rest % n) / n;
      rest /= n;
    }
    return x;
  }

  /// Grid values of real fields from their Hermitian spectra:
  /// out(x) = sum_k spec(k) exp(2 pi i k.x). Columns are packed two per
  /// complex transform.
  Real synthesize(const Spectrum& spec) const {
    Real out(nodes_, spec.cols());
    std::vector<std::complex<double>> work(static_cast<std::size_t>(nodes_));
    for (Eigen::Index c = 0; c < spec.cols(); c += 2) {
      const bool pair = c + 1 < spec.cols();
      for (Eigen::Index r = 0; r < nodes_; ++r) {
        const std::complex<double> b = pair ? spec(r, c + 1) : 0.0;
        work[static_cast<std::size_t>(r)] = spec(r, c) + std::complex<double>(-b.imag(), b.real());
      }
      transform(work, true);
      for (Eigen::Index r = 0; r < nodes_; ++r) {
        out(r, c) = work[static_cast<std::size_t>(r)].real();
        if (pair) out(r, c + 1) = work[static_cast<std::size_t>(r)].imag();
      }
    }
    return out;
  }

  /// Normalised spectra of real grid fields: spec(k) = N^{-1} sum_x v(x) exp(-2 pi i k.x).
  Spectrum analyze(const Real& vals) const {
    if (vals.rows() != nodes_) throw std::invalid_argument("analyze: grid size mismatch");
    Spectrum out(nodes_, vals.cols());
    std::vector<std::complex<double>> work(static_cast<std::size_t>(nodes_));
    const double scale = 1.0 / static_cast<double>(nodes_);
    for (Eigen::Index c = 0; c < vals.cols(); c += 2) {
      const bool pair = c + 1 < vals.cols();
      for (Eigen::Index r = 0; r < nodes_; ++r)
        work[static_cast<std::size_t>(r)] = {vals(r, c), pair ? vals(r, c + 1) : 0.0};
      transform(work, false);
      for (Eigen::Index r = 0; r < nodes_; ++r) {
        const std::complex<double> z = work[static_cast<std::size_t>(r)] * scale;
        if (!pair) {
          out(r, c) = z;
          continue;
        }
        const std::complex<double> zc =
            std::conj(work[static_cast<std::size_t>(conj_[static_cast<std::size_t>(r)])]) * scale;
        out(r, c) = 0.5 * (z + zc);
        const std::complex<double> d = z - zc;
        out(r, c + 1) = std::complex<double>(0.5 * d.imag(), -0.5 * d.real());
      }
    }
    return out;
  }

  /// Flat position of -k given the flat position of k.
  Eigen::Index conjugate_index(Eigen::Index flat) const {
    Eigen::Index out = 0;
    Eigen::Index stride = 1;
    Eigen::Index rest = flat;
    for (int a = Dim - 1; a >= 0; --a) {
      const int n = config_.grid[a];
      const Eigen::Index j = rest % n;
      rest /= n;
      out += ((n - j) % n) * stride;
      stride *= n;
    }
    return out;
  }

 private:
  // In-place multidimensional DFT, line by line along each axis. The inverse
  // direction is unscaled.
  void transform(std::vector<std::complex<double>>& data, bool inverse) const {
    thread_local Eigen::FFT<double> fft;
    thread_local std::vector<std::complex<double>> line_in;
    thread_local std::vector<std::complex<double>> line_out;
    fft.SetFlag(Eigen::FFT<double>::Unscaled);
    Eigen::Index stride = 1;
    for (int a = Dim - 1; a >= 0; --a) {
      const int n = config_.grid[a];
      line_in.resize(static_cast<std::size_t>(n));
      line_out.resize(static_cast<std::size_t>(n));
      const Eigen::Index block = stride * n;
      for (Eigen::Index outer = 0; outer < nodes_; outer += block) {
        for (Eigen::Index inner = 0; inner < stride; ++inner) {
          const Eigen::Index base = outer + inner;
          for (int j = 0; j < n; ++j)
            line_in[static_cast<std::size_t>(j)] = data[static_cast<std::size_t>(base + j * stride)];
          if (inverse)
            fft.inv(line_out, line_in);
          else
            fft.fwd(line_out, line_in);
          for (int j = 0; j < n; ++j)
            data[static_cast<std::size_t>(base + j * stride)] = line_out[static_cast<std::size_t>(j)];
        }
      }
      stride *= n;
    }
  }

  Config config_;
  Eigen::Index nodes_ = 0;
  std::vector<Mode> modes_;
  std::vector<Eigen::Index> plus_;
  std::vector<Eigen::Index> minus_;
  std::vector<int> lookup_;
  std::vector<Eigen::Index> conj_;
};

template <int Dim>
using BasisPtr = std::shared_ptr<const SpectralBasis<Dim>>;

template <int Dim>
BasisPtr<Dim> make_basis(const SpectralConfig<Dim>& config) {
  return std::make_shared<const SpectralBasis<Dim>>(config);
}

/// Grid values of a vector field: one row per node, one column per component.
template <int Dim>
using GridVector = Eigen::Matrix<double, Eigen::Dynamic, Dim>;

/// Zero-mean vector field in V_m, stored as real basis coefficients.
/// The k = 0 mode has no storage, so the mean is zero by construction.
template <int Dim>
class SpectralField {
 public:
  using Coeffs = Eigen::Matrix<double, Eigen::Dynamic, Dim>;

  SpectralField() = default;
  explicit SpectralField(BasisPtr<Dim> basis)
      : basis_(std::move(basis)), c_(Coeffs::Zero(basis_->coeff_rows(), Dim)) {}
  SpectralField(BasisPtr<Dim> basis, Coeffs c) : basis_(std::move(basis)), c_(std::move(c)) {
    if (c_.rows() != basis_->coeff_rows())
      throw std::invalid_argument("coefficient rows do not match the basis");
  }

  const SpectralBasis<Dim>& basis() const { return *basis_; }
  const BasisPtr<Dim>& basis_ptr() const { return basis_; }
  const Coeffs& coeffs() const { return c_; }
  Coeffs& coeffs() { return c_; }

  double& cos_coeff(int mode, int comp) { return c_(2 * mode, comp); }
  double& sin_coeff(int mode, int comp) { return c_(2 * mode + 1, comp); }
  double cos_coeff(int mode, int comp) const { return c_(2 * mode, comp); }
  double sin_coeff(int mode, int comp) const { return c_(2 * mode + 1, comp); }

  SpectralField& operator+=(const SpectralField& o) {
    c_ += o.c_;
    return *this;
  }
  SpectralField& operator-=(const SpectralField& o) {
    c_ -= o.c_;
    return *this;
  }
  SpectralField& operator*=(double s) {
    c_ *= s;
    return *this;
  }
  friend SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
  friend SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
  friend SpectralField operator*(SpectralField a, double s) { return a *= s; }
  friend SpectralField operator*(double s, SpectralField a) { return a *= s; }

 private:
  BasisPtr<Dim> basis_;
  Coeffs c_;
};

namespace detail {
template <int Dim>
void check_same_shape(const SpectralBasis<Dim>& basis, const typename SpectralConfig<Dim>::Shape& s) {
  if (s != basis.grid()) throw std::invalid_argument("grid shape does not match the spectral config");
}

// Complex amplitude of exp(2 pi i k.x) for cosine/sine coefficients (c, s).
inline std::complex<double> amplitude(double c, double s) {
  return std::complex<double>(c, -s) * M_SQRT1_2;
}
}  // namespace detail

/// Evaluates the truncated series at the grid nodes.
template <int Dim>
GridVector<Dim> to_grid(const SpectralField<Dim>& f) {
  const auto& b = f.basis();
  typename SpectralBasis<Dim>::Spectrum spec =
      SpectralBasis<Dim>::Spectrum::Zero(b.node_count(), Dim);
  for (int i = 0; i < b.mode_count(); ++i)
    for (int c = 0; c < Dim; ++c) {
      const auto z = detail::amplitude(f.coeffs()(2 * i, c), f.coeffs()(2 * i + 1, c));
      spec(b.plus_index(i), c) = z;
      spec(b.minus_index(i), c) = std::conj(z);
    }
  return b.synthesize(spec);
}

namespace detail {
template <int Dim, typename Spec>
SpectralField<Dim> field_from_spectrum(const BasisPtr<Dim>& basis, const Spec& spec) {
  SpectralField<Dim> out(basis);
  for (int i = 0; i < basis->mode_count(); ++i)
    for (int c = 0; c < Dim; ++c) {
      const std::complex<double> z = spec(basis->plus_index(i), c);
      out.coeffs()(2 * i, c) = M_SQRT2 * z.real();
      out.coeffs()(2 * i + 1, c) = -M_SQRT2 * z.imag();
    }
  return out;
}
}  // namespace detail

/// L2-orthogonal projection P^m of grid samples onto V_m (discrete transform,
/// truncation to |k|_inf <= m, k = 0 dropped).
template <int Dim>
SpectralField<Dim> from_grid(const GridVector<Dim>& v, const BasisPtr<Dim>& basis) {
  if (v.rows() != basis->node_count()) throw std::invalid_argument("from_grid: grid size mismatch");
  return detail::field_from_spectrum<Dim>(basis, basis->analyze(v));
}

/// Symmetric gradient of f evaluated on the grid. Exact for fields in V_m.
template <int Dim>
SymTensorField<Dim> sym_gradient(const SpectralField<Dim>& f) {
  using Tensor = SymTensor<double, Dim>;
  const auto& b = f.basis();
  typename SpectralBasis<Dim>::Spectrum spec =
      SpectralBasis<Dim>::Spectrum::Zero(b.node_count(), Tensor::kSize);
  const std::complex<double> ipi(0.0, M_PI);
  for (int i = 0; i < b.mode_count(); ++i) {
    const auto& k = b.mode(i);
    std::array<std::complex<double>, Dim> u;
    for (int c = 0; c < Dim; ++c)
      u[c] = detail::amplitude(f.coeffs()(2 * i, c), f.coeffs()(2 * i + 1, c));
    for (int p = 0; p < Dim; ++p)
      for (int q = p; q < Dim; ++q) {
        const std::complex<double> z = ipi * (double(k[p]) * u[q] + double(k[q]) * u[p]);
        const int slot = Tensor::index(p, q);
        spec(b.plus_index(i), slot) = z;
        spec(b.minus_index(i), slot) = std::conj(z);
      }
  }
  SymTensorField<Dim> out(b.grid());
  out.values() = b.synthesize(spec);
  return out;
}

/// Galerkin divergence P^m div T of a symmetric tensor field given on the
/// grid. Satisfies inner(divergence_sym(T), v) = -grid mean of T : eps(v)
/// for every v in V_m.
template <int Dim>
SpectralField<Dim> divergence_sym(const SymTensorField<Dim>& t, const BasisPtr<Dim>& basis) {
  using Tensor = SymTensor<double, Dim>;
  detail::check_same_shape(*basis, t.shape());
  const auto spec = basis->analyze(t.values());
  SpectralField<Dim> out(basis);
  const std::complex<double> i2pi(0.0, 2.0 * M_PI);
  for (int i = 0; i < basis->mode_count(); ++i) {
    const auto& k = basis->mode(i);
    const Eigen::Index r = basis->plus_index(i);
    for (int q = 0; q < Dim; ++q) {
      std::complex<double> z = 0.0;
      for (int p = 0; p < Dim; ++p) z += double(k[p]) * spec(r, Tensor::index(p, q));
      z *= i2pi;
      out.coeffs()(2 * i, q) = M_SQRT2 * z.real();
      out.coeffs()(2 * i + 1, q) = -M_SQRT2 * z.imag();
    }
  }
  return out;
}

/// L2 inner product; the basis is orthonormal.
template <int Dim>
double inner(const SpectralField<Dim>& f, const SpectralField<Dim>& g) {
  return f.coeffs().cwiseProduct(g.coeffs()).sum();
}

template <int Dim>
double l2_norm(const SpectralField<Dim>& f) {
  return f.coeffs().norm();
}

/// Squared L2 norms of grad f and eps(f), evaluated per mode from the symbol:
/// |grad u|^2 = (2 pi)^2 |k|^2 |u_k|^2 and |eps u|^2 = (2 pi)^2 (|k|^2 |u_k|^2 + (k.u_k)^2) / 2.
template <int Dim>
std::pair<double, double> gradient_and_strain_sq(const SpectralField<Dim>& f) {
  const auto& b = f.basis();
  const double w = 4.0 * M_PI * M_PI;
  double grad = 0.0;
  double strain = 0.0;
  for (int i = 0; i < b.mode_count(); ++i) {
    Eigen::Matrix<double, Dim, 1> k;
    for (int a = 0; a < Dim; ++a) k(a) = b.mode(i)[a];
    const double k2 = k.squaredNorm();
    for (int r = 0; r < 2; ++r) {
      const auto u = f.coeffs().row(2 * i + r).transpose();
      const double u2 = u.squaredNorm();
      const double ku = k.dot(u);
      grad += w * k2 * u2;
      strain += 0.5 * w * (k2 * u2 + ku * ku);
    }
  }
  return {grad, strain};
}

/// ||grad f||_2 / ||eps(f)||_2, exact in coefficient space; at most sqrt(2)
/// for zero-mean periodic fields.
template <int Dim>
double korn_ratio(const SpectralField<Dim>& f) {
  const auto [grad, strain] = gradient_and_strain_sq(f);
  if (!(strain > 0.0)) throw std::domain_error("korn_ratio: zero field");
  return std::sqrt(grad / strain);
}

/// Coefficients of f re-expressed on another basis: shared modes are copied,
/// modes absent from the target are dropped, new modes start at zero.
template <int Dim>
SpectralField<Dim> restrict_to(const SpectralField<Dim>& f, const BasisPtr<Dim>& target) {
  SpectralField<Dim> out(target);
  const auto& src = f.basis();
  for (int i = 0; i < src.mode_count(); ++i) {
    const int j = target->mode_index(src.mode(i));
    if (j < 0) continue;
    out.coeffs().row(2 * j) = f.coeffs().row(2 * i);
    out.coeffs().row(2 * j + 1) = f.coeffs().row(2 * i + 1);
  }
  return out;
}

/// Per-node |grad T|^2 = sum_{a,p,q} (d_a T_pq)^2 by spectral differentiation
/// on the full grid spectrum (Nyquist components dropped).
template <int Dim>
Eigen::VectorXd tensor_gradient_sq(const SymTensorField<Dim>& t, const SpectralBasis<Dim>& basis) {
  using Tensor = SymTensor<double, Dim>;
  detail::check_same_shape(basis, t.shape());
  const auto spec = basis.analyze(t.values());
  const Eigen::Index nodes = basis.node_count();
  typename SpectralBasis<Dim>::Spectrum deriv(nodes, Dim * Tensor::kSize);
  const std::complex<double> i2pi(0.0, 2.0 * M_PI);
  for (Eigen::Index r = 0; r < nodes; ++r)
    for (int a = 0; a < Dim; ++a) {
      const double k = basis.wavenumber(r, a);
      for (int s = 0; s < Tensor::kSize; ++s) deriv(r, a * Tensor::kSize + s) = i2pi * k * spec(r, s);
    }
  const auto vals = basis.synthesize(deriv);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(nodes);
  for (int a = 0; a < Dim; ++a)
    for (int s = 0; s < Tensor::kSize; ++s) {
      const double w = Tensor::is_diagonal_slot(s) ? 1.0 : 2.0;
      out += w * vals.col(a * Tensor::kSize + s).array().square().matrix();
    }
  return out;
}

}  // namespace slv
