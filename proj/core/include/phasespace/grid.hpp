#pragma once

// Sampled functions on the periodic grid [-B, B)^d, discrete Fourier
// transforms, Fourier multipliers, weighted norms and cube rasterisation.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "phasespace/dyadic.hpp"

namespace phasespace {

using Complex = std::complex<double>;
using Frequency = std::array<double, kMaxDim>;

template <class T, std::size_t Alignment = 64>
struct AlignedAllocator {
  using value_type = T;
  AlignedAllocator() noexcept = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U, Alignment>&) noexcept {}
  template <class U>
  struct rebind {
    using other = AlignedAllocator<U, Alignment>;
  };

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{Alignment}));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, std::align_val_t{Alignment}); }

  friend bool operator==(const AlignedAllocator&, const AlignedAllocator&) { return true; }
};

using ComplexBuffer = std::vector<Complex, AlignedAllocator<Complex>>;

/// Uniform grid on the torus [-B, B)^d with N samples per axis (N a power of
/// two). Grid point i sits at -B + i h; frequency index k maps to k / (2B)
/// folded to (-N/2, N/2] / (2B) with the Nyquist row negative.
struct TorusGrid {
  int dim = 1;
  double half_width = 8.0;
  std::int64_t samples = 1024;

  void validate() const;
  double spacing() const { return 2.0 * half_width / static_cast<double>(samples); }
  std::int64_t size() const;
  double coordinate(std::int64_t i) const { return -half_width + static_cast<double>(i) * spacing(); }
  std::int64_t signed_frequency_index(std::int64_t k) const { return k < samples / 2 ? k : k - samples; }
  double frequency(std::int64_t k) const {
    return static_cast<double>(signed_frequency_index(k)) / (2.0 * half_width);
  }
  double frequency_step() const { return 1.0 / (2.0 * half_width); }
  /// Largest representable |xi_n|.
  double nyquist() const { return static_cast<double>(samples) / (4.0 * half_width); }
  double cell_volume() const;

  /// Multi-index of a flat (row-major, last axis fastest) index.
  std::array<std::int64_t, kMaxDim> unflatten(std::int64_t flat) const;
  std::int64_t flatten(const std::array<std::int64_t, kMaxDim>& idx) const;
  Point point(std::int64_t flat) const;
  Frequency frequency_at(std::int64_t flat) const;

  /// Displacement x - c folded into [-B, B) per axis.
  double periodic_offset(double x, double c) const;

  friend bool operator==(const TorusGrid&, const TorusGrid&) = default;
};

/// Values of a function on a TorusGrid. Immutable through the public const
/// interface; the raw DFT is computed on first use and cached.
class SampledField {
 public:
  SampledField() = default;
  explicit SampledField(const TorusGrid& grid);
  SampledField(const TorusGrid& grid, ComplexBuffer values);

  static SampledField sample(const TorusGrid& grid, const std::function<Complex(const Point&)>& fn);
  /// Inverse of spectrum(): takes raw (unnormalised) DFT coefficients.
  static SampledField from_spectrum(const TorusGrid& grid, ComplexBuffer dft);

  const TorusGrid& grid() const { return grid_; }
  std::span<const Complex> values() const { return values_; }
  Complex operator[](std::int64_t flat) const { return values_[static_cast<std::size_t>(flat)]; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  /// Mutable access; drops the cached spectrum.
  std::span<Complex> mutable_values();

  /// Raw forward DFT sum_x a(x) e^{-2 pi i k x / N}.
  const ComplexBuffer& spectrum() const;

  double max_abs() const;
  double max_imag() const;

  SampledField& operator+=(const SampledField& other);
  SampledField& operator-=(const SampledField& other);
  SampledField& operator*=(Complex s);

  friend SampledField operator+(SampledField a, const SampledField& b) { return a += b; }
  friend SampledField operator-(SampledField a, const SampledField& b) { return a -= b; }
  friend SampledField operator*(SampledField a, Complex s) { return a *= s; }
  friend SampledField operator*(Complex s, SampledField a) { return a *= s; }

 private:
  TorusGrid grid_;
  ComplexBuffer values_;
  mutable std::shared_ptr<const ComplexBuffer> spectrum_;
};

/// Pointwise product.
SampledField multiply(const SampledField& a, const SampledField& b);

void require_same_grid(const TorusGrid& a, const TorusGrid& b);

/// Raw DFT of `values` (forward) or its unnormalised inverse.
void fft_in_place(const TorusGrid& grid, ComplexBuffer& values, bool inverse);

using Multiplier = std::function<Complex(const Frequency&)>;

/// m(xi) on every lattice frequency, in DFT storage order.
ComplexBuffer tabulate(const TorusGrid& grid, const Multiplier& m);

/// Fourier multiplier operator: exact for trigonometric polynomials.
SampledField apply_multiplier(const SampledField& a, const Multiplier& m);
SampledField apply_multiplier(const SampledField& a, std::span<const Complex> table);

/// The periodised kernel whose continuous Fourier transform is m.
SampledField field_from_multiplier(const TorusGrid& grid, const Multiplier& m);
SampledField field_from_table(const TorusGrid& grid, ComplexBuffer table);

/// Approximation of the continuous transform h^d sum_x a(x) e^{-2 pi i x xi}
/// on the lattice, in DFT storage order.
ComplexBuffer continuous_spectrum(const SampledField& a);

/// Circular convolution approximating int a(y) k(x - y) dy; the kernel is
/// sampled with its origin at grid coordinate 0.
SampledField convolve(const SampledField& a, const SampledField& kernel);

/// (d/dx_axis)^order via the multiplier (2 pi i xi_axis)^order; axis is
/// 0-based. The Nyquist row is zeroed for odd orders.
SampledField partial_derivative(const SampledField& a, int axis, int order);

/// Inverse multiplier (2 pi i xi_axis)^{-order}; frequencies with
/// xi_axis = 0 map to zero.
SampledField partial_antiderivative(const SampledField& a, int axis, int order);

/// Multiplication by the character e^{2 pi i x . eta}. Off-lattice eta is
/// snapped to the nearest lattice point with a warning on std::clog.
SampledField modulate(const SampledField& a, const Frequency& eta);
Frequency snap_to_lattice(const TorusGrid& grid, const Frequency& eta, bool* was_on_lattice = nullptr);

/// rho_I(x)^{-exponent} sampled on the grid with the periodic l-infinity
/// displacement from the centre of I.
class WeightField {
 public:
  WeightField(const TorusGrid& grid, const DyadicCube& base, double exponent);

  const DyadicCube& base() const { return base_; }
  double exponent() const { return exponent_; }
  std::span<const double> values() const { return values_; }

 private:
  DyadicCube base_;
  double exponent_;
  std::vector<double> values_;
};

/// Periodic rho_I(x) at one grid point.
double periodic_rho(const TorusGrid& grid, const DyadicCube& cube, const Point& x);

/// Deterministic pairwise (cascade) summation.
double pairwise_sum(std::span<const double> terms);

/// (h^d sum |w a|^p)^{1/p}; grid maximum for p = infinity.
double weighted_lp_norm(const SampledField& a, const WeightField* weight, double p);
double lp_norm(const SampledField& a, double p);

/// Indicator of a union of cubes on the grid points (half-open convention).
class GridMask {
 public:
  GridMask() = default;
  explicit GridMask(const TorusGrid& grid);

  const TorusGrid& grid() const { return grid_; }
  std::span<const std::uint8_t> bits() const { return bits_; }
  bool operator[](std::int64_t flat) const { return bits_[static_cast<std::size_t>(flat)] != 0; }
  void set(std::int64_t flat) { bits_[static_cast<std::size_t>(flat)] = 1; }
  std::int64_t count() const;
  bool any() const { return count() > 0; }

  /// Marks grid points with lower <= x < upper per axis.
  void add_box(const Point& lower, const Point& upper);
  SampledField indicator() const;

 private:
  TorusGrid grid_;
  std::vector<std::uint8_t> bits_;
};

/// Rasterises cubes; throws ResolutionError when a cube holds no grid point
/// per axis, ValidationError when it leaves the torus window.
GridMask rasterize(const TorusGrid& grid, std::span<const DyadicCube> cubes);

/// Grid points within l-infinity distance `radius` of the mask boundary
/// (points whose neighbourhood straddles the set).
GridMask boundary_collar(const GridMask& mask, int radius_in_cells);

/// Union of the cubes I in D_{j-m-3} with rho_I(E) <= 2 (before mollification).
GridMask mollifier_base(const TorusGrid& grid, std::span<const DyadicCube> level_cubes, int level, int gap,
                        double kappa_radius, double min_kappa_samples = 4.0);

/// chi^s_j = kappa_{j-m} * sum 1_I over I in D_{j-m-3} with rho_I(E) <= 2,
/// E the union of `level_cubes` (all at `level`). `kappa` is the sampled
/// mollifier whose support radius is `kappa_radius`.
SampledField mollified_indicator(const TorusGrid& grid, std::span<const DyadicCube> level_cubes,
                                 int level, int gap, const SampledField& kappa, double kappa_radius,
                                 double min_kappa_samples = 4.0);

/// Binary field format: int64 d, int64 N, float64 B, int64 complex flag,
/// then little-endian float64 values (re, im interleaved when complex).
void write_field_binary(std::ostream& os, const SampledField& a, bool as_complex);
SampledField read_field_binary(std::istream& is);
void write_field_binary(const std::string& path, const SampledField& a, bool as_complex);
SampledField read_field_binary(const std::string& path);

/// CSV (x,re,im) for one-dimensional fields.
void write_field_csv(std::ostream& os, const SampledField& a);

}  // namespace phasespace
