#include "phasespace/grid.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <numbers>
#include <tuple>

#include "phasespace/errors.hpp"

namespace phasespace {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(int dim, std::int64_t n, bool inverse) {
    std::lock_guard lock(mutex_);
    auto key = std::make_tuple(dim, n, inverse);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    std::int64_t total = 1;
    std::array<int, kMaxDim> shape{};
    for (int a = 0; a < dim; ++a) {
      shape[static_cast<std::size_t>(a)] = static_cast<int>(n);
      total *= n;
    }
    ComplexBuffer scratch(static_cast<std::size_t>(total));
    auto* ptr = reinterpret_cast<fftw_complex*>(scratch.data());
    fftw_plan plan = fftw_plan_dft(dim, shape.data(), ptr, ptr, inverse ? FFTW_BACKWARD : FFTW_FORWARD,
                                   FFTW_ESTIMATE);
    if (plan == nullptr) throw InternalError("FFTW plan creation failed");
    plans_.emplace(key, plan);
    return plan;
  }

  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

 private:
  std::mutex mutex_;
  std::map<std::tuple<int, std::int64_t, bool>, fftw_plan> plans_;
};

// (-1)^{sum k}: moves the kernel origin from grid index 0 (x = -B) to x = 0.
double checkerboard(const TorusGrid& grid, std::int64_t flat) {
  auto idx = grid.unflatten(flat);
  std::int64_t s = 0;
  for (int a = 0; a < grid.dim; ++a) s += idx[static_cast<std::size_t>(a)];
  return (s & 1) ? -1.0 : 1.0;
}

}  // namespace

void TorusGrid::validate() const {
  if (dim < 1 || dim > kMaxDim) throw ValidationError("grid dimension must be 1..3");
  if (!(half_width > 0.0) || !std::isfinite(half_width)) throw ValidationError("grid half-width must be positive");
  if (samples < 2 || !std::has_single_bit(static_cast<std::uint64_t>(samples)))
    throw ValidationError("grid samples must be a power of two >= 2");
}

std::int64_t TorusGrid::size() const {
  std::int64_t n = 1;
  for (int a = 0; a < dim; ++a) n *= samples;
  return n;
}

double TorusGrid::cell_volume() const { return std::pow(spacing(), dim); }

std::array<std::int64_t, kMaxDim> TorusGrid::unflatten(std::int64_t flat) const {
  std::array<std::int64_t, kMaxDim> idx{};
  for (int a = dim - 1; a >= 0; --a) {
    idx[static_cast<std::size_t>(a)] = flat % samples;
    flat /= samples;
  }
  return idx;
}

std::int64_t TorusGrid::flatten(const std::array<std::int64_t, kMaxDim>& idx) const {
  std::int64_t flat = 0;
  for (int a = 0; a < dim; ++a) flat = flat * samples + idx[static_cast<std::size_t>(a)];
  return flat;
}

Point TorusGrid::point(std::int64_t flat) const {
  auto idx = unflatten(flat);
  Point p{};
  for (int a = 0; a < dim; ++a) p[static_cast<std::size_t>(a)] = coordinate(idx[static_cast<std::size_t>(a)]);
  return p;
}

Frequency TorusGrid::frequency_at(std::int64_t flat) const {
  auto idx = unflatten(flat);
  Frequency xi{};
  for (int a = 0; a < dim; ++a) xi[static_cast<std::size_t>(a)] = frequency(idx[static_cast<std::size_t>(a)]);
  return xi;
}

double TorusGrid::periodic_offset(double x, double c) const {
  double period = 2.0 * half_width;
  double delta = x - c;
  return delta - period * std::floor((delta + half_width) / period);
}

void require_same_grid(const TorusGrid& a, const TorusGrid& b) {
  if (!(a == b)) throw ValidationError("fields live on different grids");
}

void fft_in_place(const TorusGrid& grid, ComplexBuffer& values, bool inverse) {
  if (static_cast<std::int64_t>(values.size()) != grid.size()) throw ValidationError("buffer size mismatch");
  fftw_plan plan = PlanCache::instance().get(grid.dim, grid.samples, inverse);
  auto* ptr = reinterpret_cast<fftw_complex*>(values.data());
  fftw_execute_dft(plan, ptr, ptr);
}

// ---------------------------------------------------------------------------

SampledField::SampledField(const TorusGrid& grid) : grid_(grid) {
  grid_.validate();
  values_.assign(static_cast<std::size_t>(grid_.size()), Complex{});
}

SampledField::SampledField(const TorusGrid& grid, ComplexBuffer values) : grid_(grid), values_(std::move(values)) {
  grid_.validate();
  if (static_cast<std::int64_t>(values_.size()) != grid_.size())
    throw ValidationError("sample count does not match grid");
}

SampledField SampledField::sample(const TorusGrid& grid, const std::function<Complex(const Point&)>& fn) {
  SampledField out(grid);
  for (std::int64_t i = 0; i < grid.size(); ++i) out.values_[static_cast<std::size_t>(i)] = fn(grid.point(i));
  return out;
}

SampledField SampledField::from_spectrum(const TorusGrid& grid, ComplexBuffer dft) {
  auto spec = std::make_shared<const ComplexBuffer>(dft);
  fft_in_place(grid, dft, true);
  double scale = 1.0 / static_cast<double>(grid.size());
  for (auto& v : dft) v *= scale;
  SampledField out(grid, std::move(dft));
  out.spectrum_ = std::move(spec);
  return out;
}

std::span<Complex> SampledField::mutable_values() {
  spectrum_.reset();
  return values_;
}

const ComplexBuffer& SampledField::spectrum() const {
  if (!spectrum_) {
    auto buf = std::make_shared<ComplexBuffer>(values_);
    fft_in_place(grid_, *buf, false);
    spectrum_ = std::move(buf);
  }
  return *spectrum_;
}

double SampledField::max_abs() const {
  double m = 0.0;
  for (const auto& v : values_) m = std::max(m, std::abs(v));
  return m;
}

double SampledField::max_imag() const {
  double m = 0.0;
  for (const auto& v : values_) m = std::max(m, std::abs(v.imag()));
  return m;
}

SampledField& SampledField::operator+=(const SampledField& other) {
  require_same_grid(grid_, other.grid_);
  spectrum_.reset();
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

SampledField& SampledField::operator-=(const SampledField& other) {
  require_same_grid(grid_, other.grid_);
  spectrum_.reset();
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}

SampledField& SampledField::operator*=(Complex s) {
  spectrum_.reset();
  for (auto& v : values_) v *= s;
  return *this;
}

SampledField multiply(const SampledField& a, const SampledField& b) {
  require_same_grid(a.grid(), b.grid());
  ComplexBuffer out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return SampledField(a.grid(), std::move(out));
}

// ---------------------------------------------------------------------------

ComplexBuffer tabulate(const TorusGrid& grid, const Multiplier& m) {
  ComplexBuffer table(static_cast<std::size_t>(grid.size()));
  for (std::int64_t i = 0; i < grid.size(); ++i) table[static_cast<std::size_t>(i)] = m(grid.frequency_at(i));
  return table;
}

SampledField apply_multiplier(const SampledField& a, const Multiplier& m) {
  return apply_multiplier(a, tabulate(a.grid(), m));
}

SampledField apply_multiplier(const SampledField& a, std::span<const Complex> table) {
  if (table.size() != a.size()) throw ValidationError("multiplier table size mismatch");
  ComplexBuffer spec = a.spectrum();
  for (std::size_t i = 0; i < spec.size(); ++i) spec[i] *= table[i];
  return SampledField::from_spectrum(a.grid(), std::move(spec));
}

SampledField field_from_multiplier(const TorusGrid& grid, const Multiplier& m) {
  return field_from_table(grid, tabulate(grid, m));
}

SampledField field_from_table(const TorusGrid& grid, ComplexBuffer buf) {
  if (static_cast<std::int64_t>(buf.size()) != grid.size()) throw ValidationError("multiplier table size mismatch");
  for (std::int64_t i = 0; i < grid.size(); ++i) buf[static_cast<std::size_t>(i)] *= checkerboard(grid, i);
  fft_in_place(grid, buf, true);
  double scale = 1.0 / std::pow(2.0 * grid.half_width, grid.dim);
  for (auto& v : buf) v *= scale;
  return SampledField(grid, std::move(buf));
}

ComplexBuffer continuous_spectrum(const SampledField& a) {
  const auto& grid = a.grid();
  ComplexBuffer out = a.spectrum();
  double h = grid.cell_volume();
  for (std::int64_t i = 0; i < grid.size(); ++i) out[static_cast<std::size_t>(i)] *= h * checkerboard(grid, i);
  return out;
}

SampledField convolve(const SampledField& a, const SampledField& kernel) {
  require_same_grid(a.grid(), kernel.grid());
  const auto& grid = a.grid();
  const auto& fa = a.spectrum();
  const auto& fk = kernel.spectrum();
  ComplexBuffer prod(fa.size());
  double h = grid.cell_volume();
  for (std::int64_t i = 0; i < grid.size(); ++i) {
    auto u = static_cast<std::size_t>(i);
    prod[u] = fa[u] * fk[u] * (h * checkerboard(grid, i));
  }
  return SampledField::from_spectrum(grid, std::move(prod));
}

namespace {

ComplexBuffer derivative_table(const TorusGrid& grid, int axis, int order) {
  if (axis < 0 || axis >= grid.dim) throw ValidationError("derivative axis out of range");
  ComplexBuffer table(static_cast<std::size_t>(grid.size()));
  for (std::int64_t i = 0; i < grid.size(); ++i) {
    auto idx = grid.unflatten(i);
    std::int64_t k = idx[static_cast<std::size_t>(axis)];
    Complex v;
    if (order == 0) {
      v = 1.0;
    } else if ((order % 2 != 0) && k == grid.samples / 2) {
      v = 0.0;
    } else {
      double xi = grid.frequency(k);
      if (order < 0 && xi == 0.0) {
        v = 0.0;
      } else {
        v = std::pow(Complex(0.0, kTwoPi * xi), order);
      }
    }
    table[static_cast<std::size_t>(i)] = v;
  }
  return table;
}

}  // namespace

SampledField partial_derivative(const SampledField& a, int axis, int order) {
  if (order < 0) throw ValidationError("derivative order must be non-negative");
  if (order == 0) return a;
  return apply_multiplier(a, derivative_table(a.grid(), axis, order));
}

SampledField partial_antiderivative(const SampledField& a, int axis, int order) {
  if (order < 0) throw ValidationError("antiderivative order must be non-negative");
  if (order == 0) return a;
  return apply_multiplier(a, derivative_table(a.grid(), axis, -order));
}

Frequency snap_to_lattice(const TorusGrid& grid, const Frequency& eta, bool* was_on_lattice) {
  Frequency out{};
  bool exact = true;
  double step = grid.frequency_step();
  for (int a = 0; a < grid.dim; ++a) {
    double k = eta[static_cast<std::size_t>(a)] / step;
    double r = std::round(k);
    if (std::abs(k - r) > 1e-9 * std::max(1.0, std::abs(k))) exact = false;
    out[static_cast<std::size_t>(a)] = r * step;
  }
  if (was_on_lattice) *was_on_lattice = exact;
  return out;
}

SampledField modulate(const SampledField& a, const Frequency& eta) {
  const auto& grid = a.grid();
  bool exact = true;
  Frequency snapped = snap_to_lattice(grid, eta, &exact);
  if (!exact) std::clog << "warning: modulation frequency snapped to the grid lattice\n";
  ComplexBuffer out(a.size());
  for (std::int64_t i = 0; i < grid.size(); ++i) {
    Point x = grid.point(i);
    double phase = 0.0;
    for (int d = 0; d < grid.dim; ++d)
      phase += x[static_cast<std::size_t>(d)] * snapped[static_cast<std::size_t>(d)];
    auto u = static_cast<std::size_t>(i);
    out[u] = a.values()[u] * std::polar(1.0, kTwoPi * phase);
  }
  return SampledField(grid, std::move(out));
}

// ---------------------------------------------------------------------------

double periodic_rho(const TorusGrid& grid, const DyadicCube& cube, const Point& x) {
  double dist = 0.0;
  for (int a = 0; a < grid.dim; ++a)
    dist = std::max(dist, std::abs(grid.periodic_offset(x[static_cast<std::size_t>(a)], cube.center(a))));
  return std::max(1.0, 0.5 + dist / cube.side());
}

WeightField::WeightField(const TorusGrid& grid, const DyadicCube& base, double exponent)
    : base_(base), exponent_(exponent) {
  if (base.dim != grid.dim) throw ValidationError("weight cube dimension mismatch");
  // rho depends on the l-infinity offset only; tabulate per axis first.
  std::vector<std::vector<double>> offsets(static_cast<std::size_t>(grid.dim));
  for (int a = 0; a < grid.dim; ++a) {
    auto& row = offsets[static_cast<std::size_t>(a)];
    row.resize(static_cast<std::size_t>(grid.samples));
    for (std::int64_t i = 0; i < grid.samples; ++i)
      row[static_cast<std::size_t>(i)] = std::abs(grid.periodic_offset(grid.coordinate(i), base.center(a)));
  }
  values_.resize(static_cast<std::size_t>(grid.size()));
  for (std::int64_t f = 0; f < grid.size(); ++f) {
    auto idx = grid.unflatten(f);
    double dist = 0.0;
    for (int a = 0; a < grid.dim; ++a)
      dist = std::max(dist, offsets[static_cast<std::size_t>(a)][static_cast<std::size_t>(idx[static_cast<std::size_t>(a)])]);
    double rho = std::max(1.0, 0.5 + dist / base.side());
    values_[static_cast<std::size_t>(f)] = std::pow(rho, -exponent);
  }
}

double pairwise_sum(std::span<const double> terms) {
  if (terms.size() <= 16) {
    double s = 0.0;
    for (double t : terms) s += t;
    return s;
  }
  std::size_t half = terms.size() / 2;
  return pairwise_sum(terms.first(half)) + pairwise_sum(terms.subspan(half));
}

double weighted_lp_norm(const SampledField& a, const WeightField* weight, double p) {
  if (!(p >= 1.0)) throw ValidationError("p must be >= 1");
  std::span<const double> w;
  if (weight) {
    w = weight->values();
    if (w.size() != a.size()) throw ValidationError("weight size mismatch");
  }
  auto vals = a.values();
  if (std::isinf(p)) {
    double m = 0.0;
    for (std::size_t i = 0; i < vals.size(); ++i) m = std::max(m, std::abs(vals[i]) * (weight ? w[i] : 1.0));
    return m;
  }
  std::vector<double> terms(vals.size());
  if (p == 1.0) {
    for (std::size_t i = 0; i < vals.size(); ++i) terms[i] = std::abs(vals[i]) * (weight ? w[i] : 1.0);
  } else if (p == 2.0) {
    for (std::size_t i = 0; i < vals.size(); ++i) {
      double v = std::abs(vals[i]) * (weight ? w[i] : 1.0);
      terms[i] = v * v;
    }
  } else {
    for (std::size_t i = 0; i < vals.size(); ++i) terms[i] = std::pow(std::abs(vals[i]) * (weight ? w[i] : 1.0), p);
  }
  return std::pow(a.grid().cell_volume() * pairwise_sum(terms), 1.0 / p);
}

double lp_norm(const SampledField& a, double p) { return weighted_lp_norm(a, nullptr, p); }

// ---------------------------------------------------------------------------

GridMask::GridMask(const TorusGrid& grid) : grid_(grid), bits_(static_cast<std::size_t>(grid.size()), 0) {}

std::int64_t GridMask::count() const {
  return static_cast<std::int64_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

void GridMask::add_box(const Point& lower, const Point& upper) {
  const double h = grid_.spacing();
  std::array<std::int64_t, kMaxDim> lo{}, hi{};
  for (int a = 0; a < grid_.dim; ++a) {
    auto u = static_cast<std::size_t>(a);
    double l = std::max(lower[u], -grid_.half_width);
    double r = std::min(upper[u], grid_.half_width);
    lo[u] = static_cast<std::int64_t>(std::ceil((l + grid_.half_width) / h));
    hi[u] = static_cast<std::int64_t>(std::ceil((r + grid_.half_width) / h));
    if (hi[u] <= lo[u]) return;
  }
  std::array<std::int64_t, kMaxDim> idx = lo;
  while (true) {
    bits_[static_cast<std::size_t>(grid_.flatten(idx))] = 1;
    int a = grid_.dim - 1;
    while (a >= 0) {
      auto u = static_cast<std::size_t>(a);
      if (++idx[u] < hi[u]) break;
      idx[u] = lo[u];
      --a;
    }
    if (a < 0) break;
  }
}

SampledField GridMask::indicator() const {
  ComplexBuffer out(bits_.size());
  for (std::size_t i = 0; i < bits_.size(); ++i) out[i] = bits_[i] ? 1.0 : 0.0;
  return SampledField(grid_, std::move(out));
}

GridMask rasterize(const TorusGrid& grid, std::span<const DyadicCube> cubes) {
  GridMask mask(grid);
  const double h = grid.spacing();
  for (const auto& c : cubes) {
    if (c.dim != grid.dim) throw ValidationError("cube dimension does not match grid");
    if (c.side() < h) {
      auto need = static_cast<std::int64_t>(std::bit_ceil(static_cast<std::uint64_t>(
          std::ceil(2.0 * grid.half_width / c.side()))));
      throw ResolutionError("grid too coarse for cube " + c.to_string(), need);
    }
    Point lo{}, hi{};
    for (int a = 0; a < grid.dim; ++a) {
      if (c.lower(a) < -grid.half_width || c.upper(a) > grid.half_width)
        throw ValidationError("cube " + c.to_string() + " leaves the torus window");
      lo[static_cast<std::size_t>(a)] = c.lower(a);
      hi[static_cast<std::size_t>(a)] = c.upper(a);
    }
    mask.add_box(lo, hi);
  }
  return mask;
}

GridMask boundary_collar(const GridMask& mask, int radius_in_cells) {
  const auto& grid = mask.grid();
  const std::int64_t n = grid.samples;
  // Separable dilation of both the set and its complement; the collar is
  // where the two dilations overlap.
  auto dilate = [&](std::vector<std::uint8_t> bits) {
    std::vector<std::uint8_t> tmp(bits.size());
    for (int axis = 0; axis < grid.dim; ++axis) {
      std::int64_t stride = 1;
      for (int a = axis + 1; a < grid.dim; ++a) stride *= n;
      for (std::int64_t f = 0; f < grid.size(); ++f) {
        std::int64_t k = (f / stride) % n;
        std::uint8_t v = 0;
        for (int r = -radius_in_cells; r <= radius_in_cells && !v; ++r) {
          std::int64_t kk = ((k + r) % n + n) % n;
          v = bits[static_cast<std::size_t>(f + (kk - k) * stride)];
        }
        tmp[static_cast<std::size_t>(f)] = v;
      }
      bits.swap(tmp);
    }
    return bits;
  };
  std::vector<std::uint8_t> inside(mask.bits().begin(), mask.bits().end());
  std::vector<std::uint8_t> outside(inside.size());
  for (std::size_t i = 0; i < inside.size(); ++i) outside[i] = inside[i] ? 0 : 1;
  auto a = dilate(std::move(inside));
  auto b = dilate(std::move(outside));
  GridMask out(grid);
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] && b[i]) out.set(static_cast<std::int64_t>(i));
  return out;
}

GridMask mollifier_base(const TorusGrid& grid, std::span<const DyadicCube> level_cubes, int level, int gap,
                        double kappa_radius, double min_kappa_samples) {
  const double h = grid.spacing();
  const double s = std::ldexp(1.0, level - gap - 3);
  if (kappa_radius > s) throw ValidationError("mollifier radius exceeds the fine-cube side");
  if (kappa_radius / h < min_kappa_samples) {
    auto need = static_cast<std::int64_t>(std::bit_ceil(static_cast<std::uint64_t>(
        std::ceil(2.0 * grid.half_width * min_kappa_samples / kappa_radius))));
    throw ResolutionError("grid too coarse for mollifier at level " + std::to_string(level), need);
  }
  GridMask fine(grid);
  for (const auto& c : level_cubes) {
    if (c.level != level) throw ValidationError("mollified indicator cubes must share one level");
    Point lo{}, hi{};
    for (int a = 0; a < grid.dim; ++a) {
      // fine cubes of side s within index distance 2 of c
      lo[static_cast<std::size_t>(a)] = c.lower(a) - 2.0 * s;
      hi[static_cast<std::size_t>(a)] = c.upper(a) + 2.0 * s;
      if (lo[static_cast<std::size_t>(a)] - kappa_radius < -grid.half_width ||
          hi[static_cast<std::size_t>(a)] + kappa_radius > grid.half_width)
        throw ValidationError("mollified indicator support leaves the torus window");
    }
    fine.add_box(lo, hi);
  }
  return fine;
}

SampledField mollified_indicator(const TorusGrid& grid, std::span<const DyadicCube> level_cubes, int level,
                                 int gap, const SampledField& kappa, double kappa_radius,
                                 double min_kappa_samples) {
  require_same_grid(grid, kappa.grid());
  GridMask fine = mollifier_base(grid, level_cubes, level, gap, kappa_radius, min_kappa_samples);
  return convolve(fine.indicator(), kappa);
}

// ---------------------------------------------------------------------------

namespace {

void put_i64(std::ostream& os, std::int64_t v) {
  static_assert(std::endian::native == std::endian::little);
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_f64(std::ostream& os, double v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }
std::int64_t get_i64(std::istream& is) {
  std::int64_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw ValidationError("truncated field file");
  return v;
}
double get_f64(std::istream& is) {
  double v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw ValidationError("truncated field file");
  return v;
}

}  // namespace

void write_field_binary(std::ostream& os, const SampledField& a, bool as_complex) {
  const auto& g = a.grid();
  put_i64(os, g.dim);
  put_i64(os, g.samples);
  put_f64(os, g.half_width);
  put_i64(os, as_complex ? 1 : 0);
  for (const auto& v : a.values()) {
    put_f64(os, v.real());
    if (as_complex) put_f64(os, v.imag());
  }
}

SampledField read_field_binary(std::istream& is) {
  TorusGrid g;
  g.dim = static_cast<int>(get_i64(is));
  g.samples = get_i64(is);
  g.half_width = get_f64(is);
  g.validate();
  bool cplx = get_i64(is) != 0;
  ComplexBuffer buf(static_cast<std::size_t>(g.size()));
  for (auto& v : buf) {
    double re = get_f64(is);
    double im = cplx ? get_f64(is) : 0.0;
    v = Complex(re, im);
  }
  return SampledField(g, std::move(buf));
}

void write_field_binary(const std::string& path, const SampledField& a, bool as_complex) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot open " + path + " for writing");
  write_field_binary(os, a, as_complex);
}

SampledField read_field_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open " + path);
  return read_field_binary(is);
}

void write_field_csv(std::ostream& os, const SampledField& a) {
  if (a.grid().dim != 1) throw ValidationError("CSV output is one-dimensional only");
  os << "x,re,im\n";
  char line[96];
  for (std::int64_t i = 0; i < a.grid().size(); ++i) {
    auto v = a[i];
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g\n", a.grid().coordinate(i), v.real(), v.imag());
    os << line;
  }
}

}  // namespace phasespace
