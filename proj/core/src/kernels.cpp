#include "phasespace/kernels.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>

#include "phasespace/errors.hpp"

namespace phasespace {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::string level_tag(int j) { return "[" + std::to_string(j) + "]"; }

double radial_cutoff(double r) {
  if (r <= 0.5) return 0.0;
  if (r < 1.0) return smooth_step((r - 0.5) / 0.5);
  if (r <= 4.0) return 1.0;
  return BumpProfile{4.0, 8.0}(r);
}

bool admissible(const ClassTag& tag, double norm) {
  const double outer = std::ldexp(1.0, -tag.level);
  if (norm >= outer) return false;
  if (tag.cls == KernelClass::Psi && norm <= outer / 4.0) return false;
  return true;
}

}  // namespace

double smooth_step(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  double a = std::exp(-1.0 / t);
  double b = std::exp(-1.0 / (1.0 - t));
  return a / (a + b);
}

double BumpProfile::operator()(double t) const {
  t = std::abs(t);
  if (t <= inner) return 1.0;
  if (t >= outer) return 0.0;
  return 1.0 - smooth_step((t - inner) / (outer - inner));
}

double frequency_norm(int dim, const Frequency& xi) {
  double s = 0.0;
  for (int a = 0; a < dim; ++a) s += xi[static_cast<std::size_t>(a)] * xi[static_cast<std::size_t>(a)];
  return std::sqrt(s);
}

Multiplier tau_hat(int dim, int j) {
  const double scale = std::ldexp(1.0, j);
  return [dim, scale](const Frequency& xi) -> Complex {
    return BumpProfile{1.0, 2.0}(scale * frequency_norm(dim, xi));
  };
}

Multiplier psi_hat(int dim, int j) {
  const double coarse = std::ldexp(1.0, j - 1);
  const double fine = std::ldexp(1.0, j);
  return [dim, coarse, fine](const Frequency& xi) -> Complex {
    double r = frequency_norm(dim, xi);
    BumpProfile p{1.0, 2.0};
    return p(coarse * r) - p(fine * r);
  };
}

Multiplier cone_hat(int dim, int n) {
  if (n < 0 || n >= dim) throw ValidationError("cone index out of range");
  return [dim, n](const Frequency& xi) -> Complex {
    double r2 = 0.0;
    for (int a = 0; a < dim; ++a) r2 += xi[static_cast<std::size_t>(a)] * xi[static_cast<std::size_t>(a)];
    if (r2 == 0.0) return 0.0;
    double cut = radial_cutoff(std::sqrt(r2));
    if (cut == 0.0) return 0.0;
    BumpProfile w{0.5, 1.0};
    double total = 0.0, mine = 0.0;
    for (int a = 0; a < dim; ++a) {
      double c = xi[static_cast<std::size_t>(a)];
      double v = c == 0.0 ? 0.0 : w(r2 / (2.0 * dim * c * c));
      total += v;
      if (a == n) mine = v;
    }
    return mine / total * cut;
  };
}

Multiplier psi_cone_hat(int dim, int n, int j) {
  auto psi = psi_hat(dim, j);
  auto cone = cone_hat(dim, n);
  const double scale = std::ldexp(1.0, j);
  return [dim, psi, cone, scale](const Frequency& xi) -> Complex {
    Complex p = psi(xi);
    if (p == 0.0) return 0.0;
    Frequency s{};
    for (int a = 0; a < dim; ++a) s[static_cast<std::size_t>(a)] = scale * xi[static_cast<std::size_t>(a)];
    return p * cone(s);
  };
}

Multiplier theta_hat(int dim, int n, int j) {
  auto piece = psi_cone_hat(dim, n, j);
  const double scale = std::ldexp(1.0, j);
  const double guard = 1.0 / std::sqrt(2.0 * dim);
  return [dim, n, piece, scale, guard](const Frequency& xi) -> Complex {
    Complex v = piece(xi);
    if (v == 0.0) return 0.0;
    double xn = xi[static_cast<std::size_t>(n)];
    if (std::abs(scale * xn) < guard * (1.0 - 1e-12))
      throw InternalError("antiderivative division outside the cone support");
    return v / std::pow(Complex(0.0, kTwoPi * xn), dim + 1);
  };
}

Multiplier translated(Multiplier m, const Point& offset) {
  return [m = std::move(m), offset](const Frequency& xi) -> Complex {
    double phase = 0.0;
    Complex v = m(xi);
    if (v == 0.0) return v;
    for (int a = 0; a < kMaxDim; ++a) phase += offset[static_cast<std::size_t>(a)] * xi[static_cast<std::size_t>(a)];
    return v * std::polar(1.0, -kTwoPi * phase);
  };
}

Multiplier modulated(Multiplier m, const Frequency& eta) {
  return [m = std::move(m), eta](const Frequency& xi) -> Complex {
    Frequency s{};
    for (int a = 0; a < kMaxDim; ++a)
      s[static_cast<std::size_t>(a)] = xi[static_cast<std::size_t>(a)] - eta[static_cast<std::size_t>(a)];
    return m(s);
  };
}

std::string to_string(KernelClass cls) { return cls == KernelClass::Phi ? "Phi" : "Psi"; }

// ---------------------------------------------------------------------------

Certificate class_membership(const SampledField& kernel, const ClassTag& tag, bool spectral_leak) {
  const auto& grid = kernel.grid();
  Certificate cert;
  const double peak = kernel.max_abs();
  if (peak == 0.0) {
    cert.lambda_max = std::numeric_limits<double>::infinity();
    return cert;
  }
  DyadicCube base{grid.dim, tag.level, {}};
  const double amplitude = std::ldexp(1.0, -grid.dim * tag.level);
  const double floor = kCertificateFloor * peak;
  std::vector<std::vector<double>> offsets(static_cast<std::size_t>(grid.dim));
  for (int a = 0; a < grid.dim; ++a) {
    auto& row = offsets[static_cast<std::size_t>(a)];
    for (std::int64_t i = 0; i < grid.samples; ++i)
      row.push_back(std::abs(grid.periodic_offset(grid.coordinate(i), base.center(a))));
  }
  double lambda = std::numeric_limits<double>::infinity();
  for (std::int64_t i = 0; i < grid.size(); ++i) {
    double v = std::abs(kernel[i]);
    if (v <= floor) continue;
    auto idx = grid.unflatten(i);
    double dist = 0.0;
    for (int a = 0; a < grid.dim; ++a)
      dist = std::max(dist, offsets[static_cast<std::size_t>(a)][static_cast<std::size_t>(idx[static_cast<std::size_t>(a)])]);
    double rho = std::max(1.0, 0.5 + dist / base.side());
    lambda = std::min(lambda, amplitude * std::pow(rho, -tag.exponent) / v);
  }
  cert.lambda_max = lambda;
  cert.bound_ratio = 1.0 / lambda;
  if (spectral_leak) cert.leak = table_leak(grid, continuous_spectrum(kernel), tag);
  cert.pass = cert.leak <= 1e-10 && cert.lambda_max >= 1.0 - 1e-12;
  return cert;
}

double table_leak(const TorusGrid& grid, std::span<const Complex> table, const ClassTag& tag) {
  double peak = 0.0, outside = 0.0;
  for (std::int64_t i = 0; i < grid.size(); ++i) {
    double v = std::abs(table[static_cast<std::size_t>(i)]);
    if (v == 0.0) continue;
    peak = std::max(peak, v);
    if (!admissible(tag, frequency_norm(grid.dim, grid.frequency_at(i)))) outside = std::max(outside, v);
  }
  return peak > 0.0 ? outside / peak : 0.0;
}

double multiplier_leak(const TorusGrid& grid, const Multiplier& m, const ClassTag& tag) {
  return table_leak(grid, tabulate(grid, m), tag);
}

SampledField KernelHandle::apply(const SampledField& f) const {
  if (multiplier) return apply_multiplier(f, table(f.grid()));
  if (!field) throw InternalError("kernel " + id + " has neither multiplier nor field");
  return convolve(f, *field);
}

ComplexBuffer KernelHandle::table(const TorusGrid& grid) const {
  if (!multiplier) {
    if (!field) throw InternalError("kernel " + id + " has neither multiplier nor field");
    return continuous_spectrum(*field);
  }
  ComplexBuffer t = tabulate(grid, multiplier);
  if (scale != 1.0)
    for (auto& v : t) v *= scale;
  return t;
}

SampledField KernelHandle::materialize(const TorusGrid& grid) const {
  if (field && field->grid() == grid) return *field;
  if (!multiplier) throw InternalError("kernel " + id + " has no multiplier");
  SampledField out = field_from_multiplier(grid, multiplier);
  if (scale != 1.0) out *= scale;
  return out;
}

void require_band(const TorusGrid& grid, double radius, const std::string& what) {
  if (radius > grid.nyquist()) {
    auto need = static_cast<std::int64_t>(
        std::bit_ceil(static_cast<std::uint64_t>(std::ceil(4.0 * grid.half_width * radius))));
    throw ResolutionError(what + ": band edge beyond Nyquist", need);
  }
}

namespace {

KernelHandle from_multiplier(const TorusGrid& grid, std::string id, Multiplier m) {
  KernelHandle k;
  k.id = std::move(id);
  k.multiplier = std::move(m);
  k.field = field_from_multiplier(grid, k.multiplier);
  return k;
}

}  // namespace

KernelHandle build_tau(const TorusGrid& grid, int j) {
  require_band(grid, std::ldexp(1.0, 1 - j), "tau" + level_tag(j));
  return from_multiplier(grid, "tau" + level_tag(j), tau_hat(grid.dim, j));
}

KernelHandle build_psi(const TorusGrid& grid, int j) {
  require_band(grid, std::ldexp(1.0, 2 - j), "psi" + level_tag(j));
  return from_multiplier(grid, "psi" + level_tag(j), psi_hat(grid.dim, j));
}

KernelHandle build_psi_cone(const TorusGrid& grid, int n, int j) {
  require_band(grid, std::ldexp(1.0, 2 - j), "psi_cone" + level_tag(j));
  return from_multiplier(grid, "psi" + std::to_string(n + 1) + level_tag(j), psi_cone_hat(grid.dim, n, j));
}

KernelHandle build_theta(const TorusGrid& grid, int n, int j) {
  require_band(grid, std::ldexp(1.0, 2 - j), "theta" + level_tag(j));
  return from_multiplier(grid, "theta" + std::to_string(n + 1) + level_tag(j), theta_hat(grid.dim, n, j));
}

double kappa_radius(int scale, int exponent) { return std::ldexp(1.0, scale - exponent); }

namespace {

void require_kappa_resolution(const TorusGrid& grid, int scale, double r, double min_samples) {
  if (r / grid.spacing() < min_samples) {
    auto need = static_cast<std::int64_t>(std::bit_ceil(
        static_cast<std::uint64_t>(std::ceil(2.0 * grid.half_width * min_samples / r))));
    throw ResolutionError("grid too coarse for kappa" + level_tag(scale), need);
  }
}

// Taylor coefficients in t - t0 of exp(-16 / (1 - (c + t^2) / r^2)),
// order 0..K, by truncated power series arithmetic.
std::vector<double> bump_taylor(double t0, double c, double r, int order) {
  const auto K = static_cast<std::size_t>(order);
  std::vector<double> out(K + 1, 0.0);
  const double r2 = r * r;
  const double q0 = 1.0 - (c + t0 * t0) / r2;
  if (q0 <= 0.0) return out;
  std::vector<double> q(K + 1, 0.0), inv(K + 1, 0.0), g(K + 1, 0.0);
  q[0] = q0;
  if (K >= 1) q[1] = -2.0 * t0 / r2;
  if (K >= 2) q[2] = -1.0 / r2;
  inv[0] = 1.0 / q0;
  for (std::size_t k = 1; k <= K; ++k) {
    double acc = 0.0;
    for (std::size_t i = 1; i <= std::min<std::size_t>(k, 2); ++i) acc += q[i] * inv[k - i];
    inv[k] = -acc / q0;
  }
  for (std::size_t k = 0; k <= K; ++k) g[k] = -16.0 * inv[k];
  out[0] = std::exp(g[0]);
  for (std::size_t k = 1; k <= K; ++k) {
    double acc = 0.0;
    for (std::size_t i = 1; i <= k; ++i) acc += static_cast<double>(i) * g[i] * out[k - i];
    out[k] = acc / static_cast<double>(k);
  }
  return out;
}

}  // namespace

KernelHandle build_kappa(const TorusGrid& grid, int scale, int exponent, double min_samples) {
  const double r = kappa_radius(scale, exponent);
  require_kappa_resolution(grid, scale, r, min_samples);
  SampledField k(grid);
  auto vals = k.mutable_values();
  std::vector<double> terms;
  for (std::int64_t i = 0; i < grid.size(); ++i) {
    Point x = grid.point(i);
    double s2 = 0.0;
    for (int a = 0; a < grid.dim; ++a) {
      double t = x[static_cast<std::size_t>(a)] / r;
      s2 += t * t;
    }
    if (s2 >= 1.0) continue;
    double v = std::exp(-16.0 / (1.0 - s2));
    vals[static_cast<std::size_t>(i)] = v;
    terms.push_back(v);
  }
  const double norm = grid.cell_volume() * pairwise_sum(terms);
  for (auto& v : vals) v /= norm;
  KernelHandle out;
  out.id = "kappa" + level_tag(scale);
  out.field = std::move(k);
  return out;
}

KernelHandle build_kappa_derivative(const TorusGrid& grid, int scale, int axis, int order, int exponent,
                                    double min_samples) {
  if (axis < 0 || axis >= grid.dim) throw ValidationError("derivative axis out of range");
  if (order < 0) throw ValidationError("derivative order must be non-negative");
  const double r = kappa_radius(scale, exponent);
  require_kappa_resolution(grid, scale, r, min_samples);
  double factorial = 1.0;
  for (int k = 2; k <= order; ++k) factorial *= k;
  SampledField k(grid);
  auto vals = k.mutable_values();
  std::vector<double> terms;
  for (std::int64_t i = 0; i < grid.size(); ++i) {
    Point x = grid.point(i);
    double c = 0.0;
    for (int a = 0; a < grid.dim; ++a)
      if (a != axis) c += x[static_cast<std::size_t>(a)] * x[static_cast<std::size_t>(a)];
    const double t = x[static_cast<std::size_t>(axis)];
    if (c + t * t >= r * r) continue;
    auto series = bump_taylor(t, c, r, order);
    terms.push_back(series[0]);
    vals[static_cast<std::size_t>(i)] = factorial * series[static_cast<std::size_t>(order)];
  }
  const double norm = grid.cell_volume() * pairwise_sum(terms);
  for (auto& v : vals) v /= norm;
  KernelHandle out;
  out.id = "kappa" + level_tag(scale) + "_d" + std::to_string(axis + 1) + "^" + std::to_string(order);
  out.field = std::move(k);
  return out;
}

// ---------------------------------------------------------------------------

void DictionarySpec::validate() const {
  if (tau_scales < 0 || psi_scales < 0) throw ValidationError("dictionary scale counts must be non-negative");
  for (double c : modulations)
    if (!(c >= 0.0 && c <= 0.5)) throw ValidationError("modulation magnitudes must lie in [0, 1/2]");
  for (double t : translations)
    if (!(std::abs(t) <= 1.0)) throw ValidationError("translation offsets must lie in [-1, 1]");
}

Dictionary build_dictionary(const TorusGrid& grid, const ClassTag& tag, const DictionarySpec& spec) {
  spec.validate();
  const int d = grid.dim;
  const int j = tag.level;
  struct Candidate {
    std::string id;
    Multiplier m;
  };
  std::vector<Candidate> cands;

  for (int s = 0; s < spec.tau_scales; ++s)
    cands.push_back({"tau" + level_tag(j + 1 + s), tau_hat(d, j + 1 + s)});
  for (int n = 0; n < d; ++n)
    for (int s = 0; s < spec.psi_scales; ++s)
      cands.push_back({"psi" + std::to_string(n + 1) + level_tag(j + 2 + s), psi_cone_hat(d, n, j + 2 + s)});

  auto add_modulations = [&](int level, double offset, double factor, const std::string& name) {
    for (double c : spec.modulations) {
      double mag = (offset + factor * c) * std::ldexp(1.0, -j);
      if (mag == 0.0) continue;
      for (int n = 0; n < d; ++n) {
        Frequency eta{};
        eta[static_cast<std::size_t>(n)] = mag;
        bool exact = true;
        snap_to_lattice(grid, eta, &exact);
        if (!exact) continue;
        cands.push_back({"M" + std::to_string(n + 1) + "(" + std::to_string(mag) + ")" + name + level_tag(level),
                         modulated(tau_hat(d, level), eta)});
      }
    }
  };
  if (tag.cls == KernelClass::Phi) {
    add_modulations(j + 2, 0.0, 1.0, "tau");
  } else {
    add_modulations(j + 3, 0.5, 0.5, "tau");
  }

  for (double t : spec.translations) {
    if (t == 0.0) continue;
    double off = t * std::ldexp(1.0, j);
    for (int n = 0; n < d; ++n) {
      Point a{};
      a[static_cast<std::size_t>(n)] = off;
      std::string suffix = "@" + std::to_string(n + 1) + ":" + std::to_string(off);
      cands.push_back({"tau" + level_tag(j + 1) + suffix, translated(tau_hat(d, j + 1), a)});
      for (int q = 0; q < d; ++q)
        cands.push_back({"psi" + std::to_string(q + 1) + level_tag(j + 2) + suffix,
                         translated(psi_cone_hat(d, q, j + 2), a)});
    }
  }

  Dictionary dict;
  dict.tag = tag;
  dict.candidates = cands.size();
  for (auto& c : cands) {
    ComplexBuffer table = tabulate(grid, c.m);
    double leak = table_leak(grid, table, tag);
    if (leak > 1e-10) {
      ++dict.filtered;
      continue;
    }
    KernelHandle k;
    k.id = std::move(c.id);
    k.multiplier = std::move(c.m);
    k.tag = tag;
    SampledField f = field_from_table(grid, std::move(table));
    Certificate raw = class_membership(f, tag, false);
    raw.leak = leak;
    if (std::isfinite(raw.lambda_max) && raw.lambda_max > 0.0) {
      k.scale = raw.lambda_max;
      k.class_constant = 1.0 / raw.lambda_max;
      f *= k.scale;
    }
    k.certificate = raw;
    k.certificate.lambda_max = raw.lambda_max / k.scale;
    k.certificate.bound_ratio = 1.0 / k.certificate.lambda_max;
    k.certificate.pass = k.certificate.leak <= 1e-10 && k.certificate.lambda_max >= 1.0 - 1e-12;
    if (spec.keep_fields) k.field = std::move(f);
    dict.members.push_back(std::move(k));
  }
  if (dict.members.empty())
    throw ValidationError("dictionary " + spec.id + " for " + to_string(tag.cls) + level_tag(j) + " is empty");
  return dict;
}

}  // namespace phasespace
