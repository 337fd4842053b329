#include "phasespace/projection.hpp"

#include <algorithm>
#include <bit>
#include <limits>
#include <cmath>

#include "phasespace/errors.hpp"

namespace phasespace {

namespace {

std::int64_t pow2_at_least(double v) {
  return static_cast<std::int64_t>(std::bit_ceil(static_cast<std::uint64_t>(std::max(2.0, std::ceil(v)))));
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

bool inside_box(const Point& x, int dim, double lo, double hi) {
  for (int a = 0; a < dim; ++a)
    if (x[static_cast<std::size_t>(a)] < lo || x[static_cast<std::size_t>(a)] >= hi) return false;
  return true;
}

}  // namespace

void ProjectionSettings::validate() const {
  if (kappa_exponent < 3) throw ValidationError("kappa exponent must be at least 3");
  if (!(min_kappa_samples >= 1.0)) throw ValidationError("min kappa samples must be >= 1");
}

double relative_error(const SampledField& a, const SampledField& b, double scale) {
  require_same_grid(a.grid(), b.grid());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  if (m == 0.0) return 0.0;
  return scale > 0.0 ? m / scale : std::numeric_limits<double>::infinity();
}

std::int64_t required_samples(int dim, double half_width, const TreeIndex& tree, const ProjectionSettings& s) {
  (void)dim;
  const int m = tree.config().gap;
  const int jmin = tree.finest_level();
  const double radius = kappa_radius(jmin - m, s.kappa_exponent);
  double need = 2.0 * half_width * s.min_kappa_samples / radius;
  need = std::max(need, 4.0 * half_width * std::ldexp(1.0, 2 - jmin + m));
  return pow2_at_least(need);
}

ProjectionEngine::ProjectionEngine(const TorusGrid& grid, const TreeIndex& tree, ProjectionSettings settings)
    : grid_(grid), tree_(std::make_shared<const TreeIndex>(tree)), settings_(settings) {
  grid_.validate();
  settings_.validate();
  if (tree.dim() != grid.dim) throw ValidationError("tree and grid dimensions differ");
  if (grid.half_width < 8.0) throw ValidationError("torus half-width must be >= 8 to hold 7U with margin");
  std::int64_t need = required_samples(grid.dim, grid.half_width, tree, settings_);
  if (grid.samples < need)
    throw ResolutionError("grid too coarse for finest construction scale (need N >= " + std::to_string(need) + ")",
                          need);
}

const GridMask& ProjectionEngine::union_mask(int j) const {
  auto it = masks_.find(j);
  if (it != masks_.end()) return it->second;
  const auto& ring = tree_->ring(j, 1);
  return masks_.emplace(j, rasterize(grid_, ring)).first->second;
}

const SampledField& ProjectionEngine::mollifier_base_field(int j) const {
  auto it = bases_.find(j);
  if (it != bases_.end()) return it->second;
  const auto& ring = tree_->ring(j, 1);
  SampledField out(grid_);
  if (!ring.empty()) {
    const double r = kappa_radius(j - gap(), settings_.kappa_exponent);
    out = mollifier_base(grid_, ring, j, gap(), r, settings_.min_kappa_samples).indicator();
  }
  return bases_.emplace(j, std::move(out)).first->second;
}

const SampledField& ProjectionEngine::chi_s(int j) const {
  auto it = chis_.find(j);
  if (it != chis_.end()) return it->second;
  SampledField out(grid_);
  if (!tree_->ring(j, 1).empty()) {
    KernelHandle kappa = build_kappa(grid_, j - gap(), settings_.kappa_exponent, settings_.min_kappa_samples);
    out = convolve(mollifier_base_field(j), *kappa.field);
  }
  return chis_.emplace(j, std::move(out)).first->second;
}

SampledField ProjectionEngine::chi_derivative(int n, int j, int order) const {
  if (order == 0) return chi_s(j);
  if (tree_->ring(j, 1).empty()) return SampledField(grid_);
  KernelHandle dk =
      build_kappa_derivative(grid_, j - gap(), n, order, settings_.kappa_exponent, settings_.min_kappa_samples);
  return convolve(mollifier_base_field(j), *dk.field);
}

SampledField ProjectionEngine::theta_part(int n, int j, const SampledField& f) const {
  return apply_multiplier(f, theta_hat(grid_.dim, n, j - gap()));
}

SampledField ProjectionEngine::sigma(int n, int j, const SampledField& f) const {
  require_same_grid(grid_, f.grid());
  if (tree_->ring(j, 1).empty()) return SampledField(grid_);
  SampledField u = theta_part(n, j, f);
  SampledField w = chi_s(j) - union_mask(j).indicator();
  return multiply(w, u);
}

SampledField ProjectionEngine::big_g(int n, int j, const SampledField& f) const {
  require_same_grid(grid_, f.grid());
  if (tree_->ring(j, 1).empty()) return SampledField(grid_);
  return multiply(chi_s(j), theta_part(n, j, f));
}

SampledField ProjectionEngine::leibniz(int n, int j, const SampledField& u) const {
  const int order = grid_.dim + 1;
  SampledField sum(grid_);
  for (int k = 0; k <= order; ++k) {
    SampledField term = multiply(chi_derivative(n, j, k), partial_derivative(u, n, order - k));
    sum += term * Complex(binomial(order, k));
  }
  return sum;
}

SampledField ProjectionEngine::g_piece(int n, int j, const SampledField& f) const {
  require_same_grid(grid_, f.grid());
  if (tree_->ring(j, 1).empty()) return SampledField(grid_);
  return leibniz(n, j, theta_part(n, j, f));
}

SampledField ProjectionEngine::spectral_g_piece(int n, int j, const SampledField& f) const {
  return partial_derivative(big_g(n, j, f), n, grid_.dim + 1);
}

int ProjectionEngine::telescoping_floor() const {
  // tau_hat_{L} == 1 iff 2^L |xi| <= 1 for every lattice xi.
  const double top = std::sqrt(static_cast<double>(grid_.dim)) * grid_.nyquist();
  int level = 0;
  while (std::ldexp(1.0, level) * top > 1.0) --level;
  return level + gap() + 1;
}

ProjectionOutput ProjectionEngine::assemble(const SampledField& f) const {
  require_same_grid(grid_, f.grid());
  const int d = grid_.dim;
  const int m = gap();
  ProjectionOutput out;
  out.low = apply_multiplier(f, tau_hat(d, -m));
  out.chi = chi();
  out.g = multiply(out.low, out.chi);
  out.h = out.g;
  out.k.assign(static_cast<std::size_t>(d), SampledField(grid_));
  auto& diag = out.diagnostics;

  for (int j = finest_level(); j <= 0; ++j) {
    const auto& ring = tree_->ring(j, 1);
    if (ring.empty()) continue;
    const GridMask& mask = union_mask(j);
    SampledField ind = mask.indicator();
    out.h += multiply(apply_multiplier(f, psi_hat(d, j - m)), ind);
    for (int n = 0; n < d; ++n) {
      ProjectionPiece piece;
      piece.n = n;
      piece.j = j;
      SampledField u = theta_part(n, j, f);
      piece.chi_s = chi_s(j);
      piece.sigma = multiply(piece.chi_s - ind, u);
      piece.big_g = multiply(piece.chi_s, u);
      SampledField route = multiply(ind, u) + piece.sigma;
      piece.big_g_route_error = relative_error(piece.big_g, route, piece.big_g.max_abs());
      piece.g_piece = leibniz(n, j, u);

      if (settings_.leibniz_check) {
        SampledField spectral = partial_derivative(piece.big_g, n, d + 1);
        piece.leibniz_error = relative_error(piece.g_piece, spectral, piece.g_piece.max_abs());
        if (settings_.leibniz_strict && piece.leibniz_error > settings_.leibniz_tolerance)
          throw ResolutionError("Leibniz cross-check failed at (n=" + std::to_string(n + 1) +
                                    ", j=" + std::to_string(j) + ")",
                                grid_.samples * 2);
      }

      double sig_max = piece.sigma.max_abs(), sig_in = 0.0;
      for (std::int64_t i = 0; i < grid_.size(); ++i)
        if (mask[i]) sig_in = std::max(sig_in, std::abs(piece.sigma[i]));
      if (sig_max > 0.0) diag.sigma_inside_ratio = std::max(diag.sigma_inside_ratio, sig_in / sig_max);

      out.g += piece.g_piece;
      out.k[static_cast<std::size_t>(n)] +=
          piece.g_piece - multiply(apply_multiplier(f, psi_cone_hat(d, n, j - m)), ind);

      diag.big_g_route_error = std::max(diag.big_g_route_error, piece.big_g_route_error);
      diag.leibniz_error = std::max(diag.leibniz_error, piece.leibniz_error);
      if (!settings_.keep_pieces) {
        piece.chi_s = SampledField();
        piece.sigma = SampledField();
        piece.big_g = SampledField();
        piece.g_piece = SampledField();
      }
      out.pieces.push_back(std::move(piece));
    }
  }

  SampledField recomposed = out.h;
  for (const auto& kn : out.k) recomposed += kn;
  const double gmax = out.g.max_abs();
  diag.g_route_error = relative_error(out.g, recomposed, gmax);

  double off = 0.0;
  for (std::int64_t i = 0; i < grid_.size(); ++i)
    if (!inside_box(grid_.point(i), d, -2.0, 3.0)) off = std::max(off, std::abs(out.g[i]));
  diag.support_ratio = gmax > 0.0 ? off / gmax : 0.0;
  return out;
}

ResidualDecomposition ProjectionEngine::residual_decomposition(const SampledField& f,
                                                               const ProjectionOutput& out) const {
  require_same_grid(grid_, f.grid());
  const int d = grid_.dim;
  const int m = gap();
  ResidualDecomposition r;
  SampledField one(grid_);
  for (auto& v : one.mutable_values()) v = 1.0;
  r.low_part = multiply(out.low, one - out.chi);
  r.telescoping_floor = std::min(telescoping_floor(), finest_level());
  r.outside = SampledField(grid_);
  for (int j = r.telescoping_floor; j <= 0; ++j) {
    SampledField piece = apply_multiplier(f, psi_hat(d, j - m));
    if (!tree_->ring(j, 1).empty()) piece = multiply(piece, one - union_mask(j).indicator());
    r.outside += piece;
  }
  r.correction = SampledField(grid_);
  for (const auto& kn : out.k) r.correction += kn;
  SampledField lhs = f - out.g;
  SampledField rhs = r.low_part + r.outside - r.correction;
  r.identity_error = relative_error(lhs, rhs, lhs.max_abs());
  if (r.identity_error > 1e-6)
    throw InternalError("residual identity failed (telescoping depth " + std::to_string(r.telescoping_floor) +
                        ", error " + std::to_string(r.identity_error) + ")");
  return r;
}

}  // namespace phasespace
