#pragma once

// The phase space projection g of f relative to a tree, its per-scale pieces
// and the diagnostic decompositions g = h + sum_n k_n and
// f - g = c1 + c2 - c3.

#include <map>
#include <memory>
#include <vector>

#include "phasespace/dyadic.hpp"
#include "phasespace/grid.hpp"
#include "phasespace/kernels.hpp"

namespace phasespace {

struct ProjectionSettings {
  /// kappa_{j-m} has radius 2^{j-m-kappa_exponent}; must be >= 3.
  int kappa_exponent = 3;
  /// Grid points per kappa radius demanded by the resolution policy.
  double min_kappa_samples = 4.0;
  /// Compare each piece with the spectral derivative of the sampled G.
  bool leibniz_check = true;
  /// Mismatch above this raises ResolutionError (when strict).
  double leibniz_tolerance = 1e-6;
  bool leibniz_strict = false;
  bool keep_pieces = true;

  void validate() const;
};

/// Smallest samples-per-axis satisfying the resolution policy for `tree`
/// on a grid of the given half-width.
std::int64_t required_samples(int dim, double half_width, const TreeIndex& tree, const ProjectionSettings& s);

struct ProjectionPiece {
  int n = 0;  // 0-based axis
  int j = 0;
  SampledField chi_s;
  SampledField sigma;
  SampledField big_g;
  SampledField g_piece;
  double big_g_route_error = 0.0;  // |chi u - (1_E u + sigma)| / max|G|
  double leibniz_error = 0.0;      // relative, 0 when unchecked
};

struct ProjectionDiagnostics {
  double big_g_route_error = 0.0;
  double g_route_error = 0.0;       // |g - (h + sum k_n)| / max|g|
  double leibniz_error = 0.0;
  double support_ratio = 0.0;       // max |g| off 5U / max |g|
  double sigma_inside_ratio = 0.0;  // max |sigma| on E_j^1 / max |sigma|
};

struct ProjectionOutput {
  SampledField g;
  SampledField chi;
  SampledField low;  // tau_{-m} * f
  std::vector<ProjectionPiece> pieces;
  SampledField h;
  std::vector<SampledField> k;  // one per axis
  ProjectionDiagnostics diagnostics;
};

struct ResidualDecomposition {
  SampledField low_part;    // (tau_{-m} * f)(1 - chi)
  SampledField outside;     // sum_j (psi_{j-m} * f) 1_{F_j^1}
  SampledField correction;  // sum_{n,j} (g_piece - (psi_{n,j-m} * f) 1_{E_j^1})
  int telescoping_floor = 0;
  double identity_error = 0.0;  // relative to max |f - g|
};

class ProjectionEngine {
 public:
  /// Runs the resolution pre-flight; throws ResolutionError with the
  /// required samples, ValidationError when 7U plus margin leaves the torus.
  ProjectionEngine(const TorusGrid& grid, const TreeIndex& tree, ProjectionSettings settings = {});

  const TorusGrid& grid() const { return grid_; }
  const TreeIndex& tree() const { return *tree_; }
  const ProjectionSettings& settings() const { return settings_; }
  int gap() const { return tree_->config().gap; }
  int finest_level() const { return tree_->finest_level(); }

  /// Rasterised E_j^1 (empty outside [j_min, 0]).
  const GridMask& union_mask(int j) const;
  /// chi^s_j; the zero field outside [j_min, 0].
  const SampledField& chi_s(int j) const;
  const SampledField& chi() const { return chi_s(0); }

  SampledField theta_part(int n, int j, const SampledField& f) const;
  SampledField sigma(int n, int j, const SampledField& f) const;
  SampledField big_g(int n, int j, const SampledField& f) const;
  /// (d/dx_n)^{d+1} G by the Leibniz rule: the derivatives of chi^s come
  /// from the closed-form derivatives of kappa, those of theta * f are
  /// spectral. Vanishes off the support of chi^s.
  SampledField g_piece(int n, int j, const SampledField& f) const;
  /// (d/dx_n)^{d+1} chi^s for order >= 1; chi^s itself for order 0.
  SampledField chi_derivative(int n, int j, int order) const;

  /// Cross-check route: the spectral derivative of the sampled G.
  SampledField spectral_g_piece(int n, int j, const SampledField& f) const;

  ProjectionOutput assemble(const SampledField& f) const;
  ResidualDecomposition residual_decomposition(const SampledField& f, const ProjectionOutput& out) const;

  /// Level J with tau_hat_{J-m-1} == 1 on the whole lattice.
  int telescoping_floor() const;

 private:
  TorusGrid grid_;
  std::shared_ptr<const TreeIndex> tree_;
  ProjectionSettings settings_;
  mutable std::map<int, GridMask> masks_;
  mutable std::map<int, SampledField> chis_;
  mutable std::map<int, SampledField> bases_;

  const SampledField& mollifier_base_field(int j) const;
  SampledField leibniz(int n, int j, const SampledField& u) const;
};

/// Relative max-norm distance |a - b|_inf / scale (0 when both vanish).
double relative_error(const SampledField& a, const SampledField& b, double scale);

}  // namespace phasespace
