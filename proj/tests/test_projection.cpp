#include <cmath>

#include "doctest.h"
#include "phasespace/errors.hpp"
#include "phasespace/harness.hpp"
#include "phasespace/projection.hpp"

using namespace phasespace;

namespace {

RunConfig half_leaf(int gap) {
  RunConfig c;
  c.tree.random = false;
  c.tree.leaves = {DyadicCube{1, -1, {0, 0, 0}}};
  c.gap = gap;
  return c;
}

}  // namespace

TEST_CASE("projection of zero is zero") {
  RunConfig c = half_leaf(0);
  const TorusGrid g = c.grid();
  TreeIndex t = expand_to_tree(make_tree(c));
  ProjectionEngine e(g, t, c.projection);
  ProjectionOutput o = e.assemble(SampledField(g));
  CHECK(o.g.max_abs() == 0.0);
}

TEST_CASE("projection routes agree and g is linear") {
  RunConfig c = half_leaf(1);
  const TorusGrid g = c.grid();
  TreeIndex t = expand_to_tree(make_tree(c));
  ProjectionEngine e(g, t, c.projection);
  SampledField f1 = make_field(c, g);
  c.field.seed = 99;
  SampledField f2 = make_field(c, g);
  ProjectionOutput o1 = e.assemble(f1), o2 = e.assemble(f2);
  ProjectionOutput o3 = e.assemble(f1 * Complex(2.0, -1.0) + f2);
  CHECK(o1.diagnostics.big_g_route_error < 1e-12);
  CHECK(o1.diagnostics.g_route_error < 1e-10);
  CHECK(o1.diagnostics.support_ratio < 1e-8);
  SampledField lin = o1.g * Complex(2.0, -1.0) + o2.g;
  CHECK(relative_error(o3.g, lin, o3.g.max_abs()) < 1e-10);
  ResidualDecomposition r = e.residual_decomposition(f1, o1);
  CHECK(r.identity_error < 1e-8);
}

TEST_CASE("Leibniz pieces agree with spectral derivatives when kappa is resolved") {
  RunConfig c = half_leaf(0);
  const TorusGrid g = c.grid();
  TreeIndex t = expand_to_tree(make_tree(c));
  ProjectionEngine e(g, t, c.projection);
  SampledField f = make_field(c, g);
  for (int j : {-1, 0}) {
    SampledField a = e.g_piece(0, j, f), b = e.spectral_g_piece(0, j, f);
    CHECK(relative_error(a, b, a.max_abs()) < 1e-10);
  }
}

TEST_CASE("a single pure mode well above the gap band is filtered") {
  // With E = U and the tree {U}, the pieces live at j = 0 only; a mode far
  // above |xi| = 4 lies outside every psi_{n,0-m} and tau_{-m}.
  RunConfig c;
  c.tree.random = false;
  c.tree.leaves = {DyadicCube::unit(1)};
  c.field.kind = FieldSpec::Kind::Modes;
  c.field.modes = {{Frequency{20.0, 0, 0}, Complex(1.0, 0.0)}};
  const TorusGrid g = c.grid();
  TreeIndex t = expand_to_tree(make_tree(c));
  ProjectionEngine e(g, t, c.projection);
  ProjectionOutput o = e.assemble(make_field(c, g));
  CHECK(o.g.max_abs() < 1e-12);
}

TEST_CASE("resolution pre-flight") {
  RunConfig c = half_leaf(0);
  c.samples = 256;
  TreeIndex t = expand_to_tree(make_tree(c));
  CHECK_THROWS_AS(ProjectionEngine(c.grid(), t, c.projection), ResolutionError);
  try {
    ProjectionEngine e(c.grid(), t, c.projection);
  } catch (const ResolutionError& err) {
    CHECK(err.required_samples() > 256);
    CHECK(err.required_samples() <= required_samples(1, 8.0, t, c.projection));
  }
}

TEST_CASE("projection settings validation") {
  ProjectionSettings s;
  s.kappa_exponent = 2;
  CHECK_THROWS_AS(s.validate(), ValidationError);
}

TEST_CASE("mollified indicators are bounded by one and equal one on E") {
  RunConfig c = half_leaf(0);
  const TorusGrid g = c.grid();
  TreeIndex t = expand_to_tree(make_tree(c));
  ProjectionEngine e(g, t, c.projection);
  const SampledField& chi = e.chi_s(-1);
  const GridMask& m = e.union_mask(-1);
  for (std::int64_t i = 0; i < g.size(); ++i) {
    CHECK(chi[i].real() <= 1.0 + 1e-12);
    CHECK(chi[i].real() >= -1e-12);
    if (m[i]) CHECK(chi[i].real() == doctest::Approx(1.0));
  }
}
