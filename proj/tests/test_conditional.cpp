#include <cmath>

#include "doctest.h"
#include "phasespace/conditional.hpp"
#include "phasespace/harness.hpp"

using namespace phasespace;

TEST_CASE("grid points in a cube") {
  const TorusGrid g{1, 4.0, 64};  // h = 1/8
  auto pts = grid_points_in(g, DyadicCube{1, -1, {1, 0, 0}});
  REQUIRE(pts.size() == 4);
  CHECK(g.coordinate(pts.front()) == doctest::Approx(0.5));
}

TEST_CASE("grid average of a linear function") {
  const TorusGrid g{1, 4.0, 64};
  SampledField f = SampledField::sample(g, [](const Point& x) { return Complex(x[0], 0.0); });
  // points 0, 1/8, ..., 7/8
  CHECK(grid_average(f, DyadicCube::unit(1)).real() == doctest::Approx(7.0 / 16.0));
}

TEST_CASE("conditional expectation of a constant") {
  const TorusGrid g{2, 4.0, 32};
  SampledField one = SampledField::sample(g, [](const Point&) { return Complex(2.0, 0.0); });
  DyadicPartition p = random_partition(3, 2, 2);
  SampledField e = cond_expectation(one, p);
  for (std::int64_t i = 0; i < g.size(); ++i) {
    const Point x = g.point(i);
    const bool in_u = x[0] >= 0 && x[0] < 1 && x[1] >= 0 && x[1] < 1;
    CHECK(std::abs(e[i] - Complex(in_u ? 2.0 : 0.0, 0.0)) < 1e-15);
  }
}

TEST_CASE("conditional expectation is idempotent") {
  RunConfig c;
  c.samples = 1 << 11;
  const TorusGrid g = c.grid();
  SampledField f = make_field(c, g);
  DyadicPartition p = random_partition(9, 4, 1);
  SampledField e1 = cond_expectation(f, p);
  SampledField e2 = cond_expectation(e1, p);
  double err = 0.0;
  for (std::int64_t i = 0; i < g.size(); ++i) err = std::max(err, std::abs(e1[i] - e2[i]));
  CHECK(err < 1e-14);
}

TEST_CASE("baseline identities on random partitions") {
  for (int dim : {1, 2}) {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
      RunConfig c;
      c.dim = dim;
      c.samples = dim == 1 ? 1 << 11 : 1 << 8;
      c.field.seed = seed;
      c.field.band_hi = 6.0;
      SampledField f = make_field(c, c.grid());
      DyadicPartition p = random_partition(seed, dim == 1 ? 4 : 2, dim);
      BaselineCheck chk = check_baseline(f, p);
      CHECK(chk.passed(1e-12));
      CHECK(chk.cubes_inside > 0);
      CHECK(chk.g_sup <= chk.s_dyadic);
    }
  }
}
