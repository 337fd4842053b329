#include <cmath>
#include <random>

#include "doctest.h"
#include "phasespace/dyadic.hpp"
#include "phasespace/errors.hpp"

using namespace phasespace;

namespace {

DyadicCube cube1(int level, std::int64_t k) { return DyadicCube{1, level, {k, 0, 0}}; }
DyadicCube cube2(int level, std::int64_t a, std::int64_t b) { return DyadicCube{2, level, {a, b, 0}}; }

// y in (2r - 1) I, the concentric half-open dilate.
bool in_dilate(const DyadicCube& c, const Point& y, double r) {
  const double half = 0.5 * (2.0 * r - 1.0) * c.side();
  for (int n = 0; n < c.dim; ++n) {
    const double lo = c.center(n) - half, hi = c.center(n) + half;
    if (y[n] < lo || y[n] >= hi) return false;
  }
  return true;
}

double rho_bisect(const DyadicCube& c, const Point& y) {
  if (in_dilate(c, y, 1.0)) return 1.0;
  double lo = 1.0, hi = 2.0;
  while (!in_dilate(c, y, hi)) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (in_dilate(c, y, mid) ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace

TEST_CASE("cube geometry") {
  const DyadicCube q = cube1(-2, 3);
  CHECK(q.side() == doctest::Approx(0.25));
  CHECK(q.lower(0) == doctest::Approx(0.75));
  CHECK(q.upper(0) == doctest::Approx(1.0));
  CHECK(q.parent() == cube1(-1, 1));
  CHECK(q.ancestor(0) == cube1(0, 0));
  CHECK(cube1(0, 0).contains(q));
  CHECK_FALSE(q.contains(cube1(0, 0)));
  CHECK(cube1(-3, -1).ancestor(0) == cube1(0, -1));
  CHECK(cube2(-1, 1, 0).children().size() == 4);
  CHECK(cube2(0, 0, 0).measure() == doctest::Approx(1.0));
}

TEST_CASE("rho matches bisection on the dilate family") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3.0, 4.0);
  for (int trial = 0; trial < 200; ++trial) {
    const DyadicCube c = cube2(-(trial % 3), trial % 2, (trial / 2) % 2);
    const Point y{u(rng), u(rng), 0.0};
    CHECK(rho_point(c, y) == doctest::Approx(rho_bisect(c, y)).epsilon(1e-9));
  }
}

TEST_CASE("rho reference values") {
  const DyadicCube u = DyadicCube::unit(1);
  CHECK(rho_point(u, Point{0.25, 0, 0}) == 1.0);
  CHECK(rho_point(u, Point{2.0, 0, 0}) == doctest::Approx(2.0));
  CHECK(rho_point(u, Point{-1.0, 0, 0}) == doctest::Approx(2.0));
  // rho_U([1, 2)) is attained on the closure at y = 1
  CHECK(rho_cube(u, cube1(0, 1)) == doctest::Approx(1.0));
  CHECK(rho_cube(u, cube1(0, 2)) == doctest::Approx(2.0));
  CHECK(std::isinf(rho_set(u, {})));
}

TEST_CASE("rho_cube is the infimum over the closed target") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const DyadicCube c = cube1(-1, static_cast<std::int64_t>(rng() % 4));
    const DyadicCube t = cube1(-2, static_cast<std::int64_t>(rng() % 24) - 8);
    double best = 1e300;
    for (int s = 0; s <= 1000; ++s) {
      const double y = t.lower(0) + t.side() * s / 1000.0;
      best = std::min(best, rho_point(c, Point{y, 0, 0}));
    }
    CHECK(rho_cube(c, t) == doctest::Approx(best).epsilon(1e-9));
  }
}

TEST_CASE("tree config validation") {
  TreeConfig cfg;
  cfg.leaves = {cube1(-1, 0), cube1(-2, 1)};
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.leaves = {cube1(-1, 0)};
  cfg.alpha = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.alpha = 2.0;
  cfg.gap = -1;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.gap = 0;
  CHECK_NOTHROW(cfg.validate());
  cfg.leaves = {cube1(-1, 3)};
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("tree expansion for a single half leaf") {
  TreeConfig cfg;
  cfg.leaves = {cube1(-1, 0)};
  TreeIndex t = expand_to_tree(cfg);
  CHECK(t.finest_level() == -1);
  CHECK(t.cubes() == CubeSet{cube1(-1, 0), cube1(0, 0)});
  CHECK(t.ring(0, 0) == CubeSet{cube1(0, 0)});
  // T_{-1}^0 holds the level -1 cubes touching E_{-1}^0 = [0, 1/2)
  CHECK(t.ring(-1, 0).size() == 1);
  CHECK(t.ring(-2, 0).empty());
  const CubeSet b = t.shell(0, 1);
  for (const auto& c : b) CHECK(rho_cube(c, cube1(0, 0)) > 1.0);
}

TEST_CASE("rings are nested") {
  TreeConfig cfg;
  cfg.dim = 2;
  cfg.root = DyadicCube::unit(2);
  cfg.alpha = 3.0;
  cfg.leaves = {cube2(-2, 0, 0), cube2(-1, 1, 1)};
  TreeIndex t = expand_to_tree(cfg);
  for (int j = t.finest_level(); j <= 0; ++j)
    for (int k = 0; k < kRingDepth; ++k)
      for (const auto& c : t.ring(j, k)) CHECK(set_contains(t.ring(j, k + 1), c));
}

TEST_CASE("corona family partitions 3U") {
  TreeConfig cfg;
  cfg.leaves = {cube1(-3, 2), cube1(-1, 1)};
  TreeIndex t = expand_to_tree(cfg);
  auto cor = corona_partition(t);
  CHECK(pairwise_disjoint(cor));
  double total = 0.0;
  for (const auto& c : cor) {
    total += c.measure();
    CHECK(c.lower(0) >= -1.0);
    CHECK(c.upper(0) <= 2.0);
  }
  CHECK(total == doctest::Approx(3.0));
}

TEST_CASE("maximal off-tree cubes avoid the tree") {
  TreeConfig cfg;
  cfg.leaves = {cube1(-2, 1)};
  TreeIndex t = expand_to_tree(cfg);
  auto off = maximal_offtree(t);
  REQUIRE_FALSE(off.empty());
  CHECK(pairwise_disjoint(off));
  for (const auto& k : off) {
    CHECK(k.lower(0) >= -3.0);
    CHECK(k.upper(0) <= 4.0);
    for (const auto& c : t.cubes()) {
      const double lo = k.center(0) - 1.5 * k.side(), hi = k.center(0) + 1.5 * k.side();
      CHECK_FALSE((c.lower(0) >= lo && c.upper(0) <= hi));
    }
    // maximality: the parent's triple meets the tree or leaves 7U
    const DyadicCube q = k.parent();
    bool blocked = q.lower(0) - q.side() < -3.0 || q.upper(0) + q.side() > 4.0;
    for (const auto& c : t.cubes())
      blocked = blocked || (c.lower(0) >= q.center(0) - 1.5 * q.side() && c.upper(0) <= q.center(0) + 1.5 * q.side());
    CHECK(blocked);
  }
}

TEST_CASE("partition from tree covers U") {
  TreeConfig cfg;
  cfg.dim = 2;
  cfg.root = DyadicCube::unit(2);
  cfg.alpha = 3.0;
  cfg.leaves = {cube2(-2, 3, 0)};
  DyadicPartition p = partition_from_tree(expand_to_tree(cfg));
  CHECK_NOTHROW(p.validate());
  double total = 0.0;
  for (const auto& c : p.cells) total += c.measure();
  CHECK(total == doctest::Approx(1.0));
  CHECK(p.generates(cube2(-1, 1, 0)));
  CHECK(p.generates(cube2(-2, 2, 0)));
  CHECK_FALSE(p.generates(cube2(-2, 0, 0)));
  CHECK(p.finest_level() == -2);
}

TEST_CASE("normalization round trip") {
  TreeConfig cfg;
  cfg.root = cube1(2, -1);
  cfg.leaves = {cube1(0, -3)};
  NormalizedTree n = normalize(cfg);
  CHECK(n.config.is_normalized());
  CHECK(n.config.leaves.front() == cube1(-2, 1));
  CHECK(n.map.inverse(n.config.leaves.front()) == cube1(0, -3));
  const Point y{-3.5, 0, 0};
  CHECK(n.map.inverse(n.map.forward(y))[0] == doctest::Approx(-3.5));
}
