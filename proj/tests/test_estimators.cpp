#include <cmath>
#include <limits>

#include "doctest.h"
#include "phasespace/estimators.hpp"
#include "phasespace/harness.hpp"

using namespace phasespace;

namespace {

struct Fixture {
  RunConfig cfg;
  TorusGrid grid;
  TreeIndex tree;
  SampledField f;
  DictionaryCache dicts;

  explicit Fixture(std::uint64_t seed, int depth = 2, int gap = 0)
      : cfg(make_cfg(seed, depth, gap)),
        grid(cfg.grid()),
        tree(expand_to_tree(make_tree(cfg))),
        f(make_field(cfg, grid)),
        dicts(grid, cfg.dictionary) {}

  static RunConfig make_cfg(std::uint64_t seed, int depth, int gap) {
    RunConfig c;
    c.tree.seed = seed;
    c.tree.depth = depth;
    c.field.seed = seed;
    c.gap = gap;
    return c;
  }
};

}  // namespace

TEST_CASE("dual and size factors") {
  CHECK(dual_factor(-2, 1, 2.0) == doctest::Approx(0.5));
  CHECK(dual_factor(-2, 1, 1.0) == 1.0);
  CHECK(dual_factor(-1, 2, kInfinity) == doctest::Approx(0.25));
  CHECK(size_factor(-2, 1, 2.0) == doctest::Approx(2.0));
  CHECK(size_factor(-3, 1, kInfinity) == 1.0);
}

TEST_CASE("finish_ratio conventions") {
  InequalityReport r;
  r.lhs = 0.0;
  r.rhs = 0.0;
  finish_ratio(r);
  CHECK(r.ratio == 0.0);
  CHECK_FALSE(r.skipped);
  r.lhs = 1.0;
  finish_ratio(r);
  CHECK(std::isinf(r.ratio));
  CHECK(r.skipped);
  CHECK_FALSE(r.reason.empty());
  r = {};
  r.lhs = 3.0;
  r.rhs = 4.0;
  finish_ratio(r);
  CHECK(r.ratio == doctest::Approx(0.75));
}

TEST_CASE("size estimate is absolutely homogeneous and vanishes on zero") {
  Fixture fx(2);
  const std::vector<double> ps{1.0, 2.0, kInfinity};
  auto s1 = estimate_size(fx.f, fx.tree, ps, fx.dicts);
  auto s2 = estimate_size(fx.f * Complex(0.0, -3.0), fx.tree, ps, fx.dicts);
  auto s0 = estimate_size(SampledField(fx.grid), fx.tree, ps, fx.dicts);
  REQUIRE(s1.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(s1[k].value > 0.0);
    CHECK(s2[k].value == doctest::Approx(3.0 * s1[k].value).epsilon(1e-12));
    CHECK(s0[k].value == 0.0);
  }
}

TEST_CASE("size witness re-evaluates to the reported value") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Fixture fx(seed, 1 + static_cast<int>(seed % 3));
    auto sizes = estimate_size(fx.f, fx.tree, {2.0}, fx.dicts);
    const auto& s = sizes.front();
    const int m = fx.tree.config().gap;
    const Dictionary& d = fx.dicts.get({KernelClass::Phi, s.level - m - 2, 4.0 * s.alpha});
    const KernelHandle* k = nullptr;
    for (const auto& mem : d.members)
      if (mem.id == s.kernel) k = &mem;
    REQUIRE(k != nullptr);
    CHECK(size_term(fx.f, s.cube, *k, s.alpha, 2.0, fx.dicts) == doctest::Approx(s.value).epsilon(1e-12));
  }
}

TEST_CASE("Carleson sums are additive over children") {
  Fixture fx(4, 3);
  ProjectionEngine e(fx.grid, fx.tree, fx.cfg.projection);
  ProjectionOutput o = e.assemble(fx.f);
  SampledField residual = fx.f - o.g;
  CarlesonTable table(residual, fx.tree, {1.0, 2.0}, fx.dicts);
  for (const auto& j : fx.tree.cubes()) {
    for (std::size_t p = 0; p < 2; ++p) {
      double children = 0.0;
      for (const auto& c : j.children()) children += table.lhs(c, p);
      CHECK(table.lhs(j, p) == doctest::Approx(children + table.value(j, p)).epsilon(1e-12));
      double scales = 0.0;
      for (const auto& [lvl, v] : table.per_scale(j, p)) scales += v;
      CHECK(scales == doctest::Approx(table.lhs(j, p)).epsilon(1e-12));
    }
  }
  // monotone under inclusion
  const DyadicCube u = DyadicCube::unit(1);
  for (const auto& c : u.children()) CHECK(table.lhs(c, 0) <= table.lhs(u, 0));
}

TEST_CASE("off-tree eligibility") {
  Fixture fx(5);
  DyadicCube violator;
  CHECK_FALSE(offtree_eligible(fx.tree, DyadicCube::unit(1), &violator));
  CHECK(fx.tree.contains(DyadicCube::unit(1)));
  CHECK(offtree_eligible(fx.tree, DyadicCube{1, -1, {-8, 0, 0}}));
}

TEST_CASE("off-tree table sums levels") {
  Fixture fx(6, 2, 1);
  ProjectionEngine e(fx.grid, fx.tree, fx.cfg.projection);
  ProjectionOutput o = e.assemble(fx.f);
  OfftreeTable t(o.g, fx.tree, {2.0, kInfinity}, fx.tree.finest_level() - 2, fx.dicts);
  const DyadicCube j{1, -1, {-4, 0, 0}};
  for (std::size_t p = 0; p < 2; ++p) {
    double sum = 0.0;
    for (int lvl = t.floor_level(); lvl <= j.level; ++lvl) sum += t.level_max(j, lvl, p);
    CHECK(t.lhs(j, p) == doctest::Approx(sum).epsilon(1e-12));
    CHECK(t.level_max(j, j.level, p) == doctest::Approx(t.value(j, p)));
  }
}

TEST_CASE("unit weight supremum") {
  const TorusGrid g{1, 8.0, 1 << 10};
  CHECK(unit_weight_sup(g, DyadicCube::unit(1), 2.0) == 1.0);
  // J = [-2, -1): nearest point of U is 0, rho = 1/2 + 1.5 = 2
  CHECK(unit_weight_sup(g, DyadicCube{1, 0, {-2, 0, 0}}, 2.0) == doctest::Approx(0.25));
}

TEST_CASE("comparison checks hold per kernel") {
  Fixture fx(7, 2, 1);
  for (auto [p, q] : std::vector<std::pair<double, double>>{{1, 2}, {2, kInfinity}, {4, 2}}) {
    auto reps = prop_spq_checks(fx.f, fx.tree, p, q, fx.dicts, 30, 3);
    CHECK_FALSE(reps.empty());
    for (const auto& r : reps)
      if (!r.skipped && r.inequality != "bernstein") CHECK(r.lhs <= r.rhs * (1.0 + 1e-10));
  }
  // same seed, same subset
  auto a = prop_spq_checks(fx.f, fx.tree, 1.0, 2.0, fx.dicts, 10, 9);
  auto b = prop_spq_checks(fx.f, fx.tree, 1.0, 2.0, fx.dicts, 10, 9);
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k].lhs == b[k].lhs);
}

TEST_CASE("constant table summary") {
  ConstantTable empty;
  CHECK(empty.summarize().empty());
  ConstantTable t;
  t.add({"norm", 2.0, 1, 0, 2.0});
  t.add({"norm", 2.0, 1, 1, 1.0});
  t.add({"norm", 2.0, 2, 0, 3.0});
  t.add({"norm", 2.0, 2, 1, 3.0});
  t.add({"carleson", 1.0, 1, 0, 0.0});
  t.add({"carleson", 1.0, 1, 1, 0.5});
  auto rows = t.summarize();
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) {
    if (r.inequality == "norm") {
      CHECK(r.max_ratio == 3.0);
      CHECK(r.uniformity == doctest::Approx(2.0));
      CHECK(r.worst_seed == 1);
      CHECK(r.max_by_gap.at(1) == 3.0);
    } else {
      CHECK(std::isinf(r.uniformity));
    }
  }
}
