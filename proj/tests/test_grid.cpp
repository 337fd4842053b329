#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "doctest.h"
#include "phasespace/errors.hpp"
#include "phasespace/grid.hpp"

using namespace phasespace;

namespace {

constexpr double kPi = std::numbers::pi;

SampledField random_field(const TorusGrid& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  ComplexBuffer v(static_cast<std::size_t>(g.size()));
  for (auto& x : v) x = Complex(n(rng), n(rng));
  return SampledField(g, std::move(v));
}

}  // namespace

TEST_CASE("fft agrees with a naive DFT") {
  const TorusGrid g{1, 2.0, 16};
  SampledField a = random_field(g, 1);
  const auto& s = a.spectrum();
  for (std::int64_t k = 0; k < 16; ++k) {
    Complex acc(0.0, 0.0);
    for (std::int64_t x = 0; x < 16; ++x) acc += a[x] * std::polar(1.0, -2.0 * kPi * k * x / 16.0);
    CHECK(std::abs(acc - s[static_cast<std::size_t>(k)]) < 1e-12);
  }
}

TEST_CASE("Parseval for the raw DFT") {
  const TorusGrid g{2, 4.0, 32};
  SampledField a = random_field(g, 2);
  double lhs = 0.0, rhs = 0.0;
  for (auto v : a.values()) lhs += std::norm(v);
  for (auto v : a.spectrum()) rhs += std::norm(v);
  CHECK(lhs == doctest::Approx(rhs / static_cast<double>(g.size())).epsilon(1e-12));
}

TEST_CASE("frequency layout") {
  const TorusGrid g{1, 8.0, 64};
  CHECK(g.frequency(1) == doctest::Approx(1.0 / 16.0));
  CHECK(g.frequency(32) == doctest::Approx(-2.0));
  CHECK(g.nyquist() == doctest::Approx(2.0));
  CHECK(g.coordinate(0) == -8.0);
}

TEST_CASE("spectral derivative of a trigonometric polynomial") {
  const TorusGrid g{1, 8.0, 256};
  const double xi = 5.0 / 16.0;
  SampledField a = SampledField::sample(g, [&](const Point& x) { return Complex(std::sin(2 * kPi * xi * x[0]), 0.0); });
  SampledField d3 = partial_derivative(a, 0, 3);
  double err = 0.0;
  for (std::int64_t i = 0; i < g.size(); ++i) {
    const double x = g.coordinate(i);
    const double exact = -std::pow(2 * kPi * xi, 3) * std::cos(2 * kPi * xi * x);
    err = std::max(err, std::abs(d3[i] - exact));
  }
  CHECK(err < 1e-9);
  SampledField back = partial_antiderivative(d3, 0, 3);
  double err2 = 0.0;
  for (std::int64_t i = 0; i < g.size(); ++i) err2 = std::max(err2, std::abs(back[i] - a[i]));
  CHECK(err2 < 1e-12);
}

TEST_CASE("modulation shifts the spectrum by one lattice step") {
  const TorusGrid g{1, 4.0, 64};
  SampledField a = random_field(g, 3);
  SampledField m = modulate(a, Frequency{3.0 * g.frequency_step(), 0, 0});
  const auto& s0 = a.spectrum();
  const auto& s1 = m.spectrum();
  // grid origin at -B adds the constant phase e^{-2 pi i B eta} = -1
  double err = 0.0;
  for (std::size_t k = 0; k < 64; ++k) err = std::max(err, std::abs(s1[(k + 3) % 64] + s0[k]));
  CHECK(err < 1e-10);
}

TEST_CASE("multiplier application is pointwise in frequency") {
  const TorusGrid g{1, 4.0, 64};
  SampledField a = random_field(g, 4);
  SampledField b = apply_multiplier(a, [](const Frequency& xi) { return Complex(1.0 + xi[0] * xi[0], 0.0); });
  const auto& s0 = a.spectrum();
  const auto& s1 = b.spectrum();
  for (std::int64_t k = 0; k < 64; ++k) {
    const double xi = g.frequency(k);
    CHECK(std::abs(s1[static_cast<std::size_t>(k)] - (1.0 + xi * xi) * s0[static_cast<std::size_t>(k)]) < 1e-10);
  }
}

TEST_CASE("lp norms of constants") {
  const TorusGrid g{2, 2.0, 16};
  SampledField one = SampledField::sample(g, [](const Point&) { return Complex(1.0, 0.0); });
  CHECK(lp_norm(one, 2.0) == doctest::Approx(4.0));  // sqrt(16)
  CHECK(lp_norm(one, 1.0) == doctest::Approx(16.0));
  CHECK(lp_norm(one, std::numeric_limits<double>::infinity()) == 1.0);
  WeightField w(g, DyadicCube::unit(2), 0.0);
  CHECK(weighted_lp_norm(one, &w, 1.0) == doctest::Approx(16.0));
}

TEST_CASE("weight field equals the periodic rho power") {
  const TorusGrid g{1, 4.0, 64};
  const DyadicCube c{1, -1, {1, 0, 0}};
  WeightField w(g, c, 2.0);
  for (std::int64_t i = 0; i < g.size(); ++i) {
    const double r = periodic_rho(g, c, g.point(i));
    CHECK(w.values()[static_cast<std::size_t>(i)] == doctest::Approx(std::pow(r, -2.0)));
  }
  CHECK(periodic_rho(g, c, Point{0.75, 0, 0}) == 1.0);
  CHECK(periodic_rho(g, c, Point{3.75, 0, 0}) == doctest::Approx(0.5 + 3.0 / 0.5));
}

TEST_CASE("rasterisation uses half-open cubes") {
  const TorusGrid g{1, 4.0, 64};  // h = 1/8
  std::vector<DyadicCube> cubes{DyadicCube{1, 0, {0, 0, 0}}};
  GridMask m = rasterize(g, cubes);
  CHECK(m.count() == 8);
  std::vector<DyadicCube> tiny{DyadicCube{1, -5, {0, 0, 0}}};
  CHECK_THROWS_AS(rasterize(g, tiny), ResolutionError);
}

TEST_CASE("binary field round trip") {
  const TorusGrid g{2, 3.0, 8};
  SampledField a = random_field(g, 5);
  std::stringstream ss;
  write_field_binary(ss, a, true);
  SampledField b = read_field_binary(ss);
  CHECK(b.grid() == g);
  for (std::int64_t i = 0; i < g.size(); ++i) CHECK(b[i] == a[i]);
}

TEST_CASE("pairwise sum is exact for representable data") {
  std::vector<double> v(1000, 0.1);
  CHECK(pairwise_sum(v) == doctest::Approx(100.0).epsilon(1e-14));
  CHECK(pairwise_sum({}) == 0.0);
}

TEST_CASE("grid mismatch is rejected") {
  SampledField a(TorusGrid{1, 2.0, 16});
  SampledField b(TorusGrid{1, 2.0, 32});
  CHECK_THROWS_AS(a += b, ValidationError);
}
