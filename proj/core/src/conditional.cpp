#include "phasespace/conditional.hpp"

#include <algorithm>
#include <cmath>

#include "phasespace/errors.hpp"

namespace phasespace {

namespace {

void require_resolved(const TorusGrid& grid, const DyadicCube& cube) {
  if (cube.dim != grid.dim) throw ValidationError("cube dimension does not match grid");
  if (cube.side() < grid.spacing())
    throw ResolutionError("grid too coarse for cube " + cube.to_string(), 0);
  for (int a = 0; a < grid.dim; ++a)
    if (cube.lower(a) < -grid.half_width || cube.upper(a) > grid.half_width)
      throw ValidationError("cube " + cube.to_string() + " leaves the torus window");
}

Complex mean_of(const SampledField& f, const std::vector<std::int64_t>& points) {
  if (points.empty()) return {};
  std::vector<double> re(points.size()), im(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    Complex v = f[points[i]];
    re[i] = v.real();
    im[i] = v.imag();
  }
  double n = static_cast<double>(points.size());
  return {pairwise_sum(re) / n, pairwise_sum(im) / n};
}

void all_cubes_below(const DyadicCube& root, int finest, std::vector<DyadicCube>& out) {
  out.push_back(root);
  if (root.level <= finest) return;
  for (const auto& c : root.children()) all_cubes_below(c, finest, out);
}

}  // namespace

std::vector<std::int64_t> grid_points_in(const TorusGrid& grid, const DyadicCube& cube) {
  require_resolved(grid, cube);
  const double h = grid.spacing();
  std::array<std::int64_t, kMaxDim> lo{}, hi{};
  for (int a = 0; a < grid.dim; ++a) {
    auto u = static_cast<std::size_t>(a);
    lo[u] = static_cast<std::int64_t>(std::ceil((cube.lower(a) + grid.half_width) / h));
    hi[u] = static_cast<std::int64_t>(std::ceil((cube.upper(a) + grid.half_width) / h));
  }
  std::vector<std::int64_t> out;
  std::array<std::int64_t, kMaxDim> idx = lo;
  while (true) {
    out.push_back(grid.flatten(idx));
    int a = grid.dim - 1;
    while (a >= 0) {
      auto u = static_cast<std::size_t>(a);
      if (++idx[u] < hi[u]) break;
      idx[u] = lo[u];
      --a;
    }
    if (a < 0) break;
  }
  return out;
}

Complex grid_average(const SampledField& f, const DyadicCube& cube) {
  return mean_of(f, grid_points_in(f.grid(), cube));
}

SampledField cond_expectation(const SampledField& f, const DyadicPartition& partition) {
  partition.validate();
  SampledField g(f.grid());
  auto out = g.mutable_values();
  for (const auto& cell : partition.cells) {
    auto pts = grid_points_in(f.grid(), cell);
    Complex avg = mean_of(f, pts);
    for (auto i : pts) out[static_cast<std::size_t>(i)] = avg;
  }
  return g;
}

BaselineCheck check_baseline(const SampledField& f, const DyadicPartition& partition, int extra_levels) {
  BaselineCheck r;
  r.g = cond_expectation(f, partition);
  r.g_sup = r.g.max_abs();
  std::vector<DyadicCube> cubes;
  all_cubes_below(partition.root, partition.finest_level() - extra_levels, cubes);
  const SampledField diff = f - r.g;
  for (const auto& cube : cubes) {
    auto pts = grid_points_in(f.grid(), cube);
    if (partition.generates(cube)) {
      ++r.cubes_inside;
      r.s_dyadic = std::max(r.s_dyadic, std::abs(mean_of(f, pts)));
      r.max_inside_error = std::max(r.max_inside_error, std::abs(mean_of(diff, pts)));
    } else {
      ++r.cubes_outside;
      Complex avg = mean_of(r.g, pts);
      for (auto i : pts) r.max_outside_error = std::max(r.max_outside_error, std::abs(r.g[i] - avg));
    }
  }
  return r;
}

}  // namespace phasespace
