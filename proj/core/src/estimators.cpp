#include "phasespace/estimators.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <queue>
#include <random>

#include "phasespace/errors.hpp"

namespace phasespace {

double dual_factor(int level, int dim, double p) {
  if (p == 1.0) return 1.0;
  if (std::isinf(p)) return std::ldexp(1.0, level * dim);
  return std::exp2(level * dim * (1.0 - 1.0 / p));
}

double size_factor(int level, int dim, double p) {
  if (std::isinf(p)) return 1.0;
  return std::exp2(-level * dim / p);
}

// ---------------------------------------------------------------------------

DictionaryCache::DictionaryCache(const TorusGrid& grid, DictionarySpec spec, bool cache_tables)
    : grid_(grid), spec_(std::move(spec)), cache_tables_(cache_tables) {
  spec_.validate();
}

const Dictionary& DictionaryCache::get(const ClassTag& tag) {
  auto key = std::make_tuple(static_cast<int>(tag.cls), tag.level, tag.exponent);
  auto it = dicts_.find(key);
  if (it != dicts_.end()) return *it->second;
  auto dict = std::make_unique<Dictionary>(build_dictionary(grid_, tag, spec_));
  return *dicts_.emplace(key, std::move(dict)).first->second;
}

SampledField DictionaryCache::apply(const KernelHandle& k, const SampledField& f) {
  if (!cache_tables_ || !k.multiplier) return k.apply(f);
  auto it = tables_.find(&k);
  if (it == tables_.end()) it = tables_.emplace(&k, k.table(grid_)).first;
  return apply_multiplier(f, it->second);
}

std::vector<const Dictionary*> DictionaryCache::built() const {
  std::vector<const Dictionary*> out;
  for (const auto& [key, d] : dicts_) out.push_back(d.get());
  return out;
}

// ---------------------------------------------------------------------------

std::vector<SizeEstimate> estimate_size(const SampledField& f, const TreeIndex& tree,
                                        const std::vector<double>& ps, DictionaryCache& dicts) {
  const auto& grid = f.grid();
  const double alpha = tree.config().alpha;
  const int m = tree.config().gap;
  std::vector<SizeEstimate> out;
  for (double p : ps) {
    SizeEstimate s;
    s.p = p;
    s.alpha = alpha;
    s.gap = m;
    s.dictionary = dicts.spec().id;
    out.push_back(s);
  }
  for (int i = tree.finest_level(); i <= 0; ++i) {
    const auto& cubes = tree.ring(i, 0);
    if (cubes.empty()) continue;
    std::vector<WeightField> weights;
    for (const auto& c : cubes) weights.emplace_back(grid, c, alpha);
    const Dictionary& dict = dicts.get({KernelClass::Phi, i - m - 2, 4.0 * alpha});
    for (const auto& k : dict.members) {
      SampledField u = dicts.apply(k, f);
      for (std::size_t c = 0; c < cubes.size(); ++c) {
        for (std::size_t q = 0; q < ps.size(); ++q) {
          double v = size_factor(i, grid.dim, ps[q]) * weighted_lp_norm(u, &weights[c], ps[q]);
          if (v > out[q].value) {
            out[q].value = v;
            out[q].level = i;
            out[q].cube = cubes[c];
            out[q].kernel = k.id;
          }
        }
      }
    }
  }
  return out;
}

double size_term(const SampledField& f, const DyadicCube& cube, const KernelHandle& k, double alpha, double p,
                 DictionaryCache& dicts) {
  WeightField w(f.grid(), cube, alpha);
  return size_factor(cube.level, f.grid().dim, p) * weighted_lp_norm(dicts.apply(k, f), &w, p);
}

void finish_ratio(InequalityReport& r) {
  if (r.rhs > 0.0) {
    r.ratio = r.lhs / r.rhs;
  } else if (r.lhs == 0.0) {
    r.ratio = 0.0;
  } else {
    r.ratio = kInfinity;
    r.skipped = true;
    r.reason = "size surrogate vanishes while lhs does not (dictionary too small for this input)";
  }
}

InequalityReport check_norm_bound(const SampledField& g, const SizeEstimate& size) {
  InequalityReport r;
  r.inequality = "norm";
  r.p = size.p;
  r.gap = size.gap;
  r.lhs = lp_norm(g, size.p);
  r.rhs = size.value;
  r.cube = DyadicCube::unit(g.grid().dim);
  finish_ratio(r);
  return r;
}

// ---------------------------------------------------------------------------

CarlesonTable::CarlesonTable(const SampledField& residual, const TreeIndex& tree, const std::vector<double>& ps,
                             DictionaryCache& dicts)
    : ps_(ps) {
  const auto& grid = residual.grid();
  const double alpha = tree.config().alpha;
  const int m = tree.config().gap;
  for (int i = tree.finest_level(); i <= 0; ++i) {
    const auto& cubes = tree.ring(i, 0);
    if (cubes.empty()) continue;
    std::vector<WeightField> weights;
    for (const auto& c : cubes) {
      weights.emplace_back(grid, c, 3.0 * alpha);
      values_[c].assign(ps.size(), 0.0);
    }
    const Dictionary& dict = dicts.get({KernelClass::Phi, i - m, 4.0 * alpha});
    for (const auto& k : dict.members) {
      SampledField u = dicts.apply(k, residual);
      for (std::size_t c = 0; c < cubes.size(); ++c) {
        auto& row = values_[cubes[c]];
        for (std::size_t q = 0; q < ps.size(); ++q)
          row[q] = std::max(row[q], dual_factor(i, grid.dim, ps[q]) * weighted_lp_norm(u, &weights[c], ps[q]));
      }
    }
  }
}

double CarlesonTable::value(const DyadicCube& cube, std::size_t p_index) const {
  auto it = values_.find(cube);
  return it == values_.end() ? 0.0 : it->second[p_index];
}

double CarlesonTable::lhs(const DyadicCube& j_cube, std::size_t p_index) const {
  double s = 0.0;
  for (const auto& [cube, row] : values_)
    if (cube.level <= j_cube.level && j_cube.contains(cube)) s += row[p_index];
  return s;
}

std::vector<std::pair<int, double>> CarlesonTable::per_scale(const DyadicCube& j_cube, std::size_t p_index) const {
  std::map<int, double> by_level;
  for (const auto& [cube, row] : values_)
    if (cube.level <= j_cube.level && j_cube.contains(cube)) by_level[cube.level] += row[p_index];
  std::vector<std::pair<int, double>> out;
  for (auto it = by_level.rbegin(); it != by_level.rend(); ++it) out.emplace_back(it->first, it->second);
  return out;
}

InequalityReport carleson_report(const CarlesonTable& table, std::size_t p_index, const DyadicCube& j_cube,
                                 const SizeEstimate& size) {
  InequalityReport r;
  r.inequality = "carleson";
  r.p = table.ps()[p_index];
  r.gap = size.gap;
  r.cube = j_cube;
  r.lhs = table.lhs(j_cube, p_index);
  r.rhs = size.value * std::ldexp(1.0, j_cube.level * j_cube.dim);
  finish_ratio(r);
  return r;
}

// ---------------------------------------------------------------------------

bool offtree_eligible(const TreeIndex& tree, const DyadicCube& j_cube, DyadicCube* violator) {
  for (const auto& c : tree.ring(j_cube.level, 0)) {
    if (rho_cube(j_cube, c) <= 1.0) {
      if (violator) *violator = c;
      return false;
    }
  }
  return true;
}

double unit_weight_sup(const TorusGrid& grid, const DyadicCube& j_cube, double alpha) {
  const double h = grid.spacing();
  const double last = std::ceil(1.0 / h) - 1.0;
  double dist = 0.0;
  for (int a = 0; a < grid.dim; ++a) {
    double c = j_cube.center(a);
    double k = std::clamp(std::round(c / h), 0.0, last);
    dist = std::max(dist, std::abs(k * h - c));
  }
  double rho = std::max(1.0, 0.5 + dist / j_cube.side());
  return std::pow(rho, -alpha);
}

namespace {

constexpr int kWindowLo = -4;
constexpr int kWindowHi = 5;

std::int64_t window_width(int level) { return static_cast<std::int64_t>(kWindowHi - kWindowLo) << (-level); }

// Block maxima of |u| over dyadic blocks of grid indices, for exact
// branch-and-bound evaluation of max_x |u(x)| phi(|x - c|_inf).
class BlockMax {
 public:
  BlockMax(const TorusGrid& grid, std::vector<double> base) : grid_(grid) {
    levels_.push_back(std::move(base));
    top_ = std::countr_zero(static_cast<std::uint64_t>(grid.samples));
    for (int L = 1; L <= top_; ++L) {
      const std::int64_t n = grid.samples >> L;
      const std::int64_t nc = n * 2;
      std::int64_t total = 1;
      for (int a = 0; a < grid.dim; ++a) total *= n;
      std::vector<double> next(static_cast<std::size_t>(total), 0.0);
      const auto& prev = levels_.back();
      std::int64_t prev_total = 1;
      for (int a = 0; a < grid.dim; ++a) prev_total *= nc;
      for (std::int64_t f = 0; f < prev_total; ++f) {
        std::int64_t rem = f, parent = 0, mul = 1;
        for (int a = grid.dim - 1; a >= 0; --a) {
          std::int64_t k = rem % nc;
          rem /= nc;
          parent += (k / 2) * mul;
          mul *= n;
        }
        auto& slot = next[static_cast<std::size_t>(parent)];
        slot = std::max(slot, prev[static_cast<std::size_t>(f)]);
      }
      levels_.push_back(std::move(next));
    }
  }

  template <class Weight>
  double weighted_max(const std::array<std::int64_t, kMaxDim>& centre, const Weight& phi) const {
    struct Node {
      double bound;
      int level;
      std::int64_t flat;
      bool operator<(const Node& o) const { return bound < o.bound; }
    };
    const double h = grid_.spacing();
    auto block_distance = [&](int L, std::int64_t flat) {
      const std::int64_t n = grid_.samples >> L;
      const std::int64_t width = std::int64_t{1} << L;
      double dist = 0.0;
      for (int a = grid_.dim - 1; a >= 0; --a) {
        std::int64_t b = flat % n;
        flat /= n;
        std::int64_t lo = b * width, hi = lo + width - 1;
        std::int64_t c = centre[static_cast<std::size_t>(a)];
        std::int64_t d = 0;
        if (c < lo || c > hi) {
          std::int64_t up = ((lo - c) % grid_.samples + grid_.samples) % grid_.samples;
          std::int64_t down = ((c - hi) % grid_.samples + grid_.samples) % grid_.samples;
          d = std::min(up, down);
        }
        dist = std::max(dist, static_cast<double>(d) * h);
      }
      return dist;
    };
    std::priority_queue<Node> queue;
    queue.push({levels_[static_cast<std::size_t>(top_)][0] * phi(0.0), top_, 0});
    double best = 0.0;
    while (!queue.empty()) {
      Node node = queue.top();
      queue.pop();
      if (node.bound <= best) break;
      if (node.level == 0) {
        best = node.bound;
        continue;
      }
      const int L = node.level - 1;
      const std::int64_t n = grid_.samples >> L;
      const std::int64_t np = n / 2;
      std::array<std::int64_t, kMaxDim> pidx{};
      std::int64_t rem = node.flat;
      for (int a = grid_.dim - 1; a >= 0; --a) {
        pidx[static_cast<std::size_t>(a)] = rem % np;
        rem /= np;
      }
      const int children = 1 << grid_.dim;
      for (int c = 0; c < children; ++c) {
        std::int64_t flat = 0;
        for (int a = 0; a < grid_.dim; ++a) flat = flat * n + pidx[static_cast<std::size_t>(a)] * 2 + ((c >> a) & 1);
        double m = levels_[static_cast<std::size_t>(L)][static_cast<std::size_t>(flat)];
        if (m <= best) continue;
        double bound = m * phi(block_distance(L, flat));
        if (bound > best) queue.push({bound, L, flat});
      }
    }
    return best;
  }

 private:
  TorusGrid grid_;
  int top_ = 0;
  std::vector<std::vector<double>> levels_;
};

}  // namespace

std::int64_t OfftreeTable::window_flat(const DyadicCube& cube, int level) const {
  (void)level;
  const std::int64_t w = window_width(cube.level);
  const std::int64_t lo = static_cast<std::int64_t>(kWindowLo) << (-cube.level);
  std::int64_t flat = 0;
  for (int a = 0; a < dim_; ++a) {
    std::int64_t k = cube.index[static_cast<std::size_t>(a)] - lo;
    if (k < 0 || k >= w) return -1;
    flat = flat * w + k;
  }
  return flat;
}

OfftreeTable::OfftreeTable(const SampledField& g, const TreeIndex& tree, const std::vector<double>& ps,
                           int floor_level, DictionaryCache& dicts)
    : dim_(g.grid().dim), floor_(floor_level), ps_(ps) {
  const auto& grid = g.grid();
  const double alpha = tree.config().alpha;
  const double beta = 3.0 * alpha;
  const int m = tree.config().gap;
  const double h = grid.spacing();
  if (floor_level > 0) throw ValidationError("off-tree floor level must be <= 0");
  if (std::ldexp(1.0, floor_level - 1) < h)
    throw ResolutionError("cube centres at level " + std::to_string(floor_level) + " are off the grid",
                          static_cast<std::int64_t>(std::bit_ceil(static_cast<std::uint64_t>(
                              std::ceil(2.0 * grid.half_width / std::ldexp(1.0, floor_level - 1))))));

  for (int i = floor_level; i <= 0; ++i) {
    const std::int64_t w = window_width(i);
    std::int64_t count = 1;
    for (int a = 0; a < dim_; ++a) count *= w;
    const std::int64_t lo = static_cast<std::int64_t>(kWindowLo) << (-i);
    const double side = std::ldexp(1.0, i);

    // window cubes, their grid centres and tree membership
    std::vector<std::array<std::int64_t, kMaxDim>> centres(static_cast<std::size_t>(count));
    std::vector<std::int64_t> centre_flat(static_cast<std::size_t>(count));
    std::vector<std::uint8_t> in_tree(static_cast<std::size_t>(count), 0);
    for (std::int64_t f = 0; f < count; ++f) {
      DyadicCube cube{dim_, i, {}};
      std::int64_t rem = f;
      for (int a = dim_ - 1; a >= 0; --a) {
        cube.index[static_cast<std::size_t>(a)] = lo + rem % w;
        rem /= w;
      }
      std::array<std::int64_t, kMaxDim> idx{};
      for (int a = 0; a < dim_; ++a)
        idx[static_cast<std::size_t>(a)] = static_cast<std::int64_t>(std::llround((cube.center(a) + grid.half_width) / h));
      centres[static_cast<std::size_t>(f)] = idx;
      centre_flat[static_cast<std::size_t>(f)] = grid.flatten(idx);
      in_tree[static_cast<std::size_t>(f)] = tree.contains(cube) ? 1 : 0;
    }

    std::vector<std::vector<double>> vals(ps.size(), std::vector<double>(static_cast<std::size_t>(count), 0.0));
    std::vector<SampledField> weight_kernels(ps.size());
    for (std::size_t q = 0; q < ps.size(); ++q) {
      if (std::isinf(ps[q])) continue;
      const double expo = beta * ps[q];
      weight_kernels[q] = SampledField::sample(grid, [&](const Point& x) -> Complex {
        double dist = 0.0;
        for (int a = 0; a < dim_; ++a) dist = std::max(dist, std::abs(x[static_cast<std::size_t>(a)]));
        return std::pow(std::max(1.0, 0.5 + dist / side), -expo);
      });
    }

    const Dictionary& dict = dicts.get({KernelClass::Psi, i - m, 4.0 * alpha});
    for (const auto& k : dict.members) {
      SampledField u = dicts.apply(k, g);
      for (std::size_t q = 0; q < ps.size(); ++q) {
        const double p = ps[q];
        const double factor = size_factor(i, dim_, p);
        auto& row = vals[q];
        if (std::isinf(p)) {
          std::vector<double> mag(u.size());
          for (std::size_t x = 0; x < u.size(); ++x) mag[x] = std::abs(u.values()[x]);
          BlockMax bm(grid, std::move(mag));
          auto phi = [&](double dist) { return std::pow(std::max(1.0, 0.5 + dist / side), -beta); };
          for (std::int64_t f = 0; f < count; ++f) {
            if (in_tree[static_cast<std::size_t>(f)]) continue;
            double v = bm.weighted_max(centres[static_cast<std::size_t>(f)], phi);
            row[static_cast<std::size_t>(f)] = std::max(row[static_cast<std::size_t>(f)], v);
          }
        } else {
          ComplexBuffer powered(u.size());
          for (std::size_t x = 0; x < u.size(); ++x) powered[x] = std::pow(std::abs(u.values()[x]), p);
          SampledField corr = convolve(SampledField(grid, std::move(powered)), weight_kernels[q]);
          for (std::int64_t f = 0; f < count; ++f) {
            if (in_tree[static_cast<std::size_t>(f)]) continue;
            double c = std::max(0.0, corr[centre_flat[static_cast<std::size_t>(f)]].real());
            double v = factor * std::pow(c, 1.0 / p);
            row[static_cast<std::size_t>(f)] = std::max(row[static_cast<std::size_t>(f)], v);
          }
        }
      }
    }

    Level lev;
    lev.level = i;
    lev.pyramid.resize(ps.size());
    for (std::size_t q = 0; q < ps.size(); ++q) {
      lev.pyramid[q].push_back(std::move(vals[q]));
      for (int up = i + 1; up <= 0; ++up) {
        const std::int64_t wc = window_width(up);
        const std::int64_t wf = window_width(up - 1);
        std::int64_t total = 1;
        for (int a = 0; a < dim_; ++a) total *= wc;
        std::vector<double> next(static_cast<std::size_t>(total), 0.0);
        const auto& prev = lev.pyramid[q].back();
        std::int64_t prev_total = 1;
        for (int a = 0; a < dim_; ++a) prev_total *= wf;
        for (std::int64_t f = 0; f < prev_total; ++f) {
          std::int64_t rem = f, parent = 0, mul = 1;
          for (int a = dim_ - 1; a >= 0; --a) {
            std::int64_t k = rem % wf;
            rem /= wf;
            parent += (k / 2) * mul;
            mul *= wc;
          }
          auto& slot = next[static_cast<std::size_t>(parent)];
          slot = std::max(slot, prev[static_cast<std::size_t>(f)]);
        }
        lev.pyramid[q].push_back(std::move(next));
      }
    }
    levels_.push_back(std::move(lev));
  }
}

double OfftreeTable::level_max(const DyadicCube& j_cube, int level, std::size_t p_index) const {
  if (level < floor_ || level > j_cube.level || j_cube.level > 0) return 0.0;
  const auto& lev = levels_[static_cast<std::size_t>(level - floor_)];
  std::int64_t flat = window_flat(j_cube, j_cube.level);
  if (flat < 0) throw ValidationError("cube " + j_cube.to_string() + " lies outside the 9U window");
  return lev.pyramid[p_index][static_cast<std::size_t>(j_cube.level - level)][static_cast<std::size_t>(flat)];
}

double OfftreeTable::lhs(const DyadicCube& j_cube, std::size_t p_index) const {
  double s = 0.0;
  for (int i = floor_; i <= j_cube.level; ++i) s += level_max(j_cube, i, p_index);
  return s;
}

std::vector<std::pair<int, double>> OfftreeTable::per_scale(const DyadicCube& j_cube, std::size_t p_index) const {
  std::vector<std::pair<int, double>> out;
  for (int i = j_cube.level; i >= floor_; --i) out.emplace_back(i, level_max(j_cube, i, p_index));
  return out;
}

double OfftreeTable::value(const DyadicCube& cube, std::size_t p_index) const { return level_max(cube, cube.level, p_index); }

InequalityReport offtree_report(const OfftreeTable& table, std::size_t p_index, const DyadicCube& j_cube,
                                const SizeEstimate& size, const TorusGrid& grid, double alpha) {
  InequalityReport r;
  r.inequality = "offtree";
  r.p = table.ps()[p_index];
  r.gap = size.gap;
  r.cube = j_cube;
  r.lhs = table.lhs(j_cube, p_index);
  r.rhs = size.value * unit_weight_sup(grid, j_cube, alpha);
  finish_ratio(r);
  return r;
}

// ---------------------------------------------------------------------------

namespace {

struct Draw {
  int level;
  DyadicCube cube;
  const KernelHandle* kernel;
};

std::vector<Draw> size_family(const TreeIndex& tree, DictionaryCache& dicts) {
  const double alpha = tree.config().alpha;
  const int m = tree.config().gap;
  std::vector<Draw> out;
  for (int i = tree.finest_level(); i <= 0; ++i) {
    const auto& cubes = tree.ring(i, 0);
    if (cubes.empty()) continue;
    const Dictionary& dict = dicts.get({KernelClass::Phi, i - m - 2, 4.0 * alpha});
    for (const auto& k : dict.members)
      for (const auto& c : cubes) out.push_back({i, c, &k});
  }
  return out;
}

double weight_norm(const TorusGrid& grid, const DyadicCube& cube, double exponent, double r) {
  WeightField w(grid, cube, exponent);
  SampledField one(grid);
  for (auto& v : one.mutable_values()) v = 1.0;
  return weighted_lp_norm(one, &w, r);
}

SampledField weighted(const SampledField& u, const WeightField& w) {
  ComplexBuffer out(u.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = u.values()[i] * w.values()[i];
  return SampledField(u.grid(), std::move(out));
}

}  // namespace

std::vector<InequalityReport> prop_spq_checks(const SampledField& f, const TreeIndex& tree, double p, double q,
                                              DictionaryCache& dicts, std::size_t draws, std::uint64_t seed) {
  const auto& grid = f.grid();
  const double alpha = tree.config().alpha;
  std::vector<Draw> family = size_family(tree, dicts);
  if (draws > 0 && draws < family.size()) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = family.size() - 1; i > 0; --i) std::swap(family[i], family[rng() % (i + 1)]);
    family.resize(draws);
  }
  std::vector<InequalityReport> out;
  for (const auto& draw : family) {
    SampledField u = dicts.apply(*draw.kernel, f);
    std::string ctx = draw.kernel->id + " on " + draw.cube.to_string();

    InequalityReport hold;
    hold.inequality = "holder";
    hold.p = p;
    hold.q = q;
    hold.gap = tree.config().gap;
    hold.cube = draw.cube;
    hold.context = ctx;
    if (!(p < q)) {
      hold.skipped = true;
      hold.reason = p == q ? "p = q: weight exponent degenerate" : "requires p <= q";
    } else {
      const double gamma = std::isinf(q) ? 1.0 / p : (q - p) / (q * p);
      const double r = std::isinf(q) ? p : q * p / (q - p);
      WeightField lhs_w(grid, draw.cube, alpha * (1.0 + gamma));
      WeightField rhs_w(grid, draw.cube, alpha);
      hold.lhs = weighted_lp_norm(u, &lhs_w, p);
      hold.rhs = weight_norm(grid, draw.cube, alpha * gamma, r) * weighted_lp_norm(u, &rhs_w, q);
      finish_ratio(hold);
    }
    out.push_back(hold);

    InequalityReport lc;
    lc.inequality = "logconvex";
    lc.p = p;
    lc.q = q;
    lc.gap = tree.config().gap;
    lc.cube = draw.cube;
    lc.context = ctx;
    if (q > p) {
      lc.skipped = true;
      lc.reason = "requires q <= p";
    } else {
      WeightField w(grid, draw.cube, alpha);
      SampledField uw = weighted(u, w);
      const double theta = std::isinf(p) ? (std::isinf(q) ? 1.0 : 0.0) : q / p;
      lc.lhs = lp_norm(uw, p);
      lc.rhs = std::pow(lp_norm(uw, q), theta) * std::pow(lp_norm(uw, kInfinity), 1.0 - theta);
      finish_ratio(lc);
    }
    out.push_back(lc);
  }
  return out;
}

double bernstein_ratio(const SampledField& f, const TreeIndex& tree, DictionaryCache& dicts) {
  const auto& grid = f.grid();
  const double alpha = tree.config().alpha;
  const int m = tree.config().gap;
  double best = 0.0;
  for (const auto& draw : size_family(tree, dicts)) {
    SampledField u = dicts.apply(*draw.kernel, f);
    WeightField w(grid, draw.cube, alpha);
    double sup = weighted_lp_norm(u, &w, kInfinity);
    double l1 = weighted_lp_norm(u, &w, 1.0);
    if (l1 <= 0.0) continue;
    best = std::max(best, sup / (std::exp2(grid.dim * (m - draw.level)) * l1));
  }
  return best;
}

// ---------------------------------------------------------------------------

std::vector<ConstantRow> ConstantTable::summarize() const {
  std::map<std::pair<std::string, double>, ConstantRow> rows;
  std::map<std::tuple<std::string, double, std::uint64_t>, std::map<int, double>> per_seed;
  for (const auto& e : entries_) {
    auto& row = rows[{e.inequality, e.p}];
    row.inequality = e.inequality;
    row.p = e.p;
    row.max_ratio = std::max(row.max_ratio, e.ratio);
    auto& slot = row.max_by_gap[e.gap];
    slot = std::max(slot, e.ratio);
    auto& s = per_seed[{e.inequality, e.p, e.seed}][e.gap];
    s = std::max(s, e.ratio);
  }
  for (const auto& [key, by_gap] : per_seed) {
    auto& row = rows[{std::get<0>(key), std::get<1>(key)}];
    double hi = 0.0, lo = kInfinity;
    for (const auto& [gap, r] : by_gap) {
      hi = std::max(hi, r);
      lo = std::min(lo, r);
    }
    double u = hi == 0.0 ? 1.0 : (lo == 0.0 ? kInfinity : hi / lo);
    if (u > row.uniformity) {
      row.uniformity = u;
      row.worst_seed = std::get<2>(key);
    }
  }
  std::vector<ConstantRow> out;
  for (auto& [key, row] : rows) out.push_back(std::move(row));
  return out;
}

}  // namespace phasespace
