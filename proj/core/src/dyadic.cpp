#include "phasespace/dyadic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "phasespace/errors.hpp"

namespace phasespace {

namespace {

void check_dim(int dim) {
  if (dim < 1 || dim > kMaxDim) {
    throw ValidationError("dimension must be in [1, 3], got " + std::to_string(dim));
  }
}

// Every offset in [-radius, radius]^dim.
std::vector<CubeIndex> box_offsets(int dim, std::int64_t radius) {
  std::vector<CubeIndex> out;
  CubeIndex cur{};
  const std::int64_t width = 2 * radius + 1;
  std::int64_t total = 1;
  for (int n = 0; n < dim; ++n) total *= width;
  out.reserve(static_cast<std::size_t>(total));
  for (std::int64_t flat = 0; flat < total; ++flat) {
    std::int64_t rem = flat;
    for (int n = 0; n < dim; ++n) {
      cur[n] = rem % width - radius;
      rem /= width;
    }
    out.push_back(cur);
  }
  return out;
}

}  // namespace

DyadicCube DyadicCube::unit(int dim) {
  check_dim(dim);
  DyadicCube c;
  c.dim = dim;
  c.level = 0;
  return c;
}

double DyadicCube::side() const { return std::ldexp(1.0, level); }

double DyadicCube::measure() const { return std::ldexp(1.0, level * dim); }

double DyadicCube::lower(int axis) const {
  return std::ldexp(static_cast<double>(index[axis]), level);
}

double DyadicCube::upper(int axis) const {
  return std::ldexp(static_cast<double>(index[axis] + 1), level);
}

double DyadicCube::center(int axis) const {
  return std::ldexp(static_cast<double>(index[axis]) + 0.5, level);
}

DyadicCube DyadicCube::parent() const { return ancestor(level + 1); }

DyadicCube DyadicCube::ancestor(int target_level) const {
  if (target_level < level) {
    throw ValidationError("ancestor level below cube level");
  }
  const int shift = target_level - level;
  DyadicCube out = *this;
  out.level = target_level;
  for (int n = 0; n < dim; ++n) {
    // Arithmetic shift is floor division by 2^shift for negative indices too.
    out.index[n] = shift >= 63 ? (index[n] < 0 ? -1 : 0) : (index[n] >> shift);
  }
  return out;
}

std::vector<DyadicCube> DyadicCube::children() const {
  std::vector<DyadicCube> out;
  const int count = 1 << dim;
  out.reserve(static_cast<std::size_t>(count));
  for (int bits = 0; bits < count; ++bits) {
    DyadicCube c = *this;
    c.level = level - 1;
    for (int n = 0; n < dim; ++n) c.index[n] = 2 * index[n] + ((bits >> n) & 1);
    out.push_back(c);
  }
  return out;
}

bool DyadicCube::contains(const DyadicCube& other) const {
  return other.dim == dim && other.level <= level && other.ancestor(level) == *this;
}

bool DyadicCube::contains_point(const Point& y) const {
  for (int n = 0; n < dim; ++n) {
    if (y[n] < lower(n) || y[n] >= upper(n)) return false;
  }
  return true;
}

bool DyadicCube::intersects(const DyadicCube& other) const {
  return contains(other) || other.contains(*this);
}

std::int64_t DyadicCube::index_distance(const DyadicCube& other) const {
  if (other.level != level) throw ValidationError("index_distance across levels");
  std::int64_t d = 0;
  for (int n = 0; n < dim; ++n) d = std::max(d, std::abs(index[n] - other.index[n]));
  return d;
}

std::string DyadicCube::to_string() const {
  std::ostringstream os;
  os << "Q(" << level << ";";
  for (int n = 0; n < dim; ++n) os << (n ? "," : "") << index[n];
  os << ")";
  return os.str();
}

void sort_unique(CubeSet& cubes) {
  std::sort(cubes.begin(), cubes.end());
  cubes.erase(std::unique(cubes.begin(), cubes.end()), cubes.end());
}

bool set_contains(const CubeSet& sorted, const DyadicCube& cube) {
  return std::binary_search(sorted.begin(), sorted.end(), cube);
}

bool pairwise_disjoint(std::span<const DyadicCube> cubes) {
  CubeSet sorted(cubes.begin(), cubes.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) return false;
  int top = std::numeric_limits<int>::min();
  for (const auto& c : sorted) top = std::max(top, c.level);
  for (const auto& c : sorted) {
    for (int l = c.level + 1; l <= top; ++l) {
      if (set_contains(sorted, c.ancestor(l))) return false;
    }
  }
  return true;
}

double rho_point(const DyadicCube& cube, const Point& y) {
  double dist = 0.0;
  for (int n = 0; n < cube.dim; ++n) dist = std::max(dist, std::abs(y[n] - cube.center(n)));
  return std::max(1.0, 0.5 + dist / cube.side());
}

double rho_cube(const DyadicCube& cube, const DyadicCube& target) {
  double dist = 0.0;
  for (int n = 0; n < cube.dim; ++n) {
    const double c = cube.center(n);
    const double gap = std::max({0.0, target.lower(n) - c, c - target.upper(n)});
    dist = std::max(dist, gap);
  }
  return std::max(1.0, 0.5 + dist / cube.side());
}

double rho_set(const DyadicCube& cube, std::span<const DyadicCube> family) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& f : family) best = std::min(best, rho_cube(cube, f));
  return best;
}

void TreeConfig::validate() const {
  check_dim(dim);
  if (root.dim != dim) throw ValidationError("root dimension mismatch");
  if (leaves.empty()) throw ValidationError("leaf collection M must be non-empty");
  if (gap < 0) throw ValidationError("frequency gap m must be non-negative");
  if (!(alpha > dim)) throw ValidationError("alpha must exceed the dimension");
  for (int n = dim; n < kMaxDim; ++n) {
    if (root.index[n] != 0) throw ValidationError("unused root index slots must be zero");
  }
  for (const auto& leaf : leaves) {
    if (leaf.dim != dim) throw ValidationError("leaf dimension mismatch: " + leaf.to_string());
    for (int n = dim; n < kMaxDim; ++n) {
      if (leaf.index[n] != 0) throw ValidationError("unused leaf index slots must be zero");
    }
    if (!root.contains(leaf)) {
      throw ValidationError("leaf " + leaf.to_string() + " is not contained in the root");
    }
  }
  if (!pairwise_disjoint(leaves)) throw ValidationError("leaves must be pairwise disjoint");
}

bool TreeConfig::is_normalized() const { return root == DyadicCube::unit(dim); }

Normalization::Normalization(const DyadicCube& root) : root_(root) {}

DyadicCube Normalization::forward(const DyadicCube& cube) const {
  DyadicCube out = cube;
  out.level = cube.level - root_.level;
  const int shift = root_.level - cube.level;
  for (int n = 0; n < cube.dim; ++n) {
    if (shift >= 0) {
      out.index[n] = cube.index[n] - (root_.index[n] << shift);
    } else {
      const std::int64_t div = std::int64_t{1} << (-shift);
      if (root_.index[n] % div != 0) {
        throw ValidationError("cube " + cube.to_string() + " is not aligned with the root grid");
      }
      out.index[n] = cube.index[n] - root_.index[n] / div;
    }
  }
  return out;
}

DyadicCube Normalization::inverse(const DyadicCube& cube) const {
  DyadicCube out = cube;
  out.level = cube.level + root_.level;
  const int shift = -cube.level;
  for (int n = 0; n < cube.dim; ++n) {
    if (shift >= 0) {
      out.index[n] = cube.index[n] + (root_.index[n] << shift);
    } else {
      out.index[n] = cube.index[n] + root_.index[n] / (std::int64_t{1} << (-shift));
    }
  }
  return out;
}

Point Normalization::forward(const Point& y) const {
  Point out{};
  for (int n = 0; n < root_.dim; ++n) out[n] = std::ldexp(y[n], -root_.level) - static_cast<double>(root_.index[n]);
  return out;
}

Point Normalization::inverse(const Point& y) const {
  Point out{};
  for (int n = 0; n < root_.dim; ++n) out[n] = std::ldexp(y[n] + static_cast<double>(root_.index[n]), root_.level);
  return out;
}

NormalizedTree normalize(const TreeConfig& cfg) {
  cfg.validate();
  NormalizedTree out{cfg, Normalization(cfg.root)};
  out.config.root = DyadicCube::unit(cfg.dim);
  for (auto& leaf : out.config.leaves) leaf = out.map.forward(leaf);
  return out;
}

const CubeSet& TreeIndex::ring(int level, int k) const {
  static const CubeSet kEmpty;
  if (k < 0 || k > kRingDepth) throw ValidationError("ring index out of range");
  if (level < finest_level_ || level > 0) return kEmpty;
  return rings_[static_cast<std::size_t>(level - finest_level_)][static_cast<std::size_t>(k)];
}

CubeSet TreeIndex::shell(int level, int k) const {
  if (k < 0 || k >= kRingDepth) throw ValidationError("shell index out of range");
  const CubeSet& outer = ring(level, k + 1);
  const CubeSet& inner = ring(level, k);
  CubeSet out;
  std::set_difference(outer.begin(), outer.end(), inner.begin(), inner.end(), std::back_inserter(out));
  return out;
}

bool TreeIndex::inside_union(int level, int k, const DyadicCube& cube) const {
  if (cube.level > level) return false;
  return set_contains(ring(level, k), cube.ancestor(level));
}

TreeIndex expand_to_tree(const TreeConfig& cfg) {
  cfg.validate();
  if (!cfg.is_normalized()) {
    throw ValidationError("expand_to_tree expects a normalized config (root [0,1)^d)");
  }
  TreeIndex t;
  t.config_ = cfg;
  t.finest_level_ = 0;
  for (const auto& leaf : cfg.leaves) {
    t.finest_level_ = std::min(t.finest_level_, leaf.level);
    for (int l = leaf.level; l <= 0; ++l) t.tree_.push_back(leaf.ancestor(l));
  }
  sort_unique(t.tree_);

  const int levels = 1 - t.finest_level_;
  t.rings_.resize(static_cast<std::size_t>(levels));
  for (const auto& c : t.tree_) {
    t.rings_[static_cast<std::size_t>(c.level - t.finest_level_)][0].push_back(c);
  }
  for (auto& slot : t.rings_) {
    sort_unique(slot[0]);
    // rho_I(E_j^0) <= k picks exactly the cubes within index distance k of
    // T_j^0, so rings are dilations of the level slice.
    for (int k = 1; k <= kRingDepth; ++k) {
      CubeSet ring;
      const auto offsets = box_offsets(cfg.dim, k);
      ring.reserve(slot[0].size() * offsets.size());
      for (const auto& c : slot[0]) {
        for (const auto& off : offsets) {
          DyadicCube d = c;
          for (int n = 0; n < cfg.dim; ++n) d.index[n] += off[n];
          ring.push_back(d);
        }
      }
      sort_unique(ring);
      slot[static_cast<std::size_t>(k)] = std::move(ring);
    }
  }
  return t;
}

std::vector<DyadicCube> corona_partition(const TreeIndex& tree) {
  std::vector<DyadicCube> out;
  for (int j = -1; j >= tree.finest_level() - 1; --j) {
    const CubeSet& below = tree.ring(j, 1);
    for (const auto& p : tree.ring(j + 1, 1)) {
      for (const auto& c : p.children()) {
        if (!set_contains(below, c)) out.push_back(c);
      }
    }
  }
  sort_unique(out);

  double total = 0.0;
  for (const auto& c : out) {
    if (!tree.inside_union(0, 1, c)) {
      throw InternalError("corona cube " + c.to_string() + " escapes E_0^1");
    }
    total += c.measure();
  }
  if (!pairwise_disjoint(out)) throw InternalError("corona family is not pairwise disjoint");
  const double expected = std::pow(3.0, tree.dim());
  if (total != expected) {
    throw InternalError("corona family does not cover E_0^1 (measure " + std::to_string(total) + ")");
  }
  return out;
}

std::vector<DyadicCube> maximal_offtree(const TreeIndex& tree) {
  const int dim = tree.dim();
  const auto& t = tree.cubes();
  auto triple_holds_tree_cube = [&](const DyadicCube& k) {
    const double s = k.side();
    for (const auto& j : t) {
      if (j.level > k.level + 1) continue;
      bool inside = true;
      for (int n = 0; n < dim && inside; ++n) {
        inside = j.lower(n) >= k.lower(n) - s && j.upper(n) <= k.upper(n) + s;
      }
      if (inside) return true;
    }
    return false;
  };

  std::vector<DyadicCube> stack;
  for (const auto& off : box_offsets(dim, 3)) {
    DyadicCube c = DyadicCube::unit(dim);
    c.index = off;
    stack.push_back(c);
  }
  std::vector<DyadicCube> out;
  while (!stack.empty()) {
    DyadicCube k = stack.back();
    stack.pop_back();
    if (!triple_holds_tree_cube(k)) {
      out.push_back(k);
    } else {
      for (const auto& c : k.children()) stack.push_back(c);
    }
  }
  sort_unique(out);
  return out;
}

void DyadicPartition::validate() const {
  if (cells.empty()) throw ValidationError("partition has no cells");
  double total = 0.0;
  for (const auto& c : cells) {
    if (c.dim != root.dim || !root.contains(c)) {
      throw ValidationError("partition cell " + c.to_string() + " is outside the root");
    }
    total += c.measure();
  }
  if (!pairwise_disjoint(cells)) throw ValidationError("partition cells overlap");
  if (total != root.measure()) throw ValidationError("partition cells do not cover the root");
}

bool DyadicPartition::generates(const DyadicCube& cube) const {
  if (!root.contains(cube)) return false;
  CubeSet sorted(cells.begin(), cells.end());
  std::sort(sorted.begin(), sorted.end());
  for (int l = cube.level + 1; l <= root.level; ++l) {
    if (set_contains(sorted, cube.ancestor(l))) return false;
  }
  return true;
}

int DyadicPartition::finest_level() const {
  int lvl = root.level;
  for (const auto& c : cells) lvl = std::min(lvl, c.level);
  return lvl;
}

DyadicPartition partition_from_tree(const TreeIndex& tree) {
  DyadicPartition p;
  p.root = DyadicCube::unit(tree.dim());
  CubeSet leaves = tree.config().leaves;
  sort_unique(leaves);
  for (const auto& c : tree.cubes()) {
    if (set_contains(leaves, c)) {
      p.cells.push_back(c);
      continue;
    }
    for (const auto& child : c.children()) {
      if (!tree.contains(child)) p.cells.push_back(child);
    }
  }
  sort_unique(p.cells);
  p.validate();
  return p;
}

}  // namespace phasespace
