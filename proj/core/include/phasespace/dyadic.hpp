#pragma once

// Dyadic cube arithmetic, the mollified distance rho, and the stopping-time
// tree T = M_U with its level slices, corona family and off-tree cubes.

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace phasespace {

inline constexpr int kMaxDim = 3;

using CubeIndex = std::array<std::int64_t, kMaxDim>;
using Point = std::array<double, kMaxDim>;

/// Q_{j,k} = prod_n [2^j k_n, 2^j (k_n + 1)).  Unused index slots stay zero so
/// that the defaulted ordering is a total order on cubes of one dimension.
struct DyadicCube {
  int dim = 1;
  int level = 0;
  CubeIndex index{};

  static DyadicCube unit(int dim);

  double side() const;
  double measure() const;
  double lower(int axis) const;
  double upper(int axis) const;
  double center(int axis) const;

  DyadicCube parent() const;
  /// The unique cube at `target_level` (>= level) containing this one.
  DyadicCube ancestor(int target_level) const;
  std::vector<DyadicCube> children() const;

  /// True when `other` is a subset of this cube.
  bool contains(const DyadicCube& other) const;
  bool contains_point(const Point& y) const;
  bool intersects(const DyadicCube& other) const;

  /// l-infinity distance between indices; both cubes must share a level.
  std::int64_t index_distance(const DyadicCube& other) const;

  std::string to_string() const;

  friend auto operator<=>(const DyadicCube&, const DyadicCube&) = default;
};

/// Sorted, duplicate-free list of cubes.
using CubeSet = std::vector<DyadicCube>;

void sort_unique(CubeSet& cubes);
bool set_contains(const CubeSet& sorted, const DyadicCube& cube);
bool pairwise_disjoint(std::span<const DyadicCube> cubes);

/// rho_I(y) = inf{r > 1 : y in (2r-1)I} = max(1, 1/2 + |y - c|_inf / side).
double rho_point(const DyadicCube& cube, const Point& y);

/// rho_I(J) = inf over y in J; the infimum is attained on the closure of J.
double rho_cube(const DyadicCube& cube, const DyadicCube& target);

/// inf over a cube family; +infinity for an empty family.
double rho_set(const DyadicCube& cube, std::span<const DyadicCube> family);

struct TreeConfig {
  int dim = 1;
  DyadicCube root = DyadicCube::unit(1);
  std::vector<DyadicCube> leaves;
  int gap = 0;        // frequency gap m
  double alpha = 2.0; // weight exponent, must exceed dim

  /// Throws ValidationError on empty/overlapping leaves, leaves outside the
  /// root, dimension mismatch, negative gap or alpha <= dim.
  void validate() const;
  bool is_normalized() const;
};

/// Integer dyadic dilation/translation sending the root to [0,1)^d.
class Normalization {
 public:
  Normalization() = default;
  explicit Normalization(const DyadicCube& root);

  DyadicCube forward(const DyadicCube& cube) const;
  DyadicCube inverse(const DyadicCube& cube) const;
  Point forward(const Point& y) const;
  Point inverse(const Point& y) const;
  int root_level() const { return root_.level; }

 private:
  DyadicCube root_ = DyadicCube::unit(1);
};

struct NormalizedTree {
  TreeConfig config;
  Normalization map;
};

NormalizedTree normalize(const TreeConfig& cfg);

inline constexpr int kRingDepth = 3;

/// T = M_U together with, for every level j in [j_min, 0], the rings
/// T_j^k = {I in D_j : rho_I(E_j^0) <= k} for k = 0..kRingDepth.
class TreeIndex {
 public:
  int dim() const { return config_.dim; }
  int finest_level() const { return finest_level_; }
  const TreeConfig& config() const { return config_; }

  const CubeSet& cubes() const { return tree_; }
  bool contains(const DyadicCube& cube) const { return set_contains(tree_, cube); }

  /// T_j^k; empty for levels outside [j_min, 0].
  const CubeSet& ring(int level, int k) const;
  /// B_j^k = T_j^{k+1} \ T_j^k, for k < kRingDepth.
  CubeSet shell(int level, int k) const;
  /// Whether `cube` (level <= j) lies inside E_j^k.
  bool inside_union(int level, int k, const DyadicCube& cube) const;

  friend TreeIndex expand_to_tree(const TreeConfig& cfg);

 private:
  TreeConfig config_;
  int finest_level_ = 0;
  CubeSet tree_;
  std::vector<std::array<CubeSet, kRingDepth + 1>> rings_;  // [0] is level j_min
};

/// Builds T and the per-level rings. The config must be normalized.
TreeIndex expand_to_tree(const TreeConfig& cfg);

/// The corona family: for j < 0, cubes of D_j inside E_{j+1}^1 but not inside
/// E_j^1. Verified to partition E_0^1 = 3U; a failed verification throws
/// InternalError.
std::vector<DyadicCube> corona_partition(const TreeIndex& tree);

/// Maximal dyadic K with K in 7U whose triple contains no cube of T.
std::vector<DyadicCube> maximal_offtree(const TreeIndex& tree);

/// A finite partition of `root` into dyadic cells.
struct DyadicPartition {
  DyadicCube root = DyadicCube::unit(1);
  std::vector<DyadicCube> cells;

  void validate() const;
  /// I belongs to the sigma algebra generated by the cells iff it is a union
  /// of cells (I inside root assumed).
  bool generates(const DyadicCube& cube) const;
  int finest_level() const;
};

/// Leaves of T completed to a partition of U: M plus children of non-leaf
/// tree cubes that are not themselves in T.
DyadicPartition partition_from_tree(const TreeIndex& tree);

}  // namespace phasespace
