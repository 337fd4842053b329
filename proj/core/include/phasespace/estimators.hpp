#pragma once

// The size surrogate S, the three theorem-side quantities (norm bound,
// Carleson sums over tree cubes, off-tree sums), the per-kernel comparison
// checks between sizes with different (alpha, p), and sweep tables.

#include <limits>
#include <map>
#include <memory>
#include <string>
#include <tuple>
#include <vector>

#include "phasespace/dyadic.hpp"
#include "phasespace/grid.hpp"
#include "phasespace/kernels.hpp"

namespace phasespace {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// 2^{i d / p'} with 1/p + 1/p' = 1.
double dual_factor(int level, int dim, double p);
/// 2^{-i d / p}.
double size_factor(int level, int dim, double p);

/// Dictionaries by (class, level, exponent) for one grid and spec, with
/// optional multiplier-table caching.
class DictionaryCache {
 public:
  DictionaryCache(const TorusGrid& grid, DictionarySpec spec, bool cache_tables = false);

  const TorusGrid& grid() const { return grid_; }
  const DictionarySpec& spec() const { return spec_; }
  const Dictionary& get(const ClassTag& tag);
  /// kernel * f, through the table cache when enabled.
  SampledField apply(const KernelHandle& k, const SampledField& f);
  std::vector<const Dictionary*> built() const;

 private:
  TorusGrid grid_;
  DictionarySpec spec_;
  bool cache_tables_;
  std::map<std::tuple<int, int, double>, std::unique_ptr<Dictionary>> dicts_;
  std::map<const KernelHandle*, ComplexBuffer> tables_;
};

struct SizeEstimate {
  double p = 2.0;
  double alpha = 2.0;
  int gap = 0;
  double value = 0.0;
  int level = 0;
  DyadicCube cube;
  std::string kernel;
  std::string dictionary;
};

/// S-hat for each p: max over i in [j_min, 0], I in T_i^0, phi in
/// Phi_{i-m-2}^{4 alpha} of 2^{-id/p} |rho_I^{-alpha} (phi * f)|_p.
std::vector<SizeEstimate> estimate_size(const SampledField& f, const TreeIndex& tree,
                                        const std::vector<double>& ps, DictionaryCache& dicts);

/// Direct re-evaluation of one witness term.
double size_term(const SampledField& f, const DyadicCube& cube, const KernelHandle& k, double alpha, double p,
                 DictionaryCache& dicts);

struct InequalityReport {
  std::string inequality;  // norm, carleson, offtree, holder, logconvex, bernstein
  double p = 2.0;
  double q = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;  // without the constant
  double ratio = 0.0;
  bool skipped = false;
  std::string reason;
  DyadicCube cube;
  int gap = 0;
  std::string context;
};

/// ratio = lhs / rhs with the conventions 0/0 = 0 and x/0 flagged.
void finish_ratio(InequalityReport& r);

InequalityReport check_norm_bound(const SampledField& g, const SizeEstimate& size);

/// Per tree cube I (level i): max over Phi_{i-m}^{4 alpha} of
/// 2^{id/p'} |rho_I^{-3 alpha} (phi * residual)|_p, for each p.
class CarlesonTable {
 public:
  CarlesonTable(const SampledField& residual, const TreeIndex& tree, const std::vector<double>& ps,
                DictionaryCache& dicts);

  const std::vector<double>& ps() const { return ps_; }
  double value(const DyadicCube& cube, std::size_t p_index) const;
  /// sum over I in T with I inside J.
  double lhs(const DyadicCube& j_cube, std::size_t p_index) const;
  /// (level i, sum over I in T_i^0 inside J) from J's level downwards.
  std::vector<std::pair<int, double>> per_scale(const DyadicCube& j_cube, std::size_t p_index) const;

 private:
  std::vector<double> ps_;
  std::map<DyadicCube, std::vector<double>> values_;
};

InequalityReport carleson_report(const CarlesonTable& table, std::size_t p_index, const DyadicCube& j_cube,
                                 const SizeEstimate& size);

/// Eligible iff no J' at J's level with rho_J(J') <= 1 contains a tree cube.
bool offtree_eligible(const TreeIndex& tree, const DyadicCube& j_cube, DyadicCube* violator = nullptr);

/// max over grid points x in U of rho_J(x)^{-alpha}.
double unit_weight_sup(const TorusGrid& grid, const DyadicCube& j_cube, double alpha);

/// Per level i in [floor, 0], per cube I of D_i inside the window
/// [-4, 5)^d and not in T: max over Psi_{i-m}^{4 alpha} of
/// 2^{-id/p} |rho_I^{-3 alpha} (psi * g)|_p. Finite p uses an FFT
/// correlation of |u|^p with the weight; p = infinity an exact
/// branch-and-bound maximum.
class OfftreeTable {
 public:
  OfftreeTable(const SampledField& g, const TreeIndex& tree, const std::vector<double>& ps, int floor_level,
               DictionaryCache& dicts);

  int floor_level() const { return floor_; }
  const std::vector<double>& ps() const { return ps_; }
  /// Max over level-i non-tree cubes inside J (0 when none).
  double level_max(const DyadicCube& j_cube, int level, std::size_t p_index) const;
  double lhs(const DyadicCube& j_cube, std::size_t p_index) const;
  std::vector<std::pair<int, double>> per_scale(const DyadicCube& j_cube, std::size_t p_index) const;
  /// Value for a single window cube at its level.
  double value(const DyadicCube& cube, std::size_t p_index) const;

 private:
  struct Level {
    int level = 0;
    // pyramid[k] holds maxima for cubes at level (level + k) over the window
    std::vector<std::vector<std::vector<double>>> pyramid;  // [p][k][flat]
  };
  int dim_ = 1;
  int floor_ = 0;
  std::vector<double> ps_;
  std::vector<Level> levels_;  // index 0 is floor_
  std::int64_t window_flat(const DyadicCube& cube, int level) const;
};

InequalityReport offtree_report(const OfftreeTable& table, std::size_t p_index, const DyadicCube& j_cube,
                                const SizeEstimate& size, const TorusGrid& grid, double alpha);

/// Per-kernel Hoelder, log-convexity and Bernstein comparisons on the S-hat
/// dictionary family. `draws` caps the number of (kernel, cube) pairs (0:
/// all), chosen deterministically by `seed`.
std::vector<InequalityReport> prop_spq_checks(const SampledField& f, const TreeIndex& tree, double p, double q,
                                              DictionaryCache& dicts, std::size_t draws = 0,
                                              std::uint64_t seed = 0);

/// Bernstein ratio max over (phi, I) of |rho^{-alpha} u|_inf /
/// (2^{d(m - i)} |rho^{-alpha} u|_1) for the tree's gap.
double bernstein_ratio(const SampledField& f, const TreeIndex& tree, DictionaryCache& dicts);

struct ConstantEntry {
  std::string inequality;
  double p = 2.0;
  std::uint64_t seed = 0;
  int gap = 0;
  double ratio = 0.0;
};

struct ConstantRow {
  std::string inequality;
  double p = 2.0;
  double max_ratio = 0.0;
  std::map<int, double> max_by_gap;
  /// max over seeds of max_m ratio / min_m ratio.
  double uniformity = 1.0;
  std::uint64_t worst_seed = 0;
};

class ConstantTable {
 public:
  void add(ConstantEntry e) { entries_.push_back(std::move(e)); }
  const std::vector<ConstantEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  std::vector<ConstantRow> summarize() const;

 private:
  std::vector<ConstantEntry> entries_;
};

}  // namespace phasespace
