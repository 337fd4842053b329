#pragma once

// Run configuration, random instances, the end-to-end verify pipeline,
// sweeps over (seed, m), the modulation pairing demo and the dyadic
// conditional-expectation baseline.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "phasespace/conditional.hpp"
#include "phasespace/dyadic.hpp"
#include "phasespace/estimators.hpp"
#include "phasespace/grid.hpp"
#include "phasespace/kernels.hpp"
#include "phasespace/projection.hpp"

namespace phasespace {

struct TreeSpec {
  /// Explicit leaves when `random` is false.
  bool random = true;
  std::vector<DyadicCube> leaves;
  int depth = 2;
  /// 0: every cell of the sampled partition is kept with probability 1/2.
  int leaf_count = 0;
  std::uint64_t seed = 1;
};

struct FieldSpec {
  enum class Kind { Bandpass, Modes, File, Zero };
  struct Mode {
    Frequency xi{};
    Complex amplitude{1.0, 0.0};
  };

  Kind kind = Kind::Bandpass;
  std::uint64_t seed = 1;
  int count = 8;
  /// Annulus band_lo <= |xi| <= band_hi for random bandpass modes.
  double band_lo = 1.0;
  double band_hi = 16.0;
  /// Bandpass fields add the conjugate mode (real-valued samples).
  bool real = true;
  std::vector<Mode> modes;
  std::string path;
};

std::string to_string(FieldSpec::Kind kind);
FieldSpec::Kind field_kind_from_string(const std::string& s);

struct RunConfig {
  int dim = 1;
  double half_width = 8.0;
  /// 0 selects the per-dimension default.
  std::int64_t samples = 0;
  TreeSpec tree;
  FieldSpec field;
  int gap = 0;
  /// 0 selects d + 1.
  double alpha = 0.0;
  std::vector<double> ps{1.0, 2.0, kInfinity};
  double q = 4.0;
  DictionarySpec dictionary;
  ProjectionSettings projection = default_projection();
  /// J cubes are enumerated at levels >= j_min - window_depth.
  int window_depth = 2;
  /// Off-tree sums run down to level j_min - offtree_depth.
  int offtree_depth = 3;
  std::size_t spq_draws = 100;
  std::uint64_t spq_seed = 7;
  bool write_fields = true;
  std::string out_dir;

  static ProjectionSettings default_projection();
  static std::int64_t default_samples(int dim);

  void validate() const;
  TorusGrid grid() const;
  double effective_alpha() const;
};

std::string config_to_json(const RunConfig& cfg, int indent = 2);
RunConfig config_from_json(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Git-style blob hash: SHA-1 of "blob <len>\0" + content, hex.
std::string content_hash(const std::string& content);
/// Hash of the canonical config text (output directory excluded).
std::string config_hash(const RunConfig& cfg);

/// Deterministic 64-bit stream helpers (platform independent).
double uniform01(std::mt19937_64& rng);
std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n);

/// Random dyadic partition of U by recursive splitting (probability 1/2)
/// with one chain forced down to `depth`.
DyadicPartition random_partition(std::uint64_t seed, int depth, int dim);

/// Pairwise disjoint leaves in U drawn from a random partition; the finest
/// leaf sits at level -depth. Throws ValidationError when infeasible.
TreeConfig generate_tree(std::uint64_t seed, int depth, int leaf_count, int dim);

TreeConfig make_tree(const RunConfig& cfg);
SampledField make_field(const RunConfig& cfg, const TorusGrid& grid);

/// All dyadic J with j_min - window_depth <= level <= 0 meeting [-4, 5)^d.
std::vector<DyadicCube> enumerate_j_cubes(const TreeIndex& tree, int window_depth);

struct DictionaryInfo {
  std::string tag;
  std::size_t members = 0;
  std::size_t candidates = 0;
  std::size_t filtered = 0;
  double max_class_constant = 0.0;
  double max_leak = 0.0;
};

struct PerScaleRow {
  std::string inequality;
  double p = 2.0;
  DyadicCube j_cube;
  int level = 0;
  double term = 0.0;
  double cumulative = 0.0;
};

struct RatioSummary {
  std::string inequality;
  double p = 2.0;
  double max_ratio = 0.0;
  DyadicCube worst;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
  bool finite = true;
};

struct RunRecord {
  RunConfig config;
  std::string hash;
  TreeConfig tree;
  int finest_level = 0;
  std::size_t tree_cubes = 0;
  std::vector<DictionaryInfo> dictionaries;
  ProjectionDiagnostics diagnostics;
  double residual_identity_error = 0.0;
  int telescoping_floor = 0;
  std::vector<SizeEstimate> sizes;
  std::vector<InequalityReport> reports;
  std::vector<PerScaleRow> per_scale;
  std::vector<RatioSummary> summary;
  /// max over J in T, p and i < j of s_i / (s_j 2^{(i - j)/2}); <= 1 means
  /// the per-scale Carleson sums decay at rate 2^{(i-j)/2} or faster.
  double carleson_decay = 0.0;
  /// Least-squares slope of log2(term) against level for off-tree sums at
  /// cubes of the maximal off-tree family.
  double offtree_decay_slope = 0.0;
  std::map<std::string, double> timings;
  std::string failed_stage;
  std::string failure;
  /// Set when the failure was a ResolutionError (0: none, or no refinement helps).
  std::int64_t required_samples = -1;

  bool ok() const { return failure.empty(); }
  const RatioSummary* find(const std::string& inequality, double p) const;
  /// Deterministic report (no timings).
  std::string report_json() const;
  std::string perscale_csv() const;
  std::string timings_json() const;
};

struct RunOptions {
  /// Shared dictionaries (must match the config's grid and dictionary spec).
  DictionaryCache* dictionaries = nullptr;
  bool keep_reports = true;
  bool per_scale = true;
};

/// Builds tree, kernels and projection, estimates S and evaluates every
/// inequality over the J window. Stage failures are recorded, not thrown.
/// Writes the run directory when cfg.out_dir is set.
RunRecord run(const RunConfig& cfg, const RunOptions& options = {});

void write_run_directory(const RunRecord& record, const std::filesystem::path& dir,
                         const SampledField* f = nullptr, const SampledField* g = nullptr);

struct SweepResult {
  ConstantTable table;
  std::vector<RunRecord> records;
  double carleson_decay = 0.0;
  std::size_t failures = 0;
};

using SweepProgress = std::function<void(std::size_t done, std::size_t total, const RunRecord&)>;

/// Runs every config (dictionaries shared between configs on equal grids);
/// failures are recorded and the sweep continues.
SweepResult sweep(const std::vector<RunConfig>& configs, const SweepProgress& progress = {});

/// d = 1, alpha = 2, p in {1, 2, inf}, seeds 1..seeds, m in `gaps`.
std::vector<RunConfig> reference_sweep(int seeds = 20, std::vector<int> gaps = {0, 1, 2, 3});

struct BernsteinRow {
  int gap = 0;
  double ratio = 0.0;
  double log2_increment = 0.0;
};

/// Bernstein ratios of one instance across gaps.
std::vector<BernsteinRow> bernstein_sweep(const RunConfig& base, const std::vector<int>& gaps);

struct ModulationRow {
  double separation = 0.0;
  Frequency eta1{};
  Frequency eta2{};
  double pairing = 0.0;
  bool disjoint = false;
};

/// Relative level below which the spectrum of a mollified indicator counts
/// as absent in the modulation demo's support bookkeeping.
inline constexpr double kModulationTailTolerance = 1e-12;

struct ModulationResult {
  std::vector<ModulationRow> rows;
  /// Spectral radius of M_eta g around eta: widest filter band plus the
  /// effective band of the mollified indicators.
  double radius1 = 0.0;
  double radius2 = 0.0;
  double spearman = 0.0;
  double max_disjoint_pairing = 0.0;
  std::size_t disjoint_rows = 0;
};

/// Pairings |<M_eta1 g1, M_eta2 g2>| / (|g1|_2 |g2|_2) with g_k the
/// projection of M_{-eta_k} f; eta2 = eta1 + s e_1 for each separation s.
/// `second` overrides the tree of g2.
ModulationResult modulation_demo(const RunConfig& cfg, const Frequency& eta1, const std::vector<double>& separations,
                                 const std::optional<TreeConfig>& second = std::nullopt);

/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

struct BaselineReport {
  DyadicPartition partition;
  BaselineCheck check;
  bool smooth_available = false;
  SampledField g_smooth;
  std::string smooth_note;
  /// x (or flat index), f, dyadic g, smooth g.
  std::string csv;
};

/// Conditional expectation for the partition generated by the config's
/// tree, its identities, and the smooth projection for the same tree.
BaselineReport baseline_demo(const RunConfig& cfg);

/// Tree listing with tags T (tree), B (shells B_j^1), I (corona), P
/// (maximal off-tree family).
std::string tree_csv(const TreeIndex& tree);

std::string format_p(double p);

}  // namespace phasespace
