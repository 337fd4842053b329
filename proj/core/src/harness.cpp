#include "phasespace/harness.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "phasespace/errors.hpp"

namespace phasespace {

using json = nlohmann::ordered_json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

json p_to_json(double p) { return std::isinf(p) ? json("inf") : json(p); }

double p_from_json(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "infinity") return kInfinity;
    throw ValidationError("bad exponent '" + s + "'");
  }
  return j.get<double>();
}

json cube_to_json(const DyadicCube& c) {
  json idx = json::array();
  for (int a = 0; a < c.dim; ++a) idx.push_back(c.index[static_cast<std::size_t>(a)]);
  return json{{"level", c.level}, {"index", idx}};
}

DyadicCube cube_from_json(const json& j, int dim) {
  DyadicCube c;
  c.dim = dim;
  c.level = j.at("level").get<int>();
  const auto& idx = j.at("index");
  if (static_cast<int>(idx.size()) != dim) throw ValidationError("cube index has wrong dimension");
  for (int a = 0; a < dim; ++a) c.index[static_cast<std::size_t>(a)] = idx[static_cast<std::size_t>(a)].get<std::int64_t>();
  return c;
}

json frequency_to_json(const Frequency& xi, int dim) {
  json out = json::array();
  for (int a = 0; a < dim; ++a) out.push_back(xi[static_cast<std::size_t>(a)]);
  return out;
}

Frequency frequency_from_json(const json& j, int dim) {
  Frequency xi{};
  if (static_cast<int>(j.size()) != dim) throw ValidationError("frequency has wrong dimension");
  for (int a = 0; a < dim; ++a) xi[static_cast<std::size_t>(a)] = j[static_cast<std::size_t>(a)].get<double>();
  return xi;
}

json config_to_json_value(const RunConfig& c, bool with_output) {
  json tree{{"random", c.tree.random}};
  if (c.tree.random) {
    tree["depth"] = c.tree.depth;
    tree["leaf_count"] = c.tree.leaf_count;
    tree["seed"] = c.tree.seed;
  } else {
    json leaves = json::array();
    for (const auto& l : c.tree.leaves) leaves.push_back(cube_to_json(l));
    tree["leaves"] = leaves;
  }
  json field{{"kind", to_string(c.field.kind)}};
  switch (c.field.kind) {
    case FieldSpec::Kind::Bandpass:
      field["seed"] = c.field.seed;
      field["count"] = c.field.count;
      field["band"] = {c.field.band_lo, c.field.band_hi};
      field["real"] = c.field.real;
      break;
    case FieldSpec::Kind::Modes: {
      json modes = json::array();
      for (const auto& m : c.field.modes)
        modes.push_back({{"xi", frequency_to_json(m.xi, c.dim)}, {"amplitude", {m.amplitude.real(), m.amplitude.imag()}}});
      field["modes"] = modes;
      break;
    }
    case FieldSpec::Kind::File:
      field["path"] = c.field.path;
      break;
    case FieldSpec::Kind::Zero:
      break;
  }
  json ps = json::array();
  for (double p : c.ps) ps.push_back(p_to_json(p));
  const auto& d = c.dictionary;
  json dict{{"id", d.id},
            {"tau_scales", d.tau_scales},
            {"psi_scales", d.psi_scales},
            {"modulations", d.modulations},
            {"translations", d.translations}};
  const auto& pr = c.projection;
  json proj{{"kappa_exponent", pr.kappa_exponent},
            {"min_kappa_samples", pr.min_kappa_samples},
            {"leibniz_check", pr.leibniz_check},
            {"leibniz_strict", pr.leibniz_strict},
            {"leibniz_tolerance", pr.leibniz_tolerance}};
  json out{{"dim", c.dim},
           {"half_width", c.half_width},
           {"samples", c.samples == 0 ? RunConfig::default_samples(c.dim) : c.samples},
           {"tree", tree},
           {"field", field},
           {"gap", c.gap},
           {"alpha", c.effective_alpha()},
           {"p", ps},
           {"q", p_to_json(c.q)},
           {"dictionary", dict},
           {"projection", proj},
           {"window_depth", c.window_depth},
           {"offtree_depth", c.offtree_depth},
           {"spq_draws", c.spq_draws},
           {"spq_seed", c.spq_seed},
           {"write_fields", c.write_fields}};
  if (with_output) out["out_dir"] = c.out_dir;
  return out;
}

std::string hex(const unsigned char* data, unsigned len) {
  std::ostringstream os;
  for (unsigned i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(data[i]);
  return os.str();
}

}  // namespace

std::string to_string(FieldSpec::Kind kind) {
  switch (kind) {
    case FieldSpec::Kind::Bandpass: return "bandpass";
    case FieldSpec::Kind::Modes: return "modes";
    case FieldSpec::Kind::File: return "file";
    case FieldSpec::Kind::Zero: return "zero";
  }
  return "?";
}

FieldSpec::Kind field_kind_from_string(const std::string& s) {
  if (s == "bandpass") return FieldSpec::Kind::Bandpass;
  if (s == "modes") return FieldSpec::Kind::Modes;
  if (s == "file") return FieldSpec::Kind::File;
  if (s == "zero") return FieldSpec::Kind::Zero;
  throw ValidationError("unknown field kind '" + s + "'");
}

std::string format_p(double p) {
  if (std::isinf(p)) return "inf";
  std::ostringstream os;
  os << p;
  return os.str();
}

// ---------------------------------------------------------------------------

ProjectionSettings RunConfig::default_projection() {
  ProjectionSettings s;
  s.keep_pieces = false;
  s.leibniz_strict = false;
  return s;
}

std::int64_t RunConfig::default_samples(int dim) { return dim == 1 ? (std::int64_t{1} << 14) : (std::int64_t{1} << 10); }

double RunConfig::effective_alpha() const { return alpha > 0.0 ? alpha : dim + 1.0; }

TorusGrid RunConfig::grid() const {
  return TorusGrid{dim, half_width, samples == 0 ? default_samples(dim) : samples};
}

void RunConfig::validate() const {
  if (dim != 1 && dim != 2) throw ValidationError("dimension must be 1 or 2");
  grid().validate();
  if (gap < 0) throw ValidationError("gap m must be >= 0");
  if (!(effective_alpha() > dim)) throw ValidationError("alpha must exceed the dimension");
  if (ps.empty()) throw ValidationError("at least one exponent p is required");
  for (double p : ps)
    if (!(p >= 1.0)) throw ValidationError("exponents must satisfy p >= 1");
  if (!(q >= 1.0)) throw ValidationError("q must satisfy q >= 1");
  if (window_depth < 0 || offtree_depth < 0) throw ValidationError("window depths must be >= 0");
  if (tree.random) {
    if (tree.depth < 0) throw ValidationError("tree depth must be >= 0");
  } else if (tree.leaves.empty()) {
    throw ValidationError("explicit tree needs at least one leaf");
  }
  if (field.kind == FieldSpec::Kind::Bandpass) {
    if (field.count < 1) throw ValidationError("bandpass field needs at least one mode");
    if (!(field.band_lo >= 0.0 && field.band_hi >= field.band_lo))
      throw ValidationError("bandpass annulus must satisfy 0 <= lo <= hi");
  }
  if (field.kind == FieldSpec::Kind::File && field.path.empty()) throw ValidationError("field file path missing");
  dictionary.validate();
  projection.validate();
}

std::string config_to_json(const RunConfig& cfg, int indent) { return config_to_json_value(cfg, true).dump(indent); }

RunConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  try {
    c.dim = j.value("dim", c.dim);
    c.half_width = j.value("half_width", c.half_width);
    c.samples = j.value("samples", std::int64_t{0});
    c.gap = j.value("gap", c.gap);
    c.alpha = j.value("alpha", 0.0);
    if (j.contains("p")) {
      c.ps.clear();
      if (j["p"].is_array())
        for (const auto& p : j["p"]) c.ps.push_back(p_from_json(p));
      else
        c.ps.push_back(p_from_json(j["p"]));
    }
    if (j.contains("q")) c.q = p_from_json(j["q"]);
    c.window_depth = j.value("window_depth", c.window_depth);
    c.offtree_depth = j.value("offtree_depth", c.offtree_depth);
    c.spq_draws = j.value("spq_draws", c.spq_draws);
    c.spq_seed = j.value("spq_seed", c.spq_seed);
    c.write_fields = j.value("write_fields", c.write_fields);
    c.out_dir = j.value("out_dir", std::string());
    if (j.contains("tree")) {
      const auto& t = j["tree"];
      if (t.contains("leaves")) {
        c.tree.random = false;
        for (const auto& l : t["leaves"]) c.tree.leaves.push_back(cube_from_json(l, c.dim));
      } else {
        c.tree.random = true;
      }
      c.tree.random = t.value("random", c.tree.random);
      c.tree.depth = t.value("depth", c.tree.depth);
      c.tree.leaf_count = t.value("leaf_count", c.tree.leaf_count);
      c.tree.seed = t.value("seed", c.tree.seed);
    }
    if (j.contains("field")) {
      const auto& f = j["field"];
      c.field.kind = field_kind_from_string(f.value("kind", std::string("bandpass")));
      c.field.seed = f.value("seed", c.field.seed);
      c.field.count = f.value("count", c.field.count);
      if (f.contains("band")) {
        c.field.band_lo = f["band"].at(0).get<double>();
        c.field.band_hi = f["band"].at(1).get<double>();
      }
      c.field.real = f.value("real", c.field.real);
      c.field.path = f.value("path", std::string());
      if (f.contains("modes")) {
        for (const auto& m : f["modes"]) {
          FieldSpec::Mode mode;
          mode.xi = frequency_from_json(m.at("xi"), c.dim);
          if (m.contains("amplitude")) {
            const auto& a = m["amplitude"];
            mode.amplitude = a.is_array() ? Complex(a.at(0).get<double>(), a.at(1).get<double>())
                                          : Complex(a.get<double>(), 0.0);
          }
          c.field.modes.push_back(mode);
        }
      }
    }
    if (j.contains("dictionary")) {
      const auto& d = j["dictionary"];
      c.dictionary.id = d.value("id", c.dictionary.id);
      c.dictionary.tau_scales = d.value("tau_scales", c.dictionary.tau_scales);
      c.dictionary.psi_scales = d.value("psi_scales", c.dictionary.psi_scales);
      if (d.contains("modulations")) c.dictionary.modulations = d["modulations"].get<std::vector<double>>();
      if (d.contains("translations")) c.dictionary.translations = d["translations"].get<std::vector<double>>();
    }
    if (j.contains("projection")) {
      const auto& p = j["projection"];
      c.projection.kappa_exponent = p.value("kappa_exponent", c.projection.kappa_exponent);
      c.projection.min_kappa_samples = p.value("min_kappa_samples", c.projection.min_kappa_samples);
      c.projection.leibniz_check = p.value("leibniz_check", c.projection.leibniz_check);
      c.projection.leibniz_strict = p.value("leibniz_strict", c.projection.leibniz_strict);
      c.projection.leibniz_tolerance = p.value("leibniz_tolerance", c.projection.leibniz_tolerance);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad config field: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

std::string content_hash(const std::string& content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw InternalError("EVP_MD_CTX_new failed");
  bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
            EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
            EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 && EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw InternalError("SHA-1 digest failed");
  return hex(digest, len);
}

std::string config_hash(const RunConfig& cfg) { return content_hash(config_to_json_value(cfg, false).dump()); }

// ---------------------------------------------------------------------------

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
  if (n == 0) throw ValidationError("uniform_index on empty range");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % n;
}

namespace {

std::vector<DyadicCube> partition_cells(std::mt19937_64& rng, int depth, int dim, DyadicCube* deepest) {
  std::vector<DyadicCube> cells;
  std::vector<DyadicCube> pending;
  DyadicCube current = DyadicCube::unit(dim);
  for (int l = 0; l < depth; ++l) {
    auto kids = current.children();
    const auto pick = uniform_index(rng, kids.size());
    for (std::size_t k = 0; k < kids.size(); ++k)
      if (k != pick) pending.push_back(kids[k]);
    current = kids[pick];
  }
  cells.push_back(current);
  if (deepest) *deepest = current;
  while (!pending.empty()) {
    DyadicCube c = pending.back();
    pending.pop_back();
    if (c.level > -depth && uniform01(rng) < 0.5) {
      for (const auto& k : c.children()) pending.push_back(k);
    } else {
      cells.push_back(c);
    }
  }
  sort_unique(cells);
  return cells;
}

}  // namespace

DyadicPartition random_partition(std::uint64_t seed, int depth, int dim) {
  if (depth < 0) throw ValidationError("partition depth must be >= 0");
  std::mt19937_64 rng(seed);
  DyadicPartition p;
  p.root = DyadicCube::unit(dim);
  p.cells = partition_cells(rng, depth, dim, nullptr);
  p.validate();
  return p;
}

TreeConfig generate_tree(std::uint64_t seed, int depth, int leaf_count, int dim) {
  if (depth < 0) throw ValidationError("tree depth must be >= 0");
  if (leaf_count < 0) throw ValidationError("leaf count must be >= 0");
  if (depth * dim >= 62 || static_cast<double>(leaf_count) > std::ldexp(1.0, depth * dim))
    throw ValidationError("leaf count " + std::to_string(leaf_count) + " infeasible at depth " +
                          std::to_string(depth) + " (at most 2^{d depth} disjoint cubes)");
  std::mt19937_64 rng(seed);
  DyadicCube deepest;
  auto cells = partition_cells(rng, depth, dim, &deepest);
  while (leaf_count > 0 && static_cast<int>(cells.size()) < leaf_count) {
    std::vector<std::size_t> splittable;
    for (std::size_t i = 0; i < cells.size(); ++i)
      if (cells[i].level > -depth) splittable.push_back(i);
    const auto idx = splittable[uniform_index(rng, splittable.size())];
    DyadicCube c = cells[idx];
    cells.erase(cells.begin() + static_cast<std::ptrdiff_t>(idx));
    for (const auto& k : c.children()) cells.push_back(k);
    sort_unique(cells);
  }
  std::vector<DyadicCube> others;
  for (const auto& c : cells)
    if (c != deepest) others.push_back(c);
  TreeConfig cfg;
  cfg.dim = dim;
  cfg.root = DyadicCube::unit(dim);
  cfg.alpha = dim + 1.0;
  cfg.leaves.push_back(deepest);
  if (leaf_count > 0) {
    for (std::size_t i = 0; i + 1 < static_cast<std::size_t>(leaf_count); ++i) {
      const auto j = i + uniform_index(rng, others.size() - i);
      std::swap(others[i], others[j]);
      cfg.leaves.push_back(others[i]);
    }
  } else {
    for (const auto& c : others)
      if (uniform01(rng) < 0.5) cfg.leaves.push_back(c);
  }
  sort_unique(cfg.leaves);
  cfg.validate();
  return cfg;
}

TreeConfig make_tree(const RunConfig& cfg) {
  TreeConfig t;
  if (cfg.tree.random) {
    t = generate_tree(cfg.tree.seed, cfg.tree.depth, cfg.tree.leaf_count, cfg.dim);
  } else {
    t.dim = cfg.dim;
    t.root = DyadicCube::unit(cfg.dim);
    t.leaves = cfg.tree.leaves;
  }
  t.gap = cfg.gap;
  t.alpha = cfg.effective_alpha();
  t.validate();
  return t;
}

SampledField make_field(const RunConfig& cfg, const TorusGrid& grid) {
  const auto& fs = cfg.field;
  std::vector<FieldSpec::Mode> modes;
  switch (fs.kind) {
    case FieldSpec::Kind::Zero:
      return SampledField(grid);
    case FieldSpec::Kind::File: {
      SampledField f = read_field_binary(fs.path);
      if (!(f.grid() == grid)) throw ValidationError("field file grid does not match the config grid");
      return f;
    }
    case FieldSpec::Kind::Modes:
      for (const auto& m : fs.modes) {
        bool on_lattice = false;
        snap_to_lattice(grid, m.xi, &on_lattice);
        if (!on_lattice) throw ValidationError("mode frequency is not on the lattice");
      }
      modes = fs.modes;
      break;
    case FieldSpec::Kind::Bandpass: {
      std::mt19937_64 rng(fs.seed);
      const double step = grid.frequency_step();
      const auto reach = static_cast<std::int64_t>(std::floor(fs.band_hi / step));
      if (fs.band_hi > grid.nyquist()) throw ValidationError("bandpass annulus exceeds the grid Nyquist frequency");
      std::vector<Frequency> lattice;
      std::array<std::int64_t, kMaxDim> k{};
      const std::int64_t width = 2 * reach + 1;
      std::int64_t total = 1;
      for (int a = 0; a < grid.dim; ++a) total *= width;
      for (std::int64_t f = 0; f < total; ++f) {
        std::int64_t rem = f;
        Frequency xi{};
        double norm2 = 0.0;
        for (int a = grid.dim - 1; a >= 0; --a) {
          k[static_cast<std::size_t>(a)] = rem % width - reach;
          rem /= width;
          xi[static_cast<std::size_t>(a)] = static_cast<double>(k[static_cast<std::size_t>(a)]) * step;
          norm2 += xi[static_cast<std::size_t>(a)] * xi[static_cast<std::size_t>(a)];
        }
        const double r = std::sqrt(norm2);
        if (r >= fs.band_lo && r <= fs.band_hi) lattice.push_back(xi);
      }
      if (lattice.empty()) throw ValidationError("bandpass annulus contains no lattice frequency");
      for (int i = 0; i < fs.count; ++i) {
        FieldSpec::Mode m;
        m.xi = lattice[uniform_index(rng, lattice.size())];
        const double amp = 0.5 + 0.5 * uniform01(rng);
        const double phase = 2.0 * std::numbers::pi * uniform01(rng);
        m.amplitude = std::polar(amp, phase);
        modes.push_back(m);
        if (fs.real) {
          FieldSpec::Mode c;
          for (int a = 0; a < grid.dim; ++a) c.xi[static_cast<std::size_t>(a)] = -m.xi[static_cast<std::size_t>(a)];
          c.amplitude = std::conj(m.amplitude);
          modes.push_back(c);
        }
      }
      break;
    }
  }
  // Sum of characters through the spectrum: exact on the lattice.
  ComplexBuffer spec(static_cast<std::size_t>(grid.size()), Complex(0.0, 0.0));
  const double step = grid.frequency_step();
  for (const auto& m : modes) {
    std::array<std::int64_t, kMaxDim> idx{};
    for (int a = 0; a < grid.dim; ++a) {
      auto k = static_cast<std::int64_t>(std::llround(m.xi[static_cast<std::size_t>(a)] / step));
      idx[static_cast<std::size_t>(a)] = ((k % grid.samples) + grid.samples) % grid.samples;
    }
    spec[static_cast<std::size_t>(grid.flatten(idx))] += m.amplitude;
  }
  // e^{2 pi i xi x} at x = -B + i h carries the phase e^{-2 pi i xi B}.
  for (std::int64_t f = 0; f < grid.size(); ++f) {
    auto idx = grid.unflatten(f);
    double phase = 0.0;
    for (int a = 0; a < grid.dim; ++a) phase -= grid.frequency(idx[static_cast<std::size_t>(a)]) * grid.half_width;
    spec[static_cast<std::size_t>(f)] *= std::polar(1.0, 2.0 * std::numbers::pi * phase);
  }
  fft_in_place(grid, spec, true);
  SampledField out(grid, std::move(spec));
  if (fs.real && fs.kind == FieldSpec::Kind::Bandpass) {
    for (auto& v : out.mutable_values()) v = Complex(v.real(), 0.0);
  }
  return out;
}

std::vector<DyadicCube> enumerate_j_cubes(const TreeIndex& tree, int window_depth) {
  std::vector<DyadicCube> out;
  const int dim = tree.dim();
  for (int level = 0; level >= tree.finest_level() - window_depth; --level) {
    const std::int64_t lo = std::int64_t{-4} << (-level);
    const std::int64_t w = std::int64_t{9} << (-level);
    std::int64_t total = 1;
    for (int a = 0; a < dim; ++a) total *= w;
    for (std::int64_t f = 0; f < total; ++f) {
      DyadicCube c{dim, level, {}};
      std::int64_t rem = f;
      for (int a = dim - 1; a >= 0; --a) {
        c.index[static_cast<std::size_t>(a)] = lo + rem % w;
        rem /= w;
      }
      out.push_back(c);
    }
  }
  return out;
}

std::string tree_csv(const TreeIndex& tree) {
  std::ostringstream os;
  const int dim = tree.dim();
  os << "tag,level";
  for (int a = 0; a < dim; ++a) os << ",k" << a;
  os << "\n";
  auto row = [&](const char* tag, const DyadicCube& c) {
    os << tag << "," << c.level;
    for (int a = 0; a < dim; ++a) os << "," << c.index[static_cast<std::size_t>(a)];
    os << "\n";
  };
  for (const auto& c : tree.cubes()) row("T", c);
  for (int j = tree.finest_level(); j <= 0; ++j)
    for (const auto& c : tree.shell(j, 1)) row("B", c);
  for (const auto& c : corona_partition(tree)) row("I", c);
  for (const auto& c : maximal_offtree(tree)) row("P", c);
  return os.str();
}

// ---------------------------------------------------------------------------

const RatioSummary* RunRecord::find(const std::string& inequality, double p) const {
  for (const auto& s : summary)
    if (s.inequality == inequality && (s.p == p || (std::isinf(s.p) && std::isinf(p)))) return &s;
  return nullptr;
}

std::string RunRecord::report_json() const {
  json j;
  j["config_hash"] = hash;
  j["config"] = config_to_json_value(config, false);
  j["status"] = ok() ? "ok" : "failed";
  if (!ok()) j["failure"] = {{"stage", failed_stage}, {"message", failure}};
  json leaves = json::array();
  for (const auto& l : tree.leaves) leaves.push_back(cube_to_json(l));
  j["tree"] = {{"leaves", leaves}, {"finest_level", finest_level}, {"cubes", tree_cubes}};
  json dicts = json::array();
  for (const auto& d : dictionaries)
    dicts.push_back({{"tag", d.tag},
                     {"members", d.members},
                     {"candidates", d.candidates},
                     {"filtered", d.filtered},
                     {"max_class_constant", d.max_class_constant},
                     {"max_leak", d.max_leak}});
  j["certificates"] = {{"dictionaries", dicts},
                       {"projection",
                        {{"big_g_route_error", diagnostics.big_g_route_error},
                         {"g_route_error", diagnostics.g_route_error},
                         {"leibniz_error", diagnostics.leibniz_error},
                         {"support_ratio", diagnostics.support_ratio},
                         {"sigma_inside_ratio", diagnostics.sigma_inside_ratio},
                         {"residual_identity_error", residual_identity_error},
                         {"telescoping_floor", telescoping_floor}}}};
  json sizes_json = json::array();
  for (const auto& s : sizes)
    sizes_json.push_back({{"p", p_to_json(s.p)},
                          {"value", s.value},
                          {"alpha", s.alpha},
                          {"m", s.gap},
                          {"dictionary", s.dictionary},
                          {"witness", {{"level", s.level}, {"cube", cube_to_json(s.cube)}, {"kernel", s.kernel}}}});
  j["size"] = sizes_json;
  json sum = json::array();
  for (const auto& s : summary)
    sum.push_back({{"inequality", s.inequality},
                   {"p", p_to_json(s.p)},
                   {"max_ratio", s.max_ratio},
                   {"worst_J", cube_to_json(s.worst)},
                   {"evaluated", s.evaluated},
                   {"skipped", s.skipped},
                   {"finite", s.finite}});
  j["summary"] = sum;
  j["carleson_decay"] = carleson_decay;
  j["offtree_decay_slope"] = offtree_decay_slope;
  json reps = json::array();
  for (const auto& r : reports) {
    json o{{"inequality", r.inequality},
           {"p", p_to_json(r.p)},
           {"lhs", r.lhs},
           {"rhs_without_constant", r.rhs},
           {"ratio", std::isinf(r.ratio) ? json("inf") : json(r.ratio)},
           {"J", cube_to_json(r.cube)},
           {"m", r.gap},
           {"seed", config.tree.seed},
           {"config_hash", hash}};
    if (r.q > 0.0) o["q"] = p_to_json(r.q);
    if (r.skipped) o["skipped"] = r.reason;
    if (!r.context.empty()) o["context"] = r.context;
    reps.push_back(std::move(o));
  }
  j["reports"] = reps;
  return j.dump(1) + "\n";
}

std::string RunRecord::perscale_csv() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "inequality,p,J,j,i,lhs_term,cumulative,config_hash\n";
  for (const auto& r : per_scale)
    os << r.inequality << "," << format_p(r.p) << "," << r.j_cube.to_string() << "," << r.j_cube.level << ","
       << r.level << "," << r.term << "," << r.cumulative << "," << hash << "\n";
  return os.str();
}

std::string RunRecord::timings_json() const {
  json j;
  for (const auto& [k, v] : timings) j[k] = v;
  return j.dump(1) + "\n";
}

// ---------------------------------------------------------------------------

namespace {

std::string dictionary_tag(const ClassTag& t) {
  std::ostringstream os;
  os << to_string(t.cls) << "_" << t.level << "^" << t.exponent;
  return os.str();
}

void summarize(RunRecord& rec) {
  std::map<std::pair<std::string, double>, RatioSummary> by;
  std::vector<std::pair<std::string, double>> order;
  for (const auto& r : rec.reports) {
    auto key = std::make_pair(r.inequality, r.p);
    auto it = by.find(key);
    if (it == by.end()) {
      RatioSummary s;
      s.inequality = r.inequality;
      s.p = r.p;
      it = by.emplace(key, s).first;
      order.push_back(key);
    }
    auto& s = it->second;
    if (std::isinf(r.ratio)) s.finite = false;
    if (r.skipped) {
      ++s.skipped;
      continue;
    }
    ++s.evaluated;
    if (s.evaluated == 1 || r.ratio > s.max_ratio) {
      s.max_ratio = r.ratio;
      s.worst = r.cube;
    }
  }
  rec.summary.clear();
  for (const auto& k : order) rec.summary.push_back(by[k]);
}

double fit_slope(const std::vector<std::pair<int, double>>& pts) {
  std::vector<double> xs, ys;
  for (const auto& [i, v] : pts)
    if (v > 0.0) {
      xs.push_back(i);
      ys.push_back(std::log2(v));
    }
  if (xs.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    sxy += (xs[k] - mx) * (ys[k] - my);
    sxx += (xs[k] - mx) * (xs[k] - mx);
  }
  return sxy / sxx;
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + p.string());
  out << s;
}

}  // namespace

RunRecord run(const RunConfig& cfg, const RunOptions& options) {
  RunRecord rec;
  rec.config = cfg;
  std::string stage = "config";
  std::optional<SampledField> f_keep, g_keep, chi_keep;
  const auto t_start = Clock::now();
  try {
    cfg.validate();
    rec.hash = config_hash(cfg);
    const TorusGrid grid = cfg.grid();

    stage = "tree";
    auto t0 = Clock::now();
    rec.tree = make_tree(cfg);
    const TreeIndex tree = expand_to_tree(rec.tree);
    rec.finest_level = tree.finest_level();
    rec.tree_cubes = tree.cubes().size();
    rec.timings["tree"] = seconds_since(t0);

    stage = "field";
    t0 = Clock::now();
    SampledField f = make_field(cfg, grid);
    rec.timings["field"] = seconds_since(t0);

    stage = "projection";
    t0 = Clock::now();
    ProjectionEngine engine(grid, tree, cfg.projection);
    ProjectionOutput out = engine.assemble(f);
    ResidualDecomposition res = engine.residual_decomposition(f, out);
    rec.diagnostics = out.diagnostics;
    rec.residual_identity_error = res.identity_error;
    rec.telescoping_floor = res.telescoping_floor;
    rec.timings["projection"] = seconds_since(t0);

    std::optional<DictionaryCache> own;
    DictionaryCache* dicts = options.dictionaries;
    if (!dicts) {
      own.emplace(grid, cfg.dictionary);
      dicts = &*own;
    }
    if (!(dicts->grid() == grid)) throw ValidationError("shared dictionary cache was built for another grid");

    const double alpha = cfg.effective_alpha();
    const int m = cfg.gap;
    const int floor_level = tree.finest_level() - cfg.offtree_depth;

    stage = "kernels";
    t0 = Clock::now();
    {
      std::vector<ClassTag> tags;
      for (int i = tree.finest_level(); i <= 0; ++i) {
        tags.push_back({KernelClass::Phi, i - m - 2, 4.0 * alpha});
        tags.push_back({KernelClass::Phi, i - m, 4.0 * alpha});
      }
      for (int i = floor_level; i <= 0; ++i) tags.push_back({KernelClass::Psi, i - m, 4.0 * alpha});
      std::sort(tags.begin(), tags.end(), [](const ClassTag& a, const ClassTag& b) {
        return std::tie(a.cls, a.level, a.exponent) < std::tie(b.cls, b.level, b.exponent);
      });
      tags.erase(std::unique(tags.begin(), tags.end(),
                             [](const ClassTag& a, const ClassTag& b) {
                               return a.cls == b.cls && a.level == b.level && a.exponent == b.exponent;
                             }),
                 tags.end());
      for (const auto& t : tags) {
        const Dictionary& d = dicts->get(t);
        DictionaryInfo info;
        info.tag = dictionary_tag(t);
        info.members = d.members.size();
        info.candidates = d.candidates;
        info.filtered = d.filtered;
        for (const auto& k : d.members) {
          info.max_class_constant = std::max(info.max_class_constant, k.class_constant);
          info.max_leak = std::max(info.max_leak, k.certificate.leak);
        }
        rec.dictionaries.push_back(info);
      }
    }
    rec.timings["kernels"] = seconds_since(t0);

    stage = "size";
    t0 = Clock::now();
    rec.sizes = estimate_size(f, tree, cfg.ps, *dicts);
    for (const auto& s : rec.sizes) rec.reports.push_back(check_norm_bound(out.g, s));
    rec.timings["size"] = seconds_since(t0);

    const auto j_cubes = enumerate_j_cubes(tree, cfg.window_depth);

    stage = "carleson";
    t0 = Clock::now();
    const SampledField residual = f - out.g;
    {
      CarlesonTable table(residual, tree, cfg.ps, *dicts);
      for (std::size_t q = 0; q < cfg.ps.size(); ++q)
        for (const auto& J : j_cubes) rec.reports.push_back(carleson_report(table, q, J, rec.sizes[q]));
      for (std::size_t q = 0; q < cfg.ps.size(); ++q) {
        for (const auto& J : tree.cubes()) {
          auto rows = table.per_scale(J, q);
          double cum = 0.0;
          double top = 0.0;
          for (const auto& [i, v] : rows) {
            cum += v;
            if (options.per_scale) rec.per_scale.push_back({"carleson", cfg.ps[q], J, i, v, cum});
            if (i == J.level) {
              top = v;
            } else if (top > 0.0) {
              rec.carleson_decay = std::max(rec.carleson_decay, v / (top * std::exp2(0.5 * (i - J.level))));
            } else if (v > 0.0) {
              rec.carleson_decay = kInfinity;
            }
          }
        }
      }
    }
    rec.timings["carleson"] = seconds_since(t0);

    stage = "offtree";
    t0 = Clock::now();
    {
      OfftreeTable table(out.g, tree, cfg.ps, floor_level, *dicts);
      std::vector<DyadicCube> eligible;
      for (const auto& J : j_cubes)
        if (offtree_eligible(tree, J)) eligible.push_back(J);
      for (std::size_t q = 0; q < cfg.ps.size(); ++q)
        for (const auto& J : eligible)
          rec.reports.push_back(offtree_report(table, q, J, rec.sizes[q], grid, alpha));
      double slope = kInfinity;
      for (const auto& K : maximal_offtree(tree)) {
        if (K.level < floor_level || K.level > 0 || !offtree_eligible(tree, K)) continue;
        bool inside = true;
        for (int a = 0; a < K.dim; ++a)
          if (K.lower(a) < -4.0 || K.upper(a) > 5.0) inside = false;
        if (!inside) continue;
        for (std::size_t q = 0; q < cfg.ps.size(); ++q) {
          auto rows = table.per_scale(K, q);
          double cum = 0.0;
          for (const auto& [i, v] : rows) {
            cum += v;
            if (options.per_scale) rec.per_scale.push_back({"offtree", cfg.ps[q], K, i, v, cum});
          }
          std::vector<std::pair<int, double>> below(rows.begin() + 1, rows.end());
          double s = fit_slope(below);
          if (!std::isnan(s)) slope = std::min(slope, s);
        }
      }
      rec.offtree_decay_slope = std::isinf(slope) ? 0.0 : slope;
    }
    rec.timings["offtree"] = seconds_since(t0);

    if (cfg.spq_draws > 0) {
      stage = "spq";
      t0 = Clock::now();
      for (double p : cfg.ps) {
        auto reps = prop_spq_checks(f, tree, p, cfg.q, *dicts, cfg.spq_draws, cfg.spq_seed);
        for (auto& r : reps) rec.reports.push_back(std::move(r));
      }
      InequalityReport b;
      b.inequality = "bernstein";
      b.p = 1.0;
      b.q = kInfinity;
      b.gap = m;
      b.cube = DyadicCube::unit(cfg.dim);
      b.lhs = bernstein_ratio(f, tree, *dicts);
      b.rhs = 1.0;
      finish_ratio(b);
      rec.reports.push_back(b);
      rec.timings["spq"] = seconds_since(t0);
    }

    summarize(rec);
    if (!options.keep_reports) rec.reports.clear();
    if (!cfg.out_dir.empty()) {
      f_keep = std::move(f);
      g_keep = out.g;
      chi_keep = out.chi;
    }
  } catch (const ResolutionError& e) {
    rec.failed_stage = stage;
    rec.failure = e.what();
    rec.required_samples = e.required_samples();
    summarize(rec);
  } catch (const std::exception& e) {
    rec.failed_stage = stage;
    rec.failure = e.what();
    summarize(rec);
  }
  rec.timings["total"] = seconds_since(t_start);
  if (!cfg.out_dir.empty()) {
    std::filesystem::path dir(cfg.out_dir);
    write_run_directory(rec, dir, f_keep ? &*f_keep : nullptr, g_keep ? &*g_keep : nullptr);
    if (chi_keep && cfg.write_fields) write_field_binary((dir / "fields" / "chi.bin").string(), *chi_keep, false);
  }
  return rec;
}

void write_run_directory(const RunRecord& rec, const std::filesystem::path& dir, const SampledField* f,
                         const SampledField* g) {
  std::filesystem::create_directories(dir);
  write_text(dir / "config.echo", config_to_json(rec.config) + "\n");
  write_text(dir / "report.json", rec.report_json());
  write_text(dir / "perscale.csv", rec.perscale_csv());
  write_text(dir / "timings.json", rec.timings_json());
  std::ostringstream base;
  base << std::setprecision(17);
  base << "# config_hash inequality p max_ratio\n";
  for (const auto& s : rec.summary)
    base << rec.hash << " " << s.inequality << " " << format_p(s.p) << " " << s.max_ratio << "\n";
  write_text(dir / "baselines.txt", base.str());
  if (rec.config.write_fields && (f || g)) {
    std::filesystem::create_directories(dir / "fields");
    if (f) write_field_binary((dir / "fields" / "f.bin").string(), *f, true);
    if (g) write_field_binary((dir / "fields" / "g.bin").string(), *g, true);
  }
}

// ---------------------------------------------------------------------------

SweepResult sweep(const std::vector<RunConfig>& configs, const SweepProgress& progress) {
  SweepResult out;
  std::unique_ptr<DictionaryCache> cache;
  std::string cache_key;
  for (std::size_t n = 0; n < configs.size(); ++n) {
    const auto& cfg = configs[n];
    RunOptions opt;
    opt.keep_reports = false;
    opt.per_scale = false;
    RunRecord rec;
    try {
      cfg.validate();
      const TorusGrid grid = cfg.grid();
      json key{{"d", grid.dim}, {"B", grid.half_width}, {"N", grid.samples}};
      key["dict"] = config_to_json_value(cfg, false)["dictionary"];
      if (!cache || key.dump() != cache_key) {
        cache = std::make_unique<DictionaryCache>(grid, cfg.dictionary);
        cache_key = key.dump();
      }
      opt.dictionaries = cache.get();
      rec = run(cfg, opt);
    } catch (const std::exception& e) {
      rec.config = cfg;
      rec.failed_stage = "config";
      rec.failure = e.what();
    }
    if (!rec.ok()) ++out.failures;
    for (const auto& s : rec.summary) {
      if (s.inequality != "norm" && s.inequality != "carleson" && s.inequality != "offtree") continue;
      out.table.add({s.inequality, s.p, cfg.tree.seed, cfg.gap, s.finite ? s.max_ratio : kInfinity});
    }
    out.carleson_decay = std::max(out.carleson_decay, rec.carleson_decay);
    if (progress) progress(n + 1, configs.size(), rec);
    out.records.push_back(std::move(rec));
  }
  return out;
}

std::vector<RunConfig> reference_sweep(int seeds, std::vector<int> gaps) {
  std::vector<RunConfig> out;
  for (int s = 1; s <= seeds; ++s) {
    for (int m : gaps) {
      RunConfig c;
      c.dim = 1;
      c.samples = std::int64_t{1} << 15;
      c.tree.random = true;
      c.tree.depth = 3;
      c.tree.seed = static_cast<std::uint64_t>(s);
      c.field.kind = FieldSpec::Kind::Bandpass;
      c.field.seed = static_cast<std::uint64_t>(s);
      c.gap = m;
      c.alpha = 2.0;
      c.ps = {1.0, 2.0, kInfinity};
      c.spq_draws = 0;
      c.write_fields = false;
      out.push_back(c);
    }
  }
  return out;
}

std::vector<BernsteinRow> bernstein_sweep(const RunConfig& base, const std::vector<int>& gaps) {
  std::vector<BernsteinRow> rows;
  const TorusGrid grid = base.grid();
  DictionaryCache dicts(grid, base.dictionary);
  for (int m : gaps) {
    RunConfig c = base;
    c.gap = m;
    c.validate();
    TreeIndex tree = expand_to_tree(make_tree(c));
    SampledField f = make_field(c, grid);
    BernsteinRow r;
    r.gap = m;
    r.ratio = bernstein_ratio(f, tree, dicts);
    if (!rows.empty()) {
      const double prev = rows.back().ratio;
      r.log2_increment = (prev > 0.0 && r.ratio > 0.0) ? std::log2(r.ratio / prev)
                                                       : (r.ratio > 0.0 ? kInfinity : -kInfinity);
    }
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("spearman needs two equal samples of size >= 2");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
      std::size_t j = i;
      while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

namespace {

// Smallest r with |a_hat(xi)| <= tol * max |a_hat| for all |xi| > r.
double spectral_radius(const SampledField& a, double tol) {
  const auto& spec = a.spectrum();
  const auto& grid = a.grid();
  double peak = 0.0;
  for (const auto& v : spec) peak = std::max(peak, std::abs(v));
  if (peak == 0.0) return 0.0;
  double r = 0.0;
  for (std::int64_t f = 0; f < grid.size(); ++f) {
    if (std::abs(spec[static_cast<std::size_t>(f)]) <= tol * peak) continue;
    r = std::max(r, frequency_norm(grid.dim, grid.frequency_at(f)));
  }
  return r;
}

// Radius of the spectrum of g around the origin: band of the widest
// filter (psi_{j_min - m}, tau_{-m}) plus the effective band of the
// mollified indicators.
double projection_radius(const ProjectionEngine& e) {
  const int m = e.gap();
  double r = std::max(std::ldexp(1.0, 2 - e.finest_level() + m), std::ldexp(1.0, 1 + m));
  double chi = 0.0;
  for (int j = e.finest_level(); j <= 0; ++j) chi = std::max(chi, spectral_radius(e.chi_s(j), kModulationTailTolerance));
  return r + chi;
}

double periodic_separation(const TorusGrid& grid, double s) {
  const double period = grid.samples * grid.frequency_step();
  double w = std::fmod(std::abs(s), period);
  return std::min(w, period - w);
}

}  // namespace

ModulationResult modulation_demo(const RunConfig& cfg, const Frequency& eta1, const std::vector<double>& separations,
                                 const std::optional<TreeConfig>& second) {
  cfg.validate();
  if (separations.size() < 2) throw ValidationError("modulation demo needs at least two separations");
  const TorusGrid grid = cfg.grid();
  auto require_lattice = [&](const Frequency& eta) {
    bool ok = false;
    snap_to_lattice(grid, eta, &ok);
    if (!ok) throw ValidationError("modulation frequency is not on the lattice");
  };
  require_lattice(eta1);
  TreeIndex tree1 = expand_to_tree(make_tree(cfg));
  TreeConfig t2cfg = second ? *second : make_tree(cfg);
  t2cfg.gap = cfg.gap;
  t2cfg.alpha = cfg.effective_alpha();
  TreeIndex tree2 = expand_to_tree(t2cfg);
  ProjectionEngine e1(grid, tree1, cfg.projection);
  ProjectionEngine e2(grid, tree2, cfg.projection);
  const SampledField f = make_field(cfg, grid);

  auto negate = [&](const Frequency& eta) {
    Frequency n{};
    for (int a = 0; a < grid.dim; ++a) n[static_cast<std::size_t>(a)] = -eta[static_cast<std::size_t>(a)];
    return n;
  };

  ModulationResult res;
  const SampledField g1 = e1.assemble(modulate(f, negate(eta1))).g;
  res.radius1 = projection_radius(e1);
  const double r2 = projection_radius(e2);
  res.radius2 = r2;
  const SampledField mg1 = modulate(g1, eta1);
  const double n1 = lp_norm(g1, 2.0);
  const double cell = std::pow(grid.spacing(), grid.dim);
  std::vector<double> seps, pairs;
  for (double s : separations) {
    ModulationRow row;
    row.separation = s;
    row.eta1 = eta1;
    row.eta2 = eta1;
    row.eta2[0] += s;
    require_lattice(row.eta2);
    const SampledField g2 = e2.assemble(modulate(f, negate(row.eta2))).g;
    const SampledField mg2 = modulate(g2, row.eta2);
    const double n2 = lp_norm(g2, 2.0);
    Complex inner(0.0, 0.0);
    for (std::size_t i = 0; i < mg1.values().size(); ++i) inner += std::conj(mg1.values()[i]) * mg2.values()[i];
    inner *= cell;
    row.pairing = (n1 > 0.0 && n2 > 0.0) ? std::abs(inner) / (n1 * n2) : 0.0;
    row.disjoint = periodic_separation(grid, s) > res.radius1 + r2;
    if (row.disjoint) {
      ++res.disjoint_rows;
      res.max_disjoint_pairing = std::max(res.max_disjoint_pairing, row.pairing);
    }
    seps.push_back(std::abs(s));
    pairs.push_back(row.pairing);
    res.rows.push_back(row);
  }
  res.spearman = spearman(seps, pairs);
  return res;
}

// ---------------------------------------------------------------------------

BaselineReport baseline_demo(const RunConfig& cfg) {
  cfg.validate();
  const TorusGrid grid = cfg.grid();
  BaselineReport rep;
  TreeIndex tree = expand_to_tree(make_tree(cfg));
  rep.partition = partition_from_tree(tree);
  const SampledField f = make_field(cfg, grid);
  rep.check = check_baseline(f, rep.partition);
  try {
    ProjectionEngine engine(grid, tree, cfg.projection);
    rep.g_smooth = engine.assemble(f).g;
    rep.smooth_available = true;
  } catch (const ResolutionError& e) {
    rep.smooth_note = e.what();
  }
  std::ostringstream os;
  os << std::setprecision(17);
  if (grid.dim == 1)
    os << "x,f,g_dyadic,g_smooth\n";
  else
    os << "x0,x1,f,g_dyadic,g_smooth\n";
  for (std::int64_t i = 0; i < grid.size(); ++i) {
    const Point x = grid.point(i);
    bool keep = true;
    for (int a = 0; a < grid.dim; ++a)
      if (x[static_cast<std::size_t>(a)] < -1.0 || x[static_cast<std::size_t>(a)] >= 2.0) keep = false;
    if (!keep) continue;
    for (int a = 0; a < grid.dim; ++a) os << x[static_cast<std::size_t>(a)] << ",";
    os << f[i].real() << "," << rep.check.g[i].real() << ",";
    if (rep.smooth_available)
      os << rep.g_smooth[i].real();
    else
      os << "nan";
    os << "\n";
  }
  rep.csv = os.str();
  return rep;
}

}  // namespace phasespace
