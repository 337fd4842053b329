#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "phasespace/errors.hpp"
#include "phasespace/harness.hpp"

namespace fs = std::filesystem;
using namespace phasespace;
using json = nlohmann::ordered_json;

namespace {

struct Overrides {
  std::string config;
  std::optional<int> dim;
  std::optional<double> half_width;
  std::optional<std::int64_t> samples;
  std::string leaves;
  std::optional<int> depth;
  std::optional<int> leaf_count;
  std::optional<std::uint64_t> tree_seed;
  std::string field;
  std::optional<std::uint64_t> field_seed;
  std::optional<int> mode_count;
  std::vector<double> band;
  std::string modes;
  std::string field_file;
  std::optional<int> gap;
  std::optional<double> alpha;
  std::vector<std::string> ps;
  std::string q;
  std::optional<int> kappa_exponent;
  std::optional<double> min_kappa_samples;
  std::string out;
};

void add_config_options(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
  app->add_option("--dim", o.dim, "dimension (1 or 2)");
  app->add_option("--half-width", o.half_width, "torus half-width B");
  app->add_option("--samples", o.samples, "samples per axis N (power of two)");
  app->add_option("--leaves", o.leaves, "explicit leaves 'level:k0[,k1];...'");
  app->add_option("--depth", o.depth, "random tree depth");
  app->add_option("--leaf-count", o.leaf_count, "random tree leaf count (0: free)");
  app->add_option("--tree-seed", o.tree_seed, "random tree seed");
  app->add_option("--field", o.field, "bandpass | modes | file | zero");
  app->add_option("--field-seed", o.field_seed, "bandpass seed");
  app->add_option("--mode-count", o.mode_count, "bandpass mode count");
  app->add_option("--band", o.band, "bandpass annulus lo hi")->expected(2);
  app->add_option("--modes", o.modes, "modes 'xi0[,xi1]:re[,im];...'");
  app->add_option("--field-file", o.field_file, "binary field file");
  app->add_option("--gap", o.gap, "frequency gap m");
  app->add_option("--alpha", o.alpha, "weight exponent alpha");
  app->add_option("--p", o.ps, "exponents p (numbers or inf)")->delimiter(',');
  app->add_option("--q", o.q, "second exponent q");
  app->add_option("--kappa-exponent", o.kappa_exponent, "mollifier radius exponent e");
  app->add_option("--min-kappa-samples", o.min_kappa_samples, "grid points per mollifier radius");
  app->add_option("--out", o.out, "run directory");
}

double parse_p(const std::string& s) {
  if (s == "inf" || s == "infinity") return kInfinity;
  std::size_t pos = 0;
  double v = std::stod(s, &pos);
  if (pos != s.size()) throw ValidationError("bad exponent '" + s + "'");
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

RunConfig resolve(const Overrides& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (o.dim) c.dim = *o.dim;
  if (o.half_width) c.half_width = *o.half_width;
  if (o.samples) c.samples = *o.samples;
  if (!o.leaves.empty()) {
    c.tree.random = false;
    c.tree.leaves.clear();
    for (const auto& item : split(o.leaves, ';')) {
      auto parts = split(item, ':');
      if (parts.size() != 2) throw ValidationError("leaf '" + item + "' is not level:index");
      DyadicCube cube{c.dim, std::stoi(parts[0]), {}};
      auto idx = split(parts[1], ',');
      if (static_cast<int>(idx.size()) != c.dim) throw ValidationError("leaf '" + item + "' has wrong dimension");
      for (int a = 0; a < c.dim; ++a) cube.index[static_cast<std::size_t>(a)] = std::stoll(idx[static_cast<std::size_t>(a)]);
      c.tree.leaves.push_back(cube);
    }
  }
  if (o.depth) c.tree.depth = *o.depth, c.tree.random = true;
  if (o.leaf_count) c.tree.leaf_count = *o.leaf_count;
  if (o.tree_seed) c.tree.seed = *o.tree_seed;
  if (!o.field.empty()) c.field.kind = field_kind_from_string(o.field);
  if (o.field_seed) c.field.seed = *o.field_seed;
  if (o.mode_count) c.field.count = *o.mode_count;
  if (o.band.size() == 2) c.field.band_lo = o.band[0], c.field.band_hi = o.band[1];
  if (!o.modes.empty()) {
    c.field.kind = FieldSpec::Kind::Modes;
    c.field.modes.clear();
    for (const auto& item : split(o.modes, ';')) {
      auto parts = split(item, ':');
      FieldSpec::Mode m;
      auto xi = split(parts.at(0), ',');
      if (static_cast<int>(xi.size()) != c.dim) throw ValidationError("mode '" + item + "' has wrong dimension");
      for (int a = 0; a < c.dim; ++a) m.xi[static_cast<std::size_t>(a)] = std::stod(xi[static_cast<std::size_t>(a)]);
      if (parts.size() > 1) {
        auto amp = split(parts[1], ',');
        m.amplitude = Complex(std::stod(amp.at(0)), amp.size() > 1 ? std::stod(amp[1]) : 0.0);
      }
      c.field.modes.push_back(m);
    }
  }
  if (!o.field_file.empty()) c.field.kind = FieldSpec::Kind::File, c.field.path = o.field_file;
  if (o.gap) c.gap = *o.gap;
  if (o.alpha) c.alpha = *o.alpha;
  if (!o.ps.empty()) {
    c.ps.clear();
    for (const auto& p : o.ps) c.ps.push_back(parse_p(p));
  }
  if (!o.q.empty()) c.q = parse_p(o.q);
  if (o.kappa_exponent) c.projection.kappa_exponent = *o.kappa_exponent;
  if (o.min_kappa_samples) c.projection.min_kappa_samples = *o.min_kappa_samples;
  if (!o.out.empty()) c.out_dir = o.out;
  c.validate();
  return c;
}

void write_text(const fs::path& p, const std::string& s) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + p.string());
  out << s;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json p_json(double p) { return std::isinf(p) ? json("inf") : json(p); }

int cmd_build(const RunConfig& cfg, bool pieces) {
  const TorusGrid grid = cfg.grid();
  TreeIndex tree = expand_to_tree(make_tree(cfg));
  SampledField f = make_field(cfg, grid);
  ProjectionSettings settings = cfg.projection;
  settings.keep_pieces = pieces;
  ProjectionEngine engine(grid, tree, settings);
  ProjectionOutput out = engine.assemble(f);
  ResidualDecomposition res = engine.residual_decomposition(f, out);
  const auto& d = out.diagnostics;
  std::cout << std::setprecision(3) << std::scientific;
  std::cout << "tree: " << tree.cubes().size() << " cubes, finest level " << tree.finest_level() << "\n"
            << "G two-route error     " << d.big_g_route_error << "\n"
            << "g two-route error     " << d.g_route_error << "\n"
            << "spectral cross-check  " << d.leibniz_error << "\n"
            << "support ratio off 5U  " << d.support_ratio << "\n"
            << "residual identity     " << res.identity_error << " (telescoping floor " << res.telescoping_floor
            << ")\n";
  if (cfg.out_dir.empty()) return 0;
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir / "fields");
  write_text(dir / "config.echo", config_to_json(cfg) + "\n");
  write_text(dir / "tree.csv", tree_csv(tree));
  std::vector<std::pair<std::string, const SampledField*>> files{{"f.bin", &f}, {"g.bin", &out.g}, {"chi.bin", &out.chi}};
  std::vector<std::string> names;
  for (const auto& p : out.pieces) names.push_back("piece_n" + std::to_string(p.n + 1) + "_j" + std::to_string(p.j) + ".bin");
  if (pieces)
    for (std::size_t i = 0; i < out.pieces.size(); ++i) files.emplace_back(names[i], &out.pieces[i].g_piece);
  std::ostringstream manifest;
  manifest << std::setprecision(17);
  manifest << "# sha1 file\n";
  for (const auto& [name, field] : files) {
    const fs::path p = dir / "fields" / name;
    write_field_binary(p.string(), *field, true);
    manifest << content_hash(read_text(p)) << " fields/" << name << "\n";
  }
  manifest << "# certificates\n"
           << "big_g_route_error " << d.big_g_route_error << "\n"
           << "g_route_error " << d.g_route_error << "\n"
           << "leibniz_error " << d.leibniz_error << "\n"
           << "support_ratio " << d.support_ratio << "\n"
           << "sigma_inside_ratio " << d.sigma_inside_ratio << "\n"
           << "residual_identity_error " << res.identity_error << "\n";
  write_text(dir / "manifest.txt", manifest.str());
  std::cout << "wrote " << dir.string() << "\n";
  return 0;
}

int cmd_verify(const RunConfig& cfg) {
  RunRecord rec = run(cfg);
  std::cout << "config " << rec.hash << "\n";
  if (!rec.ok()) {
    std::cerr << "failed at stage " << rec.failed_stage << ": " << rec.failure << "\n";
    return rec.required_samples >= 0 ? 3 : 2;
  }
  std::cout << std::left << std::setw(11) << "inequality" << std::setw(6) << "p" << std::setw(14) << "max ratio"
            << std::setw(12) << "evaluated" << "worst J\n";
  for (const auto& s : rec.summary) {
    std::ostringstream r;
    r << std::setprecision(4) << std::scientific << s.max_ratio;
    std::cout << std::setw(11) << s.inequality << std::setw(6) << format_p(s.p) << std::setw(14) << r.str()
              << std::setw(12) << s.evaluated << s.worst.to_string() << (s.finite ? "" : "  (non-finite)") << "\n";
  }
  std::cout << "carleson decay metric " << rec.carleson_decay << ", off-tree decay slope " << rec.offtree_decay_slope
            << "\n";
  if (!cfg.out_dir.empty()) std::cout << "wrote " << cfg.out_dir << "\n";
  return 0;
}

int cmd_sweep(const RunConfig& base, bool reference, int seeds, const std::vector<int>& gaps) {
  std::vector<RunConfig> configs;
  if (reference) {
    configs = reference_sweep(seeds, gaps);
  } else {
    for (int s = 1; s <= seeds; ++s)
      for (int m : gaps) {
        RunConfig c = base;
        c.out_dir.clear();
        c.tree.seed = static_cast<std::uint64_t>(s);
        c.field.seed = static_cast<std::uint64_t>(s);
        c.gap = m;
        c.spq_draws = 0;
        configs.push_back(c);
      }
  }
  SweepResult res = sweep(configs, [](std::size_t done, std::size_t total, const RunRecord& r) {
    std::cerr << "\r[" << done << "/" << total << "] " << (r.ok() ? "ok    " : "failed") << std::flush;
  });
  std::cerr << "\n";
  auto rows = res.table.summarize();
  std::cout << std::left << std::setw(11) << "inequality" << std::setw(6) << "p" << std::setw(14) << "max ratio"
            << std::setw(12) << "uniformity" << "worst seed\n";
  for (const auto& r : rows) {
    std::ostringstream a, b;
    a << std::setprecision(4) << std::scientific << r.max_ratio;
    b << std::setprecision(3) << std::fixed << r.uniformity;
    std::cout << std::setw(11) << r.inequality << std::setw(6) << format_p(r.p) << std::setw(14) << a.str()
              << std::setw(12) << b.str() << r.worst_seed << "\n";
  }
  std::cout << "failures " << res.failures << ", carleson decay metric " << res.carleson_decay << "\n";
  if (!base.out_dir.empty()) {
    const fs::path dir(base.out_dir);
    std::ostringstream csv;
    csv << std::setprecision(17) << "inequality,p,seed,m,ratio\n";
    for (const auto& e : res.table.entries())
      csv << e.inequality << "," << format_p(e.p) << "," << e.seed << "," << e.gap << "," << e.ratio << "\n";
    write_text(dir / "constants.csv", csv.str());
    json j = json::array();
    for (const auto& r : rows) {
      json by = json::object();
      for (const auto& [m, v] : r.max_by_gap) by[std::to_string(m)] = v;
      j.push_back({{"inequality", r.inequality},
                   {"p", p_json(r.p)},
                   {"max_ratio", r.max_ratio},
                   {"max_by_gap", by},
                   {"uniformity", r.uniformity},
                   {"worst_seed", r.worst_seed}});
    }
    write_text(dir / "sweep.json", json{{"rows", j}, {"failures", res.failures}, {"carleson_decay", res.carleson_decay}}.dump(1) + "\n");
  }
  return res.failures == 0 ? 0 : 1;
}

int cmd_spq(const RunConfig& cfg, std::size_t draws, const std::vector<int>& gaps) {
  const TorusGrid grid = cfg.grid();
  TreeIndex tree = expand_to_tree(make_tree(cfg));
  SampledField f = make_field(cfg, grid);
  DictionaryCache dicts(grid, cfg.dictionary);
  json out;
  json checks = json::array();
  double worst_holder = 0.0, worst_logc = 0.0;
  for (double p : cfg.ps) {
    for (const auto& r : prop_spq_checks(f, tree, p, cfg.q, dicts, draws, cfg.spq_seed)) {
      if (!r.skipped) (r.inequality == "holder" ? worst_holder : worst_logc) = std::max(
          r.inequality == "holder" ? worst_holder : worst_logc, r.ratio);
      json o{{"inequality", r.inequality}, {"p", p_json(r.p)}, {"q", p_json(r.q)}, {"lhs", r.lhs}, {"rhs", r.rhs},
             {"ratio", r.ratio}, {"context", r.context}};
      if (r.skipped) o["skipped"] = r.reason;
      checks.push_back(o);
    }
  }
  out["checks"] = checks;
  json bern = json::array();
  std::cout << "max holder ratio " << worst_holder << ", max log-convexity ratio " << worst_logc << "\n";
  std::cout << "m  bernstein ratio  log2 increment\n";
  for (const auto& r : bernstein_sweep(cfg, gaps)) {
    std::cout << r.gap << "  " << r.ratio << "  " << r.log2_increment << "\n";
    bern.push_back({{"m", r.gap}, {"ratio", r.ratio}, {"log2_increment", r.log2_increment}});
  }
  out["bernstein"] = bern;
  if (!cfg.out_dir.empty()) write_text(fs::path(cfg.out_dir) / "spq.json", out.dump(1) + "\n");
  return (worst_holder <= 1.0 + 1e-10 && worst_logc <= 1.0 + 1e-10) ? 0 : 1;
}

int cmd_mod_demo(const RunConfig& cfg, double eta1, double step, int count) {
  Frequency e1{};
  e1[0] = eta1;
  std::vector<double> seps;
  for (int k = 0; k < count; ++k) seps.push_back(step * k);
  ModulationResult res = modulation_demo(cfg, e1, seps);
  std::ostringstream csv;
  csv << std::setprecision(17) << "separation,pairing,disjoint\n";
  std::cout << "separation  pairing  disjoint\n";
  for (const auto& r : res.rows) {
    csv << r.separation << "," << r.pairing << "," << (r.disjoint ? 1 : 0) << "\n";
    std::cout << r.separation << "  " << r.pairing << "  " << (r.disjoint ? "yes" : "no") << "\n";
  }
  std::cout << "spectral radii " << res.radius1 << " " << res.radius2 << ", spearman " << res.spearman
            << ", max disjoint pairing " << res.max_disjoint_pairing << "\n";
  if (!cfg.out_dir.empty()) write_text(fs::path(cfg.out_dir) / "modulation.csv", csv.str());
  return res.spearman <= -0.8 && res.max_disjoint_pairing <= 1e-10 ? 0 : 1;
}

int cmd_baseline(const RunConfig& cfg) {
  BaselineReport rep = baseline_demo(cfg);
  const auto& c = rep.check;
  std::cout << "partition cells " << rep.partition.cells.size() << "\n"
            << "inside identity max error  " << c.max_inside_error << " over " << c.cubes_inside << " cubes\n"
            << "outside identity max error " << c.max_outside_error << " over " << c.cubes_outside << " cubes\n"
            << "sup |g| = " << c.g_sup << " <= S_dyadic = " << c.s_dyadic << "\n";
  if (!rep.smooth_available) std::cout << "smooth projection unavailable: " << rep.smooth_note << "\n";
  if (!cfg.out_dir.empty()) write_text(fs::path(cfg.out_dir) / "baseline.csv", rep.csv);
  return c.passed(1e-12) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Smooth phase space projections on dyadic trees"};
  app.require_subcommand(1);

  Overrides o_build, o_verify, o_sweep, o_spq, o_mod, o_base;
  bool pieces = false;
  auto* build = app.add_subcommand("build", "tree and projection; writes fields and a manifest");
  add_config_options(build, o_build);
  build->add_flag("--pieces", pieces, "also write every g piece");

  auto* verify = app.add_subcommand("verify", "full inequality suite for one configuration");
  add_config_options(verify, o_verify);

  bool reference = false;
  int seeds = 20;
  std::vector<int> gaps{0, 1, 2, 3};
  auto* sw = app.add_subcommand("sweep", "ratio table over seeds and gaps");
  add_config_options(sw, o_sweep);
  sw->add_flag("--reference", reference, "use the reference sweep configuration");
  sw->add_option("--seeds", seeds, "number of seeds");
  sw->add_option("--gaps", gaps, "gaps m")->delimiter(',');

  std::size_t draws = 100;
  std::vector<int> spq_gaps{0, 1, 2, 3, 4};
  auto* spq = app.add_subcommand("spq", "per-kernel Hoelder, log-convexity and Bernstein checks");
  add_config_options(spq, o_spq);
  spq->add_option("--draws", draws, "random (kernel, cube) draws");
  spq->add_option("--gaps", spq_gaps, "gaps m for the Bernstein ratio")->delimiter(',');

  double eta1 = 0.0, step = 1.0;
  int count = 12;
  auto* mod = app.add_subcommand("mod-demo", "modulation almost-orthogonality table");
  add_config_options(mod, o_mod);
  mod->add_option("--eta1", eta1, "first modulation (first axis)");
  mod->add_option("--step", step, "separation step");
  mod->add_option("--count", count, "number of separations");

  auto* base = app.add_subcommand("baseline", "dyadic conditional expectation baseline");
  add_config_options(base, o_base);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*build) return cmd_build(resolve(o_build), pieces);
    if (*verify) return cmd_verify(resolve(o_verify));
    if (*sw) return cmd_sweep(resolve(o_sweep), reference, seeds, gaps);
    if (*spq) return cmd_spq(resolve(o_spq), draws, spq_gaps);
    if (*mod) return cmd_mod_demo(resolve(o_mod), eta1, step, count);
    if (*base) return cmd_baseline(resolve(o_base));
  } catch (const ResolutionError& e) {
    std::cerr << "refused: " << e.what() << " (required samples " << e.required_samples() << ")\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
