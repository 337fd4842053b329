// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--only N] [--allow-fail LIST] [--cli PATH] [--data DIR]
//              [--write-baselines]
//
// --allow-fail lists criteria whose failure is known and analysed; they
// still print FAIL but do not change the exit status.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "phasespace/conditional.hpp"
#include "phasespace/errors.hpp"
#include "phasespace/estimators.hpp"
#include "phasespace/harness.hpp"
#include "phasespace/kernels.hpp"
#include "phasespace/projection.hpp"

namespace fs = std::filesystem;
using namespace phasespace;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string sci(double v, int digits = 2) {
  std::ostringstream os;
  os << std::setprecision(digits) << std::scientific << v;
  return os.str();
}

std::map<std::string, double> read_baselines(const fs::path& file) {
  std::map<std::string, double> out;
  std::ifstream in(file);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    std::string key, value;
    if (is >> key >> value) out[key] = value == "inf" ? kInfinity : std::stod(value);
  }
  return out;
}

RunConfig d1_config(int k) {
  RunConfig c;
  c.dim = 1;
  c.samples = std::int64_t{1} << 14;
  c.tree.random = true;
  c.tree.depth = 1 + k % 3;
  c.tree.seed = static_cast<std::uint64_t>(100 + k);
  c.gap = (k / 3) % 3;
  c.field.seed = static_cast<std::uint64_t>(200 + k);
  return c;
}

RunConfig d2_config(int k) {
  RunConfig c;
  c.dim = 2;
  c.samples = std::int64_t{1} << 10;
  c.tree.random = true;
  c.tree.depth = 1;
  c.tree.seed = static_cast<std::uint64_t>(300 + k);
  c.gap = 0;
  c.field.seed = static_cast<std::uint64_t>(400 + k);
  c.field.band_hi = 12.0;
  return c;
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  const auto t0 = Clock::now();
  double worst_in = 0.0, worst_out = 0.0;
  int failures = 0;
  for (int k = 0; k < 50; ++k) {
    const int dim = k < 25 ? 1 : 2;
    const int depth = dim == 1 ? k % 6 : k % 4;
    DyadicPartition part = random_partition(static_cast<std::uint64_t>(k + 1), depth, dim);
    RunConfig c;
    c.dim = dim;
    c.samples = dim == 1 ? (std::int64_t{1} << 12) : (std::int64_t{1} << 9);
    c.field.seed = static_cast<std::uint64_t>(k + 1);
    c.field.band_hi = dim == 1 ? 60.0 : 12.0;
    SampledField f = make_field(c, c.grid());
    BaselineCheck chk = check_baseline(f, part);
    worst_in = std::max(worst_in, chk.max_inside_error);
    worst_out = std::max(worst_out, chk.max_outside_error);
    if (!chk.passed(1e-12)) ++failures;
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  Outcome o;
  o.pass = failures == 0 && secs < 5.0;
  o.detail = "50 partitions, inside " + sci(worst_in) + ", outside " + sci(worst_out) + ", sup bound failures " +
             std::to_string(failures) + ", " + sci(secs) + " s";
  return o;
}

struct ConstructionStats {
  double big_g = 0.0, g_route = 0.0, residual = 0.0, linearity = 0.0, support = 0.0;
  int configs = 0;
};

ConstructionStats construction_run(const RunConfig& c) {
  ConstructionStats s;
  const TorusGrid grid = c.grid();
  TreeIndex tree = expand_to_tree(make_tree(c));
  ProjectionEngine engine(grid, tree, c.projection);
  SampledField f1 = make_field(c, grid);
  RunConfig c2 = c;
  c2.field.seed += 1000;
  SampledField f2 = make_field(c2, grid);
  ProjectionOutput o1 = engine.assemble(f1);
  ProjectionOutput o2 = engine.assemble(f2);
  const Complex a(0.75, 0.5), b(-1.25, 0.0);
  SampledField mix = f1 * a + f2 * b;
  ProjectionOutput om = engine.assemble(mix);
  ResidualDecomposition r = engine.residual_decomposition(f1, o1);
  SampledField lin = o1.g * a + o2.g * b;
  s.big_g = std::max({o1.diagnostics.big_g_route_error, o2.diagnostics.big_g_route_error,
                      om.diagnostics.big_g_route_error});
  s.g_route = std::max({o1.diagnostics.g_route_error, o2.diagnostics.g_route_error, om.diagnostics.g_route_error});
  s.residual = r.identity_error;
  s.linearity = relative_error(om.g, lin, om.g.max_abs());
  s.support = std::max({o1.diagnostics.support_ratio, o2.diagnostics.support_ratio, om.diagnostics.support_ratio});
  s.configs = 1;
  return s;
}

ConstructionStats merge(ConstructionStats a, const ConstructionStats& b) {
  a.big_g = std::max(a.big_g, b.big_g);
  a.g_route = std::max(a.g_route, b.g_route);
  a.residual = std::max(a.residual, b.residual);
  a.linearity = std::max(a.linearity, b.linearity);
  a.support = std::max(a.support, b.support);
  a.configs += b.configs;
  return a;
}

ConstructionStats& construction_cache() {
  static ConstructionStats stats;
  static bool done = false;
  if (!done) {
    for (int k = 0; k < 20; ++k) stats = merge(stats, construction_run(d1_config(k)));
    for (int k = 0; k < 5; ++k) stats = merge(stats, construction_run(d2_config(k)));
    done = true;
  }
  return stats;
}

Outcome criterion2() {
  const auto t0 = Clock::now();
  const auto& s = construction_cache();
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  Outcome o;
  o.pass = s.configs == 25 && s.big_g <= 1e-12 && s.g_route <= 1e-10 && s.residual <= 1e-8 &&
           s.linearity <= 1e-10 && secs < 180.0;
  o.detail = std::to_string(s.configs) + " configs, G " + sci(s.big_g) + ", g " + sci(s.g_route) + ", residual " +
             sci(s.residual) + ", linearity " + sci(s.linearity) + ", " + sci(secs) + " s";
  return o;
}

Outcome criterion3() {
  double leak = 0.0, cone = 0.0, theta = 0.0, theta_roundtrip = 0.0, tele = 0.0, worst_c = 0.0;
  bool finite = true;
  for (int dim : {1, 2}) {
    const TorusGrid grid{dim, 8.0, dim == 1 ? (std::int64_t{1} << 14) : (std::int64_t{1} << 9)};
    const double alpha = dim + 1.0;
    const int lowest = dim == 1 ? -6 : -2;
    auto track = [&](const KernelHandle& k, const ClassTag& tag, double factor) {
      SampledField field = *k.field;
      field *= factor;
      Certificate c = class_membership(field, tag);
      leak = std::max(leak, c.leak);
      if (!(std::isfinite(c.lambda_max) && c.lambda_max > 0.0)) finite = false;
      else worst_c = std::max(worst_c, 1.0 / c.lambda_max);
    };
    for (int j = lowest; j <= 0; ++j) {
      track(build_tau(grid, j), {KernelClass::Phi, j - 1, 4.0 * alpha}, 1.0);
      track(build_psi(grid, j), {KernelClass::Psi, j - 2, 4.0 * alpha}, 1.0);
      SampledField psi = build_psi(grid, j).materialize(grid);
      SampledField cone_sum(grid);
      for (int n = 0; n < dim; ++n) {
        KernelHandle pn = build_psi_cone(grid, n, j);
        KernelHandle tn = build_theta(grid, n, j);
        track(pn, {KernelClass::Psi, j - 2, 4.0 * alpha}, 1.0);
        const double scale = std::ldexp(1.0, -j * (dim + 1));
        track(tn, {KernelClass::Psi, j - 2, 4.0 * alpha}, scale);
        // derivatives: support from the exact multiplier, bound from the field
        for (int l = 1; l <= 3 * dim + 3; ++l) {
          const Multiplier th = theta_hat(dim, n, j);
          const Multiplier ml = [th, n, l](const Frequency& xi) {
            return std::pow(Complex(0.0, 2.0 * std::numbers::pi * xi[static_cast<std::size_t>(n)]), l) * th(xi);
          };
          const ClassTag tag{KernelClass::Psi, j - 2, 4.0 * alpha};
          SampledField dl = partial_derivative(*tn.field, n, l);
          dl *= std::ldexp(1.0, -j * (dim + 1 - l));
          Certificate c = class_membership(dl, tag, false);
          leak = std::max(leak, multiplier_leak(grid, ml, tag));
          if (!(std::isfinite(c.lambda_max) && c.lambda_max > 0.0)) finite = false;
          else worst_c = std::max(worst_c, 1.0 / c.lambda_max);
        }
        const Multiplier th = theta_hat(dim, n, j);
        SampledField d = field_from_multiplier(grid, [th, n, dim](const Frequency& xi) {
          return std::pow(Complex(0.0, 2.0 * std::numbers::pi * xi[static_cast<std::size_t>(n)]), dim + 1) * th(xi);
        });
        theta = std::max(theta, relative_error(d, *pn.field, pn.field->max_abs()));
        SampledField dr = partial_derivative(*tn.field, n, dim + 1);
        theta_roundtrip = std::max(theta_roundtrip, relative_error(dr, *pn.field, pn.field->max_abs()));
        cone_sum += *pn.field;
      }
      cone = std::max(cone, relative_error(cone_sum, psi, psi.max_abs()));
    }
    // cone weights sum to one on 1 <= |xi| <= 4
    for (std::int64_t i = 0; i < grid.size(); ++i) {
      const Frequency xi = grid.frequency_at(i);
      const double r = frequency_norm(dim, xi);
      if (r < 1.0 || r > 4.0) continue;
      Complex s(0.0, 0.0);
      for (int n = 0; n < dim; ++n) s += cone_hat(dim, n)(xi);
      cone = std::max(cone, std::abs(s - 1.0));
    }
    // telescoping: f = tau_0 * f + sum_{L < j <= 0} psi_j * f with tau_L = 1
    RunConfig c;
    c.dim = dim;
    c.samples = grid.samples;
    c.field.count = 32;
    c.field.band_lo = 0.0;
    c.field.band_hi = grid.nyquist() * 0.9;
    SampledField f = make_field(c, grid);
    SampledField sum = apply_multiplier(f, tau_hat(dim, 0));
    int L = 0;
    while (std::ldexp(1.0, L) * std::sqrt(static_cast<double>(dim)) * grid.nyquist() > 1.0) --L;
    for (int j = L + 1; j <= 0; ++j) sum += apply_multiplier(f, psi_hat(dim, j));
    tele = std::max(tele, relative_error(sum, f, f.max_abs()));
  }
  // dictionary members of a reference run
  RunConfig ref;
  RunRecord rec = run(ref);
  for (const auto& d : rec.dictionaries) {
    leak = std::max(leak, d.max_leak);
    if (!std::isfinite(d.max_class_constant)) finite = false;
  }
  Outcome o;
  o.pass = rec.ok() && leak <= 1e-12 && cone <= 1e-12 && theta <= 1e-12 && tele <= 1e-10 && finite;
  o.detail = "leak " + sci(leak) + ", cone " + sci(cone) + ", d^{d+1} theta " + sci(theta) + " (fft round trip " + sci(theta_roundtrip) + "), telescoping " +
             sci(tele) + ", max class constant " + sci(worst_c);
  return o;
}

Outcome criterion4() {
  const auto& s = construction_cache();
  // spectral vs 8th-order central difference derivative of G
  RunConfig c;
  c.dim = 1;
  c.samples = std::int64_t{1} << 14;
  c.tree.random = false;
  c.tree.leaves = {DyadicCube{1, -1, {0, 0, 0}}};
  const TorusGrid grid = c.grid();
  TreeIndex tree = expand_to_tree(make_tree(c));
  ProjectionEngine engine(grid, tree, c.projection);
  SampledField f = make_field(c, grid);
  static constexpr double w[4] = {4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0};
  double fd = 0.0;
  for (int j = tree.finest_level(); j <= 0; ++j) {
    SampledField G = engine.big_g(0, j, f);
    SampledField spec = partial_derivative(G, 0, 1);
    const double h = grid.spacing();
    double diff = 0.0;
    for (std::int64_t i = 0; i < grid.size(); ++i) {
      Complex v(0.0, 0.0);
      for (int k = 1; k <= 4; ++k) {
        auto at = [&](std::int64_t q) { return G[((q % grid.samples) + grid.samples) % grid.samples]; };
        v += w[k - 1] * (at(i + k) - at(i - k));
      }
      v /= h;
      diff = std::max(diff, std::abs(v - spec[i]));
    }
    fd = std::max(fd, diff / spec.max_abs());
  }
  Outcome o;
  o.pass = s.support <= 1e-8 && fd <= 1e-4;
  o.detail = "support off 5U " + sci(s.support) + ", spectral vs FD derivative " + sci(fd);
  return o;
}

struct SweepCache {
  SweepResult result;
  double seconds = 0.0;
};

SweepCache& sweep_cache() {
  static SweepCache cache;
  static bool done = false;
  if (!done) {
    const auto t0 = Clock::now();
    cache.result = sweep(reference_sweep());
    cache.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    done = true;
  }
  return cache;
}

Outcome criterion5(std::map<std::string, double>& measured) {
  auto& s = sweep_cache();
  auto rows = s.result.table.summarize();
  bool finite = s.result.failures == 0;
  double worst = 0.0;
  std::string where, parts;
  for (const auto& r : rows) {
    if (!std::isfinite(r.max_ratio)) finite = false;
    measured["uniformity_" + r.inequality + "_" + format_p(r.p)] = r.uniformity;
    if (r.uniformity > worst) {
      worst = r.uniformity;
      where = r.inequality + " p=" + format_p(r.p);
    }
  }
  for (const std::string ineq : {"norm", "carleson", "offtree"}) {
    double u = 0.0;
    for (const auto& r : rows)
      if (r.inequality == ineq) u = std::max(u, r.uniformity);
    parts += ineq + " " + sci(u) + ", ";
  }
  Outcome o;
  o.pass = finite && worst <= 4.0 && s.seconds < 600.0;
  o.detail = std::to_string(s.result.records.size()) + " runs, finite " + (finite ? "yes" : "no") +
             ", uniformity " + parts + "worst " + where + ", " + sci(s.seconds) + " s";
  return o;
}

Outcome criterion6(std::map<std::string, double>& measured) {
  auto& s = sweep_cache();
  measured["carleson_decay"] = s.result.carleson_decay;
  Outcome o;
  o.pass = s.result.carleson_decay <= 1.0;
  o.detail = "max s_i / (s_j 2^{(i-j)/2}) over J in T = " + sci(s.result.carleson_decay) + " (<= 1 required)";
  return o;
}

Outcome criterion7(std::map<std::string, double>& measured, const std::map<std::string, double>& frozen) {
  RunConfig c;
  c.dim = 1;
  c.samples = std::int64_t{1} << 14;
  c.tree.depth = 3;
  c.tree.seed = 11;
  c.field.seed = 11;
  const TorusGrid grid = c.grid();
  TreeIndex tree = expand_to_tree(make_tree(c));
  SampledField f = make_field(c, grid);
  DictionaryCache dicts(grid, c.dictionary);
  double holder = 0.0, logc = 0.0;
  std::size_t checked = 0;
  const std::vector<std::pair<double, double>> pairs{{1, 2}, {2, 4}, {1, kInfinity}, {2, 1}, {4, 2}, {kInfinity, 2}, {2, 2}};
  for (const auto& [p, q] : pairs) {
    for (const auto& r : prop_spq_checks(f, tree, p, q, dicts, 100, 17)) {
      if (r.skipped) continue;
      ++checked;
      const double slack_ratio = r.rhs > 0.0 ? (r.lhs - r.rhs) / r.rhs : (r.lhs > 0.0 ? kInfinity : 0.0);
      (r.inequality == "holder" ? holder : logc) = std::max(r.inequality == "holder" ? holder : logc, slack_ratio);
    }
  }
  auto rows = bernstein_sweep(c, {0, 1, 2, 3, 4});
  double inc = -kInfinity;
  bool frozen_ok = true;
  for (const auto& r : rows) {
    if (r.gap > 0) inc = std::max(inc, r.log2_increment);
    const std::string key = "bernstein_m" + std::to_string(r.gap);
    measured[key] = r.ratio;
    auto it = frozen.find(key);
    if (it != frozen.end() && r.ratio > it->second * (1.0 + 1e-9)) frozen_ok = false;
  }
  Outcome o;
  o.pass = holder <= 1e-10 && logc <= 1e-10 && inc <= 1.0 + 0.5 && frozen_ok && checked > 0;
  o.detail = std::to_string(checked) + " checks, holder excess " + sci(holder) + ", log-convexity excess " +
             sci(logc) + ", max log2 Bernstein increment " + sci(inc) + (frozen_ok ? "" : ", above frozen baseline");
  return o;
}

Outcome criterion8(std::map<std::string, double>& measured) {
  RunConfig c;
  c.dim = 1;
  c.samples = std::int64_t{1} << 14;
  c.tree.random = false;
  c.tree.leaves = {DyadicCube{1, -1, {0, 0, 0}}};
  c.field.count = 64;
  c.field.band_lo = 0.0;
  c.field.band_hi = 40.0;
  std::vector<double> seps;
  for (int k = 0; k < 12; ++k) seps.push_back(40.0 * k);
  ModulationResult res = modulation_demo(c, Frequency{}, seps);
  measured["modulation_spearman"] = res.spearman;
  Outcome o;
  o.pass = res.rows.size() >= 6 && res.spearman <= -0.8 && res.disjoint_rows > 0 && res.max_disjoint_pairing <= 1e-10;
  o.detail = std::to_string(res.rows.size()) + " separations, spearman " + sci(res.spearman, 3) + ", " +
             std::to_string(res.disjoint_rows) + " disjoint with max pairing " + sci(res.max_disjoint_pairing);
  return o;
}

Outcome criterion9(const std::string& cli) {
  Outcome o;
  if (cli.empty() || !fs::exists(cli)) {
    o.detail = "CLI binary not found";
    return o;
  }
  const fs::path base = fs::temp_directory_path() / ("phasespace_accept_" + std::to_string(::getpid()));
  fs::remove_all(base);
  std::string hashes[2];
  for (int k = 0; k < 2; ++k) {
    const fs::path dir = base / ("run" + std::to_string(k));
    const std::string cmd = "\"" + cli + "\" verify --depth 2 --tree-seed 5 --field-seed 5 --gap 1 --out \"" +
                            dir.string() + "\" > /dev/null";
    if (std::system(cmd.c_str()) != 0) {
      o.detail = "verify run " + std::to_string(k) + " failed";
      return o;
    }
    std::ifstream in(dir / "report.json", std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    hashes[k] = content_hash(ss.str());
  }
  fs::remove_all(base);
  o.pass = !hashes[0].empty() && hashes[0] == hashes[1];
  o.detail = "report.json " + hashes[0].substr(0, 12) + (o.pass ? " == " : " != ") + hashes[1].substr(0, 12);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only, allow;
  std::string cli, data;
  bool write = false;
  auto parse_list = [](const std::string& s, std::set<int>& out) {
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.insert(std::stoi(item));
  };
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) parse_list(argv[++i], only);
    else if (a == "--allow-fail" && i + 1 < argc) parse_list(argv[++i], allow);
    else if (a == "--cli" && i + 1 < argc) cli = argv[++i];
    else if (a == "--data" && i + 1 < argc) data = argv[++i];
    else if (a == "--write-baselines") write = true;
  }
  const fs::path baseline_file = data.empty() ? fs::path() : fs::path(data) / "acceptance_baselines.txt";
  const auto frozen = baseline_file.empty() ? std::map<std::string, double>{} : read_baselines(baseline_file);
  std::map<std::string, double> measured;

  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, criterion1},
      {2, criterion2},
      {3, criterion3},
      {4, criterion4},
      {5, [&] { return criterion5(measured); }},
      {6, [&] { return criterion6(measured); }},
      {7, [&] { return criterion7(measured, frozen); }},
      {8, [&] { return criterion8(measured); }},
      {9, [&] { return criterion9(cli); }},
  };
  int unexpected = 0;
  for (const auto& [n, fn] : criteria) {
    if (!only.empty() && !only.count(n)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    std::cout << "criterion " << n << " [PRIMARY]: " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << "  ("
              << std::fixed << std::setprecision(1) << secs << " s)" << std::defaultfloat;
    if (!o.pass && allow.count(n)) std::cout << "  [known failure]";
    std::cout << std::endl;
    if (!o.pass && !allow.count(n)) ++unexpected;
  }
  if (write && !baseline_file.empty()) {
    std::ofstream out(baseline_file);
    out << "# frozen acceptance measurements (key value)\n" << std::setprecision(17);
    for (const auto& [k, v] : measured) out << k << " " << v << "\n";
  } else {
    for (const auto& [k, v] : measured) {
      auto it = frozen.find(k);
      if (it == frozen.end() || k == "modulation_spearman") continue;
      if (v > it->second * (1.0 + 1e-9) + 1e-300) {
        std::cout << "regression: " << k << " = " << v << " exceeds frozen " << it->second << std::endl;
        ++unexpected;
      }
    }
  }
  return unexpected == 0 ? 0 : 1;
}
