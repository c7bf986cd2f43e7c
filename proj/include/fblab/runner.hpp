#pragma once

// Experiment runner: executes a validated ExperimentConfig, writes a run
// directory of artifacts, and produces a deterministic summary.json. The
// summary contains no timestamps, hostnames, or absolute paths, so running
// the same config (and seed) twice yields byte-identical summaries; volatile
// facts (creation time, config source, thread count) go to run_manifest.json
// instead. report() consolidates a run directory back into text + JSON.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "blowup.hpp"
#include "config.hpp"
#include "dimension.hpp"
#include "expr.hpp"
#include "field_io.hpp"
#include "functionals.hpp"
#include "signorini.hpp"
#include "solver.hpp"

namespace fblab {

struct RunOptions {
  std::filesystem::path out_base = "runs";
  bool csv = false;           // also write CSV exports of binary artifacts
  int threads = 1;            // recorded in the manifest; modules run serially
  std::string config_source;  // original config path, manifest only
};

struct RunResult {
  std::filesystem::path dir;
  nlohmann::json summary;
  bool all_checks_passed = true;
};

namespace run_detail {

using nlohmann::json;

// --- small utilities -------------------------------------------------------

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex8(std::uint64_t v) {
  std::uint32_t folded = static_cast<std::uint32_t>(v ^ (v >> 32));
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", folded);
  return buf;
}

inline std::string utc_stamp() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

inline std::string fmt_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline void write_text(const std::filesystem::path& p, const std::string& content) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + p.string() + " for writing");
  os << content;
  if (!os) throw std::runtime_error("failed writing " + p.string());
}

// Run directories never overwrite: <kind>-<utc>-<confighash>, suffixed on
// collision.
inline std::filesystem::path make_run_dir(const std::filesystem::path& base,
                                          const std::string& kind,
                                          const std::string& canonical) {
  std::filesystem::create_directories(base);
  std::string stem = kind + "-" + utc_stamp() + "-" + hex8(fnv1a64(canonical));
  std::filesystem::path dir = base / stem;
  for (int k = 2; std::filesystem::exists(dir); ++k)
    dir = base / (stem + "-" + std::to_string(k));
  std::filesystem::create_directory(dir);
  return dir;
}

// --- summary assembly ------------------------------------------------------

struct SummaryBuilder {
  json checks = json::array();
  json metrics = json::object();
  std::vector<std::string> artifacts;
  bool all_passed = true;

  void check(const std::string& name, bool pass, const std::string& claim,
             json details = json::object()) {
    json c;
    c["name"] = name;
    c["pass"] = pass;
    c["claim"] = claim;
    c["details"] = std::move(details);
    checks.push_back(std::move(c));
    all_passed = all_passed && pass;
  }

  void metric(const std::string& name, json v) { metrics[name] = std::move(v); }

  void artifact(const std::string& name) { artifacts.push_back(name); }

  json finish(const ExperimentConfig& cfg) {
    std::sort(artifacts.begin(), artifacts.end());
    json s;
    s["schema_version"] = kConfigSchemaVersion;
    s["kind"] = cfg.kind;
    s["seed"] = cfg.seed;
    s["config"] = config_to_json(cfg);
    s["checks"] = checks;
    s["metrics"] = metrics;
    s["artifacts"] = artifacts;
    s["all_checks_passed"] = all_passed;
    return s;
  }
};

// --- shared pieces ---------------------------------------------------------

inline std::function<double(std::span<const double>, double)> boundary_function(
    const ExperimentConfig& cfg) {
  const BoundarySpec& b = *cfg.boundary;
  if (b.kind == "expr") {
    auto compiled = std::make_shared<Expr>(Expr::parse(b.expr));
    return [compiled](std::span<const double> x, double t) {
      return compiled->eval(x, t);
    };
  }
  // Table data: nearest row within snap * h of the queried boundary node.
  const Grid g = cfg.grid->build();
  double h = 0;
  for (int d = 0; d < g.dim(); ++d) h = std::max(h, g.spacing(d));
  double reach = b.snap * h;
  auto points = b.points;
  auto values = b.values;
  return [points, values, reach](std::span<const double> x, double) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      double d2 = 0;
      for (std::size_t d = 0; d < x.size(); ++d) {
        double dx = points[i][d] - x[d];
        d2 += dx * dx;
      }
      if (d2 < best) {
        best = d2;
        arg = i;
      }
    }
    if (std::sqrt(best) > reach) {
      std::ostringstream os;
      os << "no row within snap*h of boundary node (";
      for (std::size_t d = 0; d < x.size(); ++d) os << (d ? ", " : "") << x[d];
      os << ")";
      throw ConfigError("boundary.points", os.str());
    }
    return values[arg];
  };
}

inline double contact_fraction_global(const Grid& g, const std::vector<std::uint8_t>& mask) {
  std::size_t contact = 0, interior = 0;
  for_each_node(g, [&](std::size_t f, std::span<const std::size_t> idx, auto) {
    if (is_boundary_index(g, idx)) return;
    ++interior;
    if (mask[f]) ++contact;
  });
  return interior ? static_cast<double>(contact) / static_cast<double>(interior) : 0.0;
}

/// Connected components of {flags != 0} under 2n-neighbor adjacency.
inline int component_count(const Grid& g, const std::vector<std::uint8_t>& flags) {
  std::vector<std::uint8_t> seen(flags.size(), 0);
  std::vector<std::size_t> stack;
  int comps = 0;
  for (std::size_t start = 0; start < flags.size(); ++start) {
    if (!flags[start] || seen[start]) continue;
    ++comps;
    seen[start] = 1;
    stack.push_back(start);
    while (!stack.empty()) {
      std::size_t f = stack.back();
      stack.pop_back();
      auto idx = g.multi_index(f);
      for (int d = 0; d < g.dim(); ++d) {
        for (int dir : {-1, 1}) {
          if (dir < 0 && idx[d] == 0) continue;
          if (dir > 0 && idx[d] + 1 >= g.resolution()[d]) continue;
          idx[d] += dir;
          std::size_t nb = g.flat_index(idx);
          idx[d] -= dir;
          if (flags[nb] && !seen[nb]) {
            seen[nb] = 1;
            stack.push_back(nb);
          }
        }
      }
    }
  }
  return comps;
}

// Dump one solution as binary field + JSON sidecar (+ CSV on request).
inline void dump_solution(const std::filesystem::path& dir, const std::string& stem,
                          const Solution& sol, double t, bool csv, SummaryBuilder& sb) {
  write_field((dir / (stem + ".fblb")).string(), sol.u);
  sb.artifact(stem + ".fblb");
  json side;
  side["t"] = t;
  side["residual"] = sol.residual;
  side["iterations"] = sol.iterations;
  side["contact_fraction"] = contact_fraction_global(sol.u.grid, sol.contact_mask);
  write_text(dir / (stem + ".json"), side.dump(2) + "\n");
  sb.artifact(stem + ".json");
  if (csv) {
    std::ostringstream os;
    write_field_csv(os, sol.u);
    write_text(dir / (stem + ".csv"), os.str());
    sb.artifact(stem + ".csv");
  }
}

inline void dump_free_boundary(const std::filesystem::path& dir, const std::string& stem,
                               const Solution& sol, SummaryBuilder& sb) {
  if (sol.u.grid.dim() != 2) return;
  auto pts = free_boundary(sol);
  std::ostringstream os;
  os << "x1,x2\n";
  for (const auto& p : pts) os << fmt_full(p[0]) << "," << fmt_full(p[1]) << "\n";
  write_text(dir / (stem + ".csv"), os.str());
  sb.artifact(stem + ".csv");
}

// --- per-kind runners ------------------------------------------------------

inline void run_solve(const ExperimentConfig& cfg, const RunOptions& opt,
                      const std::filesystem::path& dir, SummaryBuilder& sb) {
  Grid g = cfg.grid->build();
  auto bnd = boundary_function(cfg);
  auto prob = make_problem(
      g, [&](std::span<const double> x) { return bnd(x, 0.0); }, cfg.solver);
  Solution sol = solve_obstacle(prob);

  dump_solution(dir, "solution", sol, 0.0, opt.csv, sb);
  dump_free_boundary(dir, "free_boundary", sol, sb);

  double min_u = *std::min_element(sol.u.values.begin(), sol.u.values.end());
  double max_u = *std::max_element(sol.u.values.begin(), sol.u.values.end());
  sb.metric("residual", sol.residual);
  sb.metric("iterations", sol.iterations);
  sb.metric("contact_fraction", contact_fraction_global(g, sol.contact_mask));
  sb.metric("min_u", min_u);
  sb.metric("max_u", max_u);

  sb.check("solver-converged", true, "variational-inequality-solve",
           {{"residual", sol.residual}, {"iterations", sol.iterations}});
  sb.check("solution-nonnegative", min_u >= 0.0, "obstacle-constraint",
           {{"min_u", min_u}});

  if (cfg.oracle) {
    double h = 0;
    for (int d = 0; d < g.dim(); ++d) h = std::max(h, g.spacing(d));
    auto pts = free_boundary(sol);
    double worst = 0;
    for (const auto& p : pts) {
      double r = 0;
      for (std::size_t d = 0; d < p.size(); ++d) {
        double dx = p[d] - cfg.oracle->center[d];
        r += dx * dx;
      }
      worst = std::max(worst, std::abs(std::sqrt(r) - cfg.oracle->contact_radius));
    }
    double tol = cfg.oracle->radius_factor * h;
    sb.metric("radial_radius_error", worst);
    sb.check("radial-benchmark", !pts.empty() && worst <= tol, "radial-benchmark",
             {{"max_radius_error", worst}, {"tol", tol}, {"fb_points", pts.size()}});
  }
}

inline void run_family(const ExperimentConfig& cfg, const RunOptions& opt,
                       const std::filesystem::path& dir, SummaryBuilder& sb) {
  Grid g = cfg.grid->build();
  auto bnd = boundary_function(cfg);
  SolutionFamily fam = solve_family(g, bnd, cfg.t_values, cfg.solver);

  std::ostringstream table;
  table << "t,iterations,residual,contact_fraction,max_u\n";
  for (std::size_t k = 0; k < fam.solutions.size(); ++k) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "family_%03zu", k);
    dump_solution(dir, stem, fam.solutions[k], fam.t_values[k], opt.csv, sb);
    const Solution& s = fam.solutions[k];
    table << fmt_full(fam.t_values[k]) << "," << s.iterations << ","
          << fmt_full(s.residual) << ","
          << fmt_full(contact_fraction_global(g, s.contact_mask)) << ","
          << fmt_full(*std::max_element(s.u.values.begin(), s.u.values.end())) << "\n";
  }
  write_text(dir / "family.csv", table.str());
  sb.artifact("family.csv");

  // Monotonicity of the family and nestedness of the contact sets.
  double worst_drop = 0;
  std::size_t leaks = 0;
  for (std::size_t k = 0; k + 1 < fam.solutions.size(); ++k) {
    const auto& lo = fam.solutions[k];
    const auto& hi = fam.solutions[k + 1];
    for (std::size_t i = 0; i < lo.u.values.size(); ++i) {
      worst_drop = std::max(worst_drop, lo.u.values[i] - hi.u.values[i]);
      if (hi.contact_mask[i] && !lo.contact_mask[i]) ++leaks;
    }
  }
  sb.metric("n_solutions", fam.solutions.size());
  sb.metric("provenance", to_string(fam.provenance));
  sb.check("family-monotone", worst_drop <= 1e-12, "family-comparison-principle",
           {{"worst_drop", worst_drop}});
  sb.check("contact-sets-nested", leaks == 0, "contact-set-shrinks-with-t",
           {{"leaking_nodes", leaks}});
}

inline void run_heleshaw(const ExperimentConfig& cfg, const RunOptions& opt,
                         const std::filesystem::path& dir, SummaryBuilder& sb) {
  Grid g = cfg.grid->build();
  const DiskSpec& K = *cfg.K;
  std::vector<std::uint8_t> K_mask(g.num_nodes(), 0);
  for_each_node(g, [&](std::size_t f, std::span<const std::size_t>, std::span<const double> x) {
    for (std::size_t i = 0; i < K.centers.size(); ++i) {
      double d2 = 0;
      for (int d = 0; d < g.dim(); ++d) {
        double dx = x[d] - K.centers[i][d];
        d2 += dx * dx;
      }
      if (d2 <= K.radii[i] * K.radii[i]) {
        K_mask[f] = 1;
        return;
      }
    }
  });

  SolutionFamily fam = hele_shaw_evolve(K_mask, g, cfg.t_values, cfg.solver);

  std::vector<int> comps(fam.solutions.size());
  std::ostringstream table;
  table << "t,iterations,residual,positive_fraction,components\n";
  for (std::size_t k = 0; k < fam.solutions.size(); ++k) {
    auto pos = positivity_mask(fam.solutions[k]);
    comps[k] = component_count(g, pos);
    double frac = 1.0 - contact_fraction_global(g, fam.solutions[k].contact_mask);
    table << fmt_full(fam.t_values[k]) << "," << fam.solutions[k].iterations << ","
          << fmt_full(fam.solutions[k].residual) << "," << fmt_full(frac) << ","
          << comps[k] << "\n";
  }
  write_text(dir / "heleshaw.csv", table.str());
  sb.artifact("heleshaw.csv");

  // Key frames only: first, last, and the steps around every merge.
  std::vector<std::size_t> frames{0, fam.solutions.size() - 1};
  bool monotone = true;
  std::vector<std::array<double, 2>> intervals;
  std::vector<double> midpoints;
  for (std::size_t k = 0; k + 1 < comps.size(); ++k) {
    if (comps[k + 1] > comps[k]) monotone = false;
    if (comps[k + 1] < comps[k]) {
      intervals.push_back({fam.t_values[k], fam.t_values[k + 1]});
      midpoints.push_back(0.5 * (fam.t_values[k] + fam.t_values[k + 1]));
      frames.push_back(k);
      frames.push_back(k + 1);
    }
  }
  std::sort(frames.begin(), frames.end());
  frames.erase(std::unique(frames.begin(), frames.end()), frames.end());
  for (std::size_t k : frames) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "heleshaw_%03zu", k);
    dump_solution(dir, stem, fam.solutions[k], fam.t_values[k], opt.csv, sb);
  }

  json sing;
  sing["intervals"] = intervals;
  sing["midpoints"] = midpoints;
  if (!midpoints.empty()) {
    std::vector<std::vector<double>> pts;
    for (double m : midpoints) pts.push_back({m});
    BoxDimResult bd = box_dim(make_cloud(1, pts), cfg.heleshaw.scales);
    sing["box_dim"] = bd.to_json();
    sb.metric("singular_time_box_dim", bd.value);
    sb.metric("singular_time_box_dim_degenerate", bd.degenerate);
  } else {
    sing["box_dim"] = nullptr;
  }
  write_text(dir / "singular_times.json", sing.dump(2) + "\n");
  sb.artifact("singular_times.json");

  sb.metric("components_initial", comps.front());
  sb.metric("components_final", comps.back());
  sb.metric("n_merge_events", intervals.size());
  sb.metric("merge_intervals", intervals);
  sb.check("components-nonincreasing", monotone, "quasi-static-monotone-topology",
           {{"initial", comps.front()}, {"final", comps.back()}});
  sb.check("positivity-stays-interior", true, "domain-large-enough",
           {{"note", "hele-shaw evolution aborts if the positivity set reaches the "
                     "outer boundary"}});
}

inline void run_analyze(const ExperimentConfig& cfg, const RunOptions& opt,
                        const std::filesystem::path& dir, SummaryBuilder& sb) {
  const AnalysisSpec& a = cfg.analysis;
  Solution sol;
  if (!a.from_field.empty()) {
    sol.u = read_field(a.from_field);
    double max_u = *std::max_element(sol.u.values.begin(), sol.u.values.end());
    double thr = 1e-12 * std::max(1.0, max_u);
    sol.contact_mask.assign(sol.u.values.size(), 0);
    for (std::size_t i = 0; i < sol.u.values.size(); ++i)
      sol.contact_mask[i] = sol.u.values[i] <= thr ? 1 : 0;
  } else {
    Grid g = cfg.grid->build();
    auto bnd = boundary_function(cfg);
    auto prob = make_problem(
        g, [&](std::span<const double> x) { return bnd(x, a.t); }, cfg.solver);
    sol = solve_obstacle(prob);
    dump_solution(dir, "solution", sol, a.t, opt.csv, sb);
  }

  FitOptions fit = a.fit_options();
  StratumThresholds th = a.thresholds();

  std::vector<SingularPointRecord> records;
  json points = json::array();
  std::map<std::string, int> strata;
  bool all_valid = true;
  int n_singular = 0;

  for (std::size_t i = 0; i < a.points.size(); ++i) {
    const auto& x0 = a.points[i];
    if (x0.size() != static_cast<std::size_t>(sol.u.grid.dim()))
      throw ConfigError("analysis.points[" + std::to_string(i) + "]",
                        "dimension must match the field");
    json entry;
    entry["x0"] = x0;
    Classification cls = classify_point(sol, x0, a.t, fit, th);
    entry["kind"] = to_string(cls.kind);
    entry["margin"] = cls.margin;
    if (cls.kind == PointKind::singular) {
      ++n_singular;
      SingularPointRecord rec = analyze_singular_point(sol.u, x0, a.t, fit, th);
      bool valid = true;
      std::string why;
      try {
        validate_record(rec, th);
      } catch (const std::exception& e) {
        valid = false;
        why = e.what();
        all_valid = false;
      }
      entry["record"] = rec.to_json();
      entry["validated"] = valid;
      if (!valid) entry["validation_error"] = why;
      strata[to_string(rec.stratum)]++;
      if (opt.csv) {
        auto input = make_input(sol.u);
        const Grid& g = sol.u.grid;
        double h = 0;
        for (int d = 0; d < g.dim(); ++d) h = std::max(h, g.spacing(d));
        double r_max = fit.r_fit;
        if (!(r_max > 0)) {
          r_max = std::numeric_limits<double>::infinity();
          for (int d = 0; d < g.dim(); ++d) {
            r_max = std::min(r_max, x0[d] - g.origin()[d]);
            r_max = std::min(r_max, g.upper(d) - x0[d]);
          }
          r_max *= 0.8;
        }
        ProfileOptions popt;
        popt.order = fit.order;
        popt.theta = fit.theta;
        popt.r_min = 4 * h;
        popt.eps_slack = default_eps_slack(h);
        FrequencyProfile prof = profile(input, x0, r_max, popt);
        std::ostringstream os;
        profile_to_csv(os, prof);
        char stem[32];
        std::snprintf(stem, sizeof stem, "profile_%03zu.csv", i);
        write_text(dir / stem, os.str());
        sb.artifact(stem);
      }
      records.push_back(std::move(rec));
    }
    points.push_back(std::move(entry));
  }

  write_text(dir / "records.json", points.dump(2) + "\n");
  sb.artifact("records.json");
  std::ostringstream os;
  records_to_csv(os, records);
  write_text(dir / "records.csv", os.str());
  sb.artifact("records.csv");

  json strata_json = json::object();
  for (const auto& [k, v] : strata) strata_json[k] = v;
  sb.metric("n_points", a.points.size());
  sb.metric("n_singular", n_singular);
  sb.metric("strata", strata_json);
  sb.check("records-validate", all_valid, "singular-point-stratification",
           {{"n_singular", n_singular}});
}

inline void run_signorini(const ExperimentConfig& cfg, const RunOptions&,
                          const std::filesystem::path& dir, SummaryBuilder& sb) {
  const SignoriniSpec& s = cfg.signorini;
  json catalog = json::array();

  auto sphere_pairing = [](const SignoriniSolution& a, const SignoriniSolution& b,
                           double rho, int order) {
    auto rule = sphere_rule(a.n, order);
    std::vector<double> c(a.n, 0.0);
    auto f = [&](std::span<const double> x) { return a.eval(x) * b.eval(x); };
    return sphere_integral(f, c, rho, rule);
  };

  bool verify_ok = true, phi_ok = true, odd_ok = true;
  double worst_phi_dev = 0, worst_min_derivative = 0;

  for (double lam : s.lambdas) {
    bool integer = std::abs(lam - std::round(lam)) < 1e-12;
    bool odd = integer && (std::llround(lam) % 2 == 1);

    std::vector<SignoriniSolution> members;
    members.push_back(signorini_2d(lam, 1.0, 0.0));
    if (integer) members.push_back(signorini_2d(lam, 1.0, 1.0));
    if (odd && std::llround(lam) >= 3)
      for (int n : s.dims)
        if (n > 2) members.push_back(symmetrized_Q(static_cast<int>(std::llround(lam)), n).q);

    for (const auto& q : members) {
      json entry;
      entry["lambda"] = lam;
      entry["n"] = q.n;
      bool v = true;
      std::string why;
      try {
        verify_signorini(q, s.tol);
      } catch (const std::exception& e) {
        v = false;
        why = e.what();
        verify_ok = false;
      }
      entry["verifies"] = v;
      if (!v) entry["error"] = why;

      // The frequency of a lambda-homogeneous solution is lambda at every r.
      auto input = make_input(q);
      double dev = 0;
      for (double r : {0.5, 0.75, 1.0})
        dev = std::max(dev, std::abs(phi(input, std::vector<double>(q.n, 0.0), r,
                                         s.quad_order) -
                                     lam));
      entry["phi_deviation"] = dev;
      worst_phi_dev = std::max(worst_phi_dev, dev);
      if (dev > 1e-6) phi_ok = false;

      catalog.push_back(std::move(entry));
    }

    // Odd frequencies are monotone: pair q_lambda against itself plus the
    // next even mode and require a nonnegative derivative.
    if (odd && std::llround(lam) >= 3) {
      auto q = signorini_2d(lam, 1.0, 0.0);
      auto q_next = signorini_2d(lam + 1.0, 1.0, 0.0);
      auto rep = odd_frequency_monotone_check(
          [&](std::span<const double> x) { return q.eval(x) + q_next.eval(x); }, q, lam,
          s.radii, s.quad_order);
      double pairing = sphere_pairing(q_next, q, 1.0, s.quad_order);
      worst_min_derivative = std::min(worst_min_derivative, rep.min_derivative);
      if (rep.min_derivative < -1e-8) odd_ok = false;
      json entry;
      entry["lambda"] = lam;
      entry["n"] = 2;
      entry["min_derivative"] = rep.min_derivative;
      entry["even_mode_pairing"] = pairing;
      entry["check"] = "odd-frequency-monotone";
      catalog.push_back(std::move(entry));
    }
  }

  // Seeded random PSD matrices: the closed-form pairing of the q_A family
  // must match quadrature, and the Gram matrix it induces must be PSD.
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  bool qa_ok = true;
  double worst_qa_dev = 0;
  for (int trial = 0; trial < s.n_random; ++trial) {
    int m = 1 + static_cast<int>(rng() % 2);  // A is m x m, solution lives in m+1 dims
    Eigen::MatrixXd B(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) B(i, j) = u(rng);
    Eigen::MatrixXd A = B * B.transpose();
    Eigen::MatrixXd B2(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) B2(i, j) = u(rng);
    Eigen::MatrixXd Abar = B2 * B2.transpose();

    double closed = inner_qA(A, Abar, 1.0);
    double quad = sphere_pairing(make_qA(A).q, make_qA(Abar).q, 1.0, s.quad_order);
    double rel = std::abs(closed - quad) / std::max(1e-30, std::abs(closed));
    worst_qa_dev = std::max(worst_qa_dev, rel);
    if (rel > 1e-6) qa_ok = false;
    if (inner_qA(A, A, 1.0) <= 0) qa_ok = false;
  }

  write_text(dir / "catalog.json", catalog.dump(2) + "\n");
  sb.artifact("catalog.json");

  sb.metric("n_members", catalog.size());
  sb.metric("worst_phi_deviation", worst_phi_dev);
  sb.metric("worst_min_derivative", worst_min_derivative);
  sb.metric("worst_qa_pairing_deviation", worst_qa_dev);
  sb.check("catalog-verifies", verify_ok, "homogeneous-solution-catalog",
           {{"tol", s.tol}});
  sb.check("frequency-equals-homogeneity", phi_ok, "frequency-of-pure-states",
           {{"worst_deviation", worst_phi_dev}});
  sb.check("odd-frequency-monotone", odd_ok, "odd-frequency-monotonicity",
           {{"worst_min_derivative", worst_min_derivative}});
  sb.check("qa-pairing-closed-form", qa_ok, "matrix-family-inner-products",
           {{"worst_relative_deviation", worst_qa_dev}, {"n_random", s.n_random}});
}

inline PointCloud build_cloud(const DimensionSpec& d) {
  const CloudSpec& c = d.cloud;
  if (c.kind == "points") {
    std::size_t dim = c.points.front().size();
    for (std::size_t i = 0; i < c.points.size(); ++i)
      if (c.points[i].size() != dim)
        throw ConfigError("dimension.cloud.points[" + std::to_string(i) + "]",
                          "all points must share one dimension");
    return make_cloud(dim, c.points, d.h_dedup);
  }
  if (c.kind == "cantor") {
    std::vector<std::array<double, 2>> intervals{{0.0, 1.0}};
    for (int k = 0; k < c.depth; ++k) {
      std::vector<std::array<double, 2>> next;
      for (auto [a, b] : intervals) {
        double third = (b - a) / 3.0;
        next.push_back({a, a + third});
        next.push_back({b - third, b});
      }
      intervals = std::move(next);
    }
    std::vector<std::vector<double>> pts;
    for (auto [a, b] : intervals) {
      pts.push_back({a});
      pts.push_back({b});
    }
    return make_cloud(1, pts, d.h_dedup);
  }
  // segment
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < c.n; ++i)
    pts.push_back({c.n == 1 ? 0.0 : static_cast<double>(i) / (c.n - 1)});
  return make_cloud(1, pts, d.h_dedup);
}

inline void run_dimension(const ExperimentConfig& cfg, const RunOptions&,
                          const std::filesystem::path& dir, SummaryBuilder& sb) {
  const DimensionSpec& d = cfg.dimension;
  PointCloud cloud = build_cloud(d);

  double bound = hausdorff_premeasure(cloud, d.beta, d.delta);
  BoxDimResult bd = box_dim(cloud, d.scales);

  json out;
  out["n_points"] = cloud.size();
  out["dim"] = cloud.dim;
  out["diameter"] = diameter(cloud);
  out["sample_resolution"] = sample_resolution(cloud);
  out["premeasure"] = premeasure_json(cloud, d.beta, d.delta);
  out["box_dim"] = bd.to_json();

  std::ostringstream os;
  box_counts_to_csv(os, bd);
  write_text(dir / "boxcounts.csv", os.str());
  sb.artifact("boxcounts.csv");

  sb.metric("premeasure_bound", bound);
  sb.metric("box_dim", bd.value);
  sb.metric("box_dim_residual", bd.residual);
  sb.metric("box_dim_degenerate", bd.degenerate);
  sb.check("premeasure-finite", std::isfinite(bound) && bound >= 0,
           "hausdorff-premeasure-estimate", {{"beta", d.beta}, {"bound", bound}});
  sb.check("box-dim-fit", bd.degenerate || bd.residual < 0.5,
           "box-counting-dimension-estimate",
           {{"value", bd.value}, {"residual", bd.residual}});

  if (d.coarea) {
    if (cloud.dim < 2)
      throw ConfigError("dimension.coarea", "space-time cloud must have dim >= 2");
    CoareaReport rep = coarea_projection_check(cloud, d.s, d.coarea_beta, d.scales,
                                               d.C_ref, d.coarea_tol);
    out["coarea"] = rep.to_json();
    sb.metric("coarea_consistent", rep.consistent);
    sb.metric("coarea_pi2_dim", rep.pi2.value);
    sb.check("coarea-projection", rep.consistent && rep.violations.empty(),
             "coarea-projection-bound",
             {{"pi2_dim", rep.pi2.value},
              {"bound", rep.beta_over_s},
              {"violations", rep.violations.size()}});
  }

  write_text(dir / "dimension.json", out.dump(2) + "\n");
  sb.artifact("dimension.json");
}

inline void run_pipeline(const ExperimentConfig& cfg, const RunOptions& opt,
                         const std::filesystem::path& dir, SummaryBuilder& sb) {
  const PipelineSpec& p = cfg.pipeline;
  Grid g = cfg.grid->build();
  double h = 0;
  for (int d = 0; d < g.dim(); ++d) h = std::max(h, g.spacing(d));

  // Stage 1: drive the two-well datum to the pinch offset.
  PinchResult pinch = find_pinch(g, p.b, p.c, p.bracket_lo, p.bracket_hi, cfg.solver,
                                 p.bisections);
  dump_solution(dir, "pinch_solution", pinch.base, 0.0, opt.csv, sb);
  dump_free_boundary(dir, "pinch_free_boundary", pinch.base, sb);
  json pj;
  pj["C0"] = pinch.C0;
  pj["x0"] = pinch.x0;
  write_text(dir / "pinch.json", pj.dump(2) + "\n");
  sb.artifact("pinch.json");

  double x0_norm = std::hypot(pinch.x0[0], pinch.x0[1]);
  sb.metric("pinch_C0", pinch.C0);
  sb.metric("pinch_x0", pinch.x0);
  sb.check("pinch-found", x0_norm <= 2 * h + 1e-12, "degenerate-point-construction",
           {{"x0_norm", x0_norm}, {"tol", 2 * h}});

  // Stage 2: classify and stratify the pinch point.
  FitOptions fit;
  fit.r_fit = p.r_fit;
  StratumThresholds th;
  Classification cls = classify_point(pinch.base, pinch.x0, 0.0, fit, th);
  sb.metric("classification", to_string(cls.kind));
  sb.check("pinch-is-singular", cls.kind == PointKind::singular,
           "regular-singular-dichotomy",
           {{"kind", to_string(cls.kind)}, {"margin", cls.margin}});

  SingularPointRecord rec = analyze_singular_point(pinch.base.u, pinch.x0, 0.0, fit, th);
  bool valid = true;
  std::string why;
  try {
    validate_record(rec, th);
  } catch (const std::exception& e) {
    valid = false;
    why = e.what();
  }
  write_text(dir / "record.json", rec.to_json().dump(2) + "\n");
  sb.artifact("record.json");
  std::ostringstream rcsv;
  records_to_csv(rcsv, std::vector<SingularPointRecord>{rec});
  write_text(dir / "records.csv", rcsv.str());
  sb.artifact("records.csv");

  sb.metric("stratum", to_string(rec.stratum));
  sb.metric("kernel_dim", rec.p2.kernel_dim);
  if (rec.lambda2) sb.metric("lambda2", rec.lambda2->value);
  json vdet;
  vdet["stratum"] = to_string(rec.stratum);
  if (!valid) vdet["error"] = why;
  sb.check("record-validates", valid, "singular-point-stratification", vdet);

  // Stage 3: lift the datum and measure how fast the contact set clears.
  SolutionFamily fam = solve_family(
      g,
      [&](std::span<const double> x, double t) {
        return two_bump_value(x, p.b, p.c, pinch.C0) + t;
      },
      p.ts, cfg.solver);
  CleaningReport rep = cleaning_experiment(fam, rec, p.radii);
  write_text(dir / "cleaning.json", rep.to_json().dump(2) + "\n");
  sb.artifact("cleaning.json");

  sb.metric("cleaning_exponent_s", rep.exponent_s);
  sb.metric("cleaning_residual", rep.exponent_residual);
  sb.metric("cleaning_usable_radii", rep.usable);
  sb.metric("growth_constant", rep.growth_constant);
  bool cleaned = rep.usable >= 3 && rep.exponent_s >= p.s_min &&
                 rep.exponent_residual <= p.residual_max;
  sb.check("contact-set-cleaning", cleaned, "generic-cleaning-rate",
           {{"exponent_s", rep.exponent_s},
            {"s_min", p.s_min},
            {"residual", rep.exponent_residual},
            {"usable", rep.usable}});
  bool barrier_ok = true;
  for (double b : rep.barrier_min)
    if (!(b > 0)) barrier_ok = false;
  sb.check("barrier-positive", barrier_ok, "lifted-datum-grows",
           {{"n_radii", rep.radii.size()}});
}

}  // namespace run_detail

// ---------------------------------------------------------------------------

/// Execute a validated config. Creates a fresh run directory under
/// opt.out_base, writes artifacts + summary.json + run_manifest.json, and
/// returns the summary. Numerical failures surface as exceptions.
inline RunResult run(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  using namespace run_detail;
  if (opt.threads < 1)
    throw ConfigError("threads", "must be a positive integer");

  std::string canonical = config_dump(cfg);
  std::filesystem::path dir = make_run_dir(opt.out_base, cfg.kind, canonical);

  write_text(dir / "config.canonical.json", canonical);

  json manifest;
  manifest["created_utc"] = utc_stamp();
  manifest["config_source"] = opt.config_source;
  manifest["threads"] = opt.threads;
  manifest["schema_version"] = kConfigSchemaVersion;
  write_text(dir / "run_manifest.json", manifest.dump(2) + "\n");

  SummaryBuilder sb;
  sb.artifact("config.canonical.json");
  sb.artifact("run_manifest.json");
  sb.artifact("summary.json");

  if (cfg.kind == "solve") run_solve(cfg, opt, dir, sb);
  else if (cfg.kind == "family") run_family(cfg, opt, dir, sb);
  else if (cfg.kind == "heleshaw") run_heleshaw(cfg, opt, dir, sb);
  else if (cfg.kind == "analyze") run_analyze(cfg, opt, dir, sb);
  else if (cfg.kind == "signorini") run_signorini(cfg, opt, dir, sb);
  else if (cfg.kind == "dimension") run_dimension(cfg, opt, dir, sb);
  else run_pipeline(cfg, opt, dir, sb);

  RunResult result;
  result.summary = sb.finish(cfg);
  result.all_checks_passed = sb.all_passed;
  result.dir = dir;
  write_text(dir / "summary.json", result.summary.dump(2) + "\n");
  return result;
}

// ---------------------------------------------------------------------------
// Consolidated report over an existing run directory.

namespace run_detail {

inline const std::map<std::string, std::vector<std::string>>& expected_artifacts() {
  static const std::map<std::string, std::vector<std::string>> m{
      {"solve", {"config.canonical.json", "run_manifest.json", "summary.json",
                 "solution.fblb", "solution.json", "free_boundary.csv"}},
      {"family", {"config.canonical.json", "run_manifest.json", "summary.json",
                  "family.csv"}},
      {"heleshaw", {"config.canonical.json", "run_manifest.json", "summary.json",
                    "heleshaw.csv", "singular_times.json"}},
      {"analyze", {"config.canonical.json", "run_manifest.json", "summary.json",
                   "records.json", "records.csv"}},
      {"signorini", {"config.canonical.json", "run_manifest.json", "summary.json",
                     "catalog.json"}},
      {"dimension", {"config.canonical.json", "run_manifest.json", "summary.json",
                     "dimension.json", "boxcounts.csv"}},
      {"full-pipeline", {"config.canonical.json", "run_manifest.json", "summary.json",
                         "pinch.json", "record.json", "records.csv", "cleaning.json"}},
  };
  return m;
}

inline std::string json_view(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) return fmt_short(v.get<double>());
  return v.dump();
}

}  // namespace run_detail

/// Consolidate a run directory: human-readable text to `text`, machine JSON
/// returned (and mirrored to <dir>/report.json, a regenerable artifact).
/// Missing artifacts are listed, not fatal; an empty directory reports "no
/// artifacts".
inline nlohmann::json report(const std::filesystem::path& dir, std::ostream& text) {
  using namespace run_detail;
  using nlohmann::json;

  if (!std::filesystem::exists(dir) || !std::filesystem::is_directory(dir))
    throw ConfigError("report", "not a directory: " + dir.string());

  std::vector<std::string> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path().filename().string());
  std::sort(files.begin(), files.end());

  json rep;
  rep["dir"] = dir.filename().string();
  rep["artifacts"] = files;

  if (files.empty()) {
    text << "report: no artifacts found in " << dir.filename().string() << "\n";
    rep["note"] = "no artifacts";
    return rep;
  }

  json summary;
  bool have_summary = false;
  if (std::find(files.begin(), files.end(), "summary.json") != files.end()) {
    std::ifstream is(dir / "summary.json");
    try {
      is >> summary;
      have_summary = true;
    } catch (const std::exception&) {
      have_summary = false;
    }
  }

  text << "== run " << dir.filename().string() << " ==\n";
  std::string kind;
  if (have_summary) {
    kind = summary.value("kind", std::string("?"));
    rep["kind"] = kind;
    rep["seed"] = summary.value("seed", 0);
    text << "kind: " << kind << "    seed: " << summary.value("seed", 0) << "\n";

    int passed = 0, failed = 0;
    text << "\n-- checks --\n";
    for (const auto& c : summary.value("checks", json::array())) {
      bool pass = c.value("pass", false);
      (pass ? passed : failed)++;
      text << (pass ? "  [PASS] " : "  [FAIL] ") << c.value("name", std::string("?"))
           << "   {" << c.value("claim", std::string()) << "}\n";
    }
    rep["checks"] = summary.value("checks", json::array());
    rep["checks_passed"] = passed;
    rep["checks_failed"] = failed;
    text << "  " << passed << " passed, " << failed << " failed\n";

    text << "\n-- metrics --\n";
    for (auto it = summary.value("metrics", json::object()).begin();
         it != summary.value("metrics", json::object()).end(); ++it)
      text << "  " << it.key() << " = " << json_view(it.value()) << "\n";
    rep["metrics"] = summary.value("metrics", json::object());

    if (kind == "solve" && summary.contains("metrics")) {
      const json& m = summary["metrics"];
      text << "\n-- solve table --\n";
      text << "  residual    iterations    contact_fraction\n";
      text << "  " << json_view(m.value("residual", json())) << "    "
           << json_view(m.value("iterations", json())) << "    "
           << json_view(m.value("contact_fraction", json())) << "\n";
    }
  } else {
    text << "summary.json missing or unreadable\n";
    rep["note"] = "summary.json missing or unreadable";
  }

  // Per-point table for analysis runs.
  if (std::find(files.begin(), files.end(), "records.json") != files.end()) {
    std::ifstream is(dir / "records.json");
    json pts;
    try {
      is >> pts;
    } catch (const std::exception&) {
      pts = json::array();
    }
    if (pts.is_array() && !pts.empty()) {
      text << "\n-- points --\n";
      text << "  x0 | kind | stratum | lambda2 | validated\n";
      json table = json::array();
      for (const auto& e : pts) {
        std::string stratum = "-", lambda2 = "-", validated = "-";
        if (e.contains("record")) {
          stratum = e["record"].value("stratum", std::string("-"));
          if (e["record"].contains("lambda2") && e["record"]["lambda2"].is_object())
            lambda2 = json_view(e["record"]["lambda2"].value("value", json()));
          validated = e.value("validated", false) ? "yes" : "no";
        }
        text << "  " << e.value("x0", json::array()).dump() << " | "
             << e.value("kind", std::string("?")) << " | " << stratum << " | " << lambda2
             << " | " << validated << "\n";
        json row;
        row["x0"] = e.value("x0", json::array());
        row["kind"] = e.value("kind", std::string("?"));
        row["stratum"] = stratum;
        row["lambda2"] = lambda2;
        row["validated"] = validated;
        table.push_back(std::move(row));
      }
      rep["points"] = table;
    }
  }

  text << "\n-- artifacts --\n";
  for (const auto& f : files) text << "  " << f << "\n";

  std::vector<std::string> missing;
  if (!kind.empty()) {
    auto it = expected_artifacts().find(kind);
    if (it != expected_artifacts().end())
      for (const auto& want : it->second)
        if (std::find(files.begin(), files.end(), want) == files.end())
          missing.push_back(want);
  }
  rep["missing"] = missing;
  if (!missing.empty()) {
    text << "\n-- missing (expected for kind '" << kind << "') --\n";
    for (const auto& f : missing) text << "  " << f << "\n";
  }

  run_detail::write_text(dir / "report.json", rep.dump(2) + "\n");
  return rep;
}

}  // namespace fblab
