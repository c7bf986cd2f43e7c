#pragma once

// Obstacle-problem machinery on tensor grids:
//   - projected SOR for the linear complementarity discretization
//       min(-Delta_h u + 1, u) = 0   (interior),   u = g   (box boundary),
//     with an optional interior region K where u is pinned to a constant,
//   - one-parameter monotone families solved with warm starts,
//   - the quasi-static Hele-Shaw flow: u = t on K, zero outer data, realized
//     as a family of obstacle problems rather than a moving-boundary stepper,
//   - free-boundary extraction from the contact indicator (marching squares
//     in the plane; edge-crossing vertex soup in one and three dimensions).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fblab/grid.hpp"

namespace fblab {

struct SolverParams {
  double tol = 0;                // <= 0: auto 1e-10 * min spacing^2
  int max_iter = 200000;
  double omega = 1.7;            // relaxation, must lie in (1, 2)
  double contact_threshold = 0;  // <= 0: auto 1e-12 * max(1, max u)
};

/// min(-Delta_h u + 1, u) = 0 in the interior, u = g on the box boundary,
/// u pinned to K_value on the optional node set K (kept off the boundary).
/// Negative boundary data is admissible: the constraint clamps the trace at
/// zero too, so u >= 0 holds at every node of the result.
struct ObstacleProblem {
  Grid grid;
  ScalarField g;                      // only boundary nodes are read
  std::vector<std::uint8_t> K_mask;   // empty = no constraint region
  double K_value = 0;
  SolverParams params;
};

struct Solution {
  ScalarField u;
  std::vector<std::uint8_t> contact_mask;  // u <= contact threshold
  double residual = 0;                     // last max nodal update
  int iterations = 0;
};

struct ConvergenceError : std::runtime_error {
  double residual;
  ConvergenceError(const std::string& msg, double res)
      : std::runtime_error(msg), residual(res) {}
};

inline bool is_boundary_index(const Grid& g, std::span<const std::size_t> idx) {
  for (int d = 0; d < g.dim(); ++d)
    if (idx[d] == 0 || idx[d] + 1 == g.resolution()[d]) return true;
  return false;
}

inline void validate_problem(const ObstacleProblem& p) {
  if (!(p.params.omega > 1.0 && p.params.omega < 2.0))
    throw std::invalid_argument("solver: relaxation omega must lie in (1, 2)");
  if (p.params.max_iter < 1)
    throw std::invalid_argument("solver: max_iter must be positive");
  if (!(p.g.grid == p.grid) || p.g.values.size() != p.grid.num_nodes())
    throw std::invalid_argument("solver: boundary data grid mismatch");
  if (!p.K_mask.empty() && p.K_mask.size() != p.grid.num_nodes())
    throw std::invalid_argument("solver: K mask size mismatch");
  if (!std::isfinite(p.K_value))
    throw std::invalid_argument("solver: K value must be finite");
  for_each_node(p.grid, [&](std::size_t f, std::span<const std::size_t> idx, auto) {
    bool bdry = is_boundary_index(p.grid, idx);
    if (bdry && !std::isfinite(p.g.values[f]))
      throw std::invalid_argument("solver: boundary data must be finite");
    if (bdry && !p.K_mask.empty() && p.K_mask[f])
      throw std::invalid_argument(
          "solver: constraint region K must be disjoint from the domain boundary");
  });
}

/// Boundary data from a coordinate rule; interior values are unused.
inline ObstacleProblem make_problem(
    Grid grid, const std::function<double(std::span<const double>)>& g_rule,
    SolverParams params = {}) {
  ObstacleProblem p;
  p.grid = grid;
  p.g = ScalarField(grid);
  for_each_node(grid, [&](std::size_t f, std::span<const std::size_t> idx,
                          std::span<const double> x) {
    if (is_boundary_index(grid, idx)) p.g.values[f] = g_rule(x);
  });
  p.params = params;
  return p;
}

inline double auto_tol(const Grid& g, const SolverParams& params) {
  if (params.tol > 0) return params.tol;
  double hmin = g.spacing(0);
  for (int d = 1; d < g.dim(); ++d) hmin = std::min(hmin, g.spacing(d));
  return 1e-10 * hmin * hmin;
}

/// Complementarity residual the solver guarantees at a converged state:
/// |Delta_h u - 1| at positive nodes and (Delta_h u - 1)_+ at contact nodes
/// both stay below 4 * tol * sum_d 2/h_d^2 (one Gauss-Seidel solve is off by
/// at most the final update, and mid-sweep neighbor drift adds at most the
/// same amount again; the factor 4 is margin).
inline double complementarity_bound(const Grid& g, const SolverParams& params) {
  double denom = 0;
  for (int d = 0; d < g.dim(); ++d) denom += 2.0 / (g.spacing(d) * g.spacing(d));
  return 4.0 * auto_tol(g, params) * denom;
}

inline Solution solve_obstacle(const ObstacleProblem& p,
                               const ScalarField* init = nullptr) {
  validate_problem(p);
  const Grid& g = p.grid;
  int n = g.dim();
  double tol = auto_tol(g, p.params);
  double omega = p.params.omega;

  Solution sol;
  if (init) {
    if (!(init->grid == g))
      throw std::invalid_argument("solver: warm start grid mismatch");
    sol.u = *init;
    for (double& v : sol.u.values) v = std::max(v, 0.0);
  } else {
    sol.u = ScalarField(g);
  }
  std::vector<double>& u = sol.u.values;

  // Fixed nodes: boundary carries max(g, 0), K carries K_value; everything
  // else relaxes. Strides give the +-1 neighbor offsets per axis.
  std::size_t stride[3] = {0, 0, 0};
  {
    std::size_t s = 1;
    for (int d = n - 1; d >= 0; --d) {
      stride[d] = s;
      s *= g.resolution()[d];
    }
  }
  double inv_h2[3];
  double denom = 0;
  for (int d = 0; d < n; ++d) {
    inv_h2[d] = 1.0 / (g.spacing(d) * g.spacing(d));
    denom += 2.0 * inv_h2[d];
  }

  std::vector<std::size_t> movable;
  movable.reserve(g.num_nodes());
  for_each_node(g, [&](std::size_t f, std::span<const std::size_t> idx, auto) {
    if (is_boundary_index(g, idx)) {
      u[f] = std::max(p.g.values[f], 0.0);
    } else if (!p.K_mask.empty() && p.K_mask[f]) {
      u[f] = p.K_value;
    } else {
      movable.push_back(f);
    }
  });

  double max_update = std::numeric_limits<double>::infinity();
  bool converged = false;
  int it = 0;
  for (; it < p.params.max_iter; ++it) {
    max_update = 0;
    for (std::size_t f : movable) {
      double nb = 0;
      for (int d = 0; d < n; ++d)
        nb += (u[f - stride[d]] + u[f + stride[d]]) * inv_h2[d];
      double ustar = (nb - 1.0) / denom;
      double unew = std::max(0.0, u[f] + omega * (ustar - u[f]));
      max_update = std::max(max_update, std::abs(unew - u[f]));
      u[f] = unew;
    }
    if (max_update < tol) {
      converged = true;
      ++it;
      break;
    }
  }
  sol.residual = max_update;
  sol.iterations = it;
  if (!converged) {
    std::ostringstream os;
    os << "PSOR did not converge within " << p.params.max_iter
       << " iterations; last max update = " << max_update << " (tol " << tol << ")";
    throw ConvergenceError(os.str(), max_update);
  }

  double umax = 0;
  for (double v : u) umax = std::max(umax, v);
  double thr = p.params.contact_threshold > 0 ? p.params.contact_threshold
                                              : 1e-12 * std::max(1.0, umax);
  sol.contact_mask.resize(u.size());
  for (std::size_t f = 0; f < u.size(); ++f) sol.contact_mask[f] = u[f] <= thr;
  return sol;
}

struct ComplementarityReport {
  double max_positive_residual = 0;  // max |Delta_h u - 1| where u > threshold
  double max_contact_excess = 0;     // max (Delta_h u - 1)_+ where u = 0
};

inline ComplementarityReport complementarity_report(const Solution& s,
                                                    const ObstacleProblem& p) {
  const Grid& g = p.grid;
  int n = g.dim();
  std::size_t stride[3] = {0, 0, 0};
  {
    std::size_t sz = 1;
    for (int d = n - 1; d >= 0; --d) {
      stride[d] = sz;
      sz *= g.resolution()[d];
    }
  }
  ComplementarityReport rep;
  for_each_node(g, [&](std::size_t f, std::span<const std::size_t> idx, auto) {
    if (is_boundary_index(g, idx)) return;
    if (!p.K_mask.empty() && p.K_mask[f]) return;
    double lap = 0;
    for (int d = 0; d < n; ++d) {
      double h2 = g.spacing(d) * g.spacing(d);
      lap += (s.u.values[f - stride[d]] - 2 * s.u.values[f] + s.u.values[f + stride[d]]) / h2;
    }
    if (s.contact_mask[f])
      rep.max_contact_excess = std::max(rep.max_contact_excess, lap - 1.0);
    else
      rep.max_positive_residual =
          std::max(rep.max_positive_residual, std::abs(lap - 1.0));
  });
  return rep;
}

// ---------------------------------------------------------------------------
// One-parameter families.

enum class FamilyProvenance { boundary_rule, hele_shaw };

inline std::string to_string(FamilyProvenance p) {
  return p == FamilyProvenance::boundary_rule ? "boundary-rule" : "hele-shaw";
}

struct SolutionFamily {
  std::vector<double> t_values;
  std::vector<Solution> solutions;
  FamilyProvenance provenance = FamilyProvenance::boundary_rule;
};

namespace detail {

inline void require_increasing(const std::vector<double>& t) {
  if (t.empty()) throw std::invalid_argument("family: t_values must be nonempty");
  for (std::size_t i = 0; i + 1 < t.size(); ++i)
    if (!(t[i] < t[i + 1]))
      throw std::invalid_argument("family: t_values must be strictly increasing");
}

inline void enforce_family_monotone(const Grid& g, const SolutionFamily& fam) {
  for (std::size_t k = 0; k + 1 < fam.solutions.size(); ++k) {
    const auto& lo = fam.solutions[k].u.values;
    const auto& hi = fam.solutions[k + 1].u.values;
    for (std::size_t f = 0; f < lo.size(); ++f) {
      if (lo[f] > hi[f] + 1e-10) {
        auto idx = g.multi_index(f);
        std::ostringstream os;
        os << "family monotonicity violated at node (";
        for (std::size_t d = 0; d < idx.size(); ++d)
          os << (d ? "," : "") << idx[d];
        os << ") between t = " << fam.t_values[k] << " and t = "
           << fam.t_values[k + 1] << ": u = " << lo[f] << " > " << hi[f];
        throw std::runtime_error(os.str());
      }
    }
  }
}

}  // namespace detail

/// Solve for each t in increasing order, warm-starting from the previous
/// solution, and enforce pointwise monotonicity of the family afterwards.
inline SolutionFamily solve_family(
    const Grid& grid,
    const std::function<double(std::span<const double>, double)>& g_rule,
    std::vector<double> t_values, SolverParams params = {}) {
  detail::require_increasing(t_values);
  SolutionFamily fam;
  fam.provenance = FamilyProvenance::boundary_rule;
  fam.t_values = std::move(t_values);
  for (double t : fam.t_values) {
    auto prob = make_problem(
        grid, [&](std::span<const double> x) { return g_rule(x, t); }, params);
    const ScalarField* warm =
        fam.solutions.empty() ? nullptr : &fam.solutions.back().u;
    fam.solutions.push_back(solve_obstacle(prob, warm));
  }
  detail::enforce_family_monotone(grid, fam);
  return fam;
}

/// Quasi-static Hele-Shaw flow: u = t on K, u = 0 on the outer boundary. The
/// box must be large enough that the positivity set never touches the outer
/// boundary ring; otherwise the run aborts with instructions to enlarge it.
inline SolutionFamily hele_shaw_evolve(const std::vector<std::uint8_t>& K_mask,
                                       const Grid& grid, std::vector<double> t_values,
                                       SolverParams params = {}) {
  detail::require_increasing(t_values);
  if (t_values.front() < 0)
    throw std::invalid_argument("hele-shaw: t_values must be nonnegative");
  if (K_mask.size() != grid.num_nodes())
    throw std::invalid_argument("hele-shaw: K mask size mismatch");
  bool any = false;
  for (auto m : K_mask) any = any || m;
  if (!any) throw std::invalid_argument("hele-shaw: K must be nonempty");

  SolutionFamily fam;
  fam.provenance = FamilyProvenance::hele_shaw;
  fam.t_values = std::move(t_values);
  for (double t : fam.t_values) {
    ObstacleProblem prob;
    prob.grid = grid;
    prob.g = ScalarField(grid);  // zero outer data
    prob.K_mask = K_mask;
    prob.K_value = t;
    prob.params = params;
    const ScalarField* warm =
        fam.solutions.empty() ? nullptr : &fam.solutions.back().u;
    Solution sol = solve_obstacle(prob, warm);

    // The ring of interior nodes adjacent to the boundary must stay inactive.
    for_each_node(grid, [&](std::size_t f, std::span<const std::size_t> idx, auto) {
      if (is_boundary_index(grid, idx)) return;
      bool ring = false;
      for (int d = 0; d < grid.dim(); ++d)
        ring = ring || idx[d] == 1 || idx[d] + 2 == grid.resolution()[d];
      if (ring && !sol.contact_mask[f]) {
        std::ostringstream os;
        os << "hele-shaw: positivity set reached the outer boundary at t = " << t
           << "; enlarge the domain box";
        throw std::runtime_error(os.str());
      }
    });
    fam.solutions.push_back(std::move(sol));
  }
  detail::enforce_family_monotone(grid, fam);
  return fam;
}

// ---------------------------------------------------------------------------
// Free-boundary extraction and contact-set topology.

/// Discrete interface of the contact region at indicator level 1/2.
/// n=2: marching squares; the returned points form a segment soup (each
/// consecutive pair is one segment). n=1 and n=3: midpoints of grid edges
/// whose endpoints disagree (vertex soup; facets are not reconstructed).
/// Empty when the contact set is empty or fills the whole box.
inline std::vector<std::vector<double>> free_boundary(const Solution& sol) {
  const Grid& g = sol.u.grid;
  const auto& mask = sol.contact_mask;
  std::vector<std::vector<double>> pts;

  if (g.dim() == 2) {
    std::size_t n0 = g.resolution()[0], n1 = g.resolution()[1];
    auto at = [&](std::size_t i, std::size_t j) -> int {
      std::size_t idx[2] = {i, j};
      return mask[g.flat_index(std::span<const std::size_t>(idx, 2))] ? 1 : 0;
    };
    for (std::size_t i = 0; i + 1 < n0; ++i)
      for (std::size_t j = 0; j + 1 < n1; ++j) {
        int c = at(i, j) | (at(i + 1, j) << 1) | (at(i + 1, j + 1) << 2) |
                (at(i, j + 1) << 3);
        if (c == 0 || c == 15) continue;
        double x0 = g.node_coord(0, i), x1 = g.node_coord(0, i + 1);
        double y0 = g.node_coord(1, j), y1 = g.node_coord(1, j + 1);
        double xm = 0.5 * (x0 + x1), ym = 0.5 * (y0 + y1);
        std::vector<double> e0{xm, y0}, e1{x1, ym}, e2{xm, y1}, e3{x0, ym};
        auto seg = [&](const std::vector<double>& a, const std::vector<double>& b) {
          pts.push_back(a);
          pts.push_back(b);
        };
        switch (c) {
          case 1: case 14: seg(e3, e0); break;
          case 2: case 13: seg(e0, e1); break;
          case 3: case 12: seg(e3, e1); break;
          case 4: case 11: seg(e1, e2); break;
          case 6: case 9:  seg(e0, e2); break;
          case 7: case 8:  seg(e3, e2); break;
          case 5:  seg(e3, e0); seg(e1, e2); break;
          case 10: seg(e0, e1); seg(e2, e3); break;
        }
      }
    return pts;
  }

  // n = 1 or 3: emit the midpoint of every edge with disagreeing endpoints.
  for_each_node(g, [&](std::size_t, std::span<const std::size_t> idx,
                       std::span<const double> x) {
    for (int d = 0; d < g.dim(); ++d) {
      if (idx[d] + 1 >= g.resolution()[d]) continue;
      std::vector<std::size_t> nb(idx.begin(), idx.end());
      nb[d] += 1;
      if (mask[g.flat_index(idx)] != mask[g.flat_index(nb)]) {
        std::vector<double> p(x.begin(), x.end());
        p[d] += 0.5 * g.spacing(d);
        pts.push_back(std::move(p));
      }
    }
  });
  return pts;
}

/// Node mask of the closed disk/ball around a center.
inline std::vector<std::uint8_t> disk_mask(const Grid& g, std::span<const double> center,
                                           double radius) {
  std::vector<std::uint8_t> mask(g.num_nodes(), 0);
  for_each_node(g, [&](std::size_t f, auto, std::span<const double> x) {
    double r2 = 0;
    for (int d = 0; d < g.dim(); ++d) r2 += (x[d] - center[d]) * (x[d] - center[d]);
    mask[f] = r2 <= radius * radius;
  });
  return mask;
}

/// Number of face-connected components of the marked node set.
inline int count_components(const Grid& g, const std::vector<std::uint8_t>& mask) {
  if (mask.size() != g.num_nodes())
    throw std::invalid_argument("count_components: mask size mismatch");
  std::vector<std::uint8_t> seen(mask.size(), 0);
  std::size_t stride[3] = {0, 0, 0};
  {
    std::size_t s = 1;
    for (int d = g.dim() - 1; d >= 0; --d) {
      stride[d] = s;
      s *= g.resolution()[d];
    }
  }
  int comps = 0;
  std::vector<std::size_t> stack;
  for (std::size_t f0 = 0; f0 < mask.size(); ++f0) {
    if (!mask[f0] || seen[f0]) continue;
    ++comps;
    stack.assign(1, f0);
    seen[f0] = 1;
    while (!stack.empty()) {
      std::size_t f = stack.back();
      stack.pop_back();
      auto idx = g.multi_index(f);
      for (int d = 0; d < g.dim(); ++d) {
        if (idx[d] > 0) {
          std::size_t nb = f - stride[d];
          if (mask[nb] && !seen[nb]) { seen[nb] = 1; stack.push_back(nb); }
        }
        if (idx[d] + 1 < g.resolution()[d]) {
          std::size_t nb = f + stride[d];
          if (mask[nb] && !seen[nb]) { seen[nb] = 1; stack.push_back(nb); }
        }
      }
    }
  }
  return comps;
}

inline std::vector<std::uint8_t> positivity_mask(const Solution& sol) {
  std::vector<std::uint8_t> pos(sol.contact_mask.size());
  for (std::size_t f = 0; f < pos.size(); ++f) pos[f] = !sol.contact_mask[f];
  return pos;
}

/// JSON sidecar accompanying a binary field dump of the solution.
inline nlohmann::json solution_sidecar(const Solution& s,
                                       std::optional<double> t = std::nullopt) {
  nlohmann::json j{{"residual", s.residual}, {"iterations", s.iterations}};
  if (t) j["t"] = *t;
  return j;
}

}  // namespace fblab
