#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <sstream>

#include "fblab/blowup.hpp"

using namespace fblab;

namespace {

Grid box2(double half, std::size_t res) {
  return make_grid(2, {-half, -half}, {2 * half, 2 * half}, {res, res});
}

SolverParams fast_params() {
  SolverParams p;
  p.omega = 1.96;
  return p;
}

Solution solve_with_boundary(const Grid& g,
                             const std::function<double(std::span<const double>)>& fn) {
  ObstacleProblem p;
  p.grid = g;
  p.g = sample_field(g, fn);
  p.params = fast_params();
  return solve_obstacle(p);
}

// Cubic boundary datum (1/2)x2^2 + eps((1/2)x1^2 x2 - x2^3/6). The datum is
// nonnegative at every grid node and satisfies the five-point equation
// exactly (discrete Laplacians are exact on cubics), so the solved field
// coincides with it at the nodes; the fits then see an exact cubic residual.
double p3_datum(std::span<const double> x, double eps) {
  return 0.5 * x[1] * x[1] + eps * (0.5 * x[0] * x[0] * x[1] - x[1] * x[1] * x[1] / 6.0);
}

// Quartic datum (1/2)x2^2 + eps(x1^3 x2 - x1 x2^3); per-variable degrees stay
// below 4, so the five-point stencil is again exact at the nodes.
double p4_datum(std::span<const double> x, double eps) {
  return 0.5 * x[1] * x[1] +
         eps * (x[0] * x[0] * x[0] * x[1] - x[0] * x[1] * x[1] * x[1]);
}

double radial_u(double rho, double a) {
  if (rho <= a) return 0.0;
  return (rho * rho - a * a) / 4 - (a * a / 2) * std::log(rho / a);
}

bool is_top_label(StratumLabel s) {
  return s != StratumLabel::sigma_m && s != StratumLabel::sigma_m_anomalous;
}

FrequencyEstimate freq(double v, double gamma) { return {v, 1e-12, gamma}; }

}  // namespace

TEST_CASE("rescale normalizes and is independent of the radius on homogeneous data") {
  Grid g = box2(1.0, 81);
  ScalarField w = sample_field(g, [](std::span<const double> x) { return x[0] * x[1]; });
  std::vector<double> x0{0.0, 0.0};

  auto w1 = rescale(w, x0, 0.2);
  auto w2 = rescale(w, x0, 0.4);
  std::vector<double> probes{0.3, 0.5};
  CHECK(std::abs(w1(probes) - w2(probes)) < 1e-3);
  std::vector<double> probe2{-0.6, 0.2};
  CHECK(std::abs(w1(probe2) - w2(probe2)) < 1e-3);

  // H(1, rescaled) = 1 by construction.
  auto sph = sphere_rule(2, 64);
  double H1 = sphere_integral(
      [&](std::span<const double> x) {
        double v = w1(x);
        return v * v;
      },
      x0, 1.0, sph);
  CHECK(H1 == Catch::Approx(1.0).epsilon(1e-6));

  ScalarField zero(g);
  CHECK_THROWS_AS(rescale(zero, x0, 0.2), std::domain_error);
  CHECK_THROWS_WITH(rescale(zero, x0, 0.2), Catch::Matchers::ContainsSubstring("H(r, w) = 0"));
  CHECK_THROWS_AS(rescale(w, x0, 1.5), std::invalid_argument);
}

TEST_CASE("fit_p2 recovers quadratic blow-ups") {
  Grid g = box2(1.0, 81);
  std::vector<double> x0{0.0, 0.0};

  SECTION("half-plane profile (1/2)x2^2") {
    ScalarField u = sample_field(g, [](std::span<const double> x) { return 0.5 * x[1] * x[1]; });
    P2Fit f = fit_p2(u, x0);
    CHECK(f.misfit < 1e-10);
    CHECK(std::abs(f.p2.A(0, 0)) < 1e-10);
    CHECK(std::abs(f.p2.A(0, 1)) < 1e-10);
    CHECK(f.p2.A(1, 1) == Catch::Approx(1.0).margin(1e-10));
    CHECK(f.p2.kernel_dim == 1);
  }

  SECTION("radial profile (1/4)|x|^2") {
    ScalarField u = sample_field(g, [](std::span<const double> x) {
      return 0.25 * (x[0] * x[0] + x[1] * x[1]);
    });
    P2Fit f = fit_p2(u, x0);
    CHECK(f.misfit < 1e-10);
    CHECK(f.p2.A(0, 0) == Catch::Approx(0.5).margin(1e-10));
    CHECK(f.p2.A(1, 1) == Catch::Approx(0.5).margin(1e-10));
    CHECK(std::abs(f.p2.A(0, 1)) < 1e-10);
    CHECK(f.p2.kernel_dim == 0);
  }

  SECTION("stable under small perturbations") {
    ScalarField u = sample_field(g, [](std::span<const double> x) {
      return 0.5 * x[1] * x[1] + 1e-8 * std::sin(137 * x[0] + 71 * x[1]);
    });
    P2Fit f = fit_p2(u, x0);
    CHECK(std::abs(f.p2.A(0, 0) - 0.0) < 1e-6);
    CHECK(f.p2.A(1, 1) == Catch::Approx(1.0).margin(1e-6));
  }

  SECTION("rejects non-quadratic data") {
    ScalarField u = sample_field(g, [](std::span<const double> x) {
      double t = std::max(0.0, x[1]);
      return 0.5 * t * t;
    });
    CHECK_THROWS_WITH(fit_p2(u, x0), Catch::Matchers::ContainsSubstring("not singular-quadratic"));
  }

  SECTION("window validation") {
    ScalarField u = sample_field(g, [](std::span<const double> x) { return 0.5 * x[1] * x[1]; });
    FitOptions opt;
    opt.r_fit = 2.5;
    CHECK_THROWS_WITH(fit_p2(u, x0, opt), Catch::Matchers::ContainsSubstring("leaves the box"));
    FitOptions tiny;
    tiny.r_fit = 0.05;
    CHECK_THROWS_WITH(fit_p2(u, x0, tiny),
                      Catch::Matchers::ContainsSubstring("window too small"));
  }
}

TEST_CASE("fit_p3 recovers the cubic correction from a solved field") {
  const double eps = 1e-3;
  Grid g = box2(1.0, 121);
  Solution sol = solve_with_boundary(g, [&](std::span<const double> x) {
    return p3_datum(x, eps);
  });

  // Validity window: the solved field coincides with the datum at the nodes.
  double dev = 0;
  for_each_node(g, [&](std::size_t flat, auto, std::span<const double> x) {
    dev = std::max(dev, std::abs(sol.u.values[flat] - p3_datum(x, eps)));
  });
  REQUIRE(dev < 1e-9);

  std::vector<double> x0{0.0, 0.0};
  FitOptions opt;
  opt.r_fit = 0.5;
  P2Fit p2 = fit_p2(sol.u, x0, opt);
  CHECK(std::abs(p2.p2.A(1, 1) - 1.0) < 1e-6);
  CHECK(p2.p2.kernel_dim == 1);

  SECTION("coefficients, misfit, and the Monneau diagnostic") {
    P3Fit f = fit_p3(sol.u, x0, p2.p2, 3.0, opt);
    REQUIRE(f.p3.a.size() == 2);
    CHECK(std::abs((double)f.p3.a[0] - eps) < 1e-6);
    CHECK(std::abs((double)f.p3.a[1] + eps) < 1e-6);
    CHECK(f.misfit < 1e-6);
    // r^{-6} H(r, u - p2 - p3) is nondecreasing for this datum.
    CHECK(f.monneau_drift < 1e-10);
    // The harmonicity constraint is exact in the rational coefficients.
    Rat sum(0);
    for (const Rat& a : f.p3.a) sum += a;
    CHECK(sum == 0);
  }

  SECTION("frequency gates") {
    CHECK_THROWS_WITH(fit_p3(sol.u, x0, p2.p2, 2.5, opt),
                      Catch::Matchers::ContainsSubstring("not in Sigma^{>=3}"));
    ScalarField radial = sample_field(g, [](std::span<const double> x) {
      return 0.25 * (x[0] * x[0] + x[1] * x[1]);
    });
    P2Fit pr = fit_p2(radial, x0, opt);
    CHECK_THROWS_WITH(fit_p3(sol.u, x0, pr.p2, 3.0, opt),
                      Catch::Matchers::ContainsSubstring("kernel"));
  }

  SECTION("truncated frequency of u - p2 sits at 3") {
    Eigen::MatrixXd A = p2.p2.A;
    ScalarField w2 = residual_field(sol.u, x0, [&](std::span<const double> y) {
      Eigen::Map<const Eigen::Vector2d> ym(y.data());
      return 0.5 * ym.dot(A * ym);
    });
    auto [r_min, r_fit] = detail::fit_window(g, x0, opt);
    FrequencyEstimate l2 = detail::truncated_frequency(w2, x0, r_min, r_fit, opt.gamma2, opt);
    CHECK(l2.value == Catch::Approx(3.0).margin(1e-2));
    CHECK(l2.residual < 1e-2);
  }
}

TEST_CASE("fit_p3 diagonalizes an off-axis cubic in three dimensions") {
  Grid g = make_grid(3, {-1, -1, -1}, {2, 2, 2}, {41, 41, 41});
  const double eps = 1e-2;
  ScalarField u = sample_field(g, [&](std::span<const double> x) {
    return 0.5 * x[2] * x[2] + eps * x[0] * x[1] * x[2];
  });
  std::vector<double> x0{0.0, 0.0, 0.0};
  FitOptions opt;
  opt.r_fit = 0.8;

  P2Fit p2 = fit_p2(u, x0, opt);
  CHECK(p2.p2.kernel_dim == 2);
  CHECK(p2.p2.A(2, 2) == Catch::Approx(1.0).margin(1e-8));

  P3Fit f = fit_p3(u, x0, p2.p2, 3.0, opt);
  REQUIRE(f.p3.a.size() == 3);
  // x1 x2 x3 = (z1^2 - z2^2) x3 / 2 in the 45-degree frame: a = (eps, -eps, 0).
  CHECK(std::abs((double)f.p3.a[0] - eps) < 1e-8);
  CHECK(std::abs((double)f.p3.a[1] + eps) < 1e-8);
  CHECK(std::abs((double)f.p3.a[2]) < 1e-8);
  CHECK(f.misfit < 1e-8);
  const double s = 1.0 / std::numbers::sqrt2;
  CHECK(std::abs(std::abs(f.frame(0, 0)) - s) < 1e-8);
  CHECK(std::abs(std::abs(f.frame(1, 0)) - s) < 1e-8);
  CHECK(std::abs(f.frame(2, 0)) < 1e-8);
}

TEST_CASE("cubic dichotomy separates harmonic cubics from the odd Signorini family") {
  Grid g = box2(1.0, 81);
  std::vector<double> x0{0.0, 0.0};
  FitOptions opt;
  opt.r_fit = 0.5;

  SECTION("harmonic side") {
    ScalarField u = sample_field(g, [](std::span<const double> x) {
      return 0.5 * x[1] * x[1] +
             1e-3 * (0.5 * x[0] * x[0] * x[1] - x[1] * x[1] * x[1] / 6.0);
    });
    P2Fit p2 = fit_p2(u, x0, opt);
    DichotomyReport rep = cubic_dichotomy(u, x0, p2.p2, opt);
    CHECK(rep.harmonic_wins);
    CHECK(rep.harmonic_misfit < 1e-8);
    CHECK(rep.qA_misfit > 0.5);
    CHECK(rep.margin > 0.5);
  }

  SECTION("odd Signorini side") {
    ScalarField u = sample_field(g, [](std::span<const double> x) {
      double q = std::abs(x[1]) * (x[1] * x[1] / 3.0 - x[0] * x[0]);
      return 0.5 * x[1] * x[1] + 1e-3 * q;
    });
    P2Fit p2 = fit_p2(u, x0, opt);
    DichotomyReport rep = cubic_dichotomy(u, x0, p2.p2, opt);
    CHECK_FALSE(rep.harmonic_wins);
    CHECK(rep.qA_misfit < 1e-8);
    CHECK(rep.harmonic_misfit > 0.5);
  }
}

TEST_CASE("fit_p4 recovers the quartic correction and flags degenerate input") {
  std::vector<double> x0{0.0, 0.0};
  Poly P = build_ansatz(make_p2(Eigen::MatrixXd(Eigen::Vector2d(0, 1).asDiagonal())),
                        make_p3(2, {Rat(0), Rat(0)}));
  Eigen::MatrixXd I2 = Eigen::MatrixXd::Identity(2, 2);

  SECTION("pure quadratic data is degenerate") {
    Grid g = box2(1.0, 81);
    ScalarField u = sample_field(g, [](std::span<const double> x) { return 0.5 * x[1] * x[1]; });
    P4Fit f = fit_p4(u, x0, P, I2);
    CHECK(f.degenerate == "degenerate (w == 0)");
    CHECK(f.p4.is_zero());
    CHECK(f.lambda4.value == Catch::Approx(4.5));
  }

  SECTION("solved quartic datum") {
    const double eps = 1e-3;
    Grid g = box2(1.0, 121);
    Solution sol = solve_with_boundary(g, [&](std::span<const double> x) {
      return p4_datum(x, eps);
    });
    double dev = 0;
    for_each_node(g, [&](std::size_t flat, auto, std::span<const double> x) {
      dev = std::max(dev, std::abs(sol.u.values[flat] - p4_datum(x, eps)));
    });
    REQUIRE(dev < 1e-9);

    FitOptions opt;
    opt.r_fit = 0.5;
    P4Fit f = fit_p4(sol.u, x0, P, I2, opt);
    CHECK(f.degenerate.empty());
    CHECK(f.misfit < 1e-6);
    CHECK(f.p4.coeff({3, 1}) == Catch::Approx(eps).margin(1e-5));
    CHECK(f.p4.coeff({1, 3}) == Catch::Approx(-eps).margin(1e-5));
    // The basis is divisible by x2: the fit vanishes on the plane {x2 = 0}.
    for (double t : {0.1, 0.45, 0.8}) {
      std::vector<double> probe{t, 0.0};
      CHECK(std::abs(f.p4.eval(probe)) < 1e-14);
    }
  }
}

TEST_CASE("stratum assignment follows the label chain") {
  auto base = [](int n, const Eigen::MatrixXd& A) {
    SingularPointRecord r;
    r.x0.assign(n, 0.0);
    r.p2 = make_p2(A);
    r.frame = r.p2.frame;
    return r;
  };
  Eigen::MatrixXd half3 = Eigen::MatrixXd::Zero(3, 3);
  half3(0, 0) = half3(1, 1) = 0.5;  // kernel dimension 1 = n - 2 in 3d
  Eigen::MatrixXd top2 = Eigen::Vector2d(0, 1).asDiagonal();

  SECTION("lower strata split on the anomalous gap") {
    SingularPointRecord r = base(3, half3);
    r.lambda2 = freq(2.03, 3);
    r.stratum = assign_stratum(r);
    CHECK(r.stratum == StratumLabel::sigma_m_anomalous);
    validate_record(r);

    r.lambda2 = freq(2.8, 3);
    r.stratum = assign_stratum(r);
    CHECK(r.stratum == StratumLabel::sigma_m);
    validate_record(r);
  }

  SECTION("top stratum splits at frequency 3") {
    SingularPointRecord r = base(2, top2);
    r.lambda2 = freq(2.5, 3);
    r.stratum = assign_stratum(r);
    CHECK(r.stratum == StratumLabel::sigma_top_lt3);
    validate_record(r);

    r.lambda2 = freq(3.0, 3);
    r.stratum = assign_stratum(r);
    CHECK(r.stratum == StratumLabel::sigma_top_ge3);
    validate_record(r);
  }

  SECTION("third-order label needs a nonzero harmonic cubic") {
    SingularPointRecord r = base(2, top2);
    r.lambda2 = freq(3.0, 3);
    r.p3 = make_p3(2, {Rat(1, 100), Rat(-1, 100)});
    r.dichotomy = DichotomyReport{1e-9, 0.8, 1.0, true};
    r.lambda3 = freq(3.6, 4);
    r.stratum = assign_stratum(r);
    CHECK(r.stratum == StratumLabel::sigma_top_3rd);
    validate_record(r);

    r.p3 = make_p3(2, {Rat(0), Rat(0)});
    r.stratum = assign_stratum(r);
    CHECK(r.stratum == StratumLabel::sigma_top_ge3);
  }

  SECTION("fourth-order refinements") {
    SingularPointRecord r = base(2, top2);
    r.lambda2 = freq(3.0, 3);
    r.lambda3 = freq(4.2, 4);
    r.stratum = assign_stratum(r);
    CHECK(r.stratum == StratumLabel::sigma_top_ge4);
    validate_record(r);

    r.lambda3 = freq(4.02, 4);
    DPoly q(2);
    q.add_term({3, 1}, 1e-3);
    q.add_term({1, 3}, -1e-3);
    r.p4 = q;
    r.lambda4 = freq(4.1, 4.5);
    r.stratum = assign_stratum(r);
    CHECK(r.stratum == StratumLabel::sigma_top_4th);
    validate_record(r);

    r.lambda3 = freq(4.4, 4);
    r.lambda4 = freq(4.46, 4.5);
    r.stratum = assign_stratum(r);
    CHECK(r.stratum == StratumLabel::sigma_star_candidate);
    validate_record(r);
  }

  SECTION("validation rejects inconsistent records") {
    SingularPointRecord r = base(2, top2);
    r.lambda2 = freq(1.5, 3);
    CHECK_THROWS_WITH(validate_record(r), Catch::Matchers::ContainsSubstring("lambda2 below 2"));

    SingularPointRecord r2 = base(2, top2);
    r2.lambda2 = freq(3.0, 3);
    r2.lambda3 = freq(3.5, 4);
    r2.stratum = StratumLabel::sigma_top_4th;
    CHECK_THROWS_WITH(validate_record(r2),
                      Catch::Matchers::ContainsSubstring("lambda3 evidence"));

    SingularPointRecord r3 = base(3, half3);
    r3.lambda2 = freq(3.0, 3);
    r3.stratum = StratumLabel::sigma_top_ge3;
    CHECK_THROWS_WITH(validate_record(r3),
                      Catch::Matchers::ContainsSubstring("kernel dimension"));
  }
}

TEST_CASE("classify_point separates regular from singular free-boundary points") {
  SECTION("radial solution: regular point, then ambiguous at a high margin bar") {
    Grid g = box2(1.2, 121);
    Solution sol = solve_with_boundary(g, [](std::span<const double> x) {
      return radial_u(std::hypot(x[0], x[1]), 0.5);
    });
    // Anchor at the computed free-boundary node nearest (0.5, 0).
    std::vector<double> x0{0.5, 0.0};
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : free_boundary(sol)) {
      double d = std::hypot(p[0] - 0.5, p[1]);
      if (d < best) {
        best = d;
        x0 = p;
      }
    }
    INFO("free-boundary anchor (" << x0[0] << ", " << x0[1] << ")");
    FitOptions opt;
    opt.r_fit = 0.25;
    Classification c = classify_point(sol, x0, 0.0, opt);
    CHECK(c.kind == PointKind::regular);
    CHECK(c.halfspace_misfit < c.p2_misfit);
    CHECK(c.margin >= opt.margin_min);
    REQUIRE(c.direction.size() == 2);
    CHECK(c.direction[0] == Catch::Approx(1.0).margin(0.05));
    CHECK(std::abs(c.direction[1]) < 0.05);

    FitOptions strict = opt;
    strict.margin_min = 0.95;
    Classification amb = classify_point(sol, x0, 0.0, strict);
    CHECK(amb.kind == PointKind::ambiguous);
    CHECK_FALSE(amb.record.has_value());

    std::vector<double> interior{0.0, 0.0};
    CHECK_THROWS_WITH(classify_point(sol, interior, 0.0, opt),
                      Catch::Matchers::ContainsSubstring("free boundary"));
  }

  SECTION("half-plane profile: singular with a one-dimensional stratum") {
    Grid g = box2(1.0, 81);
    Solution sol = solve_with_boundary(g, [](std::span<const double> x) {
      return 0.5 * x[1] * x[1];
    });
    std::vector<double> x0{0.0, 0.0};
    Classification c = classify_point(sol, x0);
    REQUIRE(c.kind == PointKind::singular);
    REQUIRE(c.record.has_value());
    const SingularPointRecord& r = *c.record;
    CHECK(r.p2.kernel_dim == 1);
    CHECK(r.p2.A(1, 1) == Catch::Approx(1.0).margin(1e-8));
    CHECK(r.degenerate == "degenerate (w == 0)");
    CHECK(r.lambda2->value == Catch::Approx(3.0));
    CHECK(is_top_label(r.stratum));
    validate_record(*c.record);
  }

  SECTION("radial quadratic: singular with a zero-dimensional stratum") {
    Grid g = box2(1.0, 81);
    Solution sol = solve_with_boundary(g, [](std::span<const double> x) {
      return 0.25 * (x[0] * x[0] + x[1] * x[1]);
    });
    std::vector<double> x0{0.0, 0.0};
    Classification c = classify_point(sol, x0);
    REQUIRE(c.kind == PointKind::singular);
    REQUIRE(c.record.has_value());
    CHECK(c.record->p2.kernel_dim == 0);
    CHECK(c.record->stratum == StratumLabel::sigma_m);
    validate_record(*c.record);
  }
}

TEST_CASE("analyzed records are stable under grid refinement") {
  const double eps = 1e-3;
  std::vector<double> x0{0.0, 0.0};
  FitOptions opt;
  opt.r_fit = 0.5;

  std::vector<SingularPointRecord> recs;
  for (std::size_t res : {81, 161}) {
    Grid g = box2(1.0, res);
    Solution sol = solve_with_boundary(g, [&](std::span<const double> x) {
      return p3_datum(x, eps);
    });
    recs.push_back(analyze_singular_point(sol.u, x0, 0.0, opt));

    // lambda2 >= 3 collapse: contact degenerates to the kernel line, so the
    // transverse thickness vanishes to grid precision and the area fraction
    // is a single node row, bounded by h / r.
    double h = g.spacing(0);
    std::vector<double> e2{0.0, 1.0};
    for (double r : {0.2, 0.4}) {
      CHECK(contact_thickness(sol, x0, e2, r) <= h + r * r);
      CHECK(contact_fraction(sol, x0, r) <= 1.5 * h / r);
    }
  }
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].stratum == recs[1].stratum);
  CHECK(is_top_label(recs[0].stratum));
  for (const auto& r : recs) {
    CHECK(r.p2.kernel_dim == 1);
    CHECK(r.lambda2->value == Catch::Approx(3.0).margin(1e-2));
    REQUIRE(r.p3.has_value());
    CHECK(std::abs((double)r.p3->a[0] - eps) < 1e-5);
    REQUIRE(r.dichotomy.has_value());
    CHECK(r.dichotomy->harmonic_wins);
    REQUIRE(r.ansatz.has_value());
    validate_record(r);
  }
}

TEST_CASE("two-bump pinch: classification, cleaning, and contact geometry") {
  const double b = 0.7, c = 0.008;
  Grid g = make_grid(2, {-1.4, -0.7}, {2.8, 1.4}, {113, 57});
  double h = g.spacing(0);
  PinchResult pinch = find_pinch(g, b, c, -0.03, 0.0, fast_params(), 25);
  INFO("pinch offset C0 = " << pinch.C0 << ", x0 = (" << pinch.x0[0] << ", " << pinch.x0[1]
                            << ")");
  REQUIRE(std::hypot(pinch.x0[0], pinch.x0[1]) <= 2 * h);

  FitOptions opt;
  opt.r_fit = 0.22;
  Classification cls = classify_point(pinch.base, pinch.x0, 0.0, opt);
  REQUIRE(cls.kind == PointKind::singular);
  REQUIRE(cls.record.has_value());
  const SingularPointRecord& rec = *cls.record;
  REQUIRE(rec.lambda2.has_value());
  INFO("p2 = " << rec.p2.A(0, 0) << "," << rec.p2.A(0, 1) << "," << rec.p2.A(1, 1)
               << " lambda2 = " << rec.lambda2->value << " stratum = " << to_string(rec.stratum));
  CHECK(rec.p2.kernel_dim == 1);  // m = n - 1
  CHECK(rec.p2.A(1, 1) > 0.6);
  CHECK(std::abs(rec.p2.A(0, 1)) < 0.2);
  CHECK(is_top_label(rec.stratum));
  CHECK(rec.lambda2->value > 2.0);
  validate_record(rec);

  {
    // Rescaled residuals stay bounded across dyadic radii.
    Eigen::MatrixXd A = rec.p2.A;
    std::vector<double> x0 = rec.x0;
    ScalarField w2 = residual_field(pinch.base.u, x0, [&](std::span<const double> y) {
      Eigen::Map<const Eigen::Vector2d> ym(y.data());
      return 0.5 * ym.dot(A * ym);
    });
    auto sph = sphere_rule(2, 32);
    for (double r : {8 * h, 16 * h}) {
      auto wr = rescale(w2, x0, r);
      double sup = 0;
      for (const auto& node : sph.nodes) sup = std::max(sup, std::abs(wr(node)));
      INFO("r = " << r << " sup = " << sup);
      CHECK(sup < 100.0);
    }
  }

  {
    // Cleaning experiment along the vertical family u_t.
    std::vector<double> ts{0,    3e-5, 1e-4, 3e-4, 1e-3,
                           3e-3, 1e-2, 3e-2, 1e-1};
    SolutionFamily fam = solve_family(
        g,
        [&](std::span<const double> x, double t) {
          return two_bump_value(x, b, c, pinch.C0) + t;
        },
        ts, fast_params());

    // Lifting the data shrinks the contact set: masks are nested in t.
    for (std::size_t k = 0; k + 1 < fam.solutions.size(); ++k) {
      const auto& lo = fam.solutions[k].contact_mask;
      const auto& hi = fam.solutions[k + 1].contact_mask;
      std::size_t leaks = 0;
      for (std::size_t i = 0; i < lo.size(); ++i)
        if (hi[i] && !lo[i]) ++leaks;
      CHECK(leaks == 0);
    }

    std::vector<double> radii{0.08, 0.12, 0.18, 0.27, 0.4};
    CleaningReport rep = cleaning_experiment(fam, rec, radii);
    std::ostringstream os;
    for (double t : rep.t_clear) os << t << " ";
    INFO("t_clear = " << os.str() << " s = " << rep.exponent_s
                      << " c = " << rep.growth_constant);

    for (std::size_t i = 0; i + 1 < radii.size(); ++i)
      CHECK(rep.t_clear[i] <= rep.t_clear[i + 1]);
    CHECK(rep.usable >= 3);
    CHECK(rep.exponent_s >= 1.0);
    CHECK(rep.exponent_s <= 4.0);
    CHECK(rep.growth_constant > 0.0);
    for (double bmin : rep.barrier_min) CHECK(bmin > 0.0);

    // A family whose t-range is too small never clears the larger balls.
    SolutionFamily small;
    small.t_values.assign(fam.t_values.begin(), fam.t_values.begin() + 3);
    small.solutions.assign(fam.solutions.begin(), fam.solutions.begin() + 3);
    CleaningReport tiny = cleaning_experiment(small, rec, {0.27, 0.4});
    CHECK(std::isinf(tiny.t_clear.back()));

    nlohmann::json j = tiny.to_json();
    CHECK(j.at("t_clear").back().is_null());
    CHECK(rep.to_json().at("growth_constant").get<double>() > 0.0);

    CHECK_THROWS_WITH(cleaning_experiment(fam, rec, {0.4, 0.2}),
                      Catch::Matchers::ContainsSubstring("strictly increasing"));
  }

  {
    // Contact geometry around the pinch.
    std::vector<double> n_dir{rec.p2.frame(0, 1), rec.p2.frame(1, 1)};
    std::vector<double> rs{0.1, 0.2, 0.4};
    std::vector<double> thick, frac;
    for (double r : rs) {
      thick.push_back(contact_thickness(pinch.base, rec.x0, n_dir, r));
      frac.push_back(contact_fraction(pinch.base, rec.x0, r));
    }
    std::ostringstream os;
    for (std::size_t i = 0; i < rs.size(); ++i)
      os << "r=" << rs[i] << " thick=" << thick[i] << " frac=" << frac[i] << "  ";
    INFO(os.str());
    // The contact set hugs the kernel line: transverse thickness obeys the
    // collapse bound r^{lambda - 1} up to one grid spacing, and the area
    // fraction is controlled by the slab that thickness carves out of B_r.
    double lam = rec.lambda2->value;
    for (std::size_t i = 0; i < rs.size(); ++i) {
      CHECK(thick[i] <= h + std::pow(rs[i], lam - 1.0));
      double slab = 1.2 * (2 * (thick[i] + h)) * (2 * (rs[i] + h)) /
                    (std::numbers::pi * rs[i] * rs[i]);
      CHECK(frac[i] <= std::min(1.0, slab));
    }
    CHECK(frac[0] < 0.6);
  }
}

TEST_CASE("records serialize to JSON and CSV") {
  Grid g = box2(1.0, 81);
  Solution sol = solve_with_boundary(g, [](std::span<const double> x) {
    return 0.5 * x[1] * x[1];
  });
  std::vector<double> x0{0.0, 0.0};
  SingularPointRecord rec = analyze_singular_point(sol.u, x0, 0.25);

  nlohmann::json j = rec.to_json();
  CHECK(j.at("m").get<int>() == 1);
  CHECK(j.at("t").get<double>() == 0.25);
  CHECK(j.at("lambda2").at("value").get<double>() == Catch::Approx(3.0));
  CHECK(j.at("stratum").is_string());
  CHECK(j.at("p2").at("A").size() == 2);

  std::ostringstream os;
  std::vector<SingularPointRecord> recs{rec};
  records_to_csv(os, recs);
  std::string csv = os.str();
  CHECK(csv.rfind("x0_0,x0_1,t,m,lambda2,lambda3,lambda4,stratum\n", 0) == 0);
  CHECK(csv.find("Sigma") != std::string::npos);
}
