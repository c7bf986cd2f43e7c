#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>
#include <sstream>

#include "fblab/field_io.hpp"
#include "fblab/grid.hpp"
#include "fblab/moments.hpp"
#include "fblab/quadrature.hpp"

using namespace fblab;
using std::numbers::pi;

TEST_CASE("make_grid spacing and node enumeration") {
  Grid g2 = make_grid(2, {-1, -1}, {2, 2}, {201, 201});
  CHECK(g2.spacing(0) == Catch::Approx(0.01));
  CHECK(g2.spacing(1) == Catch::Approx(0.01));
  CHECK(g2.num_nodes() == 201 * 201);

  Grid g1 = make_grid(1, {0}, {1}, {3});
  CHECK(g1.node_coord(0, 0) == 0.0);
  CHECK(g1.node_coord(0, 1) == 0.5);
  CHECK(g1.node_coord(0, 2) == 1.0);

  Grid g3 = make_grid(3, {-1, -1, -1}, {2, 2, 2}, {65, 65, 65});
  CHECK(g3.num_nodes() == 65ull * 65 * 65);
  CHECK(g3.spacing(2) == Catch::Approx(0.03125));

  // Last axis fastest.
  std::vector<std::size_t> idx{0, 0, 1};
  CHECK(g3.flat_index(idx) == 1);
  idx = {0, 1, 0};
  CHECK(g3.flat_index(idx) == 65);
  idx = {2, 3, 4};
  CHECK(g3.multi_index(g3.flat_index(idx)) == idx);

  CHECK_THROWS_AS(make_grid(2, {0, 0}, {1, 0}, {5, 5}), std::invalid_argument);
  CHECK_THROWS_AS(make_grid(2, {0, 0}, {1, 1}, {5, 2}), std::invalid_argument);
  CHECK_THROWS_AS(make_grid(4, {0, 0, 0, 0}, {1, 1, 1, 1}, {5, 5, 5, 5}),
                  std::invalid_argument);
}

TEST_CASE("interpolation is multilinear-exact and node-exact") {
  Grid g = make_grid(2, {-1, -1}, {2, 2}, {17, 17});
  ScalarField lin = sample_field(g, [](std::span<const double> x) { return x[0]; });
  std::vector<double> q{0.3, 0.7};
  CHECK(interpolate(lin, q) == Catch::Approx(0.3).margin(1e-15));

  ScalarField prod = sample_field(g, [](std::span<const double> x) { return x[0] * x[1]; });
  std::vector<std::size_t> idx{5, 11};
  auto node = g.node(idx);
  CHECK(interpolate(prod, node) == prod.at(idx));
}

TEST_CASE("interpolation error of a parabola at a cell midpoint") {
  // Linear interpolation of x^2 between nodes a and a+h evaluated at the
  // midpoint overshoots by exactly h^2/4.
  Grid g = make_grid(1, {0}, {1}, {11});
  double h = g.spacing(0);
  ScalarField u = sample_field(g, [](std::span<const double> x) { return x[0] * x[0]; });
  for (int c = 0; c < 10; ++c) {
    double mid = g.node_coord(0, c) + h / 2;
    std::vector<double> q{mid};
    double err = std::abs(interpolate(u, q) - mid * mid);
    CHECK(err <= h * h / 4 + 1e-14);
  }
}

TEST_CASE("out-of-box interpolation reports the offending coordinate") {
  Grid g = make_grid(2, {-1, -1}, {2, 2}, {5, 5});
  ScalarField u(g);
  std::vector<double> q{0.0, 1.5};
  try {
    interpolate(u, q);
    FAIL("expected domain_error");
  } catch (const std::domain_error& e) {
    CHECK(std::string(e.what()).find("coordinate 2") != std::string::npos);
    CHECK(std::string(e.what()).find("1.5") != std::string::npos);
  }
}

TEST_CASE("interpolation preserves pointwise ordering of fields") {
  Grid g = make_grid(2, {0, 0}, {1, 1}, {9, 9});
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> val(-1, 1), bump(0, 1), pt(0, 1);
  ScalarField lo(g), hi(g);
  for (std::size_t i = 0; i < lo.values.size(); ++i) {
    lo.values[i] = val(rng);
    hi.values[i] = lo.values[i] + bump(rng);
  }
  for (int t = 0; t < 200; ++t) {
    std::vector<double> q{pt(rng), pt(rng)};
    CHECK(interpolate(lo, q) <= interpolate(hi, q) + 1e-15);
  }
}

TEST_CASE("sphere and ball quadrature hand values") {
  auto one = [](std::span<const double>) { return 1.0; };
  std::vector<double> c2{0, 0}, c3{0, 0, 0};

  auto s2 = sphere_rule(2, 8);
  CHECK(sphere_integral(one, c2, 1.0, s2) == Catch::Approx(2 * pi));
  auto xn2 = [](std::span<const double> x) { return x[1] * x[1]; };
  CHECK(sphere_integral(xn2, c2, 1.0, s2) == Catch::Approx(pi));

  auto s3 = sphere_rule(3, 8);
  auto xn4 = [](std::span<const double> x) { return std::pow(x[2], 4); };
  CHECK(sphere_integral(xn4, c3, 1.0, s3) == Catch::Approx(4 * pi / 5));

  auto b2 = ball_rule(2, 8);
  CHECK(ball_integral(one, c2, 1.0, b2) == Catch::Approx(pi));
  auto r2 = [](std::span<const double> x) { return x[0] * x[0] + x[1] * x[1]; };
  CHECK(ball_integral(r2, c2, 1.0, b2) == Catch::Approx(pi / 2));

  auto b3 = ball_rule(3, 8);
  auto xn2_3 = [](std::span<const double> x) { return x[2] * x[2]; };
  CHECK(ball_integral(xn2_3, c3, 1.0, b3) == Catch::Approx(4 * pi / 15));
}

TEST_CASE("quadrature is exact against moment tables through degree 8") {
  for (int n = 2; n <= 3; ++n) {
    auto srule = sphere_rule(n, 8);
    auto brule = ball_rule(n, 8);
    std::vector<double> c(n, 0.0);
    std::vector<unsigned> e(n, 0);
    // Enumerate all multi-indices of total degree <= 8.
    std::function<void(int, unsigned)> rec = [&](int d, unsigned left) {
      if (d == n) {
        Poly mono = Poly::monomial(n, e, Rat(1));
        auto f = [&](std::span<const double> x) { return mono.eval(x); };
        double sref = to_double(sphere_moment_unit(e, n)) * sphere_area(n);
        double bref = to_double(ball_moment_unit(e, n)) * sphere_area(n);
        double sq = sphere_integral(f, c, 1.0, srule);
        double bq = ball_integral(f, c, 1.0, brule);
        CAPTURE(n, e);
        CHECK(std::abs(sq - sref) <= 1e-12 * std::max(1.0, std::abs(sref)));
        CHECK(std::abs(bq - bref) <= 1e-12 * std::max(1.0, std::abs(bref)));
        return;
      }
      for (unsigned k = 0; k <= left; ++k) {
        e[d] = k;
        rec(d + 1, left - k);
      }
      e[d] = 0;
    };
    rec(0, 8);
  }
}

TEST_CASE("sphere_integral scales as r^{n-1} times the unit-sphere mean") {
  auto s3 = sphere_rule(3, 6);
  std::vector<double> c{0.2, -0.1, 0.05};
  auto f = [&](std::span<const double> x) {
    double r2 = 0;
    for (int d = 0; d < 3; ++d) r2 += (x[d] - c[d]) * (x[d] - c[d]);
    return std::exp(-r2);
  };
  // Radial about the center, so integral = r^2 * 4 pi * exp(-r^2).
  for (double r : {0.3, 0.7, 1.3}) {
    CHECK(sphere_integral(f, c, r, s3) ==
          Catch::Approx(r * r * 4 * pi * std::exp(-r * r)));
  }
}

TEST_CASE("field binary dump round-trips and rejects bad headers") {
  Grid g = make_grid(2, {-1, -0.5}, {2, 1.5}, {33, 17});
  ScalarField u = sample_field(g, [](std::span<const double> x) {
    return std::sin(3 * x[0]) * x[1] + 0.25;
  });

  std::stringstream buf;
  write_field(buf, u);
  ScalarField v = read_field(buf);
  CHECK(v.grid == u.grid);
  CHECK(v.values == u.values);

  std::stringstream bad("XXXX garbage");
  CHECK_THROWS_WITH(read_field(bad), Catch::Matchers::ContainsSubstring("magic"));
}

TEST_CASE("field quadrature checks that the ball stays inside the box") {
  Grid g = make_grid(2, {-1, -1}, {2, 2}, {41, 41});
  ScalarField u = sample_field(g, [](std::span<const double>) { return 1.0; });
  auto rule = sphere_rule(2, 12);
  std::vector<double> c{0.8, 0.0};
  CHECK_THROWS_AS(sphere_integral(u, c, 0.5, rule), std::domain_error);
  std::vector<double> c0{0.0, 0.0};
  CHECK(sphere_integral(u, c0, 0.5, rule) == Catch::Approx(2 * pi * 0.5));
}

TEST_CASE("csv export emits one row per node") {
  Grid g = make_grid(1, {0}, {1}, {3});
  ScalarField u = sample_field(g, [](std::span<const double> x) { return 2 * x[0]; });
  std::ostringstream os;
  write_field_csv(os, u);
  CHECK(os.str() == "x1,value\n0,0\n0.5,1\n1,2\n");
}
