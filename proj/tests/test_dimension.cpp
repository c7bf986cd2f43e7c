#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "fblab/dimension.hpp"

using namespace fblab;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
const double kCantorDim = std::log(2.0) / std::log(3.0);

/// Endpoints of the depth-k middle-thirds construction (2^{k+1} points).
PointCloud cantor_cloud(int depth) {
  std::vector<std::array<double, 2>> iv{{0.0, 1.0}};
  for (int k = 0; k < depth; ++k) {
    std::vector<std::array<double, 2>> next;
    for (auto [a, b] : iv) {
      double w = (b - a) / 3.0;
      next.push_back({a, a + w});
      next.push_back({b - w, b});
    }
    iv = std::move(next);
  }
  std::vector<std::vector<double>> pts;
  for (auto [a, b] : iv) {
    pts.push_back({a});
    pts.push_back({b});
  }
  return make_cloud(1, std::move(pts));
}

PointCloud segment_cloud(int n) {
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < n; ++i) pts.push_back({static_cast<double>(i) / (n - 1)});
  return make_cloud(1, std::move(pts));
}

}  // namespace

TEST_CASE("make_cloud validates, sorts, and deduplicates") {
  CHECK_THROWS_AS(make_cloud(0, {}), std::invalid_argument);
  CHECK_THROWS_AS(make_cloud(2, {{1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(make_cloud(1, {{std::nan("")}}), std::invalid_argument);
  CHECK_THROWS_AS(make_cloud(1, {{0.0}}, -1.0), std::invalid_argument);

  PointCloud c = make_cloud(1, {{0.5}, {0.1}, {0.5}, {0.3}});
  REQUIRE(c.size() == 3);
  CHECK(c.points[0][0] == 0.1);  // lexicographic order
  CHECK(c.points[2][0] == 0.5);  // exact duplicate collapsed

  // Resolution-h_dedup identification keeps one representative per cell.
  PointCloud q = make_cloud(1, {{0.0}, {0.004}, {0.011}}, 0.01);
  REQUIRE(q.size() == 2);
  CHECK(q.points[0][0] == 0.0);
  CHECK(q.points[1][0] == 0.011);
}

TEST_CASE("hausdorff premeasure matches interval and Cantor geometry") {
  CHECK(hausdorff_premeasure(PointCloud{1, {}}, 1.0, kInf) == 0.0);

  PointCloud one = make_cloud(2, {{0.3, -0.2}});
  CHECK(hausdorff_premeasure(one, 0.5, kInf) == 0.0);  // arbitrarily small cover
  CHECK(hausdorff_premeasure(one, 0.5, 0.5) == 0.0);

  PointCloud seg = segment_cloud(101);
  CHECK(hausdorff_premeasure(seg, 1.0, kInf) <= 1.0 + 1e-12);
  CHECK(hausdorff_premeasure(seg, 1.0, 1.0) <= 1.0 + 1e-12);
  double refined = hausdorff_premeasure(seg, 1.0, 0.02);
  CHECK(refined >= 0.99);
  CHECK(refined <= 1.1);

  PointCloud cantor = cantor_cloud(8);
  REQUIRE(cantor.size() == 512);
  CHECK(hausdorff_premeasure(cantor, kCantorDim, kInf) == Catch::Approx(1.0));
  for (int k = 2; k <= 4; ++k) {
    double delta = 2.0 * std::pow(3.0, -k);
    double bound = hausdorff_premeasure(cantor, kCantorDim, delta);
    INFO("delta = 2*3^-" << k << " bound = " << bound);
    CHECK(bound >= 0.5);
    CHECK(bound <= 1.1);
  }

  CHECK_THROWS_AS(hausdorff_premeasure(seg, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(hausdorff_premeasure(seg, 1.0, 0.0), std::invalid_argument);

  nlohmann::json j = premeasure_json(cantor, kCantorDim, kInf);
  CHECK(j.at("bound").get<double>() == Catch::Approx(1.0));
  CHECK(j.at("label") == "estimate");
  CHECK(j.at("delta").is_null());  // infinity serialized as null
  CHECK(j.contains("residual"));
}

TEST_CASE("premeasure bound never decreases under dyadic refinement of delta") {
  std::mt19937 rng(421);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < 200; ++i) pts.push_back({U(rng), U(rng)});
  PointCloud random_cloud = make_cloud(2, std::move(pts));
  PointCloud cantor = cantor_cloud(8);

  for (const PointCloud* cloud : {&cantor, &random_cloud}) {
    for (double beta : {0.7, 1.8}) {
      double prev = -1.0;
      for (int j = 0; j <= 12; ++j) {
        double bound = hausdorff_premeasure(*cloud, beta, std::pow(2.0, -j));
        INFO("beta = " << beta << " j = " << j << " bound = " << bound);
        CHECK(bound >= prev - 1e-12);
        prev = bound;
      }
    }
  }
}

TEST_CASE("box_dim recovers segment, Cantor, and finite-set dimensions") {
  // A finite scatter below its separation scale has exactly dimension 0.
  PointCloud finite = make_cloud(2, {{0.0, 0.0}, {0.4, 0.1}, {0.9, 0.7}, {0.2, 0.8}});
  BoxDimResult fd = box_dim(finite, {0.05, 0.02, 0.01, 0.005});
  CHECK(fd.value == 0.0);
  CHECK(fd.residual == 0.0);
  CHECK_FALSE(fd.degenerate);

  // A cloud inside a single box at every scale carries no slope information.
  PointCloud tight = make_cloud(1, {{0.0}, {1e-6}, {2e-6}});
  BoxDimResult dg = box_dim(tight, {0.1, 0.05, 0.025});
  CHECK(dg.degenerate);
  CHECK(dg.value == 0.0);

  BoxDimResult sd = box_dim(segment_cloud(10000), {0.1, 0.05, 0.02, 0.01, 0.005, 0.002});
  INFO("segment dim = " << sd.value << " residual = " << sd.residual);
  CHECK(sd.value == Catch::Approx(1.0).margin(0.05));

  std::vector<double> triadic;
  for (int j = 1; j <= 6; ++j) triadic.push_back(std::pow(3.0, -j));
  BoxDimResult cd = box_dim(cantor_cloud(8), triadic);
  INFO("cantor dim = " << cd.value << " residual = " << cd.residual);
  CHECK(cd.value == Catch::Approx(kCantorDim).margin(0.05));

  CHECK_THROWS_AS(box_dim(finite, {0.1, 0.05}), std::invalid_argument);
  CHECK_THROWS_AS(box_dim(finite, {0.1, 0.05, -1.0}), std::invalid_argument);
  CHECK_THROWS_AS(box_dim(PointCloud{1, {}}, {0.1, 0.05, 0.025}), std::invalid_argument);

  std::ostringstream os;
  box_counts_to_csv(os, cd);
  std::string csv = os.str();
  CHECK(csv.rfind("scale,count\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);

  nlohmann::json j = cd.to_json();
  CHECK(j.at("label") == "estimate");
  CHECK(j.at("value").get<double>() == Catch::Approx(cd.value));
  CHECK(j.at("table").size() == 6);
}

TEST_CASE("products and projections obey the dimension inequalities") {
  PointCloud a = cantor_cloud(6);
  PointCloud b = segment_cloud(101);
  std::vector<double> scales{1.0 / 3, 1.0 / 9, 1.0 / 27, 1.0 / 81};

  std::vector<std::vector<double>> prod;
  for (const auto& p : a.points)
    for (const auto& q : b.points) prod.push_back({p[0], q[0]});
  BoxDimResult dp = box_dim(make_cloud(2, std::move(prod)), scales);
  BoxDimResult da = box_dim(a, scales);
  BoxDimResult db = box_dim(b, scales);
  INFO("dim(AxB) = " << dp.value << " dim A = " << da.value << " dim B = " << db.value);
  CHECK(dp.value <= da.value + db.value + 0.15);

  // pi_2 never increases the box dimension.
  std::vector<std::vector<double>> graph;
  for (int i = 0; i < 2000; ++i) {
    double x = static_cast<double>(i) / 1999;
    graph.push_back({x, std::sin(3.0 * x)});
  }
  PointCloud st = make_cloud(2, std::move(graph));
  std::vector<double> gs{0.1, 0.05, 0.02, 0.01, 0.005};
  BoxDimResult whole = box_dim(st, gs);
  BoxDimResult proj = box_dim(project_time(st), gs);
  INFO("dim(E) = " << whole.value << " dim(pi2 E) = " << proj.value);
  CHECK(proj.value <= whole.value + 0.15);

  PointCloud sp = project_space(st);
  CHECK(sp.dim == 1);
  CHECK(sp.size() == st.size());
  CHECK_THROWS_AS(project_time(b), std::invalid_argument);
}

TEST_CASE("coarea projection check relates modulus exponent to time dimension") {
  std::vector<double> scales{1e-2, 3e-3, 1e-3, 3e-4, 1e-4};

  // Single singular time: the projection is a point, trivially consistent.
  PointCloud flat = make_cloud(3, {{0.0, 0.0, 0.5}, {0.3, 0.1, 0.5}, {-0.2, 0.4, 0.5}});
  CoareaReport r0 = coarea_projection_check(flat, 4.0, 1.0, {0.1, 0.05, 0.025});
  CHECK(r0.pi2.degenerate);
  CHECK(r0.pi2.value == 0.0);
  CHECK(r0.consistent);
  CHECK(r0.violations.empty());
  CHECK(std::isfinite(r0.C_fit));

  // Image of a curve under a quartic: t_n = |x_n|^4 with x_n = n^{-3/4} on
  // the x1 axis. The time values n^{-3} have box dimension 1/(1+3) = 1/4.
  std::vector<std::vector<double>> pts;
  for (int n = 1; n <= 1500; ++n) {
    double x = std::pow(static_cast<double>(n), -0.75);
    pts.push_back({x, std::pow(x, 4.0)});
  }
  CoareaReport rq = coarea_projection_check(make_cloud(2, std::move(pts)), 4.0, 1.0, scales);
  INFO("pi2 dim = " << rq.pi2.value << " beta/s = " << rq.beta_over_s
                    << " C_fit = " << rq.C_fit);
  CHECK(rq.pi2.value == Catch::Approx(0.25).margin(0.1));
  CHECK(rq.consistent);
  CHECK(rq.n_pairs == 1500 * 1499 / 2);

  // Two records at the same spatial point violate any finite modulus bound.
  PointCloud vert = make_cloud(2, {{0.0, 0.0}, {0.0, 0.5}, {1.0, 0.1}});
  CoareaReport rv = coarea_projection_check(vert, 2.0, 1.0, {0.3, 0.15, 0.075}, 1.0);
  CHECK(std::isinf(rv.C_fit));
  REQUIRE(rv.violations.size() == 1);
  CHECK(rv.violations[0] == std::array<std::size_t, 2>{0, 1});
  CHECK(rv.to_json().at("C_fit").is_null());

  CHECK_THROWS_AS(coarea_projection_check(segment_cloud(5), 1.0, 1.0, scales),
                  std::invalid_argument);
  CHECK_THROWS_AS(coarea_projection_check(vert, -1.0, 1.0, scales), std::invalid_argument);
}
