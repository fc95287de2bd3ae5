#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "holonome/critical.hpp"
#include "holonome/errors.hpp"
#include "test_support.hpp"

using namespace holonome;

namespace {

constexpr double pi = std::numbers::pi;

MechSystem one_dim(const std::string& U, bool periodic) {
  return load_system("[model]\ncoordinates = [x]\nperiodic = [" + std::string(periodic ? "true" : "false") +
                     "]\nunconstrained = true\n[metric]\ng = [1]\n[potential]\nU = " + U + "\n");
}

double angle_gap(double a, double b) { return std::abs(std::remainder(a - b, 2 * pi)); }

}  // namespace

TEST_CASE("critical_residual: disc-skate examples") {
  const MechSystem sys = test_support::load_model("disc_skate.cfg");
  for (double x2 : {0.0, 0.7, 2.0, 5.5}) CHECK(critical_residual(sys, Eigen::Vector3d(0, x2, 0)).norm() <= 1e-15);
  const Eigen::VectorXd r = critical_residual(sys, Eigen::Vector3d(0.5, 0, 0));
  CHECK(r(0) == doctest::Approx(std::sin(0.5)));
  CHECK(std::abs(r(1)) <= 1e-15);
  CHECK(std::abs(r(2)) <= 1e-15);
  // Critical points of U are on C_Q.
  CHECK(critical_residual(sys, Eigen::Vector3d(pi, pi, 0)).norm() <= 1e-15);
}

TEST_CASE("critical_jacobian matches finite differences") {
  for (const char* file : {"disc_skate.cfg", "curved_skate.cfg", "vertical_disc.cfg"}) {
    const MechSystem sys = test_support::load_model(file);
    Eigen::VectorXd q = Eigen::VectorXd::LinSpaced(sys.n, 0.3, 1.9);
    const Eigen::MatrixXd J = critical_jacobian(sys, q);
    const double h = 1e-6;
    for (int j = 0; j < sys.n; ++j) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(sys.n);
      e(j) = h;
      const Eigen::VectorXd fd = (critical_residual(sys, q + e) - critical_residual(sys, q - e)) / (2 * h);
      CHECK((fd - J.col(j)).norm() <= 1e-7);
    }
  }
}

TEST_CASE("newton_refine") {
  const MechSystem sys = test_support::load_model("disc_skate.cfg");
  SUBCASE("already critical: zero iterations") {
    const CriticalPoint cp = newton_refine(sys, Eigen::Vector3d(0, 1.7, 0));
    CHECK(cp.iterations == 0);
    CHECK(cp.q(1) == 1.7);
  }
  SUBCASE("converges onto C_{0,0} keeping x2") {
    const CriticalPoint cp = newton_refine(sys, Eigen::Vector3d(0.05, 1.7, -0.03));
    CHECK(cp.residual <= 1e-12);
    CHECK(angle_gap(cp.q(0), 0) <= 1e-12);
    CHECK(angle_gap(cp.q(2), 0) <= 1e-12);
    CHECK(cp.q(1) == doctest::Approx(1.7).epsilon(0.05));
    CHECK(cp.generic);
    CHECK(cp.kernel_dim == 1);
    CHECK(cp.index == 0);
  }
  SUBCASE("no critical point anywhere: error surfaced") {
    const MechSystem tilted = one_dim("x + 0.2*sin(3*x)", false);
    CHECK_THROWS_AS(newton_refine(tilted, Eigen::VectorXd::Constant(1, 4.0)), NoConvergenceError);
  }
  SUBCASE("wrong dimension") {
    CHECK_THROWS_AS(newton_refine(sys, Eigen::Vector2d(0, 0)), PreconditionError);
  }
}

TEST_CASE("find_U_critical_points") {
  SUBCASE("disc-skate: the 8 corners") {
    const MechSystem sys = test_support::load_model("disc_skate.cfg");
    const auto pts = find_U_critical_points(sys, 6);
    REQUIRE(pts.size() == 8);
    for (const auto& p : pts) {
      for (int i = 0; i < 3; ++i) CHECK(std::min(angle_gap(p.q(i), 0), angle_gap(p.q(i), pi)) <= 1e-12);
      CHECK(p.residual <= 1e-12);
      CHECK(p.generic);
    }
    for (std::size_t i = 1; i < pts.size(); ++i)
      CHECK(std::lexicographical_compare(pts[i - 1].q.data(), pts[i - 1].q.data() + 3, pts[i].q.data(),
                                         pts[i].q.data() + 3));
    // Thread count does not change the result.
    const auto one = find_U_critical_points(sys, 6, {}, 1);
    for (std::size_t i = 0; i < pts.size(); ++i) CHECK(one[i].q == pts[i].q);
  }
  SUBCASE("pendulum on the circle: {0, pi}") {
    const auto pts = find_U_critical_points(one_dim("1 - cos(x)", true), 5);
    REQUIRE(pts.size() == 2);
    CHECK(angle_gap(pts[0].q(0), 0) <= 1e-12);
    CHECK(angle_gap(pts[1].q(0), pi) <= 1e-12);
    CHECK(pts[0].index == 0);
    CHECK(pts[1].index == 1);
  }
  SUBCASE("harmonic oscillator in its search box") {
    const auto pts = find_U_critical_points(test_support::load_model("harmonic_oscillator.cfg"), 4);
    REQUIRE(pts.size() == 1);
    CHECK(std::abs(pts[0].q(0)) <= 1e-12);
  }
  SUBCASE("constant potential is degenerate") {
    CHECK_THROWS_WITH_AS(find_U_critical_points(one_dim("2", true), 4), doctest::Contains("potential is degenerate"),
                         NumericError);
  }
  SUBCASE("grid too small") {
    CHECK_THROWS_AS(find_U_critical_points(one_dim("1 - cos(x)", true), 1), ConfigError);
  }
}

TEST_CASE("component_index") {
  const MechSystem sys = test_support::load_model("disc_skate.cfg");
  CHECK(component_index(sys, analyze_point(sys, Eigen::Vector3d(0, 0.4, 0))) == 0);
  CHECK(component_index(sys, analyze_point(sys, Eigen::Vector3d(pi, 0.4, 0))) == 1);
  CHECK(component_index(sys, analyze_point(sys, Eigen::Vector3d(0, 0.4, pi))) == 1);
  CHECK(component_index(sys, analyze_point(sys, Eigen::Vector3d(pi, 0.4, pi))) == 2);
  // Constant along each component, including away from the U critical points.
  for (double x2 : {0.0, 0.9, 2.2, 4.0}) CHECK(analyze_point(sys, Eigen::Vector3d(pi, x2, pi)).index == 2);

  const MechSystem flat = sys.with_params({{"cphi", 0.0}});
  const CriticalPoint cp = analyze_point(flat, Eigen::Vector3d(0, 0.4, 0));
  CHECK_FALSE(cp.generic);
  CHECK(cp.index == -1);
  CHECK_THROWS_WITH_AS(component_index(flat, cp), doctest::Contains("index undefined"), PreconditionError);
}

TEST_CASE("continue_component: disc-skate C_{0,0}") {
  const MechSystem sys = test_support::load_model("disc_skate.cfg");
  const CriticalPoint seed = newton_refine(sys, Eigen::Vector3d(0, 0, 0));
  const CriticalComponent c = continue_component(sys, seed);
  CHECK(c.closed);
  CHECK_FALSE(c.nongeneric_boundary);
  CHECK(c.index == 0);
  CHECK(c.points.size() >= 627);
  CHECK(c.points.size() <= 630);
  CHECK(c.arc_length == doctest::Approx(2 * pi).epsilon(1e-6));
  std::vector<double> x2;
  for (const auto& p : c.points) {
    CHECK(angle_gap(p.q(0), 0) <= 1e-8);
    CHECK(angle_gap(p.q(2), 0) <= 1e-8);
    CHECK(p.residual <= 1e-12);
    CHECK(p.index == 0);
    CHECK(p.kernel_dim == 1);
    x2.push_back(p.q(1));
  }
  for (std::size_t i = 1; i < c.points.size(); ++i)
    CHECK(periodic_distance(c.points[i - 1].q, c.points[i].q, sys.periodic) <= 2e-2);
  std::sort(x2.begin(), x2.end());
  double gap = x2.front() + 2 * pi - x2.back();
  for (std::size_t i = 1; i < x2.size(); ++i) gap = std::max(gap, x2[i] - x2[i - 1]);
  CHECK(gap <= 2e-2);

  SUBCASE("reversible and seed-independent") {
    ContinuationOptions back;
    back.orientation = -1;
    const CriticalComponent r = continue_component(sys, seed, back);
    CHECK(r.closed);
    CHECK(hausdorff_distance(sys, c, r) <= 0.5e-2 + 1e-8);
    const CriticalComponent other = continue_component(sys, newton_refine(sys, Eigen::Vector3d(0, 2.5, 0)));
    CHECK(hausdorff_distance(sys, c, other) <= 0.5e-2 + 1e-8);
    CHECK(distance_to_component(sys, c, Eigen::Vector3d(0, 2.5, 0)) <= 1e-12);
    CHECK(distance_to_component(sys, c, Eigen::Vector3d(pi, 2.5, 0)) == doctest::Approx(pi));
  }
}

TEST_CASE("continue_component: other dimensions and errors") {
  SUBCASE("zero-dimensional component") {
    const MechSystem pend = one_dim("1 - cos(x)", true);
    const CriticalComponent c = continue_component(pend, newton_refine(pend, Eigen::VectorXd::Constant(1, 0.1)));
    CHECK(c.closed);
    CHECK(c.points.size() == 1);
    CHECK(c.index == 0);
  }
  SUBCASE("two-dimensional components are not continued") {
    const MechSystem vd = test_support::load_model("vertical_disc.cfg");
    const CriticalPoint cp = newton_refine(vd, Eigen::Vector4d(0, 0, 0, 0.3));
    CHECK(cp.kernel_dim == 2);
    CHECK_THROWS_AS(continue_component(vd, cp), PreconditionError);
  }
  SUBCASE("non-generic seed") {
    const MechSystem flat = test_support::load_model("disc_skate.cfg").with_params({{"cphi", 0.0}});
    CHECK_THROWS_AS(continue_component(flat, analyze_point(flat, Eigen::Vector3d(0, 0, 0))), PreconditionError);
  }
  SUBCASE("max_points") {
    const MechSystem sys = test_support::load_model("disc_skate.cfg");
    ContinuationOptions o;
    o.max_points = 50;
    CHECK_THROWS_AS(continue_component(sys, analyze_point(sys, Eigen::Vector3d(0, 0, 0)), o), NumericError);
  }
}

TEST_CASE("continue_component: curved metric") {
  const MechSystem sys = test_support::load_model("curved_skate.cfg");
  const auto pts = find_U_critical_points(sys, 6);
  REQUIRE(!pts.empty());
  const CriticalComponent c = continue_component(sys, pts.front());
  CHECK(c.closed);
  for (const auto& p : c.points) {
    CHECK(p.residual <= 1e-12);
    CHECK(p.kernel_dim == 1);
    CHECK(p.index == c.index);
  }
  for (std::size_t i = 1; i < c.points.size(); ++i)
    CHECK(periodic_distance(c.points[i - 1].q, c.points[i].q, sys.periodic) <= 2e-2);
}

TEST_CASE("critical_bundle_fibre") {
  const MechSystem sys = test_support::load_model("disc_skate.cfg");
  const auto fib = critical_bundle_fibre(sys, Eigen::Vector3d(pi, 1.0, pi));
  REQUIRE(fib.size() == 1);
  CHECK((fib[0].cwiseAbs() - Eigen::Vector3d(0, 1, 0)).norm() <= 1e-12);
  Eigen::VectorXd x(6);
  x << pi, 1.0, pi, 0, 0, 0;
  CHECK(extension_field(sys, x).norm() <= 1e-15);
  for (double scale : {1.0, 1e3}) {
    x.tail(3) = scale * 0.37 * fib[0];
    CHECK(extension_field(sys, x).norm() <= 1e-9 * scale);
  }
  CHECK_THROWS_AS(critical_bundle_fibre(sys, Eigen::Vector3d(0.5, 0, 0)), PreconditionError);
}

TEST_CASE("nongenericity_indicator") {
  const MechSystem sys = test_support::load_model("disc_skate.cfg");
  for (double a : {0.0, pi})
    for (double b : {0.0, pi}) {
      const auto r = nongenericity_indicator(sys, analyze_point(sys, Eigen::Vector3d(a, 0.8, b)));
      CHECK_FALSE(r.nongeneric);
      CHECK(r.sigma_ratio >= 0.4);
    }
  const MechSystem flat = sys.with_params({{"cphi", 0.0}});
  CHECK(nongenericity_indicator(flat, analyze_point(flat, Eigen::Vector3d(0, 0.8, 0))).nongeneric);
  const MechSystem none = one_dim("3", true);
  CHECK(nongenericity_indicator(none, analyze_point(none, Eigen::VectorXd::Constant(1, 1.0))).nongeneric);
}

TEST_CASE("build_critical_manifold: disc-skate") {
  const MechSystem sys = test_support::load_model("disc_skate.cfg");
  const auto ucrit = find_U_critical_points(sys, 6);
  std::vector<Eigen::VectorXd> seeds;
  for (const auto& p : ucrit) seeds.push_back(p.q);
  const ManifoldResult m = build_critical_manifold(sys, seeds);
  REQUIRE(m.components.size() == 4);
  std::vector<int> idx;
  for (const auto& c : m.components) {
    CHECK(c.closed);
    idx.push_back(c.index);
    const double a = c.points.front().q(0), b = c.points.front().q(2);
    for (const auto& p : c.points) {
      CHECK(angle_gap(p.q(0), a) <= 1e-8);
      CHECK(angle_gap(p.q(2), b) <= 1e-8);
    }
    if (angle_gap(a, 0) < 1e-8 && angle_gap(b, 0) < 1e-8) CHECK(c.index == 0);
  }
  std::sort(idx.begin(), idx.end());
  CHECK(idx == std::vector<int>{0, 1, 1, 2});
  for (const auto& p : ucrit) {
    double best = 1e9;
    for (const auto& c : m.components) best = std::min(best, distance_to_component(sys, c, p.q));
    CHECK(best <= 1e-8);
  }

  // Deterministic regardless of thread count.
  const ManifoldResult serial = build_critical_manifold(sys, seeds, {}, 1);
  std::ostringstream a, b;
  write_components_csv(a, sys, m.components);
  write_components_csv(b, sys, serial.components);
  CHECK(a.str() == b.str());
  CHECK(component_to_json(sys, m.components[0], 0, "disc_skate")["points"].size() == m.components[0].points.size());
}

TEST_CASE("default_thread_count honours HOLONOME_THREADS") {
  setenv("HOLONOME_THREADS", "3", 1);
  CHECK(default_thread_count() == 3);
  setenv("HOLONOME_THREADS", "zero", 1);
  CHECK_THROWS_AS(default_thread_count(), ConfigError);
  unsetenv("HOLONOME_THREADS");
  CHECK(default_thread_count() >= 1);
}
