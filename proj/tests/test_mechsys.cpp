#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "holonome/mechsys.hpp"
#include "test_support.hpp"

using namespace holonome;
using test_support::load_model;

namespace {

constexpr double kPi = std::numbers::pi;

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

PhasePoint random_point(int n, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  PhasePoint x{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (int i = 0; i < n; ++i) {
    x.q(i) = u(rng);
    x.p(i) = u(rng);
  }
  return x;
}

Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x, double h = 1e-6) {
  Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd J(f0.size(), x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Eigen::VectorXd xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    J.col(j) = (f(xp) - f(xm)) / (2 * h);
  }
  return J;
}

const char* kMinimal = R"(
[model]
coordinates = [a, b, c]
periodic = [true, false, true]
[metric]
g = [1, 0, 0, 0, 1, 0, 0, 0, 1]
[potential]
U = 1 - cos(a)
[constraints]
zeta = [[1, 1, 0]]
)";

}  // namespace

TEST_CASE("load_system: disc-skate fixture") {
  MechSystem s = load_model("disc_skate.cfg");
  CHECK(s.n == 3);
  CHECK(s.k() == 2);
  CHECK(s.num_constraints() == 1);
  CHECK(s.name == "disc_skate");
  CHECK(s.periodic == std::vector<bool>{true, true, true});
  CHECK(s.params.at("r") == 1.4142135623730951);
  CHECK(s.params.at("cphi") == 2.0);
}

TEST_CASE("load_system: error paths") {
  const std::string no_constraints = R"(
[model]
coordinates = [a, b]
[metric]
g = [1, 0, 0, 1]
[potential]
U = a^2
)";
  CHECK_THROWS_WITH_AS(load_system(no_constraints), doctest::Contains("at least one constraint required"),
                       ConfigError);
  const std::string mismatch = R"(
[model]
coordinates = [a, b, c]
[metric]
g = [1, 0, 0, 1]
[potential]
U = a^2
[constraints]
zeta = [[1, 0, 0]]
)";
  CHECK_THROWS_WITH_AS(load_system(mismatch), doctest::Contains("dimension mismatch"), ConfigError);
  std::string unknown = kMinimal;
  unknown.replace(unknown.find("1 - cos(a)"), 10, "k*a");
  CHECK_THROWS_WITH_AS(load_system(unknown), doctest::Contains("unknown parameter"), ConfigError);
  std::string bad_row = kMinimal;
  bad_row.replace(bad_row.find("[[1, 1, 0]]"), 11, "[[1, 1]]");
  CHECK_THROWS_AS(load_system(bad_row), ConfigError);
  std::string syntax = kMinimal;
  syntax.replace(syntax.find("1 - cos(a)"), 10, "1 - cos(a");
  CHECK_THROWS_WITH_AS(load_system(syntax), doctest::Contains("offset"), ConfigError);
  CHECK_THROWS_AS(load_system("[model]\nname = x\n"), ConfigError);
  CHECK_THROWS_AS(load_system(std::string(kMinimal) + "[params]\nk = abc\n"), ConfigError);
  MechSystem ok = load_system(kMinimal);
  CHECK(ok.periodic == std::vector<bool>{true, false, true});
  CHECK_THROWS_AS(ok.with_params({{"nope", 1.0}}), ConfigError);
}

TEST_CASE("hamiltonian, constraint values and Lyapunov function on the disc-skate") {
  MechSystem s = load_model("disc_skate.cfg");
  CHECK(hamiltonian(s, {vec({0.4, 1.0, -0.3}), vec({0, 0, 0})}) ==
        doctest::Approx(eval(s.U, as_span(vec({0.4, 1.0, -0.3})), s.params)).epsilon(1e-15));
  CHECK(hamiltonian(s, {vec({0, 0, 0}), vec({1, 0, 0})}) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(hamiltonian(s, {vec({kPi, kPi, kPi}), vec({0, 0, 0})}) == doctest::Approx(8.0).epsilon(1e-15));
  CHECK(constraint_values(s, {vec({0.3, 0.1, 0}), vec({0, 0, 0})}).isZero(0.0));
  Eigen::VectorXd f = constraint_values(s, {vec({0.3, 0.1, 0}), vec({0, 1, 0})});
  CHECK(f.size() == 1);
  CHECK(f(0) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(lyapunov(s, {vec({0.3, 0.1, 0}), vec({0, 1, 0})}) == doctest::Approx(1.0).epsilon(1e-15));
  PhasePoint on = physical_leaf_project(s, {vec({0.3, 0.1, 0.7}), vec({0.2, -1.1, 0.5})});
  CHECK(lyapunov(s, on) <= 1e-24);
}

TEST_CASE("assemble: projector at phi = 0 and the unconstrained reduction") {
  MechSystem s = load_model("disc_skate.cfg");
  ExtensionAssembly a = assemble(s, {vec({0.3, -0.2, 0.0}), vec({0.5, 0.1, -0.4})});
  CHECK((a.rho - Eigen::MatrixXd(vec({1, 0, 1}).asDiagonal())).cwiseAbs().maxCoeff() < 1e-15);

  MechSystem ho = load_model("harmonic_oscillator.cfg");
  CHECK(ho.unconstrained);
  ExtensionAssembly b = assemble(ho, {vec({0.7}), vec({-0.2})});
  CHECK(b.rho == Eigen::MatrixXd::Identity(1, 1));
  CHECK(b.T.isZero(0.0));
  CHECK(b.piV == Eigen::MatrixXd::Identity(2, 2));
  Eigen::VectorXd v = extension_field(ho, vec({0.7, -0.2}));
  CHECK(v(0) == -0.2);
  CHECK(v(1) == -0.7);
}

TEST_CASE("property: extension assembly invariants at random points of all models") {
  std::mt19937 rng(31);
  for (const char* model : {"disc_skate.cfg", "curved_skate.cfg", "vertical_disc.cfg"}) {
    MechSystem s = load_model(model);
    const int n = s.n;
    const Eigen::MatrixXd Jc = symplectic_matrix(n);
    for (int t = 0; t < 100; ++t) {
      PhasePoint x = random_point(n, rng);
      ExtensionAssembly a = assemble(s, x);
      CHECK((a.piV * Jc - Jc * a.piV.transpose()).cwiseAbs().maxCoeff() <= 1e-9);
      CHECK((a.piV * a.piV - a.piV).cwiseAbs().maxCoeff() <= 1e-9);
      CHECK((a.T + a.T.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK((a.E.transpose() * a.g_inv * a.E - Eigen::MatrixXd::Identity(s.num_constraints(), s.num_constraints()))
                .cwiseAbs()
                .maxCoeff() <= 1e-10);
      // pi_V J is the matrix of the extension field acting on dH.
      Eigen::VectorXd dH(2 * n);
      dH << a.dH_dq, a.dH_dp;
      CHECK((a.piV * Jc * dH - extension_field(s, x.state())).cwiseAbs().maxCoeff() <= 1e-12);
      if (t < 20) {
        // F against central differences of the constraint values in q.
        auto fq = [&](const Eigen::VectorXd& q) { return constraint_values(s, {q, x.p}); };
        Eigen::MatrixXd Ffd = fd_jacobian(fq, x.q).transpose();
        CHECK((a.F - Ffd).cwiseAbs().maxCoeff() <= 1e-6);
        auto hq = [&](const Eigen::VectorXd& q) { return vec({hamiltonian(s, {q, x.p})}); };
        CHECK((a.dH_dq - fd_jacobian(hq, x.q).transpose()).cwiseAbs().maxCoeff() <= 1e-6);
        // Exact Jacobian of the field against central differences.
        auto fld = [&](const Eigen::VectorXd& y) { return extension_field(s, y); };
        CHECK((extension_field_jacobian(s, x.state()) - fd_jacobian(fld, x.state())).cwiseAbs().maxCoeff() <= 1e-6);
      }
    }
  }
}

TEST_CASE("extension field: physical-leaf force balance against a Lagrange multiplier oracle") {
  // Flat-metric skate: on the leaf, p = g q_dot and the constrained dynamics
  // read p_dot = -dU + lambda zeta with lambda fixed by d/dt (zeta . q_dot) = 0.
  MechSystem s = load_model("disc_skate.cfg");
  std::mt19937 rng(8);
  for (int t = 0; t < 20; ++t) {
    PhasePoint x = physical_leaf_project(s, random_point(3, rng));
    const double phi = x.q(2);
    Eigen::Matrix3d g = Eigen::Vector3d(1, 1, 1).asDiagonal();  // m = 1, r = sqrt 2
    Eigen::Vector3d qd = g.inverse() * x.p;
    Eigen::Vector3d zeta(std::sin(phi), -std::cos(phi), 0);
    Eigen::Vector3d zeta_dot = Eigen::Vector3d(std::cos(phi), std::sin(phi), 0) * qd(2);
    Eigen::Vector3d dU(std::sin(x.q(0)), std::sin(x.q(1)), 2 * std::sin(phi));
    // zeta . g^-1 (-dU + lambda zeta) + zeta_dot . qd = 0
    const double lambda = (zeta.dot(g.inverse() * dU) - zeta_dot.dot(qd)) / zeta.dot(g.inverse() * zeta);
    Eigen::Vector3d pdot = -dU + lambda * zeta;
    Eigen::VectorXd v = extension_field(s, x.state());
    CHECK((v.head(3) - qd).norm() <= 1e-12);
    CHECK((v.tail(3) - pdot).norm() <= 1e-12);
  }
}

TEST_CASE("extension field vanishes on the critical bundle") {
  MechSystem s = load_model("disc_skate.cfg");
  CHECK(extension_field(s, vec({kPi, kPi, kPi, 0, 0, 0})).cwiseAbs().maxCoeff() <= 1e-15);
  // q on C_Q, p in the span of the orthonormal constraint covector.
  for (double scale : {1.0, 1e3}) {
    Eigen::VectorXd q = vec({kPi, 1.0, kPi});
    ExtensionAssembly a = assemble(s, {q, Eigen::VectorXd::Zero(3)});
    Eigen::VectorXd p = scale * 0.37 * a.E.col(0);
    Eigen::VectorXd x(6);
    x << q, p;
    CHECK(extension_field(s, x).cwiseAbs().maxCoeff() <= 1e-9 * scale);
  }
}

TEST_CASE("physical leaf projection") {
  MechSystem s = load_model("disc_skate.cfg");
  PhasePoint y = physical_leaf_project(s, {vec({0.1, 0.2, 0.0}), vec({1, 1, 1})});
  CHECK((y.p - vec({1, 0, 1})).cwiseAbs().maxCoeff() < 1e-15);
  std::mt19937 rng(4);
  for (const char* model : {"disc_skate.cfg", "curved_skate.cfg", "vertical_disc.cfg"}) {
    MechSystem m = load_model(model);
    for (int t = 0; t < 20; ++t) {
      PhasePoint x = random_point(m.n, rng);
      PhasePoint once = physical_leaf_project(m, x);
      PhasePoint twice = physical_leaf_project(m, once);
      CHECK((once.p - twice.p).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK(constraint_values(m, once).cwiseAbs().maxCoeff() <= 1e-12);
      HolderResiduals r = holder_residuals_at(m, once.state());
      CHECK(r.velocity <= 1e-12);
      CHECK(r.force <= 1e-12);
      CHECK(r.leaf <= 1e-12);
      CHECK(horizontality_residual(m, once.state()) <= 1e-12);
    }
  }
}

TEST_CASE("holder residuals off the leaf measure the constrained momentum") {
  MechSystem s = load_model("disc_skate.cfg");
  PhasePoint x{vec({0.3, 0.1, 0.0}), vec({0.0, 1.0, 0.0})};
  HolderResiduals r = holder_residuals_at(s, x.state());
  CHECK(r.velocity <= 1e-15);
  CHECK(r.leaf == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("non-SPD metric is reported with the offending point") {
  MechSystem s = load_model("indefinite_metric.cfg");
  CHECK_NOTHROW(hamiltonian(s, {vec({0.1, 0, 0}), vec({1, 0, 0})}));
  CHECK_THROWS_WITH_AS(assemble(s, {vec({3.0, 0, 0}), vec({1, 0, 0})}), doctest::Contains("q = (3, 0, 0)"),
                       NumericError);
}

TEST_CASE("frobenius tensor and flag of the skate distributions") {
  MechSystem s = load_model("disc_skate.cfg");
  ProjectorField piV = phase_projector_field(s);
  Eigen::VectorXd x = vec({0.3, -0.4, 0.8, 0.2, 0.5, -0.1});
  // Exact derivatives of pi_V agree with central differences.
  ProjectorField fd = piV;
  fd.derivatives = nullptr;
  auto d_exact = piV.partials(x), d_fd = fd.partials(x);
  for (std::size_t r = 0; r < d_exact.size(); ++r) CHECK((d_exact[r] - d_fd[r]).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK(frobenius_defect(piV, x) > 1e-3);

  FlagReport w = flag(distribution_fields(s), vec({0.3, -0.4, 0.8}));
  CHECK(w.ranks == std::vector<int>{2, 3});
  CHECK(w.degree == 1);
  CHECK(w.chow);

  // Brackets of pi_V columns: exact Jacobians against a finite-difference bracket.
  auto cols = phase_distribution_fields(s);
  for (int i = 0; i < 6; ++i)
    for (int j = i + 1; j < 6; ++j) {
      Eigen::VectorXd exact = lie_bracket(cols[i], cols[j], x);
      VectorField a = black_box_field(6, [&, i](const Eigen::VectorXd& y) { return cols[i].value(y); });
      VectorField b = black_box_field(6, [&, j](const Eigen::VectorXd& y) { return cols[j].value(y); });
      CHECK((exact - lie_bracket(a, b, x)).cwiseAbs().maxCoeff() <= 1e-6);
    }
}

TEST_CASE("v bracket of H with a coordinate is its velocity along the extension flow") {
  std::mt19937 rng(12);
  for (const char* model : {"disc_skate.cfg", "curved_skate.cfg"}) {
    MechSystem s = load_model(model);
    for (int t = 0; t < 10; ++t) {
      PhasePoint x = random_point(3, rng);
      ExtensionAssembly a = assemble(s, x);
      Eigen::VectorXd dH(6), dx1 = Eigen::VectorXd::Zero(6);
      dH << a.dH_dq, a.dH_dp;
      dx1(0) = 1.0;
      const double b = v_bracket(dH, dx1, a.piV, symplectic_matrix(3));
      CHECK(b == doctest::Approx(extension_field(s, x.state())(0)).epsilon(1e-9));
      CHECK(v_bracket(dH, dH, a.piV, symplectic_matrix(3)) == 0.0);
    }
  }
}

TEST_CASE("compatible triple built from the disc-skate pi_V") {
  MechSystem s = load_model("disc_skate.cfg");
  std::mt19937 rng(19);
  for (int t = 0; t < 20; ++t) {
    PhasePoint x = random_point(3, rng);
    Eigen::MatrixXd piV = assemble(s, x).piV;
    CompatibleTriple tr = compatible_triple(symplectic_matrix(3), piV, Eigen::MatrixXd::Identity(6, 6));
    TripleResiduals r = triple_residuals(tr, piV);
    CHECK(r.j_squared <= 1e-9);
    CHECK(r.compat <= 1e-9);
    CHECK(r.hermitian <= 1e-9);
    CHECK(r.commutation <= 1e-9);
  }
}
