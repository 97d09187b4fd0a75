#include "support.hpp"

#include <cmath>

#include "osch/config.hpp"
#include "osch/control.hpp"

using namespace osch;

TEST_CASE("the scalar subsystem is A = (-nu), B = (1)") {
    Model m = osch::test::benchmark();
    m.k12.n = 0;
    m = validate_model(m);
    const LinearSubsystem sys = linear_subsystem(m, 1);
    CHECK(sys.m == 1);
    CHECK(sys.A(0, 0) == -1.0);
    CHECK(sys.B(0) == 1.0);
}

TEST_CASE("cascade structure and full Kalman rank") {
    Model m = osch::test::benchmark();
    m.k12.n = 2;
    m = validate_model(m);
    const LinearSubsystem sys = linear_subsystem(m, 1);
    REQUIRE(sys.m == 3);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            const double expected = i == j ? -m.nu1() : (j == i + 1 ? 1.0 : 0.0);
            CHECK(sys.A(i, j) == expected);
        }
    }
    CHECK(Eigen::FullPivLU<Matrix>(kalman_matrix(sys)).rank() == 3);
}

TEST_CASE("scalar Gramian matches the closed-form integral") {
    Model m = osch::test::benchmark();
    m.k12.n = 0;
    m = validate_model(m);
    const LinearSubsystem sys = linear_subsystem(m, 1);
    const double expected = (1.0 - std::exp(-2.0)) / 2.0;
    CHECK(std::abs(gram_matrix(sys, 1.0)(0, 0) - expected) < 1e-12);
    CHECK_THROWS_AS(gram_matrix(sys, 0.0), std::invalid_argument);
}

TEST_CASE("Gramians are symmetric positive definite across random shapes") {
    RngStream rng = make_stream(41, {0});
    for (int trial = 0; trial < 50; ++trial) {
        Model m = osch::test::benchmark();
        m.k12.n = static_cast<int>(rng.uniform() * 5.0); // m up to 5
        m.k12.nu = 0.3 + 2.0 * rng.uniform();
        m = validate_model(m);
        const LinearSubsystem sys = linear_subsystem(m, 1);
        const double T = 0.01 + 9.99 * rng.uniform();
        const Matrix Q = gram_matrix(sys, T);
        CHECK((Q - Q.transpose()).norm() < 1e-12);
        Eigen::SelfAdjointEigenSolver<Matrix> es(Q);
        CHECK(es.eigenvalues().minCoeff() > 0.0);
    }
}

TEST_CASE("minimum-energy control: trivial and scalar closed forms") {
    Model m = osch::test::benchmark();
    m.k12.n = 0;
    m = validate_model(m);
    const LinearSubsystem sys = linear_subsystem(m, 1);

    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(1);
    const MinEnergyControl trivial = min_energy_control(sys, 1.0, zero, zero);
    CHECK(trivial.cost == Approx(0.0).margin(1e-15));
    CHECK(std::abs(trivial(0.3)) < 1e-12);

    Eigen::VectorXd y(1);
    y << 1.0;
    const MinEnergyControl ctl = min_energy_control(sys, 1.0, zero, y);
    const double Q = (1.0 - std::exp(-2.0)) / 2.0;
    CHECK(ctl.cost == Approx(1.0 / Q).epsilon(1e-10)); // 2.31304...
    CHECK(ctl.cost == Approx(2.31304).margin(1e-5));
    // Endpoint verification by RK4.
    const Eigen::VectorXd reached =
        integrate_linear(sys, zero, 1.0, [&](double t) { return ctl(t); }, 1e-4);
    CHECK((reached - y).norm() < 1e-8);
}

TEST_CASE("Gram-cost duality: the control energy equals the quadratic form") {
    RngStream rng = make_stream(42, {0});
    for (int trial = 0; trial < 40; ++trial) {
        Model mm = osch::test::benchmark();
        mm.k12.n = static_cast<int>(rng.uniform() * 4.0); // m up to 4
        mm.k12.nu = 0.4 + 1.6 * rng.uniform();
        mm = validate_model(mm);
        const LinearSubsystem sys = linear_subsystem(mm, 1);
        const double T = 0.3 + 3.0 * rng.uniform();
        Eigen::VectorXd x(sys.m), y(sys.m);
        for (int i = 0; i < sys.m; ++i) {
            x(i) = rng.normal();
            y(i) = rng.normal();
        }
        const MinEnergyControl ctl = min_energy_control(sys, T, x, y);
        const double energy = osch::test::simpson([&](double t) { return square(ctl(t)); }, 0.0, T, 4000);
        CHECK(energy == Approx(ctl.cost).epsilon(1e-6));

        const Eigen::VectorXd reached =
            integrate_linear(sys, x, T, [&](double t) { return ctl(t); }, T / 20000.0);
        CHECK((reached - y).norm() < 1e-8);
    }
}

TEST_CASE("ill-conditioned Gramians are flagged") {
    Model m = osch::test::benchmark();
    m.k12.n = 3;
    m = validate_model(m);
    const LinearSubsystem sys = linear_subsystem(m, 1);
    const MinEnergyControl ctl = min_energy_control(sys, 0.05, Eigen::VectorXd::Zero(4),
                                                    Eigen::VectorXd::Ones(4));
    CHECK(ctl.ill_conditioned);
    CHECK(ctl.gram_condition > 1e12);
}

TEST_CASE("steering the equilibrium to itself needs no control") {
    const Model& m = osch::test::benchmark();
    const State xstar = find_equilibrium(m).point;
    const SteerResult res = steer(m, xstar, xstar, 2.0);
    CHECK(res.action == Approx(0.0).margin(1e-20));
    CHECK((res.achieved - xstar).norm() < 1e-10);
    for (const auto& v : res.control.values) CHECK(v.norm() < 1e-12);
}

TEST_CASE("steer reaches random targets in the benchmark dimension") {
    const Model& m = osch::test::benchmark();
    const State xstar = find_equilibrium(m).point;
    RngStream rng = make_stream(43, {0});
    for (int trial = 0; trial < 3; ++trial) {
        State x = xstar, y = xstar;
        for (int i = 0; i < m.dim(); ++i) {
            x[i] += 0.4 * (rng.uniform() - 0.5);
            y[i] += 0.4 * (rng.uniform() - 0.5);
        }
        const SteerResult res = steer(m, x, y, 2.0, SteerOptions{1e-4});
        CHECK(res.endpoint_residual < 1e-4);
        CHECK(std::isfinite(res.action));
        double sup = 0.0;
        for (const auto& v : res.control.values) sup = std::max(sup, v.lpNorm<Eigen::Infinity>());
        CHECK(std::isfinite(sup));
    }
}

TEST_CASE("the continuous steering construction closes at RK4 order") {
    const Model& m = osch::test::benchmark();
    const State xstar = find_equilibrium(m).point;
    State x = xstar, y = xstar;
    x[0] += 0.25;
    x[2] -= 0.15;
    y[1] -= 0.2;
    y[3] += 0.1;
    // The piecewise-constant residual decays at the midpoint-rule order dt^2;
    // halving dt must cut it by about 4.
    const double r1 = steer(m, x, y, 2.0, SteerOptions{2e-3}).endpoint_residual;
    const double r2 = steer(m, x, y, 2.0, SteerOptions{1e-3}).endpoint_residual;
    CHECK(r1 / r2 > 2.5);
    CHECK(r1 / r2 < 6.0);
}

TEST_CASE("controlled integration with zero control equals the limit flow") {
    const Model& m = osch::test::benchmark();
    State x0 = find_equilibrium(m).point;
    x0[0] += 0.2;
    Control zero;
    zero.dt = 1e-2;
    zero.values.assign(300, Eigen::Vector2d::Zero());
    const Path a = integrate_controlled(m, x0, zero, 1e-3);
    const Path b = integrate_limit(m, x0, 3.0, 1e-3);
    REQUIRE(a.states.size() == b.states.size());
    double sup = 0.0;
    for (std::size_t k = 0; k < a.states.size(); ++k) sup = std::max(sup, (a.states[k] - b.states[k]).norm());
    CHECK(sup < 1e-13);
    CHECK_THROWS_AS(integrate_controlled(m, x0, zero, 3e-3), std::invalid_argument);
}

TEST_CASE("controlled integration converges at order four over a fixed control") {
    const Model& m = osch::test::benchmark();
    State x0 = find_equilibrium(m).point;
    Control ctl;
    ctl.dt = 0.25;
    RngStream rng = make_stream(44, {0});
    for (int i = 0; i < 8; ++i) ctl.values.push_back(Eigen::Vector2d(rng.normal(), rng.normal()));
    const State ref = integrate_controlled(m, x0, ctl, 0.25 / 512.0).back();
    const double e1 = (integrate_controlled(m, x0, ctl, 0.25 / 8.0).back() - ref).norm();
    const double e2 = (integrate_controlled(m, x0, ctl, 0.25 / 16.0).back() - ref).norm();
    CHECK(e1 / e2 > 10.0);
    CHECK(e1 / e2 < 24.0);
}

TEST_CASE("bracket span: two dispersion columns, full rank with depth") {
    const Model& m = osch::test::benchmark();
    const State xstar = find_equilibrium(m).point;
    CHECK(hormander_rank(m, xstar, 0) == 2);
    CHECK(hormander_rank(m, xstar) == m.dim());
    // Truncated depth below the cascade length cannot span.
    CHECK(hormander_rank(m, xstar, 0) < m.dim());

    RngStream rng = make_stream(45, {0});
    for (int trial = 0; trial < 25; ++trial) {
        State x(m.dim());
        for (int i = 0; i < m.dim(); ++i) x[i] = 3.0 * (rng.uniform() - 0.5);
        CHECK(hormander_rank(m, x) == m.dim());
    }
}

TEST_CASE("bracket span needs the full chain on a longer cascade") {
    Model m = osch::test::benchmark();
    m.k12.n = 2; // population-1 cascade of length 3
    m = validate_model(m);
    const State xstar = find_equilibrium(m).point;
    CHECK(hormander_rank(m, xstar, 0) == 2);
    CHECK(hormander_rank(m, xstar, 1) < m.dim());
    CHECK(hormander_rank(m, xstar, m.dim()) == m.dim());
}

TEST_CASE("frozen-system certificate reaches the unit targets exactly") {
    const Model& m = osch::test::benchmark();
    const State xstar = find_equilibrium(m).point;
    StlcOptions opts;
    opts.freeze = true;
    opts.uniform_r = true;
    opts.r_coeff = 0.1;
    const StlcCertificate cert = stlc_certificate(m, xstar, 0.1, 1e9, opts);
    CHECK((cert.Z - 0.1 * Matrix::Identity(m.dim(), m.dim())).norm() < 1e-8);
    CHECK(cert.min_singular == Approx(0.1).margin(1e-8));
}

TEST_CASE("certificate is positive along the orbit and scales like delta^(n1+1)") {
    const Model& m = osch::test::benchmark();
    const LimitSet& ls = osch::test::benchmark_limitset();
    const Orbit& orb = ls.orbits.front();

    std::vector<double> deltas{0.4, 0.2, 0.1, 0.05};
    std::vector<double> lx, ly;
    for (double d : deltas) {
        const StlcCertificate cert = stlc_certificate(m, orb.anchor, d, 1e9);
        CHECK(cert.min_singular > 0.0);
        lx.push_back(std::log(d));
        ly.push_back(std::log(cert.min_singular));
    }
    CHECK(ols_fit(lx, ly).slope == Approx(m.n1() + 1.0).margin(0.3));
    CHECK_THROWS_AS(stlc_certificate(m, orb.anchor, 1.5, 1.0), std::invalid_argument);
}

TEST_CASE("exceeding the control bound is reported, not fatal") {
    const Model& m = osch::test::benchmark();
    const LimitSet& ls = osch::test::benchmark_limitset();
    const StlcCertificate cert = stlc_certificate(m, ls.orbits.front().anchor, 0.1, 1e-6);
    CHECK(cert.bound_exceeded);
    CHECK(cert.min_singular > 0.0);
}

TEST_CASE("small-time cost scaling recovers the anisotropic exponents") {
    const Model& m = osch::test::benchmark();
    const std::vector<double> deltas{0.4, 0.2, 0.1, 0.05, 0.025};
    const CostScaling scalar = dm_cost_scaling(m, 1, 2, deltas); // noisy coordinate, m = 2
    CHECK(scalar.predicted == -1.0);
    CHECK(scalar.slope == Approx(-1.0).margin(0.2));
    const CostScaling integrated = dm_cost_scaling(m, 1, 1, deltas);
    CHECK(integrated.predicted == -3.0);
    CHECK(integrated.slope == Approx(-3.0).margin(0.2));
    CHECK_THROWS_AS(dm_cost_scaling(m, 1, 1, {0.1, 0.2}), std::invalid_argument);
}

TEST_CASE("scalar subsystem cost scales like 1/delta") {
    Model m = osch::test::benchmark();
    m.k12.n = 0;
    m = validate_model(m);
    const CostScaling sc = dm_cost_scaling(m, 1, 1, {0.4, 0.2, 0.1, 0.05, 0.025});
    CHECK(sc.predicted == -1.0);
    CHECK(sc.slope == Approx(-1.0).margin(0.2));
}
