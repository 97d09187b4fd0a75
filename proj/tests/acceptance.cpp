// Acceptance suite: twelve scripted studies on the benchmark model, one
// PASS/FAIL line per criterion. Run with no arguments for all criteria or
// with a list of indices (1-12). Exit code = number of failed criteria.

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "osch/action.hpp"
#include "osch/config.hpp"
#include "osch/control.hpp"
#include "osch/experiments.hpp"
#include "osch/hawkes.hpp"
#include "osch/limit.hpp"
#include "osch/model.hpp"
#include "osch/parallel.hpp"
#include "osch/rng.hpp"
#include "osch/sde.hpp"

using namespace osch;

namespace {

struct Check {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& msg) {
        if (!cond) {
            ok = false;
            if (!detail.empty()) detail += "; ";
            detail += msg;
        }
    }
    void note(const std::string& msg) {
        if (!detail.empty()) detail += "; ";
        detail += msg;
    }
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

const Model& bench() {
    static const Model m = benchmark_model();
    return m;
}

const LimitSet& bench_limitset() {
    static const LimitSet ls = [] {
        const Model& m = bench();
        return find_limit_cycles(m, default_trial_points(m, find_equilibrium(m)));
    }();
    return ls;
}

// 1. Cascade/convolution oracle equivalence on 50 random trajectories.
Check criterion_1() {
    Check c;
    const Model& m = bench();
    double worst = 0.0;
    for (int traj = 0; traj < 50; ++traj) {
        const HawkesResult res = simulate_hawkes(m, 5, 5, 10.0, 1000 + traj);
        for (std::size_t k = 0; k < res.path.states.size(); ++k) {
            const State oracle = cascade_from_events(m, res.events, res.path.time(k));
            worst = std::max(worst, (res.path.states[k] - oracle).lpNorm<Eigen::Infinity>());
        }
    }
    c.require(worst < 1e-8, "sup gap " + fmt(worst) + " >= 1e-8");
    c.note("sup gap " + fmt(worst));
    return c;
}

// 2. Equilibrium residual, root residuals, and the rho = -16 closed form.
Check criterion_2() {
    Check c;
    const Model& m = bench();
    const Equilibrium eq = find_equilibrium(m);
    const double residual = drift(m, eq.point).norm();
    c.require(residual < 1e-10, "equilibrium residual " + fmt(residual));

    for (const Complex& z : eq.roots) {
        const double res = std::abs(std::pow(m.nu1() + z, m.n1() + 1) *
                                        std::pow(m.nu2() + z, m.n2() + 1) -
                                    eq.rho);
        c.require(res < 1e-8, "root residual " + fmt(res));
    }

    c.require(std::abs(eq.rho + 16.0) < 1e-9, "benchmark rho " + fmt(eq.rho) + " != -16");
    const auto roots = characteristic_root_solve(1, 1, 1.0, 1.0, -16.0);
    const double r2 = std::sqrt(2.0);
    int unstable = 0;
    for (const Complex& z : roots) {
        const double err = std::min(std::abs(z.real() - (-1.0 + r2)), std::abs(z.real() - (-1.0 - r2)));
        c.require(err < 1e-10, "rho=-16 root real part off by " + fmt(err));
        if (z.real() > 0.0) ++unstable;
    }
    c.require(unstable == 2, "rho=-16 unstable count " + std::to_string(unstable));
    c.require(eq.unstable_count == 2, "benchmark unstable count");
    c.note("residual " + fmt(residual));
    return c;
}

// 3. At least one stable limit cycle: closure, trivial multiplier, attraction.
Check criterion_3() {
    Check c;
    const Model& m = bench();
    const LimitSet& ls = bench_limitset();
    c.require(!ls.orbits.empty(), "no orbit found");
    if (ls.orbits.empty()) return c;
    const Orbit* stable = nullptr;
    for (const Orbit& orb : ls.orbits) {
        if (orb.stable) stable = &orb;
    }
    c.require(stable != nullptr, "no stable orbit");
    if (!stable) return c;

    const double closure = (flow(m, stable->anchor, stable->period, 1e-3) - stable->anchor).norm();
    c.require(closure < 1e-6, "closure residual " + fmt(closure));
    double trivial_gap = 1e9;
    for (const Complex& mu : stable->floquet) trivial_gap = std::min(trivial_gap, std::abs(mu - 1.0));
    c.require(trivial_gap < 1e-3, "trivial multiplier gap " + fmt(trivial_gap));

    std::vector<State> ring;
    {
        State x = stable->anchor;
        const long steps = 8192;
        for (long k = 0; k < steps; ++k) {
            ring.push_back(x);
            rk4_step(m, x, stable->period / steps);
        }
    }
    RngStream rng = make_stream(2024, {3});
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        State x = ls.equilibrium.point;
        for (int i = 0; i < m.dim(); ++i) x[i] += 0.6 * (rng.uniform() - 0.5);
        const State end = flow(m, x, 40.0 * stable->period, 1e-3);
        double dist = 1e9;
        for (const State& p : ring) dist = std::min(dist, (end - p).norm());
        worst = std::max(worst, dist);
    }
    c.require(worst < 1e-3, "attraction distance " + fmt(worst));
    c.note("period " + fmt(stable->period) + ", closure " + fmt(closure) + ", attraction " + fmt(worst));
    return c;
}

// 4. Controllability: Gramian closed form, min-energy battery, steering.
Check criterion_4() {
    Check c;
    {
        Model m0 = bench();
        m0.k12.n = 0;
        m0 = validate_model(m0);
        const LinearSubsystem sys = linear_subsystem(m0, 1);
        const double gap = std::abs(gram_matrix(sys, 1.0)(0, 0) - (1.0 - std::exp(-2.0)) / 2.0);
        c.require(gap < 1e-12, "scalar Gramian gap " + fmt(gap));
    }
    {
        RngStream rng = make_stream(2024, {4, 1});
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            Model m = bench();
            m.k12.n = static_cast<int>(rng.uniform() * 4.0); // m <= 4
            m.k12.nu = 0.4 + 1.6 * rng.uniform();
            m = validate_model(m);
            const LinearSubsystem sys = linear_subsystem(m, 1);
            const double T = 0.4 + 3.0 * rng.uniform();
            Eigen::VectorXd x(sys.m), y(sys.m);
            for (int i = 0; i < sys.m; ++i) {
                x(i) = rng.normal();
                y(i) = rng.normal();
            }
            const MinEnergyControl ctl = min_energy_control(sys, T, x, y);
            const Eigen::VectorXd reached =
                integrate_linear(sys, x, T, [&](double t) { return ctl(t); }, T / 40000.0);
            worst = std::max(worst, (reached - y).norm());
        }
        c.require(worst < 1e-8, "min-energy endpoint residual " + fmt(worst));
        c.note("min-energy worst " + fmt(worst));
    }
    {
        const Model& m = bench();
        const State xstar = find_equilibrium(m).point;
        RngStream rng = make_stream(2024, {4, 2});
        double worst = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            State x = xstar, y = xstar;
            for (int i = 0; i < m.dim(); ++i) {
                x[i] += 0.4 * (rng.uniform() - 0.5);
                y[i] += 0.4 * (rng.uniform() - 0.5);
            }
            const SteerResult res = steer(m, x, y, 2.0, SteerOptions{1e-4});
            worst = std::max(worst, res.endpoint_residual);
        }
        c.require(worst < 1e-4, "steer residual " + fmt(worst));
        c.note("steer worst " + fmt(worst));
    }
    return c;
}

// 5. Weak Hormander rank at x* and 100 random points.
Check criterion_5() {
    Check c;
    const Model& m = bench();
    const State xstar = find_equilibrium(m).point;
    c.require(hormander_rank(m, xstar) == m.dim(), "rank deficit at x*");
    RngStream rng = make_stream(2024, {5});
    int failures = 0;
    for (int trial = 0; trial < 100; ++trial) {
        State x(m.dim());
        for (int i = 0; i < m.dim(); ++i) x[i] = 4.0 * (rng.uniform() - 0.5);
        if (hormander_rank(m, x) != m.dim()) ++failures;
    }
    c.require(failures == 0, std::to_string(failures) + " rank deficits among random points");
    return c;
}

// 6. STLC certificate: positivity at 4 phases and the delta-scaling slope.
Check criterion_6() {
    Check c;
    const Model& m = bench();
    const LimitSet& ls = bench_limitset();
    const Orbit& orb = stable_orbit(ls);
    double min_sv = 1e300;
    for (int k = 0; k < 4; ++k) {
        const State x0 = orb.samples[static_cast<std::size_t>(k) * orb.samples.size() / 4];
        const StlcCertificate cert = stlc_certificate(m, x0, 0.1, 1e9);
        min_sv = std::min(min_sv, cert.min_singular);
        c.require(cert.min_singular > 0.0, "non-positive singular value at phase " + std::to_string(k));
    }
    std::vector<double> lx, ly;
    for (double d : {0.4, 0.2, 0.1, 0.05}) {
        const StlcCertificate cert = stlc_certificate(m, orb.anchor, d, 1e9);
        lx.push_back(std::log(d));
        ly.push_back(std::log(cert.min_singular));
    }
    const double slope = ols_fit(lx, ly).slope;
    c.require(std::abs(slope - (m.n1() + 1.0)) < 0.3,
              "delta-scaling slope " + fmt(slope) + " vs " + fmt(m.n1() + 1.0));
    c.note("min sv " + fmt(min_sv) + ", slope " + fmt(slope));
    return c;
}

// 7. Small-time cost-scaling exponents for the m = 2 subsystem.
Check criterion_7() {
    Check c;
    const Model& m = bench();
    const std::vector<double> deltas{0.4, 0.2, 0.1, 0.05, 0.025};
    const CostScaling slow = dm_cost_scaling(m, 1, 1, deltas);
    c.require(std::abs(slow.slope - (-3.0)) < 0.2, "l=1 slope " + fmt(slow.slope));
    const CostScaling fast = dm_cost_scaling(m, 1, 2, deltas);
    c.require(std::abs(fast.slope - (-1.0)) < 0.2, "l=2 slope " + fmt(fast.slope));
    c.note("slopes " + fmt(slow.slope) + ", " + fmt(fast.slope));
    return c;
}

// 8. Quasipotential sanity: orbit equivalence, finiteness, refinement
//    monotonicity across two resolution levels.
Check criterion_8() {
    Check c;
    const Model& m = bench();
    const LimitSet& ls = bench_limitset();
    const Orbit& orb = stable_orbit(ls);

    VOptions vo;
    vo.jobs = default_jobs();
    vo.vt.seed = 8;

    const State a = orb.samples[0];
    const State quarter = flow(m, a, 0.25 * orb.period, 1e-3);
    const State half = flow(m, a, 0.5 * orb.period, 1e-3);
    for (const auto& [from, to, tag] : {std::tuple<State, State, const char*>{a, quarter, "a->quarter"},
                                        {quarter, a, "quarter->a"},
                                        {a, half, "a->half"},
                                        {half, a, "half->a"}}) {
        const VResult r = quasipotential_v(m, from, to, vo);
        c.require(r.cost < 1e-3, std::string(tag) + " cost " + fmt(r.cost));
    }

    const VResult down = quasipotential_v(m, ls.equilibrium.point, a, vo);
    const VResult up = quasipotential_v(m, a, ls.equilibrium.point, vo);
    c.require(std::isfinite(down.cost), "V(x*, orbit) not finite");
    c.require(std::isfinite(up.cost), "V(orbit, x*) not finite");
    c.note("V(x*,orbit) " + fmt(down.cost) + ", V(orbit,x*) " + fmt(up.cost));

    // Refinement monotonicity on the uphill instance.
    VOptions fine = vo;
    fine.t_count = 2 * vo.t_count - 1;
    fine.vt.intervals = 2 * vo.vt.intervals;
    fine.vt.restarts = 2 * vo.vt.restarts;
    for (std::size_t j = 0; j < up.t_grid.size(); ++j) {
        if (std::isfinite(up.costs[j])) fine.warm_starts[up.t_grid[j]] = up.best_control;
    }
    fine.warm_starts[up.argmin_T] = up.best_control;
    const VResult up_fine = quasipotential_v(m, a, ls.equilibrium.point, fine);
    c.require(up_fine.cost <= up.cost + 1e-9,
              "refinement increased the cost: " + fmt(up.cost) + " -> " + fmt(up_fine.cost));
    c.note("refined " + fmt(up_fine.cost));
    return c;
}

// 9. Freidlin-Wentzell weights: enumeration vs arborescence, L=2 closed form.
Check criterion_9() {
    Check c;
    {
        CostMatrix two;
        two.L = 2;
        two.entries = Eigen::MatrixXd(2, 2);
        two.entries << 0.0, 1.7, 0.4, 0.0;
        const Weights w = fw_weights(two);
        c.require(w.w(0) == 0.4 && w.w(1) == 1.7, "L=2 closed form");
    }
    RngStream rng = make_stream(2024, {9});
    int failures = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int L = 3 + static_cast<int>(rng.uniform() * 4.0);
        CostMatrix costs;
        costs.L = L;
        costs.entries = Eigen::MatrixXd::Zero(L, L);
        for (int i = 0; i < L; ++i)
            for (int j = 0; j < L; ++j)
                if (i != j) costs.entries(i, j) = rng.uniform();
        try {
            fw_weights(costs); // throws if enumeration and Edmonds disagree
        } catch (const numerical_error&) {
            ++failures;
        }
    }
    c.require(failures == 0, std::to_string(failures) + " enumeration mismatches");
    return c;
}

// 10. Exit-time growth across the N ladder.
Check criterion_10() {
    Check c;
    const Model& m = bench();
    const LimitSet& ls = bench_limitset();
    ExitTimeOptions opts;
    opts.Ns = {50, 100, 200, 400};
    opts.replicas = 200;
    opts.eps = 0.02;
    opts.eps_bar = 0.1;
    opts.cap = 20000.0;
    opts.dt = 1e-3;
    opts.seed = 10;
    opts.jobs = default_jobs();
    const ExitTimeResult res = exit_time_study(m, ls, opts);
    c.require(res.slope_lower_95 > 0.0, "slope lower bound " + fmt(res.slope_lower_95));
    c.require(res.fit.r_squared > 0.95, "R^2 " + fmt(res.fit.r_squared));
    c.require(!res.cap_warning, "cap hit in most replicas");
    c.note("slope " + fmt(res.fit.slope) + " (low95 " + fmt(res.slope_lower_95) + "), R2 " +
           fmt(res.fit.r_squared));
    return c;
}

// 11. Occupation concentration and the LDP slope against W.
Check criterion_11() {
    Check c;
    const Model& m = bench();
    const LimitSet& ls = bench_limitset();
    const Orbit& orb = stable_orbit(ls);
    const State dir = (orb.anchor - ls.equilibrium.point).normalized();
    Region region;
    region.center = orb.anchor + 0.6 * (orb.anchor - ls.equilibrium.point);
    region.radius = 0.06;

    OccupationOptions opts;
    opts.Ns = {50, 100, 200};
    opts.horizon = 20000.0;
    opts.replicas = 8;
    opts.eps = 0.02;
    opts.dt = 1e-3;
    opts.seed = 11;
    opts.jobs = default_jobs();
    opts.regions.push_back(region);
    const OccupationResult res = occupation_study(m, ls, opts);

    c.require(res.tube_occupation.size() == 3, "missing records");
    for (std::size_t i = 1; i < res.tube_occupation.size(); ++i) {
        c.require(res.tube_occupation[i].estimate > res.tube_occupation[i - 1].estimate,
                  "tube occupation not increasing at N=" + fmt(res.tube_occupation[i].key));
    }
    const RegionStudy& study = res.regions.front();
    c.require(study.fit_valid, "region fit unavailable (zero visits)");
    if (study.fit_valid) {
        c.require(study.slope_upper_95 < 0.0, "slope upper bound " + fmt(study.slope_upper_95));
    }

    // Compare the decay rate against inf_D W(x) from the action module.
    CostOptions copts;
    copts.phases_per_orbit = 4;
    copts.include_diagonal = false;
    copts.jobs = default_jobs();
    copts.v.vt.seed = 1101;
    const CostMatrix costs = class_costs(m, ls, copts);
    const Weights weights = fw_weights(costs);

    double inf_w = std::numeric_limits<double>::infinity();
    for (double depth : {0.0, 0.5, 1.0}) {
        const State x = region.center - depth * region.radius * dir;
        CostOptions wopts = copts;
        wopts.v.vt.seed = 1102 + static_cast<std::uint64_t>(depth * 10.0);
        inf_w = std::min(inf_w, w_of_x(m, ls, weights, x, wopts));
    }
    if (study.fit_valid) {
        const double ratio = std::abs(study.fit.slope) / inf_w;
        c.require(ratio > 0.5 && ratio < 2.0,
                  "slope/W ratio " + fmt(ratio) + " (slope " + fmt(study.fit.slope) + ", inf W " +
                      fmt(inf_w) + ")");
        c.note("slope " + fmt(study.fit.slope) + ", inf_D W " + fmt(inf_w) + ", ratio " + fmt(ratio));
    }
    return c;
}

// 12. Weak error between the Hawkes cascade and the diffusion.
Check criterion_12() {
    Check c;
    const Model& m = bench();
    const State xstar = find_equilibrium(m).point;
    WeakErrorOptions opts;
    opts.Ns = {10, 20, 40, 80};
    opts.replicas = 100000;
    opts.t = 1.0;
    opts.dt = 1e-3;
    opts.seed = 12;
    opts.jobs = default_jobs();
    opts.x0 = xstar;
    const double center = xstar[m.noisy2()];
    const auto cubic = [center, idx = m.noisy2()](const State& x) {
        const double u = x[idx] - center;
        return u * u * u;
    };
    const WeakErrorResult res = weak_error_study(m, cubic, opts);
    c.require(res.fit.n == 4, "fit degenerate");
    c.require(res.fit.slope > -2.5 && res.fit.slope < -1.5, "slope " + fmt(res.fit.slope));
    c.note("slope " + fmt(res.fit.slope) + (res.noise_warning ? " (noise warning)" : ""));
    return c;
}

} // namespace

int main(int argc, char** argv) {
    using Criterion = Check (*)();
    const Criterion criteria[12] = {criterion_1, criterion_2, criterion_3, criterion_4,
                                    criterion_5, criterion_6, criterion_7, criterion_8,
                                    criterion_9, criterion_10, criterion_11, criterion_12};
    std::vector<int> wanted;
    for (int i = 1; i < argc; ++i) {
        const int k = std::atoi(argv[i]);
        if (k < 1 || k > 12) {
            std::fprintf(stderr, "usage: acceptance [criterion 1-12]...\n");
            return 64;
        }
        wanted.push_back(k);
    }
    if (wanted.empty()) {
        for (int k = 1; k <= 12; ++k) wanted.push_back(k);
    }
    int failures = 0;
    for (int k : wanted) {
        Check result;
        try {
            result = criteria[k - 1]();
        } catch (const std::exception& e) {
            result.ok = false;
            result.detail = std::string("exception: ") + e.what();
        }
        std::printf("criterion %2d: %s%s%s\n", k, result.ok ? "PASS" : "FAIL",
                    result.detail.empty() ? "" : " -- ", result.detail.c_str());
        std::fflush(stdout);
        if (!result.ok) ++failures;
    }
    return failures;
}
