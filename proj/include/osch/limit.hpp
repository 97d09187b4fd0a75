#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "osch/common.hpp"
#include "osch/model.hpp"
#include "osch/sde.hpp"

namespace osch {

using Complex = std::complex<double>;

// ---------------------------------------------------------------------------
// Deterministic integration
// ---------------------------------------------------------------------------

inline void rk4_step(const Model& m, State& x, double dt) {
    const State k1 = drift(m, x);
    const State k2 = drift(m, x + 0.5 * dt * k1);
    const State k3 = drift(m, x + 0.5 * dt * k2);
    const State k4 = drift(m, x + dt * k3);
    x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

inline Path integrate_limit(const Model& m, const State& x0, double horizon, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("integrate_limit: dt must be positive");
    const long steps = std::max<long>(0, std::llround(horizon / dt));
    Path path;
    path.dt = dt;
    path.states.reserve(static_cast<std::size_t>(steps) + 1);
    State x = x0;
    path.states.push_back(x);
    for (long k = 0; k < steps; ++k) {
        rk4_step(m, x, dt);
        path.states.push_back(x);
    }
    return path;
}

inline State flow(const Model& m, State x, double T, double dt) {
    long steps = std::max<long>(1, std::llround(T / dt));
    const double h = T / static_cast<double>(steps);
    for (long k = 0; k < steps; ++k) rk4_step(m, x, h);
    return x;
}

/// Flow together with the monodromy/variational solution dM/dt = Db(x) M.
inline std::pair<State, Matrix> flow_with_monodromy(const Model& m, State x, double T, double dt) {
    long steps = std::max<long>(1, std::llround(T / dt));
    const double h = T / static_cast<double>(steps);
    Matrix M = Matrix::Identity(m.dim(), m.dim());
    for (long k = 0; k < steps; ++k) {
        const State k1 = drift(m, x);
        const Matrix K1 = drift_jacobian(m, x) * M;
        const State x2 = x + 0.5 * h * k1;
        const State k2 = drift(m, x2);
        const Matrix K2 = drift_jacobian(m, x2) * (M + 0.5 * h * K1);
        const State x3 = x + 0.5 * h * k2;
        const State k3 = drift(m, x3);
        const Matrix K3 = drift_jacobian(m, x3) * (M + 0.5 * h * K2);
        const State x4 = x + h * k3;
        const State k4 = drift(m, x4);
        const Matrix K4 = drift_jacobian(m, x4) * (M + h * K3);
        x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        M += h / 6.0 * (K1 + 2.0 * K2 + 2.0 * K3 + K4);
    }
    return {x, M};
}

// ---------------------------------------------------------------------------
// Equilibrium and characteristic roots
// ---------------------------------------------------------------------------

struct Equilibrium {
    State point;
    double rho = 0.0;
    std::vector<Complex> roots;
    int unstable_count = 0;
    bool assumption4 = false;
};

/// All n roots of (nu1 + z)^(n1+1) (nu2 + z)^(n2+1) = rho, via the companion
/// matrix of the expanded polynomial plus a complex Newton polish on the
/// product form. Returned sorted by (Re, Im); conjugate-closed.
inline std::vector<Complex> characteristic_root_solve(int n1, int n2, double nu1, double nu2,
                                                      double rho) {
    const int m1 = n1 + 1, m2 = n2 + 1;
    const int n = m1 + m2;

    // Coefficients of (nu1+z)^m1 as binomials, then convolve with (nu2+z)^m2.
    std::vector<double> a(static_cast<std::size_t>(m1) + 1, 0.0);
    std::vector<double> b(static_cast<std::size_t>(m2) + 1, 0.0);
    const auto fill_binomial = [](std::vector<double>& c, int mm, double nu) {
        double binom = 1.0;
        for (int k = 0; k <= mm; ++k) {
            // coefficient of z^k is C(mm,k) nu^(mm-k)
            c[static_cast<std::size_t>(k)] = binom * std::pow(nu, static_cast<double>(mm - k));
            binom = binom * static_cast<double>(mm - k) / static_cast<double>(k + 1);
        }
    };
    fill_binomial(a, m1, nu1);
    fill_binomial(b, m2, nu2);
    std::vector<double> coeff(static_cast<std::size_t>(n) + 1, 0.0);
    for (int i = 0; i <= m1; ++i)
        for (int j = 0; j <= m2; ++j) coeff[static_cast<std::size_t>(i + j)] += a[static_cast<std::size_t>(i)] * b[static_cast<std::size_t>(j)];
    coeff[0] -= rho;

    Matrix companion = Matrix::Zero(n, n);
    for (int i = 1; i < n; ++i) companion(i, i - 1) = 1.0;
    for (int i = 0; i < n; ++i) companion(i, n - 1) = -coeff[static_cast<std::size_t>(i)];
    Eigen::EigenSolver<Matrix> es(companion);
    if (es.info() != Eigen::Success) throw numerical_error("characteristic_roots: eigensolver failed");

    const auto P = [&](Complex z) {
        return std::pow(nu1 + z, m1) * std::pow(nu2 + z, m2) - rho;
    };
    const auto dP = [&](Complex z) {
        return std::pow(nu1 + z, m1 - 1) * std::pow(nu2 + z, m2 - 1) *
               (static_cast<double>(m1) * (nu2 + z) + static_cast<double>(m2) * (nu1 + z));
    };

    std::vector<Complex> roots(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Complex z = es.eigenvalues()(i);
        for (int it = 0; it < 30; ++it) {
            const Complex f = P(z);
            const Complex df = dP(z);
            if (std::abs(df) < 1e-300) break;
            const Complex step = f / df;
            z -= step;
            if (std::abs(step) < 1e-15 * (1.0 + std::abs(z))) break;
        }
        roots[static_cast<std::size_t>(i)] = z;
    }
    std::sort(roots.begin(), roots.end(), [](const Complex& u, const Complex& v) {
        if (u.real() != v.real()) return u.real() < v.real();
        return u.imag() < v.imag();
    });
    return roots;
}

/// Fills rho, the characteristic roots at the given equilibrium point, the
/// unstable-root count and the oscillation flag (rho < 0 with two roots in
/// the open right half plane).
inline Equilibrium characteristic_roots(const Model& m, const State& point) {
    Equilibrium eq;
    eq.point = point;
    eq.rho = m.c1() * m.c2() * m.f1.deriv(point[0]) * m.f2.deriv(point[m.pop2_first()]);
    eq.roots = characteristic_root_solve(m.n1(), m.n2(), m.nu1(), m.nu2(), eq.rho);
    eq.unstable_count = static_cast<int>(
        std::count_if(eq.roots.begin(), eq.roots.end(), [](const Complex& z) { return z.real() > 0.0; }));
    eq.assumption4 = eq.rho < 0.0 && eq.unstable_count >= 2;
    return eq;
}

/// Solves b(x) = 0 through the scalar reduction
///   x1 = (c1 / nu1^(n1+1)) f2( (c2 / nu2^(n2+1)) f1(x1) ),
/// by bisection on a guaranteed sign-changing bracket (the right side is
/// bounded by fmax2 / nu1^(n1+1)), then back-fills the cascade coordinates
/// via x_{k,l} = nu_k x_{k,l-1}.
inline Equilibrium find_equilibrium(const Model& m) {
    const double s1 = m.c1() / std::pow(m.nu1(), static_cast<double>(m.n1() + 1));
    const double s2 = m.c2() / std::pow(m.nu2(), static_cast<double>(m.n2() + 1));
    const auto g = [&](double x1) { return x1 - s1 * m.f2.value(s2 * m.f1.value(x1)); };

    const double radius = m.f2.fmax / std::pow(m.nu1(), static_cast<double>(m.n1() + 1)) + 1.0;
    double lo = -radius, hi = radius;
    double glo = g(lo), ghi = g(hi);
    if (!(glo < 0.0 && ghi > 0.0)) {
        throw numerical_error("find_equilibrium: bracket failed, g(" + std::to_string(lo) + ")=" +
                              std::to_string(glo) + ", g(" + std::to_string(hi) + ")=" +
                              std::to_string(ghi));
    }
    for (int it = 0; it < 200 && hi - lo > 1e-16 * (1.0 + std::abs(lo) + std::abs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (g(mid) < 0.0) lo = mid; else hi = mid;
    }
    const double x1 = 0.5 * (lo + hi);

    State x(m.dim());
    for (int i = 0; i <= m.n1(); ++i) x[i] = std::pow(m.nu1(), static_cast<double>(i)) * x1;
    const double y1 = s2 * m.f1.value(x1);
    for (int j = 0; j <= m.n2(); ++j) x[m.pop2_first() + j] = std::pow(m.nu2(), static_cast<double>(j)) * y1;

    Equilibrium eq = characteristic_roots(m, x);
    if (drift(m, x).norm() > 1e-9) {
        throw numerical_error("find_equilibrium: residual " + std::to_string(drift(m, x).norm()));
    }
    return eq;
}

// ---------------------------------------------------------------------------
// Limit cycles
// ---------------------------------------------------------------------------

struct Orbit {
    State anchor;
    double period = 0.0;
    std::vector<State> samples;
    std::vector<Complex> floquet; // full multiplier set, trivial one included
    bool stable = false;
    double closure_residual = 0.0;
};

struct LimitSet {
    Equilibrium equilibrium;
    std::vector<Orbit> orbits;
    bool assumption4 = false;
    bool cycle_search_failed = false; // assumption4 held but no orbit was found

    int n_classes() const { return 1 + static_cast<int>(orbits.size()); }

    /// Phase samples of class i (class 0 is the equilibrium).
    std::vector<State> class_samples(int i, int count) const {
        if (i == 0) return {equilibrium.point};
        const Orbit& orb = orbits[static_cast<std::size_t>(i - 1)];
        std::vector<State> out;
        const std::size_t stride = std::max<std::size_t>(1, orb.samples.size() / static_cast<std::size_t>(count));
        for (std::size_t k = 0; k < orb.samples.size() && out.size() < static_cast<std::size_t>(count); k += stride)
            out.push_back(orb.samples[k]);
        return out;
    }
};

struct CycleOptions {
    double dt = 1e-3;            // integration step for searches and refinement
    double transient_periods = 50.0;
    double max_search_periods = 120.0;
    int max_crossings = 60;
    double crossing_tol = 1e-7;  // successive-crossing convergence target
    double dedup_tol = 1e-3;     // Hausdorff tolerance between orbits
    int samples_per_orbit = 256;
    int newton_max_iter = 30;
    double newton_tol = 1e-11;
};

namespace detail {

/// Symmetric Hausdorff distance between two sample clouds.
inline double hausdorff(const std::vector<State>& A, const std::vector<State>& B) {
    const auto one_sided = [](const std::vector<State>& U, const std::vector<State>& V) {
        double worst = 0.0;
        for (const auto& u : U) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& v : V) best = std::min(best, (u - v).norm());
            worst = std::max(worst, best);
        }
        return worst;
    };
    return std::max(one_sided(A, B), one_sided(B, A));
}

/// Newton refinement of (anchor, period) for the shooting residual
/// phi_T(x) - x = 0 together with the section constraint normal.(x-x*) = 0.
inline bool refine_orbit(const Model& m, const State& section_point, const State& normal,
                         State& anchor, double& period, Matrix& monodromy,
                         const CycleOptions& opts) {
    const int n = m.dim();
    for (int it = 0; it < opts.newton_max_iter; ++it) {
        auto [xT, M] = flow_with_monodromy(m, anchor, period, opts.dt);
        monodromy = M;
        Eigen::VectorXd R(n + 1);
        R.head(n) = xT - anchor;
        R(n) = normal.dot(anchor - section_point);
        const double res = R.head(n).norm();
        if (res < opts.newton_tol && std::abs(R(n)) < opts.newton_tol) return true;

        Matrix J = Matrix::Zero(n + 1, n + 1);
        J.topLeftCorner(n, n) = M - Matrix::Identity(n, n);
        J.block(0, n, n, 1) = drift(m, xT);
        J.block(n, 0, 1, n) = normal.transpose();
        Eigen::VectorXd step = J.partialPivLu().solve(-R);
        if (!step.allFinite()) return false;

        // Damped update: halve until the shooting residual does not blow up.
        double scale = 1.0;
        for (int half = 0; half < 8; ++half) {
            State cand = anchor + scale * step.head(n);
            double cand_T = period + scale * step(n);
            if (cand_T > 10.0 * opts.dt) {
                const State xT_cand = flow(m, cand, cand_T, opts.dt);
                if ((xT_cand - cand).norm() < std::max(res, opts.newton_tol)) {
                    anchor = cand;
                    period = cand_T;
                    break;
                }
            }
            scale *= 0.5;
            if (half == 7) return false;
        }
    }
    // Accept if the final closure is still tight enough for the contract.
    auto [xT, M] = flow_with_monodromy(m, anchor, period, opts.dt);
    monodromy = M;
    return (xT - anchor).norm() < 1e-8;
}

} // namespace detail

/// Searches for periodic orbits from the given trial points: transient decay,
/// oriented Poincare crossings of the section through x*, Newton refinement
/// on the return map, Floquet classification, Hausdorff deduplication.
/// Reports whatever the trial battery finds; completeness is not certified.
inline LimitSet find_limit_cycles(const Model& m, const std::vector<State>& trials,
                                  const CycleOptions& opts = {}) {
    LimitSet out;
    out.equilibrium = find_equilibrium(m);
    out.assumption4 = out.equilibrium.assumption4;
    if (!out.assumption4) return out;

    const State& xstar = out.equilibrium.point;
    const int n = m.dim();

    // Leading unstable direction fixes the section orientation scale.
    const Complex lead = *std::max_element(
        out.equilibrium.roots.begin(), out.equilibrium.roots.end(),
        [](const Complex& u, const Complex& v) { return u.real() < v.real(); });
    const double period_guess = lead.imag() != 0.0 ? 2.0 * 3.14159265358979323846 / std::abs(lead.imag()) : 1.0;

    Eigen::EigenSolver<Matrix> es(drift_jacobian(m, xstar));
    int lead_idx = 0;
    for (int i = 1; i < n; ++i) {
        if (std::abs(es.eigenvalues()(i) - lead) < std::abs(es.eigenvalues()(lead_idx) - lead)) lead_idx = i;
    }
    State dir = es.eigenvectors().col(lead_idx).real();
    if (dir.norm() < 1e-8) dir = es.eigenvectors().col(lead_idx).imag();
    dir.normalize();

    const State probe = xstar + 0.01 * (1.0 + xstar.norm()) * dir;
    State normal = drift(m, probe);
    if (normal.norm() < 1e-10) normal = dir;
    normal.normalize();

    for (const State& trial : trials) {
        State x = flow(m, trial, opts.transient_periods * period_guess, opts.dt);

        // Oriented section crossings; bisect each bracketing step.
        double s_prev = normal.dot(x - xstar);
        std::optional<std::pair<double, State>> last_cross;
        State anchor;
        double period = -1.0;
        double t = 0.0;
        const double t_max = opts.max_search_periods * period_guess;
        int crossings = 0;
        while (t < t_max && crossings < opts.max_crossings) {
            const State x_prev = x;
            rk4_step(m, x, opts.dt);
            t += opts.dt;
            const double s_cur = normal.dot(x - xstar);
            if (s_prev < 0.0 && s_cur >= 0.0) {
                double lo = 0.0, hi = opts.dt;
                State x_lo = x_prev;
                for (int it = 0; it < 60 && hi - lo > 1e-15; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    State x_mid = x_prev;
                    rk4_step(m, x_mid, mid);
                    if (normal.dot(x_mid - xstar) < 0.0) { lo = mid; x_lo = x_mid; } else { hi = mid; }
                }
                State x_cross = x_lo;
                rk4_step(m, x_cross, 0.5 * (hi - lo));
                const double t_cross = t - opts.dt + 0.5 * (lo + hi);
                ++crossings;
                if (last_cross) {
                    const double gap = (x_cross - last_cross->second).norm();
                    anchor = x_cross;
                    period = t_cross - last_cross->first;
                    if (gap < opts.crossing_tol) break;
                }
                last_cross = {t_cross, x_cross};
            }
            s_prev = s_cur;
        }
        if (period <= 10.0 * opts.dt) continue;

        Matrix monodromy;
        State refined = anchor;
        double T = period;
        if (!detail::refine_orbit(m, xstar, normal, refined, T, monodromy, opts)) continue;

        Orbit orb;
        orb.anchor = refined;
        orb.period = T;
        orb.closure_residual = (flow(m, refined, T, opts.dt) - refined).norm();

        // Reject spurious fixed-point "orbits" collapsed onto x*.
        const long sample_steps = std::max<long>(1, std::llround(T / opts.dt));
        const double h = T / static_cast<double>(sample_steps);
        const long stride = std::max<long>(1, sample_steps / opts.samples_per_orbit);
        State xs = refined;
        double max_dist = 0.0;
        for (long k = 0; k < sample_steps; ++k) {
            if (k % stride == 0) orb.samples.push_back(xs);
            max_dist = std::max(max_dist, (xs - xstar).norm());
            rk4_step(m, xs, h);
        }
        if (max_dist < 10.0 * opts.dedup_tol) continue;

        Eigen::EigenSolver<Matrix> fes(monodromy);
        for (int i = 0; i < n; ++i) orb.floquet.push_back(fes.eigenvalues()(i));
        std::sort(orb.floquet.begin(), orb.floquet.end(), [](const Complex& u, const Complex& v) {
            return std::abs(u) > std::abs(v);
        });
        int trivial = 0;
        for (int i = 1; i < n; ++i) {
            if (std::abs(orb.floquet[static_cast<std::size_t>(i)] - 1.0) <
                std::abs(orb.floquet[static_cast<std::size_t>(trivial)] - 1.0))
                trivial = i;
        }
        orb.stable = true;
        for (int i = 0; i < n; ++i) {
            if (i == trivial) continue;
            if (std::abs(orb.floquet[static_cast<std::size_t>(i)]) >= 1.0) orb.stable = false;
        }

        bool duplicate = false;
        for (const Orbit& existing : out.orbits) {
            if (detail::hausdorff(existing.samples, orb.samples) < opts.dedup_tol) {
                duplicate = true;
                break;
            }
        }
        if (!duplicate) out.orbits.push_back(std::move(orb));
    }

    std::sort(out.orbits.begin(), out.orbits.end(), [](const Orbit& a, const Orbit& b) {
        for (int i = 0; i < a.anchor.size(); ++i) {
            if (a.anchor[i] != b.anchor[i]) return a.anchor[i] < b.anchor[i];
        }
        return a.period < b.period;
    });
    out.cycle_search_failed = out.orbits.empty();
    return out;
}

/// Default trial battery: perturbations of x* along the leading eigenplane
/// plus a few wider deterministic offsets.
inline std::vector<State> default_trial_points(const Model& m, const Equilibrium& eq, int count = 6) {
    std::vector<State> trials;
    const int n = m.dim();
    for (int k = 0; k < count; ++k) {
        State x = eq.point;
        const double r = 0.2 + 0.6 * static_cast<double>(k) / std::max(1, count - 1);
        for (int i = 0; i < n; ++i) {
            x[i] += r * std::cos(2.0 * 3.14159265358979323846 * (k + 1) * (i + 1) / static_cast<double>(n + 2));
        }
        trials.push_back(x);
    }
    return trials;
}

} // namespace osch
