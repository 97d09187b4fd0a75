#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "osch/common.hpp"
#include "osch/hawkes.hpp"
#include "osch/limit.hpp"
#include "osch/model.hpp"
#include "osch/sde.hpp"
#include "osch/stats.hpp"

namespace osch {

// ---------------------------------------------------------------------------
// Gauss-Legendre quadrature (cached nodes on [-1, 1])
// ---------------------------------------------------------------------------

struct GaussLegendre {
    std::vector<double> nodes;
    std::vector<double> weights;
};

inline const GaussLegendre& gauss_legendre_64() {
    static const GaussLegendre gl = [] {
        constexpr int n = 64;
        GaussLegendre g;
        g.nodes.resize(n);
        g.weights.resize(n);
        for (int i = 0; i < n; ++i) {
            double x = std::cos(3.14159265358979323846 * (i + 0.75) / (n + 0.5));
            double dp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = x;
                for (int k = 2; k <= n; ++k) {
                    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n * (x * p1 - p0) / (x * x - 1.0);
                const double dx = p1 / dp;
                x -= dx;
                if (std::abs(dx) < 1e-15) break;
            }
            g.nodes[static_cast<std::size_t>(i)] = x;
            g.weights[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        return g;
    }();
    return gl;
}

// ---------------------------------------------------------------------------
// Decoupled linear subsystems
// ---------------------------------------------------------------------------

/// One population's cascade with the cross-population coupling absorbed into
/// the scalar input: x' = A x + B u, A = -nu I + superdiagonal, B = e_m.
struct LinearSubsystem {
    Matrix A;
    Eigen::VectorXd B;
    int population = 1;
    int m = 1;
    double nu = 1.0;
};

inline LinearSubsystem linear_subsystem(const Model& model, int population) {
    if (population != 1 && population != 2) throw std::invalid_argument("population must be 1 or 2");
    LinearSubsystem sys;
    sys.population = population;
    sys.nu = population == 1 ? model.nu1() : model.nu2();
    sys.m = (population == 1 ? model.n1() : model.n2()) + 1;
    sys.A = Matrix::Zero(sys.m, sys.m);
    for (int i = 0; i < sys.m; ++i) {
        sys.A(i, i) = -sys.nu;
        if (i + 1 < sys.m) sys.A(i, i + 1) = 1.0;
    }
    sys.B = Eigen::VectorXd::Zero(sys.m);
    sys.B(sys.m - 1) = 1.0;
    return sys;
}

inline Matrix kalman_matrix(const LinearSubsystem& sys) {
    Matrix K(sys.m, sys.m);
    Eigen::VectorXd v = sys.B;
    for (int j = 0; j < sys.m; ++j) {
        K.col(j) = v;
        v = sys.A * v;
    }
    return K;
}

/// exp(sA) B in closed form: component i is exp(-nu s) s^(m-1-i) / (m-1-i)!.
inline Eigen::VectorXd propagated_input(const LinearSubsystem& sys, double s) {
    Eigen::VectorXd g(sys.m);
    const double decay = std::exp(-sys.nu * s);
    double pw = 1.0;
    for (int i = sys.m - 1; i >= 0; --i) {
        g(i) = decay * pw;
        pw *= s / static_cast<double>(sys.m - i);
    }
    return g;
}

/// exp(sA) x via the closed-form cascade flow.
inline Eigen::VectorXd linear_flow(const LinearSubsystem& sys, Eigen::VectorXd x, double s) {
    cascade_block_flow(sys.nu, s, x.data(), sys.m);
    return x;
}

/// Controllability Gramian Q_T = int_0^T exp(sA) B B* exp(sA*) ds by
/// 64-node Gauss-Legendre; the integrand is analytic so this is exact to
/// machine precision at moderate nu T.
inline Matrix gram_matrix(const LinearSubsystem& sys, double T) {
    if (!(T > 0.0)) throw std::invalid_argument("gram_matrix: T must be positive");
    const GaussLegendre& gl = gauss_legendre_64();
    Matrix Q = Matrix::Zero(sys.m, sys.m);
    for (std::size_t k = 0; k < gl.nodes.size(); ++k) {
        const double s = 0.5 * T * (gl.nodes[k] + 1.0);
        const Eigen::VectorXd g = propagated_input(sys, s);
        Q += (0.5 * T * gl.weights[k]) * (g * g.transpose());
    }
    return Q;
}

/// Minimum-energy open-loop control steering x to y over [0, T]:
///   u(t) = B* exp((T-t) A*) Q_T^{-1} (y - exp(TA) x),
/// with cost <exp(TA)x - y, Q_T^{-1}(exp(TA)x - y)> = int_0^T u(t)^2 dt.
struct MinEnergyControl {
    LinearSubsystem sys;
    double T = 0.0;
    Eigen::VectorXd q; // Q_T^{-1} (y - exp(TA) x)
    double cost = 0.0;
    double gram_condition = 0.0;
    bool ill_conditioned = false;

    double operator()(double t) const { return propagated_input(sys, T - t).dot(q); }
};

inline MinEnergyControl min_energy_control(const LinearSubsystem& sys, double T,
                                           const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    MinEnergyControl ctl;
    ctl.sys = sys;
    ctl.T = T;
    const Matrix Q = gram_matrix(sys, T);
    Eigen::SelfAdjointEigenSolver<Matrix> es(Q);
    const double lam_min = es.eigenvalues().minCoeff();
    const double lam_max = es.eigenvalues().maxCoeff();
    ctl.gram_condition = lam_min > 0.0 ? lam_max / lam_min : std::numeric_limits<double>::infinity();
    ctl.ill_conditioned = !(ctl.gram_condition < 1e12);
    const Eigen::VectorXd eta = y - linear_flow(sys, x, T);
    ctl.q = es.eigenvectors() *
            (es.eigenvalues().array().inverse().matrix().asDiagonal() *
             (es.eigenvectors().transpose() * eta));
    ctl.cost = eta.dot(ctl.q);
    return ctl;
}

/// RK4 check integration of x' = Ax + Bu with a continuous-time control.
inline Eigen::VectorXd integrate_linear(const LinearSubsystem& sys, Eigen::VectorXd x, double T,
                                        const std::function<double(double)>& u, double dt) {
    const long steps = std::max<long>(1, std::llround(T / dt));
    const double h = T / static_cast<double>(steps);
    for (long k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * h;
        const auto f = [&](const Eigen::VectorXd& z, double s) -> Eigen::VectorXd {
            return sys.A * z + sys.B * u(s);
        };
        const Eigen::VectorXd k1 = f(x, t);
        const Eigen::VectorXd k2 = f(x + 0.5 * h * k1, t + 0.5 * h);
        const Eigen::VectorXd k3 = f(x + 0.5 * h * k2, t + 0.5 * h);
        const Eigen::VectorXd k4 = f(x + h * k3, t + h);
        x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return x;
}

// ---------------------------------------------------------------------------
// Controls on a uniform grid and controlled integration
// ---------------------------------------------------------------------------

/// Piecewise-constant two-component control; values[i] acts on
/// [i dt, (i+1) dt). Piecewise constants are the Cameron-Martin
/// representatives everything downstream optimizes over.
struct Control {
    double dt = 0.0;
    std::vector<Eigen::Vector2d> values;

    double duration() const { return dt * static_cast<double>(values.size()); }

    double action() const {
        double a = 0.0;
        for (const auto& v : values) a += v.squaredNorm();
        return 0.5 * a * dt;
    }
};

inline void controlled_rk4_step(const Model& m, State& x, const Eigen::Vector2d& hdot, double dt) {
    const auto f = [&](const State& z) -> State {
        return drift(m, z) + dispersion(m, z) * hdot;
    };
    const State k1 = f(x);
    const State k2 = f(x + 0.5 * dt * k1);
    const State k3 = f(x + 0.5 * dt * k2);
    const State k4 = f(x + dt * k3);
    x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// RK4 path of dphi = b(phi) dt + sigma(phi) hdot dt. dt must divide the
/// control grid step so every RK4 step sees a constant control value.
inline Path integrate_controlled(const Model& m, const State& x0, const Control& ctl, double dt) {
    const double ratio = ctl.dt / dt;
    const long nsub = std::llround(ratio);
    if (nsub < 1 || std::abs(ratio - static_cast<double>(nsub)) > 1e-9 * ratio) {
        throw std::invalid_argument("integrate_controlled: dt must divide the control grid step");
    }
    Path path;
    path.dt = dt;
    path.states.reserve(ctl.values.size() * static_cast<std::size_t>(nsub) + 1);
    State x = x0;
    path.states.push_back(x);
    for (const auto& v : ctl.values) {
        for (long s = 0; s < nsub; ++s) {
            controlled_rk4_step(m, x, v, ctl.dt / static_cast<double>(nsub));
            path.states.push_back(x);
        }
    }
    return path;
}

// ---------------------------------------------------------------------------
// Constructive steering
// ---------------------------------------------------------------------------

struct SteerResult {
    Control control;
    State achieved;
    double action = 0.0;
    double endpoint_residual = 0.0;
    double u_sup = 0.0; // sup of the decoupled scalar controls
};

struct SteerOptions {
    double dt = 1e-3; // control grid step and verification step
};

/// Steers the nonlinear system from x to y in time T by decoupling the two
/// populations: each cascade becomes a linear system with scalar input
/// u_k = (coupling term) + (noise coefficient) hdot_k, the minimum-energy
/// u_k is computed in deviation variables around the equilibrium hold input
/// (so steering x* to x* costs nothing), and hdot is recovered from the
/// decoupled trajectories. The result is verified against the full dynamics.
inline SteerResult steer(const Model& m, const State& x, const State& y, double T,
                         const SteerOptions& opts = {}) {
    if (!(T > 0.0)) throw std::invalid_argument("steer: T must be positive");
    const int n1 = m.n1();
    const int m1 = n1 + 1;
    const int m2 = m.n2() + 1;

    const Equilibrium eq = find_equilibrium(m);
    const LinearSubsystem sys1 = linear_subsystem(m, 1);
    const LinearSubsystem sys2 = linear_subsystem(m, 2);

    // Hold inputs making x* a fixed point of each decoupled block.
    const double u1_hold = m.c1() * m.f2.value(eq.point[m.pop2_first()]);
    const double u2_hold = m.c2() * m.f1.value(eq.point[0]);

    const MinEnergyControl v1 = min_energy_control(
        sys1, T, x.head(m1) - eq.point.head(m1), y.head(m1) - eq.point.head(m1));
    const MinEnergyControl v2 = min_energy_control(
        sys2, T, x.tail(m2) - eq.point.tail(m2), y.tail(m2) - eq.point.tail(m2));

    const long intervals = std::max<long>(1, std::llround(T / opts.dt));
    const double dt = T / static_cast<double>(intervals);

    // March the decoupled blocks at half steps to read midpoint values.
    Eigen::VectorXd phi = x.head(m1);
    Eigen::VectorXd psi = x.tail(m2);
    const auto u1 = [&](double t) { return u1_hold + v1(t); };
    const auto u2 = [&](double t) { return u2_hold + v2(t); };

    SteerResult out;
    out.control.dt = dt;
    out.control.values.reserve(static_cast<std::size_t>(intervals));

    const auto half_step = [&](Eigen::VectorXd& z, const LinearSubsystem& sys,
                               const std::function<double(double)>& u, double t0, double h) {
        const auto f = [&](const Eigen::VectorXd& w, double s) -> Eigen::VectorXd {
            return sys.A * w + sys.B * u(s);
        };
        const Eigen::VectorXd k1 = f(z, t0);
        const Eigen::VectorXd k2 = f(z + 0.5 * h * k1, t0 + 0.5 * h);
        const Eigen::VectorXd k3 = f(z + 0.5 * h * k2, t0 + 0.5 * h);
        const Eigen::VectorXd k4 = f(z + h * k3, t0 + h);
        z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    };

    for (long i = 0; i < intervals; ++i) {
        const double t0 = static_cast<double>(i) * dt;
        const double tm = t0 + 0.5 * dt;
        half_step(phi, sys1, u1, t0, 0.5 * dt);
        half_step(psi, sys2, u2, t0, 0.5 * dt);

        const double u1m = u1(tm);
        const double u2m = u2(tm);
        out.u_sup = std::max(out.u_sup, std::abs(u1m) + std::abs(u2m));
        const double f2v = m.f2.value(psi(0));
        const double f1v = m.f1.value(phi(0));
        Eigen::Vector2d hdot;
        hdot(1) = (u1m - m.c1() * f2v) / (m.c1() / std::sqrt(m.p2) * std::sqrt(f2v));
        hdot(0) = (u2m - m.c2() * f1v) / (m.c2() / std::sqrt(m.p1) * std::sqrt(f1v));
        out.control.values.push_back(hdot);

        half_step(phi, sys1, u1, tm, 0.5 * dt);
        half_step(psi, sys2, u2, tm, 0.5 * dt);
    }

    out.action = out.control.action();
    const Path check = integrate_controlled(m, x, out.control, dt);
    out.achieved = check.back();
    out.endpoint_residual = (out.achieved - y).norm();
    return out;
}

// ---------------------------------------------------------------------------
// Hormander bracket rank
// ---------------------------------------------------------------------------

namespace detail {

using VectorField = std::function<State(const State&)>;

inline Matrix fd_jacobian(const VectorField& F, const State& x, double h0 = 1e-4) {
    const int n = static_cast<int>(x.size());
    Matrix J(n, n);
    for (int j = 0; j < n; ++j) {
        const double h = h0 * (1.0 + std::abs(x[j]));
        State xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        J.col(j) = (F(xp) - F(xm)) / (2.0 * h);
    }
    return J;
}

/// Analytic Jacobian of dispersion column `col` (0 or 1).
inline Matrix dispersion_column_jacobian(const Model& m, const State& x, int col) {
    Matrix J = Matrix::Zero(m.dim(), m.dim());
    if (col == 1) {
        const double f = m.f2.value(x[m.pop2_first()]);
        J(m.noisy1(), m.pop2_first()) =
            m.c1() / std::sqrt(m.p2) * m.f2.deriv(x[m.pop2_first()]) / (2.0 * std::sqrt(f));
    } else {
        const double f = m.f1.value(x[0]);
        J(m.noisy2(), 0) = m.c2() / std::sqrt(m.p1) * m.f1.deriv(x[0]) / (2.0 * std::sqrt(f));
    }
    return J;
}

} // namespace detail

struct BracketSpan {
    Matrix columns; // n x (2 * (depth+1)) bracket directions evaluated at x
    int rank = 0;
};

/// Columns sigma^1, sigma^2 and the iterated brackets [sigma^i, b],
/// [[sigma^i, b], b], ... up to the given depth, evaluated at x. First-level
/// brackets use the analytic sigma Jacobian; deeper levels differentiate the
/// previous (normalized) field by central differences.
inline BracketSpan hormander_span(const Model& m, const State& x, int depth) {
    const int n = m.dim();
    BracketSpan out;
    out.columns = Matrix::Zero(n, 2 * (depth + 1));

    for (int col = 0; col < 2; ++col) {
        detail::VectorField field = [&m, col](const State& z) -> State {
            return dispersion(m, z).col(col);
        };
        State value = field(x);
        out.columns.col(col) = value;
        for (int d = 1; d <= depth; ++d) {
            Matrix JF = d == 1 ? detail::dispersion_column_jacobian(m, x, col)
                               : detail::fd_jacobian(field, x);
            // Bracket with the drift: [F, b] = Db F - DF b.
            detail::VectorField prev = field;
            field = [&m, prev](const State& z) -> State {
                const Matrix J = detail::fd_jacobian(prev, z);
                return drift_jacobian(m, z) * prev(z) - J * drift(m, z);
            };
            value = drift_jacobian(m, x) * prev(x) - JF * drift(m, x);
            const double scale = value.norm();
            if (scale > 0.0) {
                const State normalized = value / scale;
                detail::VectorField raw = field;
                field = [raw, scale](const State& z) -> State { return raw(z) / scale; };
                out.columns.col(2 * d + col) = normalized;
            } else {
                out.columns.col(2 * d + col) = value;
            }
        }
    }
    Eigen::JacobiSVD<Matrix> svd(out.columns);
    const double tol = 1e-4 * svd.singularValues().maxCoeff();
    out.rank = 0;
    for (int i = 0; i < svd.singularValues().size(); ++i) {
        if (svd.singularValues()(i) > tol) ++out.rank;
    }
    return out;
}

/// Rank of the bracket span at x with the default depth n (full chain).
inline int hormander_rank(const Model& m, const State& x, int depth = -1) {
    if (depth < 0) depth = m.dim();
    return hormander_span(m, x, depth).rank;
}

// ---------------------------------------------------------------------------
// Small-time local controllability certificate along orbits
// ---------------------------------------------------------------------------

struct StlcOptions {
    double r_coeff = 0.1;   // target magnitude prefactor
    bool uniform_r = false; // true: r_i = r_coeff for all coordinates
    bool freeze = false;    // true: keep A(t), B(t) frozen at t = 0
    double dt = 1e-4;       // integration step for the variational system
};

struct StlcCertificate {
    Matrix Z;                   // variational endpoint, columns respond to u_1..u_n
    double min_singular = 0.0;
    Eigen::VectorXd r;          // per-coordinate target magnitudes
    double control_sup = 0.0;   // sup_t sum_k |(u_j)_k(t)| over all j
    bool bound_exceeded = false;
};

/// Builds the n frozen-system minimum-energy controls hitting r_i e_i at
/// time delta, integrates the time-varying variational system along the
/// deterministic flow from x0, and returns Z(delta) with its smallest
/// singular value. A positive value certifies that the time-delta flow point
/// is interior to the reachable set with the used control bound.
inline StlcCertificate stlc_certificate(const Model& m, const State& x0, double delta,
                                        double bound, const StlcOptions& opts = {}) {
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("stlc_certificate: need 0 < delta < 1");
    const int n = m.dim();
    const Matrix A0 = drift_jacobian(m, x0);
    const Matrix B0 = dispersion(m, x0);

    // Full-system Gramian over [0, delta] with the frozen pair.
    const GaussLegendre& gl = gauss_legendre_64();
    Matrix Q = Matrix::Zero(n, n);
    for (std::size_t k = 0; k < gl.nodes.size(); ++k) {
        const double s = 0.5 * delta * (gl.nodes[k] + 1.0);
        const Matrix E = (s * A0).exp();
        const Matrix EB = E * B0;
        Q += (0.5 * delta * gl.weights[k]) * (EB * EB.transpose());
    }

    StlcCertificate cert;
    cert.r = Eigen::VectorXd(n);
    for (int i = 0; i < n; ++i) {
        // Offset of coordinate i from its population's noisy coordinate.
        const int offset = i <= m.noisy1() ? m.noisy1() - i : m.noisy2() - i;
        cert.r(i) = opts.uniform_r ? opts.r_coeff
                                   : opts.r_coeff * std::pow(delta, static_cast<double>(offset + 1));
    }

    // u_j(t) = B0* exp((delta - t) A0*) Q^{-1} r_j e_j; stacked as 2 x n.
    const Matrix QinvR = Q.ldlt().solve(Matrix(cert.r.asDiagonal()));
    const auto controls_at = [&](const Matrix& P) -> Matrix { return B0.transpose() * P * QinvR; };

    // Coupled integration: x' = b(x), P' = -A0* P, Z' = A(t) Z + B(t) U(t).
    const long steps = std::max<long>(20, std::llround(delta / opts.dt));
    const double h = delta / static_cast<double>(steps);
    State x = x0;
    Matrix P = (delta * A0.transpose()).exp();
    Matrix Z = Matrix::Zero(n, n);
    for (long k = 0; k < steps; ++k) {
        struct Stage {
            State xd;
            Matrix Pd;
            Matrix Zd;
        };
        const auto eval = [&](const State& xs, const Matrix& Ps, const Matrix& Zs) -> Stage {
            const Matrix U = controls_at(Ps);
            cert.control_sup = std::max(cert.control_sup, U.cwiseAbs().colwise().sum().maxCoeff());
            if (opts.freeze) return {State::Zero(n), -A0.transpose() * Ps, A0 * Zs + B0 * U};
            return {drift(m, xs), -A0.transpose() * Ps, drift_jacobian(m, xs) * Zs + dispersion(m, xs) * U};
        };
        const Stage s1 = eval(x, P, Z);
        const Stage s2 = eval(x + 0.5 * h * s1.xd, P + 0.5 * h * s1.Pd, Z + 0.5 * h * s1.Zd);
        const Stage s3 = eval(x + 0.5 * h * s2.xd, P + 0.5 * h * s2.Pd, Z + 0.5 * h * s2.Zd);
        const Stage s4 = eval(x + h * s3.xd, P + h * s3.Pd, Z + h * s3.Zd);
        x += h / 6.0 * (s1.xd + 2.0 * s2.xd + 2.0 * s3.xd + s4.xd);
        P += h / 6.0 * (s1.Pd + 2.0 * s2.Pd + 2.0 * s3.Pd + s4.Pd);
        Z += h / 6.0 * (s1.Zd + 2.0 * s2.Zd + 2.0 * s3.Zd + s4.Zd);
    }

    cert.Z = Z;
    Eigen::JacobiSVD<Matrix> svd(Z);
    cert.min_singular = svd.singularValues().minCoeff();
    cert.bound_exceeded = cert.control_sup > bound;
    return cert;
}

// ---------------------------------------------------------------------------
// Small-time cost scaling of the linear subsystems
// ---------------------------------------------------------------------------

struct CostScaling {
    std::vector<double> deltas;
    std::vector<double> costs;
    double slope = 0.0;      // fitted d log V / d log delta
    double predicted = 0.0;  // -(2 (m - l) + 1)
};

/// Minimum-energy cost of an offset eps e_l away from the free flow endpoint,
/// as a function of the horizon delta. The fitted log-log slope exposes the
/// anisotropic scaling of the cascade: -(2(m-l)+1) for coordinate l (1-based,
/// l = m being the driven coordinate).
inline CostScaling dm_cost_scaling(const Model& model, int population, int l,
                                   const std::vector<double>& deltas, double eps = 0.01) {
    if (deltas.size() < 3) throw std::invalid_argument("dm_cost_scaling: need at least 3 deltas");
    const LinearSubsystem sys = linear_subsystem(model, population);
    if (l < 1 || l > sys.m) throw std::invalid_argument("dm_cost_scaling: coordinate index out of range");
    CostScaling out;
    out.deltas = deltas;
    out.predicted = -(2.0 * static_cast<double>(sys.m - l) + 1.0);
    std::vector<double> lx, ly;
    for (double d : deltas) {
        const Eigen::VectorXd zero = Eigen::VectorXd::Zero(sys.m);
        Eigen::VectorXd target = zero;
        target(l - 1) = eps;
        const MinEnergyControl ctl = min_energy_control(sys, d, zero, target);
        out.costs.push_back(ctl.cost);
        lx.push_back(std::log(d));
        ly.push_back(std::log(ctl.cost));
    }
    out.slope = ols_fit(lx, ly).slope;
    return out;
}

} // namespace osch
