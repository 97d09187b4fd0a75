#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "osch/common.hpp"
#include "osch/model.hpp"
#include "osch/rng.hpp"

namespace osch {

using State = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Uniform-grid trajectory; grid point i sits at t0 + i*dt.
struct Path {
    double t0 = 0.0;
    double dt = 0.0;
    std::vector<State> states;

    std::size_t size() const { return states.size(); }
    double time(std::size_t i) const { return t0 + static_cast<double>(i) * dt; }
    const State& front() const { return states.front(); }
    const State& back() const { return states.back(); }
};

/// Drift vector field b(x): each cascade coordinate relaxes at rate nu and
/// feeds from its successor; the last coordinate of each population couples
/// to the other population through its rate function.
inline State drift(const Model& m, const State& x) {
    if (x.size() != m.dim()) throw std::invalid_argument("drift: state dimension mismatch");
    const int n1 = m.n1();
    const int n = m.dim();
    State b(n);
    for (int i = 0; i < n1; ++i) b[i] = -m.nu1() * x[i] + x[i + 1];
    b[n1] = -m.nu1() * x[n1] + m.c1() * m.f2.value(x[n1 + 1]);
    for (int i = n1 + 1; i < n - 1; ++i) b[i] = -m.nu2() * x[i] + x[i + 1];
    b[n - 1] = -m.nu2() * x[n - 1] + m.c2() * m.f1.value(x[0]);
    return b;
}

/// Jacobian of the drift: bidiagonal cascade blocks plus the two coupling
/// entries c1 f2'(x_{n1+2}) and c2 f1'(x_1).
inline Matrix drift_jacobian(const Model& m, const State& x) {
    const int n1 = m.n1();
    const int n = m.dim();
    Matrix J = Matrix::Zero(n, n);
    for (int i = 0; i < n1; ++i) {
        J(i, i) = -m.nu1();
        J(i, i + 1) = 1.0;
    }
    J(n1, n1) = -m.nu1();
    J(n1, n1 + 1) = m.c1() * m.f2.deriv(x[n1 + 1]);
    for (int i = n1 + 1; i < n - 1; ++i) {
        J(i, i) = -m.nu2();
        J(i, i + 1) = 1.0;
    }
    J(n - 1, n - 1) = -m.nu2();
    J(n - 1, 0) = m.c2() * m.f1.deriv(x[0]);
    return J;
}

/// n x 2 dispersion. Column 0 carries the population-1 jump noise into the
/// last coordinate of cascade 2; column 1 the reverse. All other rows zero.
inline Matrix dispersion(const Model& m, const State& x) {
    const int n = m.dim();
    Matrix s = Matrix::Zero(n, 2);
    s(m.noisy1(), 1) = m.c1() / std::sqrt(m.p2) * std::sqrt(m.f2.value(x[m.pop2_first()]));
    s(m.noisy2(), 0) = m.c2() / std::sqrt(m.p1) * std::sqrt(m.f1.value(x[0]));
    return s;
}

/// Euler-Maruyama stepper for dY = b(Y) dt + N^{-1/2} sigma(Y) dB.
/// Kept as a class so experiments can run long horizons without storing paths.
class SdeStepper {
  public:
    SdeStepper(const Model& m, double N, RngStream rng)
        : model_(m), noise_scale_(1.0 / std::sqrt(N)), rng_(std::move(rng)) {}

    void step(State& x, double dt) {
        const double sdt = std::sqrt(dt);
        const double z1 = rng_.normal();
        const double z2 = rng_.normal();
        const Matrix s = dispersion(model_, x);
        x += drift(model_, x) * dt;
        x[model_.noisy2()] += noise_scale_ * s(model_.noisy2(), 0) * sdt * z1;
        x[model_.noisy1()] += noise_scale_ * s(model_.noisy1(), 1) * sdt * z2;
    }

  private:
    const Model& model_;
    double noise_scale_;
    RngStream rng_;
};

/// Full Euler-Maruyama path, deterministic given the seed. Gaussian
/// increments are drawn in a fixed order (B^1 then B^2 per step).
inline Path simulate_sde(const Model& m, double N, const State& x0, double horizon, double dt,
                         std::uint64_t seed) {
    if (!(dt > 0.0) || horizon < dt) {
        throw std::invalid_argument("simulate_sde: need dt > 0 and horizon >= dt");
    }
    const long steps = static_cast<long>(std::llround(horizon / dt));
    SdeStepper stepper(m, N, make_stream(seed, {0x5dceull}));
    Path path;
    path.dt = dt;
    path.states.reserve(static_cast<std::size_t>(steps) + 1);
    State x = x0;
    path.states.push_back(x);
    for (long k = 0; k < steps; ++k) {
        stepper.step(x, dt);
        path.states.push_back(x);
    }
    return path;
}

} // namespace osch
