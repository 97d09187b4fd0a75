#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "osch/model.hpp"
#include "osch/rng.hpp"
#include "osch/sde.hpp"

namespace osch {

/// Aggregated jump times of the two populations over [0, horizon].
struct EventRecord {
    std::vector<double> times1;
    std::vector<double> times2;
    long n_units1 = 0;
    long n_units2 = 0;
    double horizon = 0.0;
};

struct HawkesResult {
    EventRecord events;
    Path path; // cascade state sampled on a uniform grid (cadlag values)
};

struct HawkesOptions {
    State x0;              // empty means start from zero
    int grid_samples = 512; // grid points after t=0
};

/// Advances one cascade block by the exact linear flow exp(s*(-nu I + J)),
/// whose entries are exp(-nu s) s^(j-i) / (j-i)!.
inline void cascade_block_flow(double nu, double s, double* x, int m) {
    const double decay = std::exp(-nu * s);
    for (int i = 0; i < m; ++i) {
        double acc = 0.0;
        double pw = 1.0; // s^(j-i) / (j-i)!
        for (int j = i; j < m; ++j) {
            acc += pw * x[j];
            pw *= s / static_cast<double>(j - i + 1);
        }
        x[i] = decay * acc;
    }
}

inline void cascade_flow(const Model& m, State& x, double s) {
    cascade_block_flow(m.nu1(), s, x.data(), m.n1() + 1);
    cascade_block_flow(m.nu2(), s, x.data() + m.pop2_first(), m.n2() + 1);
}

/// Exact simulation of the two-population Hawkes cascade by Ogata thinning
/// with the constant dominating rate N1 fmax1 + N2 fmax2. Between events the
/// state follows the closed-form linear flow; a population-1 jump kicks the
/// last coordinate of cascade 2 by c2/N1 and vice versa.
inline HawkesResult simulate_hawkes(const Model& m, long N1, long N2, double horizon,
                                    std::uint64_t seed, const HawkesOptions& opts = {}) {
    if (N1 < 1 || N2 < 1) throw std::invalid_argument("simulate_hawkes: need N1, N2 >= 1");
    if (horizon < 0.0) throw std::invalid_argument("simulate_hawkes: negative horizon");

    HawkesResult out;
    out.events.n_units1 = N1;
    out.events.n_units2 = N2;
    out.events.horizon = horizon;

    State x = opts.x0.size() == m.dim() ? opts.x0 : State::Zero(m.dim());

    const int grid_n = horizon > 0.0 ? std::max(1, opts.grid_samples) : 0;
    const double gdt = grid_n > 0 ? horizon / grid_n : 0.0;
    out.path.dt = gdt;
    out.path.states.reserve(static_cast<std::size_t>(grid_n) + 1);
    out.path.states.push_back(x);
    int next_grid = 1;

    RngStream rng = make_stream(seed, {0x4a3full});
    const double lambda_bar =
        static_cast<double>(N1) * m.f1.fmax + static_cast<double>(N2) * m.f2.fmax;

    double t = 0.0;
    while (true) {
        const double tau = rng.exponential(lambda_bar);
        const double t_new = t + tau;

        // Record grid values passed over, flowing from the current state.
        while (next_grid <= grid_n && static_cast<double>(next_grid) * gdt <= t_new) {
            State g = x;
            cascade_flow(m, g, static_cast<double>(next_grid) * gdt - t);
            out.path.states.push_back(g);
            ++next_grid;
        }
        if (t_new > horizon) break;

        cascade_flow(m, x, tau);
        t = t_new;

        const double rate1 = static_cast<double>(N1) * m.f1.value(x[0]);
        const double rate2 = static_cast<double>(N2) * m.f2.value(x[m.pop2_first()]);
        if (rng.uniform() * lambda_bar <= rate1 + rate2) {
            if (rng.uniform() * (rate1 + rate2) <= rate1) {
                out.events.times1.push_back(t);
                x[m.noisy2()] += m.c2() / static_cast<double>(N1);
            } else {
                out.events.times2.push_back(t);
                x[m.noisy1()] += m.c1() / static_cast<double>(N2);
            }
        }
    }
    return out;
}

/// Direct-convolution reconstruction of the cascade state at time t: each
/// coordinate is the shifted-kernel sum over the driving population's jumps,
///   X_{k,l}(t) = c_k sum_{s<=t} (t-s)^(n_k-l+1) / (n_k-l+1)! e^{-nu_k (t-s)} / N_other,
/// plus the flow of the initial state. Independent of the thinning scheme.
inline State cascade_from_events(const Model& m, const EventRecord& ev, double t,
                                 const State& x0 = State()) {
    if (t > ev.horizon) throw std::invalid_argument("cascade_from_events: t beyond recorded horizon");
    State x = State::Zero(m.dim());
    if (x0.size() == m.dim()) {
        x = x0;
        cascade_flow(m, x, t);
    }

    const auto accumulate = [t](const std::vector<double>& times, double c, double nu, int n,
                                double unit_count, double* block) {
        std::vector<double> fact(static_cast<std::size_t>(n) + 1, 1.0);
        for (int k = 2; k <= n; ++k) fact[static_cast<std::size_t>(k)] = fact[static_cast<std::size_t>(k - 1)] * k;
        for (double s : times) {
            if (s > t) break; // times sorted
            const double u = t - s;
            const double decay = std::exp(-nu * u) * c / unit_count;
            for (int l = 0; l <= n; ++l) {
                const int e = n - l;
                block[l] += decay * std::pow(u, static_cast<double>(e)) / fact[static_cast<std::size_t>(e)];
            }
        }
    };

    // Population-2 jumps drive cascade 1, population-1 jumps drive cascade 2.
    accumulate(ev.times2, m.c1(), m.nu1(), m.n1(), static_cast<double>(ev.n_units2), x.data());
    accumulate(ev.times1, m.c2(), m.nu2(), m.n2(), static_cast<double>(ev.n_units1),
               x.data() + m.pop2_first());
    return x;
}

} // namespace osch
