#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "osch/hawkes.hpp"
#include "osch/limit.hpp"
#include "osch/model.hpp"
#include "osch/parallel.hpp"
#include "osch/sde.hpp"
#include "osch/stats.hpp"

namespace osch {

// ---------------------------------------------------------------------------
// Distance to the omega-limit set
// ---------------------------------------------------------------------------

/// Distance queries against K = {x*} u orbits, with a cursor that tracks the
/// nearest orbit sample between calls so tight simulation loops stay cheap.
/// The cursor search re-scans globally whenever the local window looks stale.
class LimitSetDistance {
  public:
    LimitSetDistance(const Model& m, const LimitSet& ls, int densify = 4096) {
        equilibrium_ = ls.equilibrium.point;
        for (const Orbit& orb : ls.orbits) {
            std::vector<State> ring;
            const long steps = std::max<long>(densify, 256);
            const double h = orb.period / static_cast<double>(steps);
            State x = orb.anchor;
            ring.reserve(static_cast<std::size_t>(steps));
            for (long k = 0; k < steps; ++k) {
                ring.push_back(x);
                rk4_step(m, x, h);
            }
            rings_.push_back(std::move(ring));
        }
    }

    struct Cursor {
        std::vector<std::size_t> idx; // per-ring nearest sample hint
        int since_rescan = 0;
    };

    Cursor make_cursor() const { return Cursor{std::vector<std::size_t>(rings_.size(), 0), 0}; }

    double distance(const State& x) const {
        double best = (x - equilibrium_).norm();
        for (const auto& ring : rings_) {
            for (const auto& p : ring) best = std::min(best, (x - p).norm());
        }
        return best;
    }

    double distance(const State& x, Cursor& cur, int window = 24, int rescan_every = 200) const {
        if (++cur.since_rescan >= rescan_every) {
            cur.since_rescan = 0;
            double best = (x - equilibrium_).norm();
            for (std::size_t r = 0; r < rings_.size(); ++r) {
                const auto& ring = rings_[r];
                double ring_best = std::numeric_limits<double>::infinity();
                for (std::size_t i = 0; i < ring.size(); ++i) {
                    const double d = (x - ring[i]).norm();
                    if (d < ring_best) {
                        ring_best = d;
                        cur.idx[r] = i;
                    }
                }
                best = std::min(best, ring_best);
            }
            return best;
        }
        double best = (x - equilibrium_).norm();
        for (std::size_t r = 0; r < rings_.size(); ++r) {
            const auto& ring = rings_[r];
            const long n = static_cast<long>(ring.size());
            double ring_best = std::numeric_limits<double>::infinity();
            std::size_t arg = cur.idx[r];
            for (long off = -window; off <= window; ++off) {
                const std::size_t i = static_cast<std::size_t>(((static_cast<long>(cur.idx[r]) + off) % n + n) % n);
                const double d = (x - ring[i]).norm();
                if (d < ring_best) {
                    ring_best = d;
                    arg = i;
                }
            }
            cur.idx[r] = arg;
            best = std::min(best, ring_best);
        }
        return best;
    }

    const State& equilibrium() const { return equilibrium_; }

  private:
    State equilibrium_;
    std::vector<std::vector<State>> rings_;
};

/// A point at distance eps from the orbit near its anchor, orthogonal to the
/// flow direction so the offset does not just slide along the orbit.
inline State tube_boundary_start(const Model& m, const Orbit& orb, double eps) {
    const State tangent = drift(m, orb.anchor).normalized();
    State w = State::Zero(orb.anchor.size());
    for (int i = 0; i < w.size(); ++i) {
        w = State::Zero(orb.anchor.size());
        w[i] = 1.0;
        w -= tangent.dot(w) * tangent;
        if (w.norm() > 0.5) break;
    }
    w.normalize();
    return orb.anchor + eps * w;
}

inline const Orbit& stable_orbit(const LimitSet& ls) {
    for (const Orbit& orb : ls.orbits) {
        if (orb.stable) return orb;
    }
    if (!ls.orbits.empty()) return ls.orbits.front();
    throw numerical_error("no periodic orbit available in the limit set");
}

// ---------------------------------------------------------------------------
// Study result containers
// ---------------------------------------------------------------------------

struct StudyRecord {
    double key = 0.0;       // N or dt or region index, depending on the study
    double estimate = 0.0;
    double std_error = 0.0;
    long replicas = 0;
    long flagged = 0;       // capped replicas / zero-visit markers
};

// ---------------------------------------------------------------------------
// Exit times from the tube around K
// ---------------------------------------------------------------------------

struct ExitTimeOptions {
    std::vector<long> Ns{50, 100, 200, 400};
    double eps = 0.02;
    double eps_bar = 0.1;
    double cap = 1e4;      // per-replica time cap
    int replicas = 200;
    double dt = 1e-3;
    std::uint64_t seed = 0;
    int jobs = 1;
};

struct ExitTimeResult {
    std::vector<StudyRecord> records;   // per N, estimate = mean exit time
    std::vector<std::array<double, 4>> replica_rows; // N, replica, exit time, capped
    LinearFit fit;                      // log E sigma_0 against N
    double slope_lower_95 = 0.0;        // one-sided confidence bound
    bool cap_warning = false;           // cap hit in > 50% of replicas at largest N
    State start;
};

/// Mean exit time from B_eps_bar(K), started on the boundary of B_eps(K)
/// near the stable orbit's anchor, for an increasing ladder of N. The fitted
/// slope of log E sigma_0 against N is the observable face of the e^{N V}
/// growth of the escape time.
inline ExitTimeResult exit_time_study(const Model& m, const LimitSet& ls,
                                      const ExitTimeOptions& opts = {}) {
    if (!(3.0 * opts.eps < opts.eps_bar)) {
        throw std::invalid_argument("exit_time_study: tube condition 3 eps < eps_bar violated");
    }
    for (std::size_t i = 1; i < opts.Ns.size(); ++i) {
        if (opts.Ns[i] <= opts.Ns[i - 1]) throw std::invalid_argument("exit_time_study: Ns must increase");
    }
    const LimitSetDistance dist(m, ls);
    const Orbit& orb = stable_orbit(ls);
    const State x0 = tube_boundary_start(m, orb, opts.eps);

    ExitTimeResult out;
    out.start = x0;
    std::vector<double> log_means, keys;
    for (std::size_t ni = 0; ni < opts.Ns.size(); ++ni) {
        const long N = opts.Ns[ni];
        std::vector<double> exits(static_cast<std::size_t>(opts.replicas));
        std::vector<char> capped(static_cast<std::size_t>(opts.replicas), 0);
        parallel_for(static_cast<std::size_t>(opts.replicas), opts.jobs, [&](std::size_t r) {
            SdeStepper stepper(m, static_cast<double>(N),
                               make_stream(opts.seed, {0xe717ull, ni, r}));
            State x = x0;
            auto cur = dist.make_cursor();
            double t = 0.0;
            while (t < opts.cap) {
                stepper.step(x, opts.dt);
                t += opts.dt;
                double d = dist.distance(x, cur);
                if (d >= opts.eps_bar) {
                    // confirm against a full scan; the cursor may be stale
                    d = dist.distance(x);
                    if (d >= opts.eps_bar) break;
                }
            }
            exits[r] = std::min(t, opts.cap);
            capped[r] = t >= opts.cap ? 1 : 0;
        });
        RunningStats stats;
        long n_capped = 0;
        for (std::size_t r = 0; r < exits.size(); ++r) {
            stats.add(exits[r]);
            n_capped += capped[r];
            out.replica_rows.push_back({static_cast<double>(N), static_cast<double>(r), exits[r],
                                        static_cast<double>(capped[r])});
        }
        out.records.push_back({static_cast<double>(N), stats.mean, stats.std_error(),
                               static_cast<long>(exits.size()), n_capped});
        if (ni + 1 == opts.Ns.size() && n_capped * 2 > opts.replicas) out.cap_warning = true;
        keys.push_back(static_cast<double>(N));
        log_means.push_back(std::log(stats.mean));
    }
    if (keys.size() >= 2) {
        out.fit = ols_fit(keys, log_means);
        out.slope_lower_95 = out.fit.slope - t_quantile_95(out.fit.dof()) * out.fit.slope_se;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Invariant-measure occupation fractions
// ---------------------------------------------------------------------------

struct Region {
    State center;
    double radius = 0.1;
};

struct OccupationOptions {
    std::vector<long> Ns{50, 100, 200};
    std::vector<Region> regions;
    double eps = 0.02;      // tube radius for the "mass near K" fraction
    double horizon = 2e4;   // time-average window per replica
    double burn_in = -1.0;  // < 0 means 20 periods of the stable orbit
    int replicas = 8;
    double dt = 1e-3;
    std::uint64_t seed = 0;
    int jobs = 1;
};

struct RegionStudy {
    std::vector<StudyRecord> records; // per N
    LinearFit fit;                    // log mu vs N (only over positive estimates)
    double slope_upper_95 = 0.0;
    bool fit_valid = false;
    bool zero_visits = false;
};

struct OccupationResult {
    std::vector<StudyRecord> tube_occupation; // per N, fraction of time in B_eps(K)
    std::vector<RegionStudy> regions;
    std::vector<std::array<double, 4>> replica_rows; // region (-1 = tube), N, replica, fraction
    double burn_in_used = 0.0;
};

/// Long-run occupation fractions after burn-in: the fraction of time spent
/// in B_eps(K) (which should load to 1 as N grows) and in each caller region
/// D with dist(D, K) > 0 (which should decay exponentially in N).
inline OccupationResult occupation_study(const Model& m, const LimitSet& ls,
                                         const OccupationOptions& opts = {}) {
    const LimitSetDistance dist(m, ls);
    for (const Region& reg : opts.regions) {
        if (dist.distance(reg.center) <= reg.radius) {
            throw std::invalid_argument("occupation_study: region overlaps the omega-limit set");
        }
    }
    const Orbit& orb = stable_orbit(ls);
    const double burn_in = opts.burn_in >= 0.0 ? opts.burn_in : 20.0 * orb.period;

    OccupationResult out;
    out.burn_in_used = burn_in;
    const std::size_t R = static_cast<std::size_t>(opts.replicas);
    const std::size_t n_regions = opts.regions.size();
    out.regions.resize(n_regions);

    for (std::size_t ni = 0; ni < opts.Ns.size(); ++ni) {
        const long N = opts.Ns[ni];
        std::vector<double> tube_frac(R, 0.0);
        std::vector<std::vector<double>> region_frac(n_regions, std::vector<double>(R, 0.0));
        parallel_for(R, opts.jobs, [&](std::size_t r) {
            SdeStepper stepper(m, static_cast<double>(N),
                               make_stream(opts.seed, {0x0ccull, ni, r}));
            State x = orb.anchor;
            auto cur = dist.make_cursor();
            const long burn_steps = static_cast<long>(burn_in / opts.dt);
            for (long k = 0; k < burn_steps; ++k) stepper.step(x, opts.dt);
            const long steps = static_cast<long>(opts.horizon / opts.dt);
            long in_tube = 0;
            std::vector<long> in_region(n_regions, 0);
            for (long k = 0; k < steps; ++k) {
                stepper.step(x, opts.dt);
                if (dist.distance(x, cur) < opts.eps) ++in_tube;
                for (std::size_t g = 0; g < n_regions; ++g) {
                    if ((x - opts.regions[g].center).norm() < opts.regions[g].radius) ++in_region[g];
                }
            }
            tube_frac[r] = static_cast<double>(in_tube) / static_cast<double>(steps);
            for (std::size_t g = 0; g < n_regions; ++g) {
                region_frac[g][r] = static_cast<double>(in_region[g]) / static_cast<double>(steps);
            }
        });
        RunningStats tube;
        for (std::size_t r = 0; r < R; ++r) {
            tube.add(tube_frac[r]);
            out.replica_rows.push_back(
                {-1.0, static_cast<double>(N), static_cast<double>(r), tube_frac[r]});
        }
        out.tube_occupation.push_back({static_cast<double>(N), tube.mean, tube.std_error(),
                                       opts.replicas, 0});
        for (std::size_t g = 0; g < n_regions; ++g) {
            RunningStats reg;
            for (std::size_t r = 0; r < R; ++r) {
                reg.add(region_frac[g][r]);
                out.replica_rows.push_back({static_cast<double>(g), static_cast<double>(N),
                                            static_cast<double>(r), region_frac[g][r]});
            }
            out.regions[g].records.push_back({static_cast<double>(N), reg.mean, reg.std_error(),
                                              opts.replicas, reg.mean == 0.0 ? 1 : 0});
        }
    }

    for (std::size_t g = 0; g < n_regions; ++g) {
        RegionStudy& study = out.regions[g];
        std::vector<double> keys, logs;
        for (const StudyRecord& rec : study.records) {
            if (rec.estimate > 0.0) {
                keys.push_back(rec.key);
                logs.push_back(std::log(rec.estimate));
            } else {
                study.zero_visits = true;
            }
        }
        if (keys.size() >= 3) {
            study.fit = ols_fit(keys, logs);
            study.slope_upper_95 = study.fit.slope + t_quantile_95(study.fit.dof()) * study.fit.slope_se;
            study.fit_valid = true;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Weak error between the Hawkes cascade and its diffusion approximation
// ---------------------------------------------------------------------------

struct WeakErrorOptions {
    std::vector<long> Ns{10, 20, 40, 80};
    State x0;               // empty: start from zero
    double t = 1.0;
    long replicas = 100000;
    double dt = 1e-3;
    std::uint64_t seed = 0;
    int jobs = 1;
};

struct WeakErrorResult {
    std::vector<StudyRecord> records; // per N: estimate = |gap|, se combined
    std::vector<double> pdmp_means;
    std::vector<double> sde_means;      // at dt
    std::vector<double> sde_means_half; // at dt/2
    LinearFit fit;                      // log |gap| vs log N
    bool noise_warning = false;         // MC error dominates the signal
    long suggested_replicas = 0;
};

/// |E phi(X^N_t) - E phi(Y^N_t)| across an N ladder. The diffusion side is
/// run at dt and dt/2; the slope fit uses the two-step-size extrapolation
/// 2 E_{dt/2} - E_dt so the O(dt) integrator bias does not mask the
/// O(N^{-2}) approximation gap being measured.
inline WeakErrorResult weak_error_study(const Model& m,
                                        const std::function<double(const State&)>& statistic,
                                        const WeakErrorOptions& opts = {}) {
    WeakErrorResult out;
    const State x0 = opts.x0.size() == m.dim() ? opts.x0 : State::Zero(m.dim());
    std::vector<double> lx, ly;
    for (std::size_t ni = 0; ni < opts.Ns.size(); ++ni) {
        const long N = opts.Ns[ni];
        const long N1 = std::max<long>(1, std::llround(m.p1 * static_cast<double>(N)));
        const long N2 = std::max<long>(1, N - N1);
        const std::size_t R = static_cast<std::size_t>(opts.replicas);

        std::vector<double> pdmp(R), sde_full(R), sde_half(R);
        parallel_for(R, opts.jobs, [&](std::size_t r) {
            HawkesOptions hopts;
            hopts.x0 = x0;
            hopts.grid_samples = 1;
            const HawkesResult hr = simulate_hawkes(
                m, N1, N2, opts.t, splitmix_combine(opts.seed, 0x77aaull + 4 * (ni * R + r)), hopts);
            pdmp[r] = statistic(hr.path.back());

            // The dt and dt/2 paths share the same Brownian increments
            // (pairwise-summed), so the Richardson combination cancels most
            // of the Monte Carlo noise instead of tripling it.
            RngStream rng = make_stream(opts.seed, {0x3e11ull, ni, r});
            const double scale = 1.0 / std::sqrt(static_cast<double>(N));
            const auto em_step = [&](State& x, double h, double z1, double z2) {
                const Matrix s = dispersion(m, x);
                const double sh = std::sqrt(h);
                x += drift(m, x) * h;
                x[m.noisy2()] += scale * s(m.noisy2(), 0) * sh * z1;
                x[m.noisy1()] += scale * s(m.noisy1(), 1) * sh * z2;
            };
            State xa = x0, xb = x0;
            const long steps = static_cast<long>(std::llround(opts.t / opts.dt));
            const double inv_sqrt2 = 0.70710678118654752;
            for (long k = 0; k < steps; ++k) {
                const double za1 = rng.normal(), za2 = rng.normal();
                const double zb1 = rng.normal(), zb2 = rng.normal();
                em_step(xb, opts.dt / 2.0, za1, za2);
                em_step(xb, opts.dt / 2.0, zb1, zb2);
                em_step(xa, opts.dt, (za1 + zb1) * inv_sqrt2, (za2 + zb2) * inv_sqrt2);
            }
            sde_full[r] = statistic(xa);
            sde_half[r] = statistic(xb);
        });

        RunningStats sp, sf, sh, sx;
        for (std::size_t r = 0; r < R; ++r) {
            sp.add(pdmp[r]);
            sf.add(sde_full[r]);
            sh.add(sde_half[r]);
            sx.add(2.0 * sde_half[r] - sde_full[r]); // paired extrapolation
        }
        const double gap = std::abs(sp.mean - sx.mean);
        const double se = std::sqrt(square(sp.std_error()) + square(sx.std_error()));
        out.records.push_back({static_cast<double>(N), gap, se, opts.replicas, 0});
        out.pdmp_means.push_back(sp.mean);
        out.sde_means.push_back(sf.mean);
        out.sde_means_half.push_back(sh.mean);
        if (se > 0.0 && gap < 2.0 * se) {
            out.noise_warning = true;
            out.suggested_replicas =
                std::max(out.suggested_replicas,
                         static_cast<long>(static_cast<double>(opts.replicas) *
                                           square(3.0 * se / std::max(gap, 1e-300))));
        }
        if (gap > 0.0) {
            lx.push_back(std::log(static_cast<double>(N)));
            ly.push_back(std::log(gap));
        }
    }
    if (lx.size() >= 2) out.fit = ols_fit(lx, ly);
    return out;
}

/// Smooth bounded statistic of the first coordinate.
inline std::function<double(const State&)> smoothed_x1(double center, double scale) {
    return [center, scale](const State& x) { return std::tanh((x[0] - center) / scale); };
}

} // namespace osch
