#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <vector>

#include <Eigen/Dense>

#include "osch/control.hpp"
#include "osch/limit.hpp"
#include "osch/model.hpp"
#include "osch/optimize.hpp"
#include "osch/parallel.hpp"
#include "osch/rng.hpp"

namespace osch {

/// Quadratic action of a piecewise-constant control, 0.5 sum |hdot|^2 dt.
inline double action_of_control(const Control& ctl) { return ctl.action(); }

// ---------------------------------------------------------------------------
// Direct transcription of the cost V_T(x, y)
// ---------------------------------------------------------------------------

struct VtOptions {
    int intervals = 64;       // control grid size M
    double dt_max = 0.02;     // substep cap for the state integration
    double endpoint_tol = 1e-4;
    int penalty_stages = 5;
    double penalty0 = 10.0;
    double penalty_factor = 10.0;
    int restarts = 8;         // steer + zero + perturbed steer starts
    int max_iter = 160;       // L-BFGS iteration cap on the last stage
    int first_stage_iter = 40; // earlier stages ramp up linearly to max_iter
    std::uint64_t seed = 0;
    double perturb_scale = 0.5;
    double steer_dt = 1e-3;   // grid for the constructive initializer

    // Optional soft exclusion of omega-limit classes (the "tilde" costs):
    // iterates whose paths enter a tube around an excluded class are
    // penalized, and such candidates are rejected at selection time.
    const LimitSet* limitset = nullptr;
    std::vector<int> exclude_classes;
    double tube_radius = 0.05;
    double tube_weight = 200.0;

    double early_stop = 1e-8; // skip remaining starts once this cost is beaten

    std::vector<Control> extra_starts; // warm starts, e.g. from a coarser level
};

struct VtResult {
    double cost = std::numeric_limits<double>::infinity();
    Control control;
    double endpoint_residual = std::numeric_limits<double>::infinity();
    bool feasible = false;
    double steer_action = std::numeric_limits<double>::infinity();
    double steer_residual = std::numeric_limits<double>::infinity();
};

namespace detail {

/// Dense sample cloud of the excluded classes, for tube distances.
inline std::vector<State> exclusion_points(const VtOptions& opts) {
    std::vector<State> pts;
    if (!opts.limitset) return pts;
    for (int cls : opts.exclude_classes) {
        if (cls == 0) {
            pts.push_back(opts.limitset->equilibrium.point);
        } else if (cls >= 1 && cls <= static_cast<int>(opts.limitset->orbits.size())) {
            const auto& s = opts.limitset->orbits[static_cast<std::size_t>(cls - 1)].samples;
            pts.insert(pts.end(), s.begin(), s.end());
        }
    }
    return pts;
}

/// Worst tube violation along a control's own trajectory.
inline double control_tube_violation(const Model& m, const State& x0, const Control& ctl,
                                     const VtOptions& opts) {
    const std::vector<State> pts = exclusion_points(opts);
    if (pts.empty()) return 0.0;
    const Path path = integrate_controlled(m, x0, ctl, ctl.dt);
    double worst = 0.0;
    for (const State& s : path.states) {
        double dist = std::numeric_limits<double>::infinity();
        for (const auto& p : pts) dist = std::min(dist, (s - p).norm());
        worst = std::max(worst, opts.tube_radius - dist);
    }
    return std::max(0.0, worst);
}

/// Forward RK4 + exact discrete adjoint of the penalized transcription
///   J(theta) = action + penalty ||phi_T - y||^2 + tube hinge terms.
class TranscriptionProblem {
  public:
    TranscriptionProblem(const Model& m, State x0, State target, double T, const VtOptions& opts)
        : model_(m), x0_(std::move(x0)), target_(std::move(target)), intervals_(opts.intervals),
          tube_radius_(opts.tube_radius), tube_weight_(opts.tube_weight),
          exclusion_(exclusion_points(opts)) {
        nsub_ = std::max(1, static_cast<int>(std::ceil(T / static_cast<double>(intervals_) / opts.dt_max)));
        dt_ = T / static_cast<double>(intervals_) / static_cast<double>(nsub_);
        delta_ = T / static_cast<double>(intervals_);
    }

    int dim() const { return 2 * intervals_; }
    double interval_dt() const { return delta_; }

    Control to_control(const Eigen::VectorXd& theta) const {
        Control c;
        c.dt = delta_;
        c.values.resize(static_cast<std::size_t>(intervals_));
        for (int i = 0; i < intervals_; ++i) {
            c.values[static_cast<std::size_t>(i)] = theta.segment<2>(2 * i);
        }
        return c;
    }

    Eigen::VectorXd from_control(const Control& c) const {
        // Resamples an arbitrary uniform grid onto this problem's grid by
        // interval averaging, which preserves coarse controls exactly.
        Eigen::VectorXd theta = Eigen::VectorXd::Zero(dim());
        const double src_dt = c.dt;
        for (int i = 0; i < intervals_; ++i) {
            const double a = static_cast<double>(i) * delta_;
            const double b = a + delta_;
            Eigen::Vector2d acc = Eigen::Vector2d::Zero();
            double covered = 0.0;
            const std::size_t j0 = static_cast<std::size_t>(std::max(0.0, std::floor(a / src_dt)));
            for (std::size_t j = j0; j < c.values.size(); ++j) {
                const double ja = static_cast<double>(j) * src_dt;
                const double jb = ja + src_dt;
                if (ja >= b) break;
                const double w = std::min(b, jb) - std::max(a, ja);
                if (w > 0) {
                    acc += w * c.values[j];
                    covered += w;
                }
            }
            theta.segment<2>(2 * i) = covered > 0 ? Eigen::Vector2d(acc / covered) : Eigen::Vector2d::Zero();
        }
        return theta;
    }

    /// Endpoint of the state integration for a given control vector.
    State terminal_state(const Eigen::VectorXd& theta) const {
        State x = x0_;
        for (int i = 0; i < intervals_; ++i) {
            const Eigen::Vector2d v = theta.segment<2>(2 * i);
            for (int s = 0; s < nsub_; ++s) controlled_rk4_step(model_, x, v, dt_);
        }
        return x;
    }

    double tube_violation(const State& x) const {
        if (exclusion_.empty()) return 0.0;
        double dist = std::numeric_limits<double>::infinity();
        for (const auto& p : exclusion_) dist = std::min(dist, (x - p).norm());
        return std::max(0.0, tube_radius_ - dist);
    }

    double max_tube_violation(const Eigen::VectorXd& theta) const {
        if (exclusion_.empty()) return 0.0;
        State x = x0_;
        double worst = 0.0;
        for (int i = 0; i < intervals_; ++i) {
            const Eigen::Vector2d v = theta.segment<2>(2 * i);
            for (int s = 0; s < nsub_; ++s) {
                controlled_rk4_step(model_, x, v, dt_);
                worst = std::max(worst, tube_violation(x));
            }
        }
        return worst;
    }

    /// Value and exact gradient of the penalized objective.
    double evaluate(const Eigen::VectorXd& theta, double penalty, Eigen::VectorXd& grad) const {
        const int n = model_.dim();
        const int total_steps = intervals_ * nsub_;

        // Forward pass, storing the four stage points of every step.
        std::vector<State> nodes(static_cast<std::size_t>(total_steps) + 1);
        std::vector<std::array<State, 4>> stages(static_cast<std::size_t>(total_steps));
        State x = x0_;
        nodes[0] = x;
        for (int k = 0; k < total_steps; ++k) {
            const Eigen::Vector2d v = theta.segment<2>(2 * (k / nsub_));
            auto& st = stages[static_cast<std::size_t>(k)];
            st[0] = x;
            const State k1 = rhs(st[0], v);
            st[1] = x + 0.5 * dt_ * k1;
            const State k2 = rhs(st[1], v);
            st[2] = x + 0.5 * dt_ * k2;
            const State k3 = rhs(st[2], v);
            st[3] = x + dt_ * k3;
            const State k4 = rhs(st[3], v);
            x += dt_ / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            nodes[static_cast<std::size_t>(k + 1)] = x;
        }

        double J = 0.0;
        for (int i = 0; i < intervals_; ++i) J += 0.5 * delta_ * theta.segment<2>(2 * i).squaredNorm();
        const State diff = x - target_;
        J += penalty * diff.squaredNorm();

        std::vector<State> tube_grad(nodes.size(), State::Zero(n));
        if (!exclusion_.empty()) {
            for (std::size_t k = 1; k < nodes.size(); ++k) {
                double dist = std::numeric_limits<double>::infinity();
                std::size_t arg = 0;
                for (std::size_t p = 0; p < exclusion_.size(); ++p) {
                    const double d = (nodes[k] - exclusion_[p]).norm();
                    if (d < dist) { dist = d; arg = p; }
                }
                const double viol = tube_radius_ - dist;
                if (viol > 0.0 && dist > 1e-12) {
                    J += tube_weight_ * viol * viol * dt_;
                    tube_grad[k] = -2.0 * tube_weight_ * viol * dt_ * (nodes[k] - exclusion_[arg]) / dist;
                }
            }
        }

        // Discrete adjoint pass through the stored RK4 stages.
        grad = Eigen::VectorXd::Zero(dim());
        for (int i = 0; i < intervals_; ++i) grad.segment<2>(2 * i) = delta_ * theta.segment<2>(2 * i);

        State lambda = 2.0 * penalty * diff;
        for (int k = total_steps - 1; k >= 0; --k) {
            lambda += tube_grad[static_cast<std::size_t>(k + 1)];
            const Eigen::Vector2d v = theta.segment<2>(2 * (k / nsub_));
            const auto& st = stages[static_cast<std::size_t>(k)];

            const State dk4 = dt_ / 6.0 * lambda;
            const State ds4 = rhs_jacobian_T(st[3], v, dk4);
            const State dk3 = dt_ / 3.0 * lambda + dt_ * ds4;
            const State ds3 = rhs_jacobian_T(st[2], v, dk3);
            const State dk2 = dt_ / 3.0 * lambda + 0.5 * dt_ * ds3;
            const State ds2 = rhs_jacobian_T(st[1], v, dk2);
            const State dk1 = dt_ / 6.0 * lambda + 0.5 * dt_ * ds2;
            const State ds1 = rhs_jacobian_T(st[0], v, dk1);

            Eigen::Vector2d dv = dispersion(model_, st[0]).transpose() * dk1 +
                                 dispersion(model_, st[1]).transpose() * dk2 +
                                 dispersion(model_, st[2]).transpose() * dk3 +
                                 dispersion(model_, st[3]).transpose() * dk4;
            grad.segment<2>(2 * (k / nsub_)) += dv;
            lambda += ds1 + ds2 + ds3 + ds4;
        }
        return J;
    }

  private:
    State rhs(const State& z, const Eigen::Vector2d& v) const {
        return drift(model_, z) + dispersion(model_, z) * v;
    }

    /// (Db(z) + v_j Dsigma_j(z))^T w, with the two analytic sigma terms.
    State rhs_jacobian_T(const State& z, const Eigen::Vector2d& v, const State& w) const {
        State out = drift_jacobian(model_, z).transpose() * w;
        const Model& m = model_;
        const double f2v = m.f2.value(z[m.pop2_first()]);
        out[m.pop2_first()] += v(1) * w[m.noisy1()] * m.c1() / std::sqrt(m.p2) *
                               m.f2.deriv(z[m.pop2_first()]) / (2.0 * std::sqrt(f2v));
        const double f1v = m.f1.value(z[0]);
        out[0] += v(0) * w[m.noisy2()] * m.c2() / std::sqrt(m.p1) *
                  m.f1.deriv(z[0]) / (2.0 * std::sqrt(f1v));
        return out;
    }

    const Model& model_;
    State x0_;
    State target_;
    int intervals_;
    int nsub_ = 1;
    double dt_ = 0.0;
    double delta_ = 0.0;
    double tube_radius_;
    double tube_weight_;
    std::vector<State> exclusion_;
};

} // namespace detail

/// Upper bound on the cost V_T(x, y): penalty-continuation minimization of
/// the action over piecewise-constant controls, multi-started from the
/// constructive steering control, the zero control, perturbations and any
/// caller-supplied warm starts. Only endpoint-feasible candidates count;
/// the returned cost is a feasible-control action, hence >= the infimum.
inline VtResult quasipotential_vt(const Model& m, const State& x, const State& y, double T,
                                  const VtOptions& opts = {}) {
    if (!(T > 0.0)) throw std::invalid_argument("quasipotential_vt: T must be positive");
    detail::TranscriptionProblem problem(m, x, y, T, opts);

    VtResult out;

    // Constructive initializer; also a candidate in its own right.
    Control steer_ctl;
    {
        SteerResult s = steer(m, x, y, T, SteerOptions{opts.steer_dt});
        steer_ctl = std::move(s.control);
        out.steer_action = s.action;
        out.steer_residual = s.endpoint_residual;
        if (s.endpoint_residual < opts.endpoint_tol &&
            detail::control_tube_violation(m, x, steer_ctl, opts) == 0.0) {
            // Evaluate the steering candidate on its own (fine) grid.
            out.cost = s.action;
            out.control = steer_ctl;
            out.endpoint_residual = s.endpoint_residual;
            out.feasible = true;
        }
    }

    std::vector<Eigen::VectorXd> starts;
    starts.push_back(problem.from_control(steer_ctl));
    starts.push_back(Eigen::VectorXd::Zero(problem.dim()));
    for (const Control& c : opts.extra_starts) starts.push_back(problem.from_control(c));
    {
        RngStream rng = make_stream(opts.seed, {0xac7101ull});
        const double base = std::sqrt(std::max(1e-4, out.steer_action / std::max(T, 1e-9)));
        while (static_cast<int>(starts.size()) < opts.restarts + 2) {
            Eigen::VectorXd theta = starts[0];
            for (int i = 0; i < theta.size(); ++i) theta[i] += opts.perturb_scale * base * rng.normal();
            starts.push_back(std::move(theta));
        }
    }

    for (const Eigen::VectorXd& start : starts) {
        if (out.feasible && out.cost < opts.early_stop) break;
        Eigen::VectorXd theta = start;
        double penalty = opts.penalty0;
        for (int stage = 0; stage < opts.penalty_stages; ++stage) {
            LbfgsOptions lopts;
            const int ramp = opts.penalty_stages > 1
                                 ? (opts.max_iter - opts.first_stage_iter) * stage / (opts.penalty_stages - 1)
                                 : 0;
            lopts.max_iter = opts.first_stage_iter + ramp;
            const auto objective = [&](const Eigen::VectorXd& th, Eigen::VectorXd& g) {
                return problem.evaluate(th, penalty, g);
            };
            theta = lbfgs_minimize(objective, theta, lopts).x;
            penalty *= opts.penalty_factor;
        }
        const Control cand = problem.to_control(theta);
        const double residual = (problem.terminal_state(theta) - y).norm();
        if (residual >= opts.endpoint_tol) continue;
        if (problem.max_tube_violation(theta) > 0.0) continue;
        const double a = cand.action();
        if (a < out.cost) {
            out.cost = a;
            out.control = cand;
            out.endpoint_residual = residual;
            out.feasible = true;
        }
    }

    if (!out.feasible) {
        throw numerical_error("quasipotential_vt: no endpoint-feasible control found (T=" +
                              std::to_string(T) + ")");
    }
    return out;
}

struct VOptions {
    double t_min = 0.25;
    double t_max = 64.0;
    int t_count = 12;
    int jobs = 1; // horizons are independent minimizations
    VtOptions vt;
    std::map<double, Control> warm_starts; // per-T warm starts from a coarser level
};

struct VResult {
    double cost = std::numeric_limits<double>::infinity();
    double argmin_T = 0.0;
    std::vector<double> t_grid;
    std::vector<double> costs;
    Control best_control;
};

inline std::vector<double> log_t_grid(double t_min, double t_max, int count) {
    std::vector<double> grid;
    for (int j = 0; j < count; ++j) {
        const double f = count == 1 ? 0.0 : static_cast<double>(j) / static_cast<double>(count - 1);
        grid.push_back(t_min * std::pow(t_max / t_min, f));
    }
    return grid;
}

/// V(x, y) as the minimum of V_T over a log-spaced horizon grid. Refining
/// the grid (doubling t_count-1) keeps all previous horizons, so reported
/// values are monotone under refinement when warm starts are passed along.
inline VResult quasipotential_v(const Model& m, const State& x, const State& y,
                                const VOptions& opts = {}) {
    VResult out;
    out.t_grid = log_t_grid(opts.t_min, opts.t_max, opts.t_count);
    std::vector<VtResult> per_t(out.t_grid.size());
    std::vector<char> feasible(out.t_grid.size(), 0);
    parallel_for(out.t_grid.size(), opts.jobs, [&](std::size_t j) {
        const double T = out.t_grid[j];
        VtOptions vt = opts.vt;
        vt.seed = splitmix_combine(opts.vt.seed, j);
        const auto warm = opts.warm_starts.find(T);
        if (warm != opts.warm_starts.end()) vt.extra_starts.push_back(warm->second);
        try {
            per_t[j] = quasipotential_vt(m, x, y, T, vt);
            feasible[j] = 1;
        } catch (const numerical_error&) {
            feasible[j] = 0;
        }
    });
    for (std::size_t j = 0; j < out.t_grid.size(); ++j) {
        if (!feasible[j]) {
            out.costs.push_back(std::numeric_limits<double>::infinity());
            continue;
        }
        out.costs.push_back(per_t[j].cost);
        if (per_t[j].cost < out.cost) {
            out.cost = per_t[j].cost;
            out.argmin_T = out.t_grid[j];
            out.best_control = per_t[j].control;
        }
    }
    if (!std::isfinite(out.cost)) {
        throw numerical_error("quasipotential_v: infeasible at every horizon");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Class costs and Freidlin-Wentzell weights
// ---------------------------------------------------------------------------

struct CostMatrix {
    Eigen::MatrixXd entries; // L x L, +inf allowed
    int L = 0;
};

struct CostOptions {
    int phases_per_orbit = 16;
    VOptions v;
    bool include_diagonal = true;
    int jobs = 1;
};

/// Pairwise class costs V(K_i, K_j) as minima of the point costs over the
/// sampled phases of each class. Diagonal entries use the same machinery and
/// are expected to be ~0 (same-class points are FW-equivalent).
inline CostMatrix class_costs(const Model& m, const LimitSet& ls, const CostOptions& opts = {}) {
    const int L = ls.n_classes();
    if (L < 2) throw std::invalid_argument("class_costs: need at least two classes");
    CostMatrix out;
    out.L = L;
    out.entries = Eigen::MatrixXd::Constant(L, L, std::numeric_limits<double>::infinity());

    std::vector<std::vector<State>> samples;
    for (int i = 0; i < L; ++i) samples.push_back(ls.class_samples(i, opts.phases_per_orbit));

    struct Cell { int i, j; };
    std::vector<Cell> cells;
    for (int i = 0; i < L; ++i) {
        for (int j = 0; j < L; ++j) {
            if (i == j && !opts.include_diagonal) continue;
            cells.push_back({i, j});
        }
    }
    std::vector<double> results(cells.size(), std::numeric_limits<double>::infinity());
    parallel_for(cells.size(), opts.jobs, [&](std::size_t c) {
        const auto [i, j] = cells[c];
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < samples[static_cast<std::size_t>(i)].size(); ++a) {
            for (std::size_t b = 0; b < samples[static_cast<std::size_t>(j)].size(); ++b) {
                VOptions vo = opts.v;
                vo.vt.seed = splitmix_combine(opts.v.vt.seed,
                                              (static_cast<std::uint64_t>(c) << 32) ^
                                                  (a << 16) ^ b);
                try {
                    const VResult r = quasipotential_v(m, samples[static_cast<std::size_t>(i)][a],
                                                       samples[static_cast<std::size_t>(j)][b], vo);
                    best = std::min(best, r.cost);
                } catch (const numerical_error&) {
                    // leave infinity for this pair
                }
            }
        }
        results[c] = best;
    });
    for (std::size_t c = 0; c < cells.size(); ++c) out.entries(cells[c].i, cells[c].j) = results[c];
    if (opts.include_diagonal) {
        for (int i = 0; i < L; ++i) {
            if (!std::isfinite(out.entries(i, i))) out.entries(i, i) = 0.0;
        }
    }
    return out;
}

struct Weights {
    Eigen::VectorXd w;
    int argmin_class = 0;
};

namespace detail {

/// Brute-force minimum over all {i}-graphs: every m != i carries exactly one
/// arrow m -> f(m), and following arrows from any m must reach i (no cycles).
inline double igraph_enumerate(const Eigen::MatrixXd& V, int root) {
    const int L = static_cast<int>(V.rows());
    std::vector<int> nodes;
    for (int v = 0; v < L; ++v)
        if (v != root) nodes.push_back(v);
    const int k = static_cast<int>(nodes.size());
    std::vector<int> choice(static_cast<std::size_t>(k), 0);
    double best = std::numeric_limits<double>::infinity();
    for (;;) {
        // Build the arrow map and test acyclicity.
        double cost = 0.0;
        bool ok = true;
        std::vector<int> target(static_cast<std::size_t>(L), -1);
        for (int a = 0; a < k && ok; ++a) {
            int to = choice[static_cast<std::size_t>(a)];
            if (to >= nodes[static_cast<std::size_t>(a)]) ++to; // skip self-arrow
            target[static_cast<std::size_t>(nodes[static_cast<std::size_t>(a)])] = to;
            cost += V(nodes[static_cast<std::size_t>(a)], to);
        }
        if (ok && std::isfinite(cost)) {
            for (int a = 0; a < k && ok; ++a) {
                int v = nodes[static_cast<std::size_t>(a)];
                int hops = 0;
                while (v != root && hops <= L) {
                    v = target[static_cast<std::size_t>(v)];
                    ++hops;
                }
                if (v != root) ok = false;
            }
            if (ok) best = std::min(best, cost);
        }
        int pos = 0;
        while (pos < k) {
            if (++choice[static_cast<std::size_t>(pos)] < L - 1) break;
            choice[static_cast<std::size_t>(pos)] = 0;
            ++pos;
        }
        if (pos == k) break;
    }
    return best;
}

/// Chu-Liu/Edmonds minimum out-arborescence from `root` on a dense graph
/// with costs C(u, v) for the edge u -> v (infinity = absent).
inline double edmonds_arborescence(Eigen::MatrixXd C, int root) {
    const double inf = std::numeric_limits<double>::infinity();
    int L = static_cast<int>(C.rows());
    double total = 0.0;
    std::vector<int> id(static_cast<std::size_t>(L));
    for (;;) {
        const int n = static_cast<int>(C.rows());
        std::vector<int> parent(static_cast<std::size_t>(n), -1);
        std::vector<double> in_cost(static_cast<std::size_t>(n), inf);
        for (int v = 0; v < n; ++v) {
            if (v == root) continue;
            for (int u = 0; u < n; ++u) {
                if (u == v) continue;
                if (C(u, v) < in_cost[static_cast<std::size_t>(v)]) {
                    in_cost[static_cast<std::size_t>(v)] = C(u, v);
                    parent[static_cast<std::size_t>(v)] = u;
                }
            }
            if (!std::isfinite(in_cost[static_cast<std::size_t>(v)])) return inf;
        }
        // Find a cycle among the chosen in-edges.
        std::vector<int> visited(static_cast<std::size_t>(n), -1);
        std::vector<int> cycle;
        for (int v0 = 0; v0 < n && cycle.empty(); ++v0) {
            int v = v0;
            std::vector<int> chain;
            while (v != root && visited[static_cast<std::size_t>(v)] == -1) {
                visited[static_cast<std::size_t>(v)] = v0;
                chain.push_back(v);
                v = parent[static_cast<std::size_t>(v)];
            }
            if (v != root && visited[static_cast<std::size_t>(v)] == v0) {
                // walk the chain back to v to extract the cycle
                auto it = std::find(chain.begin(), chain.end(), v);
                cycle.assign(it, chain.end());
            }
        }
        if (cycle.empty()) {
            for (int v = 0; v < n; ++v)
                if (v != root) total += in_cost[static_cast<std::size_t>(v)];
            return total;
        }
        // Contract the cycle into a single super-node.
        for (int v : cycle) total += in_cost[static_cast<std::size_t>(v)];
        std::vector<int> remap(static_cast<std::size_t>(n), -1);
        int idx = 0;
        for (int v = 0; v < n; ++v) {
            if (std::find(cycle.begin(), cycle.end(), v) == cycle.end()) remap[static_cast<std::size_t>(v)] = idx++;
        }
        const int super = idx;
        for (int v : cycle) remap[static_cast<std::size_t>(v)] = super;
        Eigen::MatrixXd C2 = Eigen::MatrixXd::Constant(idx + 1, idx + 1, inf);
        for (int u = 0; u < n; ++u) {
            for (int v = 0; v < n; ++v) {
                if (u == v || !std::isfinite(C(u, v))) continue;
                const int ru = remap[static_cast<std::size_t>(u)], rv = remap[static_cast<std::size_t>(v)];
                if (ru == rv) continue;
                double w = C(u, v);
                if (rv == super) w -= in_cost[static_cast<std::size_t>(v)]; // entering the cycle replaces one cycle edge
                if (w < C2(ru, rv)) C2(ru, rv) = w;
            }
        }
        root = remap[static_cast<std::size_t>(root)];
        C = std::move(C2);
        if (C.rows() <= 1) return total;
    }
}

} // namespace detail

struct FwOptions {
    int enumeration_limit = 6; // exhaustive cross-check up to this many classes
};

/// Freidlin-Wentzell weights W(K_i): the minimum total cost over all
/// {i}-graphs. Computed by Chu-Liu/Edmonds on the arrow-reversed graph; for
/// small L the exhaustive enumeration runs too and the two must agree.
inline Weights fw_weights(const CostMatrix& costs, const FwOptions& opts = {}) {
    const int L = costs.L;
    Weights out;
    out.w = Eigen::VectorXd(L);
    // In-arborescence toward i on V equals out-arborescence from i on the
    // reversed graph.
    Eigen::MatrixXd reversed = costs.entries.transpose();
    for (int i = 0; i < L; ++i) {
        const double via_edmonds = detail::edmonds_arborescence(reversed, i);
        if (L <= opts.enumeration_limit) {
            const double via_enum = detail::igraph_enumerate(costs.entries, i);
            const double scale = std::max(1.0, std::abs(via_enum));
            if (std::isfinite(via_enum) != std::isfinite(via_edmonds) ||
                (std::isfinite(via_enum) && std::abs(via_enum - via_edmonds) > 1e-9 * scale)) {
                throw numerical_error("fw_weights: enumeration and arborescence disagree for class " +
                                      std::to_string(i));
            }
        }
        out.w(i) = via_edmonds;
    }
    out.w.minCoeff(&out.argmin_class);
    return out;
}

/// W(x) = min_i (W(K_i) + V(K_i, x)) - min_j W(K_j), from supplied costs
/// V(K_i, x).
inline double w_of_x(const Weights& weights, const Eigen::VectorXd& costs_to_x) {
    if (weights.w.size() != costs_to_x.size()) {
        throw std::invalid_argument("w_of_x: weight/cost dimension mismatch");
    }
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < weights.w.size(); ++i) best = std::min(best, weights.w(i) + costs_to_x(i));
    return best - weights.w.minCoeff();
}

/// Convenience overload computing V(K_i, x) with the quasipotential
/// machinery from sampled class phases.
inline double w_of_x(const Model& m, const LimitSet& ls, const Weights& weights, const State& x,
                     const CostOptions& opts = {}) {
    Eigen::VectorXd costs(ls.n_classes());
    for (int i = 0; i < ls.n_classes(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        const auto samples = ls.class_samples(i, opts.phases_per_orbit);
        for (std::size_t a = 0; a < samples.size(); ++a) {
            VOptions vo = opts.v;
            vo.vt.seed = splitmix_combine(opts.v.vt.seed, (static_cast<std::uint64_t>(i) << 24) ^ a);
            best = std::min(best, quasipotential_v(m, samples[a], x, vo).cost);
        }
        costs(i) = best;
    }
    return w_of_x(weights, costs);
}

} // namespace osch
