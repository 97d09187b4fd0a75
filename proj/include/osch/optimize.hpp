#pragma once

#include <deque>
#include <functional>

#include <Eigen/Dense>

namespace osch {

struct LbfgsOptions {
    int max_iter = 150;
    int memory = 8;
    double grad_tol = 1e-8;   // on the max-norm of the gradient
    double f_rel_tol = 1e-12; // relative objective decrease
    int max_backtracks = 40;
};

struct LbfgsResult {
    Eigen::VectorXd x;
    double f = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Limited-memory BFGS with Armijo backtracking. The objective callback
/// fills the gradient and returns the value.
inline LbfgsResult lbfgs_minimize(
    const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>& objective,
    Eigen::VectorXd x, const LbfgsOptions& opts = {}) {
    const Eigen::Index n = x.size();
    Eigen::VectorXd g(n), g_new(n);
    double f = objective(x, g);

    std::deque<Eigen::VectorXd> s_hist, y_hist;
    std::deque<double> rho_hist;

    LbfgsResult result;
    for (int iter = 0; iter < opts.max_iter; ++iter) {
        result.iterations = iter;
        if (g.cwiseAbs().maxCoeff() < opts.grad_tol * std::max(1.0, std::abs(f))) {
            result.converged = true;
            break;
        }

        // Two-loop recursion for the search direction.
        Eigen::VectorXd q = g;
        std::vector<double> alpha(s_hist.size());
        for (std::size_t i = s_hist.size(); i-- > 0;) {
            alpha[i] = rho_hist[i] * s_hist[i].dot(q);
            q -= alpha[i] * y_hist[i];
        }
        if (!s_hist.empty()) {
            const double gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
            q *= gamma;
        }
        for (std::size_t i = 0; i < s_hist.size(); ++i) {
            const double beta = rho_hist[i] * y_hist[i].dot(q);
            q += (alpha[i] - beta) * s_hist[i];
        }
        Eigen::VectorXd d = -q;
        double slope = g.dot(d);
        if (slope >= 0.0) { // fall back to steepest descent
            d = -g;
            slope = -g.squaredNorm();
        }

        double step = 1.0;
        double f_new = f;
        Eigen::VectorXd x_new = x;
        bool accepted = false;
        for (int bt = 0; bt < opts.max_backtracks; ++bt) {
            x_new = x + step * d;
            f_new = objective(x_new, g_new);
            if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;

        const Eigen::VectorXd s = x_new - x;
        const Eigen::VectorXd yv = g_new - g;
        const double sy = s.dot(yv);
        if (sy > 1e-12 * s.norm() * yv.norm()) {
            s_hist.push_back(s);
            y_hist.push_back(yv);
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > opts.memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }

        const double decrease = f - f_new;
        x.swap(x_new);
        g.swap(g_new);
        f = f_new;
        if (decrease < opts.f_rel_tol * std::max(1.0, std::abs(f))) {
            result.converged = true;
            break;
        }
    }

    result.x = std::move(x);
    result.f = f;
    return result;
}

} // namespace osch
