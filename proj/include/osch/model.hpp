#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "osch/common.hpp"

namespace osch {

/// Logistic jump-rate function
///   f(x) = fmin + (fmax - fmin) / (1 + exp(-slope * (x - center))),
/// nondecreasing, bounded in (fmin, fmax), strictly lower bounded by fmin > 0.
/// slope = 0 degenerates to the constant (fmin + fmax) / 2.
struct RateSpec {
    double fmin = 1.0;
    double fmax = 2.0;
    double slope = 1.0;   // 1 / state-unit
    double center = 0.0;  // state-unit

    double value(double x) const {
        return fmin + (fmax - fmin) * logistic(slope * (x - center));
    }

    double deriv(double x) const {
        const double s = logistic(slope * (x - center));
        return (fmax - fmin) * slope * s * (1.0 - s);
    }

    /// Global Lipschitz constant, attained at the center.
    double lipschitz() const { return (fmax - fmin) * slope / 4.0; }

  private:
    static double logistic(double t) {
        if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
        const double e = std::exp(t);
        return e / (1.0 + e);
    }
};

/// (value, derivative) of a rate function at x. The derivative is the exact
/// closed-form logistic derivative, nonnegative everywhere.
inline std::pair<double, double> rate(const RateSpec& spec, double x) {
    return {spec.value(x), spec.deriv(x)};
}

/// Erlang memory kernel h(s) = c * exp(-nu s) * s^n / n!.
/// |h| peaks at s = n/nu and integrates to 1/nu^(n+1).
struct KernelParams {
    double c = 1.0;  // sign, -1 or +1
    double nu = 1.0; // 1 / time
    int n = 0;       // delay order

    double factorial() const {
        double f = 1.0;
        for (int k = 2; k <= n; ++k) f *= static_cast<double>(k);
        return f;
    }
};

inline double erlang_eval(const KernelParams& k, double s) {
    if (s < 0.0) throw std::invalid_argument("erlang_eval: negative time argument");
    return k.c * std::exp(-k.nu * s) * std::pow(s, static_cast<double>(k.n)) / k.factorial();
}

/// Two-population model. Kernel k12 carries the influence of population 2 on
/// population 1 (and drives the population-1 cascade), k21 the reverse.
///
/// Global state layout (0-based), dimension n = n1 + n2 + 2:
///   x[0 .. n1]       population-1 cascade X_{1,1} .. X_{1,n1+1}
///   x[n1+1 .. n-1]   population-2 cascade X_{2,1} .. X_{2,n2+1}
/// Population 1 jumps at rate f1(x[0]); population 2 at rate f2(x[n1+1]).
/// The driven (noisy) coordinates are x[n1] and x[n-1].
struct Model {
    KernelParams k12;
    KernelParams k21;
    RateSpec f1;
    RateSpec f2;
    double p1 = 0.5;
    double p2 = 0.5;

    int n1() const { return k12.n; }
    int n2() const { return k21.n; }
    double nu1() const { return k12.nu; }
    double nu2() const { return k21.nu; }
    double c1() const { return k12.c; }
    double c2() const { return k21.c; }

    int dim() const { return k12.n + k21.n + 2; }

    // Layout helpers.
    int pop2_first() const { return k12.n + 1; }
    int noisy1() const { return k12.n; }     // last coordinate of cascade 1
    int noisy2() const { return dim() - 1; } // last coordinate of cascade 2
};

namespace detail {

inline void check_rate_spec(const RateSpec& f, const std::string& name,
                            std::vector<std::string>& bad) {
    if (!(f.fmin > 0.0)) bad.push_back(name + ": rate not strictly lower bounded (fmin must be > 0)");
    if (!(f.fmax > f.fmin)) bad.push_back(name + ": fmax must exceed fmin");
    if (f.slope < 0.0) bad.push_back(name + ": slope must be nonnegative");
    if (!std::isfinite(f.center)) bad.push_back(name + ": center must be finite");
}

inline void check_kernel(const KernelParams& k, const std::string& name,
                         std::vector<std::string>& bad) {
    if (!(k.nu > 0.0)) bad.push_back(name + ": nonpositive nu");
    if (k.c != 1.0 && k.c != -1.0) bad.push_back(name + ": c must be -1 or +1");
    if (k.n < 0) bad.push_back(name + ": delay order must be nonnegative");
    if (k.n > 20) bad.push_back(name + ": delay order exceeds 20");
}

} // namespace detail

/// Validates all invariants at once; throws validation_error listing every
/// violation if any field is out of range.
inline Model validate_model(Model m) {
    std::vector<std::string> bad;
    detail::check_kernel(m.k12, "k12", bad);
    detail::check_kernel(m.k21, "k21", bad);
    detail::check_rate_spec(m.f1, "f1", bad);
    detail::check_rate_spec(m.f2, "f2", bad);
    if (!(m.p1 > 0.0 && m.p1 < 1.0)) bad.push_back("p1 must lie in (0,1)");
    if (!(m.p2 > 0.0 && m.p2 < 1.0)) bad.push_back("p2 must lie in (0,1)");
    if (std::abs(m.p1 + m.p2 - 1.0) > 1e-12) bad.push_back("fractions do not sum to 1");
    if (!bad.empty()) throw validation_error(std::move(bad));
    return m;
}

// Config parsing (make_model, parse_config, load_model_file) lives in
// config.hpp to keep the json dependency out of this header.

} // namespace osch
