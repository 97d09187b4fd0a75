#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace osch {

/// Raised when a configuration violates a model invariant. Carries the full
/// list of violations so callers can report all of them at once.
class validation_error : public std::runtime_error {
  public:
    explicit validation_error(std::vector<std::string> violations)
        : std::runtime_error(join(violations)), violations_(std::move(violations)) {}

    const std::vector<std::string>& violations() const noexcept { return violations_; }

  private:
    static std::string join(const std::vector<std::string>& v) {
        std::string out = "invalid configuration:";
        for (const auto& s : v) {
            out += "\n  - " + s;
        }
        return out;
    }

    std::vector<std::string> violations_;
};

/// Raised when an iterative numerical procedure fails to meet its contract
/// (non-convergence, infeasibility, ill-conditioning). Distinct from
/// validation_error so the CLI can map the two to different exit codes.
class numerical_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline double square(double x) { return x * x; }

} // namespace osch
