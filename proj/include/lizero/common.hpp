#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace lizero {

/// Maximum achievable discounted return, R_max/(1-gamma). Used as the
/// optimistic initial value everywhere a Q estimate is missing.
inline double value_cap(double r_max, double gamma) {
    return r_max / (1.0 - gamma);
}

/// Reward/transition trade-off constant kappa = R_max*gamma/(1-gamma).
inline double kappa(double r_max, double gamma) {
    return r_max * gamma / (1.0 - gamma);
}

/// Lipschitz constant of Q-value gaps with respect to the task distance.
inline double lipschitz_l(double gamma) {
    return 1.0 / (1.0 - gamma);
}

/// Thrown when an operation's preconditions are violated (mismatched
/// spaces, out-of-range ids, empty inputs, ...).
class InvalidInput : public std::invalid_argument {
public:
    explicit InvalidInput(const std::string& what) : std::invalid_argument(what) {}
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw InvalidInput(msg);
}

/// Shortest round-trip decimal rendering of a double. Locale-free and
/// byte-stable, so emitted files compare equal across runs.
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

} // namespace lizero
