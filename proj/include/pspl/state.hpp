#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "pspl/error.hpp"
#include "pspl/fem.hpp"

namespace pspl {

enum class SchemeKind { coupled, incomplete, full };

inline std::string to_string(SchemeKind k)
{
    switch (k) {
    case SchemeKind::coupled:
        return "coupled";
    case SchemeKind::incomplete:
        return "incomplete";
    case SchemeKind::full:
        return "full";
    }
    return "?";
}

inline SchemeKind parse_scheme(const std::string& s)
{
    if (s == "coupled")
        return SchemeKind::coupled;
    if (s == "incomplete")
        return SchemeKind::incomplete;
    if (s == "full")
        return SchemeKind::full;
    throw InvalidSpecError("unknown scheme '" + s + "' (coupled|incomplete|full)");
}

struct SchemeConfig {
    SchemeKind kind = SchemeKind::coupled;
    double theta = 1.0;
    double tau = 0.005;  ///< s
    double t_end = 1.0;  ///< s
    double tol = 1e-10;  ///< relative Krylov tolerance
    std::size_t max_iter = 0; ///< 0: 10 * n per solve
    bool energy_monitor = true;
    std::size_t snapshot_every = 10;
    double divergence_factor = 1e6;

    void validate() const
    {
        if (!(tau > 0.0) || !std::isfinite(tau))
            throw InvalidSpecError("time step must be positive");
        if (!(t_end >= tau * (1.0 - 1e-12)))
            throw InvalidSpecError("t_end must be at least one time step");
        if (!(theta >= 0.0) || !std::isfinite(theta))
            throw InvalidSpecError("theta must be nonnegative");
        if (!(tol > 0.0))
            throw InvalidSpecError("solver tolerance must be positive");
    }

    std::size_t num_steps() const { return std::size_t(std::ceil(t_end / tau - 1e-9)); }

    SolverOptions solver() const { return {tol, max_iter, Preconditioner::jacobi}; }
};

/// Discrete fields at time level n. The previous pressures are present for
/// the three-level schemes once n >= 1. `u_lagged` is true when u was
/// computed from the previous level's pressures (splitting steps) rather
/// than from the same level's (coupled and bootstrap steps).
struct State {
    std::size_t n = 0;
    double t = 0.0;
    FieldVector u;
    FieldVector p1;
    FieldVector p2;
    std::optional<FieldVector> p1_prev;
    std::optional<FieldVector> p2_prev;
    bool u_lagged = false;

    bool finite() const
    {
        auto ok = [](const std::optional<FieldVector>& v) { return !v || all_finite(*v); };
        return all_finite(u) && all_finite(p1) && all_finite(p2) && ok(p1_prev) && ok(p2_prev);
    }
};

} // namespace pspl
