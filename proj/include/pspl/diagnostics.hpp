#pragma once

// Energy functionals of the time integrators and L2 error measures.

#include <optional>
#include <span>
#include <vector>

#include "pspl/linalg.hpp"
#include "pspl/state.hpp"
#include "pspl/system.hpp"

namespace pspl {

struct EnergyRecord {
    std::size_t n = 0;
    double t = 0.0;
    double two_level_energy = 0.0;
    std::optional<double> three_level_energy;
    bool monotone = true; ///< no increase since the previous record
};

/// ||u||_A^2 + ||p1||_C1^2 + ||p2||_C2^2
inline double energy_two_level(const SystemOperators& ops, std::span<const double> u, std::span<const double> p1,
                               std::span<const double> p2)
{
    return quadratic_form(ops.A, u) + quadratic_form(ops.C1, p1) + quadratic_form(ops.C2, p2);
}

inline double energy_two_level(const SystemOperators& ops, const State& s)
{
    return energy_two_level(ops, s.u, s.p1, s.p2);
}

/// <B1~ v, v> for the stacked pressure vector v, where B1~ = -D A^-1 G. Equal
/// to ||G v||^2_{A^-1}; costs one elasticity solve.
inline double schur_form(const SystemOperators& ops, std::span<const double> v, const SolverOptions& opt = {},
                         SolveReport* report = nullptr)
{
    const Vector g = apply_G(ops, first_half(v), second_half(v));
    auto [z, rep] = cg_solve(ops.A, g, opt);
    if (!rep.converged)
        throw SolverError("elasticity solve in schur_form did not converge");
    if (report)
        *report = rep;
    return dot(z, g);
}

struct ThreeLevelEnergy {
    double total = 0.0;
    double mean_term = 0.0;       ///< ||(p^n + p^{n-1})/2||^2_A~
    double difference_term = 0.0; ///< ||(p^n - p^{n-1})/tau||^2_{D~ - tau^2/4 A~}
};

/// Energy of the three-level splitting schemes in canonical form,
///   E^n = ||(p^n + p^{n-1})/2||^2_A~ + ||(p^n - p^{n-1})/tau||^2_{D~ - tau^2/4 A~}
/// with A~ = block B and
///   D~ = tau/2 ((2 theta - 1) C - B1~) + tau^2/2 A~_x,
/// A~_x = A~ for the incomplete scheme and its block diagonal for the full one.
/// The difference term is reported as computed; it is a norm only when
/// 2 theta >= 1 + delta.
inline ThreeLevelEnergy energy_three_level(const SystemOperators& ops, std::span<const double> p1,
                                           std::span<const double> p2, std::span<const double> p1_prev,
                                           std::span<const double> p2_prev, double tau, double theta,
                                           SchemeKind kind = SchemeKind::incomplete, const SolverOptions& opt = {})
{
    const Vector p = concat({p1, p2});
    const Vector q = concat({p1_prev, p2_prev});
    Vector mean(p.size()), diff(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        mean[i] = 0.5 * (p[i] + q[i]);
        diff[i] = (p[i] - q[i]) / tau;
    }
    const CsrMatrix a = block_B(ops);
    const CsrMatrix c = block_C(ops);
    ThreeLevelEnergy e;
    e.mean_term = quadratic_form(a, mean);
    const double a_diff = quadratic_form(a, diff);
    const double ax_diff = kind == SchemeKind::full ? quadratic_form(block_B_diagonal(ops), diff) : a_diff;
    bool nonzero = false;
    for (double v : diff)
        nonzero = nonzero || v != 0.0;
    const double b1 = nonzero ? schur_form(ops, diff, opt) : 0.0;
    const double d_form = 0.5 * tau * ((2.0 * theta - 1.0) * quadratic_form(c, diff) - b1) + 0.5 * tau * tau * ax_diff;
    e.difference_term = d_form - 0.25 * tau * tau * a_diff;
    e.total = e.mean_term + e.difference_term;
    return e;
}

inline ThreeLevelEnergy energy_three_level(const SystemOperators& ops, const State& s, double tau, double theta,
                                           SchemeKind kind = SchemeKind::incomplete, const SolverOptions& opt = {})
{
    if (!s.p1_prev || !s.p2_prev)
        throw InvalidSpecError("three-level energy needs previous pressures");
    return energy_three_level(ops, s.p1, s.p2, *s.p1_prev, *s.p2_prev, tau, theta, kind, opt);
}

/// Mass-weighted L2 distance  sqrt(<M (a - b), a - b>).
inline double field_error(std::span<const double> a, std::span<const double> b, const CsrMatrix& mass)
{
    if (a.size() != b.size() || a.size() != mass.rows())
        throw DimensionError("field_error: dimension mismatch");
    const Vector d = add(a, b, -1.0);
    return std::sqrt(std::max(0.0, quadratic_form(mass, d)));
}

struct ErrorSeries {
    std::vector<double> t;
    std::vector<double> eps_u;
    std::vector<double> eps_p1;
    std::vector<double> eps_p2;
};

} // namespace pspl
