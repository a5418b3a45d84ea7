#pragma once

// The assembled operator bundle of the semi-discrete double-porosity
// poroelasticity problem
//
//   A u + G1 p1 + G2 p2 = F
//   C1 p1' + D1 u' + B1 p1 + Exch (p1 - p2) = f1
//   C2 p2' + D2 u' + B2 p2 + Exch (p2 - p1) = f2
//
// with D_l = alpha_l D0, G_l = -D_l^T, Exch = gamma * mass, and boundary
// conditions already built in.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "pspl/fem.hpp"
#include "pspl/linalg.hpp"
#include "pspl/mesh.hpp"

namespace pspl {

/// Which boundary segments carry which condition.
struct BcLayout {
    std::string name = "prose";
    std::vector<BoundaryTag> loaded;       ///< traction g(t), no-flux
    std::vector<BoundaryTag> drained;      ///< p1 = p2 = 0, traction-free
    std::vector<BoundaryTag> clamped;      ///< u = 0, no-flux
    std::vector<BoundaryTag> normal_fixed; ///< u_x = 0, zero tangential traction, no-flux

    /// Load on G1, drainage on G2 (matches the domain figure and prose).
    static BcLayout prose()
    {
        return {"prose", {BoundaryTag::G1}, {BoundaryTag::G2}, {BoundaryTag::G4}, {BoundaryTag::G3}};
    }

    /// Literal reading of the boundary-condition list: drained G1, loaded G2.
    static BcLayout literal()
    {
        return {"literal", {BoundaryTag::G2}, {BoundaryTag::G1}, {BoundaryTag::G4}, {BoundaryTag::G3}};
    }

    static BcLayout from_name(const std::string& name)
    {
        if (name == "prose")
            return prose();
        if (name == "literal")
            return literal();
        throw InvalidSpecError("unknown boundary-condition layout '" + name + "'");
    }
};

/// Loads, sources and initial pressures. Empty functions mean zero.
struct ProblemData {
    Traction traction = sinusoidal_normal_traction(1.0);
    std::function<double(double x, double y, double t)> f1;
    std::function<double(double x, double y, double t)> f2;
    std::function<double(double x, double y)> s1;
    std::function<double(double x, double y)> s2;

    static ProblemData unloaded()
    {
        ProblemData d;
        d.traction = nullptr;
        return d;
    }
};

struct SystemOperators {
    Mesh mesh;
    DofMap dof_u;
    DofMap dof_p;
    MaterialParams params;
    BcLayout layout;

    CsrMatrix A;    ///< elasticity, Dirichlet rows eliminated (unit diagonal)
    CsrMatrix B1;   ///< pressure stiffness, drained rows eliminated (unit diagonal)
    CsrMatrix B2;
    CsrMatrix C1;   ///< beta1 * mass, drained rows eliminated (unit diagonal)
    CsrMatrix C2;
    CsrMatrix M;    ///< unit mass, drained rows eliminated (unit diagonal)
    CsrMatrix Exch; ///< gamma * mass, drained rows and columns zeroed
    CsrMatrix D0;   ///< (div u, q), drained rows and clamped columns zeroed
    CsrMatrix D1;
    CsrMatrix D2;
    CsrMatrix G1;   ///< -D1^T
    CsrMatrix G2;   ///< -D2^T

    CsrMatrix mass_p; ///< unconstrained scalar mass, for L2 norms
    CsrMatrix mass_u; ///< unconstrained vector mass, for L2 norms

    std::vector<std::size_t> u_fixed;   ///< constrained displacement dofs
    std::vector<std::size_t> p_drained; ///< constrained pressure dofs (each leg)

    std::size_t nu() const { return dof_u.num_dofs; }
    std::size_t np() const { return dof_p.num_dofs; }
};

// ---------------------------------------------------------------------------

inline SystemOperators build_system(const Mesh& mesh, const MaterialParams& params,
                                    const BcLayout& layout = BcLayout::prose())
{
    params.validate();
    SystemOperators ops;
    ops.mesh = mesh;
    ops.params = params;
    ops.layout = layout;
    ops.dof_u = build_dofmap(mesh, SpaceKind::p2_vector);
    ops.dof_p = build_dofmap(mesh, SpaceKind::p1_scalar);

    {
        std::vector<char> fixed(ops.nu(), 0);
        for (int comp = 0; comp < 2; ++comp)
            for (auto d : ops.dof_u.boundary_set(layout.clamped, comp))
                fixed[d] = 1;
        for (auto d : ops.dof_u.boundary_set(layout.normal_fixed, 0))
            fixed[d] = 1;
        for (std::size_t i = 0; i < fixed.size(); ++i)
            if (fixed[i])
                ops.u_fixed.push_back(i);
    }
    ops.p_drained = ops.dof_p.boundary_set(layout.drained);

    ops.A = assemble_elasticity(mesh, ops.dof_u, params);
    constrain_symmetric(ops.A, ops.u_fixed, 1.0);

    ops.mass_p = assemble_scaled_mass(mesh, ops.dof_p, 1.0);
    ops.mass_u = assemble_scaled_mass(mesh, ops.dof_u, 1.0);

    auto constrained = [&](CsrMatrix m, double diag) {
        constrain_symmetric(m, ops.p_drained, diag);
        return m;
    };
    ops.B1 = constrained(assemble_pressure_stiffness(mesh, ops.dof_p, params, 1), 1.0);
    ops.B2 = constrained(assemble_pressure_stiffness(mesh, ops.dof_p, params, 2), 1.0);
    ops.M = constrained(ops.mass_p, 1.0);
    ops.C1 = constrained(assemble_scaled_mass(mesh, ops.dof_p, params.beta1), 1.0);
    ops.C2 = constrained(assemble_scaled_mass(mesh, ops.dof_p, params.beta2), 1.0);
    ops.Exch = constrained(assemble_scaled_mass(mesh, ops.dof_p, params.gamma), 0.0);

    ops.D0 = assemble_coupling(mesh, ops.dof_u, ops.dof_p);
    zero_rows(ops.D0, ops.p_drained);
    zero_cols(ops.D0, ops.u_fixed);
    ops.D1 = ops.D0.scaled(params.alpha1);
    ops.D2 = ops.D0.scaled(params.alpha2);
    ops.G1 = ops.D1.transpose().scale(-1.0);
    ops.G2 = ops.D2.transpose().scale(-1.0);
    return ops;
}

// ---------------------------------------------------------------------------
// Block compositions over the stacked pressure vector (p1, p2).

/// blockdiag(C1, C2)
inline CsrMatrix block_C(const SystemOperators& ops)
{
    const auto n = ops.np();
    return assemble_blocks(2 * n, 2 * n, {{0, 0, &ops.C1}, {n, n, &ops.C2}});
}

/// [[B1 + Exch, -Exch], [-Exch, B2 + Exch]]
inline CsrMatrix block_B(const SystemOperators& ops)
{
    const auto n = ops.np();
    return assemble_blocks(2 * n, 2 * n,
                           {{0, 0, &ops.B1},
                            {0, 0, &ops.Exch},
                            {0, n, &ops.Exch, -1.0},
                            {n, 0, &ops.Exch, -1.0},
                            {n, n, &ops.B2},
                            {n, n, &ops.Exch}});
}

/// blockdiag(B1 + Exch, B2 + Exch): the diagonal part of block_B.
inline CsrMatrix block_B_diagonal(const SystemOperators& ops)
{
    const auto n = ops.np();
    return assemble_blocks(2 * n, 2 * n,
                           {{0, 0, &ops.B1}, {0, 0, &ops.Exch}, {n, n, &ops.B2}, {n, n, &ops.Exch}});
}

/// [G1 G2]: stacked pressures -> displacement space.
inline CsrMatrix block_G(const SystemOperators& ops)
{
    return assemble_blocks(ops.nu(), 2 * ops.np(), {{0, 0, &ops.G1}, {0, ops.np(), &ops.G2}});
}

/// [D1; D2]: displacement -> stacked pressures.
inline CsrMatrix block_D(const SystemOperators& ops)
{
    return assemble_blocks(2 * ops.np(), ops.nu(), {{0, 0, &ops.D1}, {ops.np(), 0, &ops.D2}});
}

/// G1 p1 + G2 p2
inline Vector apply_G(const SystemOperators& ops, std::span<const double> p1, std::span<const double> p2)
{
    Vector r = spmv(ops.G1, p1);
    axpy(1.0, spmv(ops.G2, p2), r);
    return r;
}

inline std::span<const double> first_half(std::span<const double> v) { return v.first(v.size() / 2); }
inline std::span<const double> second_half(std::span<const double> v) { return v.subspan(v.size() / 2); }

// ---------------------------------------------------------------------------
// Right-hand sides.

/// Traction load on the loaded segments at time t; zero at constrained dofs.
inline FieldVector load_vector(const SystemOperators& ops, const ProblemData& data, double t)
{
    FieldVector f(ops.nu(), 0.0);
    if (!data.traction)
        return f;
    for (auto tag : ops.layout.loaded) {
        const auto l = assemble_traction_load(ops.mesh, ops.dof_u, tag, data.traction, t);
        axpy(1.0, l.values, f);
    }
    for (auto d : ops.u_fixed)
        f[d] = 0.0;
    return f;
}

/// (f_leg(t), q) for the nodal interpolant of the source; zero at drained dofs.
inline FieldVector source_vector(const SystemOperators& ops, const ProblemData& data, int leg, double t)
{
    const auto& f = leg == 1 ? data.f1 : data.f2;
    FieldVector r(ops.np(), 0.0);
    if (!f)
        return r;
    const auto vals = interpolate(ops.dof_p, [&](double x, double y) { return f(x, y, t); });
    r = spmv(ops.mass_p, vals);
    for (auto d : ops.p_drained)
        r[d] = 0.0;
    return r;
}

/// Nodal interpolant of an initial pressure, zero at drained dofs.
inline FieldVector initial_pressure(const SystemOperators& ops, const std::function<double(double, double)>& s)
{
    FieldVector p(ops.np(), 0.0);
    if (s)
        p = interpolate(ops.dof_p, s);
    for (auto d : ops.p_drained)
        p[d] = 0.0;
    return p;
}

/// Solves  A u0 = F0 - G1 s1 - G2 s2.
inline FieldVector solve_initial_displacement(const SystemOperators& ops, std::span<const double> s1,
                                              std::span<const double> s2, std::span<const double> load = {},
                                              const SolverOptions& opt = {}, SolveReport* report = nullptr)
{
    Vector rhs = apply_G(ops, s1, s2);
    for (double& v : rhs)
        v = -v;
    if (!load.empty())
        axpy(1.0, load, rhs);
    auto [u, rep] = cg_solve(ops.A, rhs, opt);
    if (!rep.converged)
        throw SolverError("initial displacement solve did not converge");
    if (report)
        *report = rep;
    return u;
}

// ---------------------------------------------------------------------------

struct OperatorReport {
    std::vector<std::pair<std::string, double>> symmetry;    ///< relative defects
    double adjointness = 0.0;                                ///< max |G_l + D_l^T|
    std::vector<std::pair<std::string, double>> spd_min_rq;  ///< min Rayleigh quotient over probes
    double a0_minus_a1_min_rq = 0.0;                         ///< blockdiag(B) + gamma [[M,M],[M,M]] probe
    std::size_t probes = 32;
    double tolerance = 1e-12;
    bool passed = false;
};

/// Symmetry, adjointness and positivity probes on a built system.
inline OperatorReport check_operator_identities(const SystemOperators& ops, std::uint64_t seed = 42,
                                                std::size_t probes = 32)
{
    OperatorReport rep;
    rep.probes = probes;
    const std::vector<std::pair<std::string, const CsrMatrix*>> sym{
        {"A", &ops.A}, {"B1", &ops.B1}, {"B2", &ops.B2}, {"C1", &ops.C1},
        {"C2", &ops.C2}, {"M", &ops.M}, {"Exch", &ops.Exch}};
    bool ok = true;
    for (const auto& [name, m] : sym) {
        const double d = symmetry_defect(*m);
        rep.symmetry.emplace_back(name, d);
        ok = ok && d <= rep.tolerance;
    }

    auto adj = [](const CsrMatrix& g, const CsrMatrix& d) {
        const CsrMatrix dt = d.transpose();
        if (dt.rows() != g.rows() || dt.cols() != g.cols())
            return std::numeric_limits<double>::infinity();
        return linear_combination(1.0, g, 1.0, dt).max_abs();
    };
    rep.adjointness = std::max(adj(ops.G1, ops.D1), adj(ops.G2, ops.D2));
    ok = ok && rep.adjointness == 0.0;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    auto min_rq = [&](const CsrMatrix& m) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < probes; ++k) {
            Vector x(m.rows());
            for (double& v : x)
                v = normal(rng);
            best = std::min(best, quadratic_form(m, x) / dot(x, x));
        }
        return best;
    };
    const CsrMatrix bb = block_B(ops);
    const std::vector<std::pair<std::string, const CsrMatrix*>> spd{
        {"A", &ops.A}, {"B1", &ops.B1}, {"B2", &ops.B2}, {"C1", &ops.C1},
        {"C2", &ops.C2}, {"M", &ops.M}, {"B", &bb}};
    for (const auto& [name, m] : spd) {
        const double rq = min_rq(*m);
        rep.spd_min_rq.emplace_back(name, rq);
        ok = ok && rq > 0.0;
    }
    {
        const auto n = ops.np();
        const CsrMatrix d = assemble_blocks(2 * n, 2 * n,
                                            {{0, 0, &ops.B1},
                                             {0, 0, &ops.Exch},
                                             {0, n, &ops.Exch},
                                             {n, 0, &ops.Exch},
                                             {n, n, &ops.B2},
                                             {n, n, &ops.Exch}});
        rep.a0_minus_a1_min_rq = min_rq(d);
        ok = ok && rep.a0_minus_a1_min_rq >= 0.0;
    }
    rep.passed = ok;
    return rep;
}

} // namespace pspl
