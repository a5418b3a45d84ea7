#pragma once

// Error curves of a stored trajectory against a stored reference one.

#include <cmath>
#include <filesystem>
#include <optional>

#include "pspl/diagnostics.hpp"
#include "pspl/fem.hpp"
#include "pspl/io.hpp"

namespace pspl {

struct CompareOptions {
    /// Allow different meshes: run fields are interpolated onto the
    /// reference mesh before the errors are taken. Experimental.
    bool interpolate = false;
    double time_tol = 1e-9;
};

/// Unconstrained mass matrices of one mesh, for L2 norms.
struct NormSpace {
    DofMap dof_u, dof_p;
    CsrMatrix mass_u, mass_p;

    explicit NormSpace(const Mesh& mesh)
        : dof_u(build_dofmap(mesh, SpaceKind::p2_vector)), dof_p(build_dofmap(mesh, SpaceKind::p1_scalar)),
          mass_u(assemble_scaled_mass(mesh, dof_u, 1.0)), mass_p(assemble_scaled_mass(mesh, dof_p, 1.0))
    {
    }
};

/// L2 errors of one level against the reference level on the same space.
inline void append_errors(ErrorSeries& out, const NormSpace& space, double t, const io::Coefficients& a,
                          const io::Coefficients& ref)
{
    out.t.push_back(t);
    out.eps_u.push_back(field_error(a.u, ref.u, space.mass_u));
    out.eps_p1.push_back(field_error(a.p1, ref.p1, space.mass_p));
    out.eps_p2.push_back(field_error(a.p2, ref.p2, space.mass_p));
}

/// Errors of `run_dir` against `etalon_dir` at every snapshot time of the
/// run. The reference must hold a snapshot at each of those times and its
/// time step must divide the run's.
inline ErrorSeries compare_trajectories(const std::filesystem::path& run_dir, const std::filesystem::path& etalon_dir,
                                        const CompareOptions& opt = {})
{
    const io::RunRecord run = io::read_run(run_dir);
    const io::RunRecord ref = io::read_run(etalon_dir);

    const bool same_mesh = mesh_hash(run.mesh) == mesh_hash(ref.mesh);
    if (!same_mesh && !opt.interpolate)
        throw IncompatibleError("mesh mismatch: " + run_dir.string() + " and " + etalon_dir.string() +
                                " were computed on different meshes");

    const double ratio = run.tau / ref.tau;
    const double k = std::round(ratio);
    if (!(k >= 1.0) || std::abs(ratio - k) > 1e-9 * ratio)
        throw IncompatibleError("time grids incompatible: reference step " + io::format_double(ref.tau) +
                                " does not divide " + io::format_double(run.tau));

    const NormSpace space(ref.mesh);
    std::optional<NormSpace> run_space;
    if (!same_mesh)
        run_space.emplace(run.mesh);

    ErrorSeries out;
    for (const auto& e : run.snapshots) {
        const io::SnapshotEntry* match = nullptr;
        for (const auto& r : ref.snapshots)
            if (std::abs(r.t - e.t) <= opt.time_tol * std::max(1.0, std::abs(e.t))) {
                match = &r;
                break;
            }
        if (!match)
            throw IncompatibleError("reference has no snapshot at t = " + io::format_double(e.t));
        const auto b = io::load_snapshot(ref, *match, space.dof_u.num_dofs, space.dof_p.num_dofs);
        io::Coefficients a;
        if (same_mesh) {
            a = io::load_snapshot(run, e, space.dof_u.num_dofs, space.dof_p.num_dofs);
        } else {
            const auto raw = io::load_snapshot(run, e, run_space->dof_u.num_dofs, run_space->dof_p.num_dofs);
            a.u = transfer_field(run.mesh, run_space->dof_u, raw.u, space.dof_u);
            a.p1 = transfer_field(run.mesh, run_space->dof_p, raw.p1, space.dof_p);
            a.p2 = transfer_field(run.mesh, run_space->dof_p, raw.p2, space.dof_p);
        }
        append_errors(out, space, e.t, a, b);
    }
    return out;
}

} // namespace pspl
