#pragma once

// Command-line driver: mesh, check, delta, run, compare.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "pspl/compare.hpp"
#include "pspl/config.hpp"
#include "pspl/io.hpp"
#include "pspl/schemes.hpp"
#include "pspl/spectral.hpp"
#include "pspl/system.hpp"

namespace pspl::cli {

enum ExitCode : int { exit_ok = 0, exit_crash = 1, exit_usage = 2, exit_diverged = 3, exit_checks_failed = 4 };

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Worker threads: hardware concurrency capped by PSPL_THREADS; one in
/// deterministic mode.
inline unsigned resolve_threads(bool deterministic)
{
    if (deterministic)
        return 1;
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("PSPL_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1)
            throw InvalidSpecError("PSPL_THREADS must be a positive integer");
        n = std::min<unsigned>(n, unsigned(v));
    }
    return n;
}

inline json params_json(const MaterialParams& p)
{
    return json{{"mu", p.mu},         {"lambda", p.lambda}, {"alpha1", p.alpha1}, {"alpha2", p.alpha2},
                {"beta1", p.beta1},   {"beta2", p.beta2},   {"k1", p.k1},         {"k2", p.k2},
                {"eta", p.eta},       {"gamma", p.gamma}};
}

/// Flags shared by the commands that build a system. Explicitly given flags
/// override the config file.
struct SetupFlags {
    std::string config;
    std::string mesh_file;
    int res = 20;
    double grade = 1.0;
    double strip = 0.1;
    int set = 1;
    std::string layout = "prose";
    double mu = 0, lambda = 0, beta1 = 0, beta2 = 0, k1 = 0, k2 = 0, alpha1 = 0, alpha2 = 0, eta = 0, gamma = 0;
    std::uint64_t seed = 42;

    CLI::Option *o_mesh = nullptr, *o_res = nullptr, *o_grade = nullptr, *o_strip = nullptr, *o_set = nullptr,
                *o_layout = nullptr, *o_seed = nullptr;
    std::vector<std::pair<CLI::Option*, std::pair<double*, std::optional<double> ParameterOverrides::*>>> params;

    void add(CLI::App* app)
    {
        app->add_option("--config", config, "TOML experiment file")->check(CLI::ExistingFile);
        o_mesh = app->add_option("--mesh", mesh_file, "MSH 2.2 mesh file (instead of generating one)")
                     ->check(CLI::ExistingFile);
        o_res = app->add_option("--res", res, "cells per side of the generated mesh")->check(CLI::Range(2, 100000));
        o_grade = app->add_option("--grade", grade, "refinement factor towards the loaded strip")
                      ->check(CLI::Range(1.0, 1e6));
        o_strip = app->add_option("--strip-half-width", strip, "half width of the loaded strip")
                      ->check(CLI::Range(1e-6, 0.5));
        o_set = app->add_option("--set", set, "parameter set 1, 2 or 3")->check(CLI::Range(1, 3));
        o_layout = app->add_option("--bc-layout", layout, "boundary-condition layout")
                       ->check(CLI::IsMember({"prose", "literal"}));
        o_seed = app->add_option("--seed", seed, "seed for random start vectors and probes");
        auto param = [&](const char* name, double& v, std::optional<double> ParameterOverrides::* member,
                         const char* help) {
            params.push_back({app->add_option(name, v, help), {&v, member}});
        };
        param("--mu", mu, &ParameterOverrides::mu, "shear modulus, MPa");
        param("--lambda", lambda, &ParameterOverrides::lambda, "Lame parameter, MPa");
        param("--beta1", beta1, &ParameterOverrides::beta1, "storage coefficient 1, 1/GPa");
        param("--beta2", beta2, &ParameterOverrides::beta2, "storage coefficient 2, 1/GPa");
        param("--k1", k1, &ParameterOverrides::k1, "permeability 1, 1e-15 m^2");
        param("--k2", k2, &ParameterOverrides::k2, "permeability 2, 1e-15 m^2");
        param("--alpha1", alpha1, &ParameterOverrides::alpha1, "Biot coefficient 1");
        param("--alpha2", alpha2, &ParameterOverrides::alpha2, "Biot coefficient 2");
        param("--eta", eta, &ParameterOverrides::eta, "fluid viscosity, Pa s");
        param("--gamma", gamma, &ParameterOverrides::gamma, "exchange coefficient, 1e-10 kg/(m s)");
    }

    ExperimentConfig resolve() const
    {
        ExperimentConfig cfg;
        if (!config.empty())
            cfg = load_config(config);
        if (o_mesh->count())
            cfg.mesh.file = mesh_file;
        if (o_res->count()) {
            cfg.mesh.spec.resolution = res;
            if (!o_mesh->count())
                cfg.mesh.file.reset();
        }
        if (o_grade->count())
            cfg.mesh.spec.grading = grade;
        if (o_strip->count())
            cfg.mesh.spec.strip_half_width = strip;
        if (o_set->count())
            cfg.parameter_set = set;
        if (o_layout->count())
            cfg.bc_layout = layout;
        if (o_seed->count())
            cfg.seed = seed;
        for (const auto& [opt, target] : params)
            if (opt->count())
                cfg.overrides.*(target.second) = *target.first;
        return cfg;
    }
};

struct Setup {
    Mesh mesh;
    SystemOperators ops;
    double seconds_mesh = 0.0;
    double seconds_assembly = 0.0;
};

inline Setup build(const ExperimentConfig& cfg)
{
    Setup s;
    auto t0 = std::chrono::steady_clock::now();
    s.mesh = cfg.mesh.load();
    validate(s.mesh, cfg.mesh.file ? std::nullopt : std::optional<double>(cfg.mesh.spec.strip_half_width));
    s.seconds_mesh = seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    s.ops = build_system(s.mesh, cfg.params(), BcLayout::from_name(cfg.bc_layout));
    s.seconds_assembly = seconds_since(t0);
    return s;
}

inline json setup_json(const ExperimentConfig& cfg, const Setup& s)
{
    return json{{"mesh_hash", mesh_hash(s.mesh)},
                {"mesh_source", cfg.mesh.file ? *cfg.mesh.file : std::string("generated")},
                {"vertices", s.mesh.num_vertices()},
                {"cells", s.mesh.num_cells()},
                {"dofs", {{"u", s.ops.nu()}, {"p", s.ops.np()}, {"total", s.ops.nu() + 2 * s.ops.np()}}},
                {"parameter_set", cfg.parameter_label()},
                {"params", params_json(s.ops.params)},
                {"bc_layout", cfg.bc_layout}};
}

inline void emit_json(const json& j, const std::string& out)
{
    const std::string text = j.dump(2) + "\n";
    if (!out.empty())
        io::write_atomic(out, text);
    std::cout << text;
}

// ---------------------------------------------------------------------------

inline int cmd_mesh(int res, double grade, double strip, const std::string& out)
{
    const Mesh m = generate_unit_square(MeshSpec{res, grade, strip});
    validate(m, strip);
    std::ostringstream os;
    write_msh2(m, os);
    io::write_atomic(out, os.str());
    std::cout << "wrote " << out << ": " << m.num_vertices() << " vertices, " << m.num_cells() << " cells, hash "
              << mesh_hash(m) << "\n";
    return exit_ok;
}

inline int cmd_check(const ExperimentConfig& cfg, const std::string& out)
{
    const Setup s = build(cfg);
    const OperatorReport rep = check_operator_identities(s.ops, cfg.seed);
    json j = setup_json(cfg, s);
    json sym = json::object(), spd = json::object();
    for (const auto& [k, v] : rep.symmetry)
        sym[k] = v;
    for (const auto& [k, v] : rep.spd_min_rq)
        spd[k] = v;
    j["symmetry_defect"] = sym;
    j["symmetry_tolerance"] = rep.tolerance;
    j["adjointness_defect"] = rep.adjointness;
    j["spd_min_rayleigh_quotient"] = spd;
    j["a0_minus_a1_min_rayleigh_quotient"] = rep.a0_minus_a1_min_rq;
    j["probes"] = rep.probes;
    j["seed"] = cfg.seed;
    j["passed"] = rep.passed;
    emit_json(j, out);
    return rep.passed ? exit_ok : exit_checks_failed;
}

inline int cmd_delta(const ExperimentConfig& cfg, const std::string& method, double tol, std::size_t max_iter,
                     const std::string& out)
{
    const Setup s = build(cfg);
    PowerOptions po;
    po.tol = tol;
    po.max_iter = max_iter;
    po.seed = cfg.seed;
    auto t0 = std::chrono::steady_clock::now();
    SpectralResult r;
    if (method == "dense")
        r = dense_delta(s.ops);
    else if (method == "power")
        r = estimate_delta_power(s.ops, po);
    else
        r = estimate_delta_lanczos(s.ops, po);
    const double secs = seconds_since(t0);
    json j = setup_json(cfg, s);
    j["method"] = r.method;
    j["delta"] = r.delta;
    j["theta_min"] = r.theta_min;
    j["iterations"] = r.iterations;
    j["residual"] = r.residual;
    j["tol"] = tol;
    j["seed"] = cfg.seed;
    j["seconds"] = secs;
    if (!out.empty())
        io::write_atomic(out, j.dump(2) + "\n");
    std::printf("delta = %.6f\ntheta_min = %.6f\niterations = %zu\nmethod = %s\n", r.delta, r.theta_min,
                r.iterations, r.method.c_str());
    return exit_ok;
}

inline int cmd_run(const ExperimentConfig& cfg, bool deterministic, unsigned threads)
{
    auto t_total = std::chrono::steady_clock::now();
    const Setup s = build(cfg);
    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir);
    {
        std::ostringstream os;
        write_msh2(s.mesh, os);
        io::write_atomic(dir / "mesh.msh", os.str());
    }
    io::RunDirectory sink(dir, s.mesh);
    RunSink* sinks[] = {&sink};
    const ProblemData data = cfg.problem();
    RunSummary sum;
    std::string crash;
    try {
        sum = run(s.ops, data, cfg.scheme, sinks);
    } catch (const SolverError& e) {
        // a solver breakdown in an unstable run is reported as divergence
        sum.status = "diverged";
        sum.reason = e.what();
    }
    sink.write_energies();

    json j;
    j["scheme"] = to_string(cfg.scheme.kind);
    j["theta"] = cfg.scheme.theta;
    j["tau"] = cfg.scheme.tau;
    j["t_end"] = cfg.scheme.t_end;
    j["steps_planned"] = cfg.scheme.num_steps();
    j["steps"] = sum.steps;
    j["status"] = sum.status;
    j["reason"] = sum.reason;
    const json setup = setup_json(cfg, s);
    for (const auto& [k, v] : setup.items())
        j[k] = v;
    j["load_amplitude"] = cfg.load_amplitude;
    j["solver"] = {{"tol", cfg.scheme.tol},
                   {"solves", sum.stats.solves},
                   {"iterations", sum.stats.iterations},
                   {"cg_iterations", sum.stats.cg_iterations},
                   {"minres_iterations", sum.stats.minres_iterations}};
    j["timings"] = {{"mesh", s.seconds_mesh},
                    {"assembly", s.seconds_assembly},
                    {"init", sum.seconds_init},
                    {"stepping", sum.seconds_stepping},
                    {"energy", sum.seconds_energy},
                    {"per_step", sum.seconds_per_step()},
                    {"total", seconds_since(t_total)}};
    j["energy"] = {{"final_two_level", sum.final_energy},
                   {"max_two_level", sum.max_energy},
                   {"divergence_scale", sum.divergence_scale},
                   {"monotone", sum.energy_monotone}};
    if (sum.final_three_level_energy)
        j["energy"]["final_three_level"] = *sum.final_three_level_energy;
    j["snapshot_every"] = cfg.scheme.snapshot_every;
    j["snapshots"] = sink.snapshot_list();
    j["deterministic"] = deterministic;
    j["threads"] = threads;
    j["seed"] = cfg.seed;
    io::write_atomic(dir / "summary.json", j.dump(2) + "\n");

    std::printf("%s: %s after %zu steps (%.2f s/step), energy %.6e\n", to_string(cfg.scheme.kind).c_str(),
                sum.status.c_str(), sum.steps, sum.seconds_per_step(), sum.final_energy);
    if (sum.diverged()) {
        std::fprintf(stderr, "diverged: %s\n", sum.reason.c_str());
        return exit_diverged;
    }
    return exit_ok;
}

inline int cmd_compare(const std::string& run_dir, const std::string& etalon_dir, bool interpolate,
                       const std::string& out)
{
    CompareOptions opt;
    opt.interpolate = interpolate;
    const ErrorSeries e = compare_trajectories(run_dir, etalon_dir, opt);
    const std::string csv = io::errors_csv(e);
    if (!out.empty())
        io::write_atomic(out, csv);
    else
        std::cout << csv;
    return exit_ok;
}

} // namespace detail

/// Entry point of the `pspl` executable; returns the process exit code.
inline int run_cli(int argc, char** argv)
{
    CLI::App app{"Double-porosity poroelasticity: coupled and splitting time integrators"};
    app.require_subcommand(1);
    bool deterministic = false;
    app.add_flag("--deterministic", deterministic, "force the sequential reference paths");

    // mesh
    auto* c_mesh = app.add_subcommand("mesh", "generate a graded mesh of the unit square");
    int m_res = 20;
    double m_grade = 1.0, m_strip = 0.1;
    std::string m_out;
    c_mesh->add_option("--res", m_res, "cells per side")->check(CLI::Range(2, 100000));
    c_mesh->add_option("--grade", m_grade, "refinement factor towards the loaded strip")->check(CLI::Range(1.0, 1e6));
    c_mesh->add_option("--strip-half-width", m_strip, "half width of the loaded strip")->check(CLI::Range(1e-6, 0.5));
    c_mesh->add_option("--out", m_out, "output MSH 2.2 file")->required();

    // check
    auto* c_check = app.add_subcommand("check", "operator identity checks");
    detail::SetupFlags f_check;
    f_check.add(c_check);
    std::string check_out;
    c_check->add_option("--out", check_out, "JSON report file");

    // delta
    auto* c_delta = app.add_subcommand("delta", "stability parameter delta and theta_min");
    detail::SetupFlags f_delta;
    f_delta.add(c_delta);
    std::string delta_method = "lanczos", delta_out;
    double delta_tol = 1e-8;
    std::size_t delta_iter = 2000;
    c_delta->add_option("--method", delta_method, "lanczos, power or dense")
        ->check(CLI::IsMember({"lanczos", "power", "dense"}));
    c_delta->add_option("--tol", delta_tol, "relative tolerance of the estimate")->check(CLI::PositiveNumber);
    c_delta->add_option("--max-iter", delta_iter, "iteration limit")->check(CLI::PositiveNumber);
    c_delta->add_option("--out", delta_out, "JSON result file");

    // run
    auto* c_run = app.add_subcommand("run", "integrate in time and write a run directory");
    detail::SetupFlags f_run;
    f_run.add(c_run);
    std::string r_scheme, r_out;
    double r_theta = 1, r_tau = 0.005, r_tend = 1, r_tol = 1e-10, r_amp = 1;
    std::size_t r_every = 10;
    bool r_no_energy = false;
    auto* o_scheme =
        c_run->add_option("--scheme", r_scheme, "coupled, incomplete or full")
            ->check(CLI::IsMember({"coupled", "incomplete", "full"}));
    auto* o_theta = c_run->add_option("--theta", r_theta, "weight theta");
    auto* o_tau = c_run->add_option("--tau", r_tau, "time step, s");
    auto* o_tend = c_run->add_option("--t-end", r_tend, "final time, s");
    auto* o_tol = c_run->add_option("--tol", r_tol, "relative Krylov tolerance");
    auto* o_every = c_run->add_option("--snapshot-every", r_every, "snapshot cadence in steps")
                        ->check(CLI::PositiveNumber);
    auto* o_amp = c_run->add_option("--load-amplitude", r_amp, "traction amplitude");
    auto* o_out = c_run->add_option("--out", r_out, "output directory");
    c_run->add_flag("--no-energy-monitor", r_no_energy, "skip the three-level energy");

    // compare
    auto* c_cmp = app.add_subcommand("compare", "L2 errors of a run against an etalon run");
    std::string cmp_run, cmp_etalon, cmp_out;
    bool cmp_interp = false;
    c_cmp->add_option("run", cmp_run, "run directory")->required();
    c_cmp->add_option("etalon", cmp_etalon, "etalon run directory")->required();
    c_cmp->add_option("--out", cmp_out, "CSV output file (default: stdout)");
    c_cmp->add_flag("--interpolate", cmp_interp, "allow different meshes (experimental)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_usage;
    }

    try {
        const unsigned threads = detail::resolve_threads(deterministic);
        set_thread_count(threads);

        if (*c_mesh)
            return detail::cmd_mesh(m_res, m_grade, m_strip, m_out);
        if (*c_check) {
            auto cfg = f_check.resolve();
            cfg.validate();
            return detail::cmd_check(cfg, check_out);
        }
        if (*c_delta) {
            auto cfg = f_delta.resolve();
            cfg.validate();
            return detail::cmd_delta(cfg, delta_method, delta_tol, delta_iter, delta_out);
        }
        if (*c_run) {
            auto cfg = f_run.resolve();
            if (o_scheme->count())
                cfg.scheme.kind = parse_scheme(r_scheme);
            if (o_theta->count())
                cfg.scheme.theta = r_theta;
            if (o_tau->count())
                cfg.scheme.tau = r_tau;
            if (o_tend->count())
                cfg.scheme.t_end = r_tend;
            if (o_tol->count())
                cfg.scheme.tol = r_tol;
            if (o_every->count())
                cfg.scheme.snapshot_every = r_every;
            if (o_amp->count())
                cfg.load_amplitude = r_amp;
            if (o_out->count())
                cfg.output_dir = r_out;
            if (r_no_energy)
                cfg.scheme.energy_monitor = false;
            cfg.validate();
            return detail::cmd_run(cfg, deterministic, threads);
        }
        if (*c_cmp)
            return detail::cmd_compare(cmp_run, cmp_etalon, cmp_interp, cmp_out);
    } catch (const InvalidSpecError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_usage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_crash;
    }
    return exit_usage;
}

} // namespace pspl::cli
