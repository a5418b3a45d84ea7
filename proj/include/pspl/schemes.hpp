#pragma once

// Time integrators: the monolithic two-level theta-scheme and the two
// three-level splitting schemes (mechanics split off; mechanics and both
// pressure legs split off), plus the driver loop.

#include <chrono>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pspl/diagnostics.hpp"
#include "pspl/linalg.hpp"
#include "pspl/state.hpp"
#include "pspl/system.hpp"

namespace pspl {

struct SolveStats {
    std::size_t solves = 0;
    std::size_t iterations = 0;
    std::size_t minres_iterations = 0;
    std::size_t cg_iterations = 0;

    void add_cg(const SolveReport& r)
    {
        ++solves;
        iterations += r.iterations;
        cg_iterations += r.iterations;
    }
    void add_minres(const SolveReport& r)
    {
        ++solves;
        iterations += r.iterations;
        minres_iterations += r.iterations;
    }
};

/// Initial state: interpolated pressures and the consistent displacement.
inline State init_state(const SystemOperators& ops, const ProblemData& data, const SolverOptions& opt = {})
{
    State s;
    s.p1 = initial_pressure(ops, data.s1);
    s.p2 = initial_pressure(ops, data.s2);
    s.u = solve_initial_displacement(ops, s.p1, s.p2, load_vector(ops, data, 0.0), opt);
    return s;
}

/// Initial state from given pressure coefficient vectors.
inline State init_state(const SystemOperators& ops, const ProblemData& data, FieldVector p1, FieldVector p2,
                        const SolverOptions& opt = {})
{
    if (p1.size() != ops.np() || p2.size() != ops.np())
        throw DimensionError("init_state: pressure size mismatch");
    State s;
    s.p1 = std::move(p1);
    s.p2 = std::move(p2);
    for (auto d : ops.p_drained)
        s.p1[d] = s.p2[d] = 0.0;
    s.u = solve_initial_displacement(ops, s.p1, s.p2, load_vector(ops, data, 0.0), opt);
    return s;
}

namespace detail {
/// Last few solution increments; extrapolates the next one as a Krylov
/// starting guess.
class IncrementHistory {
public:
    Vector guess(std::size_t n) const
    {
        Vector g(n, 0.0);
        if (h_.empty() || h_.front().size() != n)
            return g;
        static constexpr double w1[] = {1.0}, w2[] = {2.0, -1.0}, w3[] = {3.0, -3.0, 1.0};
        const double* w = h_.size() == 1 ? w1 : h_.size() == 2 ? w2 : w3;
        for (std::size_t k = 0; k < h_.size(); ++k)
            axpy(w[k], h_[k], g);
        return g;
    }

    void push(const Vector& d)
    {
        if (!h_.empty() && h_.front().size() != d.size())
            h_.clear();
        h_.insert(h_.begin(), d);
        if (h_.size() > 3)
            h_.pop_back();
    }

private:
    std::vector<Vector> h_; ///< newest first
};
} // namespace detail

/// Advances states of one configuration, caching the level matrices (they
/// depend only on theta and tau) and the recent increments, which seed the
/// Krylov solves of the next step.
///
/// All solves are written in increment form, x^{n+1} = x^n + dx, so that
/// solver tolerances act relative to the change per step.
class Stepper {
public:
    Stepper(const SystemOperators& ops, const ProblemData& data, SchemeConfig cfg)
        : ops_(&ops), data_(&data), cfg_(cfg)
    {
        cfg_.validate();
    }

    const SchemeConfig& config() const { return cfg_; }
    const SolveStats& stats() const { return stats_; }

    /// One step of the configured scheme; splitting schemes bootstrap at n = 0.
    State advance(const State& s)
    {
        switch (cfg_.kind) {
        case SchemeKind::coupled:
            return coupled(s, cfg_.theta);
        case SchemeKind::incomplete:
            return s.n == 0 || !s.p1_prev ? bootstrap(s) : split(s, false);
        case SchemeKind::full:
            return s.n == 0 || !s.p1_prev ? bootstrap(s) : split(s, true);
        }
        throw InvalidSpecError("unknown scheme");
    }

    /// Two-level weighted scheme
    ///   A u^{n+1} + G p^{n+1} = F^{n+1}
    ///   C (p^{n+1} - p^n)/tau + D (u^{n+1} - u^n)/tau + B p_theta^{n+1} = f(t^n + theta tau)
    /// solved monolithically in the symmetric arrangement
    ///   [ A     G1                       G2                     ]
    ///   [ G1^T  -(C1 + th tau (B1 + E))  th tau E               ]
    ///   [ G2^T  th tau E                 -(C2 + th tau (B2 + E)) ]
    /// (pressure rows multiplied by -tau).
    State coupled(const State& s, double theta)
    {
        const auto& ops = *ops_;
        const std::size_t nu = ops.nu(), np = ops.np();
        const CsrMatrix& k = coupled_matrix(theta);
        const double tau = cfg_.tau;
        const double t_new = s.t + tau;

        // residual of the level-n fields in the level-(n+1) system
        Vector r(nu + 2 * np, 0.0);
        {
            const Vector f = load_vector(ops, *data_, t_new);
            const Vector au = spmv(ops.A, s.u);
            const Vector gp = apply_G(ops, s.p1, s.p2);
            for (std::size_t i = 0; i < nu; ++i)
                r[i] = f[i] - au[i] - gp[i];
            const Vector bp = spmv(block_B(ops), concat({s.p1, s.p2}));
            const double tf = s.t + theta * tau;
            const Vector f1 = source_vector(ops, *data_, 1, tf);
            const Vector f2 = source_vector(ops, *data_, 2, tf);
            for (std::size_t i = 0; i < np; ++i) {
                r[nu + i] = tau * (bp[i] - f1[i]);
                r[nu + np + i] = tau * (bp[np + i] - f2[i]);
            }
        }
        auto& hist = coupled_increment_[theta];
        Vector dx = hist.guess(r.size());
        const auto rep = minres_solve(k, r, dx, cfg_.solver());
        stats_.add_minres(rep);
        if (!rep.converged)
            throw SolverError("coupled step: MINRES did not converge (residual " +
                              std::to_string(rep.relative_residual) + ")");
        hist.push(dx);

        State out;
        out.n = s.n + 1;
        out.t = t_new;
        out.u = add(s.u, std::span<const double>(dx).first(nu));
        out.p1 = add(s.p1, std::span<const double>(dx).subspan(nu, np));
        out.p2 = add(s.p2, std::span<const double>(dx).subspan(nu + np, np));
        return out;
    }

    /// First level of a three-level scheme: the fully implicit two-level step.
    State bootstrap(const State& s)
    {
        State out = coupled(s, 1.0);
        out.p1_prev = s.p1;
        out.p2_prev = s.p2;
        out.u_lagged = false;
        return out;
    }

    /// Three-level explicit-implicit splitting step
    ///   A u^{n+1} + G p^n = F^{n+1}
    ///   C (theta (p^{n+1} - p^n) + (1 - theta)(p^n - p^{n-1}))/tau + D (u^{n+1} - u^n)/tau
    ///     + B_impl p^{n+1} + B_expl p^n = f^{n+1}
    /// with B_impl = B (incomplete) or blockdiag(B1 + E, B2 + E) and B_expl =
    /// B - B_impl (full). Here u^n is the displacement driven by p^{n-1};
    /// after a bootstrap step it is recovered with one extra solve.
    State split(const State& s, bool full)
    {
        if (!s.p1_prev || !s.p2_prev)
            throw InvalidSpecError("splitting step needs previous pressures");
        const auto& ops = *ops_;
        const std::size_t np = ops.np();
        const double tau = cfg_.tau, theta = cfg_.theta;
        const double t_new = s.t + tau;
        const auto opt = cfg_.solver();

        // displacement increment driven by the lagged pressures
        const Vector f_new = load_vector(ops, *data_, t_new);
        const Vector f_old = load_vector(ops, *data_, s.t);
        const Vector dp_old = concat({add(s.p1, *s.p1_prev, -1.0), add(s.p2, *s.p2_prev, -1.0)});
        Vector rhs_u = add(f_new, f_old, -1.0);
        axpy(-1.0, apply_G(ops, first_half(dp_old), second_half(dp_old)), rhs_u);
        Vector du = u_increment_.guess(ops.nu());
        auto rep = cg_solve(ops.A, rhs_u, du, opt);
        stats_.add_cg(rep);
        if (!rep.converged)
            throw SolverError("splitting step: elasticity solve did not converge");
        u_increment_.push(du);

        Vector u_new;
        if (s.u_lagged) {
            u_new = add(s.u, du);
        } else {
            Vector rhs = f_new;
            axpy(-1.0, apply_G(ops, s.p1, s.p2), rhs);
            u_new = add(s.u, du);
            auto r2 = cg_solve(ops.A, rhs, u_new, opt);
            stats_.add_cg(r2);
            if (!r2.converged)
                throw SolverError("splitting step: elasticity solve did not converge");
        }

        // pressure increment
        const Vector c_dp = spmv(block_C(ops), dp_old);
        const Vector d_du = spmv(block_D(), du);
        const Vector bp = spmv(block_B(ops), concat({s.p1, s.p2}));
        const Vector f1 = source_vector(ops, *data_, 1, t_new);
        const Vector f2 = source_vector(ops, *data_, 2, t_new);
        Vector r(2 * np);
        for (std::size_t i = 0; i < 2 * np; ++i) {
            const double f = i < np ? f1[i] : f2[i - np];
            r[i] = -(1.0 - theta) * c_dp[i] - d_du[i] - tau * (bp[i] - f);
        }
        Vector dp = p_increment_.guess(2 * np);
        if (!full) {
            auto rp = cg_solve(incomplete_matrix(), r, dp, opt);
            stats_.add_cg(rp);
            if (!rp.converged)
                throw SolverError("incomplete splitting: pressure solve did not converge");
        } else {
            // the legs are independent given level-n data
            for (int leg = 0; leg < 2; ++leg) {
                std::span<double> x(dp.data() + leg * np, np);
                std::span<const double> b(r.data() + leg * np, np);
                auto rp = cg_solve(full_matrix(leg + 1), b, x, opt);
                stats_.add_cg(rp);
                if (!rp.converged)
                    throw SolverError("full splitting: pressure solve did not converge");
            }
        }
        p_increment_.push(dp);

        State out;
        out.n = s.n + 1;
        out.t = t_new;
        out.u = std::move(u_new);
        out.p1 = add(s.p1, std::span<const double>(dp).first(np));
        out.p2 = add(s.p2, std::span<const double>(dp).subspan(np));
        out.p1_prev = s.p1;
        out.p2_prev = s.p2;
        out.u_lagged = true;
        return out;
    }

private:
    const CsrMatrix& coupled_matrix(double theta)
    {
        auto it = coupled_.find(theta);
        if (it != coupled_.end())
            return it->second;
        const auto& ops = *ops_;
        const std::size_t nu = ops.nu(), np = ops.np();
        const double tt = theta * cfg_.tau;
        const std::size_t n = nu + 2 * np;
        CsrMatrix k = assemble_blocks(n, n,
                                      {{0, 0, &ops.A},
                                       {0, nu, &ops.G1},
                                       {0, nu + np, &ops.G2},
                                       {nu, 0, &ops.D1, -1.0},
                                       {nu + np, 0, &ops.D2, -1.0},
                                       {nu, nu, &ops.C1, -1.0},
                                       {nu, nu, &ops.B1, -tt},
                                       {nu, nu, &ops.Exch, -tt},
                                       {nu, nu + np, &ops.Exch, tt},
                                       {nu + np, nu, &ops.Exch, tt},
                                       {nu + np, nu + np, &ops.C2, -1.0},
                                       {nu + np, nu + np, &ops.B2, -tt},
                                       {nu + np, nu + np, &ops.Exch, -tt}});
        return coupled_.emplace(theta, std::move(k)).first->second;
    }

    const CsrMatrix& block_D()
    {
        if (!block_d_)
            block_d_ = pspl::block_D(*ops_);
        return *block_d_;
    }

    /// theta C + tau B
    const CsrMatrix& incomplete_matrix()
    {
        if (!incomplete_)
            incomplete_ = linear_combination(cfg_.theta, block_C(*ops_), cfg_.tau, block_B(*ops_));
        return *incomplete_;
    }

    /// theta C_l + tau (B_l + E)
    const CsrMatrix& full_matrix(int leg)
    {
        auto& slot = leg == 1 ? full1_ : full2_;
        if (!slot) {
            const auto& ops = *ops_;
            const std::size_t np = ops.np();
            slot = assemble_blocks(np, np,
                                   {{0, 0, leg == 1 ? &ops.C1 : &ops.C2, cfg_.theta},
                                    {0, 0, leg == 1 ? &ops.B1 : &ops.B2, cfg_.tau},
                                    {0, 0, &ops.Exch, cfg_.tau}});
        }
        return *slot;
    }

    const SystemOperators* ops_;
    const ProblemData* data_;
    SchemeConfig cfg_;
    SolveStats stats_;
    std::map<double, CsrMatrix> coupled_;
    std::map<double, detail::IncrementHistory> coupled_increment_;
    std::optional<CsrMatrix> block_d_;
    std::optional<CsrMatrix> incomplete_;
    std::optional<CsrMatrix> full1_;
    std::optional<CsrMatrix> full2_;
    detail::IncrementHistory u_increment_;
    detail::IncrementHistory p_increment_;
};

// Single-step entry points. Each builds a fresh Stepper, so no increments
// are carried between calls.

inline State step_coupled(const SystemOperators& ops, const ProblemData& data, const SchemeConfig& cfg,
                          const State& s)
{
    Stepper st(ops, data, cfg);
    return st.coupled(s, cfg.theta);
}

inline State bootstrap_first_step(const SystemOperators& ops, const ProblemData& data, const SchemeConfig& cfg,
                                  const State& s)
{
    Stepper st(ops, data, cfg);
    return st.bootstrap(s);
}

inline State step_incomplete(const SystemOperators& ops, const ProblemData& data, const SchemeConfig& cfg,
                             const State& s)
{
    Stepper st(ops, data, cfg);
    return s.p1_prev ? st.split(s, false) : st.bootstrap(s);
}

inline State step_full(const SystemOperators& ops, const ProblemData& data, const SchemeConfig& cfg, const State& s)
{
    Stepper st(ops, data, cfg);
    return s.p1_prev ? st.split(s, true) : st.bootstrap(s);
}

// ---------------------------------------------------------------------------

/// Receives energies and snapshots from `run`.
class RunSink {
public:
    virtual ~RunSink() = default;
    virtual void on_energy(const EnergyRecord&) {}
    virtual void on_snapshot(const State&) {}
};

struct RunSummary {
    std::string status = "completed"; ///< completed | diverged
    std::string reason;
    std::size_t steps = 0;
    State final_state;
    double final_energy = 0.0;
    std::optional<double> final_three_level_energy;
    double divergence_scale = 0.0;
    double max_energy = 0.0;
    bool energy_monotone = true;
    SolveStats stats;
    double seconds_init = 0.0;
    double seconds_stepping = 0.0;
    double seconds_energy = 0.0;

    bool diverged() const { return status == "diverged"; }
    double seconds_per_step() const { return steps ? seconds_stepping / double(steps) : 0.0; }
};

namespace detail {
/// Energy scale of the problem data: initial energy plus the quasi-static
/// elastic energy of the largest load on the time grid.
inline double forcing_scale(const SystemOperators& ops, const ProblemData& data, const SchemeConfig& cfg, double e0)
{
    if (!data.traction)
        return e0;
    double best = -1.0, t_best = 0.0;
    for (std::size_t n = 0; n <= cfg.num_steps(); ++n) {
        const double t = double(n) * cfg.tau;
        const double v = norm2(load_vector(ops, data, t));
        if (v > best) {
            best = v;
            t_best = t;
        }
    }
    if (best <= 0.0)
        return e0;
    const Vector f = load_vector(ops, data, t_best);
    auto [z, rep] = cg_solve(ops.A, f, cfg.solver());
    return e0 + dot(z, f);
}

inline double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}
} // namespace detail

/// Drives the configured scheme from t = 0 to t_end (ceil(t_end / tau)
/// steps), reporting energies every level and snapshots at the configured
/// cadence (level 0, every `snapshot_every` levels, and the final level).
/// A non-finite field or an energy above `divergence_factor` times the
/// forcing scale stops the run and marks it diverged.
inline RunSummary run(const SystemOperators& ops, const ProblemData& data, const SchemeConfig& cfg,
                      std::span<RunSink* const> sinks = {}, std::optional<State> initial = std::nullopt)
{
    using clock = std::chrono::steady_clock;
    cfg.validate();
    RunSummary sum;
    auto t0 = clock::now();
    State s = initial ? std::move(*initial) : init_state(ops, data, cfg.solver());
    const double e0 = energy_two_level(ops, s);
    sum.divergence_scale = detail::forcing_scale(ops, data, cfg, e0);
    sum.seconds_init = detail::seconds_since(t0);

    Stepper stepper(ops, data, cfg);
    const std::size_t steps = cfg.num_steps();
    const std::size_t every = std::max<std::size_t>(1, cfg.snapshot_every);

    EnergyRecord rec{s.n, s.t, e0, std::nullopt, true};
    sum.max_energy = e0;
    for (auto* k : sinks) {
        k->on_energy(rec);
        k->on_snapshot(s);
    }
    std::optional<double> prev_monitored = e0;

    for (std::size_t i = 0; i < steps; ++i) {
        auto ts = clock::now();
        s = stepper.advance(s);
        sum.seconds_stepping += detail::seconds_since(ts);
        sum.steps = i + 1;

        if (!s.finite()) {
            sum.status = "diverged";
            sum.reason = "non-finite field at level " + std::to_string(s.n);
            break;
        }
        auto te = clock::now();
        EnergyRecord r;
        r.n = s.n;
        r.t = s.t;
        r.two_level_energy = energy_two_level(ops, s);
        if (cfg.energy_monitor && cfg.kind != SchemeKind::coupled && s.p1_prev)
            r.three_level_energy = energy_three_level(ops, s, cfg.tau, cfg.theta, cfg.kind, cfg.solver()).total;
        sum.seconds_energy += detail::seconds_since(te);

        const double monitored = r.three_level_energy.value_or(r.two_level_energy);
        // the first three-level value has no predecessor of the same kind
        if (prev_monitored && (cfg.kind == SchemeKind::coupled || s.n >= 3)) {
            r.monotone = monitored <= *prev_monitored + 1e-8 * std::abs(*prev_monitored);
            sum.energy_monotone = sum.energy_monotone && r.monotone;
        }
        prev_monitored = monitored;
        sum.max_energy = std::max(sum.max_energy, r.two_level_energy);
        if (sum.divergence_scale <= 0.0 && r.two_level_energy > 0.0)
            sum.divergence_scale = r.two_level_energy;
        for (auto* k : sinks)
            k->on_energy(r);

        const bool last = i + 1 == steps;
        const bool blown = r.two_level_energy > cfg.divergence_factor * sum.divergence_scale &&
                           sum.divergence_scale > 0.0;
        if (blown) {
            sum.status = "diverged";
            char buf[96];
            std::snprintf(buf, sizeof buf, "energy exceeded %g x forcing scale at level %zu", cfg.divergence_factor, s.n);
            sum.reason = buf;
        }
        if (last || blown || s.n % every == 0)
            for (auto* k : sinks)
                k->on_snapshot(s);
        if (blown)
            break;
    }
    sum.final_energy = energy_two_level(ops, s);
    if (cfg.kind != SchemeKind::coupled && s.p1_prev && s.finite() && !sum.diverged())
        sum.final_three_level_energy = energy_three_level(ops, s, cfg.tau, cfg.theta, cfg.kind, cfg.solver()).total;
    sum.final_state = std::move(s);
    sum.stats = stepper.stats();
    return sum;
}

} // namespace pspl
