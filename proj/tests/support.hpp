#pragma once

// Shared fixtures for the tests: small systems, random vectors and dense
// reference integrators built straight from the semi-discrete equations.

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "pspl/schemes.hpp"
#include "pspl/system.hpp"

namespace pspl::test {

inline MeshSpec tiny_spec(int res)
{
    MeshSpec s;
    s.resolution = res;
    s.grading = 1.0;
    s.strip_half_width = 0.25; // keeps G1 nonempty on very coarse meshes
    return s;
}

inline SystemOperators tiny_system(int res, int set = 1)
{
    return build_system(generate_unit_square(tiny_spec(res)), parameter_set(set));
}

inline Vector random_vector(std::size_t n, std::uint64_t seed, double scale = 1.0)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    Vector v(n);
    for (double& x : v)
        x = scale * uni(rng);
    return v;
}

inline double rel_diff(std::span<const double> a, std::span<const double> b)
{
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

/// Largest per-field relative difference between two states.
inline double state_diff(const State& a, const State& b)
{
    return std::max({rel_diff(a.u, b.u), rel_diff(a.p1, b.p1), rel_diff(a.p2, b.p2)});
}

/// Problem data touching every term: load, sources in both legs and nonzero
/// initial pressures.
inline ProblemData rich_data()
{
    ProblemData d;
    d.traction = sinusoidal_normal_traction(1.0);
    d.f1 = [](double x, double y, double t) { return 1e-6 * (1.0 + x * y) * (1.0 + t); };
    d.f2 = [](double x, double, double t) { return -2e-6 * x * std::cos(t); };
    d.s1 = [](double x, double y) { return std::sin(M_PI * x) * y; };
    d.s2 = [](double x, double y) { return 0.5 * x * (1.0 - y); };
    return d;
}

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline VectorXd to_eigen(std::span<const double> v)
{
    return Eigen::Map<const VectorXd>(v.data(), Eigen::Index(v.size()));
}

inline Vector to_std(const VectorXd& v) { return Vector(v.data(), v.data() + v.size()); }

/// Dense reference for the time integrators. Every step is one dense solve of
/// the level system in its textbook (non-increment) form.
class DenseOracle {
public:
    DenseOracle(const SystemOperators& ops, const ProblemData& data) : ops_(ops), data_(data)
    {
        nu_ = ops.nu();
        np_ = ops.np();
        a_ = ops.A.to_dense();
        g_ = block_G(ops).to_dense();
        d_ = block_D(ops).to_dense();
        c_ = block_C(ops).to_dense();
        b_ = block_B(ops).to_dense();
        bdiag_ = block_B_diagonal(ops).to_dense();
        a_llt_.compute(a_);
    }

    struct Level {
        VectorXd u, p, p_prev;
        bool has_prev = false;
        double t = 0.0;
    };

    Level from_state(const State& s) const
    {
        Level l;
        l.u = to_eigen(s.u);
        l.p = to_eigen(concat({s.p1, s.p2}));
        if (s.p1_prev) {
            l.p_prev = to_eigen(concat({*s.p1_prev, *s.p2_prev}));
            l.has_prev = true;
        }
        l.t = s.t;
        return l;
    }

    State to_state(const Level& l, std::size_t n) const
    {
        State s;
        s.n = n;
        s.t = l.t;
        s.u = to_std(l.u);
        s.p1 = to_std(l.p.head(Eigen::Index(np_)));
        s.p2 = to_std(l.p.tail(Eigen::Index(np_)));
        if (l.has_prev) {
            s.p1_prev = to_std(l.p_prev.head(Eigen::Index(np_)));
            s.p2_prev = to_std(l.p_prev.tail(Eigen::Index(np_)));
        }
        return s;
    }

    /// [A G; D C + th tau B] [u; p] = [F; C p^n + D u^n - (1 - th) tau B p^n + tau f(t^n + th tau)]
    Level coupled(const Level& s, double theta, double tau) const
    {
        const Eigen::Index nu = Eigen::Index(nu_), np2 = Eigen::Index(2 * np_);
        MatrixXd k = MatrixXd::Zero(nu + np2, nu + np2);
        k.topLeftCorner(nu, nu) = a_;
        k.topRightCorner(nu, np2) = g_;
        k.bottomLeftCorner(np2, nu) = d_;
        k.bottomRightCorner(np2, np2) = c_ + theta * tau * b_;
        VectorXd rhs(nu + np2);
        rhs.head(nu) = load(s.t + tau);
        rhs.tail(np2) = c_ * s.p + d_ * s.u - (1.0 - theta) * tau * (b_ * s.p) + tau * source(s.t + theta * tau);
        const VectorXd x = equilibrated_solve(k, rhs);
        Level out;
        out.u = x.head(nu);
        out.p = x.tail(np2);
        out.p_prev = s.p;
        out.has_prev = true;
        out.t = s.t + tau;
        return out;
    }

    /// u^{n+1} = A^-1 (F^{n+1} - G p^n);
    /// (th C + tau B_impl) p^{n+1} = th C p^n - (1 - th) C (p^n - p^{n-1})
    ///     - D (u^{n+1} - u_lag^n) - tau B_expl p^n + tau f^{n+1},
    /// where u_lag^n = A^-1 (F^n - G p^{n-1}).
    Level split(const Level& s, double theta, double tau, bool full) const
    {
        const double t1 = s.t + tau;
        const VectorXd u_new = a_llt_.solve(load(t1) - g_ * s.p);
        const VectorXd u_lag = a_llt_.solve(load(s.t) - g_ * s.p_prev);
        const MatrixXd impl = full ? bdiag_ : b_;
        const MatrixXd expl = b_ - impl;
        const MatrixXd m = theta * c_ + tau * impl;
        const VectorXd rhs = theta * (c_ * s.p) - (1.0 - theta) * (c_ * (s.p - s.p_prev)) - d_ * (u_new - u_lag) -
                             tau * (expl * s.p) + tau * source(t1);
        Level out;
        out.u = u_new;
        out.p = m.ldlt().solve(rhs);
        out.p_prev = s.p;
        out.has_prev = true;
        out.t = t1;
        return out;
    }

    std::vector<State> trajectory(const State& s0, SchemeKind kind, double theta, double tau, std::size_t steps) const
    {
        std::vector<State> out{s0};
        Level l = from_state(s0);
        for (std::size_t n = 0; n < steps; ++n) {
            if (kind == SchemeKind::coupled)
                l = coupled(l, theta, tau);
            else if (n == 0)
                l = coupled(l, 1.0, tau);
            else
                l = split(l, theta, tau, kind == SchemeKind::full);
            out.push_back(to_state(l, n + 1));
        }
        return out;
    }

    const MatrixXd& A() const { return a_; }
    const MatrixXd& G() const { return g_; }
    const MatrixXd& D() const { return d_; }
    const MatrixXd& C() const { return c_; }
    const MatrixXd& B() const { return b_; }
    const MatrixXd& B_diag() const { return bdiag_; }

    /// B1~ = -D A^-1 G, dense.
    MatrixXd schur() const { return -d_ * a_llt_.solve(g_); }

    VectorXd load(double t) const { return to_eigen(load_vector(ops_, data_, t)); }
    VectorXd source(double t) const
    {
        return to_eigen(concat({source_vector(ops_, data_, 1, t), source_vector(ops_, data_, 2, t)}));
    }

private:
    static VectorXd equilibrated_solve(const MatrixXd& k, const VectorXd& rhs)
    {
        VectorXd s(k.rows());
        for (Eigen::Index i = 0; i < k.rows(); ++i)
            s(i) = 1.0 / std::sqrt(std::max(std::abs(k(i, i)), 1e-300));
        const MatrixXd ks = s.asDiagonal() * k * s.asDiagonal();
        const VectorXd y = ks.fullPivLu().solve(VectorXd(s.asDiagonal() * rhs));
        return s.asDiagonal() * y;
    }

    const SystemOperators& ops_;
    const ProblemData& data_;
    std::size_t nu_ = 0, np_ = 0;
    MatrixXd a_, g_, d_, c_, b_, bdiag_;
    Eigen::LLT<MatrixXd> a_llt_;
};

} // namespace pspl::test
