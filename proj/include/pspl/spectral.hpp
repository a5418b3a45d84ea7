#pragma once

// Largest eigenvalue delta of the pencil (B1~, C), B1~ = -D A^-1 G, and the
// stability weight theta_min = (1 + delta)/2 of the splitting schemes.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pspl/linalg.hpp"
#include "pspl/system.hpp"

namespace pspl {

struct SpectralResult {
    double delta = 0.0;
    double theta_min = 0.5;
    std::size_t iterations = 0;
    double residual = 0.0; ///< relative eigen-residual ||C^-1 B1~ q - delta q||_C / delta, ||q||_C = 1
    std::string method = "power";
    std::vector<double> history; ///< estimate after each iteration
};

inline double theta_min(double delta)
{
    if (!(delta >= 0.0))
        throw InvalidSpecError("theta_min: delta must be nonnegative");
    return 0.5 * (1.0 + delta);
}

struct PowerOptions {
    double tol = 1e-8;          ///< relative change of the estimate
    std::size_t max_iter = 2000;
    std::uint64_t seed = 42;
    double solve_tol = 1e-11;   ///< inner CG tolerance
};

namespace detail {
/// The operator C^-1 B1~ (self-adjoint in the C inner product), applied with
/// one elasticity solve and two mass solves. Elasticity solves start from the
/// previous solution.
class PencilOperator {
public:
    PencilOperator(const SystemOperators& ops, double solve_tol)
        : ops_(ops), opt_{solve_tol, 0, Preconditioner::jacobi}, z_(ops.nu(), 0.0)
    {
    }

    /// Returns C^-1 B1~ q and stores B1~ q in `bq`.
    Vector apply(std::span<const double> q, Vector& bq)
    {
        const Vector g = apply_G(ops_, first_half(q), second_half(q));
        auto rz = cg_solve(ops_.A, g, z_, opt_);
        if (!rz.converged)
            throw SolverError("delta estimate: elasticity solve did not converge");
        Vector w1 = spmv(ops_.D1, z_), w2 = spmv(ops_.D2, z_);
        for (auto& v : w1)
            v = -v;
        for (auto& v : w2)
            v = -v;
        bq = concat({w1, w2});
        auto [y1, r1] = cg_solve(ops_.C1, w1, opt_);
        auto [y2, r2] = cg_solve(ops_.C2, w2, opt_);
        if (!r1.converged || !r2.converged)
            throw SolverError("delta estimate: mass solve did not converge");
        return concat({y1, y2});
    }

    Vector c_apply(std::span<const double> v) const
    {
        return concat({spmv(ops_.C1, first_half(v)), spmv(ops_.C2, second_half(v))});
    }

    double c_norm(std::span<const double> v) const { return std::sqrt(std::max(0.0, dot(c_apply(v), v))); }

    /// Fixed-seed random start, zero at drained dofs, unit C-norm.
    Vector start(std::uint64_t seed) const
    {
        const std::size_t np = ops_.np();
        std::vector<char> drained(np, 0);
        for (auto d : ops_.p_drained)
            drained[d] = 1;
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> uni(-1.0, 1.0);
        Vector q(2 * np);
        for (std::size_t i = 0; i < 2 * np; ++i)
            q[i] = drained[i % np] ? 0.0 : uni(rng);
        const double s = c_norm(q);
        for (double& v : q)
            v /= s;
        return q;
    }

private:
    const SystemOperators& ops_;
    SolverOptions opt_;
    Vector z_;
};

inline bool uncoupled(const SystemOperators& ops) { return ops.params.alpha1 == 0.0 && ops.params.alpha2 == 0.0; }
} // namespace detail

/// Power iteration q <- C^-1 B1~ q with C-normalisation. Stops once the
/// Rayleigh quotient changed by at most tol (relative) on two consecutive
/// iterations and the relative eigen-residual is at most sqrt(tol).
/// Convergence is slow when the top of the spectrum clusters; see
/// estimate_delta_lanczos.
inline SpectralResult estimate_delta_power(const SystemOperators& ops, const PowerOptions& po = {})
{
    SpectralResult res;
    res.method = "power";
    if (detail::uncoupled(ops))
        return res;
    detail::PencilOperator op(ops, po.solve_tol);
    Vector q = op.start(po.seed);
    Vector bq;
    double nu_prev = -1.0;
    int calm = 0;
    for (std::size_t it = 1; it <= po.max_iter; ++it) {
        const Vector y = op.apply(q, bq);
        const double rq = dot(bq, q); // ||q||_C = 1
        Vector r = y;
        axpy(-rq, q, r);
        res.iterations = it;
        res.delta = rq;
        res.history.push_back(rq);
        if (rq <= 0.0) {
            res.delta = 0.0;
            res.residual = 0.0;
            res.theta_min = theta_min(0.0);
            return res;
        }
        res.residual = op.c_norm(r) / rq;
        const double change = nu_prev > 0.0 ? std::abs(rq - nu_prev) / rq : 1.0;
        calm = change <= po.tol ? calm + 1 : 0;
        nu_prev = rq;
        if (calm >= 2 && res.residual <= std::sqrt(po.tol)) {
            res.theta_min = theta_min(res.delta);
            return res;
        }
        const double s = op.c_norm(y);
        if (!(s > 0.0) || !std::isfinite(s))
            throw SolverError("estimate_delta_power: iteration collapsed");
        for (std::size_t i = 0; i < q.size(); ++i)
            q[i] = y[i] / s;
    }
    throw SolverError("estimate_delta_power: no convergence in " + std::to_string(po.max_iter) +
                      " iterations (delta ~ " + std::to_string(res.delta) + ", residual " +
                      std::to_string(res.residual) + ")");
}

/// Lanczos on C^-1 B1~ in the C inner product, with full
/// reorthogonalisation. Same operator, start vector and stopping rule as the
/// power iteration; the estimate is the largest Ritz value.
inline SpectralResult estimate_delta_lanczos(const SystemOperators& ops, const PowerOptions& po = {})
{
    SpectralResult res;
    res.method = "lanczos";
    if (detail::uncoupled(ops))
        return res;
    detail::PencilOperator op(ops, po.solve_tol);
    const std::size_t n = 2 * ops.np();
    const std::size_t kmax = std::min<std::size_t>(po.max_iter, n);

    std::vector<Vector> basis;   // C-orthonormal q_j
    std::vector<Vector> cbasis;  // C q_j
    std::vector<double> alpha, beta;
    basis.push_back(op.start(po.seed));
    cbasis.push_back(op.c_apply(basis.back()));
    double prev = -1.0;
    int calm = 0;
    Vector bq;
    for (std::size_t j = 0; j < kmax; ++j) {
        Vector w = op.apply(basis[j], bq);
        alpha.push_back(dot(bq, basis[j]));
        // full reorthogonalisation (twice) in the C inner product
        for (int pass = 0; pass < 2; ++pass)
            for (std::size_t i = 0; i <= j; ++i)
                axpy(-dot(w, cbasis[i]), basis[i], w);
        const double b = op.c_norm(w);

        const std::size_t k = j + 1;
        Eigen::MatrixXd t = Eigen::MatrixXd::Zero(Eigen::Index(k), Eigen::Index(k));
        for (std::size_t i = 0; i < k; ++i) {
            t(Eigen::Index(i), Eigen::Index(i)) = alpha[i];
            if (i + 1 < k)
                t(Eigen::Index(i), Eigen::Index(i + 1)) = t(Eigen::Index(i + 1), Eigen::Index(i)) = beta[i];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
        const double ritz = es.eigenvalues()(Eigen::Index(k - 1));
        const double last = es.eigenvectors()(Eigen::Index(k - 1), Eigen::Index(k - 1));
        res.iterations = k;
        res.delta = std::max(0.0, ritz);
        res.history.push_back(res.delta);
        if (ritz <= 0.0) {
            res.delta = 0.0;
            res.residual = 0.0;
            res.theta_min = theta_min(0.0);
            return res;
        }
        res.residual = std::abs(b * last) / ritz;
        const double change = prev > 0.0 ? std::abs(ritz - prev) / ritz : 1.0;
        calm = change <= po.tol ? calm + 1 : 0;
        prev = ritz;
        if ((calm >= 2 && res.residual <= std::sqrt(po.tol)) || b <= 1e-14 * ritz || k == n) {
            res.theta_min = theta_min(res.delta);
            return res;
        }
        beta.push_back(b);
        basis.push_back(scaled(w, 1.0 / b));
        cbasis.push_back(op.c_apply(basis.back()));
    }
    throw SolverError("estimate_delta_lanczos: no convergence in " + std::to_string(kmax) +
                      " iterations (delta ~ " + std::to_string(res.delta) + ", residual " +
                      std::to_string(res.residual) + ")");
}

/// Size cap of the dense oracle (total dofs).
inline constexpr std::size_t dense_delta_limit = 2000;

/// Dense oracle: largest eigenvalue of the displacement-space pencil
/// (G C^-1 G^T, A), whose nonzero spectrum equals that of (B1~, C).
inline SpectralResult dense_delta(const SystemOperators& ops)
{
    const std::size_t nu = ops.nu(), np = ops.np();
    if (nu + 2 * np > dense_delta_limit)
        throw InvalidSpecError("dense_delta: system has " + std::to_string(nu + 2 * np) +
                               " dofs, limit is " + std::to_string(dense_delta_limit));
    const DenseMatrix a = ops.A.to_dense();
    const DenseMatrix g = block_G(ops).to_dense();
    const DenseMatrix c = block_C(ops).to_dense();
    const DenseMatrix cinv_gt = c.ldlt().solve(g.transpose());
    DenseMatrix s = g * cinv_gt;
    s = 0.5 * (s + s.transpose()).eval();
    const Eigen::VectorXd ev = dense_generalized_symmetric_eig(s, a);
    SpectralResult res;
    res.method = "dense";
    res.delta = std::max(0.0, ev.size() ? ev(ev.size() - 1) : 0.0);
    res.theta_min = theta_min(res.delta);
    res.iterations = 0;
    res.residual = 0.0;
    return res;
}

} // namespace pspl
