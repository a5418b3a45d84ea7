#pragma once

// Sparse storage and the Krylov solvers used by every other module, plus the
// small dense routines that serve as test oracles.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pspl/error.hpp"

namespace pspl {

using Vector = std::vector<double>;
using DenseMatrix = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Threading. Only spmv is parallelised, by contiguous row blocks, so results
// are bitwise identical for every thread count.

namespace detail {
inline std::atomic<unsigned>& thread_cap()
{
    static std::atomic<unsigned> cap{1};
    return cap;
}
} // namespace detail

inline void set_thread_count(unsigned n) { detail::thread_cap() = std::max(1u, n); }
inline unsigned thread_count() { return detail::thread_cap(); }

// ---------------------------------------------------------------------------
// Dense vector helpers.

inline double dot(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size())
        throw DimensionError("dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y)
{
    if (x.size() != y.size())
        throw DimensionError("axpy: size mismatch");
    for (std::size_t i = 0; i < x.size(); ++i)
        y[i] += alpha * x[i];
}

inline Vector add(std::span<const double> a, std::span<const double> b, double bscale = 1.0)
{
    if (a.size() != b.size())
        throw DimensionError("add: size mismatch");
    Vector r(a.begin(), a.end());
    for (std::size_t i = 0; i < r.size(); ++i)
        r[i] += bscale * b[i];
    return r;
}

inline Vector scaled(std::span<const double> a, double s)
{
    Vector r(a.begin(), a.end());
    for (double& v : r)
        v *= s;
    return r;
}

inline bool all_finite(std::span<const double> a)
{
    return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

inline Vector concat(std::initializer_list<std::span<const double>> parts)
{
    Vector r;
    for (auto p : parts)
        r.insert(r.end(), p.begin(), p.end());
    return r;
}

// ---------------------------------------------------------------------------

struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
};

/// Compressed sparse row matrix; column indices sorted and unique per row.
class CsrMatrix {
public:
    CsrMatrix() = default;

    CsrMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), offsets_(rows + 1, 0)
    {
    }

    /// Duplicate (row, col) entries are summed. Explicit zeros are kept so
    /// that sparsity patterns do not depend on coefficient values.
    static CsrMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> trips)
    {
        for (const auto& t : trips)
            if (t.row >= rows || t.col >= cols)
                throw DimensionError("triplet index out of range");
        std::sort(trips.begin(), trips.end(), [](const Triplet& a, const Triplet& b) {
            return a.row != b.row ? a.row < b.row : a.col < b.col;
        });
        CsrMatrix m(rows, cols);
        m.indices_.reserve(trips.size());
        m.values_.reserve(trips.size());
        std::size_t k = 0;
        for (std::size_t r = 0; r < rows; ++r) {
            while (k < trips.size() && trips[k].row == r) {
                const std::size_t c = trips[k].col;
                double v = 0.0;
                while (k < trips.size() && trips[k].row == r && trips[k].col == c)
                    v += trips[k++].value;
                m.indices_.push_back(c);
                m.values_.push_back(v);
            }
            m.offsets_[r + 1] = m.indices_.size();
        }
        return m;
    }

    static CsrMatrix identity(std::size_t n)
    {
        CsrMatrix m(n, n);
        m.indices_.resize(n);
        m.values_.assign(n, 1.0);
        for (std::size_t i = 0; i < n; ++i) {
            m.indices_[i] = i;
            m.offsets_[i + 1] = i + 1;
        }
        return m;
    }

    static CsrMatrix from_dense(const DenseMatrix& d, double drop = 0.0)
    {
        std::vector<Triplet> t;
        for (Eigen::Index i = 0; i < d.rows(); ++i)
            for (Eigen::Index j = 0; j < d.cols(); ++j)
                if (std::abs(d(i, j)) > drop)
                    t.push_back({std::size_t(i), std::size_t(j), d(i, j)});
        return from_triplets(std::size_t(d.rows()), std::size_t(d.cols()), std::move(t));
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t nnz() const { return values_.size(); }

    std::span<const std::size_t> offsets() const { return offsets_; }
    std::span<const std::size_t> indices() const { return indices_; }
    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }

    /// Entry (r, c), zero when not stored.
    double at(std::size_t r, std::size_t c) const
    {
        const auto* b = indices_.data() + offsets_[r];
        const auto* e = indices_.data() + offsets_[r + 1];
        const auto* it = std::lower_bound(b, e, c);
        return (it != e && *it == c) ? values_[std::size_t(it - indices_.data())] : 0.0;
    }

    /// Pointer to stored entry (r, c) or nullptr.
    double* find(std::size_t r, std::size_t c)
    {
        const auto* b = indices_.data() + offsets_[r];
        const auto* e = indices_.data() + offsets_[r + 1];
        const auto* it = std::lower_bound(b, e, c);
        return (it != e && *it == c) ? &values_[std::size_t(it - indices_.data())] : nullptr;
    }

    Vector diagonal() const
    {
        Vector d(std::min(rows_, cols_), 0.0);
        for (std::size_t i = 0; i < d.size(); ++i)
            d[i] = at(i, i);
        return d;
    }

    double max_abs() const
    {
        double m = 0.0;
        for (double v : values_)
            m = std::max(m, std::abs(v));
        return m;
    }

    /// Frobenius norm.
    double norm() const
    {
        double s = 0.0;
        for (double v : values_)
            s += v * v;
        return std::sqrt(s);
    }

    CsrMatrix transpose() const
    {
        CsrMatrix t(cols_, rows_);
        std::vector<std::size_t> count(cols_ + 1, 0);
        for (std::size_t c : indices_)
            ++count[c + 1];
        for (std::size_t c = 0; c < cols_; ++c)
            count[c + 1] += count[c];
        t.offsets_ = count;
        t.indices_.resize(nnz());
        t.values_.resize(nnz());
        std::vector<std::size_t> pos(count.begin(), count.end() - 1);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t k = offsets_[r]; k < offsets_[r + 1]; ++k) {
                const std::size_t p = pos[indices_[k]]++;
                t.indices_[p] = r;
                t.values_[p] = values_[k];
            }
        return t;
    }

    CsrMatrix& scale(double s)
    {
        for (double& v : values_)
            v *= s;
        return *this;
    }

    CsrMatrix scaled(double s) const
    {
        CsrMatrix m = *this;
        return m.scale(s);
    }

    /// Zero every stored entry of row r.
    void zero_row(std::size_t r)
    {
        for (std::size_t k = offsets_[r]; k < offsets_[r + 1]; ++k)
            values_[k] = 0.0;
    }

    DenseMatrix to_dense() const
    {
        DenseMatrix d = DenseMatrix::Zero(Eigen::Index(rows_), Eigen::Index(cols_));
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t k = offsets_[r]; k < offsets_[r + 1]; ++k)
                d(Eigen::Index(r), Eigen::Index(indices_[k])) += values_[k];
        return d;
    }

    void to_triplets(std::vector<Triplet>& out, std::size_t row0 = 0, std::size_t col0 = 0,
                     double s = 1.0) const
    {
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t k = offsets_[r]; k < offsets_[r + 1]; ++k)
                out.push_back({row0 + r, col0 + indices_[k], s * values_[k]});
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::size_t> offsets_{0};
    std::vector<std::size_t> indices_;
    std::vector<double> values_;
};

/// a*X + b*Y over the union pattern.
inline CsrMatrix linear_combination(double a, const CsrMatrix& x, double b, const CsrMatrix& y)
{
    if (x.rows() != y.rows() || x.cols() != y.cols())
        throw DimensionError("linear_combination: shape mismatch");
    std::vector<Triplet> t;
    t.reserve(x.nnz() + y.nnz());
    x.to_triplets(t, 0, 0, a);
    y.to_triplets(t, 0, 0, b);
    return CsrMatrix::from_triplets(x.rows(), x.cols(), std::move(t));
}

/// Placement of one scaled block inside a larger matrix.
struct BlockEntry {
    std::size_t row0;
    std::size_t col0;
    const CsrMatrix* block;
    double scale = 1.0;
};

inline CsrMatrix assemble_blocks(std::size_t rows, std::size_t cols, std::initializer_list<BlockEntry> blocks)
{
    std::vector<Triplet> t;
    std::size_t n = 0;
    for (const auto& b : blocks)
        n += b.block->nnz();
    t.reserve(n);
    for (const auto& b : blocks) {
        if (b.row0 + b.block->rows() > rows || b.col0 + b.block->cols() > cols)
            throw DimensionError("assemble_blocks: block out of range");
        b.block->to_triplets(t, b.row0, b.col0, b.scale);
    }
    return CsrMatrix::from_triplets(rows, cols, std::move(t));
}

/// Largest |A_ij - A_ji| relative to max |A_ij|.
inline double symmetry_defect(const CsrMatrix& a)
{
    if (a.rows() != a.cols())
        return std::numeric_limits<double>::infinity();
    const double scale = a.max_abs();
    if (scale == 0.0)
        return 0.0;
    double d = 0.0;
    const auto off = a.offsets();
    const auto idx = a.indices();
    const auto val = a.values();
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t k = off[r]; k < off[r + 1]; ++k)
            d = std::max(d, std::abs(val[k] - a.at(idx[k], r)));
    return d / scale;
}

// ---------------------------------------------------------------------------

namespace detail {
template <class F>
void for_row_blocks(std::size_t rows, F&& body)
{
    const unsigned nt = thread_count();
    if (nt <= 1 || rows < 20000) {
        body(std::size_t{0}, rows);
        return;
    }
    std::vector<std::jthread> pool;
    const std::size_t chunk = (rows + nt - 1) / nt;
    for (unsigned t = 1; t < nt; ++t) {
        const std::size_t b = std::min(rows, t * chunk), e = std::min(rows, (t + 1) * chunk);
        if (b < e)
            pool.emplace_back([&body, b, e] { body(b, e); });
    }
    body(std::size_t{0}, std::min(rows, chunk));
}
} // namespace detail

/// y = A x
inline void spmv(const CsrMatrix& a, std::span<const double> x, std::span<double> y)
{
    if (x.size() != a.cols() || y.size() != a.rows())
        throw DimensionError("spmv: shape mismatch");
    const auto off = a.offsets();
    const auto idx = a.indices();
    const auto val = a.values();
    detail::for_row_blocks(a.rows(), [&](std::size_t b, std::size_t e) {
        for (std::size_t r = b; r < e; ++r) {
            double s = 0.0;
            for (std::size_t k = off[r]; k < off[r + 1]; ++k)
                s += val[k] * x[idx[k]];
            y[r] = s;
        }
    });
}

inline Vector spmv(const CsrMatrix& a, std::span<const double> x)
{
    Vector y(a.rows());
    spmv(a, x, y);
    return y;
}

/// <A x, x>
inline double quadratic_form(const CsrMatrix& a, std::span<const double> x)
{
    return dot(spmv(a, x), x);
}

// ---------------------------------------------------------------------------
// Krylov solvers.

struct SolveReport {
    std::size_t iterations = 0;
    double relative_residual = 0.0;
    bool converged = false;
};

enum class Preconditioner { none, jacobi };

struct SolverOptions {
    double tol = 1e-10;
    std::size_t max_iter = 0; ///< 0 means 10 * n
    Preconditioner preconditioner = Preconditioner::jacobi;
};

namespace detail {
inline Vector inverse_diagonal(const CsrMatrix& a, Preconditioner p)
{
    Vector d(a.rows(), 1.0);
    if (p == Preconditioner::none)
        return d;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double v = std::abs(a.at(i, i));
        d[i] = v > 0.0 ? 1.0 / v : 1.0;
    }
    return d;
}

inline void check_finite(std::span<const double> v, const char* who)
{
    if (!all_finite(v))
        throw SolverError(std::string(who) + ": non-finite values encountered");
}
} // namespace detail

/// Preconditioned conjugate gradients. `x` holds the initial guess on entry.
/// Stops when ||b - A x|| <= tol ||b||.
inline SolveReport cg_solve(const CsrMatrix& a, std::span<const double> b, std::span<double> x,
                            const SolverOptions& opt = {})
{
    const std::size_t n = a.rows();
    if (a.cols() != n || b.size() != n || x.size() != n)
        throw DimensionError("cg_solve: shape mismatch");
    detail::check_finite(b, "cg_solve");
    detail::check_finite(x, "cg_solve");
    const std::size_t max_iter = opt.max_iter ? opt.max_iter : 10 * std::max<std::size_t>(n, 1);
    const Vector dinv = detail::inverse_diagonal(a, opt.preconditioner);

    SolveReport rep;
    const double bnorm = norm2(b);
    if (bnorm == 0.0) {
        std::fill(x.begin(), x.end(), 0.0);
        rep.converged = true;
        return rep;
    }
    Vector r(n), z(n), p(n), q(n);
    spmv(a, x, r);
    for (std::size_t i = 0; i < n; ++i)
        r[i] = b[i] - r[i];
    double rnorm = norm2(r);
    for (std::size_t i = 0; i < n; ++i)
        z[i] = dinv[i] * r[i];
    p = z;
    double rz = dot(r, z);
    std::size_t it = 0;
    while (rnorm > opt.tol * bnorm && it < max_iter) {
        spmv(a, p, q);
        const double pq = dot(p, q);
        if (!std::isfinite(pq))
            throw SolverError("cg_solve: non-finite values encountered");
        if (pq <= 0.0)
            break; // not positive definite along p
        const double alpha = rz / pq;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        ++it;
        rnorm = norm2(r);
        if (!std::isfinite(rnorm))
            throw SolverError("cg_solve: non-finite values encountered");
        for (std::size_t i = 0; i < n; ++i)
            z[i] = dinv[i] * r[i];
        const double rz_new = dot(r, z);
        const double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t i = 0; i < n; ++i)
            p[i] = z[i] + beta * p[i];
    }
    // true residual
    spmv(a, x, q);
    for (std::size_t i = 0; i < n; ++i)
        q[i] = b[i] - q[i];
    rep.iterations = it;
    rep.relative_residual = norm2(q) / bnorm;
    rep.converged = rep.relative_residual <= opt.tol * (1.0 + 1e-6) || rnorm <= opt.tol * bnorm;
    return rep;
}

inline std::pair<Vector, SolveReport> cg_solve(const CsrMatrix& a, std::span<const double> b,
                                               const SolverOptions& opt = {})
{
    Vector x(b.size(), 0.0);
    auto rep = cg_solve(a, b, x, opt);
    return {std::move(x), rep};
}

/// Preconditioned MINRES for symmetric, possibly indefinite systems. The
/// preconditioner is |diag(A)| (or the identity); convergence is measured in
/// the preconditioner-weighted norm, ||r||_{P^-1} <= tol ||b||_{P^-1}, which
/// keeps badly scaled blocks of a saddle-type system on an equal footing.
inline SolveReport minres_solve(const CsrMatrix& a, std::span<const double> b, std::span<double> x,
                                const SolverOptions& opt = {})
{
    const std::size_t n = a.rows();
    if (a.cols() != n || b.size() != n || x.size() != n)
        throw DimensionError("minres_solve: shape mismatch");
    detail::check_finite(b, "minres_solve");
    detail::check_finite(x, "minres_solve");
    const std::size_t max_iter = opt.max_iter ? opt.max_iter : 10 * std::max<std::size_t>(n, 1);
    const Vector dinv = detail::inverse_diagonal(a, opt.preconditioner);

    auto pnorm = [&](std::span<const double> v) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            s += v[i] * dinv[i] * v[i];
        return std::sqrt(s);
    };

    SolveReport rep;
    const double bnorm = pnorm(b);
    if (bnorm == 0.0) {
        std::fill(x.begin(), x.end(), 0.0);
        rep.converged = true;
        return rep;
    }

    Vector r1(n), r2(n), y(n), v(n), w(n, 0.0), w1(n), w2(n, 0.0), tmp(n);
    std::size_t total = 0;
    double true_res = 0.0;
    // Restart when the recurrence residual drifts from the true one.
    for (int cycle = 0; cycle < 8; ++cycle) {
        spmv(a, x, r1);
        for (std::size_t i = 0; i < n; ++i)
            r1[i] = b[i] - r1[i];
        true_res = pnorm(r1);
        if (true_res <= opt.tol * bnorm || total >= max_iter)
            break;
        for (std::size_t i = 0; i < n; ++i)
            y[i] = dinv[i] * r1[i];
        double beta1 = std::sqrt(dot(r1, y));
        double oldb = 0.0, beta = beta1, dbar = 0.0, epsln = 0.0, phibar = beta1;
        double cs = -1.0, sn = 0.0;
        std::fill(w.begin(), w.end(), 0.0);
        std::fill(w2.begin(), w2.end(), 0.0);
        r2 = r1;
        std::size_t itn = 0;
        while (total < max_iter) {
            ++itn;
            ++total;
            const double s = 1.0 / beta;
            for (std::size_t i = 0; i < n; ++i)
                v[i] = s * y[i];
            spmv(a, v, y);
            if (itn >= 2)
                axpy(-beta / oldb, r1, y);
            const double alfa = dot(v, y);
            axpy(-alfa / beta, r2, y);
            std::swap(r1, r2);
            std::swap(r2, y);
            for (std::size_t i = 0; i < n; ++i)
                y[i] = dinv[i] * r2[i];
            oldb = beta;
            const double bb = dot(r2, y);
            if (!std::isfinite(bb))
                throw SolverError("minres_solve: non-finite values encountered");
            beta = std::sqrt(std::max(bb, 0.0));
            const double oldeps = epsln;
            const double delta = cs * dbar + sn * alfa;
            const double gbar = sn * dbar - cs * alfa;
            epsln = sn * beta;
            dbar = -cs * beta;
            double gamma = std::hypot(gbar, beta);
            gamma = std::max(gamma, std::numeric_limits<double>::min());
            cs = gbar / gamma;
            sn = beta / gamma;
            const double phi = cs * phibar;
            phibar = sn * phibar;
            std::swap(w1, w2);
            std::swap(w2, w);
            for (std::size_t i = 0; i < n; ++i) {
                w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) / gamma;
                x[i] += phi * w[i];
            }
            if (phibar <= opt.tol * bnorm || beta == 0.0)
                break;
        }
        detail::check_finite(x, "minres_solve");
    }
    spmv(a, x, tmp);
    for (std::size_t i = 0; i < n; ++i)
        tmp[i] = b[i] - tmp[i];
    true_res = pnorm(tmp);
    rep.iterations = total;
    rep.relative_residual = true_res / bnorm;
    rep.converged = rep.relative_residual <= opt.tol * (1.0 + 1e-6);
    return rep;
}

inline std::pair<Vector, SolveReport> minres_solve(const CsrMatrix& a, std::span<const double> b,
                                                   const SolverOptions& opt = {})
{
    Vector x(b.size(), 0.0);
    auto rep = minres_solve(a, b, x, opt);
    return {std::move(x), rep};
}

// ---------------------------------------------------------------------------
// Dense oracles.

/// LU with partial pivoting. Throws when the matrix is singular to working
/// precision (reciprocal condition estimate below 1e-14).
inline Eigen::VectorXd dense_solve(const DenseMatrix& a, const Eigen::VectorXd& b)
{
    if (a.rows() != a.cols() || a.rows() != b.size())
        throw DimensionError("dense_solve: shape mismatch");
    if (a.rows() == 0)
        return b;
    Eigen::PartialPivLU<DenseMatrix> lu(a);
    const double rc = lu.rcond();
    if (!(rc > 1e-14))
        throw SolverError("dense_solve: matrix singular to working precision");
    return lu.solve(b);
}

inline Vector dense_solve(const DenseMatrix& a, std::span<const double> b)
{
    Eigen::VectorXd bb = Eigen::Map<const Eigen::VectorXd>(b.data(), Eigen::Index(b.size()));
    Eigen::VectorXd x = dense_solve(a, bb);
    return Vector(x.data(), x.data() + x.size());
}

/// Eigenvalues of the symmetric pencil S v = nu T v, ascending. T must be SPD.
inline Eigen::VectorXd dense_generalized_symmetric_eig(const DenseMatrix& s, const DenseMatrix& t,
                                                       DenseMatrix* eigenvectors = nullptr)
{
    if (s.rows() != s.cols() || t.rows() != t.cols() || s.rows() != t.rows())
        throw DimensionError("dense_generalized_symmetric_eig: shape mismatch");
    Eigen::LLT<DenseMatrix> llt(t);
    if (llt.info() != Eigen::Success)
        throw SolverError("dense_generalized_symmetric_eig: T is not SPD");
    Eigen::GeneralizedSelfAdjointEigenSolver<DenseMatrix> es(
        s, t, eigenvectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw SolverError("dense_generalized_symmetric_eig: eigensolver failed");
    if (eigenvectors)
        *eigenvectors = es.eigenvectors();
    return es.eigenvalues();
}

} // namespace pspl
