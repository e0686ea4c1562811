#pragma once

// Linear equalizers for y = H d + noise: a direct MMSE solve and a
// damped least-squares solver (LSMR) that only needs products with H and
// H^H, so it also runs on the matrix-free delay-Doppler channel.

#include <cmath>
#include <concepts>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "ddmux/core.hpp"
#include "ddmux/grid.hpp"

namespace ddmux {

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// (H^H H + s2 I)^{-1} H^H y. With s2 = 0 this is the least-squares /
/// zero-forcing solution and a rank-deficient H is an error.
inline CVector mmse_solve(const CMatrix& H, const CVector& y, double noise_variance)
{
    require_length(static_cast<std::size_t>(y.size()), static_cast<std::size_t>(H.rows()), "mmse_solve");
    if (noise_variance < 0.0) throw std::invalid_argument("mmse_solve: negative noise variance");
    if (noise_variance == 0.0) {
        const Eigen::ColPivHouseholderQR<CMatrix> qr(H);
        if (qr.rank() < H.cols()) throw SolverError("mmse_solve: channel matrix is rank deficient");
        return qr.solve(y);
    }
    CMatrix gram = H.adjoint() * H;
    gram.diagonal().array() += noise_variance;
    const Eigen::LLT<CMatrix> llt(gram);
    if (llt.info() != Eigen::Success) throw SolverError("mmse_solve: factorization failed");
    return llt.solve(H.adjoint() * y);
}

inline DelayDopplerGrid equalize_mmse(const DelayDopplerGrid& rx, const CMatrix& H, double noise_variance)
{
    if (H.rows() != H.cols() || static_cast<std::size_t>(H.rows()) != rx.frame.size())
        throw ShapeError("equalize_mmse: channel matrix must be MN x MN");
    return DelayDopplerGrid::from_vec(rx.frame, mmse_solve(H, rx.vec(), noise_variance));
}

template <class Op>
concept LinearOperator = requires(const Op& op, const CVector& v) {
    { op.apply(v) } -> std::convertible_to<CVector>;
    { op.apply_adjoint(v) } -> std::convertible_to<CVector>;
    { op.rows() } -> std::convertible_to<Eigen::Index>;
    { op.cols() } -> std::convertible_to<Eigen::Index>;
};

/// Non-owning operator view of a dense matrix.
class DenseOperator {
public:
    explicit DenseOperator(const CMatrix& h) : h_(&h) {}
    CVector apply(const CVector& v) const { return *h_ * v; }
    CVector apply_adjoint(const CVector& v) const { return h_->adjoint() * v; }
    Eigen::Index rows() const { return h_->rows(); }
    Eigen::Index cols() const { return h_->cols(); }

private:
    const CMatrix* h_;
};

/// Restriction of an operator to a subset of its input coordinates,
/// H(:, cols). Unlisted inputs are held at zero.
template <LinearOperator Op>
class ColumnSubset {
public:
    ColumnSubset(const Op& op, std::vector<std::size_t> cols) : op_(&op), cols_(std::move(cols))
    {
        for (auto c : cols_)
            if (c >= static_cast<std::size_t>(op.cols())) throw std::out_of_range("ColumnSubset: column index");
    }

    CVector apply(const CVector& v) const
    {
        require_length(static_cast<std::size_t>(v.size()), cols_.size(), "ColumnSubset::apply");
        CVector full = CVector::Zero(op_->cols());
        for (std::size_t i = 0; i < cols_.size(); ++i) full[static_cast<Eigen::Index>(cols_[i])] = v[static_cast<Eigen::Index>(i)];
        return op_->apply(full);
    }

    CVector apply_adjoint(const CVector& y) const
    {
        const CVector full = op_->apply_adjoint(y);
        CVector out(static_cast<Eigen::Index>(cols_.size()));
        for (std::size_t i = 0; i < cols_.size(); ++i) out[static_cast<Eigen::Index>(i)] = full[static_cast<Eigen::Index>(cols_[i])];
        return out;
    }

    Eigen::Index rows() const { return op_->rows(); }
    Eigen::Index cols() const { return static_cast<Eigen::Index>(cols_.size()); }

private:
    const Op* op_;
    std::vector<std::size_t> cols_;
};

struct IterativeResult {
    CVector x;
    std::size_t iterations = 0;
    bool converged = false;
    double residual = 0.0; ///< ||y - H x||
};

/// LSMR (Fong and Saunders) for min ||H x - y||^2 + damp^2 ||x||^2.
///
/// Stops once the gradient of the damped objective has shrunk by `tol`
/// relative to its value at x = 0, or after max_iter iterations.
template <LinearOperator Op>
IterativeResult lsmr(const Op& H, const CVector& y, double damp, std::size_t max_iter, double tol)
{
    require_length(static_cast<std::size_t>(y.size()), static_cast<std::size_t>(H.rows()), "lsmr");
    if (damp < 0.0) throw std::invalid_argument("lsmr: negative damping");
    IterativeResult res;
    res.x = CVector::Zero(H.cols());
    res.residual = y.norm();
    if (max_iter == 0) return res;

    CVector u = y;
    double beta = u.norm();
    if (beta == 0.0) {
        res.converged = true;
        return res;
    }
    u /= beta;
    CVector v = H.apply_adjoint(u);
    double alpha = v.norm();
    if (alpha == 0.0) {
        res.converged = true;
        return res;
    }
    v /= alpha;

    double alpha_bar = alpha;
    double zeta_bar = alpha * beta;
    const double grad0 = zeta_bar;
    double rho = 1.0, rho_bar = 1.0, c_bar = 1.0, s_bar = 0.0;
    CVector h = v;
    CVector h_bar = CVector::Zero(H.cols());

    for (std::size_t k = 1; k <= max_iter; ++k) {
        res.iterations = k;
        u = H.apply(v) - alpha * u;
        beta = u.norm();
        if (beta > 0.0) {
            u /= beta;
            v = H.apply_adjoint(u) - beta * v;
            alpha = v.norm();
            if (alpha > 0.0) v /= alpha;
        } else {
            alpha = 0.0;
        }

        const double alpha_hat = std::hypot(alpha_bar, damp);
        const double rho_prev = rho;
        rho = std::hypot(alpha_hat, beta);
        const double c = alpha_hat / rho;
        const double s = beta / rho;
        const double theta_next = s * alpha;
        alpha_bar = c * alpha;

        const double rho_bar_prev = rho_bar;
        const double theta_bar = s_bar * rho;
        rho_bar = std::hypot(c_bar * rho, theta_next);
        c_bar = c_bar * rho / rho_bar;
        s_bar = theta_next / rho_bar;
        const double zeta = c_bar * zeta_bar;
        zeta_bar = -s_bar * zeta_bar;

        h_bar = h - (theta_bar * rho / (rho_prev * rho_bar_prev)) * h_bar;
        res.x += (zeta / (rho * rho_bar)) * h_bar;
        h = v - (theta_next / rho) * h;

        if (std::abs(zeta_bar) <= tol * grad0 || alpha == 0.0) {
            res.converged = true;
            break;
        }
    }
    res.residual = (y - H.apply(res.x)).norm();
    return res;
}

/// Iterative counterpart of equalize_mmse: damping sqrt(noise_variance).
template <LinearOperator Op>
IterativeResult equalize_iterative(const CVector& y, const Op& H, double noise_variance, std::size_t max_iter,
                                   double tol)
{
    if (noise_variance < 0.0) throw std::invalid_argument("equalize_iterative: negative noise variance");
    return lsmr(H, y, std::sqrt(noise_variance), max_iter, tol);
}

inline IterativeResult equalize_iterative(const DelayDopplerGrid& rx, const CMatrix& H, double noise_variance,
                                          std::size_t max_iter, double tol)
{
    return equalize_iterative(rx.vec(), DenseOperator(H), noise_variance, max_iter, tol);
}

} // namespace ddmux
