#pragma once

// Test-only reference computations. Everything here is written straight
// from the defining formulas with dense matrices and plain loops, and never
// calls the library's transforms, so it can check them independently.

#include <cmath>
#include <complex>
#include <cstddef>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "ddmux/channel.hpp"
#include "ddmux/grid.hpp"

namespace oracle {

using ddmux::CMatrix;
using ddmux::Complex;
using ddmux::CVector;

inline constexpr double pi = 3.14159265358979323846;

inline Complex expj(double angle) { return std::exp(Complex(0.0, angle)); }

/// [F_K]_{p,q} = exp(-j 2 pi p q / K) / sqrt(K).
inline CMatrix dft_matrix(std::size_t k)
{
    CMatrix f(k, k);
    for (std::size_t p = 0; p < k; ++p)
        for (std::size_t q = 0; q < k; ++q)
            f(p, q) = expj(-2.0 * pi * double(p) * double(q) / double(k)) / std::sqrt(double(k));
    return f;
}

inline CMatrix kron(const CMatrix& a, const CMatrix& b)
{
    CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

/// Omega = diag{omega_0, ..., omega_{N-1}}, omega_n = [w_n^0 .. w_n^{M-1}].
inline CMatrix omega_matrix(std::size_t M, std::size_t N)
{
    CMatrix o = CMatrix::Zero(M * N, M * N);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t m = 0; m < M; ++m)
            o(n * M + m, n * M + m) = expj(-2.0 * pi * double(m) * double(n) / double(M * N));
    return o;
}

/// Psi = [Psi_0; ...; Psi_{M-1}], Psi_m = CircShift(I_N kron psi, m),
/// psi = [1, 0_{M-1}] (a row), circular shift along columns.
inline CMatrix psi_matrix(std::size_t M, std::size_t N)
{
    CMatrix psi_row = CMatrix::Zero(1, M);
    psi_row(0, 0) = 1.0;
    const CMatrix base = kron(CMatrix::Identity(N, N), psi_row); // N x MN
    CMatrix out(M * N, M * N);
    for (std::size_t m = 0; m < M; ++m) {
        CMatrix shifted(N, M * N);
        for (std::size_t c = 0; c < M * N; ++c) shifted.col((c + m) % (M * N)) = base.col(c);
        out.block(m * N, 0, N, M * N) = shifted;
    }
    return out;
}

/// [H]_{i,j} = h[i-j, i] written from the tap list, plus CP add/remove.
inline CMatrix effective_time_channel(const ddmux::LtvChannel& ch)
{
    const auto& f = ch.frame();
    const std::size_t mn = f.size();
    const std::size_t len = mn + f.cp;
    CMatrix h = CMatrix::Zero(len, len);
    for (std::size_t i = 0; i < len; ++i)
        for (std::size_t j = 0; j <= i; ++j)
            for (const auto& t : ch.taps())
                if (t.delay == i - j) h(i, j) += t.gain * expj(2.0 * pi * t.doppler * double(i) / double(mn));
    CMatrix a = CMatrix::Zero(len, mn);
    for (std::size_t i = 0; i < f.cp; ++i) a(i, mn - f.cp + i) = 1.0;
    for (std::size_t i = 0; i < mn; ++i) a(f.cp + i, i) = 1.0;
    CMatrix r = CMatrix::Zero(mn, len);
    for (std::size_t i = 0; i < mn; ++i) r(i, f.cp + i) = 1.0;
    return r * h * a;
}

/// The equivalent delay-Doppler channel as the explicit unitary sandwich
/// around R_cp H A_cp (OTFS with the Omega factors, SC-IFDMA without).
inline CMatrix explicit_dd_matrix(const ddmux::LtvChannel& ch, ddmux::Waveform w)
{
    const auto& f = ch.frame();
    const CMatrix fmn = dft_matrix(f.size());
    const CMatrix spread = psi_matrix(f.M, f.N) * kron(CMatrix::Identity(f.N, f.N), dft_matrix(f.M));
    CMatrix h = spread.adjoint() * fmn * effective_time_channel(ch) * fmn.adjoint() * spread;
    if (w == ddmux::Waveform::OTFS) {
        const CMatrix o = omega_matrix(f.M, f.N);
        h = o.adjoint() * h * o;
    }
    return h;
}

/// Truncated linear convolution, one loop per output sample.
inline CVector convolve(const CVector& x, const std::vector<std::pair<std::size_t, Complex>>& taps)
{
    CVector y = CVector::Zero(x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k)
        for (const auto& [d, g] : taps)
            if (k >= Eigen::Index(d)) y[k] += g * x[k - Eigen::Index(d)];
    return y;
}

inline CVector random_vector(std::size_t n, std::mt19937_64& rng)
{
    std::normal_distribution<double> g(0.0, 1.0);
    CVector v(n);
    for (auto& x : v) x = Complex(g(rng), g(rng));
    return v;
}

inline ddmux::DelayDopplerGrid random_grid(const ddmux::FrameConfig& f, std::mt19937_64& rng)
{
    return ddmux::DelayDopplerGrid::from_vec(f, random_vector(f.size(), rng));
}

/// Random LTV channel: a few taps within the CP, Rayleigh gains,
/// fractional Doppler shifts in [-kmax, kmax].
inline ddmux::LtvChannel random_channel(const ddmux::FrameConfig& f, std::mt19937_64& rng, double kmax = 1.5,
                                        std::size_t ntaps = 4)
{
    std::uniform_int_distribution<std::size_t> delay(0, f.cp);
    std::uniform_real_distribution<double> dop(-kmax, kmax);
    std::normal_distribution<double> g(0.0, std::sqrt(0.5 / double(ntaps)));
    std::vector<ddmux::ChannelTap> taps;
    for (std::size_t i = 0; i < ntaps; ++i)
        taps.push_back({delay(rng), Complex(g(rng), g(rng)), dop(rng), 1.0 / double(ntaps)});
    return {f, taps};
}

} // namespace oracle
