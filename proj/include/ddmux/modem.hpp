#pragma once

// OTFS and SC-IFDMA modulators/demodulators, each in two structures:
//
//  direct  - row-wise N-point (I)DFT in the delay-time domain, then
//            interleave (tx) or gather every M-th sample (rx).
//  spread  - per-Doppler-column M-point DFT precoding onto N-spaced
//            subcarriers of an MN-point OFDM symbol (tx), and the mirror
//            image on receive.
//
// SC-IFDMA is the spread structure without the omega_n^m rotations. Its
// direct path is OTFS applied to the derotated grid.

#include <cstddef>

#include "ddmux/core.hpp"
#include "ddmux/grid.hpp"

namespace ddmux {

/// Time-domain samples of one frame, with or without its cyclic prefix.
struct TimeSignal {
    FrameConfig frame;
    CVector samples;
    bool with_cp = true;

    std::size_t expected_length() const { return with_cp ? frame.frame_length() : frame.size(); }
};

inline CVector add_cp(const CVector& body, std::size_t cp)
{
    const auto len = body.size();
    if (static_cast<Eigen::Index>(cp) > len) throw ShapeError("add_cp: prefix longer than the block");
    CVector out(len + static_cast<Eigen::Index>(cp));
    out.head(static_cast<Eigen::Index>(cp)) = body.tail(static_cast<Eigen::Index>(cp));
    out.tail(len) = body;
    return out;
}

/// Frame body (MN samples) of a signal, dropping the prefix if present.
inline CVector frame_body(const TimeSignal& sig)
{
    require_length(static_cast<std::size_t>(sig.samples.size()), sig.expected_length(), "demodulate");
    if (!sig.with_cp) return sig.samples;
    return sig.samples.tail(static_cast<Eigen::Index>(sig.frame.size()));
}

namespace detail {

inline void check_grid(const DelayDopplerGrid& g)
{
    if (static_cast<std::size_t>(g.symbols.rows()) != g.frame.M ||
        static_cast<std::size_t>(g.symbols.cols()) != g.frame.N)
        throw ShapeError("grid shape does not match its frame");
}

// Elementwise multiply by omega_n^m (conjugate = false) or its conjugate.
inline CMatrix rotate(const CMatrix& d, std::size_t M, std::size_t N, bool conjugate)
{
    CMatrix out = d;
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t m = 0; m < M; ++m) {
            const Complex w = omega_entry(m, n, M, N);
            out(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n)) *= conjugate ? std::conj(w) : w;
        }
    return out;
}

// OTFS direct modulation of a symbol matrix, no CP: S = D F_N^H, s = vec(S).
inline CVector otfs_direct_body(const CMatrix& d)
{
    const auto M = d.rows();
    const auto N = d.cols();
    CVector s(M * N);
    CVector row(N);
    for (Eigen::Index m = 0; m < M; ++m) {
        row = d.row(m).transpose();
        unitary_dft_inplace({row.data(), static_cast<std::size_t>(N)}, true);
        for (Eigen::Index l = 0; l < N; ++l) s[m + l * M] = row[l];
    }
    return s;
}

// OTFS direct demodulation of a frame body: D~ = R F_N.
inline CMatrix otfs_direct_grid(const CVector& body, std::size_t M, std::size_t N)
{
    CMatrix d(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(N));
    CVector row(static_cast<Eigen::Index>(N));
    for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t l = 0; l < N; ++l) row[static_cast<Eigen::Index>(l)] = body[static_cast<Eigen::Index>(m + l * M)];
        unitary_dft_inplace({row.data(), N}, false);
        d.row(static_cast<Eigen::Index>(m)) = row.transpose();
    }
    return d;
}

} // namespace detail

/// Frame body (no CP) of the direct-structure modulator.
inline CVector modulate_direct_body(const DelayDopplerGrid& grid, Waveform w)
{
    detail::check_grid(grid);
    const auto& f = grid.frame;
    if (w == Waveform::OTFS) return detail::otfs_direct_body(grid.symbols);
    return detail::otfs_direct_body(detail::rotate(grid.symbols, f.M, f.N, true));
}

/// Frame body (no CP) of the DFT-spread modulator.
inline CVector modulate_spread_body(const DelayDopplerGrid& grid, Waveform w)
{
    detail::check_grid(grid);
    const std::size_t M = grid.frame.M;
    const std::size_t N = grid.frame.N;
    CVector spectrum(static_cast<Eigen::Index>(M * N));
    CVector column(static_cast<Eigen::Index>(M));
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t m = 0; m < M; ++m) {
            Complex v = grid(m, n);
            if (w == Waveform::OTFS) v *= omega_entry(m, n, M, N);
            column[static_cast<Eigen::Index>(m)] = v;
        }
        unitary_dft_inplace({column.data(), M}, false);
        for (std::size_t mp = 0; mp < M; ++mp) spectrum[static_cast<Eigen::Index>(n + mp * N)] = column[static_cast<Eigen::Index>(mp)];
    }
    unitary_dft_inplace({spectrum.data(), M * N}, true);
    return spectrum;
}

inline TimeSignal modulate_direct(const DelayDopplerGrid& grid, Waveform w)
{
    return {grid.frame, add_cp(modulate_direct_body(grid, w), grid.frame.cp), true};
}

inline TimeSignal modulate_spread(const DelayDopplerGrid& grid, Waveform w)
{
    return {grid.frame, add_cp(modulate_spread_body(grid, w), grid.frame.cp), true};
}

inline DelayDopplerGrid demodulate_direct(const TimeSignal& sig, Waveform w)
{
    const auto& f = sig.frame;
    CMatrix d = detail::otfs_direct_grid(frame_body(sig), f.M, f.N);
    if (w == Waveform::SC_IFDMA) d = detail::rotate(d, f.M, f.N, false);
    return {f, std::move(d)};
}

inline DelayDopplerGrid demodulate_spread(const TimeSignal& sig, Waveform w)
{
    const auto& f = sig.frame;
    const std::size_t M = f.M;
    const std::size_t N = f.N;
    CVector spectrum = frame_body(sig);
    unitary_dft_inplace({spectrum.data(), M * N}, false);
    CMatrix d(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(N));
    CVector group(static_cast<Eigen::Index>(M));
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t mp = 0; mp < M; ++mp) group[static_cast<Eigen::Index>(mp)] = spectrum[static_cast<Eigen::Index>(n + mp * N)];
        unitary_dft_inplace({group.data(), M}, true);
        for (std::size_t m = 0; m < M; ++m) {
            Complex v = group[static_cast<Eigen::Index>(m)];
            if (w == Waveform::OTFS) v *= std::conj(omega_entry(m, n, M, N));
            d(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n)) = v;
        }
    }
    return {f, std::move(d)};
}

/// Shorthands: the direct structure is the default implementation.
inline TimeSignal modulate(const DelayDopplerGrid& grid, Waveform w) { return modulate_direct(grid, w); }
inline DelayDopplerGrid demodulate(const TimeSignal& sig, Waveform w) { return demodulate_direct(sig, w); }

} // namespace ddmux
