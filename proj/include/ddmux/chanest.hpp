#pragma once

// Embedded impulse-pilot channel estimation in the delay-Doppler grid.
//
// The pilot sqrt(rho) sits at (m_p, n_p) and is surrounded by empty guard
// bins: delay rows m_p - gd .. m_p + gd, and either Doppler columns
// n_p - gv .. n_p + gv or, when 2*gv + 1 >= N, every column. Received
// copies of the pilot in the causal half of the guard (delay offsets
// 0 .. gd) are read off as taps. Data from the row below the guard leaks
// upwards by up to the channel length, so the noise level is measured on
// the non-causal guard rows nearest the pilot only.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "ddmux/channel.hpp"
#include "ddmux/core.hpp"
#include "ddmux/grid.hpp"

namespace ddmux {

struct PilotConfig {
    std::size_t m_p = 0;
    std::size_t n_p = 0;
    double rho_p = 100.0;
    std::size_t guard_delay = 4;
    std::size_t guard_doppler = static_cast<std::size_t>(-1); ///< >= N/2 means every column
    double detection_threshold = 3.0;                        ///< multiple of the noise std
    std::size_t noise_rows = 2; ///< guard rows m_p - noise_rows .. m_p - 1 measure the noise

    /// Centred pilot with the default guards for a frame.
    static PilotConfig centred(const FrameConfig& f)
    {
        PilotConfig pc;
        pc.m_p = f.M / 2;
        pc.n_p = f.N / 2;
        return pc;
    }

    bool full_doppler_guard(const FrameConfig& f) const { return 2 * std::min(guard_doppler, f.N) + 1 >= f.N; }

    void validate(const FrameConfig& f) const
    {
        if (m_p >= f.M || n_p >= f.N) throw std::invalid_argument("PilotConfig: pilot outside the grid");
        if (!(rho_p > 0.0)) throw std::invalid_argument("PilotConfig: pilot power must be positive");
        if (!(detection_threshold > 0.0)) throw std::invalid_argument("PilotConfig: detection threshold must be positive");
        if (guard_delay > m_p || m_p + guard_delay >= f.M)
            throw std::invalid_argument("PilotConfig: delay guard does not fit the grid");
        if (!full_doppler_guard(f) && (guard_doppler > n_p || n_p + guard_doppler >= f.N))
            throw std::invalid_argument("PilotConfig: Doppler guard does not fit the grid");
        if (noise_rows == 0 || noise_rows > guard_delay)
            throw std::invalid_argument("PilotConfig: noise rows must lie inside the delay guard");
    }

    /// Doppler columns covered by the guard, ascending.
    std::vector<std::size_t> guard_columns(const FrameConfig& f) const
    {
        std::vector<std::size_t> out;
        if (full_doppler_guard(f)) {
            for (std::size_t n = 0; n < f.N; ++n) out.push_back(n);
        } else {
            for (std::size_t n = n_p - guard_doppler; n <= n_p + guard_doppler; ++n) out.push_back(n);
        }
        return out;
    }

    /// Doppler offset of column n from the pilot, wrapped into [-N/2, N/2).
    long long doppler_offset(std::size_t n, const FrameConfig& f) const
    {
        const auto N = static_cast<long long>(f.N);
        long long k = ((static_cast<long long>(n) - static_cast<long long>(n_p)) % N + N) % N;
        if (2 * k >= N) k -= N;
        return k;
    }
};

/// Data/pilot/guard overlay of a pilot configuration.
inline OverlayMask pilot_mask(const FrameConfig& f, const PilotConfig& pc)
{
    pc.validate(f);
    OverlayMask mask(f);
    for (auto n : pc.guard_columns(f))
        for (std::size_t m = pc.m_p - pc.guard_delay; m <= pc.m_p + pc.guard_delay; ++m) mask.set(m, n, BinKind::Guard);
    mask.set(pc.m_p, pc.n_p, BinKind::Pilot);
    return mask;
}

/// Places the pilot into a grid whose guard region is empty.
inline DelayDopplerGrid embed_pilot(DelayDopplerGrid grid, const PilotConfig& pc)
{
    const OverlayMask mask = pilot_mask(grid.frame, pc);
    for (std::size_t n = 0; n < grid.frame.N; ++n)
        for (std::size_t m = 0; m < grid.frame.M; ++m)
            if (mask.at(m, n) != BinKind::Data && grid(m, n) != Complex{})
                throw std::invalid_argument("embed_pilot: data symbol inside the pilot guard region");
    grid(pc.m_p, pc.n_p) = std::sqrt(pc.rho_p);
    return grid;
}

/// Noise standard deviation from the guard bins in delay rows
/// m_p - noise_rows .. m_p - 1.
inline double estimate_noise_std(const DelayDopplerGrid& rx, const PilotConfig& pc)
{
    pc.validate(rx.frame);
    double acc = 0.0;
    std::size_t count = 0;
    for (auto n : pc.guard_columns(rx.frame))
        for (std::size_t m = pc.m_p - pc.noise_rows; m < pc.m_p; ++m) {
            acc += std::norm(rx(m, n));
            ++count;
        }
    return std::sqrt(acc / static_cast<double>(count));
}

struct EstimatedTap {
    std::size_t delay = 0;  ///< offset from m_p
    long long doppler = 0;  ///< offset from n_p
    Complex gain;           ///< received pilot copy / sqrt(rho), OTFS phase reference
};

struct EstimatedChannel {
    std::vector<EstimatedTap> taps;
    Waveform source = Waveform::OTFS;
    double noise_std = 0.0;

    bool empty() const { return taps.empty(); }
};

/// Thresholded read-out of the causal guard region. Bins with
/// |D[m, n]| >= max(threshold * noise_std, 1e-9 * sqrt(rho)) become taps.
/// Estimates from an SC-IFDMA grid are rotated into the OTFS reference.
inline EstimatedChannel estimate_channel(const DelayDopplerGrid& rx, const PilotConfig& pc, double noise_std,
                                         Waveform w)
{
    const auto& f = rx.frame;
    pc.validate(f);
    if (noise_std < 0.0) throw std::invalid_argument("estimate_channel: negative noise std");
    const double sqrt_rho = std::sqrt(pc.rho_p);
    const double level = std::max(pc.detection_threshold * noise_std, 1e-9 * sqrt_rho);
    const Complex pilot_phase = omega_entry(pc.m_p, pc.n_p, f.M, f.N);

    EstimatedChannel est;
    est.source = w;
    est.noise_std = noise_std;
    for (std::size_t l = 0; l <= pc.guard_delay; ++l)
        for (auto n : pc.guard_columns(f)) {
            const std::size_t m = pc.m_p + l;
            const Complex y = rx(m, n);
            if (std::abs(y) < level) continue;
            Complex gain = y / sqrt_rho;
            if (w == Waveform::SC_IFDMA) gain *= std::conj(omega_entry(m, n, f.M, f.N)) * pilot_phase;
            est.taps.push_back({l, pc.doppler_offset(n, f), gain});
        }
    return est;
}

/// Tap-parametric channel whose delay-Doppler response to the pilot
/// reproduces every retained bin: a copy read at (m_p + l, n_p + k) is a tap
/// of delay l, Doppler k and gain g * exp(-j2*pi*k*(L_cp + m_p + l)/(MN)).
inline LtvChannel reconstruct_channel(const EstimatedChannel& est, const FrameConfig& f, const PilotConfig& pc)
{
    if (est.empty()) throw std::invalid_argument("reconstruct_channel: empty channel estimate");
    const auto mn = static_cast<long long>(f.size());
    std::vector<ChannelTap> taps;
    for (const auto& t : est.taps) {
        const long long pos = static_cast<long long>(f.cp + pc.m_p + t.delay);
        const Complex back = unit_phase(-t.doppler * pos, mn);
        taps.push_back({t.delay, t.gain * back, static_cast<double>(t.doppler), std::norm(t.gain)});
    }
    return {f, std::move(taps)};
}

inline DdChannelMatrix reconstruct_dd_matrix(const EstimatedChannel& est, const FrameConfig& f, const PilotConfig& pc,
                                             Waveform w)
{
    return build_dd_matrix(reconstruct_channel(est, f, pc), w);
}

} // namespace ddmux
