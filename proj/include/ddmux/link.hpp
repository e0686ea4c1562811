#pragma once

// One embedded-pilot frame end to end: map bits, add the pilot, modulate,
// propagate with timing/carrier offsets and noise, synchronize, correct,
// demodulate, estimate the channel, equalize and count errors.
//
// All randomness comes in through LinkRealization, so two waveforms run on
// the same realization see the same channel, offsets, bits and noise.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "ddmux/chanest.hpp"
#include "ddmux/channel.hpp"
#include "ddmux/constellation.hpp"
#include "ddmux/equalizer.hpp"
#include "ddmux/modem.hpp"
#include "ddmux/sync.hpp"

namespace ddmux {

enum class CsiMode { Estimated, Perfect };
enum class EqMethod { Mmse, Iterative };

inline CsiMode parse_csi_mode(std::string_view s)
{
    if (s == "estimated") return CsiMode::Estimated;
    if (s == "perfect") return CsiMode::Perfect;
    throw std::invalid_argument("unknown CSI mode: " + std::string(s));
}

inline EqMethod parse_eq_method(std::string_view s)
{
    if (s == "mmse") return EqMethod::Mmse;
    if (s == "iterative") return EqMethod::Iterative;
    throw std::invalid_argument("unknown equalizer: " + std::string(s));
}

struct LinkSettings {
    FrameConfig frame;
    Constellation constellation = Constellation::QAM16;
    PilotConfig pilot;
    bool sync_enabled = true;
    SyncSettings sync;             ///< m_p / n_p are taken from `pilot`
    CsiMode csi = CsiMode::Estimated;
    EqMethod eq = EqMethod::Iterative;
    std::size_t max_iter = 500;
    double tol = 1e-10;

    static LinkSettings defaults(const FrameConfig& f)
    {
        LinkSettings s;
        s.frame = f;
        s.pilot = PilotConfig::centred(f);
        s.sync.threshold = 0.5;
        return s;
    }

    OverlayMask mask() const { return pilot_mask(frame, pilot); }
    std::size_t data_symbols() const { return mask().data_count(); }
    std::size_t data_bits() const { return data_symbols() * bits_per_symbol(constellation); }

    /// Zero samples appended after the frame so that any timing estimate
    /// the synchronizer can return still leaves a whole frame in the record.
    std::size_t record_padding() const { return frame.M * (sync.max_theta_t + 1); }

    /// Mean transmitted power per sample with unit-energy data symbols.
    double signal_power() const
    {
        return (static_cast<double>(data_symbols()) + pilot.rho_p) / static_cast<double>(frame.size());
    }

    /// Noise variance for an SNR in dB (infinite SNR gives zero).
    double noise_variance(double snr_db) const
    {
        if (std::isinf(snr_db) && snr_db > 0) return 0.0;
        return signal_power() / std::pow(10.0, snr_db / 10.0);
    }
};

struct LinkRealization {
    LtvChannel channel;
    Impairments impair;
    std::vector<std::uint8_t> bits;
    CVector unit_noise; ///< CN(0, 1) samples, scaled by the SNR; may be longer than needed
};

struct LinkOutcome {
    std::size_t bits = 0;
    std::size_t bit_errors = 0;
    std::vector<unsigned> decisions; ///< hard-decision labels on the data bins
    std::optional<SyncEstimate> sync;
    long long theta_hat = 0;
    double epsilon_hat = 0.0;
    bool estimate_empty = false;
    std::size_t iterations = 0;
};

/// Length of the received record for a realization.
inline std::size_t record_length(const LinkSettings& s, const Impairments& imp)
{
    return s.frame.frame_length() + s.record_padding() + imp.theta(s.frame.M);
}

/// Transmit grid: mapped data around the pilot.
inline DelayDopplerGrid link_grid(const LinkSettings& s, const std::vector<std::uint8_t>& bits)
{
    const OverlayMask mask = s.mask();
    return embed_pilot(map_bits(bits, s.constellation, s.frame, &mask), s.pilot);
}

/// Received record (frame, padding, offsets, channel and noise).
inline CVector link_received(const LinkSettings& s, const LinkRealization& rz, Waveform w, double noise_variance)
{
    const auto& f = s.frame;
    CVector x = CVector::Zero(static_cast<Eigen::Index>(f.frame_length() + s.record_padding()));
    x.head(static_cast<Eigen::Index>(f.frame_length())) = modulate(link_grid(s, rz.bits), w).samples;
    CVector r = propagate(x, rz.channel, rz.impair);
    if (noise_variance > 0.0) {
        if (rz.unit_noise.size() < r.size()) throw ShapeError("link: noise realization shorter than the record");
        r += std::sqrt(noise_variance) * rz.unit_noise.head(r.size());
    }
    return r;
}

namespace detail {

// Solves for the data bins of y - H p, p the pilot-only grid.
template <LinearOperator Op>
CVector detect_data(const Op& h, const CVector& y, const LinkSettings& s, double noise_variance, std::size_t* iters)
{
    DelayDopplerGrid pilot_only(s.frame);
    pilot_only(s.pilot.m_p, s.pilot.n_p) = std::sqrt(s.pilot.rho_p);
    const CVector y_data = y - h.apply(pilot_only.vec());
    const ColumnSubset<Op> sub(h, s.mask().data_indices());
    if (s.eq == EqMethod::Iterative) {
        const auto res = equalize_iterative(y_data, sub, noise_variance, s.max_iter, s.tol);
        if (iters) *iters = res.iterations;
        return res.x;
    }
    CMatrix dense(sub.rows(), sub.cols());
    CVector unit = CVector::Zero(sub.cols());
    for (Eigen::Index j = 0; j < sub.cols(); ++j) {
        unit[j] = 1.0;
        dense.col(j) = sub.apply(unit);
        unit[j] = 0.0;
    }
    return mmse_solve(dense, y_data, noise_variance);
}

} // namespace detail

/// Runs the receiver on one realization.
///
/// Perfect CSI means genie timing and CFO plus the true channel. Estimated
/// CSI runs the synchronizer (if enabled), the pilot estimator and uses the
/// measured noise level for the MMSE weighting.
inline LinkOutcome run_link(const LinkSettings& s, const LinkRealization& rz, Waveform w, double noise_variance)
{
    const auto& f = s.frame;
    LinkOutcome out;
    const CVector r = link_received(s, rz, w, noise_variance);

    const long long theta = static_cast<long long>(rz.impair.theta(f.M));
    out.theta_hat = theta;
    out.epsilon_hat = rz.impair.epsilon;
    if (s.sync_enabled && s.csi == CsiMode::Estimated) {
        SyncSettings ss = s.sync;
        ss.m_p = s.pilot.m_p;
        ss.n_p = s.pilot.n_p;
        out.sync = synchronize(r, f, ss);
        out.theta_hat = out.sync->theta(f.M);
        out.epsilon_hat = out.sync->epsilon_hat;
    }
    const DelayDopplerGrid y = demodulate(correct(r, f, out.theta_hat, out.epsilon_hat), w);

    DelayDopplerGrid d_hat(f);
    const OverlayMask mask = s.mask();
    const auto data_idx = mask.data_indices();
    if (s.csi == CsiMode::Perfect) {
        const DdChannelOperator h(rz.channel.time_shifted(theta), w);
        const CVector x = detail::detect_data(h, y.vec(), s, noise_variance, &out.iterations);
        for (std::size_t i = 0; i < data_idx.size(); ++i) d_hat.symbols.data()[data_idx[i]] = x[static_cast<Eigen::Index>(i)];
    } else {
        const double sigma = estimate_noise_std(y, s.pilot);
        const auto est = estimate_channel(y, s.pilot, sigma, w);
        if (est.empty()) {
            out.estimate_empty = true;
            d_hat = y;
        } else {
            const DdChannelOperator h(reconstruct_channel(est, f, s.pilot), w);
            const CVector x = detail::detect_data(h, y.vec(), s, sigma * sigma, &out.iterations);
            for (std::size_t i = 0; i < data_idx.size(); ++i) d_hat.symbols.data()[data_idx[i]] = x[static_cast<Eigen::Index>(i)];
        }
    }

    out.decisions = decide_symbols(d_hat, s.constellation, &mask);
    const auto rx_bits = demap_bits(d_hat, s.constellation, &mask);
    out.bits = rx_bits.size();
    for (std::size_t i = 0; i < rx_bits.size(); ++i) out.bit_errors += rx_bits[i] != rz.bits[i];
    return out;
}

} // namespace ddmux
