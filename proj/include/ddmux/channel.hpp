#pragma once

// Linear time-varying multipath channel on the sample grid, cyclic-prefix
// bookkeeping, AWGN, and the exact delay-Doppler equivalent channel
// matrices of both waveforms.
//
// A channel is a sparse list of taps. Tap i contributes
//     h_i * exp(j*2*pi*k_i*kappa/(MN)) * x[kappa - l_i]
// to received sample kappa, i.e. a pure delay l_i (samples), complex gain
// h_i and a Doppler shift of k_i Doppler bins (cycles per MN samples).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddmux/core.hpp"
#include "ddmux/grid.hpp"
#include "ddmux/modem.hpp"

namespace ddmux {

inline constexpr double speed_of_light = 299792458.0;

struct ChannelTap {
    std::size_t delay = 0;  ///< samples
    Complex gain{1.0, 0.0};
    double doppler = 0.0;   ///< Doppler bins; may be fractional
    double power = 1.0;     ///< average power of the tap in its profile
};

/// Timing and carrier offsets of the received frame.
///
/// theta = theta_d + M*theta_t samples of delay, epsilon Doppler bins of
/// frequency offset applied on the absolute received sample index.
struct Impairments {
    std::size_t theta_d = 0;
    std::size_t theta_t = 0;
    double epsilon = 0.0;

    std::size_t theta(std::size_t M) const { return theta_d + M * theta_t; }
    bool none() const { return theta_d == 0 && theta_t == 0 && epsilon == 0.0; }
};

class LtvChannel {
public:
    LtvChannel(const FrameConfig& frame, std::vector<ChannelTap> taps) : frame_(frame), taps_(std::move(taps))
    {
        if (taps_.empty()) throw std::invalid_argument("LtvChannel: at least one tap is required");
    }

    static LtvChannel identity(const FrameConfig& frame) { return {frame, {ChannelTap{}}}; }

    const FrameConfig& frame() const { return frame_; }
    const std::vector<ChannelTap>& taps() const { return taps_; }

    /// L_ch = 1 + largest tap delay.
    std::size_t length() const
    {
        std::size_t l = 0;
        for (const auto& t : taps_) l = std::max(l, t.delay);
        return l + 1;
    }

    bool fits_cp() const { return length() <= frame_.cp; }

    /// Time-varying gain of tap i at absolute sample kappa.
    Complex tap_gain(std::size_t i, long long kappa) const
    {
        const auto& t = taps_[i];
        const double angle = two_pi * t.doppler * static_cast<double>(kappa) / static_cast<double>(frame_.size());
        return t.gain * Complex{std::cos(angle), std::sin(angle)};
    }

    /// h[l, kappa].
    Complex response(std::size_t delay, long long kappa) const
    {
        Complex acc{0.0, 0.0};
        for (std::size_t i = 0; i < taps_.size(); ++i)
            if (taps_[i].delay == delay) acc += tap_gain(i, kappa);
        return acc;
    }

    /// The same channel observed from a time origin shifted by offset
    /// samples: h'[l, kappa] = h[l, kappa + offset].
    LtvChannel time_shifted(long long offset) const
    {
        auto taps = taps_;
        for (std::size_t i = 0; i < taps.size(); ++i) taps[i].gain = tap_gain(i, offset);
        return {frame_, std::move(taps)};
    }

    /// Adds a common Doppler shift to every tap (a residual CFO).
    LtvChannel doppler_shifted(double bins) const
    {
        auto taps = taps_;
        for (auto& t : taps) t.doppler += bins;
        return {frame_, std::move(taps)};
    }

private:
    FrameConfig frame_;
    std::vector<ChannelTap> taps_;
};

struct NoiseSpec {
    double variance = 0.0;
    std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Power-delay profiles

struct ProfileTap {
    double delay_ns = 0.0;
    double power_db = 0.0;
    std::optional<double> doppler_hz;    ///< fixed shift; otherwise drawn from the velocity
    std::optional<std::size_t> delay_samples; ///< overrides delay_ns when set
};

enum class Fading { Rayleigh, FixedMagnitude };
enum class DopplerGrid { Continuous, OnGrid };

struct ChannelProfile {
    std::string name;
    std::vector<ProfileTap> taps;
    Fading fading = Fading::Rayleigh;
};

/// 3GPP extended vehicular A profile (9 taps).
inline ChannelProfile eva_profile()
{
    return {"eva",
            {{0, 0.0},
             {30, -1.5},
             {150, -1.4},
             {310, -3.6},
             {370, -0.6},
             {710, -9.1},
             {1090, -7.0},
             {1730, -12.0},
             {2510, -16.9}},
            Fading::Rayleigh};
}

/// The first four EVA taps (delays up to 310 ns). At 7.68 MHz they land on
/// sample delays {0, 0, 1, 2}, a three-tap channel short enough for a
/// desk-scale frame.
inline ChannelProfile eva3_profile()
{
    auto p = eva_profile();
    p.name = "eva3";
    p.taps.resize(4);
    return p;
}

/// Two static taps three samples apart, the later one stronger
/// (powers 0.4 / 0.6). Pulls a max-peak timing estimator late by 3 samples.
inline ChannelProfile two_tap_profile()
{
    ChannelProfile p{"two_tap", {}, Fading::FixedMagnitude};
    p.taps.push_back({0.0, 10.0 * std::log10(0.4), 0.0, 0});
    p.taps.push_back({0.0, 10.0 * std::log10(0.6), 0.0, 3});
    return p;
}

inline ChannelProfile identity_profile()
{
    return {"identity", {{0.0, 0.0, 0.0, 0}}, Fading::FixedMagnitude};
}

inline std::vector<std::string> builtin_profile_names() { return {"identity", "two_tap", "eva3", "eva"}; }

inline ChannelProfile builtin_profile(const std::string& name)
{
    if (name == "eva") return eva_profile();
    if (name == "eva3") return eva3_profile();
    if (name == "two_tap") return two_tap_profile();
    if (name == "identity") return identity_profile();
    throw std::invalid_argument("unknown channel profile '" + name + "'");
}

/// Maximum Doppler shift in Hz for a relative speed in km/h.
inline double max_doppler_hz(double velocity_kmh, double carrier_hz)
{
    return carrier_hz * (velocity_kmh / 3.6) / speed_of_light;
}

/// Draws one realization of a profile.
///
/// Delays are rounded to the sample grid, average powers normalized to unit
/// total. Rayleigh taps get CN(0, p) gains, fixed-magnitude taps sqrt(p)
/// with a uniform phase. A tap without a fixed Doppler gets
/// nu_max*cos(phi), phi ~ U[0, 2pi). With DopplerGrid::OnGrid every shift
/// is rounded to the nearest Doppler bin.
inline LtvChannel draw_channel(const FrameConfig& frame, const ChannelProfile& profile, double velocity_kmh,
                               Rng& rng, DopplerGrid grid = DopplerGrid::Continuous)
{
    if (velocity_kmh < 0.0) throw std::invalid_argument("draw_channel: negative velocity");
    if (profile.taps.empty()) throw std::invalid_argument("draw_channel: empty profile");
    double total = 0.0;
    for (const auto& t : profile.taps) total += std::pow(10.0, t.power_db / 10.0);

    const double nu_max = max_doppler_hz(velocity_kmh, frame.carrier_hz);
    const double dnu = frame.doppler_spacing();
    std::uniform_real_distribution<double> uniform_angle(0.0, two_pi);

    std::vector<ChannelTap> taps;
    for (const auto& pt : profile.taps) {
        ChannelTap tap;
        tap.delay = pt.delay_samples ? *pt.delay_samples
                                     : static_cast<std::size_t>(std::llround(pt.delay_ns * 1e-9 * frame.bandwidth_hz));
        tap.power = std::pow(10.0, pt.power_db / 10.0) / total;
        if (profile.fading == Fading::Rayleigh) {
            tap.gain = complex_gaussian(rng, tap.power);
        } else {
            const double phase = uniform_angle(rng);
            tap.gain = std::sqrt(tap.power) * Complex{std::cos(phase), std::sin(phase)};
        }
        double nu = 0.0;
        if (pt.doppler_hz) {
            nu = *pt.doppler_hz;
        } else {
            const double phi = uniform_angle(rng);
            nu = nu_max * std::cos(phi);
        }
        tap.doppler = nu / dnu;
        if (grid == DopplerGrid::OnGrid) tap.doppler = std::round(tap.doppler);
        taps.push_back(tap);
    }
    return {frame, std::move(taps)};
}

/// EVA realization at the given speed and carrier (the frame's carrier is
/// overridden by carrier_hz).
inline LtvChannel eva_channel(FrameConfig frame, double velocity_kmh, double carrier_hz, std::uint64_t seed)
{
    frame.carrier_hz = carrier_hz;
    Rng rng(seed);
    return draw_channel(frame, eva_profile(), velocity_kmh, rng);
}

// ---------------------------------------------------------------------------
// Time-domain propagation

/// Noiseless received record
///     r[kappa] = exp(j2*pi*eps*kappa/(MN)) * sum_l h[l,kappa] x[kappa-l-theta]
/// for kappa in [0, len(x) + theta); x is zero outside its support.
inline CVector propagate(const CVector& x, const LtvChannel& ch, const Impairments& impair = {})
{
    const auto& f = ch.frame();
    const auto theta = static_cast<long long>(impair.theta(f.M));
    const auto len = x.size() + theta;
    const auto mn = static_cast<double>(f.size());
    CVector r = CVector::Zero(len);
    for (std::size_t i = 0; i < ch.taps().size(); ++i) {
        const auto shift = static_cast<long long>(ch.taps()[i].delay) + theta;
        for (long long k = std::max<long long>(shift, 0); k < len; ++k) {
            const long long src = k - shift;
            if (src >= x.size()) break;
            r[k] += ch.tap_gain(i, k) * x[src];
        }
    }
    if (impair.epsilon != 0.0) {
        for (long long k = 0; k < len; ++k) {
            const double angle = two_pi * impair.epsilon * static_cast<double>(k) / mn;
            r[k] *= Complex{std::cos(angle), std::sin(angle)};
        }
    }
    return r;
}

/// Independent CN(0, variance) samples from the spec's seed.
inline CVector draw_noise(std::size_t length, const NoiseSpec& noise)
{
    if (noise.variance < 0.0) throw std::invalid_argument("NoiseSpec: negative variance");
    CVector eta = CVector::Zero(static_cast<Eigen::Index>(length));
    if (noise.variance == 0.0) return eta;
    Rng rng(noise.seed);
    for (Eigen::Index k = 0; k < eta.size(); ++k) eta[k] = complex_gaussian(rng, noise.variance);
    return eta;
}

/// Passes a transmitted frame through the channel, impairments and AWGN.
/// The result has len(x) + theta samples and still carries the prefix;
/// with theta > 0 it must be re-aligned (sync::correct) before demodulation.
inline TimeSignal apply_channel(const TimeSignal& sig, const LtvChannel& ch, const NoiseSpec& noise,
                                const Impairments& impair = {})
{
    CVector r = propagate(sig.samples, ch, impair);
    if (noise.variance > 0.0) r += draw_noise(static_cast<std::size_t>(r.size()), noise);
    return {sig.frame, std::move(r), sig.with_cp};
}

/// R_cp H A_cp s: one frame body through the channel, prefix added and
/// removed, perfect timing.
inline CVector apply_frame_channel(const CVector& body, const LtvChannel& ch)
{
    const auto& f = ch.frame();
    require_length(static_cast<std::size_t>(body.size()), f.size(), "apply_frame_channel");
    const CVector r = propagate(add_cp(body, f.cp), ch);
    return r.tail(static_cast<Eigen::Index>(f.size()));
}

// ---------------------------------------------------------------------------
// Explicit matrices

/// A_cp = [G_cp; I_MN], (MN + cp) x MN.
inline CMatrix cp_addition_matrix(const FrameConfig& f)
{
    const auto mn = static_cast<Eigen::Index>(f.size());
    const auto cp = static_cast<Eigen::Index>(f.cp);
    CMatrix a = CMatrix::Zero(mn + cp, mn);
    for (Eigen::Index i = 0; i < cp; ++i) a(i, mn - cp + i) = 1.0;
    a.bottomRows(mn).setIdentity();
    return a;
}

/// R_cp = [0, I_MN], MN x (MN + cp).
inline CMatrix cp_removal_matrix(const FrameConfig& f)
{
    const auto mn = static_cast<Eigen::Index>(f.size());
    const auto cp = static_cast<Eigen::Index>(f.cp);
    CMatrix r = CMatrix::Zero(mn, mn + cp);
    r.rightCols(mn).setIdentity();
    return r;
}

/// Delay-time channel matrix, [H]_{i,j} = h[i - j, i], size MN + cp.
inline CMatrix ltv_matrix(const LtvChannel& ch)
{
    const auto len = static_cast<Eigen::Index>(ch.frame().frame_length());
    CMatrix h = CMatrix::Zero(len, len);
    for (std::size_t t = 0; t < ch.taps().size(); ++t) {
        const auto d = static_cast<Eigen::Index>(ch.taps()[t].delay);
        for (Eigen::Index i = d; i < len; ++i) h(i, i - d) += ch.tap_gain(t, i);
    }
    return h;
}

/// Equivalent channel seen between modulator input and demodulator output.
struct DdChannelMatrix {
    CMatrix matrix;
    Waveform waveform = Waveform::OTFS;
};

/// H_DD for the given waveform, assembled column by column: unit grid j is
/// modulated, passed through R_cp H A_cp and demodulated.
inline DdChannelMatrix build_dd_matrix(const LtvChannel& ch, Waveform w)
{
    const auto& f = ch.frame();
    const auto mn = static_cast<Eigen::Index>(f.size());
    DdChannelMatrix out{CMatrix(mn, mn), w};
    CVector unit = CVector::Zero(mn);
    for (Eigen::Index j = 0; j < mn; ++j) {
        unit.setZero();
        unit[j] = 1.0;
        const CVector body = modulate_direct_body(DelayDopplerGrid::from_vec(f, unit), w);
        const TimeSignal rx{f, apply_frame_channel(body, ch), false};
        out.matrix.col(j) = demodulate_direct(rx, w).vec();
    }
    return out;
}

/// Matrix-free H_DD in sparse tap form: forward and adjoint each cost two
/// modem passes plus O(MN * taps).
class DdChannelOperator {
public:
    DdChannelOperator(const LtvChannel& ch, Waveform w) : frame_(ch.frame()), waveform_(w)
    {
        const std::size_t mn = frame_.size();
        for (std::size_t t = 0; t < ch.taps().size(); ++t) {
            Path p;
            p.delay = ch.taps()[t].delay;
            p.gains.resize(static_cast<Eigen::Index>(mn));
            for (std::size_t k = 0; k < mn; ++k)
                p.gains[static_cast<Eigen::Index>(k)] = ch.tap_gain(t, static_cast<long long>(frame_.cp + k));
            paths_.push_back(std::move(p));
        }
    }

    Eigen::Index rows() const { return static_cast<Eigen::Index>(frame_.size()); }
    Eigen::Index cols() const { return rows(); }
    const FrameConfig& frame() const { return frame_; }
    Waveform waveform() const { return waveform_; }

    CVector apply(const CVector& d) const
    {
        const CVector s = modulate_direct_body(DelayDopplerGrid::from_vec(frame_, d), waveform_);
        const TimeSignal rx{frame_, time_channel(s, false), false};
        return demodulate_direct(rx, waveform_).vec();
    }

    CVector apply_adjoint(const CVector& y) const
    {
        const CVector s = modulate_direct_body(DelayDopplerGrid::from_vec(frame_, y), waveform_);
        const TimeSignal rx{frame_, time_channel(s, true), false};
        return demodulate_direct(rx, waveform_).vec();
    }

private:
    struct Path {
        std::size_t delay;
        CVector gains; // h_i at kappa = cp + k
    };

    // R_cp H A_cp (adjoint = false) or its Hermitian transpose.
    CVector time_channel(const CVector& in, bool adjoint) const
    {
        const auto mn = static_cast<long long>(frame_.size());
        const auto cp = static_cast<long long>(frame_.cp);
        CVector out = CVector::Zero(mn);
        for (const auto& p : paths_) {
            for (long long k = 0; k < mn; ++k) {
                const long long pos = cp + k - static_cast<long long>(p.delay);
                if (pos < 0) continue;
                const long long src = ((pos - cp) % mn + mn) % mn;
                if (adjoint)
                    out[src] += std::conj(p.gains[k]) * in[k];
                else
                    out[k] += p.gains[k] * in[src];
            }
        }
        return out;
    }

    FrameConfig frame_;
    Waveform waveform_;
    std::vector<Path> paths_;
};

/// Monte-Carlo received grid together with the exact linear model that
/// explains it: vec(received) = H_DD vec(D) + vec(noise).
struct LinearizedLink {
    DelayDopplerGrid received;
    DdChannelMatrix channel;
    DelayDopplerGrid noise;
};

inline LinearizedLink linearized_io(const DelayDopplerGrid& grid, const LtvChannel& ch, const NoiseSpec& noise,
                                    Waveform w)
{
    const auto& f = grid.frame;
    const TimeSignal tx = modulate(grid, w);
    const TimeSignal rx = apply_channel(tx, ch, noise);
    const CVector eta = draw_noise(f.frame_length(), noise);
    return {demodulate(rx, w), build_dd_matrix(ch, w), demodulate(TimeSignal{f, eta, true}, w)};
}

} // namespace ddmux
