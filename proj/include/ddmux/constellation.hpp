#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ddmux/core.hpp"
#include "ddmux/grid.hpp"

namespace ddmux {

enum class Constellation { QPSK, QAM16 };

inline std::size_t bits_per_symbol(Constellation c) { return c == Constellation::QPSK ? 2 : 4; }

inline Constellation parse_constellation(std::string_view s)
{
    if (s == "qpsk" || s == "QPSK") return Constellation::QPSK;
    if (s == "16qam" || s == "16QAM" || s == "qam16") return Constellation::QAM16;
    throw std::invalid_argument("unknown constellation '" + std::string(s) + "'");
}

/// Gray-mapped, unit average energy points indexed by their bit label
/// (first bit is the MSB of the index).
///
/// Bit layout follows the usual LTE convention: b0/b1 pick the I/Q sign
/// (0 -> +), and for 16-QAM b2/b3 pick the I/Q magnitude (0 -> 1, 1 -> 3).
inline std::vector<Complex> constellation_points(Constellation c)
{
    std::vector<Complex> pts;
    if (c == Constellation::QPSK) {
        const double a = 1.0 / std::sqrt(2.0);
        for (unsigned label = 0; label < 4; ++label) {
            const double i = (label & 2) ? -a : a;
            const double q = (label & 1) ? -a : a;
            pts.emplace_back(i, q);
        }
        return pts;
    }
    const double s = 1.0 / std::sqrt(10.0);
    for (unsigned label = 0; label < 16; ++label) {
        const unsigned b0 = (label >> 3) & 1, b1 = (label >> 2) & 1, b2 = (label >> 1) & 1, b3 = label & 1;
        const double i = (b0 ? -1.0 : 1.0) * (b2 ? 3.0 : 1.0);
        const double q = (b1 ? -1.0 : 1.0) * (b3 ? 3.0 : 1.0);
        pts.emplace_back(i * s, q * s);
    }
    return pts;
}

/// Minimum-distance decision; returns the bit label of the nearest point.
inline unsigned decide_symbol(Complex y, Constellation c)
{
    // Separable per-axis slicing is exact for these square constellations.
    if (c == Constellation::QPSK) return (y.real() < 0 ? 2u : 0u) | (y.imag() < 0 ? 1u : 0u);
    const double t = 2.0 / std::sqrt(10.0);
    const unsigned b0 = y.real() < 0, b1 = y.imag() < 0;
    const unsigned b2 = std::abs(y.real()) > t, b3 = std::abs(y.imag()) > t;
    return (b0 << 3) | (b1 << 2) | (b2 << 1) | b3;
}

namespace detail {

inline std::vector<std::size_t> data_slots(const FrameConfig& f, const OverlayMask* mask)
{
    if (mask == nullptr) {
        std::vector<std::size_t> all(f.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        return all;
    }
    if (mask->rows() != f.M || mask->cols() != f.N) throw ShapeError("overlay mask does not match frame");
    return mask->data_indices();
}

} // namespace detail

/// Places Gray-mapped symbols on the data bins of a frame, in column-major
/// order. Pilot and guard bins of the mask are left at zero.
inline DelayDopplerGrid map_bits(std::span<const std::uint8_t> bits, Constellation c, const FrameConfig& f,
                                 const OverlayMask* mask = nullptr)
{
    const auto slots = detail::data_slots(f, mask);
    const std::size_t bps = bits_per_symbol(c);
    require_length(bits.size(), slots.size() * bps, "map_bits");
    const auto pts = constellation_points(c);
    DelayDopplerGrid grid(f);
    CVector v = CVector::Zero(static_cast<Eigen::Index>(f.size()));
    for (std::size_t s = 0; s < slots.size(); ++s) {
        unsigned label = 0;
        for (std::size_t b = 0; b < bps; ++b) label = (label << 1) | (bits[s * bps + b] & 1u);
        v[static_cast<Eigen::Index>(slots[s])] = pts[label];
    }
    return DelayDopplerGrid::from_vec(f, v);
}

/// Hard-decision symbol labels on the data bins.
inline std::vector<unsigned> decide_symbols(const DelayDopplerGrid& grid, Constellation c,
                                            const OverlayMask* mask = nullptr)
{
    const auto slots = detail::data_slots(grid.frame, mask);
    const CVector v = grid.vec();
    std::vector<unsigned> out(slots.size());
    for (std::size_t s = 0; s < slots.size(); ++s) out[s] = decide_symbol(v[static_cast<Eigen::Index>(slots[s])], c);
    return out;
}

inline std::vector<std::uint8_t> demap_bits(const DelayDopplerGrid& grid, Constellation c,
                                            const OverlayMask* mask = nullptr)
{
    const auto labels = decide_symbols(grid, c, mask);
    const std::size_t bps = bits_per_symbol(c);
    std::vector<std::uint8_t> bits(labels.size() * bps);
    for (std::size_t s = 0; s < labels.size(); ++s)
        for (std::size_t b = 0; b < bps; ++b) bits[s * bps + b] = (labels[s] >> (bps - 1 - b)) & 1u;
    return bits;
}

} // namespace ddmux
