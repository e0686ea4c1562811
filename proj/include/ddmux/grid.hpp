#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ddmux/core.hpp"

namespace ddmux {

enum class Waveform { OTFS, SC_IFDMA };

inline std::string_view to_string(Waveform w) { return w == Waveform::OTFS ? "OTFS" : "SC_IFDMA"; }

inline Waveform parse_waveform(std::string_view s)
{
    if (s == "OTFS" || s == "otfs") return Waveform::OTFS;
    if (s == "SC_IFDMA" || s == "sc_ifdma" || s == "sc-ifdma" || s == "scifdma") return Waveform::SC_IFDMA;
    throw std::invalid_argument("unknown waveform '" + std::string(s) + "'");
}

/// M x N symbol matrix on the delay-Doppler grid; rows are delay bins,
/// columns Doppler bins. vec() stacks columns, so symbol (m, n) sits at
/// index m + n*M.
struct DelayDopplerGrid {
    FrameConfig frame;
    CMatrix symbols;

    DelayDopplerGrid() = default;

    explicit DelayDopplerGrid(const FrameConfig& f)
        : frame(f), symbols(CMatrix::Zero(static_cast<Eigen::Index>(f.M), static_cast<Eigen::Index>(f.N)))
    {
    }

    DelayDopplerGrid(const FrameConfig& f, CMatrix s) : frame(f), symbols(std::move(s))
    {
        if (static_cast<std::size_t>(symbols.rows()) != f.M || static_cast<std::size_t>(symbols.cols()) != f.N)
            throw ShapeError("DelayDopplerGrid: symbol matrix is " + std::to_string(symbols.rows()) + "x" +
                             std::to_string(symbols.cols()) + ", frame wants " + std::to_string(f.M) + "x" +
                             std::to_string(f.N));
    }

    static DelayDopplerGrid from_vec(const FrameConfig& f, const CVector& v)
    {
        require_length(static_cast<std::size_t>(v.size()), f.size(), "DelayDopplerGrid::from_vec");
        return {f, Eigen::Map<const CMatrix>(v.data(), static_cast<Eigen::Index>(f.M), static_cast<Eigen::Index>(f.N))};
    }

    CVector vec() const { return Eigen::Map<const CVector>(symbols.data(), symbols.size()); }

    Complex& operator()(std::size_t m, std::size_t n)
    {
        return symbols(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    }
    Complex operator()(std::size_t m, std::size_t n) const
    {
        return symbols(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    }

    double energy() const { return symbols.squaredNorm(); }
};

enum class BinKind : std::uint8_t { Data, Pilot, Guard };

/// Per-bin role overlay (data, pilot or guard) for one frame.
class OverlayMask {
public:
    OverlayMask() = default;
    explicit OverlayMask(const FrameConfig& f) : M_(f.M), N_(f.N), kinds_(f.size(), BinKind::Data) {}

    std::size_t rows() const { return M_; }
    std::size_t cols() const { return N_; }

    BinKind at(std::size_t m, std::size_t n) const { return kinds_[m + n * M_]; }
    void set(std::size_t m, std::size_t n, BinKind k) { kinds_[m + n * M_] = k; }

    /// Column-major indices of the data bins, in increasing order.
    std::vector<std::size_t> data_indices() const
    {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < kinds_.size(); ++i)
            if (kinds_[i] == BinKind::Data) out.push_back(i);
        return out;
    }

    std::size_t data_count() const
    {
        std::size_t c = 0;
        for (auto k : kinds_) c += k == BinKind::Data;
        return c;
    }

private:
    std::size_t M_ = 0;
    std::size_t N_ = 0;
    std::vector<BinKind> kinds_;
};

} // namespace ddmux
