#pragma once

// Uplink multiple access on the delay-Doppler grid.
//
// User q owns the delay bins U_tau^q and the Doppler bins U_nu^q; its
// M_q x N_q symbol matrix is placed at D[U_tau^q[i], U_nu^q[j]], i.e.
// vec(D_q) = Gamma^q y_q with Gamma^q = (Gamma_nu^q)^T kron Gamma_tau^q.
// Every user's frame passes through its own channel and the base station
// receives the sum, so
//     d~ = sum_q H^q Gamma^q y_q = H (sum_q Gamma^q y_q),
//     H  = sum_q H^q Gamma^q (Gamma^q)^T,
// which is the MN x MN compound matrix kept here. Its restriction to the
// allocated columns is the matrix a detector inverts.

#include <algorithm>
#include <cstddef>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddmux/channel.hpp"
#include "ddmux/core.hpp"
#include "ddmux/grid.hpp"
#include "ddmux/modem.hpp"

namespace ddmux {

struct UserBins {
    std::vector<std::size_t> delay;   ///< U_tau, in placement order
    std::vector<std::size_t> doppler; ///< U_nu, in placement order

    std::size_t rows() const { return delay.size(); }
    std::size_t cols() const { return doppler.size(); }
    std::size_t size() const { return rows() * cols(); }
};

class AllocationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class Allocation {
public:
    /// strict: users must not share a delay bin nor a Doppler bin. Relaxed:
    /// only the delay-Doppler bins (pairs) must be distinct.
    Allocation(const FrameConfig& frame, std::vector<UserBins> users, bool strict = true)
        : frame_(frame), users_(std::move(users)), strict_(strict)
    {
        validate();
    }

    /// One user on the whole grid in natural order.
    static Allocation full(const FrameConfig& f)
    {
        UserBins u;
        for (std::size_t m = 0; m < f.M; ++m) u.delay.push_back(m);
        for (std::size_t n = 0; n < f.N; ++n) u.doppler.push_back(n);
        return {f, {u}};
    }

    const FrameConfig& frame() const { return frame_; }
    std::size_t users() const { return users_.size(); }
    const UserBins& user(std::size_t q) const { return users_.at(q); }
    bool strict() const { return strict_; }

    /// Grid index (column-major) of every entry of y_q, in vec order.
    std::vector<std::size_t> grid_indices(std::size_t q) const
    {
        const auto& u = user(q);
        std::vector<std::size_t> out;
        out.reserve(u.size());
        for (auto n : u.doppler)
            for (auto m : u.delay) out.push_back(m + n * frame_.M);
        return out;
    }

    /// grid_indices of all users, concatenated in user order.
    std::vector<std::size_t> active_indices() const
    {
        std::vector<std::size_t> out;
        for (std::size_t q = 0; q < users(); ++q) {
            const auto idx = grid_indices(q);
            out.insert(out.end(), idx.begin(), idx.end());
        }
        return out;
    }

    CMatrix gamma_tau(std::size_t q) const
    {
        const auto& u = user(q);
        CMatrix g = CMatrix::Zero(static_cast<Eigen::Index>(frame_.M), static_cast<Eigen::Index>(u.rows()));
        for (std::size_t i = 0; i < u.rows(); ++i) g(static_cast<Eigen::Index>(u.delay[i]), static_cast<Eigen::Index>(i)) = 1.0;
        return g;
    }

    CMatrix gamma_nu(std::size_t q) const
    {
        const auto& u = user(q);
        CMatrix g = CMatrix::Zero(static_cast<Eigen::Index>(u.cols()), static_cast<Eigen::Index>(frame_.N));
        for (std::size_t j = 0; j < u.cols(); ++j) g(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(u.doppler[j])) = 1.0;
        return g;
    }

    /// Gamma^q as an MN x (M_q N_q) selection matrix.
    CMatrix gamma(std::size_t q) const
    {
        const auto idx = grid_indices(q);
        CMatrix g = CMatrix::Zero(static_cast<Eigen::Index>(frame_.size()), static_cast<Eigen::Index>(idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i) g(static_cast<Eigen::Index>(idx[i]), static_cast<Eigen::Index>(i)) = 1.0;
        return g;
    }

private:
    void validate() const
    {
        if (users_.empty()) throw AllocationError("allocation: no users");
        std::vector<int> delay_owner(frame_.M, -1), doppler_owner(frame_.N, -1), bin_owner(frame_.size(), -1);
        for (std::size_t q = 0; q < users_.size(); ++q) {
            const auto& u = users_[q];
            const std::string who = "allocation: user " + std::to_string(q);
            if (u.delay.empty() || u.doppler.empty()) throw AllocationError(who + " has no bins");
            std::vector<bool> seen_m(frame_.M, false), seen_n(frame_.N, false);
            for (auto m : u.delay) {
                if (m >= frame_.M) throw AllocationError(who + ": delay bin " + std::to_string(m) + " outside the grid");
                if (seen_m[m]) throw AllocationError(who + ": repeated delay bin " + std::to_string(m));
                seen_m[m] = true;
                if (strict_ && delay_owner[m] >= 0)
                    throw AllocationError(who + ": delay bin " + std::to_string(m) + " already used by user " +
                                          std::to_string(delay_owner[m]));
                delay_owner[m] = static_cast<int>(q);
            }
            for (auto n : u.doppler) {
                if (n >= frame_.N) throw AllocationError(who + ": Doppler bin " + std::to_string(n) + " outside the grid");
                if (seen_n[n]) throw AllocationError(who + ": repeated Doppler bin " + std::to_string(n));
                seen_n[n] = true;
                if (strict_ && doppler_owner[n] >= 0)
                    throw AllocationError(who + ": Doppler bin " + std::to_string(n) + " already used by user " +
                                          std::to_string(doppler_owner[n]));
                doppler_owner[n] = static_cast<int>(q);
            }
            for (auto n : u.doppler)
                for (auto m : u.delay) {
                    auto& owner = bin_owner[m + n * frame_.M];
                    if (owner >= 0)
                        throw AllocationError(who + ": bin (" + std::to_string(m) + ", " + std::to_string(n) +
                                              ") already used by user " + std::to_string(owner));
                    owner = static_cast<int>(q);
                }
        }
    }

    FrameConfig frame_;
    std::vector<UserBins> users_;
    bool strict_ = true;
};

/// Reads one user per non-empty line, "delay bins | Doppler bins", bins as
/// whitespace- or comma-separated integers or inclusive ranges a-b.
/// '#' starts a comment.
inline Allocation parse_allocation(std::istream& in, const FrameConfig& f, bool strict = true)
{
    auto parse_bins = [](const std::string& text, std::size_t line_no) {
        std::string s = text;
        std::replace(s.begin(), s.end(), ',', ' ');
        std::istringstream ss(s);
        std::vector<std::size_t> out;
        std::string tok;
        while (ss >> tok) {
            try {
                const auto dash = tok.find('-');
                std::size_t used = 0;
                if (dash == std::string::npos) {
                    out.push_back(std::stoul(tok, &used));
                    if (used != tok.size()) throw std::invalid_argument(tok);
                } else {
                    const auto a = std::stoul(tok.substr(0, dash), &used);
                    if (used != dash) throw std::invalid_argument(tok);
                    const auto rest = tok.substr(dash + 1);
                    const auto b = std::stoul(rest, &used);
                    if (used != rest.size() || b < a) throw std::invalid_argument(tok);
                    for (auto v = a; v <= b; ++v) out.push_back(v);
                }
            } catch (const std::logic_error&) {
                throw AllocationError("allocation line " + std::to_string(line_no) + ": bad bin '" + tok + "'");
            }
        }
        return out;
    };

    std::vector<UserBins> users;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto bar = line.find('|');
        if (bar == std::string::npos || line.find('|', bar + 1) != std::string::npos)
            throw AllocationError("allocation line " + std::to_string(line_no) + ": expected 'delay bins | Doppler bins'");
        users.push_back({parse_bins(line.substr(0, bar), line_no), parse_bins(line.substr(bar + 1), line_no)});
    }
    return {f, std::move(users), strict};
}

/// D_q = Gamma_tau^q * data * Gamma_nu^q on an otherwise empty grid.
inline DelayDopplerGrid place_user(const CMatrix& data, const Allocation& alloc, std::size_t q)
{
    const auto& u = alloc.user(q);
    if (static_cast<std::size_t>(data.rows()) != u.rows() || static_cast<std::size_t>(data.cols()) != u.cols())
        throw ShapeError("place_user: data is " + std::to_string(data.rows()) + "x" + std::to_string(data.cols()) +
                         ", user " + std::to_string(q) + " owns " + std::to_string(u.rows()) + "x" +
                         std::to_string(u.cols()) + " bins");
    DelayDopplerGrid g(alloc.frame());
    for (std::size_t j = 0; j < u.cols(); ++j)
        for (std::size_t i = 0; i < u.rows(); ++i)
            g(u.delay[i], u.doppler[j]) = data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    return g;
}

/// The user's M_q x N_q block read back from a full grid.
inline CMatrix extract_user(const DelayDopplerGrid& grid, const Allocation& alloc, std::size_t q)
{
    const auto& u = alloc.user(q);
    CMatrix out(static_cast<Eigen::Index>(u.rows()), static_cast<Eigen::Index>(u.cols()));
    for (std::size_t j = 0; j < u.cols(); ++j)
        for (std::size_t i = 0; i < u.rows(); ++i)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = grid(u.delay[i], u.doppler[j]);
    return out;
}

/// sum_q H^q Gamma^q (Gamma^q)^T: column j is user q's channel column j
/// when q owns bin j, zero for idle bins.
inline CMatrix compound_matrix(const std::vector<CMatrix>& per_user, const Allocation& alloc)
{
    if (per_user.size() != alloc.users()) throw ShapeError("compound_matrix: one channel matrix per user required");
    const auto mn = static_cast<Eigen::Index>(alloc.frame().size());
    CMatrix h = CMatrix::Zero(mn, mn);
    for (std::size_t q = 0; q < alloc.users(); ++q) {
        if (per_user[q].rows() != mn || per_user[q].cols() != mn) throw ShapeError("compound_matrix: user matrix must be MN x MN");
        for (auto j : alloc.grid_indices(q)) h.col(static_cast<Eigen::Index>(j)) = per_user[q].col(static_cast<Eigen::Index>(j));
    }
    return h;
}

/// Columns of a compound matrix at the allocated bins, in user order.
inline CMatrix active_columns(const CMatrix& compound, const Allocation& alloc)
{
    const auto idx = alloc.active_indices();
    CMatrix out(compound.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = compound.col(static_cast<Eigen::Index>(idx[i]));
    return out;
}

struct UplinkUser {
    CMatrix data; ///< M_q x N_q
    LtvChannel channel;
};

struct CompoundLink {
    DelayDopplerGrid received;    ///< demodulated sum of all users plus noise
    DelayDopplerGrid transmitted; ///< d = sum_q Gamma^q y_q
    CMatrix compound;             ///< MN x MN
};

/// Simulates the uplink: every user modulates its placed grid and passes
/// it through its own channel, the base station adds the received frames
/// and the noise and demodulates once.
inline CompoundLink compound_uplink(const std::vector<UplinkUser>& users, const Allocation& alloc, Waveform w,
                                    const NoiseSpec& noise, bool with_matrix = true)
{
    if (users.size() != alloc.users()) throw ShapeError("compound_uplink: one entry per allocated user required");
    const auto& f = alloc.frame();
    CompoundLink out{DelayDopplerGrid(f), DelayDopplerGrid(f), CMatrix()};
    CVector rx;
    std::vector<CMatrix> per_user;
    for (std::size_t q = 0; q < users.size(); ++q) {
        if (!(users[q].channel.frame() == f)) throw ShapeError("compound_uplink: channel frame differs from allocation");
        const auto placed = place_user(users[q].data, alloc, q);
        out.transmitted.symbols += placed.symbols;
        const CVector r = propagate(modulate(placed, w).samples, users[q].channel);
        if (q == 0)
            rx = r;
        else
            rx += r;
        if (with_matrix) per_user.push_back(build_dd_matrix(users[q].channel, w).matrix);
    }
    if (noise.variance > 0.0) rx += draw_noise(static_cast<std::size_t>(rx.size()), noise);
    out.received = demodulate(TimeSignal{f, rx, true}, w);
    if (with_matrix) out.compound = compound_matrix(per_user, alloc);
    return out;
}

/// Matrix-free compound channel: y = sum_q H^q (v restricted to user q's bins).
class CompoundOperator {
public:
    CompoundOperator(const std::vector<LtvChannel>& channels, const Allocation& alloc, Waveform w)
    {
        if (channels.size() != alloc.users()) throw ShapeError("CompoundOperator: one channel per user required");
        for (std::size_t q = 0; q < channels.size(); ++q) {
            users_.emplace_back(channels[q], w);
            bins_.push_back(alloc.grid_indices(q));
        }
        size_ = static_cast<Eigen::Index>(alloc.frame().size());
    }

    Eigen::Index rows() const { return size_; }
    Eigen::Index cols() const { return size_; }

    CVector apply(const CVector& v) const
    {
        CVector y = CVector::Zero(size_);
        for (std::size_t q = 0; q < users_.size(); ++q) y += users_[q].apply(restrict(v, q));
        return y;
    }

    CVector apply_adjoint(const CVector& y) const
    {
        CVector v = CVector::Zero(size_);
        for (std::size_t q = 0; q < users_.size(); ++q) v += restrict(users_[q].apply_adjoint(y), q);
        return v;
    }

private:
    CVector restrict(const CVector& v, std::size_t q) const
    {
        CVector out = CVector::Zero(size_);
        for (auto j : bins_[q]) out[static_cast<Eigen::Index>(j)] = v[static_cast<Eigen::Index>(j)];
        return out;
    }

    std::vector<DdChannelOperator> users_;
    std::vector<std::vector<std::size_t>> bins_;
    Eigen::Index size_ = 0;
};

} // namespace ddmux
