#pragma once

// Complex linear-algebra substrate shared by every block of the modem:
// unitary DFTs, the row/column interleaver, diagonal phase operators and
// the multirate identities (expansion, aliasing) that tie the two modem
// structures together.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ddmux {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

inline constexpr double two_pi = 2.0 * std::numbers::pi;

using Rng = std::mt19937_64;

/// Circularly-symmetric complex Gaussian sample with E|z|^2 = variance.
inline Complex complex_gaussian(Rng& rng, double variance)
{
    std::normal_distribution<double> g(0.0, std::sqrt(variance / 2.0));
    const double re = g(rng);
    const double im = g(rng);
    return {re, im};
}

/// Thrown whenever an input's length or shape disagrees with what an
/// operation expects.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline void require_length(std::size_t actual, std::size_t expected, const char* what)
{
    if (actual != expected)
        throw ShapeError(std::string(what) + ": expected length " + std::to_string(expected) +
                         ", got " + std::to_string(actual));
}

/// Unit-modulus complex exponential exp(j*2*pi*num/den), with the integer
/// numerator reduced modulo den first so large products keep full precision.
inline Complex unit_phase(long long num, long long den)
{
    long long r = num % den;
    if (r < 0) r += den;
    const double angle = two_pi * static_cast<double>(r) / static_cast<double>(den);
    return {std::cos(angle), std::sin(angle)};
}

/// Grid geometry of one delay-Doppler frame.
///
/// M delay bins spaced 1/bandwidth apart, N Doppler bins spaced 1/(N*T)
/// apart with T = M/bandwidth the block duration, and a single cyclic
/// prefix of cp samples per MN-sample frame.
struct FrameConfig {
    std::size_t M = 32;
    std::size_t N = 16;
    std::size_t cp = 8;
    double bandwidth_hz = 7.68e6;
    double carrier_hz = 5.9e9;

    FrameConfig() = default;
    FrameConfig(std::size_t m, std::size_t n, std::size_t cp_len, double bw = 7.68e6, double fc = 5.9e9)
        : M(m), N(n), cp(cp_len), bandwidth_hz(bw), carrier_hz(fc)
    {
        validate();
    }

    void validate() const
    {
        if (M == 0 || N == 0) throw std::invalid_argument("FrameConfig: M and N must be positive");
        if (cp >= M * N) throw std::invalid_argument("FrameConfig: cp must be shorter than M*N");
        if (!(bandwidth_hz > 0.0)) throw std::invalid_argument("FrameConfig: bandwidth must be positive");
        if (!(carrier_hz > 0.0)) throw std::invalid_argument("FrameConfig: carrier must be positive");
    }

    std::size_t size() const { return M * N; }
    std::size_t frame_length() const { return M * N + cp; }

    double delay_spacing() const { return 1.0 / bandwidth_hz; }
    double block_duration() const { return static_cast<double>(M) * delay_spacing(); }
    double doppler_spacing() const { return 1.0 / (static_cast<double>(N) * block_duration()); }
    double subcarrier_spacing() const { return static_cast<double>(N) * doppler_spacing(); }

    bool operator==(const FrameConfig&) const = default;
};

namespace detail {

inline bool is_power_of_two(std::size_t k) { return k != 0 && (k & (k - 1)) == 0; }

// Unnormalized in-place radix-2 transform. sign = -1 forward, +1 inverse.
inline void fft_radix2(std::span<Complex> x, int sign)
{
    const std::size_t n = x.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(x[i], x[j]);
    }
    std::vector<Complex> twiddle;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        twiddle.resize(half);
        for (std::size_t k = 0; k < half; ++k) {
            const double angle = sign * two_pi * static_cast<double>(k) / static_cast<double>(len);
            twiddle[k] = {std::cos(angle), std::sin(angle)};
        }
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t k = 0; k < half; ++k) {
                const Complex u = x[i + k];
                const Complex v = x[i + k + half] * twiddle[k];
                x[i + k] = u + v;
                x[i + k + half] = u - v;
            }
        }
    }
}

inline void dft_direct(std::span<Complex> x, int sign)
{
    const std::size_t n = x.size();
    std::vector<Complex> out(n);
    for (std::size_t p = 0; p < n; ++p) {
        Complex acc{0.0, 0.0};
        for (std::size_t q = 0; q < n; ++q)
            acc += x[q] * unit_phase(sign * static_cast<long long>((p * q) % n), static_cast<long long>(n));
        out[p] = acc;
    }
    std::copy(out.begin(), out.end(), x.begin());
}

} // namespace detail

/// In-place unitary transform: forward applies F_K, inverse applies F_K^H.
inline void unitary_dft_inplace(std::span<Complex> x, bool inverse)
{
    const std::size_t k = x.size();
    if (k <= 1) return;
    const int sign = inverse ? +1 : -1;
    if (detail::is_power_of_two(k))
        detail::fft_radix2(x, sign);
    else
        detail::dft_direct(x, sign);
    const double scale = 1.0 / std::sqrt(static_cast<double>(k));
    for (auto& v : x) v *= scale;
}

/// F_K v with [F_K]_{p,q} = exp(-j2*pi*p*q/K)/sqrt(K).
inline CVector dft(const CVector& v, std::size_t size)
{
    require_length(static_cast<std::size_t>(v.size()), size, "dft");
    CVector out = v;
    unitary_dft_inplace({out.data(), size}, false);
    return out;
}

/// F_K^H v.
inline CVector idft(const CVector& v, std::size_t size)
{
    require_length(static_cast<std::size_t>(v.size()), size, "idft");
    CVector out = v;
    unitary_dft_inplace({out.data(), size}, true);
    return out;
}

/// Length-MN diagonal phase operator, stored as its diagonal.
///
///  - Lambda(m): entry i is exp(-j2*pi*m*i/(MN)); a circular shift by m
///    samples in time seen from the frequency side.
///  - Omega: entry n*M + m is omega_n^m = exp(-j2*pi*m*n/(MN)); the
///    per-symbol rotation that separates OTFS from SC-IFDMA.
///  - OmegaConjugate: Omega^H.
class PhaseOperator {
public:
    enum class Kind { Lambda, Omega, OmegaConjugate };

    static PhaseOperator lambda(std::size_t m, std::size_t M, std::size_t N) { return {Kind::Lambda, M, N, m}; }
    static PhaseOperator omega(std::size_t M, std::size_t N) { return {Kind::Omega, M, N, 0}; }
    static PhaseOperator omega_conjugate(std::size_t M, std::size_t N) { return {Kind::OmegaConjugate, M, N, 0}; }

    Kind kind() const { return kind_; }
    std::size_t size() const { return diag_.size(); }
    const CVector& diagonal() const { return diag_; }
    Complex operator[](std::size_t i) const { return diag_[static_cast<Eigen::Index>(i)]; }

    CVector apply(const CVector& v) const
    {
        require_length(static_cast<std::size_t>(v.size()), size(), "apply_phase");
        return v.cwiseProduct(diag_);
    }

private:
    PhaseOperator(Kind kind, std::size_t M, std::size_t N, std::size_t shift) : kind_(kind), diag_(M * N)
    {
        const auto mn = static_cast<long long>(M * N);
        for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t m = 0; m < M; ++m) {
                const std::size_t i = n * M + m;
                long long num = 0;
                switch (kind) {
                case Kind::Lambda: num = -static_cast<long long>(shift) * static_cast<long long>(i); break;
                case Kind::Omega: num = -static_cast<long long>(m * n); break;
                case Kind::OmegaConjugate: num = static_cast<long long>(m * n); break;
                }
                diag_[static_cast<Eigen::Index>(i)] = unit_phase(num, mn);
            }
        }
    }

    Kind kind_;
    CVector diag_;
};

inline CVector apply_phase(const PhaseOperator& op, const CVector& v) { return op.apply(v); }

/// omega_n^m, the single diagonal entry of Omega at delay m, Doppler n.
inline Complex omega_entry(std::size_t m, std::size_t n, std::size_t M, std::size_t N)
{
    return unit_phase(-static_cast<long long>(m * n), static_cast<long long>(M * N));
}

/// The interleaving permutation Psi between the column-major layout of an
/// M x N array (index m + n*M) and its row-major layout (index m*N + n).
///
/// Psi maps column-major to row-major: (Psi v)[m*N + n] = v[n*M + m].
class InterleaverMap {
public:
    InterleaverMap(std::size_t M, std::size_t N) : M_(M), N_(N), row_major_source_(M * N)
    {
        for (std::size_t m = 0; m < M; ++m)
            for (std::size_t n = 0; n < N; ++n) row_major_source_[m * N + n] = n * M + m;
    }

    std::size_t size() const { return row_major_source_.size(); }

    /// Column-major index feeding row-major slot i.
    std::size_t source(std::size_t i) const { return row_major_source_[i]; }

    CVector apply(const CVector& v) const
    {
        require_length(static_cast<std::size_t>(v.size()), size(), "InterleaverMap::apply");
        CVector out(v.size());
        for (std::size_t i = 0; i < size(); ++i)
            out[static_cast<Eigen::Index>(i)] = v[static_cast<Eigen::Index>(row_major_source_[i])];
        return out;
    }

    CVector apply_inverse(const CVector& v) const
    {
        require_length(static_cast<std::size_t>(v.size()), size(), "InterleaverMap::apply_inverse");
        CVector out(v.size());
        for (std::size_t i = 0; i < size(); ++i)
            out[static_cast<Eigen::Index>(row_major_source_[i])] = v[static_cast<Eigen::Index>(i)];
        return out;
    }

private:
    std::size_t M_;
    std::size_t N_;
    std::vector<std::size_t> row_major_source_;
};

/// Interleaves M streams of length N: output index m + l*M holds rows[m][l].
inline CVector interleave(const std::vector<CVector>& rows)
{
    if (rows.empty()) throw ShapeError("interleave: no rows");
    const auto n = static_cast<std::size_t>(rows.front().size());
    const std::size_t M = rows.size();
    CVector out(static_cast<Eigen::Index>(M * n));
    for (std::size_t m = 0; m < M; ++m) {
        if (static_cast<std::size_t>(rows[m].size()) != n) throw ShapeError("interleave: ragged rows");
        for (std::size_t l = 0; l < n; ++l)
            out[static_cast<Eigen::Index>(m + l * M)] = rows[m][static_cast<Eigen::Index>(l)];
    }
    return out;
}

inline std::vector<CVector> deinterleave(const CVector& v, std::size_t M)
{
    if (M == 0 || static_cast<std::size_t>(v.size()) % M != 0)
        throw ShapeError("deinterleave: length is not a multiple of M");
    const std::size_t n = static_cast<std::size_t>(v.size()) / M;
    std::vector<CVector> rows(M, CVector(static_cast<Eigen::Index>(n)));
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t l = 0; l < n; ++l)
            rows[m][static_cast<Eigen::Index>(l)] = v[static_cast<Eigen::Index>(m + l * M)];
    return rows;
}

/// M-fold expansion: M-1 zeros inserted after every sample.
inline CVector expand(const CVector& v, std::size_t M)
{
    CVector out = CVector::Zero(v.size() * static_cast<Eigen::Index>(M));
    for (Eigen::Index l = 0; l < v.size(); ++l) out[l * static_cast<Eigen::Index>(M)] = v[l];
    return out;
}

/// M-fold downsampling: keeps every M-th sample starting at index 0.
inline CVector downsample(const CVector& v, std::size_t M)
{
    if (M == 0 || static_cast<std::size_t>(v.size()) % M != 0) throw ShapeError("downsample: length mismatch");
    const auto n = v.size() / static_cast<Eigen::Index>(M);
    CVector out(n);
    for (Eigen::Index l = 0; l < n; ++l) out[l] = v[l * static_cast<Eigen::Index>(M)];
    return out;
}

/// Alias_M: folds a length-MN spectrum into N bins,
/// out[n] = (1/sqrt(M)) * sum_{m'} v[n + m'N].
inline CVector alias(const CVector& v, std::size_t M)
{
    if (M == 0 || static_cast<std::size_t>(v.size()) % M != 0) throw ShapeError("alias: length mismatch");
    const auto n = v.size() / static_cast<Eigen::Index>(M);
    CVector out = CVector::Zero(n);
    for (Eigen::Index k = 0; k < v.size(); ++k) out[k % n] += v[k];
    return out / std::sqrt(static_cast<double>(M));
}

/// (1/sqrt(M)) * (1_M kron d): M spectral replicas of d.
inline CVector replicate(const CVector& d, std::size_t M)
{
    CVector out(d.size() * static_cast<Eigen::Index>(M));
    for (std::size_t r = 0; r < M; ++r) out.segment(static_cast<Eigen::Index>(r) * d.size(), d.size()) = d;
    return out / std::sqrt(static_cast<double>(M));
}

} // namespace ddmux
