#pragma once

// Timing- and carrier-offset acquisition from an embedded impulse pilot.
//
// The received record is viewed as rows of M-spaced samples,
// r[m, l] = r[M*l + m], where the row index m is absolute (it may exceed
// M) and samples past either end of the record read as zero. For each
// candidate row the metric correlates consecutive blocks,
//     P[m, l] = sum_{q=0}^{N-2} conj(r[m, l+q]) * r[m, l+q+1],
//     P_d[m]  = sum_{l=0}^{N-1} P[m, l].
// The pilot row m_p of the transmitted body sits at row m_p + L_cp + theta_d
// of the received record, so the metric is evaluated on the rows
// [m_p + L_cp, m_p + L_cp + search_rows) and an index i of that window maps
// to a delay-dimension timing offset of i samples.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ddmux/core.hpp"
#include "ddmux/modem.hpp"

namespace ddmux {

class SyncError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Branch of the CFO estimate when the phase sits exactly on the cut:
/// Low wraps into [-N/2, N/2), High into (-N/2, N/2].
enum class CfoConvention { Low, High };

inline CfoConvention parse_cfo_convention(std::string_view s)
{
    if (s == "low") return CfoConvention::Low;
    if (s == "high") return CfoConvention::High;
    throw std::invalid_argument("unknown CFO convention: " + std::string(s));
}

struct TimingMetric {
    std::size_t first_row = 0; ///< absolute row of window index 0
    CMatrix P;                 ///< search_rows x N, P[i, l] for row first_row + i
    CVector Pd;                ///< search_rows

    Eigen::VectorXd magnitude() const { return Pd.cwiseAbs(); }
    std::size_t rows() const { return static_cast<std::size_t>(Pd.size()); }
};

/// Metric over rows [first_row, first_row + search_rows).
inline TimingMetric timing_metric_rows(const CVector& r, const FrameConfig& f, std::size_t first_row,
                                       std::size_t search_rows)
{
    if (static_cast<std::size_t>(r.size()) < f.size())
        throw ShapeError("timing_metric: record shorter than one frame body");
    if (search_rows == 0) throw std::invalid_argument("timing_metric: empty search window");
    const auto M = static_cast<long long>(f.M);
    const auto N = static_cast<long long>(f.N);
    const auto len = static_cast<long long>(r.size());
    auto at = [&](long long row, long long l) -> Complex {
        const long long k = M * l + row;
        return k < len ? r[k] : Complex{};
    };

    TimingMetric out;
    out.first_row = first_row;
    out.P = CMatrix::Zero(static_cast<Eigen::Index>(search_rows), N);
    out.Pd = CVector::Zero(static_cast<Eigen::Index>(search_rows));
    std::vector<Complex> prod(static_cast<std::size_t>(2 * N));
    for (std::size_t i = 0; i < search_rows; ++i) {
        const auto row = static_cast<long long>(first_row + i);
        for (long long b = 0; b < 2 * N - 1; ++b) prod[b] = std::conj(at(row, b)) * at(row, b + 1);
        for (long long l = 0; l < N; ++l) {
            Complex acc{};
            for (long long q = 0; q < N - 1; ++q) acc += prod[l + q];
            out.P(static_cast<Eigen::Index>(i), l) = acc;
        }
        out.Pd[static_cast<Eigen::Index>(i)] = out.P.row(static_cast<Eigen::Index>(i)).sum();
    }
    return out;
}

/// Metric over the rows that can hold the pilot for theta_d in
/// [0, search_rows); search_rows = 0 means M.
inline TimingMetric timing_metric(const CVector& r, const FrameConfig& f, std::size_t m_p,
                                  std::size_t search_rows = 0)
{
    return timing_metric_rows(r, f, m_p + f.cp, search_rows ? search_rows : f.M);
}

namespace detail {

inline long long window_to_offset(const TimingMetric& metric, std::size_t index, std::size_t m_p, std::size_t cp)
{
    return static_cast<long long>(metric.first_row + index) - static_cast<long long>(m_p + cp);
}

inline double metric_peak(const TimingMetric& metric)
{
    if (metric.rows() == 0) throw SyncError("timing metric is empty");
    const double peak = metric.magnitude().maxCoeff();
    if (!(peak > 0.0)) throw SyncError("timing metric is identically zero");
    return peak;
}

} // namespace detail

/// Window index of the largest |P_d|; ties go to the lowest index.
inline std::size_t metric_argmax(const TimingMetric& metric)
{
    detail::metric_peak(metric);
    const Eigen::VectorXd mag = metric.magnitude();
    std::size_t best = 0;
    for (std::size_t i = 1; i < metric.rows(); ++i)
        if (mag[static_cast<Eigen::Index>(i)] > mag[static_cast<Eigen::Index>(best)]) best = i;
    return best;
}

/// Peak of the metric converted to a delay-dimension offset. Biased
/// towards the strongest channel tap; ambiguous modulo M.
inline long long coarse_to(const TimingMetric& metric, std::size_t m_p, std::size_t cp)
{
    return detail::window_to_offset(metric, metric_argmax(metric), m_p, cp);
}

/// Window indices with |P_d| >= threshold * max |P_d|, ascending.
inline std::vector<std::size_t> peak_set(const TimingMetric& metric, double threshold)
{
    if (!(threshold > 0.0 && threshold <= 1.0)) throw std::invalid_argument("fine_to: threshold must be in (0, 1]");
    const double peak = detail::metric_peak(metric);
    const Eigen::VectorXd mag = metric.magnitude();
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < metric.rows(); ++i)
        if (mag[static_cast<Eigen::Index>(i)] >= threshold * peak) out.push_back(i);
    return out;
}

/// Earliest metric row within the threshold of the peak.
inline long long fine_to(const TimingMetric& metric, double threshold, std::size_t m_p, std::size_t cp)
{
    return detail::window_to_offset(metric, peak_set(metric, threshold).front(), m_p, cp);
}

/// Block-level offset: the l in [0, max_theta_t] maximising |P[i, l]|.
inline std::size_t estimate_theta_t(const TimingMetric& metric, std::size_t index, std::size_t max_theta_t = 1)
{
    if (index >= metric.rows()) throw std::out_of_range("estimate_theta_t: row outside the metric");
    const auto last = std::min<std::size_t>(max_theta_t, static_cast<std::size_t>(metric.P.cols()) - 1);
    std::size_t best = 0;
    for (std::size_t l = 1; l <= last; ++l)
        if (std::abs(metric.P(static_cast<Eigen::Index>(index), static_cast<Eigen::Index>(l))) >
            std::abs(metric.P(static_cast<Eigen::Index>(index), static_cast<Eigen::Index>(best))))
            best = l;
    return best;
}

/// Wraps x into [-half, half) (Low) or (-half, half] (High). Values
/// within 1e-9 of the cut are treated as lying on it.
inline double wrap_symmetric(double x, double half, CfoConvention conv = CfoConvention::Low)
{
    const double period = 2.0 * half;
    double y = x - period * std::floor((x + half) / period);
    if (std::abs(y - half) < 1e-9) y = -half;
    if (std::abs(y + half) < 1e-9) y = conv == CfoConvention::Low ? -half : half;
    return y;
}

/// CFO in Doppler bins from the phase of P_d at window index `index`.
///
/// Each product spans M samples, so a CFO of eps bins advances its phase by
/// 2*pi*eps/N; the pilot's own Doppler index n_p adds 2*pi*n_p/N and is
/// removed. Unambiguous for |eps| < N/2.
inline double cfo_estimate(const TimingMetric& metric, std::size_t index, std::size_t N, std::size_t n_p = 0,
                           CfoConvention conv = CfoConvention::Low)
{
    if (index >= metric.rows()) throw std::out_of_range("cfo_estimate: row outside the metric");
    const Complex p = metric.Pd[static_cast<Eigen::Index>(index)];
    if (p == Complex{}) throw SyncError("cfo_estimate: zero metric at the selected row");
    const double n = static_cast<double>(N);
    return wrap_symmetric(n / two_pi * std::arg(p) - static_cast<double>(n_p), n / 2.0, conv);
}

/// Re-aligns and de-rotates a received record:
///     r'[kappa] = exp(-j2*pi*eps*(kappa + theta)/(MN)) * r[kappa + theta]
/// for kappa in [0, MN + L_cp).
inline TimeSignal correct(const CVector& r, const FrameConfig& f, long long theta, double epsilon)
{
    const auto len = static_cast<long long>(f.frame_length());
    if (theta < 0 || theta + len > static_cast<long long>(r.size()))
        throw SyncError("correct: timing estimate moves the frame outside the record");
    const double mn = static_cast<double>(f.size());
    CVector out(len);
    for (long long k = 0; k < len; ++k) {
        const double angle = -two_pi * epsilon * static_cast<double>(k + theta) / mn;
        out[k] = r[k + theta] * (epsilon == 0.0 ? Complex{1.0, 0.0} : Complex{std::cos(angle), std::sin(angle)});
    }
    return {f, std::move(out), true};
}

struct SyncSettings {
    std::size_t m_p = 0;
    std::size_t n_p = 0;
    double threshold = 1.0;     ///< fine-TO threshold in (0, 1]
    std::size_t search_rows = 0; ///< 0 means M
    std::size_t max_theta_t = 1;
    CfoConvention cfo_convention = CfoConvention::Low;
};

struct SyncEstimate {
    long long theta_d_coarse = 0;
    long long theta_d_fine = 0;
    std::size_t theta_t = 0;
    double epsilon_hat = 0.0;
    Eigen::VectorXd metric;          ///< |P_d| over the search window
    std::vector<std::size_t> peak_set;

    long long theta(std::size_t M) const { return theta_d_fine + static_cast<long long>(M * theta_t); }
};

/// Full acquisition: metric, coarse and fine delay offsets, block offset
/// and CFO (read at the coarse peak, where the pilot energy is largest).
inline SyncEstimate synchronize(const CVector& r, const FrameConfig& f, const SyncSettings& s)
{
    const TimingMetric metric = timing_metric(r, f, s.m_p, s.search_rows);
    SyncEstimate est;
    const std::size_t peak = metric_argmax(metric);
    est.theta_d_coarse = detail::window_to_offset(metric, peak, s.m_p, f.cp);
    est.peak_set = peak_set(metric, s.threshold);
    est.theta_d_fine = detail::window_to_offset(metric, est.peak_set.front(), s.m_p, f.cp);
    est.theta_t = estimate_theta_t(metric, peak, s.max_theta_t);
    est.epsilon_hat = cfo_estimate(metric, peak, f.N, s.n_p, s.cfo_convention);
    est.metric = metric.magnitude();
    return est;
}

} // namespace ddmux
