#pragma once

// Monte-Carlo experiments behind the CLI.
//
// A trial is keyed by snr_index * trials + t. Each key owns independent
// channel, impairment, data and noise streams, and every waveform of the
// trial runs on the same draws. Trials fill their own slot and the
// reduction walks the slots in key order, so the output does not depend on
// the number of threads.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ddmux/harness/config.hpp"
#include "ddmux/harness/hash.hpp"
#include "ddmux/harness/rng.hpp"
#include "ddmux/link.hpp"
#include "ddmux/multiuser.hpp"

namespace ddmux::harness {

struct ResultRow {
    std::string experiment;
    std::string waveform;
    double snr_db = 0.0;
    std::string metric; ///< BER, CFO_MSE, TO_mean_error or TO_fine_mean_error
    std::string param;  ///< threshold for TO_fine_mean_error, user index for per-user BER; empty otherwise
    double value = 0.0;
    std::size_t trials = 0;
    std::uint64_t seed = 0;
};

inline std::string format_real(double v)
{
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_csv(std::ostream& out, const std::vector<ResultRow>& rows)
{
    out << "experiment,waveform,snr_db,metric,param,value,trials,seed\n";
    for (const auto& r : rows)
        out << r.experiment << ',' << r.waveform << ',' << format_real(r.snr_db) << ',' << r.metric << ',' << r.param
            << ',' << format_real(r.value) << ',' << r.trials << ',' << r.seed << '\n';
}

/// Runs fn(0..count-1) on `threads` workers (0: hardware concurrency).
/// The first exception thrown by any call is rethrown after all workers stop.
inline void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn)
{
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, std::max<std::size_t>(count, 1));
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < count && !failed; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                failed = true;
            }
        }
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (error) std::rethrow_exception(error);
}

/// All random inputs of one single-user trial.
inline LinkRealization draw_realization(const ExperimentSpec& s, std::uint64_t key)
{
    auto crng = seed_stream(s.seed, key, StreamComponent::Channel);
    LinkRealization rz{draw_channel(s.link.frame, builtin_profile(s.profile), s.velocity_kmh, crng, s.doppler), {}, {}, {}};

    auto irng = seed_stream(s.seed, key, StreamComponent::Impairment);
    rz.impair.theta_d = std::uniform_int_distribution<std::size_t>(0, s.theta_d_max)(irng);
    rz.impair.theta_t = std::uniform_int_distribution<std::size_t>(0, s.theta_t_max)(irng);
    if (s.epsilon_max > 0.0) rz.impair.epsilon = std::uniform_real_distribution<double>(-s.epsilon_max, s.epsilon_max)(irng);

    auto drng = seed_stream(s.seed, key, StreamComponent::Data);
    std::uniform_int_distribution<int> bit(0, 1);
    rz.bits.resize(s.link.data_bits());
    for (auto& b : rz.bits) b = static_cast<std::uint8_t>(bit(drng));

    auto nrng = seed_stream(s.seed, key, StreamComponent::Noise);
    rz.unit_noise.resize(static_cast<Eigen::Index>(record_length(s.link, rz.impair)));
    for (auto& z : rz.unit_noise) z = complex_gaussian(nrng, 1.0);
    return rz;
}

/// Timing and CFO errors of one received record.
struct SyncTrial {
    double coarse_error = 0.0;            ///< |theta_hat - theta| in samples, coarse peak
    std::vector<double> fine_error;       ///< same at each threshold
    double cfo_sq_error = 0.0;            ///< (eps_hat - eps)^2 in Doppler bins
};

inline SyncTrial sync_trial(const ExperimentSpec& s, const LinkRealization& rz, Waveform w, double noise_variance,
                            const std::vector<double>& thresholds)
{
    const auto& L = s.link;
    const auto& f = L.frame;
    const CVector r = link_received(L, rz, w, noise_variance);
    const TimingMetric metric = timing_metric(r, f, L.pilot.m_p, L.sync.search_rows);
    const std::size_t peak = metric_argmax(metric);
    const long long block = static_cast<long long>(f.M * estimate_theta_t(metric, peak, L.sync.max_theta_t));
    const long long truth = static_cast<long long>(rz.impair.theta(f.M));

    SyncTrial out;
    out.coarse_error = static_cast<double>(std::llabs(coarse_to(metric, L.pilot.m_p, f.cp) + block - truth));
    for (double t : thresholds)
        out.fine_error.push_back(static_cast<double>(std::llabs(fine_to(metric, t, L.pilot.m_p, f.cp) + block - truth)));
    const double e = cfo_estimate(metric, peak, f.N, L.pilot.n_p, L.sync.cfo_convention) - rz.impair.epsilon;
    out.cfo_sq_error = e * e;
    return out;
}

/// Inputs of one multiuser trial.
struct UplinkDraw {
    std::vector<std::vector<std::uint8_t>> bits; ///< per user
    std::vector<UplinkUser> users;
    std::uint64_t noise_seed = 0;
};

inline std::size_t uplink_data_symbols(const Allocation& a)
{
    std::size_t n = 0;
    for (std::size_t q = 0; q < a.users(); ++q) n += a.user(q).size();
    return n;
}

inline double uplink_noise_variance(const Allocation& a, double snr_db)
{
    if (std::isinf(snr_db) && snr_db > 0) return 0.0;
    const double p = static_cast<double>(uplink_data_symbols(a)) / static_cast<double>(a.frame().size());
    return p / std::pow(10.0, snr_db / 10.0);
}

inline UplinkDraw draw_uplink(const ExperimentSpec& s, std::uint64_t key)
{
    const auto& alloc = *s.allocation;
    const auto profile = builtin_profile(s.profile);
    UplinkDraw d;
    auto crng = seed_stream(s.seed, key, StreamComponent::Channel);
    auto drng = seed_stream(s.seed, key, StreamComponent::Data);
    std::uniform_int_distribution<int> bit(0, 1);
    const std::size_t bps = bits_per_symbol(s.link.constellation);
    for (std::size_t q = 0; q < alloc.users(); ++q) {
        const auto& u = alloc.user(q);
        std::vector<std::uint8_t> b(u.size() * bps);
        for (auto& x : b) x = static_cast<std::uint8_t>(bit(drng));
        const FrameConfig block(u.rows(), u.cols(), 0);
        d.users.push_back({map_bits(b, s.link.constellation, block).symbols,
                           draw_channel(s.link.frame, profile, s.velocity_kmh, crng, s.doppler)});
        d.bits.push_back(std::move(b));
    }
    d.noise_seed = seed_stream(s.seed, key, StreamComponent::Noise)();
    return d;
}

/// Per-user bit errors of joint detection with genie channel knowledge.
inline std::vector<std::size_t> uplink_trial(const ExperimentSpec& s, const UplinkDraw& d, Waveform w,
                                             double noise_variance)
{
    const auto& alloc = *s.allocation;
    const auto& L = s.link;
    const bool dense = L.eq == EqMethod::Mmse;
    const auto link = compound_uplink(d.users, alloc, w, NoiseSpec{noise_variance, d.noise_seed}, dense);
    const CVector y = link.received.vec();
    CVector x;
    if (dense) {
        x = mmse_solve(active_columns(link.compound, alloc), y, noise_variance);
    } else {
        std::vector<LtvChannel> chs;
        for (const auto& u : d.users) chs.push_back(u.channel);
        const CompoundOperator h(chs, alloc, w);
        x = equalize_iterative(y, ColumnSubset<CompoundOperator>(h, alloc.active_indices()), noise_variance, L.max_iter, L.tol).x;
    }
    std::vector<std::size_t> errors;
    Eigen::Index offset = 0;
    for (std::size_t q = 0; q < alloc.users(); ++q) {
        const auto& u = alloc.user(q);
        const FrameConfig block(u.rows(), u.cols(), 0);
        const auto n = static_cast<Eigen::Index>(u.size());
        const auto rx = demap_bits(DelayDopplerGrid::from_vec(block, x.segment(offset, n)), L.constellation);
        offset += n;
        std::size_t e = 0;
        for (std::size_t i = 0; i < rx.size(); ++i) e += rx[i] != d.bits[q][i];
        errors.push_back(e);
    }
    return errors;
}

namespace detail {

struct CellTotals {
    std::size_t bit_errors = 0;
    std::size_t bits = 0;
    double coarse = 0.0;
    double cfo = 0.0;
    std::vector<double> fine;
    std::vector<std::size_t> user_errors;
};

} // namespace detail

/// Runs every (SNR, trial) of the spec and returns the aggregated rows.
inline std::vector<ResultRow> run_experiment(const ExperimentSpec& s)
{
    const std::size_t nsnr = s.snr_db.size();
    const std::size_t nw = s.waveforms.size();
    const std::size_t total = nsnr * s.trials;
    const bool sweep = s.kind == ExperimentKind::ThresholdSweep;
    const std::vector<double> thresholds = sweep ? s.thresholds : std::vector<double>{s.link.sync.threshold};

    // slot[key][waveform]
    std::vector<std::vector<detail::CellTotals>> slots(total, std::vector<detail::CellTotals>(nw));
    parallel_for(total, s.parallelism, [&](std::size_t key) {
        const double snr = s.snr_db[key / s.trials];
        auto& slot = slots[key];
        if (s.kind == ExperimentKind::MuUplink) {
            const auto d = draw_uplink(s, key);
            const double nv = uplink_noise_variance(*s.allocation, snr);
            for (std::size_t w = 0; w < nw; ++w) {
                slot[w].user_errors = uplink_trial(s, d, s.waveforms[w], nv);
                for (auto e : slot[w].user_errors) slot[w].bit_errors += e;
            }
            return;
        }
        const auto rz = draw_realization(s, key);
        const double nv = s.link.noise_variance(snr);
        for (std::size_t w = 0; w < nw; ++w) {
            if (s.kind == ExperimentKind::BerVsSnr) {
                const auto out = run_link(s.link, rz, s.waveforms[w], nv);
                slot[w].bit_errors = out.bit_errors;
                slot[w].bits = out.bits;
            } else {
                const auto st = sync_trial(s, rz, s.waveforms[w], nv, thresholds);
                slot[w].coarse = st.coarse_error;
                slot[w].cfo = st.cfo_sq_error;
                slot[w].fine = st.fine_error;
            }
        }
    });

    std::vector<ResultRow> rows;
    const std::string id = s.id;
    for (std::size_t w = 0; w < nw; ++w) {
        const std::string wf(to_string(s.waveforms[w]));
        for (std::size_t i = 0; i < nsnr; ++i) {
            detail::CellTotals sum;
            sum.fine.assign(thresholds.size(), 0.0);
            if (s.kind == ExperimentKind::MuUplink) sum.user_errors.assign(s.allocation->users(), 0);
            for (std::size_t t = 0; t < s.trials; ++t) {
                const auto& c = slots[i * s.trials + t][w];
                sum.bit_errors += c.bit_errors;
                sum.bits += c.bits;
                sum.coarse += c.coarse;
                sum.cfo += c.cfo;
                for (std::size_t k = 0; k < c.fine.size(); ++k) sum.fine[k] += c.fine[k];
                for (std::size_t q = 0; q < c.user_errors.size(); ++q) sum.user_errors[q] += c.user_errors[q];
            }
            const double n = static_cast<double>(s.trials);
            auto row = [&](const std::string& metric, const std::string& param, double value) {
                rows.push_back({id, wf, s.snr_db[i], metric, param, value, s.trials, s.seed});
            };
            switch (s.kind) {
            case ExperimentKind::BerVsSnr:
                row("BER", "", static_cast<double>(sum.bit_errors) / static_cast<double>(sum.bits));
                break;
            case ExperimentKind::MuUplink: {
                const std::size_t bps = bits_per_symbol(s.link.constellation);
                const double all_bits = static_cast<double>(uplink_data_symbols(*s.allocation) * bps) * n;
                row("BER", "", static_cast<double>(sum.bit_errors) / all_bits);
                for (std::size_t q = 0; q < sum.user_errors.size(); ++q)
                    row("BER", "user" + std::to_string(q),
                        static_cast<double>(sum.user_errors[q]) / (static_cast<double>(s.allocation->user(q).size() * bps) * n));
                break;
            }
            case ExperimentKind::ThresholdSweep:
                row("TO_mean_error", "", sum.coarse / n);
                for (std::size_t k = 0; k < thresholds.size(); ++k) row("TO_fine_mean_error", format_real(thresholds[k]), sum.fine[k] / n);
                break;
            case ExperimentKind::SyncVsSnr:
                row("CFO_MSE", "", sum.cfo / n);
                row("TO_mean_error", "", sum.coarse / n);
                row("TO_fine_mean_error", format_real(thresholds[0]), sum.fine[0] / n);
                break;
            }
        }
    }
    return rows;
}

inline constexpr const char* snr_definition =
    "SNR = P_s / sigma^2 with sigma^2 the complex noise variance per received sample and P_s the mean "
    "transmitted power per sample of the frame body (unit-energy data symbols plus pilot power, over MN "
    "samples); channel profiles have unit total power";

struct RunInfo {
    std::string config_path;
    std::string config_text;
    double wall_seconds = 0.0;
    std::string started_utc;
};

inline std::string utc_now()
{
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline void write_metadata(std::ostream& out, const ExperimentSpec& s, const RunInfo& info)
{
    out << "# ddmux run metadata\n";
    out << "experiment = " << s.id << " (" << to_string(s.kind) << ")\n";
    out << "config_file = " << info.config_path << '\n';
    out << "config_sha1 = " << git_blob_sha1(info.config_text) << '\n';
    out << "seed = " << s.seed << '\n';
    out << "trials = " << s.trials << '\n';
    out << "paper_scale = " << (s.paper_scale ? "true" : "false") << '\n';
    out << "snr_definition = " << snr_definition << '\n';
    if (s.kind == ExperimentKind::MuUplink) {
        out << "snr_power = data symbols of all users over MN (no pilot); detection uses genie channels\n";
        for (std::size_t q = 0; q < s.allocation->users(); ++q)
            out << "user" << q << " = " << s.allocation->user(q).rows() << " delay x " << s.allocation->user(q).cols()
                << " Doppler bins\n";
    } else {
        out << "signal_power = " << format_real(s.link.signal_power()) << '\n';
        out << "data_symbols_per_frame = " << s.link.data_symbols() << '\n';
    }
    out << "started_utc = " << info.started_utc << '\n';
    out << "wall_clock_seconds = " << format_real(info.wall_seconds) << '\n';
    out << "\n[resolved]\n";
    for (const auto& [k, v] : s.resolved) out << k << " = " << v << '\n';
    out << "\n[warnings]\n";
    for (const auto& w : s.warnings) out << w << '\n';
}

} // namespace ddmux::harness
