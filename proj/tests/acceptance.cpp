// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit status if
// any criterion fails. Tolerances and trial counts are fixed here.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ddmux/chanest.hpp"
#include "ddmux/channel.hpp"
#include "ddmux/equalizer.hpp"
#include "ddmux/harness/config.hpp"
#include "ddmux/harness/experiment.hpp"
#include "ddmux/link.hpp"
#include "ddmux/modem.hpp"
#include "ddmux/multiuser.hpp"
#include "ddmux/sync.hpp"
#include "oracles.hpp"

using namespace ddmux;
using namespace ddmux::harness;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, double time_limit_s, const std::function<Verdict()>& body)
{
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
        v = body();
    } catch (const std::exception& e) {
        v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char timing[96];
    if (time_limit_s > 0) {
        std::snprintf(timing, sizeof timing, "%.2f s (limit %.0f s)", secs, time_limit_s);
        if (secs >= time_limit_s) v.pass = false;
    } else {
        std::snprintf(timing, sizeof timing, "%.2f s", secs);
    }
    if (!v.pass) ++failures;
    std::printf("%s %2d %-36s %s; %s\n", v.pass ? "PASS" : "FAIL", id, name, v.detail.c_str(), timing);
    std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

ExperimentSpec spec(const std::string& text)
{
    std::istringstream in(text);
    return build_spec(parse_key_values(in, "acceptance"));
}

const Waveform both[] = {Waveform::OTFS, Waveform::SC_IFDMA};

// 1. Direct and spread (DFT-precoding) implementations agree.
Verdict structural()
{
    std::mt19937_64 rng(101);
    double worst = 0.0;
    for (auto [M, N] : {std::pair<std::size_t, std::size_t>{4, 4}, {8, 16}, {16, 8}, {5, 7}}) {
        const FrameConfig f(M, N, 3);
        for (int t = 0; t < 5; ++t)
            for (auto w : both) {
                const auto g = oracle::random_grid(f, rng);
                worst = std::max(worst, (modulate_direct(g, w).samples - modulate_spread(g, w).samples).cwiseAbs().maxCoeff());
                const TimeSignal r{f, oracle::random_vector(f.frame_length(), rng), true};
                worst = std::max(worst, (demodulate_direct(r, w).vec() - demodulate_spread(r, w).vec()).cwiseAbs().maxCoeff());
            }
    }
    return {worst <= 1e-10, fmt("max |direct - spread| = %.3g (tol 1e-10)", worst)};
}

// 2. demodulate(modulate(D)) = D.
Verdict round_trip()
{
    std::mt19937_64 rng(102);
    const FrameConfig f(32, 16, 8);
    double worst = 0.0;
    for (auto w : both)
        for (int t = 0; t < 100; ++t) {
            const auto g = oracle::random_grid(f, rng);
            worst = std::max(worst, (demodulate(modulate(g, w), w).vec() - g.vec()).cwiseAbs().maxCoeff());
        }
    return {worst <= 1e-10, fmt("max round-trip error = %.3g over 2x100 grids (tol 1e-10)", worst)};
}

// 3. H_SC = Omega H_OTFS Omega^H and equal magnitudes.
Verdict phase_relation()
{
    std::mt19937_64 rng(103);
    const FrameConfig f(8, 8, 4);
    const CMatrix om = oracle::omega_matrix(8, 8);
    double rel = 0.0, mag = 0.0;
    for (int t = 0; t < 20; ++t) {
        const auto ch = oracle::random_channel(f, rng, 2.0, 4);
        const CMatrix ho = build_dd_matrix(ch, Waveform::OTFS).matrix;
        const CMatrix hs = build_dd_matrix(ch, Waveform::SC_IFDMA).matrix;
        rel = std::max(rel, (hs - om * ho * om.adjoint()).norm() / ho.norm());
        mag = std::max(mag, (hs.cwiseAbs() - ho.cwiseAbs()).cwiseAbs().maxCoeff());
    }
    return {rel <= 1e-9 && mag <= 1e-9, fmt("rel Frobenius error %.3g, max ||H_SC|-|H_OTFS|| %.3g (tol 1e-9)", rel, mag)};
}

// 4. Time-domain simulation matches the explicit linear model.
Verdict linear_model()
{
    std::mt19937_64 rng(104);
    const FrameConfig f(8, 8, 4);
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
        const auto ch = oracle::random_channel(f, rng, 2.0, 3);
        const auto g = oracle::random_grid(f, rng);
        for (auto w : both) {
            const CVector r = propagate(modulate(g, w).samples, ch);
            const CVector y = demodulate(TimeSignal{f, r, true}, w).vec();
            const CVector model = oracle::explicit_dd_matrix(ch, w) * g.vec();
            worst = std::max(worst, (y - model).norm() / model.norm());
        }
    }
    return {worst <= 1e-9, fmt("max relative error %.3g over 50 draws x 2 waveforms (tol 1e-9)", worst)};
}

// 5. Per-trial hard decisions of the two waveforms on shared realizations.
Verdict paired_decisions()
{
    const auto s = spec("experiment.kind = ber_vs_snr\nrun.snr_db = 5 10 15\nrun.trials = 91\nrun.seed = 505\n");
    const std::size_t total = s.snr_db.size() * s.trials;
    std::vector<std::size_t> mismatch(total), genie_mismatch(total), symbols(total);
    std::vector<std::size_t> err_o(total), err_s(total), bits(total);
    auto genie = s.link;
    genie.csi = CsiMode::Perfect;
    genie.eq = EqMethod::Mmse;
    parallel_for(total, 0, [&](std::size_t key) {
        const auto rz = draw_realization(s, key);
        const double nv = s.link.noise_variance(s.snr_db[key / s.trials]);
        const auto o = run_link(s.link, rz, Waveform::OTFS, nv);
        const auto c = run_link(s.link, rz, Waveform::SC_IFDMA, nv);
        for (std::size_t i = 0; i < o.decisions.size(); ++i) mismatch[key] += o.decisions[i] != c.decisions[i];
        symbols[key] = o.decisions.size();
        err_o[key] = o.bit_errors;
        err_s[key] = c.bit_errors;
        bits[key] = o.bits;
        const auto go = run_link(genie, rz, Waveform::OTFS, nv);
        const auto gc = run_link(genie, rz, Waveform::SC_IFDMA, nv);
        for (std::size_t i = 0; i < go.decisions.size(); ++i) genie_mismatch[key] += go.decisions[i] != gc.decisions[i];
    });
    double m = 0, gm = 0, n = 0, eo = 0, es = 0, nb = 0;
    for (std::size_t k = 0; k < total; ++k) {
        m += static_cast<double>(mismatch[k]);
        gm += static_cast<double>(genie_mismatch[k]);
        n += static_cast<double>(symbols[k]);
        eo += static_cast<double>(err_o[k]);
        es += static_cast<double>(err_s[k]);
        nb += static_cast<double>(bits[k]);
    }
    const double rate = m / n;
    // Pooled BER difference in units of its standard error.
    const double po = eo / nb, ps = es / nb;
    const double z = std::abs(po - ps) / std::sqrt((po * (1 - po) + ps * (1 - ps)) / nb);
    return {rate <= 1e-4,
            fmt("decision mismatch %.3g over %.0f symbols (tol 1e-4); genie-CSI MMSE mismatch %.3g; ", rate, n, gm / n) +
                fmt("pooled BER OTFS %.4g vs SC-IFDMA %.4g (|z| = %.2f)", po, ps, z)};
}

// 6. |P_d| is the same for both waveforms' transmissions through one
// channel and offset realization.
Verdict metric_equivalence()
{
    const FrameConfig f(32, 16, 8);
    const PilotConfig pc = PilotConfig::centred(f);
    const auto profile = eva3_profile();
    double worst = 0.0;
    for (std::uint64_t t = 0; t < 50; ++t) {
        auto crng = seed_stream(606, t, StreamComponent::Channel);
        const auto ch = draw_channel(f, profile, 500.0, crng);
        auto irng = seed_stream(606, t, StreamComponent::Impairment);
        const Impairments imp{std::uniform_int_distribution<std::size_t>(0, 15)(irng),
                              std::uniform_int_distribution<std::size_t>(0, 1)(irng),
                              std::uniform_real_distribution<double>(-0.4, 0.4)(irng)};
        const auto len = f.frame_length() + 2 * f.M;
        Eigen::VectorXd mags[2];
        for (int w = 0; w < 2; ++w) {
            CVector x = CVector::Zero(static_cast<Eigen::Index>(len));
            x.head(static_cast<Eigen::Index>(f.frame_length())) = modulate(embed_pilot(DelayDopplerGrid(f), pc), both[w]).samples;
            const CVector r = propagate(x, ch, imp);
            mags[w] = timing_metric(r, f, pc.m_p).magnitude();
        }
        worst = std::max(worst, (mags[0] - mags[1]).cwiseAbs().maxCoeff());
    }
    return {worst <= 1e-10, fmt("max ||P_d^OTFS| - |P_d^SC|| = %.3g over 50 realizations (tol 1e-10)", worst)};
}

// 7. Fine timing estimator on the two-tap channel.
Verdict fine_timing()
{
    const auto s = spec("experiment.kind = threshold_sweep\nrun.snr_db = 15\nrun.trials = 500\nrun.seed = 707\n"
                        "channel.profile = two_tap\n");
    const auto& L = s.link;
    const auto& f = L.frame;
    std::vector<double> thresholds;
    for (int i = 1; i <= 20; ++i) thresholds.push_back(0.05 * i);
    double coarse = 0.0, fine = 0.0;
    std::size_t non_monotone = 0;
    for (std::uint64_t key = 0; key < s.trials; ++key) {
        const auto rz = draw_realization(s, key);
        for (auto w : both) {
            const CVector r = link_received(L, rz, w, L.noise_variance(15.0));
            const auto metric = timing_metric(r, f, L.pilot.m_p);
            const double truth = static_cast<double>(rz.impair.theta(f.M));
            coarse += std::abs(static_cast<double>(coarse_to(metric, L.pilot.m_p, f.cp)) - truth);
            fine += std::abs(static_cast<double>(fine_to(metric, 0.5, L.pilot.m_p, f.cp)) - truth);
            long long prev = -1;
            for (double t : thresholds) {
                const long long v = fine_to(metric, t, L.pilot.m_p, f.cp);
                non_monotone += v < prev;
                prev = v;
            }
        }
    }
    const double n = 2.0 * static_cast<double>(s.trials);
    coarse /= n;
    fine /= n;
    return {coarse >= 2.5 && fine <= 0.2 && non_monotone == 0,
            fmt("coarse mean |err| %.3f (>= 2.5), fine@0.5 %.3f (<= 0.2), monotonicity violations %.0f", coarse, fine,
                static_cast<double>(non_monotone))};
}

// 8. CFO estimation MSE on a single-tap channel.
Verdict cfo()
{
    const auto s = spec("experiment.kind = sync_vs_snr\nrun.snr_db = 0 10 20\nrun.trials = 1000\nrun.seed = 808\n"
                        "channel.profile = identity\nimpair.epsilon_max = 0.4\n");
    const auto rows = run_experiment(s);
    bool ok = true;
    std::string detail;
    for (auto w : both) {
        std::vector<double> mse;
        for (const auto& r : rows)
            if (r.metric == "CFO_MSE" && r.waveform == to_string(w)) mse.push_back(r.value);
        ok = ok && mse.size() == 3 && mse[0] > mse[1] && mse[1] > mse[2] && mse[2] <= 1e-3;
        detail += std::string(to_string(w)) + fmt(" MSE %.3g/%.3g/%.3g ", mse[0], mse[1], mse[2]);
    }
    return {ok, detail + "at 0/10/20 dB (decreasing, <= 1e-3 at 20 dB)"};
}

// 9. Pilot estimation closes the loop.
Verdict estimation_closure()
{
    const FrameConfig f(32, 16, 8);
    auto L = LinkSettings::defaults(f);
    const LtvChannel truth(f, {{0, {0.7, -0.2}, 0.0, 0.5}, {1, {-0.35, 0.4}, 1.0, 0.3}, {2, {0.2, 0.25}, -1.0, 0.2}});
    std::mt19937_64 rng(909);
    std::vector<std::uint8_t> bits(L.data_bits());
    for (auto& b : bits) b = static_cast<std::uint8_t>(rng() & 1u);
    double gain_err = 0.0;
    bool all_found = true;
    for (auto w : both) {
        const auto rx = demodulate(TimeSignal{f, propagate(modulate(link_grid(L, bits), w).samples, truth), true}, w);
        const auto est = estimate_channel(rx, L.pilot, estimate_noise_std(rx, L.pilot), w);
        const auto rec = reconstruct_channel(est, f, L.pilot);
        all_found = all_found && rec.taps().size() == truth.taps().size();
        for (const auto& t : truth.taps()) {
            bool found = false;
            for (const auto& e : rec.taps())
                if (e.delay == t.delay && e.doppler == t.doppler) {
                    found = true;
                    gain_err = std::max(gain_err, std::abs(e.gain - t.gain));
                }
            all_found = all_found && found;
        }
    }

    const std::string base = "experiment.kind = ber_vs_snr\nrun.snr_db = 15\nrun.trials = 300\nrun.seed = 919\n"
                             "channel.profile = eva3\nchannel.doppler = on_grid\n";
    const auto est_rows = run_experiment(spec(base + "est.csi = estimated\n"));
    const auto perf_rows = run_experiment(spec(base + "est.csi = perfect\n"));
    bool band = true;
    std::string detail = fmt("noiseless max tap gain error %.3g (tol 1e-6)%s; ", gain_err, 0, 0, 0) +
                         (all_found ? "" : "MISSING TAPS; ");
    for (std::size_t i = 0; i < est_rows.size(); ++i) {
        const double e = est_rows[i].value, p = perf_rows[i].value;
        band = band && e <= 3.0 * p;
        detail += est_rows[i].waveform + fmt(" BER est %.3g / perfect %.3g ", e, p);
    }
    return {all_found && gain_err <= 1e-6 && band, detail + "at 15 dB (ratio <= 3)"};
}

// 10. Iterative solver against the direct MMSE solve.
Verdict iterative_vs_direct()
{
    std::mt19937_64 rng(1010);
    const FrameConfig f(16, 16, 4);
    std::uniform_real_distribution<double> s2(0.01, 0.5);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
        const auto ch = oracle::random_channel(f, rng, 1.5, 4);
        const auto w = both[t % 2];
        const CVector y = oracle::random_vector(256, rng);
        const double nv = s2(rng);
        const auto res = equalize_iterative(y, DdChannelOperator(ch, w), nv, 1000, 1e-12);
        const CVector ref = mmse_solve(build_dd_matrix(ch, w).matrix, y, nv);
        worst = std::max(worst, (res.x - ref).norm() / ref.norm());
    }
    return {worst <= 1e-6, fmt("max relative difference %.3g over 20 instances at MN = 256 (tol 1e-6)", worst)};
}

// 11. Multiuser model reductions.
Verdict multiuser()
{
    std::mt19937_64 rng(1111);
    const FrameConfig f(8, 8, 4);
    bool q1 = true;
    for (auto w : both) {
        const auto ch = oracle::random_channel(f, rng);
        const auto g = oracle::random_grid(f, rng);
        const NoiseSpec noise{0.1, 77};
        const auto link = compound_uplink({{g.symbols, ch}}, Allocation::full(f), w, noise);
        const auto ref = linearized_io(g, ch, noise, w);
        q1 = q1 && link.received.symbols == ref.received.symbols && link.compound == ref.channel.matrix;
    }
    const Allocation alloc(f, {{{0, 1, 2, 3}, {0, 1, 2, 3}}, {{4, 5, 6, 7}, {4, 5, 6, 7}}});
    const CMatrix om = oracle::omega_matrix(8, 8);
    double detect = 0.0, phase = 0.0;
    for (int t = 0; t < 10; ++t) {
        const std::vector<LtvChannel> chs = {oracle::random_channel(f, rng), oracle::random_channel(f, rng)};
        const CMatrix a = Eigen::Map<const CMatrix>(oracle::random_vector(16, rng).data(), 4, 4);
        const CMatrix b = Eigen::Map<const CMatrix>(oracle::random_vector(16, rng).data(), 4, 4);
        CVector expected(32);
        expected << Eigen::Map<const CVector>(a.data(), 16), Eigen::Map<const CVector>(b.data(), 16);
        CMatrix compound[2];
        for (int w = 0; w < 2; ++w) {
            const auto link = compound_uplink({{a, chs[0]}, {b, chs[1]}}, alloc, both[w], NoiseSpec{});
            const CVector x = mmse_solve(active_columns(link.compound, alloc), link.received.vec(), 0.0);
            detect = std::max(detect, (x - expected).cwiseAbs().maxCoeff());
            compound[w] = link.compound;
        }
        phase = std::max(phase, (compound[1] - om * compound[0] * om.adjoint()).norm() / compound[0].norm());
    }
    return {q1 && detect <= 1e-8 && phase <= 1e-9,
            std::string(q1 ? "Q=1 bit-exact" : "Q=1 MISMATCH") +
                fmt(", Q=2 noiseless max error %.3g (tol 1e-8), compound phase relation %.3g (tol 1e-9)", detect, phase)};
}

// 12. Same spec and seed give byte-identical CSV.
Verdict reproducibility()
{
    const std::string cfg = "experiment.kind = ber_vs_snr\nrun.snr_db = 5 15\nrun.trials = 12\nrun.seed = 1212\n";
    auto run = [&](std::size_t threads) {
        auto s = spec(cfg);
        s.parallelism = threads;
        std::ostringstream out;
        write_csv(out, run_experiment(s));
        return out.str();
    };
    const auto a = run(1), b = run(4);
    return {a == b, a == b ? "results.csv identical across two runs (1 and 4 threads)" : "results.csv differs"};
}

} // namespace

int main()
{
    criterion(1, "structural equivalence", 1.0, structural);
    criterion(2, "round-trip identity", 1.0, round_trip);
    criterion(3, "known-phase channel relation", 10.0, phase_relation);
    criterion(4, "linear-model consistency", 0.0, linear_model);
    criterion(5, "paired decision equality", 120.0, paired_decisions);
    criterion(6, "timing-metric waveform equivalence", 0.0, metric_equivalence);
    criterion(7, "fine timing estimator", 0.0, fine_timing);
    criterion(8, "CFO estimation", 0.0, cfo);
    criterion(9, "estimation and equalization closure", 0.0, estimation_closure);
    criterion(10, "iterative vs direct MMSE", 0.0, iterative_vs_direct);
    criterion(11, "multiuser reduction", 0.0, multiuser);
    criterion(12, "reproducibility", 0.0, reproducibility);
    std::printf("%d of 12 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
