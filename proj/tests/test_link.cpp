#include <gtest/gtest.h>

#include <random>

#include "ddmux/link.hpp"

using namespace ddmux;

namespace {

LinkRealization realization(const LinkSettings& s, const LtvChannel& ch, const Impairments& imp, std::uint64_t seed)
{
    Rng rng(seed);
    LinkRealization rz{ch, imp, {}, {}};
    std::uniform_int_distribution<int> bit(0, 1);
    rz.bits.resize(s.data_bits());
    for (auto& b : rz.bits) b = static_cast<std::uint8_t>(bit(rng));
    rz.unit_noise.resize(static_cast<Eigen::Index>(record_length(s, imp)));
    for (auto& z : rz.unit_noise) z = complex_gaussian(rng, 1.0);
    return rz;
}

// Three on-grid taps, the first one strongest.
LtvChannel three_taps(const FrameConfig& f)
{
    return {f, {{0, {0.8, 0.1}, 0.0, 0.6}, {1, {-0.3, 0.35}, 1.0, 0.25}, {2, {0.1, -0.3}, -2.0, 0.15}}};
}

} // namespace

TEST(LinkSettings, DefaultsAndPower)
{
    const FrameConfig f(32, 16, 8);
    const auto s = LinkSettings::defaults(f);
    EXPECT_EQ(s.pilot.m_p, 16u);
    EXPECT_EQ(s.pilot.n_p, 8u);
    EXPECT_EQ(s.data_symbols(), (32u - 9u) * 16u);
    EXPECT_EQ(s.data_bits(), 4u * 368u);
    EXPECT_DOUBLE_EQ(s.signal_power(), (368.0 + 100.0) / 512.0);
    EXPECT_DOUBLE_EQ(s.noise_variance(10.0), s.signal_power() / 10.0);
    EXPECT_EQ(s.noise_variance(INFINITY), 0.0);
    EXPECT_EQ(parse_csi_mode("perfect"), CsiMode::Perfect);
    EXPECT_EQ(parse_eq_method("mmse"), EqMethod::Mmse);
    EXPECT_THROW(parse_eq_method("zf"), std::invalid_argument);
}

TEST(RunLink, NoiselessIdentityChannelIsErrorFree)
{
    const FrameConfig f(32, 16, 8);
    for (auto csi : {CsiMode::Estimated, CsiMode::Perfect})
        for (auto eq : {EqMethod::Iterative, EqMethod::Mmse}) {
            auto s = LinkSettings::defaults(f);
            s.csi = csi;
            s.eq = eq;
            const auto rz = realization(s, LtvChannel::identity(f), {}, 1);
            for (auto w : {Waveform::OTFS, Waveform::SC_IFDMA}) {
                const auto out = run_link(s, rz, w, 0.0);
                EXPECT_EQ(out.bit_errors, 0u);
                EXPECT_EQ(out.bits, s.data_bits());
                EXPECT_EQ(out.theta_hat, 0);
                EXPECT_NEAR(out.epsilon_hat, 0.0, 1e-9);
                EXPECT_FALSE(out.estimate_empty);
            }
        }
}

TEST(RunLink, NoiselessOffsetsAndDispersiveChannel)
{
    const FrameConfig f(32, 16, 8);
    auto s = LinkSettings::defaults(f);
    const Impairments imp{7, 1, 0.3};
    const auto rz = realization(s, three_taps(f), imp, 2);
    for (auto w : {Waveform::OTFS, Waveform::SC_IFDMA}) {
        const auto out = run_link(s, rz, w, 0.0);
        ASSERT_TRUE(out.sync.has_value());
        EXPECT_EQ(out.theta_hat, 7 + 32);
        EXPECT_NEAR(out.epsilon_hat, 0.3, 1e-9);
        EXPECT_EQ(out.bit_errors, 0u);
    }
}

TEST(RunLink, PerfectCsiUsesGenieOffsets)
{
    const FrameConfig f(32, 16, 8);
    auto s = LinkSettings::defaults(f);
    s.csi = CsiMode::Perfect;
    const Impairments imp{3, 0, -0.25};
    const auto rz = realization(s, three_taps(f), imp, 3);
    const auto out = run_link(s, rz, Waveform::SC_IFDMA, s.noise_variance(25.0));
    EXPECT_FALSE(out.sync.has_value());
    EXPECT_EQ(out.theta_hat, 3);
    EXPECT_EQ(out.epsilon_hat, -0.25);
    EXPECT_LT(static_cast<double>(out.bit_errors) / static_cast<double>(out.bits), 0.01);
}

TEST(RunLink, IterativeAndDirectDecisionsAgree)
{
    const FrameConfig f(32, 16, 8);
    auto s = LinkSettings::defaults(f);
    const auto rz = realization(s, three_taps(f), {2, 0, 0.1}, 4);
    for (auto w : {Waveform::OTFS, Waveform::SC_IFDMA}) {
        s.eq = EqMethod::Iterative;
        const auto a = run_link(s, rz, w, s.noise_variance(12.0));
        s.eq = EqMethod::Mmse;
        const auto b = run_link(s, rz, w, s.noise_variance(12.0));
        EXPECT_EQ(a.decisions, b.decisions);
        EXPECT_GT(a.iterations, 0u);
    }
}

TEST(RunLink, ShortNoiseRealizationIsRejected)
{
    const FrameConfig f(16, 8, 4);
    auto s = LinkSettings::defaults(f);
    auto rz = realization(s, LtvChannel::identity(f), {}, 5);
    rz.unit_noise.resize(10);
    EXPECT_THROW(run_link(s, rz, Waveform::OTFS, 0.1), ShapeError);
    EXPECT_NO_THROW(run_link(s, rz, Waveform::OTFS, 0.0));
}
