#pragma once

// Per-trial random streams.
//
// Every (master seed, trial, component) triple seeds its own mt19937_64
// through std::seed_seq over the 32-bit words
//     {master_lo, master_hi, trial_lo, trial_hi, component, 0x64646d78}.
// Trial indices are 64-bit, so there is no wraparound past 2^32, and each
// component of a trial draws from an unrelated sequence regardless of how
// many numbers the other components consume.

#include <cstdint>
#include <random>
#include <string_view>

#include "ddmux/core.hpp"

namespace ddmux::harness {

enum class StreamComponent : std::uint32_t { Channel = 1, Noise = 2, Data = 3, Impairment = 4 };

inline std::string_view to_string(StreamComponent c)
{
    switch (c) {
    case StreamComponent::Channel: return "channel";
    case StreamComponent::Noise: return "noise";
    case StreamComponent::Data: return "data";
    case StreamComponent::Impairment: return "impairment";
    }
    return "?";
}

inline Rng seed_stream(std::uint64_t master_seed, std::uint64_t trial, StreamComponent component)
{
    auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
    auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
    std::seed_seq seq{lo(master_seed), hi(master_seed), lo(trial), hi(trial), static_cast<std::uint32_t>(component),
                      0x64646d78u};
    return Rng(seq);
}

} // namespace ddmux::harness
