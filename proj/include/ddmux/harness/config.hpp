#pragma once

// Experiment configuration: flat "key = value" text with dotted keys and
// '#' comments. Every key has a default; unknown or repeated keys and
// malformed values are errors that name the file and line.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddmux/channel.hpp"
#include "ddmux/link.hpp"
#include "ddmux/multiuser.hpp"

namespace ddmux::harness {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ConfigValue {
    std::string text;
    std::string source; ///< file name, "default" or "command line"
    std::size_t line = 0;

    std::string where() const { return line ? source + ":" + std::to_string(line) : source; }
};

using ConfigMap = std::map<std::string, ConfigValue>;

namespace detail {

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline bool valid_key(const std::string& k)
{
    if (k.empty() || k.front() == '.' || k.back() == '.') return false;
    return std::all_of(k.begin(), k.end(), [](unsigned char c) { return std::isalnum(c) || c == '_' || c == '.'; });
}

} // namespace detail

inline ConfigMap parse_key_values(std::istream& in, const std::string& source)
{
    ConfigMap out;
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (detail::trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(no) + ": expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (!detail::valid_key(key)) throw ConfigError(source + ":" + std::to_string(no) + ": malformed key '" + key + "'");
        if (auto it = out.find(key); it != out.end())
            throw ConfigError(source + ":" + std::to_string(no) + ": duplicate key '" + key + "' (first set on line " +
                              std::to_string(it->second.line) + ")");
        out[key] = {value, source, no};
    }
    return out;
}

enum class ExperimentKind { ThresholdSweep, SyncVsSnr, BerVsSnr, MuUplink };

inline std::string to_string(ExperimentKind k)
{
    switch (k) {
    case ExperimentKind::ThresholdSweep: return "threshold_sweep";
    case ExperimentKind::SyncVsSnr: return "sync_vs_snr";
    case ExperimentKind::BerVsSnr: return "ber_vs_snr";
    case ExperimentKind::MuUplink: return "mu_uplink";
    }
    return "?";
}

inline std::optional<ExperimentKind> parse_kind(const std::string& s)
{
    for (auto k : {ExperimentKind::ThresholdSweep, ExperimentKind::SyncVsSnr, ExperimentKind::BerVsSnr, ExperimentKind::MuUplink})
        if (to_string(k) == s) return k;
    return std::nullopt;
}

struct ExperimentSpec {
    ExperimentKind kind = ExperimentKind::BerVsSnr;
    std::string id;
    LinkSettings link;
    std::vector<Waveform> waveforms;
    std::vector<double> snr_db;
    std::size_t trials = 2000;
    std::uint64_t seed = 1;
    std::size_t parallelism = 0; ///< 0: one thread per hardware core
    std::string profile;
    double velocity_kmh = 500.0;
    DopplerGrid doppler = DopplerGrid::Continuous;
    std::size_t theta_d_max = 0;
    std::size_t theta_t_max = 0;
    double epsilon_max = 0.0;
    std::vector<double> thresholds;
    std::optional<Allocation> allocation;
    bool paper_scale = false;

    std::vector<std::pair<std::string, std::string>> resolved; ///< every key with its effective value
    std::vector<std::string> warnings;
};

/// Overrides applied on top of a configuration file (command-line flags).
struct SpecOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> trials;
    std::optional<std::size_t> parallelism;
    bool paper_scale = false;
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s)
{
    std::string t = s;
    std::replace(t.begin(), t.end(), ',', ' ');
    std::istringstream ss(t);
    std::vector<std::string> out;
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

class Reader {
public:
    explicit Reader(ConfigMap values) : values_(std::move(values)) {}

    const ConfigValue& raw(const std::string& key) const { return values_.at(key); }

    [[noreturn]] void fail(const std::string& key, const std::string& what) const
    {
        const auto& v = raw(key);
        throw ConfigError(v.where() + ": " + key + " = '" + v.text + "': " + what);
    }

    std::string text(const std::string& key) const { return raw(key).text; }

    double real(const std::string& key) const
    {
        const auto& t = raw(key).text;
        try {
            std::size_t used = 0;
            const double v = std::stod(t, &used);
            if (used != t.size()) fail(key, "not a number");
            return v;
        } catch (const std::logic_error&) {
            fail(key, "not a number");
        }
    }

    std::uint64_t integer(const std::string& key) const
    {
        const auto& t = raw(key).text;
        if (t.empty() || !std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isdigit(c); }))
            fail(key, "not a non-negative integer");
        try {
            return std::stoull(t);
        } catch (const std::logic_error&) {
            fail(key, "integer out of range");
        }
    }

    bool boolean(const std::string& key) const
    {
        const auto& t = raw(key).text;
        if (t == "true" || t == "yes" || t == "on" || t == "1") return true;
        if (t == "false" || t == "no" || t == "off" || t == "0") return false;
        fail(key, "expected true or false");
    }

    std::vector<double> reals(const std::string& key, bool allow_inf) const
    {
        std::vector<double> out;
        for (const auto& tok : split_list(raw(key).text)) {
            if (allow_inf && (tok == "inf" || tok == "+inf")) {
                out.push_back(INFINITY);
                continue;
            }
            try {
                std::size_t used = 0;
                const double v = std::stod(tok, &used);
                if (used != tok.size() || !std::isfinite(v)) fail(key, "bad list entry '" + tok + "'");
                out.push_back(v);
            } catch (const std::logic_error&) {
                fail(key, "bad list entry '" + tok + "'");
            }
        }
        if (out.empty()) fail(key, "list is empty");
        return out;
    }

    template <class F>
    auto parsed(const std::string& key, F&& parse) const
    {
        try {
            return parse(raw(key).text);
        } catch (const std::invalid_argument& e) {
            fail(key, e.what());
        }
    }

private:
    ConfigMap values_;
};

inline ConfigMap default_values(ExperimentKind kind, bool paper_scale)
{
    const bool sweep = kind == ExperimentKind::ThresholdSweep;
    std::map<std::string, std::string> d = {
        {"experiment.kind", to_string(kind)},
        {"experiment.id", to_string(kind)},
        {"frame.M", paper_scale ? "128" : "32"},
        {"frame.N", paper_scale ? "32" : "16"},
        {"frame.cp", paper_scale ? "20" : "8"},
        {"frame.bandwidth_hz", "7.68e6"},
        {"frame.carrier_hz", "5.9e9"},
        {"run.waveforms", "OTFS, SC_IFDMA"},
        {"run.snr_db", sweep ? "15" : "0, 5, 10, 15, 20"},
        {"run.trials", "2000"},
        {"run.seed", "1"},
        {"run.parallelism", "0"},
        {"data.constellation", "16QAM"},
        {"channel.profile", sweep ? "two_tap" : (paper_scale ? "eva" : "eva3")},
        {"channel.velocity_kmh", "500"},
        {"channel.doppler", "continuous"},
        {"impair.theta_d_max", paper_scale ? "63" : "15"},
        {"impair.theta_t_max", "0"},
        {"impair.epsilon_max", "0.4"},
        {"sync.enabled", "true"},
        {"sync.threshold", "0.5"},
        {"sync.thresholds", "0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0"},
        {"sync.search_rows", "0"},
        {"sync.cfo_convention", "low"},
        {"sync.max_theta_t", "1"},
        {"pilot.m_p", "centre"},
        {"pilot.n_p", "centre"},
        {"pilot.power_db", "20"},
        {"pilot.guards", paper_scale ? "22 full" : "4 full"},
        {"pilot.noise_rows", "2"},
        {"est.threshold_sigma", "3"},
        {"est.csi", "estimated"},
        {"eq.method", "iterative"},
        {"eq.max_iter", "500"},
        {"eq.tol", "1e-10"},
        {"mu.allocation_file", ""},
        {"mu.strict_disjoint", "true"},
    };
    ConfigMap out;
    for (auto& [k, v] : d) out[k] = {v, "default", 0};
    return out;
}

/// Two users on complementary quarters: delay halves x Doppler halves.
inline Allocation default_allocation(const FrameConfig& f, bool strict)
{
    UserBins a, b;
    for (std::size_t m = 0; m < f.M; ++m) (m < f.M / 2 ? a.delay : b.delay).push_back(m);
    for (std::size_t n = 0; n < f.N; ++n) (n < f.N / 2 ? a.doppler : b.doppler).push_back(n);
    return {f, {a, b}, strict};
}

} // namespace detail

/// Resolves defaults, the file's values and the overrides into a validated
/// spec. `base_dir` anchors relative paths (the allocation file).
inline ExperimentSpec build_spec(const ConfigMap& file, const SpecOverrides& ov = {},
                                 const std::filesystem::path& base_dir = {})
{
    const auto kind_it = file.find("experiment.kind");
    if (kind_it == file.end()) throw ConfigError("missing required key experiment.kind");
    const auto kind = parse_kind(kind_it->second.text);
    if (!kind)
        throw ConfigError(kind_it->second.where() + ": experiment.kind = '" + kind_it->second.text +
                          "': expected threshold_sweep, sync_vs_snr, ber_vs_snr or mu_uplink");

    ConfigMap values = detail::default_values(*kind, ov.paper_scale);
    for (const auto& [k, v] : file) {
        if (!values.count(k)) throw ConfigError(v.where() + ": unknown key '" + k + "'");
        values[k] = v;
    }
    auto set_cli = [&](const std::string& k, const std::string& v) { values[k] = {v, "command line", 0}; };
    if (ov.seed) set_cli("run.seed", std::to_string(*ov.seed));
    if (ov.trials) set_cli("run.trials", std::to_string(*ov.trials));
    if (ov.parallelism) set_cli("run.parallelism", std::to_string(*ov.parallelism));
    if (ov.paper_scale) {
        set_cli("frame.M", "128");
        set_cli("frame.N", "32");
        set_cli("frame.cp", "20");
    }

    const detail::Reader rd(values);
    ExperimentSpec s;
    s.kind = *kind;
    s.paper_scale = ov.paper_scale;
    s.id = rd.text("experiment.id");
    if (s.id.empty() || s.id.find_first_of(",\"\n") != std::string::npos) rd.fail("experiment.id", "must be non-empty without commas or quotes");

    FrameConfig f;
    f.M = rd.integer("frame.M");
    f.N = rd.integer("frame.N");
    f.cp = rd.integer("frame.cp");
    f.bandwidth_hz = rd.real("frame.bandwidth_hz");
    f.carrier_hz = rd.real("frame.carrier_hz");
    try {
        f.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(rd.raw("frame.M").where() + ": invalid frame: " + e.what());
    }
    if (f.N < 2) rd.fail("frame.N", "the timing metric needs at least two Doppler bins");

    LinkSettings& L = s.link;
    L = LinkSettings::defaults(f);
    L.constellation = rd.parsed("data.constellation", [](const std::string& t) { return parse_constellation(t); });

    for (const auto& tok : detail::split_list(rd.text("run.waveforms"))) {
        Waveform w;
        try {
            w = parse_waveform(tok);
        } catch (const std::invalid_argument&) {
            rd.fail("run.waveforms", "unknown waveform '" + tok + "' (OTFS or SC_IFDMA)");
        }
        if (std::find(s.waveforms.begin(), s.waveforms.end(), w) != s.waveforms.end()) rd.fail("run.waveforms", "waveform listed twice");
        s.waveforms.push_back(w);
    }
    if (s.waveforms.empty()) rd.fail("run.waveforms", "no waveform given");

    s.snr_db = rd.reals("run.snr_db", true);
    s.trials = rd.integer("run.trials");
    if (s.trials == 0) rd.fail("run.trials", "at least one trial is required");
    s.seed = rd.integer("run.seed");
    s.parallelism = rd.integer("run.parallelism");

    s.profile = rd.text("channel.profile");
    ChannelProfile profile;
    try {
        profile = builtin_profile(s.profile);
    } catch (const std::invalid_argument&) {
        rd.fail("channel.profile", "unknown profile (see list-profiles)");
    }
    s.velocity_kmh = rd.real("channel.velocity_kmh");
    if (s.velocity_kmh < 0.0) rd.fail("channel.velocity_kmh", "must be non-negative");
    const auto grid = rd.text("channel.doppler");
    if (grid == "continuous")
        s.doppler = DopplerGrid::Continuous;
    else if (grid == "on_grid")
        s.doppler = DopplerGrid::OnGrid;
    else
        rd.fail("channel.doppler", "expected continuous or on_grid");

    L.sync_enabled = rd.boolean("sync.enabled");
    L.sync.threshold = rd.real("sync.threshold");
    if (!(L.sync.threshold > 0.0 && L.sync.threshold <= 1.0)) rd.fail("sync.threshold", "must lie in (0, 1]");
    s.thresholds = rd.reals("sync.thresholds", false);
    for (double t : s.thresholds)
        if (!(t > 0.0 && t <= 1.0)) rd.fail("sync.thresholds", "every threshold must lie in (0, 1]");
    L.sync.search_rows = rd.integer("sync.search_rows");
    L.sync.cfo_convention = rd.parsed("sync.cfo_convention", [](const std::string& t) { return parse_cfo_convention(t); });
    L.sync.max_theta_t = rd.integer("sync.max_theta_t");
    if (L.sync.max_theta_t > 1) rd.fail("sync.max_theta_t", "block offsets beyond one block are not supported");

    s.theta_d_max = rd.integer("impair.theta_d_max");
    const std::size_t rows = L.sync.search_rows ? L.sync.search_rows : f.M;
    if (s.theta_d_max >= rows) rd.fail("impair.theta_d_max", "must be below the timing search window (" + std::to_string(rows) + " rows)");
    s.theta_t_max = rd.integer("impair.theta_t_max");
    if (s.theta_t_max > L.sync.max_theta_t) rd.fail("impair.theta_t_max", "exceeds sync.max_theta_t");
    s.epsilon_max = rd.real("impair.epsilon_max");
    if (!(s.epsilon_max >= 0.0 && s.epsilon_max < static_cast<double>(f.N) / 2.0))
        rd.fail("impair.epsilon_max", "must lie in [0, N/2)");

    PilotConfig& pc = L.pilot;
    pc = PilotConfig::centred(f);
    if (rd.text("pilot.m_p") != "centre") pc.m_p = rd.integer("pilot.m_p");
    if (rd.text("pilot.n_p") != "centre") pc.n_p = rd.integer("pilot.n_p");
    pc.rho_p = std::pow(10.0, rd.real("pilot.power_db") / 10.0);
    {
        const auto parts = detail::split_list(rd.text("pilot.guards"));
        if (parts.size() != 2) rd.fail("pilot.guards", "expected '<delay half-width> <Doppler half-width|full>'");
        try {
            std::size_t used = 0;
            pc.guard_delay = std::stoul(parts[0], &used);
            if (used != parts[0].size()) throw std::invalid_argument(parts[0]);
            if (parts[1] == "full") {
                pc.guard_doppler = f.N;
            } else {
                pc.guard_doppler = std::stoul(parts[1], &used);
                if (used != parts[1].size()) throw std::invalid_argument(parts[1]);
            }
        } catch (const std::logic_error&) {
            rd.fail("pilot.guards", "expected '<delay half-width> <Doppler half-width|full>'");
        }
    }
    pc.noise_rows = rd.integer("pilot.noise_rows");
    pc.detection_threshold = rd.real("est.threshold_sigma");
    try {
        pc.validate(f);
    } catch (const std::invalid_argument& e) {
        rd.fail("pilot.guards", e.what());
    }
    L.csi = rd.parsed("est.csi", [](const std::string& t) { return parse_csi_mode(t); });
    L.eq = rd.parsed("eq.method", [](const std::string& t) { return parse_eq_method(t); });
    L.max_iter = rd.integer("eq.max_iter");
    L.tol = rd.real("eq.tol");
    if (!(L.tol > 0.0)) rd.fail("eq.tol", "must be positive");

    const bool strict = rd.boolean("mu.strict_disjoint");
    const std::string alloc_file = rd.text("mu.allocation_file");
    if (s.kind == ExperimentKind::MuUplink) {
        if (alloc_file.empty()) {
            s.allocation = detail::default_allocation(f, strict);
        } else {
            std::filesystem::path p(alloc_file);
            if (p.is_relative()) p = base_dir / p;
            std::ifstream in(p);
            if (!in) rd.fail("mu.allocation_file", "cannot open " + p.string());
            try {
                s.allocation = parse_allocation(in, f, strict);
            } catch (const AllocationError& e) {
                rd.fail("mu.allocation_file", e.what());
            }
        }
    }

    // Consistency warnings; the run still goes ahead.
    {
        Rng probe(0);
        const auto ch = draw_channel(f, profile, 0.0, probe);
        if (!ch.fits_cp())
            s.warnings.push_back("channel length " + std::to_string(ch.length()) + " exceeds the cyclic prefix (" +
                                 std::to_string(f.cp) + "): inter-block interference is simulated, not modelled");
        if (ch.length() - 1 + pc.noise_rows > pc.guard_delay)
            s.warnings.push_back("delay guard " + std::to_string(pc.guard_delay) +
                                 " is shorter than channel length - 1 + noise rows: data leaks into the pilot region");
    }
    if (s.paper_scale) s.warnings.push_back("paper scale (M=128, N=32): expect minutes to tens of minutes of runtime");

    for (const auto& [k, v] : values) s.resolved.emplace_back(k, v.text);
    return s;
}

inline ExperimentSpec load_spec(const std::filesystem::path& path, const SpecOverrides& ov = {})
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    return build_spec(parse_key_values(in, path.string()), ov, path.parent_path());
}

} // namespace ddmux::harness
