// ddmux: run delay-Doppler multiplexing experiments from a config file.
//
//   ddmux run <config> [--seed S] [--trials T] [--out DIR] [--parallelism P] [--paper-scale]
//   ddmux validate <config> [--paper-scale]
//   ddmux list-profiles
//
// Exit status: 0 on success, 1 on a configuration error, 2 on a runtime failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "ddmux/harness/config.hpp"
#include "ddmux/harness/experiment.hpp"

namespace fs = std::filesystem;
using namespace ddmux;
using namespace ddmux::harness;

namespace {

std::string read_file(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ExperimentSpec load(const fs::path& path, const std::string& text, const SpecOverrides& ov)
{
    std::istringstream in(text);
    return build_spec(parse_key_values(in, path.string()), ov, path.parent_path());
}

void print_warnings(const ExperimentSpec& s)
{
    for (const auto& w : s.warnings) std::cerr << "warning: " << w << '\n';
}

int cmd_validate(const fs::path& config, const SpecOverrides& ov)
{
    const auto s = load(config, read_file(config), ov);
    print_warnings(s);
    std::cout << config.string() << ": ok (" << to_string(s.kind) << ", M=" << s.link.frame.M << " N=" << s.link.frame.N
              << " cp=" << s.link.frame.cp << ", " << s.snr_db.size() << " SNR points x " << s.trials << " trials)\n";
    return 0;
}

int cmd_run(const fs::path& config, const SpecOverrides& ov, const fs::path& out_dir)
{
    const std::string text = read_file(config);
    const auto s = load(config, text, ov);
    print_warnings(s);

    RunInfo info{config.string(), text, 0.0, utc_now()};
    const auto t0 = std::chrono::steady_clock::now();
    const auto rows = run_experiment(s);
    info.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    fs::create_directories(out_dir);
    {
        std::ofstream csv(out_dir / "results.csv", std::ios::binary);
        write_csv(csv, rows);
        if (!csv) throw std::runtime_error("failed to write " + (out_dir / "results.csv").string());
    }
    {
        std::ofstream meta(out_dir / "metadata.txt", std::ios::binary);
        write_metadata(meta, s, info);
        if (!meta) throw std::runtime_error("failed to write " + (out_dir / "metadata.txt").string());
    }
    std::printf("wrote %zu rows to %s in %.2f s\n", rows.size(), (out_dir / "results.csv").c_str(), info.wall_seconds);
    return 0;
}

int cmd_list_profiles()
{
    const FrameConfig f; // delays in samples at the default bandwidth
    for (const auto& name : builtin_profile_names()) {
        const auto p = builtin_profile(name);
        Rng rng(0);
        const auto ch = draw_channel(f, p, 0.0, rng);
        std::cout << name << ": " << p.taps.size() << " taps, "
                  << (p.fading == Fading::Rayleigh ? "Rayleigh" : "fixed magnitude") << ", length " << ch.length()
                  << " samples at " << f.bandwidth_hz / 1e6 << " MHz\n";
        for (std::size_t i = 0; i < p.taps.size(); ++i) {
            char line[128];
            std::snprintf(line, sizeof line, "  delay %2zu  power %7.3f dB%s\n", ch.taps()[i].delay,
                          10.0 * std::log10(ch.taps()[i].power), p.taps[i].doppler_hz ? "  static" : "");
            std::cout << line;
        }
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Delay-Doppler multiplexing experiments (OTFS and SC-IFDMA)"};
    app.require_subcommand(1);

    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> trials, parallelism;
    std::string out_dir = "out";
    bool paper_scale = false;

    auto* run = app.add_subcommand("run", "run an experiment and write results.csv and metadata.txt");
    run->add_option("config", config, "experiment config file")->required();
    run->add_option("--seed", seed, "master seed (overrides run.seed)");
    run->add_option("--trials", trials, "trials per SNR point (overrides run.trials)")->check(CLI::PositiveNumber);
    run->add_option("--out", out_dir, "output directory")->capture_default_str();
    run->add_option("--parallelism", parallelism, "worker threads, 0 = all cores (overrides run.parallelism)");
    run->add_flag("--paper-scale", paper_scale, "M=128, N=32, cp=20 frame");

    auto* validate = app.add_subcommand("validate", "check a config file and print the resolved experiment");
    validate->add_option("config", config, "experiment config file")->required();
    validate->add_option("--seed", seed, "master seed");
    validate->add_option("--trials", trials, "trials per SNR point")->check(CLI::PositiveNumber);
    validate->add_option("--parallelism", parallelism, "worker threads");
    validate->add_flag("--paper-scale", paper_scale, "M=128, N=32, cp=20 frame");

    auto* profiles = app.add_subcommand("list-profiles", "list the built-in channel profiles");

    CLI11_PARSE(app, argc, argv);

    SpecOverrides ov;
    ov.seed = seed;
    ov.trials = trials;
    ov.parallelism = parallelism;
    ov.paper_scale = paper_scale;
    try {
        if (*run) return cmd_run(config, ov, out_dir);
        if (*validate) return cmd_validate(config, ov);
        if (*profiles) return cmd_list_profiles();
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
