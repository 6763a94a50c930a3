#pragma once

// The `purrbeat` command line: render, presets, verify, serve, thermal-sim.
// run_cli() is the whole program so it can be exercised in-process.
//
// Exit codes: 0 success, 1 verification failure, 2 usage error, 3 I/O error.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "purrbeat/error.hpp"
#include "purrbeat/params.hpp"
#include "purrbeat/render.hpp"
#include "purrbeat/server.hpp"
#include "purrbeat/stream.hpp"
#include "purrbeat/thermal.hpp"
#include "purrbeat/verify.hpp"
#include "purrbeat/version.hpp"

namespace purrbeat::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerifyFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;

inline constexpr const char* kOutDirEnv = "PURRBEAT_OUT_DIR";

namespace detail {

inline std::atomic<bool> g_interrupted{false};
inline void on_signal(int) { g_interrupted = true; }

inline CueDimensions dims_from_list(const std::vector<double>& v, const char* flag) {
    if (v.size() != 3)
        throw ValidationError(std::string(flag) + " expects amplitude,variability,hyper_realism");
    return {v[0], v[1], v[2]};
}

inline std::string default_output(const std::optional<int>& preset, std::uint64_t seed) {
    const char* dir = std::getenv(kOutDirEnv);
    const std::string name = (preset ? "preset" + std::to_string(*preset) : std::string("custom")) + "_seed" +
                             std::to_string(seed) + ".wav";
    return (std::filesystem::path(dir && *dir ? dir : ".") / name).string();
}

inline nlohmann::json report_json(const RenderJob& job, const RenderReport& r) {
    nlohmann::json peaks = nlohmann::json::array(), clips = nlohmann::json::array();
    for (std::size_t c = 0; c < kProgramChannels; ++c) {
        peaks.push_back(r.peak[c]);
        clips.push_back(r.clip_count[c]);
    }
    return {{"output", job.output_path},
            {"sidecar", sidecar_path(job.output_path)},
            {"frames", r.frames},
            {"sample_rate", r.sample_rate},
            {"peak", peaks},
            {"clip_count", clips},
            {"heartbeat", to_json(r.heartbeat)},
            {"purr", to_json(r.purr)},
            {"warnings", r.warnings}};
}

inline void print_presets(std::ostream& out, bool json) {
    if (json) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& p : preset_table()) arr.push_back(to_json(p));
        out << arr.dump(2) << "\n";
        return;
    }
    auto level = [](double v) { return v == 0.0 ? "LOW " : v == 1.0 ? "HIGH" : "MID "; };
    out << "id  amplitude variability hyper   rating        perception\n";
    for (const auto& p : preset_table()) {
        char line[160];
        std::snprintf(line, sizeof line, "%-3d %-9s %-11s %-7s %-13s %s\n", p.id, level(p.dims.amplitude()),
                      level(p.dims.variability()), level(p.dims.hyper_realism()), p.rating.c_str(),
                      p.lifelikeness_label.c_str());
        out << line;
    }
}

}  // namespace detail

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Heartbeat and purr vibrotactile cue synthesis", "purrbeat"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    // render
    auto* render = app.add_subcommand("render", "Render a three-channel cue program with a JSON sidecar");
    std::optional<int> preset;
    std::vector<double> hb_dims, purr_dims, both_dims;
    double duration = 60.0;
    std::uint64_t seed = 0;
    std::string out_path, format = "float32", purr_model = "final_eq3";
    int sample_rate = kDefaultSampleRate;
    double eq_q = kDefaultBoostQ;
    bool json = false;
    render->add_option("--preset", preset, "Standard preset id (1-8)");
    render->add_option("--dims", both_dims, "Dimensions for both cues: amplitude,variability,hyper_realism")
        ->delimiter(',')->expected(3);
    render->add_option("--heartbeat-dims", hb_dims, "Heartbeat dimensions a,v,h")->delimiter(',')->expected(3);
    render->add_option("--purr-dims", purr_dims, "Purr dimensions a,v,h")->delimiter(',')->expected(3);
    render->add_option("--duration", duration, "Seconds")->capture_default_str();
    render->add_option("--seed", seed, "Random seed")->capture_default_str();
    render->add_option("--out", out_path, std::string("Output .wav (default: $") + kOutDirEnv + "/<name>.wav)");
    render->add_option("--format", format, "float32 | pcm16")->capture_default_str();
    render->add_option("--sample-rate", sample_rate, "Hz")->capture_default_str();
    render->add_option("--purr-model", purr_model, "final_eq3 | baseline_eq1")->capture_default_str();
    render->add_option("--eq-q", eq_q, "Q of the 45 Hz boost")->capture_default_str();
    render->add_flag("--json", json, "Machine-readable output");

    // presets
    auto* presets = app.add_subcommand("presets", "List the standard presets");
    std::string export_path;
    presets->add_flag("--json", json, "Machine-readable output");
    presets->add_option("--export", export_path, "Also write the preset table to a file");

    // verify
    auto* verify_cmd = app.add_subcommand("verify", "Check a render against its sidecar's parameters");
    std::string verify_path;
    verify_cmd->add_option("file", verify_path, "Rendered .wav (sidecar alongside)")->required();
    verify_cmd->add_flag("--json", json, "Machine-readable output");

    // serve
    auto* serve = app.add_subcommand("serve", "Run the live stream service");
    std::string host = "127.0.0.1", pace = "realtime", device_command;
    std::uint16_t port = 7870;
    std::size_t block = stream::kDefaultBlockFrames;
    double serve_for = 0.0;
    serve->add_option("--host", host)->capture_default_str();
    serve->add_option("--port", port, "TCP port (0 picks one)")->capture_default_str();
    serve->add_option("--block", block, "Frames per block")->capture_default_str();
    serve->add_option("--seed", seed)->capture_default_str();
    serve->add_option("--sample-rate", sample_rate)->capture_default_str();
    serve->add_option("--pace", pace, "realtime | fast")->capture_default_str();
    serve->add_option("--device-command", device_command, "Command receiving raw samples for the device sink");
    serve->add_option("--for", serve_for, "Stop after this many seconds (0 = until interrupted)");
    serve->add_flag("--json", json, "Machine-readable output");

    // thermal-sim
    auto* thermal_cmd = app.add_subcommand("thermal-sim", "Run a scripted or interactive thermal session");
    std::string script, log_path;
    thermal::ThermalConfig tcfg;
    thermal_cmd->add_option("--script", script, "Script file (default: read commands from stdin)");
    thermal_cmd->add_option("--log", log_path, "Write the session log here instead of stdout");
    thermal_cmd->add_option("--ambient", tcfg.ambient_c, "Ambient temperature, C")->capture_default_str();
    thermal_cmd->add_option("--tau-heat", tcfg.tau_heat_s, "Heating time constant, s")->capture_default_str();
    thermal_cmd->add_option("--tau-cool", tcfg.tau_cool_s, "Cooling time constant, s")->capture_default_str();
    thermal_cmd->add_flag("--json", json, "Machine-readable summary");

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::Success& e) {
        out << (e.get_name() == "CallForVersion" ? std::string(kVersion) + "\n" : app.help());
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        if (app.get_subcommands().empty() && !args.empty() && args[0].rfind("-", 0) != 0)
            err << "purrbeat: unknown subcommand '" << args[0] << "'\n";
        else
            err << "purrbeat: " << e.what() << "\n";
        if (app.get_subcommands().empty() || e.get_name() == "ExtrasError") err << "run 'purrbeat --help' for usage\n";
        return kExitUsage;
    }

    try {
        if (render->parsed()) {
            RenderJob job;
            if (preset) {
                job = RenderJob::from_preset(*preset, duration, seed);
                if (!both_dims.empty() || !hb_dims.empty() || !purr_dims.empty())
                    throw ValidationError("--preset cannot be combined with explicit dimensions");
            } else {
                if (!both_dims.empty()) job.heartbeat.dims = job.purr.dims = detail::dims_from_list(both_dims, "--dims");
                if (!hb_dims.empty()) job.heartbeat.dims = detail::dims_from_list(hb_dims, "--heartbeat-dims");
                if (!purr_dims.empty()) job.purr.dims = detail::dims_from_list(purr_dims, "--purr-dims");
                job.duration = duration;
                job.seed = seed;
            }
            job.sample_rate = sample_rate;
            job.format = parse_sample_format(format);
            job.purr_model = parse_purr_model(purr_model);
            job.eq_q = eq_q;
            job.output_path = out_path.empty() ? detail::default_output(job.preset_id, seed) : out_path;
            const auto rep = render_program(job);
            if (json) {
                out << detail::report_json(job, rep).dump(2) << "\n";
            } else {
                out << "wrote " << job.output_path << " (" << rep.frames << " frames, " << rep.sample_rate
                    << " Hz, 3 channels)\n";
                for (std::size_t c = 0; c < kProgramChannels; ++c)
                    out << "  " << channel_names()[c] << ": peak " << rep.peak[c] << ", clipped " << rep.clip_count[c]
                        << "\n";
                for (const auto& w : rep.warnings) err << "warning: " << w << "\n";
            }
            return kExitOk;
        }
        if (presets->parsed()) {
            detail::print_presets(out, json);
            if (!export_path.empty()) save_presets(export_path, preset_table());
            return kExitOk;
        }
        if (verify_cmd->parsed()) {
            const auto rep = verify::verify_file(verify_path);
            if (json) {
                auto j = rep.to_json();
                j["file"] = verify_path;
                out << j.dump(2) << "\n";
            } else {
                for (const auto& c : rep.checks)
                    out << verify::to_string(c.status) << "  " << c.name << ": " << c.detail << "\n";
                out << (rep.passed() ? "verification passed" : "verification FAILED") << "\n";
            }
            return rep.passed() ? kExitOk : kExitVerifyFailed;
        }
        if (serve->parsed()) {
            stream::SessionConfig scfg;
            scfg.sample_rate = sample_rate;
            scfg.seed = seed;
            scfg.block_frames = block;
            scfg.device_command = device_command;
            stream::ServerOptions sopt;
            sopt.host = host;
            sopt.port = port;
            if (pace == "fast") sopt.pace = stream::RenderLoop::Pace::fast;
            else if (pace != "realtime") throw ValidationError("--pace must be realtime or fast");
            stream::Session session(scfg);
            stream::Server server(session, sopt);
            server.start();
            if (json) out << nlohmann::json{{"listening", {{"host", host}, {"port", server.port()}}}}.dump() << "\n";
            else out << "listening on " << host << ":" << server.port() << "\n";
            out.flush();
            detail::g_interrupted = false;
            auto old_int = std::signal(SIGINT, detail::on_signal);
            auto old_term = std::signal(SIGTERM, detail::on_signal);
            const auto t0 = std::chrono::steady_clock::now();
            while (!detail::g_interrupted &&
                   (serve_for <= 0.0 ||
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() < serve_for))
                std::this_thread::sleep_for(std::chrono::milliseconds(20));
            server.stop();
            std::signal(SIGINT, old_int);
            std::signal(SIGTERM, old_term);
            return kExitOk;
        }
        if (thermal_cmd->parsed()) {
            tcfg.validate();
            thermal::ThermalSession session(tcfg);
            thermal::ScriptResult res;
            if (script.empty()) {
                res = thermal::run_script(std::cin, session);
            } else {
                std::ifstream f(script);
                if (!f) throw IoError("cannot open script '" + script + "'");
                res = thermal::run_script(f, session);
            }
            if (!log_path.empty()) {
                std::ofstream f(log_path);
                if (!f) throw IoError("cannot open '" + log_path + "' for writing");
                session.write_log(f);
            }
            const auto& s = session.state();
            if (json) {
                out << nlohmann::json{{"commands", res.commands},
                                      {"rejections", res.rejections},
                                      {"final", {{"time_s", s.time_s},
                                                 {"current_temp_c", s.current_temp_c},
                                                 {"target_temp_c", s.target_temp_c},
                                                 {"powered", s.powered},
                                                 {"setting", s.setting ? nlohmann::json(*s.setting) : nlohmann::json()},
                                                 {"discomfort", s.discomfort}}}}
                           .dump(2)
                    << "\n";
            } else {
                if (log_path.empty()) session.write_log(out);
                for (const auto& r : res.rejections) err << "interlock: " << r << "\n";
            }
            return kExitOk;
        }
    } catch (const IoError& e) {
        err << "purrbeat: " << e.what() << "\n";
        return kExitIo;
    } catch (const purrbeat::ParseError& e) {
        err << "purrbeat: " << e.what() << "\n";
        return verify_cmd->parsed() ? kExitIo : kExitUsage;
    } catch (const purrbeat::ValidationError& e) {
        err << "purrbeat: " << e.what() << "\n";
        return verify_cmd->parsed() ? kExitIo : kExitUsage;  // for verify, a bad sidecar is bad input data
    } catch (const std::exception& e) {
        err << "purrbeat: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitUsage;
}

inline int run_cli(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace purrbeat::cli
