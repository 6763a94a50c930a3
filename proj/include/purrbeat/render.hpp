#pragma once

// Three-channel cue programs. Channel 0 and 1 are the flank actuators and
// carry the same heartbeat; channel 2 is the throat actuator with the purr.
// ProgramRenderer is shared by offline rendering and the stream service, so
// both produce the same samples for the same parameter schedule.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "purrbeat/heartbeat.hpp"
#include "purrbeat/params.hpp"
#include "purrbeat/peaking_eq.hpp"
#include "purrbeat/purr.hpp"
#include "purrbeat/synth_core.hpp"
#include "purrbeat/version.hpp"
#include "purrbeat/wave_io.hpp"

namespace purrbeat {

inline constexpr std::size_t kProgramChannels = 3;
inline constexpr int kDefaultSampleRate = 48000;
inline constexpr double kDefaultCrossfadeS = 0.05;

enum class Actuator : std::size_t { left_flank = 0, right_flank = 1, throat = 2 };

inline const std::array<const char*, kProgramChannels>& channel_names() {
    static const std::array<const char*, kProgramChannels> names = {
        "left_flank_heartbeat", "right_flank_heartbeat", "throat_purr"};
    return names;
}

/// Dimensions for one cue, plus the baseline preset's mute.
struct CueSetting {
    CueDimensions dims;
    bool muted = false;

    friend bool operator==(const CueSetting&, const CueSetting&) = default;
};

inline ResolvedCueParams resolve(const CueSetting& s, CueKind kind) {
    auto p = resolve(s.dims, kind);
    if (s.muted) p.master_gain = 0.0;
    return p;
}

inline CueSetting setting_from_preset(const CuePreset& p) { return {p.dims, p.no_vibration}; }

/// Cue generator followed by its boost stage.
class CueVoice {
public:
    CueVoice(HeartbeatVoice gen, double q, int sample_rate)
        : gen_(std::move(gen)), q_(q), sample_rate_(sample_rate) {
        eq_.set_coefficients(eq_config().coefficients());
    }
    CueVoice(PurrVoice gen, double q, int sample_rate)
        : gen_(std::move(gen)), q_(q), sample_rate_(sample_rate) {
        eq_.set_coefficients(eq_config().coefficients());
    }

    double next() {
        const double x = std::visit([](auto& g) { return g.next(); }, gen_);
        return eq_.process(x);
    }

    const ResolvedCueParams& params() const {
        return std::visit([](const auto& g) -> const ResolvedCueParams& { return g.params(); }, gen_);
    }

    PeakingEqConfig eq_config() const { return boost_config(params(), sample_rate_, q_); }

    /// Same timeline and filter history, new parameters.
    CueVoice with_params(const ResolvedCueParams& p) const {
        CueVoice v = *this;
        std::visit([&](auto& g) { g = g.with_params(p); }, v.gen_);
        v.eq_.set_coefficients(v.eq_config().coefficients());
        return v;
    }

private:
    std::variant<HeartbeatVoice, PurrVoice> gen_;
    Biquad eq_;
    double q_;
    int sample_rate_;
};

/// One cue with an optional linear crossfade from a previous voice.
class CueChannel {
public:
    CueChannel(CueVoice voice, std::size_t crossfade_frames)
        : active_(std::move(voice)), fade_len_(crossfade_frames) {}

    double next() {
        const double now = active_.next();
        if (!fading_) return now;
        const double old = fading_->next();
        const double w = static_cast<double>(fade_pos_) / static_cast<double>(fade_len_);
        if (++fade_pos_ >= fade_len_) fading_.reset();
        return (1.0 - w) * old + w * now;
    }

    void change(const ResolvedCueParams& p) {
        auto next_voice = active_.with_params(p);
        if (fade_len_ == 0) {
            active_ = std::move(next_voice);
            return;
        }
        fading_ = std::move(active_);
        active_ = std::move(next_voice);
        fade_pos_ = 0;
    }

    bool crossfading() const { return fading_.has_value(); }
    const ResolvedCueParams& params() const { return active_.params(); }

private:
    CueVoice active_;
    std::optional<CueVoice> fading_;
    std::size_t fade_len_;
    std::size_t fade_pos_ = 0;
};

struct ProgramConfig {
    int sample_rate = kDefaultSampleRate;
    std::uint64_t seed = 0;
    ResolvedCueParams heartbeat = resolve(CueDimensions{}, CueKind::heartbeat);
    ResolvedCueParams purr = resolve(CueDimensions{}, CueKind::purr);
    PurrModel purr_model = PurrModel::final_eq3;
    double eq_q = kDefaultBoostQ;
    double crossfade_s = kDefaultCrossfadeS;
};

class ProgramRenderer {
public:
    explicit ProgramRenderer(const ProgramConfig& cfg)
        : cfg_(cfg),
          heartbeat_(CueVoice(HeartbeatVoice(cfg.heartbeat, cfg.sample_rate, cfg.seed), cfg.eq_q, cfg.sample_rate),
                     frames_for(cfg.crossfade_s, cfg.sample_rate)),
          purr_(CueVoice(PurrVoice(cfg.purr, cfg.sample_rate, cfg.purr_model), cfg.eq_q, cfg.sample_rate),
                frames_for(cfg.crossfade_s, cfg.sample_rate)) {}

    SampleBuffer render(std::size_t frames) {
        SampleBuffer out(kProgramChannels, frames, cfg_.sample_rate);
        auto left = out.channel(0), right = out.channel(1), throat = out.channel(2);
        for (std::size_t i = 0; i < frames; ++i) {
            const float hb = static_cast<float>(heartbeat_.next());
            left[i] = hb;
            right[i] = hb;
            throat[i] = static_cast<float>(purr_.next());
        }
        for (std::size_t c = 0; c < kProgramChannels; ++c) {
            clips_[c] += clamp_unit(out.channel(c));
            peaks_[c] = std::max(peaks_[c], peak_abs(out.channel(c)));
        }
        position_ += frames;
        return out;
    }

    /// Takes effect from the next rendered frame.
    void apply_change(CueKind kind, const ResolvedCueParams& p) {
        if (p.kind != kind) throw ValidationError("parameter kind does not match cue");
        channel(kind).change(p);
    }

    bool crossfading(CueKind kind) const {
        return kind == CueKind::heartbeat ? heartbeat_.crossfading() : purr_.crossfading();
    }
    const ResolvedCueParams& params(CueKind kind) const {
        return kind == CueKind::heartbeat ? heartbeat_.params() : purr_.params();
    }
    std::uint64_t position() const { return position_; }
    const ProgramConfig& config() const { return cfg_; }
    const std::array<std::size_t, kProgramChannels>& clip_counts() const { return clips_; }
    const std::array<float, kProgramChannels>& peaks() const { return peaks_; }

private:
    CueChannel& channel(CueKind kind) { return kind == CueKind::heartbeat ? heartbeat_ : purr_; }

    ProgramConfig cfg_;
    CueChannel heartbeat_;
    CueChannel purr_;
    std::uint64_t position_ = 0;
    std::array<std::size_t, kProgramChannels> clips_{};
    std::array<float, kProgramChannels> peaks_{};
};

// ---------------------------------------------------------------------------
// Offline jobs

struct ScheduledChange {
    std::uint64_t frame = 0;
    CueKind kind = CueKind::heartbeat;
    CueSetting setting;

    friend bool operator==(const ScheduledChange&, const ScheduledChange&) = default;
};

struct RenderJob {
    CueSetting heartbeat;
    CueSetting purr;
    std::optional<int> preset_id;
    double duration = 0.0;
    int sample_rate = kDefaultSampleRate;
    std::uint64_t seed = 0;
    std::string output_path;
    SampleFormat format = SampleFormat::float32;
    PurrModel purr_model = PurrModel::final_eq3;
    double eq_q = kDefaultBoostQ;
    double crossfade_s = kDefaultCrossfadeS;
    std::vector<ScheduledChange> schedule;  // sorted by frame

    static RenderJob from_preset(int id, double duration, std::uint64_t seed, std::string path = {}) {
        const auto& p = find_preset(id);
        RenderJob job;
        job.heartbeat = job.purr = setting_from_preset(p);
        job.preset_id = id;
        job.duration = duration;
        job.seed = seed;
        job.output_path = std::move(path);
        return job;
    }

    void validate() const {
        if (!(duration > 0.0)) throw ValidationError("render duration must be positive");
        if (sample_rate < kMinSynthSampleRate) throw ValidationError("sample rate must be >= 2000 Hz");
        if (!(eq_q > 0.0)) throw ValidationError("eq Q must be positive");
        if (!(crossfade_s >= 0.0)) throw ValidationError("crossfade must be >= 0");
        for (std::size_t i = 1; i < schedule.size(); ++i)
            if (schedule[i].frame < schedule[i - 1].frame) throw ValidationError("schedule must be sorted by frame");
    }

    ProgramConfig program_config() const {
        ProgramConfig cfg;
        cfg.sample_rate = sample_rate;
        cfg.seed = seed;
        cfg.heartbeat = resolve(heartbeat, CueKind::heartbeat);
        cfg.purr = resolve(purr, CueKind::purr);
        cfg.purr_model = purr_model;
        cfg.eq_q = eq_q;
        cfg.crossfade_s = crossfade_s;
        return cfg;
    }
};

struct RenderReport {
    std::size_t frames = 0;
    int sample_rate = 0;
    std::array<float, kProgramChannels> peak{};
    std::array<std::size_t, kProgramChannels> clip_count{};
    ResolvedCueParams heartbeat;
    ResolvedCueParams purr;
    std::vector<std::string> warnings;

    std::size_t total_clips() const { return clip_count[0] + clip_count[1] + clip_count[2]; }
};

struct RenderResult {
    SampleBuffer buffer;
    RenderReport report;
};

/// Renders a job into memory, applying the schedule at its exact frames.
inline RenderResult render_buffer(const RenderJob& job) {
    job.validate();
    ProgramRenderer r(job.program_config());
    const std::size_t total = frames_for(job.duration, job.sample_rate);
    SampleBuffer out(kProgramChannels, 0, job.sample_rate);
    std::size_t next = 0;
    while (r.position() < total) {
        while (next < job.schedule.size() && job.schedule[next].frame <= r.position()) {
            const auto& c = job.schedule[next++];
            r.apply_change(c.kind, resolve(c.setting, c.kind));
        }
        std::uint64_t until = total;
        if (next < job.schedule.size()) until = std::min<std::uint64_t>(until, job.schedule[next].frame);
        out.append(r.render(static_cast<std::size_t>(until - r.position())));
    }
    RenderReport rep;
    rep.frames = total;
    rep.sample_rate = job.sample_rate;
    rep.peak = r.peaks();
    rep.clip_count = r.clip_counts();
    rep.heartbeat = resolve(job.heartbeat, CueKind::heartbeat);
    rep.purr = resolve(job.purr, CueKind::purr);
    for (std::size_t c = 0; c < kProgramChannels; ++c)
        if (rep.clip_count[c] > 0)
            rep.warnings.push_back(std::string(channel_names()[c]) + ": " + std::to_string(rep.clip_count[c]) +
                                   " samples clipped");
    return {std::move(out), std::move(rep)};
}

// ---------------------------------------------------------------------------
// Sidecar metadata

inline std::string sidecar_path(const std::string& wave_path) { return wave_path + ".json"; }

inline nlohmann::json to_json(const CueSetting& s, CueKind kind) {
    return {{"dims", to_json(s.dims)}, {"muted", s.muted}, {"resolved", to_json(resolve(s, kind))}};
}

inline nlohmann::json sidecar_json(const RenderJob& job, const RenderReport& rep) {
    nlohmann::json sched = nlohmann::json::array();
    for (const auto& c : job.schedule)
        sched.push_back({{"frame", c.frame},
                         {"cue", std::string(to_string(c.kind))},
                         {"dims", to_json(c.setting.dims)},
                         {"muted", c.setting.muted}});
    nlohmann::json clips = nlohmann::json::array(), peaks = nlohmann::json::array();
    for (std::size_t c = 0; c < kProgramChannels; ++c) {
        clips.push_back(rep.clip_count[c]);
        peaks.push_back(rep.peak[c]);
    }
    return {{"format", "purrbeat-render"},
            {"format_version", 1},
            {"software_version", kVersion},
            {"preset_id", job.preset_id ? nlohmann::json(*job.preset_id) : nlohmann::json(nullptr)},
            {"seed", job.seed},
            {"duration", job.duration},
            {"sample_rate", job.sample_rate},
            {"frames", rep.frames},
            {"sample_format", std::string(to_string(job.format))},
            {"purr_model", std::string(to_string(job.purr_model))},
            {"eq_q", job.eq_q},
            {"crossfade_s", job.crossfade_s},
            {"channel_map", channel_names()},
            {"heartbeat", to_json(job.heartbeat, CueKind::heartbeat)},
            {"purr", to_json(job.purr, CueKind::purr)},
            {"schedule", sched},
            {"report", {{"peak", peaks}, {"clip_count", clips}}}};
}

struct Sidecar {
    RenderJob job;
    std::size_t frames = 0;
    std::array<std::size_t, kProgramChannels> clip_count{};
    std::string software_version;
};

inline Sidecar sidecar_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format") != "purrbeat-render") throw ValidationError("not a purrbeat render sidecar");
        Sidecar s;
        auto& job = s.job;
        if (!j.at("preset_id").is_null()) job.preset_id = j.at("preset_id").get<int>();
        job.seed = j.at("seed").get<std::uint64_t>();
        job.duration = j.at("duration").get<double>();
        job.sample_rate = j.at("sample_rate").get<int>();
        job.format = parse_sample_format(j.at("sample_format").get<std::string>());
        job.purr_model = parse_purr_model(j.at("purr_model").get<std::string>());
        job.eq_q = j.at("eq_q").get<double>();
        job.crossfade_s = j.at("crossfade_s").get<double>();
        job.heartbeat = {dims_from_json(j.at("heartbeat").at("dims")), j.at("heartbeat").at("muted").get<bool>()};
        job.purr = {dims_from_json(j.at("purr").at("dims")), j.at("purr").at("muted").get<bool>()};
        for (const auto& c : j.at("schedule"))
            job.schedule.push_back({c.at("frame").get<std::uint64_t>(), parse_cue_kind(c.at("cue").get<std::string>()),
                                    {dims_from_json(c.at("dims")), c.at("muted").get<bool>()}});
        s.frames = j.at("frames").get<std::size_t>();
        const auto& clips = j.at("report").at("clip_count");
        for (std::size_t c = 0; c < kProgramChannels; ++c) s.clip_count[c] = clips.at(c).get<std::size_t>();
        s.software_version = j.value("software_version", std::string{});
        job.validate();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed sidecar: ") + e.what());
    }
}

inline Sidecar read_sidecar(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open sidecar '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("sidecar: ") + e.what(), e.byte);
    }
    return sidecar_from_json(j);
}

/// Writes the wave file and its sidecar; returns the render report.
inline RenderReport render_program(const RenderJob& job) {
    if (job.output_path.empty()) throw ValidationError("render job has no output path");
    auto result = render_buffer(job);
    write_wave(job.output_path, result.buffer, job.format);
    const auto side = sidecar_path(job.output_path);
    std::ofstream f(side);
    if (!f) throw IoError("cannot open '" + side + "' for writing");
    f << sidecar_json(job, result.report).dump(2) << "\n";
    if (!f) throw IoError("write to '" + side + "' failed");
    return result.report;
}

}  // namespace purrbeat
