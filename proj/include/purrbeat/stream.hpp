#pragma once

// Live streaming session: a control side that validates and resolves
// parameter changes, and a render side that produces blocks for a sink.
//
// The control side publishes a snapshot (settings plus a generation counter)
// under a mutex. The render side only ever try_locks that mutex at a block
// boundary; if the lock is busy it keeps rendering with what it has and
// picks the change up at the next boundary. The render side therefore never
// waits for the control side.

#include <array>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "purrbeat/error.hpp"
#include "purrbeat/params.hpp"
#include "purrbeat/render.hpp"
#include "purrbeat/wave_io.hpp"

namespace purrbeat::stream {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::size_t kDefaultBlockFrames = 512;
inline constexpr double kMeterRateHz = 20.0;
inline constexpr double kMonitorRateHz = 100.0;

// ---------------------------------------------------------------------------
// Sinks

class Sink {
public:
    virtual ~Sink() = default;
    virtual void write(const SampleBuffer& block) = 0;
    virtual void close() {}
    virtual nlohmann::json describe() const = 0;
};

/// RIFF/WAVE file, same encoding as offline renders.
class FileSink : public Sink {
public:
    FileSink(std::string path, int sample_rate, SampleFormat fmt)
        : path_(std::move(path)), fmt_(fmt), writer_(path_, kProgramChannels, sample_rate, fmt) {}
    void write(const SampleBuffer& block) override { writer_.write(block); }
    void close() override { writer_.close(); }
    nlohmann::json describe() const override {
        return {{"type", "file"}, {"path", path_}, {"format", std::string(to_string(fmt_))}};
    }

private:
    std::string path_;
    SampleFormat fmt_;
    WaveWriter writer_;
};

/// Interleaved little-endian samples piped into an external player command,
/// e.g. `aplay -t raw -f FLOAT_LE -c 3 -r 48000` for an audio device.
class PipeSink : public Sink {
public:
    PipeSink(std::string command, SampleFormat fmt) : command_(std::move(command)), fmt_(fmt) {
        pipe_ = ::popen(command_.c_str(), "w");
        if (!pipe_) throw IoError("cannot start audio command '" + command_ + "'");
    }
    ~PipeSink() override { close(); }

    void write(const SampleBuffer& block) override {
        if (!pipe_) throw IoError("audio pipe is closed");
        std::string bytes;
        wave_detail::append_frames(bytes, block, 0, block.frames(), fmt_);
        if (std::fwrite(bytes.data(), 1, bytes.size(), pipe_) != bytes.size() || std::fflush(pipe_) != 0)
            throw IoError("audio command '" + command_ + "' stopped accepting samples");
    }
    void close() override {
        if (pipe_) {
            ::pclose(pipe_);
            pipe_ = nullptr;
        }
    }
    nlohmann::json describe() const override {
        return {{"type", "device"}, {"command", command_}, {"format", std::string(to_string(fmt_))}};
    }

private:
    std::string command_;
    SampleFormat fmt_;
    std::FILE* pipe_ = nullptr;
};

class NullSink : public Sink {
public:
    void write(const SampleBuffer&) override {}
    nlohmann::json describe() const override { return {{"type", "null"}}; }
};

/// Keeps every block; used by tests and demos.
/// Collects everything written. The session destroys its sink when a run
/// ends, so read the samples through capture(), which outlives the sink.
class MemorySink : public Sink {
public:
    class Capture {
    public:
        explicit Capture(int sample_rate) : data_(kProgramChannels, 0, sample_rate) {}
        SampleBuffer data() const {
            std::lock_guard lock(mu_);
            return data_;
        }

    private:
        friend class MemorySink;
        mutable std::mutex mu_;
        SampleBuffer data_;
    };

    explicit MemorySink(int sample_rate) : cap_(std::make_shared<Capture>(sample_rate)) {}
    void write(const SampleBuffer& block) override {
        std::lock_guard lock(cap_->mu_);
        cap_->data_.append(block);
    }
    SampleBuffer data() const { return cap_->data(); }
    std::shared_ptr<const Capture> capture() const { return cap_; }
    nlohmann::json describe() const override { return {{"type", "memory"}}; }

private:
    std::shared_ptr<Capture> cap_;
};

// ---------------------------------------------------------------------------
// Session

enum class Status { idle, streaming };

inline const char* to_string(Status s) { return s == Status::idle ? "idle" : "streaming"; }

struct SessionConfig {
    int sample_rate = kDefaultSampleRate;
    std::uint64_t seed = 0;
    std::size_t block_frames = kDefaultBlockFrames;
    PurrModel purr_model = PurrModel::final_eq3;
    double eq_q = kDefaultBoostQ;
    double crossfade_s = kDefaultCrossfadeS;
    std::string device_command;  // default command for the "device" sink
};

/// Error reply codes.
namespace code {
inline constexpr const char* kBadRequest = "bad_request";
inline constexpr const char* kUnknownOp = "unknown_op";
inline constexpr const char* kInvalidDims = "invalid_dims";
inline constexpr const char* kUnknownPreset = "unknown_preset";
inline constexpr const char* kAlreadyStreaming = "already_streaming";
inline constexpr const char* kNotStreaming = "not_streaming";
inline constexpr const char* kSinkError = "sink_error";
}  // namespace code

class ProtocolError : public std::runtime_error {
public:
    ProtocolError(const char* code, const std::string& message) : std::runtime_error(message), code_(code) {}
    const char* code() const { return code_; }

private:
    const char* code_;
};

class Session {
public:
    using SinkFactory = std::function<std::unique_ptr<Sink>(const nlohmann::json&, const SessionConfig&)>;

    explicit Session(SessionConfig cfg = {}) : cfg_(std::move(cfg)) {
        if (cfg_.block_frames == 0) throw ValidationError("block size must be positive");
        published_.seed = cfg_.seed;
    }

    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;

    // ----- control side (callers serialize these) ---------------------------

    /// Handles one control message and returns exactly one reply.
    nlohmann::json handle_control(const nlohmann::json& msg) {
        nlohmann::json id = nullptr;
        std::string op;
        try {
            if (!msg.is_object()) throw ProtocolError(code::kBadRequest, "message must be a JSON object");
            if (msg.contains("id")) id = msg.at("id");
            if (!msg.contains("v") || msg.at("v") != kProtocolVersion)
                throw ProtocolError(code::kBadRequest, "field 'v' must be " + std::to_string(kProtocolVersion));
            if (!msg.contains("op") || !msg.at("op").is_string())
                throw ProtocolError(code::kBadRequest, "field 'op' must be a string");
            op = msg.at("op").get<std::string>();
            const nlohmann::json payload = msg.value("payload", nlohmann::json::object());
            if (!payload.is_object()) throw ProtocolError(code::kBadRequest, "payload must be an object");
            return ok_reply(id, op, dispatch(op, payload));
        } catch (const ProtocolError& e) {
            return error_reply(id, op, e.code(), e.what());
        } catch (const std::exception& e) {
            return error_reply(id, op, code::kBadRequest, e.what());
        }
    }

    /// Programmatic start with an already constructed sink.
    nlohmann::json start(std::unique_ptr<Sink> sink, std::optional<std::uint64_t> seed = std::nullopt) {
        std::lock_guard lock(mu_);
        if (published_.status == Status::streaming) throw ProtocolError(code::kAlreadyStreaming, "already streaming");
        published_.status = Status::streaming;
        streaming_flag_ = true;
        if (seed) published_.seed = *seed;
        ++published_.run;
        published_.sink_info = sink->describe();
        pending_sink_ = std::move(sink);
        ++published_.generation;
        return state_locked();
    }

    nlohmann::json state() const {
        std::lock_guard lock(mu_);
        return state_locked();
    }

    void set_sink_factory(SinkFactory f) { sink_factory_ = std::move(f); }

    // ----- render side -----------------------------------------------------

    /// Renders one block and writes it to the sink. Changes published before
    /// the call take effect at the first frame of the block (or, while a
    /// crossfade on that cue is still running, at the first block after it).
    /// Returns silence when not streaming.
    SampleBuffer render_block() { return render_block(cfg_.block_frames); }

    SampleBuffer render_block(std::size_t frames) {
        pull_snapshot();
        flush_backlog();
        if (!run_) return SampleBuffer(kProgramChannels, frames, cfg_.sample_rate);
        apply_pending_changes();
        auto block = run_->renderer.render(frames);
        try {
            run_->sink->write(block);
        } catch (const std::exception& e) {
            fail_run(e.what());
            return SampleBuffer(kProgramChannels, frames, cfg_.sample_rate);
        }
        meter(block);
        frames_total_.fetch_add(frames);
        return block;
    }

    /// Offline job that reproduces the current run sample-for-sample.
    std::optional<RenderJob> current_job() const {
        std::lock_guard lock(run_log_mu_);
        return run_job_;
    }

    /// Drains pushed events (meters, errors, state changes).
    std::vector<nlohmann::json> take_events() {
        std::vector<nlohmann::json> out;
        std::lock_guard lock(events_mu_);
        out.assign(events_.begin(), events_.end());
        events_.clear();
        return out;
    }

    double stream_clock() const { return static_cast<double>(frames_total_.load()) / cfg_.sample_rate; }
    const SessionConfig& config() const { return cfg_; }
    /// Lock-free; may lag the published status by one block.
    bool streaming() const { return streaming_flag_.load(); }

private:
    struct Published {
        std::uint64_t generation = 0;
        std::uint64_t run = 0;
        Status status = Status::idle;
        std::uint64_t seed = 0;
        CueSetting heartbeat;
        CueSetting purr;
        nlohmann::json sink_info = nullptr;
        std::string last_error;
    };

    struct Run {
        std::uint64_t id = 0;
        ProgramRenderer renderer;
        std::unique_ptr<Sink> sink;
        CueSetting heartbeat;  // applied settings
        CueSetting purr;
        std::optional<CueSetting> want_heartbeat;  // published but not yet applied
        std::optional<CueSetting> want_purr;
        std::size_t meter_frames = 0;
        std::array<float, kProgramChannels> meter_peak{};
        std::vector<std::array<float, kProgramChannels>> monitor;
        std::size_t monitor_frames = 0;
        std::array<float, kProgramChannels> monitor_peak{};
    };

    static nlohmann::json ok_reply(const nlohmann::json& id, const std::string& op, nlohmann::json result) {
        return {{"v", kProtocolVersion}, {"id", id}, {"op", op}, {"ok", true}, {"result", std::move(result)}};
    }
    static nlohmann::json error_reply(const nlohmann::json& id, const std::string& op, const char* c,
                                      const std::string& m) {
        return {{"v", kProtocolVersion}, {"id", id}, {"op", op}, {"ok", false}, {"error", {{"code", c}, {"message", m}}}};
    }

    static std::vector<CueKind> parse_cues(const nlohmann::json& payload) {
        const std::string cue = payload.value("cue", std::string("both"));
        if (cue == "both") return {CueKind::heartbeat, CueKind::purr};
        try {
            return {parse_cue_kind(cue)};
        } catch (const ValidationError& e) {
            throw ProtocolError(code::kBadRequest, e.what());
        }
    }

    nlohmann::json dispatch(const std::string& op, const nlohmann::json& payload) {
        if (op == "start") return op_start(payload);
        if (op == "stop") return op_stop();
        if (op == "set_dims") return op_set_dims(payload);
        if (op == "load_preset") return op_load_preset(payload);
        if (op == "get_state") return state();
        if (op == "subscribe_meters") {
            // Subscriptions are per connection; the server records them. The
            // session only confirms the meter format.
            return {{"meter_rate_hz", kMeterRateHz}, {"monitor_rate_hz", kMonitorRateHz},
                    {"enabled", payload.value("enabled", true)}};
        }
        throw ProtocolError(code::kUnknownOp, "unknown op '" + op + "'");
    }

    nlohmann::json op_start(const nlohmann::json& payload) {
        std::optional<std::uint64_t> seed;
        if (payload.contains("seed")) {
            const auto& sj = payload.at("seed");
            if (!sj.is_number_integer() || (!sj.is_number_unsigned() && sj.get<std::int64_t>() < 0)) throw ProtocolError(code::kBadRequest, "seed must be an unsigned integer");
            seed = payload.at("seed").get<std::uint64_t>();
        }
        {
            std::lock_guard lock(mu_);
            if (published_.status == Status::streaming)
                throw ProtocolError(code::kAlreadyStreaming, "already streaming");
        }
        const nlohmann::json spec = payload.value("sink", nlohmann::json{{"type", "null"}});
        std::unique_ptr<Sink> sink;
        try {
            sink = make_sink(spec);
        } catch (const ProtocolError&) {
            throw;
        } catch (const std::exception& e) {
            throw ProtocolError(code::kSinkError, e.what());
        }
        return start(std::move(sink), seed);
    }

    std::unique_ptr<Sink> make_sink(const nlohmann::json& spec) {
        if (sink_factory_) {
            if (auto s = sink_factory_(spec, cfg_)) return s;
        }
        if (!spec.is_object() || !spec.contains("type") || !spec.at("type").is_string())
            throw ProtocolError(code::kBadRequest, "sink must be an object with a 'type'");
        const auto type = spec.at("type").get<std::string>();
        const auto fmt = parse_sample_format(spec.value("format", std::string("float32")));
        if (type == "null") return std::make_unique<NullSink>();
        if (type == "file") {
            if (!spec.contains("path") || !spec.at("path").is_string())
                throw ProtocolError(code::kBadRequest, "file sink needs a 'path'");
            return std::make_unique<FileSink>(spec.at("path").get<std::string>(), cfg_.sample_rate, fmt);
        }
        if (type == "device") {
            std::string cmd = spec.value("command", cfg_.device_command);
            if (cmd.empty()) {
                cmd = std::string("aplay -q -t raw -f ") + (fmt == SampleFormat::pcm16 ? "S16_LE" : "FLOAT_LE") +
                      " -c 3 -r " + std::to_string(cfg_.sample_rate);
            }
            return std::make_unique<PipeSink>(cmd, fmt);
        }
        throw ProtocolError(code::kBadRequest, "unknown sink type '" + type + "'");
    }

    nlohmann::json op_stop() {
        std::lock_guard lock(mu_);
        if (published_.status != Status::streaming) throw ProtocolError(code::kNotStreaming, "not streaming");
        published_.status = Status::idle;
        streaming_flag_ = false;
        published_.sink_info = nullptr;
        ++published_.generation;
        return state_locked();
    }

    nlohmann::json op_set_dims(const nlohmann::json& payload) {
        const auto cues = parse_cues(payload);
        if (!payload.contains("dims")) throw ProtocolError(code::kBadRequest, "set_dims needs 'dims'");
        std::lock_guard lock(mu_);
        std::vector<std::pair<CueKind, CueSetting>> next;
        for (auto kind : cues) {
            const auto& cur = kind == CueKind::heartbeat ? published_.heartbeat : published_.purr;
            try {
                next.emplace_back(kind, CueSetting{dims_from_json(payload.at("dims"), cur.dims), false});
            } catch (const ValidationError& e) {
                throw ProtocolError(code::kInvalidDims, e.what());
            }
        }
        nlohmann::json resolved = nlohmann::json::object();
        for (auto& [kind, s] : next) {
            (kind == CueKind::heartbeat ? published_.heartbeat : published_.purr) = s;
            resolved[std::string(to_string(kind))] = to_json(s, kind);
        }
        ++published_.generation;
        return {{"applies", published_.status == Status::streaming ? "next_block" : "on_start"}, {"cues", resolved}};
    }

    nlohmann::json op_load_preset(const nlohmann::json& payload) {
        if (!payload.contains("id") || !payload.at("id").is_number_integer())
            throw ProtocolError(code::kBadRequest, "load_preset needs an integer 'id'");
        const CuePreset* preset = nullptr;
        try {
            preset = &find_preset(payload.at("id").get<int>());
        } catch (const ValidationError& e) {
            throw ProtocolError(code::kUnknownPreset, e.what());
        }
        std::lock_guard lock(mu_);
        published_.heartbeat = published_.purr = setting_from_preset(*preset);
        ++published_.generation;
        return {{"preset", to_json(*preset)},
                {"cues",
                 {{"heartbeat", to_json(published_.heartbeat, CueKind::heartbeat)},
                  {"purr", to_json(published_.purr, CueKind::purr)}}}};
    }

    nlohmann::json state_locked() const {
        return {{"status", to_string(published_.status)},
                {"stream_clock", stream_clock()},
                {"seed", published_.seed},
                {"sample_rate", cfg_.sample_rate},
                {"block_frames", cfg_.block_frames},
                {"crossfade_s", cfg_.crossfade_s},
                {"purr_model", std::string(to_string(cfg_.purr_model))},
                {"sink", published_.sink_info},
                {"generation", published_.generation},
                {"last_error", published_.last_error},
                {"cues",
                 {{"heartbeat", to_json(published_.heartbeat, CueKind::heartbeat)},
                  {"purr", to_json(published_.purr, CueKind::purr)}}}};
    }

    // Render side: adopt the latest snapshot if the lock is free right now.
    void pull_snapshot() {
        std::unique_lock lock(mu_, std::try_to_lock);
        if (!lock.owns_lock()) return;
        if (failure_) {
            if (published_.run == failed_run_id_) {
                published_.status = Status::idle;
                streaming_flag_ = false;
                published_.sink_info = nullptr;
                ++published_.generation;
            }
            published_.last_error = *failure_;
            failure_.reset();
        }
        if (published_.generation == seen_generation_) return;
        seen_generation_ = published_.generation;

        const bool want_run = published_.status == Status::streaming;
        if (run_ && (!want_run || run_->id != published_.run)) end_run(nullptr);
        if (want_run && !run_ && pending_sink_) begin_run(published_.run, std::move(pending_sink_), published_.seed,
                                                         published_.heartbeat, published_.purr);
        if (run_) {
            if (!(published_.heartbeat == run_->heartbeat)) run_->want_heartbeat = published_.heartbeat;
            else run_->want_heartbeat.reset();
            if (!(published_.purr == run_->purr)) run_->want_purr = published_.purr;
            else run_->want_purr.reset();
        }
    }

    void begin_run(std::uint64_t id, std::unique_ptr<Sink> sink, std::uint64_t seed, const CueSetting& hb,
                   const CueSetting& purr) {
        RenderJob job;
        job.heartbeat = hb;
        job.purr = purr;
        job.sample_rate = cfg_.sample_rate;
        job.seed = seed;
        job.purr_model = cfg_.purr_model;
        job.eq_q = cfg_.eq_q;
        job.crossfade_s = cfg_.crossfade_s;
        run_ = std::make_unique<Run>(Run{id, ProgramRenderer(job.program_config()), std::move(sink), hb, purr,
                                         std::nullopt, std::nullopt, 0, {}, {}, 0, {}});
        {
            std::lock_guard lk(run_log_mu_);
            run_job_ = job;
        }
        push_event({{"event", "state"}, {"status", "streaming"}, {"stream_clock", stream_clock()}});
    }

    void apply_pending_changes() {
        auto apply = [&](CueKind kind, std::optional<CueSetting>& want, CueSetting& applied) {
            if (!want || run_->renderer.crossfading(kind)) return;
            run_->renderer.apply_change(kind, resolve(*want, kind));
            applied = *want;
            {
                std::lock_guard lk(run_log_mu_);
                run_job_->schedule.push_back({run_->renderer.position(), kind, *want});
            }
            want.reset();
        };
        apply(CueKind::heartbeat, run_->want_heartbeat, run_->heartbeat);
        apply(CueKind::purr, run_->want_purr, run_->purr);
    }

    void end_run(const char* error) {
        try {
            run_->sink->close();
        } catch (const std::exception&) {
        }
        {
            std::lock_guard lk(run_log_mu_);
            if (run_job_) run_job_->duration = static_cast<double>(run_->renderer.position()) / cfg_.sample_rate;
        }
        run_.reset();
        nlohmann::json ev = {{"event", "state"}, {"status", "idle"}, {"stream_clock", stream_clock()}};
        if (error) ev["error"] = {{"code", code::kSinkError}, {"message", error}};
        push_event(std::move(ev));
    }

    // The failure is published by the next pull_snapshot that gets the lock.
    void fail_run(const std::string& why) {
        failed_run_id_ = run_->id;
        end_run(why.c_str());
        failure_ = why;
    }

    void meter(const SampleBuffer& block) {
        const auto meter_len = static_cast<std::size_t>(cfg_.sample_rate / kMeterRateHz);
        const auto monitor_len = static_cast<std::size_t>(cfg_.sample_rate / kMonitorRateHz);
        auto& r = *run_;
        for (std::size_t i = 0; i < block.frames(); ++i) {
            for (std::size_t c = 0; c < kProgramChannels; ++c) {
                const float v = std::fabs(block.channel(c)[i]);
                r.meter_peak[c] = std::max(r.meter_peak[c], v);
                r.monitor_peak[c] = std::max(r.monitor_peak[c], v);
            }
            if (++r.monitor_frames == monitor_len) {
                r.monitor.push_back(r.monitor_peak);
                r.monitor_peak = {};
                r.monitor_frames = 0;
            }
            if (++r.meter_frames == meter_len) {
                const double t = static_cast<double>(frames_total_.load() + i + 1) / cfg_.sample_rate;
                nlohmann::json mon = nlohmann::json::array();
                for (const auto& m : r.monitor) mon.push_back(m);
                push_event({{"event", "meter"},
                            {"stream_clock", t},
                            {"peak", r.meter_peak},
                            {"channels", channel_names()},
                            {"monitor", mon}});
                r.meter_peak = {};
                r.monitor.clear();
                r.meter_frames = 0;
            }
        }
    }

    void push_event(nlohmann::json ev) {
        ev["v"] = kProtocolVersion;
        backlog_.push_back(std::move(ev));
        flush_backlog();
    }

    // Events wait render-side while a reader holds the queue.
    void flush_backlog() {
        if (backlog_.empty()) return;
        std::unique_lock lock(events_mu_, std::try_to_lock);
        if (!lock.owns_lock()) return;
        for (auto& b : backlog_) events_.push_back(std::move(b));
        backlog_.clear();
        while (events_.size() > 1024) events_.pop_front();  // nobody is draining
    }

    SessionConfig cfg_;
    SinkFactory sink_factory_;

    mutable std::mutex mu_;  // guards published_ and pending_sink_
    Published published_;
    std::unique_ptr<Sink> pending_sink_;

    // Render-side state.
    std::uint64_t seen_generation_ = 0;
    std::unique_ptr<Run> run_;
    std::optional<std::string> failure_;
    std::uint64_t failed_run_id_ = 0;
    std::vector<nlohmann::json> backlog_;
    std::atomic<std::uint64_t> frames_total_{0};
    std::atomic<bool> streaming_flag_{false};

    mutable std::mutex run_log_mu_;
    std::optional<RenderJob> run_job_;

    std::mutex events_mu_;
    std::deque<nlohmann::json> events_;
};

// ---------------------------------------------------------------------------
// Real-time render loop

/// Drives Session::render_block on its own thread, paced to the sample clock
/// (or as fast as possible for file rendering and tests).
class RenderLoop {
public:
    enum class Pace { realtime, fast };

    RenderLoop(Session& s, Pace pace) : session_(s), pace_(pace) {}
    ~RenderLoop() { stop(); }

    void start() {
        if (thread_.joinable()) return;
        running_ = true;
        thread_ = std::thread([this] { run(); });
    }

    void stop() {
        running_ = false;
        if (thread_.joinable()) thread_.join();
    }

private:
    void run() {
        using clock = std::chrono::steady_clock;
        const auto& cfg = session_.config();
        const auto block = std::chrono::duration<double>(static_cast<double>(cfg.block_frames) / cfg.sample_rate);
        auto next = clock::now();
        while (running_) {
            if (session_.streaming() || pace_ == Pace::realtime) session_.render_block();
            if (pace_ == Pace::realtime || !session_.streaming()) {
                next += std::chrono::duration_cast<clock::duration>(block);
                const auto now = clock::now();
                if (next < now - std::chrono::milliseconds(200)) next = now;  // fell behind; do not burst
                std::this_thread::sleep_until(next);
            }
        }
    }

    Session& session_;
    Pace pace_;
    std::atomic<bool> running_{false};
    std::thread thread_;
};

}  // namespace purrbeat::stream
