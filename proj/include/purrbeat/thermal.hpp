#pragma once

// Thermal pad controller model: four heat settings, first-order heating and
// cooling, a shut-off timer and a discomfort interlock.

#include <array>
#include <cmath>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "purrbeat/error.hpp"

namespace purrbeat::thermal {

struct ThermalSetting {
    int id = 0;
    double lo_c = 0.0;
    double hi_c = 0.0;
    const char* label = "";

    double target_c() const { return 0.5 * (lo_c + hi_c); }
};

inline const std::array<ThermalSetting, 4>& settings() {
    static const std::array<ThermalSetting, 4> table = {{
        {1, 28.0, 28.0, "Baseline"},
        {2, 35.0, 36.0, "Mild Warmth"},
        {3, 38.0, 39.0, "Warm"},
        {4, 40.0, 43.0, "Very Warm"},
    }};
    return table;
}

inline const ThermalSetting& find_setting(int id) {
    if (id < 1 || id > static_cast<int>(settings().size()))
        throw ValidationError("thermal setting must be 1-4, got " + std::to_string(id));
    return settings()[static_cast<std::size_t>(id - 1)];
}

/// Raised when a setting increase is requested while discomfort is reported.
class InterlockError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ThermalConfig {
    double ambient_c = 22.0;
    double tau_heat_s = 120.0;
    double tau_cool_s = 480.0;

    void validate() const {
        if (!std::isfinite(ambient_c)) throw ValidationError("ambient temperature must be finite");
        if (!(tau_heat_s > 0.0) || !(tau_cool_s > 0.0)) throw ValidationError("time constants must be positive");
    }
};

struct ThermalState {
    double time_s = 0.0;
    double current_temp_c = 22.0;
    double target_temp_c = 22.0;
    double ambient_c = 22.0;
    std::optional<double> timer_remaining;  // seconds; none = no shut-off
    bool powered = false;
    std::optional<int> setting;
    bool discomfort = false;

    friend bool operator==(const ThermalState&, const ThermalState&) = default;
};

inline ThermalState initial_state(const ThermalConfig& cfg = {}) {
    cfg.validate();
    ThermalState s;
    s.current_temp_c = s.target_temp_c = s.ambient_c = cfg.ambient_c;
    return s;
}

inline ThermalState power_on(ThermalState s, std::optional<double> timer_s = std::nullopt) {
    if (timer_s && !(*timer_s >= 0.0)) throw ValidationError("timer must be >= 0 s");
    s.powered = true;
    if (timer_s) s.timer_remaining = timer_s;
    return s;
}

#if defined(__GNUC__) && !defined(__clang__)
#pragma GCC diagnostic push
#pragma GCC diagnostic ignored "-Wmaybe-uninitialized"  // GCC 11 misreads copies of empty optionals
#endif
inline ThermalState power_off(ThermalState s) {
    s.powered = false;
    s.setting.reset();
    s.timer_remaining.reset();
    s.target_temp_c = s.ambient_c;
    return s;
}
#if defined(__GNUC__) && !defined(__clang__)
#pragma GCC diagnostic pop
#endif

inline ThermalState set_timer(ThermalState s, std::optional<double> timer_s) {
    if (timer_s && !(*timer_s >= 0.0)) throw ValidationError("timer must be >= 0 s");
    s.timer_remaining = timer_s;
    return s;
}

inline ThermalState set_discomfort(ThermalState s, bool flagged) {
    s.discomfort = flagged;
    return s;
}

/// With discomfort reported, the setting may stay or go down, never up. An
/// unset setting counts as below setting 1.
inline ThermalState set_setting(ThermalState s, int id) {
    const auto& st = find_setting(id);
    if (!s.powered) throw ValidationError("thermal pad is not powered");
    if (s.discomfort && id > s.setting.value_or(0))
        throw InterlockError("discomfort reported: setting " + std::to_string(id) + " would raise from " +
                             (s.setting ? std::to_string(*s.setting) : std::string("none")));
    s.setting = id;
    s.target_temp_c = st.target_c();
    return s;
}

namespace detail {
inline void relax(ThermalState& s, double dt, const ThermalConfig& cfg) {
    const double tau = s.target_temp_c >= s.current_temp_c ? cfg.tau_heat_s : cfg.tau_cool_s;
    s.current_temp_c = s.target_temp_c + (s.current_temp_c - s.target_temp_c) * std::exp(-dt / tau);
    s.time_s += dt;
}
}  // namespace detail

/// Advances by dt seconds using the exact solution of the first-order lag. If
/// the timer runs out inside the step, the pad switches off at that instant
/// and the remainder of the step relaxes toward ambient.
inline ThermalState step(ThermalState s, double dt, const ThermalConfig& cfg = {}) {
    if (!(dt > 0.0)) throw ValidationError("step: dt must be positive");
    if (s.powered && s.timer_remaining) {
        const double left = *s.timer_remaining;
        if (left <= dt) {
            if (left > 0.0) detail::relax(s, left, cfg);
            s = power_off(s);
            if (dt - left > 0.0) detail::relax(s, dt - left, cfg);
            return s;
        }
        s.timer_remaining = left - dt;
    }
    detail::relax(s, dt, cfg);
    return s;
}

// ---------------------------------------------------------------------------
// Session log and scripts

inline constexpr const char* kLogHeader = "# purrbeat-thermal-log v1";

inline std::string format_snapshot(const ThermalState& s, const std::string& event) {
    char timer[32] = "none";
    if (s.timer_remaining) std::snprintf(timer, sizeof timer, "%.3f", *s.timer_remaining);
    char buf[256];
    std::snprintf(buf, sizeof buf, "t=%.3f event=%s temp=%.3f target=%.3f setting=%s powered=%d timer=%s discomfort=%d",
                  s.time_s, event.c_str(), s.current_temp_c, s.target_temp_c,
                  s.setting ? std::to_string(*s.setting).c_str() : "none", s.powered ? 1 : 0,
                  timer, s.discomfort ? 1 : 0);
    return buf;
}

/// Owns a state and records a snapshot after every event.
class ThermalSession {
public:
    explicit ThermalSession(const ThermalConfig& cfg = {}) : cfg_(cfg), state_(initial_state(cfg)) {
        log_.push_back(kLogHeader);
        record("init");
    }

    void power_on(std::optional<double> timer_s = std::nullopt) { apply(thermal::power_on(state_, timer_s), "power_on"); }
    void power_off() { apply(thermal::power_off(state_), "power_off"); }
    void set_timer(std::optional<double> t) { apply(thermal::set_timer(state_, t), "timer"); }
    void set_discomfort(bool f) { apply(thermal::set_discomfort(state_, f), f ? "discomfort_on" : "discomfort_off"); }

    void set_setting(int id) {
        try {
            apply(thermal::set_setting(state_, id), "set_setting");
        } catch (const InterlockError&) {
            record("rejected_increase");
            throw;
        }
    }

    /// Advances `duration` seconds in increments of at most `dt`.
    void advance(double duration, double dt) {
        if (!(duration > 0.0) || !(dt > 0.0)) throw ValidationError("advance: durations must be positive");
        double left = duration;
        while (left > 1e-12) {
            const double h = std::min(dt, left);
            const bool was_powered = state_.powered;
            state_ = thermal::step(state_, h, cfg_);
            left -= h;
            record(was_powered && !state_.powered ? "timer_expired" : "step");
        }
    }

    const ThermalState& state() const { return state_; }
    const ThermalConfig& config() const { return cfg_; }
    const std::vector<std::string>& log() const { return log_; }

    void write_log(std::ostream& os) const {
        for (const auto& l : log_) os << l << "\n";
    }

private:
    void apply(const ThermalState& s, const char* event) {
        state_ = s;
        record(event);
    }
    void record(const std::string& event) { log_.push_back(format_snapshot(state_, event)); }

    ThermalConfig cfg_;
    ThermalState state_;
    std::vector<std::string> log_;
};

struct ScriptResult {
    std::size_t commands = 0;
    std::vector<std::string> rejections;  // interlock refusals, which are expected outcomes
};

/// Runs a line-oriented script against a session:
///
///   power on [timer SECONDS] | power off | set N | timer SECONDS|off
///   discomfort on|off | advance SECONDS [every SECONDS]
///
/// '#' starts a comment. Malformed lines throw ParseError with the byte
/// offset of the line; interlock refusals are logged and collected.
inline ScriptResult run_script(std::istream& in, ThermalSession& session) {
    ScriptResult result;
    std::string line;
    std::size_t offset = 0;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        const std::size_t at = offset;
        offset += line.size() + 1;
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
        std::istringstream ls(line);
        std::vector<std::string> w;
        for (std::string tok; ls >> tok;) w.push_back(tok);
        if (w.empty()) continue;

        auto bad = [&](const std::string& why) -> ParseError {
            return ParseError("line " + std::to_string(lineno) + ": " + why, at);
        };
        auto number = [&](const std::string& s) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(s, &used);
            } catch (const std::exception&) {
                throw bad("expected a number, got '" + s + "'");
            }
            if (used != s.size() || !std::isfinite(v)) throw bad("expected a number, got '" + s + "'");
            return v;
        };

        try {
            if (w[0] == "power" && w.size() >= 2 && w[1] == "on") {
                if (w.size() == 2) session.power_on();
                else if (w.size() == 4 && w[2] == "timer") session.power_on(number(w[3]));
                else throw bad("usage: power on [timer SECONDS]");
            } else if (w[0] == "power" && w.size() == 2 && w[1] == "off") {
                session.power_off();
            } else if (w[0] == "set" && w.size() == 2) {
                const double v = number(w[1]);
                if (v != std::floor(v)) throw bad("setting must be an integer");
                session.set_setting(static_cast<int>(v));
            } else if (w[0] == "timer" && w.size() == 2) {
                session.set_timer(w[1] == "off" ? std::nullopt : std::optional<double>(number(w[1])));
            } else if (w[0] == "discomfort" && w.size() == 2 && (w[1] == "on" || w[1] == "off")) {
                session.set_discomfort(w[1] == "on");
            } else if (w[0] == "advance" && (w.size() == 2 || (w.size() == 4 && w[2] == "every"))) {
                const double d = number(w[1]);
                session.advance(d, w.size() == 4 ? number(w[3]) : d);
            } else {
                throw bad("unknown command '" + line + "'");
            }
        } catch (const InterlockError& e) {
            result.rejections.push_back("line " + std::to_string(lineno) + ": " + e.what());
        } catch (const ValidationError& e) {
            throw bad(e.what());
        }
        ++result.commands;
    }
    return result;
}

}  // namespace purrbeat::thermal
