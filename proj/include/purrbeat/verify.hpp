#pragma once

// Property checks of a rendered program against the parameters declared in
// its sidecar. The same checks back the `verify` command and the acceptance
// suite.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "purrbeat/analysis.hpp"
#include "purrbeat/render.hpp"

namespace purrbeat::verify {

enum class Status { pass, fail, skip };

inline const char* to_string(Status s) {
    switch (s) {
        case Status::pass: return "PASS";
        case Status::fail: return "FAIL";
        default: return "SKIP";
    }
}

struct CheckResult {
    std::string name;
    Status status = Status::skip;
    std::string detail;
};

struct Report {
    std::vector<CheckResult> checks;

    bool passed() const {
        return std::none_of(checks.begin(), checks.end(), [](const auto& c) { return c.status == Status::fail; });
    }

    const CheckResult* find(const std::string& name) const {
        for (const auto& c : checks)
            if (c.name == name) return &c;
        return nullptr;
    }

    nlohmann::json to_json() const {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& c : checks) arr.push_back({{"name", c.name}, {"status", to_string(c.status)}, {"detail", c.detail}});
        return {{"passed", passed()}, {"checks", arr}};
    }
};

namespace tolerance {
inline constexpr double kSpectralHz = 0.5;
inline constexpr double kHeartbeatBpm = 1.0;
inline constexpr double kPurrPpm = 2.0;
inline constexpr double kModulationPeriodS = 2.0;
inline constexpr double kBreakpointS = 0.020;
inline constexpr double kBoostDb = 0.5;
inline constexpr double kBeatAmplitude = 1e-3;
inline constexpr double kMeanWindowFraction = 0.1;  // of the A_r range, about +/-5 standard errors at 200 beats
inline constexpr std::size_t kMeanMinBeats = 200;
inline constexpr double kMinSpectralDurationS = 4.0;
}  // namespace tolerance

inline constexpr analysis::Band kHeartbeatBand{15.0, 35.0};
inline constexpr analysis::Band kPurrBand{50.0, 70.0};

inline std::string fmt(const char* f, double a) {
    char b[128];
    std::snprintf(b, sizeof b, f, a);
    return b;
}
inline std::string fmt(const char* f, double a, double b2) {
    char b[160];
    std::snprintf(b, sizeof b, f, a, b2);
    return b;
}
inline std::string fmt(const char* f, double a, double b2, double c) {
    char b[200];
    std::snprintf(b, sizeof b, f, a, b2, c);
    return b;
}

inline CheckResult make(std::string name, bool ok, std::string detail) {
    return {std::move(name), ok ? Status::pass : Status::fail, std::move(detail)};
}
inline CheckResult skipped(std::string name, std::string why) { return {std::move(name), Status::skip, std::move(why)}; }

// ---------------------------------------------------------------------------
// Independent reference signals

/// One heartbeat at unit amplitude, written directly from the pulse
/// table (frequency, start, duration) for beat interval n.
inline double reference_beat(double tau, double n) {
    struct Pulse { double hz, start, length; };
    const Pulse pulses[] = {{25.0, 0.0, 2.0 * n / 21.33},
                            {30.0, 0.0, 2.0 * n / 12.8},
                            {20.0, n / 4.0, 2.0 * n / 12.8},
                            {30.0, n / 4.0, 2.0 * n / 14.2}};
    double v = 0.0;
    for (const auto& p : pulses)
        if (tau >= p.start && tau < p.start + p.length) v += std::sin(2.0 * M_PI * p.hz * tau);
    return v;
}

/// Purr cycle starts implied by the rate law: each cycle lasts 60/ppm(start).
inline std::vector<double> reference_cycle_starts(const ResolvedCueParams& p, PurrModel model, double duration) {
    std::vector<double> starts;
    for (double t = 0.0; t < duration;) {
        starts.push_back(t);
        const double ppm = model == PurrModel::baseline_eq1
                               ? 70.0
                               : p.base_rate * (1.0 + p.rate_mod_depth * std::sin(2.0 * M_PI * t / p.rate_mod_period));
        t += 60.0 / ppm;
    }
    return starts;
}

/// Undoes the 45 Hz boost so the generator's own waveform can be analysed.
inline std::vector<float> remove_boost(std::span<const float> x, const ResolvedCueParams& p, int fs, double q) {
    std::vector<float> out(x.begin(), x.end());
    if (p.boost_gain_db == 0.0) return out;
    Biquad inv(peaking_coefficients(endpoints::kBoostCenterHz, -p.boost_gain_db, q, fs));
    for (float& v : out) v = static_cast<float>(inv.process(v));
    return out;
}

// ---------------------------------------------------------------------------
// Individual checks

inline CheckResult check_flanks_identical(const SampleBuffer& b) {
    const bool same = std::equal(b.channel(0).begin(), b.channel(0).end(), b.channel(1).begin());
    return make("flank_channels_identical", same, same ? "left and right flank identical" : "flank channels differ");
}

inline CheckResult check_no_clipping(const SampleBuffer& b, std::size_t reported_clips) {
    float peak = 0.0f;
    for (std::size_t c = 0; c < b.channels(); ++c) peak = std::max(peak, peak_abs(b.channel(c)));
    const bool ok = peak < 1.0f && reported_clips == 0;  // full scale in a file means it was clamped
    return make("no_clipping", ok,
                fmt("peak %.4f, clipped samples %.0f", peak, static_cast<double>(reported_clips)));
}

inline CheckResult check_silent(const std::string& name, std::span<const float> x) {
    const float peak = peak_abs(x);
    return make(name, peak == 0.0f, fmt("muted cue, peak %.3g", peak));
}

inline CheckResult check_heartbeat_spectrum(std::span<const float> x, int fs) {
    const std::string name = "heartbeat_spectrum";
    if (x.size() < tolerance::kMinSpectralDurationS * fs) return skipped(name, "render shorter than 4 s");
    const auto f = analysis::dominant_frequencies(x, fs, 3);
    bool ok = !f.empty();
    std::string d = "dominant";
    for (double v : f) {
        const bool in = std::fabs(v - 20.0) <= tolerance::kSpectralHz || std::fabs(v - 25.0) <= tolerance::kSpectralHz ||
                        std::fabs(v - 30.0) <= tolerance::kSpectralHz;
        ok = ok && in;
        d += fmt(" %.3f", v);
    }
    return make(name, ok, d + " Hz, expected within {20, 25, 30} +/-0.5");
}

inline CheckResult check_purr_spectrum(std::span<const float> x, int fs) {
    const std::string name = "purr_spectrum";
    if (x.size() < tolerance::kMinSpectralDurationS * fs) return skipped(name, "render shorter than 4 s");
    auto f = analysis::dominant_frequencies(x, fs, 2);
    std::sort(f.begin(), f.end());
    const bool ok = f.size() == 2 && std::fabs(f[0] - 35.0) <= tolerance::kSpectralHz &&
                    std::fabs(f[1] - 60.0) <= tolerance::kSpectralHz;
    std::string d = "dominant";
    for (double v : f) d += fmt(" %.3f", v);
    return make(name, ok, d + " Hz, expected 35 and 60 +/-0.5");
}

/// Measured event-rate trajectory against base * (1 +/- depth) and the LFO period.
inline std::vector<CheckResult> check_rate(const std::string& prefix, const std::vector<double>& onsets,
                                           double base, double depth, double period, double duration, double tol) {
    std::vector<CheckResult> out;
    if (onsets.size() < 3) {
        out.push_back(make(prefix + "_rate", false, fmt("only %.0f onsets detected", static_cast<double>(onsets.size()))));
        return out;
    }
    const auto traj = analysis::estimate_rate_trajectory(onsets);
    const double lo = base * (1.0 - depth), hi = base * (1.0 + depth);
    if (depth == 0.0) {
        const bool ok = std::fabs(traj.mean() - base) <= tol && traj.min() >= base - tol && traj.max() <= base + tol;
        out.push_back(make(prefix + "_rate", ok,
                           fmt("mean %.3f, range [%.3f, %.3f]", traj.mean(), traj.min(), traj.max()) +
                               fmt(", expected %.2f +/-%.1f", base, tol)));
        return out;
    }
    const bool ok = traj.min() >= lo - tol && traj.max() <= hi + tol;
    if (duration + 1e-9 >= 2.0 * period) {
        const bool ext = std::fabs(traj.min() - lo) <= tol && std::fabs(traj.max() - hi) <= tol;
        out.push_back(make(prefix + "_rate", ok && ext,
                           fmt("extrema %.3f / %.3f", traj.min(), traj.max()) +
                               fmt(", expected %.3f / %.3f", lo, hi) + fmt(" +/-%.1f", tol)));
        const auto m = analysis::estimate_modulation_period(traj);
        out.push_back(make(prefix + "_modulation_period", std::fabs(m.period_s - period) <= tolerance::kModulationPeriodS,
                           fmt("period %.2f s, expected %.1f +/-2", m.period_s, period)));
    } else {
        out.push_back(make(prefix + "_rate", ok,
                           fmt("range [%.3f, %.3f]", traj.min(), traj.max()) +
                               fmt(" within [%.3f, %.3f]", lo - tol, hi + tol) + " (too short for extrema)"));
        out.push_back(skipped(prefix + "_modulation_period", "render shorter than two modulation periods"));
    }
    return out;
}

/// Per-beat amplitudes A_r, recovered by least-squares projection onto the
/// reference beat. Each beat's start is located to the sample, then the
/// intervals are re-derived from the located starts and the fit repeated,
/// since the template shape depends on the interval.
inline std::vector<double> estimate_beat_amplitudes(std::span<const float> x, int fs, const std::vector<double>& onsets,
                                                    double scale) {
    const auto size = static_cast<std::ptrdiff_t>(x.size());
    std::vector<double> energy(x.size() + 1, 0.0);  // prefix sums of x^2
    for (std::size_t i = 0; i < x.size(); ++i) energy[i + 1] = energy[i] + static_cast<double>(x[i]) * x[i];

    std::vector<double> tpl;
    double tt = 0.0;
    auto build = [&](double n) {
        tpl.resize(static_cast<std::size_t>(std::ceil(0.45 * n * fs)));
        tt = 0.0;
        for (std::size_t j = 0; j < tpl.size(); ++j) {
            tpl[j] = reference_beat(static_cast<double>(j) / fs, n);
            tt += tpl[j] * tpl[j];
        }
    };
    // Residual energy of the best amplitude with the beat starting at sample k.
    auto fit_at = [&](std::ptrdiff_t k, double* amp) {
        if (k < 0 || k + static_cast<std::ptrdiff_t>(tpl.size()) > size) return std::numeric_limits<double>::infinity();
        double xy = 0.0;
        for (std::size_t j = 0; j < tpl.size(); ++j) xy += x[static_cast<std::size_t>(k) + j] * tpl[j];
        *amp = xy / tt;
        return energy[static_cast<std::size_t>(k) + tpl.size()] - energy[static_cast<std::size_t>(k)] - xy * xy / tt;
    };
    auto locate = [&](std::ptrdiff_t guess, std::ptrdiff_t span, std::ptrdiff_t coarse, double* res) {
        double best_r = std::numeric_limits<double>::infinity(), a = 0.0;
        std::ptrdiff_t best_k = guess;
        for (std::ptrdiff_t k = guess - span; k <= guess + span; k += coarse) {
            const double r = fit_at(k, &a);
            if (r < best_r) { best_r = r; best_k = k; }
        }
        const std::ptrdiff_t centre = best_k;
        for (std::ptrdiff_t k = centre - 2 * coarse; k <= centre + 2 * coarse; ++k) {
            const double r = fit_at(k, &a);
            if (r < best_r) { best_r = r; best_k = k; }
        }
        *res = best_r;
        return best_k;
    };

    const std::ptrdiff_t coarse = std::max<std::ptrdiff_t>(1, fs / 1000);
    const std::size_t m = onsets.size();
    std::vector<std::ptrdiff_t> starts(m);
    for (std::size_t b = 0; b < m; ++b) starts[b] = static_cast<std::ptrdiff_t>(std::llround(onsets[b] * fs));
    std::vector<bool> located(m, false);
    for (int pass = 0; pass < 4 && m >= 2; ++pass) {
        const auto prev = starts;
        for (std::size_t b = 0; b < m; ++b) {
            // the last onset has no interval of its own; borrow the previous one
            const std::size_t i = b + 1 < m ? b : b - 1;
            const double n = pass == 0 ? onsets[i + 1] - onsets[i] : static_cast<double>(prev[i + 1] - prev[i]) / fs;
            build(n);
            double r = 0.0;
            starts[b] = pass == 0 ? locate(prev[b], fs / 20, coarse, &r) : locate(prev[b], 4, 1, &r);
            located[b] = std::isfinite(r);
        }
    }
    std::vector<double> amps;
    for (std::size_t b = 0; b + 1 < m; ++b) {
        if (!located[b] || !located[b + 1]) continue;  // beat or its successor runs past the render
        build(static_cast<double>(starts[b + 1] - starts[b]) / fs);
        double amp = 0.0;
        fit_at(starts[b], &amp);
        amps.push_back(amp / scale);
    }
    return amps;
}

inline CheckResult check_beat_amplitudes(std::span<const float> generator_out, int fs, const std::vector<double>& onsets,
                                         const ResolvedCueParams& p) {
    const std::string name = "beat_amplitudes";
    if (onsets.size() < 2) return make(name, false, "fewer than two beats detected");
    const auto amps = estimate_beat_amplitudes(generator_out, fs, onsets, kStructuralNormalizer * p.master_gain);
    const double lo = *std::min_element(amps.begin(), amps.end());
    const double hi = *std::max_element(amps.begin(), amps.end());
    const double mean = std::accumulate(amps.begin(), amps.end(), 0.0) / amps.size();
    const double tol = tolerance::kBeatAmplitude;
    bool ok = lo >= p.event_amp_min - tol && hi <= p.event_amp_max + tol;
    std::string d = fmt("%.0f beats, A_r in [%.4f, %.4f]", static_cast<double>(amps.size()), lo, hi) +
                    fmt(" mean %.4f, allowed [%.2f, %.2f]", mean, p.event_amp_min, p.event_amp_max);
    if (p.event_amp_max - p.event_amp_min < tol) {
        ok = ok && std::fabs(lo - p.event_amp_min) <= tol && std::fabs(hi - p.event_amp_min) <= tol;
        d += ", constant expected";
    } else if (amps.size() >= tolerance::kMeanMinBeats) {
        const double c = 0.5 * (p.event_amp_min + p.event_amp_max);
        const double w = tolerance::kMeanWindowFraction * (p.event_amp_max - p.event_amp_min);
        ok = ok && std::fabs(mean - c) <= w;
        d += fmt(", mean window [%.3f, %.3f]", c - w, c + w);
    } else {
        d += ", too few beats for the mean test";
    }
    return make(name, ok, d);
}

struct EnvelopeTiming {
    std::size_t cycles = 0;
    double worst_error_s = 0.0;
};

/// Fits every complete cycle of the 60 Hz articulation envelope and compares
/// its five breakpoints with the analytic cycle at the nearest start.
inline EnvelopeTiming measure_envelope_timing(std::span<const float> generator_out, int fs, const ResolvedCueParams& p,
                                              PurrModel model) {
    const auto env = analysis::extract_envelope(generator_out, fs, kPurrBand);
    const auto onsets = analysis::detect_onsets(env);
    const auto ref = reference_cycle_starts(p, model, static_cast<double>(generator_out.size()) / fs);
    EnvelopeTiming out;
    for (std::size_t m = 0; m + 1 < onsets.size(); ++m) {
        const auto bp = analysis::fit_envelope_breakpoints(env, std::max(0.0, onsets[m] - 0.04), onsets[m + 1] - 0.04);
        const auto it = std::min_element(ref.begin(), ref.end(),
                                         [&](double a, double b) { return std::fabs(a - bp.onset) < std::fabs(b - bp.onset); });
        const std::size_t idx = static_cast<std::size_t>(it - ref.begin());
        const double start = *it;
        const double period = idx + 1 < ref.size() ? ref[idx + 1] - start : 60.0 / p.base_rate;
        const double k = std::max(period / 2.0, 0.3);
        const double expect[5] = {start, start + 0.2, start + 0.3, start + k, start + k + 0.25};
        const auto got = bp.knots();
        for (int i = 0; i < 5; ++i) out.worst_error_s = std::max(out.worst_error_s, std::fabs(got[static_cast<std::size_t>(i)] - expect[i]));
        ++out.cycles;
    }
    return out;
}

inline CheckResult check_purr_envelope(std::span<const float> generator_out, int fs, const ResolvedCueParams& p,
                                       PurrModel model) {
    const std::string name = "purr_envelope_timing";
    const auto t = measure_envelope_timing(generator_out, fs, p, model);
    if (t.cycles == 0) return make(name, false, "no complete purr cycle found");
    return make(name, t.worst_error_s <= tolerance::kBreakpointS,
                fmt("%.0f cycles, worst breakpoint error %.1f ms (limit 20 ms)", static_cast<double>(t.cycles),
                    t.worst_error_s * 1000.0));
}

/// Steady-state gain of the configured boost stage at `freq_hz`, measured by
/// running a test tone through it.
inline double measured_gain_db(const PeakingEqConfig& cfg, double freq_hz) {
    const std::size_t n = static_cast<std::size_t>(cfg.sample_rate) * 2;
    std::vector<float> in(n), out(n);
    Biquad f(cfg.coefficients());
    for (std::size_t i = 0; i < n; ++i) {
        in[i] = static_cast<float>(0.25 * std::sin(2.0 * M_PI * freq_hz * static_cast<double>(i) / cfg.sample_rate));
        out[i] = static_cast<float>(f.process(in[i]));
    }
    const std::size_t settle = n / 2;
    return 20.0 * std::log10(analysis::sine_amplitude(out, cfg.sample_rate, freq_hz, settle) /
                             analysis::sine_amplitude(in, cfg.sample_rate, freq_hz, settle));
}

inline CheckResult check_boost(const std::string& name, const ResolvedCueParams& p, int fs, double q) {
    const auto cfg = boost_config(p, fs, q);
    const double g45 = measured_gain_db(cfg, endpoints::kBoostCenterHz);
    const double g1k = measured_gain_db(cfg, 1000.0);
    const bool ok = std::fabs(g45 - p.boost_gain_db) <= tolerance::kBoostDb && std::fabs(g1k) <= tolerance::kBoostDb;
    return make(name, ok, fmt("%.2f dB at 45 Hz (expected %.2f), %.2f dB at 1 kHz", g45, p.boost_gain_db, g1k));
}

// ---------------------------------------------------------------------------
// Whole-render verification

inline std::vector<std::uint8_t> encode(const SampleBuffer& b, SampleFormat f) {
    std::string bytes;
    wave_detail::append_frames(bytes, b, 0, b.frames(), f);
    return {bytes.begin(), bytes.end()};
}

/// Checks that need only the cue's own channel and its resolved parameters.
inline void verify_heartbeat(Report& r, std::span<const float> ch, int fs, const ResolvedCueParams& p, double q,
                             double duration) {
    if (p.master_gain == 0.0) {
        r.checks.push_back(check_silent("heartbeat_silent", ch));
        return;
    }
    r.checks.push_back(check_boost("heartbeat_boost", p, fs, q));
    r.checks.push_back(check_heartbeat_spectrum(ch, fs));
    const auto gen = remove_boost(ch, p, fs, q);
    const auto onsets = analysis::detect_onsets(gen, fs, kHeartbeatBand, analysis::heartbeat_onset_options());
    for (auto& c : check_rate("heartbeat", onsets, p.base_rate, p.rate_mod_depth, p.rate_mod_period, duration,
                              tolerance::kHeartbeatBpm))
        r.checks.push_back(std::move(c));
    r.checks.push_back(check_beat_amplitudes(gen, fs, onsets, p));
}

inline void verify_purr(Report& r, std::span<const float> ch, int fs, const ResolvedCueParams& p, PurrModel model,
                        double q, double duration) {
    if (p.master_gain == 0.0) {
        r.checks.push_back(check_silent("purr_silent", ch));
        return;
    }
    r.checks.push_back(check_boost("purr_boost", p, fs, q));
    r.checks.push_back(check_purr_spectrum(ch, fs));
    const auto gen = remove_boost(ch, p, fs, q);
    const auto onsets = analysis::detect_onsets(gen, fs, kPurrBand);
    const bool fixed = model == PurrModel::baseline_eq1;
    for (auto& c : check_rate("purr", onsets, fixed ? 70.0 : p.base_rate, fixed ? 0.0 : p.rate_mod_depth,
                              p.rate_mod_period, duration, tolerance::kPurrPpm))
        r.checks.push_back(std::move(c));
    r.checks.push_back(check_purr_envelope(gen, fs, p, model));
}

inline Report verify_render(const SampleBuffer& b, const Sidecar& side) {
    Report r;
    const auto& job = side.job;
    const std::size_t expected = frames_for(job.duration, job.sample_rate);
    const bool layout = b.channels() == kProgramChannels && b.sample_rate() == job.sample_rate &&
                        b.frames() == expected && side.frames == expected;
    r.checks.push_back(make("file_layout", layout,
                            fmt("%.0f channels, %.0f Hz, ", static_cast<double>(b.channels()), b.sample_rate()) +
                                fmt("%.0f frames (expected %.0f)", static_cast<double>(b.frames()),
                                    static_cast<double>(expected))));
    if (!layout) return r;
    r.checks.push_back(check_flanks_identical(b));

    const auto again = render_buffer(job);
    const bool same = encode(again.buffer, job.format) == encode(b, job.format);
    r.checks.push_back(make("reproducible", same, same ? "re-render from sidecar is byte-identical"
                                                       : "re-render from sidecar differs"));
    r.checks.push_back(check_no_clipping(b, side.clip_count[0] + side.clip_count[1] + side.clip_count[2] +
                                                again.report.total_clips()));

    if (!job.schedule.empty()) {
        r.checks.push_back(skipped("signal_laws", "parameter schedule present; laws hold only between changes"));
        return r;
    }
    const int fs = job.sample_rate;
    verify_heartbeat(r, b.channel(0), fs, resolve(job.heartbeat, CueKind::heartbeat), job.eq_q, job.duration);
    verify_purr(r, b.channel(2), fs, resolve(job.purr, CueKind::purr), job.purr_model, job.eq_q, job.duration);
    return r;
}

inline Report verify_file(const std::string& wave_path) {
    const auto side = read_sidecar(sidecar_path(wave_path));
    return verify_render(read_wave(wave_path), side);
}

}  // namespace purrbeat::verify
