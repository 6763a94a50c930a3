#pragma once

// Purr cue. A continuous 35 Hz carrier plus a 60 Hz component articulated by a
// per-cycle envelope A(t):
//
//   t/0.2                 on [0, 0.2)
//   1 - (t - 0.2)         on [0.2, 0.3)
//   0.9                   on [0.3, k)
//   0.9 - 3.6 (t - k)     on [k, k + 0.25)
//   0                     afterwards,        k = 60 / (2 ppm)
//
// The final model multiplies by a slow amplitude LFO V(t) and modulates ppm
// sinusoidally; the baseline model runs at a fixed 70 ppm with V = 1.

#include <algorithm>
#include <cstdint>
#include <string_view>
#include <vector>

#include "purrbeat/heartbeat.hpp"
#include "purrbeat/params.hpp"
#include "purrbeat/synth_core.hpp"

namespace purrbeat {

enum class PurrModel { baseline_eq1, final_eq3 };

inline std::string_view to_string(PurrModel m) {
    return m == PurrModel::baseline_eq1 ? "baseline_eq1" : "final_eq3";
}

inline PurrModel parse_purr_model(std::string_view s) {
    if (s == "baseline_eq1" || s == "baseline") return PurrModel::baseline_eq1;
    if (s == "final_eq3" || s == "final") return PurrModel::final_eq3;
    throw ValidationError("unknown purr model '" + std::string(s) + "'");
}

namespace purr_shape {
inline constexpr double kCarrierHz = 35.0;
inline constexpr double kArticulationHz = 60.0;
inline constexpr double kAttackS = 0.2;
inline constexpr double kDecayS = 0.1;
inline constexpr double kSustain = 0.9;
inline constexpr double kReleaseS = 0.25;
}  // namespace purr_shape

struct EnvelopeValue {
    double value = 0.0;
    bool release_clamped = false;  // k fell inside attack/decay; release moved to 0.3 s
};

/// A(t) for a given release start k (seconds into the cycle).
inline EnvelopeValue purr_envelope_at(double t, double k) {
    using namespace purr_shape;
    if (t < 0.0) throw ValidationError("purr_envelope: negative cycle time");
    EnvelopeValue out;
    const double decay_end = kAttackS + kDecayS;
    double release = k;
    if (release < decay_end) {
        release = decay_end;
        out.release_clamped = true;
    }
    if (t < kAttackS) out.value = t / kAttackS;
    else if (t < decay_end) out.value = 1.0 - (1.0 - kSustain) / kDecayS * (t - kAttackS);
    else if (t < release) out.value = kSustain;
    else if (t < release + kReleaseS) out.value = kSustain - kSustain / kReleaseS * (t - release);
    else out.value = 0.0;
    return out;
}

inline EnvelopeValue purr_envelope(double t_in_cycle, double ppm) {
    if (!(ppm > 0.0)) throw ValidationError("purr_envelope: ppm must be positive");
    return purr_envelope_at(t_in_cycle, 60.0 / (2.0 * ppm));
}

struct PurrCycle {
    double start = 0.0;
    double period = 0.0;
    double ppm = 0.0;
    double release_start = 0.0;  // k
    bool release_clamped = false;
};

class PurrVoice {
public:
    PurrVoice(const ResolvedCueParams& params, int sample_rate, PurrModel model)
        : params_(params), sample_rate_(sample_rate), model_(model) {
        if (params.kind != CueKind::purr) throw ValidationError("purr voice needs purr params");
        if (sample_rate < kMinSynthSampleRate) throw ValidationError("sample rate must be >= 2000 Hz");
    }

    double next() {
        using namespace purr_shape;
        const double t = static_cast<double>(index_++) / sample_rate_;
        while (!started_ || t >= cycle_.start + cycle_.period) start_cycle();
        const double a = purr_envelope_at(t - cycle_.start, cycle_.release_start).value;
        const double body = std::sin(kTwoPi * kCarrierHz * t) + a * std::sin(kTwoPi * kArticulationHz * t);
        return amplitude_lfo(t) * body * kStructuralNormalizer * params_.master_gain;
    }

    /// V(t). The final model maps [event_amp_min, event_amp_max] onto the
    /// range of a sinusoid with the rate-modulation period.
    double amplitude_lfo(double t) const {
        if (model_ == PurrModel::baseline_eq1) return 1.0;
        const double mean = 0.5 * (params_.event_amp_min + params_.event_amp_max);
        const double depth = 0.5 * (params_.event_amp_max - params_.event_amp_min);
        return mean + depth * std::sin(kTwoPi * t / params_.rate_mod_period);
    }

    PurrVoice with_params(const ResolvedCueParams& p) const {
        PurrVoice v = *this;
        v.params_ = p;
        return v;
    }

    const ResolvedCueParams& params() const { return params_; }
    PurrModel model() const { return model_; }
    std::uint64_t position() const { return index_; }
    const std::vector<PurrCycle>& cycles() const { return cycles_; }
    void keep_cycles(bool keep) { keep_cycles_ = keep; }
    bool any_release_clamped() const { return any_clamped_; }

private:
    void start_cycle() {
        const double start = started_ ? cycle_.start + cycle_.period : 0.0;
        started_ = true;
        const double ppm = model_ == PurrModel::baseline_eq1
                               ? endpoints::kPurrBasePpm
                               : rate_lfo(params_.base_rate, params_.rate_mod_depth, params_.rate_mod_period, start);
        cycle_.start = start;
        cycle_.ppm = ppm;
        cycle_.period = 60.0 / ppm;
        cycle_.release_start = 60.0 / (2.0 * ppm);
        cycle_.release_clamped = cycle_.release_start < purr_shape::kAttackS + purr_shape::kDecayS;
        any_clamped_ = any_clamped_ || cycle_.release_clamped;
        if (keep_cycles_) cycles_.push_back(cycle_);
    }

    ResolvedCueParams params_;
    int sample_rate_;
    PurrModel model_;
    std::uint64_t index_ = 0;
    bool started_ = false;
    PurrCycle cycle_;
    bool any_clamped_ = false;
    bool keep_cycles_ = false;
    std::vector<PurrCycle> cycles_;
};

struct PurrSpec {
    ResolvedCueParams params;
    double duration = 0.0;
    int sample_rate = 48000;
    std::uint64_t seed = 0;  // the purr draws no random numbers; kept for job symmetry
    PurrModel model = PurrModel::final_eq3;

    void validate() const {
        if (params.kind != CueKind::purr) throw ValidationError("purr spec needs purr params");
        if (!(duration > 0.0)) throw ValidationError("duration must be positive");
        if (sample_rate < kMinSynthSampleRate) throw ValidationError("sample rate must be >= 2000 Hz");
    }
};

struct PurrRender {
    SampleBuffer buffer;
    std::vector<PurrCycle> cycles;
};

inline PurrRender synth_purr_with_cycles(const PurrSpec& spec) {
    spec.validate();
    PurrVoice voice(spec.params, spec.sample_rate, spec.model);
    voice.keep_cycles(true);
    std::vector<float> out(frames_for(spec.duration, spec.sample_rate));
    for (float& s : out) s = static_cast<float>(voice.next());
    return {SampleBuffer::mono(std::move(out), spec.sample_rate), voice.cycles()};
}

inline SampleBuffer synth_purr(const PurrSpec& spec) { return synth_purr_with_cycles(spec).buffer; }

}  // namespace purrbeat
