#pragma once

// Heartbeat cue: per beat, two atrial and two ventricular sine pulses whose
// durations scale with the beat interval n:
//
//   atrial     25 Hz on [0, 2n/21.33)      30 Hz on [0, 2n/12.8)
//   ventricular 20 Hz on [n/4, n/4 + 2n/12.8)  30 Hz on [n/4, n/4 + 2n/14.2)
//
// The sum is scaled by a per-beat amplitude A_r, the structural normalizer and
// the master gain. bpm is sampled from the rate LFO at each onset and held.

#include <cstdint>
#include <vector>

#include "purrbeat/params.hpp"
#include "purrbeat/synth_core.hpp"

namespace purrbeat {

inline constexpr int kMinSynthSampleRate = 2000;

namespace heartbeat_shape {
inline constexpr double kAtrial1Hz = 25.0;
inline constexpr double kAtrial2Hz = 30.0;
inline constexpr double kVentricular1Hz = 20.0;
inline constexpr double kVentricular2Hz = 30.0;
inline constexpr double kAtrial1Divisor = 21.33;
inline constexpr double kAtrial2Divisor = 12.8;
inline constexpr double kVentricular1Divisor = 12.8;
inline constexpr double kVentricular2Divisor = 14.2;
inline constexpr double kVentricularOnsetFraction = 0.25;

/// Unit-amplitude beat at local time `tau` for beat interval `n` (seconds).
inline double unit_beat(double tau, double n) {
    if (tau < 0.0 || tau >= n) return 0.0;
    double v = 0.0;
    if (tau < 2.0 * n / kAtrial1Divisor) v += std::sin(kTwoPi * kAtrial1Hz * tau);
    if (tau < 2.0 * n / kAtrial2Divisor) v += std::sin(kTwoPi * kAtrial2Hz * tau);
    const double ven = kVentricularOnsetFraction * n;
    if (tau >= ven) {
        if (tau < ven + 2.0 * n / kVentricular1Divisor) v += std::sin(kTwoPi * kVentricular1Hz * tau);
        if (tau < ven + 2.0 * n / kVentricular2Divisor) v += std::sin(kTwoPi * kVentricular2Hz * tau);
    }
    return v;
}
}  // namespace heartbeat_shape

struct BeatEvent {
    double onset = 0.0;     // seconds
    double interval = 0.0;  // seconds until the next onset
    double bpm = 0.0;
    double amplitude = 0.0;  // A_r
};

/// Sample-by-sample heartbeat generator. Output depends only on the sample
/// index, the parameters and the seed, never on how calls are grouped.
class HeartbeatVoice {
public:
    HeartbeatVoice(const ResolvedCueParams& params, int sample_rate, std::uint64_t seed)
        : params_(params), sample_rate_(sample_rate), rng_(seed) {
        if (params.kind != CueKind::heartbeat) throw ValidationError("heartbeat voice needs heartbeat params");
        if (sample_rate < kMinSynthSampleRate) throw ValidationError("sample rate must be >= 2000 Hz");
    }

    double next() {
        const double t = static_cast<double>(index_++) / sample_rate_;
        while (!started_ || t >= beat_.onset + beat_.interval) start_beat();
        const double tau = t - beat_.onset;
        return heartbeat_shape::unit_beat(tau, beat_.interval) * beat_.amplitude *
               kStructuralNormalizer * params_.master_gain;
    }

    /// Continues the current timeline with new parameters. The beat in
    /// progress keeps its timing and A_r; changes apply from the next onset,
    /// except the master gain, which applies immediately.
    HeartbeatVoice with_params(const ResolvedCueParams& p) const {
        HeartbeatVoice v = *this;
        v.params_ = p;
        return v;
    }

    const ResolvedCueParams& params() const { return params_; }
    std::uint64_t position() const { return index_; }
    const std::vector<BeatEvent>& events() const { return events_; }
    void keep_events(bool keep) { keep_events_ = keep; }

private:
    void start_beat() {
        const double onset = started_ ? beat_.onset + beat_.interval : 0.0;
        started_ = true;
        const double bpm = rate_lfo(params_.base_rate, params_.rate_mod_depth, params_.rate_mod_period, onset);
        beat_.onset = onset;
        beat_.bpm = bpm;
        beat_.interval = 60.0 / bpm;
        beat_.amplitude = draw_uniform(rng_, params_.event_amp_min, params_.event_amp_max);
        if (keep_events_) events_.push_back(beat_);
    }

    ResolvedCueParams params_;
    int sample_rate_;
    RngStream rng_;
    std::uint64_t index_ = 0;
    bool started_ = false;
    BeatEvent beat_;
    bool keep_events_ = false;
    std::vector<BeatEvent> events_;
};

struct HeartbeatSpec {
    ResolvedCueParams params;
    double duration = 0.0;
    int sample_rate = 48000;
    std::uint64_t seed = 0;

    void validate() const {
        if (params.kind != CueKind::heartbeat) throw ValidationError("heartbeat spec needs heartbeat params");
        if (!(duration > 0.0)) throw ValidationError("duration must be positive");
        if (sample_rate < kMinSynthSampleRate) throw ValidationError("sample rate must be >= 2000 Hz");
    }
};

struct HeartbeatRender {
    SampleBuffer buffer;
    std::vector<BeatEvent> beats;
};

inline HeartbeatRender synth_heartbeat_with_events(const HeartbeatSpec& spec) {
    spec.validate();
    HeartbeatVoice voice(spec.params, spec.sample_rate, spec.seed);
    voice.keep_events(true);
    std::vector<float> out(frames_for(spec.duration, spec.sample_rate));
    for (float& s : out) s = static_cast<float>(voice.next());
    return {SampleBuffer::mono(std::move(out), spec.sample_rate), voice.events()};
}

/// Mono heartbeat, before any boost stage.
inline SampleBuffer synth_heartbeat(const HeartbeatSpec& spec) {
    return synth_heartbeat_with_events(spec).buffer;
}

}  // namespace purrbeat
