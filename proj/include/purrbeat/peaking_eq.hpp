#pragma once

// Second-order peaking equalizer (bilinear-transform design) used for the
// 45 Hz hyper-realism boost.

#include <cmath>
#include <complex>
#include <cstddef>

#include "purrbeat/params.hpp"
#include "purrbeat/synth_core.hpp"

namespace purrbeat {

/// Default bandwidth of the boost. Q = 1 pushes the 35-60 Hz content of the
/// boosted HIGH-amplitude presets past full scale; Q = 4 keeps every
/// standard preset at or below about 0.9 peak.
inline constexpr double kDefaultBoostQ = 4.0;

struct BiquadCoefficients {
    double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;  // normalized, a0 == 1

    std::complex<double> response(double freq_hz, double sample_rate) const {
        const auto z1 = std::polar(1.0, -kTwoPi * freq_hz / sample_rate);
        const auto z2 = z1 * z1;
        return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
    }
};

/// Peaking section; negative gains give the exact inverse of the boost.
inline BiquadCoefficients peaking_coefficients(double center_hz, double gain_db, double q, double sample_rate) {
    const double a = std::pow(10.0, gain_db / 40.0);
    const double w0 = kTwoPi * center_hz / sample_rate;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double cw = std::cos(w0);
    const double a0 = 1.0 + alpha / a;
    BiquadCoefficients c;
    c.b0 = (1.0 + alpha * a) / a0;
    c.b1 = -2.0 * cw / a0;
    c.b2 = (1.0 - alpha * a) / a0;
    c.a1 = -2.0 * cw / a0;
    c.a2 = (1.0 - alpha / a) / a0;
    return c;
}

/// Direct form I section. The state is the input/output history, so swapping
/// coefficients mid-stream keeps the state meaningful.
class Biquad {
public:
    Biquad() = default;
    explicit Biquad(const BiquadCoefficients& c) : c_(c) {}

    double process(double x) {
        const double y = c_.b0 * x + c_.b1 * x1_ + c_.b2 * x2_ - c_.a1 * y1_ - c_.a2 * y2_;
        x2_ = x1_;
        x1_ = x;
        y2_ = y1_;
        y1_ = y;
        return y;
    }

    void set_coefficients(const BiquadCoefficients& c) { c_ = c; }
    const BiquadCoefficients& coefficients() const { return c_; }
    void reset() { x1_ = x2_ = y1_ = y2_ = 0.0; }

private:
    BiquadCoefficients c_;
    double x1_ = 0, x2_ = 0, y1_ = 0, y2_ = 0;
};

struct PeakingEqConfig {
    double center_freq = endpoints::kBoostCenterHz;
    double gain_db = 0.0;
    double q_factor = kDefaultBoostQ;
    int sample_rate = 48000;

    void validate() const {
        if (sample_rate <= 0) throw ValidationError("eq: sample rate must be positive");
        if (!(center_freq > 0.0 && center_freq < sample_rate / 2.0))
            throw ValidationError("eq: center frequency must lie in (0, fs/2)");
        if (!(gain_db >= 0.0)) throw ValidationError("eq: gain must be >= 0 dB");
        if (!(q_factor > 0.0)) throw ValidationError("eq: Q must be positive");
    }

    BiquadCoefficients coefficients() const {
        return peaking_coefficients(center_freq, gain_db, q_factor, sample_rate);
    }
};

inline PeakingEqConfig boost_config(const ResolvedCueParams& p, int sample_rate, double q = kDefaultBoostQ) {
    return {endpoints::kBoostCenterHz, p.boost_gain_db, q, sample_rate};
}

struct EqResult {
    SampleBuffer buffer;
    std::size_t clip_count = 0;
};

/// Filters every channel independently, then clamps to [-1, 1].
inline EqResult apply_peaking_eq(const SampleBuffer& in, const PeakingEqConfig& config) {
    config.validate();
    if (in.sample_rate() != config.sample_rate)
        throw ValidationError("eq: buffer sample rate " + std::to_string(in.sample_rate()) +
                              " does not match config " + std::to_string(config.sample_rate));
    EqResult r{in, 0};
    const auto coeffs = config.coefficients();
    for (std::size_t c = 0; c < in.channels(); ++c) {
        Biquad f(coeffs);
        auto ch = r.buffer.channel(c);
        for (float& v : ch) v = static_cast<float>(f.process(v));
        r.clip_count += clamp_unit(ch);
    }
    return r;
}

}  // namespace purrbeat
