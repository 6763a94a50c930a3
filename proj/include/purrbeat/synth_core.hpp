#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "purrbeat/error.hpp"

namespace purrbeat {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Peak pre-gain magnitude of either cue is at most 2; this maps it into [-1, 1]
/// so that master_gain is the fraction of full scale.
inline constexpr double kStructuralNormalizer = 0.5;

/// Planar multi-channel float buffer. All channels have the same length.
class SampleBuffer {
public:
    SampleBuffer() = default;

    SampleBuffer(std::size_t channels, std::size_t frames, int sample_rate)
        : sample_rate_(sample_rate), data_(channels, std::vector<float>(frames, 0.0f)) {
        if (channels == 0) throw ValidationError("buffer needs at least one channel");
        if (sample_rate <= 0) throw ValidationError("sample rate must be positive");
    }

    static SampleBuffer mono(std::vector<float> samples, int sample_rate) {
        SampleBuffer b(1, 0, sample_rate);
        b.data_[0] = std::move(samples);
        return b;
    }

    std::size_t channels() const { return data_.size(); }
    std::size_t frames() const { return data_.empty() ? 0 : data_[0].size(); }
    int sample_rate() const { return sample_rate_; }
    double duration() const { return static_cast<double>(frames()) / sample_rate_; }

    std::span<float> channel(std::size_t c) { return data_.at(c); }
    std::span<const float> channel(std::size_t c) const { return data_.at(c); }

    void append(const SampleBuffer& other) {
        if (other.channels() != channels() || other.sample_rate() != sample_rate_)
            throw ValidationError("append: channel count or sample rate mismatch");
        for (std::size_t c = 0; c < channels(); ++c)
            data_[c].insert(data_[c].end(), other.data_[c].begin(), other.data_[c].end());
    }

    friend bool operator==(const SampleBuffer&, const SampleBuffer&) = default;

private:
    int sample_rate_ = 48000;
    std::vector<std::vector<float>> data_;
};

inline float peak_abs(std::span<const float> x) {
    float m = 0.0f;
    for (float v : x) m = std::max(m, std::fabs(v));
    return m;
}

/// Clamps to [-1, 1]; returns the number of samples that were out of range.
inline std::size_t clamp_unit(std::span<float> x) {
    std::size_t clipped = 0;
    for (float& v : x) {
        if (v > 1.0f) { v = 1.0f; ++clipped; }
        else if (v < -1.0f) { v = -1.0f; ++clipped; }
    }
    return clipped;
}

/// Element-wise sum of equally sized channels, no clamping.
inline std::vector<float> mix(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) throw ValidationError("mix: length mismatch");
    std::vector<float> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

inline double sine(double freq_hz, double phase, double t) {
    return std::sin(kTwoPi * freq_hz * t + phase);
}

/// base_rate * (1 + depth * sin(2 pi t / period)).
inline double rate_lfo(double base_rate, double depth, double period_s, double t) {
    return base_rate * (1.0 + depth * std::sin(kTwoPi * t / period_s));
}

/// Counter-based SplitMix64 stream: draw k is a pure function of (seed, k).
class RngStream {
public:
    static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

    explicit RngStream(std::uint64_t seed = 0) : seed_(seed) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t draw_count() const { return count_; }

    std::uint64_t next_u64() {
        ++count_;
        return mix64(seed_ + count_ * kGamma);
    }

    /// Uniform in [0, 1) with 53 bits of resolution.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    static constexpr std::uint64_t mix64(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    friend bool operator==(const RngStream&, const RngStream&) = default;

private:
    std::uint64_t seed_;
    std::uint64_t count_ = 0;
};

inline double draw_uniform(RngStream& rng, double lo, double hi) {
    if (!(lo <= hi)) throw ValidationError("draw_uniform: lo > hi");
    return lo + (hi - lo) * rng.next_unit();
}

inline std::size_t frames_for(double duration_s, int sample_rate) {
    return static_cast<std::size_t>(std::llround(duration_s * sample_rate));
}

}  // namespace purrbeat
