#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "purrbeat/purr.hpp"

using namespace purrbeat;

namespace {

double oracle_envelope(double t, double ppm) {
    double k = 60.0 / (2 * ppm);
    if (k < 0.3) k = 0.3;
    if (t < 0.2) return t / 0.2;
    if (t < 0.3) return 1 - (0.1 / 0.1) * (t - 0.2);
    if (t < k) return 0.9;
    if (t < k + 0.25) return 0.9 - 0.9 * (t - k) / 0.25;
    return 0;
}

PurrSpec spec_for(CueDimensions d, double dur, PurrModel m = PurrModel::final_eq3, int fs = 48000) {
    PurrSpec s;
    s.params = resolve(d, CueKind::purr);
    s.duration = dur;
    s.sample_rate = fs;
    s.model = m;
    return s;
}

}  // namespace

TEST(PurrEnvelope, MatchesBreakpointOracle) {
    for (double ppm : {52.5, 70.0, 87.5}) {
        const double period = 60.0 / ppm;
        for (int i = 0; i < 4000; ++i) {
            const double t = period * i / 4000.0;
            ASSERT_NEAR(purr_envelope(t, ppm).value, oracle_envelope(t, ppm), 1e-12) << ppm << " " << t;
        }
    }
}

TEST(PurrEnvelope, KeyPointsAt70Ppm) {
    const double k = 60.0 / 140.0;
    EXPECT_DOUBLE_EQ(purr_envelope(0.0, 70).value, 0.0);
    EXPECT_DOUBLE_EQ(purr_envelope(0.1, 70).value, 0.5);
    EXPECT_NEAR(purr_envelope(0.2, 70).value, 1.0, 1e-12);
    EXPECT_NEAR(purr_envelope(0.3, 70).value, 0.9, 1e-12);
    EXPECT_NEAR(purr_envelope(k, 70).value, 0.9, 1e-12);
    EXPECT_NEAR(purr_envelope(k + 0.125, 70).value, 0.45, 1e-12);
    EXPECT_EQ(purr_envelope(k + 0.25, 70).value, 0.0);
    EXPECT_FALSE(purr_envelope(0.1, 70).release_clamped);
}

TEST(PurrEnvelope, ReleaseClampedWhenHalfPeriodTooShort) {
    // 60/(2*110) = 0.27 s < 0.3 s
    const auto e = purr_envelope(0.31, 110);
    EXPECT_TRUE(e.release_clamped);
    EXPECT_NEAR(e.value, 0.9 - 0.9 * 0.01 / 0.25, 1e-12);
}

TEST(PurrEnvelope, RejectsBadInput) {
    EXPECT_THROW(purr_envelope(-0.1, 70), ValidationError);
    EXPECT_THROW(purr_envelope(0.1, 0), ValidationError);
}

TEST(Purr, FinalModelSamplesMatchFormula) {
    const int fs = 8000;
    const auto spec = spec_for(CueDimensions(0.4, 1, 0), 40, PurrModel::final_eq3, fs);
    const auto r = synth_purr_with_cycles(spec);
    const auto x = r.buffer.channel(0);
    const double w = 2 * std::numbers::pi;
    std::size_t c = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double t = static_cast<double>(i) / fs;
        while (c + 1 < r.cycles.size() && t >= r.cycles[c + 1].start) ++c;
        const auto& cy = r.cycles[c];
        const double a = oracle_envelope(t - cy.start, cy.ppm);
        const double v = 0.9 + 0.1 * std::sin(w * t / 30.0);
        const double want = v * (std::sin(w * 35 * t) + a * std::sin(w * 60 * t)) * 0.5 * spec.params.master_gain;
        ASSERT_NEAR(x[i], want, 1e-6) << "sample " << i;
    }
}

TEST(Purr, CycleRatesFollowModulation) {
    const auto r = synth_purr_with_cycles(spec_for(CueDimensions(0, 1, 0), 60));
    for (std::size_t k = 0; k < r.cycles.size(); ++k) {
        const auto& c = r.cycles[k];
        EXPECT_NEAR(c.ppm, 70 * (1 + 0.25 * std::sin(2 * std::numbers::pi * c.start / 30)), 1e-9);
        EXPECT_FALSE(c.release_clamped);
        if (k + 1 < r.cycles.size()) { EXPECT_NEAR(r.cycles[k + 1].start, c.start + c.period, 1e-9); }
    }
}

TEST(Purr, BaselineModelHasFixedRateAndUnitAmplitude) {
    const auto r = synth_purr_with_cycles(spec_for(CueDimensions(0, 1, 0), 20, PurrModel::baseline_eq1));
    for (const auto& c : r.cycles) EXPECT_DOUBLE_EQ(c.ppm, 70.0);
    PurrVoice v(resolve(CueDimensions(0, 1, 0), CueKind::purr), 48000, PurrModel::baseline_eq1);
    EXPECT_EQ(v.amplitude_lfo(7.5), 1.0);
}

TEST(Purr, AmplitudeLfoRangeFollowsVariability) {
    PurrVoice v0(resolve(CueDimensions(0, 0, 0), CueKind::purr), 48000, PurrModel::final_eq3);
    PurrVoice v1(resolve(CueDimensions(0, 1, 0), CueKind::purr), 48000, PurrModel::final_eq3);
    EXPECT_DOUBLE_EQ(v0.amplitude_lfo(7.5), 0.8);
    EXPECT_DOUBLE_EQ(v0.amplitude_lfo(22.5), 0.8);
    EXPECT_NEAR(v1.amplitude_lfo(7.5), 1.0, 1e-12);
    EXPECT_NEAR(v1.amplitude_lfo(22.5), 0.8, 1e-12);
}

TEST(Purr, ModelStringsRoundTrip) {
    EXPECT_EQ(parse_purr_model(to_string(PurrModel::baseline_eq1)), PurrModel::baseline_eq1);
    EXPECT_EQ(parse_purr_model(to_string(PurrModel::final_eq3)), PurrModel::final_eq3);
    EXPECT_THROW(parse_purr_model("eq2"), ValidationError);
}

TEST(Purr, BoundedAndDeterministic) {
    const auto a = synth_purr(spec_for(CueDimensions(1, 1, 0), 15));
    EXPECT_LE(peak_abs(a.channel(0)), 0.70f + 1e-6f);
    EXPECT_EQ(a, synth_purr(spec_for(CueDimensions(1, 1, 0), 15)));
}
