// Prints the measured signal properties of a rendered program: dominant
// frequencies and event rates per cue.
//
//   demo_analyze_file render.wav

#include <cstdio>

#include "purrbeat/analysis.hpp"
#include "purrbeat/verify.hpp"
#include "purrbeat/wave_io.hpp"

int main(int argc, char** argv) {
    using namespace purrbeat;
    if (argc < 2) {
        std::fprintf(stderr, "usage: %s render.wav\n", argv[0]);
        return 2;
    }
    try {
        const auto b = read_wave(argv[1]);
        std::printf("%zu channels, %d Hz, %.2f s\n", b.channels(), b.sample_rate(), b.duration());
        struct Cue { const char* name; std::size_t ch; analysis::Band band; analysis::OnsetOptions opt; };
        const Cue cues[] = {{"heartbeat", 0, verify::kHeartbeatBand, analysis::heartbeat_onset_options()},
                            {"purr", b.channels() > 2 ? 2u : 0u, verify::kPurrBand, {}}};
        for (const auto& c : cues) {
            const auto x = b.channel(c.ch);
            std::printf("%s (channel %zu)\n", c.name, c.ch);
            if (b.duration() >= 4.0) {
                std::printf("  dominant:");
                for (double f : analysis::dominant_frequencies(x, b.sample_rate(), 4)) std::printf(" %.2f Hz", f);
                std::printf("\n");
            }
            const auto onsets = analysis::detect_onsets(x, b.sample_rate(), c.band, c.opt);
            if (onsets.size() >= 2) {
                const auto r = analysis::estimate_rate_trajectory(onsets);
                std::printf("  %zu onsets, rate %.2f per minute (range %.2f-%.2f)\n", onsets.size(), r.mean(),
                            r.min(), r.max());
            } else {
                std::printf("  fewer than two onsets\n");
            }
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
