// Renders one standard preset to a WAVE file and prints the resolved
// parameters of both cues.
//
//   demo_render_preset [preset-id] [seconds] [out.wav]

#include <cstdio>
#include <cstdlib>
#include <string>

#include "purrbeat/render.hpp"

int main(int argc, char** argv) {
    using namespace purrbeat;
    const int id = argc > 1 ? std::atoi(argv[1]) : 4;
    const double seconds = argc > 2 ? std::atof(argv[2]) : 10.0;
    const std::string out = argc > 3 ? argv[3] : "preset" + std::to_string(id) + ".wav";
    try {
        const auto& preset = find_preset(id);
        const auto report = render_program(RenderJob::from_preset(id, seconds, 1, out));
        std::printf("preset %d: %s (%s)\n", id, preset.lifelikeness_label.c_str(), preset.rating.c_str());
        for (const auto* p : {&report.heartbeat, &report.purr}) {
            std::printf("  %-9s gain %.3f  rate %.0f +/- %.0f%%  amp [%.2f, %.2f]  boost %.1f dB\n",
                        std::string(to_string(p->kind)).c_str(), p->master_gain, p->base_rate,
                        100.0 * p->rate_mod_depth, p->event_amp_min, p->event_amp_max, p->boost_gain_db);
        }
        std::printf("wrote %s and %s\n", out.c_str(), sidecar_path(out).c_str());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
