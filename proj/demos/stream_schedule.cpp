// Drives a stream session by hand: starts on preset 4, switches the purr to
// full hyper-realism after one second, then checks that an offline render of
// the logged schedule reproduces the streamed samples exactly.

#include <cstdio>
#include <memory>

#include "purrbeat/stream.hpp"

int main() {
    using namespace purrbeat;
    stream::SessionConfig cfg;
    cfg.seed = 11;
    cfg.block_frames = 480;
    stream::Session session(cfg);

    auto sink = std::make_unique<stream::MemorySink>(cfg.sample_rate);
    const auto mem = sink->capture();
    session.handle_control({{"v", 1}, {"id", 1}, {"op", "load_preset"}, {"payload", {{"id", 4}}}});
    session.start(std::move(sink));
    for (int i = 0; i < 100; ++i) session.render_block();

    const auto reply = session.handle_control(
        {{"v", 1}, {"id", 2}, {"op", "set_dims"}, {"payload", {{"cue", "purr"}, {"dims", {{"hyper_realism", 1.0}}}}}});
    std::printf("set_dims reply: %s\n", reply.dump().c_str());
    for (int i = 0; i < 100; ++i) session.render_block();
    session.handle_control({{"v", 1}, {"id", 3}, {"op", "stop"}});
    session.render_block();  // lets the render side retire the run

    const auto job = session.current_job();
    const auto offline = render_buffer(*job).buffer;
    const bool same = offline == mem->data();
    std::printf("streamed %zu frames, %zu scheduled change(s), offline match: %s\n", mem->data().frames(),
                job->schedule.size(), same ? "yes" : "no");
    for (const auto& ev : session.take_events())
        if (ev["event"] == "meter") {
            std::printf("first meter event: %s\n", ev.dump().substr(0, 120).c_str());
            break;
        }
    return same ? 0 : 1;
}
