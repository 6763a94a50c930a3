#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "purrbeat/wave_io.hpp"

using namespace purrbeat;

namespace {

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::uint32_t le32(const std::string& s, std::size_t at) {
    std::uint32_t v;
    std::memcpy(&v, s.data() + at, 4);
    return v;
}
std::uint16_t le16(const std::string& s, std::size_t at) {
    std::uint16_t v;
    std::memcpy(&v, s.data() + at, 2);
    return v;
}

SampleBuffer ramp(std::size_t channels, std::size_t frames) {
    SampleBuffer b(channels, frames, 48000);
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < frames; ++i)
            b.channel(c)[i] = static_cast<float>(-1.0 + 2.0 * i / (frames - 1)) * (c % 2 ? -1.0f : 1.0f) * 0.99f;
    return b;
}

}  // namespace

TEST(Wave, Float32RoundTripIsExact) {
    const auto p = temp_path("purrbeat_f32.wav");
    const auto b = ramp(3, 1001);
    write_wave(p, b, SampleFormat::float32);
    EXPECT_EQ(read_wave(p), b);
    std::filesystem::remove(p);
}

TEST(Wave, Pcm16RoundTripWithinQuantization) {
    const auto p = temp_path("purrbeat_pcm.wav");
    const auto b = ramp(3, 777);
    write_wave(p, b, SampleFormat::pcm16);
    const auto r = read_wave(p);
    ASSERT_EQ(r.channels(), 3u);
    ASSERT_EQ(r.frames(), 777u);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 777; ++i) ASSERT_NEAR(r.channel(c)[i], b.channel(c)[i], 0.5 / 32767 + 1e-7);
    std::filesystem::remove(p);
}

TEST(Wave, HeaderFieldsForThreeChannelFloat) {
    const auto p = temp_path("purrbeat_hdr.wav");
    write_wave(p, ramp(3, 100), SampleFormat::float32);
    const auto s = slurp(p);
    EXPECT_EQ(s.substr(0, 4), "RIFF");
    EXPECT_EQ(le32(s, 4), s.size() - 8);
    EXPECT_EQ(s.substr(8, 4), "WAVE");
    EXPECT_EQ(s.substr(12, 4), "fmt ");
    EXPECT_EQ(le16(s, 20), 3);       // IEEE float
    EXPECT_EQ(le16(s, 22), 3);       // channels
    EXPECT_EQ(le32(s, 24), 48000u);  // rate
    EXPECT_EQ(le32(s, 28), 48000u * 12);
    EXPECT_EQ(le16(s, 32), 12);
    EXPECT_EQ(le16(s, 34), 32);
    const auto data = s.find("data");
    ASSERT_NE(data, std::string::npos);
    EXPECT_EQ(le32(s, data + 4), 100u * 12);
    EXPECT_EQ(s.size(), data + 8 + 1200);
    std::filesystem::remove(p);
}

TEST(Wave, IncrementalWriterPatchesSizes) {
    const auto p = temp_path("purrbeat_inc.wav");
    const auto b = ramp(3, 64);
    {
        WaveWriter w(p, 3, 48000, SampleFormat::pcm16);
        w.write(b);
        w.write(b);
        EXPECT_EQ(w.frames_written(), 128u);
    }
    const auto r = read_wave(p);
    EXPECT_EQ(r.frames(), 128u);
    std::filesystem::remove(p);
}

TEST(Wave, WriterRejectsLayoutMismatch) {
    const auto p = temp_path("purrbeat_bad.wav");
    WaveWriter w(p, 3, 48000, SampleFormat::float32);
    EXPECT_THROW(w.write(ramp(2, 10)), ValidationError);
    w.close();
    std::filesystem::remove(p);
}

TEST(Wave, SkipsUnknownChunksIncludingOddSized) {
    const auto b = ramp(1, 5);
    std::string img = wave_detail::header(SampleFormat::pcm16, 1, 48000, 10);
    std::string frames;
    wave_detail::append_frames(frames, b, 0, 5, SampleFormat::pcm16);
    // insert "LIST" chunk of 3 bytes (+1 pad) before data
    const auto data_at = img.find("data");
    std::string extra = "LIST";
    extra += std::string("\x03\x00\x00\x00", 4);
    extra += "abc";
    extra += '\0';
    img.insert(data_at, extra);
    img += frames;
    const auto r = parse_wave(img);
    ASSERT_EQ(r.frames(), 5u);
    EXPECT_NEAR(r.channel(0)[0], b.channel(0)[0], 1e-4);
}

TEST(Wave, ParseErrorsCarryOffsets) {
    EXPECT_THROW(parse_wave("RIFF"), ParseError);
    try {
        parse_wave(std::string("RIFX\0\0\0\0WAVE", 12));
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), 0u);
    }
    std::string img = wave_detail::header(SampleFormat::pcm16, 1, 48000, 10);
    img += std::string(4, '\0');  // data chunk claims 10 bytes, only 4 present
    try {
        parse_wave(img);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), img.find("data"));
    }
    std::string bad = wave_detail::header(SampleFormat::pcm16, 1, 48000, 0);
    bad[34] = 24;  // 24-bit
    EXPECT_THROW(parse_wave(bad), ParseError);
}

TEST(Wave, MissingFileIsIoError) {
    EXPECT_THROW(read_wave("/nonexistent/x.wav"), IoError);
    EXPECT_THROW(write_wave("/nonexistent/dir/x.wav", ramp(1, 3), SampleFormat::pcm16), IoError);
}

TEST(Wave, FormatNames) {
    EXPECT_EQ(parse_sample_format("pcm16"), SampleFormat::pcm16);
    EXPECT_EQ(parse_sample_format("float32"), SampleFormat::float32);
    EXPECT_THROW(parse_sample_format("mp3"), ValidationError);
}
