#pragma once

// RIFF/WAVE reading and writing: 16-bit integer PCM and 32-bit IEEE float.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "purrbeat/error.hpp"
#include "purrbeat/synth_core.hpp"

namespace purrbeat {

static_assert(std::endian::native == std::endian::little, "wave_io assumes a little-endian host");

enum class SampleFormat { pcm16, float32 };

inline std::string_view to_string(SampleFormat f) { return f == SampleFormat::pcm16 ? "pcm16" : "float32"; }

inline SampleFormat parse_sample_format(std::string_view s) {
    if (s == "pcm16" || s == "s16") return SampleFormat::pcm16;
    if (s == "float32" || s == "f32") return SampleFormat::float32;
    throw ValidationError("unknown sample format '" + std::string(s) + "'");
}

namespace wave_detail {
inline constexpr std::uint16_t kFormatPcm = 1;
inline constexpr std::uint16_t kFormatFloat = 3;
inline constexpr std::uint16_t kFormatExtensible = 0xFFFE;

inline void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>(v >> 8));
}
inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::int16_t to_pcm16(float v) {
    const double c = std::fmax(-1.0, std::fmin(1.0, static_cast<double>(v)));
    return static_cast<std::int16_t>(std::lround(c * 32767.0));
}

inline std::string header(SampleFormat fmt, std::uint16_t channels, std::uint32_t sample_rate,
                          std::uint32_t data_bytes) {
    const std::uint16_t bits = fmt == SampleFormat::pcm16 ? 16 : 32;
    const std::uint16_t block_align = static_cast<std::uint16_t>(channels * bits / 8);
    const bool is_float = fmt == SampleFormat::float32;
    const std::uint32_t fmt_size = is_float ? 18 : 16;
    const std::uint32_t fact_size = is_float ? 12 : 0;
    std::string h;
    h += "RIFF";
    put_u32(h, 4 + (8 + fmt_size) + fact_size + 8 + data_bytes + (data_bytes & 1u));
    h += "WAVE";
    h += "fmt ";
    put_u32(h, fmt_size);
    put_u16(h, is_float ? kFormatFloat : kFormatPcm);
    put_u16(h, channels);
    put_u32(h, sample_rate);
    put_u32(h, sample_rate * block_align);
    put_u16(h, block_align);
    put_u16(h, bits);
    if (is_float) {
        put_u16(h, 0);  // cbSize
        h += "fact";
        put_u32(h, 4);
        put_u32(h, block_align ? data_bytes / block_align : 0);
    }
    h += "data";
    put_u32(h, data_bytes);
    return h;
}

inline void append_frames(std::string& out, const SampleBuffer& b, std::size_t begin, std::size_t end,
                          SampleFormat fmt) {
    for (std::size_t i = begin; i < end; ++i) {
        for (std::size_t c = 0; c < b.channels(); ++c) {
            const float v = b.channel(c)[i];
            if (fmt == SampleFormat::pcm16) {
                put_u16(out, static_cast<std::uint16_t>(to_pcm16(v)));
            } else {
                put_u32(out, std::bit_cast<std::uint32_t>(v));
            }
        }
    }
}
}  // namespace wave_detail

/// Incremental writer: sizes in the header are patched on close().
class WaveWriter {
public:
    WaveWriter(const std::string& path, std::size_t channels, int sample_rate, SampleFormat fmt)
        : path_(path), channels_(channels), sample_rate_(sample_rate), fmt_(fmt),
          file_(path, std::ios::binary | std::ios::trunc) {
        if (!file_) throw IoError("cannot open '" + path + "' for writing");
        const auto h = header();
        file_.write(h.data(), static_cast<std::streamsize>(h.size()));
        check();
    }

    WaveWriter(const WaveWriter&) = delete;
    WaveWriter& operator=(const WaveWriter&) = delete;

    ~WaveWriter() {
        try {
            close();
        } catch (...) {
        }
    }

    void write(const SampleBuffer& block) {
        if (block.channels() != channels_ || block.sample_rate() != sample_rate_)
            throw ValidationError("wave writer: block layout mismatch");
        std::string bytes;
        wave_detail::append_frames(bytes, block, 0, block.frames(), fmt_);
        file_.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        data_bytes_ += bytes.size();
        check();
    }

    void close() {
        if (!file_.is_open()) return;
        if (data_bytes_ & 1u) file_.put('\0');
        file_.seekp(0);
        const auto h = header();
        file_.write(h.data(), static_cast<std::streamsize>(h.size()));
        check();
        file_.close();
    }

    std::uint64_t frames_written() const {
        return data_bytes_ / (channels_ * (fmt_ == SampleFormat::pcm16 ? 2 : 4));
    }

private:
    std::string header() const {
        if (data_bytes_ > 0xFFFFFF00ull) throw IoError("wave file exceeds 4 GiB");
        return wave_detail::header(fmt_, static_cast<std::uint16_t>(channels_),
                                   static_cast<std::uint32_t>(sample_rate_),
                                   static_cast<std::uint32_t>(data_bytes_));
    }
    void check() {
        if (!file_) throw IoError("write to '" + path_ + "' failed");
    }

    std::string path_;
    std::size_t channels_;
    int sample_rate_;
    SampleFormat fmt_;
    std::ofstream file_;
    std::uint64_t data_bytes_ = 0;
};

inline void write_wave(const std::string& path, const SampleBuffer& buffer, SampleFormat fmt) {
    WaveWriter w(path, buffer.channels(), buffer.sample_rate(), fmt);
    w.write(buffer);
    w.close();
}

/// Parses a complete file image.
inline SampleBuffer parse_wave(std::string_view bytes) {
    std::size_t pos = 0;
    auto need = [&](std::size_t n, const char* what) {
        if (bytes.size() - pos < n) throw ParseError(std::string("truncated file: expected ") + what, pos);
    };
    auto u16 = [&](std::size_t at) {
        return static_cast<std::uint16_t>(static_cast<unsigned char>(bytes[at]) |
                                          (static_cast<unsigned char>(bytes[at + 1]) << 8));
    };
    auto u32 = [&](std::size_t at) {
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes[at + i]);
        return v;
    };

    need(12, "RIFF header");
    if (bytes.substr(0, 4) != "RIFF") throw ParseError("missing RIFF tag", 0);
    if (bytes.substr(8, 4) != "WAVE") throw ParseError("missing WAVE tag", 8);
    pos = 12;

    bool have_fmt = false;
    std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
    std::uint32_t sample_rate = 0;
    std::size_t fmt_offset = 0;

    while (true) {
        if (pos == bytes.size()) throw ParseError("no data chunk", pos);
        need(8, "chunk header");
        const auto id = bytes.substr(pos, 4);
        const std::uint32_t size = u32(pos + 4);
        const std::size_t body = pos + 8;
        if (bytes.size() - body < size) throw ParseError("truncated chunk '" + std::string(id) + "'", pos);

        if (id == "fmt ") {
            if (size < 16) throw ParseError("fmt chunk too short", pos);
            fmt_offset = pos;
            format = u16(body);
            channels = u16(body + 2);
            sample_rate = u32(body + 4);
            block_align = u16(body + 12);
            bits = u16(body + 14);
            if (format == wave_detail::kFormatExtensible) {
                if (size < 40) throw ParseError("extensible fmt chunk too short", pos);
                format = u16(body + 24);  // first two bytes of the subformat GUID
            }
            have_fmt = true;
        } else if (id == "data") {
            if (!have_fmt) throw ParseError("data chunk before fmt chunk", pos);
            if (channels == 0 || sample_rate == 0) throw ParseError("invalid channel count or rate", fmt_offset);
            const bool ok = (format == wave_detail::kFormatPcm && bits == 16) ||
                            (format == wave_detail::kFormatFloat && bits == 32);
            if (!ok)
                throw ParseError("unsupported sample encoding (format " + std::to_string(format) + ", " +
                                     std::to_string(bits) + " bits)",
                                 fmt_offset);
            if (block_align != channels * bits / 8) throw ParseError("inconsistent block alignment", fmt_offset);
            if (size % block_align != 0) throw ParseError("data size is not a whole number of frames", pos);
            const std::size_t frames = size / block_align;
            SampleBuffer out(channels, frames, static_cast<int>(sample_rate));
            std::size_t at = body;
            for (std::size_t i = 0; i < frames; ++i) {
                for (std::size_t c = 0; c < channels; ++c) {
                    float v;
                    if (bits == 16) {
                        v = static_cast<float>(static_cast<std::int16_t>(u16(at)) / 32767.0);
                        at += 2;
                    } else {
                        v = std::bit_cast<float>(u32(at));
                        at += 4;
                    }
                    out.channel(c)[i] = v;
                }
            }
            return out;
        }
        pos = body + size + (size & 1u);
        if (pos > bytes.size()) throw ParseError("chunk padding runs past end of file", bytes.size());
    }
}

inline SampleBuffer read_wave(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_wave(bytes);
}

}  // namespace purrbeat
