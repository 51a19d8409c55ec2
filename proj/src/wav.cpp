#include "autodiag/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "autodiag/binio.hpp"
#include "autodiag/errors.hpp"

namespace autodiag {

namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr uint16_t kFormatExtensible = 0xfffe;

uint32_t rd_u32(const char* p) {
    uint32_t v;
    std::memcpy(&v, p, 4);
    return v;  // little-endian host assumed, as everywhere in this codebase
}

uint16_t rd_u16(const char* p) {
    uint16_t v;
    std::memcpy(&v, p, 2);
    return v;
}

float decode_sample(const char* p, int bits, bool is_float) {
    if (is_float) {
        if (bits == 32) {
            float f;
            std::memcpy(&f, p, 4);
            return f;
        }
        double d;
        std::memcpy(&d, p, 8);
        return static_cast<float>(d);
    }
    switch (bits) {
        case 8: {
            // 8-bit WAV is unsigned with 128 the zero line
            int v = static_cast<int>(static_cast<uint8_t>(p[0])) - 128;
            return static_cast<float>(v) / 127.0f;
        }
        case 16: {
            int16_t v;
            std::memcpy(&v, p, 2);
            return static_cast<float>(v) / 32767.0f;
        }
        case 24: {
            int32_t v = (static_cast<uint8_t>(p[0])) | (static_cast<uint8_t>(p[1]) << 8) |
                        (static_cast<int8_t>(p[2]) << 16);
            return static_cast<float>(v) / 8388607.0f;
        }
        case 32: {
            int32_t v;
            std::memcpy(&v, p, 4);
            return static_cast<float>(static_cast<double>(v) / 2147483647.0);
        }
        default:
            throw AudioFormatError("unsupported PCM bit depth: " + std::to_string(bits));
    }
}

}  // namespace

WavData read_wav(const std::string& path) {
    const std::string data = read_file(path);
    if (data.size() < 12 || data.compare(0, 4, "RIFF") != 0 || data.compare(8, 4, "WAVE") != 0) {
        throw AudioFormatError("not a RIFF/WAVE file: " + path);
    }

    uint16_t format = 0, n_channels = 0, bits = 0;
    uint32_t rate = 0;
    bool have_fmt = false;
    std::string_view payload;

    size_t pos = 12;
    while (pos + 8 <= data.size()) {
        const std::string id = data.substr(pos, 4);
        const uint32_t size = rd_u32(data.data() + pos + 4);
        pos += 8;
        if (pos + size > data.size()) {
            throw AudioFormatError("truncated chunk '" + id + "' in " + path);
        }
        if (id == "fmt ") {
            if (size < 16) throw AudioFormatError("malformed fmt chunk in " + path);
            format = rd_u16(data.data() + pos);
            n_channels = rd_u16(data.data() + pos + 2);
            rate = rd_u32(data.data() + pos + 4);
            bits = rd_u16(data.data() + pos + 14);
            if (format == kFormatExtensible) {
                // sub-format GUID starts at offset 24 of the fmt payload
                if (size < 40) throw AudioFormatError("malformed extensible fmt chunk in " + path);
                format = rd_u16(data.data() + pos + 24);
            }
            have_fmt = true;
        } else if (id == "data") {
            payload = std::string_view(data).substr(pos, size);
        }
        pos += size + (size & 1);  // chunks are word-aligned
    }

    if (!have_fmt) throw AudioFormatError("missing fmt chunk: " + path);
    if (n_channels == 0 || rate == 0) throw AudioFormatError("malformed fmt fields: " + path);

    const bool is_float = format == kFormatFloat;
    if (format != kFormatPcm && format != kFormatFloat) {
        throw AudioFormatError("unsupported WAV format code " + std::to_string(format) + ": " + path);
    }
    if (is_float && bits != 32 && bits != 64) {
        throw AudioFormatError("unsupported float bit depth: " + std::to_string(bits));
    }
    if (!is_float && bits != 8 && bits != 16 && bits != 24 && bits != 32) {
        throw AudioFormatError("unsupported PCM bit depth: " + std::to_string(bits));
    }

    const size_t bytes_per_sample = bits / 8;
    const size_t frame_size = bytes_per_sample * n_channels;
    const size_t n_frames = frame_size == 0 ? 0 : payload.size() / frame_size;
    if (n_frames == 0) throw DataError("zero-length audio: " + path);

    WavData out;
    out.sample_rate = static_cast<int>(rate);
    out.bits_per_sample = bits;
    out.float_format = is_float;
    out.channels.assign(n_channels, std::vector<float>(n_frames));
    for (size_t f = 0; f < n_frames; ++f) {
        const char* frame = payload.data() + f * frame_size;
        for (size_t c = 0; c < n_channels; ++c) {
            float v = decode_sample(frame + c * bytes_per_sample, bits, is_float);
            out.channels[c][f] = std::clamp(v, -1.0f, 1.0f);
        }
    }
    return out;
}

void write_wav(const std::string& path, std::span<const float> samples,
               int sample_rate, WavEncoding enc) {
    const uint16_t bits = enc == WavEncoding::pcm16 ? 16 : 32;
    const uint16_t format = enc == WavEncoding::pcm16 ? kFormatPcm : kFormatFloat;
    const uint32_t data_size = static_cast<uint32_t>(samples.size() * bits / 8);

    ByteWriter w;
    w.raw("RIFF");
    w.u32(36 + data_size);
    w.raw("WAVE");
    w.raw("fmt ");
    w.u32(16);
    w.u32(format | (1u << 16));                      // format, channels = 1
    w.u32(static_cast<uint32_t>(sample_rate));
    w.u32(static_cast<uint32_t>(sample_rate * bits / 8));  // byte rate
    w.u32((bits / 8) | (static_cast<uint32_t>(bits) << 16));  // block align, bits
    w.raw("data");
    w.u32(data_size);
    if (enc == WavEncoding::pcm16) {
        for (float s : samples) {
            const double scaled = std::round(static_cast<double>(s) * 32767.0);
            const int32_t v = static_cast<int32_t>(std::clamp(scaled, -32768.0, 32767.0));
            w.u8(static_cast<uint8_t>(v & 0xff));
            w.u8(static_cast<uint8_t>((v >> 8) & 0xff));
        }
    } else {
        for (float s : samples) {
            uint32_t bitsv;
            std::memcpy(&bitsv, &s, 4);
            w.u32(bitsv);
        }
    }
    write_file(path, w.buffer());
}

}  // namespace autodiag
