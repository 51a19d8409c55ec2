#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace autodiag {

// Decoded RIFF/WAV content before any pipeline processing.
struct WavData {
    std::vector<std::vector<float>> channels;  // one vector per channel
    int sample_rate = 0;
    int bits_per_sample = 0;
    bool float_format = false;
};

// Reads a PCM or IEEE-float WAV file. Supported: 8/16/24/32-bit integer
// PCM and 32/64-bit float, any channel count. Throws IoError for
// unreadable files, AudioFormatError for malformed or unsupported
// encodings, DataError for files with no audio payload.
WavData read_wav(const std::string& path);

enum class WavEncoding { pcm16, float32 };

// Writes a mono WAV file.
void write_wav(const std::string& path, std::span<const float> samples,
               int sample_rate, WavEncoding enc = WavEncoding::float32);

}  // namespace autodiag
