#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "autodiag/audio.hpp"
#include "autodiag/errors.hpp"
#include "autodiag/rng.hpp"
#include "autodiag/wav.hpp"

using namespace autodiag;

namespace {

void put_u16(std::string& s, uint16_t v) {
    s.push_back(static_cast<char>(v & 0xff));
    s.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& s, uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

// hand-rolled WAV container, independent of the library encoder
std::string wav_container(int channels, int rate, int bits, bool float_fmt,
                          const std::string& payload) {
    std::string s;
    s += "RIFF";
    put_u32(s, static_cast<uint32_t>(36 + payload.size()));
    s += "WAVEfmt ";
    put_u32(s, 16);
    put_u16(s, float_fmt ? 3 : 1);
    put_u16(s, static_cast<uint16_t>(channels));
    put_u32(s, static_cast<uint32_t>(rate));
    const int block = channels * bits / 8;
    put_u32(s, static_cast<uint32_t>(rate * block));
    put_u16(s, static_cast<uint16_t>(block));
    put_u16(s, static_cast<uint16_t>(bits));
    s += "data";
    put_u32(s, static_cast<uint32_t>(payload.size()));
    s += payload;
    return s;
}

void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary);
    REQUIRE(f.good());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string pcm16_payload(const std::vector<int16_t>& interleaved) {
    std::string p;
    for (int16_t v : interleaved) put_u16(p, static_cast<uint16_t>(v));
    return p;
}

std::string float32_payload(const std::vector<float>& interleaved) {
    std::string p;
    for (float v : interleaved) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_u32(p, bits);
    }
    return p;
}

struct TempFile {
    std::string path;
    explicit TempFile(std::string p) : path(std::move(p)) {}
    ~TempFile() {
        std::remove(path.c_str());
        std::remove((path.substr(0, path.size() - 4) + ".json").c_str());
    }
};

}  // namespace

TEST_CASE("ingest downmixes and resamples a stereo sine to the canonical rate") {
    TempFile tf("sig_stereo.wav");
    std::vector<float> inter;
    for (int i = 0; i < 44100; ++i) {
        float v = 0.7f * std::sin(2.0 * M_PI * 440.0 * i / 44100.0);
        inter.push_back(v);
        inter.push_back(v);
    }
    write_bytes(tf.path, wav_container(2, 44100, 32, true, float32_payload(inter)));

    AudioClip clip = ingest(tf.path);
    CHECK(clip.sample_rate == kCanonicalRate);
    CHECK(clip.samples.size() == 22050);
    CHECK(clip.source_id == "sig_stereo");
    float peak = 0.0f;
    for (float v : clip.samples) peak = std::max(peak, std::abs(v));
    CHECK(peak == 1.0f);
}

TEST_CASE("ingest rejects an all-zero file") {
    TempFile tf("sig_zero.wav");
    write_bytes(tf.path, wav_container(1, 22050, 16, false,
                                       pcm16_payload(std::vector<int16_t>(22050, 0))));
    CHECK_THROWS_WITH_AS(ingest(tf.path), doctest::Contains("silent clip"), DataError);
}

TEST_CASE("16-bit ramp decodes to the sample-by-sample oracle and stays monotone") {
    TempFile tf("sig_ramp.wav");
    std::vector<int16_t> ramp(32768);
    for (int i = 0; i < 32768; ++i) ramp[i] = static_cast<int16_t>(i);
    write_bytes(tf.path, wav_container(1, 44100, 16, false, pcm16_payload(ramp)));

    WavData raw = read_wav(tf.path);
    REQUIRE(raw.channels.size() == 1);
    REQUIRE(raw.channels[0].size() == 32768);
    for (int i = 0; i < 32768; ++i) {
        CHECK(raw.channels[0][i] == doctest::Approx(i / 32767.0).epsilon(1e-7));
    }

    AudioClip clip = ingest(tf.path);
    float mx = 0.0f;
    for (size_t i = 1; i < clip.samples.size(); ++i) {
        REQUIRE(clip.samples[i] >= clip.samples[i - 1]);
    }
    for (float v : clip.samples) mx = std::max(mx, v);
    CHECK(mx == 1.0f);
}

TEST_CASE("pcm16 write/ingest round trip is within 1 LSB") {
    TempFile tf("sig_rt16.wav");
    AudioClip clip;
    clip.sample_rate = kCanonicalRate;
    clip.source_id = "rt";
    Rng r(21);
    clip.samples.resize(22050);
    for (auto& v : clip.samples) v = static_cast<float>(r.uniform(-1.0, 1.0));
    clip.samples[100] = 1.0f;  // pin the peak so renormalization is a no-op

    write_clip(tf.path, clip, {}, WavEncoding::pcm16);
    AudioClip back = ingest(tf.path);
    REQUIRE(back.samples.size() == clip.samples.size());
    for (size_t i = 0; i < clip.samples.size(); ++i) {
        CHECK(std::abs(back.samples[i] - clip.samples[i]) <= 1.0f / 32767.0f);
    }
}

TEST_CASE("float32 write/ingest round trip is exact") {
    TempFile tf("sig_rtf.wav");
    AudioClip clip;
    clip.sample_rate = kCanonicalRate;
    clip.source_id = "rtf";
    Rng r(22);
    clip.samples.resize(4096);
    for (auto& v : clip.samples) v = static_cast<float>(r.uniform(-1.0, 1.0));
    clip.samples[7] = -1.0f;

    write_clip(tf.path, clip, {{"fuel", "diesel"}}, WavEncoding::float32);
    AudioClip back = ingest(tf.path);
    REQUIRE(back.samples.size() == clip.samples.size());
    for (size_t i = 0; i < clip.samples.size(); ++i) {
        CHECK(back.samples[i] == clip.samples[i]);
    }
}

TEST_CASE("sidecar metadata survives the round trip") {
    TempFile tf("sig_meta.wav");
    AudioClip clip;
    clip.sample_rate = kCanonicalRate;
    clip.source_id = "veh-0042";
    clip.capture_position = CapturePosition::exhaust;
    Rng r(23);
    clip.samples.resize(2048);
    for (auto& v : clip.samples) v = static_cast<float>(r.uniform(-1.0, 1.0));

    write_clip(tf.path, clip, {{"fuel", "gasoline"}, {"cylinders", "6"}},
               WavEncoding::float32);
    ClipMetadata meta = read_sidecar(tf.path);
    CHECK(meta.source_id == "veh-0042");
    CHECK(meta.capture_position == CapturePosition::exhaust);
    CHECK(meta.labels.at("fuel") == "gasoline");
    CHECK(meta.labels.at("cylinders") == "6");

    AudioClip back = ingest(tf.path);
    CHECK(back.source_id == "veh-0042");
    CHECK(back.capture_position == CapturePosition::exhaust);
}

TEST_CASE("malformed sidecar is a data error") {
    TempFile tf("sig_badmeta.wav");
    write_bytes(tf.path, wav_container(1, 22050, 16, false,
                                       pcm16_payload({0, 1000, -1000, 500})));
    write_bytes(tf.path.substr(0, tf.path.size() - 4) + ".json", "{not json");
    CHECK_THROWS_AS(read_sidecar(tf.path), DataError);
}

TEST_CASE("24-bit samples decode against the integer oracle") {
    TempFile tf("sig_24.wav");
    const std::vector<int32_t> values = {0, 8388607, -8388608, 1234567, -7654321};
    std::string payload;
    for (int32_t v : values) {
        uint32_t u = static_cast<uint32_t>(v);
        payload.push_back(static_cast<char>(u & 0xff));
        payload.push_back(static_cast<char>((u >> 8) & 0xff));
        payload.push_back(static_cast<char>((u >> 16) & 0xff));
    }
    write_bytes(tf.path, wav_container(1, 22050, 24, false, payload));

    WavData raw = read_wav(tf.path);
    REQUIRE(raw.channels[0].size() == values.size());
    for (size_t i = 0; i < values.size(); ++i) {
        double expect = std::max(-1.0, std::min(1.0, values[i] / 8388607.0));
        CHECK(raw.channels[0][i] == doctest::Approx(expect).epsilon(1e-7));
    }
}

TEST_CASE("8-bit samples decode as unsigned midpoint-128") {
    TempFile tf("sig_8.wav");
    std::string payload;
    for (int v : {128, 255, 0, 200}) payload.push_back(static_cast<char>(v));
    write_bytes(tf.path, wav_container(1, 22050, 8, false, payload));

    WavData raw = read_wav(tf.path);
    CHECK(raw.channels[0][0] == doctest::Approx(0.0));
    CHECK(raw.channels[0][1] == doctest::Approx(1.0));
    CHECK(raw.channels[0][2] == doctest::Approx(-1.0).epsilon(0.02));
    CHECK(raw.channels[0][3] == doctest::Approx(72.0 / 127.0).epsilon(1e-6));
}

TEST_CASE("truncated and alien files are rejected") {
    TempFile tf("sig_trunc.wav");
    write_bytes(tf.path, "RIFFxxxx");
    CHECK_THROWS_AS(read_wav(tf.path), AudioFormatError);
    CHECK_THROWS_AS(read_wav("sig_does_not_exist.wav"), IoError);
}

TEST_CASE("resample preserves monotone sequences") {
    Rng r(31);
    std::vector<float> x(1000);
    float acc = -1.0f;
    for (auto& v : x) {
        acc += static_cast<float>(r.uniform(0.0, 0.002));
        v = acc;
    }
    for (int dst : {22050, 8000, 48000}) {
        auto y = resample(std::span<const float>(x), 44100, dst);
        for (size_t i = 1; i < y.size(); ++i) REQUIRE(y[i] >= y[i - 1]);
    }
}

TEST_CASE("resample at equal rates is the identity") {
    std::vector<float> x = {0.1f, -0.4f, 0.9f, 0.0f};
    auto y = resample(std::span<const float>(x), 22050, 22050);
    REQUIRE(y.size() == x.size());
    for (size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
}

static AudioClip noise_clip(double seconds, uint64_t seed, const std::string& sid) {
    AudioClip c;
    c.sample_rate = kCanonicalRate;
    c.source_id = sid;
    c.samples.resize(static_cast<size_t>(seconds * kCanonicalRate));
    Rng r(seed);
    for (auto& v : c.samples) v = static_cast<float>(r.uniform(-1.0, 1.0));
    return c;
}

TEST_CASE("segmentation is reproducible under a fixed seed") {
    AudioClip clip = noise_clip(10.0, 41, "seg-src");
    auto a = segment(clip, 1.0, 5, 7);
    auto b = segment(clip, 1.0, 5, 7);
    REQUIRE(a.size() == 5);
    REQUIRE(b.size() == 5);
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].offset_s == b[i].offset_s);
        CHECK(a[i].samples == b[i].samples);
        CHECK(a[i].samples.size() == 22050);
        CHECK(a[i].parent == "seg-src");
    }
}

TEST_CASE("full-length segment is forced to offset zero") {
    AudioClip clip = noise_clip(1.0, 43, "one");
    auto segs = segment(clip, 1.0, 1, 99);
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].offset_s == 0.0);
    CHECK(segs[0].samples.size() == clip.samples.size());
}

TEST_CASE("segment offsets are uniform over the feasible range") {
    AudioClip clip = noise_clip(10.0, 47, "uni");
    auto segs = segment(clip, 1.0, 1000, 5);
    double sum = 0.0;
    for (const auto& s : segs) {
        REQUIRE(s.offset_s >= 0.0);
        REQUIRE(s.offset_s <= 9.0);
        sum += s.offset_s;
    }
    CHECK(std::abs(sum / 1000.0 - 4.5) < 0.5);
}

TEST_CASE("segment rejects clips shorter than the window") {
    AudioClip clip = noise_clip(0.5, 49, "short");
    CHECK_THROWS_AS(segment(clip, 1.0, 1, 0), DataError);
}

TEST_CASE("split_by_source partitions ten sources at fraction 0.3") {
    std::vector<std::string> ids;
    for (int s = 0; s < 10; ++s) ids.push_back("src" + std::to_string(s));
    SourceSplit sp = split_by_source(std::span<const std::string>(ids), 0.3, 1);
    CHECK(sp.test_sources.size() == 3);
    CHECK(sp.train_sources.size() == 7);
    std::set<std::string> train(sp.train_sources.begin(), sp.train_sources.end());
    for (const auto& s : sp.test_sources) CHECK(train.count(s) == 0);
    CHECK(sp.train_indices.size() + sp.test_indices.size() == ids.size());
}

TEST_CASE("two sources always split one and one") {
    std::vector<std::string> ids = {"a", "b", "a", "b", "b"};
    for (double frac : {0.01, 0.5, 0.99}) {
        SourceSplit sp = split_by_source(std::span<const std::string>(ids), frac, 3);
        CHECK(sp.train_sources.size() == 1);
        CHECK(sp.test_sources.size() == 1);
    }
}

TEST_CASE("train and test sources are disjoint across many seeds") {
    std::vector<std::string> ids;
    Rng r(55);
    for (int s = 0; s < 100; ++s) {
        int clips = 1 + static_cast<int>(r.next_below(4));
        for (int c = 0; c < clips; ++c) ids.push_back("v" + std::to_string(s));
    }
    for (uint64_t seed = 0; seed < 50; ++seed) {
        SourceSplit sp = split_by_source(std::span<const std::string>(ids), 0.3, seed);
        REQUIRE(!sp.train_sources.empty());
        REQUIRE(!sp.test_sources.empty());
        std::set<std::string> train(sp.train_sources.begin(), sp.train_sources.end());
        for (const auto& s : sp.test_sources) REQUIRE(train.count(s) == 0);
        std::set<size_t> seen;
        for (size_t i : sp.train_indices) seen.insert(i);
        for (size_t i : sp.test_indices) REQUIRE(seen.insert(i).second);
        REQUIRE(seen.size() == ids.size());
    }
}

TEST_CASE("split_by_source needs two distinct sources") {
    std::vector<std::string> ids = {"only", "only", "only"};
    CHECK_THROWS_AS(split_by_source(std::span<const std::string>(ids), 0.3, 1), DataError);
}
