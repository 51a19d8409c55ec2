#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "autodiag/wav.hpp"

namespace autodiag {

// All pipeline audio lives at this rate after ingest. Idle firing
// harmonics and turbo whine sit comfortably below the 11.025 kHz Nyquist.
constexpr int kCanonicalRate = 22050;

enum class CapturePosition { underhood, closed_hood, exhaust, unknown };

std::string to_string(CapturePosition p);
CapturePosition capture_position_from_string(const std::string& s);

// A normalized mono clip. samples are peak-normalized to max |s| = 1 and
// source_id identifies the vehicle instance that produced the recording,
// which the split logic uses to keep one vehicle off both sides of a
// train/test partition.
struct AudioClip {
    std::vector<float> samples;
    int sample_rate = kCanonicalRate;
    std::string source_id;
    CapturePosition capture_position = CapturePosition::unknown;

    double duration_s() const {
        return static_cast<double>(samples.size()) / sample_rate;
    }
};

// Fixed-length slice of a parent clip.
struct Segment {
    std::vector<float> samples;
    int sample_rate = kCanonicalRate;
    std::string parent;   // source_id of the originating clip
    double offset_s = 0;  // seconds into the parent clip
};

// Sidecar metadata, one JSON document next to each WAV
// ("<stem>.json": source_id, labels, capture_position).
struct ClipMetadata {
    std::string source_id;
    std::map<std::string, std::string> labels;
    CapturePosition capture_position = CapturePosition::unknown;
};

struct LabeledClip {
    AudioClip clip;
    std::map<std::string, std::string> labels;
};

// Reads a WAV file, downmixes to mono, resamples to the canonical rate
// and peak-normalizes. source_id and capture position come from the
// sidecar when present, else from the filename stem. Silent and
// flat-lined clips are rejected here rather than propagated.
AudioClip ingest(const std::string& path);

// Reads "<stem>.json" next to the WAV if it exists; otherwise returns
// defaults with source_id = filename stem.
ClipMetadata read_sidecar(const std::string& wav_path);

// Writes clip.samples as WAV plus the sidecar document.
void write_clip(const std::string& wav_path, const AudioClip& clip,
                const std::map<std::string, std::string>& labels,
                WavEncoding enc = WavEncoding::float32);

// Resamples with a normalized triangle kernel (width scales with the
// decimation ratio). The kernel is nonnegative, so the output is a
// convex combination of input samples: no overshoot, monotone inputs
// stay monotone.
std::vector<float> resample(std::span<const float> x, int src_rate, int dst_rate);

// Cuts `count` segments of length_s seconds at uniformly random offsets
// (seeded, reproducible; segments may overlap). Throws DataError if the
// clip is shorter than length_s.
std::vector<Segment> segment(const AudioClip& clip, double length_s, int count,
                             uint64_t seed);

// Leakage-safe partition: groups by source id so no vehicle contributes
// to both sides. Index-based so callers keep ownership of the clips.
struct SourceSplit {
    std::vector<size_t> train_indices;
    std::vector<size_t> test_indices;
    std::vector<std::string> train_sources;
    std::vector<std::string> test_sources;
};

SourceSplit split_by_source(std::span<const std::string> source_ids,
                            double test_fraction, uint64_t seed);
SourceSplit split_by_source(std::span<const AudioClip> clips,
                            double test_fraction, uint64_t seed);
SourceSplit split_by_source(std::span<const LabeledClip> clips,
                            double test_fraction, uint64_t seed);

}  // namespace autodiag
