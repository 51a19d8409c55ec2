#include "autodiag/audio.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include <json.hpp>

#include "autodiag/binio.hpp"
#include "autodiag/errors.hpp"
#include "autodiag/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace autodiag {

std::string to_string(CapturePosition p) {
    switch (p) {
        case CapturePosition::underhood: return "underhood";
        case CapturePosition::closed_hood: return "closed_hood";
        case CapturePosition::exhaust: return "exhaust";
        case CapturePosition::unknown: return "unknown";
    }
    return "unknown";
}

CapturePosition capture_position_from_string(const std::string& s) {
    if (s == "underhood") return CapturePosition::underhood;
    if (s == "closed_hood") return CapturePosition::closed_hood;
    if (s == "exhaust") return CapturePosition::exhaust;
    return CapturePosition::unknown;
}

std::vector<float> resample(std::span<const float> x, int src_rate, int dst_rate) {
    if (src_rate <= 0 || dst_rate <= 0) throw ConfigError("sample rates must be positive");
    if (src_rate == dst_rate) return std::vector<float>(x.begin(), x.end());

    const double ratio = static_cast<double>(src_rate) / dst_rate;
    const double halfwidth = std::max(1.0, ratio);
    const size_t n_out = static_cast<size_t>(
        std::llround(static_cast<double>(x.size()) * dst_rate / src_rate));

    std::vector<float> out(n_out);
    for (size_t j = 0; j < n_out; ++j) {
        const double center = static_cast<double>(j) * ratio;
        const long lo = std::max<long>(0, static_cast<long>(std::ceil(center - halfwidth)));
        const long hi = std::min<long>(static_cast<long>(x.size()) - 1,
                                       static_cast<long>(std::floor(center + halfwidth)));
        double acc = 0.0, wsum = 0.0;
        for (long i = lo; i <= hi; ++i) {
            const double w = 1.0 - std::abs(static_cast<double>(i) - center) / halfwidth;
            if (w <= 0.0) continue;
            acc += w * x[static_cast<size_t>(i)];
            wsum += w;
        }
        out[j] = wsum > 0.0 ? static_cast<float>(acc / wsum) : 0.0f;
    }
    return out;
}

ClipMetadata read_sidecar(const std::string& wav_path) {
    ClipMetadata meta;
    fs::path p(wav_path);
    meta.source_id = p.stem().string();
    fs::path sidecar = p;
    sidecar.replace_extension(".json");
    std::error_code ec;
    if (!fs::exists(sidecar, ec)) return meta;

    json doc;
    try {
        doc = json::parse(read_file(sidecar.string()));
    } catch (const json::exception& e) {
        throw DataError("malformed sidecar " + sidecar.string() + ": " + e.what());
    }
    if (doc.contains("source_id")) meta.source_id = doc["source_id"].get<std::string>();
    if (doc.contains("capture_position")) {
        meta.capture_position =
            capture_position_from_string(doc["capture_position"].get<std::string>());
    }
    if (doc.contains("labels")) {
        for (auto& [k, v] : doc["labels"].items()) {
            meta.labels[k] = v.get<std::string>();
        }
    }
    return meta;
}

AudioClip ingest(const std::string& path) {
    const WavData wav = read_wav(path);

    // downmix: mean across channels
    const size_t n = wav.channels.front().size();
    std::vector<float> mono(n);
    if (wav.channels.size() == 1) {
        mono = wav.channels.front();
    } else {
        const double inv = 1.0 / static_cast<double>(wav.channels.size());
        for (size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (const auto& ch : wav.channels) acc += ch[i];
            mono[i] = static_cast<float>(acc * inv);
        }
    }

    std::vector<float> canonical = resample(mono, wav.sample_rate, kCanonicalRate);
    if (canonical.empty()) throw DataError("zero-length audio after resample: " + path);

    const auto [mn, mx] = std::minmax_element(canonical.begin(), canonical.end());
    const float peak = std::max(std::abs(*mn), std::abs(*mx));
    if (peak == 0.0f) throw DataError("silent clip: " + path);
    if (*mn == *mx) throw DataError("flat clip: " + path);
    for (float& s : canonical) s /= peak;

    const ClipMetadata meta = read_sidecar(path);
    AudioClip clip;
    clip.samples = std::move(canonical);
    clip.sample_rate = kCanonicalRate;
    clip.source_id = meta.source_id;
    clip.capture_position = meta.capture_position;
    if (clip.source_id.empty()) throw DataError("empty source_id for clip: " + path);
    return clip;
}

void write_clip(const std::string& wav_path, const AudioClip& clip,
                const std::map<std::string, std::string>& labels, WavEncoding enc) {
    write_wav(wav_path, clip.samples, clip.sample_rate, enc);
    json doc;
    doc["source_id"] = clip.source_id;
    doc["capture_position"] = to_string(clip.capture_position);
    doc["labels"] = labels;
    fs::path sidecar(wav_path);
    sidecar.replace_extension(".json");
    write_file(sidecar.string(), doc.dump(2) + "\n");
}

std::vector<Segment> segment(const AudioClip& clip, double length_s, int count,
                             uint64_t seed) {
    if (count <= 0) throw ConfigError("segment count must be positive");
    const size_t seg_len = static_cast<size_t>(std::llround(length_s * clip.sample_rate));
    if (seg_len == 0) throw ConfigError("segment length must be positive");
    if (clip.samples.size() < seg_len) {
        throw DataError("clip shorter than segment length (" +
                        std::to_string(clip.duration_s()) + " s < " +
                        std::to_string(length_s) + " s)");
    }
    const size_t max_offset = clip.samples.size() - seg_len;
    Rng rng(seed);
    std::vector<Segment> out;
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        const size_t off = static_cast<size_t>(rng.next_below(max_offset + 1));
        Segment seg;
        seg.samples.assign(clip.samples.begin() + static_cast<long>(off),
                           clip.samples.begin() + static_cast<long>(off + seg_len));
        seg.sample_rate = clip.sample_rate;
        seg.parent = clip.source_id;
        seg.offset_s = static_cast<double>(off) / clip.sample_rate;
        out.push_back(std::move(seg));
    }
    return out;
}

SourceSplit split_by_source(std::span<const std::string> source_ids,
                            double test_fraction, uint64_t seed) {
    std::map<std::string, std::vector<size_t>> by_source;
    for (size_t i = 0; i < source_ids.size(); ++i) {
        if (source_ids[i].empty()) throw DataError("clip with empty source_id");
        by_source[source_ids[i]].push_back(i);
    }
    if (by_source.size() < 2) {
        throw DataError("split_by_source requires at least 2 distinct sources, got " +
                        std::to_string(by_source.size()));
    }

    std::vector<std::string> sources;
    sources.reserve(by_source.size());
    for (const auto& [s, _] : by_source) sources.push_back(s);
    Rng rng(seed);
    rng.shuffle(sources);

    const double target = test_fraction * static_cast<double>(source_ids.size());
    SourceSplit split;
    size_t test_clips = 0;
    for (const auto& s : sources) {
        const bool to_test = static_cast<double>(test_clips) < target || split.test_sources.empty();
        if (to_test) {
            split.test_sources.push_back(s);
            test_clips += by_source[s].size();
        } else {
            split.train_sources.push_back(s);
        }
    }
    // never let either side go empty
    if (split.train_sources.empty()) {
        split.train_sources.push_back(split.test_sources.back());
        split.test_sources.pop_back();
    }

    for (const auto& s : split.train_sources) {
        for (size_t i : by_source[s]) split.train_indices.push_back(i);
    }
    for (const auto& s : split.test_sources) {
        for (size_t i : by_source[s]) split.test_indices.push_back(i);
    }
    std::sort(split.train_indices.begin(), split.train_indices.end());
    std::sort(split.test_indices.begin(), split.test_indices.end());
    return split;
}

SourceSplit split_by_source(std::span<const AudioClip> clips, double test_fraction,
                            uint64_t seed) {
    std::vector<std::string> ids;
    ids.reserve(clips.size());
    for (const auto& c : clips) ids.push_back(c.source_id);
    return split_by_source(std::span<const std::string>(ids), test_fraction, seed);
}

SourceSplit split_by_source(std::span<const LabeledClip> clips, double test_fraction,
                            uint64_t seed) {
    std::vector<std::string> ids;
    ids.reserve(clips.size());
    for (const auto& c : clips) ids.push_back(c.clip.source_id);
    return split_by_source(std::span<const std::string>(ids), test_fraction, seed);
}

}  // namespace autodiag
