#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "autodiag/audio.hpp"
#include "json.hpp"

namespace autodiag {

// Knobs for the four feature families. Every field participates in the
// schema, so two configs with equal fields produce interchangeable
// feature matrices.
struct FeatureConfig {
    int fft_window = 8192;
    int fft_kept_bins = 256;  // 256 bins of an 8192 window cover 0-689 Hz
    int mel_filters = 26;
    int mfcc_coeffs = 13;
    int frame = 2048;
    int hop = 512;
    int dwt_order = 4;   // Daubechies family order, 1..8
    int dwt_levels = 6;
    bool meta_skewness = true;
    bool meta_kurtosis = true;
    bool meta_psd = true;
    bool meta_zcr = true;

    void validate() const;
    nlohmann::json to_json() const;
    static FeatureConfig from_json(const nlohmann::json& doc);
    uint64_t hash() const;
};

// Ordered (family, name) pairs; shared by every vector extracted under
// one config.
struct FeatureSchema {
    std::vector<std::pair<std::string, std::string>> entries;
    size_t size() const { return entries.size(); }
};

struct FeatureVector {
    std::vector<double> values;
    std::shared_ptr<const FeatureSchema> schema;
};

std::shared_ptr<const FeatureSchema> schema_for(const FeatureConfig& cfg);

// Hann-windowed magnitude spectrum of the leading fft_window samples:
// the kept bins followed by spectrum summary statistics (mean, std,
// skewness, excess kurtosis, centroid, 85% rolloff, flatness).
std::vector<double> fft_features(const Segment& seg, const FeatureConfig& cfg);

// Frame-wise mel cepstra; emits per-coefficient mean then standard
// deviation across frames.
std::vector<double> mfcc(const Segment& seg, const FeatureConfig& cfg);

// Multilevel orthonormal DWT band summary: per band (d1..dL, then the
// final approximation) energy, log-energy, and fraction of total.
std::vector<double> dwt_features(const Segment& seg, const FeatureConfig& cfg);

// Time-domain moments, zero-crossing rate, and a Welch PSD summary
// (total power plus eight octave bands). Constant segments emit zero
// moments with the defined-flag cleared.
std::vector<double> meta_stats(const Segment& seg);

// [fft | mfcc | dwt | meta] in canonical order, meta filtered by flags.
FeatureVector extract(const Segment& seg, const FeatureConfig& cfg);

std::vector<FeatureVector> extract_batch(const std::vector<Segment>& segs,
                                         const FeatureConfig& cfg, int threads = 1);

// Analysis lowpass coefficients for the configured Daubechies order.
std::span<const double> daubechies_lowpass(int order);

// Feature dumps. CSV carries the schema as its header; the binary dump
// is a row-major f64 matrix with a JSON sidecar describing schema and
// config, both stamped with the config hash.
void write_features_csv(const std::string& path,
                        const std::vector<FeatureVector>& rows,
                        const FeatureConfig& cfg);
void write_features_bin(const std::string& path,
                        const std::vector<FeatureVector>& rows,
                        const FeatureConfig& cfg);
struct FeatureDump {
    std::vector<std::vector<double>> rows;
    FeatureConfig config;
    std::shared_ptr<const FeatureSchema> schema;
};
FeatureDump read_features_bin(const std::string& path);

}  // namespace autodiag
