#include "autodiag/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "autodiag/binio.hpp"
#include "autodiag/errors.hpp"
#include "autodiag/fft.hpp"
#include "autodiag/hash.hpp"
#include "autodiag/parallel.hpp"

namespace autodiag {

namespace {

constexpr double kLogFloor = 1e-30;

const double kDb1[] = {0.7071067811865475244, 0.7071067811865475244};
const double kDb2[] = {0.48296291314453414337, 0.83651630373780790558,
                       0.22414386804201338103, -0.12940952255126038117};
const double kDb3[] = {0.332670552950082616, 0.80689150931109257649,
                       0.4598775021184915701, -0.1350110200102545887,
                       -0.085441273882026661693, 0.035226291885709536603};
const double kDb4[] = {0.23037781330889650086, 0.71484657055291564709,
                       0.63088076792985890788, -0.027983769416859854211,
                       -0.18703481171909308408, 0.030841381835560763627,
                       0.032883011666885199735, -0.010597401785069032105};
const double kDb5[] = {0.16010239797419291448, 0.60382926979718967054,
                       0.72430852843777292773, 0.13842814590132073151,
                       -0.24229488706638203186, -0.032244869584638374648,
                       0.077571493840045713523, -0.0062414902127982742742,
                       -0.012580751999081999469, 0.003335725285473771278};
const double kDb6[] = {0.11154074335010946362, 0.49462389039845308568,
                       0.75113390802109535068, 0.31525035170919762909,
                       -0.22626469396543982008, -0.12976686756726193556,
                       0.097501605587323049102, 0.027522865530305728626,
                       -0.031582039317486029565, 0.00055384220116149613925,
                       0.0047772575109455106396, -0.0010773010853084795649};
const double kDb7[] = {0.07785205408500917902, 0.39653931948191730654,
                       0.72913209084623511992, 0.46978228740519312247,
                       -0.14390600392856497541, -0.22403618499387498264,
                       0.071309219266830264751, 0.080612609151083071913,
                       -0.03802993693501441358, -0.016574541630666880654,
                       0.012550998556099840613, 0.00042957797292136652113,
                       -0.0018016407040474909153, 0.00035371379997452024845};
const double kDb8[] = {0.054415842243104009955, 0.31287159091429997066,
                       0.67563073629728980681, 0.58535468365420671277,
                       -0.015829105256349305667, -0.28401554296154692652,
                       0.00047248457391328277036, 0.12874742662047845886,
                       -0.01736930100180754617, -0.044088253930794751507,
                       0.013981027917398281649, 0.0087460940474057767164,
                       -0.0048703529934515743104, -0.0003917403733769470463,
                       0.00067544940645056936637, -0.00011747678412476953373};

struct Moments {
    double mean = 0.0;
    double stdev = 0.0;
    double skewness = 0.0;
    double kurtosis_excess = 0.0;
    bool defined = false;
};

Moments moments_of(std::span<const double> x) {
    Moments m;
    if (x.empty()) return m;
    for (double v : x) m.mean += v;
    m.mean /= static_cast<double>(x.size());
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : x) {
        const double d = v - m.mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= static_cast<double>(x.size());
    m3 /= static_cast<double>(x.size());
    m4 /= static_cast<double>(x.size());
    if (m2 <= 0.0) return m;
    m.defined = true;
    m.stdev = std::sqrt(m2);
    m.skewness = m3 / (m2 * m.stdev);
    m.kurtosis_excess = m4 / (m2 * m2) - 3.0;
    return m;
}

double mel_of_hz(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double hz_of_mel(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// triangular mel filterbank, filters x (nfft/2+1) bins
std::vector<std::vector<double>> mel_bank(int n_filters, int nfft, int rate) {
    const int bins = nfft / 2 + 1;
    const double mel_max = mel_of_hz(rate / 2.0);
    std::vector<double> centers_hz(static_cast<size_t>(n_filters) + 2);
    for (int i = 0; i < n_filters + 2; ++i) {
        centers_hz[i] = hz_of_mel(mel_max * i / (n_filters + 1));
    }
    std::vector<std::vector<double>> bank(static_cast<size_t>(n_filters),
                                          std::vector<double>(bins, 0.0));
    for (int f = 0; f < n_filters; ++f) {
        const double lo = centers_hz[f], mid = centers_hz[f + 1], hi = centers_hz[f + 2];
        for (int k = 0; k < bins; ++k) {
            const double hz = static_cast<double>(k) * rate / nfft;
            if (hz <= lo || hz >= hi) continue;
            bank[f][k] = hz <= mid ? (hz - lo) / (mid - lo) : (hi - hz) / (hi - mid);
        }
    }
    return bank;
}

// orthonormal DCT-II rows: coeffs x n_filters
std::vector<std::vector<double>> dct_rows(int n_coeffs, int n_filters) {
    std::vector<std::vector<double>> rows(static_cast<size_t>(n_coeffs),
                                          std::vector<double>(n_filters));
    for (int j = 0; j < n_coeffs; ++j) {
        const double beta = j == 0 ? std::sqrt(1.0 / n_filters) : std::sqrt(2.0 / n_filters);
        for (int i = 0; i < n_filters; ++i) {
            rows[j][i] = beta * std::cos(M_PI * j * (2.0 * i + 1.0) / (2.0 * n_filters));
        }
    }
    return rows;
}

struct WelchPsd {
    std::vector<double> power;  // per-bin average power
    double bin_hz = 0.0;
};

WelchPsd welch_psd(std::span<const float> x, int rate) {
    size_t nfft = 16;
    while (nfft * 2 <= static_cast<size_t>(x.size() / 4.5)) nfft *= 2;
    nfft = std::min(nfft, x.size());
    if (!is_pow2(nfft)) {
        size_t p = 16;
        while (p * 2 <= nfft) p *= 2;
        nfft = p;
    }
    const size_t hop = nfft / 2;
    const auto window = hann_window(nfft);
    double wsum2 = 0.0;
    for (double w : window) wsum2 += w * w;

    WelchPsd out;
    out.bin_hz = static_cast<double>(rate) / static_cast<double>(nfft);
    out.power.assign(nfft / 2 + 1, 0.0);
    std::vector<double> buf(nfft);
    size_t frames = 0;
    for (size_t off = 0; off + nfft <= x.size(); off += hop) {
        for (size_t i = 0; i < nfft; ++i) buf[i] = window[i] * x[off + i];
        auto spec = rfft(std::span<const double>(buf), nfft);
        for (size_t k = 0; k < spec.size(); ++k) out.power[k] += std::norm(spec[k]);
        ++frames;
    }
    if (frames == 0) {
        // shorter than one frame: single zero-padded periodogram
        for (size_t i = 0; i < x.size() && i < nfft; ++i) buf[i] = window[i] * x[i];
        for (size_t i = x.size(); i < nfft; ++i) buf[i] = 0.0;
        auto spec = rfft(std::span<const double>(buf), nfft);
        for (size_t k = 0; k < spec.size(); ++k) out.power[k] += std::norm(spec[k]);
        frames = 1;
    }
    const double scale = 1.0 / (static_cast<double>(frames) * wsum2);
    for (double& p : out.power) p *= scale;
    return out;
}

}  // namespace

std::span<const double> daubechies_lowpass(int order) {
    switch (order) {
        case 1: return kDb1;
        case 2: return kDb2;
        case 3: return kDb3;
        case 4: return kDb4;
        case 5: return kDb5;
        case 6: return kDb6;
        case 7: return kDb7;
        case 8: return kDb8;
        default:
            throw ConfigError("unsupported Daubechies order: " + std::to_string(order));
    }
}

void FeatureConfig::validate() const {
    if (fft_window < 4 || !is_pow2(static_cast<size_t>(fft_window))) {
        throw ConfigError("fft_window must be a power of two >= 4");
    }
    if (fft_kept_bins < 1 || fft_kept_bins > fft_window / 2) {
        throw ConfigError("fft_kept_bins must be in [1, fft_window/2]");
    }
    if (mel_filters < 2) throw ConfigError("mel_filters must be >= 2");
    if (mfcc_coeffs < 1 || mfcc_coeffs > mel_filters) {
        throw ConfigError("mfcc_coeffs must be in [1, mel_filters]");
    }
    if (frame < 4 || !is_pow2(static_cast<size_t>(frame))) {
        throw ConfigError("frame must be a power of two >= 4");
    }
    if (hop < 1 || hop > frame) throw ConfigError("hop must be in [1, frame]");
    if (dwt_levels < 1) throw ConfigError("dwt_levels must be >= 1");
    daubechies_lowpass(dwt_order);
}

nlohmann::json FeatureConfig::to_json() const {
    return nlohmann::json{
        {"fft_window", fft_window},   {"fft_kept_bins", fft_kept_bins},
        {"mel_filters", mel_filters}, {"mfcc_coeffs", mfcc_coeffs},
        {"frame", frame},             {"hop", hop},
        {"dwt_order", dwt_order},     {"dwt_levels", dwt_levels},
        {"meta_skewness", meta_skewness},
        {"meta_kurtosis", meta_kurtosis},
        {"meta_psd", meta_psd},
        {"meta_zcr", meta_zcr},
    };
}

FeatureConfig FeatureConfig::from_json(const nlohmann::json& doc) {
    FeatureConfig cfg;
    try {
        if (doc.contains("fft_window")) cfg.fft_window = doc["fft_window"].get<int>();
        if (doc.contains("fft_kept_bins")) cfg.fft_kept_bins = doc["fft_kept_bins"].get<int>();
        if (doc.contains("mel_filters")) cfg.mel_filters = doc["mel_filters"].get<int>();
        if (doc.contains("mfcc_coeffs")) cfg.mfcc_coeffs = doc["mfcc_coeffs"].get<int>();
        if (doc.contains("frame")) cfg.frame = doc["frame"].get<int>();
        if (doc.contains("hop")) cfg.hop = doc["hop"].get<int>();
        if (doc.contains("dwt_order")) cfg.dwt_order = doc["dwt_order"].get<int>();
        if (doc.contains("dwt_levels")) cfg.dwt_levels = doc["dwt_levels"].get<int>();
        if (doc.contains("meta_skewness")) cfg.meta_skewness = doc["meta_skewness"].get<bool>();
        if (doc.contains("meta_kurtosis")) cfg.meta_kurtosis = doc["meta_kurtosis"].get<bool>();
        if (doc.contains("meta_psd")) cfg.meta_psd = doc["meta_psd"].get<bool>();
        if (doc.contains("meta_zcr")) cfg.meta_zcr = doc["meta_zcr"].get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad feature config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

uint64_t FeatureConfig::hash() const { return fnv1a64(to_json().dump()); }

std::shared_ptr<const FeatureSchema> schema_for(const FeatureConfig& cfg) {
    cfg.validate();
    auto schema = std::make_shared<FeatureSchema>();
    auto& e = schema->entries;
    char name[32];
    for (int k = 0; k < cfg.fft_kept_bins; ++k) {
        std::snprintf(name, sizeof(name), "mag_%04d", k);
        e.emplace_back("fft", name);
    }
    for (const char* s : {"mean", "std", "skewness", "kurtosis", "centroid_hz",
                          "rolloff85_hz", "flatness"}) {
        e.emplace_back("fft", s);
    }
    for (const char* stat : {"mean", "std"}) {
        for (int c = 0; c < cfg.mfcc_coeffs; ++c) {
            std::snprintf(name, sizeof(name), "%s_%02d", stat, c);
            e.emplace_back("mfcc", name);
        }
    }
    for (int l = 1; l <= cfg.dwt_levels + 1; ++l) {
        const bool approx = l == cfg.dwt_levels + 1;
        for (const char* stat : {"energy", "log_energy", "fraction"}) {
            if (approx) {
                std::snprintf(name, sizeof(name), "a%d_%s", cfg.dwt_levels, stat);
            } else {
                std::snprintf(name, sizeof(name), "d%d_%s", l, stat);
            }
            e.emplace_back("dwt", name);
        }
    }
    if (cfg.meta_skewness) e.emplace_back("meta", "skewness");
    if (cfg.meta_kurtosis) e.emplace_back("meta", "kurtosis");
    if (cfg.meta_skewness || cfg.meta_kurtosis) e.emplace_back("meta", "moments_defined");
    if (cfg.meta_zcr) e.emplace_back("meta", "zcr");
    if (cfg.meta_psd) {
        e.emplace_back("meta", "psd_total");
        for (int b = 0; b < 8; ++b) {
            std::snprintf(name, sizeof(name), "oct_%d", b);
            e.emplace_back("meta", name);
        }
    }
    return schema;
}

std::vector<double> fft_features(const Segment& seg, const FeatureConfig& cfg) {
    if (seg.samples.size() < static_cast<size_t>(cfg.fft_window)) {
        throw DataError("segment too short for fft_window " +
                        std::to_string(cfg.fft_window));
    }
    const size_t n = static_cast<size_t>(cfg.fft_window);
    const auto window = hann_window(n);
    std::vector<double> buf(n);
    for (size_t i = 0; i < n; ++i) buf[i] = window[i] * seg.samples[i];
    auto spec = rfft(std::span<const double>(buf), n);

    std::vector<double> mag(spec.size());
    for (size_t k = 0; k < spec.size(); ++k) mag[k] = std::abs(spec[k]);

    std::vector<double> out(mag.begin(), mag.begin() + cfg.fft_kept_bins);

    const Moments m = moments_of(mag);
    double mag_sum = 0.0, centroid = 0.0, power_total = 0.0;
    const double bin_hz = static_cast<double>(seg.sample_rate) / cfg.fft_window;
    for (size_t k = 0; k < mag.size(); ++k) {
        mag_sum += mag[k];
        centroid += static_cast<double>(k) * bin_hz * mag[k];
        power_total += mag[k] * mag[k];
    }
    centroid = mag_sum > 0.0 ? centroid / mag_sum : 0.0;

    double acc = 0.0, rolloff = 0.0;
    for (size_t k = 0; k < mag.size(); ++k) {
        acc += mag[k] * mag[k];
        if (acc >= 0.85 * power_total) {
            rolloff = static_cast<double>(k) * bin_hz;
            break;
        }
    }

    // flatness on the power spectrum, DC excluded
    double log_acc = 0.0, lin_acc = 0.0;
    const size_t nb = mag.size() - 1;
    for (size_t k = 1; k < mag.size(); ++k) {
        const double p = mag[k] * mag[k];
        log_acc += std::log(p + kLogFloor);
        lin_acc += p;
    }
    const double flatness =
        lin_acc > 0.0 ? std::exp(log_acc / static_cast<double>(nb)) / (lin_acc / nb) : 0.0;

    out.push_back(m.mean);
    out.push_back(m.stdev);
    out.push_back(m.skewness);
    out.push_back(m.kurtosis_excess);
    out.push_back(centroid);
    out.push_back(rolloff);
    out.push_back(flatness);
    return out;
}

std::vector<double> mfcc(const Segment& seg, const FeatureConfig& cfg) {
    const size_t frame = static_cast<size_t>(cfg.frame);
    if (seg.samples.size() < frame) {
        throw DataError("segment too short for mfcc frame " + std::to_string(cfg.frame));
    }
    const auto window = hann_window(frame);
    const auto bank = mel_bank(cfg.mel_filters, cfg.frame, seg.sample_rate);
    const auto dct = dct_rows(cfg.mfcc_coeffs, cfg.mel_filters);

    const size_t c = static_cast<size_t>(cfg.mfcc_coeffs);
    std::vector<double> sum(c, 0.0), sumsq(c, 0.0);
    std::vector<double> buf(frame);
    std::vector<double> logmel(static_cast<size_t>(cfg.mel_filters));
    size_t frames = 0;
    for (size_t off = 0; off + frame <= seg.samples.size();
         off += static_cast<size_t>(cfg.hop)) {
        for (size_t i = 0; i < frame; ++i) buf[i] = window[i] * seg.samples[off + i];
        auto spec = rfft(std::span<const double>(buf), frame);
        for (int f = 0; f < cfg.mel_filters; ++f) {
            double e = 0.0;
            const auto& filt = bank[f];
            for (size_t k = 0; k < spec.size(); ++k) {
                if (filt[k] != 0.0) e += filt[k] * std::norm(spec[k]);
            }
            logmel[f] = std::log(e + kLogFloor);
        }
        for (size_t j = 0; j < c; ++j) {
            double v = 0.0;
            for (int i = 0; i < cfg.mel_filters; ++i) v += dct[j][i] * logmel[i];
            sum[j] += v;
            sumsq[j] += v * v;
        }
        ++frames;
    }

    std::vector<double> out(2 * c);
    for (size_t j = 0; j < c; ++j) {
        const double mean = sum[j] / static_cast<double>(frames);
        const double var = std::max(0.0, sumsq[j] / static_cast<double>(frames) - mean * mean);
        out[j] = mean;
        out[c + j] = std::sqrt(var);
    }
    return out;
}

std::vector<double> dwt_features(const Segment& seg, const FeatureConfig& cfg) {
    const size_t min_len = static_cast<size_t>(1) << cfg.dwt_levels;
    if (seg.samples.size() < min_len) {
        throw DataError("segment too short for " + std::to_string(cfg.dwt_levels) +
                        " DWT levels");
    }
    const auto h = daubechies_lowpass(cfg.dwt_order);
    const size_t L = h.size();
    std::vector<double> g(L);  // highpass by quadrature mirror
    for (size_t k = 0; k < L; ++k) {
        g[k] = (k % 2 == 0 ? 1.0 : -1.0) * h[L - 1 - k];
    }

    // truncate to a multiple of 2^levels so every level halves exactly
    size_t n = (seg.samples.size() >> cfg.dwt_levels) << cfg.dwt_levels;
    std::vector<double> approx(seg.samples.begin(), seg.samples.begin() + n);

    std::vector<double> energies;  // d1..dL then aL
    for (int level = 0; level < cfg.dwt_levels; ++level) {
        const size_t half = approx.size() / 2;
        std::vector<double> next(half), detail(half);
        for (size_t i = 0; i < half; ++i) {
            double a = 0.0, d = 0.0;
            for (size_t k = 0; k < L; ++k) {
                const double x = approx[(2 * i + k) % approx.size()];
                a += h[k] * x;
                d += g[k] * x;
            }
            next[i] = a;
            detail[i] = d;
        }
        double e = 0.0;
        for (double v : detail) e += v * v;
        energies.push_back(e);
        approx = std::move(next);
    }
    double ea = 0.0;
    for (double v : approx) ea += v * v;
    energies.push_back(ea);

    const double total = std::accumulate(energies.begin(), energies.end(), 0.0);
    std::vector<double> out;
    out.reserve(energies.size() * 3);
    for (double e : energies) {
        out.push_back(e);
        out.push_back(std::log(e + kLogFloor));
        out.push_back(total > 0.0 ? e / total : 0.0);
    }
    return out;
}

std::vector<double> meta_stats(const Segment& seg) {
    if (seg.samples.empty()) throw DataError("empty segment");
    std::vector<double> x(seg.samples.begin(), seg.samples.end());
    const Moments m = moments_of(x);

    size_t crossings = 0;
    for (size_t i = 1; i < x.size(); ++i) {
        if ((x[i - 1] < 0.0 && x[i] >= 0.0) || (x[i - 1] >= 0.0 && x[i] < 0.0)) ++crossings;
    }
    const double duration = static_cast<double>(x.size()) / seg.sample_rate;
    const double zcr = static_cast<double>(crossings) / duration;

    const WelchPsd psd = welch_psd(std::span<const float>(seg.samples), seg.sample_rate);
    double total = 0.0;
    for (double p : psd.power) total += p;
    // octave bands doubling up to Nyquist; lowest band absorbs everything
    // below its upper edge
    const double nyquist = seg.sample_rate / 2.0;
    std::vector<double> bands(8, 0.0);
    for (size_t k = 0; k < psd.power.size(); ++k) {
        const double f = static_cast<double>(k) * psd.bin_hz;
        int b = 0;
        for (int j = 7; j >= 1; --j) {
            if (f >= nyquist / (1 << (8 - j))) {
                b = j;
                break;
            }
        }
        bands[b] += psd.power[k];
    }

    std::vector<double> out;
    out.push_back(m.defined ? m.skewness : 0.0);
    out.push_back(m.defined ? m.kurtosis_excess : 0.0);
    out.push_back(m.defined ? 1.0 : 0.0);
    out.push_back(zcr);
    out.push_back(total);
    for (double b : bands) out.push_back(b);
    return out;
}

FeatureVector extract(const Segment& seg, const FeatureConfig& cfg) {
    cfg.validate();
    FeatureVector fv;
    fv.schema = schema_for(cfg);
    fv.values = fft_features(seg, cfg);

    auto mf = mfcc(seg, cfg);
    fv.values.insert(fv.values.end(), mf.begin(), mf.end());
    auto dw = dwt_features(seg, cfg);
    fv.values.insert(fv.values.end(), dw.begin(), dw.end());

    const auto meta = meta_stats(seg);
    if (cfg.meta_skewness) fv.values.push_back(meta[0]);
    if (cfg.meta_kurtosis) fv.values.push_back(meta[1]);
    if (cfg.meta_skewness || cfg.meta_kurtosis) fv.values.push_back(meta[2]);
    if (cfg.meta_zcr) fv.values.push_back(meta[3]);
    if (cfg.meta_psd) {
        fv.values.insert(fv.values.end(), meta.begin() + 4, meta.end());
    }

    if (fv.values.size() != fv.schema->size()) {
        throw DataError("feature vector does not match schema layout");
    }
    for (double v : fv.values) {
        if (!std::isfinite(v)) throw DataError("non-finite feature value");
    }
    return fv;
}

std::vector<FeatureVector> extract_batch(const std::vector<Segment>& segs,
                                         const FeatureConfig& cfg, int threads) {
    std::vector<FeatureVector> out(segs.size());
    parallel_for(segs.size(), threads,
                 [&](size_t i) { out[i] = extract(segs[i], cfg); });
    return out;
}

namespace {

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void write_features_csv(const std::string& path,
                        const std::vector<FeatureVector>& rows,
                        const FeatureConfig& cfg) {
    std::string out = "# config_hash=" + fnv1a64_hex(cfg.to_json().dump()) + "\n";
    const auto schema = rows.empty() ? schema_for(cfg) : rows[0].schema;
    for (size_t i = 0; i < schema->entries.size(); ++i) {
        if (i) out += ',';
        out += schema->entries[i].first + '.' + schema->entries[i].second;
    }
    out += '\n';
    for (const auto& row : rows) {
        for (size_t i = 0; i < row.values.size(); ++i) {
            if (i) out += ',';
            out += format_double(row.values[i]);
        }
        out += '\n';
    }
    write_file(path, out);
}

void write_features_bin(const std::string& path,
                        const std::vector<FeatureVector>& rows,
                        const FeatureConfig& cfg) {
    const auto schema = rows.empty() ? schema_for(cfg) : rows[0].schema;
    ByteWriter w;
    w.raw("ADFM");
    w.u32(1);
    w.u64(cfg.hash());
    w.u64(rows.size());
    w.u64(schema->size());
    for (const auto& row : rows) {
        for (double v : row.values) w.f64(v);
    }
    write_file(path, w.buffer());

    nlohmann::json side;
    side["config"] = cfg.to_json();
    side["config_hash"] = fnv1a64_hex(cfg.to_json().dump());
    nlohmann::json names = nlohmann::json::array();
    for (const auto& [family, name] : schema->entries) names.push_back(family + "." + name);
    side["schema"] = names;
    write_file(path + ".json", side.dump(2) + "\n");
}

FeatureDump read_features_bin(const std::string& path) {
    const std::string data = read_file(path);
    ByteReader r(data);
    char magic[5] = {0};
    for (int i = 0; i < 4; ++i) magic[i] = static_cast<char>(r.u8());
    if (std::string(magic) != "ADFM") throw ModelError("not a feature dump: " + path);
    const uint32_t version = r.u32();
    if (version != 1) throw ModelError("unsupported feature dump version");
    const uint64_t cfg_hash = r.u64();
    const uint64_t n_rows = r.u64();
    const uint64_t n_cols = r.u64();

    FeatureDump dump;
    nlohmann::json side;
    try {
        side = nlohmann::json::parse(read_file(path + ".json"));
    } catch (const nlohmann::json::exception& e) {
        throw ModelError(std::string("bad feature dump sidecar: ") + e.what());
    }
    dump.config = FeatureConfig::from_json(side["config"]);
    if (dump.config.hash() != cfg_hash) {
        throw ModelError("feature dump config hash mismatch");
    }
    dump.schema = schema_for(dump.config);
    if (dump.schema->size() != n_cols) throw ModelError("feature dump column mismatch");

    dump.rows.assign(n_rows, std::vector<double>(n_cols));
    for (auto& row : dump.rows) {
        for (auto& v : row) v = r.f64();
    }
    return dump;
}

}  // namespace autodiag
