#include "autodiag/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "autodiag/errors.hpp"
#include "autodiag/rng.hpp"

namespace autodiag {

void EngineSpec::validate() const {
    if (cylinders != 3 && cylinders != 4 && cylinders != 6 && cylinders != 8) {
        throw DataError("unsupported cylinder count: " + std::to_string(cylinders));
    }
    if (idle_rpm < 500.0 || idle_rpm > 1200.0) {
        throw DataError("idle_rpm out of range [500, 1200]: " + std::to_string(idle_rpm));
    }
    if (resonance_hz <= 40.0 || resonance_hz >= kCanonicalRate / 2.0) {
        throw DataError("resonance_hz out of range");
    }
    if (impulse_sharpness < 1.0 || impulse_sharpness > 10.0) {
        throw DataError("impulse_sharpness out of range [1, 10]");
    }
    if (noise_floor_db >= 0.0) {
        throw DataError("noise_floor_db must be negative");
    }
}

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

// decaying sinusoid added at sample index `at`
void add_ring(std::vector<double>& buf, size_t at, double amp, double freq,
              double tau_s, double phase, int rate) {
    const size_t len = std::min(buf.size() - at,
                                static_cast<size_t>(6.0 * tau_s * rate) + 1);
    for (size_t k = 0; k < len; ++k) {
        const double t = static_cast<double>(k) / rate;
        buf[at + k] += amp * std::exp(-t / tau_s) * std::sin(kTwoPi * freq * t + phase);
    }
}

// one-sided exponential spike (the combustion pressure transient)
void add_spike(std::vector<double>& buf, size_t at, double amp, double tau_s, int rate) {
    const size_t len = std::min(buf.size() - at,
                                static_cast<size_t>(8.0 * tau_s * rate) + 2);
    for (size_t k = 0; k < len; ++k) {
        const double t = static_cast<double>(k) / rate;
        buf[at + k] += amp * std::exp(-t / tau_s);
    }
}

// smooth unipolar pressure bump; concentrates energy at the firing fundamental
void add_bump(std::vector<double>& buf, size_t at, double amp, double width_s, int rate) {
    const size_t len = std::min(buf.size() - at,
                                static_cast<size_t>(width_s * rate) + 1);
    for (size_t k = 0; k < len; ++k) {
        const double u = static_cast<double>(k) / (width_s * rate);
        buf[at + k] += amp * 0.5 * (1.0 - std::cos(kTwoPi * u));
    }
}

}  // namespace

AudioClip synthesize(const EngineSpec& spec, double duration_s,
                     const std::string& source_id) {
    spec.validate();
    if (duration_s < 1.0) throw DataError("synthesis duration must be >= 1 s");

    const int rate = kCanonicalRate;
    const size_t n = static_cast<size_t>(std::llround(duration_s * rate));
    std::vector<double> buf(n, 0.0);

    Rng rng(spec.seed);

    // per-cylinder firing unevenness: puts sidebands at the cam-cycle rate,
    // so cylinder count is encoded beyond the absolute firing frequency
    std::vector<double> cyl_gain(static_cast<size_t>(spec.cylinders));
    for (auto& g : cyl_gain) g = 1.0 + 0.12 * (2.0 * rng.next_double() - 1.0);

    // the block rings at a fixed knock frequency; events only wobble it
    const double knock_center = rng.uniform(2400.0, 5600.0);

    const double firing_period = 1.0 / spec.firing_hz();
    const double ring_tau = 10.0 / (M_PI * spec.resonance_hz);
    const bool diesel = spec.fuel == Fuel::diesel;
    const bool turbo = spec.aspiration == Aspiration::turbo;
    // diesel combustion is harder than the nominal sharpness implies
    const double sharpness =
        diesel ? std::min(10.0, 2.5 * spec.impulse_sharpness) : spec.impulse_sharpness;
    const double spike_tau = 0.0012 / sharpness;
    const double spike_amp = diesel ? 3.0 : 1.5;
    const double bump_width = std::min(0.45 * firing_period, 0.035);

    double t = rng.next_double() * firing_period;
    size_t fire = 0;
    while (t < duration_s) {
        const size_t at = static_cast<size_t>(t * rate);
        if (at >= n) break;
        const double amp =
            cyl_gain[fire % cyl_gain.size()] * (1.0 + 0.05 * (2.0 * rng.next_double() - 1.0));
        const double ring_phase = rng.next_double() * kTwoPi;
        add_bump(buf, at, 0.9 * amp, bump_width, rate);
        add_ring(buf, at, amp, spec.resonance_hz, ring_tau, ring_phase, rate);
        add_spike(buf, at, spike_amp * amp, spike_tau, rate);
        if (diesel) {
            // combustion knock: short ringing burst in the 2-6 kHz band
            const double knock_hz = knock_center * (1.0 + 0.03 * (2.0 * rng.next_double() - 1.0));
            const double knock_phase = rng.next_double() * kTwoPi;
            const double delay_s = rng.uniform(0.0005, 0.0015);
            const size_t knock_at = std::min(n - 1, at + static_cast<size_t>(delay_s * rate));
            add_ring(buf, knock_at, 1.3 * amp, knock_hz, 0.002, knock_phase, rate);
        }
        t += firing_period * (1.0 + 0.02 * (2.0 * rng.next_double() - 1.0));
        ++fire;
    }

    if (turbo) {
        // compressor whine: slowly wandering tone near the top of the band
        double freq = rng.uniform(8000.0, 10500.0);
        double phase = rng.next_double() * kTwoPi;
        const double whine_amp = std::pow(10.0, -18.0 / 20.0);
        for (size_t i = 0; i < n; ++i) {
            if (i % 256 == 0) {
                freq += 30.0 * rng.normal();
                if (freq < 8000.0) freq = 16000.0 - freq;
                if (freq > 10500.0) freq = 21000.0 - freq;
            }
            phase += kTwoPi * freq / rate;
            buf[i] += whine_amp * std::sin(phase);
        }
    }

    const double noise_amp = std::pow(10.0, spec.noise_floor_db / 20.0);
    for (size_t i = 0; i < n; ++i) buf[i] += noise_amp * rng.normal();

    double peak = 0.0;
    for (double v : buf) peak = std::max(peak, std::abs(v));
    if (peak == 0.0) throw DataError("degenerate synthesis produced silence");

    AudioClip clip;
    clip.sample_rate = rate;
    clip.source_id = source_id;
    clip.capture_position = CapturePosition::closed_hood;
    clip.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
        clip.samples[i] = static_cast<float>(buf[i] / peak);
    }
    return clip;
}

std::vector<ClassCell> balanced_mix() {
    std::vector<ClassCell> mix;
    for (Fuel f : {Fuel::gasoline, Fuel::diesel}) {
        for (int cyl : {3, 4, 6, 8}) {
            for (Aspiration a : {Aspiration::natural, Aspiration::turbo}) {
                mix.push_back({f, cyl, a, 1.0});
            }
        }
    }
    return mix;
}

std::vector<int> apportion(const std::vector<ClassCell>& mix, int n_vehicles) {
    if (mix.empty()) throw DataError("empty class mix");
    double total_w = 0.0;
    for (const auto& c : mix) {
        if (c.weight < 0.0) throw DataError("negative class weight");
        total_w += c.weight;
    }
    if (total_w <= 0.0) throw DataError("class mix has no positive weight");

    std::vector<int> counts(mix.size(), 0);
    std::vector<std::pair<double, size_t>> remainders;
    int assigned = 0;
    for (size_t i = 0; i < mix.size(); ++i) {
        const double quota = n_vehicles * mix[i].weight / total_w;
        counts[i] = static_cast<int>(std::floor(quota));
        assigned += counts[i];
        remainders.push_back({quota - counts[i], i});
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (int k = 0; k < n_vehicles - assigned; ++k) {
        counts[remainders[static_cast<size_t>(k)].second] += 1;
    }
    return counts;
}

EngineSpec vehicle_spec(const ClassCell& cell, uint64_t corpus_seed, int vehicle_index) {
    Rng rng(Rng::derive(corpus_seed, 0xd1a60000ULL + static_cast<uint64_t>(vehicle_index)));
    EngineSpec spec;
    spec.fuel = cell.fuel;
    spec.cylinders = cell.cylinders;
    spec.aspiration = cell.aspiration;
    spec.idle_rpm = rng.uniform(520.0, 1180.0);
    spec.resonance_hz = rng.uniform(120.0, 400.0);
    spec.impulse_sharpness = cell.fuel == Fuel::diesel ? rng.uniform(5.0, 9.0)
                                                       : rng.uniform(1.5, 3.5);
    spec.noise_floor_db = rng.uniform(-45.0, -32.0);
    spec.seed = Rng::derive(corpus_seed, 0xc11b0000ULL + static_cast<uint64_t>(vehicle_index));
    return spec;
}

std::vector<LabeledClip> generate_corpus(const CorpusSpec& cspec) {
    if (cspec.n_vehicles < 2) throw DataError("corpus needs at least 2 vehicles");
    if (cspec.clips_per_vehicle < 1) throw DataError("clips_per_vehicle must be >= 1");
    const std::vector<ClassCell> mix = cspec.mix.empty() ? balanced_mix() : cspec.mix;
    const std::vector<int> counts = apportion(mix, cspec.n_vehicles);
    for (size_t i = 0; i < mix.size(); ++i) {
        if (mix[i].weight > 0.0 && counts[i] < 2) {
            throw DataError("infeasible mix: cell " + std::to_string(i) +
                            " would get fewer than 2 vehicles (needed for splitting)");
        }
    }

    std::vector<LabeledClip> corpus;
    corpus.reserve(static_cast<size_t>(cspec.n_vehicles) * cspec.clips_per_vehicle);
    int vehicle_index = 0;
    for (size_t ci = 0; ci < mix.size(); ++ci) {
        for (int v = 0; v < counts[ci]; ++v, ++vehicle_index) {
            EngineSpec spec = vehicle_spec(mix[ci], cspec.seed, vehicle_index);
            char sid[32];
            std::snprintf(sid, sizeof(sid), "veh-%04d", vehicle_index);
            std::map<std::string, std::string> labels = {
                {"fuel", to_string(spec.fuel)},
                {"cylinders", std::to_string(spec.cylinders)},
                {"aspiration", to_string(spec.aspiration)},
            };
            for (int k = 0; k < cspec.clips_per_vehicle; ++k) {
                EngineSpec clip_spec = spec;
                clip_spec.seed = Rng::derive(spec.seed, static_cast<uint64_t>(k));
                LabeledClip lc;
                lc.clip = synthesize(clip_spec, cspec.clip_duration_s, sid);
                lc.labels = labels;
                corpus.push_back(std::move(lc));
            }
        }
    }
    return corpus;
}

}  // namespace autodiag
