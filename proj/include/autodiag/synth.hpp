#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "autodiag/audio.hpp"
#include "autodiag/domain.hpp"

namespace autodiag {

// Parametric idle-engine generator. Stands in for a recorded corpus as
// the ground-truth oracle in end-to-end tests: labels are true by
// construction and every clip is reproducible from (spec, seed).
struct EngineSpec {
    Fuel fuel = Fuel::gasoline;
    int cylinders = 4;  // one of 3, 4, 6, 8
    Aspiration aspiration = Aspiration::natural;
    double idle_rpm = 750.0;        // [500, 1200]
    double resonance_hz = 180.0;    // block/exhaust ring
    double impulse_sharpness = 2.5; // combustion transient steepness, [1, 10]
    double noise_floor_db = -40.0;  // white noise floor, dB re unit peak
    uint64_t seed = 0;

    // four-stroke firing rate: every cylinder fires once per two revolutions
    double firing_hz() const { return idle_rpm / 60.0 * cylinders / 2.0; }

    void validate() const;
};

AudioClip synthesize(const EngineSpec& spec, double duration_s,
                     const std::string& source_id = "synth");

// One cell of the class mix.
struct ClassCell {
    Fuel fuel;
    int cylinders;
    Aspiration aspiration;
    double weight = 1.0;
};

struct CorpusSpec {
    int n_vehicles = 0;
    std::vector<ClassCell> mix;  // empty = balanced over 2 fuels x 4 cyl x 2 asp
    int clips_per_vehicle = 1;
    double clip_duration_s = 6.0;
    uint64_t seed = 0;
};

// Full cross of fuel x cylinders x aspiration with equal weights.
std::vector<ClassCell> balanced_mix();

// Number of vehicles assigned to each cell by largest-remainder
// apportionment (matches requested ratios within one vehicle per cell).
std::vector<int> apportion(const std::vector<ClassCell>& mix, int n_vehicles);

// Generates n_vehicles engines with per-vehicle randomized timbre so that
// classifiers must generalize across vehicles, not memorize instances.
// Labels carried per clip: fuel, cylinders, aspiration. source_id is
// unique per vehicle; clips_per_vehicle clips share a vehicle's timbre.
std::vector<LabeledClip> generate_corpus(const CorpusSpec& spec);

// The EngineSpec the corpus generator would draw for one vehicle; exposed
// so tests can build matched pairs and variations.
EngineSpec vehicle_spec(const ClassCell& cell, uint64_t corpus_seed, int vehicle_index);

}  // namespace autodiag
